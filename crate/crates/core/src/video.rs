use serde::{Deserialize, Serialize};

/// A sequence of `frames` frame vectors of length `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Video {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Video {
    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self {
            frames,
            dim,
            data: vec![0.0; frames * dim],
        }
    }

    pub fn from_frames(frames: Vec<Vec<f64>>) -> Self {
        let dim = frames.first().map_or(0, Vec::len);
        assert!(frames.iter().all(|f| f.len() == dim), "ragged frames");
        let n = frames.len();
        Self {
            frames: n,
            dim,
            data: frames.into_iter().flatten().collect(),
        }
    }

    pub fn from_flat(frames: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), frames * dim);
        Self { frames, dim, data }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
