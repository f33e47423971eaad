//! On-disk artifacts: sequence dumps, schedule dumps and waterfall images.
//!
//! A sequence is stored as `<stem>.f32` (little-endian `f32`, frame-major)
//! next to `<stem>.json`, which records the shape and the config that made it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::window_sets;
use crate::config::RunConfig;
use crate::error::{GvsError, Result};
use crate::trajectory::{Pose, Trajectory};
use crate::video::Video;
use crate::window::{WindowKind, WindowSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceMeta {
    pub frames: usize,
    pub dim: usize,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
}

pub fn sequence_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f32"), stem.with_extension("json"))
}

pub fn encode_f32(video: &Video) -> Vec<u8> {
    video.as_slice().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn write_sequence(stem: &Path, video: &Video, meta: &SequenceMeta) -> Result<(PathBuf, PathBuf)> {
    if meta.frames != video.frames() || meta.dim != video.dim() {
        return Err(GvsError::Input(format!(
            "sidecar shape {}x{} does not match video {}x{}",
            meta.frames,
            meta.dim,
            video.frames(),
            video.dim()
        )));
    }
    let (bin, json) = sequence_paths(stem);
    fs::write(&bin, encode_f32(video))?;
    fs::write(&json, serde_json::to_string_pretty(meta)?)?;
    Ok((bin, json))
}

/// Reads a dump given either file of the pair or their common stem.
pub fn read_sequence(path: &Path) -> Result<(Video, SequenceMeta)> {
    let (bin, json) = sequence_paths(path);
    let meta: SequenceMeta = serde_json::from_str(&fs::read_to_string(&json)?)?;
    let bytes = fs::read(&bin)?;
    let expected = meta.frames * meta.dim * 4;
    if bytes.len() != expected {
        return Err(GvsError::Input(format!("{} holds {} bytes, sidecar implies {expected}", bin.display(), bytes.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok((Video::from_flat(meta.frames, meta.dim, data), meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDump {
    pub id: usize,
    pub kind: WindowKind,
    pub target_chunk: usize,
    pub partner: Option<usize>,
    pub slots: Vec<i64>,
    pub target_mask: Vec<bool>,
    /// `[x, y, z, yaw]` per slot.
    pub poses: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDump {
    pub trajectory: String,
    pub frames: usize,
    pub chunk_size: usize,
    pub chunks: usize,
    pub temporal_windows: usize,
    pub spatial_windows: usize,
    /// Directed `(target, partner)` chunk pairs of the spatial windows.
    pub spatial_pairs: Vec<(usize, usize)>,
    pub per_chunk: Vec<Vec<usize>>,
    pub windows: Vec<WindowDump>,
    /// Alternating window sets of the StochSync baseline, as frame slots.
    pub sync_sets: Vec<Vec<Vec<i64>>>,
    pub trajectory_poses: Vec<[f64; 4]>,
}

fn pose4(p: &Pose) -> [f64; 4] {
    [p.position[0], p.position[1], p.position[2], p.yaw]
}

pub fn schedule_dump(cfg: &RunConfig, traj: &Trajectory, schedule: &WindowSchedule) -> ScheduleDump {
    let sets = window_sets(traj.len(), &cfg.stochsync, traj.name.closes_loop(), traj.layout.loops());
    ScheduleDump {
        trajectory: traj.name.as_str().to_string(),
        frames: traj.len(),
        chunk_size: schedule.plan.chunk_size,
        chunks: schedule.plan.chunks(),
        temporal_windows: schedule.windows.len() - schedule.spatial_count(),
        spatial_windows: schedule.spatial_count(),
        spatial_pairs: schedule.spatial_pairs(),
        per_chunk: schedule.per_chunk.clone(),
        windows: schedule
            .windows
            .iter()
            .map(|w| WindowDump {
                id: w.id,
                kind: w.kind,
                target_chunk: w.target_chunk,
                partner: w.partner,
                slots: w.slots.clone(),
                target_mask: w.target_mask.clone(),
                poses: w.poses.iter().map(pose4).collect(),
            })
            .collect(),
        sync_sets: sets.iter().map(|s| s.iter().map(|w| w.slots.clone()).collect()).collect(),
        trajectory_poses: traj.poses.iter().map(pose4).collect(),
    }
}

/// Grayscale waterfall: one row per frame, one column per ray, min-max
/// scaled. Written as PGM or PNG according to the extension.
pub fn render_waterfall(video: &Video, path: &Path) -> Result<()> {
    let (lo, hi) = video
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = video
        .as_slice()
        .iter()
        .map(|&v| if v.is_finite() { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    let img = image::GrayImage::from_raw(video.dim() as u32, video.frames() as u32, pixels).expect("buffer matches shape");
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let format = match ext.as_str() {
        "pgm" => image::ImageFormat::Pnm,
        "png" => image::ImageFormat::Png,
        _ => return Err(GvsError::Input(format!("render target must end in .pgm or .png, got {}", path.display()))),
    };
    img.save_with_format(path, format).map_err(|e| GvsError::Io(std::io::Error::other(e)))
}
