//! Consistency and fidelity proxies.
//!
//! Frames that view the same scene grid point should agree there. `f2fc`
//! measures that for consecutive frames, `lrc` for temporally distant frames
//! with overlapping views; both are exactly zero on ground-truth renders.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::trajectory::Trajectory;
use crate::video::Video;
use crate::world::World;

/// Squared disagreement between two frames over their shared grid samples.
pub fn pair_discrepancy(video: &Video, traj: &Trajectory, world: &World, i: usize, j: usize) -> Option<f64> {
    let shared = world.shared_samples(&traj.poses[i], &traj.poses[j]);
    if shared.is_empty() {
        return None;
    }
    let (a, b) = (video.frame(i), video.frame(j));
    let sum: f64 = shared.iter().map(|&(ri, rj)| (a[ri] - b[rj]).powi(2)).sum();
    Some(sum / shared.len() as f64)
}

pub fn f2fc_pairs(video: &Video, traj: &Trajectory, world: &World) -> Vec<f64> {
    (1..video.frames())
        .filter_map(|t| {
            let d = pair_discrepancy(video, traj, world, t - 1, t);
            if d.is_none() {
                log::warn!("frames {} and {t} share no grid samples", t - 1);
            }
            d
        })
        .collect()
}

pub fn f2fc_proxy(video: &Video, traj: &Trajectory, world: &World) -> f64 {
    mean(&f2fc_pairs(video, traj, world))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrcConfig {
    pub threshold: f64,
    /// In frames.
    pub min_gap: usize,
}

impl Default for LrcConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_gap: 12,
        }
    }
}

/// Frame pairs at least `min_gap` apart whose views overlap by `threshold`.
pub fn lrc_pairs(traj: &Trajectory, world: &World, cfg: &LrcConfig) -> Vec<(usize, usize)> {
    let n = traj.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + cfg.min_gap..n {
            if world.fov_overlap(&traj.poses[i], &traj.poses[j]) >= cfg.threshold - 1e-9 {
                out.push((i, j));
            }
        }
    }
    out
}

/// `None` when no frame pair qualifies.
pub fn lrc_proxy(video: &Video, traj: &Trajectory, world: &World, cfg: &LrcConfig) -> Option<f64> {
    let vals: Vec<f64> = lrc_pairs(traj, world, cfg)
        .into_iter()
        .filter_map(|(i, j)| pair_discrepancy(video, traj, world, i, j))
        .collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// Mean squared difference between adjacent rays, averaged over frames.
pub fn hf_energy(video: &Video) -> f64 {
    let d = video.dim();
    if d < 2 {
        return 0.0;
    }
    let per_frame: Vec<f64> = video
        .iter_frames()
        .map(|f| f.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (d - 1) as f64)
        .collect();
    mean(&per_frame)
}

/// Unbiased sample covariance of row vectors.
pub fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.len();
    let d = samples.first().map_or(0, Vec::len);
    let mut mu = vec![0.0; d];
    for s in samples {
        for (m, x) in mu.iter_mut().zip(s) {
            *m += x / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c: Vec<f64> = s.iter().zip(&mu).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// `‖Ĉ − C‖_F / ‖C‖_F`.
pub fn cov_error(samples: &[Vec<f64>], analytic: &DMatrix<f64>) -> f64 {
    (sample_covariance(samples) - analytic).norm() / analytic.norm()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f2fc: f64,
    pub lrc: Option<f64>,
    pub hf_energy: f64,
    pub cov_error: Option<f64>,
    pub f2fc_pairs: Vec<f64>,
    pub lrc_pair_count: usize,
}

impl MetricReport {
    pub fn evaluate(video: &Video, traj: &Trajectory, world: &World, lrc: &LrcConfig) -> Self {
        let f2fc_pairs = f2fc_pairs(video, traj, world);
        Self {
            f2fc: mean(&f2fc_pairs),
            lrc: lrc_proxy(video, traj, world, lrc),
            hf_energy: hf_energy(video),
            cov_error: None,
            f2fc_pairs,
            lrc_pair_count: lrc_pairs(traj, world, lrc).len(),
        }
    }
}
