//! Synchronised non-overlapping windows with maximum stochasticity.
//!
//! Every outer step computes a clean estimate for each window of one window
//! set with a short deterministic DDIM run, then re-noises the whole sequence
//! to the next outer level with fresh noise. Window sets alternate between
//! steps so that information flows across window boundaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{pose_guided_eps, Conditioning, Denoiser, WindowInput};
use crate::error::{GvsError, Result};
use crate::rng::{NoiseKey, NoiseStream, Purpose};
use crate::sampler::Execution;
use crate::schedule::{forward_noise, linear_levels, NoiseSchedule};
use crate::trajectory::{Pose, Trajectory};
use crate::video::Video;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochSyncConfig {
    pub k_start: usize,
    pub k_stop: usize,
    pub steps: usize,
    pub window: usize,
    pub offset: usize,
    pub inner_start: usize,
    pub inner_end: usize,
    /// Camera-only guidance; zero means none.
    pub gamma: f64,
    pub loop_closing: bool,
    pub execution: Execution,
}

impl Default for StochSyncConfig {
    fn default() -> Self {
        Self {
            k_start: 900,
            k_stop: 270,
            steps: 25,
            window: 8,
            offset: 4,
            inner_start: 50,
            inner_end: 1,
            gamma: 3.0,
            loop_closing: true,
            execution: Execution::Parallel,
        }
    }
}

impl StochSyncConfig {
    pub fn validate(&self, noise: &NoiseSchedule, context: usize) -> Result<()> {
        if !(self.k_stop < self.k_start && self.k_start < noise.levels()) {
            return Err(GvsError::Config(format!(
                "need k_stop < k_start < K, got {} / {} / {}",
                self.k_stop,
                self.k_start,
                noise.levels()
            )));
        }
        if self.window > context {
            return Err(GvsError::Capacity {
                slots: self.window,
                context,
            });
        }
        if self.offset == 0 || self.offset >= self.window || self.steps == 0 || self.inner_end == 0 || self.inner_start < self.inner_end {
            return Err(GvsError::Config("invalid window offset or step counts".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(GvsError::Config("guidance scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Inner DDIM step count at outer step `j`, decreasing linearly.
    pub fn inner_steps(&self, j: usize) -> usize {
        if self.steps == 1 {
            return self.inner_end;
        }
        let s = j as f64 / (self.steps - 1) as f64;
        (self.inner_start as f64 + s * (self.inner_end as f64 - self.inner_start as f64)).round() as usize
    }
}

/// Global slot indices; entries outside `0..frames` are padding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncWindow {
    pub slots: Vec<i64>,
}

fn tile(start: usize, end: usize, width: usize) -> Vec<SyncWindow> {
    (start..end)
        .step_by(width)
        .map(|s| SyncWindow {
            slots: (s as i64..(s + width) as i64).collect(),
        })
        .collect()
}

/// The alternating window sets for a `frames`-long sequence.
///
/// Windows running past either end keep their full width and are filled
/// with padding slots, except that a closed loop wraps around instead.
pub fn window_sets(frames: usize, cfg: &StochSyncConfig, closes_loop: bool, loops: usize) -> Vec<Vec<SyncWindow>> {
    let (w, o) = (cfg.window, cfg.offset);
    let n = frames as i64;
    let wrap = cfg.loop_closing && closes_loop;
    let mut a = tile(0, frames, w);
    let mut b = tile(o, frames, w);
    if wrap {
        let wrap_at = |slots: &mut Vec<i64>| slots.iter_mut().for_each(|s| *s = s.rem_euclid(n));
        if let Some(last) = b.last_mut() {
            wrap_at(&mut last.slots);
        }
        if let Some(last) = a.last_mut() {
            wrap_at(&mut last.slots);
        }
    } else {
        // B's leading frames: a window ending at `o`, padded on the left
        b.insert(
            0,
            SyncWindow {
                slots: ((o as i64 - w as i64)..o as i64).collect(),
            },
        );
    }
    if b.is_empty() {
        b = a.clone();
    }
    // drop windows that wrapped onto frames another window already holds
    for set in [&mut a, &mut b] {
        dedup_slots(set, n);
    }
    let mut sets = vec![a, b];
    if cfg.loop_closing && loops == 2 && frames % 2 == 0 {
        let half = frames / 2;
        let h = w / 2;
        if half % h == 0 {
            sets.push(
                (0..half)
                    .step_by(h)
                    .map(|s| SyncWindow {
                        slots: (s..s + h).chain(s + half..s + half + h).map(|f| f as i64).collect(),
                    })
                    .collect(),
            );
        }
    }
    sets
}

fn dedup_slots(set: &mut [SyncWindow], n: i64) {
    let mut seen = std::collections::HashSet::new();
    for win in set.iter_mut() {
        for s in win.slots.iter_mut() {
            if (0..n).contains(s) && !seen.insert(*s) {
                *s = n + 1_000_000;
            }
        }
    }
}

fn is_real(s: i64, frames: usize) -> bool {
    s >= 0 && s < frames as i64
}

pub fn stochsync_sample(
    denoiser: &dyn Denoiser,
    traj: &Trajectory,
    noise: &NoiseSchedule,
    cfg: &StochSyncConfig,
    seed: u64,
) -> Result<Video> {
    cfg.validate(noise, denoiser.context_len())?;
    let (frames, dim) = (traj.len(), denoiser.frame_dim());
    let sets = window_sets(frames, cfg, traj.name.closes_loop(), traj.layout.loops());
    let outer = linear_levels(cfg.k_start, cfg.k_stop, cfg.steps);
    let stream = NoiseStream::new(seed);
    let mut z = Video::from_frames(
        (0..frames)
            .map(|t| stream.normals(NoiseKey::new(Purpose::Init, 0, t as i64), dim))
            .collect(),
    );
    for (j, &k) in outer.iter().enumerate() {
        let set = &sets[j % sets.len()];
        let inner = linear_levels(k, 0, cfg.inner_steps(j) + 1);
        let clean_window = |win: &SyncWindow| -> Result<Vec<(usize, Vec<f64>)>> {
            clean_estimate(denoiser, traj, noise, cfg, &stream, &z, win, &inner, j)
        };
        let results: Vec<Vec<(usize, Vec<f64>)>> = match cfg.execution {
            Execution::Parallel => set.par_iter().map(clean_window).collect::<Result<_>>()?,
            Execution::Sequential => set.iter().map(clean_window).collect::<Result<_>>()?,
        };
        let mut x0 = z.clone();
        let mut hit = vec![false; frames];
        for (f, v) in results.into_iter().flatten() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(GvsError::NumericFailure { step: j, chunk: f });
            }
            hit[f] = true;
            x0.frame_mut(f).copy_from_slice(&v);
        }
        if let Some(f) = hit.iter().position(|h| !h) {
            return Err(GvsError::Schedule(format!("frame {f} is in no window of set {}", j % sets.len())));
        }
        match outer.get(j + 1) {
            Some(&next) => {
                let a = noise.alpha_bar(next);
                for t in 0..frames {
                    let e = stream.normals(NoiseKey::new(Purpose::Stochastic, j, t as i64), dim);
                    let v = forward_noise(a, x0.frame(t), &e)?;
                    z.frame_mut(t).copy_from_slice(&v);
                }
            }
            None => z = x0,
        }
    }
    Ok(z)
}

#[allow(clippy::too_many_arguments)]
fn clean_estimate(
    denoiser: &dyn Denoiser,
    traj: &Trajectory,
    noise: &NoiseSchedule,
    cfg: &StochSyncConfig,
    stream: &NoiseStream,
    z: &Video,
    win: &SyncWindow,
    inner: &[usize],
    outer_step: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let dim = denoiser.frame_dim();
    let frames = traj.len();
    let pose_at = |s: i64| -> Pose { traj.pose_clamped(s) };
    let mut input = WindowInput {
        values: Vec::new(),
        noise_levels: Vec::new(),
        conditioning: Vec::new(),
        target_mask: Vec::new(),
    };
    for &s in &win.slots {
        if is_real(s, frames) {
            input.values.push(z.frame(s as usize).to_vec());
            input.noise_levels.push(inner[0]);
            input.target_mask.push(true);
        } else {
            input.values.push(stream.normals(NoiseKey::new(Purpose::Padding, outer_step, s), dim));
            input.noise_levels.push(noise.max_level());
            input.target_mask.push(false);
        }
        input.conditioning.push(Conditioning::Pose(pose_at(s)));
    }
    let zero = vec![0.0; dim];
    let mut clean = input.values.clone();
    for (i, &k) in inner.iter().enumerate() {
        for (s, &t) in input.target_mask.iter().enumerate() {
            if t {
                input.noise_levels[s] = k;
            }
        }
        let eps = pose_guided_eps(denoiser, &input, cfg.gamma)?;
        let last = i + 2 == inner.len();
        for s in 0..input.len() {
            if !input.target_mask[s] {
                continue;
            }
            if last {
                clean[s] = noise.predict_clean(&input.values[s], &eps[s], k)?;
            } else {
                input.values[s] = noise.ddim_step(&input.values[s], &eps[s], k, inner[i + 1], 0.0, &zero)?;
            }
        }
        if last {
            break;
        }
    }
    Ok(win
        .slots
        .iter()
        .zip(clean)
        .filter(|(&s, _)| is_real(s, frames))
        .map(|(&s, v)| (s as usize, v))
        .collect())
}
