//! History-guided autoregressive rollout with optional view retrieval.
//!
//! Each step places the latest history frames at the left of the context
//! window, the frames being generated in the middle and, when retrieval is
//! enabled, previously generated frames that look at the same place on the
//! right. Conditioning frames are lightly re-noised to the stabilization
//! level; the new frames are denoised with deterministic DDIM.

use serde::{Deserialize, Serialize};

use crate::denoiser::{history_guided_eps, Conditioning, Denoiser, HistoryNull, WindowInput};
use crate::error::{GvsError, Result};
use crate::rng::{NoiseKey, NoiseStream, Purpose};
use crate::schedule::{linear_levels, NoiseSchedule};
use crate::trajectory::{Pose, Trajectory};
use crate::video::Video;
use crate::world::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StabilizationScale {
    /// Level `round(fraction · K)`.
    #[default]
    Levels,
    /// Cleanest level whose noise variance `1 − ᾱ` reaches the fraction.
    NoiseVariance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub max_retrieved: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: 0.5,
            max_retrieved: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArConfig {
    pub history_frames: usize,
    /// Zero means no guidance.
    pub gamma_h: f64,
    pub history_null: HistoryNull,
    pub stabilization: f64,
    pub stabilization_scale: StabilizationScale,
    pub frames_per_step: usize,
    pub steps: usize,
    pub retrieval: RetrievalConfig,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            history_frames: 4,
            gamma_h: 3.0,
            history_null: HistoryNull::HistoryAndPoses,
            stabilization: 0.02,
            stabilization_scale: StabilizationScale::Levels,
            frames_per_step: 4,
            steps: 50,
            retrieval: RetrievalConfig::default(),
        }
    }
}

impl ArConfig {
    /// One new frame per step, up to three retrieved frames.
    pub fn with_memory() -> Self {
        Self {
            frames_per_step: 1,
            retrieval: RetrievalConfig {
                enabled: true,
                ..RetrievalConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self, context: usize) -> Result<()> {
        let retrieved = if self.retrieval.enabled { self.retrieval.max_retrieved } else { 0 };
        let slots = self.history_frames + self.frames_per_step + retrieved;
        if slots > context {
            return Err(GvsError::Capacity { slots, context });
        }
        if self.frames_per_step == 0 {
            return Err(GvsError::Config("frames_per_step must be positive".into()));
        }
        if self.steps < 2 {
            return Err(GvsError::Config("need at least 2 sampling steps".into()));
        }
        if !(0.0..1.0).contains(&self.stabilization) {
            return Err(GvsError::Config(format!("stabilization {} outside [0, 1)", self.stabilization)));
        }
        if !(self.gamma_h >= 0.0) {
            return Err(GvsError::Config("history guidance scale must be non-negative".into()));
        }
        Ok(())
    }

    pub fn stabilization_level(&self, noise: &NoiseSchedule) -> usize {
        match self.stabilization_scale {
            StabilizationScale::Levels => (self.stabilization * noise.levels() as f64).round() as usize,
            StabilizationScale::NoiseVariance => (0..noise.levels())
                .find(|&k| 1.0 - noise.alpha_bar(k) >= self.stabilization)
                .unwrap_or(noise.max_level()),
        }
        .min(noise.max_level())
    }
}

/// Frames generated so far, with their poses. Append-only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Memory {
    frames: Vec<Vec<f64>>,
    poses: Vec<Pose>,
}

impl Memory {
    pub fn push(&mut self, frame: Vec<f64>, pose: Pose) {
        self.frames.push(frame);
        self.poses.push(pose);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i]
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.poses[i]
    }
}

/// Memory indices whose view overlap with any current pose exceeds
/// `threshold`, best first. Frames listed in `exclude` are skipped.
pub fn retrieve(world: &World, mem: &Memory, current: &[Pose], exclude: &[usize], threshold: f64, max_n: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..mem.len())
        .filter(|i| !exclude.contains(i))
        .filter_map(|i| {
            let best = current
                .iter()
                .map(|p| world.fov_overlap(mem.pose(i), p))
                .fold(0.0, f64::max);
            (best > threshold).then_some((best, i))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(max_n).map(|(_, i)| i).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEvent {
    pub step: usize,
    pub generated: Vec<usize>,
    pub retrieved: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArOutput {
    pub video: Video,
    pub retrievals: Vec<RetrievalEvent>,
}

enum SlotRole {
    History(usize),
    New(usize),
    Retrieved(usize),
    Padding,
}

pub fn ar_sample(
    denoiser: &dyn Denoiser,
    traj: &Trajectory,
    world: &World,
    noise: &NoiseSchedule,
    cfg: &ArConfig,
    seed: u64,
) -> Result<ArOutput> {
    let context = denoiser.context_len();
    cfg.validate(context)?;
    let total = traj.len();
    let stream = NoiseStream::new(seed);
    let k_stab = cfg.stabilization_level(noise);
    let levels = linear_levels(noise.max_level(), 0, cfg.steps);
    let mut mem = Memory::default();
    let mut retrievals = Vec::new();
    let mut step = 0;
    while mem.len() < total {
        let done = mem.len();
        let mut roles = Vec::new();
        let history: Vec<usize> = (done.saturating_sub(cfg.history_frames)..done).collect();
        roles.extend(history.iter().map(|&f| SlotRole::History(f)));
        let count = if done == 0 { total.min(context) } else { cfg.frames_per_step.min(total - done) };
        let new: Vec<usize> = (done..done + count).collect();
        roles.extend(new.iter().map(|&f| SlotRole::New(f)));
        if cfg.retrieval.enabled && done > 0 {
            let current: Vec<Pose> = new.iter().map(|&f| traj.poses[f]).collect();
            let got = retrieve(world, &mem, &current, &history, cfg.retrieval.threshold, cfg.retrieval.max_retrieved);
            retrievals.push(RetrievalEvent {
                step,
                generated: new.clone(),
                retrieved: got.clone(),
            });
            let pad = cfg.retrieval.max_retrieved - got.len();
            roles.extend(got.into_iter().map(SlotRole::Retrieved));
            roles.extend((0..pad).map(|_| SlotRole::Padding));
        }
        let frames = generate_step(denoiser, traj, noise, cfg, &stream, &mem, &roles, &levels, k_stab, step)?;
        for (f, v) in new.iter().zip(frames) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(GvsError::NumericFailure { step, chunk: *f });
            }
            mem.push(v, traj.poses[*f]);
        }
        step += 1;
    }
    log::debug!("autoregressive rollout: {step} steps, {} retrievals", retrievals.len());
    Ok(ArOutput {
        video: Video::from_frames(mem.frames),
        retrievals,
    })
}

#[allow(clippy::too_many_arguments)]
fn generate_step(
    denoiser: &dyn Denoiser,
    traj: &Trajectory,
    noise: &NoiseSchedule,
    cfg: &ArConfig,
    stream: &NoiseStream,
    mem: &Memory,
    roles: &[SlotRole],
    levels: &[usize],
    k_stab: usize,
    step: usize,
) -> Result<Vec<Vec<f64>>> {
    let dim = denoiser.frame_dim();
    let max = noise.max_level();
    let mut input = WindowInput {
        values: Vec::with_capacity(roles.len()),
        noise_levels: Vec::with_capacity(roles.len()),
        conditioning: Vec::with_capacity(roles.len()),
        target_mask: Vec::with_capacity(roles.len()),
    };
    for (slot, role) in roles.iter().enumerate() {
        let (value, level, cond, target) = match *role {
            SlotRole::History(f) | SlotRole::Retrieved(f) => {
                let e = stream.normals(NoiseKey::new(Purpose::Stabilize, step, f as i64), dim);
                let v = noise.forward_noise(mem.frame(f), k_stab, &e)?;
                (v, k_stab, Conditioning::Pose(*mem.pose(f)), false)
            }
            SlotRole::New(f) => (
                stream.normals(NoiseKey::new(Purpose::Init, 0, f as i64), dim),
                max,
                Conditioning::Pose(traj.poses[f]),
                true,
            ),
            SlotRole::Padding => (
                stream.normals(NoiseKey::new(Purpose::Padding, step, slot as i64), dim),
                max,
                Conditioning::Null,
                false,
            ),
        };
        input.values.push(value);
        input.noise_levels.push(level);
        input.conditioning.push(cond);
        input.target_mask.push(target);
    }
    let history_mask: Vec<bool> = roles
        .iter()
        .map(|r| matches!(r, SlotRole::History(_) | SlotRole::Retrieved(_)))
        .collect();
    for (i, pair) in levels.windows(2).enumerate() {
        let (k, k_prev) = (pair[0], pair[1]);
        let last = i + 2 == levels.len();
        for (s, &t) in input.target_mask.iter().enumerate() {
            if t {
                input.noise_levels[s] = k;
            }
        }
        let fresh: Vec<Vec<f64>> = (0..roles.len())
            .map(|s| stream.normals(NoiseKey::new(Purpose::Guidance, i, step as i64).with_sub(s), dim))
            .collect();
        let eps = history_guided_eps(denoiser, &input, &history_mask, cfg.gamma_h, &fresh, cfg.history_null)?;
        let zero = vec![0.0; dim];
        for s in 0..roles.len() {
            if !input.target_mask[s] {
                continue;
            }
            input.values[s] = if last {
                noise.predict_clean(&input.values[s], &eps[s], k)?
            } else {
                noise.ddim_step(&input.values[s], &eps[s], k, k_prev, 0.0, &zero)?
            };
        }
    }
    Ok(input
        .values
        .into_iter()
        .zip(&input.target_mask)
        .filter(|(_, &t)| t)
        .map(|(v, _)| v)
        .collect())
}
