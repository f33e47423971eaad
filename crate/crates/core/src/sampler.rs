//! The stitching sampler.
//!
//! All frames share one noise level between steps. At each step every chunk
//! picks one of its windows, the windows are denoised independently with
//! Omni Guidance, and each window's target chunk is written back.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{omni_guided_eps, Conditioning, Denoiser, GuidanceConfig, WindowInput};
use crate::error::{GvsError, Result};
use crate::rng::{NoiseKey, NoiseStream, Purpose};
use crate::schedule::{predict_clean, NoiseSchedule, Stochasticity};
use crate::trajectory::Trajectory;
use crate::video::Video;
use crate::window::{Window, WindowConfig, WindowSchedule};
use crate::world::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GvsConfig {
    pub eta: f64,
    pub guidance: GuidanceConfig,
    pub windows: WindowConfig,
    pub execution: Execution,
}

impl Default for GvsConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            guidance: GuidanceConfig::default(),
            windows: WindowConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

impl GvsConfig {
    pub fn with_eta_gamma(eta: f64, gamma: f64) -> Self {
        Self {
            eta,
            guidance: GuidanceConfig::merged(gamma),
            ..Self::default()
        }
    }
}

pub fn build_gvs_schedule(traj: &Trajectory, world: &World, cfg: &GvsConfig) -> Result<WindowSchedule> {
    WindowSchedule::build(traj, world, &cfg.windows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    pub video: Video,
    /// `‖z‖` after every step.
    pub step_norms: Vec<f64>,
}

/// Everything a window needs from the current step.
pub struct StepContext<'a> {
    pub z: &'a Video,
    pub level: usize,
    pub max_level: usize,
    pub step: usize,
    pub stream: NoiseStream,
}

/// Gather a window's slots from the sequence estimate.
///
/// Padding slots get fresh maximum-level noise keyed by their virtual index.
pub fn project(ctx: &StepContext<'_>, w: &Window) -> Result<WindowInput> {
    let frames = ctx.z.frames() as i64;
    let dim = ctx.z.dim();
    let mut values = Vec::with_capacity(w.len());
    let mut noise_levels = Vec::with_capacity(w.len());
    for &s in &w.slots {
        if s < 0 || s >= frames {
            if s < -frames || s >= 2 * frames {
                return Err(GvsError::Schedule(format!("slot {s} is far outside a {frames}-frame sequence")));
            }
            values.push(ctx.stream.normals(NoiseKey::new(Purpose::Padding, ctx.step, s), dim));
            noise_levels.push(ctx.max_level);
        } else {
            values.push(ctx.z.frame(s as usize).to_vec());
            noise_levels.push(ctx.level);
        }
    }
    Ok(WindowInput {
        values,
        noise_levels,
        conditioning: w.poses.iter().map(|p| Conditioning::Pose(*p)).collect(),
        target_mask: w.target_mask.clone(),
    })
}

/// Updated target frames from one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkUpdate {
    pub frames: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// Write each window's target frames back into `z`.
///
/// With disjoint covering targets the least-squares stitch is plain assignment.
pub fn scatter_update(z: &Video, updates: &[ChunkUpdate]) -> Result<Video> {
    let mut out = z.clone();
    let mut hit = vec![false; z.frames()];
    for u in updates {
        for (&f, v) in u.frames.iter().zip(&u.values) {
            if f >= z.frames() || hit[f] {
                return Err(GvsError::Schedule(format!("frame {f} is targeted twice or out of range")));
            }
            hit[f] = true;
            out.frame_mut(f).copy_from_slice(v);
        }
    }
    if let Some(f) = hit.iter().position(|h| !h) {
        return Err(GvsError::Schedule(format!("frame {f} is not targeted at this step")));
    }
    Ok(out)
}

fn guidance_noise(stream: &NoiseStream, step: usize, w: &Window, dim: usize) -> Vec<Vec<f64>> {
    (0..w.len())
        .map(|i| stream.normals(NoiseKey::new(Purpose::Guidance, step, w.id as i64).with_sub(i), dim))
        .collect()
}

pub fn gvs_sample(
    denoiser: &dyn Denoiser,
    traj: &Trajectory,
    windows: &WindowSchedule,
    noise: &NoiseSchedule,
    cfg: &GvsConfig,
    seed: u64,
) -> Result<SampleOutput> {
    let stoch = Stochasticity::new(cfg.eta)?;
    cfg.guidance.validate()?;
    let (frames, dim) = (traj.len(), denoiser.frame_dim());
    if windows.plan.frames != frames {
        return Err(GvsError::Schedule("window schedule and trajectory disagree in length".into()));
    }
    if noise.max_level() != denoiser.max_level() {
        return Err(GvsError::Config("denoiser and sampler use different noise schedules".into()));
    }
    let stream = NoiseStream::new(seed);
    let mut z = Video::from_frames(
        (0..frames)
            .map(|t| stream.normals(NoiseKey::new(Purpose::Init, 0, t as i64), dim))
            .collect(),
    );
    let levels = noise.inference_levels();
    let mut step_norms = Vec::with_capacity(levels.len());
    for (i, pair) in levels.windows(2).enumerate() {
        let (k, k_prev) = (pair[0], pair[1]);
        let last = i + 2 == levels.len();
        let sigma = noise.sigma(stoch, k_prev);
        let eps_seq: Vec<Vec<f64>> = (0..frames)
            .map(|t| stream.normals(NoiseKey::new(Purpose::Stochastic, i, t as i64), dim))
            .collect();
        let ctx = StepContext {
            z: &z,
            level: k,
            max_level: noise.max_level(),
            step: i,
            stream,
        };
        let selected = windows.selection(i)?;
        let eval = |w: &&Window| -> Result<ChunkUpdate> {
            let input = project(&ctx, w)?;
            let fresh = guidance_noise(&stream, i, w, dim);
            let eps = omni_guided_eps(denoiser, &input, &cfg.guidance, &fresh)?;
            let mut update = ChunkUpdate {
                frames: Vec::new(),
                values: Vec::new(),
            };
            for (s, &target) in w.target_mask.iter().enumerate() {
                if !target {
                    continue;
                }
                let f = w.slots[s] as usize;
                let v = if last {
                    predict_clean(noise.alpha_bar(k), &input.values[s], &eps[s])?
                } else {
                    noise.ddim_step(&input.values[s], &eps[s], k, k_prev, sigma, &eps_seq[f])?
                };
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GvsError::NumericFailure {
                        step: i,
                        chunk: w.target_chunk,
                    });
                }
                update.frames.push(f);
                update.values.push(v);
            }
            Ok(update)
        };
        let updates: Vec<ChunkUpdate> = match cfg.execution {
            Execution::Parallel => selected.par_iter().map(eval).collect::<Result<_>>()?,
            Execution::Sequential => selected.iter().map(eval).collect::<Result<_>>()?,
        };
        z = scatter_update(&z, &updates)?;
        step_norms.push(z.norm());
        log::trace!("step {i}: level {k} -> {k_prev}, |z| = {:.4}", z.norm());
    }
    Ok(SampleOutput { video: z, step_norms })
}
