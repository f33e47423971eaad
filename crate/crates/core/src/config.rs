//! Run configuration documents and the runner that turns one into samples.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{ar_sample, stochsync_sample, ArConfig, RetrievalEvent, StochSyncConfig};
use crate::error::{GvsError, Result};
use crate::metrics::LrcConfig;
use crate::sampler::{build_gvs_schedule, gvs_sample, GvsConfig};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::trajectory::{generate_trajectory, Benchmark, Trajectory, TrajectoryParams};
use crate::video::Video;
use crate::window::WindowSchedule;
use crate::world::{NullModel, OracleDenoiser, World, WorldSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Gvs,
    Ar,
    #[serde(rename = "stochsync")]
    StochSync,
}

impl SamplerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Gvs => "gvs",
            SamplerKind::Ar => "ar",
            SamplerKind::StochSync => "stochsync",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = GvsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gvs" => Ok(SamplerKind::Gvs),
            "ar" => Ok(SamplerKind::Ar),
            "stochsync" => Ok(SamplerKind::StochSync),
            other => Err(GvsError::Config(format!("unknown sampler `{other}` (expected gvs, ar or stochsync)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub name: Benchmark,
    pub frames: usize,
    pub params: TrajectoryParams,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            name: Benchmark::Panorama1Loop,
            frames: 120,
            params: TrajectoryParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Training levels `K`.
    pub levels: usize,
    /// Inference steps `S`.
    pub steps: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::default(),
            levels: 1000,
            steps: 50,
        }
    }
}

/// Everything needed to reproduce one sampling run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: SamplerKind,
    pub seed: u64,
    pub trajectory: TrajectorySpec,
    pub world: WorldSpec,
    pub schedule: ScheduleSpec,
    pub null_model: NullModel,
    /// Denoiser context length in frames.
    pub context: usize,
    pub gvs: GvsConfig,
    pub ar: ArConfig,
    pub stochsync: StochSyncConfig,
    pub lrc: LrcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Gvs,
            seed: 0,
            trajectory: TrajectorySpec::default(),
            world: WorldSpec::default(),
            schedule: ScheduleSpec::default(),
            null_model: NullModel::default(),
            context: 8,
            gvs: GvsConfig::default(),
            ar: ArConfig::default(),
            stochsync: StochSyncConfig::default(),
            lrc: LrcConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| GvsError::Config(format!("invalid run config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks that do not need the world or schedule to be built.
    pub fn validate(&self) -> Result<()> {
        if self.trajectory.frames == 0 {
            return Err(GvsError::Config("trajectory.frames must be positive".into()));
        }
        if self.context == 0 {
            return Err(GvsError::Config("context must be positive".into()));
        }
        match self.sampler {
            SamplerKind::Gvs => {
                self.gvs.guidance.validate()?;
                if !(0.0..=1.0).contains(&self.gvs.eta) {
                    return Err(GvsError::Config(format!("gvs.eta must lie in [0, 1], got {}", self.gvs.eta)));
                }
            }
            SamplerKind::Ar => self.ar.validate(self.context)?,
            SamplerKind::StochSync => {}
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let spec = self.trajectory;
        let traj = generate_trajectory(spec.name, spec.frames, spec.params)?;
        let world = Arc::new(World::for_trajectory(&self.world, &traj)?);
        let schedule = Arc::new(NoiseSchedule::build(self.schedule.levels, self.schedule.kind, self.schedule.steps)?);
        let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), self.context).with_null_model(self.null_model);
        let windows = match self.sampler {
            SamplerKind::Gvs => Some(build_gvs_schedule(&traj, &world, &self.gvs)?),
            _ => None,
        };
        if self.sampler == SamplerKind::StochSync {
            self.stochsync.validate(&schedule, self.context)?;
        }
        Ok(Prepared {
            config: *self,
            traj,
            world,
            schedule,
            denoiser,
            windows,
        })
    }
}

/// A validated config with its world, schedule and denoiser built. Sampling
/// several seeds from one `Prepared` shares the denoiser's gain cache.
#[derive(Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub traj: Trajectory,
    pub world: Arc<World>,
    pub schedule: Arc<NoiseSchedule>,
    pub denoiser: OracleDenoiser,
    pub windows: Option<WindowSchedule>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub video: Video,
    /// Empty unless the AR sampler retrieved frames.
    pub retrievals: Vec<RetrievalEvent>,
}

impl Prepared {
    pub fn sample(&self, seed: u64) -> Result<RunOutput> {
        let cfg = &self.config;
        match cfg.sampler {
            SamplerKind::Gvs => {
                let windows = self.windows.as_ref().expect("gvs schedule is built in prepare");
                let out = gvs_sample(&self.denoiser, &self.traj, windows, &self.schedule, &cfg.gvs, seed)?;
                Ok(RunOutput {
                    video: out.video,
                    retrievals: Vec::new(),
                })
            }
            SamplerKind::Ar => {
                let out = ar_sample(&self.denoiser, &self.traj, &self.world, &self.schedule, &cfg.ar, seed)?;
                Ok(RunOutput {
                    video: out.video,
                    retrievals: out.retrievals,
                })
            }
            SamplerKind::StochSync => Ok(RunOutput {
                video: stochsync_sample(&self.denoiser, &self.traj, &self.schedule, &cfg.stochsync, seed)?,
                retrievals: Vec::new(),
            }),
        }
    }
}
