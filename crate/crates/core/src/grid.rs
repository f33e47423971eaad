//! Ablation grids: a base run config swept over samplers, trajectories,
//! stochasticity, guidance, loop closing and seeds.
//!
//! Guidance is always given in the zero-means-unguided convention; for the
//! AR sampler it sets the history guidance scale and for StochSync the camera
//! guidance scale. The loop-closing axis maps to spatial windows (GVS),
//! retrieval memory (AR, generating fewer frames per step so the retrieved
//! views fit the context) and wrap-around windows (StochSync). AR and StochSync
//! have a fixed stochasticity, so the eta axis collapses for them.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Prepared, RunConfig, SamplerKind};
use crate::error::{GvsError, Result};
use crate::metrics::{cov_error, MetricReport};
use crate::trajectory::Benchmark;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub base: RunConfig,
    pub samplers: Vec<SamplerKind>,
    /// Empty means the base trajectory only.
    pub trajectories: Vec<Benchmark>,
    pub etas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub loop_closing: Vec<bool>,
    pub seeds: Vec<u64>,
    /// Record wall time per row. Off by default so reruns are byte-identical.
    pub timing: bool,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            samplers: vec![SamplerKind::Gvs],
            trajectories: Vec::new(),
            etas: vec![0.9],
            gammas: vec![1.0],
            loop_closing: vec![true],
            seeds: (0..20).collect(),
            timing: false,
        }
    }
}

/// One point of the grid, before seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub sampler: SamplerKind,
    pub trajectory: Benchmark,
    pub eta: f64,
    pub gamma: f64,
    pub loop_closing: bool,
}

impl Cell {
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = *base;
        cfg.sampler = self.sampler;
        cfg.trajectory.name = self.trajectory;
        match self.sampler {
            SamplerKind::Gvs => {
                cfg.gvs.eta = self.eta;
                cfg.gvs.guidance.gamma = self.gamma;
                cfg.gvs.windows.loop_closing = self.loop_closing;
            }
            SamplerKind::Ar => {
                cfg.ar.gamma_h = self.gamma;
                cfg.ar.retrieval.enabled = self.loop_closing;
                if self.loop_closing {
                    let room = cfg.context.saturating_sub(cfg.ar.history_frames + cfg.ar.retrieval.max_retrieved);
                    cfg.ar.frames_per_step = cfg.ar.frames_per_step.min(room.max(1));
                }
            }
            SamplerKind::StochSync => {
                cfg.stochsync.gamma = self.gamma;
                cfg.stochsync.loop_closing = self.loop_closing;
            }
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub cell: usize,
    pub seed: u64,
    /// `None` when the run failed.
    pub report: Option<MetricReport>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub cell: usize,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutput {
    pub cells: Vec<Cell>,
    pub rows: Vec<GridRow>,
    /// Per cell: sample covariance error of the whole video against the
    /// world's prior, when the cell has at least two successful seeds.
    pub cell_cov_error: Vec<Option<f64>>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GvsError::Config(format!("invalid grid: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("samplers", self.samplers.is_empty()),
            ("etas", self.etas.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("loop_closing", self.loop_closing.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(GvsError::Config(format!("grid axis `{name}` is empty")));
        }
        Ok(())
    }

    /// Cells in row-major order over sampler, trajectory, eta, gamma, loop closing.
    pub fn cells(&self) -> Vec<Cell> {
        let trajectories = if self.trajectories.is_empty() {
            vec![self.base.trajectory.name]
        } else {
            self.trajectories.clone()
        };
        let mut cells = Vec::new();
        for &sampler in &self.samplers {
            for &trajectory in &trajectories {
                let etas: Vec<f64> = match sampler {
                    SamplerKind::Gvs => self.etas.clone(),
                    SamplerKind::Ar => vec![0.0],
                    SamplerKind::StochSync => vec![1.0],
                };
                for &eta in &etas {
                    for &gamma in &self.gammas {
                        for &loop_closing in &self.loop_closing {
                            cells.push(Cell {
                                sampler,
                                trajectory,
                                eta,
                                gamma,
                                loop_closing,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

fn run_cell(grid: &ExperimentGrid, index: usize, cell: &Cell) -> (Vec<GridRow>, Option<f64>, Vec<CellFailure>) {
    let prepared: Prepared = match cell.config(&grid.base).prepare() {
        Ok(p) => p,
        Err(e) => {
            let failure = CellFailure {
                cell: index,
                seed: None,
                message: e.to_string(),
            };
            let rows = grid
                .seeds
                .iter()
                .map(|&seed| GridRow {
                    cell: index,
                    seed,
                    report: None,
                    wall_ms: 0,
                })
                .collect();
            return (rows, None, vec![failure]);
        }
    };
    let mut rows = Vec::with_capacity(grid.seeds.len());
    let mut failures = Vec::new();
    let mut flat = Vec::new();
    for &seed in &grid.seeds {
        let start = Instant::now();
        let result = prepared.sample(seed).and_then(|out| {
            if out.video.is_finite() {
                Ok(out.video)
            } else {
                Err(GvsError::NumericFailure { step: 0, chunk: 0 })
            }
        });
        let wall_ms = if grid.timing { start.elapsed().as_millis() as u64 } else { 0 };
        let report = match result {
            Ok(video) => {
                let r = MetricReport::evaluate(&video, &prepared.traj, &prepared.world, &prepared.config.lrc);
                flat.push(video.as_slice().to_vec());
                Some(r)
            }
            Err(e) => {
                log::warn!("cell {index} seed {seed} failed: {e}");
                failures.push(CellFailure {
                    cell: index,
                    seed: Some(seed),
                    message: e.to_string(),
                });
                None
            }
        };
        rows.push(GridRow {
            cell: index,
            seed,
            report,
            wall_ms,
        });
    }
    let cov = (flat.len() >= 2).then(|| {
        let analytic = prepared.world.video_covariance(&prepared.traj.poses);
        cov_error(&flat, &analytic)
    });
    (rows, cov, failures)
}

/// Runs every (cell, seed) on at most `jobs` threads. Rows come back in cell
/// then seed order regardless of scheduling. A failing cell is recorded and
/// the grid continues.
pub fn run_grid(grid: &ExperimentGrid, jobs: usize) -> Result<GridOutput> {
    grid.validate()?;
    let cells = grid.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| GvsError::Config(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, cell)| run_cell(grid, i, cell))
            .collect()
    });
    let mut out = GridOutput {
        cells,
        rows: Vec::new(),
        cell_cov_error: Vec::new(),
        failures: Vec::new(),
    };
    for (rows, cov, failures) in results {
        out.rows.extend(rows);
        out.cell_cov_error.push(cov);
        out.failures.extend(failures);
    }
    Ok(out)
}

pub const CSV_HEADER: &str = "sampler,trajectory,eta,gamma,loop_closing,seed,f2fc,lrc,hf_energy,cov_error,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl GridOutput {
    /// Absent values (failed runs, no loop pairs, too few seeds) are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            let c = &self.cells[row.cell];
            let r = row.report.as_ref();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.sampler,
                c.trajectory.as_str(),
                c.eta,
                c.gamma,
                c.loop_closing,
                row.seed,
                opt(r.map(|r| r.f2fc)),
                opt(r.and_then(|r| r.lrc)),
                opt(r.map(|r| r.hf_energy)),
                opt(self.cell_cov_error[row.cell]),
                row.wall_ms
            );
        }
        s
    }
}
