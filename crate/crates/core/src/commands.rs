//! What each command-line subcommand does, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::RetrievalEvent;
use crate::config::RunConfig;
use crate::error::{GvsError, Result};
use crate::grid::{run_grid, CellFailure, ExperimentGrid};
use crate::io::{read_sequence, render_waterfall, schedule_dump, write_sequence, SequenceMeta};
use crate::metrics::MetricReport;
use crate::sampler::build_gvs_schedule;
use crate::trajectory::generate_trajectory;
use crate::world::World;

#[derive(Clone, Debug, Serialize)]
pub struct GenReport<'a> {
    pub sampler: &'a str,
    pub trajectory: &'a str,
    pub seed: u64,
    pub config_hash: &'a str,
    pub metrics: &'a MetricReport,
    pub retrievals: &'a [RetrievalEvent],
}

#[derive(Clone, Debug)]
pub struct GenOutput {
    pub sequence: PathBuf,
    pub sidecar: PathBuf,
    pub report_path: PathBuf,
    pub report: MetricReport,
    pub retrievals: Vec<RetrievalEvent>,
}

fn run_stem(cfg: &RunConfig) -> String {
    format!("{}_{}_seed{}", cfg.sampler, cfg.trajectory.name.as_str(), cfg.seed)
}

/// Samples one sequence and writes the dump, its sidecar and a metric report.
pub fn cmd_gen(cfg: &RunConfig, output_dir: &Path) -> Result<GenOutput> {
    let prepared = cfg.prepare()?;
    let out = prepared.sample(cfg.seed)?;
    if !out.video.is_finite() {
        return Err(GvsError::NumericFailure { step: 0, chunk: 0 });
    }
    fs::create_dir_all(output_dir)?;
    let stem = output_dir.join(run_stem(cfg));
    let hash = cfg.hash();
    let meta = SequenceMeta {
        frames: out.video.frames(),
        dim: out.video.dim(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        config: *cfg,
    };
    let (sequence, sidecar) = write_sequence(&stem, &out.video, &meta)?;
    let report = MetricReport::evaluate(&out.video, &prepared.traj, &prepared.world, &cfg.lrc);
    let report_path = output_dir.join(format!("{}_metrics.json", run_stem(cfg)));
    let doc = GenReport {
        sampler: cfg.sampler.as_str(),
        trajectory: cfg.trajectory.name.as_str(),
        seed: cfg.seed,
        config_hash: &hash,
        metrics: &report,
        retrievals: &out.retrievals,
    };
    fs::write(&report_path, serde_json::to_string_pretty(&doc)?)?;
    Ok(GenOutput {
        sequence,
        sidecar,
        report_path,
        report,
        retrievals: out.retrievals,
    })
}

#[derive(Clone, Debug)]
pub struct AblateOutput {
    pub csv: PathBuf,
    pub rows: usize,
    pub failures: Vec<CellFailure>,
}

/// Runs a grid and writes `grid.csv`. Failed cells leave empty metric fields
/// and are returned so the caller can set the exit code.
pub fn cmd_ablate(grid: &ExperimentGrid, jobs: usize, output_dir: &Path) -> Result<AblateOutput> {
    let out = run_grid(grid, jobs)?;
    fs::create_dir_all(output_dir)?;
    let csv = output_dir.join("grid.csv");
    fs::write(&csv, out.to_csv())?;
    for f in &out.failures {
        log::error!("cell {} seed {:?}: {}", f.cell, f.seed, f.message);
    }
    Ok(AblateOutput {
        csv,
        rows: out.rows.len(),
        failures: out.failures,
    })
}

/// Writes the stitching window schedule (and the baseline's window sets) for
/// the configured trajectory.
pub fn cmd_schedule_dump(cfg: &RunConfig, output_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let spec = cfg.trajectory;
    let traj = generate_trajectory(spec.name, spec.frames, spec.params)?;
    let world = World::for_trajectory(&cfg.world, &traj)?;
    let schedule = build_gvs_schedule(&traj, &world, &cfg.gvs)?;
    let dump = schedule_dump(cfg, &traj, &schedule);
    fs::create_dir_all(output_dir)?;
    let path = output_dir.join(format!("schedule_{}.json", spec.name.as_str()));
    fs::write(&path, serde_json::to_string_pretty(&dump)?)?;
    Ok(path)
}

/// Renders a sequence dump as a waterfall image. Without an explicit target
/// the image goes next to the dump as `<stem>.png`.
pub fn cmd_render(sequence: &Path, target: Option<&Path>) -> Result<PathBuf> {
    let (video, _) = read_sequence(sequence)?;
    let path = target.map(Path::to_path_buf).unwrap_or_else(|| sequence.with_extension("png"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    render_waterfall(&video, &path)?;
    Ok(path)
}
