use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gvs::commands::{cmd_ablate, cmd_gen, cmd_render, cmd_schedule_dump};
use gvs::config::{RunConfig, SamplerKind};
use gvs::error::Result;
use gvs::grid::ExperimentGrid;

#[derive(Parser)]
#[command(name = "gvs", version, about = "Stitched camera-guided sequence sampling in an analytic world")]
struct Cli {
    /// Run config JSON (grid JSON for `ablate`). Defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed (for `ablate`, replaces the seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrency bound for grid execution.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
    /// gvs, ar or stochsync.
    #[arg(long, global = true)]
    sampler: Option<SamplerKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one sequence and write the dump, sidecar and metrics.
    Gen,
    /// Run an ablation grid and write grid.csv.
    Ablate {
        /// Record per-row wall time (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Write the window schedule as JSON.
    ScheduleDump,
    /// Render a sequence dump as a time-by-ray waterfall image.
    Render {
        sequence: PathBuf,
        /// Target .png or .pgm; defaults to the dump's stem in the output dir.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = cli.sampler {
        cfg.sampler = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Gen => {
            let out = cmd_gen(&run_config(cli)?, &cli.output_dir)?;
            println!("{}", out.sequence.display());
            println!("{}", out.sidecar.display());
            println!("{}", out.report_path.display());
            Ok(true)
        }
        Command::Ablate { timing } => {
            let mut grid = match &cli.config {
                Some(p) => ExperimentGrid::from_json(&std::fs::read_to_string(p)?)?,
                None => ExperimentGrid::default(),
            };
            grid.timing |= timing;
            if let Some(seed) = cli.seed {
                grid.seeds = vec![seed];
            }
            if let Some(s) = cli.sampler {
                grid.samplers = vec![s];
            }
            let out = cmd_ablate(&grid, cli.jobs, &cli.output_dir)?;
            println!("{} ({} rows, {} failures)", out.csv.display(), out.rows, out.failures.len());
            Ok(out.failures.is_empty())
        }
        Command::ScheduleDump => {
            println!("{}", cmd_schedule_dump(&run_config(cli)?, &cli.output_dir)?.display());
            Ok(true)
        }
        Command::Render { sequence, output } => {
            let target = output.clone().unwrap_or_else(|| {
                let stem = sequence.file_stem().map(Path::new).unwrap_or(Path::new("sequence"));
                cli.output_dir.join(stem).with_extension("png")
            });
            println!("{}", cmd_render(sequence, Some(&target))?.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
