//! A small stochasticity-by-guidance grid, printed as CSV.

use gvs::grid::{run_grid, ExperimentGrid};
use gvs::trajectory::Benchmark;

fn main() -> gvs::error::Result<()> {
    let mut grid = ExperimentGrid::default();
    grid.base.trajectory.name = Benchmark::StraightLine;
    grid.base.trajectory.frames = 40;
    grid.etas = vec![0.0, 0.5, 0.9, 1.0];
    grid.gammas = vec![0.0, 1.0];
    grid.seeds = vec![0, 1];
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let out = run_grid(&grid, jobs)?;
    print!("{}", out.to_csv());
    Ok(())
}
