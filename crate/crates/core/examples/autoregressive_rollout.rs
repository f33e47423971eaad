//! The history-guided autoregressive baseline, with and without retrieval
//! memory, on a loop it revisits.

use std::sync::Arc;

use gvs::baselines::{ar_sample, ArConfig};
use gvs::metrics::MetricReport;
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{OracleDenoiser, World};

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::Panorama1Loop, 120, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);

    for (label, cfg) in [("history only", ArConfig::default()), ("with memory", ArConfig::with_memory())] {
        let out = ar_sample(&denoiser, &traj, &world, &schedule, &cfg, 2)?;
        let r = MetricReport::evaluate(&out.video, &traj, &world, &Default::default());
        println!(
            "{label:>12}: f2fc {:.2e} lrc {:.3} retrieval steps {}",
            r.f2fc,
            r.lrc.unwrap_or(f64::NAN),
            out.retrievals.len()
        );
        if let Some(ev) = out.retrievals.first() {
            println!("              first retrieval at step {}: frames {:?} recall {:?}", ev.step, ev.generated, ev.retrieved);
        }
    }
    Ok(())
}
