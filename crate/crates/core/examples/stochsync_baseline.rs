//! The StochSync baseline: alternating window sets with multi-step clean
//! estimates under maximum stochasticity.

use std::sync::Arc;

use gvs::baselines::{stochsync_sample, window_sets, StochSyncConfig};
use gvs::metrics::MetricReport;
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{OracleDenoiser, World};

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::Panorama1Loop, 40, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);
    let cfg = StochSyncConfig::default();

    for (i, set) in window_sets(traj.len(), &cfg, true, traj.layout.loops()).iter().enumerate() {
        let spans: Vec<String> = set.iter().map(|w| format!("[{}..{}]", w.slots[0], w.slots[w.slots.len() - 1])).collect();
        println!("set {i}: {}", spans.join(" "));
    }
    let video = stochsync_sample(&denoiser, &traj, &schedule, &cfg, 4)?;
    let r = MetricReport::evaluate(&video, &traj, &world, &Default::default());
    println!("f2fc {:.2e} lrc {:.3} hf {:.4}", r.f2fc, r.lrc.unwrap_or(f64::NAN), r.hf_energy);
    Ok(())
}
