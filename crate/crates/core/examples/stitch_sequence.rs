//! Stitch a full 120-frame sequence on the panorama loop and report the
//! consistency proxies, with and without guidance.

use std::sync::Arc;

use gvs::metrics::MetricReport;
use gvs::sampler::{build_gvs_schedule, gvs_sample, GvsConfig};
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{OracleDenoiser, World};

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::Panorama1Loop, 120, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);

    for (eta, gamma) in [(0.9, 0.0), (0.9, 1.0)] {
        let cfg = GvsConfig::with_eta_gamma(eta, gamma);
        let windows = build_gvs_schedule(&traj, &world, &cfg)?;
        let out = gvs_sample(&denoiser, &traj, &windows, &schedule, &cfg, 7)?;
        let r = MetricReport::evaluate(&out.video, &traj, &world, &Default::default());
        println!(
            "eta {eta} gamma {gamma}: {} windows, f2fc {:.2e}, lrc {:.2e}, hf {:.4}",
            windows.windows.len(),
            r.f2fc,
            r.lrc.unwrap_or(f64::NAN),
            r.hf_energy
        );
    }
    println!("ground-truth hf expectation {:.4}", 2.0 * (1.0 - world.kernel(1.0)));
    Ok(())
}
