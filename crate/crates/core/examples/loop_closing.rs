//! Spatial windows: which chunk pairs get stitched across time, and how much
//! that does for long-range consistency.

use std::sync::Arc;

use gvs::metrics::lrc_proxy;
use gvs::sampler::{build_gvs_schedule, gvs_sample, GvsConfig};
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{OracleDenoiser, World};

fn main() -> gvs::error::Result<()> {
    for name in Benchmark::SUITE {
        let traj = generate_trajectory(name, 120, Default::default())?;
        let world = World::for_trajectory(&Default::default(), &traj)?;
        let windows = build_gvs_schedule(&traj, &world, &GvsConfig::default())?;
        println!("{:>22}: spatial pairs {:?}", name.as_str(), windows.spatial_pairs());
    }

    let traj = generate_trajectory(Benchmark::Panorama1Loop, 120, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);
    for loop_closing in [false, true] {
        let mut cfg = GvsConfig::with_eta_gamma(0.9, 0.0);
        cfg.windows.loop_closing = loop_closing;
        let windows = build_gvs_schedule(&traj, &world, &cfg)?;
        let out = gvs_sample(&denoiser, &traj, &windows, &schedule, &cfg, 1)?;
        let lrc = lrc_proxy(&out.video, &traj, &world, &Default::default());
        println!("loop closing {loop_closing:>5}: lrc {:.4}", lrc.unwrap_or(f64::NAN));
    }
    Ok(())
}
