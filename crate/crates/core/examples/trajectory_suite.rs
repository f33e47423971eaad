//! Every benchmark camera path, summarized.

use gvs::trajectory::{generate_trajectory, Benchmark};

fn main() -> gvs::error::Result<()> {
    for name in Benchmark::ALL {
        let traj = generate_trajectory(name, 120, Default::default())?;
        let first = traj.poses[0];
        let last = traj.poses[traj.len() - 1];
        let (lo, hi) = traj
            .poses
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.position[2]), hi.max(p.position[2])));
        println!(
            "{:>22}: layout {:?}, height {lo:.2}..{hi:.2}, yaw {:.2} -> {:.2}, overrides {}",
            name.as_str(),
            traj.layout,
            first.yaw,
            last.yaw,
            traj.overrides.len()
        );
    }
    Ok(())
}
