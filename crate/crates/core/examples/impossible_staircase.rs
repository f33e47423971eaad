//! The impossible staircase: the loop-closing window sees the last flight as
//! a straight continuation of the first, so the stairs close on themselves.

use gvs::sampler::{build_gvs_schedule, GvsConfig};
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::World;

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::ImpossibleStaircase, 120, Default::default())?;
    let world = World::for_trajectory(&Default::default(), &traj)?;
    let schedule = build_gvs_schedule(&traj, &world, &GvsConfig::default())?;
    for ov in &traj.overrides {
        println!("target chunk {} conditions on chunk {} with overridden poses:", ov.target_chunk, ov.cond_chunk);
        for (f, p) in ov.frames.iter().zip(&ov.poses) {
            let true_pose = traj.poses[*f];
            println!("  frame {f:>3}: height {:>6.2} (trajectory {:>6.2})", p.position[2], true_pose.position[2]);
        }
    }
    for w in schedule.windows.iter().filter(|w| w.partner.is_some()) {
        let heights: Vec<String> = w.poses.iter().map(|p| format!("{:.2}", p.position[2])).collect();
        println!("spatial window {} (target {}): heights [{}]", w.id, w.target_chunk, heights.join(", "));
    }
    Ok(())
}
