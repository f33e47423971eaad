//! The consistency proxies on ground truth, on perturbed ground truth and on
//! unrelated scenes.

use gvs::metrics::{f2fc_proxy, hf_energy, lrc_proxy};
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::video::Video;
use gvs::world::World;
use gvs::rng::{NoiseKey, NoiseStream, Purpose};

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::Panorama2Loop, 120, Default::default())?;
    let world = World::for_trajectory(&Default::default(), &traj)?;
    let lrc = Default::default();
    let gt = world.ground_truth_video(&traj, 0);
    println!("ground truth: f2fc {:.2e} lrc {:.2e} hf {:.4}", f2fc_proxy(&gt, &traj, &world), lrc_proxy(&gt, &traj, &world, &lrc).unwrap(), hf_energy(&gt));

    let s = 0.1;
    let stream = NoiseStream::new(1);
    let mut noisy = gt.clone();
    for f in 0..noisy.frames() {
        let z = stream.normals(NoiseKey::new(Purpose::Perturb, 0, f as i64), noisy.dim());
        noisy.frame_mut(f).iter_mut().zip(z).for_each(|(v, z)| *v += s * z);
    }
    println!("perturbed (sd {s}): f2fc {:.4} (expected {:.4})", f2fc_proxy(&noisy, &traj, &world), 2.0 * s * s);

    // each loop drawn from its own scene
    let other = world.ground_truth_video(&traj, 1);
    let half = traj.len() / 2;
    let frames: Vec<Vec<f64>> = (0..traj.len())
        .map(|f| if f < half { gt.frame(f).to_vec() } else { other.frame(f).to_vec() })
        .collect();
    let spliced = Video::from_frames(frames);
    println!("two scenes: lrc {:.3} (expected about 2.0)", lrc_proxy(&spliced, &traj, &world, &lrc).unwrap());
    Ok(())
}
