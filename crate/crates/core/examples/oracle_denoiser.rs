//! The exact denoiser of the analytic world: conditioning on poses couples
//! the frames of a window, and the null branch loses that coupling.

use std::sync::Arc;

use gvs::denoiser::{denoise, Conditioning, WindowInput};
use gvs::rng::{NoiseKey, NoiseStream, Purpose};
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{NullModel, OracleDenoiser, World};

fn mse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n: usize = a.iter().map(Vec::len).sum();
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64
}

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::Panorama1Loop, 24, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let k = 600;
    let stream = NoiseStream::new(3);

    let mut totals = [0.0; 3];
    let trials = 200;
    for trial in 0..trials {
        let video = world.ground_truth_video(&traj, trial);
        let frames: Vec<usize> = (4..12).collect();
        let eps: Vec<Vec<f64>> = frames
            .iter()
            .map(|&f| stream.normals(NoiseKey::new(Purpose::Perturb, trial as usize, f as i64), world.rays()))
            .collect();
        let values = frames
            .iter()
            .zip(&eps)
            .map(|(&f, e)| schedule.forward_noise(video.frame(f), k, e))
            .collect::<gvs::error::Result<Vec<_>>>()?;
        let input = WindowInput {
            values,
            noise_levels: vec![k; frames.len()],
            conditioning: frames.iter().map(|&f| Conditioning::Pose(traj.poses[f])).collect(),
            target_mask: vec![true; frames.len()],
        };
        let oracle = world.oracle_eps(&schedule, &input)?;
        let independent = world.null_oracle_eps(&schedule, &input)?;
        let mixture = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);
        let mut nulled = input.clone();
        nulled.conditioning.iter_mut().for_each(|c| *c = Conditioning::Null);
        let mixture = denoise(&mixture, &nulled)?;
        totals[0] += mse(&oracle, &eps);
        totals[1] += mse(&mixture, &eps);
        totals[2] += mse(&independent, &eps);
    }
    let t = trials as f64;
    println!("eps MSE at k={k} over {trials} windows of 8 frames");
    println!("  pose-conditioned oracle     {:.4}", totals[0] / t);
    println!("  null, velocity mixture      {:.4}  ({:?})", totals[1] / t, NullModel::default());
    println!("  null, independent frames    {:.4}", totals[2] / t);
    Ok(())
}
