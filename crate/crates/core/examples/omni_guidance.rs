//! Guided noise prediction for a single stitching window, merged and
//! two-term forms.

use std::sync::Arc;

use gvs::denoiser::{omni_guided_eps, Conditioning, GuidanceConfig, WindowInput};
use gvs::rng::{NoiseKey, NoiseStream, Purpose};
use gvs::schedule::NoiseSchedule;
use gvs::trajectory::{generate_trajectory, Benchmark};
use gvs::world::{OracleDenoiser, World};

fn main() -> gvs::error::Result<()> {
    let traj = generate_trajectory(Benchmark::StraightLine, 16, Default::default())?;
    let world = Arc::new(World::for_trajectory(&Default::default(), &traj)?);
    let schedule = Arc::new(NoiseSchedule::build(1000, Default::default(), 50)?);
    let denoiser = OracleDenoiser::new(Arc::clone(&world), Arc::clone(&schedule), 8);
    let stream = NoiseStream::new(11);
    let dim = world.rays();

    // 2 past frames, a 4-frame target chunk, 2 future frames
    let slots: Vec<usize> = (2..10).collect();
    let k = 500;
    let video = world.ground_truth_video(&traj, 5);
    let values = slots
        .iter()
        .map(|&f| schedule.forward_noise(video.frame(f), k, &stream.normals(NoiseKey::new(Purpose::Init, 0, f as i64), dim)))
        .collect::<gvs::error::Result<Vec<_>>>()?;
    let input = WindowInput {
        values,
        noise_levels: vec![k; 8],
        conditioning: slots.iter().map(|&f| Conditioning::Pose(traj.poses[f])).collect(),
        target_mask: (0..8).map(|i| (2..6).contains(&i)).collect(),
    };
    let fresh: Vec<Vec<f64>> = (0..8).map(|i| stream.normals(NoiseKey::new(Purpose::Guidance, 0, 0).with_sub(i), dim)).collect();

    for (label, cfg) in [
        ("unguided", GuidanceConfig::merged(0.0)),
        ("merged gamma=1", GuidanceConfig::merged(1.0)),
        ("two-term 0.5/0.5", GuidanceConfig::two_term(0.5, 0.5)),
    ] {
        let eps = omni_guided_eps(&denoiser, &input, &cfg, &fresh)?;
        let clean = schedule.predict_clean(&input.values[3], &eps[3], k)?;
        let err: f64 = clean.iter().zip(video.frame(5)).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / dim as f64;
        println!("{label:>18}: clean-estimate MSE on frame 5 = {err:.6}");
    }
    Ok(())
}
