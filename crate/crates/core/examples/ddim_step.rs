//! One DDIM step at several stochasticity levels, and the clean-sample
//! round trip that every sampler relies on.

use gvs::schedule::{NoiseSchedule, ScheduleKind, Stochasticity};

fn main() -> gvs::error::Result<()> {
    let schedule = NoiseSchedule::build(1000, ScheduleKind::Cosine, 50)?;
    let levels = schedule.inference_levels();
    let (k, k_prev) = (levels[10], levels[11]);
    println!("step {k} -> {k_prev}: alpha_bar {:.4} -> {:.4}", schedule.alpha_bar(k), schedule.alpha_bar(k_prev));

    let x0 = vec![0.8, -0.3, 1.2];
    let eps = vec![0.1, -1.4, 0.6];
    let xk = schedule.forward_noise(&x0, k, &eps)?;
    let back = schedule.predict_clean(&xk, &eps, k)?;
    let err = x0.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip error {err:.2e}");

    let z = vec![0.5, 0.5, -0.5];
    for eta in [0.0, 0.5, 0.9, 1.0] {
        let sigma = schedule.sigma(Stochasticity::new(eta)?, k_prev);
        let next = schedule.ddim_step(&xk, &eps, k, k_prev, sigma, &z)?;
        println!("eta {eta:.1}: sigma {sigma:.4} x_prev {next:.4?}");
    }
    Ok(())
}
