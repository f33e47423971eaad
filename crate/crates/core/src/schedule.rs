//! Noise schedules and the stochastic DDIM update.
//!
//! Level `0` is "effectively clean" and level `K - 1` is "effectively pure
//! noise": both ends are squeezed into `[ALPHA_CLAMP, 1 - ALPHA_CLAMP]` so the
//! clean-sample prediction never divides by zero and the noise term is always
//! defined.

use serde::{Deserialize, Serialize};

use crate::error::{GvsError, Result};

/// Clamp `δ` applied to both ends of every schedule.
pub const ALPHA_CLAMP: f64 = 1e-5;

const COSINE_OFFSET: f64 = 0.008;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    LinearAlpha,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    inference_levels: Vec<usize>,
}

fn squeeze(f: f64) -> f64 {
    f * (1.0 - ALPHA_CLAMP) + (1.0 - f) * ALPHA_CLAMP
}

/// `count` level indices spaced linearly from `start` down to `end`.
pub fn linear_levels(start: usize, end: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![start];
    }
    let span = start as f64 - end as f64;
    let mut out: Vec<usize> = (0..count)
        .map(|i| (start as f64 - span * i as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

impl NoiseSchedule {
    pub fn build(levels: usize, kind: ScheduleKind, steps: usize) -> Result<Self> {
        if levels < 2 {
            return Err(GvsError::Config(format!("need at least 2 noise levels, got {levels}")));
        }
        if steps < 2 || steps > levels {
            return Err(GvsError::Config(format!(
                "inference steps must lie in [2, {levels}], got {steps}"
            )));
        }
        let last = (levels - 1) as f64;
        let norm = (COSINE_OFFSET / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2)
            .cos()
            .powi(2);
        let alpha_bar = (0..levels)
            .map(|k| {
                let t = k as f64 / last;
                let f = match kind {
                    ScheduleKind::Cosine => {
                        let angle = (t + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                            * std::f64::consts::FRAC_PI_2;
                        // cos(pi/2) is not exactly zero in floating point
                        if k + 1 == levels {
                            0.0
                        } else {
                            (angle.cos().powi(2) / norm).min(1.0)
                        }
                    }
                    ScheduleKind::LinearAlpha => 1.0 - t,
                };
                squeeze(f)
            })
            .collect();
        let inference_levels = linear_levels(levels - 1, 0, steps);
        Ok(Self {
            alpha_bar,
            inference_levels,
        })
    }

    /// Schedule from explicit values, sampled over every level in decreasing order.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(GvsError::Config("need at least 2 noise levels".into()));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(GvsError::Config("alpha_bar must be strictly decreasing".into()));
        }
        if alpha_bar.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(GvsError::Config("alpha_bar values must lie in (0, 1]".into()));
        }
        let inference_levels = (0..alpha_bar.len()).rev().collect();
        Ok(Self {
            alpha_bar,
            inference_levels,
        })
    }

    pub fn levels(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn max_level(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bar[k]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Levels visited at sampling time, noisiest first.
    pub fn inference_levels(&self) -> &[usize] {
        &self.inference_levels
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k >= self.alpha_bar.len() {
            return Err(GvsError::Input(format!(
                "noise level {k} out of range 0..{}",
                self.alpha_bar.len()
            )));
        }
        Ok(())
    }

    pub fn forward_noise(&self, x0: &[f64], k: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_level(k)?;
        forward_noise(self.alpha_bar[k], x0, eps)
    }

    pub fn predict_clean(&self, xk: &[f64], eps_hat: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_level(k)?;
        predict_clean(self.alpha_bar[k], xk, eps_hat)
    }

    /// `σ = η · sqrt(1 − ᾱ[k_prev])`.
    pub fn sigma(&self, cfg: Stochasticity, k_prev: usize) -> f64 {
        cfg.eta() * (1.0 - self.alpha_bar[k_prev]).sqrt()
    }

    pub fn ddim_step(
        &self,
        xk: &[f64],
        eps_hat: &[f64],
        k: usize,
        k_prev: usize,
        sigma: f64,
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_level(k)?;
        self.check_level(k_prev)?;
        if k_prev >= k {
            return Err(GvsError::Input(format!(
                "DDIM step must move to a cleaner level, got {k} -> {k_prev}"
            )));
        }
        ddim_step(self.alpha_bar[k], self.alpha_bar[k_prev], xk, eps_hat, sigma, noise)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stochasticity {
    eta: f64,
}

impl Stochasticity {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(GvsError::Config(format!("eta must lie in [0, 1], got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(GvsError::Input(format!(
            "{what}: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn forward_noise(alpha_bar: f64, x0: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    same_len(x0, eps, "forward_noise")?;
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

pub fn predict_clean(alpha_bar: f64, xk: &[f64], eps_hat: &[f64]) -> Result<Vec<f64>> {
    same_len(xk, eps_hat, "predict_clean")?;
    if alpha_bar < ALPHA_CLAMP * (1.0 - 1e-9) {
        return Err(GvsError::NumericGuard {
            alpha_bar,
            floor: ALPHA_CLAMP,
        });
    }
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(xk.iter().zip(eps_hat).map(|(x, e)| (x - b * e) / a).collect())
}

/// One stochastic DDIM update from `alpha_k` to `alpha_prev`.
pub fn ddim_step(
    alpha_k: f64,
    alpha_prev: f64,
    xk: &[f64],
    eps_hat: &[f64],
    sigma: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    same_len(xk, noise, "ddim_step noise")?;
    // factored so that sigma at its maximum gives an exact zero
    let s = (1.0 - alpha_prev).max(0.0).sqrt();
    if sigma > s * (1.0 + 1e-12) {
        return Err(GvsError::Config(format!(
            "sigma^2 = {} exceeds 1 - alpha_bar_prev = {}",
            sigma * sigma,
            1.0 - alpha_prev
        )));
    }
    let radical = ((s - sigma) * (s + sigma)).max(0.0).sqrt();
    let x0 = predict_clean(alpha_k, xk, eps_hat)?;
    let a = alpha_prev.sqrt();
    Ok(x0
        .iter()
        .zip(eps_hat)
        .zip(noise)
        .map(|((x, e), n)| a * x + radical * e + sigma * n)
        .collect())
}
