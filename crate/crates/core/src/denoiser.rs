//! The Diffusion-Forcing denoiser contract and guidance compositions.
//!
//! A denoiser sees one context window at a time. Each slot carries its own
//! noise level and either a camera pose or the null condition, which is what
//! lets a single backbone serve stitching, history conditioning and the
//! negative branches of guidance.

use serde::{Deserialize, Serialize};

use crate::error::{GvsError, Result};
use crate::trajectory::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Conditioning {
    Pose(Pose),
    Null,
}

impl Conditioning {
    pub fn is_null(&self) -> bool {
        matches!(self, Conditioning::Null)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowInput {
    pub values: Vec<Vec<f64>>,
    pub noise_levels: Vec<usize>,
    pub conditioning: Vec<Conditioning>,
    pub target_mask: Vec<bool>,
}

impl WindowInput {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self, frame_dim: usize, max_level: usize) -> Result<()> {
        let l = self.values.len();
        if self.noise_levels.len() != l || self.conditioning.len() != l || self.target_mask.len() != l {
            return Err(GvsError::Input(format!(
                "window arrays disagree in length: values {l}, levels {}, conditioning {}, mask {}",
                self.noise_levels.len(),
                self.conditioning.len(),
                self.target_mask.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| v.len() != frame_dim) {
            return Err(GvsError::Input(format!(
                "slot of dimension {} in a {frame_dim}-dimensional window",
                v.len()
            )));
        }
        if let Some(k) = self.noise_levels.iter().find(|&&k| k > max_level) {
            return Err(GvsError::Input(format!("noise level {k} above maximum {max_level}")));
        }
        Ok(())
    }
}

/// A noise-prediction model over context windows.
///
/// Implementations must be pure: the same input always yields the same output.
pub trait Denoiser: Sync {
    fn context_len(&self) -> usize;
    fn frame_dim(&self) -> usize;
    fn max_level(&self) -> usize;

    /// Called by [`denoise`] after the input has been validated.
    fn predict_eps(&self, input: &WindowInput) -> Result<Vec<Vec<f64>>>;
}

pub fn denoise(d: &dyn Denoiser, input: &WindowInput) -> Result<Vec<Vec<f64>>> {
    if input.len() > d.context_len() {
        return Err(GvsError::Capacity {
            slots: input.len(),
            context: d.context_len(),
        });
    }
    input.validate(d.frame_dim(), d.max_level())?;
    d.predict_eps(input)
}

/// Replace every slot outside `keep_mask` with fresh maximum-level noise and
/// null all conditioning.
pub fn null_variant(input: &WindowInput, keep_mask: &[bool], fresh_noise: &[Vec<f64>], max_level: usize) -> WindowInput {
    let mut out = mask_out(input, keep_mask, fresh_noise, max_level);
    out.conditioning.iter_mut().for_each(|c| *c = Conditioning::Null);
    out
}

/// Like [`null_variant`] but leaves the conditioning untouched.
fn mask_out(input: &WindowInput, keep_mask: &[bool], fresh_noise: &[Vec<f64>], max_level: usize) -> WindowInput {
    let mut out = input.clone();
    for (i, &keep) in keep_mask.iter().enumerate() {
        if !keep {
            out.values[i] = fresh_noise[i].clone();
            out.noise_levels[i] = max_level;
        }
    }
    out
}

fn nulled_conditioning(input: &WindowInput) -> WindowInput {
    let mut out = input.clone();
    out.conditioning.iter_mut().for_each(|c| *c = Conditioning::Null);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    Merged,
    TwoTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    pub gamma: f64,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::Merged,
            gamma: 1.0,
            gamma1: None,
            gamma2: None,
        }
    }
}

impl GuidanceConfig {
    pub fn merged(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn two_term(gamma1: f64, gamma2: f64) -> Self {
        Self {
            mode: GuidanceMode::TwoTerm,
            gamma: 0.0,
            gamma1: Some(gamma1),
            gamma2: Some(gamma2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scales = [Some(self.gamma), self.gamma1, self.gamma2];
        if scales.iter().flatten().any(|g| !(*g >= 0.0)) {
            return Err(GvsError::Config("guidance scales must be non-negative".into()));
        }
        if self.mode == GuidanceMode::TwoTerm && (self.gamma1.is_none() || self.gamma2.is_none()) {
            return Err(GvsError::Config("two-term guidance needs gamma1 and gamma2".into()));
        }
        Ok(())
    }

    /// No second denoiser call is needed.
    pub fn is_unguided(&self) -> bool {
        match self.mode {
            GuidanceMode::Merged => self.gamma == 0.0,
            GuidanceMode::TwoTerm => self.gamma1 == Some(0.0) && self.gamma2 == Some(0.0),
        }
    }
}

/// Affine combination `Σ wᵢ·εᵢ` slot by slot.
fn combine(terms: &[(f64, &Vec<Vec<f64>>)]) -> Vec<Vec<f64>> {
    let (_, first) = terms[0];
    (0..first.len())
        .map(|s| {
            (0..first[s].len())
                .map(|j| terms.iter().map(|(w, e)| w * e[s][j]).sum())
                .collect()
        })
        .collect()
}

/// Omni Guidance over one stitching window.
///
/// The merged form is `(1+γ)·ε(x | p) − γ·ε(∅, x̄, ∅ | ∅)`; the two-term form
/// separates pose adherence (`γ₁`) from agreement with the neighbours (`γ₂`).
pub fn omni_guided_eps(
    d: &dyn Denoiser,
    input: &WindowInput,
    cfg: &GuidanceConfig,
    fresh_noise: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if !input.target_mask.iter().any(|&t| t) {
        return Err(GvsError::Input("guided window has no target slots".into()));
    }
    let full = denoise(d, input)?;
    if cfg.is_unguided() {
        return Ok(full);
    }
    match cfg.mode {
        GuidanceMode::Merged => {
            let null = denoise(d, &null_variant(input, &input.target_mask, fresh_noise, d.max_level()))?;
            Ok(combine(&[(1.0 + cfg.gamma, &full), (-cfg.gamma, &null)]))
        }
        GuidanceMode::TwoTerm => {
            let (g1, g2) = (cfg.gamma1.unwrap_or(0.0), cfg.gamma2.unwrap_or(0.0));
            let uncond_pose = denoise(d, &nulled_conditioning(input))?;
            let target_only = denoise(d, &mask_out(input, &input.target_mask, fresh_noise, d.max_level()))?;
            Ok(combine(&[
                (1.0 + g1 + g2, &full),
                (-g1, &uncond_pose),
                (-g2, &target_only),
            ]))
        }
    }
}

/// Which conditioning the negative branch of history guidance drops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HistoryNull {
    /// History frames and every pose.
    #[default]
    HistoryAndPoses,
    /// History frames only; generated slots keep their poses.
    HistoryOnly,
}

/// `(1+γ_h)·ε(history, x | p) − γ_h·ε(∅, x | ∅)`.
pub fn history_guided_eps(
    d: &dyn Denoiser,
    input: &WindowInput,
    history_mask: &[bool],
    gamma_h: f64,
    fresh_noise: &[Vec<f64>],
    drop: HistoryNull,
) -> Result<Vec<Vec<f64>>> {
    if history_mask.len() != input.len() {
        return Err(GvsError::Input("history mask length differs from window length".into()));
    }
    let cond = denoise(d, input)?;
    if gamma_h == 0.0 {
        return Ok(cond);
    }
    let generated: Vec<bool> = history_mask
        .iter()
        .zip(&input.target_mask)
        .map(|(&h, &t)| !h && t)
        .collect();
    let negative = match drop {
        HistoryNull::HistoryAndPoses => null_variant(input, &generated, fresh_noise, d.max_level()),
        HistoryNull::HistoryOnly => {
            let mut v = mask_out(input, &generated, fresh_noise, d.max_level());
            for (c, &g) in v.conditioning.iter_mut().zip(&generated) {
                if !g {
                    *c = Conditioning::Null;
                }
            }
            v
        }
    };
    let uncond = denoise(d, &negative)?;
    Ok(combine(&[(1.0 + gamma_h, &cond), (-gamma_h, &uncond)]))
}

/// Camera-only guidance: the negative branch keeps every value but drops all poses.
pub fn pose_guided_eps(d: &dyn Denoiser, input: &WindowInput, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let cond = denoise(d, input)?;
    if gamma == 0.0 {
        return Ok(cond);
    }
    let uncond = denoise(d, &nulled_conditioning(input))?;
    Ok(combine(&[(1.0 + gamma, &cond), (-gamma, &uncond)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns `full` for fully pose-conditioned inputs and `null` otherwise.
    struct TwoValued {
        full: f64,
        null: f64,
        dim: usize,
    }

    impl Denoiser for TwoValued {
        fn context_len(&self) -> usize {
            8
        }
        fn frame_dim(&self) -> usize {
            self.dim
        }
        fn max_level(&self) -> usize {
            99
        }
        fn predict_eps(&self, input: &WindowInput) -> Result<Vec<Vec<f64>>> {
            let v = if input.conditioning.iter().all(|c| !c.is_null()) {
                self.full
            } else {
                self.null
            };
            Ok(vec![vec![v; self.dim]; input.len()])
        }
    }

    fn pose() -> Pose {
        Pose {
            position: [0.0; 3],
            yaw: 0.0,
            fov: 1.0,
            arc: 0.0,
        }
    }

    fn window(n: usize, targets: std::ops::Range<usize>) -> WindowInput {
        WindowInput {
            values: (0..n).map(|i| vec![i as f64, -(i as f64)]).collect(),
            noise_levels: vec![40; n],
            conditioning: vec![Conditioning::Pose(pose()); n],
            target_mask: (0..n).map(|i| targets.contains(&i)).collect(),
        }
    }

    fn fresh(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![100.0 + i as f64; 2]).collect()
    }

    #[test]
    fn null_variant_masks() {
        let w = window(8, 2..6);
        let all = null_variant(&w, &[true; 8], &fresh(8), 99);
        assert_eq!(all.values, w.values);
        assert_eq!(all.noise_levels, w.noise_levels);
        assert!(all.conditioning.iter().all(Conditioning::is_null));

        let none = null_variant(&w, &[false; 8], &fresh(8), 99);
        assert_eq!(none.values, fresh(8));
        assert!(none.noise_levels.iter().all(|&k| k == 99));

        let eq7 = null_variant(&w, &w.target_mask, &fresh(8), 99);
        for i in 0..8 {
            if w.target_mask[i] {
                assert_eq!(eq7.values[i], w.values[i]);
                assert_eq!(eq7.noise_levels[i], 40);
            } else {
                assert_eq!(eq7.values[i], fresh(8)[i]);
                assert_eq!(eq7.noise_levels[i], 99);
            }
        }
        // idempotent
        let twice = null_variant(&eq7, &w.target_mask, &fresh(8), 99);
        assert_eq!(twice, eq7);
    }

    #[test]
    fn merged_guidance_arithmetic() {
        let d = TwoValued { full: 3.0, null: 1.0, dim: 2 };
        let w = window(8, 2..6);
        let g0 = omni_guided_eps(&d, &w, &GuidanceConfig::merged(0.0), &fresh(8)).unwrap();
        assert_eq!(g0, denoise(&d, &w).unwrap());
        let g1 = omni_guided_eps(&d, &w, &GuidanceConfig::merged(1.0), &fresh(8)).unwrap();
        assert!(g1.iter().flatten().all(|&v| v == 2.0 * 3.0 - 1.0));
    }

    #[test]
    fn guidance_is_affine_in_gamma() {
        let d = TwoValued { full: 0.37, null: -1.3, dim: 2 };
        let w = window(8, 2..6);
        let at = |g: f64| omni_guided_eps(&d, &w, &GuidanceConfig::merged(g), &fresh(8)).unwrap();
        let (a, b, c) = (at(0.0), at(1.0), at(2.0));
        for s in 0..8 {
            for j in 0..2 {
                assert!((c[s][j] - 2.0 * b[s][j] + a[s][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_term_weights() {
        // every negative branch is nulled here, so the mix is
        // (1+g1+g2)·full − g1·null − g2·target_only(full, poses kept)
        let d = TwoValued { full: 2.0, null: 0.5, dim: 2 };
        let w = window(8, 2..6);
        let g = omni_guided_eps(&d, &w, &GuidanceConfig::two_term(1.0, 2.0), &fresh(8)).unwrap();
        let expect = 4.0 * 2.0 - 1.0 * 0.5 - 2.0 * 2.0;
        assert!(g.iter().flatten().all(|&v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn history_guidance_cases() {
        let d = TwoValued { full: 3.0, null: 1.0, dim: 2 };
        let w = window(8, 4..8);
        let hist: Vec<bool> = (0..8).map(|i| i < 4).collect();
        let g0 = history_guided_eps(&d, &w, &hist, 0.0, &fresh(8), HistoryNull::default()).unwrap();
        assert_eq!(g0, denoise(&d, &w).unwrap());
        let g4 = history_guided_eps(&d, &w, &hist, 4.0, &fresh(8), HistoryNull::default()).unwrap();
        assert!(g4.iter().flatten().all(|&v| v == 5.0 * 3.0 - 4.0 * 1.0));

        let flat = TwoValued { full: 0.25, null: 0.25, dim: 2 };
        for gamma in [0.0, 1.0, 4.0, 7.5] {
            let g = history_guided_eps(&flat, &w, &hist, gamma, &fresh(8), HistoryNull::HistoryOnly).unwrap();
            assert!(g.iter().flatten().all(|&v| (v - 0.25).abs() < 1e-14));
        }
    }

    #[test]
    fn capacity_and_shape_checked() {
        let d = TwoValued { full: 0.0, null: 0.0, dim: 2 };
        let w = window(9, 0..4);
        assert!(matches!(denoise(&d, &w), Err(GvsError::Capacity { slots: 9, context: 8 })));
        let mut bad = window(4, 0..4);
        bad.noise_levels.pop();
        assert!(matches!(denoise(&d, &bad), Err(GvsError::Input(_))));
        let mut no_target = window(4, 0..0);
        no_target.target_mask = vec![false; 4];
        assert!(omni_guided_eps(&d, &no_target, &GuidanceConfig::default(), &fresh(4)).is_err());
    }
}
