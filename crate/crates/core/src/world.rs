//! Linear-Gaussian scenes with closed-form denoisers.
//!
//! A scene is a Gaussian field `s ~ N(0, Σ_s)` sampled on `M` grid points; a
//! camera at pose `p` sees `D` rays spaced one grid step apart starting at the
//! pose's scene coordinate, so a frame is `A(p)·s` with `A(p)` a sparse
//! linear-interpolation matrix. Everything a denoiser could know about a
//! window of noisy frames is then a Gaussian conditioning problem.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::denoiser::{Conditioning, Denoiser, WindowInput};
use crate::error::{GvsError, Result};
use crate::rng::{NoiseKey, NoiseStream, Purpose};
use crate::schedule::NoiseSchedule;
use crate::trajectory::{Layout, Pose, Trajectory};
use crate::video::Video;

const JITTERS: [f64; 3] = [1e-8, 1e-7, 1e-6];
const COORD_EPS: f64 = 1e-9;
const DEFAULT_LINE_GRID: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldVariant {
    Panorama,
    Line,
}

/// How a pose is mapped to a coordinate on the scene grid (in grid steps).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewMap {
    /// `yaw · M / 2π`
    Yaw,
    /// `arc / spacing`
    Arc { spacing: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    /// Grid size; derived from the trajectory when absent.
    pub grid: Option<usize>,
    pub rays: usize,
    /// Kernel length-scale in grid steps.
    pub length_scale: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            grid: None,
            rays: 8,
            length_scale: 6.0,
        }
    }
}

/// What the denoiser assumes about slots that carry no pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullModel {
    /// Every slot is an independent frame with the stationary marginal.
    Independent,
    /// Slots are consecutive frames of a camera moving at an unknown
    /// constant velocity, uniform over `-max_speed..=max_speed` grid steps
    /// per frame. The prediction is the exact mean under that finite
    /// Gaussian mixture, so motion is inferred from the noisy frames.
    Mixture { max_speed: u32 },
}

impl NullModel {
    fn speeds(self) -> Vec<i64> {
        match self {
            NullModel::Independent => vec![0],
            NullModel::Mixture { max_speed } => (-(max_speed as i64)..=max_speed as i64).collect(),
        }
    }

    fn tag(self) -> u64 {
        match self {
            NullModel::Independent => u64::MAX,
            NullModel::Mixture { max_speed } => u64::MAX - 1 - max_speed as u64,
        }
    }
}

impl Default for NullModel {
    fn default() -> Self {
        NullModel::Mixture { max_speed: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct RenderMap {
    grid: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl RenderMap {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.grid);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                m[(r, c)] += w;
            }
        }
        m
    }

    pub fn apply(&self, scene: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * scene[c]).sum())
            .collect()
    }
}

#[derive(Debug)]
pub struct World {
    variant: WorldVariant,
    grid: usize,
    rays: usize,
    length_scale: f64,
    map: ViewMap,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
}

impl World {
    pub fn new(variant: WorldVariant, grid: usize, rays: usize, length_scale: f64, map: ViewMap) -> Result<Self> {
        if grid < 2 || rays == 0 || rays > grid {
            return Err(GvsError::Config(format!("invalid world grid {grid} / rays {rays}")));
        }
        if !(length_scale > 0.0) {
            return Err(GvsError::Config(format!("length scale must be positive, got {length_scale}")));
        }
        let mut base = DMatrix::zeros(grid, grid);
        for i in 0..grid {
            for j in 0..grid {
                let mut d = i.abs_diff(j);
                if variant == WorldVariant::Panorama {
                    d = d.min(grid - d);
                }
                base[(i, j)] = kernel(variant, grid, length_scale, d as f64);
            }
        }
        let mut last_err = String::new();
        for jitter in JITTERS {
            let mut cov = base.clone();
            for i in 0..grid {
                cov[(i, i)] += jitter;
            }
            match cov.clone().cholesky() {
                Some(c) => {
                    return Ok(Self {
                        variant,
                        grid,
                        rays,
                        length_scale,
                        map,
                        chol: c.l(),
                        cov,
                        jitter,
                    })
                }
                None => last_err = format!("scene covariance not positive definite at jitter {jitter}"),
            }
        }
        Err(GvsError::Factorization(last_err))
    }

    /// World whose grid is aligned with `traj` so consecutive frames share
    /// exact grid samples.
    pub fn for_trajectory(spec: &WorldSpec, traj: &Trajectory) -> Result<Self> {
        let frames = traj.len();
        match traj.layout {
            Layout::Heading { loops } | Layout::ClosedPath { loops, .. } => {
                let grid = spec.grid.unwrap_or(frames / loops.max(1));
                let map = match traj.layout {
                    Layout::ClosedPath { perimeter, .. } => ViewMap::Arc {
                        spacing: perimeter / grid as f64,
                    },
                    _ => ViewMap::Yaw,
                };
                World::new(WorldVariant::Panorama, grid, spec.rays, spec.length_scale, map)
            }
            Layout::OpenPath { length } => {
                let spacing = if frames > 1 { length / (frames - 1) as f64 } else { 1.0 };
                let needed = frames + spec.rays;
                let grid = spec.grid.unwrap_or(DEFAULT_LINE_GRID.max(needed));
                let world = World::new(
                    WorldVariant::Line,
                    grid,
                    spec.rays,
                    spec.length_scale,
                    ViewMap::Arc { spacing },
                )?;
                let far = traj
                    .poses
                    .iter()
                    .map(|p| world.coordinate(p))
                    .fold(f64::MIN, f64::max);
                if far + (spec.rays - 1) as f64 > (grid - 1) as f64 + COORD_EPS {
                    return Err(GvsError::Config(format!(
                        "trajectory reaches grid coordinate {far} but the line world has {grid} points"
                    )));
                }
                Ok(world)
            }
        }
    }

    pub fn variant(&self) -> WorldVariant {
        self.variant
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn rays(&self) -> usize {
        self.rays
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn scene_covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Footprint width in radians for the panorama variant.
    pub fn fov(&self) -> f64 {
        TAU * self.rays as f64 / self.grid as f64
    }

    fn periodic(&self) -> bool {
        self.variant == WorldVariant::Panorama
    }

    pub fn kernel(&self, delta: f64) -> f64 {
        kernel(self.variant, self.grid, self.length_scale, delta)
    }

    /// Scene coordinate of the first ray, in grid steps.
    pub fn coordinate(&self, pose: &Pose) -> f64 {
        let raw = match self.map {
            ViewMap::Yaw => pose.yaw * self.grid as f64 / TAU,
            ViewMap::Arc { spacing } => pose.arc / spacing,
        };
        let snapped = if (raw - raw.round()).abs() < COORD_EPS { raw.round() } else { raw };
        if self.periodic() {
            snapped.rem_euclid(self.grid as f64)
        } else {
            snapped
        }
    }

    pub fn ray_coords(&self, pose: &Pose) -> Vec<f64> {
        let c = self.coordinate(pose);
        (0..self.rays)
            .map(|r| {
                let v = c + r as f64;
                if self.periodic() {
                    v.rem_euclid(self.grid as f64)
                } else {
                    v
                }
            })
            .collect()
    }

    fn interp(&self, coord: f64) -> Vec<(usize, f64)> {
        let m = self.grid;
        let lo = coord.floor();
        let frac = coord - lo;
        let wrap = |i: i64| -> usize {
            if self.periodic() {
                i.rem_euclid(m as i64) as usize
            } else {
                i.clamp(0, m as i64 - 1) as usize
            }
        };
        let i0 = wrap(lo as i64);
        if frac < COORD_EPS {
            vec![(i0, 1.0)]
        } else {
            vec![(i0, 1.0 - frac), (wrap(lo as i64 + 1), frac)]
        }
    }

    pub fn render_map(&self, pose: &Pose) -> RenderMap {
        RenderMap {
            grid: self.grid,
            rows: self.ray_coords(pose).into_iter().map(|c| self.interp(c)).collect(),
        }
    }

    /// Fraction of `pi`'s rays that land inside `pj`'s footprint.
    pub fn fov_overlap(&self, pi: &Pose, pj: &Pose) -> f64 {
        let start = self.coordinate(pj);
        let width = self.rays as f64;
        let inside = self
            .ray_coords(pi)
            .into_iter()
            .filter(|&c| {
                let mut d = c - start;
                if self.periodic() {
                    d = d.rem_euclid(self.grid as f64);
                    if d > self.grid as f64 - COORD_EPS {
                        d = 0.0;
                    }
                }
                d > -COORD_EPS && d < width - COORD_EPS
            })
            .count();
        inside as f64 / self.rays as f64
    }

    /// Ray index pairs `(ri, rj)` that sample exactly the same grid point.
    pub fn shared_samples(&self, pi: &Pose, pj: &Pose) -> Vec<(usize, usize)> {
        let a = self.ray_coords(pi);
        let b = self.ray_coords(pj);
        let on_grid = |c: f64| (c - c.round()).abs() < COORD_EPS;
        let mut out = Vec::new();
        for (i, &ca) in a.iter().enumerate() {
            if !on_grid(ca) {
                continue;
            }
            for (j, &cb) in b.iter().enumerate() {
                if on_grid(cb) && self.same_point(ca, cb) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn same_point(&self, a: f64, b: f64) -> bool {
        let mut d = (a - b).abs();
        if self.periodic() {
            d = d.min(self.grid as f64 - d);
        }
        d < COORD_EPS
    }

    pub fn sample_scene(&self, seed: u64) -> Vec<f64> {
        let z = NoiseStream::new(seed).normals(NoiseKey::new(Purpose::Scene, 0, 0), self.grid);
        (&self.chol * DVector::from_vec(z)).as_slice().to_vec()
    }

    pub fn render(&self, scene: &[f64], traj: &Trajectory) -> Video {
        Video::from_frames(traj.poses.iter().map(|p| self.render_map(p).apply(scene)).collect())
    }

    pub fn ground_truth_video(&self, traj: &Trajectory, seed: u64) -> Video {
        self.render(&self.sample_scene(seed), traj)
    }

    /// Prior covariance of the stacked frames seen from `poses`.
    pub fn video_covariance(&self, poses: &[Pose]) -> DMatrix<f64> {
        let rows: Vec<Vec<(usize, f64)>> = poses
            .iter()
            .flat_map(|p| self.render_map(p).rows)
            .collect();
        self.stacked_covariance(&rows)
    }

    fn stacked_covariance(&self, rows: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
        let n = rows.len();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut v = 0.0;
                for &(a, wa) in &rows[i] {
                    for &(b, wb) in &rows[j] {
                        v += wa * wb * self.cov[(a, b)];
                    }
                }
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Prior over null slots at window positions `slots` for a camera moving
    /// `speed` grid steps per frame. Under [`NullModel::Independent`] only
    /// the diagonal blocks are kept.
    pub fn null_covariance(&self, model: NullModel, speed: i64, slots: &[usize]) -> DMatrix<f64> {
        let d = self.rays;
        let n = slots.len() * d;
        let mut c = DMatrix::zeros(n, n);
        for (a, &sa) in slots.iter().enumerate() {
            for (b, &sb) in slots.iter().enumerate().skip(a) {
                if model == NullModel::Independent && a != b {
                    continue;
                }
                let lag = sb as i64 - sa as i64;
                for r in 0..d {
                    for q in 0..d {
                        let v = self.grid_kernel(lag * speed + q as i64 - r as i64);
                        c[(a * d + r, b * d + q)] = v;
                        c[(b * d + q, a * d + r)] = v;
                    }
                }
            }
        }
        c
    }

    /// Jittered scene covariance between grid points `delta` apart.
    fn grid_kernel(&self, delta: i64) -> f64 {
        let mut d = delta.unsigned_abs() as usize;
        if self.periodic() {
            d %= self.grid;
            d = d.min(self.grid - d);
        }
        let jitter = if d == 0 { self.jitter } else { 0.0 };
        kernel(self.variant, self.grid, self.length_scale, d as f64) + jitter
    }

    /// Per-frame prior covariance for a grid-aligned pose; the same for every
    /// aligned pose.
    pub fn stationary_frame_covariance(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<(usize, f64)>> = (0..self.rays).map(|r| vec![(r, 1.0)]).collect();
        self.stacked_covariance(&rows)
    }

    /// Posterior mean gain `G` with `x̂ = G·y` for a linear-Gaussian model,
    /// plus what is needed to score `y` under that model.
    fn gain(prior: &DMatrix<f64>, alphas: &[f64], dim: usize, with_evidence: bool) -> Result<Gain> {
        let n = prior.nrows();
        let scale: Vec<f64> = alphas.iter().flat_map(|a| std::iter::repeat(a.sqrt()).take(dim)).collect();
        let mut s = prior.clone();
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] *= scale[i] * scale[j];
            }
        }
        for (i, a) in alphas.iter().flat_map(|a| std::iter::repeat(*a).take(dim)).enumerate() {
            s[(i, i)] += 1.0 - a;
        }
        let chol = jittered_cholesky(s)?;
        // G = C·D·S⁻¹, S symmetric, so Gᵀ = S⁻¹·D·C
        let mut dc = prior.clone();
        for i in 0..n {
            for j in 0..n {
                dc[(i, j)] *= scale[i];
            }
        }
        let gain = chol.solve(&dc).transpose();
        let (precision, logdet) = if with_evidence {
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (chol.inverse(), logdet)
        } else {
            (DMatrix::zeros(0, 0), 0.0)
        };
        Ok(Gain { gain, precision, logdet })
    }

    /// Exact posterior mean and covariance of the window's clean frames,
    /// treating every slot as pose-conditioned.
    pub fn posterior(&self, schedule: &NoiseSchedule, input: &WindowInput) -> Result<(Vec<Vec<f64>>, DMatrix<f64>)> {
        let poses = require_poses(input)?;
        let alphas: Vec<f64> = input.noise_levels.iter().map(|&k| schedule.alpha_bar(k)).collect();
        let prior = self.video_covariance(&poses);
        let g = Self::gain(&prior, &alphas, self.rays, false)?.gain;
        let y = flatten(&input.values);
        let mean = &g * &y;
        let n = prior.nrows();
        let mut dmat = DMatrix::zeros(n, n);
        for i in 0..n {
            dmat[(i, i)] = alphas[i / self.rays].sqrt();
        }
        let cov = &prior - &g * &dmat * &prior;
        Ok((unflatten(mean.as_slice(), self.rays), cov))
    }

    /// Exact noise prediction with all slots coupled through the scene.
    pub fn oracle_eps(&self, schedule: &NoiseSchedule, input: &WindowInput) -> Result<Vec<Vec<f64>>> {
        require_poses(input)?;
        self.posterior_eps(schedule, input, NullModel::Independent, None)
    }

    /// Noise prediction that ignores conditioning: every slot is denoised
    /// independently against the stationary single-frame prior.
    pub fn null_oracle_eps(&self, schedule: &NoiseSchedule, input: &WindowInput) -> Result<Vec<Vec<f64>>> {
        let mut nulled = input.clone();
        nulled.conditioning.iter_mut().for_each(|c| *c = Conditioning::Null);
        self.posterior_eps(schedule, &nulled, NullModel::Independent, None)
    }

    /// Like [`World::null_oracle_eps`] under an arbitrary null model.
    pub fn null_model_eps(&self, schedule: &NoiseSchedule, input: &WindowInput, model: NullModel) -> Result<Vec<Vec<f64>>> {
        let mut nulled = input.clone();
        nulled.conditioning.iter_mut().for_each(|c| *c = Conditioning::Null);
        self.posterior_eps(schedule, &nulled, model, None)
    }

    /// Pose-conditioned slots are coupled; null slots are independent.
    fn posterior_eps(
        &self,
        schedule: &NoiseSchedule,
        input: &WindowInput,
        null: NullModel,
        cache: Option<&GainCache>,
    ) -> Result<Vec<Vec<f64>>> {
        let d = self.rays;
        let pose_slots: Vec<usize> = (0..input.len())
            .filter(|&i| matches!(input.conditioning[i], Conditioning::Pose(_)))
            .collect();
        let mut xhat: Vec<Vec<f64>> = vec![Vec::new(); input.len()];
        if !pose_slots.is_empty() {
            let poses: Vec<Pose> = pose_slots
                .iter()
                .map(|&i| match input.conditioning[i] {
                    Conditioning::Pose(p) => p,
                    Conditioning::Null => unreachable!(),
                })
                .collect();
            let levels: Vec<usize> = pose_slots.iter().map(|&i| input.noise_levels[i]).collect();
            let (key, rows) = self.canonical_rows(&poses, &levels);
            let compute = || -> Result<Gain> {
                let alphas: Vec<f64> = levels.iter().map(|&k| schedule.alpha_bar(k)).collect();
                Self::gain(&self.stacked_covariance(&rows), &alphas, d, false)
            };
            let g = match cache {
                Some(c) => c.get_or_insert(key, compute)?,
                None => Arc::new(compute()?),
            };
            let y: Vec<f64> = pose_slots.iter().flat_map(|&i| input.values[i].iter().copied()).collect();
            let m = &g.gain * DVector::from_vec(y);
            for (j, &i) in pose_slots.iter().enumerate() {
                xhat[i] = m.as_slice()[j * d..(j + 1) * d].to_vec();
            }
        }
        let null_slots: Vec<usize> = (0..input.len())
            .filter(|&i| matches!(input.conditioning[i], Conditioning::Null))
            .collect();
        let groups: Vec<Vec<usize>> = match null {
            NullModel::Independent => null_slots.iter().map(|&i| vec![i]).collect(),
            // pure-noise slots carry no information and stay out of the coupled group
            NullModel::Mixture { .. } => {
                let (noise, informative): (Vec<usize>, Vec<usize>) = null_slots
                    .iter()
                    .partition(|&&i| input.noise_levels[i] == schedule.max_level());
                let mut groups: Vec<Vec<usize>> = noise.into_iter().map(|i| vec![i]).collect();
                if !informative.is_empty() {
                    groups.push(informative);
                }
                groups
            }
        };
        for group in groups {
            let first = group[0];
            let rel: Vec<usize> = group.iter().map(|&i| i - first).collect();
            let levels: Vec<usize> = group.iter().map(|&i| input.noise_levels[i]).collect();
            // a single frame looks the same at every speed
            let speeds = if group.len() == 1 { vec![0] } else { null.speeds() };
            let y = DVector::from_iterator(group.len() * d, group.iter().flat_map(|&i| input.values[i].iter().copied()));
            let mut means = Vec::with_capacity(speeds.len());
            let mut log_w = Vec::with_capacity(speeds.len());
            for &speed in &speeds {
                let scored = speeds.len() > 1;
                let compute = || -> Result<Gain> {
                    let alphas: Vec<f64> = levels.iter().map(|&k| schedule.alpha_bar(k)).collect();
                    Self::gain(&self.null_covariance(null, speed, &rel), &alphas, d, scored)
                };
                let g = match cache {
                    Some(c) => {
                        let mut key = vec![null.tag(), speed as u64];
                        key.extend(rel.iter().zip(&levels).flat_map(|(&r, &k)| [r as u64, k as u64]));
                        c.get_or_insert(key, compute)?
                    }
                    None => Arc::new(compute()?),
                };
                if scored {
                    log_w.push(-0.5 * (y.dot(&(&g.precision * &y)) + g.logdet));
                }
                means.push(&g.gain * &y);
            }
            let m = if means.len() == 1 {
                means.pop().expect("one component")
            } else {
                let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = w.iter().sum();
                means
                    .iter()
                    .zip(&w)
                    .fold(DVector::zeros(y.len()), |acc, (m, wi)| acc + m * (wi / total))
            };
            for (j, &i) in group.iter().enumerate() {
                xhat[i] = m.as_slice()[j * d..(j + 1) * d].to_vec();
            }
        }
        Ok((0..input.len())
            .map(|i| {
                let a = schedule.alpha_bar(input.noise_levels[i]);
                let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
                input.values[i]
                    .iter()
                    .zip(&xhat[i])
                    .map(|(y, x)| (y - sa * x) / sb)
                    .collect()
            })
            .collect())
    }

    /// Gains depend on poses only through coordinates relative to a base
    /// grid cell. Rows are built from those relative coordinates so that equal
    /// keys always produce bit-identical gains, whichever window computed them.
    fn canonical_rows(&self, poses: &[Pose], levels: &[usize]) -> (Vec<u64>, Vec<Vec<(usize, f64)>>) {
        let coords: Vec<f64> = poses.iter().map(|p| self.coordinate(p)).collect();
        let base = if self.periodic() {
            coords[0].floor()
        } else {
            coords.iter().fold(f64::MAX, |m, &c| m.min(c)).floor()
        };
        let mut key = Vec::with_capacity(2 * poses.len());
        let mut rows = Vec::with_capacity(poses.len() * self.rays);
        for (&c, &k) in coords.iter().zip(levels) {
            let mut r = c - base;
            if self.periodic() {
                r = r.rem_euclid(self.grid as f64);
            }
            key.push(r.to_bits());
            key.push(k as u64);
            for q in 0..self.rays {
                let mut v = r + q as f64;
                if self.periodic() {
                    v = v.rem_euclid(self.grid as f64);
                }
                rows.push(self.interp(v));
            }
        }
        (key, rows)
    }
}

fn kernel(variant: WorldVariant, grid: usize, ell: f64, delta: f64) -> f64 {
    let dist = match variant {
        WorldVariant::Line => delta,
        // chord length on a circle of circumference `grid`
        WorldVariant::Panorama => grid as f64 / PI * (PI * delta / grid as f64).sin(),
    };
    (-dist * dist / (2.0 * ell * ell)).exp()
}

fn jittered_cholesky(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    for jitter in JITTERS {
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = j.cholesky() {
            return Ok(c);
        }
    }
    Err(GvsError::Factorization("window system is not positive definite".into()))
}

fn require_poses(input: &WindowInput) -> Result<Vec<Pose>> {
    input
        .conditioning
        .iter()
        .map(|c| match c {
            Conditioning::Pose(p) => Ok(*p),
            Conditioning::Null => Err(GvsError::Input("conditional oracle needs a pose on every slot".into())),
        })
        .collect()
}

fn flatten(values: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(values.iter().map(Vec::len).sum(), values.iter().flatten().copied())
}

fn unflatten(v: &[f64], d: usize) -> Vec<Vec<f64>> {
    v.chunks(d).map(<[f64]>::to_vec).collect()
}

const CACHE_LIMIT: usize = 8192;

#[derive(Debug)]
struct Gain {
    gain: DMatrix<f64>,
    /// `S⁻¹` and `log|S|` of the observation covariance; empty unless the
    /// model is scored against others.
    precision: DMatrix<f64>,
    logdet: f64,
}

#[derive(Debug, Default)]
struct GainCache {
    map: Mutex<HashMap<Vec<u64>, Arc<Gain>>>,
}

impl GainCache {
    fn get_or_insert(&self, key: Vec<u64>, compute: impl FnOnce() -> Result<Gain>) -> Result<Arc<Gain>> {
        if let Some(g) = self.map.lock().expect("gain cache poisoned").get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(compute()?);
        let mut map = self.map.lock().expect("gain cache poisoned");
        if map.len() >= CACHE_LIMIT {
            map.clear();
        }
        map.insert(key, Arc::clone(&g));
        Ok(g)
    }
}

/// The exact denoiser of a [`World`], usable wherever a learned
/// Diffusion-Forcing backbone would be.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    world: Arc<World>,
    schedule: Arc<NoiseSchedule>,
    context: usize,
    null: NullModel,
    cache: Arc<GainCache>,
}

impl OracleDenoiser {
    pub fn new(world: Arc<World>, schedule: Arc<NoiseSchedule>, context: usize) -> Self {
        Self {
            world,
            schedule,
            context,
            null: NullModel::default(),
            cache: Arc::new(GainCache::default()),
        }
    }

    pub fn with_null_model(mut self, null: NullModel) -> Self {
        self.null = null;
        self.cache = Arc::new(GainCache::default());
        self
    }

    pub fn null_model(&self) -> NullModel {
        self.null
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl Denoiser for OracleDenoiser {
    fn context_len(&self) -> usize {
        self.context
    }

    fn frame_dim(&self) -> usize {
        self.world.rays
    }

    fn max_level(&self) -> usize {
        self.schedule.max_level()
    }

    fn predict_eps(&self, input: &WindowInput) -> Result<Vec<Vec<f64>>> {
        self.world.posterior_eps(&self.schedule, input, self.null, Some(&self.cache))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleKind;
    use crate::trajectory::{generate_trajectory, Benchmark, TrajectoryParams};

    fn yaw_pose(world: &World, steps: f64) -> Pose {
        Pose {
            position: [0.0; 3],
            yaw: steps * TAU / world.grid() as f64,
            fov: world.fov(),
            arc: 0.0,
        }
    }

    fn panorama() -> World {
        World::new(WorldVariant::Panorama, 96, 8, 6.0, ViewMap::Yaw).unwrap()
    }

    #[test]
    fn render_map_equivariance() {
        let w = panorama();
        let a = w.render_map(&yaw_pose(&w, 95.0)).dense();
        assert_eq!(a, w.render_map(&yaw_pose(&w, 95.0)).dense());
        let b = w.render_map(&yaw_pose(&w, 0.0)).dense();
        for r in 0..8 {
            for c in 0..96 {
                assert_eq!(b[(r, c)], a[(r, (c + 95) % 96)]);
            }
        }
    }

    #[test]
    fn render_rows_are_interpolation_weights() {
        let w = panorama();
        for steps in [0.0, 0.3, 17.75, 95.5] {
            let m = w.render_map(&yaw_pose(&w, steps));
            for row in m.rows() {
                assert!(row.len() <= 2);
                let s: f64 = row.iter().map(|&(_, v)| v).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_cases() {
        let w = panorama();
        let p = yaw_pose(&w, 10.0);
        assert_eq!(w.fov_overlap(&p, &p), 1.0);
        assert_eq!(w.fov_overlap(&p, &yaw_pose(&w, 18.0)), 0.0);
        assert_eq!(w.fov_overlap(&p, &yaw_pose(&w, 30.0)), 0.0);
        assert_eq!(w.fov_overlap(&p, &yaw_pose(&w, 14.0)), 0.5);
        assert_eq!(w.fov_overlap(&p, &yaw_pose(&w, 6.0)), 0.5);
        // across the seam
        assert_eq!(w.fov_overlap(&yaw_pose(&w, 94.0), &yaw_pose(&w, 0.0)), 0.75);
    }

    #[test]
    fn half_fov_overlap_by_ray_counting() {
        // brute force: fine ray sampling of the footprints
        let w = panorama();
        let p = yaw_pose(&w, 3.0);
        let q = yaw_pose(&w, 7.0);
        let fine = 10_000;
        let (a, b) = (w.coordinate(&p), w.coordinate(&q));
        let inside = (0..fine)
            .filter(|i| {
                let x = a + 8.0 * (*i as f64 + 0.5) / fine as f64;
                x >= b && x < b + 8.0
            })
            .count();
        let brute = inside as f64 / fine as f64;
        assert!((w.fov_overlap(&p, &q) - brute).abs() <= 1.0 / 8.0);
        assert!((brute - 0.5).abs() < 1e-3);
    }

    #[test]
    fn long_length_scale_gives_flat_scene() {
        let w = World::new(WorldVariant::Line, 32, 4, 1e4, ViewMap::Arc { spacing: 1.0 }).unwrap();
        let s = w.sample_scene(5);
        let spread = s.iter().fold(f64::MIN, |m, &v| m.max(v)) - s.iter().fold(f64::MAX, |m, &v| m.min(v));
        assert!(spread < 1e-2, "{spread}");
    }

    #[test]
    fn scene_covariance_monte_carlo() {
        let w = World::new(WorldVariant::Panorama, 12, 4, 2.0, ViewMap::Yaw).unwrap();
        let n = 10_000;
        let mut acc = DMatrix::<f64>::zeros(12, 12);
        for seed in 0..n {
            let s = DVector::from_vec(w.sample_scene(seed));
            acc += &s * s.transpose();
        }
        acc /= n as f64;
        let err = (acc - w.scene_covariance()).abs().max();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn identical_footprints_identical_frames() {
        let traj = generate_trajectory(Benchmark::Panorama2Loop, 48, TrajectoryParams::default()).unwrap();
        let w = World::for_trajectory(&WorldSpec::default(), &traj).unwrap();
        let v = w.ground_truth_video(&traj, 3);
        assert_eq!(v.frame(2), v.frame(26));
    }

    #[test]
    fn line_world_rejects_overrun() {
        let traj = generate_trajectory(Benchmark::StraightLine, 40, TrajectoryParams::default()).unwrap();
        let spec = WorldSpec {
            grid: Some(30),
            ..WorldSpec::default()
        };
        assert!(World::for_trajectory(&spec, &traj).is_err());
    }

    fn near_clean_input(w: &World, poses: &[Pose], sched: &NoiseSchedule, eps: &[Vec<f64>]) -> WindowInput {
        let scene = w.sample_scene(1);
        let values = poses
            .iter()
            .zip(eps)
            .map(|(p, e)| sched.forward_noise(&w.render_map(p).apply(&scene), 0, e).unwrap())
            .collect();
        WindowInput {
            values,
            noise_levels: vec![0; poses.len()],
            conditioning: poses.iter().map(|p| Conditioning::Pose(*p)).collect(),
            target_mask: vec![true; poses.len()],
        }
    }

    #[test]
    fn single_frame_closed_form() {
        // one slot, one ray, one grid point with unit prior variance:
        // x̂ = sqrt(ā)·y / (ā + 1 − ā) = sqrt(ā)·y, eps = sqrt(1 − ā)·y
        let w = World::new(WorldVariant::Line, 4, 1, 1.0, ViewMap::Arc { spacing: 1.0 }).unwrap();
        let sched = NoiseSchedule::from_alpha_bar(vec![0.99, 0.64, 0.2]).unwrap();
        let p = Pose {
            position: [0.0; 3],
            yaw: 0.0,
            fov: 1.0,
            arc: 2.0,
        };
        let y = 0.7;
        let input = WindowInput {
            values: vec![vec![y]],
            noise_levels: vec![1],
            conditioning: vec![Conditioning::Pose(p)],
            target_mask: vec![true],
        };
        let c = 1.0 + w.jitter();
        let a: f64 = 0.64;
        let xhat = a.sqrt() * c * y / (a * c + 1.0 - a);
        let eps = (y - a.sqrt() * xhat) / (1.0 - a).sqrt();
        let got = w.oracle_eps(&sched, &input).unwrap();
        assert!((got[0][0] - eps).abs() < 1e-12);
        assert!((eps - (1.0 - a).sqrt() * y).abs() < 1e-6);
    }

    #[test]
    fn near_noiseless_recovers_clean_frame() {
        // the smooth prior leaves most of ε unidentifiable at ā → 1, but the
        // implied clean prediction must land on the rendered frame
        let traj = generate_trajectory(Benchmark::Panorama1Loop, 24, TrajectoryParams::default()).unwrap();
        let w = World::for_trajectory(&WorldSpec::default(), &traj).unwrap();
        let sched = NoiseSchedule::build(1000, ScheduleKind::Cosine, 50).unwrap();
        let stream = NoiseStream::new(4);
        let poses = &traj.poses[0..3];
        let eps: Vec<Vec<f64>> = (0..3).map(|i| stream.normals(NoiseKey::new(Purpose::Init, 0, i), 8)).collect();
        let input = near_clean_input(&w, poses, &sched, &eps);
        let got = w.oracle_eps(&sched, &input).unwrap();
        let scene = w.sample_scene(1);
        let a = sched.alpha_bar(0);
        for (s, p) in poses.iter().enumerate() {
            let truth = w.render_map(p).apply(&scene);
            let xhat = crate::schedule::predict_clean(a, &input.values[s], &got[s]).unwrap();
            for (x, t) in xhat.iter().zip(&truth) {
                assert!((x - t).abs() < 1e-2, "{x} vs {t}");
            }
            for (g, e) in got[s].iter().zip(&eps[s]) {
                assert!(g.abs() <= e.abs() + 1.0, "{g} vs {e}");
            }
        }
    }

    #[test]
    fn null_matches_conditional_on_single_slot() {
        let traj = generate_trajectory(Benchmark::Panorama1Loop, 24, TrajectoryParams::default()).unwrap();
        let w = World::for_trajectory(&WorldSpec::default(), &traj).unwrap();
        let sched = NoiseSchedule::build(100, ScheduleKind::Cosine, 10).unwrap();
        let values = vec![NoiseStream::new(2).normals(NoiseKey::new(Purpose::Init, 0, 0), 8)];
        let input = WindowInput {
            values,
            noise_levels: vec![40],
            conditioning: vec![Conditioning::Pose(traj.poses[5])],
            target_mask: vec![true],
        };
        let a = w.oracle_eps(&sched, &input).unwrap();
        let b = w.null_oracle_eps(&sched, &input).unwrap();
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn far_apart_slots_decouple() {
        let w = World::new(WorldVariant::Line, 256, 8, 2.0, ViewMap::Arc { spacing: 1.0 }).unwrap();
        let sched = NoiseSchedule::build(100, ScheduleKind::Cosine, 10).unwrap();
        let stream = NoiseStream::new(9);
        let poses: Vec<Pose> = [0.0, 80.0, 160.0]
            .iter()
            .map(|&arc| Pose {
                position: [arc, 0.0, 0.0],
                yaw: 0.0,
                fov: 1.0,
                arc,
            })
            .collect();
        let input = WindowInput {
            values: (0..3).map(|i| stream.normals(NoiseKey::new(Purpose::Init, 0, i), 8)).collect(),
            noise_levels: vec![30, 30, 30],
            conditioning: poses.iter().map(|p| Conditioning::Pose(*p)).collect(),
            target_mask: vec![true; 3],
        };
        let a = w.oracle_eps(&sched, &input).unwrap();
        let b = w.null_oracle_eps(&sched, &input).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn null_oracle_is_per_slot() {
        let w = panorama();
        let sched = NoiseSchedule::build(100, ScheduleKind::Cosine, 10).unwrap();
        let stream = NoiseStream::new(10);
        let values: Vec<Vec<f64>> = (0..3).map(|i| stream.normals(NoiseKey::new(Purpose::Init, 0, i), 8)).collect();
        let mk = |vals: Vec<Vec<f64>>, levels: Vec<usize>| WindowInput {
            conditioning: vec![Conditioning::Null; vals.len()],
            target_mask: vec![true; vals.len()],
            values: vals,
            noise_levels: levels,
        };
        let a = w.null_oracle_eps(&sched, &mk(values.clone(), vec![10, 50, 90])).unwrap();
        let rev: Vec<Vec<f64>> = values.iter().rev().cloned().collect();
        let b = w.null_oracle_eps(&sched, &mk(rev, vec![90, 50, 10])).unwrap();
        assert_eq!(a[0], b[2]);
        assert_eq!(a[1], b[1]);
        assert_eq!(a[2], b[0]);
    }

    #[test]
    fn cached_and_uncached_agree() {
        let traj = generate_trajectory(Benchmark::Panorama1Loop, 24, TrajectoryParams::default()).unwrap();
        let w = Arc::new(World::for_trajectory(&WorldSpec::default(), &traj).unwrap());
        let sched = Arc::new(NoiseSchedule::build(100, ScheduleKind::Cosine, 10).unwrap());
        let d = OracleDenoiser::new(Arc::clone(&w), Arc::clone(&sched), 8);
        let stream = NoiseStream::new(11);
        for shift in [0usize, 3, 20] {
            let input = WindowInput {
                values: (0..4).map(|i| stream.normals(NoiseKey::new(Purpose::Init, shift, i), 8)).collect(),
                noise_levels: vec![60, 60, 60, 99],
                conditioning: (0..4).map(|i| Conditioning::Pose(traj.poses[(shift + i) % 24])).collect(),
                target_mask: vec![true; 4],
            };
            let a = d.predict_eps(&input).unwrap();
            let a2 = d.predict_eps(&input).unwrap();
            let b = w.oracle_eps(&sched, &input).unwrap();
            assert_eq!(a, a2);
            for (ra, rb) in a.iter().zip(&b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }
}
