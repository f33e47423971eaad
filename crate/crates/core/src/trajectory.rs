//! Camera poses and the benchmark trajectory generators.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GvsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub yaw: f64,
    pub fov: f64,
    /// Cumulative planar path length from the first pose, in world units.
    pub arc: f64,
}

impl Pose {
    pub fn height(&self) -> f64 {
        self.position[2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    #[serde(rename = "panorama_1loop")]
    Panorama1Loop,
    #[serde(rename = "panorama_2loop")]
    Panorama2Loop,
    #[serde(rename = "circle_1loop")]
    Circle1Loop,
    #[serde(rename = "circle_2loop")]
    Circle2Loop,
    StraightLine,
    Stairs,
    StaircaseCircuit,
    ImpossibleStaircase,
    ForwardOrbitBackward,
}

impl Benchmark {
    /// The seven trajectories of the main comparison table.
    pub const SUITE: [Benchmark; 7] = [
        Benchmark::Panorama1Loop,
        Benchmark::Panorama2Loop,
        Benchmark::Circle1Loop,
        Benchmark::Circle2Loop,
        Benchmark::StraightLine,
        Benchmark::Stairs,
        Benchmark::StaircaseCircuit,
    ];

    pub const ALL: [Benchmark; 9] = [
        Benchmark::Panorama1Loop,
        Benchmark::Panorama2Loop,
        Benchmark::Circle1Loop,
        Benchmark::Circle2Loop,
        Benchmark::StraightLine,
        Benchmark::Stairs,
        Benchmark::StaircaseCircuit,
        Benchmark::ImpossibleStaircase,
        Benchmark::ForwardOrbitBackward,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Benchmark::Panorama1Loop => "panorama_1loop",
            Benchmark::Panorama2Loop => "panorama_2loop",
            Benchmark::Circle1Loop => "circle_1loop",
            Benchmark::Circle2Loop => "circle_2loop",
            Benchmark::StraightLine => "straight_line",
            Benchmark::Stairs => "stairs",
            Benchmark::StaircaseCircuit => "staircase_circuit",
            Benchmark::ImpossibleStaircase => "impossible_staircase",
            Benchmark::ForwardOrbitBackward => "forward_orbit_backward",
        }
    }

    /// Whether the path returns to where it started, so loop closing applies.
    pub fn closes_loop(&self) -> bool {
        !matches!(
            self,
            Benchmark::StraightLine | Benchmark::Stairs | Benchmark::ForwardOrbitBackward
        )
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = GvsError;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| GvsError::UnknownTrajectory(s.to_string()))
    }
}

/// How a trajectory's poses map onto a scene coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Rotation in place; the scene coordinate is the heading.
    Heading { loops: usize },
    /// Closed path; the scene coordinate is arc length modulo the perimeter.
    ClosedPath { perimeter: f64, loops: usize },
    /// Open path; the scene coordinate is arc length.
    OpenPath { length: f64 },
}

impl Layout {
    pub fn loops(&self) -> usize {
        match *self {
            Layout::Heading { loops } | Layout::ClosedPath { loops, .. } => loops,
            Layout::OpenPath { .. } => 0,
        }
    }
}

/// Replacement conditioning poses for the spatial window that denoises
/// `target_chunk` against `cond_chunk`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseOverride {
    pub target_chunk: usize,
    pub cond_chunk: usize,
    pub frames: Vec<usize>,
    pub poses: Vec<Pose>,
}

impl PoseOverride {
    pub fn pose_for(&self, frame: usize) -> Option<&Pose> {
        self.frames.iter().position(|&f| f == frame).map(|i| &self.poses[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    /// Path length between consecutive frames.
    pub step: f64,
    /// Horizontal field of view in radians.
    pub fov: f64,
    /// Height gained per frame on stair flights.
    pub rise: f64,
    /// Chunk size used to address the conditioning overrides.
    pub chunk_size: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            step: 1.0,
            fov: FRAC_PI_2,
            rise: 0.25,
            chunk_size: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub name: Benchmark,
    pub poses: Vec<Pose>,
    pub layout: Layout,
    #[serde(default)]
    pub overrides: Vec<PoseOverride>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose for a possibly virtual index; out-of-range indices take the
    /// nearest endpoint.
    pub fn pose_clamped(&self, index: i64) -> Pose {
        let last = self.poses.len() as i64 - 1;
        self.poses[index.clamp(0, last) as usize]
    }

    pub fn override_for(&self, target_chunk: usize, cond_chunk: usize) -> Option<&PoseOverride> {
        self.overrides
            .iter()
            .find(|o| o.target_chunk == target_chunk && o.cond_chunk == cond_chunk)
    }
}

fn pose(position: [f64; 3], yaw: f64, fov: f64, arc: f64) -> Pose {
    Pose {
        position,
        yaw,
        fov,
        arc,
    }
}

pub fn generate_trajectory(name: Benchmark, frames: usize, params: TrajectoryParams) -> Result<Trajectory> {
    let c = params.chunk_size;
    if c == 0 || frames == 0 || frames % c != 0 {
        return Err(GvsError::Config(format!(
            "{frames} frames is not a positive multiple of the chunk size {c}"
        )));
    }
    let n = frames as f64;
    let step = params.step;
    let fov = params.fov;
    let (poses, layout) = match name {
        Benchmark::Panorama1Loop | Benchmark::Panorama2Loop => {
            let loops = if name == Benchmark::Panorama1Loop { 1 } else { 2 };
            require_loops(name, frames, loops)?;
            let poses = (0..frames)
                .map(|t| pose([0.0; 3], TAU * loops as f64 * t as f64 / n, fov, 0.0))
                .collect();
            (poses, Layout::Heading { loops })
        }
        Benchmark::Circle1Loop | Benchmark::Circle2Loop => {
            let loops = if name == Benchmark::Circle1Loop { 1 } else { 2 };
            require_loops(name, frames, loops)?;
            let perimeter = n * step / loops as f64;
            let radius = perimeter / TAU;
            let poses = (0..frames)
                .map(|t| {
                    let phi = TAU * loops as f64 * t as f64 / n;
                    pose(
                        [radius * phi.cos(), radius * phi.sin(), 0.0],
                        phi + FRAC_PI_2,
                        fov,
                        step * t as f64,
                    )
                })
                .collect();
            (poses, Layout::ClosedPath { perimeter, loops })
        }
        Benchmark::StraightLine => {
            let poses = (0..frames)
                .map(|t| pose([step * t as f64, 0.0, 0.0], 0.0, fov, step * t as f64))
                .collect();
            (poses, Layout::OpenPath { length: step * (n - 1.0) })
        }
        Benchmark::Stairs => {
            // one full turn of a helix, climbing throughout
            let radius = n * step / TAU;
            let poses = (0..frames)
                .map(|t| {
                    let phi = TAU * t as f64 / n;
                    pose(
                        [radius * phi.cos(), radius * phi.sin(), params.rise * t as f64],
                        phi + FRAC_PI_2,
                        fov,
                        step * t as f64,
                    )
                })
                .collect();
            (poses, Layout::OpenPath { length: step * (n - 1.0) })
        }
        Benchmark::StaircaseCircuit | Benchmark::ImpossibleStaircase => {
            let flights = if name == Benchmark::StaircaseCircuit {
                [1.0, 1.0, -1.0, -1.0]
            } else {
                [1.0; 4]
            };
            let perimeter = n * step;
            let poses = (0..frames)
                .map(|t| circuit_pose(step * t as f64, perimeter, flights, params))
                .collect();
            (poses, Layout::ClosedPath { perimeter, loops: 1 })
        }
        Benchmark::ForwardOrbitBackward => {
            let poses = forward_orbit_backward(frames, params)?;
            let length = step * (n - 1.0);
            (poses, Layout::OpenPath { length })
        }
    };
    let mut traj = Trajectory {
        name,
        poses,
        layout,
        overrides: Vec::new(),
    };
    if name == Benchmark::ImpossibleStaircase {
        traj.overrides = seam_overrides(&traj, c);
    }
    Ok(traj)
}

fn require_loops(name: Benchmark, frames: usize, loops: usize) -> Result<()> {
    if frames % loops != 0 || frames / loops < 2 {
        return Err(GvsError::Config(format!(
            "{name} needs a frame count divisible by {loops}, got {frames}"
        )));
    }
    Ok(())
}

/// Rectangle with sides in ratio 3:2, entered halfway along the first side.
/// Each side is one stair flight going up (+1) or down (-1).
fn circuit_pose(arc: f64, perimeter: f64, flights: [f64; 4], params: TrajectoryParams) -> Pose {
    let sides = [0.3 * perimeter, 0.2 * perimeter, 0.3 * perimeter, 0.2 * perimeter];
    let corners = [[0.0, 0.0], [sides[0], 0.0], [sides[0], sides[1]], [0.0, sides[1]]];
    let start = 0.5 * sides[0];
    let along = (start + arc).rem_euclid(perimeter);
    let mut acc = 0.0;
    let mut side = 0;
    while side < 3 && along >= acc + sides[side] {
        acc += sides[side];
        side += 1;
    }
    let u = along - acc;
    let yaw = side as f64 * FRAC_PI_2;
    let (dx, dy) = (yaw.cos(), yaw.sin());
    let [cx, cy] = corners[side];
    let rise_per_unit = params.rise / params.step;
    // height at the entry point is zero; unwound from there along the path
    let height = {
        let mut h = 0.0;
        let mut remaining = arc;
        let mut pos = start;
        while remaining > 1e-12 {
            let pos_mod = pos.rem_euclid(perimeter);
            let mut a = 0.0;
            let mut s = 0;
            while s < 3 && pos_mod >= a + sides[s] - 1e-12 {
                a += sides[s];
                s += 1;
            }
            let left = (a + sides[s] - pos_mod).max(1e-12);
            let d = left.min(remaining);
            h += flights[s] * rise_per_unit * d;
            remaining -= d;
            pos += d;
        }
        h
    };
    pose([cx + dx * u, cy + dy * u, height], yaw, params.fov, arc)
}

/// Straight-line replacement for the two seam-crossing spatial windows: the
/// last chunk's poses and the first chunk's poses are respaced evenly on the
/// 3D segment joining them.
fn seam_overrides(traj: &Trajectory, chunk: usize) -> Vec<PoseOverride> {
    let n = traj.len();
    let last_chunk = n / chunk - 1;
    let Layout::ClosedPath { perimeter, .. } = traj.layout else {
        return Vec::new();
    };
    let frames: Vec<usize> = (n - chunk..n).chain(0..chunk).collect();
    let first = traj.poses[n - chunk];
    let end = traj.poses[chunk - 1];
    let span = frames.len() - 1;
    let end_arc = end.arc + perimeter;
    let poses: Vec<Pose> = (0..frames.len())
        .map(|i| {
            let s = i as f64 / span as f64;
            let mut p = traj.poses[frames[i]];
            for d in 0..3 {
                p.position[d] = first.position[d] + s * (end.position[d] - first.position[d]);
            }
            let arc = first.arc + s * (end_arc - first.arc);
            p.arc = if arc >= perimeter { arc - perimeter } else { arc };
            p
        })
        .collect();
    vec![
        PoseOverride {
            target_chunk: 0,
            cond_chunk: last_chunk,
            frames: frames.clone(),
            poses: poses.clone(),
        },
        PoseOverride {
            target_chunk: last_chunk,
            cond_chunk: 0,
            frames,
            poses,
        },
    ]
}

/// Move forward, orbit 180° around a point ahead, then come back along the
/// same line facing the other way.
fn forward_orbit_backward(frames: usize, params: TrajectoryParams) -> Result<Vec<Pose>> {
    if frames < 6 {
        return Err(GvsError::Config(format!(
            "forward_orbit_backward needs at least 6 frames, got {frames}"
        )));
    }
    let leg = frames / 3;
    let orbit = frames - 2 * leg;
    let step = params.step;
    let radius = orbit as f64 * step / PI;
    let mut out = Vec::with_capacity(frames);
    let mut arc = 0.0;
    for t in 0..leg {
        out.push(pose([step * t as f64, 0.0, 0.0], 0.0, params.fov, arc));
        arc += step;
    }
    let x0 = step * leg as f64;
    let centre = [x0, radius];
    for t in 0..orbit {
        let phi = -FRAC_PI_2 + PI * t as f64 / orbit as f64;
        out.push(pose(
            [centre[0] + radius * phi.cos(), centre[1] + radius * phi.sin(), 0.0],
            phi + FRAC_PI_2,
            params.fov,
            arc,
        ));
        arc += step;
    }
    for t in 0..leg {
        out.push(pose([x0 - step * t as f64, 2.0 * radius, 0.0], PI, params.fov, arc));
        arc += step;
    }
    Ok(out)
}
