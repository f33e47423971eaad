//! Chunking and context-window schedules.
//!
//! The target sequence is cut into disjoint chunks. Every chunk is the target
//! of one temporal window (flanked by its temporal neighbours) and, when loop
//! closing is on, of spatial windows that flank it with frames from a
//! temporally distant chunk looking at the same part of the scene.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{GvsError, Result};
use crate::trajectory::{Pose, Trajectory};
use crate::world::World;

const OVERLAP_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub frames: usize,
    pub chunk_size: usize,
}

pub fn partition(frames: usize, chunk_size: usize) -> Result<ChunkPlan> {
    if chunk_size == 0 || frames == 0 || frames % chunk_size != 0 {
        return Err(GvsError::Config(format!(
            "{frames} frames cannot be split into chunks of {chunk_size}"
        )));
    }
    Ok(ChunkPlan { frames, chunk_size })
}

impl ChunkPlan {
    pub fn chunks(&self) -> usize {
        self.frames / self.chunk_size
    }

    pub fn range(&self, t: usize) -> Range<usize> {
        t * self.chunk_size..(t + 1) * self.chunk_size
    }

    pub fn chunk_of(&self, frame: usize) -> usize {
        frame / self.chunk_size
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Temporal,
    Spatial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub id: usize,
    pub kind: WindowKind,
    pub target_chunk: usize,
    /// The chunk supplying the conditioning slots of a spatial window.
    pub partner: Option<usize>,
    /// Global frame indices; entries outside `0..frames` are padding.
    pub slots: Vec<i64>,
    pub target_mask: Vec<bool>,
    pub poses: Vec<Pose>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_padding(&self, slot: usize, frames: usize) -> bool {
        let s = self.slots[slot];
        s < 0 || s >= frames as i64
    }

    pub fn target_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .zip(&self.target_mask)
            .filter(|(_, &t)| t)
            .map(|(&s, _)| s as usize)
    }
}

fn check_capacity(chunk: usize, overlap: usize, context: usize) -> Result<()> {
    let slots = chunk + 2 * overlap;
    if slots > context {
        return Err(GvsError::Capacity { slots, context });
    }
    Ok(())
}

/// One window per chunk covering `[t·c − overlap, (t+1)·c + overlap)`.
pub fn temporal_windows(plan: &ChunkPlan, overlap: usize, traj: &Trajectory, context: usize) -> Result<Vec<Window>> {
    check_capacity(plan.chunk_size, overlap, context)?;
    if traj.len() != plan.frames {
        return Err(GvsError::Schedule(format!(
            "trajectory has {} poses but the plan covers {} frames",
            traj.len(),
            plan.frames
        )));
    }
    let (c, o) = (plan.chunk_size as i64, overlap as i64);
    Ok((0..plan.chunks())
        .map(|t| {
            let start = t as i64 * c - o;
            let slots: Vec<i64> = (start..start + c + 2 * o).collect();
            let target_mask = slots.iter().map(|&s| s / c == t as i64 && s >= 0).collect();
            let poses = slots.iter().map(|&s| traj.pose_clamped(s)).collect();
            Window {
                id: t,
                kind: WindowKind::Temporal,
                target_chunk: t,
                partner: None,
                slots,
                target_mask,
                poses,
            }
        })
        .collect())
}

pub fn fov_overlap(world: &World, pi: &Pose, pj: &Pose) -> f64 {
    world.fov_overlap(pi, pj)
}

/// Mean pairwise view overlap between the frames of two chunks.
pub fn chunk_overlap(world: &World, traj: &Trajectory, plan: &ChunkPlan, a: usize, b: usize) -> f64 {
    let mut sum = 0.0;
    for i in plan.range(a) {
        for j in plan.range(b) {
            sum += world.fov_overlap(&traj.poses[i], &traj.poses[j]);
        }
    }
    sum / (plan.chunk_size * plan.chunk_size) as f64
}

/// Ordered chunk pairs `(target, partner)` that qualify for a spatial window.
///
/// A pair qualifies when the chunks are at least `min_gap` chunks apart, their
/// mean view overlap reaches `threshold`, and the overlap is a local maximum
/// over the partner's temporal neighbours, seen from either chunk. The last
/// condition keeps one window per revisit instead of one per adjacent chunk.
pub fn spatial_pairs(world: &World, traj: &Trajectory, plan: &ChunkPlan, threshold: f64, min_gap: usize) -> Vec<(usize, usize)> {
    let n = plan.chunks();
    let ov: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| chunk_overlap(world, traj, plan, a, b)).collect())
        .collect();
    let peak = |a: usize, b: usize| {
        let v = ov[a][b];
        (b == 0 || ov[a][b - 1] <= v) && (b + 1 == n || ov[a][b + 1] <= v)
    };
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a.abs_diff(b) >= min_gap && ov[a][b] >= threshold - OVERLAP_SLACK && peak(a, b) && peak(b, a) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Target chunk in the middle, flanked by the partner chunk's leading
/// `overlap` frames on the left and trailing `overlap` frames on the right.
pub fn spatial_window(id: usize, traj: &Trajectory, plan: &ChunkPlan, overlap: usize, target: usize, partner: usize) -> Window {
    let p = plan.range(partner);
    let left = p.start..p.start + overlap;
    let right = p.end - overlap..p.end;
    let slots: Vec<i64> = left
        .clone()
        .chain(plan.range(target))
        .chain(right)
        .map(|f| f as i64)
        .collect();
    let target_mask = (0..slots.len())
        .map(|i| i >= overlap && i < overlap + plan.chunk_size)
        .collect();
    let over = traj.override_for(target, partner);
    let poses = slots
        .iter()
        .map(|&s| {
            let f = s as usize;
            over.and_then(|o| o.pose_for(f)).copied().unwrap_or(traj.poses[f])
        })
        .collect();
    Window {
        id,
        kind: WindowKind::Spatial,
        target_chunk: target,
        partner: Some(partner),
        slots,
        target_mask,
        poses,
    }
}

pub fn spatial_windows(
    world: &World,
    traj: &Trajectory,
    plan: &ChunkPlan,
    overlap: usize,
    threshold: f64,
    min_gap: usize,
) -> Result<Vec<Window>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(GvsError::Config(format!("overlap threshold {threshold} outside (0, 1]")));
    }
    if overlap > plan.chunk_size {
        return Err(GvsError::Config(format!(
            "spatial windows take {overlap} frames from each end of a {}-frame chunk",
            plan.chunk_size
        )));
    }
    Ok(spatial_pairs(world, traj, plan, threshold, min_gap)
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| spatial_window(plan.chunks() + i, traj, plan, overlap, a, b))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub loop_closing: bool,
    pub threshold: f64,
    /// In chunks.
    pub min_gap: usize,
    pub context: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            chunk_size: 4,
            overlap: 2,
            loop_closing: true,
            threshold: 0.5,
            min_gap: 3,
            context: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub plan: ChunkPlan,
    pub windows: Vec<Window>,
    /// Window ids per chunk in cycling order, temporal window first.
    pub per_chunk: Vec<Vec<usize>>,
}

impl WindowSchedule {
    pub fn build(traj: &Trajectory, world: &World, cfg: &WindowConfig) -> Result<Self> {
        let plan = partition(traj.len(), cfg.chunk_size)?;
        let mut windows = temporal_windows(&plan, cfg.overlap, traj, cfg.context)?;
        if cfg.loop_closing {
            windows.extend(spatial_windows(world, traj, &plan, cfg.overlap, cfg.threshold, cfg.min_gap)?);
        }
        let schedule = Self::from_windows(plan, windows)?;
        schedule.check_overrides(traj)?;
        Ok(schedule)
    }

    pub fn from_windows(plan: ChunkPlan, windows: Vec<Window>) -> Result<Self> {
        let mut per_chunk = vec![Vec::new(); plan.chunks()];
        for (i, w) in windows.iter().enumerate() {
            if w.id != i {
                return Err(GvsError::Schedule(format!("window at position {i} has id {}", w.id)));
            }
            validate_window(&plan, w)?;
            per_chunk[w.target_chunk].push(i);
        }
        if let Some(t) = per_chunk.iter().position(Vec::is_empty) {
            return Err(GvsError::Schedule(format!("chunk {t} is the target of no window")));
        }
        Ok(Self {
            plan,
            windows,
            per_chunk,
        })
    }

    fn check_overrides(&self, traj: &Trajectory) -> Result<()> {
        for o in &traj.overrides {
            let used = self
                .windows
                .iter()
                .any(|w| w.partner == Some(o.cond_chunk) && w.target_chunk == o.target_chunk);
            // overrides for windows that loop closing did not create are inert
            if !used && self.windows.iter().any(|w| w.kind == WindowKind::Spatial) {
                return Err(GvsError::Schedule(format!(
                    "override for chunk {} against {} matches no spatial window",
                    o.target_chunk, o.cond_chunk
                )));
            }
        }
        Ok(())
    }

    /// `W[t][step mod |W[t]|]`
    pub fn cyclic_pick(&self, t: usize, step: usize) -> Result<&Window> {
        let list = self
            .per_chunk
            .get(t)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| GvsError::Schedule(format!("no windows for chunk {t}")))?;
        Ok(&self.windows[list[step % list.len()]])
    }

    /// The window chosen for every chunk at one denoising step.
    pub fn selection(&self, step: usize) -> Result<Vec<&Window>> {
        (0..self.plan.chunks()).map(|t| self.cyclic_pick(t, step)).collect()
    }

    pub fn spatial_count(&self) -> usize {
        self.windows.iter().filter(|w| w.kind == WindowKind::Spatial).count()
    }

    /// Unordered chunk pairs joined by spatial windows.
    pub fn spatial_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .windows
            .iter()
            .filter_map(|w| w.partner.map(|p| (w.target_chunk.min(p), w.target_chunk.max(p))))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

fn validate_window(plan: &ChunkPlan, w: &Window) -> Result<()> {
    if w.target_mask.len() != w.slots.len() || w.poses.len() != w.slots.len() {
        return Err(GvsError::Schedule(format!("window {} has mismatched slot arrays", w.id)));
    }
    if w.target_chunk >= plan.chunks() {
        return Err(GvsError::Schedule(format!("window {} targets missing chunk {}", w.id, w.target_chunk)));
    }
    for (i, (&s, &t)) in w.slots.iter().zip(&w.target_mask).enumerate() {
        if t && w.is_padding(i, plan.frames) {
            return Err(GvsError::Schedule(format!("window {} marks padding slot {s} as target", w.id)));
        }
    }
    let mut targets: Vec<usize> = w.target_frames().collect();
    targets.sort_unstable();
    if targets != plan.range(w.target_chunk).collect::<Vec<_>>() {
        return Err(GvsError::Schedule(format!(
            "window {} targets {targets:?}, not exactly chunk {}",
            w.id, w.target_chunk
        )));
    }
    Ok(())
}
