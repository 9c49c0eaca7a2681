//! Greedy minimum-overlap ordering of the virtual views.

use serde::{Deserialize, Serialize};

use crate::camera::{CameraNetwork, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::num::Real;

use super::warp::warp_coverage;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpStep {
    pub target: usize,
    /// Views warped into `target`, in completion order (base first).
    pub sources: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpSchedule {
    pub base: usize,
    pub num_views: usize,
    pub steps: Vec<WarpStep>,
}

impl WarpSchedule {
    /// Checks that every non-base view is a target exactly once and that
    /// sources only name views completed earlier.
    pub fn validate(&self) -> Result<()> {
        if self.base >= self.num_views {
            return Err(Error::InvalidInput("schedule base out of range".into()));
        }
        let mut done = vec![false; self.num_views];
        done[self.base] = true;
        for step in &self.steps {
            if step.target >= self.num_views || done[step.target] {
                return Err(Error::InvalidInput(format!("view {} scheduled twice or out of range", step.target)));
            }
            if let Some(s) = step.sources.iter().find(|&&s| s >= self.num_views || !done[s]) {
                return Err(Error::InvalidInput(format!(
                    "step for view {} reads view {s} before it is complete",
                    step.target
                )));
            }
            done[step.target] = true;
        }
        if done.iter().any(|d| !d) {
            return Err(Error::InvalidInput("schedule leaves views uncompleted".into()));
        }
        Ok(())
    }

    /// Completion order, base first.
    pub fn order(&self) -> Vec<usize> {
        std::iter::once(self.base).chain(self.steps.iter().map(|s| s.target)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Next target is the uncompleted view with the smallest overlap.
    #[default]
    FarthestMinOverlap,
    /// Next target is the uncompleted view closest in index to the base.
    NeighborFirst,
}

/// Picks among `candidates` by smallest overlap, then larger index distance
/// from `base`, then lower index. NaN overlaps rank last.
pub fn choose_min_overlap(candidates: &[usize], overlaps: &[f64], base: usize) -> usize {
    let key = |c: usize, o: f64| {
        let o = if o.is_nan() { f64::INFINITY } else { o };
        (o, std::cmp::Reverse(c.abs_diff(base)), c)
    };
    let mut best = (candidates[0], overlaps[0]);
    for (&c, &o) in candidates.iter().zip(overlaps).skip(1) {
        let (kc, kb) = (key(c, o), key(best.0, best.1));
        let better = kc.0 < kb.0 || (kc.0 == kb.0 && (kc.1, kc.2) < (kb.1, kb.2));
        if better {
            best = (c, o);
        }
    }
    best.0
}

/// Incremental form of [`schedule`]: the caller completes each step before
/// asking for the next, so overlaps can be measured against finished frames.
#[derive(Clone, Debug)]
pub struct GreedyScheduler {
    base: usize,
    kind: ScheduleKind,
    completed: Vec<usize>,
    done: Vec<bool>,
}

impl GreedyScheduler {
    pub fn new(num_views: usize, base: usize, kind: ScheduleKind) -> Self {
        let mut done = vec![false; num_views];
        done[base] = true;
        Self {
            base,
            kind,
            completed: vec![base],
            done,
        }
    }

    pub fn completed(&self) -> &[usize] {
        &self.completed
    }

    pub fn remaining(&self) -> Vec<usize> {
        (0..self.done.len()).filter(|&v| !self.done[v]).collect()
    }

    /// Chooses and commits the next step. `overlaps(completed, candidates)`
    /// returns one overlap per candidate.
    pub fn next_step(&mut self, mut overlaps: impl FnMut(&[usize], &[usize]) -> Vec<f64>) -> Option<WarpStep> {
        let candidates = self.remaining();
        if candidates.is_empty() {
            return None;
        }
        let target = match self.kind {
            ScheduleKind::FarthestMinOverlap => {
                let o = overlaps(&self.completed, &candidates);
                assert_eq!(o.len(), candidates.len(), "one overlap per candidate");
                choose_min_overlap(&candidates, &o, self.base)
            }
            ScheduleKind::NeighborFirst => *candidates
                .iter()
                .min_by_key(|&&c| (c.abs_diff(self.base), c))
                .expect("non-empty"),
        };
        let step = WarpStep {
            target,
            sources: self.completed.clone(),
        };
        self.done[target] = true;
        self.completed.push(target);
        Some(step)
    }
}

/// Greedy farthest-view schedule: starting from the base view, repeatedly
/// complete the uncompleted view whose overlap with the completed set is
/// smallest. `overlap_fn(completed, target)` measures that overlap.
pub fn schedule<T: Real>(
    network: &CameraNetwork<T>,
    mut overlap_fn: impl FnMut(&[usize], usize) -> f64,
) -> WarpSchedule {
    schedule_with(network.len(), network.base_index, ScheduleKind::FarthestMinOverlap, |done, cands| {
        cands.iter().map(|&c| overlap_fn(done, c)).collect()
    })
}

pub fn schedule_with(
    num_views: usize,
    base: usize,
    kind: ScheduleKind,
    mut overlaps: impl FnMut(&[usize], &[usize]) -> Vec<f64>,
) -> WarpSchedule {
    let mut g = GreedyScheduler::new(num_views, base, kind);
    let mut steps = Vec::new();
    while let Some(s) = g.next_step(&mut overlaps) {
        steps.push(s);
    }
    WarpSchedule {
        base,
        num_views,
        steps,
    }
}

/// Fraction of `target` pixels covered by the union of all `completed`
/// frames warped into it. Equals the coverage of their z-buffer merge.
pub fn overlap<T: Real>(completed: &[(&Frame, &Pose<T>)], target: &Pose<T>, k: &Intrinsics<T>) -> f64 {
    let n = k.pixel_count();
    if n == 0 {
        return 0.0;
    }
    let mut hit = vec![false; n];
    for (f, p) in completed {
        for (h, c) in hit.iter_mut().zip(warp_coverage(f, p, target, k)) {
            *h |= c;
        }
    }
    hit.iter().filter(|&&h| h).count() as f64 / n as f64
}
