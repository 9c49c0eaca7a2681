//! Progressive warping: forward warps, z-buffer fusion, overlap and the
//! farthest-view schedule.

mod schedule;
mod warp;

pub use crate::frame::{Frame, Provenance, WarpedFrame};
pub use schedule::{
    choose_min_overlap, overlap, schedule, schedule_with, GreedyScheduler, ScheduleKind, WarpSchedule, WarpStep,
};
pub use warp::{merge_warps, warp, warp_coverage, MERGE_TIE_EPS};
