//! Consistent inpainting across timestamps: foreground/background
//! segmentation and per-component routing of hole fills.
//!
//! A large hole component that is background now, was background at
//! `t - 1` and was covered at `t - 1` is copied from the same camera's
//! previous frame; other large components go to the external inpainter and
//! small ones to Telea.

use serde::{Deserialize, Serialize};

use crate::adapters::{stub::depth_threshold_mask, Adapters, Capability, SegmentRequest};
use crate::error::{Error, Result};
use crate::frame::{Frame, Provenance};
use crate::inpaint::{
    external_inpaint, telea_inpaint_with_known, Component, ExternalOutcome, HolePartition, InpaintRequestSpec,
};
use crate::raster::Mask;

pub const DEFAULT_RHO: f64 = 0.8;
pub const DEFAULT_FG_ALPHA: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegSource {
    Adapter,
    DepthThresholdStub,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegMask {
    /// True = foreground.
    pub mask: Mask,
    pub source: SegSource,
    /// Set when the adapter failed and the depth threshold stood in.
    pub fallback: Option<String>,
}

/// Foreground mask of `frame`. A stub segmenter thresholds depth at
/// `min + alpha * range`; a failing adapter falls back to the same rule.
pub fn segment_fg(frame: &Frame, adapters: &Adapters, prompt: &str, alpha: f64) -> Result<SegMask> {
    if adapters.is_stub(Capability::Segment) {
        return Ok(SegMask {
            mask: depth_threshold_mask(&frame.depth, alpha),
            source: SegSource::DepthThresholdStub,
            fallback: None,
        });
    }
    let req = SegmentRequest {
        image: frame.color.clone(),
        prompt: prompt.to_string(),
        depth: None,
    };
    match adapters.segment_image(&req) {
        Ok((mask, _)) => Ok(SegMask {
            mask,
            source: SegSource::Adapter,
            fallback: None,
        }),
        Err(e @ (Error::AdapterUnavailable { .. } | Error::ProtocolViolation(_))) => {
            log::warn!("segmentation failed, using depth threshold: {e}");
            Ok(SegMask {
                mask: depth_threshold_mask(&frame.depth, alpha),
                source: SegSource::DepthThresholdStub,
                fallback: Some(e.to_string()),
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Same pixels from the same camera at `t - 1`.
    CopyPrevT,
    External,
    Telea,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FillPlan {
    pub entries: Vec<(Component, Route)>,
}

impl FillPlan {
    /// Routing without a previous frame: large to external, small to Telea.
    pub fn first_timestamp(holes: &HolePartition) -> Self {
        let mut entries: Vec<_> = holes.large.iter().map(|c| (c.clone(), Route::External)).collect();
        entries.extend(holes.small.iter().map(|c| (c.clone(), Route::Telea)));
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pixel count per route: `[copy, external, telea]`.
    pub fn routed_area(&self) -> [usize; 3] {
        let mut a = [0; 3];
        for (c, r) in &self.entries {
            a[route_slot(*r)] += c.area();
        }
        a
    }

    /// Component count per route: `[copy, external, telea]`.
    pub fn route_counts(&self) -> [usize; 3] {
        let mut a = [0; 3];
        for (_, r) in &self.entries {
            a[route_slot(*r)] += 1;
        }
        a
    }
}

fn route_slot(r: Route) -> usize {
    match r {
        Route::CopyPrevT => 0,
        Route::External => 1,
        Route::Telea => 2,
    }
}

/// Routes each component. Small components always go to Telea. A large one
/// is copied from `frame_prev` when at least `rho` of its pixels are
/// background in both masks and not holes in `frame_prev`, and goes to the
/// external inpainter otherwise.
pub fn plan_fills(holes: &HolePartition, seg_t: &SegMask, seg_prev: &SegMask, frame_prev: &Frame, rho: f64) -> FillPlan {
    let copyable = |c: &Component| {
        let ok = c
            .pixels
            .iter()
            .filter(|&&i| !seg_t.mask.data[i] && !seg_prev.mask.data[i] && !frame_prev.hole_mask.data[i])
            .count();
        ok as f64 >= rho * c.area() as f64
    };
    let mut entries = Vec::new();
    for c in &holes.large {
        let r = if copyable(c) { Route::CopyPrevT } else { Route::External };
        entries.push((c.clone(), r));
    }
    entries.extend(holes.small.iter().map(|c| (c.clone(), Route::Telea)));
    FillPlan { entries }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    /// One per external component, in plan order.
    pub external: Vec<ExternalOutcome>,
    /// Copy-routed pixels that were holes at `t - 1` and went to Telea.
    pub copy_misses: usize,
}

/// Runs the plan in copy, Telea, external order. Copied pixels take color
/// and depth from `frame_prev`; Telea and external pixels are left with
/// unknown depth for the caller to assign.
pub fn execute_plan(
    frame: &mut Frame,
    plan: &FillPlan,
    frame_prev: Option<&Frame>,
    spec: &InpaintRequestSpec,
    adapters: &Adapters,
    telea_radius: u32,
) -> Result<ExecutionReport> {
    let (w, h) = (frame.width(), frame.height());
    let mut report = ExecutionReport::default();
    let mut telea_fill = Mask::new(w, h, false);

    for (c, r) in &plan.entries {
        if c.pixels.iter().any(|&i| i >= frame.len() || !frame.hole_mask.data[i]) {
            return Err(Error::InvalidInput("plan covers a pixel that is not a hole".into()));
        }
        match r {
            Route::CopyPrevT => {
                let prev = frame_prev
                    .ok_or_else(|| Error::InvalidInput("copy route without a previous frame".into()))?;
                if prev.width() != w || prev.height() != h {
                    return Err(Error::InvalidInput("previous frame size differs".into()));
                }
                for &i in &c.pixels {
                    if prev.hole_mask.data[i] {
                        telea_fill.data[i] = true;
                        report.copy_misses += 1;
                    } else {
                        frame.write_pixel(i, prev.color.data[i], prev.depth.get(i), Provenance::CopiedPrevT);
                    }
                }
            }
            Route::Telea => {
                for &i in &c.pixels {
                    telea_fill.data[i] = true;
                }
            }
            Route::External => {}
        }
    }

    if telea_fill.any() {
        let known = Mask {
            width: w,
            height: h,
            data: frame.hole_mask.data.iter().map(|&x| !x).collect(),
        };
        let out = telea_inpaint_with_known(&frame.color, &telea_fill, &known, telea_radius)?;
        for i in 0..frame.len() {
            if telea_fill.data[i] {
                frame.write_pixel(i, out.data[i], None, Provenance::Telea);
            }
        }
    }

    for (k, (c, _)) in plan.entries.iter().filter(|(_, r)| *r == Route::External).enumerate() {
        let s = InpaintRequestSpec {
            seed: spec.seed.wrapping_add(k as u64),
            ..spec.clone()
        };
        report.external.push(external_inpaint(frame, c, &s, adapters)?);
    }
    Ok(report)
}
