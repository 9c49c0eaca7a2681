use serde::{Deserialize, Serialize};

use crate::adapters::{argmax, Adapters, InpaintRequest, ScoreRequest};
use crate::error::{Error, Result};
use crate::frame::{Frame, Provenance};
use crate::raster::{ColorImage, Mask};

use super::partition::Component;
use super::telea::{telea_inpaint_with_known, DEFAULT_TELEA_RADIUS};

pub const DEFAULT_INPAINT_CANDIDATES: usize = 10;

/// Region handed to the scorer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCrop {
    #[default]
    FullFrame,
    /// Bounding box of the component.
    HoleBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintRequestSpec {
    pub prompt: String,
    pub n_candidates: usize,
    pub seed: u64,
    pub steps: u32,
    pub crop: ScoreCrop,
}

impl Default for InpaintRequestSpec {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            n_candidates: DEFAULT_INPAINT_CANDIDATES,
            seed: 0,
            steps: 50,
            crop: ScoreCrop::FullFrame,
        }
    }
}

impl InpaintRequestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::InvalidConfig("n_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExternalOutcome {
    Selected { index: usize, scores: Vec<f64> },
    /// The adapter failed; the component was filled by Telea instead.
    FellBack { reason: String },
}

fn crop(img: &ColorImage, bbox: [u32; 4]) -> ColorImage {
    let [x0, y0, x1, y1] = bbox;
    ColorImage::from_fn(x1 - x0 + 1, y1 - y0 + 1, |x, y| img.get(x0 + x, y0 + y))
}

/// Best-of-N adapter inpainting of one component. The request mask covers
/// every remaining hole of `frame` so no hole pixel is read as context;
/// only the component's pixels are written, with unknown depth.
pub fn external_inpaint(
    frame: &mut Frame,
    component: &Component,
    spec: &InpaintRequestSpec,
    adapters: &Adapters,
) -> Result<ExternalOutcome> {
    spec.validate()?;
    if component.pixels.iter().any(|&i| i >= frame.len() || !frame.hole_mask.data[i]) {
        return Err(Error::InvalidInput("component pixel is not a hole".into()));
    }
    match select_candidate(frame, component, spec, adapters) {
        Ok((img, index, scores)) => {
            for &i in &component.pixels {
                frame.write_pixel(i, img.data[i], None, Provenance::External);
            }
            Ok(ExternalOutcome::Selected { index, scores })
        }
        Err(e @ (Error::AdapterUnavailable { .. } | Error::ProtocolViolation(_))) => {
            log::warn!("external inpaint failed, using telea: {e}");
            let fill = component.to_mask(frame.width(), frame.height());
            let known = Mask {
                width: frame.width(),
                height: frame.height(),
                data: frame.hole_mask.data.iter().map(|&h| !h).collect(),
            };
            let out = telea_inpaint_with_known(&frame.color, &fill, &known, DEFAULT_TELEA_RADIUS)?;
            for &i in &component.pixels {
                frame.write_pixel(i, out.data[i], None, Provenance::Telea);
            }
            Ok(ExternalOutcome::FellBack { reason: e.to_string() })
        }
        Err(e) => Err(e),
    }
}

fn select_candidate(
    frame: &Frame,
    component: &Component,
    spec: &InpaintRequestSpec,
    adapters: &Adapters,
) -> Result<(ColorImage, usize, Vec<f64>)> {
    let req = InpaintRequest {
        image: frame.color.clone(),
        mask: frame.hole_mask.clone(),
        prompt: spec.prompt.clone(),
        seed: spec.seed,
        n_candidates: spec.n_candidates,
        steps: spec.steps,
    };
    let mut candidates = adapters.inpaint_image(&req)?;
    let scored = match spec.crop {
        ScoreCrop::FullFrame => candidates.clone(),
        ScoreCrop::HoleBox => candidates.iter().map(|c| crop(c, component.bbox)).collect(),
    };
    let scores = adapters.score_candidates(&ScoreRequest {
        prompt: spec.prompt.clone(),
        candidates: scored,
    })?;
    let index = argmax(&scores).expect("at least one candidate");
    Ok((candidates.swap_remove(index), index, scores))
}
