//! Frames of the view-time matrix and per-pixel provenance.

use serde::{Deserialize, Serialize};

use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::raster::{ColorImage, Mask, Rgb8};

/// Which stage produced a pixel. The discriminant is the on-disk label code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Provenance {
    Original = 0,
    Warped = 1,
    Telea = 2,
    External = 3,
    CopiedPrevT = 4,
}

impl Provenance {
    pub const ALL: [Provenance; 5] = [
        Provenance::Original,
        Provenance::Warped,
        Provenance::Telea,
        Provenance::External,
        Provenance::CopiedPrevT,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Pixels that were not synthesized by an inpainter.
    pub fn is_geometric(self) -> bool {
        matches!(self, Provenance::Original | Provenance::Warped)
    }
}

/// One cell of the view-time matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub color: ColorImage,
    pub depth: DepthMap<f32>,
    /// True where the pixel is missing.
    pub hole_mask: Mask,
    pub provenance: Vec<Provenance>,
}

impl Frame {
    /// A frame straight from the source video: no holes, all original.
    pub fn original(color: ColorImage, depth: DepthMap<f32>) -> Result<Self> {
        let n = color.len();
        let f = Self {
            hole_mask: Mask::new(color.width, color.height, false),
            provenance: vec![Provenance::Original; n],
            color,
            depth,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn width(&self) -> u32 {
        self.color.width
    }

    pub fn height(&self) -> u32 {
        self.color.height
    }

    pub fn len(&self) -> usize {
        self.color.len()
    }

    pub fn is_empty(&self) -> bool {
        self.color.is_empty()
    }

    pub fn hole_count(&self) -> usize {
        self.hole_mask.count()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.color.width, self.color.height);
        if self.depth.width != w
            || self.depth.height != h
            || self.hole_mask.width != w
            || self.hole_mask.height != h
            || self.provenance.len() != self.color.len()
        {
            return Err(Error::InvalidInput("frame layers differ in size".into()));
        }
        if let Some(i) = (0..self.len()).find(|&i| self.hole_mask.data[i] && self.depth.is_valid(i)) {
            return Err(Error::InvalidInput(format!("hole pixel {i} carries valid depth")));
        }
        Ok(())
    }

    /// Per-label pixel counts indexed by label code.
    pub fn provenance_histogram(&self) -> [usize; 5] {
        let mut h = [0usize; 5];
        for p in &self.provenance {
            h[p.code() as usize] += 1;
        }
        h
    }

    pub(crate) fn write_pixel(&mut self, i: usize, color: Rgb8, depth: Option<f32>, label: Provenance) {
        self.color.data[i] = color;
        match depth {
            Some(z) => self.depth.set(i, z),
            None => self.depth.invalidate(i),
        }
        self.hole_mask.data[i] = false;
        self.provenance[i] = label;
    }
}

/// Output of a forward warp: color and depth under z-buffer semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedFrame {
    pub color: ColorImage,
    pub depth: DepthMap<f32>,
    pub hole_mask: Mask,
}

impl WarpedFrame {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            color: ColorImage::new(width, height, [0, 0, 0]),
            depth: DepthMap::invalid(width, height),
            hole_mask: Mask::new(width, height, true),
        }
    }

    pub fn coverage(&self) -> f64 {
        let n = self.hole_mask.data.len();
        if n == 0 {
            return 0.0;
        }
        (n - self.hole_mask.count()) as f64 / n as f64
    }

    /// Converts into a frame whose covered pixels are labeled `Warped`.
    pub fn into_frame(self) -> Frame {
        let provenance = self
            .hole_mask
            .data
            .iter()
            .map(|_| Provenance::Warped)
            .collect();
        Frame {
            color: self.color,
            depth: self.depth,
            hole_mask: self.hole_mask,
            provenance,
        }
    }
}
