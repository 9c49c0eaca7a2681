//! Quality report of a matrix built from an oracle scene.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::frame::Provenance;
use crate::oracle::{occlusion_mask, render_oracle, SceneSpec};
use crate::raster::{ColorImage, Mask};

use super::run::ViewTimeMatrix;

/// Peak signal-to-noise ratio in dB; serialized as `"inf"` when the
/// images are equal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Psnr(pub f64);

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Psnr(v)),
            Repr::Text(s) if s == "inf" => Ok(Psnr(f64::INFINITY)),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("bad PSNR {s:?}"))),
        }
    }
}

/// PSNR over the pixels where `mask` is set; `None` if the mask is empty.
pub fn masked_psnr(a: &ColorImage, b: &ColorImage, mask: &Mask) -> Option<Psnr> {
    let mut se = 0.0f64;
    let mut n = 0usize;
    for i in 0..a.len() {
        if mask.data[i] {
            for c in 0..3 {
                let d = a.data[i][c] as f64 - b.data[i][c] as f64;
                se += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return None;
    }
    let mse = se / n as f64;
    Some(Psnr(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub view: usize,
    pub t: usize,
    /// Against the oracle render, on original, warped and copied pixels.
    pub psnr: Option<Psnr>,
    pub compared_pixels: usize,
    /// Pre-inpaint hole mask against the oracle occlusion mask of the
    /// source view.
    pub hole_iou: f64,
    pub provenance: [usize; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: usize,
    pub min_psnr: Option<Psnr>,
    pub mean_finite_psnr: Option<f64>,
    pub mean_hole_iou: f64,
    pub min_hole_iou: f64,
    pub provenance_totals: [usize; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub views: usize,
    pub timestamps: usize,
    pub schedule_order: Vec<usize>,
    pub cells: Vec<CellReport>,
    pub summary: Summary,
}

/// Compares every complete cell with the oracle render from its pose.
pub fn verify(m: &ViewTimeMatrix, scene: &SceneSpec) -> VerifyReport {
    let k = &m.network.intrinsics;
    let base_pose = m.network.base_pose();
    let cells: Vec<(usize, usize)> = m.completed_cells();
    let reports: Vec<CellReport> = cells
        .par_iter()
        .map(|&(v, t)| {
            let f = m.get(v, t).expect("completed");
            let pose = &m.network.poses[v];
            let time = m.times[t];
            let truth = render_oracle(scene, pose, k, time).frame.color;
            let compared = Mask {
                width: f.width(),
                height: f.height(),
                data: f
                    .provenance
                    .iter()
                    .map(|p| matches!(p, Provenance::Original | Provenance::Warped | Provenance::CopiedPrevT))
                    .collect(),
            };
            let pre_holes = Mask {
                width: f.width(),
                height: f.height(),
                data: f.provenance.iter().map(|p| !p.is_geometric()).collect(),
            };
            let occ = occlusion_mask(scene, base_pose, pose, k, time);
            CellReport {
                view: v,
                t,
                psnr: masked_psnr(&f.color, &truth, &compared),
                compared_pixels: compared.count(),
                hole_iou: pre_holes.iou(&occ),
                provenance: f.provenance_histogram(),
            }
        })
        .collect();

    let psnrs: Vec<f64> = reports.iter().filter_map(|r| r.psnr.map(|p| p.0)).collect();
    let finite: Vec<f64> = psnrs.iter().copied().filter(|p| p.is_finite()).collect();
    let ious: Vec<f64> = reports.iter().map(|r| r.hole_iou).collect();
    let summary = Summary {
        cells: reports.len(),
        min_psnr: psnrs.iter().copied().reduce(f64::min).map(Psnr),
        mean_finite_psnr: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        mean_hole_iou: if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 },
        min_hole_iou: ious.iter().copied().reduce(f64::min).unwrap_or(0.0),
        provenance_totals: m.provenance_totals(),
    };
    VerifyReport {
        views: m.num_views(),
        timestamps: m.num_timestamps(),
        schedule_order: m.schedule.as_ref().map(|s| s.order()).unwrap_or_default(),
        cells: reports,
        summary,
    }
}
