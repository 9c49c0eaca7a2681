use crate::camera::{Intrinsics, Pose};
use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::inpaint::connected_components;
use crate::oracle::{render_oracle, render_oracle_f64, sequence_times, SceneSpec};
use crate::raster::{ColorImage, Mask};

use super::{Backend, DepthKind, DepthRequest, GenerateRequest, InpaintRequest, ScoreRequest, SegmentRequest};

/// Synthetic world the stub answers from.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleContext {
    pub scene: SceneSpec,
    pub intrinsics: Intrinsics<f64>,
    /// Pose of the stationary source camera.
    pub base_pose: Pose<f64>,
}

impl OracleContext {
    /// Intrinsics rescaled to another raster size, same field of view.
    fn intrinsics_for(&self, width: u32, height: u32) -> Intrinsics<f64> {
        let k = &self.intrinsics;
        if (k.width, k.height) == (width, height) {
            return *k;
        }
        let sx = width as f64 / k.width as f64;
        let sy = height as f64 / k.height as f64;
        Intrinsics {
            fx: k.fx * sx,
            fy: k.fy * sy,
            cx: (k.cx + 0.5) * sx - 0.5,
            cy: (k.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// Deterministic, network-free implementation of every capability.
#[derive(Clone, Debug, PartialEq)]
pub struct StubBackend {
    pub oracle: Option<OracleContext>,
    /// Relative depth is reported as `(d - shift) / scale`.
    pub relative_scale: f64,
    pub relative_shift: f64,
    /// Foreground fraction of the depth range for the segmentation stub.
    pub fg_alpha: f64,
    /// Chebyshev width of the ring averaged by the inpaint stub.
    pub ring_width: u32,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self {
            oracle: None,
            relative_scale: 1.7,
            relative_shift: 0.2,
            fg_alpha: 0.35,
            ring_width: 2,
        }
    }
}

impl StubBackend {
    pub fn with_oracle(oracle: OracleContext) -> Self {
        Self {
            oracle: Some(oracle),
            ..Default::default()
        }
    }

    fn oracle(&self, what: &str) -> Result<&OracleContext> {
        self.oracle.as_ref().ok_or_else(|| Error::AdapterUnavailable {
            capability: what.to_string(),
            message: "stub has no oracle scene".into(),
        })
    }

    fn metric_depth(&self, req: &DepthRequest) -> Vec<DepthMap<f32>> {
        match (&self.oracle, &req.hint) {
            (Some(o), Some(hint)) if hint.times.len() == req.frames.len() => req
                .frames
                .iter()
                .zip(&hint.times)
                .map(|(f, &t)| {
                    let k = o.intrinsics_for(f.width, f.height);
                    let r = render_oracle_f64(&o.scene, &hint.pose, &k, t);
                    let v = r.depth.iter().map(|&d| d as f32).collect();
                    DepthMap::from_values(f.width, f.height, v).expect("render matches frame size")
                })
                .collect(),
            _ => req.frames.iter().map(luminance_depth).collect(),
        }
    }
}

/// Brighter is nearer, mapped into `[1, 10]`.
fn luminance_depth(img: &ColorImage) -> DepthMap<f32> {
    let v = img
        .data
        .iter()
        .map(|p| {
            let l = 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32;
            1.0 + 9.0 * (1.0 - l / 255.0)
        })
        .collect();
    DepthMap::from_values(img.width, img.height, v).expect("same size")
}

/// Foreground where depth is below `min + alpha * (max - min)`; a zero
/// range has no foreground.
pub(crate) fn depth_threshold_mask(d: &DepthMap<f32>, alpha: f64) -> Mask {
    let mut m = Mask::new(d.width, d.height, false);
    let Some((lo, hi)) = d.valid_range() else {
        return m;
    };
    if hi <= lo {
        return m;
    }
    let cut = lo as f64 + alpha * (hi as f64 - lo as f64);
    for i in 0..d.len() {
        if let Some(v) = d.get(i) {
            m.data[i] = (v as f64) < cut;
        }
    }
    m
}

/// Fills each mask component with the rounded mean of the known pixels
/// within Chebyshev distance `ring` of it.
pub(crate) fn ring_mean_fill(img: &ColorImage, mask: &Mask, ring: u32) -> Result<ColorImage> {
    let (w, h) = (img.width as i64, img.height as i64);
    let r = ring as i64;
    let mut out = img.clone();
    let mut mark = vec![u32::MAX; img.len()];
    for (ci, comp) in connected_components(mask).iter().enumerate() {
        let mut acc = [0u64; 3];
        let mut n = 0u64;
        for &p in &comp.pixels {
            let (x, y) = (p as i64 % w, p as i64 / w);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w || qy >= h {
                        continue;
                    }
                    let q = (qy * w + qx) as usize;
                    if mask.data[q] || mark[q] == ci as u32 {
                        continue;
                    }
                    mark[q] = ci as u32;
                    for c in 0..3 {
                        acc[c] += img.data[q][c] as u64;
                    }
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::NothingToInpaintFrom);
        }
        let fill = [0, 1, 2].map(|c| ((acc[c] as f64) / n as f64).round() as u8);
        for &p in &comp.pixels {
            out.data[p] = fill;
        }
    }
    Ok(out)
}

impl Backend for StubBackend {
    fn is_stub(&self) -> bool {
        true
    }

    /// Renders the base view of the oracle scene, seeded by the request.
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<ColorImage>> {
        let o = self.oracle("generate")?;
        let scene = SceneSpec {
            seed: req.seed,
            ..o.scene.clone()
        };
        let k = o.intrinsics_for(req.width, req.height);
        Ok(sequence_times(req.num_frames)
            .into_iter()
            .map(|t| render_oracle(&scene, &o.base_pose, &k, t).frame.color)
            .collect())
    }

    fn depth(&self, req: &DepthRequest) -> Result<Vec<DepthMap<f32>>> {
        let metric = self.metric_depth(req);
        Ok(match req.kind {
            DepthKind::Metric => metric,
            DepthKind::Relative => metric
                .into_iter()
                .map(|d| {
                    let mut r = DepthMap::invalid(d.width, d.height);
                    for i in 0..d.len() {
                        if let Some(v) = d.get(i) {
                            let rel = (v as f64 - self.relative_shift) / self.relative_scale;
                            r.set(i, rel as f32);
                        }
                    }
                    r
                })
                .collect(),
        })
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<Vec<ColorImage>> {
        let filled = ring_mean_fill(&req.image, &req.mask, self.ring_width)?;
        Ok(vec![filled; req.n_candidates])
    }

    fn segment(&self, req: &SegmentRequest) -> Result<Mask> {
        match &req.depth {
            Some(d) => Ok(depth_threshold_mask(d, self.fg_alpha)),
            None => Ok(Mask::new(req.image.width, req.image.height, false)),
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>> {
        Ok(vec![0.0; req.candidates.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{argmax, Adapters, ViewHint};
    use crate::camera::make_intrinsics;
    use crate::depthproc::align_depth;
    use crate::oracle::render_sequence;

    fn ctx() -> OracleContext {
        OracleContext {
            scene: SceneSpec::standard(7),
            intrinsics: make_intrinsics(90.0, 64, 40).unwrap(),
            base_pose: Pose::identity(),
        }
    }

    #[test]
    fn generate_matches_oracle_sequence() {
        let a = Adapters::all_stub(StubBackend::with_oracle(ctx()));
        let req = GenerateRequest {
            seed: 7,
            num_frames: 4,
            width: 64,
            height: 40,
            ..Default::default()
        };
        let v = a.generate_video(&req).unwrap();
        let c = ctx();
        let r = render_sequence(&c.scene, &c.base_pose, &c.intrinsics, 4);
        assert_eq!(v.len(), 4);
        for (a, b) in v.iter().zip(&r) {
            assert_eq!(*a, b.frame.color);
        }
    }

    #[test]
    fn zero_frames_is_config_error() {
        let a = Adapters::all_stub(StubBackend::with_oracle(ctx()));
        let req = GenerateRequest {
            num_frames: 0,
            ..Default::default()
        };
        assert!(matches!(a.generate_video(&req), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn metric_depth_is_exact_and_relative_realigns() {
        let c = ctx();
        let a = Adapters::all_stub(StubBackend::with_oracle(c.clone()));
        let r = render_oracle(&c.scene, &c.base_pose, &c.intrinsics, 0.5);
        let hint = ViewHint {
            pose: c.base_pose,
            times: vec![0.5],
        };
        let metric = a
            .estimate_depth(&DepthRequest {
                frames: vec![r.frame.color.clone()],
                kind: DepthKind::Metric,
                hint: Some(hint.clone()),
            })
            .unwrap();
        assert_eq!(metric[0], r.frame.depth);
        let rel = a
            .estimate_depth(&DepthRequest {
                frames: vec![r.frame.color.clone()],
                kind: DepthKind::Relative,
                hint: Some(hint),
            })
            .unwrap();
        let all = Mask::new(64, 40, true);
        let al = align_depth(&rel[0].cast::<f64>(), &metric[0].cast::<f64>(), &all).unwrap();
        assert!((al.gamma - 1.7).abs() < 1e-5, "{al:?}");
        assert!((al.beta - 0.2).abs() < 1e-4, "{al:?}");
    }

    #[test]
    fn inpaint_constant_fill_and_ring() {
        let img = ColorImage::new(12, 9, [90, 10, 200]);
        let mask = Mask::from_fn(12, 9, |x, y| (3..7).contains(&x) && (2..5).contains(&y));
        let a = Adapters::all_stub(StubBackend::default());
        let req = InpaintRequest {
            image: img.clone(),
            mask: mask.clone(),
            prompt: String::new(),
            seed: 0,
            n_candidates: 10,
            steps: 50,
        };
        let c = a.inpaint_image(&req).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|x| *x == img));

        // the ring reaches 2 px out, not 3
        let img = ColorImage::from_fn(12, 9, |x, _| if x == 0 { [255; 3] } else { [0; 3] });
        let mask = Mask::from_fn(12, 9, |x, _| x == 3);
        let out = ring_mean_fill(&img, &mask, 2).unwrap();
        assert_eq!(out.get(3, 4), [0; 3]);
        let mask = Mask::from_fn(12, 9, |x, _| x == 2);
        let out = ring_mean_fill(&img, &mask, 2).unwrap();
        // ring columns 0, 1, 3, 4: one white column of four
        assert_eq!(out.get(2, 4), [64; 3]);
    }

    #[test]
    fn score_stub_picks_first() {
        let a = Adapters::all_stub(StubBackend::default());
        let s = a
            .score_candidates(&ScoreRequest {
                prompt: "x".into(),
                candidates: vec![ColorImage::new(2, 2, [0; 3]); 10],
            })
            .unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
        assert_eq!(argmax(&s), Some(0));
    }

    #[test]
    fn segment_threshold_rules() {
        let flat = DepthMap::constant(5, 5, 3.0f32);
        assert!(!depth_threshold_mask(&flat, 0.35).any());
        let two = DepthMap::from_values(4, 1, vec![1.0f32, 1.0, 10.0, 10.0]).unwrap();
        assert_eq!(depth_threshold_mask(&two, 0.35).data, vec![true, true, false, false]);
    }
}
