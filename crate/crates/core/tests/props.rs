mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use viewtime::adapters::{
    Adapters, Backend, DepthRequest, GenerateRequest, InpaintRequest, ScoreRequest, SegmentRequest, StubBackend,
};
use viewtime::camera::{build_trajectory, make_intrinsics, relative_transform, Intrinsics, Pose, TrajectorySpec};
use viewtime::cim::{plan_fills, Route, SegMask, SegSource};
use viewtime::depthproc::DepthMap;
use viewtime::geom::Vec3;
use viewtime::inpaint::{external_inpaint, partition_holes, InpaintRequestSpec};
use viewtime::oracle::{occlusion_mask, render_oracle, SceneSpec};
use viewtime::pwm::{merge_warps, overlap, warp};
use viewtime::{ColorImage, Frame, Mask, Provenance, Result, WarpedFrame};

const W: u32 = 24;
const H: u32 = 16;

fn k() -> Intrinsics<f64> {
    make_intrinsics(55.0, W, H).unwrap()
}

fn random_frame(seed: u64, holes: f64) -> Frame {
    let mut r = common::rng(seed);
    let color = common::random_image(&mut r, W, H);
    let depth = DepthMap::from_values(W, H, (0..W * H).map(|_| r.gen_range(2.0f32..9.0)).collect()).unwrap();
    let mut f = Frame::original(color, depth).unwrap();
    for i in 0..f.len() {
        if r.gen_bool(holes) {
            f.hole_mask.data[i] = true;
            f.depth.invalidate(i);
        }
    }
    f
}

fn random_pose(seed: u64) -> Pose<f64> {
    let mut r = common::rng(seed);
    let yaw: f64 = r.gen_range(-0.15..0.15);
    let c = Vec3::new(r.gen_range(-0.4..0.4), r.gen_range(-0.2..0.2), r.gen_range(-0.3..0.3));
    let target = c + Vec3::new(yaw.sin(), 0.0, yaw.cos()).scale(5.0);
    Pose::look_at(c, target, Vec3::new(0.0, 1.0, 0.0)).unwrap()
}

/// Splats the source pixels in the given order, keeping the nearest point
/// and, among equal depths, the lowest source index.
fn reference_warp(src: &Frame, sp: &Pose<f64>, dp: &Pose<f64>, k: &Intrinsics<f64>, order: &[usize]) -> WarpedFrame {
    let rel = relative_transform(sp, dp);
    let mut out = WarpedFrame::empty(W, H);
    let mut best: Vec<Option<(f64, usize)>> = vec![None; (W * H) as usize];
    for &i in order {
        let Some(z) = src.depth.get(i).filter(|_| !src.hole_mask.data[i]) else { continue };
        let (x, y) = ((i as u32 % W) as f64, (i as u32 / W) as f64);
        let z = z as f64;
        let p = Vec3::new((x - k.cx) * z / k.fx, (y - k.cy) * z / k.fy, z);
        let q = rel.transform(p);
        if q.z <= 0.0 {
            continue;
        }
        let u = (k.fx * q.x / q.z + k.cx + 0.5).floor();
        let v = (k.fy * q.y / q.z + k.cy + 0.5).floor();
        if u < 0.0 || v < 0.0 || u >= W as f64 || v >= H as f64 {
            continue;
        }
        let t = v as usize * W as usize + u as usize;
        let better = match best[t] {
            None => true,
            Some((bz, bi)) => q.z < bz || (q.z == bz && i < bi),
        };
        if better {
            best[t] = Some((q.z, i));
        }
    }
    for (t, b) in best.iter().enumerate() {
        if let Some((z, i)) = *b {
            out.color.data[t] = src.color.data[i];
            out.depth.set(t, z as f32);
            out.hole_mask.data[t] = false;
        }
    }
    out
}

/// Warped-frame-like layer with depths on a coarse grid, so candidates are
/// either tied exactly or far apart.
fn layer(seed: u64) -> WarpedFrame {
    let mut r = common::rng(seed);
    let mut f = WarpedFrame::empty(W, H);
    for i in 0..(W * H) as usize {
        if r.gen_bool(0.6) {
            f.color.data[i] = [r.gen(), r.gen(), r.gen()];
            f.depth.set(i, r.gen_range(1..4) as f32);
            f.hole_mask.data[i] = false;
        }
    }
    f
}

struct SolidInpaint(StubBackend);

impl Backend for SolidInpaint {
    fn is_stub(&self) -> bool {
        false
    }
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<ColorImage>> {
        self.0.generate(req)
    }
    fn depth(&self, req: &DepthRequest) -> Result<Vec<DepthMap<f32>>> {
        self.0.depth(req)
    }
    fn inpaint(&self, req: &InpaintRequest) -> Result<Vec<ColorImage>> {
        Ok(vec![ColorImage::new(req.image.width, req.image.height, [255, 1, 2]); req.n_candidates])
    }
    fn segment(&self, req: &SegmentRequest) -> Result<Mask> {
        self.0.segment(req)
    }
    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>> {
        self.0.score(req)
    }
}

fn seg(mask: Mask) -> SegMask {
    SegMask {
        mask,
        source: SegSource::Adapter,
        fallback: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warp_ignores_visiting_order(fs in any::<u64>(), ps in any::<u64>(), holes in 0.0f64..0.3) {
        let src = random_frame(fs, holes);
        let (sp, dp) = (random_pose(ps), random_pose(ps ^ 0x5555));
        let k = k();
        let got = warp(&src, &sp, &dp, &k);
        let mut order: Vec<usize> = (0..src.len()).collect();
        order.shuffle(&mut common::rng(fs.wrapping_add(ps)));
        let want = reference_warp(&src, &sp, &dp, &k, &order);
        prop_assert_eq!(&got.color, &want.color);
        prop_assert_eq!(&got.hole_mask, &want.hole_mask);
        for i in 0..src.len() {
            match (got.depth.get(i), want.depth.get(i)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-5 * b, "{} vs {}", a, b),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn warp_to_the_same_pose_is_identity(fs in any::<u64>(), ps in any::<u64>(), holes in 0.0f64..0.3) {
        let src = random_frame(fs, holes);
        let p = random_pose(ps);
        let out = warp(&src, &p, &p, &k());
        prop_assert_eq!(&out.color.data.iter().zip(&src.hole_mask.data).filter(|(_, &h)| !h).map(|(c, _)| *c).collect::<Vec<_>>(),
            &src.color.data.iter().zip(&src.hole_mask.data).filter(|(_, &h)| !h).map(|(c, _)| *c).collect::<Vec<_>>());
        prop_assert_eq!(&out.hole_mask, &src.hole_mask);
        for i in 0..src.len() {
            if let Some(z) = src.depth.get(i) {
                prop_assert!((out.depth.get(i).unwrap() - z).abs() <= 1e-5 * z);
            }
        }
    }

    #[test]
    fn merge_is_idempotent_and_associative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (a, b, c) = (layer(a), layer(b), layer(c));
        prop_assert_eq!(&merge_warps(std::slice::from_ref(&a)).unwrap(), &a);
        prop_assert_eq!(&merge_warps(&[a.clone(), a.clone()]).unwrap(), &a);
        let all = merge_warps(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let left = merge_warps(&[merge_warps(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = merge_warps(&[a.clone(), merge_warps(&[b.clone(), c.clone()]).unwrap()]).unwrap();
        prop_assert_eq!(&left, &all);
        prop_assert_eq!(&right, &all);
        for i in 0..all.color.len() {
            let depths: Vec<f32> = [&a, &b, &c].iter().filter_map(|l| l.depth.get(i)).collect();
            let min = depths.iter().copied().reduce(f32::min);
            prop_assert_eq!(all.depth.get(i), min);
        }
    }

    #[test]
    fn routes_partition_the_holes(seed in any::<u64>(), thr in 1usize..40, rho in 0.0f64..=1.0) {
        let mut r = common::rng(seed);
        let holes = common::random_mask(&mut r, W, H);
        let part = partition_holes(&holes, thr);
        let fg_t = seg(Mask::from_fn(W, H, |_, _| r.gen_bool(0.2)));
        let fg_prev = seg(Mask::from_fn(W, H, |_, _| r.gen_bool(0.2)));
        let mut prev = random_frame(seed, 0.0);
        for i in 0..prev.len() {
            prev.hole_mask.data[i] = r.gen_bool(0.1);
        }
        let plan = plan_fills(&part, &fg_t, &fg_prev, &prev, rho);
        prop_assert_eq!(plan.routed_area().iter().sum::<usize>(), holes.count());
        let mut covered = vec![0u8; holes.data.len()];
        for (c, route) in &plan.entries {
            if c.area() < thr {
                prop_assert_eq!(*route, Route::Telea);
            }
            for &i in &c.pixels {
                covered[i] += 1;
            }
        }
        for (i, &n) in covered.iter().enumerate() {
            prop_assert_eq!(n, holes.data[i] as u8);
        }
    }

    #[test]
    fn external_inpaint_writes_only_the_component(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let holes = common::random_mask(&mut r, W, H);
        let part = partition_holes(&holes, 1);
        let mut frame = random_frame(seed, 0.0);
        for i in 0..frame.len() {
            if holes.data[i] {
                frame.hole_mask.data[i] = true;
                frame.depth.invalidate(i);
            }
        }
        let comp = part.large.choose(&mut r).unwrap().clone();
        let adapters = Adapters::uniform(Arc::new(SolidInpaint(StubBackend::default())));
        let before = frame.clone();
        external_inpaint(&mut frame, &comp, &InpaintRequestSpec::default(), &adapters).unwrap();
        let inside = comp.to_mask(W, H);
        for i in 0..frame.len() {
            if inside.data[i] {
                prop_assert_eq!(frame.color.data[i], [255, 1, 2]);
                prop_assert!(!frame.hole_mask.data[i]);
                prop_assert_eq!(frame.provenance[i], Provenance::External);
            } else {
                prop_assert_eq!(frame.color.data[i], before.color.data[i]);
                prop_assert_eq!(frame.hole_mask.data[i], before.hole_mask.data[i]);
                prop_assert_eq!(frame.depth.get(i), before.depth.get(i));
                prop_assert_eq!(frame.provenance[i], before.provenance[i]);
            }
        }
    }
}

#[test]
fn overlap_shrinks_along_the_arc() {
    let k = make_intrinsics(55.0, 96, 64).unwrap();
    let net = build_trajectory(&TrajectorySpec::orbit_arc(25, 4.0, 40.0), k, 0.0).unwrap();
    let scene = SceneSpec::standard(3);
    let base = render_oracle(&scene, &net.poses[0], &k, 0.0).frame;
    let ov: Vec<f64> = net.poses[1..]
        .iter()
        .map(|p| overlap(&[(&base, &net.poses[0])], p, &k))
        .collect();
    for w in ov.windows(2) {
        assert!(w[1] <= w[0], "{ov:?}");
    }
    assert!(ov[ov.len() - 1] < ov[0]);
}

#[test]
fn removing_the_object_removes_the_occlusion() {
    let k = make_intrinsics(55.0, 64, 40).unwrap();
    let src = Pose::identity();
    // dst sits in front of src, inside its frustum, slightly to the side
    let c = Vec3::new(0.3, 0.1, 1.5);
    let dst = Pose::look_at(c, c + Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)).unwrap();
    let with = SceneSpec::standard(1);
    let mut without = with.clone();
    without.objects.clear();
    assert!(occlusion_mask(&with, &src, &dst, &k, 0.0).count() > 0);
    assert_eq!(occlusion_mask(&without, &src, &dst, &k, 0.0).count(), 0);
}
