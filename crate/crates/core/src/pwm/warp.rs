//! Forward depth-image-based warping with nearest-pixel z-buffered splats.

use crate::camera::{backproject_unchecked, project_unchecked, relative_transform, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::frame::{Frame, WarpedFrame};
use crate::num::{cast, Real};

/// Depth difference below which two merge candidates count as tied.
pub const MERGE_TIE_EPS: f32 = 1e-6;

/// Calls `f(target_index, target_depth, source_index)` for every source pixel
/// that lands inside the target image. Source pixels are visited in
/// row-major order.
fn for_each_splat<T: Real>(
    src: &Frame,
    src_pose: &Pose<T>,
    dst_pose: &Pose<T>,
    k: &Intrinsics<T>,
    mut f: impl FnMut(usize, T, usize),
) {
    let rel = relative_transform(src_pose, dst_pose);
    let (w, h) = (src.width() as usize, src.height() as usize);
    let (wt, ht) = (T::lit(k.width as f64), T::lit(k.height as f64));
    let half = T::lit(0.5);
    for y in 0..h {
        let py = T::lit(y as f64);
        for x in 0..w {
            let i = y * w + x;
            if src.hole_mask.data[i] {
                continue;
            }
            let Some(z) = src.depth.get(i) else { continue };
            let p_src = backproject_unchecked([T::lit(x as f64), py], cast(z), k);
            let p_dst = rel.transform(p_src);
            if !(p_dst.z > T::zero()) {
                continue;
            }
            let (uv, zd) = project_unchecked(p_dst, k);
            let (u, v) = ((uv[0] + half).floor(), (uv[1] + half).floor());
            if !(u >= T::zero() && u < wt && v >= T::zero() && v < ht) {
                continue;
            }
            let t = v.to_usize().unwrap() * k.width as usize + u.to_usize().unwrap();
            f(t, zd, i);
        }
    }
}

/// Forward-warps `src` from `src_pose` into `dst_pose`.
///
/// Each valid source pixel is lifted with its depth, moved rigidly into the
/// target camera and splatted onto the nearest target pixel. Collisions keep
/// the smallest target depth, then the lowest source index, so the result
/// does not depend on visiting order. Points behind the target camera or
/// outside its image are dropped.
pub fn warp<T: Real>(src: &Frame, src_pose: &Pose<T>, dst_pose: &Pose<T>, k: &Intrinsics<T>) -> WarpedFrame {
    let (w, h) = (k.width, k.height);
    let mut out = WarpedFrame::empty(w, h);
    if src.width() != w || src.height() != h {
        return out;
    }
    let n = out.color.len();
    let mut zbuf = vec![T::infinity(); n];
    let mut winner = vec![usize::MAX; n];
    for_each_splat(src, src_pose, dst_pose, k, |t, z, i| {
        if z < zbuf[t] || (z == zbuf[t] && i < winner[t]) {
            zbuf[t] = z;
            winner[t] = i;
        }
    });
    for t in 0..n {
        let i = winner[t];
        if i == usize::MAX {
            continue;
        }
        let z: f32 = cast(zbuf[t]);
        out.color.data[t] = src.color.data[i];
        out.depth.set(t, z);
        // a depth that underflows f32 cannot be stored; leave the hole
        out.hole_mask.data[t] = !out.depth.is_valid(t);
    }
    out
}

/// Target pixels hit by at least one splat of `src`.
pub fn warp_coverage<T: Real>(src: &Frame, src_pose: &Pose<T>, dst_pose: &Pose<T>, k: &Intrinsics<T>) -> Vec<bool> {
    let mut hit = vec![false; k.pixel_count()];
    if src.width() == k.width && src.height() == k.height {
        for_each_splat(src, src_pose, dst_pose, k, |t, _, _| hit[t] = true);
    }
    hit
}

/// Per-pixel z-buffer merge of warps into the same target.
///
/// The smallest depth wins; candidates within [`MERGE_TIE_EPS`] of the
/// current winner lose to the earlier entry in `warps`.
pub fn merge_warps(warps: &[WarpedFrame]) -> Result<WarpedFrame> {
    let first = warps
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to merge".into()))?;
    let (w, h) = (first.color.width, first.color.height);
    if warps.iter().any(|c| c.color.width != w || c.color.height != h || c.depth.width != w || c.depth.height != h) {
        return Err(Error::InvalidInput("merge candidates differ in size".into()));
    }
    let mut out = WarpedFrame::empty(w, h);
    for t in 0..out.color.len() {
        let mut best: Option<(usize, f32)> = None;
        for (c, cand) in warps.iter().enumerate() {
            if cand.hole_mask.data[t] {
                continue;
            }
            let Some(z) = cand.depth.get(t) else { continue };
            match best {
                Some((_, bz)) if !(z < bz && bz - z >= MERGE_TIE_EPS) => {}
                _ => best = Some((c, z)),
            }
        }
        if let Some((c, z)) = best {
            out.color.data[t] = warps[c].color.data[t];
            out.depth.set(t, z);
            out.hole_mask.data[t] = false;
        }
    }
    Ok(out)
}
