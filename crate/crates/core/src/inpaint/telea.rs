//! Fast-marching inpainting after Telea.
//!
//! Arrival time `T` is propagated inward from the known region (`T = 0`)
//! with the usual first-order eikonal update. Hole pixels are frozen and
//! filled in increasing `(T, row-major index)` order; each fill is the
//! normalized weighted mean of known pixels within `radius` with weight
//! `dir · dst · lev` (d0 = T0 = 1).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::raster::{ColorImage, Mask, NEIGHBORS4};

pub const DEFAULT_TELEA_RADIUS: u32 = 3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    /// Known or already filled; T is final.
    Known,
    /// Tentative T in the heap.
    Band,
    /// Unreached hole pixel.
    Inside,
    /// Neither known nor to be filled; never read.
    Ignored,
}

/// Fills `mask` pixels of `image`; every other pixel counts as known.
pub fn telea_inpaint(image: &ColorImage, mask: &Mask, radius: u32) -> Result<ColorImage> {
    let known = Mask {
        width: mask.width,
        height: mask.height,
        data: mask.data.iter().map(|&m| !m).collect(),
    };
    telea_inpaint_with_known(image, mask, &known, radius)
}

/// Fills `fill` pixels using only `known` pixels as sources. Pixels in
/// neither set are ignored.
pub fn telea_inpaint_with_known(image: &ColorImage, fill: &Mask, known: &Mask, radius: u32) -> Result<ColorImage> {
    let (w, h) = (image.width as usize, image.height as usize);
    if fill.width != image.width || fill.height != image.height || known.width != image.width || known.height != image.height {
        return Err(Error::InvalidInput("inpaint mask size differs from image".into()));
    }
    if radius == 0 {
        return Err(Error::InvalidConfig("inpaint radius must be at least 1".into()));
    }
    let n = w * h;
    let mut out = image.clone();
    let to_fill = (0..n).filter(|&i| fill.data[i]).count();
    if to_fill == 0 {
        return Ok(out);
    }
    if !(0..n).any(|i| known.data[i] && !fill.data[i]) {
        return Err(Error::NothingToInpaintFrom);
    }

    let mut state: Vec<State> = (0..n)
        .map(|i| {
            if fill.data[i] {
                State::Inside
            } else if known.data[i] {
                State::Known
            } else {
                State::Ignored
            }
        })
        .collect();
    let mut t = vec![f64::INFINITY; n];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    // T >= 0 everywhere, so the IEEE bit pattern orders like the value
    let key = |v: f64| v.to_bits();

    for i in 0..n {
        if state[i] == State::Known {
            t[i] = 0.0;
            let (x, y) = (i % w, i / w);
            let borders_hole = neighbors(x, y, w, h).any(|j| state[j] == State::Inside);
            if borders_hole {
                heap.push(Reverse((key(0.0), i)));
            }
        }
    }

    let r2 = (radius * radius) as i64;
    let ri = radius as i64;
    let mut filled = 0usize;
    while let Some(Reverse((kt, i))) = heap.pop() {
        if kt != key(t[i]) || (state[i] == State::Known && fill.data[i]) {
            continue;
        }
        let was_hole = state[i] == State::Band;
        state[i] = State::Known;
        let (x, y) = (i % w, i / w);
        if was_hole {
            out.data[i] = fill_pixel(&out, &state, &t, x, y, w, h, ri, r2);
            filled += 1;
        }
        for j in neighbors(x, y, w, h) {
            if !matches!(state[j], State::Inside | State::Band) {
                continue;
            }
            let (jx, jy) = (j % w, j / w);
            let tj = arrival_time(&state, &t, jx, jy, w, h);
            if tj < t[j] {
                t[j] = tj;
                state[j] = State::Band;
                heap.push(Reverse((key(tj), j)));
            }
        }
    }
    if filled != to_fill {
        // some hole pixels are cut off from every known pixel
        return Err(Error::NothingToInpaintFrom);
    }
    Ok(out)
}

fn neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    NEIGHBORS4.into_iter().filter_map(move |(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64).then(|| ny as usize * w + nx as usize)
    })
}

/// Final T of a neighbor, if it has one.
#[inline]
fn known_t(state: &[State], t: &[f64], x: i64, y: i64, w: usize, h: usize) -> Option<f64> {
    if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
        return None;
    }
    let j = y as usize * w + x as usize;
    (state[j] == State::Known).then(|| t[j])
}

/// Eikonal update from the frozen 4-neighbors: minimum over the four
/// quadrant pairs of the two-sided solve.
fn arrival_time(state: &[State], t: &[f64], x: usize, y: usize, w: usize, h: usize) -> f64 {
    let (x, y) = (x as i64, y as i64);
    let mut best = f64::INFINITY;
    for (vy, hx) in [(y - 1, x - 1), (y - 1, x + 1), (y + 1, x - 1), (y + 1, x + 1)] {
        let a = known_t(state, t, x, vy, w, h);
        let b = known_t(state, t, hx, y, w, h);
        let s = match (a, b) {
            (Some(a), Some(b)) => {
                let d = a - b;
                if d.abs() >= 1.0 {
                    1.0 + a.min(b)
                } else {
                    (a + b + (2.0 - d * d).sqrt()) / 2.0
                }
            }
            (Some(a), None) => 1.0 + a,
            (None, Some(b)) => 1.0 + b,
            (None, None) => f64::INFINITY,
        };
        best = best.min(s);
    }
    best
}

/// Finite-difference gradient of T, using whichever neighbors have a T.
fn grad_t(t: &[f64], x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
    let at = |xx: i64, yy: i64| -> Option<f64> {
        if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
            return None;
        }
        let v = t[yy as usize * w + xx as usize];
        v.is_finite().then_some(v)
    };
    let (xi, yi) = (x as i64, y as i64);
    let c = t[y * w + x];
    let diff = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(l), Some(u)) => (u - l) / 2.0,
        (None, Some(u)) => u - c,
        (Some(l), None) => c - l,
        (None, None) => 0.0,
    };
    (diff(at(xi - 1, yi), at(xi + 1, yi)), diff(at(xi, yi - 1), at(xi, yi + 1)))
}

#[allow(clippy::too_many_arguments)]
fn fill_pixel(img: &ColorImage, state: &[State], t: &[f64], x: usize, y: usize, w: usize, h: usize, ri: i64, r2: i64) -> [u8; 3] {
    let tp = t[y * w + x];
    let (gx, gy) = grad_t(t, x, y, w, h);
    let gn = (gx * gx + gy * gy).sqrt();
    let mut acc = [0.0f64; 3];
    let mut wsum = 0.0f64;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let d2 = dx * dx + dy * dy;
            if d2 == 0 || d2 > r2 {
                continue;
            }
            let (qx, qy) = (x as i64 + dx, y as i64 + dy);
            if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                continue;
            }
            let q = qy as usize * w + qx as usize;
            if state[q] != State::Known {
                continue;
            }
            // r points from q to p
            let (rx, ry) = (-dx as f64, -dy as f64);
            let len2 = d2 as f64;
            let len = len2.sqrt();
            let dir = if gn > 0.0 {
                ((rx * gx + ry * gy) / (len * gn)).abs().max(1e-6)
            } else {
                1.0
            };
            let dst = 1.0 / len2;
            let lev = 1.0 / (1.0 + (tp - t[q]).abs());
            let wgt = dir * dst * lev;
            let v = img.data[q];
            for c in 0..3 {
                acc[c] += wgt * v[c] as f64;
            }
            wsum += wgt;
        }
    }
    debug_assert!(wsum > 0.0, "a frozen pixel always has a frozen 4-neighbor");
    [0, 1, 2].map(|c| (acc[c] / wsum).round().clamp(0.0, 255.0) as u8)
}
