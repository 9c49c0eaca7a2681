//! Depth-map conditioning: least-squares scale/shift alignment and
//! edge-snapping bilateral sharpening.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cast, Real};
use crate::raster::Mask;

/// Depth raster. Invalid entries are stored as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<T> {
    pub width: u32,
    pub height: u32,
    values: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Real> DepthMap<T> {
    /// Builds a map from raw values; entries that are not positive and finite
    /// become invalid.
    pub fn from_values(width: u32, height: u32, values: Vec<T>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "depth buffer has {} values, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        let mut m = Self {
            width,
            height,
            valid: vec![false; values.len()],
            values,
        };
        for i in 0..m.values.len() {
            let v = m.values[i];
            if v > T::zero() && v.is_finite() {
                m.valid[i] = true;
            } else {
                m.values[i] = T::zero();
            }
        }
        Ok(m)
    }

    pub fn invalid(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            values: vec![T::zero(); n],
            valid: vec![false; n],
        }
    }

    pub fn constant(width: u32, height: u32, value: T) -> Self {
        let n = width as usize * height as usize;
        Self::from_values(width, height, vec![value; n]).unwrap_or_else(|_| Self::invalid(width, height))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<T> {
        self.valid[i].then(|| self.values[i])
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// Raw values; zero where invalid.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn validity(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.valid.clone(),
        }
    }

    /// Sets pixel `i`; non-positive or non-finite values invalidate it.
    pub fn set(&mut self, i: usize, v: T) {
        if v > T::zero() && v.is_finite() {
            self.values[i] = v;
            self.valid[i] = true;
        } else {
            self.invalidate(i);
        }
    }

    pub fn invalidate(&mut self, i: usize) {
        self.values[i] = T::zero();
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `(min, max)` over valid pixels.
    pub fn valid_range(&self) -> Option<(T, T)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn cast<U: Real>(&self) -> DepthMap<U> {
        let values = self.values.iter().map(|&v| cast(v)).collect();
        // an f64 -> f32 cast may flush tiny depths to zero
        DepthMap::from_values(self.width, self.height, values)
            .expect("dimensions unchanged by cast")
    }

    fn same_shape<U>(&self, other: &DepthMap<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Least-squares scale/shift taking predicted depth onto reference depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult<T> {
    pub gamma: T,
    pub beta: T,
    pub rms_residual: T,
    pub n_pixels: usize,
}

impl<T: Real> AlignmentResult<T> {
    pub fn identity() -> Self {
        Self {
            gamma: T::one(),
            beta: T::zero(),
            rms_residual: T::zero(),
            n_pixels: 0,
        }
    }
}

/// Solves `min Σ_m (γ·d̂ + β − d)²` in closed form.
///
/// Pixels are summed in sorted order, which makes the result independent of
/// pixel ordering.
pub fn align_depth<T: Real>(d_hat: &DepthMap<T>, d_ref: &DepthMap<T>, mask: &Mask) -> Result<AlignmentResult<T>> {
    if !d_hat.same_shape(d_ref) || mask.width != d_hat.width || mask.height != d_hat.height {
        return Err(Error::InvalidInput("alignment inputs differ in size".into()));
    }
    let mut pairs: Vec<(T, T)> = (0..d_hat.len())
        .filter(|&i| mask.data[i] && d_hat.valid[i] && d_ref.valid[i])
        .map(|i| (d_hat.values[i], d_ref.values[i]))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::SingularSystem(format!("{n} usable pixel(s); need at least 2")));
    }
    pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    if pairs[0].0 == pairs[n - 1].0 {
        return Err(Error::SingularSystem("predicted depth is constant over the mask".into()));
    }

    let nf = T::lit(n as f64);
    let (sx, sy) = pairs.iter().fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / nf, sy / nf);
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for &(x, y) in &pairs {
        let dx = x - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    if !(sxx > T::zero()) {
        return Err(Error::SingularSystem("zero variance in predicted depth".into()));
    }
    let gamma = sxy / sxx;
    let beta = my - gamma * mx;
    let sq = pairs.iter().fold(T::zero(), |acc, &(x, y)| {
        let r = gamma * x + beta - y;
        acc + r * r
    });
    Ok(AlignmentResult {
        gamma,
        beta,
        rms_residual: (sq / nf).sqrt(),
        n_pixels: n,
    })
}

/// Applies `γ·d̂ + β` per valid pixel; non-positive results become invalid.
pub fn apply_alignment<T: Real>(d_hat: &DepthMap<T>, a: &AlignmentResult<T>) -> DepthMap<T> {
    let mut out = d_hat.clone();
    for i in 0..out.len() {
        if out.valid[i] {
            let v = a.gamma * out.values[i] + a.beta;
            out.set(i, v);
        }
    }
    out
}

/// Bilateral filter over valid depth that snaps mixed pixels at depth edges.
///
/// Where the window's valid depths span at most `2·sigma_range` this is the
/// ordinary bilateral filter centered on the pixel's own depth. Across a
/// larger span the range kernel is centered on whichever window extreme is
/// closer to the pixel (the nearer surface on ties), so pixels blended
/// across a discontinuity are pulled onto one side instead of smeared. The
/// output is always a convex combination of valid window values. Invalid
/// pixels are left untouched and never contribute.
pub fn sharpen_depth<T: Real>(
    d: &DepthMap<T>,
    filter_size: usize,
    sigma_space: T,
    sigma_range: T,
) -> Result<DepthMap<T>> {
    if filter_size == 0 || filter_size % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "bilateral filter size must be odd, got {filter_size}"
        )));
    }
    if !(sigma_space > T::zero() && sigma_range > T::zero()) {
        return Err(Error::InvalidConfig("bilateral sigmas must be positive".into()));
    }
    let (w, h) = (d.width as usize, d.height as usize);
    let r = (filter_size / 2) as i64;
    let two = T::lit(2.0);
    let inv_s = T::one() / (two * sigma_space * sigma_space);
    let inv_r = T::one() / (two * sigma_range * sigma_range);
    let edge_span = two * sigma_range;
    let spatial: Vec<T> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-T::lit((dx * dx + dy * dy) as f64) * inv_s).exp())
        .collect();

    let mut values = d.values.clone();
    values.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !d.valid[i] {
                continue;
            }
            let center = d.values[i];
            let (mut lo, mut hi) = (center, center);
            for_window(x, y, w, h, r, |j, _| {
                if d.valid[j] {
                    lo = lo.min(d.values[j]);
                    hi = hi.max(d.values[j]);
                }
            });
            let reference = if hi - lo <= edge_span {
                center
            } else if center - lo <= hi - center {
                lo
            } else {
                hi
            };
            let (mut num, mut den) = (T::zero(), T::zero());
            for_window(x, y, w, h, r, |j, k| {
                if d.valid[j] {
                    let v = d.values[j];
                    let dr = v - reference;
                    let wgt = spatial[k] * (-dr * dr * inv_r).exp();
                    num += wgt * v;
                    den += wgt;
                }
            });
            let v = if den > T::zero() { num / den } else { center };
            // clamp guards the last ulp of the convex combination
            *out = v.max(lo).min(hi);
        }
    });
    Ok(DepthMap {
        width: d.width,
        height: d.height,
        values,
        valid: d.valid.clone(),
    })
}

/// Visits the in-bounds pixels of the `(2r+1)²` window centered on `(x, y)`,
/// passing the pixel index and the kernel offset index.
#[inline]
fn for_window(x: usize, y: usize, w: usize, h: usize, r: i64, mut f: impl FnMut(usize, usize)) {
    let side = (2 * r + 1) as usize;
    for dy in -r..=r {
        let yy = y as i64 + dy;
        if yy < 0 || yy >= h as i64 {
            continue;
        }
        for dx in -r..=r {
            let xx = x as i64 + dx;
            if xx < 0 || xx >= w as i64 {
                continue;
            }
            let k = (dy + r) as usize * side + (dx + r) as usize;
            f(yy as usize * w + xx as usize, k);
        }
    }
}

/// Applies [`sharpen_depth`] once per filter size, in order.
pub fn sharpen_depth_sweep<T: Real>(d: &DepthMap<T>, sizes: &[usize], sigma_space: T, sigma_range: T) -> Result<DepthMap<T>> {
    sizes
        .iter()
        .try_fold(d.clone(), |acc, &s| sharpen_depth(&acc, s, sigma_space, sigma_range))
}
