//! Pinhole camera model, rigid poses and virtual camera rigs.
//!
//! Poses are world-to-camera: `x_cam = R * x_world + t`. Camera axes follow
//! the image convention (x right, y down, z forward). Pixel coordinates put
//! the center of pixel `(col, row)` at `(col, row)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::num::{cast, Real};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be at least 1x1".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::InvalidConfig(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        Intrinsics {
            fx: cast(self.fx),
            fy: cast(self.fy),
            cx: cast(self.cx),
            cy: cast(self.cy),
            width: self.width,
            height: self.height,
        }
    }
}

/// Intrinsics from a horizontal field of view, square pixels and a centered
/// principal point.
pub fn make_intrinsics<T: Real>(fov_h_deg: T, width: u32, height: u32) -> Result<Intrinsics<T>> {
    if !(fov_h_deg > T::zero() && fov_h_deg < T::lit(180.0)) {
        return Err(Error::InvalidConfig(format!(
            "horizontal field of view must be in (0, 180) degrees, got {fov_h_deg}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("image size must be at least 1x1".into()));
    }
    let half_w = T::lit(width as f64) / T::lit(2.0);
    let fx = half_w / (fov_h_deg.to_radians() / T::lit(2.0)).tan();
    Intrinsics::new(fx, fx, half_w, T::lit(height as f64) / T::lit(2.0), width, height)
}

/// Lifts pixel `(px, py)` at depth `z` into the camera frame.
pub fn backproject<T: Real>(p: [T; 2], z: T, k: &Intrinsics<T>) -> Result<Vec3<T>> {
    if !(z > T::zero()) || !z.is_finite() {
        return Err(Error::InvalidDepth(z.to_f64_lossy()));
    }
    Ok(backproject_unchecked(p, z, k))
}

#[inline]
pub(crate) fn backproject_unchecked<T: Real>(p: [T; 2], z: T, k: &Intrinsics<T>) -> Vec3<T> {
    Vec3::new((p[0] - k.cx) * z / k.fx, (p[1] - k.cy) * z / k.fy, z)
}

/// Projects a camera-frame point to pixel coordinates and depth.
pub fn project<T: Real>(x: Vec3<T>, k: &Intrinsics<T>) -> Result<([T; 2], T)> {
    if !(x.z > T::zero()) {
        return Err(Error::BehindCamera(x.z.to_f64_lossy()));
    }
    Ok(project_unchecked(x, k))
}

#[inline]
pub(crate) fn project_unchecked<T: Real>(x: Vec3<T>, k: &Intrinsics<T>) -> ([T; 2], T) {
    ([k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy], x.z)
}

/// Rigid world-to-camera transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let p = Self {
            rotation,
            translation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        // f32 rotations cannot meet 1e-9; scale the tolerance with the type.
        let tol = T::lit(ROTATION_TOLERANCE).max(T::epsilon() * T::lit(64.0));
        let rtr = &self.rotation.transpose() * &self.rotation;
        let orth = rtr.max_abs_diff(&Mat3::identity());
        let det = self.rotation.det();
        if !(orth <= tol) || !((det - T::one()).abs() <= tol) {
            return Err(Error::InvalidConfig(format!(
                "rotation is not proper orthonormal (|RtR - I| = {orth}, det = {det})"
            )));
        }
        let t = &self.translation;
        if !(t.x.is_finite() && t.y.is_finite() && t.z.is_finite()) {
            return Err(Error::InvalidConfig("translation must be finite".into()));
        }
        Ok(())
    }

    /// Camera pose at `center` looking at `target`. `down` is the world
    /// direction that should map to image-down.
    pub fn look_at(center: Vec3<T>, target: Vec3<T>, down: Vec3<T>) -> Result<Self> {
        let forward = target - center;
        if !(forward.norm() > T::zero()) {
            return Err(Error::InvalidConfig("look-at target coincides with camera center".into()));
        }
        let z = forward.normalized();
        let x = down.cross(&z);
        if !(x.norm() > T::lit(1e-12)) {
            return Err(Error::InvalidConfig("look-at direction parallel to the down vector".into()));
        }
        let x = x.normalized();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(x, y, z);
        let translation = -(&rotation * center);
        Self::new(rotation, translation)
    }

    /// Maps a world point into this camera's frame.
    #[inline]
    pub fn transform(&self, x_world: Vec3<T>) -> Vec3<T> {
        &self.rotation * x_world + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            translation: -(&rt * self.translation),
            rotation: rt,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: &self.rotation * &other.rotation,
            translation: &self.rotation * other.translation + self.translation,
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        -(&self.rotation.transpose() * self.translation)
    }

    /// 4×4 row-major homogeneous matrix.
    pub fn to_matrix4(&self) -> [[T; 4]; 4] {
        let r = &self.rotation.m;
        let t = &self.translation;
        let (o, z) = (T::one(), T::zero());
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [z, z, z, o],
        ]
    }

    pub fn from_matrix4(m: &[[T; 4]; 4]) -> Result<Self> {
        let (o, z) = (T::one(), T::zero());
        if m[3] != [z, z, z, o] {
            return Err(Error::InvalidConfig("last row of a pose matrix must be [0 0 0 1]".into()));
        }
        let rotation = Mat3 {
            m: [
                [m[0][0], m[0][1], m[0][2]],
                [m[1][0], m[1][1], m[1][2]],
                [m[2][0], m[2][1], m[2][2]],
            ],
        };
        Self::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]))
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

/// Rigid map taking camera-`i` coordinates to camera-`j` coordinates.
pub fn relative_transform<T: Real>(pose_i: &Pose<T>, pose_j: &Pose<T>) -> Pose<T> {
    pose_j.compose(&pose_i.inverse())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Cameras on a horizontal circular arc around `look_at`.
    OrbitArc,
    /// Parallel cameras on a horizontal line.
    LateralLine,
    /// Explicit list of poses.
    CustomList,
}

/// Shape of the virtual rig.
///
/// Orbit: camera `k` sits at angle `(k - base) * total_angle / (n - 1)` on a
/// circle of `radius` around `look_at`, with angle zero at
/// `look_at - radius * z`. Lateral line: centers at `(k - base) * baseline /
/// (n - 1)` along world x, all with identity rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec<T> {
    pub kind: TrajectoryKind,
    pub num_views: usize,
    #[serde(default)]
    pub radius: T,
    #[serde(default)]
    pub baseline: T,
    #[serde(default)]
    pub total_angle_deg: T,
    #[serde(default)]
    pub look_at: Vec3<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poses: Vec<Pose<T>>,
}

impl<T: Real> TrajectorySpec<T> {
    pub fn orbit_arc(num_views: usize, radius: T, total_angle_deg: T) -> Self {
        Self {
            kind: TrajectoryKind::OrbitArc,
            num_views,
            radius,
            baseline: T::zero(),
            total_angle_deg,
            look_at: Vec3::new(T::zero(), T::zero(), radius),
            poses: Vec::new(),
        }
    }

    pub fn lateral_line(num_views: usize, baseline: T) -> Self {
        Self {
            kind: TrajectoryKind::LateralLine,
            num_views,
            radius: T::zero(),
            baseline,
            total_angle_deg: T::zero(),
            look_at: Vec3::zero(),
            poses: Vec::new(),
        }
    }

    pub fn custom(poses: Vec<Pose<T>>) -> Self {
        Self {
            kind: TrajectoryKind::CustomList,
            num_views: poses.len(),
            radius: T::zero(),
            baseline: T::zero(),
            total_angle_deg: T::zero(),
            look_at: Vec3::zero(),
            poses,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_views == 0 {
            return Err(Error::InvalidConfig("trajectory needs at least one view".into()));
        }
        match self.kind {
            TrajectoryKind::OrbitArc if !(self.radius > T::zero()) => Err(Error::InvalidConfig(
                format!("orbit radius must be positive, got {}", self.radius),
            )),
            TrajectoryKind::LateralLine if !(self.baseline >= T::zero()) => Err(
                Error::InvalidConfig(format!("baseline must be non-negative, got {}", self.baseline)),
            ),
            TrajectoryKind::CustomList if self.poses.len() != self.num_views => {
                Err(Error::InvalidConfig(format!(
                    "custom trajectory lists {} poses but num_views is {}",
                    self.poses.len(),
                    self.num_views
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Posed cameras sharing one set of intrinsics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraNetwork<T> {
    pub intrinsics: Intrinsics<T>,
    pub poses: Vec<Pose<T>>,
    pub base_index: usize,
}

impl<T: Real> CameraNetwork<T> {
    pub fn new(intrinsics: Intrinsics<T>, poses: Vec<Pose<T>>, base_index: usize) -> Result<Self> {
        intrinsics.validate()?;
        if base_index >= poses.len() {
            return Err(Error::InvalidConfig(format!(
                "base index {base_index} out of range for {} poses",
                poses.len()
            )));
        }
        for p in &poses {
            p.validate()?;
        }
        Ok(Self {
            intrinsics,
            poses,
            base_index,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn base_pose(&self) -> &Pose<T> {
        &self.poses[self.base_index]
    }
}

/// Builds the virtual rig described by `spec`. The base camera (holding the
/// source video) is `round(base_fraction * (num_views - 1))`.
pub fn build_trajectory<T: Real>(
    spec: &TrajectorySpec<T>,
    intrinsics: Intrinsics<T>,
    base_fraction: T,
) -> Result<CameraNetwork<T>> {
    spec.validate()?;
    if !(base_fraction >= T::zero() && base_fraction <= T::one()) {
        return Err(Error::InvalidConfig(format!(
            "base fraction must lie in [0, 1], got {base_fraction}"
        )));
    }
    let n = spec.num_views;
    let last = T::lit((n - 1) as f64);
    let base_index = (base_fraction * last).round().to_usize().unwrap_or(0).min(n - 1);
    let offset = |k: usize| T::lit(k as f64) - T::lit(base_index as f64);
    let down = Vec3::new(T::zero(), T::one(), T::zero());

    let poses = match spec.kind {
        TrajectoryKind::OrbitArc => {
            let step = if n > 1 {
                spec.total_angle_deg.to_radians() / last
            } else {
                T::zero()
            };
            (0..n)
                .map(|k| {
                    let theta = offset(k) * step;
                    let (s, c) = theta.sin_cos();
                    let center = spec.look_at + Vec3::new(s, T::zero(), -c).scale(spec.radius);
                    Pose::look_at(center, spec.look_at, down)
                })
                .collect::<Result<Vec<_>>>()?
        }
        TrajectoryKind::LateralLine => {
            let spacing = if n > 1 { spec.baseline / last } else { T::zero() };
            (0..n)
                .map(|k| {
                    let center = Vec3::new(offset(k) * spacing, T::zero(), T::zero());
                    Pose {
                        rotation: Mat3::identity(),
                        translation: -center,
                    }
                })
                .collect()
        }
        TrajectoryKind::CustomList => spec.poses.clone(),
    };
    CameraNetwork::new(intrinsics, poses, base_index)
}
