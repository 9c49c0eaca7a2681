//! Synthetic dynamic scenes with exact depth: the verification oracle and
//! the model-free source of input video.
//!
//! World coordinates coincide with the default base camera: x right, y
//! down, z forward. The background is the plane `z = depth`; objects are
//! textured quads or spheres moving linearly over `t ∈ [0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geom::{Mat3, Vec3};
use crate::raster::{ColorImage, Mask, Rgb8};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    /// World z of the background plane.
    pub depth: f64,
    /// Half size of the square plane.
    pub half_extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shape {
    /// Rectangle in the object's local x/y plane.
    Quad { half_width: f64, half_height: f64 },
    Sphere { radius: f64 },
}

impl Shape {
    fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Quad {
                half_width,
                half_height,
            } => half_width.hypot(half_height),
            Shape::Sphere { radius } => radius,
        }
    }
}

/// Displacement and extra yaw accumulated between `t = 0` and `t = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub translation: Vec3<f64>,
    #[serde(default)]
    pub yaw_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub center: Vec3<f64>,
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub motion: Motion,
}

impl SceneObject {
    fn at(&self, t: f64) -> (Vec3<f64>, Mat3<f64>) {
        let c = self.center + self.motion.translation.scale(t);
        let yaw = (self.yaw_deg + self.motion.yaw_deg * t).to_radians();
        (c, Mat3::rot_y(yaw))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub background: Background,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    /// Near quad drifting sideways in front of a far plane.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            background: Background {
                depth: 8.0,
                half_extent: 60.0,
            },
            objects: vec![SceneObject {
                shape: Shape::Quad {
                    half_width: 1.0,
                    half_height: 0.8,
                },
                center: Vec3::new(-0.4, 0.1, 4.0),
                yaw_deg: 0.0,
                motion: Motion {
                    translation: Vec3::new(0.8, 0.0, 0.0),
                    yaw_deg: 0.0,
                },
            }],
        }
    }

    /// Background plane only.
    pub fn plane(seed: u64, depth: f64) -> Self {
        Self {
            seed,
            background: Background {
                depth,
                half_extent: 200.0,
            },
            objects: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bg = &self.background;
        if !(bg.depth > 0.0 && bg.half_extent > 0.0) {
            return Err(Error::InvalidConfig("background needs positive depth and extent".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let r = o.shape.bounding_radius();
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(format!("object {i} has empty extent")));
            }
            // linear motion: the endpoints bound the whole path
            for t in [0.0, 1.0] {
                let (c, _) = o.at(t);
                if c.z + r >= bg.depth {
                    return Err(Error::InvalidConfig(format!(
                        "object {i} reaches the background plane at t = {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn textures(&self) -> Vec<Texture> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..=self.objects.len()).map(|_| Texture::random(&mut rng)).collect()
    }
}

/// Smooth procedural color pattern over a surface's (u, v) coordinates.
#[derive(Clone, Debug)]
struct Texture {
    base: [f64; 3],
    amp: [f64; 3],
    freq: [[f64; 2]; 3],
    phase: [f64; 3],
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut t = Texture {
            base: [0.0; 3],
            amp: [0.0; 3],
            freq: [[0.0; 2]; 3],
            phase: [0.0; 3],
        };
        for c in 0..3 {
            t.base[c] = rng.gen_range(70.0..185.0);
            t.amp[c] = rng.gen_range(25.0..55.0);
            t.freq[c] = [rng.gen_range(0.15..0.45), rng.gen_range(0.15..0.45)];
            t.phase[c] = rng.gen_range(0.0..std::f64::consts::TAU);
        }
        t
    }

    fn sample(&self, u: f64, v: f64) -> Rgb8 {
        [0, 1, 2].map(|c| {
            let a = std::f64::consts::TAU * (self.freq[c][0] * u + self.freq[c][1] * v) + self.phase[c];
            (self.base[c] + self.amp[c] * a.sin()).round().clamp(0.0, 255.0) as u8
        })
    }
}

/// Nearest intersection along a ray: parameter, primitive index (0 is the
/// background, `k + 1` is object `k`) and surface coordinates.
#[derive(Clone, Copy, Debug)]
struct Hit {
    s: f64,
    prim: usize,
    uv: (f64, f64),
}

struct Posed {
    center: Vec3<f64>,
    rot: Mat3<f64>,
}

fn posed_objects(scene: &SceneSpec, t: f64) -> Vec<Posed> {
    scene
        .objects
        .iter()
        .map(|o| {
            let (center, rot) = o.at(t);
            Posed { center, rot }
        })
        .collect()
}

/// Intersects the ray `origin + s·dir`, `s > 0`, with every primitive and
/// keeps the nearest hit.
fn trace(scene: &SceneSpec, posed: &[Posed], origin: Vec3<f64>, dir: Vec3<f64>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |h: Hit| {
        if h.s > 0.0 && best.map_or(true, |b| h.s < b.s) {
            best = Some(h);
        }
    };

    let bg = &scene.background;
    if dir.z != 0.0 {
        let s = (bg.depth - origin.z) / dir.z;
        let p = origin + dir.scale(s);
        if p.x.abs() <= bg.half_extent && p.y.abs() <= bg.half_extent {
            consider(Hit { s, prim: 0, uv: (p.x, p.y) });
        }
    }

    for (k, (obj, pose)) in scene.objects.iter().zip(posed).enumerate() {
        let axis = |j: usize| Vec3::new(pose.rot.m[0][j], pose.rot.m[1][j], pose.rot.m[2][j]);
        match obj.shape {
            Shape::Quad {
                half_width,
                half_height,
            } => {
                let n = axis(2);
                let denom = dir.dot(&n);
                if denom == 0.0 {
                    continue;
                }
                let s = (pose.center - origin).dot(&n) / denom;
                let local = origin + dir.scale(s) - pose.center;
                let (u, v) = (local.dot(&axis(0)), local.dot(&axis(1)));
                if u.abs() <= half_width && v.abs() <= half_height {
                    consider(Hit { s, prim: k + 1, uv: (u, v) });
                }
            }
            Shape::Sphere { radius } => {
                let oc = origin - pose.center;
                let a = dir.dot(&dir);
                let b = oc.dot(&dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                for s in [(-b - sq) / a, (-b + sq) / a] {
                    if s > 0.0 {
                        let p = origin + dir.scale(s) - pose.center;
                        // equirectangular coordinates, scaled to surface length
                        let lon = p.dot(&axis(0)).atan2(p.dot(&axis(2)));
                        let lat = (p.dot(&axis(1)) / radius).clamp(-1.0, 1.0).asin();
                        consider(Hit { s, prim: k + 1, uv: (lon * radius, lat * radius) });
                        break;
                    }
                }
            }
        }
    }
    best
}

/// Ray through pixel `(x, y)` in world coordinates, scaled so that its
/// camera-frame z component is 1; the hit parameter is then the depth.
fn pixel_ray(pose: &Pose<f64>, k: &Intrinsics<f64>, x: f64, y: f64) -> (Vec3<f64>, Vec3<f64>) {
    let d_cam = Vec3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
    (pose.center(), &pose.rotation.transpose() * d_cam)
}

/// Exact render in `f64`.
#[derive(Clone, Debug)]
pub struct OracleRenderF64 {
    pub color: ColorImage,
    /// Camera-frame depth; NaN where no surface is hit.
    pub depth: Vec<f64>,
    pub object_mask: Mask,
}

pub fn render_oracle_f64(scene: &SceneSpec, pose: &Pose<f64>, k: &Intrinsics<f64>, t: f64) -> OracleRenderF64 {
    let textures = scene.textures();
    let posed = posed_objects(scene, t);
    let (w, h) = (k.width, k.height);
    let n = w as usize * h as usize;
    let mut color = ColorImage::new(w, h, [0, 0, 0]);
    let mut depth = vec![f64::NAN; n];
    let mut object = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let i = y as usize * w as usize + x as usize;
            let (o, d) = pixel_ray(pose, k, x as f64, y as f64);
            if let Some(hit) = trace(scene, &posed, o, d) {
                color.data[i] = textures[hit.prim].sample(hit.uv.0, hit.uv.1);
                depth[i] = hit.s;
                object.data[i] = hit.prim > 0;
            }
        }
    }
    OracleRenderF64 {
        color,
        depth,
        object_mask: object,
    }
}

#[derive(Clone, Debug)]
pub struct OracleRender {
    pub frame: Frame,
    pub object_mask: Mask,
}

/// Renders the scene at time `t` from `pose`: a hole-free frame labeled
/// `Original`, plus the mask of object (non-background) pixels.
pub fn render_oracle(scene: &SceneSpec, pose: &Pose<f64>, k: &Intrinsics<f64>, t: f64) -> OracleRender {
    let r = render_oracle_f64(scene, pose, k, t);
    let depth = DepthMap::from_values(k.width, k.height, r.depth.iter().map(|&d| d as f32).collect())
        .expect("render size matches intrinsics");
    let frame = Frame {
        hole_mask: Mask::new(k.width, k.height, false),
        provenance: vec![crate::frame::Provenance::Original; r.color.len()],
        color: r.color,
        depth,
    };
    OracleRender {
        frame,
        object_mask: r.object_mask,
    }
}

/// True where the `dst` camera sees a surface point that is not visible
/// from `src` (occluded, behind it, or outside its image).
pub fn occlusion_mask(scene: &SceneSpec, src: &Pose<f64>, dst: &Pose<f64>, k: &Intrinsics<f64>, t: f64) -> Mask {
    let posed = posed_objects(scene, t);
    let c_src = src.center();
    let (w, h) = (k.width, k.height);
    Mask::from_fn(w, h, |x, y| {
        let (o, d) = pixel_ray(dst, k, x as f64, y as f64);
        let Some(hit) = trace(scene, &posed, o, d) else {
            return false;
        };
        let p = o + d.scale(hit.s);
        let xs = src.transform(p);
        if !(xs.z > 0.0) {
            return true;
        }
        let u = (k.fx * xs.x / xs.z + k.cx + 0.5).floor();
        let v = (k.fy * xs.y / xs.z + k.cy + 0.5).floor();
        if !(u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64) {
            return true;
        }
        match trace(scene, &posed, c_src, p - c_src) {
            Some(blocker) => blocker.s < 1.0 - 1e-6,
            None => false,
        }
    })
}

/// Base-view frames at `n` evenly spaced times in `[0, 1]`.
pub fn render_sequence(scene: &SceneSpec, pose: &Pose<f64>, k: &Intrinsics<f64>, n: usize) -> Vec<OracleRender> {
    sequence_times(n)
        .into_iter()
        .map(|t| render_oracle(scene, pose, k, t))
        .collect()
}

/// `k / (n - 1)` for `k < n`; a single frame sits at `t = 0`.
pub fn sequence_times(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::make_intrinsics;

    fn k() -> Intrinsics<f64> {
        make_intrinsics(90.0, 160, 96).unwrap()
    }

    fn orbit(angle_deg: f64) -> Pose<f64> {
        let look = Vec3::new(0.0, 0.0, 4.0);
        let a = angle_deg.to_radians();
        Pose::look_at(look + Vec3::new(a.sin(), 0.0, -a.cos()).scale(4.0), look, Vec3::new(0.0, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn deterministic() {
        let s = SceneSpec::standard(3);
        let a = render_oracle(&s, &orbit(7.0), &k(), 0.4);
        let b = render_oracle(&s, &orbit(7.0), &k(), 0.4);
        assert_eq!(a.frame, b.frame);
        assert_eq!(a.object_mask, b.object_mask);
        let other = render_oracle(&SceneSpec::standard(4), &orbit(7.0), &k(), 0.4);
        assert_ne!(a.frame.color, other.frame.color);
    }

    #[test]
    fn full_validity_from_orbit() {
        let s = SceneSpec::standard(1);
        for a in [-20.0, 0.0, 20.0] {
            let r = render_oracle(&s, &orbit(a), &k(), 1.0);
            assert_eq!(r.frame.depth.valid_count(), 160 * 96);
            assert!(r.object_mask.any());
        }
    }

    #[test]
    fn background_depth_is_ray_plane_intersection() {
        let s = SceneSpec::standard(1);
        let p = orbit(12.0);
        let kk = k();
        let r = render_oracle_f64(&s, &p, &kk, 0.0);
        let c = p.center();
        for (x, y) in [(0u32, 0u32), (159, 95), (5, 90), (150, 3)] {
            let i = (y * 160 + x) as usize;
            assert!(!r.object_mask.data[i]);
            // camera-frame ray with z = 1, rotated to world
            let d_cam = Vec3::new((x as f64 - kk.cx) / kk.fx, (y as f64 - kk.cy) / kk.fy, 1.0);
            let d = &p.rotation.transpose() * d_cam;
            let s_hit = (8.0 - c.z) / d.z;
            assert!((r.depth[i] - s_hit).abs() < 1e-6);
            let f = render_oracle(&s, &p, &kk, 0.0);
            assert!((f.frame.depth.get(i).unwrap() as f64 - s_hit).abs() < 1e-6);
        }
    }

    fn centroid(m: &Mask) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..m.height {
            for x in 0..m.width {
                if m.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        (sx / n, sy / n)
    }

    #[test]
    fn object_motion_projects() {
        let s = SceneSpec::standard(2);
        let p = Pose::identity();
        let a = render_oracle(&s, &p, &k(), 0.0);
        let b = render_oracle(&s, &p, &k(), 1.0);
        let (ca, cb) = (centroid(&a.object_mask), centroid(&b.object_mask));
        // 0.8 world units at depth 4 with fx = 80
        let expect = 80.0 * 0.8 / 4.0;
        assert!(((cb.0 - ca.0) - expect).abs() <= 1.0, "{} vs {}", cb.0 - ca.0, expect);
        assert!((cb.1 - ca.1).abs() <= 1.0);
    }

    #[test]
    fn occlusion_trivial_cases() {
        let s = SceneSpec::standard(2);
        let p = orbit(10.0);
        assert!(!occlusion_mask(&s, &p, &p, &k(), 0.3).any());
        let mut empty = s.clone();
        empty.objects.clear();
        // plane only, views overlapping: disocclusion only from frame borders
        let far = orbit(0.0);
        let m = occlusion_mask(&empty, &far, &far, &k(), 0.0);
        assert!(!m.any());
    }

    #[test]
    fn occlusion_grows_with_angle() {
        let s = SceneSpec::standard(5);
        let base = orbit(0.0);
        let areas: Vec<usize> = [5.0, 10.0, 15.0]
            .iter()
            .map(|&a| occlusion_mask(&s, &base, &orbit(a), &k(), 0.0).count())
            .collect();
        assert!(areas[0] > 0 && areas[0] < areas[1] && areas[1] < areas[2], "{areas:?}");
    }

    #[test]
    fn depth_consistent_under_small_pose_change() {
        let s = SceneSpec::standard(9);
        let kk = k();
        let p0 = orbit(0.0);
        let p1 = orbit(0.5);
        let r0 = render_oracle_f64(&s, &p0, &kk, 0.2);
        let r1 = render_oracle_f64(&s, &p1, &kk, 0.2);
        let occ = occlusion_mask(&s, &p1, &p0, &kk, 0.2);
        let mut checked = 0;
        for y in (0..96u32).step_by(7) {
            for x in (0..160u32).step_by(9) {
                let i = (y * 160 + x) as usize;
                if occ.data[i] {
                    continue;
                }
                let xw = p0.inverse().transform(crate::camera::backproject([x as f64, y as f64], r0.depth[i], &kk).unwrap());
                let (uv, z) = crate::camera::project(p1.transform(xw), &kk).unwrap();
                let (u, v) = (uv[0].round() as i64, uv[1].round() as i64);
                if u < 0 || v < 0 || u >= 160 || v >= 96 {
                    continue;
                }
                let j = v as usize * 160 + u as usize;
                if r0.object_mask.data[i] != r1.object_mask.data[j] {
                    continue; // silhouette pixel
                }
                // reprojected depth agrees with the render within one pixel's worth of slope
                let rel = (r1.depth[j] - z).abs() / z;
                assert!(rel < 0.02, "pixel ({x},{y}) rel depth error {rel}");
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn validation_rejects_objects_behind_background() {
        let mut s = SceneSpec::standard(0);
        s.objects[0].motion.translation = Vec3::new(0.0, 0.0, 4.0);
        assert!(s.validate().is_err());
        SceneSpec::standard(0).validate().unwrap();
    }
}
