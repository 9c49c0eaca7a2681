//! On-disk view-time matrix.
//!
//! ```text
//! manifest.json
//! cameras.json
//! cells.json
//! frames/cam{v:03}/t{t:03}.png       8-bit RGB
//! depth/cam{v:03}/t{t:03}.f32        "PS4D", u32 width, u32 height, f32 raster (LE, 0 = invalid)
//! provenance/cam{v:03}/t{t:03}.png   8-bit label codes 0..4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraNetwork, Intrinsics, Pose};
use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::frame::{Frame, Provenance};
use crate::pwm::WarpSchedule;
use crate::raster::{decode_gray_png, encode_gray_png, ColorImage, Mask};

use super::config::PipelineConfig;
use super::run::{CellMeta, ViewTimeMatrix};

pub const DEPTH_MAGIC: &[u8; 4] = b"PS4D";
pub const DEPTH_HEADER_BYTES: usize = 12;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub views: usize,
    pub timestamps: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub complete: bool,
    /// `[view, t]` of every stored cell; written only for partial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_cells: Option<Vec<[usize; 2]>>,
    pub times: Vec<f64>,
    pub schedule: Option<WarpSchedule>,
    /// Effective configuration the matrix was built with.
    pub config: Option<PipelineConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Cameras {
    intrinsics: Intrinsics<f64>,
    base_index: usize,
    /// Row-major world-to-camera matrices.
    world_to_camera: Vec<[[f64; 4]; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    view: usize,
    t: usize,
    meta: CellMeta,
}

pub fn cell_path(kind: &str, v: usize, t: usize, ext: &str) -> PathBuf {
    PathBuf::from(kind).join(format!("cam{v:03}")).join(format!("t{t:03}.{ext}"))
}

pub fn frame_path(v: usize, t: usize) -> PathBuf {
    cell_path("frames", v, t, "png")
}

pub fn depth_path(v: usize, t: usize) -> PathBuf {
    cell_path("depth", v, t, "f32")
}

pub fn provenance_path(v: usize, t: usize) -> PathBuf {
    cell_path("provenance", v, t, "png")
}

pub fn encode_depth_file(d: &DepthMap<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER_BYTES + 4 * d.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&d.width.to_le_bytes());
    out.extend_from_slice(&d.height.to_le_bytes());
    for v in d.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_depth_file(bytes: &[u8], path: &Path) -> Result<DepthMap<f32>> {
    if bytes.len() < DEPTH_HEADER_BYTES {
        return Err(Error::format(path, "truncated depth header"));
    }
    if &bytes[..4] != DEPTH_MAGIC {
        return Err(Error::format(path, "bad depth magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let (w, h) = (u32_at(4), u32_at(8));
    let n = w as usize * h as usize;
    if bytes.len() != DEPTH_HEADER_BYTES + 4 * n {
        return Err(Error::format(path, format!("{} bytes for a {w}x{h} raster", bytes.len())));
    }
    let values = bytes[DEPTH_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DepthMap::from_values(w, h, values)
}

fn write(dir: &Path, rel: &Path, bytes: &[u8]) -> Result<()> {
    let p = dir.join(rel);
    if let Some(parent) = p.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, Path::new(name), &serde_json::to_vec_pretty(value)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(&p, e.to_string()))
}

fn write_cells(m: &ViewTimeMatrix, dir: &Path, cells: &[(usize, usize)]) -> Result<()> {
    let mut records = Vec::with_capacity(cells.len());
    for &(v, t) in cells {
        let f = m.get(v, t).expect("listed cell");
        write(dir, &frame_path(v, t), &f.color.encode_png()?)?;
        write(dir, &depth_path(v, t), &encode_depth_file(&f.depth))?;
        let codes = f.provenance.iter().map(|p| p.code()).collect();
        write(dir, &provenance_path(v, t), &encode_gray_png(f.width(), f.height(), codes)?)?;
        records.push(CellRecord {
            view: v,
            t,
            meta: m.meta(v, t).cloned().unwrap_or_default(),
        });
    }
    let cameras = Cameras {
        intrinsics: m.network.intrinsics,
        base_index: m.network.base_index,
        world_to_camera: m.network.poses.iter().map(Pose::to_matrix4).collect(),
    };
    write_json(dir, "cameras.json", &cameras)?;
    write_json(dir, "cells.json", &records)
}

fn manifest_for(m: &ViewTimeMatrix, config: Option<&PipelineConfig>, complete: bool) -> Manifest {
    Manifest {
        version: FORMAT_VERSION,
        views: m.num_views(),
        timestamps: m.num_timestamps(),
        width: m.network.intrinsics.width,
        height: m.network.intrinsics.height,
        seed: config.map_or(0, |c| c.seed),
        complete,
        completed_cells: (!complete).then(|| m.completed_cells().into_iter().map(|(v, t)| [v, t]).collect()),
        times: m.times.clone(),
        schedule: m.schedule.clone(),
        config: config.cloned(),
    }
}

/// Writes a complete matrix. Fails with `IncompleteMatrix` otherwise.
pub fn export_dataset(m: &ViewTimeMatrix, dir: &Path, config: Option<&PipelineConfig>) -> Result<Manifest> {
    m.validate()?;
    let cells = m.completed_cells();
    write_cells(m, dir, &cells)?;
    let manifest = manifest_for(m, config, true);
    write_json(dir, "manifest.json", &manifest)?;
    Ok(manifest)
}

/// Writes whatever cells are complete, with a manifest listing them, so a
/// later build can resume.
pub fn export_partial(m: &ViewTimeMatrix, dir: &Path, config: Option<&PipelineConfig>) -> Result<Manifest> {
    m.validate_cells()?;
    let cells = m.completed_cells();
    write_cells(m, dir, &cells)?;
    let manifest = manifest_for(m, config, m.is_complete());
    write_json(dir, "manifest.json", &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(dir, "manifest.json")?;
    if m.version != FORMAT_VERSION {
        return Err(Error::format(dir.join("manifest.json"), format!("unsupported version {}", m.version)));
    }
    Ok(m)
}

fn read_cell(dir: &Path, v: usize, t: usize, w: u32, h: u32) -> Result<Frame> {
    let read = |rel: PathBuf| -> Result<(PathBuf, Vec<u8>)> {
        let p = dir.join(&rel);
        match fs::read(&p) {
            Ok(b) => Ok((p, b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingCell { view: v, t, path: p }),
            Err(e) => Err(Error::io(&p, e)),
        }
    };
    let (p, bytes) = read(frame_path(v, t))?;
    let color = ColorImage::decode_png(&bytes).map_err(|e| Error::format(&p, e.to_string()))?;
    let (dp, bytes) = read(depth_path(v, t))?;
    let depth = decode_depth_file(&bytes, &dp)?;
    let (pp, bytes) = read(provenance_path(v, t))?;
    let (pw, ph, codes) = decode_gray_png(&bytes).map_err(|e| Error::format(&pp, e.to_string()))?;
    if (color.width, color.height) != (w, h) || (depth.width, depth.height) != (w, h) || (pw, ph) != (w, h) {
        return Err(Error::format(&p, format!("cell ({v}, {t}) is not {w}x{h}")));
    }
    let provenance = codes
        .iter()
        .map(|&c| Provenance::from_code(c).ok_or_else(|| Error::format(&pp, format!("unknown label {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let f = Frame {
        color,
        depth,
        hole_mask: Mask::new(w, h, false),
        provenance,
    };
    f.validate()?;
    Ok(f)
}

/// Loads a dataset written by [`export_dataset`] or [`export_partial`],
/// checking every invariant.
pub fn import_dataset(dir: &Path) -> Result<(ViewTimeMatrix, Manifest)> {
    let manifest = read_manifest(dir)?;
    let cams: Cameras = read_json(dir, "cameras.json")?;
    let cam_path = dir.join("cameras.json");
    if cams.world_to_camera.len() != manifest.views {
        return Err(Error::format(&cam_path, "view count differs from manifest"));
    }
    if (cams.intrinsics.width, cams.intrinsics.height) != (manifest.width, manifest.height) {
        return Err(Error::format(&cam_path, "resolution differs from manifest"));
    }
    if manifest.times.len() != manifest.timestamps {
        return Err(Error::format(dir.join("manifest.json"), "times differ from timestamp count"));
    }
    let poses = cams
        .world_to_camera
        .iter()
        .map(Pose::from_matrix4)
        .collect::<Result<Vec<_>>>()?;
    let network = CameraNetwork::new(cams.intrinsics, poses, cams.base_index)?;
    let mut m = ViewTimeMatrix::new(network, manifest.times.clone());
    if let Some(s) = &manifest.schedule {
        s.validate()?;
    }
    m.schedule = manifest.schedule.clone();

    let cells: Vec<(usize, usize)> = match (&manifest.completed_cells, manifest.complete) {
        (_, true) => (0..manifest.views)
            .flat_map(|v| (0..manifest.timestamps).map(move |t| (v, t)))
            .collect(),
        (Some(c), false) => c.iter().map(|&[v, t]| (v, t)).collect(),
        (None, false) => return Err(Error::format(dir.join("manifest.json"), "partial manifest lists no cells")),
    };
    let records: Vec<CellRecord> = read_json(dir, "cells.json")?;
    for (v, t) in cells {
        if v >= manifest.views || t >= manifest.timestamps {
            return Err(Error::format(dir.join("manifest.json"), format!("cell ({v}, {t}) out of range")));
        }
        let f = read_cell(dir, v, t, manifest.width, manifest.height)?;
        let meta = records
            .iter()
            .find(|r| r.view == v && r.t == t)
            .map(|r| r.meta.clone())
            .unwrap_or_default();
        m.set(v, t, f, meta)?;
    }
    if manifest.complete {
        m.validate()?;
    } else {
        m.validate_cells()?;
    }
    Ok((m, manifest))
}
