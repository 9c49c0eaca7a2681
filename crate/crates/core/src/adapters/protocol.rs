//! `/v1` wire format: JSON bodies with base64 PNG images, base64
//! little-endian f32 depth rasters and L8 PNG masks (255 = hole, or
//! foreground for segmentation).

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::raster::{ColorImage, Mask};

pub const PROTOCOL_VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDepth {
    pub width: u32,
    pub height: u32,
    /// base64 of `width * height` little-endian f32; 0 marks invalid.
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateBody {
    pub version: String,
    pub prompt: String,
    pub augmentation: String,
    pub seed: u64,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramesReply {
    pub version: String,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBody {
    pub version: String,
    pub kind: super::DepthKind,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthReply {
    pub version: String,
    pub depths: Vec<WireDepth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintBody {
    pub version: String,
    pub image: String,
    pub mask: String,
    pub prompt: String,
    pub seed: u64,
    pub n_candidates: usize,
    pub steps: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintReply {
    pub version: String,
    pub candidates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentBody {
    pub version: String,
    pub image: String,
    pub prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReply {
    pub version: String,
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBody {
    pub version: String,
    pub prompt: String,
    pub candidates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReply {
    pub version: String,
    pub scores: Vec<f64>,
}

pub fn check_version(v: &str) -> Result<()> {
    if v != PROTOCOL_VERSION {
        return Err(Error::ProtocolViolation(format!(
            "version {v:?}, expected {PROTOCOL_VERSION:?}"
        )));
    }
    Ok(())
}

fn b64_decode(s: &str) -> Result<Vec<u8>> {
    B64.decode(s)
        .map_err(|e| Error::ProtocolViolation(format!("bad base64: {e}")))
}

pub fn encode_image(img: &ColorImage) -> Result<String> {
    Ok(B64.encode(img.encode_png()?))
}

pub fn decode_image(s: &str) -> Result<ColorImage> {
    ColorImage::decode_png(&b64_decode(s)?)
        .map_err(|e| Error::ProtocolViolation(format!("bad image payload: {e}")))
}

pub fn encode_mask(m: &Mask) -> Result<String> {
    Ok(B64.encode(m.encode_png()?))
}

pub fn decode_mask(s: &str) -> Result<Mask> {
    Mask::decode_png(&b64_decode(s)?).map_err(|e| match e {
        Error::ProtocolViolation(_) => e,
        e => Error::ProtocolViolation(format!("bad mask payload: {e}")),
    })
}

pub fn encode_depth(d: &DepthMap<f32>) -> WireDepth {
    let mut raw = Vec::with_capacity(d.len() * 4);
    for v in d.values() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    WireDepth {
        width: d.width,
        height: d.height,
        data: B64.encode(raw),
    }
}

/// Non-positive and non-finite samples become invalid pixels.
pub fn decode_depth(w: &WireDepth) -> Result<DepthMap<f32>> {
    let raw = b64_decode(&w.data)?;
    let n = w.width as usize * w.height as usize;
    if raw.len() != 4 * n {
        return Err(Error::ProtocolViolation(format!(
            "depth payload has {} bytes, expected {} for {}x{}",
            raw.len(),
            4 * n,
            w.width,
            w.height
        )));
    }
    let mut d = DepthMap::invalid(w.width, w.height);
    for (i, c) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if v.is_finite() && v > 0.0 {
            d.set(i, v);
        }
    }
    Ok(d)
}

/// Maps an error body and HTTP status to a typed error.
pub fn map_error(capability: &str, status: u16, body: Option<WireError>) -> Error {
    let (code, message) = match body {
        Some(e) => (e.code, e.message),
        None => (String::new(), format!("HTTP {status}")),
    };
    match code.as_str() {
        "version_mismatch" | "bad_request" | "invalid_request" => {
            Error::ProtocolViolation(format!("{capability}: {code}: {message}"))
        }
        _ if (400..500).contains(&status) && status != 408 && status != 429 => {
            Error::ProtocolViolation(format!("{capability}: HTTP {status} {code}: {message}"))
        }
        _ => Error::AdapterUnavailable {
            capability: capability.to_string(),
            message: format!("HTTP {status} {code}: {message}"),
        },
    }
}

/// Whether a failed attempt is worth repeating.
pub fn is_retryable(e: &Error) -> bool {
    matches!(e, Error::AdapterUnavailable { .. })
}
