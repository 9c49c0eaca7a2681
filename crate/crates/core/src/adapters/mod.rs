//! Neural-model call sites behind one protocol: an HTTP client for the
//! `/v1` bridge and deterministic in-process stubs.
//!
//! Every response goes through [`Adapters`], which checks counts,
//! dimensions and value ranges before anything reaches the pipeline.

mod http;
pub mod protocol;
pub(crate) mod stub;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::camera::Pose;
use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::raster::{ColorImage, Mask};

pub use http::HttpBackend;
pub use stub::{OracleContext, StubBackend};

/// Prompt suffix asking the video model for a locked-off camera.
pub const STATIONARY_CAMERA_AUGMENTATION: &str =
    "The camera remains stationary, with a fixed frame, stable composition, and no shifts.";

/// Environment variable overriding the base URL of every HTTP capability.
pub const ADAPTER_URL_ENV: &str = "VIEWTIME_ADAPTER_URL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Generate,
    Depth,
    Inpaint,
    Segment,
    Score,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::Generate,
        Capability::Depth,
        Capability::Inpaint,
        Capability::Segment,
        Capability::Score,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Generate => "generate",
            Capability::Depth => "depth",
            Capability::Inpaint => "inpaint",
            Capability::Segment => "segment",
            Capability::Score => "score",
        }
    }

    /// Endpoint path on the bridge.
    pub fn path(self) -> &'static str {
        match self {
            Capability::Generate => "/v1/generate",
            Capability::Depth => "/v1/depth",
            Capability::Inpaint => "/v1/inpaint",
            Capability::Segment => "/v1/segment",
            Capability::Score => "/v1/score",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Stub,
    Http { base_url: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub generate: BackendChoice,
    pub depth: BackendChoice,
    pub inpaint: BackendChoice,
    pub segment: BackendChoice,
    pub score: BackendChoice,
    pub timeout_s: f64,
    pub retries: u32,
    pub in_flight_limit: usize,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base_s: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            generate: BackendChoice::Stub,
            depth: BackendChoice::Stub,
            inpaint: BackendChoice::Stub,
            segment: BackendChoice::Stub,
            score: BackendChoice::Stub,
            timeout_s: 120.0,
            retries: 2,
            in_flight_limit: 4,
            backoff_base_s: 0.5,
        }
    }
}

impl AdapterConfig {
    pub fn choice(&self, c: Capability) -> &BackendChoice {
        match c {
            Capability::Generate => &self.generate,
            Capability::Depth => &self.depth,
            Capability::Inpaint => &self.inpaint,
            Capability::Segment => &self.segment,
            Capability::Score => &self.score,
        }
    }

    fn choice_mut(&mut self, c: Capability) -> &mut BackendChoice {
        match c {
            Capability::Generate => &mut self.generate,
            Capability::Depth => &mut self.depth,
            Capability::Inpaint => &mut self.inpaint,
            Capability::Segment => &mut self.segment,
            Capability::Score => &mut self.score,
        }
    }

    /// Points every HTTP capability at `url`.
    pub fn override_base_url(&mut self, url: &str) {
        for c in Capability::ALL {
            if let BackendChoice::Http { base_url } = self.choice_mut(c) {
                *base_url = url.to_string();
            }
        }
    }

    pub fn all_stub(&self) -> bool {
        Capability::ALL.iter().all(|&c| *self.choice(c) == BackendChoice::Stub)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0) {
            return Err(Error::InvalidConfig("adapter timeout must be positive".into()));
        }
        if self.in_flight_limit == 0 {
            return Err(Error::InvalidConfig("in-flight limit must be at least 1".into()));
        }
        if !(self.backoff_base_s >= 0.0) {
            return Err(Error::InvalidConfig("backoff base must be non-negative".into()));
        }
        for c in Capability::ALL {
            if let BackendChoice::Http { base_url } = self.choice(c) {
                if reqwest::Url::parse(base_url).is_err() {
                    return Err(Error::InvalidConfig(format!("{} backend URL {base_url:?} is not a URL", c.as_str())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub augmentation: String,
    /// Seed of the initial noise.
    pub seed: u64,
    pub num_frames: usize,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
}

impl Default for GenerateRequest {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            augmentation: STATIONARY_CAMERA_AUGMENTATION.to_string(),
            seed: 0,
            num_frames: 49,
            width: 720,
            height: 480,
            steps: 50,
            guidance: 6.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    /// Video-consistent depth up to an unknown scale and shift.
    Relative,
    /// Single-image metric depth.
    Metric,
}

/// Where the frames of a depth request were taken. Never sent over the
/// wire; the oracle stub uses it to render exact depth.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewHint {
    pub pose: Pose<f64>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthRequest {
    pub frames: Vec<ColorImage>,
    pub kind: DepthKind,
    pub hint: Option<ViewHint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub image: ColorImage,
    /// True = fill.
    pub mask: Mask,
    pub prompt: String,
    pub seed: u64,
    pub n_candidates: usize,
    pub steps: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRequest {
    pub image: ColorImage,
    pub prompt: String,
    /// In-process only: the depth-threshold stub segments on this.
    pub depth: Option<DepthMap<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRequest {
    pub prompt: String,
    pub candidates: Vec<ColorImage>,
}

/// One implementation of the five capabilities.
pub trait Backend: Send + Sync {
    fn is_stub(&self) -> bool;
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<ColorImage>>;
    fn depth(&self, req: &DepthRequest) -> Result<Vec<DepthMap<f32>>>;
    fn inpaint(&self, req: &InpaintRequest) -> Result<Vec<ColorImage>>;
    /// Foreground mask (true = foreground).
    fn segment(&self, req: &SegmentRequest) -> Result<Mask>;
    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>>;
}

/// Per-capability routing to a backend, with response validation.
#[derive(Clone)]
pub struct Adapters {
    generate: Arc<dyn Backend>,
    depth: Arc<dyn Backend>,
    inpaint: Arc<dyn Backend>,
    segment: Arc<dyn Backend>,
    score: Arc<dyn Backend>,
}

impl std::fmt::Debug for Adapters {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = |b: &Arc<dyn Backend>| if b.is_stub() { "stub" } else { "http" };
        f.debug_struct("Adapters")
            .field("generate", &kind(&self.generate))
            .field("depth", &kind(&self.depth))
            .field("inpaint", &kind(&self.inpaint))
            .field("segment", &kind(&self.segment))
            .field("score", &kind(&self.score))
            .finish()
    }
}

impl Adapters {
    pub fn uniform(backend: Arc<dyn Backend>) -> Self {
        Self {
            generate: backend.clone(),
            depth: backend.clone(),
            inpaint: backend.clone(),
            segment: backend.clone(),
            score: backend,
        }
    }

    pub fn all_stub(stub: StubBackend) -> Self {
        Self::uniform(Arc::new(stub))
    }

    /// Resolves each capability to the stub or to one shared HTTP client
    /// per base URL.
    pub fn from_config(cfg: &AdapterConfig, stub: StubBackend) -> Result<Self> {
        cfg.validate()?;
        let stub: Arc<dyn Backend> = Arc::new(stub);
        let mut clients: Vec<(String, Arc<dyn Backend>)> = Vec::new();
        let mut resolve = |c: Capability| -> Result<Arc<dyn Backend>> {
            Ok(match cfg.choice(c) {
                BackendChoice::Stub => stub.clone(),
                BackendChoice::Http { base_url } => {
                    if let Some((_, b)) = clients.iter().find(|(u, _)| u == base_url) {
                        b.clone()
                    } else {
                        let b: Arc<dyn Backend> = Arc::new(HttpBackend::new(base_url, cfg)?);
                        clients.push((base_url.clone(), b.clone()));
                        b
                    }
                }
            })
        };
        Ok(Self {
            generate: resolve(Capability::Generate)?,
            depth: resolve(Capability::Depth)?,
            inpaint: resolve(Capability::Inpaint)?,
            segment: resolve(Capability::Segment)?,
            score: resolve(Capability::Score)?,
        })
    }

    pub fn with(mut self, c: Capability, backend: Arc<dyn Backend>) -> Self {
        match c {
            Capability::Generate => self.generate = backend,
            Capability::Depth => self.depth = backend,
            Capability::Inpaint => self.inpaint = backend,
            Capability::Segment => self.segment = backend,
            Capability::Score => self.score = backend,
        }
        self
    }

    pub fn is_stub(&self, c: Capability) -> bool {
        match c {
            Capability::Generate => self.generate.is_stub(),
            Capability::Depth => self.depth.is_stub(),
            Capability::Inpaint => self.inpaint.is_stub(),
            Capability::Segment => self.segment.is_stub(),
            Capability::Score => self.score.is_stub(),
        }
    }

    pub fn generate_video(&self, req: &GenerateRequest) -> Result<Vec<ColorImage>> {
        if req.num_frames == 0 {
            return Err(Error::InvalidConfig("num_frames must be at least 1".into()));
        }
        if req.width == 0 || req.height == 0 {
            return Err(Error::InvalidConfig("video size must be at least 1x1".into()));
        }
        let frames = self.generate.generate(req)?;
        if frames.len() != req.num_frames {
            return Err(Error::ProtocolViolation(format!(
                "generate returned {} frames, expected {}",
                frames.len(),
                req.num_frames
            )));
        }
        for f in &frames {
            check_size("generate", f.width, f.height, req.width, req.height)?;
        }
        Ok(frames)
    }

    pub fn estimate_depth(&self, req: &DepthRequest) -> Result<Vec<DepthMap<f32>>> {
        let maps = self.depth.depth(req)?;
        if maps.len() != req.frames.len() {
            return Err(Error::ProtocolViolation(format!(
                "depth returned {} maps for {} frames",
                maps.len(),
                req.frames.len()
            )));
        }
        for (m, f) in maps.iter().zip(&req.frames) {
            check_size("depth", m.width, m.height, f.width, f.height)?;
        }
        Ok(maps)
    }

    pub fn inpaint_image(&self, req: &InpaintRequest) -> Result<Vec<ColorImage>> {
        if req.n_candidates == 0 {
            return Err(Error::InvalidConfig("n_candidates must be at least 1".into()));
        }
        check_size("inpaint mask", req.mask.width, req.mask.height, req.image.width, req.image.height)?;
        let c = self.inpaint.inpaint(req)?;
        if c.len() != req.n_candidates {
            return Err(Error::ProtocolViolation(format!(
                "inpaint returned {} candidates, expected {}",
                c.len(),
                req.n_candidates
            )));
        }
        for img in &c {
            check_size("inpaint", img.width, img.height, req.image.width, req.image.height)?;
        }
        Ok(c)
    }

    /// Returns the foreground mask and whether it came from a stub.
    pub fn segment_image(&self, req: &SegmentRequest) -> Result<(Mask, bool)> {
        let m = self.segment.segment(req)?;
        check_size("segment", m.width, m.height, req.image.width, req.image.height)?;
        Ok((m, self.segment.is_stub()))
    }

    pub fn score_candidates(&self, req: &ScoreRequest) -> Result<Vec<f64>> {
        if req.candidates.is_empty() {
            return Err(Error::InvalidInput("no candidates to score".into()));
        }
        let s = self.score.score(req)?;
        if s.len() != req.candidates.len() {
            return Err(Error::ProtocolViolation(format!(
                "score returned {} values for {} candidates",
                s.len(),
                req.candidates.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::ProtocolViolation("non-finite candidate score".into()));
        }
        Ok(s)
    }
}

fn check_size(what: &str, w: u32, h: u32, ew: u32, eh: u32) -> Result<()> {
    if (w, h) != (ew, eh) {
        return Err(Error::ProtocolViolation(format!("{what} returned {w}x{h}, expected {ew}x{eh}")));
    }
    Ok(())
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.map_or(true, |b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}
