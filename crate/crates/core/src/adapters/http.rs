use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::depthproc::DepthMap;
use crate::error::{Error, Result};
use crate::raster::{ColorImage, Mask};

use super::protocol::*;
use super::{AdapterConfig, Backend, Capability, DepthRequest, GenerateRequest, InpaintRequest, ScoreRequest, SegmentRequest};

/// Counting semaphore.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking client for one bridge base URL.
pub struct HttpBackend {
    base_url: String,
    client: reqwest::blocking::Client,
    retries: u32,
    backoff_base: Duration,
    gates: HashMap<Capability, Gate>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("base_url", &self.base_url).finish()
    }
}

impl HttpBackend {
    pub fn new(base_url: &str, cfg: &AdapterConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            retries: cfg.retries,
            backoff_base: Duration::from_secs_f64(cfg.backoff_base_s),
            gates: Capability::ALL
                .iter()
                .map(|&c| (c, Gate::new(cfg.in_flight_limit.max(1))))
                .collect(),
        })
    }

    fn call<B: Serialize, R: DeserializeOwned>(&self, cap: Capability, body: &B) -> Result<R> {
        let _permit = self.gates[&cap].acquire();
        let mut attempt = 0u32;
        loop {
            match self.call_once(cap, body) {
                Err(e) if is_retryable(&e) && attempt < self.retries => {
                    let delay = self.backoff_base * 2u32.pow(attempt);
                    log::warn!("{} attempt {} failed ({e}); retrying in {:?}", cap.as_str(), attempt + 1, delay);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                r => return r,
            }
        }
    }

    fn call_once<B: Serialize, R: DeserializeOwned>(&self, cap: Capability, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base_url, cap.path());
        let unavailable = |message: String| Error::AdapterUnavailable {
            capability: cap.as_str().to_string(),
            message,
        };
        let resp = self
            .client
            .post(&url)
            .json(body)
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| unavailable(e.to_string()))?;
        if !status.is_success() {
            let err = serde_json::from_str::<WireError>(&text).ok();
            return Err(map_error(cap.as_str(), status.as_u16(), err));
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::ProtocolViolation(format!("{}: reply is not JSON: {e}", cap.as_str())))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(v) => check_version(v)?,
            None => {
                return Err(Error::ProtocolViolation(format!("{}: reply has no version", cap.as_str())));
            }
        }
        serde_json::from_value(value)
            .map_err(|e| Error::ProtocolViolation(format!("{}: malformed reply: {e}", cap.as_str())))
    }
}

fn v1() -> String {
    PROTOCOL_VERSION.to_string()
}

impl Backend for HttpBackend {
    fn is_stub(&self) -> bool {
        false
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<ColorImage>> {
        let body = GenerateBody {
            version: v1(),
            prompt: req.prompt.clone(),
            augmentation: req.augmentation.clone(),
            seed: req.seed,
            num_frames: req.num_frames,
            width: req.width,
            height: req.height,
            steps: req.steps,
            guidance: req.guidance,
        };
        let r: FramesReply = self.call(Capability::Generate, &body)?;
        r.frames.iter().map(|f| decode_image(f)).collect()
    }

    fn depth(&self, req: &DepthRequest) -> Result<Vec<DepthMap<f32>>> {
        let body = DepthBody {
            version: v1(),
            kind: req.kind,
            frames: req.frames.iter().map(encode_image).collect::<Result<_>>()?,
        };
        let r: DepthReply = self.call(Capability::Depth, &body)?;
        r.depths.iter().map(decode_depth).collect()
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<Vec<ColorImage>> {
        let body = InpaintBody {
            version: v1(),
            image: encode_image(&req.image)?,
            mask: encode_mask(&req.mask)?,
            prompt: req.prompt.clone(),
            seed: req.seed,
            n_candidates: req.n_candidates,
            steps: req.steps,
        };
        let r: InpaintReply = self.call(Capability::Inpaint, &body)?;
        r.candidates.iter().map(|c| decode_image(c)).collect()
    }

    fn segment(&self, req: &SegmentRequest) -> Result<Mask> {
        let body = SegmentBody {
            version: v1(),
            image: encode_image(&req.image)?,
            prompt: req.prompt.clone(),
        };
        let r: SegmentReply = self.call(Capability::Segment, &body)?;
        decode_mask(&r.mask)
    }

    fn score(&self, req: &ScoreRequest) -> Result<Vec<f64>> {
        let body = ScoreBody {
            version: v1(),
            prompt: req.prompt.clone(),
            candidates: req.candidates.iter().map(encode_image).collect::<Result<_>>()?,
        };
        let r: ScoreReply = self.call(Capability::Score, &body)?;
        Ok(r.scores)
    }
}
