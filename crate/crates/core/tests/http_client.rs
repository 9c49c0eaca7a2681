mod common;

use std::io::Cursor;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use common::{MockServer, Reply};
use viewtime::adapters::protocol::{decode_image, encode_depth, encode_image};
use viewtime::adapters::{
    AdapterConfig, Adapters, BackendChoice, Capability, DepthKind, DepthRequest, GenerateRequest, HttpBackend,
    InpaintRequest, ScoreRequest, SegmentRequest, StubBackend,
};
use viewtime::depthproc::DepthMap;
use viewtime::{ColorImage, Error, Mask};

fn config(retries: u32) -> AdapterConfig {
    AdapterConfig {
        timeout_s: 5.0,
        retries,
        backoff_base_s: 0.01,
        ..Default::default()
    }
}

fn client(server: &MockServer, retries: u32) -> Adapters {
    Adapters::uniform(Arc::new(HttpBackend::new(&server.url, &config(retries)).unwrap()))
}

fn gray_png(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> String {
    let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([f(x, y)]));
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png).unwrap();
    B64.encode(buf)
}

fn png_bytes(b64: &str) -> (u32, u32, Vec<u8>) {
    let img = image::load_from_memory(&B64.decode(b64).unwrap()).unwrap().to_luma8();
    (img.width(), img.height(), img.into_raw())
}

/// Answers every endpoint the way a well-behaved bridge would.
fn bridge(path: &str, body: &Value) -> Reply {
    let frame = |w: u64, h: u64| encode_image(&ColorImage::new(w as u32, h as u32, [10, 20, 30])).unwrap();
    match path {
        "/v1/generate" => {
            let (w, h, n) = (body["width"].as_u64().unwrap(), body["height"].as_u64().unwrap(), body["num_frames"].as_u64().unwrap());
            Reply::ok(json!({"version": "v1", "frames": vec![frame(w, h); n as usize]}))
        }
        "/v1/depth" => {
            let depths: Vec<Value> = body["frames"]
                .as_array()
                .unwrap()
                .iter()
                .map(|f| {
                    let img = decode_image(f.as_str().unwrap()).unwrap();
                    let d = DepthMap::constant(img.width, img.height, 2.5f32);
                    serde_json::to_value(encode_depth(&d)).unwrap()
                })
                .collect();
            Reply::ok(json!({"version": "v1", "depths": depths}))
        }
        "/v1/inpaint" => {
            let img = body["image"].as_str().unwrap().to_string();
            let n = body["n_candidates"].as_u64().unwrap() as usize;
            Reply::ok(json!({"version": "v1", "candidates": vec![img; n]}))
        }
        "/v1/segment" => {
            let img = decode_image(body["image"].as_str().unwrap()).unwrap();
            Reply::ok(json!({"version": "v1", "mask": gray_png(img.width, img.height, |x, _| if x < 2 { 255 } else { 0 })}))
        }
        "/v1/score" => {
            let n = body["candidates"].as_array().unwrap().len();
            let scores: Vec<f64> = (0..n).map(|i| if i == 1 { 0.9 } else { 0.1 }).collect();
            Reply::ok(json!({"version": "v1", "scores": scores}))
        }
        _ => Reply::error(404, "not_found"),
    }
}

#[test]
fn all_five_endpoints_round_trip() {
    let server = MockServer::start(bridge);
    let a = client(&server, 0);
    for c in Capability::ALL {
        assert!(!a.is_stub(c));
    }

    let frames = a
        .generate_video(&GenerateRequest {
            prompt: "a cat".into(),
            num_frames: 3,
            width: 8,
            height: 6,
            ..Default::default()
        })
        .unwrap();
    assert_eq!(frames.len(), 3);
    assert_eq!(frames[0], ColorImage::new(8, 6, [10, 20, 30]));

    let depths = a
        .estimate_depth(&DepthRequest {
            frames: frames.clone(),
            kind: DepthKind::Metric,
            hint: None,
        })
        .unwrap();
    assert_eq!(depths.len(), 3);
    assert_eq!(depths[0], DepthMap::constant(8, 6, 2.5));

    let hole = Mask::from_fn(8, 6, |x, y| x >= 5 && y >= 3);
    let cands = a
        .inpaint_image(&InpaintRequest {
            image: frames[0].clone(),
            mask: hole.clone(),
            prompt: "a cat".into(),
            seed: 7,
            n_candidates: 4,
            steps: 20,
        })
        .unwrap();
    assert_eq!(cands.len(), 4);

    let (mask, from_stub) = a
        .segment_image(&SegmentRequest {
            image: frames[0].clone(),
            prompt: "cat".into(),
            depth: None,
        })
        .unwrap();
    assert!(!from_stub);
    assert_eq!(mask, Mask::from_fn(8, 6, |x, _| x < 2));

    let scores = a
        .score_candidates(&ScoreRequest {
            prompt: "a cat".into(),
            candidates: cands,
        })
        .unwrap();
    assert_eq!(viewtime::adapters::argmax(&scores), Some(1));

    let seen = server.requests();
    let paths: Vec<&str> = seen.iter().map(|s| s.path.as_str()).collect();
    assert_eq!(paths, ["/v1/generate", "/v1/depth", "/v1/inpaint", "/v1/segment", "/v1/score"]);
    assert!(seen.iter().all(|s| s.body["version"] == "v1"));
    assert_eq!(seen[0].body["augmentation"], viewtime::adapters::STATIONARY_CAMERA_AUGMENTATION);
    assert_eq!(seen[1].body["kind"], "metric");
    assert_eq!(seen[2].body["seed"], 7);

    // the hole goes out as 255, everything else as 0
    let (w, h, raw) = png_bytes(seen[2].body["mask"].as_str().unwrap());
    assert_eq!((w, h), (8, 6));
    for (i, &b) in raw.iter().enumerate() {
        assert_eq!(b, if hole.data[i] { 255 } else { 0 });
    }
}

#[test]
fn reply_with_other_version_is_a_protocol_violation() {
    let server = MockServer::start(|_, _| Reply::ok(json!({"version": "v2", "scores": [1.0]})));
    let a = client(&server, 3);
    let r = a.score_candidates(&ScoreRequest {
        prompt: String::new(),
        candidates: vec![ColorImage::new(2, 2, [0; 3])],
    });
    assert!(matches!(r, Err(Error::ProtocolViolation(_))), "{r:?}");
    // not retried
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn reply_without_version_is_a_protocol_violation() {
    let server = MockServer::start(|_, _| Reply::ok(json!({"scores": [1.0]})));
    let r = client(&server, 0).score_candidates(&ScoreRequest {
        prompt: String::new(),
        candidates: vec![ColorImage::new(2, 2, [0; 3])],
    });
    assert!(matches!(r, Err(Error::ProtocolViolation(_))));
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(bridge);
    server.push(Reply::error(503, "model_loading"));
    server.push(Reply::error(500, "internal"));
    let scores = client(&server, 2)
        .score_candidates(&ScoreRequest {
            prompt: String::new(),
            candidates: vec![ColorImage::new(2, 2, [0; 3]); 2],
        })
        .unwrap();
    assert_eq!(scores, [0.1, 0.9]);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn retries_run_out_as_adapter_unavailable() {
    let server = MockServer::start(|_, _| Reply::error(503, "model_loading"));
    let r = client(&server, 1).segment_image(&SegmentRequest {
        image: ColorImage::new(4, 4, [0; 3]),
        prompt: String::new(),
        depth: None,
    });
    assert!(matches!(r, Err(Error::AdapterUnavailable { ref capability, .. }) if capability == "segment"), "{r:?}");
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    for (status, code) in [(400, "bad_request"), (409, "version_mismatch"), (422, "whatever")] {
        let server = MockServer::start(move |_, _| Reply::error(status, code));
        let r = client(&server, 3).segment_image(&SegmentRequest {
            image: ColorImage::new(4, 4, [0; 3]),
            prompt: String::new(),
            depth: None,
        });
        assert!(matches!(r, Err(Error::ProtocolViolation(_))), "{status} {code}: {r:?}");
        assert_eq!(server.requests().len(), 1);
    }
}

#[test]
fn wrong_dimensions_are_rejected() {
    let server = MockServer::start(|path, body| match path {
        "/v1/segment" => Reply::ok(json!({"version": "v1", "mask": gray_png(3, 3, |_, _| 0)})),
        "/v1/depth" => {
            let d = DepthMap::constant(5, 5, 1.0f32);
            Reply::ok(json!({"version": "v1", "depths": [encode_depth(&d)]}))
        }
        "/v1/inpaint" => Reply::ok(json!({"version": "v1", "candidates": [body["image"]]})),
        _ => Reply::error(404, "not_found"),
    });
    let a = client(&server, 0);
    let img = ColorImage::new(4, 4, [0; 3]);
    let seg = a.segment_image(&SegmentRequest {
        image: img.clone(),
        prompt: String::new(),
        depth: None,
    });
    assert!(matches!(seg, Err(Error::ProtocolViolation(_))), "{seg:?}");
    let depth = a.estimate_depth(&DepthRequest {
        frames: vec![img.clone()],
        kind: DepthKind::Relative,
        hint: None,
    });
    assert!(matches!(depth, Err(Error::ProtocolViolation(_))), "{depth:?}");
    // asked for three candidates, got one
    let inp = a.inpaint_image(&InpaintRequest {
        image: img,
        mask: Mask::new(4, 4, true),
        prompt: String::new(),
        seed: 0,
        n_candidates: 3,
        steps: 1,
    });
    assert!(matches!(inp, Err(Error::ProtocolViolation(_))), "{inp:?}");
}

#[test]
fn mask_values_other_than_0_and_255_are_rejected() {
    let server = MockServer::start(|_, _| Reply::ok(json!({"version": "v1", "mask": gray_png(4, 4, |x, _| if x == 0 { 128 } else { 0 })})));
    let r = client(&server, 0).segment_image(&SegmentRequest {
        image: ColorImage::new(4, 4, [0; 3]),
        prompt: String::new(),
        depth: None,
    });
    assert!(matches!(r, Err(Error::ProtocolViolation(_))), "{r:?}");
}

#[test]
fn unreachable_bridge_is_adapter_unavailable() {
    // bind then drop to get a port nothing listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let a = Adapters::uniform(Arc::new(HttpBackend::new(&format!("http://127.0.0.1:{port}"), &config(0)).unwrap()));
    let r = a.generate_video(&GenerateRequest {
        num_frames: 1,
        ..Default::default()
    });
    assert!(matches!(r, Err(Error::AdapterUnavailable { .. })), "{r:?}");
}

#[test]
fn config_resolves_stub_and_http_per_capability() {
    let server = MockServer::start(bridge);
    let cfg = AdapterConfig {
        score: BackendChoice::Http { base_url: server.url.clone() },
        ..config(0)
    };
    let a = Adapters::from_config(&cfg, StubBackend::default()).unwrap();
    assert!(a.is_stub(Capability::Inpaint));
    assert!(!a.is_stub(Capability::Score));
    a.score_candidates(&ScoreRequest {
        prompt: String::new(),
        candidates: vec![ColorImage::new(2, 2, [0; 3])],
    })
    .unwrap();
    assert_eq!(server.requests().len(), 1);
}
