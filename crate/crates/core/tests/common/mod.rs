#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewtime::{ColorImage, Mask};

/// Straightforward fast-marching inpainter, written without a heap: every
/// step scans the narrow band for the smallest `(T, index)`. The arrival
/// time uses the textbook upwind solve on the smaller horizontal and
/// vertical frozen neighbors.
pub fn reference_telea(img: &ColorImage, hole: &Mask, radius: i64) -> ColorImage {
    #[derive(Clone, Copy, PartialEq)]
    enum F {
        Frozen,
        Band,
        Far,
    }
    let (w, h) = (img.width as i64, img.height as i64);
    let n = (w * h) as usize;
    let at = |x: i64, y: i64| (x >= 0 && y >= 0 && x < w && y < h).then(|| (y * w + x) as usize);
    let mut out = img.clone();
    let mut flag: Vec<F> = hole.data.iter().map(|&m| if m { F::Far } else { F::Frozen }).collect();
    let mut t: Vec<f64> = hole.data.iter().map(|&m| if m { f64::INFINITY } else { 0.0 }).collect();

    let solve = |flag: &[F], t: &[f64], x: i64, y: i64| -> f64 {
        let frozen = |x: i64, y: i64| at(x, y).filter(|&j| flag[j] == F::Frozen).map(|j| t[j]);
        let m = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let hor = m(frozen(x - 1, y), frozen(x + 1, y));
        let ver = m(frozen(x, y - 1), frozen(x, y + 1));
        match (hor, ver) {
            (Some(a), Some(b)) if (a - b).abs() < 1.0 => (a + b + (2.0 - (a - b) * (a - b)).sqrt()) / 2.0,
            (Some(a), Some(b)) => 1.0 + a.min(b),
            (Some(a), None) | (None, Some(a)) => 1.0 + a,
            (None, None) => f64::INFINITY,
        }
    };
    let relax = |flag: &mut Vec<F>, t: &mut Vec<f64>, x: i64, y: i64| {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(j) = at(x + dx, y + dy) {
                if flag[j] != F::Frozen {
                    let v = solve(flag, t, x + dx, y + dy);
                    if v < t[j] {
                        t[j] = v;
                    }
                    flag[j] = F::Band;
                }
            }
        }
    };
    for i in 0..n {
        if flag[i] == F::Frozen {
            relax(&mut flag, &mut t, i as i64 % w, i as i64 / w);
        }
    }
    loop {
        let mut next: Option<usize> = None;
        for i in 0..n {
            if flag[i] == F::Band && next.map_or(true, |b| t[i] < t[b]) {
                next = Some(i);
            }
        }
        let Some(p) = next else { break };
        flag[p] = F::Frozen;
        let (px, py) = (p as i64 % w, p as i64 / w);

        let tv = |x: i64, y: i64| at(x, y).map(|j| t[j]).filter(|v| v.is_finite());
        let d = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
            (Some(l), Some(u)) => 0.5 * (u - l),
            (None, Some(u)) => u - t[p],
            (Some(l), None) => t[p] - l,
            (None, None) => 0.0,
        };
        let g = (d(tv(px - 1, py), tv(px + 1, py)), d(tv(px, py - 1), tv(px, py + 1)));
        let gl = g.0.hypot(g.1);
        let mut sum = [0.0; 3];
        let mut wsum = 0.0;
        for qy in py - radius..=py + radius {
            for qx in px - radius..=px + radius {
                let (rx, ry) = ((px - qx) as f64, (py - qy) as f64);
                let r2 = rx * rx + ry * ry;
                if r2 == 0.0 || r2 > (radius * radius) as f64 {
                    continue;
                }
                let Some(q) = at(qx, qy).filter(|&q| flag[q] == F::Frozen) else { continue };
                let dir = if gl > 0.0 { ((rx * g.0 + ry * g.1) / (r2.sqrt() * gl)).abs().max(1e-6) } else { 1.0 };
                let wgt = dir / r2 / (1.0 + (t[p] - t[q]).abs());
                for c in 0..3 {
                    sum[c] += wgt * out.data[q][c] as f64;
                }
                wsum += wgt;
            }
        }
        out.data[p] = [0, 1, 2].map(|c| (sum[c] / wsum).round() as u8);
        relax(&mut flag, &mut t, px, py);
    }
    out
}

/// Smooth gradient plus noise.
pub fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> ColorImage {
    let base: [f64; 3] = [rng.gen_range(30.0..200.0), rng.gen_range(30.0..200.0), rng.gen_range(30.0..200.0)];
    let gx: [f64; 3] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    let gy: [f64; 3] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    ColorImage::from_fn(w, h, |x, y| {
        [0, 1, 2].map(|c| {
            let v = base[c] + gx[c] * x as f64 + gy[c] * y as f64 + rng.gen_range(-12.0..12.0);
            v.round().clamp(0.0, 255.0) as u8
        })
    })
}

/// A few random rectangles and discs, away from nothing in particular.
pub fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Mask {
    let mut m = Mask::new(w, h, false);
    for _ in 0..rng.gen_range(1..5) {
        let (cx, cy) = (rng.gen_range(0..w) as i64, rng.gen_range(0..h) as i64);
        let r = rng.gen_range(1..6) as i64;
        let disc = rng.gen_bool(0.5);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (dx, dy) = (x - cx, y - cy);
                let inside = if disc { dx * dx + dy * dy <= r * r } else { dx.abs() <= r && dy.abs() <= r / 2 + 1 };
                if inside {
                    m.data[(y * w as i64 + x) as usize] = true;
                }
            }
        }
    }
    m
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Canned HTTP reply.
#[derive(Clone, Debug)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: serde_json::Value) -> Self {
        Self { status: 200, body: body.to_string() }
    }

    pub fn error(status: u16, code: &str) -> Self {
        Self {
            status,
            body: serde_json::json!({"code": code, "message": "mock"}).to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Seen {
    pub path: String,
    pub body: serde_json::Value,
}

/// Single-threaded HTTP/1.1 server on an ephemeral port. Replies come from
/// `queue` first, then from `handler`.
pub struct MockServer {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    pub queue: Arc<Mutex<VecDeque<Reply>>>,
    _thread: JoinHandle<()>,
}

impl MockServer {
    pub fn start(mut handler: impl FnMut(&str, &serde_json::Value) -> Reply + Send + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let queue: Arc<Mutex<VecDeque<Reply>>> = Arc::new(Mutex::new(VecDeque::new()));
        let (s, q) = (seen.clone(), queue.clone());
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    continue;
                }
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0usize;
                loop {
                    let mut hdr = String::new();
                    reader.read_line(&mut hdr).unwrap();
                    let hdr = hdr.trim_end();
                    if hdr.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = hdr.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                let body: serde_json::Value = serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null);
                s.lock().unwrap().push(Seen { path: path.clone(), body: body.clone() });
                let reply = q.lock().unwrap().pop_front().unwrap_or_else(|| handler(&path, &body));
                let resp = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        Self { url, seen, queue, _thread: thread }
    }

    pub fn push(&self, r: Reply) {
        self.queue.lock().unwrap().push_back(r);
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}
