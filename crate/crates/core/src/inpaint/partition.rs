use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::raster::{Mask, NEIGHBORS4};

/// Area threshold at the reference working resolution.
pub const DEFAULT_HOLE_THRESHOLD: usize = 64;
const REFERENCE_PIXELS: f64 = 160.0 * 96.0;

/// The default threshold scaled with image area.
pub fn scaled_hole_threshold(base: usize, width: u32, height: u32) -> usize {
    let s = (width as f64 * height as f64) / REFERENCE_PIXELS;
    ((base as f64 * s).round() as usize).max(1)
}

/// A 4-connected set of hole pixels, sorted row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub pixels: Vec<usize>,
    /// `[x0, y0, x1, y1]`, inclusive.
    pub bbox: [u32; 4],
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn to_mask(&self, width: u32, height: u32) -> Mask {
        let mut m = Mask::new(width, height, false);
        for &i in &self.pixels {
            m.data[i] = true;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolePartition {
    pub large: Vec<Component>,
    pub small: Vec<Component>,
    pub threshold: usize,
}

impl HolePartition {
    pub fn total_area(&self) -> usize {
        self.large.iter().chain(&self.small).map(Component::area).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.large.is_empty() && self.small.is_empty()
    }
}

/// Labels 4-connected components of `mask` in row-major discovery order.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for (dx, dy) in NEIGHBORS4 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component {
            pixels,
            bbox: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
        });
    }
    out
}

/// Splits the hole mask into components with area `>= threshold` (large)
/// and the rest (small).
pub fn partition_holes(mask: &Mask, threshold: usize) -> HolePartition {
    let (large, small) = connected_components(mask)
        .into_iter()
        .partition(|c| c.area() >= threshold);
    HolePartition {
        large,
        small,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(m: &mut Mask, x0: u32, y0: u32, w: u32, h: u32) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.data[(y * m.width + x) as usize] = true;
            }
        }
    }

    /// Recursive flood fill, written independently of the queue labeling.
    fn flood(m: &Mask, seen: &mut [bool], x: i64, y: i64) -> usize {
        if x < 0 || y < 0 || x >= m.width as i64 || y >= m.height as i64 {
            return 0;
        }
        let i = (y * m.width as i64 + x) as usize;
        if !m.data[i] || seen[i] {
            return 0;
        }
        seen[i] = true;
        1 + flood(m, seen, x + 1, y) + flood(m, seen, x - 1, y) + flood(m, seen, x, y + 1) + flood(m, seen, x, y - 1)
    }

    #[test]
    fn empty_mask() {
        let p = partition_holes(&Mask::new(10, 10, false), 64);
        assert!(p.is_empty());
    }

    #[test]
    fn single_small_hole() {
        let mut m = Mask::new(20, 20, false);
        rect(&mut m, 4, 4, 3, 3);
        let p = partition_holes(&m, 64);
        assert!(p.large.is_empty());
        assert_eq!(p.small.len(), 1);
        assert_eq!(p.small[0].area(), 9);
        assert_eq!(p.small[0].bbox, [4, 4, 6, 6]);
    }

    #[test]
    fn large_and_small_match_flood_fill() {
        let mut m = Mask::new(40, 30, false);
        rect(&mut m, 2, 2, 10, 10);
        rect(&mut m, 25, 20, 3, 3);
        // diagonal contact does not connect
        m.data[(12 * 40 + 12) as usize] = true;
        let p = partition_holes(&m, 64);
        assert_eq!(p.large.len(), 1);
        assert_eq!(p.small.len(), 2);
        let mut seen = vec![false; m.data.len()];
        assert_eq!(p.large[0].area(), flood(&m, &mut seen, 2, 2));
        assert_eq!(p.large[0].area(), 100);
        assert_eq!(p.small.iter().map(|c| c.area()).collect::<Vec<_>>(), vec![1, 9]);
        assert_eq!(p.total_area(), m.count());
    }

    #[test]
    fn threshold_scales_with_area() {
        assert_eq!(scaled_hole_threshold(64, 160, 96), 64);
        assert_eq!(scaled_hole_threshold(64, 320, 192), 256);
        assert_eq!(scaled_hole_threshold(64, 720, 480), 1440);
    }

    proptest::proptest! {
        #[test]
        fn area_is_conserved(bits in proptest::collection::vec(proptest::bool::weighted(0.4), 24 * 16), thr in 1usize..30) {
            let m = Mask { width: 24, height: 16, data: bits };
            let p = partition_holes(&m, thr);
            proptest::prop_assert_eq!(p.total_area(), m.count());
            let mut owner = vec![0u8; m.data.len()];
            for c in p.large.iter().chain(&p.small) {
                for &i in &c.pixels {
                    owner[i] += 1;
                }
            }
            for i in 0..m.data.len() {
                proptest::prop_assert_eq!(owner[i] == 1, m.data[i]);
            }
            proptest::prop_assert!(p.large.iter().all(|c| c.area() >= thr));
            proptest::prop_assert!(p.small.iter().all(|c| c.area() < thr));
        }
    }
}
