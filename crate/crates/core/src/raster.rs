//! Row-major image and mask buffers.

use std::io::Cursor;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};

pub type Rgb8 = [u8; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Rgb8>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32, fill: Rgb8) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb8 {
        self.data[self.idx(x, y)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.data.iter().flatten().copied().collect();
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(self.width, self.height, raw)
            .ok_or_else(|| Error::InvalidInput("color buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let (width, height) = img.dimensions();
        let data = img.pixels().map(|p| p.0).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Box-filter downscale (or nearest upscale) to the given size.
    pub fn resize(&self, width: u32, height: u32) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let x0 = (x as f64 * sx).floor() as u32;
            let y0 = (y as f64 * sy).floor() as u32;
            let x1 = (((x + 1) as f64 * sx).ceil() as u32).clamp(x0 + 1, self.width);
            let y1 = (((y + 1) as f64 * sy).ceil() as u32).clamp(y0 + 1, self.height);
            let mut acc = [0u64; 3];
            let mut n = 0u64;
            for yy in y0..y1 {
                for xx in x0..x1 {
                    let p = self.get(xx, yy);
                    for c in 0..3 {
                        acc[c] += p[c] as u64;
                    }
                    n += 1;
                }
            }
            [0, 1, 2].map(|c| ((acc[c] + n / 2) / n) as u8)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// Intersection over union; two empty masks have IoU 1.
    pub fn iou(&self, other: &Mask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Single-channel PNG, 255 where the mask is set.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        encode_gray_png(self.width, self.height, raw)
    }

    /// Decodes a single-channel mask PNG. Only the values 0 and 255 are accepted.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (width, height, raw) = decode_gray_png(bytes)?;
        let data = raw
            .into_iter()
            .map(|v| match v {
                0 => Ok(false),
                255 => Ok(true),
                other => Err(Error::ProtocolViolation(format!(
                    "mask value {other} is neither 0 nor 255"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

pub(crate) fn encode_gray_png(width: u32, height: u32, raw: Vec<u8>) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(width, height, raw)
        .ok_or_else(|| Error::InvalidInput("gray buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub(crate) fn decode_gray_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::ProtocolViolation(format!(
            "expected single-channel 8-bit PNG, got {:?}",
            img.color()
        )));
    }
    let img = img.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.into_raw()))
}

/// 4-neighbor offsets in (dx, dy).
pub(crate) const NEIGHBORS4: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
