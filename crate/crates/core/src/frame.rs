//! In-memory RGB frames and the few image operations the pipeline needs.

use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Single-channel floating point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "frame buffer size");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Spatial mean of each channel.
    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut acc = [0u64; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c] as u64;
            }
        }
        let n = (self.width * self.height) as f64;
        [acc[0] as f64 / n, acc[1] as f64 / n, acc[2] as f64 / n]
    }

    /// ITU-R BT.601 luma.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        GrayImage { width: self.width, height: self.height, data }
    }

    /// Planar channel-major copy scaled to [0, 1].
    pub fn to_planar_unit(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + i] = px[c] as f64 / 255.0;
            }
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbFrame {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RgbFrame { width: w, height: h, data }
    }

    /// Bilinear resize with pixel-center alignment (the usual
    /// `INTER_LINEAR` convention). Same-size resize is an exact copy.
    pub fn resize_bilinear(&self, w: usize, h: usize) -> RgbFrame {
        if w == self.width && h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        let mut data = Vec::with_capacity(w * h * 3);
        for dy in 0..h {
            let (y0, y1, fy) = source_coord(dy, sy, self.height);
            for dx in 0..w {
                let (x0, x1, fx) = source_coord(dx, sx, self.width);
                for c in 0..3 {
                    let p = |x: usize, y: usize| self.data[(y * self.width + x) * 3 + c] as f64;
                    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                    let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    data.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        RgbFrame { width: w, height: h, data }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Ok(RgbFrame::new(w as usize, h as usize, img.into_raw()))
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new(&mut out);
        image::ImageEncoder::write_image(
            encoder,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .expect("in-memory PNG encoding");
        out
    }
}

fn source_coord(d: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    let f = if i0 == len - 1 { 0.0 } else { s - i0 as f64 };
    (i0, i1, f)
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with clamp-to-edge addressing.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let xf = x.clamp(0.0, (self.width - 1) as f32);
        let yf = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = xf.floor() as usize;
        let y0 = yf.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = xf - x0 as f32;
        let ay = yf - y0 as f32;
        let top = self.at(x0, y0) * (1.0 - ax) + self.at(x1, y0) * ax;
        let bot = self.at(x0, y1) * (1.0 - ax) + self.at(x1, y1) * ax;
        top * (1.0 - ay) + bot * ay
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_resize_is_identity() {
        let f = RgbFrame::new(2, 2, (0..12).map(|v| v as u8 * 20).collect());
        assert_eq!(f.resize_bilinear(2, 2), f);
    }

    #[test]
    fn png_round_trip() {
        let f = RgbFrame::new(3, 2, (0..18).map(|v| v as u8 * 13).collect());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        std::fs::write(&p, f.encode_png()).unwrap();
        assert_eq!(RgbFrame::load_png(&p).unwrap(), f);
    }

    #[test]
    fn luma_weights() {
        let g = RgbFrame::filled(1, 1, [100, 200, 50]).to_gray();
        assert!((g.data[0] - (29.9 + 117.4 + 5.7)).abs() < 1e-3);
    }
}
