//! Pyramidal Lucas–Kanade tracking of a rectangular ROI.

use serde::{Deserialize, Serialize};

use super::RoiBox;
use crate::frame::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LkParams {
    pub levels: usize,
    pub window_radius: usize,
    pub max_iterations: usize,
    /// Stop when the update is shorter than this (pixels).
    pub epsilon: f32,
    /// Minimum eigenvalue of the per-pixel structure tensor, in
    /// (gray level / pixel)^2. Weaker points are not tracked.
    pub min_eigenvalue: f32,
    /// Feature points per box side.
    pub grid: usize,
    /// A point whose mean absolute patch residual exceeds this fails.
    pub max_residual: f32,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window_radius: 7,
            max_iterations: 20,
            epsilon: 0.01,
            min_eigenvalue: 5.0,
            grid: 6,
            max_residual: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    pub boxes: Vec<RoiBox>,
    /// Frames where more than half of the points failed; the box was kept
    /// from the previous frame.
    pub lost: Vec<bool>,
}

impl Tracking {
    pub fn lost_frames(&self) -> usize {
        self.lost.iter().filter(|&&l| l).count()
    }
}

/// One whole-frame box per frame, for datasets that are already face crops.
pub fn full_frame_boxes(n: usize, width: usize, height: usize) -> Vec<RoiBox> {
    (0..n)
        .map(|i| RoiBox { frame_index: i, ..RoiBox::from_top_left(0.0, 0.0, width, height) })
        .collect()
}

struct Level {
    img: GrayImage,
    gx: GrayImage,
    gy: GrayImage,
}

fn downsample(img: &GrayImage) -> GrayImage {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (img.width, img.height);
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5).map(|k| K[k] * img.at(clampi(x as isize + k as isize - 2, w), y)).sum();
        }
    }
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let (sx, sy) = (2 * x, 2 * y);
            out.push((0..5).map(|k| K[k] * tmp[clampi(sy as isize + k as isize - 2, h) * w + sx]).sum());
        }
    }
    GrayImage::new(nw, nh, out)
}

fn gradients(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = (img.at(xr, y) - img.at(xl, y)) / (xr - xl).max(1) as f32;
            gy[y * w + x] = (img.at(x, yd) - img.at(x, yu)) / (yd - yu).max(1) as f32;
        }
    }
    (GrayImage::new(w, h, gx), GrayImage::new(w, h, gy))
}

fn pyramid(img: &GrayImage, levels: usize) -> Vec<Level> {
    let mut out = Vec::with_capacity(levels);
    let mut cur = img.clone();
    for l in 0..levels {
        let (gx, gy) = gradients(&cur);
        let next = (l + 1 < levels && cur.width >= 8 && cur.height >= 8).then(|| downsample(&cur));
        out.push(Level { img: cur, gx, gy });
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    out
}

/// Smallest eigenvalue of the window structure tensor, per pixel.
fn min_eigenvalue(level: &Level, p: (f32, f32), r: usize) -> f32 {
    let (mut a, mut b, mut c) = (0.0f32, 0.0f32, 0.0f32);
    let r = r as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (p.0 + dx as f32, p.1 + dy as f32);
            let ix = level.gx.sample(x, y);
            let iy = level.gy.sample(x, y);
            a += ix * ix;
            b += ix * iy;
            c += iy * iy;
        }
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f32;
    let (a, b, c) = (a / n, b / n, c / n);
    0.5 * ((a + c) - ((a - c) * (a - c) + 4.0 * b * b).sqrt())
}

/// Tracks one point from `prev` to `next`; `None` on failure.
fn track_point(prev: &[Level], next: &[Level], p: (f32, f32), params: &LkParams) -> Option<(f32, f32)> {
    let levels = prev.len().min(next.len());
    let r = params.window_radius as isize;
    let mut guess = (0.0f32, 0.0f32);
    let mut residual = 0.0f32;
    for l in (0..levels).rev() {
        let scale = (1u32 << l) as f32;
        let pl = (p.0 / scale, p.1 / scale);
        let (pi, ni) = (&prev[l], &next[l]);
        let mut patch = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        let (mut gxx, mut gxy, mut gyy) = (0.0f32, 0.0f32, 0.0f32);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (pl.0 + dx as f32, pl.1 + dy as f32);
                let (ix, iy) = (pi.gx.sample(x, y), pi.gy.sample(x, y));
                patch.push((dx as f32, dy as f32, pi.img.sample(x, y), ix, iy));
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
            }
        }
        let det = gxx * gyy - gxy * gxy;
        if det.abs() < 1e-6 {
            if l == 0 {
                return None;
            }
            guess = (guess.0 * 2.0, guess.1 * 2.0);
            continue;
        }
        let mut nu = (0.0f32, 0.0f32);
        for _ in 0..params.max_iterations {
            let (mut bx, mut by) = (0.0f32, 0.0f32);
            let (ox, oy) = (pl.0 + guess.0 + nu.0, pl.1 + guess.1 + nu.1);
            for &(dx, dy, v, ix, iy) in &patch {
                let diff = v - ni.img.sample(ox + dx, oy + dy);
                bx += diff * ix;
                by += diff * iy;
            }
            let eta = ((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
            nu = (nu.0 + eta.0, nu.1 + eta.1);
            if !(nu.0.is_finite() && nu.1.is_finite()) {
                return None;
            }
            if eta.0.hypot(eta.1) < params.epsilon {
                break;
            }
        }
        let d = (guess.0 + nu.0, guess.1 + nu.1);
        if l == 0 {
            let (ox, oy) = (pl.0 + d.0, pl.1 + d.1);
            residual = patch.iter().map(|&(dx, dy, v, _, _)| (v - ni.img.sample(ox + dx, oy + dy)).abs()).sum::<f32>()
                / patch.len() as f32;
            guess = d;
        } else {
            guess = (d.0 * 2.0, d.1 * 2.0);
        }
    }
    let q = (p.0 + guess.0, p.1 + guess.1);
    let (w, h) = (prev[0].img.width as f32, prev[0].img.height as f32);
    let inside = q.0 >= 0.0 && q.1 >= 0.0 && q.0 <= w - 1.0 && q.1 <= h - 1.0;
    (inside && residual <= params.max_residual).then_some(q)
}

fn median(v: &mut [f32]) -> f32 {
    v.sort_by(f32::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tracks `seed` (placed on frame 0) through `frames`. Feature points are a
/// grid inside the box filtered by texture strength. The box center moves
/// by the median point displacement. When more than half the points fail
/// the frame is flagged lost and the box does not move.
pub fn track_roi(frames: &[GrayImage], seed: RoiBox, params: &LkParams) -> Tracking {
    let mut boxes = Vec::with_capacity(frames.len());
    let mut lost = Vec::with_capacity(frames.len());
    if frames.is_empty() {
        return Tracking { boxes, lost };
    }
    let (fw, fh) = (frames[0].width, frames[0].height);
    let mut current = RoiBox { frame_index: 0, ..seed };
    current.clamp_to(fw, fh);

    let mut prev = pyramid(&frames[0], params.levels.max(1));
    let mut points = seed_points(&prev[0], &current, params);
    boxes.push(current);
    lost.push(points.is_empty());

    for (i, frame) in frames.iter().enumerate().skip(1) {
        let next = pyramid(frame, params.levels.max(1));
        let tracked: Vec<Option<(f32, f32)>> = points.iter().map(|&p| track_point(&prev, &next, p, params)).collect();
        let ok = tracked.iter().filter(|t| t.is_some()).count();
        let frame_lost = ok == 0 || 2 * (points.len() - ok) > points.len();
        current.frame_index = i;
        if !frame_lost {
            let mut dx: Vec<f32> = Vec::with_capacity(ok);
            let mut dy: Vec<f32> = Vec::with_capacity(ok);
            for (p, t) in points.iter().zip(&tracked) {
                if let Some(q) = t {
                    dx.push(q.0 - p.0);
                    dy.push(q.1 - p.1);
                }
            }
            let (mx, my) = (median(&mut dx), median(&mut dy));
            for (p, t) in points.iter_mut().zip(&tracked) {
                *p = t.unwrap_or((p.0 + mx, p.1 + my));
            }
            current.center.0 += mx as f64;
            current.center.1 += my as f64;
            current.clamp_to(fw, fh);
        }
        boxes.push(current);
        lost.push(frame_lost);
        prev = next;
    }
    Tracking { boxes, lost }
}

fn seed_points(level: &Level, roi: &RoiBox, params: &LkParams) -> Vec<(f32, f32)> {
    let g = params.grid.max(1);
    let (x0, y0) = roi.top_left();
    let inset = params.window_radius as f64;
    let span_x = (roi.width as f64 - 2.0 * inset).max(0.0);
    let span_y = (roi.height as f64 - 2.0 * inset).max(0.0);
    let mut pts = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            let fx = if g == 1 { 0.5 } else { i as f64 / (g - 1) as f64 };
            let fy = if g == 1 { 0.5 } else { j as f64 / (g - 1) as f64 };
            let p = ((x0 + inset + fx * span_x) as f32, (y0 + inset + fy * span_y) as f32);
            if min_eigenvalue(level, p, params.window_radius) >= params.min_eigenvalue {
                pts.push(p);
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(x: f32, y: f32) -> f32 {
        128.0 + 50.0 * (0.31 * x + 0.17 * y).sin() * (0.23 * y - 0.11 * x).cos() + 30.0 * (0.47 * x).sin() * (0.39 * y).cos()
    }

    fn shifted_video(n: usize, step: (f32, f32)) -> Vec<GrayImage> {
        (0..n)
            .map(|t| {
                let (sx, sy) = (step.0 * t as f32, step.1 * t as f32);
                let data = (0..100 * 120)
                    .map(|k| texture((k % 120) as f32 - sx, (k / 120) as f32 - sy))
                    .collect();
                GrayImage::new(120, 100, data)
            })
            .collect()
    }

    #[test]
    fn follows_horizontal_translation() {
        let frames = shifted_video(10, (2.0, 0.0));
        let seed = RoiBox::from_top_left(20.0, 30.0, 40, 30);
        let out = track_roi(&frames, seed, &LkParams::default());
        assert_eq!(out.lost_frames(), 0);
        for (t, b) in out.boxes.iter().enumerate() {
            let expected = seed.center.0 + 2.0 * t as f64;
            assert!((b.center.0 - expected).abs() <= 0.5, "frame {t}: {} vs {expected}", b.center.0);
            assert!((b.center.1 - seed.center.1).abs() <= 0.5);
        }
    }

    #[test]
    fn follows_diagonal_translation() {
        let frames = shifted_video(6, (-1.5, 2.5));
        let seed = RoiBox::from_top_left(50.0, 20.0, 36, 30);
        let out = track_roi(&frames, seed, &LkParams::default());
        let last = out.boxes.last().unwrap();
        assert!((last.center.0 - (seed.center.0 - 7.5)).abs() <= 0.5);
        assert!((last.center.1 - (seed.center.1 + 12.5)).abs() <= 0.5);
    }

    #[test]
    fn static_video_keeps_seed() {
        let frames = shifted_video(4, (0.0, 0.0));
        let seed = RoiBox::from_top_left(30.0, 25.0, 40, 40);
        let out = track_roi(&frames, seed, &LkParams::default());
        assert!(out.boxes.iter().all(|b| (b.center.0 - seed.center.0).abs() < 1e-3 && (b.center.1 - seed.center.1).abs() < 1e-3));
        assert!(out.boxes.iter().all(|b| (b.width, b.height) == (40, 40)));
    }

    #[test]
    fn black_video_is_lost_and_frozen() {
        let frames = vec![GrayImage::new(64, 48, vec![0.0; 64 * 48]); 5];
        let seed = RoiBox::from_top_left(10.0, 10.0, 20, 20);
        let out = track_roi(&frames, seed, &LkParams::default());
        assert!(out.lost.iter().all(|&l| l));
        assert!(out.boxes.iter().all(|b| b.center == seed.center));
    }

    #[test]
    fn full_frame_boxes_cover_frame() {
        let b = full_frame_boxes(3, 100, 60);
        assert_eq!(b.len(), 3);
        assert_eq!(b[2].frame_index, 2);
        assert_eq!(b[0].clamped_rect(100, 60), (0, 0, 100, 60));
    }
}
