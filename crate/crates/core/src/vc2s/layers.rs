//! Forward and backward kernels on channel-major `[c, h, w]` buffers.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Valid (unpadded) stride-1 convolution. `weight` is `[out, in, k, k]`.
pub fn conv2d(input: &[f64], s: Shape3, weight: &[f64], bias: &[f64], k: usize) -> (Vec<f64>, Shape3) {
    let out_c = bias.len();
    let o = Shape3::new(out_c, s.h + 1 - k, s.w + 1 - k);
    let mut out = vec![0.0; o.len()];
    for oc in 0..out_c {
        let dst = &mut out[oc * o.plane()..(oc + 1) * o.plane()];
        dst.fill(bias[oc]);
        for ic in 0..s.c {
            let src = &input[ic * s.plane()..(ic + 1) * s.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((oc * s.c + ic) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..o.h {
                        let row = &src[(y + ky) * s.w + kx..(y + ky) * s.w + kx + o.w];
                        for (d, v) in dst[y * o.w..(y + 1) * o.w].iter_mut().zip(row) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    (out, o)
}

/// Accumulates weight and bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &[f64],
    s: Shape3,
    weight: &[f64],
    k: usize,
    dout: &[f64],
    o: Shape3,
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let mut din = if need_input_grad { vec![0.0; s.len()] } else { Vec::new() };
    for oc in 0..o.c {
        let g = &dout[oc * o.plane()..(oc + 1) * o.plane()];
        dbias[oc] += g.iter().sum::<f64>();
        for ic in 0..s.c {
            let src = &input[ic * s.plane()..(ic + 1) * s.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((oc * s.c + ic) * k + ky) * k + kx;
                    let mut acc = 0.0;
                    for y in 0..o.h {
                        let row = &src[(y + ky) * s.w + kx..(y + ky) * s.w + kx + o.w];
                        acc += g[y * o.w..(y + 1) * o.w].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                    }
                    dweight[wi] += acc;
                    if need_input_grad {
                        let wv = weight[wi];
                        let dsrc = &mut din[ic * s.plane()..(ic + 1) * s.plane()];
                        for y in 0..o.h {
                            let row = &mut dsrc[(y + ky) * s.w + kx..(y + ky) * s.w + kx + o.w];
                            for (d, gv) in row.iter_mut().zip(&g[y * o.w..(y + 1) * o.w]) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the activation was clipped.
pub fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 stride-2 max pooling. With `ceil` the trailing partial windows are
/// kept (clipped to the input); otherwise they are dropped. Returns the
/// pooled values and the flat input index of each maximum.
pub fn maxpool2(input: &[f64], s: Shape3, ceil: bool) -> (Vec<f64>, Vec<usize>, Shape3) {
    let (oh, ow) = if ceil { (s.h.div_ceil(2), s.w.div_ceil(2)) } else { (s.h / 2, s.w / 2) };
    let o = Shape3::new(s.c, oh, ow);
    let mut out = Vec::with_capacity(o.len());
    let mut arg = Vec::with_capacity(o.len());
    for c in 0..s.c {
        let base = c * s.plane();
        for y in 0..oh {
            for x in 0..ow {
                let mut best = usize::MAX;
                let mut bv = f64::NEG_INFINITY;
                for yy in 2 * y..(2 * y + 2).min(s.h) {
                    for xx in 2 * x..(2 * x + 2).min(s.w) {
                        let i = base + yy * s.w + xx;
                        if input[i] > bv {
                            bv = input[i];
                            best = i;
                        }
                    }
                }
                out.push(bv);
                arg.push(best);
            }
        }
    }
    (out, arg, o)
}

pub fn maxpool2_backward(arg: &[usize], dout: &[f64], input_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (&i, g) in arg.iter().zip(dout) {
        din[i] += g;
    }
    din
}

/// Bin `[start, end)` of adaptive pooling output index `i`.
fn bin(i: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = i * in_len / out_len;
    let end = ((i + 1) * in_len).div_ceil(out_len);
    (start, end)
}

/// Adaptive average pooling; also valid when the output is larger than the
/// input (bins then overlap or repeat).
pub fn adaptive_avg_pool(input: &[f64], s: Shape3, oh: usize, ow: usize) -> (Vec<f64>, Shape3) {
    let o = Shape3::new(s.c, oh, ow);
    let mut out = Vec::with_capacity(o.len());
    for c in 0..s.c {
        let base = c * s.plane();
        for y in 0..oh {
            let (y0, y1) = bin(y, s.h, oh);
            for x in 0..ow {
                let (x0, x1) = bin(x, s.w, ow);
                let mut acc = 0.0;
                for yy in y0..y1 {
                    acc += input[base + yy * s.w + x0..base + yy * s.w + x1].iter().sum::<f64>();
                }
                out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    (out, o)
}

pub fn adaptive_avg_pool_backward(dout: &[f64], s: Shape3, o: Shape3) -> Vec<f64> {
    let mut din = vec![0.0; s.len()];
    for c in 0..s.c {
        let base = c * s.plane();
        for y in 0..o.h {
            let (y0, y1) = bin(y, s.h, o.h);
            for x in 0..o.w {
                let (x0, x1) = bin(x, s.w, o.w);
                let g = dout[(c * o.h + y) * o.w + x] / ((y1 - y0) * (x1 - x0)) as f64;
                for yy in y0..y1 {
                    for v in &mut din[base + yy * s.w + x0..base + yy * s.w + x1] {
                        *v += g;
                    }
                }
            }
        }
    }
    din
}

/// `weight` is `[out, in]` row-major.
pub fn linear(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + weight[o * n..(o + 1) * n].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

pub fn linear_backward(
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let n = input.len();
    let mut din = if need_input_grad { vec![0.0; n] } else { Vec::new() };
    for (o, &g) in dout.iter().enumerate() {
        dbias[o] += g;
        if g == 0.0 {
            continue;
        }
        for (d, x) in dweight[o * n..(o + 1) * n].iter_mut().zip(input) {
            *d += g * x;
        }
        if need_input_grad {
            for (d, w) in din.iter_mut().zip(&weight[o * n..(o + 1) * n]) {
                *d += g * w;
            }
        }
    }
    din
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_naive_loop() {
        let s = Shape3::new(2, 5, 6);
        let input: Vec<f64> = (0..s.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let k = 3;
        let weight: Vec<f64> = (0..3 * 2 * 9).map(|i| ((i * 13) % 7) as f64 * 0.1 - 0.3).collect();
        let bias = [0.5, -1.0, 0.25];
        let (out, o) = conv2d(&input, s, &weight, &bias, k);
        assert_eq!(o, Shape3::new(3, 3, 4));
        for oc in 0..3 {
            for y in 0..3 {
                for x in 0..4 {
                    let mut acc = bias[oc];
                    for ic in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += weight[((oc * 2 + ic) * 3 + ky) * 3 + kx] * input[(ic * 5 + y + ky) * 6 + x + kx];
                            }
                        }
                    }
                    assert!((out[(oc * 3 + y) * 4 + x] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_modes() {
        let s = Shape3::new(1, 5, 1);
        let input = [1.0, 3.0, 2.0, 0.0, 7.0];
        let (floor, _, fo) = maxpool2(&input, s, false);
        assert_eq!((fo.h, fo.w), (2, 0));
        assert!(floor.is_empty());
        let (ceil, arg, co) = maxpool2(&input, s, true);
        assert_eq!((co.h, co.w), (3, 1));
        assert_eq!(ceil, vec![3.0, 2.0, 7.0]);
        assert_eq!(arg, vec![1, 2, 4]);
    }

    #[test]
    fn adaptive_pool_bins() {
        // 5 -> 3: bins [0,2), [1,4), [3,5).
        let s = Shape3::new(1, 1, 5);
        let (out, _) = adaptive_avg_pool(&[1.0, 2.0, 3.0, 4.0, 5.0], s, 1, 3);
        assert_eq!(out, vec![1.5, 3.0, 4.5]);
        // Upsampling 2 -> 4 repeats each input twice.
        let (up, _) = adaptive_avg_pool(&[1.0, 2.0], Shape3::new(1, 2, 1), 4, 1);
        assert_eq!(up, vec![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn adaptive_pool_backward_is_adjoint() {
        let s = Shape3::new(2, 7, 3);
        let x: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let (y, o) = adaptive_avg_pool(&x, s, 4, 5);
        let g: Vec<f64> = (0..o.len()).map(|i| (i as f64 * 0.91).cos()).collect();
        let dx = adaptive_avg_pool_backward(&g, s, o);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
