//! Frequency-strided, time-causal 2-D convolution and its transpose, on
//! `[batch, channels, freq, time]` tensors via im2col and GEMM.

use super::{matmul, matmul_nt, matmul_tn, Real};

/// Frequency-axis stride and symmetric zero padding. The time axis always
/// has stride 1 and `kernel_t - 1` frames of left padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride_f: usize,
    pub pad_f: usize,
}

impl ConvSpec {
    pub fn new(stride_f: usize, pad_f: usize) -> Self {
        Self { stride_f, pad_f }
    }

    pub fn unit() -> Self {
        Self::new(1, 0)
    }

    /// Output frequency size of a forward convolution.
    pub fn conv_out(&self, f: usize, kf: usize) -> Option<usize> {
        (f + 2 * self.pad_f).checked_sub(kf).map(|v| v / self.stride_f + 1)
    }

    /// Output frequency size of a transposed convolution.
    pub fn transpose_out(&self, f: usize, kf: usize) -> Option<usize> {
        ((f.max(1) - 1) * self.stride_f + kf).checked_sub(2 * self.pad_f)
    }
}

/// Which `kernel_t - 1` frames a transposed convolution drops from its full
/// time extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeCrop {
    /// Drop trailing frames: output frame `t` only sees inputs `≤ t`.
    Causal,
    /// Drop leading frames: the exact adjoint of the causal forward conv.
    Adjoint,
}

/// Index map between a `[c, fs, ts]` source plane and the
/// `[c·kf·kt, fg·tg]` column matrix laid over a `[fg, tg]` grid:
/// `col[(c, i, j), (f, t)] = src[c, f·sf + i - pf, t + j - shift]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geom {
    pub c: usize,
    pub fs: usize,
    pub ts: usize,
    pub fg: usize,
    pub tg: usize,
    pub kf: usize,
    pub kt: usize,
    pub sf: usize,
    pub pf: usize,
    pub shift: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kf * self.kt
    }

    fn cols(&self) -> usize {
        self.fg * self.tg
    }

    /// Source row for grid row `f` and kernel row `i`.
    fn src_f(&self, f: usize, i: usize) -> Option<usize> {
        let v = (f * self.sf + i) as isize - self.pf as isize;
        (v >= 0 && (v as usize) < self.fs).then_some(v as usize)
    }

    /// Valid grid-time range for kernel column `j` and the source offset.
    fn t_range(&self, j: usize) -> (usize, usize, isize) {
        let off = j as isize - self.shift as isize;
        let lo = (-off).max(0) as usize;
        let hi = ((self.ts as isize - off).max(0) as usize).min(self.tg);
        (lo.min(hi), hi, off)
    }

    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) {
        // f(col_offset, src_offset, len) for every contiguous time run.
        let n = self.cols();
        for c in 0..self.c {
            for i in 0..self.kf {
                for j in 0..self.kt {
                    let row = (c * self.kf + i) * self.kt + j;
                    let (lo, hi, off) = self.t_range(j);
                    if lo >= hi {
                        continue;
                    }
                    for fg in 0..self.fg {
                        if let Some(sf) = self.src_f(fg, i) {
                            let col = row * n + fg * self.tg + lo;
                            let src = (c * self.fs + sf) * self.ts + (lo as isize + off) as usize;
                            f(col, src, hi - lo);
                        }
                    }
                }
            }
        }
    }

    pub fn gather<T: Real>(&self, src: &[T], cols: &mut [T]) {
        debug_assert_eq!(src.len(), self.c * self.fs * self.ts);
        cols.fill(T::zero());
        self.for_each_run(|col, s, len| cols[col..col + len].copy_from_slice(&src[s..s + len]));
    }

    pub fn scatter<T: Real>(&self, cols: &[T], dst: &mut [T]) {
        self.for_each_run(|col, d, len| {
            for (o, v) in dst[d..d + len].iter_mut().zip(&cols[col..col + len]) {
                *o = *o + *v;
            }
        });
    }
}

/// Shapes of one convolution call, validated by the tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub t: usize,
    pub kf: usize,
    pub kt: usize,
    pub spec: ConvSpec,
}

impl ConvDims {
    fn conv_geom(&self) -> Geom {
        Geom {
            c: self.cin,
            fs: self.f_in,
            ts: self.t,
            fg: self.f_out,
            tg: self.t,
            kf: self.kf,
            kt: self.kt,
            sf: self.spec.stride_f,
            pf: self.spec.pad_f,
            shift: self.kt - 1,
        }
    }

    fn transpose_geom(&self, crop: TimeCrop) -> Geom {
        Geom {
            c: self.cout,
            fs: self.f_out,
            ts: self.t,
            fg: self.f_in,
            tg: self.t,
            kf: self.kf,
            kt: self.kt,
            sf: self.spec.stride_f,
            pf: self.spec.pad_f,
            shift: match crop {
                TimeCrop::Causal => 0,
                TimeCrop::Adjoint => self.kt - 1,
            },
        }
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &bv) in y.chunks_mut(plane).zip(bias.iter().cycle()) {
        for v in chunk {
            *v = *v + bv;
        }
    }
}

fn bias_grad<T: Real>(g: &[T], db: &mut [T], plane: usize) {
    let c = db.len();
    for (k, chunk) in g.chunks(plane).enumerate() {
        let s: T = chunk.iter().copied().sum();
        db[k % c] = db[k % c] + s;
    }
}

/// `y[b, o, f, t] = bias[o] + Σ w[o, c, i, j] x[b, c, f·sf + i - pf, t + j - (kt-1)]`.
pub(crate) fn conv2d_forward<T: Real>(d: &ConvDims, x: &[T], w: &[T], bias: &[T]) -> Vec<T> {
    let g = d.conv_geom();
    let (k, n) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); k * n];
    let mut y = vec![T::zero(); d.b * d.cout * n];
    let xs = d.cin * d.f_in * d.t;
    for b in 0..d.b {
        g.gather(&x[b * xs..(b + 1) * xs], &mut cols);
        matmul(d.cout, k, n, w, &cols, &mut y[b * d.cout * n..(b + 1) * d.cout * n], false);
    }
    add_bias(&mut y, bias, n);
    y
}

/// Gradients of [`conv2d_forward`]; `dx` is skipped when `None`.
pub(crate) fn conv2d_backward<T: Real>(
    d: &ConvDims,
    x: &[T],
    w: &[T],
    gy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let g = d.conv_geom();
    let (k, n) = (g.rows(), g.cols());
    let xs = d.cin * d.f_in * d.t;
    let ys = d.cout * n;
    if let Some(dw) = dw {
        let mut cols = vec![T::zero(); k * n];
        for b in 0..d.b {
            g.gather(&x[b * xs..(b + 1) * xs], &mut cols);
            matmul_nt(d.cout, n, k, &gy[b * ys..(b + 1) * ys], &cols, dw, true);
        }
    }
    if let Some(db) = db {
        bias_grad(gy, db, n);
    }
    if let Some(dx) = dx {
        let mut dcols = vec![T::zero(); k * n];
        for b in 0..d.b {
            matmul_tn(k, d.cout, n, w, &gy[b * ys..(b + 1) * ys], &mut dcols, false);
            g.scatter(&dcols, &mut dx[b * xs..(b + 1) * xs]);
        }
    }
}

/// Transposed convolution with weights `[cin, cout, kf, kt]`; `d.f_in` is the
/// input frequency size and `d.f_out` the (cropped) output size.
pub(crate) fn conv_transpose_forward<T: Real>(
    d: &ConvDims,
    crop: TimeCrop,
    x: &[T],
    w: &[T],
    bias: &[T],
) -> Vec<T> {
    let g = d.transpose_geom(crop);
    let (k, n) = (g.rows(), g.cols());
    let mut cols = vec![T::zero(); k * n];
    let ys = d.cout * d.f_out * d.t;
    let mut y = vec![T::zero(); d.b * ys];
    for b in 0..d.b {
        matmul_tn(k, d.cin, n, w, &x[b * d.cin * n..(b + 1) * d.cin * n], &mut cols, false);
        g.scatter(&cols, &mut y[b * ys..(b + 1) * ys]);
    }
    add_bias(&mut y, bias, d.f_out * d.t);
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose_backward<T: Real>(
    d: &ConvDims,
    crop: TimeCrop,
    x: &[T],
    w: &[T],
    gy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let g = d.transpose_geom(crop);
    let (k, n) = (g.rows(), g.cols());
    let ys = d.cout * d.f_out * d.t;
    let xs = d.cin * n;
    if let Some(db) = db {
        bias_grad(gy, db, d.f_out * d.t);
    }
    if dx.is_none() && dw.is_none() {
        return;
    }
    let mut dcols = vec![T::zero(); k * n];
    let (mut dx, mut dw) = (dx, dw);
    for b in 0..d.b {
        g.gather(&gy[b * ys..(b + 1) * ys], &mut dcols);
        if let Some(dx) = dx.as_deref_mut() {
            matmul(d.cin, k, n, w, &dcols, &mut dx[b * xs..(b + 1) * xs], true);
        }
        if let Some(dw) = dw.as_deref_mut() {
            matmul_nt(d.cin, n, k, &x[b * xs..(b + 1) * xs], &dcols, dw, true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution as an independent reference.
    fn naive_conv(d: &ConvDims, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; d.b * d.cout * d.f_out * d.t];
        for b in 0..d.b {
            for o in 0..d.cout {
                for f in 0..d.f_out {
                    for t in 0..d.t {
                        let mut acc = bias[o];
                        for c in 0..d.cin {
                            for i in 0..d.kf {
                                for j in 0..d.kt {
                                    let fi = (f * d.spec.stride_f + i) as isize - d.spec.pad_f as isize;
                                    let ti = t as isize + j as isize - (d.kt as isize - 1);
                                    if fi < 0 || fi >= d.f_in as isize || ti < 0 {
                                        continue;
                                    }
                                    acc += w[((o * d.cin + c) * d.kf + i) * d.kt + j]
                                        * x[((b * d.cin + c) * d.f_in + fi as usize) * d.t + ti as usize];
                                }
                            }
                        }
                        y[((b * d.cout + o) * d.f_out + f) * d.t + t] = acc;
                    }
                }
            }
        }
        y
    }

    fn seq(n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * s).sin()).collect()
    }

    #[test]
    fn im2col_matches_direct_loops() {
        let spec = ConvSpec::new(2, 2);
        let d = ConvDims {
            b: 2,
            cin: 3,
            cout: 4,
            f_in: 11,
            f_out: spec.conv_out(11, 5).unwrap(),
            t: 6,
            kf: 5,
            kt: 3,
            spec,
        };
        let x = seq(d.b * d.cin * d.f_in * d.t, 0.37);
        let w = seq(d.cout * d.cin * d.kf * d.kt, 0.11);
        let bias = seq(d.cout, 1.3);
        let fast = conv2d_forward(&d, &x, &w, &bias);
        let slow = naive_conv(&d, &x, &w, &bias);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_sizes() {
        let s = ConvSpec::new(2, 2);
        assert_eq!(s.conv_out(257, 5), Some(129));
        assert_eq!(s.conv_out(129, 5), Some(65));
        assert_eq!(s.conv_out(65, 5), Some(33));
        assert_eq!(s.transpose_out(33, 5), Some(65));
        assert_eq!(s.transpose_out(129, 5), Some(257));
    }
}
