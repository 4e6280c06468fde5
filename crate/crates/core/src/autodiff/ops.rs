use std::sync::Arc;

use num_complex::Complex;

use super::conv::{conv2d_forward, conv_transpose_forward, ConvDims, ConvSpec, TimeCrop};
use super::lstm::{lstm_forward, LstmDims};
use super::tape::Op;
use super::tensor::{broadcast_map, strides, walk};
use super::{matmul, matmul_nt, Real, Tape, Tensor, Var};
use crate::signal::{analysis_frames, synthesis, StftConfig};
use crate::{Error, Result};

/// Reduction kind for [`Tape::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    /// Backward routes the gradient to the first maximal element.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Unary {
    Sigmoid,
    Relu,
    Tanh,
    Log,
    Sqrt,
    Abs,
    Exp,
    Square,
}

impl Unary {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Unary::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Unary::Relu => {
                if x < T::zero() {
                    T::zero()
                } else {
                    x
                }
            }
            Unary::Tanh => x.tanh(),
            Unary::Log => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Exp => x.exp(),
            Unary::Square => x * x,
        }
    }

    /// `dy/dx` given the input `x` and output `y`.
    pub(super) fn derivative<T: Real>(self, x: T, y: T) -> T {
        let two = T::lit(2.0);
        match self {
            Unary::Sigmoid => y * (T::one() - y),
            Unary::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Unary::Tanh => T::one() - y * y,
            Unary::Log => T::one() / x,
            Unary::Sqrt => T::one() / (two * y),
            Unary::Abs => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Unary::Exp => y,
            Unary::Square => two * x,
        }
    }
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

impl<T: Real> Tape<T> {
    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn check_axis(&self, x: Var, axis: usize) -> Result<()> {
        if axis >= self.shape(x).len() {
            return Err(dim_err(format!(
                "axis {axis} out of range for shape {:?}",
                self.shape(x)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.check_same(a, b, what)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    fn map_value(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        Tensor::new(self.shape(a).to_vec(), data).expect("same shape")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::lit(s);
        let value = self.map_value(a, |x| x * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::lit(s);
        let value = self.map_value(a, |x| x + s);
        self.push(value, Op::AddScalar(a), &[a])
    }

    fn unary(&mut self, a: Var, u: Unary) -> Var {
        let value = self.map_value(a, |x| u.apply(x));
        self.push(value, Op::Unary(a, u), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sqrt)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Abs)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    /// `a + b` where `b` has `a`'s rank and size 1 on any broadcast axis.
    pub fn broadcast_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let map = broadcast_map(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.data(a), self.data(b));
        let data = map.iter().enumerate().map(|(k, &m)| av[k] + bv[m]).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::BroadcastAdd { a, b, map }, &[a, b]))
    }

    /// `a * b` with the broadcasting rule of [`Tape::broadcast_add`].
    pub fn broadcast_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let map = broadcast_map(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.data(a), self.data(b));
        let data = map.iter().enumerate().map(|(k, &m)| av[k] * bv[m]).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::BroadcastMul { a, b, map }, &[a, b]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.data(a).iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Mean or max over `axes`, keeping them as size-1 dimensions.
    pub fn reduce(&mut self, x: Var, axes: &[usize], kind: Reduce) -> Result<Var> {
        for &ax in axes {
            self.check_axis(x, ax)?;
        }
        let shape = self.shape(x).to_vec();
        let mut out_shape = shape.clone();
        for &ax in axes {
            out_shape[ax] = 1;
        }
        let count = shape.iter().product::<usize>() / out_shape.iter().product::<usize>().max(1);
        let map = broadcast_map(&shape, &out_shape)?;
        let n_out: usize = out_shape.iter().product();
        let xv = self.data(x);
        let mut argmax = Vec::new();
        let data = match kind {
            Reduce::Mean => {
                let mut acc = vec![T::zero(); n_out];
                for (k, &m) in map.iter().enumerate() {
                    acc[m] = acc[m] + xv[k];
                }
                let inv = T::one() / T::lit(count as f64);
                acc.into_iter().map(|v| v * inv).collect()
            }
            Reduce::Max => {
                let mut best = vec![T::neg_infinity(); n_out];
                argmax = vec![usize::MAX; n_out];
                for (k, &m) in map.iter().enumerate() {
                    if argmax[m] == usize::MAX || xv[k] > best[m] {
                        best[m] = xv[k];
                        argmax[m] = k;
                    }
                }
                best
            }
        };
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Reduce { x, kind, map, count, argmax }, &[x]))
    }

    /// Joins tensors that agree on every axis but `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| dim_err("concat of nothing".into()))?;
        self.check_axis(first, axis)?;
        let base = self.shape(first).to_vec();
        for &x in xs {
            let s = self.shape(x);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(dim_err(format!("concat: {s:?} incompatible with {base:?} on axis {axis}")));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let chunks: Vec<usize> = xs.iter().map(|&x| self.shape(x)[axis] * inner).collect();
        let mut data = Vec::with_capacity(outer * chunks.iter().sum::<usize>());
        for o in 0..outer {
            for (&x, &c) in xs.iter().zip(&chunks) {
                data.extend_from_slice(&self.data(x)[o * c..(o + 1) * c]);
            }
        }
        let mut shape = base;
        shape[axis] = xs.iter().map(|&x| self.shape(x)[axis]).sum();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { xs: xs.to_vec(), outer, chunks }, xs))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        if start + len > shape[axis] {
            return Err(dim_err(format!(
                "slice {start}..{} out of range for axis {axis} of {shape:?}",
                start + len
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let (in_chunk, out_len, begin) = (shape[axis] * inner, len * inner, start * inner);
        let xv = self.data(x);
        let mut data = Vec::with_capacity(outer * out_len);
        for o in 0..outer {
            data.extend_from_slice(&xv[o * in_chunk + begin..o * in_chunk + begin + out_len]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            Op::Slice {
                x,
                outer,
                in_chunk,
                start: begin,
                len: out_len,
            },
            &[x],
        ))
    }

    /// Consecutive slices of the given sizes along `axis`.
    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        self.check_axis(x, axis)?;
        if sizes.iter().sum::<usize>() != self.shape(x)[axis] {
            return Err(dim_err(format!(
                "split sizes {sizes:?} do not cover axis {axis} of {:?}",
                self.shape(x)
            )));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.slice(x, axis, start, s)?);
            start += s;
        }
        Ok(out)
    }

    /// Zero padding on both ends of `axis`.
    pub fn pad(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let in_chunk = shape[axis] * inner;
        let out_chunk = (shape[axis] + before + after) * inner;
        let xv = self.data(x);
        let mut data = vec![T::zero(); outer * out_chunk];
        for o in 0..outer {
            let dst = o * out_chunk + before * inner;
            data[dst..dst + in_chunk].copy_from_slice(&xv[o * in_chunk..(o + 1) * in_chunk]);
        }
        let mut out_shape = shape;
        out_shape[axis] += before + after;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            Op::Pad {
                x,
                outer,
                in_chunk,
                before: before * inner,
                out_chunk,
            },
            &[x],
        ))
    }

    /// Axis permutation: output axis `k` is input axis `perm[k]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(dim_err(format!("{perm:?} is not a permutation of {} axes", shape.len())));
        }
        let st = strides(&shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
        let map = walk(&out_shape, &src_strides);
        let xv = self.data(x);
        let data = map.iter().map(|&k| xv[k]).collect();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Gather { x, map }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// `[m, k] × [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err(format!("matmul: {sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![T::zero(); m * n];
        matmul(m, k, n, self.data(a), self.data(b), &mut data, false);
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(value, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// `x Wᵀ + b` over the last axis; `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let input = *sx.last().ok_or_else(|| dim_err("linear on a rank-0 value".into()))?;
        if sw.len() != 2 || sw[1] != input {
            return Err(dim_err(format!("linear: input {sx:?} against weight {sw:?}")));
        }
        let output = sw[0];
        if let Some(b) = b {
            if self.shape(b) != [output] {
                return Err(dim_err(format!("linear: bias {:?}, expected [{output}]", self.shape(b))));
            }
        }
        let rows = self.value(x).len() / input.max(1);
        let mut data = vec![T::zero(); rows * output];
        matmul_nt(rows, input, output, self.data(x), self.data(w), &mut data, false);
        if let Some(b) = b {
            let bv = self.data(b);
            for row in data.chunks_mut(output) {
                for (v, &bb) in row.iter_mut().zip(bv) {
                    *v = *v + bb;
                }
            }
        }
        let mut shape = sx;
        *shape.last_mut().expect("rank checked") = output;
        let value = Tensor::new(shape, data)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Linear { x, w, b, rows, input, output }, &inputs))
    }

    fn conv_dims(&self, x: Var, w: Var, b: Var, spec: ConvSpec, transpose: bool) -> Result<ConvDims> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 4 || sw.len() != 4 || sb.len() != 1 {
            return Err(dim_err(format!("conv: x {sx:?}, kernel {sw:?}, bias {sb:?}")));
        }
        let (cin, cout) = if transpose { (sw[0], sw[1]) } else { (sw[1], sw[0]) };
        if sx[1] != cin || sb[0] != cout || spec.stride_f == 0 || sw[3] == 0 {
            return Err(dim_err(format!(
                "conv: x {sx:?} does not match kernel {sw:?} / bias {sb:?}"
            )));
        }
        let f_out = if transpose {
            spec.transpose_out(sx[2], sw[2])
        } else {
            spec.conv_out(sx[2], sw[2])
        }
        .filter(|&f| f > 0)
        .ok_or_else(|| dim_err(format!("conv: kernel {sw:?} too large for input {sx:?}")))?;
        Ok(ConvDims {
            b: sx[0],
            cin,
            cout,
            f_in: sx[2],
            f_out,
            t: sx[3],
            kf: sw[2],
            kt: sw[3],
            spec,
        })
    }

    /// Convolution of `x: [B, Cin, F, T]` with `w: [Cout, Cin, KF, KT]`.
    /// Frequency is strided and symmetrically padded; time is causal, so
    /// output frame `t` reads input frames `t - KT + 1 ..= t`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let dims = self.conv_dims(x, w, b, spec, false)?;
        let data = conv2d_forward(&dims, self.data(x), self.data(w), self.data(b));
        let value = Tensor::new(vec![dims.b, dims.cout, dims.f_out, dims.t], data)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, dims }, &[x, w, b]))
    }

    /// Transposed convolution of `x: [B, Cin, F, T]` with
    /// `w: [Cin, Cout, KF, KT]`. The frequency axis grows to
    /// `(F - 1)·stride + KF - 2·pad`; `crop` picks which time frames survive.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec, crop: TimeCrop) -> Result<Var> {
        let dims = self.conv_dims(x, w, b, spec, true)?;
        let data = conv_transpose_forward(&dims, crop, self.data(x), self.data(w), self.data(b));
        let value = Tensor::new(vec![dims.b, dims.cout, dims.f_out, dims.t], data)?;
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, dims, crop }, &[x, w, b]))
    }

    /// Normalises over `norm_axes` (zero mean, unit variance) and applies a
    /// per-channel affine map along `channel_axis`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        norm_axes: &[usize],
        channel_axis: usize,
        eps: f64,
    ) -> Result<Var> {
        self.check_axis(x, channel_axis)?;
        for &ax in norm_axes {
            self.check_axis(x, ax)?;
        }
        let shape = self.shape(x).to_vec();
        let c = shape[channel_axis];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(dim_err(format!(
                "layer_norm: affine {:?}/{:?}, expected [{c}]",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let mut gshape = shape.clone();
        for &ax in norm_axes {
            gshape[ax] = 1;
        }
        let n_groups: usize = gshape.iter().product();
        let groups = broadcast_map(&shape, &gshape)?;
        let cs = strides(&shape)[channel_axis];
        let channel: Vec<usize> = (0..groups.len()).map(|k| (k / cs) % c).collect();
        let xv = self.data(x);
        let mut sum = vec![T::zero(); n_groups];
        let mut cnt = vec![0usize; n_groups];
        for (k, &q) in groups.iter().enumerate() {
            sum[q] = sum[q] + xv[k];
            cnt[q] += 1;
        }
        let mean: Vec<T> = sum.iter().zip(&cnt).map(|(&s, &n)| s / T::lit(n as f64)).collect();
        let mut var = vec![T::zero(); n_groups];
        for (k, &q) in groups.iter().enumerate() {
            let d = xv[k] - mean[q];
            var[q] = var[q] + d * d;
        }
        let eps = T::lit(eps);
        let inv_std: Vec<T> = var
            .iter()
            .zip(&cnt)
            .map(|(&v, &n)| T::one() / (v / T::lit(n as f64) + eps).sqrt())
            .collect();
        let xhat: Vec<T> = groups.iter().enumerate().map(|(k, &q)| (xv[k] - mean[q]) * inv_std[q]).collect();
        let (gv, bv) = (self.data(gamma), self.data(beta));
        let data = xhat.iter().zip(&channel).map(|(&h, &ch)| h * gv[ch] + bv[ch]).collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                groups,
                n_groups,
                channel,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// LSTM over `x: [seq, batch, in]` with `w_ih: [4H, in]`,
    /// `w_hh: [4H, H]`, `b: [4H]`. With `reverse` the recurrence runs from
    /// the last position to the first.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var, reverse: bool) -> Result<Var> {
        let (sx, si, sh, sb) = (self.shape(x), self.shape(w_ih), self.shape(w_hh), self.shape(b));
        let ok = sx.len() == 3
            && si.len() == 2
            && sh.len() == 2
            && sb.len() == 1
            && si[0] % 4 == 0
            && si[1] == sx[2]
            && sh == [si[0], si[0] / 4]
            && sb[0] == si[0];
        if !ok {
            return Err(dim_err(format!(
                "lstm: x {sx:?}, w_ih {si:?}, w_hh {sh:?}, b {sb:?}"
            )));
        }
        let dims = LstmDims {
            seq: sx[0],
            batch: sx[1],
            input: sx[2],
            hidden: si[0] / 4,
            reverse,
        };
        let cache = lstm_forward(&dims, self.data(x), self.data(w_ih), self.data(w_hh), self.data(b));
        let value = Tensor::new(vec![dims.seq, dims.batch, dims.hidden], cache.output().to_vec())?;
        Ok(self.push(value, Op::Lstm { x, w_ih, w_hh, b, dims, cache }, &[x, w_ih, w_hh, b]))
    }

    /// STFT of a `[len]` signal into `[2, freq, frames]` (real plane, then
    /// imaginary plane), with the framing of [`crate::signal::stft`].
    pub fn stft(&mut self, x: Var, cfg: &StftConfig) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() != 1 || shape[0] < cfg.window_size() {
            return Err(dim_err(format!(
                "stft needs a rank-1 signal of at least {} samples, got {shape:?}",
                cfg.window_size()
            )));
        }
        let (bins, n_frames) = analysis_frames(self.data(x), cfg.window(), cfg.hop_size());
        let mut data: Vec<T> = bins.iter().map(|c| c.re).collect();
        data.extend(bins.iter().map(|c| c.im));
        let value = Tensor::new(vec![2, cfg.n_freq(), n_frames], data)?;
        let op = Op::Stft {
            x,
            window: Arc::from(cfg.window()),
            hop: cfg.hop_size(),
            n_frames,
        };
        Ok(self.push(value, op, &[x]))
    }

    /// Overlap-add inverse of [`Tape::stft`], cropped to `len` samples.
    pub fn istft(&mut self, x: Var, cfg: &StftConfig, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] != 2 || shape[1] != cfg.n_freq() || shape[2] != cfg.n_frames(len) {
            return Err(dim_err(format!(
                "istft: {shape:?} is not a [2, {}, {}] spectrogram",
                cfg.n_freq(),
                cfg.n_frames(len)
            )));
        }
        let plane = shape[1] * shape[2];
        let xv = self.data(x);
        let bins: Vec<Complex<T>> = (0..plane).map(|k| Complex::new(xv[k], xv[plane + k])).collect();
        let data = synthesis(&bins, shape[2], cfg.window_size(), cfg.hop_size(), cfg.cola_gain(), len);
        let value = Tensor::new(vec![len], data)?;
        let op = Op::Istft {
            x,
            n: cfg.window_size(),
            hop: cfg.hop_size(),
            cola: cfg.cola_gain(),
            n_frames: shape[2],
        };
        Ok(self.push(value, op, &[x]))
    }
}
