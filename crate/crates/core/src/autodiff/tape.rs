use std::sync::Arc;

use num_complex::Complex;

use super::conv::{conv2d_backward, conv_transpose_backward, ConvDims, TimeCrop};
use super::lstm::{lstm_backward, LstmCache, LstmDims};
use super::ops::{Reduce, Unary};
use super::{matmul, matmul_nt, matmul_tn, Real, Tensor};
use crate::signal::{analysis_adjoint, synthesis_adjoint};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

pub(super) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Unary(Var, Unary),
    /// `b` broadcast to `a`; `map[i]` is the element of `b` used at `i`.
    BroadcastAdd { a: Var, b: Var, map: Vec<usize> },
    BroadcastMul { a: Var, b: Var, map: Vec<usize> },
    Sum(Var),
    /// `map[i]` is the output cell of input element `i`.
    Reduce { x: Var, kind: Reduce, map: Vec<usize>, count: usize, argmax: Vec<usize> },
    Concat { xs: Vec<Var>, outer: usize, chunks: Vec<usize> },
    Slice { x: Var, outer: usize, in_chunk: usize, start: usize, len: usize },
    Pad { x: Var, outer: usize, in_chunk: usize, before: usize, out_chunk: usize },
    /// `map[o]` is the input element copied to output `o`.
    Gather { x: Var, map: Vec<usize> },
    Reshape(Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Linear { x: Var, w: Var, b: Option<Var>, rows: usize, input: usize, output: usize },
    Conv2d { x: Var, w: Var, b: Var, dims: ConvDims },
    ConvTranspose2d { x: Var, w: Var, b: Var, dims: ConvDims, crop: TimeCrop },
    LayerNorm { x: Var, gamma: Var, beta: Var, groups: Vec<usize>, n_groups: usize, channel: Vec<usize>, xhat: Vec<T>, inv_std: Vec<T> },
    Lstm { x: Var, w_ih: Var, w_hh: Var, b: Var, dims: LstmDims, cache: LstmCache<T> },
    Stft { x: Var, window: Arc<[f64]>, hop: usize, n_frames: usize },
    Istft { x: Var, n: usize, hop: usize, cola: f64, n_frames: usize },
}

pub(super) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// A tape is a single-threaded context; independent tapes can run on
/// different threads.
pub struct Tape<T> {
    pub(super) nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar with respect to every leaf that needed one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(super) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a single-element value.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            } else {
                self.backward_node(i, &g, &mut grads);
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if self.wants(v) {
                let n = self.nodes[v.0].value.len();
                f(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]));
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d - g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| zip3(d, g, bv, |g, y| g * y));
                acc(*b, &mut |d| zip3(d, g, av, |g, x| g * x));
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| zip3(d, g, bv, |g, y| g / y));
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] - g[k] * av[k] / (bv[k] * bv[k]);
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| zip3(d, g, g, |g, _| g * *s)),
            Op::AddScalar(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::Unary(a, u) => {
                let (x, y) = (val(*a), node.value.data());
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + g[k] * u.derivative(x[k], y[k]);
                    }
                });
            }
            Op::BroadcastAdd { a, b, map } => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for (k, &m) in map.iter().enumerate() {
                        d[m] = d[m] + g[k];
                    }
                });
            }
            Op::BroadcastMul { a, b, map } => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for (k, &m) in map.iter().enumerate() {
                        d[k] = d[k] + g[k] * bv[m];
                    }
                });
                acc(*b, &mut |d| {
                    for (k, &m) in map.iter().enumerate() {
                        d[m] = d[m] + g[k] * av[k];
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d = *d + g[0])),
            Op::Reduce { x, kind, map, count, argmax } => match kind {
                Reduce::Mean => {
                    let inv = T::one() / T::lit(*count as f64);
                    acc(*x, &mut |d| {
                        for (k, &m) in map.iter().enumerate() {
                            d[k] = d[k] + g[m] * inv;
                        }
                    });
                }
                Reduce::Max => acc(*x, &mut |d| {
                    for (o, &k) in argmax.iter().enumerate() {
                        d[k] = d[k] + g[o];
                    }
                }),
            },
            Op::Concat { xs, outer, chunks } => {
                let total: usize = chunks.iter().sum();
                let mut off = 0;
                for (x, &c) in xs.iter().zip(chunks) {
                    acc(*x, &mut |d| {
                        for o in 0..*outer {
                            add_into(&mut d[o * c..(o + 1) * c], &g[o * total + off..o * total + off + c]);
                        }
                    });
                    off += c;
                }
            }
            Op::Slice { x, outer, in_chunk, start, len } => acc(*x, &mut |d| {
                for o in 0..*outer {
                    let dst = o * in_chunk + start;
                    add_into(&mut d[dst..dst + len], &g[o * len..(o + 1) * len]);
                }
            }),
            Op::Pad { x, outer, in_chunk, before, out_chunk } => acc(*x, &mut |d| {
                for o in 0..*outer {
                    let src = o * out_chunk + before;
                    add_into(&mut d[o * in_chunk..(o + 1) * in_chunk], &g[src..src + in_chunk]);
                }
            }),
            Op::Gather { x, map } => acc(*x, &mut |d| {
                for (o, &k) in map.iter().enumerate() {
                    d[k] = d[k] + g[o];
                }
            }),
            Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| matmul_nt(*m, *n, *k, g, bv, d, true));
                acc(*b, &mut |d| matmul_tn(*k, *m, *n, av, g, d, true));
            }
            Op::Linear { x, w, b, rows, input, output } => {
                let (xv, wv) = (val(*x), val(*w));
                acc(*x, &mut |d| matmul(*rows, *output, *input, g, wv, d, true));
                acc(*w, &mut |d| matmul_tn(*output, *rows, *input, g, xv, d, true));
                if let Some(b) = b {
                    acc(*b, &mut |d| {
                        for row in g.chunks(*output) {
                            add_into(d, row);
                        }
                    });
                }
            }
            Op::Conv2d { x, w, b, dims } => {
                let (mut dx, mut dw, mut db) = self.take3(grads, *x, *w, *b);
                conv2d_backward(dims, val(*x), val(*w), g, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                put3(grads, (*x, dx), (*w, dw), (*b, db));
            }
            Op::ConvTranspose2d { x, w, b, dims, crop } => {
                let (mut dx, mut dw, mut db) = self.take3(grads, *x, *w, *b);
                conv_transpose_backward(
                    dims,
                    *crop,
                    val(*x),
                    val(*w),
                    g,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                put3(grads, (*x, dx), (*w, dw), (*b, db));
            }
            Op::LayerNorm { x, gamma, beta, groups, n_groups, channel, xhat, inv_std } => {
                let gv = val(*gamma);
                acc(*gamma, &mut |d| {
                    for k in 0..g.len() {
                        d[channel[k]] = d[channel[k]] + g[k] * xhat[k];
                    }
                });
                acc(*beta, &mut |d| {
                    for k in 0..g.len() {
                        d[channel[k]] = d[channel[k]] + g[k];
                    }
                });
                acc(*x, &mut |d| {
                    let mut s1 = vec![T::zero(); *n_groups];
                    let mut s2 = vec![T::zero(); *n_groups];
                    let mut cnt = vec![0usize; *n_groups];
                    for k in 0..g.len() {
                        let dxh = g[k] * gv[channel[k]];
                        s1[groups[k]] = s1[groups[k]] + dxh;
                        s2[groups[k]] = s2[groups[k]] + dxh * xhat[k];
                        cnt[groups[k]] += 1;
                    }
                    for k in 0..g.len() {
                        let q = groups[k];
                        let n = T::lit(cnt[q] as f64);
                        let dxh = g[k] * gv[channel[k]];
                        d[k] = d[k] + inv_std[q] * (dxh - s1[q] / n - xhat[k] * s2[q] / n);
                    }
                });
            }
            Op::Lstm { x, w_ih, w_hh, b, dims, cache } => {
                let (mut dx, mut dwi) = (self.take(grads, *x), self.take(grads, *w_ih));
                let (mut dwh, mut db) = (self.take(grads, *w_hh), self.take(grads, *b));
                lstm_backward(
                    dims,
                    cache,
                    val(*x),
                    val(*w_ih),
                    val(*w_hh),
                    g,
                    dx.as_deref_mut(),
                    dwi.as_deref_mut(),
                    dwh.as_deref_mut(),
                    db.as_deref_mut(),
                );
                for (v, d) in [(*x, dx), (*w_ih, dwi), (*w_hh, dwh), (*b, db)] {
                    if d.is_some() {
                        grads[v.0] = d;
                    }
                }
            }
            Op::Stft { x, window, hop, n_frames } => {
                let plane = g.len() / 2;
                let cg: Vec<Complex<T>> = (0..plane).map(|k| Complex::new(g[k], g[plane + k])).collect();
                let len = self.nodes[x.0].value.len();
                let gx = analysis_adjoint(&cg, *n_frames, window, *hop, len);
                acc(*x, &mut |d| add_into(d, &gx));
            }
            Op::Istft { x, n, hop, cola, n_frames } => {
                let gc = synthesis_adjoint(g, *n_frames, *n, *hop, *cola);
                acc(*x, &mut |d| {
                    let plane = gc.len();
                    for (k, c) in gc.iter().enumerate() {
                        d[k] = d[k] + c.re;
                        d[plane + k] = d[plane + k] + c.im;
                    }
                });
            }
        }
    }

    fn take(&self, grads: &mut [Option<Vec<T>>], v: Var) -> Option<Vec<T>> {
        if !self.wants(v) {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].take().unwrap_or_else(|| vec![T::zero(); n]))
    }

    #[allow(clippy::type_complexity)]
    fn take3(
        &self,
        grads: &mut [Option<Vec<T>>],
        a: Var,
        b: Var,
        c: Var,
    ) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
        (self.take(grads, a), self.take(grads, b), self.take(grads, c))
    }
}

#[allow(clippy::type_complexity)]
fn put3<T>(grads: &mut [Option<Vec<T>>], a: (Var, Option<Vec<T>>), b: (Var, Option<Vec<T>>), c: (Var, Option<Vec<T>>)) {
    for (v, d) in [a, b, c] {
        if d.is_some() {
            grads[v.0] = d;
        }
    }
}

fn add_into<T: Real>(d: &mut [T], g: &[T]) {
    for (d, &g) in d.iter_mut().zip(g) {
        *d = *d + g;
    }
}

fn zip3<T: Real>(d: &mut [T], g: &[T], o: &[T], f: impl Fn(T, T) -> T) {
    for k in 0..d.len() {
        d[k] = d[k] + f(g[k], o[k]);
    }
}
