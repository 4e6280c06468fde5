//! Single-layer LSTM over `[seq, batch, input]` with zero initial state.
//! Gate order follows the usual `(input, forget, cell, output)` stacking of a
//! `[4H, ·]` weight matrix with one bias vector.

use super::{matmul, matmul_nt, matmul_tn, Real};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmDims {
    pub seq: usize,
    pub batch: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
}

impl LstmDims {
    /// Sequence positions in processing order.
    fn order(&self) -> Vec<usize> {
        if self.reverse {
            (0..self.seq).rev().collect()
        } else {
            (0..self.seq).collect()
        }
    }
}

/// Activations saved for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    /// Post-activation gates `[seq, batch, 4H]`.
    gates: Vec<T>,
    /// Cell state `[seq, batch, H]`.
    cell: Vec<T>,
    /// Hidden state (the output) `[seq, batch, H]`.
    hidden: Vec<T>,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn lstm_forward<T: Real>(
    d: &LstmDims,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    bias: &[T],
) -> LstmCache<T> {
    let (b, h) = (d.batch, d.hidden);
    let g4 = 4 * h;
    let rows = d.seq * b;
    let mut gates = vec![T::zero(); rows * g4];
    matmul_nt(rows, d.input, g4, x, w_ih, &mut gates, false);
    for row in gates.chunks_mut(g4) {
        for (v, &bv) in row.iter_mut().zip(bias) {
            *v = *v + bv;
        }
    }
    let mut cell = vec![T::zero(); rows * h];
    let mut hidden = vec![T::zero(); rows * h];
    let mut prev: Option<usize> = None;
    for s in d.order() {
        let z = &mut gates[s * b * g4..(s + 1) * b * g4];
        if let Some(p) = prev {
            matmul_nt(b, h, g4, &hidden[p * b * h..(p + 1) * b * h], w_hh, z, true);
        }
        for n in 0..b {
            for k in 0..h {
                let zi = n * g4;
                let i = sigmoid(z[zi + k]);
                let f = sigmoid(z[zi + h + k]);
                let g = z[zi + 2 * h + k].tanh();
                let o = sigmoid(z[zi + 3 * h + k]);
                z[zi + k] = i;
                z[zi + h + k] = f;
                z[zi + 2 * h + k] = g;
                z[zi + 3 * h + k] = o;
                let c_prev = prev.map_or(T::zero(), |p| cell[(p * b + n) * h + k]);
                let c = f * c_prev + i * g;
                cell[(s * b + n) * h + k] = c;
                hidden[(s * b + n) * h + k] = o * c.tanh();
            }
        }
        prev = Some(s);
    }
    LstmCache { gates, cell, hidden }
}

impl<T: Real> LstmCache<T> {
    pub fn output(&self) -> &[T] {
        &self.hidden
    }
}

/// Backpropagation through time. Returns nothing; accumulates into the
/// provided gradient buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward<T: Real>(
    d: &LstmDims,
    cache: &LstmCache<T>,
    x: &[T],
    w_ih: &[T],
    w_hh: &[T],
    gy: &[T],
    dx: Option<&mut [T]>,
    dw_ih: Option<&mut [T]>,
    dw_hh: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let (b, h) = (d.batch, d.hidden);
    let g4 = 4 * h;
    let rows = d.seq * b;
    let mut dz = vec![T::zero(); rows * g4];
    let mut dh_next = vec![T::zero(); b * h];
    let mut dc_next = vec![T::zero(); b * h];
    let order = d.order();
    let mut dw_hh = dw_hh;
    for (pos, &s) in order.iter().enumerate().rev() {
        let prev = pos.checked_sub(1).map(|p| order[p]);
        let z = &cache.gates[s * b * g4..(s + 1) * b * g4];
        let dzs = &mut dz[s * b * g4..(s + 1) * b * g4];
        for n in 0..b {
            for k in 0..h {
                let zi = n * g4;
                let (i, f, g, o) = (z[zi + k], z[zi + h + k], z[zi + 2 * h + k], z[zi + 3 * h + k]);
                let c = cache.cell[(s * b + n) * h + k];
                let tc = c.tanh();
                let dh = gy[(s * b + n) * h + k] + dh_next[n * h + k];
                let dc = dh * o * (T::one() - tc * tc) + dc_next[n * h + k];
                let c_prev = prev.map_or(T::zero(), |p| cache.cell[(p * b + n) * h + k]);
                dzs[zi + k] = dc * g * i * (T::one() - i);
                dzs[zi + h + k] = dc * c_prev * f * (T::one() - f);
                dzs[zi + 2 * h + k] = dc * i * (T::one() - g * g);
                dzs[zi + 3 * h + k] = dh * tc * o * (T::one() - o);
                dc_next[n * h + k] = dc * f;
            }
        }
        match prev {
            Some(p) => {
                matmul(b, g4, h, dzs, w_hh, &mut dh_next, false);
                if let Some(dw) = dw_hh.as_deref_mut() {
                    matmul_tn(g4, b, h, dzs, &cache.hidden[p * b * h..(p + 1) * b * h], dw, true);
                }
            }
            None => dh_next.fill(T::zero()),
        }
    }
    if let Some(dx) = dx {
        matmul(rows, g4, d.input, &dz, w_ih, dx, true);
    }
    if let Some(dw) = dw_ih {
        matmul_tn(g4, rows, d.input, &dz, x, dw, true);
    }
    if let Some(db) = db {
        for row in dz.chunks(g4) {
            for (a, &v) in db.iter_mut().zip(row) {
                *a = *a + v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_recurrence_by_hand() {
        // H = 1, In = 1, one batch entry, two steps.
        let d = LstmDims {
            seq: 2,
            batch: 1,
            input: 1,
            hidden: 1,
            reverse: false,
        };
        let w_ih = [0.5, -0.3, 0.8, 0.2];
        let w_hh = [0.1, 0.4, -0.6, 0.7];
        let bias = [0.05, 0.1, -0.05, 0.0];
        let x = [1.0, -2.0];
        let cache = lstm_forward(&d, &x, &w_ih, &w_hh, &bias);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut hp, mut cp) = (0.0, 0.0);
        for (s, &xv) in x.iter().enumerate() {
            let z: Vec<f64> = (0..4).map(|g| w_ih[g] * xv + w_hh[g] * hp + bias[g]).collect();
            let c = sig(z[1]) * cp + sig(z[0]) * z[2].tanh();
            let hv = sig(z[3]) * c.tanh();
            assert!((cache.output()[s] - hv).abs() < 1e-14);
            hp = hv;
            cp = c;
        }
    }

    #[test]
    fn reverse_equals_forward_on_reversed_sequence() {
        let d = LstmDims {
            seq: 4,
            batch: 2,
            input: 2,
            hidden: 3,
            reverse: true,
        };
        let w_ih: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin() * 0.5).collect();
        let w_hh: Vec<f64> = (0..36).map(|i| (i as f64 * 1.3).cos() * 0.4).collect();
        let bias: Vec<f64> = (0..12).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.9).sin()).collect();
        let step = 2 * 2;
        let flipped: Vec<f64> = x.chunks(step).rev().flatten().copied().collect();
        let rev = lstm_forward(&d, &x, &w_ih, &w_hh, &bias);
        let fwd = lstm_forward(&LstmDims { reverse: false, ..d }, &flipped, &w_ih, &w_hh, &bias);
        let back: Vec<f64> = fwd.output().chunks(2 * 3).rev().flatten().copied().collect();
        assert_eq!(rev.output(), &back[..]);
    }
}
