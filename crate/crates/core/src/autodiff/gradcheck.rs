//! Finite-difference verification of backward rules.
//!
//! The graph output is projected onto a fixed random direction `r`, so a
//! single scalar `L = Σ r ⊙ y` exercises every output element. Analytic
//! `∂L/∂x` from [`Tape::backward`] is compared with a central difference at
//! a random subset of input coordinates.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Relative errors use `max(|analytic|, |numeric|, GRADCHECK_FLOOR)` as the
/// denominator so near-zero derivatives are judged on absolute error.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error <= tol
    }
}

fn projected<F>(inputs: &[Tensor<f64>], build: &F, r: &[f64]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let y = build(&mut tape, &vars)?;
    Ok(tape.data(y).iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Checks `build` against finite differences at up to `max_coords`
/// coordinates of each input.
pub fn gradcheck<F>(name: &str, inputs: &[Tensor<f64>], build: F, seed: u64, max_coords: usize) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = build(&mut tape, &vars)?;
    let r: Vec<f64> = (0..tape.value(y).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rv = tape.constant(Tensor::new(tape.shape(y).to_vec(), r.clone())?);
    let prod = tape.mul(y, rv)?;
    let loss = tape.sum(prod);
    let grads = tape.backward(loss)?;

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (idx, &v) in vars.iter().enumerate() {
        let n = inputs[idx].len();
        let zeros;
        let analytic = match grads.get(v) {
            Some(g) => g,
            None => {
                zeros = vec![0.0; n];
                &zeros
            }
        };
        let picks = sample(&mut rng, n, n.min(max_coords));
        for k in picks.iter() {
            let orig = inputs[idx].data()[k];
            work[idx].data_mut()[k] = orig + GRADCHECK_STEP;
            let up = projected(&work, &build, &r)?;
            work[idx].data_mut()[k] = orig - GRADCHECK_STEP;
            let down = projected(&work, &build, &r)?;
            work[idx].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            if !rel.is_finite() {
                return Err(Error::NonFinite(format!("gradcheck `{name}`")));
            }
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(GradcheckReport {
        name: name.to_string(),
        max_rel_error: max_rel,
        checked,
    })
}

/// Uniform values in `[lo, hi)` for test inputs.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ConvSpec, Reduce, TimeCrop};
    use crate::signal::StftConfig;

    const TOL: f64 = 1e-6;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn check<F>(name: &str, inputs: &[Tensor<f64>], build: F)
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let rep = gradcheck(name, inputs, build, 7, 40).unwrap();
        assert!(rep.checked > 0, "{name}: nothing checked");
        assert!(rep.passes(TOL), "{name}: max rel error {}", rep.max_rel_error);
    }

    #[test]
    fn elementwise_binary() {
        let mut g = rng(1);
        let a = random_tensor(&[3, 4], -1.0, 1.0, &mut g);
        let b = random_tensor(&[3, 4], 0.5, 2.0, &mut g);
        let ins = [a, b];
        check("add", &ins, |t, v| t.add(v[0], v[1]));
        check("sub", &ins, |t, v| t.sub(v[0], v[1]));
        check("mul", &ins, |t, v| t.mul(v[0], v[1]));
        check("div", &ins, |t, v| t.div(v[0], v[1]));
        check("scale", &ins, |t, v| Ok(t.scale(v[0], -2.5)));
        check("add_scalar", &ins, |t, v| Ok(t.add_scalar(v[0], 3.0)));
    }

    #[test]
    fn elementwise_unary() {
        let mut g = rng(2);
        let pos = [random_tensor(&[2, 5], 0.2, 2.0, &mut g)];
        let any = [random_tensor(&[2, 5], -2.0, 2.0, &mut g)];
        check("sigmoid", &any, |t, v| Ok(t.sigmoid(v[0])));
        check("tanh", &any, |t, v| Ok(t.tanh(v[0])));
        check("exp", &any, |t, v| Ok(t.exp(v[0])));
        check("square", &any, |t, v| Ok(t.square(v[0])));
        check("log", &pos, |t, v| Ok(t.log(v[0])));
        check("sqrt", &pos, |t, v| Ok(t.sqrt(v[0])));
        check("abs", &pos, |t, v| Ok(t.abs(v[0])));
        check("relu", &pos, |t, v| Ok(t.relu(v[0])));
    }

    #[test]
    fn broadcasting_and_reductions() {
        let mut g = rng(3);
        let ins = [
            random_tensor(&[2, 3, 4], -1.0, 1.0, &mut g),
            random_tensor(&[2, 1, 4], -1.0, 1.0, &mut g),
        ];
        check("broadcast_add", &ins, |t, v| t.broadcast_add(v[0], v[1]));
        check("broadcast_mul", &ins, |t, v| t.broadcast_mul(v[0], v[1]));
        check("sum", &ins, |t, v| Ok(t.sum(v[0])));
        check("mean", &ins, |t, v| Ok(t.mean(v[0])));
        check("reduce_mean", &ins, |t, v| t.reduce(v[0], &[0, 2], Reduce::Mean));
        check("reduce_max", &ins, |t, v| t.reduce(v[0], &[1], Reduce::Max));
    }

    #[test]
    fn reduce_max_routes_to_first_tie() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::new(vec![1, 3], vec![2.0, 2.0, 1.0]).unwrap());
        let m = tape.reduce(x, &[1], Reduce::Max).unwrap();
        let s = tape.sum(m);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_ops() {
        let mut g = rng(4);
        let ins = [
            random_tensor(&[2, 3, 4], -1.0, 1.0, &mut g),
            random_tensor(&[2, 2, 4], -1.0, 1.0, &mut g),
        ];
        check("concat", &ins, |t, v| t.concat(&[v[0], v[1]], 1));
        check("slice", &ins, |t, v| t.slice(v[0], 2, 1, 2));
        check("pad", &ins, |t, v| t.pad(v[0], 1, 2, 1));
        check("permute", &ins, |t, v| t.permute(v[0], &[2, 0, 1]));
        check("reshape", &ins, |t, v| t.reshape(v[0], &[6, 4]));
        check("split", &ins, |t, v| {
            let parts = t.split(v[0], 2, &[1, 3])?;
            t.concat(&[parts[1], parts[0]], 2)
        });
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, b).is_err());
        assert!(tape.slice(a, 2, 0, 1).is_err());
        assert!(tape.slice(a, 1, 2, 2).is_err());
        assert!(tape.permute(a, &[0, 0]).is_err());
        assert!(tape.matmul(a, a).is_err());
        assert!(tape.reduce(a, &[5], Reduce::Mean).is_err());
    }

    #[test]
    fn dense_layers() {
        let mut g = rng(5);
        let ins = [
            random_tensor(&[3, 4], -1.0, 1.0, &mut g),
            random_tensor(&[4, 5], -1.0, 1.0, &mut g),
        ];
        check("matmul", &ins, |t, v| t.matmul(v[0], v[1]));
        let ins = [
            random_tensor(&[2, 3, 4], -1.0, 1.0, &mut g),
            random_tensor(&[5, 4], -1.0, 1.0, &mut g),
            random_tensor(&[5], -1.0, 1.0, &mut g),
        ];
        check("linear", &ins, |t, v| t.linear(v[0], v[1], Some(v[2])));
        check("linear_nobias", &ins, |t, v| t.linear(v[0], v[1], None));
    }

    #[test]
    fn convolutions() {
        let mut g = rng(6);
        let ins = [
            random_tensor(&[2, 3, 9, 5], -1.0, 1.0, &mut g),
            random_tensor(&[4, 3, 5, 3], -1.0, 1.0, &mut g),
            random_tensor(&[4], -1.0, 1.0, &mut g),
        ];
        let spec = ConvSpec::new(2, 2);
        check("conv2d", &ins, |t, v| t.conv2d(v[0], v[1], v[2], spec));
        let ins = [
            random_tensor(&[2, 3, 5, 4], -1.0, 1.0, &mut g),
            random_tensor(&[3, 2, 5, 2], -1.0, 1.0, &mut g),
            random_tensor(&[2], -1.0, 1.0, &mut g),
        ];
        for crop in [TimeCrop::Causal, TimeCrop::Adjoint] {
            check("conv_transpose2d", &ins, |t, v| t.conv_transpose2d(v[0], v[1], v[2], spec, crop));
        }
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <convT(y), x> with shared kernel and no bias.
        let mut g = rng(8);
        let spec = ConvSpec::new(2, 2);
        let x = random_tensor(&[1, 3, 9, 6], -1.0, 1.0, &mut g);
        let w = random_tensor(&[2, 3, 5, 3], -1.0, 1.0, &mut g);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(x.clone());
        let wv = tape.constant(w.clone());
        let b_out = tape.constant(Tensor::zeros(&[2]));
        let b_in = tape.constant(Tensor::zeros(&[3]));
        let cx = tape.conv2d(xv, wv, b_out, spec).unwrap();
        let y = random_tensor(tape.shape(cx), -1.0, 1.0, &mut g);
        let yv = tape.constant(y.clone());
        let ty = tape.conv_transpose2d(yv, wv, b_in, spec, TimeCrop::Adjoint).unwrap();
        assert_eq!(tape.shape(ty), x.shape());
        let lhs: f64 = tape.data(cx).iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = tape.data(ty).iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn layer_norm() {
        let mut g = rng(9);
        let ins = [
            random_tensor(&[2, 3, 4, 5], -1.0, 1.0, &mut g),
            random_tensor(&[3], 0.5, 1.5, &mut g),
            random_tensor(&[3], -0.5, 0.5, &mut g),
        ];
        check("layer_norm", &ins, |t, v| t.layer_norm(v[0], v[1], v[2], &[1, 2], 1, 1e-5));
    }

    #[test]
    fn lstm() {
        let mut g = rng(10);
        let ins = [
            random_tensor(&[4, 2, 3], -1.0, 1.0, &mut g),
            random_tensor(&[20, 3], -0.5, 0.5, &mut g),
            random_tensor(&[20, 5], -0.5, 0.5, &mut g),
            random_tensor(&[20], -0.5, 0.5, &mut g),
        ];
        for reverse in [false, true] {
            check("lstm", &ins, |t, v| t.lstm(v[0], v[1], v[2], v[3], reverse));
        }
    }

    #[test]
    fn stft_pair() {
        let mut g = rng(11);
        let cfg = StftConfig::hann(16, 8).unwrap();
        let ins = [random_tensor(&[40], -1.0, 1.0, &mut g)];
        check("stft", &ins, |t, v| t.stft(v[0], &cfg));
        let spec = [random_tensor(&[2, 9, cfg.n_frames(40)], -1.0, 1.0, &mut g)];
        check("istft", &spec, |t, v| t.istft(v[0], &cfg, 40));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(3.0));
        let p = tape.mul(a, c).unwrap();
        let gr = tape.backward(p).unwrap();
        assert_eq!(gr.get(a).unwrap(), &[3.0]);
        assert!(gr.get(c).is_none());
    }
}
