//! A small dense tensor engine with tape-based reverse-mode differentiation.
//!
//! Values are row-major [`Tensor`]s. Every operation on a [`Tape`] records
//! its inputs and whatever it needs for its backward rule; [`Tape::backward`]
//! walks the records once in reverse. Gradients are only computed for values
//! that depend on a leaf created with `requires_grad`.
//!
//! Everything is generic over [`Real`], so the same model code runs in `f32`
//! for training and in `f64` for finite-difference audits.

mod conv;
pub mod gradcheck;
mod lstm;
mod ops;
mod tape;
mod tensor;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rustfft::FftNum;

pub use conv::{ConvSpec, TimeCrop};
pub use gradcheck::{gradcheck, GradcheckReport, GRADCHECK_STEP};
pub use ops::Reduce;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Floating-point scalar usable on a [`Tape`].
pub trait Real: Float + FftNum + Sum + Default + Debug + Send + Sync + 'static {
    fn lit(v: f64) -> Self;

    fn to_f64(self) -> f64;

    /// `C = alpha · A B + beta · C` for `A: m×k`, `B: k×n`, with arbitrary
    /// row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        beta: Self,
        c: (&mut [Self], isize, isize),
    );
}

fn check_extent<T>(buf: &[T], rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < buf.len(), "gemm operand out of bounds");
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn lit(v: f64) -> Self {
                v as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                beta: Self,
                c: (&mut [Self], isize, isize),
            ) {
                check_extent(a.0, m, k, a.1, a.2);
                check_extent(b.0, k, n, b.1, b.2);
                check_extent(c.0, m, n, c.1, c.2);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand's extent was bounds-checked above and
                // `c` is a unique borrow, so the kernel reads and writes only
                // inside the given slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        c.2,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// `C (+)= A B` with `A: m×k`, `B: k×n`, all row-major.
pub(crate) fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), (a, k as isize, 1), (b, n as isize, 1), beta, (c, n as isize, 1));
}

/// `C (+)= Aᵀ B` with `A` stored `k×m`.
pub(crate) fn matmul_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), (a, 1, m as isize), (b, n as isize, 1), beta, (c, n as isize, 1));
}

/// `C (+)= A Bᵀ` with `B` stored `n×k`.
pub(crate) fn matmul_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), (a, k as isize, 1), (b, 1, k as isize), beta, (c, n as isize, 1));
}
