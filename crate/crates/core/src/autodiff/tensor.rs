use super::Real;
use crate::{Error, Result};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(Real::to_f64(*v))).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major strides of `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For every element of `big`, the flat offset of the element of `small`
/// it maps to when `small` is broadcast (size-1 axes repeat) to `big`.
pub(crate) fn broadcast_map(big: &[usize], small: &[usize]) -> Result<Vec<usize>> {
    if big.len() != small.len() || big.iter().zip(small).any(|(&b, &s)| s != b && s != 1) {
        return Err(Error::Dimension(format!(
            "{small:?} does not broadcast to {big:?}"
        )));
    }
    let ss = strides(small);
    let eff: Vec<usize> = small.iter().zip(&ss).map(|(&d, &s)| if d == 1 { 0 } else { s }).collect();
    Ok(walk(big, &eff))
}

/// Offsets `Σ idx_k · stride_k` for every multi-index of `shape` in
/// row-major order.
pub(crate) fn walk(shape: &[usize], stride: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let inner = rank.checked_sub(1);
    for _ in 0..n {
        out.push(off);
        let Some(mut ax) = inner else { continue };
        loop {
            idx[ax] += 1;
            off += stride[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            off -= stride[ax] * shape[ax];
            idx[ax] = 0;
            if ax == 0 {
                break;
            }
            ax -= 1;
        }
    }
    out
}
