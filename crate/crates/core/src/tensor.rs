//! Dense row-major tensors and the handful of numeric kernels the models share.

use crate::error::{dim_err, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Dense real array, row-major (innermost index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Row `i` of a rank-2 tensor (or the `i`-th slice along axis 0 in general).
    pub fn row(&self, i: usize) -> &[T] {
        let w: usize = self.shape[1..].iter().product();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w: usize = self.shape[1..].iter().product();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    pub fn at3(&self, i: usize, j: usize, k: usize) -> T {
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(dim_err("axpy", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Convert element type; used by checkpoints (f64 <-> f32).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Activation applied after the affine part of every unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                // Split on sign so exp never overflows.
                if x >= T::zero() {
                    T::one().div_precise(T::one() + (-x).exp_precise())
                } else {
                    let e = x.exp_precise();
                    e.div_precise(T::one() + e)
                }
            }
        }
    }

    /// Derivative expressed through the activation output `y = apply(x)`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// `W v + b` for `W: [m×n]`, `v: [n]`, `b: [m]`.
pub fn affine<T: Scalar>(w: &Tensor<T>, v: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if w.rank() != 2 || v.rank() != 1 || b.rank() != 1 {
        return Err(Error::Dimension(format!(
            "affine expects ranks (2,1,1), got W{:?} v{:?} b{:?}",
            w.shape(),
            v.shape(),
            b.shape()
        )));
    }
    let (m, n) = (w.shape()[0], w.shape()[1]);
    if v.len() != n {
        return Err(dim_err("affine W columns vs v", w.shape(), v.shape()));
    }
    if b.len() != m {
        return Err(dim_err("affine W rows vs b", w.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m];
    affine_into(w.data(), n, v.data(), b.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Unchecked kernel: `out[i] = Σ_j w[i*n + j] v[j] + b[i]`.
#[inline]
pub(crate) fn affine_into<T: Scalar>(w: &[T], n: usize, v: &[T], b: &[T], out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&w[i * n..(i + 1) * n], v) + b[i];
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `acc[j] += Σ_i w[i*n + j] d[i]` (transposed product, accumulated).
#[inline]
pub(crate) fn affine_transpose_acc<T: Scalar>(w: &[T], n: usize, d: &[T], acc: &mut [T]) {
    for (i, &di) in d.iter().enumerate() {
        if di.is_zero() {
            continue;
        }
        for (a, &wv) in acc.iter_mut().zip(&w[i * n..(i + 1) * n]) {
            *a += wv * di;
        }
    }
}

/// `g[i*n + j] += d[i] v[j]` (outer-product accumulation).
#[inline]
pub(crate) fn outer_acc<T: Scalar>(g: &mut [T], n: usize, d: &[T], v: &[T]) {
    for (i, &di) in d.iter().enumerate() {
        if di.is_zero() {
            continue;
        }
        for (gv, &x) in g[i * n..(i + 1) * n].iter_mut().zip(v) {
            *gv += di * x;
        }
    }
}

pub fn activate<T: Scalar>(v: &Tensor<T>, kind: Activation) -> Tensor<T> {
    v.map(|x| kind.apply(x))
}

/// I.i.d. uniform samples in `[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`.
pub fn init_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Tensor<T> {
    assert!(
        fan_in > 0 && fan_out > 0,
        "fan_in and fan_out must be positive"
    );
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.uniform_range(-r, r)))
        .collect();
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// Central-difference gradient of `f` at `theta`.
pub fn finite_diff<T, F>(mut f: F, theta: &Tensor<T>, eps: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    if eps <= T::zero() {
        return Err(Error::Input("finite_diff needs eps > 0".into()));
    }
    let two = T::one() + T::one();
    let mut probe = theta.clone();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = f(&probe);
        probe.data[i] = orig - eps;
        let minus = f(&probe);
        probe.data[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective while differencing coordinate {i}"
            )));
        }
        grad.push((plus - minus).div_precise(two * eps));
    }
    Tensor::from_vec(theta.shape(), grad)
}
