//! Minimal dense-tensor engine.
//!
//! Activations use NCHW layout, kernels OC x IC x KH x KW, all stored as a
//! flat row-major buffer. Every layer the network needs has a hand-written
//! forward and backward in [`ops`], checked against brute-force oracles and
//! central finite differences (see [`gradcheck`]).

pub mod gradcheck;
pub mod ops;

use crate::error::{Error, Result};

/// Element type of the numeric core. `f64` is the reference precision; `f32`
/// is available for faster, less exact runs.
pub trait Scalar:
    num_traits::Float + std::fmt::Debug + std::fmt::Display + Copy + Send + Sync + 'static
{
    const NAME: &'static str;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Dense tensor: shape plus a flat row-major data buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (product {})",
                data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    /// Interpret the shape as `(N, C, H, W)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            other => Err(Error::Shape(format!("expected 4-d tensor, got {other:?}"))),
        }
    }

    /// Interpret the shape as `(C, H, W)`, the layout of single images.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::Shape(format!("expected 3-d tensor, got {other:?}"))),
        }
    }

    /// One channel of a `(C, H, W)` tensor as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[T] {
        debug_assert_eq!(self.shape.len(), 3);
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    /// Mutable variant of [`Tensor::channel`].
    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        debug_assert_eq!(self.shape.len(), 3);
        let hw = self.shape[1] * self.shape[2];
        &mut self.data[c * hw..(c + 1) * hw]
    }

    /// Flat offset of element `(n, c, h, w)`; no bounds check beyond debug.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    /// One `(n, c)` spatial plane as a contiguous slice of `H*W` values.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Error if any element is NaN or infinite.
    pub fn validate_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "{what}: non-finite value {v} at flat index {i} (shape {:?})",
                    self.shape
                )));
            }
        }
        Ok(())
    }

    /// Elementwise `self += other` for tensors of identical shape.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add tensor of shape {:?} to one of shape {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|v| U::from_f64(v.to_f64()))
    }
}

/// Adam hyperparameters. Defaults follow the usual beta/epsilon choices.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Reject non-finite gradients instead of propagating them.
    pub strict: bool,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            strict: true,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Default::default()
        }
    }
}

/// A trainable tensor bundled with its gradient and Adam moment state.
#[derive(Debug, Clone)]
pub struct ParamTensor<T: Scalar = f64> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        ParamTensor {
            value,
            grad: Tensor::zeros(shape.clone()),
            m: Tensor::zeros(shape.clone()),
            v: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = T::zero();
        }
    }

    /// Add `delta` into the stored gradient (shapes must match).
    pub fn accumulate_grad(&mut self, delta: &Tensor<T>) -> Result<()> {
        if delta.shape() != self.grad.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                delta.shape(),
                self.grad.shape()
            )));
        }
        for (g, d) in self.grad.data_mut().iter_mut().zip(delta.data()) {
            *g = *g + *d;
        }
        Ok(())
    }
}

/// One bias-corrected Adam update, in place. The gradient is left intact for
/// inspection; call [`ParamTensor::zero_grad`] before the next accumulation.
pub fn adam_step<T: Scalar>(param: &mut ParamTensor<T>, hyper: &AdamHyper) -> Result<()> {
    if hyper.strict {
        param.grad.validate_finite("adam_step gradient")?;
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let one = T::one();
    let bias1 = one - b1.powi(t);
    let bias2 = one - b2.powi(t);
    let lr = T::from_f64(hyper.lr);
    let eps = T::from_f64(hyper.eps);

    let n = param.value.len();
    for i in 0..n {
        let g = param.grad.data()[i];
        let m = b1 * param.m.data()[i] + (one - b1) * g;
        let v = b2 * param.v.data()[i] + (one - b2) * g * g;
        param.m.data_mut()[i] = m;
        param.v.data_mut()[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        let val = param.value.data()[i];
        param.value.data_mut()[i] = val - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
