use rand::Rng;
use rand_distr::StandardNormal;

use super::{kernels, Scalar};
use crate::error::{Error, Result};

/// Dense row-major array with an optional gradient buffer.
///
/// A zero-sized dimension is allowed so that an empty prompt (`L_p = 0`)
/// can flow through the same code paths as a non-empty one.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
    pub requires_grad: bool,
    pub frozen: bool,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
            requires_grad: false,
            frozen: false,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, S::one())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel]).unwrap()
    }

    pub fn scalar(value: S) -> Self {
        Self::new(Vec::new(), vec![value]).unwrap()
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> S) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self::new(shape, (0..numel).map(&mut f).collect()).unwrap()
    }

    /// Gaussian entries with standard deviation `scale`.
    pub fn randn(shape: impl Into<Vec<usize>>, scale: f64, rng: &mut impl Rng) -> Self {
        Self::from_fn(shape, |_| {
            let z: f64 = rng.sample(StandardNormal);
            S::lit(z * scale)
        })
    }

    /// Marks the tensor as a trainable leaf.
    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Whether an optimizer may update this tensor.
    pub fn is_trainable(&self) -> bool {
        self.requires_grad && !self.frozen
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[S]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::shape("accumulate_grad", &self.shape, &[g.len()]));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, &x)| *b = *b + x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        self.shape = shape;
        self.grad = None;
        Ok(self)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (m, k, n) = matmul_dims(&self.shape, &other.shape)?;
        Tensor::new(vec![m, n], kernels::matmul(&self.data, &other.data, m, k, n))
    }

    /// Softmax along `axis`, rejecting NaN input.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<S>> {
        if axis >= self.rank() {
            return Err(Error::Invalid(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        if self.data.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("softmax"));
        }
        Tensor::new(
            self.shape.clone(),
            kernels::softmax(&self.data, &self.shape, axis),
        )
    }
}

pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
        return Err(Error::shape("matmul", a, b));
    }
    Ok((a[0], a[1], b[1]))
}
