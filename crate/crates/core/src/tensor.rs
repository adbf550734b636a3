//! Dense n-dimensional tensor with row-major storage.
//!
//! Tensors are immutable values: every op allocates its output. The data
//! buffer lives behind an `Arc`, so cloning a tensor is cheap and sharing
//! across threads is safe. Element type is `f32` for production paths and
//! `f64` for verification runs (gradient checks run in 64-bit).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar element of a [`Tensor`]: `f32` or `f64`.
pub trait Element:
    num_traits::Float + num_traits::NumAssign + Send + Sync + Default + fmt::Debug + fmt::Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense rank-n tensor. `data.len() == product(dims)`, row-major (last axis
/// contiguous).
#[derive(Clone, PartialEq)]
pub struct Tensor<E: Element> {
    dims: Vec<usize>,
    data: Arc<Vec<E>>,
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{} elements]", self.data.len())
        }
    }
}

impl<E: Element> Tensor<E> {
    /// Build a tensor from extents and a flat row-major buffer.
    pub fn from_vec(dims: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} require {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            data: Arc::new(data),
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: Arc::new(vec![E::zero(); n]),
        }
    }

    pub fn full(dims: &[usize], value: E) -> Self {
        let n: usize = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: Arc::new(vec![value; n]),
        }
    }

    pub fn scalar(value: E) -> Self {
        Self {
            dims: vec![1],
            data: Arc::new(vec![value]),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    /// Mutable access to the buffer; copies if the buffer is shared.
    pub fn data_mut(&mut self) -> &mut [E] {
        Arc::<Vec<E>>::make_mut(&mut self.data).as_mut_slice()
    }

    /// A tensor holds a single element and can be read as a scalar.
    pub fn as_scalar(&self) -> Result<E> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected scalar tensor, got dims {:?}",
                self.dims
            )))
        }
    }

    /// Same buffer, new extents (element count must match).
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Self {
            dims,
            data: Arc::clone(&self.data),
        })
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.dims[i]);
            off = off * self.dims[i] + x;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> E {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: E) {
        let off = self.offset(idx);
        self.data_mut()[off] = value;
    }

    /// Sum of squares of all elements, accumulated in f64.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|&x| x.to_f64() * x.to_f64()).sum()
    }

    /// L2 norm of the flattened tensor.
    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn min_value(&self) -> E {
        self.data.iter().copied().fold(E::infinity(), E::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self {
            dims: self.dims.clone(),
            data: Arc::new(self.data.iter().map(|&x| f(x)).collect()),
        }
    }

    pub fn scale(&self, c: E) -> Self {
        self.map(|x| x * c)
    }

    /// Elementwise sum; extents must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "add: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            dims: self.dims.clone(),
            data: Arc::new(data),
        })
    }

    /// Convert elements to another precision.
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor {
            dims: self.dims.clone(),
            data: Arc::new(self.data.iter().map(|&x| F::from_f64(x.to_f64())).collect()),
        }
    }

    /// Tensor of the same extents filled with i.i.d. uniform values.
    pub fn uniform(dims: &[usize], lo: E, hi: E, rng: &mut impl rand::Rng) -> Self {
        let n: usize = dims.iter().product();
        let range = hi - lo;
        let data = (0..n)
            .map(|_| lo + range * E::from_f64(rng.gen::<f64>()))
            .collect();
        Self {
            dims: dims.to_vec(),
            data: Arc::new(data),
        }
    }
}
