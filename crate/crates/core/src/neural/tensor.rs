use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type of the network (`f32` for training, `f64`
/// for gradient checks).
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Send + Sync + 'static {}

#[inline]
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![F::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("{} values cannot fill shape {shape:?}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|x| G::from(*x).unwrap()).collect() }
    }

    /// Sizes of the trailing three axes of a rank-4 `[C, n0, n1, n2]` tensor.
    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn add_assign(&mut self, other: &Tensor<F>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }
}
