use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Inverted dropout: in training, each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Draws a mask with the same shape as `x` (values `0` or `1/(1-rate)`).
    pub fn sample_mask<T: Scalar, R: Rng>(&self, shape: &[usize], rng: &mut R) -> Tensor<T> {
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        Tensor::from_vec(shape, data).expect("mask shape")
    }

    /// Training mode applies a fresh mask (returned for the backward pass);
    /// inference mode is the identity.
    pub fn forward<T: Scalar, R: Rng>(
        &self,
        x: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> (Tensor<T>, Option<Tensor<T>>) {
        if !training || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let mask = self.sample_mask(x.shape(), rng);
        (apply_mask(x, &mask), Some(mask))
    }

    pub fn backward<T: Scalar>(&self, mask: Option<&Tensor<T>>, dy: &Tensor<T>) -> Tensor<T> {
        match mask {
            Some(m) => apply_mask(dy, m),
            None => dy.clone(),
        }
    }
}

fn apply_mask<T: Scalar>(x: &Tensor<T>, mask: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().zip(mask.data()).map(|(&a, &m)| a * m).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}
