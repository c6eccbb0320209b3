use super::tensor::{Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

/// Parametric ReLU with one learned negative-side slope per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu<T> {
    pub alpha: Tensor<T>,
}

pub const DEFAULT_ALPHA: f64 = 0.25;

impl<T: Scalar> PRelu<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            alpha: Tensor::full(&[channels], T::lit(DEFAULT_ALPHA)),
        }
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.last_dim() != self.channels() {
            return Err(Error::Shape(format!(
                "PReLU has {} channels, input is {:?}",
                self.channels(),
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let mut y = x.clone();
        for row in y.data_mut().chunks_exact_mut(self.channels()) {
            for (v, &a) in row.iter_mut().zip(self.alpha.data()) {
                if *v <= T::zero() {
                    *v *= a;
                }
            }
        }
        Ok(y)
    }

    /// Returns `([dalpha], dx)`.
    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        self.check(x)?;
        dy.expect_shape(x.shape(), "PReLU upstream gradient")?;
        let c = self.channels();
        let mut dalpha = Tensor::zeros(&[c]);
        let mut dx = dy.clone();
        for (xr, dr) in x.data().chunks_exact(c).zip(dx.data_mut().chunks_exact_mut(c)) {
            for k in 0..c {
                if xr[k] <= T::zero() {
                    dalpha.data_mut()[k] += dr[k] * xr[k];
                    dr[k] *= self.alpha.data()[k];
                }
            }
        }
        Ok((vec![dalpha], dx))
    }
}

impl<T: Scalar> Parameterized<T> for PRelu<T> {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["alpha"]
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.alpha]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.alpha]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::testing::{dot, fd_input, fd_params, random_tensor};

    #[test]
    fn definition() {
        let p = PRelu::<f64>::new(2);
        let y = p.forward(&Tensor::from_vec(&[1, 2], vec![-2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[-0.5, 3.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = PRelu::<f64>::new(5);
        p.alpha = random_tensor(&mut rng, &[5], 0.5);
        // keep inputs away from the kink
        let x = random_tensor(&mut rng, &[3, 4, 5], 1.0).map(|v| if v.abs() < 0.05 { 0.3 } else { v });
        let proj = random_tensor(&mut rng, &[3, 4, 5], 1.0);
        let (g, dx) = p.backward(&x, &proj).unwrap();
        let e1 = fd_params(&mut p, |l| dot(&l.forward(&x).unwrap(), &proj), &g);
        let e2 = fd_input(&x, |x| dot(&p.forward(x).unwrap(), &proj), &dx);
        assert!(e1.max(e2) < 1e-6);
    }
}
