use super::tensor::{Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Per-channel batch normalization over all leading axes (batch × time).
///
/// Training-mode forward is pure: it returns the batch statistics in the
/// cache, and [`BatchNorm::update_running`] folds them into the running
/// estimates once the step is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    /// `None` in inference mode.
    batch_stats: Option<(Vec<T>, Vec<T>)>,
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let c = self.channels();
        if x.last_dim() != c || x.is_empty() {
            return Err(Error::Shape(format!(
                "batch norm has {c} channels, input is {:?}",
                x.shape()
            )));
        }
        let eps = T::lit(self.epsilon);
        let (mean, var) = if training {
            let n = T::lit(x.n_rows() as f64);
            let mut mean = vec![T::zero(); c];
            for row in x.data().chunks_exact(c) {
                mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![T::zero(); c];
            for row in x.data().chunks_exact(c) {
                for k in 0..c {
                    let d = row[k] - mean[k];
                    var[k] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / n);
            (mean, var)
        } else {
            (self.running_mean.data().to_vec(), self.running_var.data().to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut xhat = x.clone();
        let mut y = x.clone();
        for (xr, yr) in xhat
            .data_mut()
            .chunks_exact_mut(c)
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for k in 0..c {
                xr[k] = (xr[k] - mean[k]) * inv_std[k];
                yr[k] = self.gamma.data()[k] * xr[k] + self.beta.data()[k];
            }
        }
        let batch_stats = training.then_some((mean, var));
        Ok((
            y,
            BatchNormCache {
                batch_stats,
                xhat,
                inv_std,
            },
        ))
    }

    /// Returns `([dgamma, dbeta], dx)`.
    pub fn backward(&self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        dy.expect_shape(cache.xhat.shape(), "batch norm upstream gradient")?;
        let c = self.channels();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (dr, xr) in dy.data().chunks_exact(c).zip(cache.xhat.data().chunks_exact(c)) {
            for k in 0..c {
                dgamma[k] += dr[k] * xr[k];
                dbeta[k] += dr[k];
            }
        }
        let mut dx = dy.clone();
        let n = T::lit(dy.n_rows() as f64);
        for (dr, xr) in dx.data_mut().chunks_exact_mut(c).zip(cache.xhat.data().chunks_exact(c)) {
            for k in 0..c {
                let g = self.gamma.data()[k] * cache.inv_std[k];
                dr[k] = if cache.batch_stats.is_some() {
                    g * (dr[k] - dbeta[k] / n - xr[k] * dgamma[k] / n)
                } else {
                    g * dr[k]
                };
            }
        }
        Ok((
            vec![Tensor::from_vec(&[c], dgamma)?, Tensor::from_vec(&[c], dbeta)?],
            dx,
        ))
    }

    /// `running ← momentum·running + (1 − momentum)·batch`.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let Some((mean, var)) = &cache.batch_stats else {
            return;
        };
        let m = T::lit(self.momentum);
        let one_m = T::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = m * *r + one_m * b;
        }
    }

    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

impl<T: Scalar> Parameterized<T> for BatchNorm<T> {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["gamma", "beta"]
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::testing::{dot, fd_input, fd_params, random_tensor};

    #[test]
    fn inference_with_unit_stats_is_identity() {
        let bn = BatchNorm::<f64>::new(3);
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(0), &[4, 3], 2.0);
        let (y, _) = bn.forward(&x, false).unwrap();
        let scale = 1.0 / (1.0 + DEFAULT_EPSILON).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() <= 2.0 * DEFAULT_EPSILON);
        }
    }

    #[test]
    fn training_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bn = BatchNorm::<f64>::new(4);
        bn.epsilon = 1e-8;
        let x = random_tensor(&mut rng, &[8, 15, 4], 3.0).map(|v| v + 5.0);
        let (y, _) = bn.forward(&x, true).unwrap();
        for k in 0..4 {
            let col: Vec<f64> = y.data().iter().skip(k).step_by(4).copied().collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.momentum = 0.9;
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        let (_, cache) = bn.forward(&x, true).unwrap();
        bn.update_running(&cache);
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
        assert!(bn.running_var.data()[0] >= 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for training in [true, false] {
            let mut bn = BatchNorm::<f64>::new(3);
            bn.gamma = random_tensor(&mut rng, &[3], 1.0);
            bn.beta = random_tensor(&mut rng, &[3], 1.0);
            bn.running_mean = random_tensor(&mut rng, &[3], 1.0);
            bn.running_var = random_tensor(&mut rng, &[3], 1.0).map(|v| v.abs() + 0.5);
            let x = random_tensor(&mut rng, &[3, 5, 3], 1.0);
            let proj = random_tensor(&mut rng, &[3, 5, 3], 1.0);
            let (_, cache) = bn.forward(&x, training).unwrap();
            let (g, dx) = bn.backward(&cache, &proj).unwrap();
            let f = |b: &BatchNorm<f64>, x: &Tensor<f64>| dot(&b.forward(x, training).unwrap().0, &proj);
            let e1 = fd_params(&mut bn, |b| f(b, &x), &g);
            let e2 = fd_input(&x, |x| f(&bn, x), &dx);
            assert!(e1.max(e2) < 1e-4, "training={training}: {e1} {e2}");
        }
    }
}
