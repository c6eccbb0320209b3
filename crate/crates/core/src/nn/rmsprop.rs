use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

/// RMSProp with one squared-gradient accumulator per parameter tensor:
///
/// ```text
/// acc ← ρ·acc + (1 − ρ)·g²
/// p   ← p − lr·g / sqrt(acc + ε)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub config: RmsPropConfig,
    pub accumulators: Vec<Tensor<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(config: RmsPropConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            accumulators: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.accumulators.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.accumulators.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = T::lit(self.config.learning_rate);
        let rho = T::lit(self.config.rho);
        let one_rho = T::one() - rho;
        let eps = T::lit(self.config.epsilon);
        for ((p, g), acc) in params.into_iter().zip(grads).zip(&mut self.accumulators) {
            if p.shape() != g.shape() || p.shape() != acc.shape() {
                return Err(Error::Shape(format!(
                    "param {:?} / grad {:?} / accumulator {:?}",
                    p.shape(),
                    g.shape(),
                    acc.shape()
                )));
            }
            for ((pv, &gv), av) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
                *av = rho * *av + one_rho * gv * gv;
                *pv -= lr * gv / (*av + eps).sqrt();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let mut p = Tensor::<f64>::full(&[1], 0.0);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &[vec![1]]);
        opt.step(vec![&mut p], &[Tensor::full(&[1], 1.0)]).unwrap();
        assert!((opt.accumulators[0].data()[0] - 0.1).abs() < 1e-15);
        let want = -1e-4 / 0.1000001f64.sqrt();
        assert!((p.data()[0] - want).abs() < 1e-15);
        assert!((p.data()[0] + 3.1623e-4).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f32>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &[vec![3]]);
        opt.step(vec![&mut p], &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
        assert!(opt.accumulators[0].data().iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut p = Tensor::<f32>::full(&[2], 1.0);
        let cfg = RmsPropConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut opt = RmsProp::new(cfg, &[vec![2]]);
        opt.step(vec![&mut p], &[Tensor::full(&[2], 3.0)]).unwrap();
        assert_eq!(p.data(), &[1.0, 1.0]);
    }

    #[test]
    fn mismatched_tensors() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &[vec![3]]);
        assert!(opt.step(vec![&mut p], &[Tensor::zeros(&[2])]).is_err());
    }
}
