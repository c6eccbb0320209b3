use rand::Rng;

use super::init::glorot_uniform;
use super::tensor::{gemm, matmul_t, Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

/// `y = W·x + b`, applied to every row (every timestep of a sequence).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            w: Tensor::zeros(&[output_dim, input_dim]),
            b: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(rng, output_dim, input_dim),
            b: Tensor::zeros(&[output_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape()[0]
    }

    /// Output keeps the leading axes of `x` and replaces the last one.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.last_dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "dense expects last dim {}, got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let mut y = matmul_t(x.mat(), &self.w);
        let out = self.output_dim();
        for row in y.data_mut().chunks_exact_mut(out) {
            row.iter_mut().zip(self.b.data()).for_each(|(v, &b)| *v += b);
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-scalar input") = out;
        y.reshape(&shape)
    }

    /// Returns `([dW, db], dx)`.
    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        if dy.n_rows() != x.n_rows() || dy.last_dim() != self.output_dim() {
            return Err(Error::Shape(format!(
                "dense upstream gradient {:?} does not match input {:?}",
                dy.shape(),
                x.shape()
            )));
        }
        let mut dw = Tensor::zeros(self.w.shape());
        gemm(T::one(), dy.mat().t(), x.mat(), T::zero(), dw.mat_mut());
        let db = dy.sum_rows();
        let mut dx = Tensor::zeros(x.shape());
        gemm(T::one(), dy.mat(), self.w.mat(), T::zero(), dx.mat_mut());
        Ok((vec![dw, db], dx))
    }
}

impl<T: Scalar> Parameterized<T> for DenseLayer<T> {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["w", "b"]
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::testing::{dot, fd_input, fd_params, random_tensor};

    #[test]
    fn identity_weights() {
        let mut d = DenseLayer::<f64>::zeros(3, 3);
        for i in 0..3 {
            d.w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(0), &[2, 4, 3], 1.0);
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let (n, i, o) = (rng.random_range(1..6), rng.random_range(1..8), rng.random_range(1..8));
            let mut d = DenseLayer::<f64>::init(i, o, &mut rng);
            d.b = random_tensor(&mut rng, &[o], 1.0);
            let x = random_tensor(&mut rng, &[n, 2, i], 1.0);
            let proj = random_tensor(&mut rng, &[n, 2, o], 1.0);
            let (g, dx) = d.backward(&x, &proj).unwrap();
            let e1 = fd_params(&mut d, |l| dot(&l.forward(&x).unwrap(), &proj), &g);
            let e2 = fd_input(&x, |x| dot(&d.forward(x).unwrap(), &proj), &dx);
            assert!(e1.max(e2) < 1e-6, "{e1} {e2}");
        }
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let d = DenseLayer::<f32>::zeros(3, 2);
        assert_eq!(d.forward(&Tensor::zeros(&[4, 5])).unwrap_err().category(), "shape");
    }
}
