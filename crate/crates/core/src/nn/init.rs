use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{Scalar, Tensor};

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`, shape `[fan_out × fan_in]`.
pub fn glorot_uniform<T: Scalar, R: Rng>(rng: &mut R, fan_out: usize, fan_in: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| T::lit(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(&[fan_out, fan_in], data).expect("shape matches")
}

/// Square orthogonal matrix: modified Gram-Schmidt over Gaussian columns.
pub fn orthogonal<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Tensor<T> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // a draw nearly inside the current span is simply redrawn
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    let mut data = vec![T::zero(); n * n];
    for (j, q) in cols.iter().enumerate() {
        for (i, &v) in q.iter().enumerate() {
            data[i * n + j] = T::lit(v);
        }
    }
    Tensor::from_vec(&[n, n], data).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn orthogonal_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Tensor<f64> = orthogonal(&mut rng, 16);
        for a in 0..16 {
            for b in 0..16 {
                let d: f64 = (0..16).map(|i| q.data()[i * 16 + a] * q.data()[i * 16 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn glorot_within_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Tensor<f32> = glorot_uniform(&mut rng, 64, 128);
        let limit = (6.0f32 / 192.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        assert_eq!(w.shape(), &[64, 128]);
    }
}
