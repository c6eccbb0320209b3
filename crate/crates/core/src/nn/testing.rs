//! Central finite-difference oracle for unit tests (64-bit only).

use rand::Rng;

use super::tensor::Tensor;
use super::Parameterized;

pub const FD_EPS: f64 = 1e-5;

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error over every parameter entry.
pub fn fd_params<L: Parameterized<f64>>(
    layer: &mut L,
    loss: impl Fn(&L) -> f64,
    analytic: &[Tensor<f64>],
) -> f64 {
    let sizes: Vec<usize> = layer.params().iter().map(|p| p.len()).collect();
    assert_eq!(sizes.len(), analytic.len(), "gradient count");
    let mut worst = 0.0f64;
    for (p, &n) in sizes.iter().enumerate() {
        assert_eq!(analytic[p].len(), n, "gradient {p} size");
        for e in 0..n {
            let orig = layer.params()[p].data()[e];
            layer.params_mut()[p].data_mut()[e] = orig + FD_EPS;
            let up = loss(layer);
            layer.params_mut()[p].data_mut()[e] = orig - FD_EPS;
            let down = loss(layer);
            layer.params_mut()[p].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[p].data()[e], numeric));
        }
    }
    worst
}

pub fn fd_input(x: &Tensor<f64>, loss: impl Fn(&Tensor<f64>) -> f64, analytic: &Tensor<f64>) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for e in 0..x.len() {
        let orig = x.data()[e];
        probe.data_mut()[e] = orig + FD_EPS;
        let up = loss(&probe);
        probe.data_mut()[e] = orig - FD_EPS;
        let down = loss(&probe);
        probe.data_mut()[e] = orig;
        worst = worst.max(rel_err(analytic.data()[e], (up - down) / (2.0 * FD_EPS)));
    }
    worst
}
