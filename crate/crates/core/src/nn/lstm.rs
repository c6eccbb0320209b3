//! Standard LSTM (input, forget, cell, output gates) for the recurrent-kind
//! ablation.

use rand::Rng;

use super::gru::check_input;
use super::init::{glorot_uniform, orthogonal};
use super::recurrent::{gather_step, scatter_step, RecurrentGrads};
use super::tensor::{gemm, matmul_t, sigmoid, MatMut, MatRef, Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

const GATES: usize = 4;
const I: usize = 0;
const F: usize = 1;
const G: usize = 2;
const O: usize = 3;

#[derive(Debug, Clone)]
pub struct LstmLayer<T> {
    input_dim: usize,
    hidden_dim: usize,
    /// Input kernels `[hidden × input]` for gates i, f, g, o.
    pub w: [Tensor<T>; GATES],
    /// Recurrent kernels `[hidden × hidden]`.
    pub u: [Tensor<T>; GATES],
    pub b: [Tensor<T>; GATES],
    generation: u64,
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    generation: u64,
    batch: usize,
    steps: usize,
    x: Tensor<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    gates: [Vec<T>; GATES],
    tanh_c: Vec<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w: std::array::from_fn(|_| Tensor::zeros(&[hidden_dim, input_dim])),
            u: std::array::from_fn(|_| Tensor::zeros(&[hidden_dim, hidden_dim])),
            b: std::array::from_fn(|_| Tensor::zeros(&[hidden_dim])),
            generation: 0,
        }
    }

    /// Same scheme as the GRU, with the forget-gate bias starting at 1.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(input_dim, hidden_dim);
        for g in 0..GATES {
            l.w[g] = glorot_uniform(rng, hidden_dim, input_dim);
        }
        for g in 0..GATES {
            l.u[g] = orthogonal(rng, hidden_dim);
        }
        l.b[F].fill(T::one());
        l
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn forward(&self, x: &Tensor<T>, h0: Option<&Tensor<T>>) -> Result<(Tensor<T>, LstmCache<T>)> {
        let (batch, steps) = check_input(x, self.input_dim, "LSTM input")?;
        let hd = self.hidden_dim;
        let bh = batch * hd;
        let mut h = match h0 {
            Some(h0) => {
                h0.expect_shape(&[batch, hd], "LSTM initial state")?;
                h0.data().to_vec()
            }
            None => vec![T::zero(); bh],
        };
        let mut c = vec![T::zero(); bh];

        let proj: Vec<Tensor<T>> = (0..GATES)
            .map(|g| {
                let mut p = matmul_t(x.mat(), &self.w[g]);
                for row in p.data_mut().chunks_exact_mut(hd) {
                    row.iter_mut().zip(self.b[g].data()).for_each(|(v, &b)| *v += b);
                }
                p
            })
            .collect();

        let total = batch * steps * hd;
        let mut cache = LstmCache {
            generation: self.generation,
            batch,
            steps,
            x: x.clone(),
            h_prev: vec![T::zero(); total],
            c_prev: vec![T::zero(); total],
            gates: std::array::from_fn(|_| vec![T::zero(); total]),
            tanh_c: vec![T::zero(); total],
        };
        let mut out = vec![T::zero(); total];

        for t in 0..steps {
            let mut acts: Vec<Vec<T>> = Vec::with_capacity(GATES);
            for (g, p) in proj.iter().enumerate() {
                let mut a = gather_step(p.data(), batch, steps, hd, t);
                gemm(
                    T::one(),
                    MatRef::new(&h, batch, hd),
                    self.u[g].mat().t(),
                    T::one(),
                    MatMut::new(&mut a, batch, hd),
                );
                if g == G {
                    a.iter_mut().for_each(|v| *v = v.tanh());
                } else {
                    a.iter_mut().for_each(|v| *v = sigmoid(*v));
                }
                acts.push(a);
            }
            let c_new: Vec<T> = (0..bh)
                .map(|k| acts[F][k] * c[k] + acts[I][k] * acts[G][k])
                .collect();
            let tc: Vec<T> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<T> = (0..bh).map(|k| acts[O][k] * tc[k]).collect();

            scatter_step(&mut cache.h_prev, &h, batch, steps, hd, t);
            scatter_step(&mut cache.c_prev, &c, batch, steps, hd, t);
            for (dst, a) in cache.gates.iter_mut().zip(&acts) {
                scatter_step(dst, a, batch, steps, hd, t);
            }
            scatter_step(&mut cache.tanh_c, &tc, batch, steps, hd, t);
            scatter_step(&mut out, &h_new, batch, steps, hd, t);
            h = h_new;
            c = c_new;
        }
        Ok((Tensor::from_vec(&[batch, steps, hd], out)?, cache))
    }

    pub fn backward(&self, cache: &LstmCache<T>, dh_seq: &Tensor<T>) -> Result<RecurrentGrads<T>> {
        if cache.generation != self.generation || cache.x.last_dim() != self.input_dim {
            return Err(Error::State(
                "LSTM cache was produced by different parameters; rerun forward".into(),
            ));
        }
        let (batch, steps, hd) = (cache.batch, cache.steps, self.hidden_dim);
        dh_seq.expect_shape(&[batch, steps, hd], "LSTM upstream gradient")?;
        let bh = batch * hd;
        let total = batch * steps * hd;

        let mut da: [Vec<T>; GATES] = std::array::from_fn(|_| vec![T::zero(); total]);
        let mut dh_carry = vec![T::zero(); bh];
        let mut dc_carry = vec![T::zero(); bh];

        for t in (0..steps).rev() {
            let up = gather_step(dh_seq.data(), batch, steps, hd, t);
            let gate = |g: usize| gather_step(&cache.gates[g], batch, steps, hd, t);
            let (i, f, g, o) = (gate(I), gate(F), gate(G), gate(O));
            let tc = gather_step(&cache.tanh_c, batch, steps, hd, t);
            let cp = gather_step(&cache.c_prev, batch, steps, hd, t);

            let mut da_t: [Vec<T>; GATES] = std::array::from_fn(|_| vec![T::zero(); bh]);
            for k in 0..bh {
                let dh = up[k] + dh_carry[k];
                let d_o = dh * tc[k];
                let dc = dh * o[k] * (T::one() - tc[k] * tc[k]) + dc_carry[k];
                da_t[I][k] = dc * g[k] * i[k] * (T::one() - i[k]);
                da_t[F][k] = dc * cp[k] * f[k] * (T::one() - f[k]);
                da_t[G][k] = dc * i[k] * (T::one() - g[k] * g[k]);
                da_t[O][k] = d_o * o[k] * (T::one() - o[k]);
                dc_carry[k] = dc * f[k];
            }
            let mut next = vec![T::zero(); bh];
            for gi in 0..GATES {
                gemm(
                    T::one(),
                    MatRef::new(&da_t[gi], batch, hd),
                    self.u[gi].mat(),
                    T::one(),
                    MatMut::new(&mut next, batch, hd),
                );
                scatter_step(&mut da[gi], &da_t[gi], batch, steps, hd, t);
            }
            dh_carry = next;
        }

        let rows = batch * steps;
        let x = cache.x.mat();
        let hprev = MatRef::new(&cache.h_prev, rows, hd);
        let mut dx = Tensor::zeros(&[batch, steps, self.input_dim]);
        let mut gw = Vec::with_capacity(GATES);
        let mut gu = Vec::with_capacity(GATES);
        let mut gb = Vec::with_capacity(GATES);
        for (gi, d) in da.iter().enumerate() {
            let a = MatRef::new(d, rows, hd);
            let mut w = Tensor::zeros(&[hd, self.input_dim]);
            gemm(T::one(), a.t(), x, T::zero(), w.mat_mut());
            let mut u = Tensor::zeros(&[hd, hd]);
            gemm(T::one(), a.t(), hprev, T::zero(), u.mat_mut());
            let b = Tensor::from_vec(&[rows, hd], d.clone())?.sum_rows();
            gemm(T::one(), a, self.w[gi].mat(), T::one(), dx.mat_mut());
            gw.push(w);
            gu.push(u);
            gb.push(b);
        }
        let mut params = gw;
        params.extend(gu);
        params.extend(gb);
        Ok(RecurrentGrads {
            params,
            dx,
            dh0: Tensor::from_vec(&[batch, hd], dh_carry)?,
        })
    }
}

impl<T: Scalar> Parameterized<T> for LstmLayer<T> {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["wi", "wf", "wg", "wo", "ui", "uf", "ug", "uo", "bi", "bf", "bg", "bo"]
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        self.w.iter().chain(&self.u).chain(&self.b).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.generation += 1;
        self.w
            .iter_mut()
            .chain(self.u.iter_mut())
            .chain(self.b.iter_mut())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::testing::{dot, fd_input, fd_params, random_tensor};

    #[test]
    fn zero_parameters_give_zero_states() {
        let l = LstmLayer::<f64>::zeros(3, 4);
        let x = random_tensor(&mut ChaCha8Rng::seed_from_u64(1), &[2, 5, 3], 1.0);
        let (h, _) = l.forward(&x, None).unwrap();
        assert_eq!(h.shape(), &[2, 5, 4]);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_step_by_hand() {
        let mut l = LstmLayer::<f64>::zeros(1, 1);
        l.w[I].data_mut()[0] = 0.5;
        l.w[F].data_mut()[0] = -0.3;
        l.w[G].data_mut()[0] = 1.2;
        l.w[O].data_mut()[0] = 0.8;
        l.u[G].data_mut()[0] = 0.6;
        let x = Tensor::from_vec(&[1, 2, 1], vec![1.0, -0.5]).unwrap();
        let (h, _) = l.forward(&x, None).unwrap();
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut hh, mut cc) = (0.0f64, 0.0f64);
        for xv in [1.0, -0.5] {
            let (i, f, g, o) = (s(0.5 * xv), s(-0.3 * xv), (1.2 * xv + 0.6 * hh).tanh(), s(0.8 * xv));
            cc = f * cc + i * g;
            hh = o * cc.tanh();
        }
        assert!((h.data()[1] - hh).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (b, t, d, hd) = (
                rng.random_range(1..4),
                rng.random_range(1..6),
                rng.random_range(1..8),
                rng.random_range(1..8),
            );
            let mut layer = LstmLayer::<f64>::init(d, hd, &mut rng);
            let x = random_tensor(&mut rng, &[b, t, d], 1.0);
            let h0 = random_tensor(&mut rng, &[b, hd], 0.5);
            let proj = random_tensor(&mut rng, &[b, t, hd], 1.0);
            let loss = |l: &LstmLayer<f64>, x: &Tensor<f64>, h0: &Tensor<f64>| {
                dot(&l.forward(x, Some(h0)).unwrap().0, &proj)
            };
            let (_, cache) = layer.forward(&x, Some(&h0)).unwrap();
            let g = layer.backward(&cache, &proj).unwrap();
            let worst = [
                fd_params(&mut layer, |l| loss(l, &x, &h0), &g.params),
                fd_input(&x, |x| loss(&layer, x, &h0), &g.dx),
                fd_input(&h0, |h| loss(&layer, &x, h), &g.dh0),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            assert!(worst < 1e-4, "relative error {worst}");
        }
    }

    #[test]
    fn shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = LstmLayer::<f64>::init(3, 6, &mut rng);
        let x = random_tensor(&mut rng, &[4, 2, 3], 1.0);
        let (h, c) = l.forward(&x, None).unwrap();
        assert_eq!(h.shape(), &[4, 2, 6]);
        let g = l.backward(&c, &h).unwrap();
        assert_eq!(g.dx.shape(), x.shape());
    }
}
