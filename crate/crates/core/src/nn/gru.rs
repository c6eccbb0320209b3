//! Gated recurrent unit with full backpropagation through time.
//!
//! Per step, for input `x` and previous state `h`:
//!
//! ```text
//! z  = σ(Wz·x + Uz·h + bz)
//! r  = σ(Wr·x + Ur·h + br)
//! h̃  = tanh(Wh·x + Uh·(r∘h) + bh)
//! h' = (1 − z)∘h + z∘h̃
//! ```

use rand::Rng;

use super::init::{glorot_uniform, orthogonal};
use super::recurrent::{gather_step, scatter_step, RecurrentGrads};
use super::tensor::{gemm, matmul_t, sigmoid, MatMut, MatRef, Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GruLayer<T> {
    input_dim: usize,
    hidden_dim: usize,
    pub wz: Tensor<T>,
    pub wr: Tensor<T>,
    pub wh: Tensor<T>,
    pub uz: Tensor<T>,
    pub ur: Tensor<T>,
    pub uh: Tensor<T>,
    pub bz: Tensor<T>,
    pub br: Tensor<T>,
    pub bh: Tensor<T>,
    generation: u64,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    generation: u64,
    batch: usize,
    steps: usize,
    x: Tensor<T>,
    /// State entering each step, `[B, T, H]`.
    h_prev: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
}

impl<T: Scalar> GruLayer<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, input_dim]);
        let u = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        Self {
            input_dim,
            hidden_dim,
            wz: w(),
            wr: w(),
            wh: w(),
            uz: u(),
            ur: u(),
            uh: u(),
            bz: b(),
            br: b(),
            bh: b(),
            generation: 0,
        }
    }

    /// Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(input_dim, hidden_dim);
        l.wz = glorot_uniform(rng, hidden_dim, input_dim);
        l.wr = glorot_uniform(rng, hidden_dim, input_dim);
        l.wh = glorot_uniform(rng, hidden_dim, input_dim);
        l.uz = orthogonal(rng, hidden_dim);
        l.ur = orthogonal(rng, hidden_dim);
        l.uh = orthogonal(rng, hidden_dim);
        l
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn input_projection(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        let mut p = matmul_t(x.mat(), w);
        for row in p.data_mut().chunks_exact_mut(self.hidden_dim) {
            row.iter_mut().zip(b.data()).for_each(|(v, &bb)| *v += bb);
        }
        p
    }

    /// `x` is `[batch, steps, input_dim]`; `h0` is `[batch, hidden]` (zeros if
    /// absent). Returns the hidden sequence `[batch, steps, hidden]`.
    pub fn forward(&self, x: &Tensor<T>, h0: Option<&Tensor<T>>) -> Result<(Tensor<T>, GruCache<T>)> {
        let (batch, steps) = check_input(x, self.input_dim, "GRU input")?;
        let hd = self.hidden_dim;
        let mut h = match h0 {
            Some(h0) => {
                h0.expect_shape(&[batch, hd], "GRU initial state")?;
                h0.data().to_vec()
            }
            None => vec![T::zero(); batch * hd],
        };

        let xz = self.input_projection(x, &self.wz, &self.bz);
        let xr = self.input_projection(x, &self.wr, &self.br);
        let xh = self.input_projection(x, &self.wh, &self.bh);

        let total = batch * steps * hd;
        let mut cache = GruCache {
            generation: self.generation,
            batch,
            steps,
            x: x.clone(),
            h_prev: vec![T::zero(); total],
            z: vec![T::zero(); total],
            r: vec![T::zero(); total],
            n: vec![T::zero(); total],
            rh: vec![T::zero(); total],
        };
        let mut out = vec![T::zero(); total];

        for t in 0..steps {
            let mut z = gather_step(xz.data(), batch, steps, hd, t);
            let mut r = gather_step(xr.data(), batch, steps, hd, t);
            let hm = MatRef::new(&h, batch, hd);
            gemm(T::one(), hm, self.uz.mat().t(), T::one(), MatMut::new(&mut z, batch, hd));
            gemm(T::one(), hm, self.ur.mat().t(), T::one(), MatMut::new(&mut r, batch, hd));
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            r.iter_mut().for_each(|v| *v = sigmoid(*v));

            let rh: Vec<T> = r.iter().zip(&h).map(|(&a, &b)| a * b).collect();
            let mut n = gather_step(xh.data(), batch, steps, hd, t);
            gemm(
                T::one(),
                MatRef::new(&rh, batch, hd),
                self.uh.mat().t(),
                T::one(),
                MatMut::new(&mut n, batch, hd),
            );
            n.iter_mut().for_each(|v| *v = v.tanh());

            let h_new: Vec<T> = (0..batch * hd)
                .map(|i| (T::one() - z[i]) * h[i] + z[i] * n[i])
                .collect();

            scatter_step(&mut cache.h_prev, &h, batch, steps, hd, t);
            scatter_step(&mut cache.z, &z, batch, steps, hd, t);
            scatter_step(&mut cache.r, &r, batch, steps, hd, t);
            scatter_step(&mut cache.n, &n, batch, steps, hd, t);
            scatter_step(&mut cache.rh, &rh, batch, steps, hd, t);
            scatter_step(&mut out, &h_new, batch, steps, hd, t);
            h = h_new;
        }
        Ok((Tensor::from_vec(&[batch, steps, hd], out)?, cache))
    }

    /// Reverse-mode gradients given `dL/dh_seq` (`[batch, steps, hidden]`).
    pub fn backward(&self, cache: &GruCache<T>, dh_seq: &Tensor<T>) -> Result<RecurrentGrads<T>> {
        if cache.generation != self.generation || cache.x.last_dim() != self.input_dim {
            return Err(Error::State(
                "GRU cache was produced by different parameters; rerun forward".into(),
            ));
        }
        let (batch, steps, hd) = (cache.batch, cache.steps, self.hidden_dim);
        dh_seq.expect_shape(&[batch, steps, hd], "GRU upstream gradient")?;

        let total = batch * steps * hd;
        let mut daz = vec![T::zero(); total];
        let mut dar = vec![T::zero(); total];
        let mut dah = vec![T::zero(); total];
        let mut carry = vec![T::zero(); batch * hd];

        for t in (0..steps).rev() {
            let up = gather_step(dh_seq.data(), batch, steps, hd, t);
            let z = gather_step(&cache.z, batch, steps, hd, t);
            let r = gather_step(&cache.r, batch, steps, hd, t);
            let n = gather_step(&cache.n, batch, steps, hd, t);
            let hp = gather_step(&cache.h_prev, batch, steps, hd, t);

            let mut daz_t = vec![T::zero(); batch * hd];
            let mut dah_t = vec![T::zero(); batch * hd];
            let mut next = vec![T::zero(); batch * hd];
            for i in 0..batch * hd {
                let dh = up[i] + carry[i];
                let dn = dh * z[i];
                let dz = dh * (n[i] - hp[i]);
                dah_t[i] = dn * (T::one() - n[i] * n[i]);
                daz_t[i] = dz * z[i] * (T::one() - z[i]);
                next[i] = dh * (T::one() - z[i]);
            }

            let mut drh = vec![T::zero(); batch * hd];
            gemm(
                T::one(),
                MatRef::new(&dah_t, batch, hd),
                self.uh.mat(),
                T::zero(),
                MatMut::new(&mut drh, batch, hd),
            );
            let mut dar_t = vec![T::zero(); batch * hd];
            for i in 0..batch * hd {
                let dr = drh[i] * hp[i];
                dar_t[i] = dr * r[i] * (T::one() - r[i]);
                next[i] += drh[i] * r[i];
            }
            let mut nm = MatMut::new(&mut next, batch, hd);
            gemm(T::one(), MatRef::new(&daz_t, batch, hd), self.uz.mat(), T::one(), nm);
            nm = MatMut::new(&mut next, batch, hd);
            gemm(T::one(), MatRef::new(&dar_t, batch, hd), self.ur.mat(), T::one(), nm);

            scatter_step(&mut daz, &daz_t, batch, steps, hd, t);
            scatter_step(&mut dar, &dar_t, batch, steps, hd, t);
            scatter_step(&mut dah, &dah_t, batch, steps, hd, t);
            carry = next;
        }

        let rows = batch * steps;
        let (daz, dar, dah) = (
            MatRef::new(&daz, rows, hd),
            MatRef::new(&dar, rows, hd),
            MatRef::new(&dah, rows, hd),
        );
        let x = cache.x.mat();
        let hprev = MatRef::new(&cache.h_prev, rows, hd);
        let rh = MatRef::new(&cache.rh, rows, hd);

        let outer = |a: MatRef<'_, T>, b: MatRef<'_, T>, cols: usize| {
            let mut g = Tensor::zeros(&[hd, cols]);
            gemm(T::one(), a.t(), b, T::zero(), g.mat_mut());
            g
        };
        let col_sum = |a: MatRef<'_, T>| {
            let mut g = Tensor::zeros(&[hd]);
            let ones = vec![T::one(); rows];
            gemm(
                T::one(),
                MatRef::new(&ones, 1, rows),
                a,
                T::zero(),
                MatMut::new(g.data_mut(), 1, hd),
            );
            g
        };

        let mut dx = Tensor::zeros(&[batch, steps, self.input_dim]);
        gemm(T::one(), daz, self.wz.mat(), T::zero(), dx.mat_mut());
        gemm(T::one(), dar, self.wr.mat(), T::one(), dx.mat_mut());
        gemm(T::one(), dah, self.wh.mat(), T::one(), dx.mat_mut());

        let params = vec![
            outer(daz, x, self.input_dim),
            outer(dar, x, self.input_dim),
            outer(dah, x, self.input_dim),
            outer(daz, hprev, hd),
            outer(dar, hprev, hd),
            outer(dah, rh, hd),
            col_sum(daz),
            col_sum(dar),
            col_sum(dah),
        ];
        Ok(RecurrentGrads {
            params,
            dx,
            dh0: Tensor::from_vec(&[batch, hd], carry)?,
        })
    }
}

pub(crate) fn check_input<T: Scalar>(x: &Tensor<T>, input_dim: usize, what: &str) -> Result<(usize, usize)> {
    match *x.shape() {
        [b, t, d] if d == input_dim && b > 0 && t > 0 => Ok((b, t)),
        _ => Err(Error::Shape(format!(
            "{what}: expected [batch, steps, {input_dim}], got {:?}",
            x.shape()
        ))),
    }
}

impl<T: Scalar> Parameterized<T> for GruLayer<T> {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh"]
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.wz, &self.wr, &self.wh, &self.uz, &self.ur, &self.uh, &self.bz, &self.br, &self.bh,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.generation += 1;
        vec![
            &mut self.wz,
            &mut self.wr,
            &mut self.wh,
            &mut self.uz,
            &mut self.ur,
            &mut self.uh,
            &mut self.bz,
            &mut self.br,
            &mut self.bh,
        ]
    }
}
