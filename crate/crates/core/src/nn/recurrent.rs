use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{GruCache, GruLayer};
use super::lstm::{LstmCache, LstmLayer};
use super::tensor::{Scalar, Tensor};
use super::Parameterized;
use crate::error::{Error, Result};

/// Gradients of a recurrent layer: parameter grads in `params()` order, plus
/// input and initial-state grads.
#[derive(Debug, Clone)]
pub struct RecurrentGrads<T> {
    pub params: Vec<Tensor<T>>,
    pub dx: Tensor<T>,
    pub dh0: Tensor<T>,
}

/// Copies timestep `t` of a `[B, T, H]` buffer into a dense `[B, H]` block.
pub(crate) fn gather_step<T: Copy>(src: &[T], batch: usize, steps: usize, hd: usize, t: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * hd);
    for b in 0..batch {
        let o = (b * steps + t) * hd;
        out.extend_from_slice(&src[o..o + hd]);
    }
    out
}

pub(crate) fn scatter_step<T: Copy>(dst: &mut [T], src: &[T], batch: usize, steps: usize, hd: usize, t: usize) {
    for b in 0..batch {
        let o = (b * steps + t) * hd;
        dst[o..o + hd].copy_from_slice(&src[b * hd..(b + 1) * hd]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentKind {
    Gru,
    Lstm,
}

impl std::str::FromStr for RecurrentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(Self::Gru),
            "lstm" => Ok(Self::Lstm),
            _ => Err(Error::Usage(format!("unknown recurrent kind '{s}' (gru|lstm)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Recurrent<T> {
    Gru(GruLayer<T>),
    Lstm(LstmLayer<T>),
}

#[derive(Debug, Clone)]
pub enum RecurrentCache<T> {
    Gru(GruCache<T>),
    Lstm(LstmCache<T>),
}

impl<T: Scalar> Recurrent<T> {
    pub fn init<R: Rng>(kind: RecurrentKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        match kind {
            RecurrentKind::Gru => Self::Gru(GruLayer::init(input_dim, hidden_dim, rng)),
            RecurrentKind::Lstm => Self::Lstm(LstmLayer::init(input_dim, hidden_dim, rng)),
        }
    }

    pub fn kind(&self) -> RecurrentKind {
        match self {
            Self::Gru(_) => RecurrentKind::Gru,
            Self::Lstm(_) => RecurrentKind::Lstm,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Self::Gru(l) => l.hidden_dim(),
            Self::Lstm(l) => l.hidden_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Gru(l) => l.input_dim(),
            Self::Lstm(l) => l.input_dim(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, RecurrentCache<T>)> {
        match self {
            Self::Gru(l) => l.forward(x, None).map(|(h, c)| (h, RecurrentCache::Gru(c))),
            Self::Lstm(l) => l.forward(x, None).map(|(h, c)| (h, RecurrentCache::Lstm(c))),
        }
    }

    pub fn backward(&self, cache: &RecurrentCache<T>, dh: &Tensor<T>) -> Result<RecurrentGrads<T>> {
        match (self, cache) {
            (Self::Gru(l), RecurrentCache::Gru(c)) => l.backward(c, dh),
            (Self::Lstm(l), RecurrentCache::Lstm(c)) => l.backward(c, dh),
            _ => Err(Error::State("recurrent cache kind does not match layer".into())),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Recurrent<T> {
    fn param_names(&self) -> Vec<&'static str> {
        match self {
            Self::Gru(l) => l.param_names(),
            Self::Lstm(l) => l.param_names(),
        }
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Self::Gru(l) => l.params(),
            Self::Lstm(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Self::Gru(l) => l.params_mut(),
            Self::Lstm(l) => l.params_mut(),
        }
    }
}
