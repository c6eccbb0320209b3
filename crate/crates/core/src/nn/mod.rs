//! Dense-tensor numeric core: the layer set of the fusion network with
//! explicit forward caches and hand-derived backward passes.

pub mod batchnorm;
pub mod dense;
pub mod dropout;
pub mod gru;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod prelu;
pub mod recurrent;
pub mod rmsprop;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testing;

pub use batchnorm::BatchNorm;
pub use dense::DenseLayer;
pub use dropout::Dropout;
pub use gru::GruLayer;
pub use loss::{softmax, softmax_cross_entropy, softmax_rows, sparse_ce};
pub use lstm::LstmLayer;
pub use prelu::PRelu;
pub use recurrent::{Recurrent, RecurrentKind};
pub use rmsprop::{RmsProp, RmsPropConfig};
pub use tensor::{Scalar, Tensor};

/// Layers with trainable tensors, enumerated in a fixed order.
pub trait Parameterized<T: Scalar> {
    fn param_names(&self) -> Vec<&'static str>;
    fn params(&self) -> Vec<&Tensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
