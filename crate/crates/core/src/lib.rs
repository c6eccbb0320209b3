pub mod audio;
pub mod checkpoint;
pub mod container;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sequencing;
pub mod standardize;
pub mod synthetic;
pub mod training;
pub mod video;

pub use error::{Error, Result};
