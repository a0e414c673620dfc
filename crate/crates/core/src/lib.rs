#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod explain;
pub mod labeling;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod pool;
pub mod record;
pub mod series;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tensor::Tensor;
