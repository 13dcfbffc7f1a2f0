pub mod arch;
pub mod data;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Shape4, Tensor};
