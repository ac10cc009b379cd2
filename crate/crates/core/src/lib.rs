pub mod error;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod simnet;
pub mod synth;
pub mod train;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
