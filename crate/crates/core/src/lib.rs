pub mod codec;
pub mod error;
pub mod healpix;
pub mod metrics;
pub mod ops;
pub mod resample;
pub mod tensor;

pub use error::{Error, Result};
