use std::io;

/// Errors shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("order {0} exceeds the supported maximum of {max}", max = crate::healpix::MAX_ORDER)]
    OrderTooLarge(u8),
    #[error("order underflow: {0}")]
    OrderUnderflow(String),
    #[error("pixel index {index} out of range for order {order}")]
    PixelOutOfRange { index: u64, order: u8 },
    #[error("invalid stride {0}: must be a power of two dividing the grid")]
    InvalidStride(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("value does not belong to this tape")]
    ForeignTape,
    #[error("loss must be a scalar, got {0} elements")]
    NotScalar(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
