//! Convolutional operators on the nested grid.
//!
//! Every taped op takes and returns [`Var`](crate::tensor::Var); the `_map`
//! variants evaluate once on a scratch tape.

mod conv;
mod gdn;
mod hop;
mod patch;
mod pool;
mod shuffle;

pub use conv::{conv1hop, conv1hop_map, Kernel, KernelVar, TAPS};
pub use gdn::{gdn, gdn_map, project_gdn, GdnParams, GdnVar, BETA_MIN};
pub use hop::{
    concat_channels, conv_nhop, conv_nhop_map, elementwise_max, elementwise_sum, strided_subsample,
    strided_subsample_map, AggregationMode,
};
pub use patch::{make_patch, make_patch_with, PatchSpec};
pub use pool::{pool, pool_map, upsample_nearest, upsample_nearest_map, PoolKind};
pub use shuffle::{pixel_shuffle, pixel_shuffle_map, pixel_unshuffle, pixel_unshuffle_map, spconv, spconv_map};
