//! Tape-based reverse-mode differentiation over the small operator set the
//! generator and its measurement loss need, plus the Adam optimizer.
//!
//! Complex values travel through the tape as two real channels; only the
//! pixel-wise coil product and the Fourier layers know they are complex.

mod adam;
mod kernels;
mod tape;
mod tensor;

use std::sync::Arc;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use tape::{
    record_add, record_batchnorm2d, record_complex_pixmul, record_conv2d, record_l2_loss,
    record_linear, record_relu, record_sum, record_upsample_nn2x, Gradients, LinearMap, NodeId,
    Tape,
};
pub use tensor::Tensor;

use crate::error::Result;
use crate::forward::{KPoint, Nudft};

/// Exact nonuniform DFT layer on a 2-channel `n_image²` input.
pub fn record_nudft_layer(
    tape: &mut Tape,
    x: NodeId,
    coords: &[KPoint],
    n_image: usize,
) -> Result<NodeId> {
    let map = Nudft::new(coords, n_image)?;
    record_linear(tape, x, Arc::new(map))
}
