//! Attention-based color/thermal feature fusion, detection losses and
//! Miss Rate–FPPI evaluation for multispectral pedestrian detection.
//!
//! Everything here is pure computation over `alloc` collections: no IO, no
//! global state, no hidden entropy. File formats and the command-line tool
//! live in the companion `mspd` crate.
//!
//! * [`tensor`] – dense feature maps and the kernel primitives (convolution,
//!   batch norm, activations, pooling, broadcasting), each with an analytic
//!   backward pass.
//! * [`fusion`] – the cascaded information enhancement block, the
//!   cross-modal attention fusion block, and the plain baseline fusions.
//! * [`gradcheck`] – central finite-difference verification of the fusion
//!   backward pass.
//! * [`loss`] – RPN / Fast R-CNN training objective.
//! * [`eval`] – IoU matching, Miss Rate–FPPI curves and log-average miss rate.
#![no_std]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{BatchNormParams, ChannelVector, ConvKernel, SpatialMap, Tensor};
