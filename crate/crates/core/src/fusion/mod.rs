//! Color/thermal feature fusion.
//!
//! [`ciem_enhance`] fuses both modalities through a cascaded conv/BN/ReLU
//! block, derives shared channel and spatial attention from the fused map and
//! re-weights each modality with it. [`caffm_fuse`] then cross-weights the
//! two enhanced modalities with each other's channel attention and merges
//! them under a global channel gate. [`fusion_forward`] chains the two.
//! [`baseline_fuse`] provides the plain concatenate / add / multiply fusions
//! used as reference points.

mod baseline;
mod cross_modal;
mod enhancement;
mod network;
mod params;

pub use baseline::{baseline_fuse, BaselineMode};
pub use cross_modal::{
    caffm_backward, caffm_complement, caffm_cross_weights, caffm_forward, caffm_fuse, CaffmGrads, CaffmTrace,
};
pub use enhancement::{
    channel_attention, ciem_backward, ciem_enhance, ciem_forward, ciem_fuse, spatial_attention, CiemGrads, CiemTrace,
};
pub use network::{fusion_backward, fusion_forward, fusion_trace, FusionGrads, FusionTrace};
pub use params::{default_reduction, CaffmParams, CiemParams, FusionParams, ParamGrads, ParamGroup};
