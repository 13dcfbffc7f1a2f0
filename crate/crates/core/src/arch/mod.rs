//! NU-net architecture family: backbone U-nets, nested multi-out U-nets, multi-step
//! down-sampling short-connections, and analytic complexity accounting.

pub mod complexity;
mod config;
mod graph;
mod mou;
mod nunet;
pub mod variants;

pub use config::{
    fingerprint, mou_depth_schedule, BackboneConfig, ChannelSchedule, MdscConfig, MouConfig,
    NuNetConfig, SkipFusion, MDSC_CHANNELS,
};
pub use graph::{
    count_flops, count_params, run_blocks, ConvBlock, Empty, GraphBuilder, LayerKind, LayerRecord,
    ModelGraph, Network,
};
pub use mou::{build_mou, Mou, MouOutput};
pub use nunet::{build_backbone, build_nunet, NuNet};
pub use variants::{build_variant, ArchVariant, VariantRegistry, VariantSettings};
