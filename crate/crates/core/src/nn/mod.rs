//! Minimal neural-network runtime: parameters, layers, kernels and a gradient tape.

pub mod kernels;
mod layers;
mod params;
mod tape;

pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, BN_EPS, BN_MOMENTUM};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{sigmoid, Tape, Var};
