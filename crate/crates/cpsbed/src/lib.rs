//! Dataset generation, validation and oracle tooling on top of `cpsbed-core`.

pub mod analysis;
pub mod config;
pub mod format;
pub mod manifest;
pub mod pipeline;
pub mod presets;
pub mod validate;

pub use cpsbed_core as core;
