//! Deterministic virtual testbed for a closed-loop CSTR process.
//!
//! The crate is `no_std` (with `alloc`): it holds the plant, controller,
//! message layer, attack engine, labeling and trace oracle as pure
//! state-transition code. File formats, configuration parsing and the
//! command line live in the companion `cpsbed` crate.

#![no_std]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod attack;
pub mod control;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod fmt;
pub mod host;
pub mod net;
pub mod oracle;
pub mod plant;
pub mod scenario;
pub mod time;

pub use error::{Error, Result};
