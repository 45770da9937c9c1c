use alloc::string::String;

use crate::net::NodeId;
use crate::plant::{FaultKind, SystemMode};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("numeric domain error: {0}")]
    NumericDomain(&'static str),
    #[error("negative elapsed time {0}")]
    NegativeTime(f64),
    #[error("disturbance estimate is singular at t = {0} (step response factor is zero)")]
    Singularity(f64),
    #[error("illegal mode transition: {from:?} on {event:?}")]
    IllegalTransition { from: SystemMode, event: FaultKind },
    #[error("fault event scheduled at {at} is later than the plant clock {now}")]
    FaultNotDue { at: f64, now: f64 },
    #[error("controller is in MANUAL mode")]
    ManualMode,
    #[error("trace sample taken in MANUAL mode is not traceable")]
    NotTraceable,
    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("no link from {src:?} to {dst:?}")]
    Routing { src: NodeId, dst: NodeId },
    #[error("timestamp {ts} outside the scenario window [0, {end}]")]
    OutOfWindow { ts: f64, end: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("planning error: {0}")]
    Planning(String),
    #[error("records are not sorted by time at index {0}")]
    Unsorted(usize),
    #[error("record at t = {0} has no label")]
    MissingLabel(f64),
    #[error("clock mismatch between log sources: {0}")]
    Synchronization(String),
    #[error("trace window needs at least 2 samples, got {0}")]
    WindowTooShort(usize),
    #[error("trace window is malformed: {0}")]
    MalformedWindow(&'static str),
    #[error("detector harness: {0}")]
    Harness(String),
}
