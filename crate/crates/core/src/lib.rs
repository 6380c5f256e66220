//! Transfer learning for outcome-oriented predictive process monitoring.
//!
//! An LSTM trained on prefixes of a source event log is reused, unchanged,
//! on a target log whose activities are mapped into the same space through
//! pre-trained word embeddings.

pub mod baselines;
pub mod embeddings;
pub mod error;
pub mod eventlog;
pub mod metrics;
pub mod nn;
pub mod stats;
pub mod tensorize;
pub mod timefeat;
pub mod transfer;

pub use error::{Error, Result};
