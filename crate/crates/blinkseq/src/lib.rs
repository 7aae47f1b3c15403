//! Blinking-sequence codebooks for camera-based identification of UAVs, and
//! the simulation pipeline around them: clock-drift channel, noisy sampling
//! and a bank of circular correlators.
//!
//! Bit strings are written most significant bit first throughout, so the
//! first character of `"0010111"` is bit 0 of the sequence.

pub mod channel;
pub mod classifier;
pub mod codebook;
mod error;
pub mod seqcore;
pub mod sim;

pub use error::{Error, Result};
