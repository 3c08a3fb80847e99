//! Link-level simulator of a 2x2 uplink MU-MIMO OFDM system.
//!
//! Two single-antenna users sound the channel with SRS in adjacent slots; the
//! two-antenna gNB estimates the channel, builds MRC and RZF combiners as soon
//! as fresh CSI arrives, separates the users' PUSCH streams, removes the
//! residual CFO rotation with a DMRS phase estimate and decodes each stream as
//! a single-layer transmission.

pub mod channel;
pub mod combining;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod link;
pub mod mac;
pub mod pilots;
pub mod selftest;
mod sequence;
pub mod simrun;

pub use error::{Result, SimError};
