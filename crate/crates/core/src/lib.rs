//! Joint estimation of propagation delay, clock drift and clock offset from a
//! two-way timing exchange between a perfect-clock transceiver (Tr) and an
//! imperfect-clock transceiver (Tr').
//!
//! Tr' sends one signal; Tr timestamps its arrival and answers `N` times after
//! known waits `delta_1 < ... < delta_N`. From the returns Tr' estimates drift
//! and delay, empirically ([`empirical`]) or by joint maximum likelihood
//! ([`mle`]), and the clock offset when Tr echoes its arrival timestamp.
//! [`crlb`] gives the Cramer-Rao bounds these estimators are measured
//! against, and [`montecarlo`] runs the seeded simulation study.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod crlb;
pub mod empirical;
pub mod error;
pub mod mle;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod protocol;

pub use error::{Error, Result};
pub use model::{ClockParams, NoiseModel, ProtocolConfig};
pub use protocol::{ObservationSet, RngSpec};
