//! Capacity, low-SNR slope and bounds for the Gaussian channel observed
//! through a dithered uniform quantizer of step `delta`.
//!
//! With the dither known at the receiver, the channel is equivalent to
//! `Y = X + N + U` where `U` is uniform on `[-delta/2, delta/2]`; see
//! [`channel`]. All rates are in nats per channel use.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod error;
pub mod info;
pub mod low_snr;
pub mod montecarlo;
pub mod numerics;
pub mod solver;

pub use channel::{ChannelParams, Peak, PowerConstraints};
pub use error::{Error, Result};
pub use info::{Estimate, InputDistribution};
pub use numerics::QuadratureSpec;
pub use solver::{CapacityResult, SolverConfig};
