//! Polar codes for non-stationary sequences of binary-input memoryless
//! symmetric (BMS) channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`channels`]: channel models, Bhattacharyya parameters and the two
//!   channel-combining operations with certified interval propagation.
//! - [`quantize`]: the dyadic/uniform quantization of `[0, 1]` that decides
//!   which pairs of channels may be combined.
//! - [`speed`]: polarization-speed analysis (`f`, `E`, `g`, `h`, `eta`).
//! - [`polarize`]: layered polarization circuits with per-level sorting
//!   permutations and skipped butterflies.
//! - [`extremal`]: the scalar extremal process, its potential function,
//!   the counting bound and the constants calculator.
//! - [`construct`]: the two-stage code construction.
//! - [`codec`]: encoder and successive-cancellation decoder.
//! - [`sim`]: channel-sequence generation and Monte Carlo simulation.

pub mod channels;
pub mod codec;
pub mod construct;
mod error;
pub mod extremal;
pub mod numeric;
pub mod polarize;
pub mod quantize;
pub mod sim;
pub mod speed;

pub use channels::{ChannelModel, ZInterval};
pub use codec::{encode, sc_decode, union_bound, BoxplusRule, ReceivedWord};
pub use construct::{construct, CodeSpec, ConstructParams};
pub use error::{Error, Result};
pub use extremal::{compute_constants, ConstantsReport, ExtremalTrace};
pub use polarize::{CombinePolicy, Layer, LayeredCircuit};
pub use quantize::QuantGrid;
pub use sim::{generate_sequence, run_monte_carlo, SequenceSpec, SimResult};

/// Library version string embedded in emitted artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
