//! Sum-rate maximizing resource allocation for downlink OFDMA aided by a
//! decode-and-forward relay.
//!
//! Transmission spans two equal-duration slots. A first-slot subcarrier `k`
//! may be paired with a second-slot subcarrier `l` for relay-aided
//! transmission to one user; otherwise both subcarriers carry direct
//! source-to-user transmissions. Two relay-aided modes are supported:
//!
//! * [`Protocol::Novel`]: source and relay beamform jointly on subcarrier `l`.
//! * [`Protocol::Benchmark`]: only the relay transmits on subcarrier `l`.
//!
//! The solver ([`dualsolve::solve`]) finds subcarrier pairing, mode/user
//! selection and source/relay powers under a total power budget by dual
//! decomposition, closed-form water-filling, the Hungarian method and
//! bisection on the power multiplier. [`oracle`] is a brute-force reference
//! for small instances and [`simkit`] runs Monte Carlo comparisons.

pub mod assign;
pub mod cli;
pub mod dualsolve;
pub mod error;
pub mod gains;
pub mod model;
pub mod oracle;
pub mod simkit;

pub use error::{Error, Result};
pub use model::{Allocation, ChannelRealization, PairDecision, PairMode, PowerSplit, Protocol};
