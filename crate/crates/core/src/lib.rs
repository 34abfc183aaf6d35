//! Exact desk-scale simulator for chained quantum-walk multiple collision
//! search.
//!
//! States are explicit sparse amplitude maps over labeled bases (vertex
//! subsets of a Johnson graph, optionally with an extraction register), so
//! every measurement distribution and every post-measurement state can be
//! checked exactly against classical enumeration of a small random function.

pub mod amplify;
pub mod chain;
pub mod error;
pub mod extraction;
pub mod johnson;
pub mod oracle;
pub mod parallel;
pub mod regimes;
pub mod scalar;
pub mod statevector;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::{Exponent, Scalar};

/// Double-precision state vector used by the chain simulation.
pub type State = statevector::StateVector<f64>;
/// Single-precision state vector.
pub type State32 = statevector::StateVector<f32>;
pub type AmplitudeDecomposition = amplify::AmplitudeDecomposition<f64>;
/// Regime calculator in floating point.
pub type RegimePoint = regimes::RegimePoint<f64>;
/// Regime calculator over exact rationals.
pub type ExactRegimePoint = regimes::RegimePoint<num_rational::Ratio<i64>>;
pub type TradeoffPoint = regimes::TradeoffPoint<f64>;
