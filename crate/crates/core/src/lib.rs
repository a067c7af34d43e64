//! Constructive memorization networks.
//!
//! Builds STEP+ID networks over exact rationals that memorize a finite
//! labelled point set, converts them to smooth sigmoidal networks, and
//! audits given architectures for memorization capacity.

pub mod activation;
pub mod compression;
pub mod criteria;
pub mod dataset;
pub mod error;
pub mod memorizer;
pub mod network;
pub mod pipeline;
pub mod projection;
pub mod scalar;
pub mod separateness;
pub mod serialize;
pub mod sigmoid_approx;
pub mod wide;

pub use activation::{Activation, SigmoidKind};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use network::{evaluate_exact, evaluate_float, AffineLayer, Network, NetworkStats, Neuron};
pub use scalar::Scalar;
pub use wide::Wide;

/// Arbitrary-precision rational, always kept in lowest terms.
pub type ExactScalar = num_rational::BigRational;
/// Network over exact rationals; the constructions produce these.
pub type StepIdNetwork = Network<ExactScalar>;
/// Double-precision network.
pub type FloatNetwork = Network<f64>;
/// Network over 256-bit binary floats.
pub type WideNetwork = Network<Wide>;
