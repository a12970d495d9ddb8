//! Exact counterfactual inference over small discrete structural causal
//! models, and an audit of the invariances that counterfactual data
//! augmentation imposes on a representation.
//!
//! The engine is generic over the probability scalar ([`Probability`]); the
//! aliases below fix it to exact rationals, which is what the auditing code
//! and the command-line tool use.

pub mod augment;
pub mod distribution;
pub mod error;
pub mod examples;
pub mod format;
pub mod generator;
pub mod inference;
pub mod invariance;
pub mod scalar;
pub mod scm;

pub use distribution::{Distribution, DistributionDoc};
pub use error::{AugmentError, DemoError, InferenceError, InvarianceError, ParseError, ScmError};
pub use inference::{Assignment, CounterfactualQuery, MapEstimate};
pub use scalar::{parse_rational, ratio, Probability};
pub use scm::{ExogenousPrior, Scm, StructuralEquation, ValidationReport, Value, VarKind, VariableSpec, World};

pub use num_rational::BigRational;

/// Exact probability scalar.
pub type Prob = BigRational;
pub type ExactScm = Scm<Prob>;
pub type ExactDistribution = Distribution<Prob>;
pub type FloatScm = Scm<f64>;
pub type FloatDistribution = Distribution<f64>;
