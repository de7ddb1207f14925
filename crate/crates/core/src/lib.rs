//! Off-policy evaluation for finite-horizon tabular POMDPs.
//!
//! The crate covers exact probability and value computation ([`pomdp`]),
//! coverage and revealing coefficients ([`coverage`]), observable-operator
//! parameterizations ([`oom`]), model-based and importance-sampling estimators
//! ([`estimators`]), hardness constructions and random fixtures
//! ([`constructions`]), and a seeded experiment runner ([`harness`]).
//!
//! Steps are zero-based everywhere. See `examples/` for one runnable program
//! per capability.

pub mod constructions;
pub mod coverage;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod oom;
pub mod pomdp;

pub use error::{Error, Result};
pub use pomdp::{Dataset, ObsAction, Policy, TabularPomdp, Trajectory};
