use std::fmt;

use thiserror::Error;

/// A single structural or range violation found while validating a model,
/// policy or dataset. Coordinates are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    TransitionColumn { step: usize, action: usize, state: usize, sum: f64 },
    TransitionEntry { step: usize, action: usize, next: usize, state: usize, value: f64 },
    EmissionColumn { step: usize, state: usize, sum: f64 },
    EmissionEntry { step: usize, obs: usize, state: usize, value: f64 },
    InitialDist { sum: f64 },
    InitialEntry { state: usize, value: f64 },
    Reward { step: usize, obs: usize, value: f64 },
    PolicyDistribution { context: String, sum: f64 },
    Trajectory { index: usize, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::TransitionColumn { step, action, state, sum } => write!(
                f,
                "transition column (h={step}, a={action}, s={state}) sums to {sum}, expected 1"
            ),
            Violation::TransitionEntry { step, action, next, state, value } => write!(
                f,
                "transition entry (h={step}, a={action}, s'={next}, s={state}) = {value} is negative"
            ),
            Violation::EmissionColumn { step, state, sum } => {
                write!(f, "emission column (h={step}, s={state}) sums to {sum}, expected 1")
            }
            Violation::EmissionEntry { step, obs, state, value } => {
                write!(f, "emission entry (h={step}, o={obs}, s={state}) = {value} is negative")
            }
            Violation::InitialDist { sum } => {
                write!(f, "initial distribution sums to {sum}, expected 1")
            }
            Violation::InitialEntry { state, value } => {
                write!(f, "initial distribution entry s={state} = {value} is negative")
            }
            Violation::Reward { step, obs, value } => {
                write!(f, "reward (h={step}, o={obs}) = {value} is outside [0, 1]")
            }
            Violation::PolicyDistribution { context, sum } => {
                write!(f, "policy distribution at {context} sums to {sum}, expected 1")
            }
            Violation::Trajectory { index, detail } => write!(f, "trajectory {index}: {detail}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("invalid input ({} violation(s)): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("enumeration of {required:.3e} items exceeds the cap of {cap}; use Monte Carlo mode or raise --cap")]
    Capacity { required: f64, cap: u64 },

    #[error("history has zero probability under the model; belief is undefined")]
    ZeroProbabilityHistory,

    #[error("unsupported policy: {0}")]
    UnsupportedPolicy(String),

    #[error("revealing condition violated at step {step}: weighted confusion matrix is singular")]
    RevealingViolation { step: usize },

    #[error("trajectory {index} has zero likelihood under the model (enable the likelihood floor to continue)")]
    ZeroLikelihood { index: usize },

    #[error("model class is empty after pre-filtering")]
    EmptyClass,

    #[error("state prior has zero mass at step {step}, state {state}")]
    DegeneratePrior { step: usize, state: usize },

    #[error("future {future} at step {step} has positive probability but zero return")]
    DegenerateWeight { step: usize, future: usize },

    #[error("behavior policy assigns zero probability to action {action} at step {step} of trajectory {trajectory}")]
    ZeroBehaviorProbability { trajectory: usize, step: usize, action: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("instance generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("observable-operator reconstruction residual {residual:.3e} exceeds tolerance")]
    Reconstruction { residual: f64 },

    #[error("golden value mismatch for {name}: expected {expected}, computed {computed}")]
    GoldenMismatch { name: String, expected: f64, computed: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    /// Process exit status used by the command-line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 2,
            Error::EmptyClass => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
