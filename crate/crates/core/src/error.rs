use thiserror::Error;

/// Errors produced by the filtering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("need at least {required} members, got {got}")]
    TooFewMembers { required: usize, got: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("observation covariance is singular after regularization (condition estimate {condition:.3e})")]
    SingularCovariance { condition: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("measurement noise is zero; likelihood is degenerate")]
    DegenerateLikelihood,

    #[error("filter degeneracy: every member has zero likelihood")]
    FilterDegeneracy,

    #[error("adaptive step size {step:.3e} fell below minimum {min_step:.3e} at t = {t}")]
    StepUnderflow { t: f64, step: f64, min_step: f64 },

    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("assimilation step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("density has zero mass: {0}")]
    ZeroMass(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn for_member(self, member: usize) -> Self {
        Error::Member {
            member,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
