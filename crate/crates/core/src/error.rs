use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("individual {individual} in family {family} references parent {parent} which is not in the family")]
    DanglingParent {
        family: String,
        individual: String,
        parent: String,
    },

    #[error("individual {individual}: father and mother must both be given or both be absent")]
    HalfParented { individual: String },

    #[error("pedigree of family {family} contains a cycle through {individual}")]
    CyclicPedigree { family: String, individual: String },

    #[error("duplicate individual id {0}")]
    DuplicateId(String),

    #[error("unknown individual id {0}")]
    UnknownIndividual(String),

    #[error("unknown marker {0}")]
    UnknownMarker(String),

    #[error("unknown trait {0}")]
    UnknownTrait(String),

    #[error("unknown covariate {0}")]
    UnknownCovariate(String),

    #[error("trait {name}: {msg}")]
    TraitType { name: String, msg: String },

    #[error("trait kinds differ between the two trait vectors")]
    KindMismatch,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("marker {marker}: {reason}")]
    DegenerateMarker { marker: String, reason: String },

    #[error("null variance of the statistic is zero: {0}")]
    DegenerateVariance(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("not enough usable observations: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },

    #[error("missing parental genotype")]
    MissingParent,

    #[error("no convergence after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("complete separation detected: coefficient {index} reached {value:.2}")]
    Separation { index: usize, value: f64 },

    #[error("latent space has 2^{bits} configurations, above the 2^{limit} limit")]
    LatentSpaceTooLarge { bits: u32, limit: u32 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// True for the per-marker failures a scan reports as a status instead of aborting.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMarker { .. }
                | Error::DegenerateVariance(_)
                | Error::InsufficientData { .. }
                | Error::ZeroWeights
                | Error::NonConvergence { .. }
                | Error::Separation { .. }
        )
    }
}
