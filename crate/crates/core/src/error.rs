use std::path::PathBuf;

use crate::integrator::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate element {index} (measure {measure:e})")]
    DegenerateElement { index: usize, measure: f64 },

    #[error("non-manifold facet {facet:?} shared by {count} elements")]
    NonManifold { facet: Vec<usize>, count: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("size mismatch in {what}: expected {expected}, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("levels do not overlap: level {coarse} and level {fine} have bounding-box Jaccard {jaccard:.3}")]
    LevelsDoNotOverlap {
        coarse: usize,
        fine: usize,
        jaccard: f64,
    },

    #[error("fine vertex {vertex} could not be bound to any coarse element")]
    Unassignable { vertex: usize },

    #[error("binding incomplete: vertex {vertex} has no host element")]
    IncompleteBinding { vertex: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank deficient {what}: rank {rank} < {expected}")]
    RankDeficient {
        what: String,
        rank: usize,
        expected: usize,
    },

    #[error("infeasible state: {0}")]
    Infeasible(String),

    #[error("newton solve did not converge after {} iterations (decrement {:e})", .report.iterations, .report.final_decrement)]
    NotConverged { best: Vec<f64>, report: SolveReport },

    #[error("at level {level}, step {step}: {source}")]
    AtStep {
        level: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("jitter produced an inverted element after {retries} retries at level {level}")]
    JitterInversion { level: usize, retries: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, level: usize, step: usize) -> Self {
        Error::AtStep {
            level,
            step,
            source: Box::new(self),
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DegenerateElement { .. } => "degenerate_element",
            Error::NonManifold { .. } => "non_manifold",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::LevelsDoNotOverlap { .. } => "levels_do_not_overlap",
            Error::Unassignable { .. } => "unassignable",
            Error::IncompleteBinding { .. } => "incomplete_binding",
            Error::Singular(_) => "singular",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged { .. } => "not_converged",
            Error::AtStep { source, .. } => source.kind(),
            Error::JitterInversion { .. } => "jitter_inversion",
            Error::Invalid(_) => "invalid",
            Error::Config(_) => "config",
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular(_)
            | Error::RankDeficient { .. }
            | Error::Infeasible(_)
            | Error::NotConverged { .. }
            | Error::JitterInversion { .. } => true,
            Error::AtStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
