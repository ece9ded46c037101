use std::path::PathBuf;

use thiserror::Error;

/// Location of a transform domain violation inside an ensemble update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSite {
    pub node: usize,
    pub t: usize,
    pub dim: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("graph is disconnected: node {from} cannot reach node {to} (1-based)", from = .from + 1, to = .to + 1)]
    Disconnected { from: usize, to: usize },

    #[error("self-loop on node {} in edge list", .0 + 1)]
    SelfLoop(usize),

    #[error("node {} out of range for graph of {n} nodes", .node + 1)]
    NodeOutOfRange { node: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("weight ({}, {}) is positive outside the closed neighborhood", .row + 1, .col + 1)]
    SupportViolation { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value {value} at index {index} is outside the transform domain{}", fmt_site(.site))]
    Domain {
        index: usize,
        value: f64,
        site: Option<DomainSite>,
    },

    #[error("iterate diverged at t = {t}: sup-norm {norm:e} exceeds guard")]
    Diverged { t: usize, norm: f64 },

    #[error("matrix is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("aggregate quadratic not strongly convex after {0} draws")]
    NotStronglyConvex(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty point set")]
    EmptyPointSet,

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_site(site: &Option<DomainSite>) -> String {
    match site {
        Some(s) => format!(" (node {}, t = {}, dim {})", s.node + 1, s.t, s.dim + 1),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach (node, t, dim) context to a bare domain error.
    pub fn at_site(self, node: usize, t: usize) -> Self {
        match self {
            Error::Domain {
                index,
                value,
                site: None,
            } => Error::Domain {
                index,
                value,
                site: Some(DomainSite {
                    node,
                    t,
                    dim: index,
                }),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
