use std::path::PathBuf;

use fsc_core::cartpole::CartPoleError;
use fsc_core::exact::ExactError;
use fsc_core::graph::GraphError;
use fsc_core::learner::LearnError;
use fsc_core::pomdp::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid field `{field}`: {reason}")]
    Spec { field: &'static str, reason: String },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("learning: {0}")]
    Learn(#[from] LearnError),
    #[error("exact evaluation: {0}")]
    Exact(#[from] ExactError),
    #[error("cart-pole: {0}")]
    CartPole(#[from] CartPoleError),
}

impl HarnessError {
    pub(crate) fn spec(field: &'static str, reason: impl Into<String>) -> Self {
        Self::Spec {
            field,
            reason: reason.into(),
        }
    }
}
