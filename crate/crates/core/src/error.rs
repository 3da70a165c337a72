use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::bias::BiasError;
use crate::catalog::CatalogError;
use crate::events::EventError;
use crate::flow::FlowError;
use crate::geometry::GeometryError;
use crate::movement::MovementError;
use crate::report::ReportError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("event stream: {0}")]
    Stream(#[from] io::Error),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Movement(#[from] MovementError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no users entered the study: nothing classifiable in the initial window")]
    NoUsers,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
