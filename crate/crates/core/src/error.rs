use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("scene contains no points")]
    EmptyScene,

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported version: expected magic {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: u64, needed: u64 },

    #[error("missing oracle data for view {view_id}, superpoint {sp_id}")]
    MissingOracleData { view_id: u32, sp_id: u32 },

    #[error("missing feature map for view {view_id}")]
    MissingFeatureMap { view_id: u32 },

    #[error("node {sp_id} has no feature vector")]
    MissingNodeFeature { sp_id: u32 },

    #[error("edge ({u}, {v}) has no SAM weight")]
    MissingEdgeWeight { u: u32, v: u32 },

    #[error("edge ({u}, {v}): {source}")]
    Edge {
        u: u32,
        v: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("graph has no edges usable for training")]
    NoTrainableEdges,

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("could not place {objects} objects without overlap after {attempts} attempts; try fewer objects")]
    Placement { objects: usize, attempts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn with_edge(self, u: u32, v: u32) -> Self {
        Error::Edge {
            u,
            v,
            source: Box::new(self),
        }
    }
}
