use std::io;

use thiserror::Error;

/// Errors raised by the inspection engine.
#[derive(Debug, Error)]
pub enum InspectError {
    /// Caller supplied arguments outside an operation's domain.
    #[error("usage error: {0}")]
    Usage(String),

    /// A referenced image, model, part or defect does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A detector backend failed or violated the wire protocol.
    #[error("backend error ({model_id}): {message}")]
    Backend {
        model_id: String,
        message: String,
        /// Offending payload, when the failure was caused by a response line.
        payload: Option<String>,
    },

    /// A backend failure while processing one slice of an image.
    #[error("slice ({row},{col}) of {image_id}: {source}")]
    Slice {
        image_id: String,
        row: u32,
        col: u32,
        #[source]
        source: Box<InspectError>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl InspectError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub(crate) fn lookup(msg: impl Into<String>) -> Self {
        Self::Lookup(msg.into())
    }

    pub(crate) fn backend(model_id: &str, message: impl Into<String>, payload: Option<String>) -> Self {
        Self::Backend {
            model_id: model_id.to_string(),
            message: message.into(),
            payload,
        }
    }
}

pub type Result<T, E = InspectError> = std::result::Result<T, E>;
