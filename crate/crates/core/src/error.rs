use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Position of a record inside an input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line number in a JSONL stream.
    Line(usize),
    /// 1-based ordinal of a `<row>` element in a Posts.xml stream.
    Row(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Row(n) => write!(f, "row {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{location}: {reason}")]
    Malformed { location: Location, reason: String },

    #[error("duplicate post_id {post_id} at {second} (first seen at {first})")]
    DuplicatePost {
        post_id: u64,
        first: Location,
        second: Location,
    },

    #[error("no post {0} for clone-set occurrence")]
    MissingPost(u64),

    #[error("fingerprint mismatch: clone set {set} vs origin report {origin}")]
    FingerprintMismatch { set: String, origin: String },

    #[error("rules file line {line}: {reason}")]
    Rules { line: usize, reason: String },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn malformed(location: Location, reason: impl Into<String>) -> Self {
        Error::Malformed {
            location,
            reason: reason.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
