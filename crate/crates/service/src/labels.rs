//! Append-only store of analyst labels.
//!
//! One JSON record per line. Records are only ever appended and each append
//! is synced to disk before it is acknowledged.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use clonescope_core::SetKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Suggested categories; any non-empty category is accepted.
pub const SEED_CATEGORIES: [&str; 6] = [
    "source_code",
    "configuration_file",
    "gui_definition",
    "data_example",
    "html",
    "non_code",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginVerdict {
    InternalOriginal,
    ExternalCopy,
    Undecided,
}

/// Label as submitted by an analyst.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelDraft {
    pub category: String,
    pub origin_verdict: OriginVerdict,
    pub license_conflict: bool,
    #[serde(default)]
    pub notes: String,
    pub analyst: String,
}

impl LabelDraft {
    pub fn validate(&self) -> Result<(), String> {
        if self.category.trim().is_empty() {
            return Err("category must not be empty".into());
        }
        if self.analyst.trim().is_empty() {
            return Err("analyst must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub fingerprint: SetKey,
    pub category: String,
    pub origin_verdict: OriginVerdict,
    pub license_conflict: bool,
    pub notes: String,
    pub analyst: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label store {}: record {record}: {reason}", path.display())]
    Corrupt {
        path: PathBuf,
        record: usize,
        reason: String,
    },
    #[error("invalid label: {0}")]
    Invalid(String),
    #[error("label store {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    labels: Vec<Label>,
}

impl LabelStore {
    /// Opens (creating if needed) the store and loads every record. Refuses
    /// to open a store with an unparseable or truncated record.
    pub fn open(path: &Path) -> Result<Self, LabelError> {
        let io = |source| LabelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let mut labels = Vec::new();
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let record = i + 1;
            let corrupt = |reason: String| LabelError::Corrupt {
                path: path.to_path_buf(),
                record,
                reason,
            };
            if !line.ends_with('\n') {
                return Err(corrupt("truncated record (no terminating newline)".into()));
            }
            let label: Label = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            labels.push(label);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            labels,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Stamps, appends and syncs a label. `created_at` never goes backwards
    /// within a store, even if the wall clock does.
    pub fn append(&mut self, fingerprint: SetKey, draft: LabelDraft) -> Result<Label, LabelError> {
        draft.validate().map_err(LabelError::Invalid)?;
        let now = Utc::now()
            .duration_trunc(TimeDelta::milliseconds(1))
            .unwrap_or_else(|_| Utc::now());
        let created_at = match self.labels.last() {
            Some(last) if last.created_at > now => last.created_at,
            _ => now,
        };
        let label = Label {
            fingerprint,
            category: draft.category,
            origin_verdict: draft.origin_verdict,
            license_conflict: draft.license_conflict,
            notes: draft.notes,
            analyst: draft.analyst,
            created_at,
        };
        let mut line = serde_json::to_vec(&label).expect("label serializes");
        line.push(b'\n');
        let io = |source| LabelError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.labels.push(label.clone());
        Ok(label)
    }

    /// All labels in append order, which is also `created_at` order.
    pub fn all(&self) -> &[Label] {
        &self.labels
    }

    pub fn for_set(&self, key: SetKey) -> Vec<Label> {
        self.labels
            .iter()
            .filter(|l| l.fingerprint == key)
            .cloned()
            .collect()
    }
}
