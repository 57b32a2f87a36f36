use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use clonescope_core::reporter::{
    read_clone_set_lines, CloneSetDocument, SummaryDocument, CLONE_SET_LINES, SUMMARY_FILE,
};
use clonescope_core::SetKey;

/// Read-only analysis output loaded from an `analyze` directory.
#[derive(Debug)]
pub struct DataSet {
    /// `summary.json` exactly as written.
    pub summary_body: String,
    pub summary: SummaryDocument,
    /// Ranked.
    pub sets: Vec<CloneSetDocument>,
    by_key: HashMap<SetKey, usize>,
}

fn rank_docs(a: &CloneSetDocument, b: &CloneSetDocument) -> Ordering {
    b.thread_count
        .cmp(&a.thread_count)
        .then(b.nloc.cmp(&a.nloc))
        .then(a.key.fingerprint.cmp(&b.key.fingerprint))
        .then_with(|| a.content.cmp(&b.content))
        .then(a.key.disambiguator.cmp(&b.key.disambiguator))
}

impl DataSet {
    pub fn load(dir: &Path) -> clonescope_core::Result<Self> {
        let summary_path = dir.join(SUMMARY_FILE);
        let summary_body = std::fs::read_to_string(&summary_path)
            .map_err(|e| clonescope_core::Error::File {
                path: summary_path.clone(),
                source: e,
            })?;
        let summary: SummaryDocument = serde_json::from_str(&summary_body)?;
        let sets = read_clone_set_lines(&dir.join(CLONE_SET_LINES))?;
        Ok(Self::new(summary_body, summary, sets))
    }

    pub fn new(summary_body: String, summary: SummaryDocument, mut sets: Vec<CloneSetDocument>) -> Self {
        sets.sort_by(rank_docs);
        let by_key = sets.iter().enumerate().map(|(i, d)| (d.key, i)).collect();
        Self {
            summary_body,
            summary,
            sets,
            by_key,
        }
    }

    pub fn get(&self, key: SetKey) -> Option<&CloneSetDocument> {
        self.by_key.get(&key).map(|&i| &self.sets[i])
    }

    /// Smallest thread count the stored sets were selected with.
    pub fn min_threads_floor(&self) -> usize {
        self.summary.run.min_threads
    }

    pub fn filtered(&self, min_threads: usize, min_nloc: usize) -> impl Iterator<Item = &CloneSetDocument> {
        self.sets
            .iter()
            .filter(move |d| d.thread_count >= min_threads && d.nloc >= min_nloc)
    }
}
