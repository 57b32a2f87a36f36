//! Report files.
//!
//! Layout of an output directory:
//!
//! | file | contents |
//! |------|----------|
//! | `summary.json` | [`SummaryDocument`]: run metadata, every [`CloneStats`] field at full precision, a rounded block, and reference figures for full-dump comparison |
//! | `histogram.csv` | `thread_count,clone_set_count` rows, ascending thread count, no trailing newline |
//! | `clone-sets/<key>.json` | one [`CloneSetDocument`] per set passing both thresholds |
//! | `clone-sets.jsonl` | one [`CloneSetDocument`] per line for every set with at least `min_threads` threads, in rank order (the service's data source) |
//!
//! `<key>` is the 16-digit lowercase hex fingerprint, suffixed `-<n>` for the
//! rare sets split off by a fingerprint collision. All JSON is produced by
//! serde_json; floats are written with shortest round-trip precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloneindex::{CloneSet, CloneStats, Occurrence, SetKey};
use crate::corpus::InputFormat;
use crate::error::{Error, Result};
use crate::linkanalysis::{Attribution, ExternalCandidate, OriginReport, PostLinks, RuleTable};
use crate::normalizer::fingerprint_hex;
use crate::pipeline::{Analysis, Thresholds};
use crate::stats::{QUANTILE_CONVENTION, SD_CONVENTION};

pub const SUMMARY_SCHEMA: &str = "clonescope.summary/1";
pub const CLONE_SET_SCHEMA: &str = "clonescope.clone-set/1";
pub const HISTOGRAM_HEADER: &str = "thread_count,clone_set_count";

pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const CLONE_SET_DIR: &str = "clone-sets";
pub const CLONE_SET_LINES: &str = "clone-sets.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool_version: String,
    pub corpus_digest: String,
    pub input_format: InputFormat,
    pub min_nloc: usize,
    pub min_threads: usize,
    pub posts: usize,
    pub code_blocks: usize,
    pub empty_blocks: usize,
    pub sd_convention: String,
    pub quantile_convention: String,
}

impl RunInfo {
    pub fn for_analysis(analysis: &Analysis, thresholds: Thresholds) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            corpus_digest: analysis.corpus.digest.clone(),
            input_format: analysis.corpus.format,
            min_nloc: thresholds.min_nloc,
            min_threads: thresholds.min_threads,
            posts: analysis.counts.posts,
            code_blocks: analysis.counts.code_blocks,
            empty_blocks: analysis.index.empty_blocks(),
            sd_convention: SD_CONVENTION.to_string(),
            quantile_convention: QUANTILE_CONVENTION.to_string(),
        }
    }
}

/// Stats rounded the way they are usually quoted: one decimal for means and
/// SDs, plain numbers for medians and IQRs, percentages with one decimal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundedStats {
    pub cloned_fraction: Option<String>,
    pub nloc_mean: Option<String>,
    pub nloc_sd: Option<String>,
    pub nloc_median: Option<String>,
    pub nloc_iqr: Option<String>,
    pub thread_mean: Option<String>,
    pub thread_sd: Option<String>,
    pub thread_median: Option<String>,
    pub thread_iqr: Option<String>,
    pub pct_more_than_two_threads: Option<String>,
}

fn one_decimal(v: f64) -> String {
    format!("{v:.1}")
}

fn plain(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

pub fn percent(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

impl RoundedStats {
    pub fn from_stats(s: &CloneStats) -> Self {
        Self {
            cloned_fraction: s.cloned_fraction.map(percent),
            nloc_mean: s.nloc_mean.map(one_decimal),
            nloc_sd: s.nloc_sd.map(one_decimal),
            nloc_median: s.nloc_median.map(plain),
            nloc_iqr: s.nloc_iqr.map(plain),
            thread_mean: s.thread_mean.map(one_decimal),
            thread_sd: s.thread_sd.map(one_decimal),
            thread_median: s.thread_median.map(plain),
            thread_iqr: s.thread_iqr.map(plain),
            pct_more_than_two_threads: s.pct_more_than_two_threads.map(percent),
        }
    }
}

/// Figures measured on the complete Stack Overflow code-block corpus, for
/// side-by-side comparison when a full dump is analysed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub distinct_fingerprints: usize,
    pub cloned_fingerprints: usize,
    pub cloned_fraction: String,
    pub filtered_count_by_threshold: BTreeMap<usize, usize>,
    pub nloc_mean: f64,
    pub nloc_sd: f64,
    pub nloc_median: f64,
    pub nloc_iqr: f64,
    pub thread_mean: f64,
    pub thread_sd: f64,
    pub thread_median: f64,
    pub thread_iqr: f64,
    pub pct_more_than_two_threads: String,
}

impl ReferenceFigures {
    pub fn full_dump() -> Self {
        Self {
            distinct_fingerprints: 43_942_960,
            cloned_fingerprints: 909_323,
            cloned_fraction: "2.1%".into(),
            filtered_count_by_threshold: BTreeMap::from([(6, 215_746), (20, 46_818)]),
            nloc_mean: 42.6,
            nloc_sd: 37.7,
            nloc_median: 30.0,
            nloc_iqr: 22.0,
            thread_mean: 2.3,
            thread_sd: 1.1,
            thread_median: 2.0,
            thread_iqr: 0.0,
            pct_more_than_two_threads: "13.4%".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub schema: String,
    pub run: RunInfo,
    pub stats: CloneStats,
    pub rounded: RoundedStats,
    /// Reference values for the NLOC >= 20 filter on the full dump.
    pub reference: ReferenceFigures,
}

impl SummaryDocument {
    pub fn new(stats: CloneStats, run: RunInfo) -> Self {
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            rounded: RoundedStats::from_stats(&stats),
            run,
            stats,
            reference: ReferenceFigures::full_dump(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginEvidence {
    pub earliest_occurrence: Occurrence,
    pub external_candidates: Vec<ExternalCandidate>,
    pub same_author_chain: bool,
    pub chain_authors: Vec<i64>,
    pub evidence_scope: String,
}

/// Snippet-view payload for one clone set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneSetDocument {
    pub schema: String,
    pub key: SetKey,
    pub fingerprint: String,
    pub disambiguator: u32,
    pub content: String,
    pub nloc: usize,
    pub thread_count: usize,
    pub thread_ids: BTreeSet<u64>,
    pub occurrences: Vec<Occurrence>,
    pub post_links: Vec<PostLinks>,
    pub origin: OriginEvidence,
    pub attribution: BTreeMap<String, BTreeMap<u64, Attribution>>,
}

impl CloneSetDocument {
    pub fn new(set: &CloneSet, origin: &OriginReport) -> Result<Self> {
        if origin.clone_set != set.key() {
            return Err(Error::FingerprintMismatch {
                set: set.key().to_string(),
                origin: origin.clone_set.to_string(),
            });
        }
        Ok(Self {
            schema: CLONE_SET_SCHEMA.to_string(),
            key: set.key(),
            fingerprint: fingerprint_hex(set.fingerprint),
            disambiguator: set.disambiguator,
            content: set.content.clone(),
            nloc: set.nloc,
            thread_count: set.thread_count,
            thread_ids: set.thread_ids.clone(),
            occurrences: set.occurrences.clone(),
            post_links: origin.post_links.clone(),
            origin: OriginEvidence {
                earliest_occurrence: origin.earliest_occurrence.clone(),
                external_candidates: origin.external_candidates.clone(),
                same_author_chain: origin.same_author_chain,
                chain_authors: origin.chain_authors.clone(),
                evidence_scope: origin.evidence_scope.clone(),
            },
            attribution: origin.attribution.clone(),
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", self.key)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_summary(stats: &CloneStats, run: &RunInfo, path: &Path) -> Result<SummaryDocument> {
    let doc = SummaryDocument::new(stats.clone(), run.clone());
    write_bytes(path, &to_pretty_json(&doc)?)?;
    Ok(doc)
}

pub fn histogram_csv(stats: &CloneStats) -> String {
    let mut out = String::from(HISTOGRAM_HEADER);
    for (threads, count) in &stats.thread_count_histogram {
        out.push('\n');
        out.push_str(&format!("{threads},{count}"));
    }
    out
}

pub fn write_histogram(stats: &CloneStats, path: &Path) -> Result<()> {
    write_bytes(path, histogram_csv(stats).as_bytes())
}

pub fn parse_histogram_csv(text: &str) -> Option<BTreeMap<usize, usize>> {
    let mut lines = text.lines();
    if lines.next()? != HISTOGRAM_HEADER {
        return None;
    }
    lines
        .map(|l| {
            let (a, b) = l.split_once(',')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

pub fn export_clone_set(set: &CloneSet, origin: &OriginReport, path: &Path) -> Result<CloneSetDocument> {
    let doc = CloneSetDocument::new(set, origin)?;
    write_bytes(path, &to_pretty_json(&doc)?)?;
    Ok(doc)
}

#[derive(Debug, Clone)]
pub struct WrittenReport {
    pub summary: SummaryDocument,
    pub exported_sets: usize,
    pub persisted_sets: usize,
    pub out_dir: PathBuf,
}

/// Writes the full report layout under `out_dir`.
pub fn write_report(
    analysis: &Analysis,
    thresholds: Thresholds,
    rules: &RuleTable,
    out_dir: &Path,
) -> Result<WrittenReport> {
    let set_dir = out_dir.join(CLONE_SET_DIR);
    fs::create_dir_all(&set_dir).map_err(|e| Error::file(&set_dir, e))?;

    let stats = analysis
        .index
        .corpus_stats(thresholds.min_nloc, thresholds.min_threads);
    let run = RunInfo::for_analysis(analysis, thresholds);
    let summary = write_summary(&stats, &run, &out_dir.join(SUMMARY_FILE))?;
    write_histogram(&stats, &out_dir.join(HISTOGRAM_FILE))?;

    let persisted = analysis.index.clone_sets(thresholds.min_threads, 0);
    let with_origin = analysis.origins(&persisted, rules)?;

    let lines_path = out_dir.join(CLONE_SET_LINES);
    let file = fs::File::create(&lines_path).map_err(|e| Error::file(&lines_path, e))?;
    let mut lines = BufWriter::new(file);
    let mut exported = 0;
    for (set, origin) in &with_origin {
        let doc = CloneSetDocument::new(set, origin)?;
        serde_json::to_writer(&mut lines, &doc)?;
        lines.write_all(b"\n").map_err(|e| Error::file(&lines_path, e))?;
        if set.nloc >= thresholds.min_nloc {
            write_bytes(&set_dir.join(doc.file_name()), &to_pretty_json(&doc)?)?;
            exported += 1;
        }
    }
    lines.flush().map_err(|e| Error::file(&lines_path, e))?;

    Ok(WrittenReport {
        summary,
        exported_sets: exported,
        persisted_sets: with_origin.len(),
        out_dir: out_dir.to_path_buf(),
    })
}

pub fn read_summary(path: &Path) -> Result<SummaryDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_clone_set_lines(path: &Path) -> Result<Vec<CloneSetDocument>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
