//! Clone sets keyed by alphanumeric projection.
//!
//! The 64-bit fingerprint only buckets candidates; membership in a set is
//! decided by projection equality, so two projections that collide on the
//! fingerprint become separate sets told apart by a disambiguator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::normalizer::{fingerprint_hex, parse_fingerprint_hex, NormalizedSnippet};
use crate::stats;

/// NLOC thresholds always reported alongside the configured one.
pub const REPORTED_NLOC_THRESHOLDS: [usize; 2] = [6, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub post_id: u64,
    pub thread_id: u64,
    pub block_index: usize,
    pub creation_date: DateTime<Utc>,
    pub author_id: Option<i64>,
}

impl Occurrence {
    fn order_key(&self) -> (DateTime<Utc>, u64, usize) {
        (self.creation_date, self.post_id, self.block_index)
    }
}

/// Identity of a clone set: its fingerprint plus a collision disambiguator,
/// which is 0 unless another projection shares the fingerprint.
///
/// Wire form is the 16-digit hex fingerprint, suffixed with `-<n>` when the
/// disambiguator is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetKey {
    pub fingerprint: u64,
    pub disambiguator: u32,
}

impl fmt::Display for SetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fingerprint_hex(self.fingerprint))?;
        if self.disambiguator != 0 {
            write!(f, "-{}", self.disambiguator)?;
        }
        Ok(())
    }
}

impl FromStr for SetKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (hex, dis) = match s.split_once('-') {
            Some((hex, n)) => {
                let n: u32 = n
                    .parse()
                    .ok()
                    .filter(|&n| n != 0)
                    .ok_or_else(|| format!("bad disambiguator in {s:?}"))?;
                (hex, n)
            }
            None => (s, 0),
        };
        let fingerprint = parse_fingerprint_hex(hex)
            .ok_or_else(|| format!("{s:?} is not a 16-digit lowercase hex fingerprint"))?;
        if hex.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(format!("{s:?} is not a 16-digit lowercase hex fingerprint"));
        }
        Ok(SetKey {
            fingerprint,
            disambiguator: dis,
        })
    }
}

impl Serialize for SetKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SetKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloneSet {
    pub fingerprint: u64,
    pub disambiguator: u32,
    /// Normalized content of the earliest occurrence.
    pub content: String,
    pub nloc: usize,
    pub projection: String,
    /// Sorted by creation date, then post id, then block index.
    pub occurrences: Vec<Occurrence>,
    pub thread_ids: BTreeSet<u64>,
    pub thread_count: usize,
}

impl CloneSet {
    pub fn key(&self) -> SetKey {
        SetKey {
            fingerprint: self.fingerprint,
            disambiguator: self.disambiguator,
        }
    }
}

/// Ranking order: more threads first, then longer snippets, then ascending
/// fingerprint and content.
pub fn rank_order(a: &CloneSet, b: &CloneSet) -> Ordering {
    b.thread_count
        .cmp(&a.thread_count)
        .then(b.nloc.cmp(&a.nloc))
        .then(a.fingerprint.cmp(&b.fingerprint))
        .then_with(|| a.content.cmp(&b.content))
        .then(a.disambiguator.cmp(&b.disambiguator))
}

pub fn rank(sets: &mut [CloneSet]) {
    sets.sort_by(rank_order);
}

#[derive(Debug, Clone)]
struct Group {
    projection: String,
    representative: (DateTime<Utc>, u64, usize),
    content: String,
    nloc: usize,
    occurrences: Vec<Occurrence>,
}

/// Accumulates snippets into projection groups. Builders over disjoint
/// partitions of a corpus can be merged in any order; `finish` produces the
/// same index regardless.
#[derive(Debug, Clone, Default)]
pub struct IndexBuilder {
    buckets: HashMap<u64, Vec<Group>>,
    empty_blocks: usize,
}

impl IndexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, occurrence: Occurrence, snippet: NormalizedSnippet) {
        if snippet.nloc == 0 {
            self.empty_blocks += 1;
            return;
        }
        let key = occurrence.order_key();
        let bucket = self.buckets.entry(snippet.fingerprint).or_default();
        match bucket.iter_mut().find(|g| g.projection == snippet.projection) {
            Some(group) => {
                if key < group.representative {
                    group.representative = key;
                    group.content = snippet.content;
                    group.nloc = snippet.nloc;
                }
                group.occurrences.push(occurrence);
            }
            None => bucket.push(Group {
                projection: snippet.projection,
                representative: key,
                content: snippet.content,
                nloc: snippet.nloc,
                occurrences: vec![occurrence],
            }),
        }
    }

    pub fn merge(mut self, other: IndexBuilder) -> IndexBuilder {
        self.empty_blocks += other.empty_blocks;
        for (fp, groups) in other.buckets {
            let bucket = self.buckets.entry(fp).or_default();
            for g in groups {
                match bucket.iter_mut().find(|mine| mine.projection == g.projection) {
                    Some(mine) => {
                        if g.representative < mine.representative {
                            mine.representative = g.representative;
                            mine.content = g.content;
                            mine.nloc = g.nloc;
                        }
                        mine.occurrences.extend(g.occurrences);
                    }
                    None => bucket.push(g),
                }
            }
        }
        self
    }

    pub fn finish(self) -> CloneIndex {
        let mut sets = Vec::new();
        for (fingerprint, mut groups) in self.buckets {
            groups.sort_by(|a, b| a.projection.cmp(&b.projection));
            if groups.len() > 1 {
                tracing::debug!(
                    fingerprint = %fingerprint_hex(fingerprint),
                    projections = groups.len(),
                    "fingerprint collision split by projection"
                );
            }
            for (i, mut g) in groups.into_iter().enumerate() {
                g.occurrences.sort_by_key(Occurrence::order_key);
                let thread_ids: BTreeSet<u64> =
                    g.occurrences.iter().map(|o| o.thread_id).collect();
                sets.push(CloneSet {
                    fingerprint,
                    disambiguator: i as u32,
                    content: g.content,
                    nloc: g.nloc,
                    projection: g.projection,
                    occurrences: g.occurrences,
                    thread_count: thread_ids.len(),
                    thread_ids,
                });
            }
        }
        rank(&mut sets);
        let by_key = sets.iter().enumerate().map(|(i, s)| (s.key(), i)).collect();
        CloneIndex {
            sets,
            by_key,
            empty_blocks: self.empty_blocks,
        }
    }
}

/// Finalized, immutable clone index. Sets are held in rank order.
#[derive(Debug, Clone, Default)]
pub struct CloneIndex {
    sets: Vec<CloneSet>,
    by_key: HashMap<SetKey, usize>,
    empty_blocks: usize,
}

pub fn build_index<I>(snippets: I) -> CloneIndex
where
    I: IntoIterator<Item = (Occurrence, NormalizedSnippet)>,
{
    let mut builder = IndexBuilder::new();
    for (occ, snip) in snippets {
        builder.insert(occ, snip);
    }
    builder.finish()
}

impl CloneIndex {
    /// Every set, ranked.
    pub fn sets(&self) -> &[CloneSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, key: SetKey) -> Option<&CloneSet> {
        self.by_key.get(&key).map(|&i| &self.sets[i])
    }

    /// Blocks dropped because they normalized to nothing.
    pub fn empty_blocks(&self) -> usize {
        self.empty_blocks
    }

    pub fn occurrence_count(&self) -> usize {
        self.sets.iter().map(|s| s.occurrences.len()).sum()
    }

    /// Sets with at least `min_threads` distinct threads and `min_nloc`
    /// normalized lines, ranked.
    pub fn clone_sets(&self, min_threads: usize, min_nloc: usize) -> Vec<&CloneSet> {
        self.sets
            .iter()
            .filter(|s| s.thread_count >= min_threads && s.nloc >= min_nloc)
            .collect()
    }

    pub fn corpus_stats(&self, min_nloc: usize, min_threads: usize) -> CloneStats {
        let distinct = self.sets.len();
        let cloned = self.sets.iter().filter(|s| s.thread_count >= 2).count();

        let mut thresholds: BTreeSet<usize> = REPORTED_NLOC_THRESHOLDS.into_iter().collect();
        thresholds.insert(min_nloc);
        let filtered_count_by_threshold = thresholds
            .into_iter()
            .map(|t| (t, self.clone_sets(min_threads, t).len()))
            .collect();

        let filtered = self.clone_sets(min_threads, min_nloc);
        let nlocs: Vec<f64> = filtered.iter().map(|s| s.nloc as f64).collect();
        let threads: Vec<f64> = filtered.iter().map(|s| s.thread_count as f64).collect();
        let nloc_summary = stats::describe(&nlocs);
        let thread_summary = stats::describe(&threads);

        let mut thread_count_histogram = BTreeMap::new();
        for s in &filtered {
            *thread_count_histogram.entry(s.thread_count).or_insert(0) += 1;
        }
        let more_than_two = filtered.iter().filter(|s| s.thread_count > 2).count();

        CloneStats {
            distinct_fingerprints: distinct,
            cloned_fingerprints: cloned,
            cloned_fraction: (distinct > 0).then(|| cloned as f64 / distinct as f64),
            filtered_count_by_threshold,
            nloc_mean: nloc_summary.map(|s| s.mean),
            nloc_sd: nloc_summary.and_then(|s| s.sd),
            nloc_median: nloc_summary.map(|s| s.median),
            nloc_iqr: nloc_summary.map(|s| s.iqr),
            thread_mean: thread_summary.map(|s| s.mean),
            thread_sd: thread_summary.and_then(|s| s.sd),
            thread_median: thread_summary.map(|s| s.median),
            thread_iqr: thread_summary.map(|s| s.iqr),
            pct_more_than_two_threads: (!filtered.is_empty())
                .then(|| more_than_two as f64 / filtered.len() as f64),
            thread_count_histogram,
        }
    }
}

/// Corpus-level duplication metrics. Distribution fields are `None` when no
/// set passes the filter; `pct_more_than_two_threads` is a fraction in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneStats {
    pub distinct_fingerprints: usize,
    pub cloned_fingerprints: usize,
    pub cloned_fraction: Option<f64>,
    pub filtered_count_by_threshold: BTreeMap<usize, usize>,
    pub nloc_mean: Option<f64>,
    pub nloc_sd: Option<f64>,
    pub nloc_median: Option<f64>,
    pub nloc_iqr: Option<f64>,
    pub thread_mean: Option<f64>,
    pub thread_sd: Option<f64>,
    pub thread_median: Option<f64>,
    pub thread_iqr: Option<f64>,
    pub pct_more_than_two_threads: Option<f64>,
    pub thread_count_histogram: BTreeMap<usize, usize>,
}
