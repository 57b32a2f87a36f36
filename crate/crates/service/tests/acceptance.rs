//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.
//!
//! Expected values come from independent sources: the planting manifest
//! written by `scripts/gen_planted.py`, the `fnv` crate, and brute-force or
//! textbook re-implementations inside this file.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hasher;
use std::io::{BufRead, BufReader, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use clonescope_core::cloneindex::{build_index, CloneIndex, Occurrence};
use clonescope_core::corpus::{InputFormat, Markup, Post, PostType};
use clonescope_core::linkanalysis::Attribution;
use clonescope_core::normalizer::{fingerprint_hex, fnv1a64, normalize, normalize_text};
use clonescope_core::pipeline::{Analysis, Corpus};
use clonescope_core::reporter::{
    parse_histogram_csv, read_clone_set_lines, read_summary, CloneSetDocument, SummaryDocument,
    CLONE_SET_DIR, CLONE_SET_LINES, HISTOGRAM_FILE, SUMMARY_FILE,
};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_clonescope");
const RUNTIME_LIMIT: Duration = Duration::from_secs(5);
const REL_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

// ---------------------------------------------------------------------------
// independent helpers

/// Line-oriented normalization written from the rules, not from the crate.
fn oracle_normalize(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    unified
        .split('\n')
        .map(|l| l.trim_end())
        .filter(|l| l.chars().any(|c| !c.is_whitespace() && !"()[]{}".contains(c)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn oracle_projection(raw: &str) -> String {
    oracle_normalize(raw).chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

fn fnv_reference(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= REL_TOL * want.abs().max(1.0)
}

fn close_opt(got: Option<f64>, want: Option<f64>) -> bool {
    match (got, want) {
        (None, None) => true,
        (Some(g), Some(w)) => close(g, w),
        _ => false,
    }
}

fn run_analyze(input: &Path, format: &str, out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let output = Command::new(BIN)
        .args(["analyze", "--format", format, "--input"])
        .arg(input)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| format!("spawning analyze: {e}"))?;
    let elapsed = start.elapsed();
    ensure!(
        output.status.success(),
        "analyze failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    Ok(elapsed)
}

// ---------------------------------------------------------------------------
// planted corpus

struct PlantedRun {
    format: &'static str,
    elapsed: Duration,
    out: tempfile::TempDir,
    summary: SummaryDocument,
    docs: Vec<CloneSetDocument>,
}

struct Planted {
    expected: Value,
    runs: Vec<PlantedRun>,
}

fn planted() -> Result<&'static Planted, String> {
    static PLANTED: OnceLock<Result<Planted, String>> = OnceLock::new();
    PLANTED
        .get_or_init(|| {
            let dir = data_dir();
            let text = std::fs::read_to_string(dir.join("planted_expected.json"))
                .map_err(|e| format!("reading manifest: {e}"))?;
            let expected: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let mut runs = Vec::new();
            for (file, format) in [("planted.jsonl", "jsonl"), ("planted.xml", "se_xml")] {
                let out = tempfile::tempdir().map_err(|e| e.to_string())?;
                let elapsed = run_analyze(&dir.join(file), format, out.path())?;
                let summary = read_summary(&out.path().join(SUMMARY_FILE)).map_err(|e| e.to_string())?;
                let docs = read_clone_set_lines(&out.path().join(CLONE_SET_LINES)).map_err(|e| e.to_string())?;
                runs.push(PlantedRun {
                    format,
                    elapsed,
                    out,
                    summary,
                    docs,
                });
            }
            Ok(Planted { expected, runs })
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn post_set(doc: &CloneSetDocument) -> BTreeSet<u64> {
    doc.occurrences.iter().map(|o| o.post_id).collect()
}

/// Maps each persisted clone set to its planted group label.
fn label_docs<'a>(expected: &Value, docs: &'a [CloneSetDocument]) -> Result<Vec<(String, &'a CloneSetDocument)>, String> {
    let groups = expected["groups"].as_object().ok_or("manifest without groups")?;
    let by_posts: HashMap<BTreeSet<u64>, &str> = groups
        .iter()
        .map(|(label, g)| {
            let posts = g["post_ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            (posts, label.as_str())
        })
        .collect();
    docs.iter()
        .map(|d| {
            by_posts
                .get(&post_set(d))
                .map(|l| (l.to_string(), d))
                .ok_or_else(|| format!("clone set {} (posts {:?}) was not planted", d.key, post_set(d)))
        })
        .collect()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

fn check_planted_run(expected: &Value, run: &PlantedRun) -> Result<(), String> {
    let fmt = run.format;
    ensure!(run.elapsed < RUNTIME_LIMIT, "{fmt}: end-to-end run took {:?}", run.elapsed);
    let labelled = label_docs(expected, &run.docs)?;
    let groups = &expected["groups"];

    for (label, doc) in &labelled {
        let g = &groups[label];
        ensure!(doc.nloc as u64 == g["nloc"].as_u64().unwrap(), "{fmt}: {label} nloc {} != {}", doc.nloc, g["nloc"]);
        ensure!(
            doc.thread_count as u64 == g["thread_count"].as_u64().unwrap(),
            "{fmt}: {label} thread_count {} != {}",
            doc.thread_count,
            g["thread_count"]
        );
        ensure!(
            doc.occurrences.len() as u64 == g["occurrences"].as_u64().unwrap(),
            "{fmt}: {label} occurrences {} != {}",
            doc.occurrences.len(),
            g["occurrences"]
        );
    }

    let order: Vec<String> = labelled.iter().map(|(l, _)| l.clone()).collect();
    for min_nloc in [0usize, 6, 20] {
        let want = strings(&expected[format!("ranked_min_nloc_{min_nloc}")]);
        let got: Vec<String> = labelled
            .iter()
            .filter(|(_, d)| d.nloc >= min_nloc)
            .map(|(l, _)| l.clone())
            .collect();
        ensure!(got == want, "{fmt}: ranking at min_nloc {min_nloc}: {got:?} != {want:?}");
    }
    ensure!(
        order.iter().collect::<BTreeSet<_>>().len() == order.len(),
        "{fmt}: a planted group was split into several sets"
    );

    let s = &run.summary.stats;
    let num = |k: &str| expected[k].as_u64().unwrap() as usize;
    ensure!(run.summary.run.posts == num("posts"), "{fmt}: posts {} != {}", run.summary.run.posts, num("posts"));
    ensure!(
        s.distinct_fingerprints == num("distinct_fingerprints"),
        "{fmt}: distinct {} != {}",
        s.distinct_fingerprints,
        num("distinct_fingerprints")
    );
    ensure!(
        s.cloned_fingerprints == num("cloned_fingerprints"),
        "{fmt}: cloned {} != {}",
        s.cloned_fingerprints,
        num("cloned_fingerprints")
    );
    ensure!(
        close_opt(s.cloned_fraction, expected["cloned_fraction"].as_f64()),
        "{fmt}: cloned_fraction {:?} != {}",
        s.cloned_fraction,
        expected["cloned_fraction"]
    );
    let want_counts: BTreeMap<usize, usize> = [
        (6, expected["ranked_min_nloc_6"].as_array().unwrap().len()),
        (20, expected["ranked_min_nloc_20"].as_array().unwrap().len()),
    ]
    .into();
    ensure!(
        s.filtered_count_by_threshold == want_counts,
        "{fmt}: filtered counts {:?} != {want_counts:?}",
        s.filtered_count_by_threshold
    );

    let want_hist: BTreeMap<usize, usize> = expected["histogram_min_nloc_20"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.parse().unwrap(), v.as_u64().unwrap() as usize))
        .collect();
    ensure!(s.thread_count_histogram == want_hist, "{fmt}: histogram {:?} != {want_hist:?}", s.thread_count_histogram);
    let csv = std::fs::read_to_string(run.out.path().join(HISTOGRAM_FILE)).map_err(|e| e.to_string())?;
    ensure!(parse_histogram_csv(&csv) == Some(want_hist), "{fmt}: histogram.csv disagrees: {csv:?}");

    for (prefix, fields) in [
        ("nloc", [s.nloc_mean, s.nloc_sd, s.nloc_median, s.nloc_iqr]),
        ("thread", [s.thread_mean, s.thread_sd, s.thread_median, s.thread_iqr]),
    ] {
        let want = &expected[format!("{prefix}_stats_min_nloc_20")];
        for (name, got) in ["mean", "sd", "median", "iqr"].iter().zip(fields) {
            ensure!(close_opt(got, want[name].as_f64()), "{fmt}: {prefix} {name} {got:?} != {}", want[name]);
        }
    }
    ensure!(
        close_opt(s.pct_more_than_two_threads, expected["pct_more_than_two_threads_min_nloc_20"].as_f64()),
        "{fmt}: pct_more_than_two_threads {:?}",
        s.pct_more_than_two_threads
    );

    // one exported document per set passing both thresholds
    let exported: BTreeSet<String> = std::fs::read_dir(run.out.path().join(CLONE_SET_DIR))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let want_files: BTreeSet<String> = labelled
        .iter()
        .filter(|(_, d)| d.nloc >= 20)
        .map(|(_, d)| d.file_name())
        .collect();
    ensure!(exported == want_files, "{fmt}: exported {exported:?} != {want_files:?}");
    Ok(())
}

fn planted_exactness() -> Outcome {
    let p = planted()?;
    let mut details = Vec::new();
    for run in &p.runs {
        check_planted_run(&p.expected, run)?;
        details.push(format!("{} {} sets in {:.2}s", run.format, run.docs.len(), run.elapsed.as_secs_f64()));
    }
    Ok(details.join(", "))
}

const QA_INTERNAL: [&str; 2] = ["stackoverflow.com", "stackexchange.com"];

fn planted_links(expected: &Value, key: &str) -> BTreeMap<u64, Vec<String>> {
    expected[key]
        .as_object()
        .map(|m| m.iter().map(|(k, v)| (k.parse().unwrap(), strings(v))).collect())
        .unwrap_or_default()
}

fn attribution_correctness() -> Outcome {
    let p = planted()?;
    let rule_links = planted_links(&p.expected, "rule_links");
    let unlisted = planted_links(&p.expected, "unlisted_links");
    let classes: BTreeMap<&str, &str> = [
        ("androidhive.info", "tutorial_site"),
        ("developer.android.com", "reference_doc"),
        ("github.com", "code_host"),
        ("someblog.example.net", "unknown"),
    ]
    .into();
    let target = &p.expected["attribution_45"];
    let mut decisions = 0;
    let mut shape = String::new();

    for run in &p.runs {
        let fmt = run.format;
        for (label, doc) in label_docs(&p.expected, &run.docs)? {
            let posts = post_set(doc);
            // domain -> posts planted with a citation of it
            let mut want: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
            for &id in &posts {
                let cited = rule_links.get(&id).into_iter().chain(unlisted.get(&id)).flatten();
                for domain in cited.filter(|d| !QA_INTERNAL.contains(&d.as_str())) {
                    want.entry(domain.clone()).or_default().insert(id);
                }
            }
            let got_domains: BTreeSet<&String> = doc.attribution.keys().collect();
            ensure!(
                got_domains == want.keys().collect(),
                "{fmt}: {label} candidates {got_domains:?} != planted {:?}",
                want.keys().collect::<Vec<_>>()
            );
            for (domain, per_post) in &doc.attribution {
                ensure!(
                    per_post.keys().copied().collect::<BTreeSet<_>>() == posts,
                    "{fmt}: {label}/{domain} does not cover every post"
                );
                for (id, status) in per_post {
                    let planted = want[domain].contains(id);
                    let expect = if planted { Attribution::Attributed } else { Attribution::Unattributed };
                    ensure!(*status == expect, "{fmt}: {label} post {id} {domain}: {status:?}, planted link: {planted}");
                    decisions += 1;
                }
            }
            for c in &doc.origin.external_candidates {
                let class = serde_json::to_value(c.source_class).unwrap();
                ensure!(
                    classes.get(c.domain.as_str()).map(|s| json!(s)) == Some(class.clone()),
                    "{fmt}: {label} {} classified {class}",
                    c.domain
                );
                ensure!(c.citing_posts == want[&c.domain].len(), "{fmt}: {label} {} citing count", c.domain);
            }
            // internal links land in the internal bucket of their post
            for pl in &doc.post_links {
                let planted_internal = rule_links
                    .get(&pl.post_id)
                    .is_some_and(|d| d.iter().any(|d| QA_INTERNAL.contains(&d.as_str())));
                ensure!(
                    planted_internal == !pl.internal.is_empty(),
                    "{fmt}: {label} post {} internal links {:?}",
                    pl.post_id,
                    pl.internal
                );
            }
            let chain = p.expected["groups"][&label]["same_author_chain"].as_bool().unwrap();
            ensure!(doc.origin.same_author_chain == chain, "{fmt}: {label} same_author_chain != {chain}");

            if label == target["group"].as_str().unwrap() {
                let per_post = doc
                    .attribution
                    .get(target["domain"].as_str().unwrap())
                    .ok_or_else(|| format!("{fmt}: {label} lacks the planted candidate"))?;
                let attributed = per_post.values().filter(|s| **s == Attribution::Attributed).count();
                ensure!(
                    attributed as u64 == target["attributed"].as_u64().unwrap()
                        && per_post.len() as u64 == target["posts"].as_u64().unwrap(),
                    "{fmt}: {label} shape {attributed}/{}",
                    per_post.len()
                );
                shape = format!("{label} {attributed}/{} via {}", per_post.len(), target["domain"].as_str().unwrap());
            }
        }
    }
    ensure!(!shape.is_empty(), "target group was not persisted");
    Ok(format!("{decisions} per-post statuses checked; {shape}"))
}

// ---------------------------------------------------------------------------
// random corpora

fn date(offset_hours: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2014, 3, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(offset_hours)
}

struct Block {
    post_id: u64,
    block_index: usize,
    thread: u64,
    created: DateTime<Utc>,
    raw: String,
}

/// Posts holding the given blocks inside fences; one code-free question per
/// thread. Blocks sharing a post id must be consecutive.
fn corpus_of(blocks: &[Block]) -> Corpus {
    let mut posts: Vec<Post> = Vec::new();
    let threads: BTreeSet<u64> = blocks.iter().map(|b| b.thread).collect();
    for &t in &threads {
        posts.push(Post {
            post_id: t,
            post_type: PostType::Question,
            parent_id: None,
            thread_id: t,
            creation_date: date(0),
            author_id: None,
            score: None,
            body: "how?".into(),
            markup: Markup::Markdown,
        });
    }
    for b in blocks {
        let fence = format!("```\n{}\n```", b.raw);
        match posts.last_mut() {
            Some(p) if p.post_id == b.post_id => {
                p.body.push_str("\n\nand\n\n");
                p.body.push_str(&fence);
            }
            _ => posts.push(Post {
                post_id: b.post_id,
                post_type: PostType::Answer,
                parent_id: Some(b.thread),
                thread_id: b.thread,
                creation_date: b.created,
                author_id: None,
                score: None,
                body: format!("try\n\n{fence}"),
                markup: Markup::Markdown,
            }),
        }
    }
    Corpus::from_posts(posts, "sha256:test".into(), InputFormat::Jsonl)
}

const TOKENS: &[&str] = &[
    "a", "b", "B", "7", "x1", "();", "=", ";", "{", "}", "[ ]", "( )", " ", "\t", "\n", "\n", "\r\n", "\r", "é",
    "\u{3000}", "\n\n",
];

fn random_raw(rng: &mut StdRng, max_tokens: usize) -> String {
    let n = rng.random_range(0..=max_tokens);
    (0..n).map(|_| TOKENS[rng.random_range(0..TOKENS.len())]).collect()
}

/// Reformats without touching alphanumerics: bracket lines, blank lines,
/// trailing blanks, CRLF.
fn reformat(rng: &mut StdRng, raw: &str) -> String {
    let mut out = String::new();
    if rng.random_bool(0.3) {
        out.push_str("{\n");
    }
    for line in raw.split('\n') {
        out.push_str(line);
        if rng.random_bool(0.3) {
            out.push_str("  \t");
        }
        out.push_str(if rng.random_bool(0.2) { "\r\n" } else { "\n" });
        if rng.random_bool(0.2) {
            out.push_str(["}", "", "  ]);", "   "][rng.random_range(0..4)]);
            out.push('\n');
        }
    }
    out
}

fn random_blocks(rng: &mut StdRng, max_blocks: usize, max_tokens: usize) -> Vec<Block> {
    let n = rng.random_range(0..=max_blocks);
    let threads = rng.random_range(1..=6u64);
    let mut blocks: Vec<Block> = Vec::with_capacity(n);
    let mut next_post = 100;
    for _ in 0..n {
        let raw = if !blocks.is_empty() && rng.random_bool(0.5) {
            let src = &blocks[rng.random_range(0..blocks.len())].raw;
            if rng.random_bool(0.5) { src.clone() } else { reformat(rng, src) }
        } else {
            random_raw(rng, max_tokens)
        };
        let same_post = !blocks.is_empty() && rng.random_bool(0.15);
        let (post_id, block_index, thread, created) = if same_post {
            let last = blocks.last().unwrap();
            (last.post_id, last.block_index + 1, last.thread, last.created)
        } else {
            next_post += 1;
            (next_post, 0, rng.random_range(1..=threads), date(rng.random_range(1..200)))
        };
        blocks.push(Block {
            post_id,
            block_index,
            thread,
            created,
            raw,
        });
    }
    blocks
}

type SetView = (String, BTreeSet<(u64, usize)>, usize, String, usize);

/// All-pairs grouping by projection equality.
fn oracle_sets(blocks: &[Block]) -> BTreeSet<SetView> {
    let kept: Vec<(&Block, String)> = blocks
        .iter()
        .filter(|b| !oracle_normalize(&b.raw).is_empty())
        .map(|b| (b, oracle_projection(&b.raw)))
        .collect();
    let mut assigned = vec![false; kept.len()];
    let mut sets = BTreeSet::new();
    for i in 0..kept.len() {
        if assigned[i] {
            continue;
        }
        let mut members = Vec::new();
        for j in i..kept.len() {
            if kept[j].1 == kept[i].1 {
                assigned[j] = true;
                members.push(kept[j].0);
            }
        }
        let threads: BTreeSet<u64> = members.iter().map(|b| b.thread).collect();
        let first = members
            .iter()
            .min_by_key(|b| (b.created, b.post_id, b.block_index))
            .unwrap();
        let content = oracle_normalize(&first.raw);
        let nloc = content.split('\n').count();
        sets.insert((
            kept[i].1.clone(),
            members.iter().map(|b| (b.post_id, b.block_index)).collect(),
            threads.len(),
            content,
            nloc,
        ));
    }
    sets
}

fn index_view(idx: &CloneIndex) -> BTreeSet<SetView> {
    idx.sets()
        .iter()
        .map(|s| {
            (
                s.projection.clone(),
                s.occurrences.iter().map(|o| (o.post_id, o.block_index)).collect(),
                s.thread_count,
                s.content.clone(),
                s.nloc,
            )
        })
        .collect()
}

fn ranked_properly(idx: &CloneIndex) -> bool {
    let rank = |s: &clonescope_core::CloneSet| {
        (Reverse(s.thread_count), Reverse(s.nloc), s.fingerprint, s.content.clone(), s.disambiguator)
    };
    idx.sets().windows(2).all(|w| rank(&w[0]) < rank(&w[1]))
}

fn oracle_equivalence() -> Outcome {
    const CORPORA: usize = 1000;
    let mut rng = StdRng::seed_from_u64(0x0c10_e5e7);
    let (mut blocks_seen, mut multi) = (0, 0);
    for case in 0..CORPORA {
        let blocks = random_blocks(&mut rng, 50, 10);
        blocks_seen += blocks.len();
        let want = oracle_sets(&blocks);
        multi += want.iter().filter(|s| s.1.len() > 1).count();

        let analysis = Analysis::run(corpus_of(&blocks));
        ensure!(index_view(&analysis.index) == want, "corpus {case}: pipeline disagrees with oracle");
        ensure!(ranked_properly(&analysis.index), "corpus {case}: ranking violated");

        // the same blocks with fingerprints squeezed into three buckets
        let forged = build_index(blocks.iter().map(|b| {
            let mut s = normalize_text(&b.raw);
            s.fingerprint %= 3;
            let o = Occurrence {
                post_id: b.post_id,
                thread_id: b.thread,
                block_index: b.block_index,
                creation_date: b.created,
                author_id: None,
            };
            (o, s)
        }));
        ensure!(index_view(&forged) == want, "corpus {case}: colliding fingerprints merged distinct sets");
        ensure!(ranked_properly(&forged), "corpus {case}: ranking violated under collisions");
    }
    Ok(format!("{CORPORA} corpora, {blocks_seen} blocks, {multi} multi-occurrence sets; forced collisions included"))
}

fn normalization_fuzz() -> Outcome {
    const INPUTS: usize = 12_000;
    let mut rng = StdRng::seed_from_u64(0xf0221);
    let mut violations: Vec<String> = Vec::new();
    let mut kinds = BTreeMap::<&str, usize>::new();
    for i in 0..INPUTS {
        let (kind, raw) = match i % 6 {
            0 => ("empty-ish", ["", "\n", "\r\n", "\r", "  \n\t\n", "\u{3000}"][i / 6 % 6].to_string()),
            1 => {
                let n = rng.random_range(1..12);
                let s: String = (0..n)
                    .map(|_| ["{", "}", "(", ")", "[", "]", " ", "\t", "\n", "\r\n", "});"][rng.random_range(0..11)])
                    .collect();
                ("bracket-heavy", s)
            }
            2 => {
                let n = rng.random_range(0..40);
                ("unicode", (0..n).map(|_| rng.random::<char>()).collect())
            }
            3 => ("crlf", random_raw(&mut rng, 30).replace('\n', "\r\n")),
            _ => ("mixed", random_raw(&mut rng, 40)),
        };
        *kinds.entry(kind).or_default() += 1;
        let n = normalize(&raw);
        let mut fail = |what: &str| violations.push(format!("{what}: {raw:?} -> {n:?}"));
        if normalize(&n) != n {
            fail("not idempotent");
        }
        if n != oracle_normalize(&raw) {
            fail("differs from reference");
        }
        if n.contains('\r') || n.starts_with('\n') || n.ends_with('\n') {
            fail("line structure");
        }
        if !n.is_empty() {
            for line in n.split('\n') {
                if line.trim().is_empty() {
                    fail("blank line kept");
                }
                if line.chars().all(|c| c.is_whitespace() || "()[]{}".contains(c)) {
                    fail("bracket-only line kept");
                }
                if line.ends_with(char::is_whitespace) {
                    fail("trailing whitespace kept");
                }
            }
        }
        let want_nloc = if n.is_empty() { 0 } else { n.split('\n').count() };
        if normalize_text(&raw).nloc != want_nloc {
            fail("nloc");
        }
    }
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok(format!("{INPUTS} inputs {kinds:?}, 0 violations"))
}

fn fingerprint_subprocess(input: &str) -> Result<String, String> {
    let mut child = Command::new(BIN)
        .arg("fingerprint")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child.stdin.take().unwrap().write_all(input.as_bytes()).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "fingerprint exited with {}", out.status);
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    text.split_whitespace()
        .next()
        .map(str::to_string)
        .ok_or_else(|| "empty fingerprint output".into())
}

fn fingerprint_exactness() -> Outcome {
    for (input, published) in [("", 0xcbf29ce484222325u64), ("a", 0xaf63dc4c8601ec8c)] {
        let reference = fnv_reference(input.as_bytes());
        ensure!(reference == published, "reference fnv({input:?}) = {reference:#x}");
        let ours = fnv1a64(input.as_bytes());
        ensure!(ours == published, "fnv1a64({input:?}) = {ours:#x}, expected {published:#x}");
    }
    let mut rng = StdRng::seed_from_u64(0xfa11);
    for _ in 0..500 {
        let bytes: Vec<u8> = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
        ensure!(fnv1a64(&bytes) == fnv_reference(&bytes), "mismatch on {bytes:?}");
    }

    const PAIRS: usize = 12;
    let mut checked = 0;
    while checked < PAIRS {
        let a = random_raw(&mut rng, 25);
        if oracle_projection(&a).is_empty() {
            continue;
        }
        let b = reformat(&mut rng, &a);
        ensure!(oracle_projection(&a) == oracle_projection(&b), "reformat changed the projection");
        let (first, second) = (fingerprint_subprocess(&a)?, fingerprint_subprocess(&b)?);
        ensure!(first == second, "runs disagree: {a:?} -> {first}, {b:?} -> {second}");
        let in_process = fingerprint_hex(fnv_reference(oracle_projection(&a).as_bytes()));
        ensure!(first == in_process, "process output {first} != reference {in_process}");
        checked += 1;
    }
    Ok(format!("published vectors, 500 random byte strings, {PAIRS} cross-process pairs"))
}

// ---------------------------------------------------------------------------
// statistics

fn textbook_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// (mean, sd, median, iqr)
fn textbook_summary(values: &[f64]) -> [Option<f64>; 4] {
    if values.is_empty() {
        return [None; 4];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0 };
    let iqr = textbook_quantile(&sorted, 0.75) - textbook_quantile(&sorted, 0.25);
    [Some(mean), sd, Some(median), Some(iqr)]
}

fn statistics_oracle() -> Outcome {
    const COLLECTIONS: usize = 100;
    let mut rng = StdRng::seed_from_u64(0x57a7);
    let mut compared = 0;
    for case in 0..COLLECTIONS {
        let n_sets = rng.random_range(0..40);
        // (nloc, threads)
        let plan: Vec<(usize, usize)> = (0..n_sets)
            .map(|_| (rng.random_range(1..=70), rng.random_range(1..=8)))
            .collect();
        let mut items = Vec::new();
        let mut post = 0u64;
        for (i, &(nloc, threads)) in plan.iter().enumerate() {
            let body: String = (0..nloc).map(|l| format!("set{i}Line{l}();\n")).collect();
            for t in 0..threads {
                for _ in 0..rng.random_range(1..=2) {
                    post += 1;
                    let o = Occurrence {
                        post_id: post,
                        thread_id: 1000 + t as u64,
                        block_index: 0,
                        creation_date: date(post as i64),
                        author_id: None,
                    };
                    items.push((o, normalize_text(&body)));
                }
            }
        }
        let idx = build_index(items);
        for min_nloc in [20, 6, rng.random_range(0..=40)] {
            let s = idx.corpus_stats(min_nloc, 2);
            let chosen: Vec<&(usize, usize)> = plan.iter().filter(|(n, t)| *t >= 2 && *n >= min_nloc).collect();
            let nlocs: Vec<f64> = chosen.iter().map(|(n, _)| *n as f64).collect();
            let threads: Vec<f64> = chosen.iter().map(|(_, t)| *t as f64).collect();
            let mut hist = BTreeMap::new();
            for (_, t) in &chosen {
                *hist.entry(*t).or_insert(0usize) += 1;
            }
            let cloned = plan.iter().filter(|(_, t)| *t >= 2).count();
            let pct = (!chosen.is_empty())
                .then(|| chosen.iter().filter(|(_, t)| *t > 2).count() as f64 / chosen.len() as f64);
            let fraction = (!plan.is_empty()).then(|| cloned as f64 / plan.len() as f64);

            let ctx = format!("collection {case} at min_nloc {min_nloc}");
            ensure!(s.distinct_fingerprints == plan.len(), "{ctx}: distinct");
            ensure!(s.cloned_fingerprints == cloned, "{ctx}: cloned");
            ensure!(close_opt(s.cloned_fraction, fraction), "{ctx}: fraction");
            ensure!(s.thread_count_histogram == hist, "{ctx}: histogram {:?} != {hist:?}", s.thread_count_histogram);
            ensure!(close_opt(s.pct_more_than_two_threads, pct), "{ctx}: pct");
            let got = [
                [s.nloc_mean, s.nloc_sd, s.nloc_median, s.nloc_iqr],
                [s.thread_mean, s.thread_sd, s.thread_median, s.thread_iqr],
            ];
            let want = [textbook_summary(&nlocs), textbook_summary(&threads)];
            for (g, w) in got.iter().zip(&want) {
                for (a, b) in g.iter().zip(w) {
                    ensure!(close_opt(*a, *b), "{ctx}: {a:?} != {b:?}");
                }
            }
            for (t, count) in &s.filtered_count_by_threshold {
                let want = plan.iter().filter(|(n, th)| *th >= 2 && n >= t).count();
                ensure!(*count == want, "{ctx}: filtered count at {t}");
            }
            compared += 1;
        }
    }
    Ok(format!("{COLLECTIONS} collections, {compared} threshold settings, tolerance {REL_TOL:e}"))
}

fn threshold_monotonicity() -> Outcome {
    const CORPORA: usize = 400;
    let mut rng = StdRng::seed_from_u64(0x6_20);
    let mut nonempty_strict = 0;
    for case in 0..CORPORA {
        let mut blocks = random_blocks(&mut rng, 30, 4);
        // long blocks so both thresholds matter
        for b in blocks.iter_mut() {
            if rng.random_bool(0.4) {
                continue;
            }
            let lines = rng.random_range(1..=32);
            let tag = rng.random_range(0..4);
            b.raw = (0..lines).map(|l| format!("call{tag}_{l}();\n")).collect();
        }
        let analysis = Analysis::run(corpus_of(&blocks));
        for min_threads in 1..=3 {
            let loose: BTreeSet<_> = analysis.index.clone_sets(min_threads, 6).iter().map(|s| s.key()).collect();
            let strict: BTreeSet<_> = analysis.index.clone_sets(min_threads, 20).iter().map(|s| s.key()).collect();
            ensure!(strict.is_subset(&loose), "corpus {case}: {strict:?} not within {loose:?}");
            if min_threads == 2 && !strict.is_empty() {
                nonempty_strict += 1;
            }
        }
        let counts = analysis.index.corpus_stats(20, 2).filtered_count_by_threshold;
        ensure!(counts[&20] <= counts[&6], "corpus {case}: counts {counts:?}");
    }
    Ok(format!("{CORPORA} corpora, {nonempty_strict} with non-empty results at min_nloc 20"))
}

// ---------------------------------------------------------------------------
// service

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(data: &Path, labels: &Path) -> Result<Self, String> {
        let mut child = Command::new(BIN)
            .args(["serve", "--bind", "127.0.0.1:0", "--data"])
            .arg(data)
            .arg("--labels")
            .arg(labels)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawning serve: {e}"))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        let Some(base) = line.trim().strip_prefix("listening on ") else {
            let _ = child.kill();
            return Err(format!("unexpected server banner {line:?}"));
        };
        Ok(Self {
            base: base.to_string(),
            child,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn get(client: &reqwest::blocking::Client, url: &str) -> Result<(u16, Vec<u8>), String> {
    let resp = client.get(url).send().map_err(|e| format!("GET {url}: {e}"))?;
    let status = resp.status().as_u16();
    let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
    Ok((status, body))
}

fn post_json(client: &reqwest::blocking::Client, url: &str, body: &Value) -> Result<(u16, Value), String> {
    let resp = client.post(url).json(body).send().map_err(|e| format!("POST {url}: {e}"))?;
    let status = resp.status().as_u16();
    let value = resp.json().map_err(|e| e.to_string())?;
    Ok((status, value))
}

fn json_of(bytes: &[u8]) -> Result<Value, String> {
    serde_json::from_slice(bytes).map_err(|e| e.to_string())
}

fn service_contract() -> Outcome {
    let p = planted()?;
    let run = &p.runs[0];
    let data = run.out.path();
    let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
    let labels_path = scratch.path().join("labels.jsonl");
    let client = reqwest::blocking::Client::new();

    let server = Server::start(data, &labels_path)?;
    let ranked: Vec<&CloneSetDocument> = run.docs.iter().collect();
    let key = ranked.first().ok_or("no clone sets to label")?.key.to_string();

    // pagination concatenates to the ranked list
    let mut paged_checks = 0;
    for min_nloc in [0usize, 6, 20] {
        let want: Vec<String> = ranked.iter().filter(|d| d.nloc >= min_nloc).map(|d| d.key.to_string()).collect();
        for per_page in [1, 2, 3, 5, 200] {
            let mut got = Vec::new();
            for page in 1.. {
                let url = server.url(&format!(
                    "/api/clone-sets?min_nloc={min_nloc}&per_page={per_page}&page={page}"
                ));
                let resp = client.get(&url).send().map_err(|e| e.to_string())?;
                ensure!(resp.status().as_u16() == 200, "{url}: {}", resp.status());
                let total = resp
                    .headers()
                    .get("x-total-count")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.parse::<usize>().ok());
                ensure!(total == Some(want.len()), "{url}: X-Total-Count {total:?}");
                let body: Value = resp.json().map_err(|e| e.to_string())?;
                let items = body["items"].as_array().ok_or("page without items")?;
                if items.is_empty() {
                    break;
                }
                ensure!(items.len() <= per_page, "{url}: oversized page");
                got.extend(items.iter().map(|i| i["key"].as_str().unwrap().to_string()));
            }
            ensure!(got == want, "pages at min_nloc {min_nloc}, per_page {per_page}: {got:?} != {want:?}");
            paged_checks += 1;
        }
    }

    // repeated reads are byte-identical and match the files on disk
    for path in ["/api/stats".to_string(), format!("/api/clone-sets/{key}"), "/api/clone-sets?per_page=3".into()] {
        let (s1, b1) = get(&client, &server.url(&path))?;
        let (s2, b2) = get(&client, &server.url(&path))?;
        ensure!(s1 == 200 && s1 == s2 && b1 == b2, "{path}: repeated GET differs");
    }
    let (_, stats) = get(&client, &server.url("/api/stats"))?;
    let on_disk = std::fs::read(data.join(SUMMARY_FILE)).map_err(|e| e.to_string())?;
    ensure!(stats == on_disk, "/api/stats is not summary.json");
    let (_, doc) = get(&client, &server.url(&format!("/api/clone-sets/{key}")))?;
    let file = std::fs::read(data.join(CLONE_SET_DIR).join(format!("{key}.json"))).map_err(|e| e.to_string())?;
    ensure!(json_of(&doc)? == json_of(&file)?, "clone-set payload differs from its exported document");

    // errors
    let (status, _) = get(&client, &server.url("/api/clone-sets/ffffffffffffffff"))?;
    ensure!(status == 404, "unknown fingerprint gave {status}");
    let labels_url = server.url(&format!("/api/clone-sets/{key}/labels"));
    let label = |analyst: &str, verdict: &str| {
        json!({
            "category": "source_code",
            "origin_verdict": verdict,
            "license_conflict": true,
            "notes": format!("reviewed by {analyst}"),
            "analyst": analyst,
        })
    };
    let (status, _) = post_json(&client, &labels_url, &label("carol", "maybe"))?;
    ensure!(status == 422, "invalid verdict gave {status}");
    let (status, _) = post_json(
        &client,
        &server.url("/api/clone-sets/ffffffffffffffff/labels"),
        &label("carol", "undecided"),
    )?;
    ensure!(status == 404, "label for unknown set gave {status}");

    // round trip with two analysts
    let mut stored = Vec::new();
    for (analyst, verdict) in [("alice", "external_copy"), ("bob", "internal_original")] {
        let draft = label(analyst, verdict);
        let (status, created) = post_json(&client, &labels_url, &draft)?;
        ensure!(status == 201, "POST label gave {status}: {created}");
        for field in ["category", "origin_verdict", "license_conflict", "notes", "analyst"] {
            ensure!(created[field] == draft[field], "stored {field} {} != {}", created[field], draft[field]);
        }
        ensure!(created["fingerprint"] == json!(key), "label attached to {}", created["fingerprint"]);
        stored.push(created);
    }
    let (_, body) = get(&client, &labels_url)?;
    let listed = json_of(&body)?;
    ensure!(listed == json!(stored), "GET labels {listed} != posted {stored:?}");
    let created: Vec<DateTime<Utc>> = stored
        .iter()
        .map(|l| l["created_at"].as_str().unwrap().parse().unwrap())
        .collect();
    ensure!(created.windows(2).all(|w| w[0] <= w[1]), "labels not in created_at order");
    drop(server);

    // restart on the same store
    let server = Server::start(data, &labels_path)?;
    let (_, body) = get(&client, &server.url(&format!("/api/clone-sets/{key}/labels")))?;
    ensure!(json_of(&body)? == json!(stored), "labels lost across restart");
    let (_, body) = get(&client, &server.url("/api/labels"))?;
    ensure!(json_of(&body)? == json!(stored), "/api/labels after restart differs");

    Ok(format!("{paged_checks} pagination walks, 2 labels survived restart, error codes 404/422"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 8] = [
        ("planted-corpus exactness", planted_exactness),
        ("oracle equivalence", oracle_equivalence),
        ("normalization invariants", normalization_fuzz),
        ("fingerprint bit-exactness", fingerprint_exactness),
        ("statistics oracle", statistics_oracle),
        ("threshold monotonicity", threshold_monotonicity),
        ("attribution correctness", attribution_correctness),
        ("service contract", service_contract),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
