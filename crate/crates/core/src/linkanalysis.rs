//! Links cited in posts, source classification and origin evidence for clone
//! sets.
//!
//! Only links in prose count: URLs inside code blocks and inline code are
//! ignored. A post is `attributed` with respect to a candidate source when it
//! links any URL on that source's domain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::cloneindex::{CloneSet, Occurrence, SetKey};
use crate::corpus::{extract_blocks, Markup, Post};
use crate::error::{Error, Result};

/// Host of the Q&A platform itself; links under it are always internal.
pub const PLATFORM_DOMAIN: &str = "stackoverflow.com";

pub const EVIDENCE_SCOPE: &str = "in-post links only; sources not cited in posts are not searched for";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceClass {
    QaInternal,
    ReferenceDoc,
    TutorialSite,
    CodeHost,
    Unknown,
}

impl SourceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceClass::QaInternal => "qa_internal",
            SourceClass::ReferenceDoc => "reference_doc",
            SourceClass::TutorialSite => "tutorial_site",
            SourceClass::CodeHost => "code_host",
            SourceClass::Unknown => "unknown",
        }
    }
}

impl fmt::Display for SourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "qa_internal" => SourceClass::QaInternal,
            "reference_doc" => SourceClass::ReferenceDoc,
            "tutorial_site" => SourceClass::TutorialSite,
            "code_host" => SourceClass::CodeHost,
            "unknown" => SourceClass::Unknown,
            other => return Err(format!("unknown source class {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLink {
    pub url: String,
    /// Lowercased host with any leading `www.` removed.
    pub domain: String,
    pub source_class: SourceClass,
    pub license_hint: Option<String>,
    /// Post referenced by an internal link, when the URL names one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_post_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainRule {
    pub domain: String,
    pub class: SourceClass,
    pub license_hint: Option<String>,
}

/// Domain classification table, matched by longest domain suffix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleTable {
    rules: Vec<DomainRule>,
}

pub const DEFAULT_RULES: &str = "\
# domain\tclass\tlicense_hint
stackoverflow.com\tqa_internal
stackexchange.com\tqa_internal
developer.android.com\treference_doc\tCC BY 2.5
androidhive.info\ttutorial_site\trestrictive terms of use
github.com\tcode_host
";

impl RuleTable {
    pub fn new(rules: Vec<DomainRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[DomainRule] {
        &self.rules
    }

    /// Parses `domain<TAB>class[<TAB>license_hint]` lines; `#` starts a
    /// comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let domain = cols.next().unwrap_or("").trim().to_ascii_lowercase();
            let class = cols.next().map(str::trim).ok_or_else(|| Error::Rules {
                line: line_no,
                reason: "expected domain<TAB>class[<TAB>license_hint]".into(),
            })?;
            if domain.is_empty() {
                return Err(Error::Rules {
                    line: line_no,
                    reason: "empty domain".into(),
                });
            }
            let class = class.parse().map_err(|reason| Error::Rules { line: line_no, reason })?;
            let license_hint = cols
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            rules.push(DomainRule {
                domain: domain.trim_start_matches("www.").to_string(),
                class,
                license_hint,
            });
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn matching_rule(&self, domain: &str) -> Option<&DomainRule> {
        self.rules
            .iter()
            .filter(|r| domain_matches(domain, &r.domain))
            .max_by_key(|r| r.domain.len())
    }
}

static DEFAULT_TABLE: LazyLock<RuleTable> =
    LazyLock::new(|| RuleTable::parse(DEFAULT_RULES).expect("built-in rules parse"));

pub fn default_rules() -> RuleTable {
    DEFAULT_TABLE.clone()
}

/// `host` is `domain` or one of its subdomains.
pub fn domain_matches(host: &str, domain: &str) -> bool {
    host == domain
        || (host.len() > domain.len()
            && host.ends_with(domain)
            && host.as_bytes()[host.len() - domain.len() - 1] == b'.')
}

static MD_LINK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"\]\(\s*<?([^\s()<>]+(?:\([^\s()<>]*\)[^\s()<>]*)*)>?(?:\s+(?:"[^"]*"|'[^']*'))?\s*\)"#)
        .unwrap()
});
static MD_REF_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ ]{0,3}\[[^\]]+\]:\s*<?(\S+?)>?(?:\s|$)").unwrap());
static HTML_ANCHOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)<a\s[^>]*?href\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap()
});
static BARE_URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\bhttps?://[^\s<>"'`\[\]]+"#).unwrap());
static INLINE_CODE_MD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"`[^`\n]+`").unwrap());
static INLINE_CODE_HTML: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<code(?:\s[^>]*)?>.*?</code>").unwrap());
static POST_PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^/(?:a|q|questions|answers)/(\d+)").unwrap());

/// Replaces code regions with spaces so byte offsets stay valid.
fn mask_code(body: &str, markup: Markup) -> String {
    let mut ranges: Vec<Range<usize>> = extract_blocks(0, body, markup)
        .blocks
        .into_iter()
        .map(|b| b.span)
        .collect();
    let inline = match markup {
        Markup::Markdown => &*INLINE_CODE_MD,
        Markup::Html => &*INLINE_CODE_HTML,
    };
    let mut masked = body.as_bytes().to_vec();
    blank(&mut masked, &ranges);
    let after_blocks = String::from_utf8(masked).expect("ascii-space masking keeps utf-8 valid");
    ranges = inline.find_iter(&after_blocks).map(|m| m.range()).collect();
    let mut masked = after_blocks.into_bytes();
    blank(&mut masked, &ranges);
    String::from_utf8(masked).expect("ascii-space masking keeps utf-8 valid")
}

fn blank(bytes: &mut [u8], ranges: &[Range<usize>]) {
    for r in ranges {
        // keep newlines so line-anchored patterns still see line starts
        for b in &mut bytes[r.clone()] {
            if *b != b'\n' {
                *b = b' ';
            }
        }
    }
}

fn trim_bare_url(s: &str) -> &str {
    let mut s = s.trim_end_matches(['.', ',', ';', ':', '!', '?']);
    // drop an unbalanced closing parenthesis, e.g. "(see http://x.org/a)"
    while s.ends_with(')') && s.matches(')').count() > s.matches('(').count() {
        s = &s[..s.len() - 1];
        s = s.trim_end_matches(['.', ',', ';', ':', '!', '?']);
    }
    s
}

/// Links cited in a post's prose, deduplicated, in first-seen order. Links
/// come back unclassified; see [`classify_source`].
pub fn extract_links(body: &str, markup: Markup) -> (Vec<SourceLink>, Vec<String>) {
    let text = mask_code(body, markup);
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut claimed: Vec<Range<usize>> = Vec::new();

    for caps in MD_LINK.captures_iter(&text) {
        let m = caps.get(1).unwrap();
        found.push((m.start(), m.as_str().to_string()));
        claimed.push(caps.get(0).unwrap().range());
    }
    for caps in MD_REF_DEF.captures_iter(&text) {
        let m = caps.get(1).unwrap();
        found.push((m.start(), m.as_str().to_string()));
        claimed.push(caps.get(0).unwrap().range());
    }
    for caps in HTML_ANCHOR.captures_iter(&text) {
        let m = caps.get(1).or(caps.get(2)).or(caps.get(3)).unwrap();
        let href = html_escape::decode_html_entities(m.as_str()).into_owned();
        found.push((m.start(), href));
        claimed.push(caps.get(0).unwrap().range());
    }
    for m in BARE_URL.find_iter(&text) {
        if claimed.iter().any(|r| r.start <= m.start() && m.start() < r.end) {
            continue;
        }
        found.push((m.start(), trim_bare_url(m.as_str()).to_string()));
    }
    found.sort_by_key(|(pos, _)| *pos);

    let mut links = Vec::new();
    let mut seen = BTreeSet::new();
    let mut warnings = Vec::new();
    for (_, raw) in found {
        let parsed = match Url::parse(raw.trim()) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => u,
            Ok(_) => continue,
            Err(e) => {
                warnings.push(format!("skipping unparseable link {raw:?}: {e}"));
                continue;
            }
        };
        let Some(host) = parsed.host_str() else {
            warnings.push(format!("skipping link without host {raw:?}"));
            continue;
        };
        let domain = host.to_ascii_lowercase().trim_start_matches("www.").to_string();
        let url = parsed.to_string();
        if !seen.insert(url.clone()) {
            continue;
        }
        links.push(SourceLink {
            url,
            domain,
            source_class: SourceClass::Unknown,
            license_hint: None,
            linked_post_id: None,
        });
    }
    (links, warnings)
}

pub fn classify_source(mut link: SourceLink, rules: &RuleTable) -> SourceLink {
    match rules.matching_rule(&link.domain) {
        Some(rule) => {
            link.source_class = rule.class;
            link.license_hint = rule.license_hint.clone();
        }
        None if domain_matches(&link.domain, PLATFORM_DOMAIN) => {
            link.source_class = SourceClass::QaInternal;
            link.license_hint = None;
        }
        None => {
            link.source_class = SourceClass::Unknown;
            link.license_hint = None;
        }
    }
    link.linked_post_id = if link.source_class == SourceClass::QaInternal {
        Url::parse(&link.url)
            .ok()
            .and_then(|u| POST_PATH.captures(u.path()).and_then(|c| c[1].parse().ok()))
    } else {
        None
    };
    link
}

/// Grouping key for attribution: the matching rule's domain, or the link's
/// own domain when no rule applies.
fn candidate_key(link: &SourceLink, rules: &RuleTable) -> String {
    rules
        .matching_rule(&link.domain)
        .map(|r| r.domain.clone())
        .unwrap_or_else(|| link.domain.clone())
}

pub fn classified_links(post: &Post, rules: &RuleTable) -> Vec<SourceLink> {
    let (links, warnings) = extract_links(&post.body, post.markup);
    for w in warnings {
        tracing::warn!(post_id = post.post_id, "{w}");
    }
    links.into_iter().map(|l| classify_source(l, rules)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    Attributed,
    Unattributed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCandidate {
    pub domain: String,
    pub source_class: SourceClass,
    pub license_hint: Option<String>,
    /// Distinct posts of the set citing this domain.
    pub citing_posts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostLinks {
    pub post_id: u64,
    pub internal: Vec<SourceLink>,
    pub external: Vec<SourceLink>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginReport {
    pub clone_set: SetKey,
    pub earliest_occurrence: Occurrence,
    pub external_candidates: Vec<ExternalCandidate>,
    pub same_author_chain: bool,
    /// Authors with occurrences in two or more threads of the set.
    pub chain_authors: Vec<i64>,
    /// Candidate domain -> post id -> status.
    pub attribution: BTreeMap<String, BTreeMap<u64, Attribution>>,
    pub post_links: Vec<PostLinks>,
    pub evidence_scope: String,
}

/// Anything that resolves post ids to posts.
pub trait PostLookup {
    fn post(&self, post_id: u64) -> Option<&Post>;
}

impl PostLookup for HashMap<u64, Post> {
    fn post(&self, post_id: u64) -> Option<&Post> {
        self.get(&post_id)
    }
}

impl PostLookup for BTreeMap<u64, Post> {
    fn post(&self, post_id: u64) -> Option<&Post> {
        self.get(&post_id)
    }
}

impl PostLookup for [Post] {
    fn post(&self, post_id: u64) -> Option<&Post> {
        self.iter().find(|p| p.post_id == post_id)
    }
}

fn chain_authors(occurrences: &[Occurrence]) -> Vec<i64> {
    let mut threads_by_author: BTreeMap<i64, BTreeSet<u64>> = BTreeMap::new();
    for o in occurrences {
        if let Some(a) = o.author_id {
            threads_by_author.entry(a).or_default().insert(o.thread_id);
        }
    }
    threads_by_author
        .into_iter()
        .filter(|(_, threads)| threads.len() >= 2)
        .map(|(a, _)| a)
        .collect()
}

pub fn analyze_origin<P>(set: &CloneSet, posts: &P, rules: &RuleTable) -> Result<OriginReport>
where
    P: PostLookup + ?Sized,
{
    let earliest = set
        .occurrences
        .iter()
        .min_by_key(|o| (o.creation_date, o.post_id, o.block_index))
        .cloned()
        .expect("clone sets are nonempty");

    let post_ids: BTreeSet<u64> = set.occurrences.iter().map(|o| o.post_id).collect();
    let mut post_links = Vec::with_capacity(post_ids.len());
    // candidate key -> (class, hint, citing posts)
    let mut candidates: BTreeMap<String, (SourceClass, Option<String>, BTreeSet<u64>)> =
        BTreeMap::new();
    // ordered like the occurrences
    let mut ordered_ids = Vec::new();
    let mut listed = BTreeSet::new();
    for o in &set.occurrences {
        if listed.insert(o.post_id) {
            ordered_ids.push(o.post_id);
        }
    }

    for &post_id in &ordered_ids {
        let post = posts.post(post_id).ok_or(Error::MissingPost(post_id))?;
        let links = classified_links(post, rules);
        let (internal, external): (Vec<_>, Vec<_>) = links
            .into_iter()
            .partition(|l| l.source_class == SourceClass::QaInternal);
        for link in &external {
            let entry = candidates
                .entry(candidate_key(link, rules))
                .or_insert_with(|| (link.source_class, link.license_hint.clone(), BTreeSet::new()));
            entry.2.insert(post_id);
        }
        post_links.push(PostLinks {
            post_id,
            internal,
            external,
        });
    }

    let mut attribution = BTreeMap::new();
    for (domain, (_, _, citing)) in &candidates {
        let per_post = post_ids
            .iter()
            .map(|&id| {
                let status = if citing.contains(&id) {
                    Attribution::Attributed
                } else {
                    Attribution::Unattributed
                };
                (id, status)
            })
            .collect();
        attribution.insert(domain.clone(), per_post);
    }

    let mut external_candidates: Vec<ExternalCandidate> = candidates
        .into_iter()
        .map(|(domain, (source_class, license_hint, citing))| ExternalCandidate {
            domain,
            source_class,
            license_hint,
            citing_posts: citing.len(),
        })
        .collect();
    external_candidates.sort_by(|a, b| {
        b.citing_posts
            .cmp(&a.citing_posts)
            .then_with(|| a.domain.cmp(&b.domain))
    });

    let chain_authors = chain_authors(&set.occurrences);
    Ok(OriginReport {
        clone_set: set.key(),
        earliest_occurrence: earliest,
        external_candidates,
        same_author_chain: !chain_authors.is_empty(),
        chain_authors,
        attribution,
        post_links,
        evidence_scope: EVIDENCE_SCOPE.to_string(),
    })
}
