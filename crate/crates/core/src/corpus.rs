//! Post ingestion and code-block segmentation.
//!
//! Two input formats are read: line-delimited JSON records with Markdown
//! bodies, and the Stack Exchange data-dump `Posts.xml` shape whose bodies
//! are rendered HTML. Blocks come in three kinds: fenced (``` or ~~~),
//! indented (4 spaces or a tab, after a blank line) and `<pre><code>` regions.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDateTime, SubsecRound, TimeZone, Utc};
use quick_xml::events::{BytesStart, Event};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostType {
    Question,
    Answer,
    Other,
}

/// Markup language of a post body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Markup {
    Markdown,
    Html,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    SeXml,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "se_xml" => Ok(InputFormat::SeXml),
            other => Err(format!("unknown input format {other:?} (expected jsonl or se_xml)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub post_id: u64,
    pub post_type: PostType,
    pub parent_id: Option<u64>,
    pub thread_id: u64,
    pub creation_date: DateTime<Utc>,
    pub author_id: Option<i64>,
    pub score: Option<i64>,
    pub body: String,
    pub markup: Markup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Fenced,
    Indented,
    HtmlPre,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub post_id: u64,
    pub block_index: usize,
    pub raw_content: String,
    pub kind: BlockKind,
    /// Byte range of the whole block in the post body, delimiters included.
    pub span: Range<usize>,
}

/// Blocks found in one body, plus non-fatal segmentation warnings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub blocks: Vec<CodeBlock>,
    pub warnings: Vec<String>,
}

/// Earliest creation date accepted for a post.
pub fn platform_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    post_id: i64,
    post_type: String,
    parent_id: Option<i64>,
    thread_id: Option<i64>,
    creation_date: String,
    author_id: Option<i64>,
    score: Option<i64>,
    body: String,
}

struct RawPost {
    post_id: Option<i64>,
    post_type: PostType,
    parent_id: Option<i64>,
    thread_id: Option<i64>,
    creation_date: Option<String>,
    author_id: Option<i64>,
    score: Option<i64>,
    body: String,
    markup: Markup,
}

pub fn parse_posts<R: Read>(input: R, format: InputFormat) -> Result<Vec<Post>> {
    let posts = match format {
        InputFormat::Jsonl => parse_jsonl(input)?,
        InputFormat::SeXml => parse_se_xml(input)?,
    };
    Ok(posts)
}

fn post_type_from_name(name: &str) -> PostType {
    match name {
        "question" => PostType::Question,
        "answer" => PostType::Answer,
        _ => PostType::Other,
    }
}

fn parse_jsonl<R: Read>(input: R) -> Result<Vec<Post>> {
    let mut posts = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let location = Location::Line(idx + 1);
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(location, e.to_string()))?;
        let raw = RawPost {
            post_id: Some(rec.post_id),
            post_type: post_type_from_name(&rec.post_type),
            parent_id: rec.parent_id,
            thread_id: rec.thread_id,
            creation_date: Some(rec.creation_date),
            author_id: rec.author_id,
            score: rec.score,
            body: rec.body,
            markup: Markup::Markdown,
        };
        push_checked(&mut posts, &mut seen, raw, location)?;
    }
    Ok(posts)
}

fn parse_se_xml<R: Read>(input: R) -> Result<Vec<Post>> {
    let mut reader = quick_xml::Reader::from_reader(BufReader::new(input));
    let mut buf = Vec::new();
    let mut posts = Vec::new();
    let mut seen = HashMap::new();
    let mut rows = 0usize;
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| {
            Error::malformed(
                Location::Row(rows + 1),
                format!("xml error at byte {}: {e}", reader.error_position()),
            )
        })?;
        match event {
            Event::Empty(ref e) | Event::Start(ref e) if e.name().as_ref() == b"row" => {
                rows += 1;
                let location = Location::Row(rows);
                let raw = row_to_raw(e, location)?;
                push_checked(&mut posts, &mut seen, raw, location)?;
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    Ok(posts)
}

fn row_to_raw(e: &BytesStart<'_>, location: Location) -> Result<RawPost> {
    let mut raw = RawPost {
        post_id: None,
        post_type: PostType::Other,
        parent_id: None,
        thread_id: None,
        creation_date: None,
        author_id: None,
        score: None,
        body: String::new(),
        markup: Markup::Html,
    };
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::malformed(location, err.to_string()))?;
        let value = attr
            .unescape_value()
            .map_err(|err| Error::malformed(location, err.to_string()))?;
        let int = |name: &str| -> Result<i64> {
            value
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::malformed(location, format!("{name} is not an integer: {value:?}")))
        };
        match attr.key.as_ref() {
            b"Id" => raw.post_id = Some(int("Id")?),
            b"PostTypeId" => {
                raw.post_type = match int("PostTypeId")? {
                    1 => PostType::Question,
                    2 => PostType::Answer,
                    _ => PostType::Other,
                }
            }
            b"ParentId" => raw.parent_id = Some(int("ParentId")?),
            b"CreationDate" => raw.creation_date = Some(value.into_owned()),
            b"OwnerUserId" => raw.author_id = Some(int("OwnerUserId")?),
            b"Score" => raw.score = Some(int("Score")?),
            b"Body" => raw.body = value.into_owned(),
            _ => {}
        }
    }
    Ok(raw)
}

fn positive(value: i64, name: &str, location: Location) -> Result<u64> {
    u64::try_from(value)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::malformed(location, format!("{name} must be a positive integer, got {value}")))
}

/// Accepts RFC 3339 timestamps and the zone-less form used by data dumps,
/// which is taken as UTC. Sub-second precision is dropped.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
                .ok()
                .map(|n| n.and_utc())
        })?;
    Some(parsed.trunc_subsecs(0))
}

fn push_checked(
    posts: &mut Vec<Post>,
    seen: &mut HashMap<u64, Location>,
    raw: RawPost,
    location: Location,
) -> Result<()> {
    let post_id = positive(
        raw.post_id
            .ok_or_else(|| Error::malformed(location, "missing post_id"))?,
        "post_id",
        location,
    )?;
    let date_text = raw
        .creation_date
        .ok_or_else(|| Error::malformed(location, "missing creation_date"))?;
    let creation_date = parse_timestamp(&date_text).ok_or_else(|| {
        Error::malformed(location, format!("unparseable creation_date {date_text:?}"))
    })?;
    if creation_date < platform_epoch() {
        return Err(Error::malformed(
            location,
            format!("creation_date {date_text} precedes 2008-01-01T00:00:00Z"),
        ));
    }

    let parent_id = match raw.parent_id {
        Some(p) => Some(positive(p, "parent_id", location)?),
        None => None,
    };
    let thread_override = match raw.thread_id {
        Some(t) => Some(positive(t, "thread_id", location)?),
        None => None,
    };

    let (parent_id, thread_id) = match raw.post_type {
        PostType::Question => {
            if parent_id.is_some() {
                tracing::warn!(post_id, %location, "question carries parent_id; ignored");
            }
            (None, post_id)
        }
        PostType::Answer => {
            let parent =
                parent_id.ok_or_else(|| Error::malformed(location, "answer missing parent_id"))?;
            (Some(parent), parent)
        }
        PostType::Other => (None, thread_override.unwrap_or(post_id)),
    };
    if let Some(t) = thread_override {
        if t != thread_id {
            return Err(Error::malformed(
                location,
                format!("thread_id {t} contradicts derived thread {thread_id}"),
            ));
        }
    }

    if let Some(first) = seen.insert(post_id, location) {
        return Err(Error::DuplicatePost {
            post_id,
            first,
            second: location,
        });
    }

    posts.push(Post {
        post_id,
        post_type: raw.post_type,
        parent_id,
        thread_id,
        creation_date,
        author_id: raw.author_id,
        score: raw.score,
        body: raw.body,
        markup: raw.markup,
    });
    Ok(())
}

/// Code blocks of a post, in document order. Segmentation warnings are
/// logged.
pub fn extract_code_blocks(post: &Post) -> Vec<CodeBlock> {
    if post.post_type == PostType::Other {
        return Vec::new();
    }
    let extraction = extract_blocks(post.post_id, &post.body, post.markup);
    for w in &extraction.warnings {
        tracing::warn!(post_id = post.post_id, "{w}");
    }
    extraction.blocks
}

pub fn extract_blocks(post_id: u64, body: &str, markup: Markup) -> Extraction {
    match markup {
        Markup::Html => extract_html(post_id, body),
        Markup::Markdown => extract_markdown(post_id, body),
    }
}

static PRE_CODE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<pre(?:\s[^>]*)?>\s*<code(?:\s[^>]*)?>(.*?)</code>\s*</pre\s*>").unwrap()
});

fn html_block(m: &regex::Captures<'_>) -> (String, Range<usize>) {
    let inner = m.get(1).unwrap().as_str();
    let decoded = html_escape::decode_html_entities(inner).into_owned();
    (decoded, m.get(0).unwrap().range())
}

fn extract_html(post_id: u64, body: &str) -> Extraction {
    let blocks = PRE_CODE
        .captures_iter(body)
        .enumerate()
        .map(|(block_index, caps)| {
            let (raw_content, span) = html_block(&caps);
            CodeBlock {
                post_id,
                block_index,
                raw_content,
                kind: BlockKind::HtmlPre,
                span,
            }
        })
        .collect();
    Extraction {
        blocks,
        warnings: Vec::new(),
    }
}

#[derive(Clone, Copy)]
struct Line<'a> {
    start: usize,
    /// End of the line text, excluding `\n`.
    end: usize,
    /// End including the terminating `\n`, if any.
    next: usize,
    text: &'a str,
}

fn split_lines(body: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    let mut start = 0;
    while start < body.len() {
        let (end, next) = match body[start..].find('\n') {
            Some(i) => (start + i, start + i + 1),
            None => (body.len(), body.len()),
        };
        lines.push(Line {
            start,
            end,
            next,
            text: &body[start..end],
        });
        start = next;
    }
    lines
}

fn is_blank(text: &str) -> bool {
    text.trim().is_empty()
}

fn leading_spaces(text: &str) -> usize {
    text.bytes().take_while(|&b| b == b' ').count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Fence {
    ch: u8,
    len: usize,
}

fn opening_fence(text: &str) -> Option<Fence> {
    let indent = leading_spaces(text);
    if indent > 3 {
        return None;
    }
    let rest = &text[indent..];
    let ch = *rest.as_bytes().first()?;
    if ch != b'`' && ch != b'~' {
        return None;
    }
    let len = rest.bytes().take_while(|&b| b == ch).count();
    if len < 3 {
        return None;
    }
    // a backtick fence's info string cannot itself contain backticks
    if ch == b'`' && rest[len..].contains('`') {
        return None;
    }
    Some(Fence { ch, len })
}

fn closes_fence(text: &str, fence: Fence) -> bool {
    let indent = leading_spaces(text);
    if indent > 3 {
        return false;
    }
    let rest = text[indent..].trim_end();
    let run = rest.bytes().take_while(|&b| b == fence.ch).count();
    run >= fence.len && run == rest.len()
}

fn is_indented(text: &str) -> bool {
    text.starts_with("    ") || text.starts_with('\t')
}

fn deindent(text: &str) -> &str {
    text.strip_prefix("    ")
        .or_else(|| text.strip_prefix('\t'))
        .unwrap_or_default()
}

fn opens_pre(text: &str) -> bool {
    let t = text.trim_start().as_bytes();
    t.len() >= 5
        && t[..4].eq_ignore_ascii_case(b"<pre")
        && (t[4] == b'>' || t[4].is_ascii_whitespace())
}

fn extract_markdown(post_id: u64, body: &str) -> Extraction {
    let lines = split_lines(body);
    let mut out = Extraction::default();
    let push = |out: &mut Extraction, raw_content: String, kind: BlockKind, span: Range<usize>| {
        let block_index = out.blocks.len();
        out.blocks.push(CodeBlock {
            post_id,
            block_index,
            raw_content,
            kind,
            span,
        });
    };

    let mut i = 0;
    let mut prev_blank = true;
    while i < lines.len() {
        let line = lines[i];

        if let Some(fence) = opening_fence(line.text) {
            let close = (i + 1..lines.len()).find(|&j| closes_fence(lines[j].text, fence));
            let (content_end_line, span_end, resume) = match close {
                Some(j) => (j, lines[j].next, j + 1),
                None => {
                    out.warnings.push(format!(
                        "unterminated code fence at byte {}; block runs to end of body",
                        line.start
                    ));
                    (lines.len(), body.len(), lines.len())
                }
            };
            let content = if content_end_line > i + 1 {
                &body[lines[i + 1].start..lines[content_end_line - 1].end]
            } else {
                ""
            };
            push(&mut out, content.to_string(), BlockKind::Fenced, line.start..span_end);
            i = resume;
            prev_blank = false;
            continue;
        }

        if opens_pre(line.text) {
            let from = line.start + (line.text.len() - line.text.trim_start().len());
            match PRE_CODE.captures_at(body, from).filter(|c| c.get(0).unwrap().start() == from) {
                Some(caps) => {
                    let (content, span) = html_block(&caps);
                    let end = span.end;
                    push(&mut out, content, BlockKind::HtmlPre, line.start..end);
                    // resume after the line holding the closing tag
                    i = lines
                        .iter()
                        .position(|l| l.next >= end)
                        .map_or(lines.len(), |j| j + 1);
                    prev_blank = false;
                    continue;
                }
                None => out.warnings.push(format!(
                    "<pre> at byte {} has no matching <code>…</code></pre>; treated as prose",
                    line.start
                )),
            }
        }

        if prev_blank && !is_blank(line.text) && is_indented(line.text) {
            let mut last = i;
            let mut j = i + 1;
            while j < lines.len() && (is_indented(lines[j].text) || is_blank(lines[j].text)) {
                if !is_blank(lines[j].text) {
                    last = j;
                }
                j += 1;
            }
            let content = lines[i..=last]
                .iter()
                .map(|l| deindent(l.text))
                .collect::<Vec<_>>()
                .join("\n");
            push(&mut out, content, BlockKind::Indented, line.start..lines[last].next);
            i = last + 1;
            prev_blank = false;
            continue;
        }

        prev_blank = is_blank(line.text);
        i += 1;
    }
    out
}
