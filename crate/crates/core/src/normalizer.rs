//! Whitespace normalization, normalized line counting and fingerprinting of
//! code blocks.
//!
//! A block is normalized in five passes: line endings are unified to LF,
//! trailing whitespace is stripped from every line, lines made only of
//! brackets are dropped, blank lines are dropped, and the result is trimmed of
//! leading/trailing newlines. The fingerprint is FNV-1a 64 over the ASCII
//! alphanumeric projection of the normalized text.

use serde::{Deserialize, Serialize};

use crate::corpus::CodeBlock;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

const BRACKETS: [char; 6] = ['(', ')', '[', ']', '{', '}'];

/// A code block after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedSnippet {
    pub content: String,
    pub nloc: usize,
    pub projection: String,
    pub fingerprint: u64,
}

/// True if the line is nonempty after trimming and every remaining character
/// is one of `()[]{}`.
pub fn is_bracket_line(line: &str) -> bool {
    let mut saw_bracket = false;
    for c in line.chars() {
        if c.is_whitespace() {
            continue;
        }
        if !BRACKETS.contains(&c) {
            return false;
        }
        saw_bracket = true;
    }
    saw_bracket
}

pub fn normalize(raw: &str) -> String {
    let unified;
    let text = if raw.contains('\r') {
        unified = raw.replace("\r\n", "\n").replace('\r', "\n");
        unified.as_str()
    } else {
        raw
    };

    let mut out = String::with_capacity(text.len());
    for line in text.split('\n') {
        let line = line.trim_end();
        if line.is_empty() || is_bracket_line(line) {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(line);
    }
    out
}

pub fn nloc(normalized: &str) -> usize {
    if normalized.is_empty() {
        0
    } else {
        1 + normalized.bytes().filter(|&b| b == b'\n').count()
    }
}

pub fn project_alnum(text: &str) -> String {
    text.chars().filter(char::is_ascii_alphanumeric).collect()
}

/// FNV-1a 64 over the UTF-8 bytes of `projection`.
pub fn fingerprint(projection: &str) -> u64 {
    fnv1a64(projection.as_bytes())
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercase, zero-padded, 16-digit hex rendering used on the wire and in
/// file names.
pub fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

pub fn parse_fingerprint_hex(s: &str) -> Option<u64> {
    if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

pub fn normalize_text(raw: &str) -> NormalizedSnippet {
    let content = normalize(raw);
    let nloc = nloc(&content);
    let projection = project_alnum(&content);
    let fingerprint = fingerprint(&projection);
    NormalizedSnippet {
        content,
        nloc,
        projection,
        fingerprint,
    }
}

pub fn process_block(block: &CodeBlock) -> NormalizedSnippet {
    normalize_text(&block.raw_content)
}
