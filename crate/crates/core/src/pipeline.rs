//! End-to-end analysis: read posts, index their code blocks, attach origin
//! evidence to clone sets.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cloneindex::{CloneIndex, CloneSet, IndexBuilder, Occurrence};
use crate::corpus::{extract_code_blocks, parse_posts, InputFormat, Post, PostType};
use crate::error::{Error, Result};
use crate::linkanalysis::{analyze_origin, OriginReport, RuleTable};
use crate::normalizer::process_block;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thresholds {
    pub min_nloc: usize,
    pub min_threads: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_nloc: 20,
            min_threads: 2,
        }
    }
}

/// Reader adapter that hashes everything read through it.
pub struct DigestReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> DigestReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
        }
    }

    /// Drains whatever the consumer left unread, then returns the digest of
    /// the whole stream as `sha256:<hex>`.
    pub fn finish(mut self) -> std::io::Result<String> {
        std::io::copy(&mut self, &mut std::io::sink())?;
        let digest = self.hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(format!("sha256:{hex}"))
    }
}

impl<R: Read> Read for DigestReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub posts: HashMap<u64, Post>,
    /// Input order.
    pub order: Vec<u64>,
    pub digest: String,
    pub format: InputFormat,
}

impl Corpus {
    pub fn from_posts(posts: Vec<Post>, digest: String, format: InputFormat) -> Self {
        let order = posts.iter().map(|p| p.post_id).collect();
        let posts = posts.into_iter().map(|p| (p.post_id, p)).collect();
        Self {
            posts,
            order,
            digest,
            format,
        }
    }

    pub fn read<R: Read>(input: R, format: InputFormat) -> Result<Self> {
        let mut reader = DigestReader::new(input);
        let posts = parse_posts(&mut reader, format)?;
        let digest = reader.finish()?;
        Ok(Self::from_posts(posts, digest, format))
    }

    pub fn open(path: &Path, format: InputFormat) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(BufReader::new(file), format)
    }

    pub fn ordered_posts(&self) -> impl Iterator<Item = &Post> {
        self.order.iter().map(|id| &self.posts[id])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexCounts {
    pub posts: usize,
    pub code_blocks: usize,
}

fn index_post(mut builder: IndexBuilder, post: &Post, blocks: &mut usize) -> IndexBuilder {
    if post.post_type == PostType::Other {
        return builder;
    }
    for block in extract_code_blocks(post) {
        *blocks += 1;
        let occurrence = Occurrence {
            post_id: post.post_id,
            thread_id: post.thread_id,
            block_index: block.block_index,
            creation_date: post.creation_date,
            author_id: post.author_id,
        };
        builder.insert(occurrence, process_block(&block));
    }
    builder
}

/// Indexes every code block of question and answer posts. Posts are
/// processed in parallel; the result does not depend on scheduling.
pub fn index_posts<'a, I>(posts: I) -> (CloneIndex, IndexCounts)
where
    I: IntoParallelIterator<Item = &'a Post>,
{
    let (builder, counts) = posts
        .into_par_iter()
        .fold(
            || (IndexBuilder::new(), IndexCounts::default()),
            |(builder, mut counts), post| {
                counts.posts += 1;
                let builder = index_post(builder, post, &mut counts.code_blocks);
                (builder, counts)
            },
        )
        .reduce(
            || (IndexBuilder::new(), IndexCounts::default()),
            |(a, ca), (b, cb)| {
                let counts = IndexCounts {
                    posts: ca.posts + cb.posts,
                    code_blocks: ca.code_blocks + cb.code_blocks,
                };
                (a.merge(b), counts)
            },
        );
    (builder.finish(), counts)
}

/// Sequential variant of [`index_posts`].
pub fn index_posts_sequential<'a, I>(posts: I) -> (CloneIndex, IndexCounts)
where
    I: IntoIterator<Item = &'a Post>,
{
    let mut counts = IndexCounts::default();
    let mut builder = IndexBuilder::new();
    for post in posts {
        counts.posts += 1;
        builder = index_post(builder, post, &mut counts.code_blocks);
    }
    (builder.finish(), counts)
}

#[derive(Debug)]
pub struct Analysis {
    pub corpus: Corpus,
    pub index: CloneIndex,
    pub counts: IndexCounts,
}

impl Analysis {
    pub fn run(corpus: Corpus) -> Self {
        let posts: Vec<&Post> = corpus.ordered_posts().collect();
        let (index, counts) = index_posts(posts);
        Self {
            corpus,
            index,
            counts,
        }
    }

    pub fn origin(&self, set: &CloneSet, rules: &RuleTable) -> Result<OriginReport> {
        analyze_origin(set, &self.corpus.posts, rules)
    }

    /// Origin reports for the given sets, computed in parallel, in input
    /// order.
    pub fn origins<'a>(
        &self,
        sets: &[&'a CloneSet],
        rules: &RuleTable,
    ) -> Result<Vec<(&'a CloneSet, OriginReport)>> {
        sets.par_iter()
            .map(|&set| self.origin(set, rules).map(|o| (set, o)))
            .collect()
    }
}
