use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use clonescope_core::corpus::InputFormat;
use clonescope_core::linkanalysis::{default_rules, RuleTable};
use clonescope_core::normalizer::{fingerprint_hex, normalize_text};
use clonescope_core::pipeline::{Analysis, Corpus, Thresholds};
use clonescope_core::reporter::{percent, write_report};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "clonescope", version, about = "Exact code-clone analysis of Q&A post corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a post corpus and write the report directory.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: InputFormat,
        #[arg(long, default_value_t = 20)]
        min_nloc: usize,
        #[arg(long, default_value_t = 2)]
        min_threads: usize,
        /// Domain rule table (domain<TAB>class<TAB>license_hint); built-in table if omitted.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a report directory and the label store over HTTP.
    Serve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory of static UI assets served under `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Normalize stdin as one code block and print its fingerprint and NLOC.
    Fingerprint,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("CLONESCOPE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Analyze {
            input,
            format,
            min_nloc,
            min_threads,
            rules,
            out,
        } => analyze(input, format, Thresholds { min_nloc, min_threads }, rules, out),
        Command::Serve {
            data,
            labels,
            bind,
            assets,
        } => {
            let state = clonescope::load_state(&data, &labels)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(clonescope::serve(
                state,
                bind,
                assets,
                |addr| {
                    println!("listening on http://{addr}");
                    let _ = std::io::stdout().flush();
                },
                async {
                    let _ = tokio::signal::ctrl_c().await;
                },
            ))
        }
        Command::Fingerprint => {
            let mut raw = String::new();
            std::io::stdin().read_to_string(&mut raw)?;
            let s = normalize_text(&raw);
            println!("{} {}", fingerprint_hex(s.fingerprint), s.nloc);
            Ok(())
        }
    }
}

fn analyze(
    input: PathBuf,
    format: InputFormat,
    thresholds: Thresholds,
    rules: Option<PathBuf>,
    out: PathBuf,
) -> anyhow::Result<()> {
    anyhow::ensure!(thresholds.min_threads >= 1, "--min-threads must be at least 1");
    let started = Instant::now();
    let rules = match rules {
        Some(path) => RuleTable::load(&path)?,
        None => default_rules(),
    };
    let corpus = Corpus::open(&input, format)
        .with_context(|| format!("reading {}", input.display()))?;
    let analysis = Analysis::run(corpus);
    let report = write_report(&analysis, thresholds, &rules, &out)?;
    let stats = &report.summary.stats;
    println!(
        "{} posts, {} code blocks, {} distinct snippets, {} in >= 2 threads ({})",
        analysis.counts.posts,
        analysis.counts.code_blocks,
        stats.distinct_fingerprints,
        stats.cloned_fingerprints,
        stats.cloned_fraction.map(percent).unwrap_or_else(|| "n/a".into()),
    );
    println!(
        "{} clone sets at >= {} NLOC and >= {} threads; wrote {} in {:.2?}",
        report.exported_sets,
        thresholds.min_nloc,
        thresholds.min_threads,
        out.display(),
        started.elapsed()
    );
    Ok(())
}
