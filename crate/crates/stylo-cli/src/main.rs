//! Command-line front end.
//!
//! Exit codes: 0 success, 2 config error (also clap usage errors), 3 data
//! error, 4 internal invariant violation.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use stylo::corpus::{
    compute_stats, dedup_exact, detect_format, load_corpus, make_split, Corpus, CorpusFormat,
    Split, SplitKind,
};
use stylo::harness::{
    av_pairs_from_split, load_config, report_render, report_to_string, run_experiment,
    save_corpus_jsonl, synth_corpus, ReportFormat, RunRecord,
};
use stylo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stylo",
    version,
    about = "Stylometry toolkit: authorship attribution and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file (jsonl, csv, or a directory layout).
    corpus: PathBuf,
    /// Corpus format; inferred from the path when omitted.
    #[arg(long)]
    format: Option<String>,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        let format = match &self.format {
            Some(name) => CorpusFormat::from_str(name)?,
            None => detect_format(&self.corpus)?,
        };
        load_corpus(&self.corpus, format)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print corpus statistics as JSON.
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Drop exact-duplicate texts, keeping each text's first occurrence.
    Dedup {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Deduplicated corpus destination (jsonl).
        #[arg(long)]
        out: PathBuf,
    },
    /// Create a train/validation/test split file.
    Split {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// iid, cross_topic, cross_genre, or unique_author.
        #[arg(long)]
        kind: String,
        /// Comma-separated train,validation,test fractions.
        #[arg(long, default_value = "0.6,0.2,0.2")]
        fractions: String,
        #[arg(long)]
        seed: u64,
        /// Split file destination (json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exclude abstained pairs from ranking metrics.
        #[arg(long)]
        pan_compat: bool,
    },
    /// Sample balanced verification pairs within split partitions.
    Pairs {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Split file produced by `stylo split`.
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value_t = 25)]
        per_class: usize,
        #[arg(long)]
        seed: u64,
        /// Pairs CSV destination.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic Markov-chain corpus.
    Synth {
        #[arg(long)]
        authors: usize,
        #[arg(long)]
        docs_per_author: usize,
        #[arg(long)]
        doc_len: usize,
        /// 0 = all authors identical, 1 = fully independent.
        #[arg(long)]
        separation: f64,
        #[arg(long)]
        seed: u64,
        /// Corpus destination (jsonl).
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a finished run's record in another format.
    Report {
        /// run.json produced by `stylo run`.
        #[arg(long)]
        run: PathBuf,
        /// json, csv, or markdown.
        #[arg(long, default_value = "json")]
        format: String,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "fractions must be three comma-separated numbers, got {text:?}"
        )));
    }
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::config(format!("bad fraction {part:?}")))?;
    }
    Ok((values[0], values[1], values[2]))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Stats { corpus } => {
            let stats = compute_stats(&corpus.load()?);
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Dedup { corpus, out } => {
            let loaded = corpus.load()?;
            let (kept, removed) = dedup_exact(&loaded);
            save_corpus_jsonl(&kept, &out)?;
            eprintln!(
                "kept {} document(s), removed {} duplicate(s)",
                kept.len(),
                removed.len()
            );
            for (dropped, kept_id) in removed {
                eprintln!("  {dropped} duplicates {kept_id}");
            }
        }
        Command::Split {
            corpus,
            kind,
            fractions,
            seed,
            out,
        } => {
            let loaded = corpus.load()?;
            let kind = SplitKind::from_str(&kind)?;
            let split = make_split(&loaded, kind, parse_fractions(&fractions)?, seed)?;
            for warning in &split.warnings {
                eprintln!("warning: {warning}");
            }
            split.save(&out)?;
            eprintln!(
                "split {} | train {} validation {} test {} | hash {}",
                kind,
                split.train.len(),
                split.validation.len(),
                split.test.len(),
                split.hash()
            );
        }
        Command::Run {
            config,
            seed,
            out,
            pan_compat,
        } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output_dir = Some(out);
            }
            if pan_compat {
                config.pan_compat = true;
            }
            let record = run_experiment(&config)?;
            for warning in &record.warnings {
                eprintln!("warning: {warning}");
            }
            println!("{}", serde_json::to_string_pretty(&record.report)?);
        }
        Command::Pairs {
            corpus,
            split,
            per_class,
            seed,
            out,
        } => {
            let loaded = corpus.load()?;
            let split = Split::load(&split)?;
            let missing: BTreeSet<&String> = split
                .train
                .iter()
                .chain(&split.validation)
                .chain(&split.test)
                .filter(|id| !loaded.contains(id))
                .collect();
            if let Some(id) = missing.into_iter().next() {
                return Err(Error::data(format!(
                    "split references unknown document {id:?}"
                )));
            }
            let pairs = av_pairs_from_split(&loaded, &split, per_class, seed)?;
            for warning in &pairs.warnings {
                eprintln!("warning: {warning}");
            }
            pairs.save_csv(&out)?;
            eprintln!(
                "pairs: train {} validation {} test {}",
                pairs.train.len(),
                pairs.validation.len(),
                pairs.test.len()
            );
        }
        Command::Synth {
            authors,
            docs_per_author,
            doc_len,
            separation,
            seed,
            out,
        } => {
            let corpus = synth_corpus(authors, docs_per_author, doc_len, separation, seed)?;
            save_corpus_jsonl(&corpus, &out)?;
            eprintln!("wrote {} document(s)", corpus.len());
        }
        Command::Report { run, format, out } => {
            let record = RunRecord::load(&run)?;
            let format = ReportFormat::from_str(&format)?;
            match out {
                Some(path) => report_render(&record, format, &path)?,
                None => print!("{}", report_to_string(&record, format)?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
