//! Command-line front end for the forum CVE topic pipeline.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 missing upstream
//! artifact, 5 network error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cvetopics_core::corpus::CorpusFormat;
use cvetopics_core::pipeline::{
    self, stage_filter, stage_ingest, stage_stats, stage_train, validate_config, Overrides,
    PipelineError, Resources,
};
use cvetopics_core::report::{run_all, stage_report};

#[derive(Parser)]
#[command(
    name = "cvetopics",
    about = "Mine CVE discussions from forum dumps: preprocessing, filtering, LDA topics, reports",
    version
)]
struct Cli {
    /// Pipeline config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Sampler seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// NVD access mode override.
    #[arg(long, global = true, value_enum)]
    nvd_mode: Option<NvdModeArg>,

    /// Corpus input format override.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Echo resolved paths before running.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NvdModeArg {
    Fixture,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the corpus; write corpus.ingest.json.
    Ingest,
    /// Compute corpus statistics; write corpus.stats.json.
    Stats,
    /// Extract CVE-citing threads; write threads.jsonl.
    Filter,
    /// Enrich cited CVEs with CVSS data; write cves.enriched.json.
    Enrich,
    /// Train the LDA topic model; write model.lda.
    Train,
    /// Assemble report.json and report.html from the stage artifacts.
    Report,
    /// Run every stage in order.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        nvd_mode: cli.nvd_mode.map(|m| {
            match m {
                NvdModeArg::Fixture => "fixture",
                NvdModeArg::Live => "live",
            }
            .to_string()
        }),
        corpus_format: cli.format.map(|f| match f {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::Csv => CorpusFormat::Csv,
        }),
    };
    let cfg = validate_config(config_path, &overrides)?;
    if cli.verbose {
        for (name, path) in cfg.resolved_paths() {
            eprintln!("{name}: {}", path.display());
        }
    }

    match cli.command {
        Command::Ingest => {
            let summary = stage_ingest(&cfg)?;
            println!(
                "ingested {} forums / {} boards / {} threads / {} posts ({} dangling references)",
                summary.forums,
                summary.boards,
                summary.threads,
                summary.posts,
                summary.dangling.len()
            );
        }
        Command::Stats => {
            let stats = stage_stats(&cfg)?;
            println!(
                "totals: {} users / {} boards / {} threads / {} posts",
                stats.totals.users, stats.totals.boards, stats.totals.threads, stats.totals.posts
            );
        }
        Command::Filter => {
            let resources = Resources::load(&cfg)?;
            let (docs, report) = stage_filter(&cfg, &resources)?;
            println!(
                "kept {} of {} threads ({} unique CVEs)",
                docs.len(),
                report.threads_total,
                report.unique_cves_kept_threads
            );
        }
        Command::Enrich => {
            let records = pipeline::stage_enrich(&cfg)?;
            println!("enriched {} CVEs", records.len());
        }
        Command::Train => {
            let resources = Resources::load(&cfg)?;
            let output = stage_train(&cfg, &resources)?;
            println!(
                "trained K={} on {} documents, V={}",
                output.model.config.k,
                output.model.num_docs(),
                output.dictionary.len()
            );
        }
        Command::Report => {
            let resources = Resources::load(&cfg)?;
            stage_report(&cfg, &resources)?;
            println!("wrote report.json and report.html to {}", cfg.out_dir.display());
        }
        Command::Run => {
            let resources = Resources::load(&cfg)?;
            run_all(&cfg, &resources)?;
            println!("pipeline complete; outputs in {}", cfg.out_dir.display());
        }
    }
    Ok(())
}
