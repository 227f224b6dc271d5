mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

/// Shared-bug fuzzing for deep learning library APIs.
#[derive(Debug, Parser)]
#[command(name = "mirrorfuzz", version, arg_required_else_help = true)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect issues and keep the bug reports.
    Ingest(IngestArgs),
    /// Normalize an API documentation dump into a catalog.
    Catalog(CatalogArgs),
    /// Extract buggy APIs from an issue corpus.
    Recognize(RecognizeArgs),
    /// Find operation- and parameter-similar API pairs.
    Match(MatchArgs),
    /// Generate test programs from the bugs of similar APIs.
    Synthesize(SynthesizeArgs),
    /// Mutate and execute the test pool.
    Fuzz(FuzzArgs),
    /// Summarize crash reports by type.
    Report(ReportArgs),
    /// Run every stage in one working directory.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["repo", "fixtures"])))]
pub struct IngestArgs {
    /// Tracker repository as owner/name.
    #[arg(long)]
    pub repo: Option<String>,
    /// Directory of issue documents used instead of the network.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Replay recorded tracker pages (page-N.json) for --repo.
    #[arg(long, requires = "repo")]
    pub replay: Option<PathBuf>,
    /// Framework label for the issues (defaults to the repo or directory name).
    #[arg(long)]
    pub framework: Option<String>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Keyword list, one phrase per line.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Maximum number of pages to fetch.
    #[arg(long)]
    pub page_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    #[arg(long)]
    pub framework: String,
    /// Record file, documentation dump or directory of them.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    /// An existing issue corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Catalog file(s); each issue is matched against its framework's APIs.
    #[arg(long, value_delimiter = ',', required = true)]
    pub catalog: Vec<PathBuf>,
    /// Bug database to append to.
    #[arg(long)]
    pub out: PathBuf,
    /// Prompt content: all, no-t, no-d or no-td.
    #[arg(long)]
    pub variant: Option<String>,
    /// Skip the verification prompt.
    #[arg(long)]
    pub no_verify: bool,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Catalog files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub catalogs: Vec<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Weight of text similarity against semantic similarity.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Similar APIs always kept per source.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Score threshold for pairs within one framework.
    #[arg(long)]
    pub h_within: Option<f64>,
    /// Score threshold for pairs across frameworks.
    #[arg(long)]
    pub h_cross: Option<f64>,
    /// stub or http.
    #[arg(long)]
    pub embedder: Option<String>,
    /// Parallel workers.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("targets").required(true).args(["api", "all"])))]
pub struct SynthesizeArgs {
    /// Target API as full_name or framework:full_name.
    #[arg(long)]
    pub api: Option<String>,
    /// Every API of the catalogs.
    #[arg(long)]
    pub all: bool,
    /// Similar pairs from `match`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Bug records from `recognize`.
    #[arg(long)]
    pub bugdb: PathBuf,
    /// Test-case pool to extend.
    #[arg(long)]
    pub out: PathBuf,
    /// Catalog files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub catalogs: Vec<PathBuf>,
    /// Runner used to trial programs before admission.
    #[arg(long)]
    pub runner: Option<String>,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    /// Test pool file.
    #[arg(long)]
    pub pool: PathBuf,
    /// Round count or duration such as 90s, 30m, 5h.
    #[arg(long)]
    pub budget: Option<String>,
    /// Parallel workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Runner command line, or mock:<script.json>.
    #[arg(long)]
    pub runner: Option<String>,
    /// Bug database for new findings (defaults to bugs.jsonl beside the pool).
    #[arg(long)]
    pub bugdb: Option<PathBuf>,
    /// Crash report log (defaults to crashes.jsonl beside the pool).
    #[arg(long)]
    pub crashes: Option<PathBuf>,
    /// Catalog files, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub catalogs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Crash report log.
    #[arg(long)]
    pub crashes: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("issues").required(true).args(["fixtures", "corpus"])))]
pub struct PipelineArgs {
    /// Directory holding every stage output.
    #[arg(long)]
    pub workdir: PathBuf,
    /// Issue fixtures per framework, as framework=dir (repeatable).
    #[arg(long, value_parser = parse_fixture_spec)]
    pub fixtures: Vec<(String, PathBuf)>,
    /// An existing issue corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Catalog files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub catalogs: Vec<PathBuf>,
    /// Runner command, or mock:FILE for a scripted runner.
    #[arg(long)]
    pub runner: Option<String>,
    /// Round count or duration such as 90s, 30m, 5h.
    #[arg(long)]
    pub budget: Option<String>,
    /// Parallel workers.
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_fixture_spec(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((fw, dir)) if !fw.is_empty() && !dir.is_empty() => Ok((fw.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected framework=dir, got {s:?}")),
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values (exit 1).
    Usage(String),
    /// Anything that went wrong while doing the work (exit 2).
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
