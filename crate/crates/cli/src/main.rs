mod config;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use setrec::corpus::{
    chronological_split, load_corpus, random_split, validate_corpus, SplitCorpus,
};
use setrec::features::EmbeddingTable;
use setrec::grid::{execute, plan, results_csv, series_mrr_vs_f, series_mrr_vs_k, CellFilter};
use setrec::stats::{summarize, DatasetSummary};
use setrec::Error;

use config::{ExperimentConfig, SplitMode};

#[derive(Parser)]
#[command(name = "setrec", version, about = "Itemset completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report field availability and schema violations of a JSONL corpus.
    Validate { corpus: PathBuf },
    /// Dataset characteristics, one CSV row per pruning threshold.
    Stats {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus path; overrides the config.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma-separated pruning thresholds; overrides the config.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Also write stats.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every cell of the configured grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only cells matching model:k:f:run (`*` matches anything).
        #[arg(long)]
        only: Vec<String>,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mask_observed: Option<Switch>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the seconds column of results.csv.
        #[arg(long)]
        timings: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Exit status: 1 configuration, 2 data, 3 runtime.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() {
            1
        } else if e.is_data_error() {
            2
        } else {
            3
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: 3,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn cmd_validate(corpus: &Path) -> Result<(), Failure> {
    let file = fs::File::open(corpus).map_err(|e| Failure {
        code: 2,
        message: format!("cannot open {}: {e}", corpus.display()),
    })?;
    let report = validate_corpus(BufReader::new(file))?;
    println!("{} documents", report.documents);
    if report.documents == 0 {
        warn!("0 documents in {}", corpus.display());
        eprintln!("warning: 0 documents");
    }
    for (name, count) in [
        ("Title", report.with_title),
        ("Author", report.with_authors),
        ("Venue", report.with_venue),
        ("Labels", report.with_labels),
        ("Items", report.with_items),
    ] {
        println!("{name} {:.0}%", report.percent(count));
    }
    for v in &report.violations {
        println!("line {}: {}", v.line, v.message);
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!("{} schema violations", report.violations.len()),
        })
    }
}

fn cmd_stats(
    config: Option<&Path>,
    corpus: Option<PathBuf>,
    k: Option<Vec<usize>>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if corpus.is_some() {
        cfg.corpus = corpus;
    }
    if let Some(k) = k {
        cfg.grid.ks = k;
    }
    let path = cfg.corpus.clone().ok_or_else(|| {
        config_failure("no corpus given (set corpus in the config or pass --corpus)")
    })?;
    let docs = load_corpus(&path)?;
    let dataset = cfg.dataset_name();
    let mut csv = format!("{}\n", DatasetSummary::CSV_HEADER);
    for &k in &cfg.grid.ks {
        let summary = summarize(&dataset, &docs, k).map_err(|e| e.context(format!("k={k}")))?;
        csv.push_str(&summary.csv_row());
        csv.push('\n');
    }
    print!("{csv}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(|e| Failure {
            code: 3,
            message: format!("cannot create {}: {e}", dir.display()),
        })?;
        write_file(&dir.join("stats.csv"), &csv)?;
    }
    Ok(())
}

fn split_corpus(cfg: &ExperimentConfig) -> Result<SplitCorpus, Failure> {
    let path = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| config_failure("the config names no corpus"))?;
    let docs = load_corpus(path)?;
    info!("loaded {} documents from {}", docs.len(), path.display());
    let split = match cfg.split {
        SplitMode::Year(t) => chronological_split(&docs, t)?,
        SplitMode::Random { ratio, seed } => random_split(&docs, ratio, seed)?,
    };
    Ok(split)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    only: &[String],
    jobs: usize,
    seed: Option<u64>,
    mask_observed: Option<Switch>,
    out: Option<PathBuf>,
    timings: bool,
) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.grid.seed = seed;
    }
    if let Some(m) = mask_observed {
        cfg.grid.options.mask_observed = matches!(m, Switch::On);
    }
    if let Some(out) = out {
        cfg.out = out;
    }
    cfg.grid.timings |= timings;
    if let Some(path) = &cfg.embeddings {
        cfg.grid.options.features.embeddings = Some(EmbeddingTable::load(path)?);
    }
    let split = split_corpus(&cfg)?;
    let filters = only
        .iter()
        .map(|s| s.parse::<CellFilter>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells = plan(&cfg.grid, &split)?;
    if !filters.is_empty() {
        cells.retain(|c| filters.iter().any(|f| f.matches(c)));
        if cells.is_empty() {
            return Err(config_failure(format!(
                "--only {} matches no cell of the grid",
                only.join(" ")
            )));
        }
    }
    info!("running {} cells on {jobs} workers", cells.len());
    let outcomes = execute(&cfg.grid, &split, &cells, jobs)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Failure {
        code: 3,
        message: format!("cannot create {}: {e}", cfg.out.display()),
    })?;
    write_file(
        &cfg.out.join("results.csv"),
        &results_csv(&outcomes, cfg.grid.timings),
    )?;
    write_file(
        &cfg.out.join("series_mrr_vs_f.csv"),
        &series_mrr_vs_f(&outcomes),
    )?;
    write_file(
        &cfg.out.join("series_mrr_vs_k.csv"),
        &series_mrr_vs_k(&outcomes),
    )?;
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    eprintln!(
        "{} of {} cells completed; results in {}",
        outcomes.len() - failed,
        outcomes.len(),
        cfg.out.display()
    );
    if failed > 0 {
        return Err(Failure {
            code: 3,
            message: format!("{failed} cells failed; see the error column of results.csv"),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate { corpus } => cmd_validate(&corpus),
        Command::Stats {
            config,
            corpus,
            k,
            out,
        } => cmd_stats(config.as_deref(), corpus, k, out),
        Command::Run {
            config,
            only,
            jobs,
            seed,
            mask_observed,
            out,
            timings,
        } => cmd_run(&config, &only, jobs, seed, mask_observed, out, timings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
