//! Experiment grids: the cross product of pruning levels, condition sets,
//! models, drop fractions and runs, executed on a worker pool.
//!
//! Rows come out in plan order whatever the pool size, and every number in
//! them depends only on the configuration and the corpus.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{Document, SplitCorpus};
use crate::error::{Error, Result};
use crate::eval::{check_leakage, mean_sd, run_cell, ExperimentOptions, Prepared, RunResult};
use crate::features::{Block, ConditionSet};
use crate::models::{Hyperparams, ModelKind, RecommenderSpec};

pub const RESULTS_HEADER: &str = "model,condition_blocks,k,f,run,mrr,seed,seconds,error";
pub const SERIES_HEADER: &str = "condition_blocks,model,k,f,runs,mean,sd";

/// A requested condition set; `all` resolves to every block the corpus has.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConditionChoice {
    Set(ConditionSet),
    AllAvailable,
}

impl FromStr for ConditionChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            Ok(ConditionChoice::AllAvailable)
        } else {
            s.parse().map(ConditionChoice::Set)
        }
    }
}

impl fmt::Display for ConditionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionChoice::Set(set) => set.fmt(f),
            ConditionChoice::AllAvailable => f.write_str("all"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub ks: Vec<usize>,
    pub fs: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub conditions: Vec<ConditionChoice>,
    pub runs: usize,
    pub seed: u64,
    pub options: ExperimentOptions,
    pub hyper: Hyperparams,
    /// Fill the seconds column. Off by default, which keeps results
    /// byte-identical across reruns.
    pub timings: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            ks: vec![1],
            fs: vec![0.5],
            models: vec![ModelKind::Cooc],
            conditions: vec![ConditionChoice::Set(ConditionSet::none())],
            runs: 1,
            seed: 0,
            options: ExperimentOptions::default(),
            hyper: Hyperparams::default(),
            timings: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.ks.is_empty() {
            return bad("the pruning list k is empty");
        }
        if self.fs.is_empty() {
            return bad("the drop-fraction list f is empty");
        }
        if self.models.is_empty() {
            return bad("the model list is empty");
        }
        if self.conditions.is_empty() {
            return bad("the condition list is empty");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if let Some(f) = self.fs.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "drop fraction {f} outside (0, 1)"
            )));
        }
        self.hyper.validate()
    }
}

/// Blocks present on at least one document.
pub fn available_blocks(docs: &[Document]) -> ConditionSet {
    let has = |block: Block| match block {
        Block::Title => docs.iter().any(|d| !d.title.trim().is_empty()),
        Block::Author => docs.iter().any(|d| !d.authors.is_empty()),
        Block::Venue => docs.iter().any(|d| !d.venue.trim().is_empty()),
        Block::Labels => docs.iter().any(|d| !d.labels.is_empty()),
    };
    ConditionSet::new(Block::ALL.into_iter().filter(|&b| has(b)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub spec: RecommenderSpec,
    pub k: usize,
    pub f: f64,
    pub run: usize,
}

impl Cell {
    /// `model:k:f:run`, the form accepted by [`CellFilter`].
    pub fn key(&self) -> String {
        format!("{}:{}:{}:{}", self.spec.label(), self.k, self.f, self.run)
    }
}

/// Selects cells by `model:k:f:run`; the model part is a bare name or a
/// `model@conditions` label, and `*` matches anything in any position.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFilter {
    model: Option<String>,
    k: Option<usize>,
    f: Option<f64>,
    run: Option<usize>,
}

impl FromStr for CellFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "--only expects model:k:f:run, got {s:?}"
            )));
        }
        fn field<T: FromStr>(p: &str, name: &str) -> Result<Option<T>> {
            if p == "*" {
                return Ok(None);
            }
            p.parse()
                .map(Some)
                .map_err(|_| Error::InvalidArgument(format!("bad {name} {p:?} in --only")))
        }
        let model = (parts[0] != "*").then(|| parts[0].to_ascii_lowercase());
        Ok(CellFilter {
            model,
            k: field(parts[1], "k")?,
            f: field(parts[2], "f")?,
            run: field(parts[3], "run")?,
        })
    }
}

impl CellFilter {
    pub fn matches(&self, cell: &Cell) -> bool {
        let model_ok = match &self.model {
            None => true,
            Some(m) if m.contains('@') => *m == cell.spec.label(),
            Some(m) => m == cell.spec.kind.name(),
        };
        model_ok
            && self.k.is_none_or(|k| k == cell.k)
            && self.f.is_none_or(|f| f == cell.f)
            && self.run.is_none_or(|r| r == cell.run)
    }
}

/// Expands the grid in the order k, condition set, model, f, run. Models
/// that ignore some blocks are not repeated for condition sets that reduce
/// to one they already have, and the MLP is skipped without conditions.
pub fn plan(config: &GridConfig, split: &SplitCorpus) -> Result<Vec<Cell>> {
    config.validate()?;
    let docs: Vec<Document> = split.train.iter().chain(&split.test).cloned().collect();
    let available = available_blocks(&docs);
    let mut sets = Vec::new();
    for choice in &config.conditions {
        let set = match choice {
            ConditionChoice::AllAvailable => {
                let mut blocks: Vec<Block> = available.blocks().to_vec();
                if config.options.task == crate::eval::Task::Subject {
                    blocks.retain(|&b| b != Block::Labels);
                }
                ConditionSet::new(blocks)
            }
            ConditionChoice::Set(set) => {
                if let Some(b) = set.blocks().iter().find(|b| !available.contains(**b)) {
                    return Err(Error::InvalidArgument(format!(
                        "condition block {} is absent from every document of the corpus",
                        b.name()
                    )));
                }
                set.clone()
            }
        };
        check_leakage(config.options.task, &set)?;
        sets.push(set);
    }
    let mut cells = Vec::new();
    for &k in &config.ks {
        let mut seen = HashSet::new();
        for set in &sets {
            for &kind in &config.models {
                let spec = RecommenderSpec::new(kind, set.clone()).with_hyper(config.hyper.clone());
                if kind == ModelKind::Mlp && set.is_empty() {
                    log::warn!("skipping mlp without condition blocks");
                    continue;
                }
                if !seen.insert(spec.label()) {
                    continue;
                }
                for &f in &config.fs {
                    for run in 0..config.runs {
                        cells.push(Cell {
                            spec: spec.clone(),
                            k,
                            f,
                            run,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub seed: u64,
    pub mrr: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl CellOutcome {
    fn from_result(cell: Cell, seed: u64, result: Result<RunResult>, seconds: f64) -> Self {
        match result {
            Ok(r) => CellOutcome {
                cell,
                seed,
                mrr: Some(r.mrr),
                seconds,
                error: None,
            },
            Err(e) => CellOutcome {
                cell,
                seed,
                mrr: None,
                seconds,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Runs `cells` on `jobs` worker threads. A failing cell becomes a row with
/// an error message; the other cells are unaffected.
pub fn execute(
    config: &GridConfig,
    split: &SplitCorpus,
    cells: &[Cell],
    jobs: usize,
) -> Result<Vec<CellOutcome>> {
    let mut prepared: BTreeMap<usize, std::result::Result<Prepared, String>> = BTreeMap::new();
    for cell in cells {
        prepared.entry(cell.k).or_insert_with(|| {
            Prepared::new(split, cell.k, &config.options.features).map_err(|e| e.to_string())
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Model(format!("worker pool: {e}")))?;
    let outcomes = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let seed = config.seed.wrapping_add(cell.run as u64);
                let start = Instant::now();
                let result = match &prepared[&cell.k] {
                    Ok(p) => run_cell(
                        &cell.spec,
                        p,
                        cell.f,
                        cell.run,
                        config.seed,
                        &config.options,
                    ),
                    Err(msg) => Err(Error::Validation(msg.clone())),
                };
                if let Err(e) = &result {
                    log::error!("{}: {e}", cell.key());
                }
                CellOutcome::from_result(cell.clone(), seed, result, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    Ok(outcomes)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn results_csv(outcomes: &[CellOutcome], timings: bool) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for o in outcomes {
        let c = &o.cell;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.spec.kind,
            c.spec.effective_conditions(),
            c.k,
            c.f,
            c.run,
            o.mrr.map(|m| m.to_string()).unwrap_or_default(),
            o.seed,
            if timings {
                format!("{:.3}", o.seconds)
            } else {
                String::new()
            },
            csv_field(o.error.as_deref().unwrap_or("")),
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub conditions: String,
    pub model: String,
    pub k: usize,
    pub f: f64,
    pub runs: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample deviation of the successful runs of each
/// (condition set, model, k, f).
pub fn aggregate(outcomes: &[CellOutcome]) -> Vec<SeriesPoint> {
    type Key = (String, String, usize, f64);
    let mut groups: Vec<(Key, Vec<f64>)> = Vec::new();
    for o in outcomes {
        let Some(mrr) = o.mrr else { continue };
        let key = (
            o.cell.spec.effective_conditions().to_string(),
            o.cell.spec.kind.to_string(),
            o.cell.k,
            o.cell.f,
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(mrr),
            None => groups.push((key, vec![mrr])),
        }
    }
    groups
        .into_iter()
        .map(|((conditions, model, k, f), values)| {
            let (mean, sd) = mean_sd(&values);
            SeriesPoint {
                conditions,
                model,
                k,
                f,
                runs: values.len(),
                mean,
                sd,
            }
        })
        .collect()
}

fn series_csv(mut points: Vec<SeriesPoint>, by_f: bool) -> String {
    points.sort_by(|a, b| {
        let head = (&a.conditions, &a.model).cmp(&(&b.conditions, &b.model));
        let tail = if by_f {
            a.k.cmp(&b.k).then(a.f.total_cmp(&b.f))
        } else {
            a.f.total_cmp(&b.f).then(a.k.cmp(&b.k))
        };
        head.then(tail)
    });
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.conditions, p.model, p.k, p.f, p.runs, p.mean, p.sd
        ));
    }
    out
}

/// MRR against the drop fraction, one line per panel, model and k.
pub fn series_mrr_vs_f(outcomes: &[CellOutcome]) -> String {
    series_csv(aggregate(outcomes), true)
}

/// MRR against the pruning threshold, one line per panel, model and f.
pub fn series_mrr_vs_k(outcomes: &[CellOutcome]) -> String {
    series_csv(aggregate(outcomes), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::chronological_split;

    fn corpus() -> Vec<Document> {
        let sets: [&[&str]; 4] = [&["a", "b", "c"], &["a", "b"], &["c", "d", "e"], &["d", "e"]];
        (0..40)
            .map(|i| Document {
                id: format!("d{i}"),
                year: if i < 30 { 2010 } else { 2011 },
                title: format!("topic {} paper", i % 4),
                authors: vec![format!("au{}", i % 3)],
                venue: String::new(),
                labels: vec![],
                items: sets[i % 4].iter().map(|s| s.to_string()).collect(),
            })
            .collect()
    }

    fn config() -> GridConfig {
        GridConfig {
            fs: vec![0.3, 0.6],
            models: vec![ModelKind::Cooc, ModelKind::Svd],
            runs: 3,
            seed: 5,
            ..GridConfig::default()
        }
    }

    #[test]
    fn two_models_two_fractions_three_runs_make_twelve_rows() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cells = plan(&config(), &split).unwrap();
        assert_eq!(cells.len(), 12);
        let out = execute(&config(), &split, &cells, 2).unwrap();
        let csv = results_csv(&out, false);
        assert_eq!(csv.lines().count(), 13);
        assert!(out.iter().all(|o| o.error.is_none()));
    }

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cells = plan(&config(), &split).unwrap();
        let one = results_csv(&execute(&config(), &split, &cells, 1).unwrap(), false);
        let four = results_csv(&execute(&config(), &split, &cells, 4).unwrap(), false);
        assert_eq!(one, four);
    }

    #[test]
    fn reduced_condition_sets_are_not_repeated() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cfg = GridConfig {
            models: vec![ModelKind::Cooc, ModelKind::Mlp],
            conditions: vec![
                ConditionChoice::Set(ConditionSet::none()),
                ConditionChoice::Set(ConditionSet::title()),
            ],
            ..GridConfig::default()
        };
        let labels: Vec<String> = plan(&cfg, &split)
            .unwrap()
            .iter()
            .map(|c| c.spec.label())
            .collect();
        assert_eq!(labels, vec!["cooc@none", "mlp@title"]);
    }

    #[test]
    fn missing_blocks_and_empty_lists_are_config_errors() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cfg = GridConfig {
            conditions: vec!["venue".parse().unwrap()],
            ..GridConfig::default()
        };
        let err = plan(&cfg, &split).unwrap_err();
        assert!(
            err.is_config_error() && err.to_string().contains("venue"),
            "{err}"
        );
        let cfg = GridConfig {
            fs: vec![],
            ..GridConfig::default()
        };
        assert!(plan(&cfg, &split).unwrap_err().is_config_error());
    }

    #[test]
    fn all_resolves_to_available_blocks() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cfg = GridConfig {
            models: vec![ModelKind::Ae],
            conditions: vec![ConditionChoice::AllAvailable],
            ..GridConfig::default()
        };
        let cells = plan(&cfg, &split).unwrap();
        assert_eq!(cells[0].spec.label(), "ae@title+author");
    }

    #[test]
    fn failing_cell_is_recorded_and_others_complete() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cfg = GridConfig {
            ks: vec![1, 100],
            ..GridConfig::default()
        };
        let cells = plan(&cfg, &split).unwrap();
        let out = execute(&cfg, &split, &cells, 1).unwrap();
        assert!(out[0].error.is_none());
        assert!(out[1].error.as_deref().unwrap().contains("k=100"));
        let csv = results_csv(&out, false);
        assert!(csv
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("cooc,none,100,0.5,0,,0,,"));
    }

    #[test]
    fn filter_selects_by_key() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cells = plan(&config(), &split).unwrap();
        let only: CellFilter = "svd:1:0.6:2".parse().unwrap();
        let picked: Vec<String> = cells
            .iter()
            .filter(|c| only.matches(c))
            .map(Cell::key)
            .collect();
        assert_eq!(picked, vec!["svd@none:1:0.6:2"]);
        let any: CellFilter = "*:*:0.3:*".parse().unwrap();
        assert_eq!(cells.iter().filter(|c| any.matches(c)).count(), 6);
        assert!("svd:1".parse::<CellFilter>().is_err());
    }

    #[test]
    fn series_aggregate_runs() {
        let split = chronological_split(&corpus(), 2011).unwrap();
        let cells = plan(&config(), &split).unwrap();
        let out = execute(&config(), &split, &cells, 1).unwrap();
        let s = series_mrr_vs_f(&out);
        assert_eq!(s.lines().count(), 5);
        assert!(s.lines().nth(1).unwrap().starts_with("none,cooc,1,0.3,3,"));
        assert_eq!(series_mrr_vs_k(&out).lines().count(), 5);
    }
}
