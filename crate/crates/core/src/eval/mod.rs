//! Drop-corruption of test rows and mean reciprocal rank.

mod experiment;

pub use experiment::{
    cell_corruption, check_leakage, run_cell, run_experiment, CellInputs, ExperimentOptions,
    Prepared, Task,
};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::features::ConditionSet;
use crate::models::ModelKind;
use crate::rng::seeded;
use crate::tensor::Matrix;

/// Test rows with a fraction of their items withheld.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedTestSet {
    /// What the models see.
    pub inputs: InteractionMatrix,
    /// Withheld items per row, sorted.
    pub omitted: Vec<Vec<usize>>,
    pub drop_fraction: f64,
    pub seed: u64,
}

/// Number of items withheld from a row with `nnz` items.
pub fn drop_count(nnz: usize, f: f64) -> usize {
    ((f * nnz as f64).floor() as usize).max(1)
}

/// Withholds `max(1, ⌊f·nnz⌋)` items per row, drawn uniformly without
/// replacement from one generator seeded by `seed`.
pub fn corrupt(x: &InteractionMatrix, f: f64, seed: u64) -> Result<CorruptedTestSet> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "drop fraction {f} outside (0, 1)"
        )));
    }
    let mut rng = seeded(seed);
    let mut inputs = Vec::with_capacity(x.n_rows());
    let mut omitted = Vec::with_capacity(x.n_rows());
    for (r, row) in x.iter_rows().enumerate() {
        if row.len() < 2 {
            return Err(Error::Validation(format!(
                "test row {r} has {} items; at least 2 are needed",
                row.len()
            )));
        }
        let mut drop = vec![false; row.len()];
        for i in sample(&mut rng, row.len(), drop_count(row.len(), f)) {
            drop[i] = true;
        }
        let (mut gone, mut kept) = (Vec::new(), Vec::new());
        for (&item, d) in row.iter().zip(drop) {
            if d {
                gone.push(item)
            } else {
                kept.push(item)
            }
        }
        omitted.push(gone);
        inputs.push(kept);
    }
    Ok(CorruptedTestSet {
        inputs: InteractionMatrix::new(x.n_cols(), inputs)?,
        omitted,
        drop_fraction: f,
        seed,
    })
}

/// `true` when item `a` ranks ahead of item `b`: higher score first, ties
/// broken by ascending index.
fn ahead(scores: &[f64], a: usize, b: usize) -> bool {
    match scores[a].total_cmp(&scores[b]) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => a < b,
        std::cmp::Ordering::Less => false,
    }
}

/// `1 / position` of the best-ranked omitted item. With `mask_observed`, the
/// input items are removed from the ranking first. Both item lists must be
/// sorted; `omitted` must be non-empty.
pub fn reciprocal_rank(
    scores: &[f64],
    input: &[usize],
    omitted: &[usize],
    mask_observed: bool,
) -> f64 {
    let best = omitted
        .iter()
        .copied()
        .reduce(|a, b| if ahead(scores, b, a) { b } else { a })
        .expect("at least one omitted item");
    let mut position = 1usize;
    for j in 0..scores.len() {
        if j != best
            && ahead(scores, j, best)
            && !(mask_observed && input.binary_search(&j).is_ok())
        {
            position += 1;
        }
    }
    1.0 / position as f64
}

/// Reciprocal rank of every row.
pub fn reciprocal_ranks(
    pred: &Matrix,
    corrupted: &CorruptedTestSet,
    mask_observed: bool,
) -> Result<Vec<f64>> {
    let (rows, cols) = pred.shape();
    if rows != corrupted.omitted.len() || cols != corrupted.inputs.n_cols() {
        return Err(Error::Shape {
            op: "mrr",
            left: pred.shape(),
            right: (corrupted.omitted.len(), corrupted.inputs.n_cols()),
        });
    }
    Ok((0..rows)
        .map(|r| {
            reciprocal_rank(
                pred.row(r),
                corrupted.inputs.row(r),
                &corrupted.omitted[r],
                mask_observed,
            )
        })
        .collect())
}

pub fn mrr(pred: &Matrix, corrupted: &CorruptedTestSet, mask_observed: bool) -> Result<f64> {
    let rr = reciprocal_ranks(pred, corrupted, mask_observed)?;
    if rr.is_empty() {
        return Err(Error::InvalidArgument("no test rows to evaluate".into()));
    }
    Ok(rr.iter().sum::<f64>() / rr.len() as f64)
}

/// Expected reciprocal rank of a single target under a uniformly random
/// ranking of `n` candidates: `H(n)/n`.
pub fn random_ranker_mrr(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum::<f64>() / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub mrr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: ModelKind,
    pub conditions: ConditionSet,
    pub k: usize,
    pub f: f64,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Sample standard deviation over runs (zero for a single run).
    pub sd: f64,
}

impl MetricReport {
    pub fn new(
        model: ModelKind,
        conditions: ConditionSet,
        k: usize,
        f: f64,
        runs: Vec<RunResult>,
    ) -> Self {
        let (mean, sd) = mean_sd(&runs.iter().map(|r| r.mrr).collect::<Vec<_>>());
        MetricReport {
            model,
            conditions,
            k,
            f,
            runs,
            mean,
            sd,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub const CSV_HEADER: &'static str = "model,condition_blocks,k,f,run,mrr,seed,seconds";

    /// One CSV line per run, in the order of `CSV_HEADER`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{:.3}",
                    self.model, self.conditions, self.k, self.f, r.run, r.mrr, r.seed, r.seconds
                )
            })
            .collect()
    }
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
