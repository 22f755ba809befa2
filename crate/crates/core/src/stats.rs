//! Dataset characteristics: power-law exponent of item degrees, normalized
//! mutual information of item co-occurrence, and density.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{apply_vocabulary, build_vocabulary, to_matrix, Document, InteractionMatrix};
use crate::error::{Error, Result};

/// Maximum-likelihood exponent with minimum degree 1:
/// `α = 1 + n / Σ ln(deg)`.
pub fn powerlaw_alpha(degrees: &[f64]) -> Result<f64> {
    if degrees.is_empty() {
        return Err(Error::InvalidArgument(
            "alpha undefined (no degrees)".into(),
        ));
    }
    if let Some(bad) = degrees.iter().find(|&&d| !(d >= 1.0 && d.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "degree {bad} below the minimum of 1"
        )));
    }
    let log_sum: f64 = degrees.iter().map(|d| d.ln()).sum();
    if log_sum == 0.0 {
        return Err(Error::InvalidArgument(
            "alpha undefined (zero log-sum)".into(),
        ));
    }
    Ok(1.0 + degrees.len() as f64 / log_sum)
}

/// Mutual information of the item co-occurrence distribution divided by the
/// item entropy, in nats.
///
/// The joint is the co-occurrence count matrix `XᵀX` (diagonal included)
/// normalized to sum 1, and both marginals are its row sums. The value lies
/// in `[0, 1]` and is zero exactly when the joint factorizes, for instance
/// when every document holds every item.
pub fn normalized_mi(x: &InteractionMatrix) -> Result<f64> {
    let n = x.n_cols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "mutual information needs at least two items, got {n}"
        )));
    }
    let mut pairs: HashMap<(usize, usize), u64> = HashMap::new();
    let mut marginal = vec![0u64; n];
    for row in x.iter_rows() {
        let len = row.len() as u64;
        for &i in row {
            marginal[i] += len;
            for &j in row {
                *pairs.entry((i, j)).or_default() += 1;
            }
        }
    }
    if !pairs.keys().any(|&(i, j)| i != j) {
        return Err(Error::InvalidArgument("no co-occurring item pair".into()));
    }
    let total: u64 = marginal.iter().sum();
    let mut entries: Vec<((usize, usize), u64)> = pairs.into_iter().collect();
    entries.sort_unstable();
    let mut mi = 0.0;
    for ((i, j), c) in entries {
        let q = c as f64 / total as f64;
        // q / (p_i p_j) as an exact integer ratio
        let num = u128::from(c) * u128::from(total);
        let den = u128::from(marginal[i]) * u128::from(marginal[j]);
        let ratio = if num == den {
            1.0
        } else {
            num as f64 / den as f64
        };
        mi += q * ratio.ln();
    }
    let mut entropy = 0.0;
    for &r in &marginal {
        if r > 0 {
            let p = r as f64 / total as f64;
            entropy -= p * p.ln();
        }
    }
    if entropy == 0.0 {
        return Err(Error::InvalidArgument("item entropy is zero".into()));
    }
    Ok(mi / entropy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub k: usize,
    pub items: usize,
    pub interactions: usize,
    pub documents: usize,
    pub density: f64,
    pub alpha: f64,
    pub mi: f64,
}

impl DatasetSummary {
    pub const CSV_HEADER: &'static str = "dataset,k,items,interactions,documents,density,alpha,mi";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.4},{:.4}",
            self.dataset,
            self.k,
            self.items,
            self.interactions,
            self.documents,
            self.density,
            self.alpha,
            self.mi
        )
    }
}

/// Prunes the whole corpus at `k` and characterizes what survives.
pub fn summarize(dataset: &str, docs: &[Document], k: usize) -> Result<DatasetSummary> {
    let vocab = build_vocabulary(docs, k)?;
    let kept = apply_vocabulary(docs, &vocab);
    if kept.is_empty() {
        return Err(Error::Validation(format!(
            "no document keeps two items at k={k}"
        )));
    }
    let x = to_matrix(&kept, &vocab)?;
    summarize_matrix(dataset, k, &x)
}

pub fn summarize_matrix(dataset: &str, k: usize, x: &InteractionMatrix) -> Result<DatasetSummary> {
    let (m, n) = (x.n_rows(), x.n_cols());
    if m == 0 || n == 0 {
        return Err(Error::Validation(format!(
            "empty interaction matrix ({m}x{n})"
        )));
    }
    let degrees: Vec<f64> = x
        .column_counts()
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| c as f64)
        .collect();
    let interactions = x.nnz();
    Ok(DatasetSummary {
        dataset: dataset.to_string(),
        k,
        items: n,
        interactions,
        documents: m,
        density: interactions as f64 / (m as f64 * n as f64),
        alpha: powerlaw_alpha(&degrees)?,
        mi: normalized_mi(x)?,
    })
}
