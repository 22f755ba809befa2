//! Documents, pruned item vocabularies, splits and sparse interaction matrices.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub year: i32,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub venue: String,
    #[serde(default)]
    pub labels: Vec<String>,
    pub items: Vec<String>,
}

impl Document {
    /// Removes repeated items, keeping the first occurrence of each.
    pub fn dedup_items(&mut self) {
        let mut seen = HashSet::with_capacity(self.items.len());
        self.items.retain(|item| seen.insert(item.clone()));
    }
}

/// Raw line shape used while loading: every field optional so that missing
/// required keys are reported as validation errors with a line number.
#[derive(Deserialize)]
struct RawDocument {
    id: Option<String>,
    year: Option<i32>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    authors: Option<Vec<String>>,
    #[serde(default)]
    venue: Option<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    items: Option<Vec<String>>,
}

/// Problems found in one line of a corpus file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineViolation {
    pub line: usize,
    pub message: String,
}

fn parse_line(line: &str, number: usize) -> std::result::Result<Document, LineViolation> {
    let raw: RawDocument = serde_json::from_str(line).map_err(|e| LineViolation {
        line: number,
        message: format!("malformed JSON: {e}"),
    })?;
    let missing = |key: &str| LineViolation {
        line: number,
        message: format!("missing required key \"{key}\""),
    };
    let id = raw.id.ok_or_else(|| missing("id"))?;
    if id.is_empty() {
        return Err(LineViolation {
            line: number,
            message: "empty \"id\"".into(),
        });
    }
    let year = raw.year.ok_or_else(|| missing("year"))?;
    let items = raw.items.ok_or_else(|| missing("items"))?;
    let mut doc = Document {
        id,
        year,
        title: raw.title.unwrap_or_default(),
        authors: raw.authors.unwrap_or_default(),
        venue: raw.venue.unwrap_or_default(),
        labels: raw.labels.unwrap_or_default(),
        items,
    };
    doc.dedup_items();
    Ok(doc)
}

/// Reads a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut duplicates = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_line(&line, number).map_err(|v| Error::Parse {
            line: v.line,
            message: v.message,
        })?;
        if first_line.insert(doc.id.clone(), number).is_some() {
            duplicates.push(doc.id.clone());
        }
        docs.push(doc);
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        duplicates.dedup();
        return Err(Error::Validation(format!(
            "duplicate document ids: {}",
            duplicates.join(", ")
        )));
    }
    Ok(docs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

/// Field availability and schema problems of a corpus file, without failing
/// on the first violation.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub documents: usize,
    pub with_title: usize,
    pub with_authors: usize,
    pub with_venue: usize,
    pub with_labels: usize,
    pub with_items: usize,
    pub violations: Vec<LineViolation>,
}

impl ValidationReport {
    pub fn percent(&self, count: usize) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.documents as f64
        }
    }
}

pub fn validate_corpus<R: BufRead>(reader: R) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, number) {
            Ok(doc) => {
                if let Some(first) = seen.insert(doc.id.clone(), number) {
                    report.violations.push(LineViolation {
                        line: number,
                        message: format!("duplicate id \"{}\" (first on line {first})", doc.id),
                    });
                    continue;
                }
                report.documents += 1;
                report.with_title += !doc.title.trim().is_empty() as usize;
                report.with_authors += !doc.authors.is_empty() as usize;
                report.with_venue += !doc.venue.trim().is_empty() as usize;
                report.with_labels += !doc.labels.is_empty() as usize;
                report.with_items += !doc.items.is_empty() as usize;
            }
            Err(v) => report.violations.push(v),
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub split_year: Option<i32>,
}

/// Train on documents published before `split_year`, test on the rest.
pub fn chronological_split(docs: &[Document], split_year: i32) -> Result<SplitCorpus> {
    let (train, test): (Vec<_>, Vec<_>) = docs.iter().cloned().partition(|d| d.year < split_year);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation(format!(
            "split at year {split_year} leaves {} training and {} test documents",
            train.len(),
            test.len()
        )));
    }
    Ok(SplitCorpus {
        train,
        test,
        split_year: Some(split_year),
    })
}

/// Holds out `round(test_ratio · |docs|)` documents chosen by `seed`.
/// Both parts keep the original document order.
pub fn random_split(docs: &[Document], test_ratio: f64, seed: u64) -> Result<SplitCorpus> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test ratio must lie in (0, 1), got {test_ratio}"
        )));
    }
    let test_count = (test_ratio * docs.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = crate::rng::seeded(crate::rng::derive_seed(seed, crate::rng::tags::SPLIT));
    order.shuffle(&mut rng);
    let mut is_test = vec![false; docs.len()];
    for &i in &order[..test_count] {
        is_test[i] = true;
    }
    let mut train = Vec::with_capacity(docs.len() - test_count);
    let mut test = Vec::with_capacity(test_count);
    for (doc, &t) in docs.iter().zip(&is_test) {
        if t {
            test.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok(SplitCorpus {
        train,
        test,
        split_year: None,
    })
}

/// Item vocabulary restricted to items seen more than `k` times in training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    items: Vec<String>,
    counts: Vec<usize>,
    index: HashMap<String, usize>,
    pruning: usize,
}

impl Vocabulary {
    fn from_sorted(items: Vec<String>, counts: Vec<usize>, pruning: usize) -> Self {
        let index = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocabulary {
            items,
            counts,
            index,
            pruning,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn item(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn count(&self, index: usize) -> usize {
        self.counts[index]
    }

    pub fn pruning(&self) -> usize {
        self.pruning
    }

    pub fn contains(&self, item: &str) -> bool {
        self.index.contains_key(item)
    }

    /// Stable digest of the ordered item list, used to pair serialized
    /// models with the vocabulary they were trained on.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for item in &self.items {
            hasher.update((item.len() as u64).to_le_bytes());
            hasher.update(item.as_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

/// Counts item occurrences over `train_docs` and keeps items with count
/// strictly greater than `k`. Indices go by descending count, ties broken by
/// item id.
pub fn build_vocabulary(train_docs: &[Document], k: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in train_docs {
        for item in &doc.items {
            *counts.entry(item.as_str()).or_insert(0) += 1;
        }
    }
    let max_count = counts.values().copied().max().unwrap_or(0);
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c > k).collect();
    if kept.is_empty() {
        return Err(Error::Validation(format!(
            "empty vocabulary at pruning threshold k={k} (max item count {max_count})"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (items, counts): (Vec<String>, Vec<usize>) =
        kept.into_iter().map(|(s, c)| (s.to_owned(), c)).unzip();
    Ok(Vocabulary::from_sorted(items, counts, k))
}

/// Restricts every document to vocabulary items and drops documents with
/// fewer than two survivors.
pub fn apply_vocabulary(docs: &[Document], vocab: &Vocabulary) -> Vec<Document> {
    let filtered: Vec<Document> = docs
        .iter()
        .filter_map(|doc| {
            let items: Vec<String> = doc
                .items
                .iter()
                .filter(|item| vocab.contains(item))
                .cloned()
                .collect();
            (items.len() >= 2).then(|| Document {
                items,
                ..doc.clone()
            })
        })
        .collect();
    let dropped = docs.len() - filtered.len();
    if dropped > 0 {
        info!(
            "dropped {dropped} of {} documents with fewer than two vocabulary items",
            docs.len()
        );
    }
    filtered
}

/// Sparse binary matrix in row-major form; every row holds strictly
/// ascending column indices with implicit value 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    cols: usize,
    rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    /// Sorts and deduplicates each row; fails on out-of-range columns.
    pub fn new(cols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut rows = rows;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= cols {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} has column {last} outside [0, {cols})"
                    )));
                }
            }
        }
        Ok(InteractionMatrix { cols, rows })
    }

    pub fn from_dense(dense: &Matrix) -> Self {
        let rows = dense
            .iter_rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        InteractionMatrix {
            cols: dense.cols(),
            rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[usize]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Number of rows containing each column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for row in &self.rows {
            for &j in row {
                counts[j] += 1;
            }
        }
        counts
    }

    pub fn to_dense(&self) -> Matrix {
        self.dense_rows(&(0..self.rows.len()).collect::<Vec<_>>())
    }

    /// Dense copy of the selected rows, in the given order.
    pub fn dense_rows(&self, indices: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(indices.len(), self.cols);
        for (o, &i) in indices.iter().enumerate() {
            let row = out.row_mut(o);
            for &j in &self.rows[i] {
                row[j] = 1.0;
            }
        }
        out
    }
}

/// Maps documents to vocabulary rows. Fails if an item is missing from the
/// vocabulary, which means the documents were not filtered first.
pub fn to_matrix(docs: &[Document], vocab: &Vocabulary) -> Result<InteractionMatrix> {
    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut row = Vec::with_capacity(doc.items.len());
        for item in &doc.items {
            let idx = vocab.index_of(item).ok_or_else(|| {
                Error::Model(format!(
                    "document {} holds item {item:?} outside the vocabulary; apply_vocabulary first",
                    doc.id
                ))
            })?;
            row.push(idx);
        }
        rows.push(row);
    }
    InteractionMatrix::new(vocab.len(), rows)
}
