//! Side-information vectors: TF-IDF weighted bags of embedded words for
//! titles and venues, author indices for trainable author embeddings, and a
//! TF-IDF bag over label strings.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Term counts in first-occurrence order.
fn term_frequencies(tokens: &[String]) -> Vec<(&str, usize)> {
    let mut order: Vec<(&str, usize)> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        match pos.get(t.as_str()) {
            Some(&i) => order[i].1 += 1,
            None => {
                pos.insert(t, order.len());
                order.push((t, 1));
            }
        }
    }
    order
}

/// Document frequencies over a training corpus. The token list is kept sorted
/// so that bag-of-words columns have a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfModel {
    doc_count: usize,
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TfidfModel {
    /// Fits on pre-tokenized documents.
    pub fn fit<I, T>(documents: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[String]>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut doc_count = 0;
        for doc in documents {
            doc_count += 1;
            let unique: BTreeSet<&String> = doc.as_ref().iter().collect();
            for t in unique {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let mut pairs: Vec<(String, usize)> = df.into_iter().collect();
        pairs.sort();
        let (tokens, doc_freq): (Vec<String>, Vec<usize>) = pairs.into_iter().unzip();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TfidfModel {
            doc_count,
            tokens,
            doc_freq,
            index,
        }
    }

    pub fn fit_field(train_docs: &[Document], field: TextField) -> Self {
        Self::fit(train_docs.iter().map(|d| field.tokens(d)))
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self, token: &str) -> Option<usize> {
        self.index.get(token).map(|&i| self.doc_freq[i])
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`; tokens
    /// never seen in training take `df = 0`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.doc_freq(token).unwrap_or(0) as f64;
        ((1.0 + self.doc_count as f64) / (1.0 + df)).ln() + 1.0
    }

    /// L2-normalized TF-IDF vector over the model's own token columns.
    /// Tokens outside the model are ignored.
    pub fn bag_of_words(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.tokens.len()];
        for (t, tf) in term_frequencies(tokens) {
            if let Some(&j) = self.index.get(t) {
                out[j] = tf as f64 * self.idf(t);
            }
        }
        l2_normalize(&mut out);
        out
    }
}

/// Word vectors keyed by token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((token, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Validation(format!(
                "embedding for {token:?} has length {}, expected {dim}",
                v.len()
            )));
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    /// Seeded fallback table, uniform in `[-0.5/dim, 0.5/dim]`. Vectors are
    /// drawn in sorted token order so the table does not depend on hashing.
    pub fn random<'a>(tokens: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Self {
        let sorted: BTreeSet<&str> = tokens.into_iter().collect();
        let bound = 0.5 / dim as f64;
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
        let mut rng = crate::rng::seeded(seed);
        let vectors = sorted
            .into_iter()
            .map(|t| {
                (
                    t.to_owned(),
                    (0..dim).map(|_| dist.sample(&mut rng)).collect(),
                )
            })
            .collect();
        EmbeddingTable { dim, vectors }
    }

    /// Parses `token v1 … v_d` lines. A leading `count dim` header line is
    /// detected and skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim: Option<usize> = None;
        for (idx, line) in reader.lines().enumerate() {
            let number = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: number,
                message: e.to_string(),
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if number == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok())
            {
                dim = Some(fields[1].parse().expect("checked above"));
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    line: number,
                    message: format!("bad vector component: {e}"),
                })?;
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(Error::Parse {
                    line: number,
                    message: format!(
                        "vector has {} components, expected {expected}",
                        values.len()
                    ),
                });
            }
            vectors.insert(fields[0].to_owned(), values);
        }
        let dim = dim.ok_or_else(|| Error::Validation("embedding file holds no vectors".into()))?;
        Ok(EmbeddingTable { dim, vectors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// TF-IDF weighted sum of the embeddings of the tokens in `text`, L2
/// normalized. Returns the zero vector when no token has an embedding.
pub fn embed_text(text: &str, tfidf: &TfidfModel, table: &EmbeddingTable) -> Vec<f64> {
    embed_tokens(&tokenize(text), tfidf, table)
}

fn embed_tokens(tokens: &[String], tfidf: &TfidfModel, table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim()];
    for (t, tf) in term_frequencies(tokens) {
        if let Some(v) = table.get(t) {
            let w = tf as f64 * tfidf.idf(t);
            for (o, &x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
    }
    l2_normalize(&mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextField {
    Title,
    Venue,
    /// Label strings taken whole, one token per label.
    Labels,
}

impl TextField {
    pub fn tokens(self, doc: &Document) -> Vec<String> {
        match self {
            TextField::Title => tokenize(&doc.title),
            TextField::Venue => tokenize(&doc.venue),
            TextField::Labels => doc.labels.clone(),
        }
    }
}

/// Author → dense index, most frequent first. Index `len()` is the shared
/// bucket for authors unseen in training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthorIndex {
    authors: Vec<String>,
    index: HashMap<String, usize>,
}

impl AuthorIndex {
    pub fn fit(train_docs: &[Document]) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in train_docs {
            for a in &doc.authors {
                *counts.entry(a.as_str()).or_insert(0) += 1;
            }
        }
        let mut pairs: Vec<(&str, usize)> = counts.into_iter().collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let authors: Vec<String> = pairs.into_iter().map(|(a, _)| a.to_owned()).collect();
        let index = authors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        AuthorIndex { authors, index }
    }

    pub fn len(&self) -> usize {
        self.authors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.authors.is_empty()
    }

    pub fn unknown(&self) -> usize {
        self.authors.len()
    }

    pub fn lookup(&self, author: &str) -> usize {
        self.index.get(author).copied().unwrap_or(self.unknown())
    }

    pub fn indices(&self, doc: &Document) -> Vec<usize> {
        doc.authors.iter().map(|a| self.lookup(a)).collect()
    }
}

pub fn index_authors(train_docs: &[Document]) -> AuthorIndex {
    AuthorIndex::fit(train_docs)
}

/// Metadata block of a condition vector. The declaration order is the
/// concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Title,
    Author,
    Venue,
    Labels,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Title, Block::Author, Block::Venue, Block::Labels];

    pub fn name(self) -> &'static str {
        match self {
            Block::Title => "title",
            Block::Author => "author",
            Block::Venue => "venue",
            Block::Labels => "labels",
        }
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "title" => Ok(Block::Title),
            "author" | "authors" => Ok(Block::Author),
            "venue" | "journal" => Ok(Block::Venue),
            "labels" | "label" => Ok(Block::Labels),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition block {other:?}"
            ))),
        }
    }
}

/// Ordered, duplicate-free set of active blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionSet(Vec<Block>);

impl ConditionSet {
    pub fn none() -> Self {
        ConditionSet(Vec::new())
    }

    pub fn new(blocks: impl IntoIterator<Item = Block>) -> Self {
        let set: BTreeSet<Block> = blocks.into_iter().collect();
        ConditionSet(set.into_iter().collect())
    }

    pub fn title() -> Self {
        ConditionSet(vec![Block::Title])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, block: Block) -> bool {
        self.0.contains(&block)
    }
}

impl fmt::Display for ConditionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.0.iter().map(|b| b.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for ConditionSet {
    type Err = Error;

    /// `none`, or block names joined by `+`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(ConditionSet::none());
        }
        let blocks = s
            .split('+')
            .map(Block::from_str)
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionSet::new(blocks))
    }
}

#[derive(Clone, Debug)]
pub struct FeatureConfig {
    pub word_dim: usize,
    pub author_dim: usize,
    pub seed: u64,
    /// Pre-trained word vectors; a seeded random table is built when absent.
    pub embeddings: Option<EmbeddingTable>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            word_dim: 50,
            author_dim: 32,
            seed: 0,
            embeddings: None,
        }
    }
}

/// Feature models fitted on training documents.
#[derive(Clone, Debug)]
pub struct FeatureModels {
    pub title: Option<TfidfModel>,
    pub venue: Option<TfidfModel>,
    pub labels: Option<TfidfModel>,
    pub words: Option<EmbeddingTable>,
    pub authors: Option<AuthorIndex>,
    pub author_dim: usize,
}

impl FeatureModels {
    pub fn fit(train_docs: &[Document], blocks: &ConditionSet, config: &FeatureConfig) -> Self {
        let needs_words = blocks.contains(Block::Title) || blocks.contains(Block::Venue);
        let title = blocks
            .contains(Block::Title)
            .then(|| TfidfModel::fit_field(train_docs, TextField::Title));
        let venue = blocks
            .contains(Block::Venue)
            .then(|| TfidfModel::fit_field(train_docs, TextField::Venue));
        let labels = blocks
            .contains(Block::Labels)
            .then(|| TfidfModel::fit_field(train_docs, TextField::Labels));
        let words = needs_words.then(|| match &config.embeddings {
            Some(table) => table.clone(),
            None => {
                let vocab = title
                    .iter()
                    .chain(venue.iter())
                    .flat_map(|m| m.tokens().iter().map(String::as_str));
                EmbeddingTable::random(
                    vocab,
                    config.word_dim,
                    crate::rng::derive_seed(config.seed, crate::rng::tags::EMBEDDING),
                )
            }
        });
        let authors = blocks
            .contains(Block::Author)
            .then(|| AuthorIndex::fit(train_docs));
        FeatureModels {
            title,
            venue,
            labels,
            words,
            authors,
            author_dim: config.author_dim,
        }
    }

    pub fn block_width(&self, block: Block) -> Result<usize> {
        let missing = || {
            Error::Model(format!(
                "no fitted feature model for block {}",
                block.name()
            ))
        };
        match block {
            Block::Title | Block::Venue => {
                let fitted = match block {
                    Block::Title => self.title.is_some(),
                    _ => self.venue.is_some(),
                };
                match (&self.words, fitted) {
                    (Some(w), true) => Ok(w.dim()),
                    _ => Err(missing()),
                }
            }
            Block::Author => self
                .authors
                .as_ref()
                .map(|_| self.author_dim)
                .ok_or_else(missing),
            Block::Labels => self
                .labels
                .as_ref()
                .map(TfidfModel::len)
                .ok_or_else(missing),
        }
    }

    /// TF-IDF bag-of-words over title tokens (not embedded), one row per document.
    pub fn title_bag_of_words(&self, docs: &[Document]) -> Result<Matrix> {
        let model = self
            .title
            .as_ref()
            .ok_or_else(|| Error::Model("no fitted title model".into()))?;
        let rows: Vec<Vec<f64>> = docs
            .iter()
            .map(|d| model.bag_of_words(&TextField::Title.tokens(d)))
            .collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, model.len()));
        }
        Matrix::from_rows(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub block: Block,
    pub offset: usize,
    pub width: usize,
}

/// Dense side-information rows. The author block is left at zero here; the
/// owning model fills it with the mean of its trainable author embedding
/// rows, listed per document in `author_rows`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMatrix {
    pub values: Matrix,
    pub layout: Vec<BlockLayout>,
    pub author_rows: Option<Vec<Vec<usize>>>,
    /// Number of author embedding rows including the unknown bucket.
    pub author_vocab: usize,
}

impl ConditionMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn blocks(&self) -> ConditionSet {
        ConditionSet::new(self.layout.iter().map(|l| l.block))
    }

    pub fn author_layout(&self) -> Option<BlockLayout> {
        self.layout
            .iter()
            .copied()
            .find(|l| l.block == Block::Author)
    }

    /// Copy with only the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> ConditionMatrix {
        ConditionMatrix {
            values: self.values.select_rows(indices),
            layout: self.layout.clone(),
            author_rows: self
                .author_rows
                .as_ref()
                .map(|rows| indices.iter().map(|&i| rows[i].clone()).collect()),
            author_vocab: self.author_vocab,
        }
    }
}

/// Builds condition rows for `docs` in block order title ∥ author ∥ venue ∥ labels.
pub fn assemble_conditions(
    docs: &[Document],
    blocks: &ConditionSet,
    models: &FeatureModels,
) -> Result<ConditionMatrix> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("empty condition".into()));
    }
    let mut layout = Vec::new();
    let mut offset = 0;
    for &block in blocks.blocks() {
        let width = models.block_width(block)?;
        layout.push(BlockLayout {
            block,
            offset,
            width,
        });
        offset += width;
    }
    let mut values = Matrix::zeros(docs.len(), offset);
    for (i, doc) in docs.iter().enumerate() {
        let row = values.row_mut(i);
        for l in &layout {
            let target = &mut row[l.offset..l.offset + l.width];
            match l.block {
                Block::Title | Block::Venue => {
                    let (field, model) = match l.block {
                        Block::Title => (TextField::Title, models.title.as_ref()),
                        _ => (TextField::Venue, models.venue.as_ref()),
                    };
                    let words = models.words.as_ref().expect("width check passed");
                    let v = embed_tokens(&field.tokens(doc), model.expect("width check"), words);
                    target.copy_from_slice(&v);
                }
                Block::Labels => {
                    let model = models.labels.as_ref().expect("width check passed");
                    target.copy_from_slice(&model.bag_of_words(&doc.labels));
                }
                Block::Author => {}
            }
        }
    }
    let (author_rows, author_vocab) = match (&models.authors, blocks.contains(Block::Author)) {
        (Some(idx), true) => (
            Some(docs.iter().map(|d| idx.indices(d)).collect()),
            idx.len() + 1,
        ),
        _ => (None, 0),
    };
    Ok(ConditionMatrix {
        values,
        layout,
        author_rows,
        author_vocab,
    })
}
