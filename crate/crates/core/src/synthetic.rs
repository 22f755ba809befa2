//! Seeded synthetic corpora with known structure.
//!
//! * The block corpus groups items into blocks that are cited together, so
//!   co-occurrence carries the signal and titles carry none.
//! * The diversity corpus draws at most one item per topic group and names
//!   every drawn item in the title, so co-occurrence is nearly uninformative
//!   and the title determines the set.

use rand::distr::weighted::WeightedIndex;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::Distribution;

use crate::corpus::Document;
use crate::rng::{seeded, Rng};

/// Training documents are dated before this year, test documents in it.
pub const SPLIT_YEAR: i32 = 2010;

#[derive(Clone, Debug)]
pub struct BlockCorpusConfig {
    pub blocks: usize,
    pub block_size: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    /// Inclusive range of items drawn from the document's block.
    pub block_items: (usize, usize),
    /// Inclusive range of items drawn from the global popularity distribution.
    pub noise_items: (usize, usize),
    /// Zipf exponent of item popularity inside a block and globally.
    pub zipf: f64,
    pub title_words: usize,
    pub seed: u64,
}

impl Default for BlockCorpusConfig {
    fn default() -> Self {
        BlockCorpusConfig {
            blocks: 20,
            block_size: 10,
            train_docs: 2000,
            test_docs: 200,
            block_items: (3, 5),
            noise_items: (1, 2),
            zipf: 1.0,
            title_words: 6,
            seed: 0,
        }
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

fn filler_vocabulary(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("w{i}")).collect()
}

fn random_words(vocab: &[String], count: usize, rng: &mut Rng) -> Vec<String> {
    (0..count)
        .map(|_| vocab.choose(rng).expect("non-empty vocabulary").clone())
        .collect()
}

fn year_for(index: usize, train_docs: usize, rng: &mut Rng) -> i32 {
    if index < train_docs {
        rng.random_range(SPLIT_YEAR - 10..SPLIT_YEAR)
    } else {
        SPLIT_YEAR
    }
}

fn metadata(rng: &mut Rng) -> (Vec<String>, String) {
    let authors = (0..rng.random_range(1..=3))
        .map(|_| format!("author{}", rng.random_range(0..300)))
        .collect();
    let venue = format!("venue {}", rng.random_range(0..10));
    (authors, venue)
}

pub fn block_item(block: usize, j: usize) -> String {
    format!("b{block:02}i{j:02}")
}

/// Documents in generation order: training documents first, then test
/// documents dated `SPLIT_YEAR`.
pub fn block_corpus(config: &BlockCorpusConfig) -> Vec<Document> {
    let mut rng = seeded(config.seed);
    let n = config.blocks * config.block_size;
    let in_block =
        WeightedIndex::new(zipf_weights(config.block_size, config.zipf)).expect("positive weights");
    let mut global_order: Vec<usize> = (0..n).collect();
    global_order.shuffle(&mut rng);
    let global = WeightedIndex::new(zipf_weights(n, config.zipf)).expect("positive weights");
    let words = filler_vocabulary(500);
    let total = config.train_docs + config.test_docs;
    (0..total)
        .map(|d| {
            let block = rng.random_range(0..config.blocks);
            let want = rng
                .random_range(config.block_items.0..=config.block_items.1)
                .min(config.block_size);
            let mut chosen: Vec<usize> = Vec::new();
            while chosen.len() < want {
                let j = in_block.sample(&mut rng);
                if !chosen.contains(&j) {
                    chosen.push(j);
                }
            }
            let mut items: Vec<String> = chosen.iter().map(|&j| block_item(block, j)).collect();
            let noise = rng.random_range(config.noise_items.0..=config.noise_items.1);
            let mut added = 0;
            while added < noise {
                let g = global_order[global.sample(&mut rng)];
                let id = block_item(g / config.block_size, g % config.block_size);
                if !items.contains(&id) {
                    items.push(id);
                    added += 1;
                }
            }
            let (authors, venue) = metadata(&mut rng);
            Document {
                id: format!("blk{d:05}"),
                year: year_for(d, config.train_docs, &mut rng),
                title: random_words(&words, config.title_words, &mut rng).join(" "),
                authors,
                venue,
                labels: Vec::new(),
                items,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DiversityCorpusConfig {
    pub groups: usize,
    pub labels_per_group: usize,
    /// Inclusive range of groups a document draws one label from.
    pub groups_per_doc: (usize, usize),
    pub filler_words: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub seed: u64,
}

impl Default for DiversityCorpusConfig {
    fn default() -> Self {
        DiversityCorpusConfig {
            groups: 20,
            labels_per_group: 8,
            groups_per_doc: (3, 5),
            filler_words: 3,
            train_docs: 2000,
            test_docs: 200,
            seed: 0,
        }
    }
}

pub fn group_label(group: usize, j: usize) -> String {
    format!("g{group:02}l{j:02}")
}

/// Keyword naming a label in titles.
pub fn label_keyword(group: usize, j: usize) -> String {
    format!("kw{group:02}x{j:02}")
}

pub fn diversity_corpus(config: &DiversityCorpusConfig) -> Vec<Document> {
    let mut rng = seeded(config.seed);
    let words = filler_vocabulary(300);
    let groups: Vec<usize> = (0..config.groups).collect();
    let total = config.train_docs + config.test_docs;
    (0..total)
        .map(|d| {
            let count = rng
                .random_range(config.groups_per_doc.0..=config.groups_per_doc.1)
                .min(config.groups);
            let picked: Vec<usize> = groups.choose_multiple(&mut rng, count).copied().collect();
            let mut items = Vec::with_capacity(count);
            let mut title = random_words(&words, config.filler_words, &mut rng);
            for &g in &picked {
                let j = rng.random_range(0..config.labels_per_group);
                items.push(group_label(g, j));
                title.push(label_keyword(g, j));
            }
            title.shuffle(&mut rng);
            let (authors, venue) = metadata(&mut rng);
            Document {
                id: format!("div{d:05}"),
                year: year_for(d, config.train_docs, &mut rng),
                title: title.join(" "),
                authors,
                venue,
                labels: Vec::new(),
                items,
            }
        })
        .collect()
}
