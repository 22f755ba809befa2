use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    apply_vocabulary, build_vocabulary, to_matrix, Document, InteractionMatrix, SplitCorpus,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::features::{
    assemble_conditions, Block, ConditionMatrix, ConditionSet, FeatureConfig, FeatureModels,
};
use crate::models::{fit, ModelInput, RecommenderSpec};
use crate::rng::{derive_seed, tags};
use crate::tensor::Matrix;

use super::{corrupt, mrr, CorruptedTestSet, MetricReport, RunResult};

/// What the items of a corpus are. Subject labels as items make the label
/// metadata a copy of the target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Citation,
    Subject,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "citation" | "citations" => Ok(Task::Citation),
            "subject" | "subjects" | "labels" => Ok(Task::Subject),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// Refuses the label block as a condition when labels are the prediction target.
pub fn check_leakage(task: Task, conditions: &ConditionSet) -> Result<()> {
    if task == Task::Subject && conditions.contains(Block::Labels) {
        return Err(Error::InvalidArgument(
            "the labels block cannot be a condition in a subject-label task: the labels are the items to predict"
                .into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    pub mask_observed: bool,
    pub task: Task,
    pub features: FeatureConfig,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            mask_observed: true,
            task: Task::Citation,
            features: FeatureConfig::default(),
        }
    }
}

/// One pruning level of a split: vocabulary, filtered documents, interaction
/// matrices and feature models fitted on the training part.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub k: usize,
    pub vocab: Vocabulary,
    pub train_docs: Vec<Document>,
    pub test_docs: Vec<Document>,
    pub x_train: InteractionMatrix,
    pub x_test: InteractionMatrix,
    pub features: FeatureModels,
}

pub struct CellInputs {
    pub train_conditions: Option<ConditionMatrix>,
    pub test_conditions: Option<ConditionMatrix>,
    pub train_text: Option<Matrix>,
    pub test_text: Option<Matrix>,
}

impl Prepared {
    pub fn new(split: &SplitCorpus, k: usize, features: &FeatureConfig) -> Result<Self> {
        let vocab = build_vocabulary(&split.train, k)?;
        let train_docs = apply_vocabulary(&split.train, &vocab);
        let test_docs = apply_vocabulary(&split.test, &vocab);
        if train_docs.is_empty() || test_docs.is_empty() {
            return Err(Error::Validation(format!(
                "pruning at k={k} leaves {} training and {} test documents",
                train_docs.len(),
                test_docs.len()
            )));
        }
        let x_train = to_matrix(&train_docs, &vocab)?;
        let x_test = to_matrix(&test_docs, &vocab)?;
        let features = FeatureModels::fit(&train_docs, &ConditionSet::new(Block::ALL), features);
        Ok(Prepared {
            k,
            vocab,
            train_docs,
            test_docs,
            x_train,
            x_test,
            features,
        })
    }

    pub fn n_items(&self) -> usize {
        self.vocab.len()
    }

    /// Side information the model needs, for training and test documents.
    pub fn inputs_for(&self, spec: &RecommenderSpec) -> Result<CellInputs> {
        let mut inputs = CellInputs {
            train_conditions: None,
            test_conditions: None,
            train_text: None,
            test_text: None,
        };
        if spec.needs_conditions() {
            inputs.train_conditions = Some(assemble_conditions(
                &self.train_docs,
                &spec.conditions,
                &self.features,
            )?);
            inputs.test_conditions = Some(assemble_conditions(
                &self.test_docs,
                &spec.conditions,
                &self.features,
            )?);
        }
        if spec.needs_text() {
            inputs.train_text = Some(self.features.title_bag_of_words(&self.train_docs)?);
            inputs.test_text = Some(self.features.title_bag_of_words(&self.test_docs)?);
        }
        Ok(inputs)
    }
}

/// Omissions of the test documents for one `(k, f, run)` cell. It takes no
/// model, so every model in the cell sees the same corruption.
pub fn cell_corruption(
    prepared: &Prepared,
    f: f64,
    run: usize,
    base_seed: u64,
) -> Result<CorruptedTestSet> {
    let seed = base_seed.wrapping_add(run as u64);
    corrupt(&prepared.x_test, f, derive_seed(seed, tags::CORRUPTION))
}

/// Trains and evaluates one model for one `(k, f, run)` cell. The run seed
/// `base_seed + run` drives model randomness; the corruption is derived from
/// it alone, so every model in the cell sees the same omissions.
pub fn run_cell(
    spec: &RecommenderSpec,
    prepared: &Prepared,
    f: f64,
    run: usize,
    base_seed: u64,
    options: &ExperimentOptions,
) -> Result<RunResult> {
    check_leakage(options.task, &spec.conditions)?;
    let start = Instant::now();
    let seed = base_seed.wrapping_add(run as u64);
    let mut spec = spec.clone();
    spec.hyper.seed = seed;
    let corrupted = cell_corruption(prepared, f, run, base_seed)?;
    let inputs = prepared.inputs_for(&spec)?;
    let mut train = ModelInput::items(&prepared.x_train);
    train.conditions = inputs.train_conditions.as_ref();
    train.text = inputs.train_text.as_ref();
    let model = fit(&spec, &prepared.vocab, &train)?;
    let mut test = ModelInput::items(&corrupted.inputs);
    test.conditions = inputs.test_conditions.as_ref();
    test.text = inputs.test_text.as_ref();
    let scores = model.score(&test)?;
    let value = mrr(&scores, &corrupted, options.mask_observed)?;
    Ok(RunResult {
        run,
        seed,
        mrr: value,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(
    spec: &RecommenderSpec,
    split: &SplitCorpus,
    k: usize,
    f: f64,
    runs: usize,
    base_seed: u64,
    options: &ExperimentOptions,
) -> Result<MetricReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let prepared = Prepared::new(split, k, &options.features)?;
    let results = (0..runs)
        .map(|run| {
            run_cell(spec, &prepared, f, run, base_seed, options)
                .map_err(|e| e.context(format!("{} k={k} f={f} run={run}", spec.label())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(
        spec.kind,
        spec.effective_conditions(),
        k,
        f,
        results,
    ))
}
