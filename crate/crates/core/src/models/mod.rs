//! The seven recommenders behind one fit/score interface.

pub mod autoencoder;
pub mod container;
pub mod cooc;
pub mod mlp;
pub mod network;
pub mod svd;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::features::{Block, ConditionMatrix, ConditionSet};
use crate::rng::{derive_seed, seeded, tags, Rng};
use crate::tensor::Matrix;

pub use autoencoder::{dae_corrupt, Autoencoder, Phase, Variant};
pub use cooc::{cooc_fit, cooc_score, CoocModel};
pub use mlp::MlpModel;
pub use network::{AuthorEmbedding, Conditioner, Mlp2};
pub use svd::{randomized_svd, svd_fit, SvdModel, TruncatedSvd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cooc,
    Svd,
    Mlp,
    Ae,
    Dae,
    Vae,
    Aae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Cooc,
        ModelKind::Svd,
        ModelKind::Mlp,
        ModelKind::Ae,
        ModelKind::Dae,
        ModelKind::Vae,
        ModelKind::Aae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cooc => "cooc",
            ModelKind::Svd => "svd",
            ModelKind::Mlp => "mlp",
            ModelKind::Ae => "ae",
            ModelKind::Dae => "dae",
            ModelKind::Vae => "vae",
            ModelKind::Aae => "aae",
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, ModelKind::Cooc | ModelKind::Svd)
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelKind::Ae => Some(Variant::Ae),
            ModelKind::Dae => Some(Variant::Dae),
            ModelKind::Vae => Some(Variant::Vae),
            ModelKind::Aae => Some(Variant::Aae),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden: usize,
    pub code: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub dae_noise: f64,
    /// Requested SVD rank, capped at the achievable rank.
    pub svd_rank: usize,
    pub kl_weight: f64,
    pub seed: u64,
    /// Train the adversarial discriminator on the negated objective.
    pub aae_literal_sign: bool,
    /// Learning rate of the adversarial discriminator updates.
    #[serde(default = "default_lr")]
    pub disc_lr: f64,
    /// Learning rate of the adversarial encoder (generator) updates.
    #[serde(default = "default_lr")]
    pub gen_lr: f64,
}

fn default_lr() -> f64 {
    0.001
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 100,
            code: 50,
            dropout: 0.2,
            lr: 0.001,
            epochs: 20,
            batch: 100,
            dae_noise: 0.2,
            svd_rank: 1000,
            kl_weight: 1.0,
            seed: 0,
            aae_literal_sign: false,
            disc_lr: 0.001,
            gen_lr: 0.001,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.code == 0 || self.code >= self.hidden {
            return bad(format!(
                "code size {} must be positive and below hidden size {}",
                self.code, self.hidden
            ));
        }
        if !(0.0..1.0).contains(&self.dae_noise) {
            return bad(format!("dae_noise {} outside [0, 1)", self.dae_noise));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        for (name, lr) in [
            ("lr", self.lr),
            ("disc_lr", self.disc_lr),
            ("gen_lr", self.gen_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} {lr} must be positive"));
            }
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.svd_rank == 0 {
            return bad("svd_rank must be at least 1".into());
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad(format!("kl_weight {} must be non-negative", self.kl_weight));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommenderSpec {
    pub kind: ModelKind,
    pub conditions: ConditionSet,
    pub hyper: Hyperparams,
}

impl RecommenderSpec {
    pub fn new(kind: ModelKind, conditions: ConditionSet) -> Self {
        RecommenderSpec {
            kind,
            conditions,
            hyper: Hyperparams::default(),
        }
    }

    pub fn with_hyper(mut self, hyper: Hyperparams) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.kind == ModelKind::Mlp && self.conditions.is_empty() {
            return Err(Error::InvalidArgument(
                "mlp needs at least one condition block (it takes no item input)".into(),
            ));
        }
        Ok(())
    }

    /// Blocks the model actually consumes: none for co-occurrence, at most the
    /// title for SVD, all requested blocks otherwise.
    pub fn effective_conditions(&self) -> ConditionSet {
        match self.kind {
            ModelKind::Cooc => ConditionSet::none(),
            ModelKind::Svd if self.conditions.contains(Block::Title) => ConditionSet::title(),
            ModelKind::Svd => ConditionSet::none(),
            _ => self.conditions.clone(),
        }
    }

    /// Whether fitting and scoring need a condition matrix.
    pub fn needs_conditions(&self) -> bool {
        self.kind.is_trainable() && !self.conditions.is_empty()
    }

    /// Whether fitting and scoring need title bag-of-words columns.
    pub fn needs_text(&self) -> bool {
        self.kind == ModelKind::Svd && self.conditions.contains(Block::Title)
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.kind, self.effective_conditions())
    }
}

/// Row-aligned inputs for fitting or scoring.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub items: &'a InteractionMatrix,
    pub conditions: Option<&'a ConditionMatrix>,
    pub text: Option<&'a Matrix>,
}

impl<'a> ModelInput<'a> {
    pub fn items(items: &'a InteractionMatrix) -> Self {
        ModelInput {
            items,
            conditions: None,
            text: None,
        }
    }

    pub fn with_conditions(mut self, conditions: &'a ConditionMatrix) -> Self {
        self.conditions = Some(conditions);
        self
    }

    pub fn with_text(mut self, text: &'a Matrix) -> Self {
        self.text = Some(text);
        self
    }

    fn check_rows(&self) -> Result<()> {
        let m = self.items.n_rows();
        if let Some(c) = self.conditions {
            if c.rows() != m {
                return Err(Error::Shape {
                    op: "model_input",
                    left: (m, self.items.n_cols()),
                    right: (c.rows(), c.dim()),
                });
            }
        }
        if let Some(t) = self.text {
            if t.rows() != m {
                return Err(Error::Shape {
                    op: "model_input",
                    left: (m, self.items.n_cols()),
                    right: t.shape(),
                });
            }
        }
        Ok(())
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum ModelState {
    Cooc(CoocModel),
    Svd(SvdModel),
    Mlp(MlpModel),
    Autoencoder(Autoencoder),
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: RecommenderSpec,
    pub vocab_hash: u64,
    pub n_items: usize,
    pub state: ModelState,
    /// Mean training loss per epoch, starting at epoch 0.
    pub loss_history: Vec<f64>,
    pub notes: Vec<String>,
}

/// Batch-level training step shared by the neural models.
pub(crate) trait BatchTrainer {
    fn train_batch(&mut self, rows: &[usize], x: &Matrix, rng: &mut Rng) -> Result<f64>;
}

/// Shuffled mini-batch epochs; returns the mean batch loss of every epoch.
pub(crate) fn run_epochs<T: BatchTrainer>(
    trainer: &mut T,
    items: &InteractionMatrix,
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    let m = items.n_rows();
    if m == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    let mut shuffle = seeded(derive_seed(hyper.seed, tags::SHUFFLE));
    let mut noise = seeded(derive_seed(hyper.seed, tags::NOISE));
    let mut order: Vec<usize> = (0..m).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (batch, rows) in order.chunks(hyper.batch).enumerate() {
            let x = items.dense_rows(rows);
            let loss = trainer.train_batch(rows, &x, &mut noise)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, batch });
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

fn check_condition_blocks(
    spec: &RecommenderSpec,
    conditions: Option<&ConditionMatrix>,
) -> Result<()> {
    match (spec.needs_conditions(), conditions) {
        (true, None) => Err(Error::Model(format!(
            "{} conditioned on {} needs condition features",
            spec.kind, spec.conditions
        ))),
        (false, Some(_)) if spec.kind.is_trainable() => Err(Error::Model(format!(
            "unconditioned {} was given condition features",
            spec.kind
        ))),
        (true, Some(c)) if c.blocks() != spec.conditions => Err(Error::Model(format!(
            "condition blocks {} differ from the model's {}",
            c.blocks(),
            spec.conditions
        ))),
        _ => Ok(()),
    }
}

pub fn fit(
    spec: &RecommenderSpec,
    vocab: &Vocabulary,
    input: &ModelInput<'_>,
) -> Result<TrainedModel> {
    spec.validate()?;
    input.check_rows()?;
    let n = vocab.len();
    if input.items.n_cols() != n {
        return Err(Error::Shape {
            op: "fit",
            left: (input.items.n_rows(), input.items.n_cols()),
            right: (n, n),
        });
    }
    check_condition_blocks(spec, input.conditions)?;
    let hyper = &spec.hyper;
    let mut notes = Vec::new();
    let mut loss_history = Vec::new();
    let state = match spec.kind {
        ModelKind::Cooc => ModelState::Cooc(cooc_fit(input.items)),
        ModelKind::Svd => {
            let text = if spec.needs_text() {
                Some(input.text.ok_or_else(|| {
                    Error::Model("svd with the title block needs title bag-of-words columns".into())
                })?)
            } else {
                None
            };
            let model = svd_fit(
                input.items,
                text,
                hyper.svd_rank,
                derive_seed(hyper.seed, tags::SVD),
            )?;
            if model.effective_rank() < hyper.svd_rank {
                notes.push(format!(
                    "svd rank capped at {} (requested {})",
                    model.effective_rank(),
                    hyper.svd_rank
                ));
            }
            ModelState::Svd(model)
        }
        ModelKind::Mlp => {
            let conditions = input.conditions.expect("checked above");
            let (model, history) = mlp::train(input.items, conditions, hyper)?;
            loss_history = history;
            ModelState::Mlp(model)
        }
        kind => {
            let variant = kind.variant().expect("autoencoder kind");
            let (model, history) =
                autoencoder::train(variant, input.items, input.conditions, hyper)?;
            loss_history = history;
            ModelState::Autoencoder(model)
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        vocab_hash: vocab.fingerprint(),
        n_items: n,
        state,
        loss_history,
        notes,
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn ensure_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.fingerprint() != self.vocab_hash || vocab.len() != self.n_items {
            return Err(Error::Model(format!(
                "vocabulary mismatch: model trained on {} items (hash {:016x}), got {} items (hash {:016x})",
                self.n_items,
                self.vocab_hash,
                vocab.len(),
                vocab.fingerprint()
            )));
        }
        Ok(())
    }

    /// Scores every item for every input row. Neural models return sigmoid
    /// outputs; the linear baselines return raw aggregated counts.
    pub fn score(&self, input: &ModelInput<'_>) -> Result<Matrix> {
        input.check_rows()?;
        if input.items.n_cols() != self.n_items {
            return Err(Error::Shape {
                op: "score",
                left: (input.items.n_rows(), input.items.n_cols()),
                right: (self.n_items, self.n_items),
            });
        }
        check_condition_blocks(&self.spec, input.conditions)?;
        match &self.state {
            ModelState::Cooc(m) => m.score(input.items),
            ModelState::Svd(m) => {
                let text = if m.uses_text() { input.text } else { None };
                m.score(input.items, text)
            }
            ModelState::Mlp(m) => m.score(input.conditions.expect("checked above")),
            ModelState::Autoencoder(m) => m.score(&input.items.to_dense(), input.conditions),
        }
    }

    /// Number of learned scalars.
    pub fn param_count(&self) -> usize {
        match &self.state {
            ModelState::Cooc(m) => m.counts.as_slice().len(),
            ModelState::Svd(SvdModel::Plain { factors, .. }) => {
                factors.u.as_slice().len() + factors.sigma.len() + factors.v.as_slice().len()
            }
            ModelState::Svd(SvdModel::WithText { right, .. }) => right.as_slice().len(),
            ModelState::Mlp(m) => m.param_count(),
            ModelState::Autoencoder(m) => m.param_count(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(self)
    }

    pub fn from_bytes(bytes: &[u8], vocab: &Vocabulary) -> Result<Self> {
        let model = container::decode(bytes)?;
        model.ensure_vocabulary(vocab)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips_through_text() {
        for k in ModelKind::ALL {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("lda".parse::<ModelKind>().is_err());
    }

    #[test]
    fn hyperparams_reject_overcomplete_code_and_bad_noise() {
        let mut h = Hyperparams::default();
        assert!(h.validate().is_ok());
        h.code = 100;
        assert!(h.validate().is_err());
        h.code = 50;
        h.dae_noise = 1.0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn mlp_without_conditions_is_rejected() {
        assert!(RecommenderSpec::new(ModelKind::Mlp, ConditionSet::none())
            .validate()
            .is_err());
        assert!(RecommenderSpec::new(ModelKind::Mlp, ConditionSet::title())
            .validate()
            .is_ok());
    }

    #[test]
    fn baselines_ignore_unused_blocks() {
        let all = ConditionSet::new(Block::ALL);
        assert!(RecommenderSpec::new(ModelKind::Cooc, all.clone())
            .effective_conditions()
            .is_empty());
        assert_eq!(
            RecommenderSpec::new(ModelKind::Svd, all.clone()).effective_conditions(),
            ConditionSet::title()
        );
        assert_eq!(
            RecommenderSpec::new(ModelKind::Ae, all.clone()).effective_conditions(),
            all
        );
    }
}
