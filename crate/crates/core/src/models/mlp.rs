use crate::corpus::InteractionMatrix;
use crate::error::Result;
use crate::features::ConditionMatrix;
use crate::rng::{derive_seed, seeded, tags, Rng};
use crate::tensor::{bce_with_logits, grad_check, sigmoid, Adam, AdamConfig, Matrix, Param};

use super::network::{assign, flatten, flatten_grads, Conditioner, Mlp2};
use super::{run_epochs, BatchTrainer, Hyperparams};

/// Predicts the item set from metadata alone: `σ(MLP-2(s))`.
#[derive(Clone, Debug)]
pub struct MlpModel {
    pub net: Mlp2,
    pub conditioner: Conditioner,
}

impl MlpModel {
    pub fn new(
        conditions: &ConditionMatrix,
        n_items: usize,
        hyper: &Hyperparams,
        rng: &mut Rng,
    ) -> Result<Self> {
        let conditioner = Conditioner::new(conditions, rng)?;
        let net = Mlp2::new(conditions.dim(), hyper.hidden, n_items, hyper.dropout, rng);
        Ok(MlpModel { net, conditioner })
    }

    pub fn n_items(&self) -> usize {
        self.net.outputs()
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.net.params();
        p.extend(self.conditioner.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.net.params_mut();
        p.extend(self.conditioner.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Forward and backward pass on one batch; leaves fresh gradients in
    /// every parameter and returns the mean BCE.
    pub fn loss_and_gradients(
        &mut self,
        target: &Matrix,
        conditions: &ConditionMatrix,
        rows: &[usize],
        rng: &mut Rng,
    ) -> Result<f64> {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let s = self.conditioner.batch(conditions, rows);
        let logits = self.net.forward_train(&s, rng)?;
        let (loss, grad) = bce_with_logits(&logits, target)?;
        let grad_s = self.net.backward(&grad)?;
        self.conditioner.backward(&grad_s, conditions, rows);
        Ok(loss)
    }

    pub fn score(&self, conditions: &ConditionMatrix) -> Result<Matrix> {
        self.conditioner.check(conditions)?;
        let rows: Vec<usize> = (0..conditions.rows()).collect();
        let s = self.conditioner.batch(conditions, &rows);
        Ok(sigmoid(&self.net.forward(&s)?))
    }

    /// Maximum relative error between the analytic gradient of one training
    /// batch and central finite differences, with dropout masks fixed by `seed`.
    pub fn gradient_check(
        &self,
        target: &Matrix,
        conditions: &ConditionMatrix,
        seed: u64,
    ) -> Result<f64> {
        let rows: Vec<usize> = (0..target.rows()).collect();
        let mut probe = self.clone();
        probe.loss_and_gradients(target, conditions, &rows, &mut seeded(seed))?;
        let analytic = flatten_grads(&probe.params());
        let flat = flatten(&probe.params());
        Ok(grad_check(
            |p| {
                let mut m = self.clone();
                assign(&mut m.params_mut(), p);
                m.loss_and_gradients(target, conditions, &rows, &mut seeded(seed))
                    .expect("shapes fixed")
            },
            &flat,
            &analytic,
            1e-5,
            seed,
        ))
    }
}

struct MlpTrainer<'a> {
    model: MlpModel,
    conditions: &'a ConditionMatrix,
    optimizer: Adam,
}

impl BatchTrainer for MlpTrainer<'_> {
    fn train_batch(&mut self, rows: &[usize], x: &Matrix, rng: &mut Rng) -> Result<f64> {
        let loss = self
            .model
            .loss_and_gradients(x, self.conditions, rows, rng)?;
        self.optimizer.step(&mut self.model.params_mut())?;
        Ok(loss)
    }
}

pub(crate) fn train(
    items: &InteractionMatrix,
    conditions: &ConditionMatrix,
    hyper: &Hyperparams,
) -> Result<(MlpModel, Vec<f64>)> {
    if conditions.dim() == 0 {
        return Err(crate::Error::InvalidArgument(
            "mlp condition has zero width".into(),
        ));
    }
    let mut init = seeded(derive_seed(hyper.seed, tags::INIT));
    let model = MlpModel::new(conditions, items.n_cols(), hyper, &mut init)?;
    let mut trainer = MlpTrainer {
        model,
        conditions,
        optimizer: Adam::new(AdamConfig::with_lr(hyper.lr)),
    };
    let history = run_epochs(&mut trainer, items, hyper)?;
    let mut model = trainer.model;
    model.net.clear_cache();
    Ok((model, history))
}
