//! Autoencoder family: plain, denoising, variational and adversarial.
//! Conditioning concatenates the side information to the code, so only the
//! first decoder layer sees it.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::features::ConditionMatrix;
use crate::rng::{derive_seed, seeded, tags, Rng};
use crate::tensor::{
    bce_with_logits, grad_check, kl_gauss, kl_gauss_backward, sigmoid, sigmoid_scalar, Adam,
    AdamConfig, Matrix, Param,
};

use super::network::{assign, flatten, flatten_grads, Conditioner, Mlp2};
use super::{run_epochs, BatchTrainer, Hyperparams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ae,
    Dae,
    Vae,
    Aae,
}

/// One of the three per-batch updates of the adversarial variant; the other
/// variants only have `Reconstruction`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Reconstruction,
    Discriminator,
    Generator,
}

/// Zeroes each listed item independently with probability `noise`.
pub fn dae_corrupt<R: rand::Rng + ?Sized>(row: &[usize], noise: f64, rng: &mut R) -> Vec<usize> {
    row.iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= noise)
        .collect()
}

fn corrupt_dense(x: &Matrix, noise: f64, rng: &mut Rng) -> Matrix {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if *v != 0.0 && rng.random::<f64>() < noise {
            *v = 0.0;
        }
    }
    out
}

fn standard_normal(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

#[derive(Clone, Debug)]
pub struct Autoencoder {
    pub variant: Variant,
    pub code: usize,
    pub encoder: Mlp2,
    pub decoder: Mlp2,
    pub conditioner: Option<Conditioner>,
    pub discriminator: Option<Mlp2>,
    pub dae_noise: f64,
    pub kl_weight: f64,
    pub literal_sign: bool,
}

impl Autoencoder {
    pub fn new(
        variant: Variant,
        n_items: usize,
        conditions: Option<&ConditionMatrix>,
        hyper: &Hyperparams,
        rng: &mut Rng,
    ) -> Result<Self> {
        let enc_out = if variant == Variant::Vae {
            2 * hyper.code
        } else {
            hyper.code
        };
        let encoder = Mlp2::new(n_items, hyper.hidden, enc_out, hyper.dropout, rng);
        let conditioner = conditions.map(|c| Conditioner::new(c, rng)).transpose()?;
        let d = conditioner.as_ref().map_or(0, |c| c.dim);
        let decoder = Mlp2::new(hyper.code + d, hyper.hidden, n_items, hyper.dropout, rng);
        let discriminator = (variant == Variant::Aae)
            .then(|| Mlp2::new(hyper.code, hyper.hidden, 1, hyper.dropout, rng));
        Ok(Autoencoder {
            variant,
            code: hyper.code,
            encoder,
            decoder,
            conditioner,
            discriminator,
            dae_noise: hyper.dae_noise,
            kl_weight: hyper.kl_weight,
            literal_sign: hyper.aae_literal_sign,
        })
    }

    pub fn n_items(&self) -> usize {
        self.decoder.outputs()
    }

    pub fn condition_dim(&self) -> usize {
        self.conditioner.as_ref().map_or(0, |c| c.dim)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        if let Some(c) = &self.conditioner {
            p.extend(c.params());
        }
        if let Some(d) = &self.discriminator {
            p.extend(d.params());
        }
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameters updated by the given phase, in a fixed order.
    pub fn phase_params(&self, phase: Phase) -> Vec<&Param> {
        match phase {
            Phase::Reconstruction => {
                let mut p = self.encoder.params();
                p.extend(self.decoder.params());
                if let Some(c) = &self.conditioner {
                    p.extend(c.params());
                }
                p
            }
            Phase::Discriminator => self.discriminator.iter().flat_map(|d| d.params()).collect(),
            Phase::Generator => self.encoder.params(),
        }
    }

    pub fn phase_params_mut(&mut self, phase: Phase) -> Vec<&mut Param> {
        let Autoencoder {
            encoder,
            decoder,
            conditioner,
            discriminator,
            ..
        } = self;
        match phase {
            Phase::Reconstruction => {
                let mut p = encoder.params_mut();
                p.extend(decoder.params_mut());
                if let Some(c) = conditioner {
                    p.extend(c.params_mut());
                }
                p
            }
            Phase::Discriminator => discriminator
                .iter_mut()
                .flat_map(|d| d.params_mut())
                .collect(),
            Phase::Generator => encoder.params_mut(),
        }
    }

    fn zero_grads(&mut self) {
        for phase in [Phase::Reconstruction, Phase::Discriminator] {
            for p in self.phase_params_mut(phase) {
                p.zero_grad();
            }
        }
    }

    fn check_conditions(&self, conditions: Option<&ConditionMatrix>) -> Result<()> {
        match (&self.conditioner, conditions) {
            (Some(c), Some(s)) => c.check(s),
            (None, None) => Ok(()),
            (Some(_), None) => Err(Error::Model(
                "conditioned autoencoder needs conditions".into(),
            )),
            (None, Some(_)) => Err(Error::Model(
                "unconditioned autoencoder was given conditions".into(),
            )),
        }
    }

    fn decoder_input(
        &self,
        z: Matrix,
        conditions: Option<&ConditionMatrix>,
        rows: &[usize],
    ) -> Result<Matrix> {
        match (&self.conditioner, conditions) {
            (Some(c), Some(s)) => z.hconcat(&c.batch(s, rows)),
            _ => Ok(z),
        }
    }

    /// Reconstruction loss and gradients for one batch. AE/DAE/AAE use mean
    /// BCE; the VAE uses BCE summed over items and averaged over documents,
    /// plus the weighted KL term.
    pub fn reconstruction_pass(
        &mut self,
        x: &Matrix,
        conditions: Option<&ConditionMatrix>,
        rows: &[usize],
        rng: &mut Rng,
    ) -> Result<f64> {
        for p in self.phase_params_mut(Phase::Reconstruction) {
            p.zero_grad();
        }
        let input = if self.variant == Variant::Dae {
            corrupt_dense(x, self.dae_noise, rng)
        } else {
            x.clone()
        };
        let encoded = self.encoder.forward_train(&input, rng)?;
        let mut vae = None;
        let z = if self.variant == Variant::Vae {
            let (mu, logvar) = encoded.split_cols(self.code);
            let eps = standard_normal(mu.rows(), self.code, rng);
            let std = logvar.map(|lv| (0.5 * lv).exp());
            let z = mu.zip_map(&std.zip_map(&eps, |s, e| s * e)?, |m, se| m + se)?;
            vae = Some((mu, logvar, std, eps));
            z
        } else {
            encoded
        };
        let dec_in = self.decoder_input(z, conditions, rows)?;
        let logits = self.decoder.forward_train(&dec_in, rng)?;
        let (bce, mut grad) = bce_with_logits(&logits, x)?;
        let mut loss = bce;
        if vae.is_some() {
            let n = x.cols() as f64;
            loss *= n;
            grad.scale(n);
        }
        let grad_in = self.decoder.backward(&grad)?;
        let (grad_z, grad_s) = grad_in.split_cols(self.code);
        if let (Some(c), Some(s)) = (&mut self.conditioner, conditions) {
            c.backward(&grad_s, s, rows);
        }
        let grad_enc = match vae {
            Some((mu, logvar, std, eps)) => {
                let w = self.kl_weight;
                loss += w * kl_gauss(&mu, &logvar)?;
                let (kl_mu, kl_lv) = kl_gauss_backward(&mu, &logvar)?;
                let g_mu = grad_z.zip_map(&kl_mu, |g, k| g + w * k)?;
                let se = std.zip_map(&eps, |s, e| 0.5 * s * e)?;
                let g_lv = grad_z
                    .zip_map(&se, |g, v| g * v)?
                    .zip_map(&kl_lv, |g, k| g + w * k)?;
                g_mu.hconcat(&g_lv)?
            }
            None => grad_z,
        };
        self.encoder.backward(&grad_enc)?;
        Ok(loss)
    }

    fn discriminator_mut(&mut self) -> Result<&mut Mlp2> {
        self.discriminator.as_mut().ok_or_else(|| {
            Error::Model("only the adversarial autoencoder has a discriminator".into())
        })
    }

    /// Discriminator update objective: BCE of prior samples labelled 1 and
    /// encoder codes labelled 0 (negated under the literal sign).
    pub fn discriminator_pass(&mut self, x: &Matrix, rng: &mut Rng) -> Result<f64> {
        self.discriminator_mut()?.zero_grad();
        let codes = self.encoder.forward_train(x, rng)?;
        self.encoder.clear_cache();
        let b = codes.rows();
        let prior = standard_normal(b, self.code, rng);
        let inputs = prior.vconcat(&codes)?;
        let targets = Matrix::from_fn(2 * b, 1, |i, _| if i < b { 1.0 } else { 0.0 });
        let literal = self.literal_sign;
        let disc = self.discriminator_mut()?;
        let logits = disc.forward_train(&inputs, rng)?;
        let (mut loss, mut grad) = bce_with_logits(&logits, &targets)?;
        if literal {
            loss = -loss;
            grad.scale(-1.0);
        }
        disc.backward(&grad)?;
        Ok(loss)
    }

    /// Encoder update that pushes codes towards being classified as prior
    /// samples: `-mean log D(z)`.
    pub fn generator_pass(&mut self, x: &Matrix, rng: &mut Rng) -> Result<f64> {
        for p in self.encoder.params_mut() {
            p.zero_grad();
        }
        self.discriminator_mut()?.zero_grad();
        let codes = self.encoder.forward_train(x, rng)?;
        let disc = self.discriminator_mut()?;
        let logits = disc.forward_train(&codes, rng)?;
        let ones = Matrix::filled(codes.rows(), 1, 1.0);
        let (loss, grad) = bce_with_logits(&logits, &ones)?;
        let grad_z = disc.backward(&grad)?;
        self.encoder.backward(&grad_z)?;
        Ok(loss)
    }

    pub fn run_phase(
        &mut self,
        phase: Phase,
        x: &Matrix,
        conditions: Option<&ConditionMatrix>,
        rows: &[usize],
        rng: &mut Rng,
    ) -> Result<f64> {
        match phase {
            Phase::Reconstruction => self.reconstruction_pass(x, conditions, rows, rng),
            Phase::Discriminator => self.discriminator_pass(x, rng),
            Phase::Generator => self.generator_pass(x, rng),
        }
    }

    /// Maximum relative error between the analytic gradient of one phase on
    /// `x` (rows aligned with `conditions`) and central finite differences,
    /// with all random draws fixed by `seed`.
    pub fn gradient_check(
        &self,
        phase: Phase,
        x: &Matrix,
        conditions: Option<&ConditionMatrix>,
        seed: u64,
    ) -> Result<f64> {
        self.check_conditions(conditions)?;
        let rows: Vec<usize> = (0..x.rows()).collect();
        let mut probe = self.clone();
        probe.zero_grads();
        probe.run_phase(phase, x, conditions, &rows, &mut seeded(seed))?;
        let analytic = flatten_grads(&probe.phase_params(phase));
        let flat = flatten(&probe.phase_params(phase));
        Ok(grad_check(
            |p| {
                let mut m = self.clone();
                assign(&mut m.phase_params_mut(phase), p);
                m.run_phase(phase, x, conditions, &rows, &mut seeded(seed))
                    .expect("shapes fixed")
            },
            &flat,
            &analytic,
            1e-5,
            seed,
        ))
    }

    /// Deterministic codes: the encoder output, or `μ` for the VAE.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        let encoded = self.encoder.forward(x)?;
        Ok(if self.variant == Variant::Vae {
            encoded.split_cols(self.code).0
        } else {
            encoded
        })
    }

    /// Encoder mean and log-variance on `x`; VAE only.
    pub fn gaussian_code(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if self.variant != Variant::Vae {
            return Err(Error::Model(
                "only the variational autoencoder has a Gaussian code".into(),
            ));
        }
        Ok(self.encoder.forward(x)?.split_cols(self.code))
    }

    /// One deterministic encode/decode: no dropout, no corruption, `z = μ`.
    pub fn score(&self, x: &Matrix, conditions: Option<&ConditionMatrix>) -> Result<Matrix> {
        self.check_conditions(conditions)?;
        let rows: Vec<usize> = (0..x.rows()).collect();
        let z = self.encode(x)?;
        let dec_in = self.decoder_input(z, conditions, &rows)?;
        Ok(sigmoid(&self.decoder.forward(&dec_in)?))
    }

    /// Fraction of correctly classified samples when the discriminator sees
    /// the codes of `x` and as many fresh prior samples, in inference mode.
    pub fn discriminator_accuracy(&self, x: &Matrix, seed: u64) -> Result<f64> {
        let disc = self.discriminator.as_ref().ok_or_else(|| {
            Error::Model("only the adversarial autoencoder has a discriminator".into())
        })?;
        let codes = self.encode(x)?;
        let mut rng = seeded(derive_seed(seed, tags::PRIOR));
        let prior = standard_normal(codes.rows(), self.code, &mut rng);
        let on_prior = disc.forward(&prior)?;
        let on_codes = disc.forward(&codes)?;
        let correct = on_prior
            .as_slice()
            .iter()
            .filter(|&&l| sigmoid_scalar(l) >= 0.5)
            .count()
            + on_codes
                .as_slice()
                .iter()
                .filter(|&&l| sigmoid_scalar(l) < 0.5)
                .count();
        Ok(correct as f64 / (2 * codes.rows()) as f64)
    }

    pub fn clear_caches(&mut self) {
        self.encoder.clear_cache();
        self.decoder.clear_cache();
        if let Some(d) = &mut self.discriminator {
            d.clear_cache();
        }
    }
}

struct AeTrainer<'a> {
    model: Autoencoder,
    conditions: Option<&'a ConditionMatrix>,
    reconstruction: Adam,
    discriminator: Adam,
    generator: Adam,
}

impl BatchTrainer for AeTrainer<'_> {
    fn train_batch(&mut self, rows: &[usize], x: &Matrix, rng: &mut Rng) -> Result<f64> {
        let m = &mut self.model;
        let loss = m.reconstruction_pass(x, self.conditions, rows, rng)?;
        self.reconstruction
            .step(&mut m.phase_params_mut(Phase::Reconstruction))?;
        if m.variant == Variant::Aae {
            m.discriminator_pass(x, rng)?;
            self.discriminator
                .step(&mut m.phase_params_mut(Phase::Discriminator))?;
            m.generator_pass(x, rng)?;
            self.generator
                .step(&mut m.phase_params_mut(Phase::Generator))?;
        }
        Ok(loss)
    }
}

pub(crate) fn train(
    variant: Variant,
    items: &InteractionMatrix,
    conditions: Option<&ConditionMatrix>,
    hyper: &Hyperparams,
) -> Result<(Autoencoder, Vec<f64>)> {
    let mut init = seeded(derive_seed(hyper.seed, tags::INIT));
    let model = Autoencoder::new(variant, items.n_cols(), conditions, hyper, &mut init)?;
    let mut trainer = AeTrainer {
        model,
        conditions,
        reconstruction: Adam::new(AdamConfig::with_lr(hyper.lr)),
        discriminator: Adam::new(AdamConfig::with_lr(hyper.disc_lr)),
        generator: Adam::new(AdamConfig::with_lr(hyper.gen_lr)),
    };
    let history = run_epochs(&mut trainer, items, hyper)?;
    let mut model = trainer.model;
    model.clear_caches();
    Ok((model, history))
}
