//! Building blocks shared by the neural models: the two-hidden-layer
//! perceptron and the trainable author embedding that fills the author block
//! of a condition vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{BlockLayout, ConditionMatrix};
use crate::tensor::{dropout_mask, relu, relu_backward, AffineLayer, Matrix, Param};

#[derive(Clone, Debug)]
struct Mlp2Cache {
    pre1: Matrix,
    mask1: Matrix,
    pre2: Matrix,
    mask2: Matrix,
}

/// `in → hidden → hidden → out`, ReLU and dropout after each hidden layer,
/// linear output.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    layers: [AffineLayer; 3],
    dropout: f64,
    cache: Option<Mlp2Cache>,
}

impl Mlp2 {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        hidden: usize,
        outputs: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        Mlp2 {
            layers: [
                AffineLayer::new(inputs, hidden, rng),
                AffineLayer::new(hidden, hidden, rng),
                AffineLayer::new(hidden, outputs, rng),
            ],
            dropout,
            cache: None,
        }
    }

    pub(crate) fn from_layers(layers: [AffineLayer; 3], dropout: f64) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape {
                    op: "mlp2_layers",
                    left: pair[0].weight.value.shape(),
                    right: pair[1].weight.value.shape(),
                });
            }
        }
        Ok(Mlp2 {
            layers,
            dropout,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[2].outputs()
    }

    pub fn layers(&self) -> &[AffineLayer; 3] {
        &self.layers
    }

    /// Inference pass: no dropout, no caching.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let h1 = relu(&self.layers[0].forward(x)?);
        let h2 = relu(&self.layers[1].forward(&h1)?);
        self.layers[2].forward(&h2)
    }

    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: &Matrix, rng: &mut R) -> Result<Matrix> {
        let pre1 = self.layers[0].forward_train(x)?;
        let mask1 = dropout_mask(pre1.rows(), pre1.cols(), self.dropout, rng)?;
        let a1 = relu(&pre1).zip_map(&mask1, |a, m| a * m)?;
        let pre2 = self.layers[1].forward_train(&a1)?;
        let mask2 = dropout_mask(pre2.rows(), pre2.cols(), self.dropout, rng)?;
        let a2 = relu(&pre2).zip_map(&mask2, |a, m| a * m)?;
        let out = self.layers[2].forward_train(&a2)?;
        self.cache = Some(Mlp2Cache {
            pre1,
            mask1,
            pre2,
            mask2,
        });
        Ok(out)
    }

    /// Backpropagates through the last training pass, accumulating parameter
    /// gradients, and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Model("mlp backward called before forward_train".into()))?;
        let g = self.layers[2].backward(grad_out)?;
        let g = relu_backward(&g.zip_map(&cache.mask2, |a, m| a * m)?, &cache.pre2)?;
        let g = self.layers[1].backward(&g)?;
        let g = relu_backward(&g.zip_map(&cache.mask1, |a, m| a * m)?, &cache.pre1)?;
        self.layers[0].backward(&g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        for l in &mut self.layers {
            l.clear_cache();
        }
    }
}

/// Trainable author vectors, one row per known author plus an unknown row.
#[derive(Clone, Debug)]
pub struct AuthorEmbedding {
    pub table: Param,
}

impl AuthorEmbedding {
    pub fn new<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid std");
        let table = Matrix::from_fn(rows, dim, |_, _| normal.sample(rng));
        AuthorEmbedding {
            table: Param::new(table),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.value.cols()
    }
}

/// Turns condition matrices into decoder-ready rows, owning the author
/// embedding when an author block is present.
#[derive(Clone, Debug)]
pub struct Conditioner {
    pub layout: Vec<BlockLayout>,
    pub dim: usize,
    pub authors: Option<AuthorEmbedding>,
}

impl Conditioner {
    pub fn new<R: Rng + ?Sized>(conditions: &ConditionMatrix, rng: &mut R) -> Result<Self> {
        let authors = match conditions.author_layout() {
            Some(l) => {
                if conditions.author_rows.is_none() {
                    return Err(Error::Model("author block without author indices".into()));
                }
                Some(AuthorEmbedding::new(conditions.author_vocab, l.width, rng))
            }
            None => None,
        };
        Ok(Conditioner {
            layout: conditions.layout.clone(),
            dim: conditions.dim(),
            authors,
        })
    }

    pub fn check(&self, conditions: &ConditionMatrix) -> Result<()> {
        if conditions.layout != self.layout {
            return Err(Error::Model(format!(
                "condition blocks {} differ from training blocks",
                conditions.blocks()
            )));
        }
        if let Some(a) = &self.authors {
            let rows = conditions
                .author_rows
                .as_ref()
                .ok_or_else(|| Error::Model("author indices missing".into()))?;
            let limit = a.table.value.rows();
            if let Some(bad) = rows.iter().flatten().find(|&&r| r >= limit) {
                return Err(Error::Model(format!(
                    "author index {bad} beyond embedding table of {limit} rows"
                )));
            }
        }
        Ok(())
    }

    fn author_offset(&self) -> usize {
        self.layout
            .iter()
            .find(|l| l.block == crate::features::Block::Author)
            .map_or(0, |l| l.offset)
    }

    /// Condition rows for `rows`, with the author block set to the mean of
    /// each document's author embeddings (zero when it has none).
    pub fn batch(&self, conditions: &ConditionMatrix, rows: &[usize]) -> Matrix {
        let mut out = conditions.values.select_rows(rows);
        if let (Some(emb), Some(author_rows)) = (&self.authors, &conditions.author_rows) {
            let offset = self.author_offset();
            let dim = emb.dim();
            for (o, &r) in rows.iter().enumerate() {
                let ids = &author_rows[r];
                if ids.is_empty() {
                    continue;
                }
                let inv = 1.0 / ids.len() as f64;
                let target = &mut out.row_mut(o)[offset..offset + dim];
                for &a in ids {
                    for (t, &v) in target.iter_mut().zip(emb.table.value.row(a)) {
                        *t += v * inv;
                    }
                }
            }
        }
        out
    }

    /// Routes the gradient of the author block back into the embedding table.
    pub fn backward(&mut self, grad: &Matrix, conditions: &ConditionMatrix, rows: &[usize]) {
        let offset = self.author_offset();
        let (Some(emb), Some(author_rows)) = (&mut self.authors, &conditions.author_rows) else {
            return;
        };
        if emb.table.grad.shape() != emb.table.value.shape() {
            emb.table.zero_grad();
        }
        let dim = emb.dim();
        for (o, &r) in rows.iter().enumerate() {
            let ids = &author_rows[r];
            if ids.is_empty() {
                continue;
            }
            let inv = 1.0 / ids.len() as f64;
            let g = &grad.row(o)[offset..offset + dim];
            for &a in ids {
                for (t, &v) in emb.table.grad.row_mut(a).iter_mut().zip(g) {
                    *t += v * inv;
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.authors.iter_mut().map(|a| &mut a.table).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.authors.iter().map(|a| &a.table).collect()
    }
}

pub(crate) fn flatten(params: &[&Param]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| p.value.as_slice().iter().copied())
        .collect()
}

pub(crate) fn flatten_grads(params: &[&Param]) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| {
            if p.grad.shape() == p.value.shape() {
                p.grad.as_slice().to_vec()
            } else {
                vec![0.0; p.len()]
            }
        })
        .collect()
}

pub(crate) fn assign(params: &mut [&mut Param], flat: &[f64]) {
    let mut offset = 0;
    for p in params.iter_mut() {
        let n = p.len();
        p.value
            .as_mut_slice()
            .copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "flat parameter length mismatch");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::grad_check;

    #[test]
    fn mlp2_gradients_match_finite_differences() {
        let mut rng = seeded(1);
        let mut net = Mlp2::new(5, 7, 3, 0.2, &mut rng);
        let x = Matrix::from_fn(4, 5, |i, j| ((i * 5 + j) as f64 * 0.61).sin());
        let coeff = Matrix::from_fn(4, 3, |i, j| ((i + 3 * j) as f64 * 0.45).cos());
        let loss_of = |net: &mut Mlp2| {
            let out = net.forward_train(&x, &mut seeded(99)).unwrap();
            out.as_slice()
                .iter()
                .zip(coeff.as_slice())
                .map(|(a, c)| a * c)
                .sum::<f64>()
        };
        net.zero_grad();
        loss_of(&mut net);
        let grad_x = net.backward(&coeff).unwrap();
        let analytic = flatten_grads(&net.params());
        let flat = flatten(&net.params());
        let template = net.clone();
        let err = grad_check(
            |p| {
                let mut probe = template.clone();
                assign(&mut probe.params_mut(), p);
                loss_of(&mut probe)
            },
            &flat,
            &analytic,
            1e-5,
            5,
        );
        assert!(err < 1e-6, "parameter gradient {err}");

        let err = grad_check(
            |p| {
                let xm = Matrix::from_vec(4, 5, p.to_vec()).unwrap();
                let out = template
                    .clone()
                    .forward_train(&xm, &mut seeded(99))
                    .unwrap();
                out.as_slice()
                    .iter()
                    .zip(coeff.as_slice())
                    .map(|(a, c)| a * c)
                    .sum()
            },
            x.as_slice(),
            grad_x.as_slice(),
            1e-5,
            6,
        );
        assert!(err < 1e-6, "input gradient {err}");
    }

    #[test]
    fn inference_ignores_dropout() {
        let mut rng = seeded(3);
        let net = Mlp2::new(4, 6, 2, 0.5, &mut rng);
        let x = Matrix::filled(2, 4, 0.3);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        let mut train = net.clone();
        let noisy = train.forward_train(&x, &mut rng).unwrap();
        assert_ne!(noisy, net.forward(&x).unwrap());
    }
}
