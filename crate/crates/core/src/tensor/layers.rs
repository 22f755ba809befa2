use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub value: Matrix,
    #[serde(skip, default = "Param::empty_grad")]
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param { value, grad }
    }

    fn empty_grad() -> Matrix {
        Matrix::zeros(0, 0)
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        if self.grad.shape() != self.value.shape() {
            self.grad = Matrix::zeros(self.value.rows(), self.value.cols());
        } else {
            self.grad.fill(0.0);
        }
    }
}

/// Affine map `x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    input: Option<Matrix>,
}

impl AffineLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite init bounds");
        let weight = Matrix::from_fn(inputs, outputs, |_, _| dist.sample(rng));
        Self::from_parts(weight, vec![0.0; outputs]).expect("consistent shapes")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.cols() != bias.len() {
            return Err(Error::Shape {
                op: "affine_from_parts",
                left: weight.shape(),
                right: (1, bias.len()),
            });
        }
        let bias = Matrix::from_vec(1, bias.len(), bias)?;
        Ok(AffineLayer {
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.cols()
    }

    /// Inference forward pass; does not touch the cache.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::Shape {
                op: "affine_forward",
                left: x.shape(),
                right: self.weight.value.shape(),
            });
        }
        let mut out = x.matmul(&self.weight.value)?;
        let b = self.bias.value.as_slice();
        for i in 0..out.rows() {
            for (o, &bj) in out.row_mut(i).iter_mut().zip(b) {
                *o += bj;
            }
        }
        Ok(out)
    }

    /// Training forward pass; caches the input for [`AffineLayer::backward`].
    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Accumulates `dW += xᵀ·g`, `db += Σ_rows g` and returns `g·Wᵀ`.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Model("affine backward called before forward_train".into()))?;
        if grad_out.rows() != input.rows() || grad_out.cols() != self.outputs() {
            return Err(Error::Shape {
                op: "affine_backward",
                left: grad_out.shape(),
                right: (input.rows(), self.outputs()),
            });
        }
        if self.weight.grad.shape() != self.weight.value.shape() {
            self.weight.zero_grad();
            self.bias.zero_grad();
        }
        let dw = input.t_matmul(grad_out)?;
        self.weight.grad.add_assign(&dw)?;
        let db = grad_out.column_sums();
        for (g, d) in self.bias.grad.as_mut_slice().iter_mut().zip(db) {
            *g += d;
        }
        grad_out.matmul_t(&self.weight.value)
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given the pre-activation; the subgradient at 0 is 0.
pub fn relu_backward(grad: &Matrix, pre_activation: &Matrix) -> Result<Matrix> {
    grad.zip_map(pre_activation, |g, x| if x > 0.0 { g } else { 0.0 })
}

/// Logistic function, exact 0/1 beyond ±700 so `exp` never overflows.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x < -700.0 {
        0.0
    } else if x > 700.0 {
        1.0
    } else if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// Inverted dropout mask: entries are 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut R,
) -> Result<Matrix> {
    check_dropout(p)?;
    if p == 0.0 {
        return Ok(Matrix::filled(rows, cols, 1.0));
    }
    let keep = 1.0 / (1.0 - p);
    Ok(Matrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

/// Applies dropout. In inference mode (`training == false`) this is the identity.
pub fn dropout(x: &Matrix, p: f64, training: bool, seed: u64) -> Result<Matrix> {
    check_dropout(p)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = crate::rng::seeded(seed);
    let mask = dropout_mask(x.rows(), x.cols(), p, &mut rng)?;
    x.zip_map(&mask, |a, m| a * m)
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}
