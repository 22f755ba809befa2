use super::layers::sigmoid_scalar;
use super::Matrix;
use crate::error::{Error, Result};

const PROB_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy between probabilities and {0,1} targets.
/// Probabilities are clamped away from 0 and 1 before taking logs.
pub fn bce(pred: &Matrix, target: &Matrix) -> Result<f64> {
    same_shape(pred, target, "bce")?;
    let count = pred.as_slice().len().max(1) as f64;
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / count)
}

/// BCE of `sigmoid(logits)` against `target`, fused so that no log of zero
/// is ever taken. Returns the mean loss and its gradient with respect to the
/// logits, `(sigmoid(z) - y) / count`.
pub fn bce_with_logits(logits: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    same_shape(logits, target, "bce_with_logits")?;
    let count = logits.as_slice().len().max(1) as f64;
    let mut total = 0.0;
    let grad = logits.zip_map(target, |z, y| (sigmoid_scalar(z) - y) / count)?;
    for (&z, &y) in logits.as_slice().iter().zip(target.as_slice()) {
        // softplus(z) - y·z, written to stay finite for large |z|
        total += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
    }
    Ok((total / count, grad))
}

/// Gaussian KL divergence against N(0, I), summed over code dimensions and
/// averaged over the batch.
pub fn kl_gauss(mu: &Matrix, logvar: &Matrix) -> Result<f64> {
    same_shape(mu, logvar, "kl_gauss")?;
    let batch = mu.rows().max(1) as f64;
    let total: f64 = mu
        .as_slice()
        .iter()
        .zip(logvar.as_slice())
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum();
    Ok(total / batch)
}

/// Gradients of [`kl_gauss`] with respect to `mu` and `logvar`.
pub fn kl_gauss_backward(mu: &Matrix, logvar: &Matrix) -> Result<(Matrix, Matrix)> {
    same_shape(mu, logvar, "kl_gauss_backward")?;
    let batch = mu.rows().max(1) as f64;
    let dmu = mu.map(|m| m / batch);
    let dlogvar = logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / batch);
    Ok((dmu, dlogvar))
}

fn same_shape(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}
