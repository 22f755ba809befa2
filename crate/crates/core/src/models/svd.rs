//! Truncated SVD by seeded randomized subspace iteration, and the two SVD
//! recommenders built on it: a factorization of the co-occurrence matrix and
//! a factorization of items concatenated with title bag-of-words columns.

use rand_distr::{Distribution, StandardNormal};

use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 4;
/// Singular values below this fraction of the largest are treated as zero
/// when capping the rank.
const RANK_TOLERANCE: f64 = 1e-12;

/// `A ≈ U·diag(σ)·Vᵀ` with `σ` descending.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v).expect("factor shapes agree")
    }
}

/// Thin orthonormal basis of the column space of `a` (rows ≥ cols) by
/// Householder reflections. Rank-deficient inputs still yield orthonormal
/// columns.
pub fn orthonormal_basis(a: &Matrix) -> Matrix {
    let (m, k) = a.shape();
    assert!(m >= k, "orthonormal_basis needs rows >= cols, got {m}x{k}");
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // zero column: reflect e_j onto itself (identity)
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= vnorm;
        }
        for c in j..k {
            let proj: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum();
            for i in j..m {
                r[(i, c)] -= 2.0 * v[i - j] * proj;
            }
        }
        reflectors.push(v);
    }
    // Q = H_0 H_1 … H_{k-1} applied to the first k columns of the identity
    let mut q = Matrix::zeros(m, k);
    for j in 0..k {
        q[(j, j)] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for c in 0..k {
            let proj: f64 = (j..m).map(|i| v[i - j] * q[(i, c)]).sum();
            for i in j..m {
                q[(i, c)] -= 2.0 * v[i - j] * proj;
            }
        }
    }
    q
}

/// One-sided Jacobi SVD of a small matrix `b` (k × N, k ≤ N).
/// Returns `(U_b, σ, V_b)` with `b = U_b·diag(σ)·V_bᵀ`, unsorted.
fn jacobi_svd_wide(b: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let k = b.rows();
    // columns of bᵀ are the rows of b; work on them directly as rows
    let mut w = b.clone();
    let mut rot = Matrix::identity(k);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(f64::MIN_POSITIVE));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut rot, p, q, c, s);
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let sigma: Vec<f64> = (0..k).map(|i| dot(w.row(i), w.row(i)).sqrt()).collect();
    let mut v = Matrix::zeros(b.cols(), k);
    for i in 0..k {
        if sigma[i] > 0.0 {
            for (j, &x) in w.row(i).iter().enumerate() {
                v[(j, i)] = x / sigma[i];
            }
        }
    }
    // rot holds Jᵀ row-wise; b = J·W so U_b = J = rotᵀ
    (rot.transpose(), sigma, v)
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    for j in 0..cols {
        let a = m[(p, j)];
        let b = m[(q, j)];
        m[(p, j)] = c * a - s * b;
        m[(q, j)] = s * a + c * b;
    }
}

/// Rank-`rank` SVD of `a` by randomized subspace iteration with Gaussian
/// test vectors. The rank is capped at `min(rows, cols)` and at the number of
/// singular values above `1e-12·σ_max`.
pub fn randomized_svd(
    a: &Matrix,
    rank: usize,
    oversampling: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<TruncatedSvd> {
    if rank == 0 {
        return Err(Error::InvalidArgument("SVD rank must be at least 1".into()));
    }
    let (m, n) = a.shape();
    let max_rank = m.min(n);
    if max_rank == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot factorize a {m}x{n} matrix"
        )));
    }
    let l = (rank + oversampling).min(max_rank);
    let mut rng = crate::rng::seeded(seed);
    let omega = Matrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(&a.matmul(&omega)?);
    for _ in 0..power_iterations {
        let z = orthonormal_basis(&a.t_matmul(&q)?);
        q = orthonormal_basis(&a.matmul(&z)?);
    }
    let b = q.t_matmul(a)?; // l × n
    let (ub, sigma, vb) = jacobi_svd_wide(&b);
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let top = sigma[order[0]];
    let keep: Vec<usize> = order
        .into_iter()
        .take(rank)
        .filter(|&i| sigma[i] > top * RANK_TOLERANCE && sigma[i] > 0.0)
        .collect();
    let u_full = q.matmul(&ub)?;
    let mut u = Matrix::zeros(m, keep.len());
    let mut v = Matrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..m {
            u[(r, c)] = u_full[(r, i)];
        }
        for r in 0..n {
            v[(r, c)] = vb[(r, i)];
        }
    }
    Ok(TruncatedSvd {
        u,
        sigma: keep.iter().map(|&i| sigma[i]).collect(),
        v,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum SvdModel {
    /// Factorization of the co-occurrence matrix; scores are `x·C_r`.
    Plain {
        factors: TruncatedSvd,
        requested_rank: usize,
    },
    /// Factorization of `[X | B]`; scores are the item columns of
    /// `[x | b]·V_r·V_rᵀ`.
    WithText {
        right: Matrix,
        n_items: usize,
        requested_rank: usize,
    },
}

pub fn svd_fit(
    x: &InteractionMatrix,
    text: Option<&Matrix>,
    rank: usize,
    seed: u64,
) -> Result<SvdModel> {
    match text {
        None => {
            let c = super::cooc::cooc_fit(x).counts;
            let factors = randomized_svd(&c, rank, OVERSAMPLING, POWER_ITERATIONS, seed)?;
            Ok(SvdModel::Plain {
                factors,
                requested_rank: rank,
            })
        }
        Some(text) => {
            if text.rows() != x.n_rows() {
                return Err(Error::Shape {
                    op: "svd_fit",
                    left: (x.n_rows(), x.n_cols()),
                    right: text.shape(),
                });
            }
            let m = x.to_dense().hconcat(text)?;
            let f = randomized_svd(&m, rank, OVERSAMPLING, POWER_ITERATIONS, seed)?;
            Ok(SvdModel::WithText {
                right: f.v,
                n_items: x.n_cols(),
                requested_rank: rank,
            })
        }
    }
}

impl SvdModel {
    pub fn effective_rank(&self) -> usize {
        match self {
            SvdModel::Plain { factors, .. } => factors.rank(),
            SvdModel::WithText { right, .. } => right.cols(),
        }
    }

    pub fn requested_rank(&self) -> usize {
        match self {
            SvdModel::Plain { requested_rank, .. } | SvdModel::WithText { requested_rank, .. } => {
                *requested_rank
            }
        }
    }

    pub fn n_items(&self) -> usize {
        match self {
            SvdModel::Plain { factors, .. } => factors.v.rows(),
            SvdModel::WithText { n_items, .. } => *n_items,
        }
    }

    pub fn uses_text(&self) -> bool {
        matches!(self, SvdModel::WithText { .. })
    }

    pub fn score(&self, input: &InteractionMatrix, text: Option<&Matrix>) -> Result<Matrix> {
        let n = self.n_items();
        if input.n_cols() != n {
            return Err(Error::Shape {
                op: "svd_score",
                left: (input.n_rows(), input.n_cols()),
                right: (n, self.effective_rank()),
            });
        }
        match self {
            SvdModel::Plain { factors, .. } => {
                if text.is_some() {
                    return Err(Error::Model("plain SVD takes no text features".into()));
                }
                let x = input.to_dense();
                let mut proj = x.matmul(&factors.u)?;
                for i in 0..proj.rows() {
                    for (p, s) in proj.row_mut(i).iter_mut().zip(&factors.sigma) {
                        *p *= s;
                    }
                }
                proj.matmul_t(&factors.v)
            }
            SvdModel::WithText { right, n_items, .. } => {
                let text = text
                    .ok_or_else(|| Error::Model("text-extended SVD needs title features".into()))?;
                let full = input.to_dense().hconcat(text)?;
                let proj = full.matmul(right)?;
                let mut item_rows = Matrix::zeros(*n_items, right.cols());
                for i in 0..*n_items {
                    item_rows.row_mut(i).copy_from_slice(right.row(i));
                }
                proj.matmul_t(&item_rows)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::cooc::cooc_fit;

    fn random_binary(rows: usize, cols: usize, seed: u64) -> InteractionMatrix {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let data = (0..rows)
            .map(|_| (0..cols).filter(|_| rng.random::<f64>() < 0.3).collect())
            .collect();
        InteractionMatrix::new(cols, data).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_even_when_rank_deficient() {
        let a = Matrix::from_fn(6, 3, |i, j| if j == 2 { 0.0 } else { (i + j) as f64 });
        let q = orthonormal_basis(&a);
        let g = q.t_matmul(&q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_is_exact() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [3.0, 0.0, 1.0];
        let a = Matrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let f = randomized_svd(&a, 1, OVERSAMPLING, POWER_ITERATIONS, 1).unwrap();
        assert_eq!(f.rank(), 1);
        let diff = f.reconstruct().zip_map(&a, |x, y| (x - y).abs()).unwrap();
        assert!(diff.as_slice().iter().all(|&d| d < 1e-9));
    }

    #[test]
    fn requested_rank_is_capped() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let a = Matrix::from_fn(4, 3, |i, j| u[i] * (j + 1) as f64);
        let f = randomized_svd(&a, 50, OVERSAMPLING, POWER_ITERATIONS, 1).unwrap();
        assert_eq!(f.rank(), 1);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let x = random_binary(20, 15, 4);
        let a = svd_fit(&x, None, 5, 77).unwrap();
        let b = svd_fit(&x, None, 5, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_rank_scores_equal_cooc() {
        let x = random_binary(20, 15, 8);
        let model = svd_fit(&x, None, 1000, 3).unwrap();
        let cooc = cooc_fit(&x);
        let probe = random_binary(10, 15, 9);
        let a = model.score(&probe, None).unwrap();
        let b = cooc.score(&probe).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        assert_eq!(
            model
                .score(&InteractionMatrix::new(15, vec![vec![]]).unwrap(), None)
                .unwrap()
                .sum(),
            0.0
        );
    }

    #[test]
    fn extended_with_zero_text_is_projection_of_items() {
        let x = random_binary(30, 8, 12);
        let text = Matrix::from_fn(30, 4, |i, j| ((i * 4 + j) as f64 * 0.3).sin().abs());
        let model = svd_fit(&x, Some(&text), 6, 5).unwrap();
        let probe = random_binary(5, 8, 13);
        let zeros = Matrix::zeros(5, 4);
        let scores = model.score(&probe, Some(&zeros)).unwrap();
        let SvdModel::WithText { right, .. } = &model else {
            panic!("expected text model")
        };
        let full = probe.to_dense().hconcat(&zeros).unwrap();
        let projected = full.matmul(right).unwrap().matmul_t(right).unwrap();
        for r in 0..5 {
            for c in 0..8 {
                assert!((scores[(r, c)] - projected[(r, c)]).abs() < 1e-12);
            }
        }
        assert!(model.score(&probe, None).is_err());
    }
}
