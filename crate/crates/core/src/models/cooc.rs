use crate::corpus::InteractionMatrix;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Item co-occurrence model `C = XᵀX`; the diagonal keeps each item's
/// occurrence count.
#[derive(Clone, Debug, PartialEq)]
pub struct CoocModel {
    pub counts: Matrix,
}

pub fn cooc_fit(x: &InteractionMatrix) -> CoocModel {
    let n = x.n_cols();
    let mut counts = Matrix::zeros(n, n);
    for row in x.iter_rows() {
        for &i in row {
            let target = counts.row_mut(i);
            for &j in row {
                target[j] += 1.0;
            }
        }
    }
    CoocModel { counts }
}

impl CoocModel {
    pub fn n_items(&self) -> usize {
        self.counts.rows()
    }

    /// `x·C` for each row of the partial input; an empty row scores zero.
    pub fn score(&self, input: &InteractionMatrix) -> Result<Matrix> {
        let n = self.n_items();
        if input.n_cols() != n {
            return Err(Error::Shape {
                op: "cooc_score",
                left: (input.n_rows(), input.n_cols()),
                right: self.counts.shape(),
            });
        }
        let mut out = Matrix::zeros(input.n_rows(), n);
        for (r, row) in input.iter_rows().enumerate() {
            let target = out.row_mut(r);
            for &i in row {
                for (t, &c) in target.iter_mut().zip(self.counts.row(i)) {
                    *t += c;
                }
            }
        }
        Ok(out)
    }
}

pub fn cooc_score(model: &CoocModel, input: &InteractionMatrix) -> Result<Matrix> {
    model.score(input)
}
