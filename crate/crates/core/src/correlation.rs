//! Correlation matrices and the Pearson estimator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pairs::pair_count;
use crate::sample::SampleMatrix;

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric `p x p` matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validates symmetry, unit diagonal and the entry range.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (r, c) = values.shape();
        if r != c || r < 2 {
            return Err(Error::InvalidInput(format!(
                "correlation matrix must be square with p >= 2, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if (values[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} is {} (expected 1)",
                    values[(i, i)]
                )));
            }
            for j in (i + 1)..r {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if !a.is_finite() || (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i},{j}) and ({j},{i}) differ: {a} vs {b}"
                    )));
                }
                if a.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i},{j}) = {a} outside [-1, 1]"
                    )));
                }
            }
        }
        let mut values = values;
        symmetrize(&mut values);
        Ok(CorrelationMatrix { values })
    }

    /// Like [`CorrelationMatrix::new`] but also requires positive definiteness,
    /// as expected of a model (not an estimate).
    pub fn new_model(values: DMatrix<f64>) -> Result<Self> {
        let gamma = Self::new(values)?;
        if !gamma.is_positive_definite() {
            return Err(Error::NotPsd(
                "model correlation matrix is not positive definite".into(),
            ));
        }
        Ok(gamma)
    }

    pub fn identity(p: usize) -> Self {
        CorrelationMatrix {
            values: DMatrix::identity(p, p),
        }
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Upper-triangle entries in flat pair order.
    pub fn pair_values(&self) -> Vec<f64> {
        let p = self.p();
        let mut out = Vec::with_capacity(pair_count(p));
        for i in 0..p {
            for j in (i + 1)..p {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }

    pub fn is_positive_definite(&self) -> bool {
        self.values.clone().cholesky().is_some()
    }

    /// Copy with every off-diagonal entry clamped to `[-cap, cap]`.
    pub fn clamped(&self, cap: f64) -> CorrelationMatrix {
        let mut values = self.values.clone();
        let p = self.p();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    values[(i, j)] = values[(i, j)].clamp(-cap, cap);
                }
            }
        }
        CorrelationMatrix { values }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        m[(i, i)] = 1.0;
        for j in (i + 1)..p {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Pearson correlation of the columns of `samples`.
///
/// Cross-products of centered columns divided by the product of centered
/// column norms; the diagonal is exactly 1.
pub fn empirical_correlation(samples: &SampleMatrix) -> CorrelationMatrix {
    // SampleMatrix guarantees non-constant columns.
    pearson(samples.data()).expect("validated sample matrix has non-degenerate columns")
}

/// Pearson correlation of an arbitrary data matrix (rows are observations).
/// Fails with the offending column when a column has zero spread.
pub(crate) fn pearson(data: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let n = data.nrows() as f64;
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    let gram = centered.tr_mul(&centered);
    let p = gram.nrows();
    let mut norms = Vec::with_capacity(p);
    for c in 0..p {
        let ss = gram[(c, c)];
        if !(ss > 0.0) {
            return Err(Error::DegenerateColumn { column: c });
        }
        norms.push(ss.sqrt());
    }
    let values = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });
    let mut values = values;
    symmetrize(&mut values);
    Ok(CorrelationMatrix { values })
}
