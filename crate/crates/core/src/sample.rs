//! The raw `n x p` data matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest sample size accepted; the Fisher statistic uses `n - 3`.
pub const MIN_OBSERVATIONS: usize = 4;

/// `n` observations (rows) of `p` variables (columns).
///
/// Construction checks that every entry is finite, `n >= 4`, `p >= 2`, and
/// that each column has strictly positive empirical variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (n, p) = data.shape();
        if n < MIN_OBSERVATIONS {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_OBSERVATIONS} observations, got {n}"
            )));
        }
        if p < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 variables, got {p}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        for (c, col) in data.column_iter().enumerate() {
            if !has_spread(col.as_slice()) {
                return Err(Error::DegenerateColumn { column: c });
            }
        }
        Ok(SampleMatrix { data })
    }

    /// Builds from row-major data.
    pub fn from_rows(n: usize, p: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                rows.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, p, rows))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, c: usize) -> &[f64] {
        let n = self.n();
        &self.data.as_slice()[c * n..(c + 1) * n]
    }

    /// Centers every column and scales it to unit variance (divisor `n`).
    pub fn standardize(&self) -> Result<SampleMatrix> {
        let n = self.n() as f64;
        let mut out = self.data.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            let mean = col.iter().sum::<f64>() / n;
            col.iter_mut().for_each(|v| *v -= mean);
            let var = col.iter().map(|v| v * v).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::DegenerateColumn { column: c });
            }
            let sd = var.sqrt();
            col.iter_mut().for_each(|v| *v /= sd);
        }
        Ok(SampleMatrix { data: out })
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// True when the column is not constant.
pub(crate) fn has_spread(col: &[f64]) -> bool {
    match col.first() {
        Some(first) => col.iter().any(|v| v != first),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(SampleMatrix::from_rows(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]).is_err());
        assert!(SampleMatrix::from_rows(4, 1, &[1.0, 2.0, 3.0, 4.0]).is_err());
        let nan = [1.0, 2.0, f64::NAN, 4.0, 5.0, 6.0, 7.0, 9.0];
        assert!(matches!(
            SampleMatrix::from_rows(4, 2, &nan),
            Err(Error::InvalidInput(_))
        ));
        let constant = [1.0, 3.0, 2.0, 3.0, 5.0, 3.0, 4.0, 3.0];
        assert_eq!(
            SampleMatrix::from_rows(4, 2, &constant),
            Err(Error::DegenerateColumn { column: 1 })
        );
    }

    #[test]
    fn standardize_two_point_column() {
        let s = SampleMatrix::from_rows(4, 2, &[0.0, 1.0, 2.0, 2.0, 0.0, 3.0, 2.0, 4.0])
            .unwrap()
            .standardize()
            .unwrap();
        assert_eq!(s.column(0), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 5.0 - 1.0).collect();
        let once = SampleMatrix::from_rows(20, 2, &rows).unwrap().standardize().unwrap();
        let twice = once.standardize().unwrap();
        for (a, b) in once.data().iter().zip(twice.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 10.0 + 3.0).collect();
        let s = SampleMatrix::from_rows(50, 4, &rows).unwrap().standardize().unwrap();
        for c in 0..4 {
            let col = s.column(c);
            let mean: f64 = col.iter().sum::<f64>() / 50.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
}
