//! Multivariate total positivity (MTP2) of `|X|` for a Gaussian vector `X`.
//!
//! `|X|` with `X ~ N(0, sigma)` is MTP2 iff some diagonal sign matrix `D`
//! makes every off-diagonal entry of `-D sigma^{-1} D` nonnegative. The
//! check enumerates the `2^{d-1}` sign patterns with the first sign fixed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest dimension accepted by the brute-force check.
pub const MTP2_MAX_DIM: usize = 20;

const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Mtp2Verdict {
    pub is_mtp2: bool,
    /// Diagonal of `D` (entries `+1`/`-1`) when `is_mtp2`.
    pub witness: Option<Vec<i8>>,
}

pub fn is_mtp2_gaussian_abs(sigma: &DMatrix<f64>) -> Result<Mtp2Verdict> {
    let d = sigma.nrows();
    if d == 0 || sigma.ncols() != d {
        return Err(Error::InvalidInput(format!(
            "expected a non-empty square matrix, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if d > MTP2_MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "dimension {d} exceeds {MTP2_MAX_DIM} for the sign-pattern search"
        )));
    }
    let precision = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPsd("covariance is not positive definite".into()))?
        .inverse();
    for pattern in 0u32..(1 << (d - 1)) {
        // Bit k - 1 set means sign k is negative; sign 0 stays positive.
        let sign = |k: usize| if k > 0 && pattern >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 };
        let ok = (0..d).all(|i| {
            ((i + 1)..d).all(|j| -sign(i) * sign(j) * precision[(i, j)] >= -TOLERANCE)
        });
        if ok {
            let witness = (0..d).map(|k| sign(k) as i8).collect();
            return Ok(Mtp2Verdict {
                is_mtp2: true,
                witness: Some(witness),
            });
        }
    }
    Ok(Mtp2Verdict {
        is_mtp2: false,
        witness: None,
    })
}

/// Random correlation matrix: the normalized `G^T G` for a
/// `(d + 2) x d` standard Gaussian `G`.
pub fn wishart_correlation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d + 2, d, |_, _| rng.sample(StandardNormal));
    let s = g.tr_mul(&g);
    let scale: Vec<f64> = (0..d).map(|i| s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            s[(i, j)] / (scale[i] * scale[j])
        }
    })
}
