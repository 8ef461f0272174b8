//! Asymptotic covariance of the statistic vectors.
//!
//! Rows and columns follow the flat pair order of [`crate::pairs`].

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::moments::FourthMoments;
use super::StatKind;
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::pairs::{pairs, PairIndex};

/// Where a [`PairCovariance`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSource {
    /// Closed form for Gaussian data evaluated at some correlation matrix.
    GaussianClosedForm,
    /// General formula evaluated at plug-in fourth moments.
    FourthMomentPlugin,
    /// Supplied externally (or by a known model).
    Oracle,
}

/// `m x m` covariance of a statistic vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovariance {
    pub values: DMatrix<f64>,
    pub kind: Option<StatKind>,
    pub source: CovarianceSource,
}

impl PairCovariance {
    /// Wraps an externally supplied matrix; it must be square, finite and
    /// symmetric to within `1e-9` relative to its largest entry.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let (r, c) = values.shape();
        if r != c || r == 0 {
            return Err(Error::InvalidInput(format!(
                "covariance must be a non-empty square matrix, got {r}x{c}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = values.amax().max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not symmetric at ({i},{j}): {} vs {}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(PairCovariance {
            values,
            kind: None,
            source: CovarianceSource::Oracle,
        })
    }

    pub fn identity(m: usize) -> Self {
        PairCovariance {
            values: DMatrix::identity(m, m),
            kind: None,
            source: CovarianceSource::Oracle,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// Fills a symmetric matrix from its upper triangle, rows in parallel.
fn fill_symmetric<F>(p: usize, entry: F) -> Result<DMatrix<f64>>
where
    F: Fn(&PairIndex, &PairIndex) -> Result<f64> + Sync,
{
    let all: Vec<PairIndex> = pairs(p).collect();
    let m = all.len();
    let rows: Vec<Vec<f64>> = all
        .par_iter()
        .map(|a| all[a.flat..].iter().map(|b| entry(a, b)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(m, m);
    for (r, row) in rows.iter().enumerate() {
        for (offset, v) in row.iter().enumerate() {
            out[(r, r + offset)] = *v;
            out[(r + offset, r)] = *v;
        }
    }
    Ok(out)
}

/// Covariance of `sqrt(n)(rho_hat - rho)` for Gaussian data: the three
/// closed forms for a repeated pair, pairs sharing one variable, and
/// disjoint pairs.
fn gaussian_empirical_entry(g: &CorrelationMatrix, a: &PairIndex, b: &PairIndex) -> f64 {
    let r = |x: usize, y: usize| g.get(x, y);
    if a.flat == b.flat {
        let rho = r(a.i, a.j);
        return (1.0 - rho * rho) * (1.0 - rho * rho);
    }
    match a.shared_with(b) {
        1 => {
            // Rewrite as (c x, c y) with c the shared variable; the covariance
            // is invariant to the order inside each pair.
            let c = if a.i == b.i || a.i == b.j { a.i } else { a.j };
            let x = if a.i == c { a.j } else { a.i };
            let y = if b.i == c { b.j } else { b.i };
            let (rcx, rcy, rxy) = (r(c, x), r(c, y), r(x, y));
            -0.5 * rcx * rcy * (1.0 - rcx * rcx - rcy * rcy - rxy * rxy)
                + rxy * (1.0 - rcx * rcx - rcy * rcy)
        }
        _ => {
            let (i, j, k, l) = (a.i, a.j, b.i, b.j);
            let (rij, rkl) = (r(i, j), r(k, l));
            let (rik, ril, rjk, rjl) = (r(i, k), r(i, l), r(j, k), r(j, l));
            0.5 * rij * rkl * (rik * rik + ril * ril + rjk * rjk + rjl * rjl)
                + rik * rjl
                + ril * rjk
                - rik * rjk * rkl
                - rij * rik * ril
                - rij * rjk * rjl
                - ril * rjl * rkl
        }
    }
}

fn one_minus_sq(rho: f64, pair: &PairIndex) -> Result<f64> {
    let v = 1.0 - rho * rho;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Singular(format!(
            "|rho| = 1 for pair ({}, {}); the Student and Fisher covariances diverge",
            pair.i, pair.j
        )))
    }
}

/// Delta-method rescaling of the empirical-correlation covariance.
fn rescale(kind: StatKind, omega: f64, rij: f64, rkl: f64, a: &PairIndex, b: &PairIndex) -> Result<f64> {
    match kind {
        StatKind::Empirical => Ok(omega),
        StatKind::Student => {
            let d = one_minus_sq(rij, a)? * one_minus_sq(rkl, b)?;
            Ok(omega / d.powf(1.5))
        }
        StatKind::Fisher => {
            let d = one_minus_sq(rij, a)? * one_minus_sq(rkl, b)?;
            Ok(omega / d)
        }
        StatKind::SecondOrder => unreachable!("second-order covariance has its own formula"),
    }
}

/// Gaussian closed-form covariance `Omega^(k)(gamma)`.
pub fn omega_gaussian(gamma: &CorrelationMatrix, kind: StatKind) -> Result<PairCovariance> {
    let values = fill_symmetric(gamma.p(), |a, b| {
        let rij = gamma.get(a.i, a.j);
        let rkl = gamma.get(b.i, b.j);
        match kind {
            StatKind::SecondOrder => {
                let r = |x: usize, y: usize| gamma.get(x, y);
                let num = r(a.i, b.i) * r(a.j, b.j) + r(a.i, b.j) * r(b.i, a.j);
                Ok(num / ((1.0 + rij * rij) * (1.0 + rkl * rkl)).sqrt())
            }
            _ => rescale(kind, gaussian_empirical_entry(gamma, a, b), rij, rkl, a, b),
        }
    })?;
    Ok(PairCovariance {
        values,
        kind: Some(kind),
        source: CovarianceSource::GaussianClosedForm,
    })
}

/// General covariance from fourth moments (no Gaussian assumption).
pub fn omega_general(moments: &FourthMoments, kind: StatKind) -> Result<PairCovariance> {
    let m = moments;
    let values = fill_symmetric(m.p(), |a, b| {
        let (i, j, k, l) = (a.i, a.j, b.i, b.j);
        let rij = m.correlation(i, j);
        let rkl = m.correlation(k, l);
        if kind == StatKind::SecondOrder {
            let var_a = m.get(i, j, i, j) - rij * rij;
            let var_b = m.get(k, l, k, l) - rkl * rkl;
            if !(var_a > 0.0 && var_b > 0.0) {
                return Err(Error::Singular(format!(
                    "non-positive second-order variance for pairs ({i},{j}) / ({k},{l})"
                )));
            }
            return Ok((m.get(i, j, k, l) - rij * rkl) / (var_a * var_b).sqrt());
        }
        let omega = m.get(i, j, k, l)
            + 0.25 * rij * rkl * (m.get(i, i, k, k) + m.get(i, i, l, l) + m.get(j, j, k, k) + m.get(j, j, l, l))
            - 0.5 * rij * (m.get(i, i, k, l) + m.get(j, j, k, l))
            - 0.5 * rkl * (m.get(i, j, k, k) + m.get(i, j, l, l));
        rescale(kind, omega, rij, rkl, a, b)
    })?;
    Ok(PairCovariance {
        values,
        kind: Some(kind),
        source: CovarianceSource::FourthMomentPlugin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::pair_to_flat;
    use crate::sample::SampleMatrix;
    use crate::statistics::fourth_moments;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn three_var(rho12: f64) -> CorrelationMatrix {
        let mut g = DMatrix::identity(3, 3);
        g[(0, 1)] = rho12;
        g[(1, 0)] = rho12;
        CorrelationMatrix::new(g).unwrap()
    }

    /// Random valid correlation matrix: normalized Gram matrix of Gaussian vectors.
    fn random_gamma(p: usize, rng: &mut ChaCha8Rng) -> CorrelationMatrix {
        let g = DMatrix::from_fn(p + 3, p, |_, _| { let v: f64 = StandardNormal.sample(rng); v });
        let s = g.tr_mul(&g);
        let d: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
        CorrelationMatrix::new(DMatrix::from_fn(p, p, |i, j| {
            if i == j { 1.0 } else { s[(i, j)] / (d[i] * d[j]) }
        }))
        .unwrap()
    }

    /// Isserlis: E[ZiZjZkZl] = r_ij r_kl + r_ik r_jl + r_il r_jk.
    fn isserlis(g: &CorrelationMatrix) -> FourthMoments {
        FourthMoments::from_fn(g.clone(), |i, j, k, l| {
            g.get(i, j) * g.get(k, l) + g.get(i, k) * g.get(j, l) + g.get(i, l) * g.get(j, k)
        })
        .unwrap()
    }

    #[test]
    fn identity_collapses_to_identity() {
        for p in [3, 10, 26] {
            let g = CorrelationMatrix::identity(p);
            for kind in StatKind::ALL {
                let om = omega_gaussian(&g, kind).unwrap();
                let m = om.dim();
                assert_eq!(om.values, DMatrix::identity(m, m), "{kind} p={p}");
            }
        }
    }

    #[test]
    fn hand_values_three_variables() {
        let g = three_var(0.2);
        let om = omega_gaussian(&g, StatKind::Empirical).unwrap();
        let p12 = pair_to_flat(0, 1, 3).unwrap();
        let p13 = pair_to_flat(0, 2, 3).unwrap();
        let p23 = pair_to_flat(1, 2, 3).unwrap();
        assert!((om.values[(p12, p12)] - 0.9216).abs() < 1e-15);
        assert!((om.values[(p13, p23)] - 0.2).abs() < 1e-15);
        let om4 = omega_gaussian(&g, StatKind::SecondOrder).unwrap();
        assert!((om4.values[(p12, p12)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn null_pairs_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = DMatrix::identity(6, 6);
        for (i, j) in [(0, 1), (1, 2), (3, 4), (0, 5)] {
            let v = rng.random_range(-0.3..0.3);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        let g = CorrelationMatrix::new(g).unwrap();
        for kind in StatKind::ALL {
            let om = omega_gaussian(&g, kind).unwrap();
            for pair in pairs(6) {
                if g.get(pair.i, pair.j) == 0.0 {
                    assert_eq!(om.values[(pair.flat, pair.flat)], 1.0, "{kind}");
                }
            }
            assert_eq!(om.values, om.values.transpose());
        }
    }

    #[test]
    fn closed_form_matches_isserlis_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let g = random_gamma(5, &mut rng);
            let moments = isserlis(&g);
            for kind in StatKind::ALL {
                let closed = omega_gaussian(&g, kind).unwrap();
                let general = omega_general(&moments, kind).unwrap();
                let diff = (&closed.values - &general.values).amax();
                assert!(diff < 1e-10, "{kind}: {diff}");
            }
        }
    }

    #[test]
    fn general_formula_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<f64> = (0..300 * 4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * z * z + z
            })
            .collect();
        let s = SampleMatrix::from_rows(300, 4, &rows).unwrap();
        let moments = fourth_moments(&s).unwrap();
        for kind in StatKind::ALL {
            let om = omega_general(&moments, kind).unwrap();
            assert_eq!(om.values, om.values.transpose());
        }
    }

    #[test]
    fn plugin_moments_converge_to_identity_under_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let rows: Vec<f64> = (0..n * 4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = SampleMatrix::from_rows(n, 4, &rows).unwrap();
        let moments = fourth_moments(&s).unwrap();
        for kind in StatKind::ALL {
            let om = omega_general(&moments, kind).unwrap();
            let diff = (&om.values - DMatrix::<f64>::identity(6, 6)).amax();
            assert!(diff < 0.05, "{kind}: {diff}");
        }
    }

    #[test]
    fn perfect_correlation_is_singular_for_student_and_fisher() {
        let g = three_var(1.0);
        assert!(matches!(
            omega_gaussian(&g, StatKind::Student),
            Err(Error::Singular(_))
        ));
        assert!(matches!(
            omega_gaussian(&g, StatKind::Fisher),
            Err(Error::Singular(_))
        ));
        assert!(omega_gaussian(&g, StatKind::Empirical).is_ok());
    }

    #[test]
    fn external_matrix_validation() {
        assert!(PairCovariance::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0])).is_err());
        assert!(PairCovariance::from_matrix(DMatrix::from_row_slice(1, 2, &[1.0, 0.3])).is_err());
        assert!(PairCovariance::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0])).is_ok());
    }
}
