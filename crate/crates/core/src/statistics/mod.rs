//! Pairwise correlation test statistics and their asymptotic p-values.

mod moments;
mod omega;

pub use moments::{fourth_moments, FourthMoments};
pub use omega::{omega_general, omega_gaussian, CovarianceSource, PairCovariance};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::correlation::{empirical_correlation, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::normal;
use crate::pairs::pair_count;
use crate::sample::SampleMatrix;

/// Correlations at or beyond this magnitude are saturated before the
/// Student and Fisher transforms, which diverge at `|rho| = 1`.
pub const RHO_SATURATION: f64 = 1.0 - 1e-12;

/// Which statistic is computed from the empirical correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatKind {
    /// `sqrt(n) * rho`
    Empirical,
    /// `sqrt(n - 2) * rho / sqrt(1 - rho^2)`
    Student,
    /// `sqrt(n - 3) / 2 * log((1 + rho) / (1 - rho))`
    Fisher,
    /// `sqrt(n) * mean(Z) / sd(Z)` with `Z` the products of standardized columns.
    SecondOrder,
}

impl StatKind {
    pub const ALL: [StatKind; 4] = [
        StatKind::Empirical,
        StatKind::Student,
        StatKind::Fisher,
        StatKind::SecondOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatKind::Empirical => "empirical",
            StatKind::Student => "student",
            StatKind::Fisher => "fisher",
            StatKind::SecondOrder => "secondorder",
        }
    }

    /// The statistic as a function of a correlation value, for the kinds
    /// that are one (all but `SecondOrder`).
    pub fn transform(self, rho: f64, n: usize) -> Option<f64> {
        let n = n as f64;
        match self {
            StatKind::Empirical => Some(n.sqrt() * rho),
            StatKind::Student => {
                let r = saturate(rho);
                Some((n - 2.0).sqrt() * r / (1.0 - r * r).sqrt())
            }
            StatKind::Fisher => {
                // atanh via ln_1p is not exactly odd in floating point.
                let r = saturate(rho);
                Some((n - 3.0).sqrt() * r.abs().atanh().copysign(r))
            }
            StatKind::SecondOrder => None,
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "empirical" => Ok(StatKind::Empirical),
            "student" => Ok(StatKind::Student),
            "fisher" => Ok(StatKind::Fisher),
            "secondorder" | "second-order" | "second_order" => Ok(StatKind::SecondOrder),
            other => Err(Error::InvalidInput(format!("unknown statistic `{other}`"))),
        }
    }
}

fn saturate(rho: f64) -> f64 {
    rho.clamp(-RHO_SATURATION, RHO_SATURATION)
}

/// One statistic per pair, in flat pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatVector {
    pub kind: StatKind,
    pub values: Vec<f64>,
    /// Sample size the statistics were computed from.
    pub n: usize,
}

impl StatVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Two-sided asymptotic p-values, one per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector(pub Vec<f64>);

impl PValueVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Computes the statistic vector of the given kind.
pub fn statistic(samples: &SampleMatrix, kind: StatKind) -> Result<StatVector> {
    let n = samples.n();
    let values = match kind {
        StatKind::SecondOrder => {
            let standardized = samples.standardize()?;
            let parts = second_order_parts(standardized.data())?;
            parts.statistics(n)
        }
        _ => statistic_from_correlation(&empirical_correlation(samples), kind, n)?,
    };
    Ok(StatVector { kind, values, n })
}

/// Applies a correlation-based statistic to every pair of `gamma`.
pub fn statistic_from_correlation(
    gamma: &CorrelationMatrix,
    kind: StatKind,
    n: usize,
) -> Result<Vec<f64>> {
    let values = gamma.pair_values();
    values
        .into_iter()
        .map(|r| {
            kind.transform(r, n).ok_or_else(|| {
                Error::InvalidInput("the second-order statistic needs the samples".into())
            })
        })
        .collect()
}

/// `p = 2 (1 - Phi(|T|))` for every entry.
pub fn p_values(stats: &StatVector) -> PValueVector {
    PValueVector(stats.values.iter().map(|&t| normal::two_sided_p(t)).collect())
}

/// Per-pair mean and variance (divisor `n`) of the products of centered columns.
#[derive(Debug, Clone)]
pub(crate) struct SecondOrderParts {
    pub zbar: Vec<f64>,
    pub theta: Vec<f64>,
}

impl SecondOrderParts {
    pub fn statistics(&self, n: usize) -> Vec<f64> {
        let sn = (n as f64).sqrt();
        self.zbar
            .iter()
            .zip(&self.theta)
            .map(|(z, t)| sn * z / t.sqrt())
            .collect()
    }
}

/// Forms `Z_l = (x_li - mean_i)(x_lj - mean_j)` for every pair and returns
/// its empirical mean and variance.
pub(crate) fn second_order_parts(data: &DMatrix<f64>) -> Result<SecondOrderParts> {
    let (n, p) = data.shape();
    let nf = n as f64;
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / nf;
        col.iter_mut().for_each(|v| *v -= mean);
    }
    let cols: Vec<&[f64]> = (0..p)
        .map(|c| &centered.as_slice()[c * n..(c + 1) * n])
        .collect();
    let m = pair_count(p);
    let mut zbar = Vec::with_capacity(m);
    let mut theta = Vec::with_capacity(m);
    for i in 0..p {
        for j in (i + 1)..p {
            let (a, b) = (cols[i], cols[j]);
            let mean = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / nf;
            let var = a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x * y - mean;
                    d * d
                })
                .sum::<f64>()
                / nf;
            if !(var > 0.0) {
                return Err(Error::Degenerate(format!(
                    "second-order variance vanishes for pair ({i}, {j})"
                )));
            }
            zbar.push(mean);
            theta.push(var);
        }
    }
    Ok(SecondOrderParts { zbar, theta })
}
