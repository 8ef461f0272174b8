//! Samples in, rejection set out.
//!
//! Glues statistics, calibration draws and procedures together. The draws
//! are produced once per (method, statistic, seed) and can be handed to
//! several procedures, so single-step and step-down variants see the same
//! randomness.

use crate::correlation::{empirical_correlation, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::procedures::{apply, Method, ProcedureKind, RejectionSet};
use crate::quantiles::{
    bootstrap_draws, cholesky_psd, gaussian_draws_from_factor, CholeskyFactor, DrawMatrix,
    MIN_BOOTSTRAP_DRAWS, MIN_GAUSSIAN_DRAWS,
};
use crate::sample::SampleMatrix;
use crate::statistics::{
    fourth_moments, omega_gaussian, omega_general, p_values, statistic, statistic_from_correlation,
    PValueVector, PairCovariance, StatKind, StatVector, RHO_SATURATION,
};

/// Which covariance formula the MaxT plug-in uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaSource {
    /// Gaussian closed form at the empirical correlations.
    #[default]
    Gaussian,
    /// General form with empirical fourth moments.
    FourthMoment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub maxt_draws: usize,
    pub bootstrap_draws: usize,
    pub omega: OmegaSource,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            maxt_draws: 1000,
            bootstrap_draws: 100,
            omega: OmegaSource::Gaussian,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if self.maxt_draws < MIN_GAUSSIAN_DRAWS {
            return Err(Error::Config(format!(
                "MaxT needs at least {MIN_GAUSSIAN_DRAWS} draws, got {}",
                self.maxt_draws
            )));
        }
        if self.bootstrap_draws < MIN_BOOTSTRAP_DRAWS {
            return Err(Error::Config(format!(
                "the bootstrap needs at least {MIN_BOOTSTRAP_DRAWS} resamples, got {}",
                self.bootstrap_draws
            )));
        }
        Ok(())
    }
}

/// Statistics with the empirical correlation they came from.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub gamma: CorrelationMatrix,
    pub stats: StatVector,
    pub pvalues: PValueVector,
}

/// Computes the statistics of `kind`, reusing an already computed
/// empirical correlation when given.
pub fn evaluate(samples: &SampleMatrix, kind: StatKind, gamma: Option<&CorrelationMatrix>) -> Result<Evaluated> {
    let gamma = match gamma {
        Some(g) => g.clone(),
        None => empirical_correlation(samples),
    };
    let stats = match kind {
        StatKind::SecondOrder => statistic(samples, kind)?,
        _ => StatVector {
            kind,
            values: statistic_from_correlation(&gamma, kind, samples.n())?,
            n: samples.n(),
        },
    };
    let pvalues = p_values(&stats);
    Ok(Evaluated { gamma, stats, pvalues })
}

/// `Omega^(k)` at the empirical correlations, saturated at `|rho| = 1 - 1e-12`
/// so that perfectly correlated columns do not make it singular.
pub fn plugin_covariance(
    samples: &SampleMatrix,
    gamma: &CorrelationMatrix,
    kind: StatKind,
    omega: OmegaSource,
) -> Result<PairCovariance> {
    match omega {
        OmegaSource::Gaussian => omega_gaussian(&gamma.clamped(RHO_SATURATION), kind),
        OmegaSource::FourthMoment => omega_general(&fourth_moments(samples)?, kind),
    }
}

/// Factor of `Omega^(k)` at a known correlation matrix, for the oracle.
pub fn oracle_factor(truth: &CorrelationMatrix, kind: StatKind) -> Result<CholeskyFactor> {
    cholesky_psd(&omega_gaussian(truth, kind)?)
}

/// Draws for the quantile-based methods; `None` for the analytic ones.
///
/// `oracle` must be the factor from [`oracle_factor`] when `method` is
/// `OracleMaxT`.
pub fn calibration_draws(
    method: Method,
    samples: &SampleMatrix,
    evaluated: &Evaluated,
    oracle: Option<&CholeskyFactor>,
    calibration: &Calibration,
    seed: u64,
) -> Result<Option<DrawMatrix>> {
    let kind = evaluated.stats.kind;
    match method {
        Method::Bonferroni | Method::Sidak | Method::BenjaminiHochberg => Ok(None),
        Method::BootRW => bootstrap_draws(samples, kind, calibration.bootstrap_draws, seed).map(Some),
        Method::MaxT => {
            let sigma = plugin_covariance(samples, &evaluated.gamma, kind, calibration.omega)?;
            gaussian_draws_from_factor(&cholesky_psd(&sigma)?, calibration.maxt_draws, seed).map(Some)
        }
        Method::OracleMaxT => {
            let factor = oracle.ok_or_else(|| {
                Error::Config("oracle MaxT needs the true correlation matrix".into())
            })?;
            gaussian_draws_from_factor(factor, calibration.maxt_draws, seed).map(Some)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub evaluated: Evaluated,
    pub rejection: RejectionSet,
}

/// Tests all pairs of `samples` with one statistic and one procedure.
/// `truth` is only used (and required) by oracle MaxT.
pub fn test_correlations(
    samples: &SampleMatrix,
    kind: StatKind,
    procedure: ProcedureKind,
    alpha: f64,
    calibration: &Calibration,
    seed: u64,
    truth: Option<&CorrelationMatrix>,
) -> Result<TestOutcome> {
    if procedure.method.needs_draws() {
        calibration.validate()?;
    }
    let evaluated = evaluate(samples, kind, None)?;
    let oracle = match (procedure.method, truth) {
        (Method::OracleMaxT, Some(t)) => Some(oracle_factor(t, kind)?),
        _ => None,
    };
    let draws = calibration_draws(procedure.method, samples, &evaluated, oracle.as_ref(), calibration, seed)?;
    let rejection = apply(procedure, &evaluated.stats, &evaluated.pvalues, draws.as_ref(), alpha)?;
    Ok(TestOutcome { evaluated, rejection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::pair_to_flat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_samples(n: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        SampleMatrix::from_rows(n, p, &rows).unwrap()
    }

    fn all_procedures() -> Vec<ProcedureKind> {
        let mut out = Vec::new();
        for m in [Method::Bonferroni, Method::Sidak, Method::BootRW, Method::MaxT] {
            out.push(ProcedureKind::single(m));
            out.push(ProcedureKind::step_down(m));
        }
        out.push(ProcedureKind::single(Method::BenjaminiHochberg));
        out
    }

    #[test]
    fn duplicated_column_is_rejected_everywhere() {
        let s = gaussian_samples(60, 4, 11);
        let mut data = s.data().clone();
        let copy = data.column(0).clone_owned();
        data.set_column(3, &copy);
        let s = SampleMatrix::new(data).unwrap();
        let target = pair_to_flat(0, 3, 4).unwrap();
        for kind in StatKind::ALL {
            for proc in all_procedures() {
                let out = test_correlations(&s, kind, proc, 0.05, &Calibration::default(), 1, None);
                match (kind, out) {
                    (_, Ok(out)) => assert!(out.rejection.contains(target), "{kind} {proc}"),
                    // Z = x^2 has positive variance, so this never degenerates.
                    (k, Err(e)) => panic!("{k} {proc}: {e}"),
                }
            }
        }
    }

    #[test]
    fn strong_pair_is_rejected_by_all_methods() {
        // Two columns with correlation about 0.9, n = 100.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for _ in 0..100 {
            let x: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            rows.push(x);
            rows.push(0.9 * x + (1.0f64 - 0.81).sqrt() * e);
        }
        let s = SampleMatrix::from_rows(100, 2, &rows).unwrap();
        for kind in StatKind::ALL {
            for proc in all_procedures() {
                let out = test_correlations(&s, kind, proc, 0.05, &Calibration::default(), 2, None).unwrap();
                assert_eq!(out.rejection.rejected, vec![0], "{kind} {proc}");
            }
        }
    }

    #[test]
    fn oracle_requires_truth() {
        let s = gaussian_samples(50, 3, 1);
        let proc = ProcedureKind::single(Method::OracleMaxT);
        let cal = Calibration::default();
        assert!(test_correlations(&s, StatKind::Fisher, proc, 0.05, &cal, 1, None).is_err());
        let truth = CorrelationMatrix::identity(3);
        assert!(test_correlations(&s, StatKind::Fisher, proc, 0.05, &cal, 1, Some(&truth)).is_ok());
    }

    #[test]
    fn calibration_limits() {
        let mut cal = Calibration::default();
        assert!(cal.validate().is_ok());
        cal.maxt_draws = 99;
        assert!(cal.validate().is_err());
        cal.maxt_draws = 100;
        cal.bootstrap_draws = 49;
        assert!(cal.validate().is_err());
    }

    #[test]
    fn fourth_moment_plugin_runs() {
        let s = gaussian_samples(200, 4, 3);
        let cal = Calibration {
            omega: OmegaSource::FourthMoment,
            ..Calibration::default()
        };
        for kind in StatKind::ALL {
            let out = test_correlations(&s, kind, ProcedureKind::step_down(Method::MaxT), 0.05, &cal, 4, None).unwrap();
            assert!(out.rejection.thresholds[0] > 1.5);
        }
    }
}
