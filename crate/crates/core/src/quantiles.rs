//! Rejection thresholds.
//!
//! Analytic constants (Bonferroni, Šidák) and Monte Carlo quantiles of the
//! maximum absolute coordinate of a statistic vector, obtained either from
//! Gaussian draws with a given covariance (parametric bootstrap) or from
//! resampling the observations (nonparametric bootstrap).
//!
//! Monte Carlo draws are materialized once as a [`DrawMatrix`]; quantiles
//! over any subset of coordinates are then read off the same draws, which
//! makes the threshold exactly monotone in the subset.

use nalgebra::{DMatrix, DMatrixViewMut};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::correlation::{empirical_correlation, pearson};
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{domain, stream};
use crate::sample::SampleMatrix;
use crate::statistics::{second_order_parts, statistic_from_correlation, PairCovariance, StatKind};

/// Minimum Gaussian draws accepted by [`max_gauss_quantile`].
pub const MIN_GAUSSIAN_DRAWS: usize = 100;
/// Minimum resamples accepted by [`bootstrap_max_quantile`].
pub const MIN_BOOTSTRAP_DRAWS: usize = 50;

/// Jitter ladder for [`cholesky_psd`], as multiples of the largest diagonal entry.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

const GAUSSIAN_CHUNK: usize = 4096;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Šidák critical value `Phi^{-1}((1 - alpha)^{1/m} / 2 + 1/2)`.
///
/// The upper-tail mass `(1 - (1 - alpha)^{1/m}) / 2` is formed with
/// `expm1`/`ln_1p` so large `m` keeps full precision.
pub fn sidak_threshold(alpha: f64, m: usize) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0 && m >= 1);
    let tail = -0.5 * ((-alpha).ln_1p() / m as f64).exp_m1();
    normal::upper_quantile(tail)
}

/// Bonferroni per-test level `alpha / m` (p-value scale).
pub fn bonferroni_level(alpha: f64, m: usize) -> f64 {
    alpha / m as f64
}

/// Lower-triangular factor of `sigma + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    /// The absolute jitter added to the diagonal (0 when none was needed).
    pub jitter: f64,
}

/// Cholesky factorization with a fixed jitter ladder for PSD (possibly
/// singular) matrices.
pub fn cholesky_psd(sigma: &PairCovariance) -> Result<CholeskyFactor> {
    let m = sigma.dim();
    let max_diag = (0..m).map(|i| sigma.values[(i, i)]).fold(0.0f64, f64::max);
    if !(max_diag > 0.0) {
        return Err(Error::NotPsd("covariance has no positive diagonal entry".into()));
    }
    for step in JITTER_LADDER {
        let jitter = step * max_diag;
        let mut shifted = sigma.values.clone();
        for i in 0..m {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            return Ok(CholeskyFactor {
                lower: chol.l(),
                jitter,
            });
        }
    }
    Err(Error::NotPsd(format!(
        "Cholesky failed even with jitter {:e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1] * max_diag
    )))
}

/// How the rows of a [`DrawMatrix`] were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawProvenance {
    ParametricGaussian,
    NonparametricBootstrap,
}

/// `B x m` matrix of simulated or resampled (centered) statistic vectors.
#[derive(Debug, Clone)]
pub struct DrawMatrix {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
    pub provenance: DrawProvenance,
    pub seed: u64,
    /// Resamples discarded as degenerate and redrawn.
    pub redraws: usize,
}

impl DrawMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, provenance: DrawProvenance, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "draw matrix of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("draw matrix has non-finite entries".into()));
        }
        Ok(DrawMatrix {
            rows,
            cols,
            data,
            provenance,
            seed,
            redraws: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.data[b * self.cols..(b + 1) * self.cols]
    }

    /// Empirical `(1 - alpha)`-quantile of `max_{s in subset} |row_s|`,
    /// taken as the order statistic of rank `ceil((1 - alpha) B)`.
    pub fn max_quantile(&self, alpha: f64, subset: &[usize]) -> Result<f64> {
        check_alpha(alpha)?;
        if subset.is_empty() {
            return Err(Error::InvalidInput("quantile over an empty subset".into()));
        }
        if let Some(&bad) = subset.iter().find(|&&s| s >= self.cols) {
            return Err(Error::Index(format!("subset index {bad} >= m = {}", self.cols)));
        }
        let mut maxima: Vec<f64> = (0..self.rows)
            .map(|b| {
                let row = self.row(b);
                subset.iter().map(|&s| row[s].abs()).fold(0.0, f64::max)
            })
            .collect();
        let k = quantile_rank(alpha, self.rows);
        let (_, kth, _) = maxima.select_nth_unstable_by(k - 1, f64::total_cmp);
        Ok(*kth)
    }

    pub fn quantile_estimate(&self, alpha: f64, subset: &[usize]) -> Result<QuantileEstimate> {
        Ok(QuantileEstimate {
            value: self.max_quantile(alpha, subset)?,
            alpha,
            draws: self.rows,
            subset: subset.to_vec(),
            seed: self.seed,
        })
    }
}

/// 1-based rank `ceil((1 - alpha) B)`, clamped to `[1, B]`. The small
/// offset absorbs representation error such as `0.95 * 100 = 95.00000000000001`.
pub fn quantile_rank(alpha: f64, draws: usize) -> usize {
    let x = (1.0 - alpha) * draws as f64;
    ((x - 1e-9).ceil() as usize).clamp(1, draws)
}

/// A Monte Carlo threshold with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    pub alpha: f64,
    pub draws: usize,
    pub subset: Vec<usize>,
    pub seed: u64,
}

/// `draws` i.i.d. vectors `L xi`, `xi ~ N(0, I)`, with `L L^T = sigma (+ jitter)`.
///
/// Draw `b` uses its own random stream, so the matrix does not depend on
/// how the work is split across threads.
pub fn gaussian_draws(sigma: &PairCovariance, draws: usize, seed: u64) -> Result<DrawMatrix> {
    gaussian_draws_from_factor(&cholesky_psd(sigma)?, draws, seed)
}

/// [`gaussian_draws`] with the factorization done by the caller.
pub fn gaussian_draws_from_factor(factor: &CholeskyFactor, draws: usize, seed: u64) -> Result<DrawMatrix> {
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let m = factor.lower.nrows();
    let mut data = vec![0.0; draws * m];
    let mut xi = DMatrix::<f64>::zeros(m, GAUSSIAN_CHUNK.min(draws));
    for (chunk_idx, out) in data.chunks_mut(GAUSSIAN_CHUNK * m).enumerate() {
        let cols = out.len() / m;
        let first = chunk_idx * GAUSSIAN_CHUNK;
        if xi.ncols() != cols {
            xi = DMatrix::zeros(m, cols);
        }
        xi.as_mut_slice()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(c, col)| {
                let mut rng = stream(seed, &[domain::GAUSSIAN_DRAWS, (first + c) as u64]);
                col.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            });
        // Column-major m x cols output is row-major cols x m: one draw per row.
        let mut view = DMatrixViewMut::from_slice(out, m, cols);
        view.gemm(1.0, &factor.lower, &xi, 0.0);
    }
    DrawMatrix::new(draws, m, data, DrawProvenance::ParametricGaussian, seed)
}

/// `(1 - alpha)`-quantile of `|| N(0, sigma) restricted to subset ||_inf`.
pub fn max_gauss_quantile(
    sigma: &PairCovariance,
    alpha: f64,
    draws: usize,
    subset: &[usize],
    seed: u64,
) -> Result<QuantileEstimate> {
    if draws < MIN_GAUSSIAN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_GAUSSIAN_DRAWS} Gaussian draws, got {draws}"
        )));
    }
    check_alpha(alpha)?;
    gaussian_draws(sigma, draws, seed)?.quantile_estimate(alpha, subset)
}

/// Full-sample quantities the resampled statistics are centered at.
enum BootstrapCenter {
    /// Statistic values (or `sqrt(n) rho_hat` for the empirical kind).
    Statistic(Vec<f64>),
    /// Mean of the standardized products, i.e. the correlations.
    SecondOrder(Vec<f64>),
}

fn standardize_in_place(data: &mut DMatrix<f64>) -> Result<()> {
    let n = data.nrows() as f64;
    for (c, mut col) in data.column_iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        col.iter_mut().for_each(|v| *v -= mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::DegenerateColumn { column: c });
        }
        let sd = var.sqrt();
        col.iter_mut().for_each(|v| *v /= sd);
    }
    Ok(())
}

fn centered_resample(
    data: &DMatrix<f64>,
    kind: StatKind,
    center: &BootstrapCenter,
    rows: &[usize],
) -> Result<Vec<f64>> {
    let (n, p) = data.shape();
    let mut resampled = DMatrix::from_fn(n, p, |r, c| data[(rows[r], c)]);
    match center {
        BootstrapCenter::Statistic(base) => {
            let gamma = pearson(&resampled)?;
            let stats = statistic_from_correlation(&gamma, kind, n)?;
            Ok(stats.iter().zip(base).map(|(s, b)| s - b).collect())
        }
        BootstrapCenter::SecondOrder(zbar) => {
            standardize_in_place(&mut resampled)?;
            let parts = second_order_parts(&resampled)?;
            let sn = (n as f64).sqrt();
            Ok(parts
                .zbar
                .iter()
                .zip(&parts.theta)
                .zip(zbar)
                .map(|((z, t), z0)| sn * (z - z0) / t.sqrt())
                .collect())
        }
    }
}

/// Nonparametric bootstrap draws of the centered statistic vector.
///
/// Each of the `draws` resamples takes `n` rows with replacement and
/// records: `sqrt(n)(rho* - rho_hat)` (empirical), `T(rho*) - T(rho_hat)`
/// (Student, Fisher) or `sqrt(n)(Zbar* - Zbar) / sqrt(theta*)` (second
/// order). Resamples with a constant column are redrawn; more than `draws`
/// redraws in total is an error.
pub fn bootstrap_draws(samples: &SampleMatrix, kind: StatKind, draws: usize, seed: u64) -> Result<DrawMatrix> {
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one resample".into()));
    }
    let n = samples.n();
    let data = samples.data();
    let gamma = empirical_correlation(samples);
    let center = match kind {
        StatKind::SecondOrder => BootstrapCenter::SecondOrder(gamma.pair_values()),
        _ => BootstrapCenter::Statistic(statistic_from_correlation(&gamma, kind, n)?),
    };
    let max_attempts = draws + 1;
    let rows: Vec<(Vec<f64>, usize)> = (0..draws)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..max_attempts {
                let mut rng = stream(seed, &[domain::BOOTSTRAP, b as u64, attempt as u64]);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                match centered_resample(data, kind, &center, &idx) {
                    Ok(v) => return Ok((v, attempt)),
                    Err(Error::DegenerateColumn { .. }) | Err(Error::Degenerate(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok((Vec::new(), max_attempts))
        })
        .collect::<Result<_>>()?;
    let redraws: usize = rows.iter().map(|(_, r)| *r).sum();
    if redraws > draws {
        return Err(Error::Degenerate(format!(
            "{redraws} degenerate bootstrap resamples for {draws} draws"
        )));
    }
    let m = rows[0].0.len();
    let flat: Vec<f64> = rows.into_iter().flat_map(|(v, _)| v).collect();
    let mut matrix = DrawMatrix::new(draws, m, flat, DrawProvenance::NonparametricBootstrap, seed)?;
    matrix.redraws = redraws;
    Ok(matrix)
}

/// Bootstrap `(1 - alpha)`-quantile of the subset-restricted max statistic.
pub fn bootstrap_max_quantile(
    samples: &SampleMatrix,
    kind: StatKind,
    alpha: f64,
    draws: usize,
    subset: &[usize],
    seed: u64,
) -> Result<QuantileEstimate> {
    if draws < MIN_BOOTSTRAP_DRAWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_BOOTSTRAP_DRAWS} bootstrap resamples, got {draws}"
        )));
    }
    check_alpha(alpha)?;
    bootstrap_draws(samples, kind, draws, seed)?.quantile_estimate(alpha, subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    fn gaussian_samples(n: usize, p: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        SampleMatrix::from_rows(n, p, &rows).unwrap()
    }

    #[test]
    fn sidak_examples() {
        assert!((sidak_threshold(0.05, 1) - 1.959964).abs() < 1e-5);
        // Phi^{-1}((1 + 0.95^{1/325}) / 2), from scipy: 3.7782...
        assert!((sidak_threshold(0.05, 325) - 3.78).abs() < 0.01);
        assert!(sidak_threshold(0.05, 10) < sidak_threshold(0.05, 1000));
        assert!(sidak_threshold(0.01, 10) > sidak_threshold(0.05, 10));
    }

    #[test]
    fn sidak_never_exceeds_bonferroni_constant() {
        for &alpha in &[0.001, 0.01, 0.05, 0.1, 0.2, 0.5] {
            for m in [1, 2, 3, 10, 45, 325, 1275, 100_000] {
                let bonf = normal::upper_quantile(alpha / (2.0 * m as f64));
                assert!(sidak_threshold(alpha, m) <= bonf + 1e-12, "alpha={alpha} m={m}");
            }
        }
    }

    #[test]
    fn cholesky_cases() {
        let id = PairCovariance::identity(3);
        let f = cholesky_psd(&id).unwrap();
        assert_eq!(f.jitter, 0.0);
        assert_eq!(f.lower, DMatrix::identity(3, 3));

        let two = PairCovariance::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let f = cholesky_psd(&two).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.75f64.sqrt()]);
        assert!((f.lower - expected).amax() < 1e-12);

        let singular = PairCovariance::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        let f = cholesky_psd(&singular).unwrap();
        assert!(f.jitter > 0.0);

        let indefinite = PairCovariance::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(cholesky_psd(&indefinite), Err(Error::NotPsd(_))));
    }

    #[test]
    fn quantile_rank_convention() {
        assert_eq!(quantile_rank(0.05, 100), 95);
        assert_eq!(quantile_rank(0.05, 1000), 950);
        assert_eq!(quantile_rank(0.05, 101), 96);
        assert_eq!(quantile_rank(0.999, 10), 1);
    }

    #[test]
    fn single_gaussian_coordinate() {
        let q = max_gauss_quantile(&PairCovariance::identity(1), 0.05, 200_000, &[0], 1).unwrap();
        assert!((q.value - 1.96).abs() < 0.02, "{}", q.value);
        assert_eq!(q.draws, 200_000);
    }

    #[test]
    fn subset_quantiles_are_monotone_on_shared_draws() {
        let d = gaussian_draws(&PairCovariance::identity(10), 2000, 9).unwrap();
        let half: Vec<usize> = (0..5).collect();
        let all: Vec<usize> = (0..10).collect();
        assert!(d.max_quantile(0.05, &half).unwrap() <= d.max_quantile(0.05, &all).unwrap());
        assert!(max_gauss_quantile(&PairCovariance::identity(10), 0.05, 99, &all, 1).is_err());
        assert!(d.max_quantile(0.05, &[]).is_err());
        assert!(d.max_quantile(0.05, &[10]).is_err());
    }

    #[test]
    fn draws_do_not_depend_on_thread_count() {
        let sigma = PairCovariance::from_matrix(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.4, 0.1, 0.4, 1.0, 0.2, 0.1, 0.2, 1.0],
        ))
        .unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| gaussian_draws(&sigma, 5000, 17).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.data, b.data);
        let s = gaussian_samples(60, 4, 3);
        let pool = |t: usize| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        let x = pool(1).install(|| bootstrap_draws(&s, StatKind::Fisher, 80, 5).unwrap());
        let y = pool(3).install(|| bootstrap_draws(&s, StatKind::Fisher, 80, 5).unwrap());
        assert_eq!(x.data, y.data);
    }

    #[test]
    fn bootstrap_is_translation_invariant() {
        let s = gaussian_samples(80, 4, 21);
        let mut shifted = s.data().clone();
        shifted.column_mut(2).iter_mut().for_each(|v| *v += 7.3);
        let shifted = SampleMatrix::new(shifted).unwrap();
        let all: Vec<usize> = (0..6).collect();
        for kind in StatKind::ALL {
            let a = bootstrap_max_quantile(&s, kind, 0.05, 200, &all, 4).unwrap();
            let b = bootstrap_max_quantile(&shifted, kind, 0.05, 200, &all, 4).unwrap();
            assert!((a.value - b.value).abs() < 1e-9, "{kind}");
        }
    }

    #[test]
    fn bootstrap_subset_monotone() {
        let s = gaussian_samples(50, 5, 2);
        let d = bootstrap_draws(&s, StatKind::Empirical, 100, 8).unwrap();
        let all: Vec<usize> = (0..10).collect();
        for k in 1..10 {
            let sub: Vec<usize> = (0..k).collect();
            assert!(d.max_quantile(0.1, &sub).unwrap() <= d.max_quantile(0.1, &all).unwrap());
        }
        assert!(bootstrap_max_quantile(&s, StatKind::Empirical, 0.05, 49, &all, 1).is_err());
    }

    #[test]
    fn bootstrap_consistent_with_gaussian_quantile() {
        let s = gaussian_samples(500, 4, 1234);
        let all: Vec<usize> = (0..6).collect();
        let boot = bootstrap_max_quantile(&s, StatKind::Empirical, 0.05, 1000, &all, 77).unwrap();
        let gauss = max_gauss_quantile(&PairCovariance::identity(6), 0.05, 200_000, &all, 78).unwrap();
        assert!((boot.value - gauss.value).abs() < 0.15, "{} vs {}", boot.value, gauss.value);
    }

    #[test]
    fn bootstrap_redraws_degenerate_resamples() {
        // Column 1 is non-constant only through a single row, so some
        // resamples drop it; small n makes that frequent but bounded.
        let rows = [
            0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0, 5.0, 0.0, 6.0, 0.0, 7.0, 0.0, 8.0, 0.0, 9.0, 1.0,
        ];
        let s = SampleMatrix::from_rows(10, 2, &rows).unwrap();
        let d = bootstrap_draws(&s, StatKind::Empirical, 60, 3);
        // About 35% of resamples miss the single informative row.
        match d {
            Ok(d) => assert!(d.redraws > 0),
            Err(Error::Degenerate(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
