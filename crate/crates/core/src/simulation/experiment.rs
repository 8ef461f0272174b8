use rayon::prelude::*;

use crate::correlation::empirical_correlation;
use crate::error::{Error, Result};
use crate::pipeline::{calibration_draws, evaluate, oracle_factor, Calibration};
use crate::procedures::{apply, Method, ProcedureKind, RejectionSet};
use crate::quantiles::CholeskyFactor;
use crate::rng::{derive_seed, domain};
use crate::statistics::StatKind;

use super::model::{admissible_sbm_model, correlation_model, sample_gaussian, CorrelationModel};

/// Redraws of a replicate whose data make a statistic degenerate.
pub const MAX_REPLICATE_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub p: usize,
    pub p_intra: f64,
    pub p_inter: Vec<f64>,
    pub rho: Vec<f64>,
    pub n: Vec<usize>,
    pub stats: Vec<StatKind>,
    pub procedures: Vec<ProcedureKind>,
    pub alpha: f64,
    pub replicates: usize,
    pub calibration: Calibration,
    pub seed: u64,
    /// Draw a new adjacency for every replicate instead of one per
    /// `p_inter` value.
    pub redraw_adjacency: bool,
    /// Bin count for correlation histograms; `None` disables them.
    pub histogram_bins: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 26,
            p_intra: 0.6,
            p_inter: vec![0.01, 0.05, 0.15, 0.4],
            rho: vec![0.2],
            n: vec![100, 300, 500],
            stats: StatKind::ALL.to_vec(),
            procedures: vec![
                ProcedureKind::single(Method::Bonferroni),
                ProcedureKind::single(Method::Sidak),
                ProcedureKind::single(Method::MaxT),
            ],
            alpha: 0.05,
            replicates: 1000,
            calibration: Calibration::default(),
            seed: 0,
            redraw_adjacency: false,
            histogram_bins: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.p < 2 || !self.p.is_multiple_of(2) {
            return bad(format!("p must be even and at least 2, got {}", self.p));
        }
        for (name, v) in std::iter::once(("p_intra", &self.p_intra)).chain(self.p_inter.iter().map(|v| ("p_inter", v))) {
            if !(0.0..=1.0).contains(v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if let Some(r) = self.rho.iter().find(|r| !(r.abs() < 1.0)) {
            return bad(format!("rho must lie in (-1, 1), got {r}"));
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 4) {
            return bad(format!("n must be at least 4, got {n}"));
        }
        if self.p_inter.is_empty() || self.rho.is_empty() || self.n.is_empty() {
            return bad("p_inter, rho and n need at least one value each".into());
        }
        if self.stats.is_empty() || self.procedures.is_empty() {
            return bad("at least one statistic and one procedure are needed".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.histogram_bins == Some(0) {
            return bad("histogram_bins must be positive".into());
        }
        if self.procedures.iter().any(|p| p.method.needs_draws()) {
            self.calibration.validate()?;
        }
        Ok(())
    }
}

/// Per-replicate error metrics of one rejection set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateMetrics {
    /// At least one true null rejected.
    pub false_rejection: bool,
    /// `|R n H1| / |H1|`, `None` when there are no alternatives.
    pub tdp: Option<f64>,
    /// `|R n H0| / max(|R|, 1)`.
    pub fdp: f64,
}

/// Scores a rejection set against the true nulls (`null[k]` for pair `k`).
pub fn metrics(rejection: &RejectionSet, null: &[bool]) -> ReplicateMetrics {
    let false_rejections = rejection.rejected.iter().filter(|&&k| null[k]).count();
    let alternatives = null.iter().filter(|n| !**n).count();
    let true_rejections = rejection.len() - false_rejections;
    ReplicateMetrics {
        false_rejection: false_rejections > 0,
        tdp: (alternatives > 0).then(|| true_rejections as f64 / alternatives as f64),
        fdp: false_rejections as f64 / rejection.len().max(1) as f64,
    }
}

/// Aggregated metrics of one (statistic, procedure, scenario) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub stat: StatKind,
    pub procedure: ProcedureKind,
    pub n: usize,
    pub p_inter: f64,
    pub rho: f64,
    pub replicates: usize,
    pub fwer: f64,
    pub fwer_se: f64,
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    pub fdp: f64,
    pub fdp_se: f64,
    /// Replicates redrawn because of degenerate data.
    pub retries: usize,
    /// Mean edge density of the graphs used.
    pub density: f64,
    /// Set when a replicate still failed after the retry bound; the
    /// metrics are then NaN.
    pub failure: Option<String>,
}

/// Binned empirical correlations of one scenario, pooled over replicates
/// and split by true null / alternative pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub n: usize,
    pub p_inter: f64,
    pub rho: f64,
    /// `bins + 1` edges spanning `[-1, 1]`.
    pub edges: Vec<f64>,
    pub null_counts: Vec<u64>,
    pub alternative_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<MetricsRow>,
    pub histograms: Vec<CorrelationHistogram>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn bin_index(value: f64, bins: usize) -> usize {
    (((value + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1)
}

struct Scenario<'a> {
    indexes: [u64; 3],
    p_inter: f64,
    rho: f64,
    n: usize,
    /// Fixed model, or `None` when every replicate draws its own.
    model: Option<&'a CorrelationModel>,
    oracle: Option<Vec<Option<CholeskyFactor>>>,
}

struct ReplicateOutcome {
    metrics: Vec<ReplicateMetrics>,
    retries: usize,
    density: f64,
    histogram: Option<(Vec<u64>, Vec<u64>)>,
}

fn model_for(config: &ExperimentConfig, p_inter: f64, rhos: &[f64], path: &[u64]) -> Result<CorrelationModel> {
    admissible_sbm_model(config.p, config.p_intra, p_inter, rhos, config.seed, path).map(|(m, _)| m)
}

fn oracle_factors(config: &ExperimentConfig, model: &CorrelationModel) -> Result<Vec<Option<CholeskyFactor>>> {
    config
        .stats
        .iter()
        .map(|&k| oracle_factor(&model.gamma, k).map(Some))
        .collect()
}

fn needs_oracle(config: &ExperimentConfig) -> bool {
    config.procedures.iter().any(|p| p.method == Method::OracleMaxT)
}

fn method_tag(method: Method) -> u64 {
    match method {
        Method::BootRW => 1,
        Method::MaxT => 2,
        Method::OracleMaxT => 3,
        _ => 0,
    }
}

fn replicate_attempt(
    config: &ExperimentConfig,
    scenario: &Scenario,
    model: &CorrelationModel,
    oracle: Option<&[Option<CholeskyFactor>]>,
    data_seed: u64,
) -> Result<ReplicateOutcome> {
    let samples = sample_gaussian(&model.gamma, scenario.n, data_seed)?;
    let gamma = empirical_correlation(&samples);
    let null: Vec<bool> = (0..model.adjacency.edges().len()).map(|k| model.is_null(k)).collect();
    let mut out = Vec::with_capacity(config.stats.len() * config.procedures.len());
    for (s, &kind) in config.stats.iter().enumerate() {
        let evaluated = evaluate(&samples, kind, Some(&gamma))?;
        let mut draws: Vec<(Method, Option<crate::quantiles::DrawMatrix>)> = Vec::new();
        for proc in &config.procedures {
            if !draws.iter().any(|(m, _)| *m == proc.method) {
                let factor = oracle.and_then(|o| o[s].as_ref());
                let seed = derive_seed(data_seed, &[method_tag(proc.method), s as u64]);
                let d = calibration_draws(proc.method, &samples, &evaluated, factor, &config.calibration, seed)?;
                draws.push((proc.method, d));
            }
            let d = draws.iter().find(|(m, _)| *m == proc.method).and_then(|(_, d)| d.as_ref());
            let rejection = apply(*proc, &evaluated.stats, &evaluated.pvalues, d, config.alpha)?;
            out.push(metrics(&rejection, &null));
        }
    }
    let histogram = config.histogram_bins.map(|bins| {
        let mut null_counts = vec![0u64; bins];
        let mut alt_counts = vec![0u64; bins];
        for (k, v) in gamma.pair_values().into_iter().enumerate() {
            let target = if null[k] { &mut null_counts } else { &mut alt_counts };
            target[bin_index(v, bins)] += 1;
        }
        (null_counts, alt_counts)
    });
    Ok(ReplicateOutcome {
        metrics: out,
        retries: 0,
        density: model.adjacency.density(),
        histogram,
    })
}

fn run_replicate(config: &ExperimentConfig, scenario: &Scenario, r: usize) -> Result<ReplicateOutcome> {
    let [a, b, c] = scenario.indexes;
    let owned;
    let owned_oracle;
    let (model, oracle) = match scenario.model {
        Some(m) => (m, scenario.oracle.as_deref()),
        None => {
            owned = model_for(
                config,
                scenario.p_inter,
                &[scenario.rho],
                &[domain::ADJACENCY, a, b, c, r as u64],
            )?;
            owned_oracle = if needs_oracle(config) { Some(oracle_factors(config, &owned)?) } else { None };
            (&owned, owned_oracle.as_deref())
        }
    };
    let mut last = None;
    for attempt in 0..=MAX_REPLICATE_RETRIES {
        let data_seed = derive_seed(config.seed, &[domain::REPLICATE, a, b, c, r as u64, attempt as u64]);
        match replicate_attempt(config, scenario, model, oracle, data_seed) {
            Ok(mut outcome) => {
                outcome.retries = attempt;
                return Ok(outcome);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Runs every (p_inter, rho, n) scenario of the grid. Replicates run in
/// parallel; their results are reduced in replicate order, so the output
/// does not depend on the number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for (a, &p_inter) in config.p_inter.iter().enumerate() {
        let fixed = if config.redraw_adjacency {
            None
        } else {
            Some(model_for(config, p_inter, &config.rho, &[domain::ADJACENCY, a as u64])?)
        };
        for (b, &rho) in config.rho.iter().enumerate() {
            let model = match &fixed {
                Some(m) => Some(correlation_model(&m.adjacency, rho)?),
                None => None,
            };
            let oracle = match &model {
                Some(m) if needs_oracle(config) => Some(oracle_factors(config, m)?),
                _ => None,
            };
            for (c, &n) in config.n.iter().enumerate() {
                let scenario = Scenario {
                    indexes: [a as u64, b as u64, c as u64],
                    p_inter,
                    rho,
                    n,
                    model: model.as_ref(),
                    oracle: oracle.clone(),
                };
                let outcomes: Vec<Result<ReplicateOutcome>> = (0..config.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(config, &scenario, r))
                    .collect();
                let (r, h) = aggregate(config, &scenario, outcomes);
                rows.extend(r);
                histograms.extend(h);
            }
        }
    }
    Ok(ExperimentResult { rows, histograms })
}

fn aggregate(
    config: &ExperimentConfig,
    scenario: &Scenario,
    outcomes: Vec<Result<ReplicateOutcome>>,
) -> (Vec<MetricsRow>, Option<CorrelationHistogram>) {
    let failure = outcomes.iter().find_map(|o| o.as_ref().err()).map(|e| e.to_string());
    let ok: Vec<ReplicateOutcome> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let retries = ok.iter().map(|o| o.retries).sum();
    let density = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|o| o.density).sum::<f64>() / ok.len() as f64
    };
    let mut rows = Vec::new();
    let mut cell = 0;
    for &stat in &config.stats {
        for &procedure in &config.procedures {
            let mut row = MetricsRow {
                stat,
                procedure,
                n: scenario.n,
                p_inter: scenario.p_inter,
                rho: scenario.rho,
                replicates: config.replicates,
                fwer: f64::NAN,
                fwer_se: f64::NAN,
                power: None,
                power_se: None,
                fdp: f64::NAN,
                fdp_se: f64::NAN,
                retries,
                density,
                failure: failure.clone(),
            };
            if failure.is_none() {
                let fwer: Vec<f64> = ok.iter().map(|o| o.metrics[cell].false_rejection as u8 as f64).collect();
                let fdp: Vec<f64> = ok.iter().map(|o| o.metrics[cell].fdp).collect();
                let tdp: Vec<f64> = ok.iter().filter_map(|o| o.metrics[cell].tdp).collect();
                (row.fwer, row.fwer_se) = mean_se(&fwer);
                (row.fdp, row.fdp_se) = mean_se(&fdp);
                if !tdp.is_empty() {
                    let (m, se) = mean_se(&tdp);
                    row.power = Some(m);
                    row.power_se = Some(se);
                }
            }
            rows.push(row);
            cell += 1;
        }
    }
    let histogram = config.histogram_bins.filter(|_| failure.is_none()).map(|bins| {
        let mut null_counts = vec![0u64; bins];
        let mut alternative_counts = vec![0u64; bins];
        for (nc, ac) in ok.iter().filter_map(|o| o.histogram.as_ref()) {
            null_counts.iter_mut().zip(nc).for_each(|(t, v)| *t += v);
            alternative_counts.iter_mut().zip(ac).for_each(|(t, v)| *t += v);
        }
        CorrelationHistogram {
            n: scenario.n,
            p_inter: scenario.p_inter,
            rho: scenario.rho,
            edges: (0..=bins).map(|k| -1.0 + 2.0 * k as f64 / bins as f64).collect(),
            null_counts,
            alternative_counts,
        }
    });
    (rows, histogram)
}
