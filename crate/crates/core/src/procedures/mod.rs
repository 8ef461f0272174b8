//! Multiple testing procedures over the `m` pairwise hypotheses.
//!
//! Every FWER procedure is a rule "reject the hypotheses of the current
//! candidate set `C` whose statistic exceeds a threshold computed from `C`".
//! Single-step applies the rule once to all hypotheses; step-down reapplies
//! it to the survivors until nothing more is rejected.

mod mtp2;

pub use mtp2::{is_mtp2_gaussian_abs, wishart_correlation, Mtp2Verdict, MTP2_MAX_DIM};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quantiles::{bonferroni_level, sidak_threshold, DrawMatrix};
use crate::statistics::{PValueVector, StatVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Reject `p <= alpha / |C|`.
    Bonferroni,
    /// Reject `|T| > c(alpha, |C|)`, the Šidák constant.
    Sidak,
    /// Reject `|T| >` nonparametric bootstrap quantile of the max statistic.
    BootRW,
    /// Reject `|T| >` Gaussian max quantile with plug-in covariance.
    MaxT,
    /// MaxT with the covariance of the true correlation matrix.
    OracleMaxT,
    /// Benjamini-Hochberg (FDR, single pass only).
    BenjaminiHochberg,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bonferroni,
        Method::Sidak,
        Method::BootRW,
        Method::MaxT,
        Method::OracleMaxT,
        Method::BenjaminiHochberg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::Sidak => "sidak",
            Method::BootRW => "bootrw",
            Method::MaxT => "maxt",
            Method::OracleMaxT => "oraclemaxt",
            Method::BenjaminiHochberg => "bh",
        }
    }

    /// Whether the threshold is read off a [`DrawMatrix`].
    pub fn needs_draws(self) -> bool {
        matches!(self, Method::BootRW | Method::MaxT | Method::OracleMaxT)
    }

    /// Scale of the recorded thresholds.
    pub fn threshold_scale(self) -> ThresholdScale {
        match self {
            Method::Bonferroni | Method::BenjaminiHochberg => ThresholdScale::PValue,
            _ => ThresholdScale::Statistic,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bonferroni" => Ok(Method::Bonferroni),
            "sidak" => Ok(Method::Sidak),
            "bootrw" => Ok(Method::BootRW),
            "maxt" => Ok(Method::MaxT),
            "oraclemaxt" | "oracle-maxt" | "oracle_maxt" => Ok(Method::OracleMaxT),
            "bh" | "benjamini-hochberg" | "fdr" => Ok(Method::BenjaminiHochberg),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcedureKind {
    pub method: Method,
    pub stepdown: bool,
}

impl ProcedureKind {
    pub fn new(method: Method, stepdown: bool) -> Result<Self> {
        if stepdown && method == Method::BenjaminiHochberg {
            return Err(Error::Config("Benjamini-Hochberg has no step-down variant".into()));
        }
        Ok(ProcedureKind { method, stepdown })
    }

    pub fn single(method: Method) -> Self {
        ProcedureKind { method, stepdown: false }
    }

    pub fn step_down(method: Method) -> Self {
        ProcedureKind { method, stepdown: true }
    }
}

impl fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stepdown {
            write!(f, "step-down {}", self.method)
        } else {
            write!(f, "single-step {}", self.method)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdScale {
    /// Compared against p-values with `<=`.
    PValue,
    /// Compared against `|T|` with `>`.
    Statistic,
}

/// Outcome of a procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSet {
    /// Rejected flat pair indexes, ascending.
    pub rejected: Vec<usize>,
    /// Threshold of each iteration.
    pub thresholds: Vec<f64>,
    /// Threshold each pair was last compared against: the one of the
    /// iteration that rejected it, or of the final iteration.
    pub pair_thresholds: Vec<f64>,
    pub scale: ThresholdScale,
    pub pvalues: Option<PValueVector>,
    pub procedure: ProcedureKind,
    pub alpha: f64,
    pub iterations: usize,
}

impl RejectionSet {
    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.rejected.binary_search(&flat).is_ok()
    }

    /// Indicator vector over all `m` pairs.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.pair_thresholds.len()];
        self.rejected.iter().for_each(|&r| mask[r] = true);
        mask
    }
}

fn check_inputs(
    kind: ProcedureKind,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = stats.len();
    if m == 0 {
        return Err(Error::InvalidInput("no hypotheses to test".into()));
    }
    if pvalues.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} p-values for {m} statistics",
            pvalues.len()
        )));
    }
    if kind.method.needs_draws() {
        match draws {
            None => {
                return Err(Error::InvalidInput(format!("{} needs calibration draws", kind.method)))
            }
            Some(d) if d.cols() != m => {
                return Err(Error::InvalidInput(format!(
                    "draws have {} columns for {m} statistics",
                    d.cols()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// The rule of one iteration: threshold over `candidates`, and whether a
/// given candidate is rejected by it.
fn iteration(
    method: Method,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
    candidates: &[usize],
) -> Result<(f64, Vec<usize>)> {
    let c = candidates.len();
    let threshold = match method {
        Method::Bonferroni => bonferroni_level(alpha, c),
        Method::Sidak => sidak_threshold(alpha, c),
        Method::BootRW | Method::MaxT | Method::OracleMaxT => {
            draws.expect("checked").max_quantile(alpha, candidates)?
        }
        Method::BenjaminiHochberg => unreachable!("handled by bh_fdr"),
    };
    let rejected = match method.threshold_scale() {
        ThresholdScale::PValue => candidates
            .iter()
            .copied()
            .filter(|&i| pvalues.0[i] <= threshold)
            .collect(),
        ThresholdScale::Statistic => candidates
            .iter()
            .copied()
            .filter(|&i| stats.values[i].abs() > threshold)
            .collect(),
    };
    Ok((threshold, rejected))
}

fn run(
    kind: ProcedureKind,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
    max_iterations: usize,
) -> Result<RejectionSet> {
    check_inputs(kind, stats, pvalues, draws, alpha)?;
    if kind.method == Method::BenjaminiHochberg {
        return Ok(bh_fdr(pvalues, alpha));
    }
    let m = stats.len();
    let mut candidates: Vec<usize> = (0..m).collect();
    let mut rejected = Vec::new();
    let mut thresholds = Vec::new();
    let mut pair_thresholds = vec![0.0; m];
    loop {
        let (t, newly) = iteration(kind.method, stats, pvalues, draws, alpha, &candidates)?;
        thresholds.push(t);
        candidates.iter().for_each(|&i| pair_thresholds[i] = t);
        if newly.is_empty() {
            break;
        }
        // `newly` is an ordered subsequence of `candidates`.
        let mut next = Vec::with_capacity(candidates.len() - newly.len());
        let mut it = newly.iter().peekable();
        for &c in &candidates {
            if it.peek() == Some(&&c) {
                it.next();
            } else {
                next.push(c);
            }
        }
        rejected.extend(newly);
        candidates = next;
        if candidates.is_empty() || thresholds.len() >= max_iterations {
            break;
        }
    }
    rejected.sort_unstable();
    Ok(RejectionSet {
        rejected,
        iterations: thresholds.len(),
        thresholds,
        pair_thresholds,
        scale: kind.method.threshold_scale(),
        pvalues: Some(pvalues.clone()),
        procedure: kind,
        alpha,
    })
}

/// One application of the method's rule to all `m` hypotheses.
///
/// `draws` is required for the bootstrap and MaxT methods and ignored
/// otherwise.
pub fn single_step(
    method: Method,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
) -> Result<RejectionSet> {
    run(ProcedureKind::single(method), stats, pvalues, draws, alpha, 1)
}

/// Reapplies the rule to the non-rejected hypotheses until a fixpoint.
/// Quantile-based thresholds are recomputed on the survivors from the same
/// `draws`.
pub fn step_down(
    method: Method,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
) -> Result<RejectionSet> {
    let kind = ProcedureKind::new(method, true)?;
    run(kind, stats, pvalues, draws, alpha, usize::MAX)
}

/// Dispatches on `kind.stepdown`.
pub fn apply(
    kind: ProcedureKind,
    stats: &StatVector,
    pvalues: &PValueVector,
    draws: Option<&DrawMatrix>,
    alpha: f64,
) -> Result<RejectionSet> {
    if kind.stepdown {
        step_down(kind.method, stats, pvalues, draws, alpha)
    } else {
        single_step(kind.method, stats, pvalues, draws, alpha)
    }
}

/// Benjamini-Hochberg: with `k = max{k : p_(k) <= alpha k / m}` (0 if
/// none), rejects every `p_i <= alpha k / m`.
pub fn bh_fdr(pvalues: &PValueVector, alpha: f64) -> RejectionSet {
    let m = pvalues.len();
    let mut sorted = pvalues.0.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= alpha * k as f64 / m as f64)
        .unwrap_or(0);
    let level = alpha * k as f64 / m as f64;
    let rejected: Vec<usize> = if k == 0 {
        Vec::new()
    } else {
        (0..m).filter(|&i| pvalues.0[i] <= level).collect()
    };
    RejectionSet {
        rejected,
        thresholds: vec![level],
        pair_thresholds: vec![level; m],
        scale: ThresholdScale::PValue,
        pvalues: Some(pvalues.clone()),
        procedure: ProcedureKind::single(Method::BenjaminiHochberg),
        alpha,
        iterations: 1,
    }
}
