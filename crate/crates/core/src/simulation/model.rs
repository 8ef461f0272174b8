use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::pairs::{pair_count, pairs};
use crate::rng::{domain, stream};
use crate::sample::SampleMatrix;

/// Undirected simple graph on `p` vertices, stored as one flag per pair in
/// flat pair order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    p: usize,
    edges: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn new(p: usize, edges: Vec<bool>) -> Result<Self> {
        if p < 2 || edges.len() != pair_count(p) {
            return Err(Error::InvalidInput(format!(
                "{} edge flags for p = {p}",
                edges.len()
            )));
        }
        Ok(AdjacencyMatrix { p, edges })
    }

    pub fn empty(p: usize) -> Self {
        AdjacencyMatrix {
            p,
            edges: vec![false; pair_count(p)],
        }
    }

    /// From a 0/1 symmetric matrix with zero diagonal.
    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p {
            return Err(Error::InvalidInput("adjacency matrix is not square".into()));
        }
        for i in 0..p {
            if a[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("adjacency has a loop at {i}")));
            }
            for j in 0..p {
                let v = a[(i, j)];
                if (v != 0.0 && v != 1.0) || v != a[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency entry ({i}, {j}) is not a symmetric 0/1 value"
                    )));
                }
            }
        }
        AdjacencyMatrix::new(p, pairs(p).map(|pr| a[(pr.i, pr.j)] == 1.0).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[bool] {
        &self.edges
    }

    pub fn has_edge(&self, flat: usize) -> bool {
        self.edges[flat]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    /// Edge count over the number of pairs.
    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / self.edges.len() as f64
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for pr in pairs(self.p) {
            if self.edges[pr.flat] {
                a[(pr.i, pr.j)] = 1.0;
                a[(pr.j, pr.i)] = 1.0;
            }
        }
        a
    }
}

/// Two-block stochastic block model: vertices `0..p/2` and `p/2..p`, edge
/// probability `p_intra` inside a block and `p_inter` across. Pairs are
/// drawn once each, in flat pair order, from the stream `(seed, path)`.
pub fn sbm_adjacency_at(p: usize, p_intra: f64, p_inter: f64, seed: u64, path: &[u64]) -> Result<AdjacencyMatrix> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::Config(format!("the block model needs an even p >= 2, got {p}")));
    }
    for (name, v) in [("p_intra", p_intra), ("p_inter", p_inter)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    let mut rng = stream(seed, path);
    let half = p / 2;
    let edges = pairs(p)
        .map(|pr| {
            let prob = if (pr.i < half) == (pr.j < half) { p_intra } else { p_inter };
            rng.random::<f64>() < prob
        })
        .collect();
    AdjacencyMatrix::new(p, edges)
}

/// [`sbm_adjacency_at`] on the adjacency stream of `seed`.
pub fn sbm_adjacency(p: usize, p_intra: f64, p_inter: f64, seed: u64) -> Result<AdjacencyMatrix> {
    sbm_adjacency_at(p, p_intra, p_inter, seed, &[domain::ADJACENCY])
}

/// `I + rho A` with its spectral admissibility data.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    pub gamma: CorrelationMatrix,
    pub rho: f64,
    pub adjacency: AdjacencyMatrix,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl CorrelationModel {
    /// Largest admissible `|rho|` for the sign of `rho`:
    /// `1 / |lambda_min|` for `rho >= 0`, `1 / lambda_max` for `rho < 0`.
    pub fn bound(&self) -> f64 {
        rho_bound(self.rho, self.min_eigenvalue, self.max_eigenvalue)
    }

    /// Flat indexes of the pairs with nonzero correlation.
    pub fn alternatives(&self) -> Vec<usize> {
        if self.rho == 0.0 {
            return Vec::new();
        }
        (0..self.adjacency.edges.len()).filter(|&k| self.adjacency.edges[k]).collect()
    }

    /// Whether pair `flat` is a true null.
    pub fn is_null(&self, flat: usize) -> bool {
        self.rho == 0.0 || !self.adjacency.edges[flat]
    }
}

fn rho_bound(rho: f64, lambda_min: f64, lambda_max: f64) -> f64 {
    let lambda = if rho >= 0.0 { -lambda_min } else { lambda_max };
    if lambda > 0.0 {
        1.0 / lambda
    } else {
        f64::INFINITY
    }
}

/// Extreme eigenvalues of the adjacency matrix.
pub fn adjacency_spectrum(adjacency: &AdjacencyMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(adjacency.to_matrix());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Builds `I + rho A`, which is positive definite iff `1 + rho lambda > 0`
/// for every eigenvalue `lambda` of `A`, i.e. `rho < 1 / |lambda_min|` for
/// positive `rho`.
pub fn correlation_model(adjacency: &AdjacencyMatrix, rho: f64) -> Result<CorrelationModel> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let (min_eigenvalue, max_eigenvalue) = adjacency_spectrum(adjacency);
    let bound = rho_bound(rho, min_eigenvalue, max_eigenvalue);
    if rho.abs() >= bound {
        return Err(Error::NotPositiveDefinite { rho, bound });
    }
    let mut gamma = adjacency.to_matrix() * rho;
    for i in 0..adjacency.p {
        gamma[(i, i)] = 1.0;
    }
    let gamma = CorrelationMatrix::new_model(gamma).map_err(|_| Error::NotPositiveDefinite { rho, bound })?;
    Ok(CorrelationModel {
        gamma,
        rho,
        adjacency: adjacency.clone(),
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Adjacency draws tried by [`admissible_sbm_model`].
pub const MAX_ADJACENCY_ATTEMPTS: usize = 1000;

/// Draws block-model graphs from the streams `(seed, path ++ [attempt])`,
/// `attempt = 0, 1, ...`, until `I + rho A` is positive definite for every
/// `rho` in `rhos`. Returns the model at `rhos[0]` and the number of
/// rejected draws.
pub fn admissible_sbm_model(
    p: usize,
    p_intra: f64,
    p_inter: f64,
    rhos: &[f64],
    seed: u64,
    path: &[u64],
) -> Result<(CorrelationModel, usize)> {
    if rhos.is_empty() {
        return Err(Error::InvalidInput("no rho value given".into()));
    }
    let mut first_error = None;
    let mut full = path.to_vec();
    full.push(0);
    for attempt in 0..MAX_ADJACENCY_ATTEMPTS {
        *full.last_mut().expect("non-empty") = attempt as u64;
        let adjacency = sbm_adjacency_at(p, p_intra, p_inter, seed, &full)?;
        match rhos.iter().map(|&r| correlation_model(&adjacency, r)).collect::<Result<Vec<_>>>() {
            Ok(mut models) => return Ok((models.swap_remove(0), attempt)),
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                first_error.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(first_error.expect("at least one attempt"))
}

/// `n` i.i.d. rows of `N(0, gamma)`. Row `r` uses its own random stream.
pub fn sample_gaussian(gamma: &CorrelationMatrix, n: usize, seed: u64) -> Result<SampleMatrix> {
    let p = gamma.p();
    let lower = gamma
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPsd("correlation model is not positive definite".into()))?
        .l();
    let mut xi = DMatrix::<f64>::zeros(p, n);
    xi.as_mut_slice()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(r, col)| {
            let mut rng = stream(seed, &[domain::SAMPLES, r as u64]);
            col.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        });
    SampleMatrix::new((lower * xi).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::empirical_correlation;

    fn path_graph(p: usize) -> AdjacencyMatrix {
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p - 1 {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
        AdjacencyMatrix::from_matrix(&a).unwrap()
    }

    #[test]
    fn sbm_extremes() {
        assert_eq!(sbm_adjacency(10, 0.0, 0.0, 1).unwrap().edge_count(), 0);
        assert_eq!(sbm_adjacency(10, 1.0, 1.0, 1).unwrap().edge_count(), 45);
        let blocks = sbm_adjacency(10, 1.0, 0.0, 1).unwrap();
        assert_eq!(blocks.edge_count(), 20);
        assert!(sbm_adjacency(9, 0.5, 0.5, 1).is_err());
        assert!(sbm_adjacency(10, 1.5, 0.5, 1).is_err());
    }

    #[test]
    fn sbm_matrix_round_trip() {
        let a = sbm_adjacency(26, 0.6, 0.15, 4).unwrap();
        let m = a.to_matrix();
        assert_eq!(m, m.transpose());
        assert_eq!(AdjacencyMatrix::from_matrix(&m).unwrap(), a);
    }

    #[test]
    fn sbm_density_matches_expectation() {
        // (2 C(13,2) 0.6 + 169 0.01) / C(26,2) = 0.2932
        let expected = (2.0 * 78.0 * 0.6 + 169.0 * 0.01) / 325.0;
        let reps = 400;
        let mean = (0..reps)
            .map(|s| sbm_adjacency(26, 0.6, 0.01, s).unwrap().density())
            .sum::<f64>()
            / reps as f64;
        // sd of one density is about 0.021, so the mean is within 0.004.
        assert!((mean - expected).abs() < 0.005, "{mean} vs {expected}");
    }

    #[test]
    fn path_bound() {
        let a = path_graph(3);
        let (min, _) = adjacency_spectrum(&a);
        assert!((min + 2f64.sqrt()).abs() < 1e-12);
        assert!(correlation_model(&a, 0.70).is_ok());
        match correlation_model(&a, 0.71) {
            Err(Error::NotPositiveDefinite { bound, .. }) => assert!((bound - 0.5f64.sqrt()).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_graph_gives_identity() {
        let model = correlation_model(&AdjacencyMatrix::empty(6), 0.95).unwrap();
        assert_eq!(model.gamma.as_matrix(), &DMatrix::identity(6, 6));
        assert!(model.alternatives().is_empty());
    }

    #[test]
    fn dense_block_model_admits_small_rho_only() {
        let a = sbm_adjacency(26, 0.6, 0.4, 3).unwrap();
        let model = correlation_model(&a, 0.05).unwrap();
        assert!(model.bound() < 0.9);
        assert!(correlation_model(&a, 0.9).is_err());
    }

    #[test]
    fn admissible_model_redraws() {
        // About a quarter of these graphs do not admit rho = 0.2.
        let mut redrawn = 0;
        for seed in 0..40 {
            let (model, attempts) = admissible_sbm_model(26, 0.6, 0.4, &[0.2], seed, &[9]).unwrap();
            assert!(model.gamma.is_positive_definite());
            assert!(model.bound() > 0.2);
            redrawn += usize::from(attempts > 0);
        }
        assert!(redrawn > 0);
        // Complete graph: I + rho A is an equicorrelation matrix, PD only for
        // rho in (-1/25, 1).
        assert!(admissible_sbm_model(26, 1.0, 1.0, &[0.9], 0, &[9]).is_ok());
        assert!(matches!(
            admissible_sbm_model(26, 1.0, 1.0, &[0.2, -0.9], 0, &[9]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn null_samples_are_uncorrelated() {
        let gamma = CorrelationMatrix::identity(4);
        let s = sample_gaussian(&gamma, 100_000, 8).unwrap();
        let r = empirical_correlation(&s);
        for v in r.pair_values() {
            assert!(v.abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn chain_correlation_is_recovered() {
        let model = correlation_model(&path_graph(3), 0.2).unwrap();
        let s = sample_gaussian(&model.gamma, 1_000_000, 21).unwrap();
        let r = empirical_correlation(&s);
        assert!((r.get(0, 1) - 0.2).abs() < 0.01);
        assert!(r.get(0, 2).abs() < 0.01);
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let model = correlation_model(&path_graph(5), 0.3).unwrap();
        let pool = |t: usize| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        let a = pool(1).install(|| sample_gaussian(&model.gamma, 500, 3).unwrap());
        let b = pool(4).install(|| sample_gaussian(&model.gamma, 500, 3).unwrap());
        assert_eq!(a, b);
    }
}
