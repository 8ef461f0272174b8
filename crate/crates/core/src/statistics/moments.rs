use crate::correlation::{empirical_correlation, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::sample::SampleMatrix;

/// Standardized fourth cross-moments
/// `rho_ijkl = E[(Yi - EYi)(Yj - EYj)(Yk - EYk)(Yl - EYl)] / sqrt(Vi Vj Vk Vl)`
/// together with the correlations.
///
/// Values are stored once per multiset `{i, j, k, l}`, so lookups are
/// symmetric under any permutation of the indexes.
#[derive(Debug, Clone)]
pub struct FourthMoments {
    p: usize,
    values: Vec<f64>,
    correlations: CorrelationMatrix,
}

fn binom(n: usize, k: usize) -> usize {
    match k {
        1 => n,
        2 => n * n.saturating_sub(1) / 2,
        3 => n * n.saturating_sub(1) * n.saturating_sub(2) / 6,
        4 => n * n.saturating_sub(1) * n.saturating_sub(2) * n.saturating_sub(3) / 24,
        _ => unreachable!(),
    }
}

// Rank of a sorted multiset a <= b <= c <= d among all such multisets.
fn multiset_rank(mut idx: [usize; 4]) -> usize {
    idx.sort_unstable();
    binom(idx[0], 1) + binom(idx[1] + 1, 2) + binom(idx[2] + 2, 3) + binom(idx[3] + 3, 4)
}

impl FourthMoments {
    /// Builds the table from a function of sorted index quadruples.
    pub fn from_fn<F>(correlations: CorrelationMatrix, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> f64,
    {
        let p = correlations.p();
        let mut values = vec![0.0; binom(p + 3, 4)];
        for d in 0..p {
            for c in 0..=d {
                for b in 0..=c {
                    for a in 0..=b {
                        values[multiset_rank([a, b, c, d])] = f(a, b, c, d);
                    }
                }
            }
        }
        for i in 0..p {
            let v = values[multiset_rank([i; 4])];
            if !(v >= 1.0 - 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "standardized fourth moment of variable {i} is {v} < 1"
                )));
            }
        }
        Ok(FourthMoments {
            p,
            values,
            correlations,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values[multiset_rank([i, j, k, l])]
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.correlations.get(i, j)
    }

    pub fn correlations(&self) -> &CorrelationMatrix {
        &self.correlations
    }
}

/// Plug-in estimates: averages (divisor `n`) of products of four centered
/// columns, each divided by its standard deviation.
pub fn fourth_moments(samples: &SampleMatrix) -> Result<FourthMoments> {
    let z = samples.standardize()?;
    let n = samples.n();
    let cols: Vec<&[f64]> = (0..samples.p()).map(|c| z.column(c)).collect();
    let nf = n as f64;
    FourthMoments::from_fn(empirical_correlation(samples), |a, b, c, d| {
        let (a, b, c, d) = (cols[a], cols[b], cols[c], cols[d]);
        (0..n).map(|l| a[l] * b[l] * c[l] * d[l]).sum::<f64>() / nf
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rank_is_a_bijection() {
        let p = 7;
        let mut seen = vec![false; binom(p + 3, 4)];
        for d in 0..p {
            for c in 0..=d {
                for b in 0..=c {
                    for a in 0..=b {
                        let r = multiset_rank([a, b, c, d]);
                        assert!(!seen[r]);
                        seen[r] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|s| *s));
        assert_eq!(multiset_rank([3, 1, 0, 2]), multiset_rank([0, 1, 2, 3]));
    }

    #[test]
    fn rademacher_column_has_unit_kurtosis() {
        let rows = [1.0, 0.3, -1.0, 2.0, 1.0, -0.7, -1.0, 5.0, 1.0, 1.0, -1.0, 0.0];
        let s = SampleMatrix::from_rows(6, 2, &rows).unwrap();
        let m = fourth_moments(&s).unwrap();
        assert!((m.get(0, 0, 0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cross_moment_matches_direct_average() {
        let rows = [1.0, 4.0, 2.0, 2.0, 3.0, 7.0, 5.0, 1.0, 8.0, 3.0, 4.0, 6.0];
        let s = SampleMatrix::from_rows(6, 2, &rows).unwrap();
        let m = fourth_moments(&s).unwrap();
        let x = s.column(0);
        let y = s.column(1);
        let mx = x.iter().sum::<f64>() / 6.0;
        let my = y.iter().sum::<f64>() / 6.0;
        let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 6.0;
        let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 6.0;
        let num = (0..6)
            .map(|l| (x[l] - mx).powi(2) * (y[l] - my).powi(2))
            .sum::<f64>()
            / 6.0;
        let expected = num / (vx * vy);
        assert!((m.get(0, 0, 1, 1) - expected).abs() < 1e-12);
        assert_eq!(m.get(0, 1, 0, 1), m.get(1, 1, 0, 0));
    }

    #[test]
    fn gaussian_kurtosis_is_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200_000;
        let rows: Vec<f64> = (0..n * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = SampleMatrix::from_rows(n, 2, &rows).unwrap();
        let m = fourth_moments(&s).unwrap();
        assert!((m.get(0, 0, 0, 0) - 3.0).abs() < 0.2);
        assert!((m.get(1, 1, 1, 1) - 3.0).abs() < 0.2);
    }
}
