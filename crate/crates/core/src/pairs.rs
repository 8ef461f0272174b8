//! Lexicographic indexing of variable pairs.
//!
//! Every vector or matrix indexed by pairs (statistics, p-values, the
//! asymptotic covariance, draw matrices) uses the same ordering:
//! `(0,1), (0,2), ..., (0,p-1), (1,2), ...`. Indexes are 0-based here; the
//! CLI converts to 1-based on output.

use crate::error::{Error, Result};

/// Number of unordered pairs among `p` variables.
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Flat position of the pair `(i, j)`, `i < j < p`, in lexicographic order.
pub fn pair_to_flat(i: usize, j: usize, p: usize) -> Result<usize> {
    if i >= j || j >= p {
        return Err(Error::Index(format!(
            "expected i < j < p, got i={i}, j={j}, p={p}"
        )));
    }
    Ok(row_offset(i, p) + (j - i - 1))
}

/// Inverse of [`pair_to_flat`].
pub fn flat_to_pair(flat: usize, p: usize) -> Result<(usize, usize)> {
    let m = pair_count(p);
    if flat >= m {
        return Err(Error::Index(format!("flat index {flat} >= m = {m}")));
    }
    // Row i holds p-1-i pairs; walk rows (p is small enough for this to be cheap).
    let mut i = 0;
    let mut start = 0;
    loop {
        let len = p - 1 - i;
        if flat < start + len {
            return Ok((i, i + 1 + flat - start));
        }
        start += len;
        i += 1;
    }
}

fn row_offset(i: usize, p: usize) -> usize {
    // sum_{r<i} (p-1-r)
    i * (2 * p - i - 1) / 2
}

/// A validated pair of variables together with its flat position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
    pub flat: usize,
}

impl PairIndex {
    pub fn new(i: usize, j: usize, p: usize) -> Result<Self> {
        let flat = pair_to_flat(i, j, p)?;
        Ok(PairIndex { i, j, flat })
    }

    pub fn from_flat(flat: usize, p: usize) -> Result<Self> {
        let (i, j) = flat_to_pair(flat, p)?;
        Ok(PairIndex { i, j, flat })
    }

    /// Variables shared with another pair.
    pub fn shared_with(&self, other: &PairIndex) -> usize {
        [self.i, self.j]
            .iter()
            .filter(|v| **v == other.i || **v == other.j)
            .count()
    }
}

/// Iterator over all pairs of `p` variables in flat order.
pub fn pairs(p: usize) -> impl Iterator<Item = PairIndex> {
    (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| (i, j))).enumerate().map(|(flat, (i, j))| PairIndex { i, j, flat })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        // 1-based (1,2) and (2,3) at p = 3.
        assert_eq!(pair_to_flat(0, 1, 3).unwrap(), 0);
        assert_eq!(pair_to_flat(1, 2, 3).unwrap(), 2);
        assert_eq!(pair_count(3), 3);
    }

    #[test]
    fn matches_enumeration_oracle() {
        let p = 26;
        let mut expected = None;
        let mut k = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                if (i, j) == (4, 8) {
                    expected = Some(k);
                }
                k += 1;
            }
        }
        // 1-based (5,9)
        assert_eq!(pair_to_flat(4, 8, p).unwrap(), expected.unwrap());
        assert_eq!(expected.unwrap(), 25 + 24 + 23 + 22 + 3);
    }

    #[test]
    fn bijection_exhaustive_up_to_64() {
        for p in 2..=64 {
            let m = pair_count(p);
            let mut seen = 0;
            for pair in pairs(p) {
                assert_eq!(pair.flat, seen);
                assert_eq!(pair_to_flat(pair.i, pair.j, p).unwrap(), pair.flat);
                assert_eq!(flat_to_pair(pair.flat, p).unwrap(), (pair.i, pair.j));
                seen += 1;
            }
            assert_eq!(seen, m);
        }
    }

    #[test]
    fn rejects_bad_indexes() {
        assert!(pair_to_flat(1, 1, 3).is_err());
        assert!(pair_to_flat(2, 1, 3).is_err());
        assert!(pair_to_flat(0, 3, 3).is_err());
        assert!(flat_to_pair(3, 3).is_err());
    }

    #[test]
    fn lexicographic_order() {
        let all: Vec<_> = pairs(7).collect();
        for w in all.windows(2) {
            assert!((w[0].i, w[0].j) < (w[1].i, w[1].j));
        }
    }
}
