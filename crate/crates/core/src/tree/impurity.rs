use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl Criterion {
    pub fn of(self, counts: &[u64]) -> Result<f64> {
        match self {
            Criterion::Gini => gini(counts),
            Criterion::Entropy => entropy(counts),
        }
    }

    /// Two-class impurity of a node with `pos` positives out of `n`.
    #[inline]
    pub(crate) fn binary(self, pos: u64, n: u64) -> f64 {
        debug_assert!(n > 0 && pos <= n);
        let p = pos as f64 / n as f64;
        let q = 1.0 - p;
        match self {
            Criterion::Gini => 1.0 - p * p - q * q,
            Criterion::Entropy => -(xlog2x(p) + xlog2x(q)),
        }
    }
}

#[inline]
fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

fn total(counts: &[u64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyNode);
    }
    Ok(n as f64)
}

/// Gini impurity `1 - sum p_i^2`.
pub fn gini(counts: &[u64]) -> Result<f64> {
    let n = total(counts)?;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(counts: &[u64]) -> Result<f64> {
    let n = total(counts)?;
    Ok(-counts.iter().map(|&c| xlog2x(c as f64 / n)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gini_examples() {
        assert_abs_diff_eq!(gini(&[5, 5]).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(gini(&[10, 0]).unwrap(), 0.0);
        // 1 - 0.49 - 0.09
        assert_abs_diff_eq!(gini(&[7, 3]).unwrap(), 0.42, epsilon = 1e-12);
        assert!(matches!(gini(&[0, 0]), Err(Error::EmptyNode)));
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&[5, 5]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(entropy(&[10, 0]).unwrap(), 0.0);
        let hand = -(0.7f64 * 0.7f64.log2() + 0.3 * 0.3f64.log2());
        assert_abs_diff_eq!(entropy(&[7, 3]).unwrap(), hand, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&[7, 3]).unwrap(), 0.88129, epsilon = 1e-5);
        assert!(matches!(entropy(&[]), Err(Error::EmptyNode)));
    }

    #[test]
    fn binary_matches_general() {
        for (pos, n) in [(0u64, 4u64), (1, 4), (3, 7), (7, 7)] {
            for c in [Criterion::Gini, Criterion::Entropy] {
                assert_abs_diff_eq!(c.binary(pos, n), c.of(&[n - pos, pos]).unwrap(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gini_bounded_for_k_classes() {
        let k = 5;
        let g = gini(&[3; 5]).unwrap();
        assert_abs_diff_eq!(g, 1.0 - 1.0 / k as f64, epsilon = 1e-12);
    }
}
