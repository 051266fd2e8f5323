use crate::error::{Error, Result};

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean(i+1 ..= j+1)
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least two observations".into()));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Symmetric matrix of pairwise Spearman correlations with unit diagonal.
pub fn correlation_matrix(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = vectors.len();
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(Error::LengthMismatch {
                left: first.len(),
                right: bad.len(),
            });
        }
    }
    let ranks: Vec<Vec<f64>> = vectors.iter().map(|v| average_ranks(v)).collect();
    let mut m = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let rho = pearson(&ranks[i], &ranks[j])?;
            m[i][j] = rho;
            m[j][i] = rho;
        }
    }
    Ok(m)
}

/// Mean of the strictly upper triangle; `None` for a 1x1 matrix.
pub fn mean_off_diagonal(m: &[Vec<f64>]) -> Option<f64> {
    let k = m.len();
    if k < 2 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            sum += m[i][j];
        }
    }
    Some(sum / (k * (k - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(spearman(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0, epsilon = 1e-15);
        // 1 - 6 * 4 / (4 * 15)
        assert_abs_diff_eq!(spearman(&a, &[2.0, 1.0, 4.0, 3.0]).unwrap(), 0.6, epsilon = 1e-12);
        assert!(matches!(spearman(&a, &[1.0; 4]), Err(Error::ConstantInput)));
        assert!(matches!(spearman(&a, &[1.0; 3]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn matrix_shapes() {
        assert_eq!(correlation_matrix(&[vec![1.0, 2.0]]).unwrap(), vec![vec![1.0]]);
        let v = vec![0.3, 0.1, 0.7];
        let m = correlation_matrix(&[v.clone(), v]).unwrap();
        for row in &m {
            for &x in row {
                assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
            }
        }
        assert!(correlation_matrix(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert_eq!(mean_off_diagonal(&[vec![1.0]]), None);
    }

    proptest! {
        #[test]
        fn monotone_invariance(
            a in proptest::collection::vec(-100.0f64..100.0, 3..40),
            seed in 0u64..1000,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.5 + ((i as u64 * 7919 + seed) % 13) as f64).collect();
            prop_assume!(spearman(&a, &b).is_ok());
            let rho = spearman(&a, &b).unwrap();
            let a2: Vec<f64> = a.iter().map(|x| (x / 50.0).exp()).collect();
            let b2: Vec<f64> = b.iter().map(|x| x * x * x + 3.0).collect();
            prop_assert!((spearman(&a2, &b2).unwrap() - rho).abs() < 1e-12);
        }
    }
}
