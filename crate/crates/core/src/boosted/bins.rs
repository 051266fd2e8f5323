use rayon::prelude::*;

use crate::data::EncodedDataset;
use crate::tree::midpoint;

/// Column codes for histogram split search. A column with at most
/// `max_bins` distinct values gets one bin per value; otherwise adjacent
/// distinct values are grouped into roughly equal-count bins.
#[derive(Debug, Clone)]
pub(crate) struct BinnedColumn {
    pub codes: Vec<u8>,
    /// `thresholds[b]` separates bin `b` from bin `b + 1`.
    pub thresholds: Vec<f64>,
}

impl BinnedColumn {
    pub fn n_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    fn build(values: &[f64], max_bins: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        // distinct values with counts
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for &v in &sorted {
            match distinct.last_mut() {
                Some((d, c)) if *d == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        // upper value of each bin
        let mut uppers: Vec<f64> = Vec::new();
        if distinct.len() <= max_bins {
            uppers.extend(distinct.iter().map(|d| d.0));
        } else {
            // close a bin each time the running count passes the next
            // multiple of n / max_bins, which caps the bin count
            let n = values.len();
            let mut cum = 0usize;
            for &(v, c) in &distinct {
                cum += c;
                if cum * max_bins >= (uppers.len() + 1) * n {
                    uppers.push(v);
                }
            }
        }
        let mut thresholds = Vec::with_capacity(uppers.len().saturating_sub(1));
        for w in uppers.windows(2) {
            let next = distinct.partition_point(|d| d.0 <= w[0]);
            thresholds.push(midpoint(w[0], distinct[next].0));
        }
        let codes = values
            .iter()
            .map(|&v| thresholds.partition_point(|&t| t < v) as u8)
            .collect();
        BinnedColumn { codes, thresholds }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BinnedMatrix {
    pub columns: Vec<BinnedColumn>,
}

impl BinnedMatrix {
    pub fn new(data: &EncodedDataset, max_bins: usize) -> Self {
        assert!((2..=256).contains(&max_bins));
        let columns = data
            .columns_major()
            .par_iter()
            .map(|c| BinnedColumn::build(c, max_bins))
            .collect();
        BinnedMatrix { columns }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_values_are_exact() {
        let c = BinnedColumn::build(&[3.0, 1.0, 2.0, 1.0], 256);
        assert_eq!(c.thresholds, vec![1.5, 2.5]);
        assert_eq!(c.codes, vec![2, 0, 1, 0]);
    }

    #[test]
    fn many_values_are_grouped_consistently() {
        let values: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let c = BinnedColumn::build(&values, 16);
        assert!(c.n_bins() <= 16 && c.n_bins() >= 8);
        for (v, &code) in values.iter().zip(&c.codes) {
            let b = code as usize;
            if b > 0 {
                assert!(*v > c.thresholds[b - 1]);
            }
            if b < c.thresholds.len() {
                assert!(*v <= c.thresholds[b]);
            }
        }
    }

    #[test]
    fn constant_column_has_one_bin() {
        let c = BinnedColumn::build(&[4.0; 5], 256);
        assert_eq!(c.n_bins(), 1);
        assert_eq!(c.codes, vec![0; 5]);
    }
}
