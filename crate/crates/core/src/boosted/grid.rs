use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_gbt_traced, GbtConfig};
use super::model::sigmoid;
use crate::data::split_indices;
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::stats::auc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Auc,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub estimator_values: Vec<usize>,
    pub depth_values: Vec<usize>,
    pub selection_metric: SelectionMetric,
}

impl Default for GridSpec {
    /// Estimators 50 to 200 in steps of 50, depth 2 to 8 in steps of 2.
    fn default() -> Self {
        GridSpec {
            estimator_values: vec![50, 100, 150, 200],
            depth_values: vec![2, 4, 6, 8],
            selection_metric: SelectionMetric::Auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_n_estimators: usize,
    pub best_max_depth: usize,
    pub best_metric: f64,
    pub metric: SelectionMetric,
    /// Estimator-major order.
    pub cells: Vec<GridCell>,
}

/// Fraction of the training rows used for fitting inside the search; the
/// rest scores each cell.
pub const GRID_TRAIN_FRACTION: f64 = 0.8;

/// Scores every (estimators, depth) cell on a seeded internal validation
/// split. Fitting is deterministic given the data, so one fit per depth at
/// the largest estimator count serves every smaller count as a prefix.
pub fn grid_search(
    train: &EncodedDataset,
    labels: &[u8],
    grid: &GridSpec,
    base: &GbtConfig,
    seed: u64,
) -> Result<GridResult> {
    if grid.estimator_values.is_empty() || grid.depth_values.is_empty() {
        return Err(Error::InvalidConfig("boosting grid is empty".into()));
    }
    if labels.len() != train.n_rows() {
        return Err(Error::LengthMismatch {
            left: train.n_rows(),
            right: labels.len(),
        });
    }
    let (fit_idx, val_idx) = split_indices(train.n_rows(), GRID_TRAIN_FRACTION, seed)?;
    let fit_data = train.subset(&fit_idx);
    let fit_labels: Vec<u8> = fit_idx.iter().map(|&i| labels[i]).collect();
    let val_data = train.subset(&val_idx);
    let val_labels: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();
    if val_labels.iter().all(|&y| y == val_labels[0]) {
        return Err(Error::SingleClass);
    }

    let mut estimators = grid.estimator_values.clone();
    estimators.sort_unstable();
    estimators.dedup();
    let mut depths = grid.depth_values.clone();
    depths.sort_unstable();
    depths.dedup();
    let max_est = *estimators.last().unwrap();

    let per_depth: Vec<Result<Vec<(usize, usize, f64)>>> = depths
        .par_iter()
        .map(|&depth| {
            let cfg = GbtConfig {
                n_estimators: max_est,
                max_depth: depth,
                ..base.clone()
            };
            let model = fit_gbt_traced(&fit_data, &fit_labels, &cfg)?.model;
            let mut margins = vec![model.base_score; val_data.n_rows()];
            let mut done = 0;
            let mut out = Vec::new();
            for &e in &estimators {
                for t in &model.trees[done..e] {
                    for (m, row) in margins.iter_mut().zip(val_data.rows()) {
                        *m += model.learning_rate * t.leaf_for(row).output();
                    }
                }
                done = e;
                let scores: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
                let metric = match grid.selection_metric {
                    SelectionMetric::Auc => auc(&scores, &val_labels)?,
                    SelectionMetric::Accuracy => accuracy(&scores, &val_labels),
                };
                out.push((e, depth, metric));
            }
            Ok(out)
        })
        .collect();

    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in per_depth {
        for (e, d, m) in r? {
            table.insert((e, d), m);
        }
    }
    // estimator-major iteration means the first strict maximum already
    // prefers fewer estimators, then smaller depth
    let mut best: Option<(usize, usize, f64)> = None;
    for (&(e, d), &m) in &table {
        if best.is_none_or(|b| m > b.2) {
            best = Some((e, d, m));
        }
    }
    let (best_n_estimators, best_max_depth, best_metric) = best.unwrap();
    Ok(GridResult {
        best_n_estimators,
        best_max_depth,
        best_metric,
        metric: grid.selection_metric,
        cells: table
            .into_iter()
            .map(|((n_estimators, max_depth), metric)| GridCell {
                n_estimators,
                max_depth,
                metric,
            })
            .collect(),
    })
}

pub fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= 0.5) == (y != 0))
        .count();
    hits as f64 / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosted::fit_gbt;

    fn data(n: usize) -> (EncodedDataset, Vec<u8>) {
        let x: Vec<f64> = (0..n * 2).map(|i| ((i * 7919) % 101) as f64).collect();
        let y: Vec<u8> = (0..n).map(|i| ((x[i * 2] > 50.0) ^ (i % 5 == 0)) as u8).collect();
        (EncodedDataset::from_matrix(2, x).unwrap(), y)
    }

    #[test]
    fn one_cell_grid() {
        let (d, y) = data(200);
        let g = GridSpec {
            estimator_values: vec![5],
            depth_values: vec![2],
            selection_metric: SelectionMetric::Auc,
        };
        let r = grid_search(&d, &y, &g, &GbtConfig::default(), 1).unwrap();
        assert_eq!((r.best_n_estimators, r.best_max_depth), (5, 2));
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn default_grid_has_sixteen_cells() {
        let (d, y) = data(150);
        let g = GridSpec::default();
        assert_eq!(g.estimator_values, vec![50, 100, 150, 200]);
        assert_eq!(g.depth_values, vec![2, 4, 6, 8]);
        let r = grid_search(&d, &y, &g, &GbtConfig::default(), 3).unwrap();
        assert_eq!(r.cells.len(), 16);
        let best = r
            .cells
            .iter()
            .find(|c| c.n_estimators == r.best_n_estimators && c.max_depth == r.best_max_depth)
            .unwrap();
        assert!(r.cells.iter().all(|c| c.metric <= best.metric));
    }

    #[test]
    fn prefix_scores_match_separate_fits() {
        let (d, y) = data(200);
        let g = GridSpec {
            estimator_values: vec![3, 7],
            depth_values: vec![2],
            selection_metric: SelectionMetric::Auc,
        };
        let r = grid_search(&d, &y, &g, &GbtConfig::default(), 9).unwrap();
        let (fit_idx, val_idx) = split_indices(200, 0.8, 9).unwrap();
        let yf: Vec<u8> = fit_idx.iter().map(|&i| y[i]).collect();
        let yv: Vec<u8> = val_idx.iter().map(|&i| y[i]).collect();
        let m = fit_gbt(&d.subset(&fit_idx), &yf, &GbtConfig::new(3, 2)).unwrap();
        let a = auc(&m.predict_dataset(&d.subset(&val_idx)).unwrap(), &yv).unwrap();
        assert!((r.cells[0].metric - a).abs() < 1e-12);
    }

    #[test]
    fn parallel_equals_serial() {
        let (d, y) = data(200);
        let g = GridSpec {
            estimator_values: vec![5, 10],
            depth_values: vec![1, 2, 3],
            selection_metric: SelectionMetric::Accuracy,
        };
        let a = grid_search(&d, &y, &g, &GbtConfig::default(), 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| grid_search(&d, &y, &g, &GbtConfig::default(), 4).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_rejected() {
        let (d, y) = data(50);
        let g = GridSpec {
            estimator_values: vec![],
            depth_values: vec![2],
            selection_metric: SelectionMetric::Auc,
        };
        assert!(grid_search(&d, &y, &g, &GbtConfig::default(), 0).is_err());
    }
}
