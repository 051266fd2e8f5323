use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impurity::Criterion;
use super::model::{DecisionTree, TreeNode};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};

/// Smallest impurity decrease that counts as an improvement.
pub const MIN_DECREASE: f64 = 1e-12;

/// Growth parameters shared by CART and the short-tree learner.
///
/// `factor_expl = 1` turns off the reuse bonus and `top_k = 1` turns off
/// randomized selection; together they give plain greedy CART.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub factor_expl: f64,
    pub top_k: usize,
    /// Only top-k candidates scoring at least `(1 - top_k_tolerance)` times
    /// the best score take part in the random draw; 1 admits all of them.
    pub top_k_tolerance: f64,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig::short()
    }
}

impl TreeConfig {
    /// Short explanation-regularized trees: depth 4, FactorExpl 0.97.
    pub fn short() -> Self {
        TreeConfig {
            criterion: Criterion::Gini,
            max_depth: 4,
            min_samples_split: 2,
            min_samples_leaf: 1,
            factor_expl: 0.97,
            top_k: 2,
            top_k_tolerance: 0.05,
            seed: 0,
        }
    }

    pub fn cart(criterion: Criterion, max_depth: usize, min_samples_split: usize, min_samples_leaf: usize) -> Self {
        TreeConfig {
            criterion,
            max_depth,
            min_samples_split,
            min_samples_leaf,
            factor_expl: 1.0,
            top_k: 1,
            top_k_tolerance: 1.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.factor_expl) {
            return bad("factor_expl must lie in [0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        if !(0.0..=1.0).contains(&self.top_k_tolerance) {
            return bad("top_k_tolerance must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// `factor_expl * decrease_fraction + (1 - factor_expl) * reuse_bonus`.
    pub score: f64,
    /// Weighted impurity decrease divided by the parent impurity.
    pub decrease_fraction: f64,
}

/// Score descending, then feature ascending, then threshold ascending.
fn rank(a: &SplitCandidate, b: &SplitCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.feature.cmp(&b.feature))
        .then(a.threshold.total_cmp(&b.threshold))
}

/// Keeps the `k` best candidates under `rank`.
struct TopK {
    k: usize,
    items: Vec<SplitCandidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn push(&mut self, c: SplitCandidate) {
        if self.items.len() == self.k {
            if rank(&c, self.items.last().unwrap()) != Ordering::Less {
                return;
            }
            self.items.pop();
        }
        let at = self.items.partition_point(|x| rank(x, &c) == Ordering::Less);
        self.items.insert(at, c);
    }
}

/// Column-major training matrix.
pub struct TrainingView {
    columns: Vec<Vec<f64>>,
}

impl TrainingView {
    pub fn new(data: &EncodedDataset) -> Self {
        TrainingView {
            columns: data.columns_major(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }
}

/// Midpoint between consecutive distinct sorted values, guaranteed to send
/// `lo` left and `hi` right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

fn column_candidates(
    column: &[f64],
    feature: usize,
    rows: &[usize],
    labels: &[u8],
    cfg: &TreeConfig,
    parent_impurity: f64,
    reuse: bool,
    scratch: &mut Vec<(f64, u8)>,
    top: &mut TopK,
) {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (column[r], labels[r])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len() as u64;
    let total_pos: u64 = scratch.iter().map(|&(_, y)| u64::from(y)).sum();
    let bonus = if reuse { 1.0 } else { 0.0 };
    let (mut left_n, mut left_pos) = (0u64, 0u64);
    for i in 0..scratch.len() - 1 {
        left_n += 1;
        left_pos += u64::from(scratch[i].1);
        let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
        if lo == hi {
            continue;
        }
        let right_n = n - left_n;
        if (left_n as usize) < cfg.min_samples_leaf || (right_n as usize) < cfg.min_samples_leaf {
            continue;
        }
        let children = (left_n as f64 * cfg.criterion.binary(left_pos, left_n)
            + right_n as f64 * cfg.criterion.binary(total_pos - left_pos, right_n))
            / n as f64;
        let decrease = parent_impurity - children;
        if decrease <= MIN_DECREASE {
            continue;
        }
        let fraction = decrease / parent_impurity;
        top.push(SplitCandidate {
            feature,
            threshold: midpoint(lo, hi),
            score: cfg.factor_expl * fraction + (1.0 - cfg.factor_expl) * bonus,
            decrease_fraction: fraction,
        });
    }
}

/// Best split of the node holding `rows`, or `None` when no admissible split
/// lowers the impurity. Among the `top_k` best-scoring candidates one is
/// drawn uniformly with `rng` (subject to `top_k_tolerance`); when only one
/// candidate is eligible the rng is never touched.
pub fn best_split<R: Rng + ?Sized>(
    view: &TrainingView,
    rows: &[usize],
    labels: &[u8],
    cfg: &TreeConfig,
    path_features: &BTreeSet<usize>,
    rng: &mut R,
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let pos: u64 = rows.iter().map(|&r| u64::from(labels[r])).sum();
    let parent = cfg.criterion.binary(pos, rows.len() as u64);
    if parent <= MIN_DECREASE {
        return None;
    }

    let search = |j: usize, scratch: &mut Vec<(f64, u8)>| {
        let mut top = TopK::new(cfg.top_k);
        let reuse = path_features.contains(&j);
        column_candidates(&view.columns[j], j, rows, labels, cfg, parent, reuse, scratch, &mut top);
        top.items
    };

    // Per-column shortlists merged in canonical column order, so the
    // parallel and serial paths agree exactly.
    let per_column: Vec<Vec<SplitCandidate>> = if rows.len() * view.n_cols() >= 1 << 16 {
        (0..view.n_cols())
            .into_par_iter()
            .map_init(Vec::new, |scratch, j| search(j, scratch))
            .collect()
    } else {
        let mut scratch = Vec::with_capacity(rows.len());
        (0..view.n_cols()).map(|j| search(j, &mut scratch)).collect()
    };
    let mut top = TopK::new(cfg.top_k);
    for c in per_column.into_iter().flatten() {
        top.push(c);
    }
    let floor = top.items.first()?.score * (1.0 - cfg.top_k_tolerance);
    match top.items.iter().filter(|c| c.score >= floor).count() {
        1 => Some(top.items[0]),
        n => Some(top.items[rng.random_range(0..n)]),
    }
}

/// Grows a binary classification tree on `labels` (0/1).
pub fn fit_tree(train: &EncodedDataset, labels: &[u8], cfg: &TreeConfig) -> Result<DecisionTree> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    if labels.len() != train.n_rows() {
        return Err(Error::LengthMismatch {
            left: train.n_rows(),
            right: labels.len(),
        });
    }
    let view = TrainingView::new(train);
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let root = grow(&view, rows, labels, cfg, 0, &mut BTreeSet::new(), &mut rng);
    DecisionTree::new(root, train.columns.clone())
}

fn grow(
    view: &TrainingView,
    rows: Vec<usize>,
    labels: &[u8],
    cfg: &TreeConfig,
    depth: usize,
    path: &mut BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count() as u64;
    let n = rows.len() as u64;
    let leaf = || TreeNode::class_leaf(n - pos, pos);
    if pos == 0 || pos == n || depth >= cfg.max_depth || rows.len() < cfg.min_samples_split {
        return leaf();
    }
    let Some(split) = best_split(view, &rows, labels, cfg, path, rng) else {
        return leaf();
    };
    let col = &view.columns[split.feature];
    let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| col[r] <= split.threshold);
    let fresh = path.insert(split.feature);
    let l = grow(view, left, labels, cfg, depth + 1, path, rng);
    let r = grow(view, right, labels, cfg, depth + 1, path, rng);
    if fresh {
        path.remove(&split.feature);
    }
    TreeNode::split(split.feature, split.threshold, l, r)
}
