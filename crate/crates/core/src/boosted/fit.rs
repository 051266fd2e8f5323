use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bins::BinnedMatrix;
use super::model::{sigmoid, BoostedModel};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::tree::{Leaf, TreeNode};

/// Floor on the summed hessian in a Newton leaf value.
pub const HESSIAN_FLOOR: f64 = 1e-6;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Histogram resolution for split search, at most 256.
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 100,
            max_depth: 4,
            learning_rate: 0.1,
            max_bins: 256,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn new(n_estimators: usize, max_depth: usize) -> Self {
        GbtConfig {
            n_estimators,
            max_depth,
            ..GbtConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        Ok(())
    }
}

/// Model plus the mean training log-loss before the first stage and after
/// each stage.
#[derive(Debug, Clone)]
pub struct GbtFit {
    pub model: BoostedModel,
    pub train_loss: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_loss(margins: &[f64], labels: &[u8]) -> f64 {
    let s: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&f, &y)| softplus(f) - if y != 0 { f } else { 0.0 })
        .sum();
    s / margins.len() as f64
}

pub fn fit_gbt(train: &EncodedDataset, labels: &[u8], cfg: &GbtConfig) -> Result<BoostedModel> {
    fit_gbt_traced(train, labels, cfg).map(|f| f.model)
}

/// Stage-wise fit. A stage whose tree would raise the training loss has its
/// leaf values halved until it does not (zeroed after 50 halvings).
pub fn fit_gbt_traced(train: &EncodedDataset, labels: &[u8], cfg: &GbtConfig) -> Result<GbtFit> {
    cfg.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch { left: n, right: labels.len() });
    }
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    let rate = n_pos as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let binned = BinnedMatrix::new(train, cfg.max_bins);
    let y: Vec<f64> = labels.iter().map(|&l| if l != 0 { 1.0 } else { 0.0 }).collect();

    let mut margins = vec![base_score; n];
    let mut loss = log_loss(&margins, labels);
    let mut train_loss = vec![loss];
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..cfg.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = y[i] - p;
            hess[i] = p * (1.0 - p);
        }
        let grower = Grower {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            max_depth: cfg.max_depth,
        };
        let mut outputs = vec![0.0; n];
        let rows: Vec<u32> = (0..n as u32).collect();
        let hist = grower.histogram(&rows);
        let mut tree = grower.grow(rows, hist, 0, &mut outputs);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = margins
                .iter()
                .zip(&outputs)
                .map(|(m, o)| m + cfg.learning_rate * scale * o)
                .collect();
            let l = log_loss(&trial, labels);
            if l <= loss {
                accepted = Some((trial, l));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, l)) => {
                if scale != 1.0 {
                    scale_leaves(&mut tree, scale);
                }
                margins = trial;
                loss = l;
            }
            None => scale_leaves(&mut tree, 0.0),
        }
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(GbtFit {
        model: BoostedModel {
            base_score,
            learning_rate: cfg.learning_rate,
            n_estimators: cfg.n_estimators,
            max_depth: cfg.max_depth,
            trees,
            columns: train.columns.clone(),
        },
        train_loss,
    })
}

fn scale_leaves(node: &mut TreeNode, s: f64) {
    match node {
        TreeNode::Leaf(Leaf::Value(v)) => *v *= s,
        TreeNode::Leaf(_) => {}
        TreeNode::Split { left, right, .. } => {
            scale_leaves(left, s);
            scale_leaves(right, s);
        }
    }
}

/// Per-column bin sums: gradient, hessian, count.
#[derive(Clone)]
struct Histogram {
    cols: Vec<Vec<Bin>>,
}

#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

impl Histogram {
    fn minus(&self, other: &Histogram) -> Histogram {
        Histogram {
            cols: self
                .cols
                .iter()
                .zip(&other.cols)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| Bin {
                            g: x.g - y.g,
                            h: x.h - y.h,
                            n: x.n - y.n,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
}

struct Best {
    gain: f64,
    col: usize,
    bin: usize,
}

impl Grower<'_> {
    fn histogram(&self, rows: &[u32]) -> Histogram {
        let cols = self
            .binned
            .columns
            .par_iter()
            .map(|c| {
                let mut bins = vec![Bin::default(); c.n_bins()];
                for &r in rows {
                    let b = &mut bins[c.codes[r as usize] as usize];
                    b.g += self.grad[r as usize];
                    b.h += self.hess[r as usize];
                    b.n += 1;
                }
                bins
            })
            .collect();
        Histogram { cols }
    }

    /// Least-squares split on the gradient: largest
    /// `G_L^2/n_L + G_R^2/n_R - G^2/n`; ties go to the lower column, then
    /// the lower threshold.
    fn best_split(&self, hist: &Histogram) -> Option<Best> {
        let per_col: Vec<Option<(f64, usize)>> = hist
            .cols
            .par_iter()
            .map(|bins| {
                let (gt, nt) = bins.iter().fold((0.0, 0u32), |(g, n), b| (g + b.g, n + b.n));
                let parent = gt * gt / nt as f64;
                let mut best: Option<(f64, usize)> = None;
                let (mut gl, mut nl) = (0.0, 0u32);
                for (b, bin) in bins.iter().enumerate().take(bins.len() - 1) {
                    gl += bin.g;
                    nl += bin.n;
                    let nr = nt - nl;
                    if nl == 0 || nr == 0 {
                        continue;
                    }
                    let gr = gt - gl;
                    let gain = gl * gl / nl as f64 + gr * gr / nr as f64 - parent;
                    if best.is_none_or(|(g, _)| gain > g) {
                        best = Some((gain, b));
                    }
                }
                best
            })
            .collect();
        let mut best: Option<Best> = None;
        for (col, cand) in per_col.into_iter().enumerate() {
            if let Some((gain, bin)) = cand {
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { gain, col, bin });
                }
            }
        }
        best
    }

    fn leaf(&self, rows: &[u32], outputs: &mut [f64]) -> TreeNode {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let v = g / h.max(HESSIAN_FLOOR);
        for &r in rows {
            outputs[r as usize] = v;
        }
        TreeNode::Leaf(Leaf::Value(v))
    }

    fn grow(&self, rows: Vec<u32>, hist: Histogram, depth: usize, outputs: &mut [f64]) -> TreeNode {
        if depth >= self.max_depth || rows.len() < 2 {
            return self.leaf(&rows, outputs);
        }
        let Some(best) = self.best_split(&hist) else {
            return self.leaf(&rows, outputs);
        };
        let col = &self.binned.columns[best.col];
        let (left, right): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| col.codes[r as usize] as usize <= best.bin);
        drop(rows);
        let (lh, rh) = if depth + 1 >= self.max_depth {
            // children become leaves; histograms are not needed
            (Histogram { cols: vec![] }, Histogram { cols: vec![] })
        } else if left.len() <= right.len() {
            let lh = self.histogram(&left);
            let rh = hist.minus(&lh);
            (lh, rh)
        } else {
            let rh = self.histogram(&right);
            let lh = hist.minus(&rh);
            (lh, rh)
        };
        let threshold = col.thresholds[best.bin];
        let l = self.grow(left, lh, depth + 1, outputs);
        let r = self.grow(right, rh, depth + 1, outputs);
        TreeNode::split(best.col, threshold, l, r)
    }
}
