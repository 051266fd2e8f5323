use std::io::Write;

use serde::{Deserialize, Serialize};

use super::normal::z_for_level;
use super::rank::average_ranks;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive; the first point uses +inf.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fpr", "tpr", "threshold"])?;
        for p in &self.points {
            w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// ROC curve swept over distinct scores, highest first; tied scores form a
/// single step.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    Ok(RocCurve { points })
}

/// Mann–Whitney AUC: share of positive/negative pairs ranked correctly,
/// ties counting one half. Computed from midranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y != 0).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucEstimate {
    pub auc: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl AucEstimate {
    /// `0.7671 [0.7452, 0.7890]`
    pub fn display(&self) -> String {
        format!("{:.4} [{:.4}, {:.4}]", self.auc, self.ci_low, self.ci_high)
    }
}

/// AUC with DeLong's structural-component variance and a normal interval
/// clipped to [0, 1].
pub fn delong_ci(scores: &[f64], labels: &[u8], level: f64) -> Result<AucEstimate> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} not in (0, 1)")));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y != 0).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(&s, _)| s).collect();
    let (m, n) = (pos.len(), neg.len());
    if m < 2 || n < 2 {
        return Err(Error::InsufficientClassCount {
            needed: 2,
            n_pos: m,
            n_neg: n,
        });
    }

    // Midrank identities: for a positive x_i, (#neg below + ties/2) equals
    // its rank in the pooled sample minus its rank among positives.
    let pooled = average_ranks(scores);
    let pos_pooled: Vec<f64> = pooled.iter().zip(labels).filter(|(_, &y)| y != 0).map(|(&r, _)| r).collect();
    let neg_pooled: Vec<f64> = pooled.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(&r, _)| r).collect();
    let pos_own = average_ranks(&pos);
    let neg_own = average_ranks(&neg);

    let v10: Vec<f64> = pos_pooled.iter().zip(&pos_own).map(|(a, b)| (a - b) / n as f64).collect();
    let v01: Vec<f64> = neg_pooled.iter().zip(&neg_own).map(|(a, b)| 1.0 - (a - b) / m as f64).collect();
    let auc = v10.iter().sum::<f64>() / m as f64;

    let variance = sample_variance(&v10) / m as f64 + sample_variance(&v01) / n as f64;
    let half = z_for_level(level) * variance.max(0.0).sqrt();
    Ok(AucEstimate {
        auc,
        variance,
        ci_low: (auc - half).clamp(0.0, 1.0),
        ci_high: (auc + half).clamp(0.0, 1.0),
        level,
        n_pos: m,
        n_neg: n,
    })
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
