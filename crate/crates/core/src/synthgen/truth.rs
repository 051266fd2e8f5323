use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{binarize, Intervention};
use crate::error::Result;
use crate::stats::auc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub id: String,
    /// Name of the planted rule that assigned the pre-discretion label.
    pub rule_label: Option<String>,
    pub pre_discretion_label: Intervention,
    pub actual: Intervention,
    pub flipped: bool,
    /// Post-discretion assignment probabilities given the features, in
    /// `Intervention::ALL` order.
    pub true_assignment_probs: [f64; 4],
    pub true_p_reentry_es: f64,
    pub true_p_reentry_th: f64,
    pub vulnerability: u32,
}

impl GroundTruthRow {
    pub fn true_marginal_benefit(&self) -> f64 {
        self.true_p_reentry_es - self.true_p_reentry_th
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<GroundTruthRow>,
    /// Softmax intercepts actually used (after calibration).
    pub intercepts: BTreeMap<Intervention, f64>,
    pub flip_scale_es_to_th: f64,
    pub flip_scale_th_to_es: f64,
    /// Features referenced by the planted rules, per target intervention.
    pub planted_features: BTreeMap<Intervention, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn actual(&self) -> Vec<Intervention> {
        self.rows.iter().map(|r| r.actual).collect()
    }

    pub fn pre_discretion(&self) -> Vec<Intervention> {
        self.rows.iter().map(|r| r.pre_discretion_label).collect()
    }

    pub fn assignment_probs(&self, target: Intervention) -> Vec<f64> {
        self.rows.iter().map(|r| r.true_assignment_probs[target.index()]).collect()
    }

    pub fn n_flipped(&self) -> usize {
        self.rows.iter().filter(|r| r.flipped).count()
    }

    /// Label shares in `Intervention::ALL` order.
    pub fn label_shares(&self) -> [f64; 4] {
        let mut s = [0.0; 4];
        for r in &self.rows {
            s[r.actual.index()] += 1.0;
        }
        s.map(|c| c / self.rows.len().max(1) as f64)
    }

    /// Row positions whose true marginal benefit is at or above the 90th
    /// percentile.
    pub fn high_benefit(&self) -> Vec<usize> {
        let mut mb: Vec<f64> = self.rows.iter().map(GroundTruthRow::true_marginal_benefit).collect();
        if mb.is_empty() {
            return Vec::new();
        }
        let values = mb.clone();
        mb.sort_by(f64::total_cmp);
        let cut = mb[(0.9 * (mb.len() - 1) as f64).round() as usize];
        (0..values.len()).filter(|&i| values[i] >= cut).collect()
    }

    /// Sidecar CSV. Never an input to learners.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "HouseholdID".to_string(),
            "RuleLabel".into(),
            "PreDiscretionLabel".into(),
            "Actual".into(),
            "Flipped".into(),
        ];
        header.extend(Intervention::ALL.iter().map(|k| format!("p_true_{k}")));
        header.extend(["true_p_reentry_es".into(), "true_p_reentry_th".into(), "VulnerabilityScore".into()]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.clone(),
                r.rule_label.clone().unwrap_or_default(),
                r.pre_discretion_label.to_string(),
                r.actual.to_string(),
                u8::from(r.flipped).to_string(),
            ];
            rec.extend(r.true_assignment_probs.iter().map(|p| p.to_string()));
            rec.extend([
                r.true_p_reentry_es.to_string(),
                r.true_p_reentry_th.to_string(),
                r.vulnerability.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| crate::Error::io("<ground truth>", e))?;
        Ok(())
    }
}

/// AUC of the true assignment probabilities for `target` against the
/// actual one-vs-all labels.
pub fn bayes_auc(truth: &GroundTruth, target: Intervention) -> Result<f64> {
    bayes_auc_subset(truth, target, &(0..truth.len()).collect::<Vec<_>>())
}

/// Same as [`bayes_auc`] restricted to the given row positions.
pub fn bayes_auc_subset(truth: &GroundTruth, target: Intervention, rows: &[usize]) -> Result<f64> {
    let scores: Vec<f64> = rows.iter().map(|&i| truth.rows[i].true_assignment_probs[target.index()]).collect();
    let labels: Vec<Intervention> = rows.iter().map(|&i| truth.rows[i].actual).collect();
    auc(&scores, &binarize(&labels, target))
}
