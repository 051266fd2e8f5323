use serde::{Deserialize, Serialize};

use crate::data::{ColumnInfo, EncodedDataset};
use crate::error::{Error, Result};
use crate::tree::{node_from_records, node_records, Leaf, NodeRecord, TreeNode};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient-boosted ensemble of regression trees on the log-odds scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub trees: Vec<TreeNode>,
    pub columns: Vec<ColumnInfo>,
}

impl BoostedModel {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got,
            });
        }
        Ok(())
    }

    /// Log-odds using the first `n_trees` stages.
    pub(crate) fn margin_prefix(&self, row: &[f64], n_trees: usize) -> f64 {
        let sum: f64 = self.trees[..n_trees]
            .iter()
            .map(|t| t.leaf_for(row).output())
            .sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row.len())?;
        Ok(self.margin_prefix(row, self.trees.len()))
    }

    pub fn predict_score(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(row)?))
    }

    pub fn predict_dataset(&self, data: &EncodedDataset) -> Result<Vec<f64>> {
        self.check_width(data.n_cols())?;
        Ok(data
            .rows()
            .map(|r| sigmoid(self.margin_prefix(r, self.trees.len())))
            .collect())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedModel(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !self.base_score.is_finite() {
            return bad("base score is not finite".into());
        }
        if self.trees.len() != self.n_estimators {
            return bad(format!(
                "{} trees but n_estimators = {}",
                self.trees.len(),
                self.n_estimators
            ));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if t.depth() > self.max_depth {
                return bad(format!("tree {i} deeper than max_depth {}", self.max_depth));
            }
            if t.max_feature().is_some_and(|m| m >= self.columns.len()) {
                return bad(format!("tree {i} splits on an unknown column"));
            }
            if t.leaves().iter().any(|l| !matches!(l, Leaf::Value(_))) {
                return bad(format!("tree {i} has class-count leaves"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = BoostedDocument {
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            columns: self.columns.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeRecords {
                    nodes: node_records(t, &self.columns),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BoostedDocument = serde_json::from_str(text)?;
        let model = BoostedModel {
            base_score: doc.base_score,
            learning_rate: doc.learning_rate,
            n_estimators: doc.n_estimators,
            max_depth: doc.max_depth,
            trees: doc
                .trees
                .iter()
                .map(|t| node_from_records(&t.nodes))
                .collect::<Result<_>>()?,
            columns: doc.columns,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct BoostedDocument {
    base_score: f64,
    learning_rate: f64,
    n_estimators: usize,
    max_depth: usize,
    columns: Vec<ColumnInfo>,
    trees: Vec<TreeRecords>,
}

#[derive(Serialize, Deserialize)]
struct TreeRecords {
    nodes: Vec<NodeRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns(n: usize) -> Vec<ColumnInfo> {
        EncodedDataset::from_matrix(n, vec![0.0; n]).unwrap().columns
    }

    fn value(v: f64) -> TreeNode {
        TreeNode::Leaf(Leaf::Value(v))
    }

    fn fixture() -> BoostedModel {
        BoostedModel {
            base_score: -0.5,
            learning_rate: 0.1,
            n_estimators: 2,
            max_depth: 2,
            trees: vec![
                TreeNode::split(0, 1.5, value(2.0), TreeNode::split(1, 0.5, value(-1.0), value(3.0))),
                TreeNode::split(1, 0.5, value(0.5), value(-4.0)),
            ],
            columns: columns(2),
        }
    }

    #[test]
    fn empty_ensemble_is_base_rate() {
        let m = BoostedModel {
            base_score: (0.3f64 / 0.7).ln(),
            learning_rate: 0.1,
            n_estimators: 0,
            max_depth: 1,
            trees: vec![],
            columns: columns(1),
        };
        assert!((m.predict_score(&[5.0]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_tree_gives_half() {
        let m = BoostedModel {
            base_score: 0.0,
            learning_rate: 0.1,
            n_estimators: 1,
            max_depth: 1,
            trees: vec![value(0.0)],
            columns: columns(1),
        };
        assert_eq!(m.predict_score(&[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn hand_summed_trace() {
        let m = fixture();
        // x = (2, 1): tree 1 -> right, right -> 3.0; tree 2 -> right -> -4.0
        let expected = sigmoid(-0.5 + 0.1 * (3.0 - 4.0));
        assert_eq!(m.predict_score(&[2.0, 1.0]).unwrap(), expected);
        // x = (1, 0): 2.0 and 0.5
        let expected = sigmoid(-0.5 + 0.1 * (2.0 + 0.5));
        assert_eq!(m.predict_score(&[1.0, 0.0]).unwrap(), expected);
        assert!(matches!(m.predict_score(&[1.0]), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let m = fixture();
        assert_eq!(BoostedModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let mut m = fixture();
        m.n_estimators = 3;
        assert!(matches!(BoostedModel::from_json(&m.to_json()), Err(Error::MalformedModel(_))));
        let mut m = fixture();
        m.max_depth = 1;
        assert!(BoostedModel::from_json(&m.to_json()).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
