use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnInfo, EncodedDataset};
use crate::error::{Error, Result};

/// Leaf payload: class counts for classification trees, a real output for
/// the regression trees inside a boosted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    /// `[negatives, positives]`, total at least 1.
    Class { counts: [u64; 2] },
    Value(f64),
}

impl Leaf {
    pub fn total(&self) -> u64 {
        match self {
            Leaf::Class { counts } => counts[0] + counts[1],
            Leaf::Value(_) => 0,
        }
    }

    /// Positive fraction for class leaves, the raw output otherwise.
    pub fn output(&self) -> f64 {
        match *self {
            Leaf::Class { counts } => counts[1] as f64 / (counts[0] + counts[1]) as f64,
            Leaf::Value(v) => v,
        }
    }
}

/// Axis-aligned binary node. Rows with `value <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Leaf),
}

impl TreeNode {
    pub fn class_leaf(neg: u64, pos: u64) -> Self {
        TreeNode::Leaf(Leaf::Class { counts: [neg, pos] })
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaf_for(&self, row: &[f64]) -> &Leaf {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(leaf) => return leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    /// Number of split nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |l, _| out.push(l), &mut Vec::new());
        out
    }

    /// Calls `f` on every leaf with the `(feature, threshold, went_left)`
    /// path leading to it.
    pub fn visit_leaves<'a>(
        &'a self,
        f: &mut impl FnMut(&'a Leaf, &[(usize, f64, bool)]),
        path: &mut Vec<(usize, f64, bool)>,
    ) {
        match self {
            TreeNode::Leaf(leaf) => f(leaf, path),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                path.push((*feature, *threshold, true));
                left.visit_leaves(f, path);
                path.pop();
                path.push((*feature, *threshold, false));
                right.visit_leaves(f, path);
                path.pop();
            }
        }
    }

    /// Distinct split columns used anywhere in the tree, ascending.
    pub fn split_features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_features(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_features(&self, out: &mut Vec<usize>) {
        if let TreeNode::Split {
            feature, left, right, ..
        } = self
        {
            out.push(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }

    pub(crate) fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf(_) => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }
}

/// A tree together with the encoded columns it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub columns: Vec<ColumnInfo>,
}

impl DecisionTree {
    pub fn new(root: TreeNode, columns: Vec<ColumnInfo>) -> Result<Self> {
        if let Some(m) = root.max_feature() {
            if m >= columns.len() {
                return Err(Error::MalformedModel(format!(
                    "split on column {m} but only {} columns",
                    columns.len()
                )));
            }
        }
        Ok(DecisionTree { root, columns })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Leaf positive fraction (or raw leaf output for regression trees).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        Ok(self.root.leaf_for(row).output())
    }

    pub fn predict_dataset(&self, data: &EncodedDataset) -> Result<Vec<f64>> {
        if data.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: data.n_cols(),
            });
        }
        Ok(data.rows().map(|r| self.root.leaf_for(r).output()).collect())
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Original feature names (one-hot levels collapse to their feature)
    /// that appear in some split.
    pub fn split_feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .root
            .split_features()
            .into_iter()
            .map(|j| self.columns[j].feature.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Mean number of distinct `(column, threshold)` conditions on each
    /// row's root-to-leaf path.
    pub fn explanation_size(&self, data: &EncodedDataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        if data.n_cols() != self.n_features() {
            return Err(Error::WidthMismatch {
                expected: self.n_features(),
                got: data.n_cols(),
            });
        }
        let mut total = 0usize;
        for row in data.rows() {
            let mut seen = HashSet::new();
            let mut node = &self.root;
            while let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                seen.insert((*feature, threshold.to_bits()));
                node = if row[*feature] <= *threshold { left } else { right };
            }
            total += seen.len();
        }
        Ok(total as f64 / data.n_rows() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeDocument::from_tree(self)).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_str(text)?;
        doc.into_tree()
    }
}

/// Flat JSON form: nodes in preorder with explicit ids and child links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TreeDocument {
    pub columns: Vec<ColumnInfo>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NodeRecord {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<[u64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl TreeDocument {
    pub fn from_tree(tree: &DecisionTree) -> Self {
        TreeDocument {
            columns: tree.columns.clone(),
            nodes: node_records(&tree.root, &tree.columns),
        }
    }

    pub fn into_tree(self) -> Result<DecisionTree> {
        let root = node_from_records(&self.nodes)?;
        DecisionTree::new(root, self.columns)
    }
}

/// Preorder records for a bare node tree.
pub(crate) fn node_records(root: &TreeNode, columns: &[ColumnInfo]) -> Vec<NodeRecord> {
    let mut nodes = Vec::new();
    flatten(root, columns, &mut nodes);
    nodes
}

pub(crate) fn node_from_records(nodes: &[NodeRecord]) -> Result<TreeNode> {
    if nodes.is_empty() {
        return Err(Error::MalformedModel("tree has no nodes".into()));
    }
    let mut visited = vec![false; nodes.len()];
    rebuild(nodes, 0, &mut visited)
}

fn flatten(node: &TreeNode, columns: &[ColumnInfo], out: &mut Vec<NodeRecord>) -> usize {
    let id = out.len();
    out.push(NodeRecord {
        id,
        feature: None,
        feature_name: None,
        threshold: None,
        left: None,
        right: None,
        class_counts: None,
        probability: None,
        value: None,
    });
    match node {
        TreeNode::Leaf(Leaf::Class { counts }) => {
            out[id].class_counts = Some(*counts);
            out[id].probability = Some(node_output(node));
        }
        TreeNode::Leaf(Leaf::Value(v)) => out[id].value = Some(*v),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let l = flatten(left, columns, out);
            let r = flatten(right, columns, out);
            let rec = &mut out[id];
            rec.feature = Some(*feature);
            rec.feature_name = columns.get(*feature).map(|c| c.name.clone());
            rec.threshold = Some(*threshold);
            rec.left = Some(l);
            rec.right = Some(r);
        }
    }
    id
}

fn node_output(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf(l) => l.output(),
        TreeNode::Split { .. } => f64::NAN,
    }
}

fn rebuild(nodes: &[NodeRecord], id: usize, visited: &mut [bool]) -> Result<TreeNode> {
    let rec = nodes
        .get(id)
        .filter(|r| r.id == id)
        .ok_or_else(|| Error::MalformedModel(format!("node {id} missing or out of order")))?;
    if std::mem::replace(&mut visited[id], true) {
        return Err(Error::MalformedModel(format!("node {id} referenced twice")));
    }
    match (rec.feature, rec.threshold, rec.left, rec.right, rec.class_counts, rec.value) {
        (Some(f), Some(t), Some(l), Some(r), None, None) => Ok(TreeNode::split(
            f,
            t,
            rebuild(nodes, l, visited)?,
            rebuild(nodes, r, visited)?,
        )),
        (None, None, None, None, Some(c), None) if c[0] + c[1] > 0 => {
            Ok(TreeNode::Leaf(Leaf::Class { counts: c }))
        }
        (None, None, None, None, None, Some(v)) => Ok(TreeNode::Leaf(Leaf::Value(v))),
        _ => Err(Error::MalformedModel(format!("node {id} is neither a split nor a leaf"))),
    }
}
