//! Axis-aligned binary decision trees: greedy CART and the
//! explanation-regularized short-tree learner, plus rule extraction.

mod impurity;
mod learn;
mod model;
mod rules;

pub use impurity::{entropy, gini, Criterion};
pub use learn::{best_split, fit_tree, SplitCandidate, TrainingView, TreeConfig, MIN_DECREASE};
pub(crate) use learn::midpoint;
pub use model::{DecisionTree, Leaf, TreeNode};
pub(crate) use model::{node_from_records, node_records, NodeRecord};
pub use rules::{extract_rules, rules_to_csv, rules_to_text, Condition, Rule};
