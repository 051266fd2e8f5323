use std::fmt;
use std::io::Write;

use serde::Serialize;

use super::model::{DecisionTree, Leaf};
use crate::data::{ColumnInfo, ColumnKind};
use crate::error::{Error, Result};

/// One path test, rendered against the original feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub column: usize,
    pub threshold: f64,
    /// `true` for `value <= threshold`.
    pub at_most: bool,
    pub text: String,
}

/// A root-to-leaf path read as `IF conditions THEN class`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    /// Target code for positive leaves, `not <target>` otherwise.
    pub class: String,
    pub positive: bool,
    pub support: u64,
    /// Share of the leaf's rows in the predicted class.
    pub confidence: f64,
    pub probability: f64,
}

impl Rule {
    pub fn condition_text(&self) -> String {
        if self.conditions.is_empty() {
            "always".to_string()
        } else {
            self.conditions
                .iter()
                .map(|c| c.text.as_str())
                .collect::<Vec<_>>()
                .join(" AND ")
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} → {} (support {}, confidence {:.3})",
            self.condition_text(),
            self.class,
            self.support,
            self.confidence
        )
    }
}

fn number(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6;
    format!("{r}")
}

fn with_units(x: f64, units: &str) -> String {
    match units {
        "dollars" => format!("${}", number(x)),
        "days" => format!("{} days", number(x)),
        "years" => format!("{} years", number(x)),
        _ => number(x),
    }
}

fn render(col: &ColumnInfo, threshold: f64, at_most: bool) -> String {
    let membership = threshold > 0.0 && threshold < 1.0;
    match col.kind {
        ColumnKind::OneHot if membership => {
            let level = col.level.as_deref().unwrap_or("?");
            let op = if at_most { "≠" } else { "=" };
            format!("{} {op} {level}", col.feature)
        }
        ColumnKind::Binary if membership => match &col.labels {
            Some([no, yes]) => format!("{} = {}", col.feature, if at_most { no } else { yes }),
            None => format!("{} = {}", col.feature, if at_most { "no" } else { "yes" }),
        },
        _ => {
            let op = if at_most { "≤" } else { ">" };
            format!("{} {op} {}", col.feature, with_units(threshold, &col.units))
        }
    }
}

/// Drops path tests implied by a tighter test on the same column and
/// direction, keeping the first-seen order otherwise.
fn tighten(path: &[(usize, f64, bool)]) -> Vec<(usize, f64, bool)> {
    let mut out: Vec<(usize, f64, bool)> = Vec::new();
    for &(col, t, le) in path {
        if let Some(prev) = out.iter_mut().find(|(c, _, l)| *c == col && *l == le) {
            prev.1 = if le { prev.1.min(t) } else { prev.1.max(t) };
        } else {
            out.push((col, t, le));
        }
    }
    out
}

/// One rule per class leaf holding at least `min_support` training rows,
/// in left-to-right leaf order.
pub fn extract_rules(tree: &DecisionTree, target: &str, min_support: u64) -> Vec<Rule> {
    let mut rules = Vec::new();
    tree.root.visit_leaves(
        &mut |leaf, path| {
            let Leaf::Class { counts } = leaf else {
                return;
            };
            let support = counts[0] + counts[1];
            if support < min_support || support == 0 {
                return;
            }
            let p = leaf.output();
            let positive = p >= 0.5;
            let conditions = tighten(path)
                .into_iter()
                .map(|(column, threshold, at_most)| Condition {
                    column,
                    threshold,
                    at_most,
                    text: render(&tree.columns[column], threshold, at_most),
                })
                .collect();
            rules.push(Rule {
                conditions,
                class: if positive {
                    target.to_string()
                } else {
                    format!("not {target}")
                },
                positive,
                support,
                confidence: if positive { p } else { 1.0 - p },
                probability: p,
            });
        },
        &mut Vec::new(),
    );
    rules
}

pub fn rules_to_text(rules: &[Rule]) -> String {
    let mut s = String::new();
    for r in rules {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

pub fn rules_to_csv<W: Write>(writer: W, rules: &[Rule]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["conditions", "class", "support", "confidence", "probability"])?;
    for r in rules {
        w.write_record([
            r.condition_text(),
            r.class.clone(),
            r.support.to_string(),
            r.confidence.to_string(),
            r.probability.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
