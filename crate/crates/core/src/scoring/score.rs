use std::io::Write;

use serde::{Deserialize, Serialize};

use super::rules::{CmpOp, Predicate, RuleSet};
use crate::data::{FeatureKind, HouseholdRecord, Schema, Value};
use crate::error::{Error, Result};

/// Highest total under the standard rule set.
pub const MAX_SCORE: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub total: u32,
    pub fired_rule_ids: Vec<String>,
}

/// Predicate with field names resolved to schema positions.
#[derive(Debug, Clone)]
enum Compiled {
    Affirmative(usize, Vec<bool>),
    Flag(usize, bool),
    LevelIn(usize, Vec<bool>),
    Linear(Vec<(usize, f64)>, CmpOp, f64),
    All(Vec<Compiled>),
    Any(Vec<Compiled>),
    Not(Box<Compiled>),
}

fn mismatch(msg: String) -> Error {
    Error::SchemaMismatch(msg)
}

fn compile(p: &Predicate, schema: &Schema) -> Result<Compiled> {
    let index = |field: &str| {
        schema
            .index_of(field)
            .ok_or_else(|| mismatch(format!("rule field `{field}` is not in the schema")))
    };
    Ok(match p {
        Predicate::Affirmative { field } => {
            let i = index(field)?;
            match &schema.features[i].kind {
                FeatureKind::Categorical { levels, .. } => {
                    let spec = &schema.features[i];
                    Compiled::Affirmative(i, (0..levels.len()).map(|l| spec.is_affirmative(l)).collect())
                }
                FeatureKind::Binary { .. } => Compiled::Flag(i, true),
                FeatureKind::Continuous => {
                    return Err(mismatch(format!("`{field}` is continuous; affirmative needs a categorical or binary field")))
                }
            }
        }
        Predicate::Flag { field, value } => {
            let i = index(field)?;
            if !matches!(schema.features[i].kind, FeatureKind::Binary { .. }) {
                return Err(mismatch(format!("`{field}` is not binary")));
            }
            Compiled::Flag(i, *value)
        }
        Predicate::LevelIn { field, levels } => {
            let i = index(field)?;
            let spec = &schema.features[i];
            let all = spec
                .levels()
                .ok_or_else(|| mismatch(format!("`{field}` is not categorical")))?;
            let mut mask = vec![false; all.len()];
            for l in levels {
                let k = spec
                    .level_index(l)
                    .ok_or_else(|| mismatch(format!("`{field}` has no level `{l}`")))?;
                mask[k] = true;
            }
            Compiled::LevelIn(i, mask)
        }
        Predicate::Linear { terms, op, value } => {
            let mut out = Vec::with_capacity(terms.len());
            for t in terms {
                let i = index(&t.field)?;
                if !matches!(schema.features[i].kind, FeatureKind::Continuous) {
                    return Err(mismatch(format!("`{}` is not continuous", t.field)));
                }
                out.push((i, t.coef));
            }
            Compiled::Linear(out, *op, *value)
        }
        Predicate::All { of } => Compiled::All(of.iter().map(|q| compile(q, schema)).collect::<Result<_>>()?),
        Predicate::Any { of } => Compiled::Any(of.iter().map(|q| compile(q, schema)).collect::<Result<_>>()?),
        Predicate::Not { of } => Compiled::Not(Box::new(compile(of, schema)?)),
    })
}

/// Kleene evaluation; `None` is unknown.
fn eval(p: &Compiled, values: &[Value]) -> Option<bool> {
    match p {
        Compiled::Affirmative(i, mask) | Compiled::LevelIn(i, mask) => values[*i].as_level().map(|l| mask[l]),
        Compiled::Flag(i, want) => values[*i].as_flag().map(|b| b == *want),
        Compiled::Linear(terms, op, rhs) => {
            let mut sum = 0.0;
            for &(i, c) in terms {
                sum += c * values[i].as_number()?;
            }
            Some(op.holds(sum, *rhs))
        }
        Compiled::All(ps) => {
            let mut unknown = false;
            for q in ps {
                match eval(q, values) {
                    Some(false) => return Some(false),
                    None => unknown = true,
                    Some(true) => {}
                }
            }
            if unknown {
                None
            } else {
                Some(true)
            }
        }
        Compiled::Any(ps) => {
            let mut unknown = false;
            for q in ps {
                match eval(q, values) {
                    Some(true) => return Some(true),
                    None => unknown = true,
                    Some(false) => {}
                }
            }
            if unknown {
                None
            } else {
                Some(false)
            }
        }
        Compiled::Not(q) => eval(q, values).map(|b| !b),
    }
}

/// A rule set bound to a schema.
#[derive(Debug, Clone)]
pub struct VulnerabilityScorer {
    rules: Vec<(String, u32, Compiled)>,
    schema: Schema,
}

impl VulnerabilityScorer {
    pub fn new(rules: &RuleSet, schema: &Schema) -> Result<Self> {
        let compiled = rules
            .rules
            .iter()
            .map(|r| Ok((r.id.clone(), r.points, compile(&r.predicate, schema)?)))
            .collect::<Result<_>>()?;
        Ok(VulnerabilityScorer {
            rules: compiled,
            schema: schema.clone(),
        })
    }

    pub fn standard(schema: &Schema) -> Result<Self> {
        Self::new(&RuleSet::standard(), schema)
    }

    pub fn score(&self, record: &HouseholdRecord) -> Result<ScoreBreakdown> {
        record.check(&self.schema)?;
        let mut total = 0;
        let mut fired = Vec::new();
        for (id, points, p) in &self.rules {
            if eval(p, &record.values) == Some(true) {
                total += points;
                fired.push(id.clone());
            }
        }
        Ok(ScoreBreakdown {
            total,
            fired_rule_ids: fired,
        })
    }

    pub fn score_all(&self, records: &[HouseholdRecord]) -> Result<Vec<ScoreBreakdown>> {
        records.iter().map(|r| self.score(r)).collect()
    }
}

/// Standard rule set against the record's schema.
pub fn vulnerability_score(record: &HouseholdRecord, schema: &Schema) -> Result<ScoreBreakdown> {
    VulnerabilityScorer::standard(schema)?.score(record)
}

/// Reduction in reentry probability from TH instead of ES.
pub fn marginal_benefit(record: &HouseholdRecord) -> Result<f64> {
    match (record.p_reentry_es, record.p_reentry_th) {
        (Some(es), Some(th)) => Ok(es - th),
        _ => Err(Error::MissingCounterfactuals(record.id.clone())),
    }
}

/// `HouseholdID,VulnerabilityScore,FiredRules,MarginalBenefit`; the benefit
/// is blank when counterfactuals are absent.
pub fn write_scores_csv<W: Write>(writer: W, records: &[HouseholdRecord], scores: &[ScoreBreakdown]) -> Result<()> {
    if records.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: scores.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["HouseholdID", "VulnerabilityScore", "FiredRules", "MarginalBenefit"])?;
    for (r, s) in records.iter().zip(scores) {
        w.write_record([
            r.id.clone(),
            s.total.to_string(),
            s.fired_rule_ids.join(";"),
            marginal_benefit(r).map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}
