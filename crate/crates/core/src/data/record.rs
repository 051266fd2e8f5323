use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schema::{FeatureKind, Schema};
use crate::error::{Error, Result};

/// Service a household was assigned. Variants are declared in increasing
/// order of intensity, so the derived `Ord` is the tie-breaking order
/// `Prev < ES < RRH < TH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intervention {
    #[serde(rename = "Prev")]
    Prev,
    #[serde(rename = "ES")]
    Es,
    #[serde(rename = "RRH")]
    Rrh,
    #[serde(rename = "TH")]
    Th,
}

impl Intervention {
    /// Reporting order used in tables: ES, TH, RRH, Prev.
    pub const ALL: [Intervention; 4] = [
        Intervention::Es,
        Intervention::Th,
        Intervention::Rrh,
        Intervention::Prev,
    ];

    /// Least to most intensive.
    pub const BY_INTENSITY: [Intervention; 4] = [
        Intervention::Prev,
        Intervention::Es,
        Intervention::Rrh,
        Intervention::Th,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Intervention::Es => "ES",
            Intervention::Th => "TH",
            Intervention::Rrh => "RRH",
            Intervention::Prev => "Prev",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Intervention::Es => "Emergency Shelter",
            Intervention::Th => "Transitional Housing",
            Intervention::Rrh => "Rapid Re-Housing",
            Intervention::Prev => "Prevention",
        }
    }

    /// Dense index in `ALL` order.
    pub fn index(self) -> usize {
        match self {
            Intervention::Es => 0,
            Intervention::Th => 1,
            Intervention::Rrh => 2,
            Intervention::Prev => 3,
        }
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Error returned when parsing an intervention code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseInterventionError {
    /// Permanent supportive housing: valid HMIS code, excluded here.
    Excluded,
    Unknown(String),
}

impl FromStr for Intervention {
    type Err = ParseInterventionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ES" => Ok(Intervention::Es),
            "TH" => Ok(Intervention::Th),
            "RRH" => Ok(Intervention::Rrh),
            "Prev" | "PREV" => Ok(Intervention::Prev),
            "PSH" => Err(ParseInterventionError::Excluded),
            other => Err(ParseInterventionError::Unknown(other.to_string())),
        }
    }
}

/// One raw feature value. Categorical levels are stored as indices into
/// the schema's declared level list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Missing,
    Flag(bool),
    Level(u16),
    Number(f64),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match *self {
            Value::Number(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match *self {
            Value::Flag(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_level(&self) -> Option<usize> {
        match *self {
            Value::Level(l) => Some(l as usize),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub id: String,
    /// One entry per schema feature, in schema order.
    pub values: Vec<Value>,
    pub actual: Intervention,
    pub p_reentry_es: Option<f64>,
    pub p_reentry_th: Option<f64>,
}

impl HouseholdRecord {
    /// All features missing, labelled ES.
    pub fn blank(id: impl Into<String>, schema: &Schema) -> Self {
        HouseholdRecord {
            id: id.into(),
            values: vec![Value::Missing; schema.len()],
            actual: Intervention::Es,
            p_reentry_es: None,
            p_reentry_th: None,
        }
    }

    pub fn value(&self, schema: &Schema, name: &str) -> Option<Value> {
        schema.index_of(name).and_then(|i| self.values.get(i).copied())
    }

    pub fn set(&mut self, schema: &Schema, name: &str, value: Value) -> Result<()> {
        let i = schema.index_of(name).ok_or_else(|| Error::MissingColumn { name: name.to_string() })?;
        self.values[i] = value;
        Ok(())
    }

    /// Sets a categorical feature by level name.
    pub fn set_level(&mut self, schema: &Schema, name: &str, level: &str) -> Result<()> {
        let spec = schema.get(name).ok_or_else(|| Error::MissingColumn { name: name.to_string() })?;
        let l = spec.level_index(level).ok_or_else(|| Error::UnknownCategoryLevel {
            row: 0,
            column: name.to_string(),
            value: level.to_string(),
        })?;
        self.set(schema, name, Value::Level(l as u16))
    }

    /// Checks value kinds and level indices against `schema`.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "record `{}` has {} values, schema has {} features",
                self.id,
                self.values.len(),
                schema.len()
            )));
        }
        for (spec, value) in schema.features.iter().zip(&self.values) {
            let ok = match (&spec.kind, value) {
                (_, Value::Missing) => true,
                (FeatureKind::Binary { .. }, Value::Flag(_)) => true,
                (FeatureKind::Continuous, Value::Number(x)) => x.is_finite(),
                (FeatureKind::Categorical { levels, .. }, Value::Level(l)) => (*l as usize) < levels.len(),
                _ => false,
            };
            if !ok {
                return Err(Error::SchemaMismatch(format!(
                    "record `{}`: value {:?} does not fit feature `{}`",
                    self.id, value, spec.name
                )));
            }
        }
        for p in [self.p_reentry_es, self.p_reentry_th].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::SchemaMismatch(format!(
                    "record `{}`: reentry probability {p} outside [0,1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Calls per day waited. A zero wait counts as one day, so same-day callers
/// score their raw call count.
pub fn urgency_ratio(calls: f64, wait_days: f64) -> f64 {
    calls / wait_days.max(1.0)
}

/// Boolean one-vs-all target vector.
pub fn binarize(labels: &[Intervention], target: Intervention) -> Vec<u8> {
    labels.iter().map(|&l| u8::from(l == target)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Intervention::*;

    #[test]
    fn intensity_order() {
        assert!(Prev < Es && Es < Rrh && Rrh < Th);
        let mut v = Intervention::ALL.to_vec();
        v.sort();
        assert_eq!(v, Intervention::BY_INTENSITY);
    }

    #[test]
    fn parse_codes() {
        for i in Intervention::ALL {
            assert_eq!(i.code().parse::<Intervention>().unwrap(), i);
        }
        assert_eq!("PSH".parse::<Intervention>(), Err(ParseInterventionError::Excluded));
        assert!(matches!("XX".parse::<Intervention>(), Err(ParseInterventionError::Unknown(_))));
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[Es, Th, Es], Es), vec![1, 0, 1]);
        assert_eq!(binarize(&[Es, Th, Es], Rrh), vec![0, 0, 0]);
    }

    #[test]
    fn zero_wait_ratio_is_call_count() {
        assert_eq!(urgency_ratio(4.0, 0.0), 4.0);
        assert_eq!(urgency_ratio(4.0, 8.0), 0.5);
    }
}
