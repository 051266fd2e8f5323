use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature is stored in the raw CSV and how it encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Two-valued feature. `labels` names the false and true value, in that
    /// order (e.g. `["Female", "Male"]` for `Gender`); `0`/`1` and
    /// `false`/`true` are always accepted as well.
    Binary {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<[String; 2]>,
    },
    /// Unordered levels, one-hot encoded in declared order. `affirmative`
    /// lists the levels that count as "yes" for rule predicates.
    Categorical {
        levels: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        affirmative: Vec<String>,
    },
    Continuous,
}

/// What to do with a non-empty field that fails to parse as a number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparseablePolicy {
    #[default]
    Error,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    /// Free text: `dollars`, `days`, `years`, `count` or `none`.
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default)]
    pub on_unparseable: UnparseablePolicy,
}

fn default_units() -> String {
    "none".to_string()
}

impl FeatureSpec {
    pub fn binary(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Binary { labels: None },
            units: default_units(),
            on_unparseable: UnparseablePolicy::Error,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
                affirmative: Vec::new(),
            },
            units: default_units(),
            on_unparseable: UnparseablePolicy::Error,
        }
    }

    pub fn continuous(name: &str, units: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            units: units.to_string(),
            on_unparseable: UnparseablePolicy::Error,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels, .. } => Some(levels),
            _ => None,
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels()?.iter().position(|l| l == level)
    }

    /// Number of encoded columns this feature expands to.
    pub fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { levels, .. } => levels.len(),
            _ => 1,
        }
    }

    pub fn is_affirmative(&self, level: usize) -> bool {
        match &self.kind {
            FeatureKind::Categorical {
                levels,
                affirmative,
            } => levels
                .get(level)
                .is_some_and(|l| affirmative.iter().any(|a| a == l)),
            _ => false,
        }
    }
}

/// Ordered feature inventory. Column order of every encoding follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = Schema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::InvalidSchema("empty feature name".into()));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
            if let FeatureKind::Categorical {
                levels,
                affirmative,
            } = &f.kind
            {
                let distinct: HashSet<_> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(Error::InvalidSchema(format!(
                        "`{}` declares duplicate levels",
                        f.name
                    )));
                }
                if levels.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "`{}` needs at least two levels",
                        f.name
                    )));
                }
                if let Some(a) = affirmative.iter().find(|a| !distinct.contains(a)) {
                    return Err(Error::InvalidSchema(format!(
                        "`{}` affirmative level `{a}` is not a declared level",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Total encoded width: binaries + continuous + sum of categorical levels.
    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureSpec::width).sum()
    }

    /// The household schema: 3 binary, 17 categorical and 14 continuous
    /// features. Level lists follow the HMIS data standard of the period;
    /// the level counts per categorical are fixed by the published inventory.
    pub fn household() -> Self {
        Schema::from_json(HOUSEHOLD_SCHEMA_JSON).expect("bundled schema is valid")
    }
}

/// Bundled default schema, also shipped as `configs/schema.json`.
pub const HOUSEHOLD_SCHEMA_JSON: &str = include_str!("../../../../configs/schema.json");
