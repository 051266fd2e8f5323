use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, Intervention, Schema};
use crate::error::{Error, Result};

/// One row of a published odds-ratio table. The log odds ratio is used as
/// the coefficient unless the interval reaches zero, in which case the row
/// is treated as no effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    /// Encoded column (`Age`, `PriorResidence=Other`) or a binary label
    /// (`Gender=Female`).
    pub column: String,
    pub odds_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<f64>,
}

impl CoefficientEntry {
    pub fn log_odds(&self) -> f64 {
        if self.ci_low.is_some_and(|lo| lo <= 0.0) {
            0.0
        } else {
            self.odds_ratio.ln()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RuleCondition {
    /// Categorical level or binary label equality.
    Is { feature: String, level: String },
    In { feature: String, levels: Vec<String> },
    Le { feature: String, value: f64 },
    Gt { feature: String, value: f64 },
}

impl RuleCondition {
    pub fn feature(&self) -> &str {
        match self {
            RuleCondition::Is { feature, .. }
            | RuleCondition::In { feature, .. }
            | RuleCondition::Le { feature, .. }
            | RuleCondition::Gt { feature, .. } => feature,
        }
    }
}

/// `IF all conditions THEN intervention`, taken with `probability` when
/// the conditions hold. Rules are tried in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub name: String,
    pub conditions: Vec<RuleCondition>,
    pub intervention: Intervention,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targeting {
    Uniform,
    /// Lower vulnerability scores are flipped more often, both directions.
    LowVulnerability,
    /// ES-to-TH flips favour households with high marginal benefit.
    HighMbEsToTh,
}

/// Caseworker overrides between ES and TH. `rate` is the expected share
/// of ES-labelled (and, separately, TH-labelled) households that are
/// flipped. Each household's flip weight is the product of the targeting
/// weights `exp(-strength * z_vs)` and, for ES-to-TH, `exp(strength * z_mb)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretionConfig {
    pub rate: f64,
    #[serde(default)]
    pub targeting: Vec<Targeting>,
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_strength() -> f64 {
    1.5
}

impl Default for DiscretionConfig {
    fn default() -> Self {
        DiscretionConfig {
            rate: 0.0,
            targeting: vec![Targeting::Uniform],
            strength: default_strength(),
        }
    }
}

/// Counterfactual reentry: `p_th = clamp(p_es - benefit)` with
/// `benefit = benefit_spread * logistic(benefit_intercept + sum(w * x))`
/// over `benefit_weights` (encoded columns). Observed columns add uniform
/// noise of at most `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub base_reentry_es: f64,
    #[serde(default)]
    pub reentry_es_jitter: f64,
    pub benefit_spread: f64,
    #[serde(default)]
    pub benefit_intercept: f64,
    #[serde(default)]
    pub benefit_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ContinuousDist {
    /// Rounded to an integer, clipped to `[min, max]`.
    Normal { mean: f64, sd: f64, min: f64, max: f64 },
    /// Non-negative integer count with the given mean.
    Geometric { mean: f64 },
    /// Whole dollars: zero with probability `zero_share`, else log-normal.
    ZeroInflatedLogNormal { zero_share: f64, median: f64, sigma: f64 },
}

/// Composition used for `Children`, the age bands, `numMembers` and the
/// unrelated member counts. Child ages are uniform on 0..=17.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdDist {
    pub p_children: f64,
    /// Mean number of children beyond the first.
    pub mean_extra_children: f64,
    pub unrelated_children_mean: f64,
    pub unrelated_adults_mean: f64,
}

/// Independent marginals. `categorical` weights need not sum to one;
/// `yes_no` fields share `yes_no_other` weights for their non-yes/no levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// Probability of the true label per binary feature.
    pub binary: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, BTreeMap<String, f64>>,
    /// Share answering `Yes` per yes/no field; the rest is `No` apart from
    /// `yes_no_other`.
    #[serde(default)]
    pub yes_no: BTreeMap<String, f64>,
    #[serde(default)]
    pub yes_no_other: BTreeMap<String, f64>,
    pub continuous: BTreeMap<String, ContinuousDist>,
    pub household: HouseholdDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// When present, the softmax intercepts are solved so expected final
    /// label shares match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_shares: Option<BTreeMap<Intervention, f64>>,
    #[serde(default)]
    pub intercepts: BTreeMap<Intervention, f64>,
    #[serde(default)]
    pub coefficients: BTreeMap<Intervention, Vec<CoefficientEntry>>,
    #[serde(default)]
    pub planted_rules: Vec<PlantedRule>,
    #[serde(default)]
    pub discretion: DiscretionConfig,
    pub outcome_model: OutcomeModel,
    pub marginals: Marginals,
}

/// Fields derived from others rather than sampled.
pub(crate) const DERIVED: [&str; 10] = [
    "RatioOfNumCallstoWaitTime",
    "numMembers",
    "Children",
    "Children0_2",
    "Children3_5",
    "Children6_10",
    "Children11_14",
    "Children15_17",
    "UnrelatedChildren",
    "UnrelatedAdults",
];

pub const BENCHMARK_CONFIG_JSON: &str = include_str!("../../../../configs/bench_gen.json");

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {p} is not a probability")))
    }
}

impl GeneratorConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("generator config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The frozen benchmark shipped with the crate.
    pub fn benchmark() -> Self {
        Self::from_json(BENCHMARK_CONFIG_JSON).expect("bundled benchmark config is valid")
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be positive".into()));
        }
        if let Some(shares) = &self.label_shares {
            let total: f64 = shares.values().sum();
            if Intervention::ALL.iter().any(|k| !shares.contains_key(k)) || (total - 1.0).abs() > 1e-6 {
                return Err(invalid("label_shares must cover all four interventions and sum to 1".into()));
            }
            for (k, &p) in shares {
                if !(p > 0.0 && p < 1.0) {
                    return Err(invalid(format!("label share for {k} must be in (0, 1)")));
                }
            }
            if self.discretion.rate >= 0.5 {
                return Err(invalid("share calibration needs discretion.rate < 0.5".into()));
            }
        }
        for r in &self.planted_rules {
            probability(&format!("rule `{}` probability", r.name), r.probability)?;
            for c in &r.conditions {
                let spec = schema
                    .get(c.feature())
                    .ok_or_else(|| invalid(format!("rule `{}` uses unknown feature `{}`", r.name, c.feature())))?;
                let check_level = |level: &str| -> Result<()> {
                    let ok = match &spec.kind {
                        FeatureKind::Categorical { levels, .. } => levels.iter().any(|l| l == level),
                        FeatureKind::Binary { labels } => labels.as_ref().is_some_and(|ls| ls.iter().any(|l| l == level)),
                        FeatureKind::Continuous => false,
                    };
                    if ok {
                        Ok(())
                    } else {
                        Err(invalid(format!("rule `{}`: `{}` has no level `{level}`", r.name, spec.name)))
                    }
                };
                match c {
                    RuleCondition::Is { level, .. } => check_level(level)?,
                    RuleCondition::In { levels, .. } => levels.iter().try_for_each(|l| check_level(l))?,
                    RuleCondition::Le { .. } | RuleCondition::Gt { .. } => {
                        if !matches!(spec.kind, FeatureKind::Continuous) {
                            return Err(invalid(format!("rule `{}`: `{}` is not continuous", r.name, spec.name)));
                        }
                    }
                }
            }
        }
        let d = &self.discretion;
        probability("discretion.rate", d.rate)?;
        if !(d.strength >= 0.0 && d.strength.is_finite()) {
            return Err(invalid("discretion.strength must be non-negative".into()));
        }
        let o = &self.outcome_model;
        probability("base_reentry_es", o.base_reentry_es)?;
        probability("benefit_spread", o.benefit_spread)?;
        probability("reentry_es_jitter", o.reentry_es_jitter)?;
        probability("noise", o.noise)?;
        self.validate_marginals(schema)
    }

    fn validate_marginals(&self, schema: &Schema) -> Result<()> {
        let m = &self.marginals;
        for f in &schema.features {
            let name = f.name.as_str();
            let covered = match &f.kind {
                FeatureKind::Binary { .. } => m.binary.contains_key(name),
                FeatureKind::Categorical { .. } => m.categorical.contains_key(name) || m.yes_no.contains_key(name),
                FeatureKind::Continuous => m.continuous.contains_key(name) || DERIVED.contains(&name),
            };
            if !covered {
                return Err(invalid(format!("no marginal for feature `{name}`")));
            }
        }
        for (name, &p) in &m.binary {
            probability(name, p)?;
        }
        for (name, weights) in &m.categorical {
            let spec = schema.get(name).ok_or_else(|| invalid(format!("unknown feature `{name}`")))?;
            for (level, &w) in weights {
                if spec.level_index(level).is_none() {
                    return Err(invalid(format!("`{name}` has no level `{level}`")));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(invalid(format!("weight for `{name}={level}` must be non-negative")));
                }
            }
            if weights.values().sum::<f64>() <= 0.0 {
                return Err(invalid(format!("`{name}` weights sum to zero")));
            }
        }
        let other: f64 = m.yes_no_other.values().sum();
        for (name, &p) in &m.yes_no {
            let spec = schema.get(name).ok_or_else(|| invalid(format!("unknown feature `{name}`")))?;
            for level in m.yes_no_other.keys().map(String::as_str).chain(["Yes", "No"]) {
                if spec.level_index(level).is_none() {
                    return Err(invalid(format!("`{name}` has no level `{level}`")));
                }
            }
            if !(0.0..=1.0 - other).contains(&p) {
                return Err(invalid(format!("`{name}` yes share {p} leaves no room for the other levels")));
            }
        }
        for (name, d) in &m.continuous {
            if DERIVED.contains(&name.as_str()) {
                return Err(invalid(format!("`{name}` is derived and cannot have a marginal")));
            }
            let ok = match *d {
                ContinuousDist::Normal { sd, min, max, .. } => sd >= 0.0 && min <= max,
                ContinuousDist::Geometric { mean } => mean >= 0.0,
                ContinuousDist::ZeroInflatedLogNormal {
                    zero_share,
                    median,
                    sigma,
                } => (0.0..=1.0).contains(&zero_share) && median > 0.0 && sigma >= 0.0,
            };
            if !ok {
                return Err(invalid(format!("bad distribution for `{name}`")));
            }
        }
        let h = &m.household;
        probability("household.p_children", h.p_children)?;
        if h.mean_extra_children < 0.0 || h.unrelated_children_mean < 0.0 || h.unrelated_adults_mean < 0.0 {
            return Err(invalid("household means must be non-negative".into()));
        }
        Ok(())
    }
}
