use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleGroup {
    Family,
    History,
    Risks,
    Wellness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ge,
    Gt,
    Le,
    Lt,
}

impl CmpOp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Lt => lhs < rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub field: String,
    pub coef: f64,
}

/// Condition over raw record fields. Evaluation is three-valued: a
/// predicate that needs a missing field is unknown, and a rule fires only
/// when its predicate is definitely true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predicate {
    /// Categorical value in the schema's affirmative set, or a binary
    /// value that is true.
    Affirmative { field: String },
    Flag { field: String, value: bool },
    LevelIn { field: String, levels: Vec<String> },
    /// `sum(coef * field) op value` over continuous fields.
    Linear { terms: Vec<Term>, op: CmpOp, value: f64 },
    All { of: Vec<Predicate> },
    Any { of: Vec<Predicate> },
    Not { of: Box<Predicate> },
}

impl Predicate {
    pub fn affirmative(field: &str) -> Self {
        Predicate::Affirmative { field: field.into() }
    }

    pub fn flag(field: &str, value: bool) -> Self {
        Predicate::Flag {
            field: field.into(),
            value,
        }
    }

    pub fn level_in(field: &str, levels: &[&str]) -> Self {
        Predicate::LevelIn {
            field: field.into(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn linear(terms: &[(&str, f64)], op: CmpOp, value: f64) -> Self {
        Predicate::Linear {
            terms: terms
                .iter()
                .map(|&(f, c)| Term {
                    field: f.into(),
                    coef: c,
                })
                .collect(),
            op,
            value,
        }
    }

    pub fn not(p: Predicate) -> Self {
        Predicate::Not { of: Box::new(p) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityRule {
    pub id: String,
    pub group: RuleGroup,
    pub description: String,
    pub predicate: Predicate,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<VulnerabilityRule>,
}

pub const PRISON_LEVEL: &str = "Jail, prison or juvenile detention facility";

/// Residences that already count as homeless-system stays.
pub const SHELTER_LEVELS: [&str; 3] = [
    "Emergency shelter",
    "Transitional housing for homeless persons",
    "Safe haven",
];

pub const SERVICE_FIELDS: [&str; 6] = [
    "ReceivePhysicalDisabilityServices",
    "ReceiveDevelopmentalDisabilityServices",
    "ReceiveChronicHealthServices",
    "ReceiveHIVAIDSServices",
    "ReceiveMentalHealthServices",
    "ReceiveSubstanceAbuseServices",
];

/// One adult and no spouse.
fn single_parent() -> Predicate {
    Predicate::All {
        of: vec![
            Predicate::linear(&[("numMembers", 1.0), ("Children", -1.0)], CmpOp::Eq, 1.0),
            Predicate::flag("SpousePresent", false),
        ],
    }
}

impl RuleSet {
    /// The eight-criterion vulnerability table: at most one family point and
    /// two points each for history, risks and wellness.
    pub fn standard() -> Self {
        let rule = |id: &str, group, description: &str, predicate| VulnerabilityRule {
            id: id.into(),
            group,
            description: description.into(),
            predicate,
            points: 1,
        };
        RuleSet {
            rules: vec![
                rule(
                    "family_single_parent",
                    RuleGroup::Family,
                    "Single parent with 2 or more children or a child aged 11 or younger",
                    Predicate::All {
                        of: vec![
                            single_parent(),
                            Predicate::Any {
                                of: vec![
                                    Predicate::linear(&[("Children", 1.0)], CmpOp::Ge, 2.0),
                                    Predicate::linear(
                                        &[("Children0_2", 1.0), ("Children3_5", 1.0), ("Children6_10", 1.0)],
                                        CmpOp::Gt,
                                        0.0,
                                    ),
                                ],
                            },
                        ],
                    },
                ),
                rule(
                    "family_not_single_parent",
                    RuleGroup::Family,
                    "Not a single parent, with 3 or more children or a child aged 6 or younger",
                    Predicate::All {
                        of: vec![
                            Predicate::not(single_parent()),
                            Predicate::Any {
                                of: vec![
                                    Predicate::linear(&[("Children", 1.0)], CmpOp::Ge, 3.0),
                                    Predicate::linear(&[("Children0_2", 1.0), ("Children3_5", 1.0)], CmpOp::Gt, 0.0),
                                ],
                            },
                        ],
                    },
                ),
                rule(
                    "history_prior_residence",
                    RuleGroup::History,
                    "Prior residence other than emergency shelter, transitional housing for homeless persons or safe haven",
                    Predicate::not(Predicate::level_in("PriorResidence", &SHELTER_LEVELS)),
                ),
                rule(
                    "history_chronic",
                    RuleGroup::History,
                    "Chronically homeless",
                    Predicate::flag("HUDChronicHomeless", true),
                ),
                rule(
                    "risks_crisis_service",
                    RuleGroup::Risks,
                    "Received any physical disability, developmental disability, chronic health, HIV/AIDS, mental health or substance abuse services",
                    Predicate::Any {
                        of: SERVICE_FIELDS.iter().map(|f| Predicate::affirmative(f)).collect(),
                    },
                ),
                rule(
                    "risks_prison",
                    RuleGroup::Risks,
                    "Prior residence is prison",
                    Predicate::level_in("PriorResidence", &[PRISON_LEVEL]),
                ),
                rule(
                    "wellness_physical",
                    RuleGroup::Wellness,
                    "Chronic health condition, HIV/AIDS with HIV/AIDS services, disabling condition, developmental disability or substance abuse problem",
                    Predicate::Any {
                        of: vec![
                            Predicate::affirmative("HasChronicHealthCondition"),
                            Predicate::All {
                                of: vec![
                                    Predicate::affirmative("HasHIVAIDS"),
                                    Predicate::affirmative("ReceiveHIVAIDSServices"),
                                ],
                            },
                            Predicate::affirmative("DisablingCondition"),
                            Predicate::affirmative("HasDevelopmentalDisability"),
                            Predicate::affirmative("HasSubstanceAbuseProblem"),
                        ],
                    },
                ),
                rule(
                    "wellness_mental",
                    RuleGroup::Wellness,
                    "Mental health problem or domestic violence survivor",
                    Predicate::Any {
                        of: vec![
                            Predicate::affirmative("HasMentalHealthProblem"),
                            Predicate::affirmative("DomesticViolenceSurvivor"),
                        ],
                    },
                ),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: RuleSet = serde_json::from_str(text)?;
        for r in &set.rules {
            if r.points != 1 {
                return Err(Error::InvalidConfig(format!("rule `{}` awards {} points; every rule awards 1", r.id, r.points)));
            }
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule set serializes")
    }
}
