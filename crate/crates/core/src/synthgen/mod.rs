//! Seeded synthetic household data with planted assignment rules,
//! caseworker discretion and counterfactual reentry outcomes.

mod config;
mod generate;
mod truth;

pub use config::{
    CoefficientEntry, ContinuousDist, DiscretionConfig, GeneratorConfig, HouseholdDist, Marginals, OutcomeModel,
    PlantedRule, RuleCondition, Targeting, BENCHMARK_CONFIG_JSON,
};
pub use generate::generate;
pub use truth::{bayes_auc, bayes_auc_subset, GroundTruth, GroundTruthRow};
