//! Rule-based vulnerability score and the marginal benefit of TH over ES.

mod rules;
mod score;

pub use rules::{
    CmpOp, Predicate, RuleGroup, RuleSet, Term, VulnerabilityRule, PRISON_LEVEL, SERVICE_FIELDS, SHELTER_LEVELS,
};
pub use score::{marginal_benefit, vulnerability_score, write_scores_csv, ScoreBreakdown, VulnerabilityScorer, MAX_SCORE};
