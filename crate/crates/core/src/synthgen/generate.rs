use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, LogNormal, Normal};
use rayon::prelude::*;

use super::config::{ContinuousDist, GeneratorConfig, RuleCondition, Targeting};
use super::truth::{GroundTruth, GroundTruthRow};
use crate::boosted::sigmoid;
use crate::data::{one_hot_encode, urgency_ratio, EncodedDataset, FeatureKind, HouseholdRecord, Intervention, Schema, Value};
use crate::error::{Error, Result};
use crate::scoring::VulnerabilityScorer;
use crate::seeds;

const CALIBRATION_ROUNDS: usize = 2000;
const CALIBRATION_TOL: f64 = 1e-10;

/// Random stream ids per record.
const FEATURE_STREAM: u64 = 0;
const LABEL_STREAM: u64 = 1;

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

enum Sampler {
    Flag(f64),
    Levels(WeightedIndex<f64>),
    Normal { dist: Normal<f64>, min: f64, max: f64 },
    Geometric(Option<Geometric>),
    Income { zero_share: f64, dist: LogNormal<f64> },
    Derived,
}

fn geometric(mean: f64) -> Result<Option<Geometric>> {
    if mean == 0.0 {
        return Ok(None);
    }
    Geometric::new(1.0 / (1.0 + mean))
        .map(Some)
        .map_err(|e| invalid(format!("geometric mean {mean}: {e}")))
}

fn draw_count(g: &Option<Geometric>, rng: &mut ChaCha8Rng) -> f64 {
    g.as_ref().map_or(0.0, |g| g.sample(rng) as f64)
}

struct HouseholdSampler {
    p_children: f64,
    extra_children: Option<Geometric>,
    unrelated_children: Option<Geometric>,
    unrelated_adults: Option<Geometric>,
}

struct FeatureSampler {
    samplers: Vec<Sampler>,
    household: HouseholdSampler,
    idx: BTreeMap<&'static str, usize>,
}

impl FeatureSampler {
    fn new(cfg: &GeneratorConfig, schema: &Schema) -> Result<Self> {
        let m = &cfg.marginals;
        let mut samplers = Vec::with_capacity(schema.len());
        for f in &schema.features {
            let name = f.name.as_str();
            let s = match &f.kind {
                FeatureKind::Binary { .. } => Sampler::Flag(m.binary[name]),
                FeatureKind::Categorical { levels, .. } => {
                    let weights: Vec<f64> = if let Some(p_yes) = m.yes_no.get(name) {
                        let other: f64 = m.yes_no_other.values().sum();
                        levels
                            .iter()
                            .map(|l| match l.as_str() {
                                "Yes" => *p_yes,
                                "No" => 1.0 - p_yes - other,
                                l => m.yes_no_other.get(l).copied().unwrap_or(0.0),
                            })
                            .collect()
                    } else {
                        let w = &m.categorical[name];
                        levels.iter().map(|l| w.get(l).copied().unwrap_or(0.0)).collect()
                    };
                    Sampler::Levels(WeightedIndex::new(weights).map_err(|e| invalid(format!("`{name}` weights: {e}")))?)
                }
                FeatureKind::Continuous => match m.continuous.get(name) {
                    None => Sampler::Derived,
                    Some(&ContinuousDist::Normal { mean, sd, min, max }) => Sampler::Normal {
                        dist: Normal::new(mean, sd).map_err(|e| invalid(format!("`{name}`: {e}")))?,
                        min,
                        max,
                    },
                    Some(&ContinuousDist::Geometric { mean }) => Sampler::Geometric(geometric(mean)?),
                    Some(&ContinuousDist::ZeroInflatedLogNormal {
                        zero_share,
                        median,
                        sigma,
                    }) => Sampler::Income {
                        zero_share,
                        dist: LogNormal::new(median.ln(), sigma).map_err(|e| invalid(format!("`{name}`: {e}")))?,
                    },
                },
            };
            samplers.push(s);
        }
        let h = &m.household;
        let mut idx = BTreeMap::new();
        for name in super::config::DERIVED.iter().chain(&["Calls", "Wait", "SpousePresent"]) {
            let i = schema
                .index_of(name)
                .ok_or_else(|| invalid(format!("schema lacks household feature `{name}`")))?;
            idx.insert(*name, i);
        }
        Ok(FeatureSampler {
            samplers,
            household: HouseholdSampler {
                p_children: h.p_children,
                extra_children: geometric(h.mean_extra_children)?,
                unrelated_children: geometric(h.unrelated_children_mean)?,
                unrelated_adults: geometric(h.unrelated_adults_mean)?,
            },
            idx,
        })
    }

    fn sample(&self, id: String, schema: &Schema, rng: &mut ChaCha8Rng) -> HouseholdRecord {
        let mut rec = HouseholdRecord::blank(id, schema);
        for (j, s) in self.samplers.iter().enumerate() {
            rec.values[j] = match s {
                Sampler::Flag(p) => Value::Flag(rng.random::<f64>() < *p),
                Sampler::Levels(w) => Value::Level(w.sample(rng) as u16),
                Sampler::Normal { dist, min, max } => Value::Number(dist.sample(rng).round().clamp(*min, *max)),
                Sampler::Geometric(g) => Value::Number(draw_count(g, rng)),
                Sampler::Income { zero_share, dist } => {
                    let x = if rng.random::<f64>() < *zero_share {
                        0.0
                    } else {
                        dist.sample(rng).round()
                    };
                    Value::Number(x)
                }
                Sampler::Derived => Value::Missing,
            };
        }

        let h = &self.household;
        let children = if rng.random::<f64>() < h.p_children {
            1.0 + draw_count(&h.extra_children, rng)
        } else {
            0.0
        };
        let mut bands = [0.0; 5];
        for _ in 0..children as usize {
            let age: u32 = rng.random_range(0..=17);
            let b = match age {
                0..=2 => 0,
                3..=5 => 1,
                6..=10 => 2,
                11..=14 => 3,
                _ => 4,
            };
            bands[b] += 1.0;
        }
        let unrelated_children = draw_count(&h.unrelated_children, rng);
        let unrelated_adults = draw_count(&h.unrelated_adults, rng);
        let number = |name: &str| rec.values[self.idx[name]].as_number().unwrap_or(0.0);
        let spouse = rec.values[self.idx["SpousePresent"]].as_flag() == Some(true);
        let ratio = urgency_ratio(number("Calls"), number("Wait"));
        let members = 1.0 + f64::from(u8::from(spouse)) + children + unrelated_children + unrelated_adults;

        let set = |rec: &mut HouseholdRecord, name: &str, x: f64| {
            let j = self.idx[name];
            if matches!(self.samplers[j], Sampler::Derived) {
                rec.values[j] = Value::Number(x);
            }
        };
        set(&mut rec, "RatioOfNumCallstoWaitTime", ratio);
        set(&mut rec, "numMembers", members);
        set(&mut rec, "Children", children);
        for (name, x) in ["Children0_2", "Children3_5", "Children6_10", "Children11_14", "Children15_17"]
            .iter()
            .zip(bands)
        {
            set(&mut rec, name, x);
        }
        set(&mut rec, "UnrelatedChildren", unrelated_children);
        set(&mut rec, "UnrelatedAdults", unrelated_adults);
        rec
    }
}

/// A linear term over one encoded column; `inverted` terms use `1 - x`.
#[derive(Debug, Clone, Copy)]
struct Term {
    column: usize,
    beta: f64,
    inverted: bool,
}

fn resolve_column(data: &EncodedDataset, name: &str) -> Result<(usize, bool)> {
    if let Some(j) = data.column_index(name) {
        return Ok((j, false));
    }
    if let Some((feature, level)) = name.split_once('=') {
        if let Some(j) = data.column_index(feature) {
            if let Some([f, t]) = &data.columns[j].labels {
                if level == t {
                    return Ok((j, false));
                }
                if level == f {
                    return Ok((j, true));
                }
            }
        }
    }
    Err(invalid(format!("unknown encoded column `{name}`")))
}

fn linear(terms: &[Term], row: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let x = row[t.column];
            t.beta * if t.inverted { 1.0 - x } else { x }
        })
        .sum()
}

enum Cond {
    Levels { feature: usize, levels: Vec<usize> },
    Flag { feature: usize, value: bool },
    Le { feature: usize, value: f64 },
    Gt { feature: usize, value: f64 },
}

impl Cond {
    fn compile(c: &RuleCondition, schema: &Schema) -> Result<Self> {
        let feature = schema
            .index_of(c.feature())
            .ok_or_else(|| invalid(format!("unknown feature `{}`", c.feature())))?;
        let spec = &schema.features[feature];
        let level_of = |level: &str| -> Result<Cond> {
            match &spec.kind {
                FeatureKind::Binary { labels: Some(ls) } if ls.iter().any(|l| l == level) => Ok(Cond::Flag {
                    feature,
                    value: ls[1] == level,
                }),
                _ => spec
                    .level_index(level)
                    .map(|l| Cond::Levels { feature, levels: vec![l] })
                    .ok_or_else(|| invalid(format!("`{}` has no level `{level}`", spec.name))),
            }
        };
        match c {
            RuleCondition::Is { level, .. } => level_of(level),
            RuleCondition::In { levels, .. } => {
                let levels = levels
                    .iter()
                    .map(|l| {
                        spec.level_index(l)
                            .ok_or_else(|| invalid(format!("`{}` has no level `{l}`", spec.name)))
                    })
                    .collect::<Result<_>>()?;
                Ok(Cond::Levels { feature, levels })
            }
            RuleCondition::Le { value, .. } => Ok(Cond::Le { feature, value: *value }),
            RuleCondition::Gt { value, .. } => Ok(Cond::Gt { feature, value: *value }),
        }
    }

    fn holds(&self, rec: &HouseholdRecord) -> bool {
        match *self {
            Cond::Levels { feature, ref levels } => rec.values[feature].as_level().is_some_and(|l| levels.contains(&l)),
            Cond::Flag { feature, value } => rec.values[feature].as_flag() == Some(value),
            Cond::Le { feature, value } => rec.values[feature].as_number().is_some_and(|x| x <= value),
            Cond::Gt { feature, value } => rec.values[feature].as_number().is_some_and(|x| x > value),
        }
    }
}

/// Deterministic per-record quantities used before any label is drawn.
struct Prepared {
    /// Indices of planted rules whose conditions hold, in priority order.
    holding: Vec<usize>,
    /// Probability that each intervention is chosen by a rule (`ALL` order).
    rule_mass: [f64; 4],
    /// Probability that no rule fires.
    residual: f64,
    logits: [f64; 4],
    vulnerability: f64,
    benefit: f64,
}

fn softmax(logits: &[f64; 4], intercepts: &[f64; 4]) -> [f64; 4] {
    let z: Vec<f64> = logits.iter().zip(intercepts).map(|(a, b)| a + b).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    [e[0] / s, e[1] / s, e[2] / s, e[3] / s]
}

fn pre_probs(p: &Prepared, intercepts: &[f64; 4]) -> [f64; 4] {
    let sm = softmax(&p.logits, intercepts);
    let mut out = p.rule_mass;
    for k in 0..4 {
        out[k] += p.residual * sm[k];
    }
    out
}

/// Pre-discretion shares that become `target` after symmetric ES/TH flips
/// at `rate`.
pub(crate) fn pre_discretion_targets(target: &[f64; 4], rate: f64) -> [f64; 4] {
    let (es, th) = (Intervention::Es.index(), Intervention::Th.index());
    let mut out = *target;
    out[es] = ((1.0 - rate) * target[es] - rate * target[th]) / (1.0 - 2.0 * rate);
    out[th] = ((1.0 - rate) * target[th] - rate * target[es]) / (1.0 - 2.0 * rate);
    out
}

fn calibrate(prepared: &[Prepared], start: [f64; 4], target: [f64; 4]) -> Result<[f64; 4]> {
    let n = prepared.len() as f64;
    let mut rule_share = [0.0; 4];
    for p in prepared {
        for k in 0..4 {
            rule_share[k] += p.rule_mass[k] / n;
        }
    }
    for k in 0..4 {
        if target[k] <= rule_share[k] {
            return Err(invalid(format!(
                "planted rules alone assign {:.4} of records to {}, above the target share {:.4}",
                rule_share[k],
                Intervention::ALL[k],
                target[k]
            )));
        }
    }
    let mut b = start;
    for _ in 0..CALIBRATION_ROUNDS {
        let mut soft = [0.0; 4];
        for p in prepared {
            let sm = softmax(&p.logits, &b);
            for k in 0..4 {
                soft[k] += p.residual * sm[k] / n;
            }
        }
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let want = target[k] - rule_share[k];
            worst = worst.max((soft[k] - want).abs());
            b[k] += (want / soft[k]).ln();
        }
        let mean = b.iter().sum::<f64>() / 4.0;
        b.iter_mut().for_each(|x| *x -= mean);
        if worst < CALIBRATION_TOL {
            break;
        }
    }
    Ok(b)
}

fn zscores(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    xs.iter()
        .map(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 })
        .collect()
}

/// Scale `c` such that `sum(mass * min(1, c * w)) = rate * sum(mass)`.
fn flip_scale(mass: &[f64], weights: &[f64], rate: f64) -> f64 {
    let total: f64 = mass.iter().sum();
    if rate <= 0.0 || total <= 0.0 {
        return 0.0;
    }
    let expected = |c: f64| -> f64 { mass.iter().zip(weights).map(|(m, w)| m * (c * w).min(1.0)).sum() };
    let w_min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0 / w_min);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < rate * total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn intercept_array(map: &BTreeMap<Intervention, f64>) -> [f64; 4] {
    let mut b = [0.0; 4];
    for k in Intervention::ALL {
        b[k.index()] = map.get(&k).copied().unwrap_or(0.0);
    }
    b
}

/// Samples `cfg.n` households and their ground truth. Output depends only
/// on `cfg` and `schema`, not on the thread count.
pub fn generate(cfg: &GeneratorConfig, schema: &Schema) -> Result<(Vec<HouseholdRecord>, GroundTruth)> {
    cfg.validate(schema)?;
    let sampler = FeatureSampler::new(cfg, schema)?;
    let mut records: Vec<HouseholdRecord> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds::rng(cfg.seed, &[i as u64, FEATURE_STREAM]);
            sampler.sample(format!("HH{:05}", i + 1), schema, &mut rng)
        })
        .collect();
    let encoded = one_hot_encode(&records, schema)?;

    let mut terms: [Vec<Term>; 4] = Default::default();
    for (k, entries) in &cfg.coefficients {
        for e in entries {
            let (column, inverted) = resolve_column(&encoded, &e.column)?;
            if !(e.odds_ratio > 0.0 && e.odds_ratio.is_finite()) {
                return Err(invalid(format!("odds ratio for `{}` must be positive", e.column)));
            }
            terms[k.index()].push(Term {
                column,
                beta: e.log_odds(),
                inverted,
            });
        }
    }
    let rules: Vec<Vec<Cond>> = cfg
        .planted_rules
        .iter()
        .map(|r| r.conditions.iter().map(|c| Cond::compile(c, schema)).collect())
        .collect::<Result<_>>()?;
    let mut benefit_terms = Vec::new();
    for (name, &w) in &cfg.outcome_model.benefit_weights {
        let (column, inverted) = resolve_column(&encoded, name)?;
        benefit_terms.push(Term {
            column,
            beta: w,
            inverted,
        });
    }
    let scorer = VulnerabilityScorer::standard(schema)?;
    let om = &cfg.outcome_model;

    let prepared: Vec<Prepared> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| -> Result<Prepared> {
            let row = encoded.row(i);
            let holding: Vec<usize> = rules
                .iter()
                .enumerate()
                .filter(|(_, conds)| conds.iter().all(|c| c.holds(rec)))
                .map(|(r, _)| r)
                .collect();
            let mut rule_mass = [0.0; 4];
            let mut residual = 1.0;
            for &r in &holding {
                let rule = &cfg.planted_rules[r];
                rule_mass[rule.intervention.index()] += residual * rule.probability;
                residual *= 1.0 - rule.probability;
            }
            let logits = [
                linear(&terms[0], row),
                linear(&terms[1], row),
                linear(&terms[2], row),
                linear(&terms[3], row),
            ];
            Ok(Prepared {
                holding,
                rule_mass,
                residual,
                logits,
                vulnerability: f64::from(scorer.score(rec)?.total),
                benefit: om.benefit_spread * sigmoid(om.benefit_intercept + linear(&benefit_terms, row)),
            })
        })
        .collect::<Result<_>>()?;

    let d = &cfg.discretion;
    let intercepts = match &cfg.label_shares {
        Some(shares) => {
            let target = pre_discretion_targets(&intercept_array(shares), d.rate);
            calibrate(&prepared, intercept_array(&cfg.intercepts), target)?
        }
        None => intercept_array(&cfg.intercepts),
    };
    let pre: Vec<[f64; 4]> = prepared.iter().map(|p| pre_probs(p, &intercepts)).collect();

    let (es, th) = (Intervention::Es.index(), Intervention::Th.index());
    let z_vs = zscores(&prepared.iter().map(|p| p.vulnerability).collect::<Vec<_>>());
    let z_mb = zscores(&prepared.iter().map(|p| p.benefit).collect::<Vec<_>>());
    let weight = |i: usize, from_es: bool| -> f64 {
        d.targeting
            .iter()
            .map(|t| match t {
                Targeting::Uniform => 1.0,
                Targeting::LowVulnerability => (-d.strength * z_vs[i]).exp(),
                Targeting::HighMbEsToTh if from_es => (d.strength * z_mb[i]).exp(),
                Targeting::HighMbEsToTh => 1.0,
            })
            .product()
    };
    let w_es: Vec<f64> = (0..cfg.n).map(|i| weight(i, true)).collect();
    let w_th: Vec<f64> = (0..cfg.n).map(|i| weight(i, false)).collect();
    let c_es = flip_scale(&pre.iter().map(|p| p[es]).collect::<Vec<_>>(), &w_es, d.rate);
    let c_th = flip_scale(&pre.iter().map(|p| p[th]).collect::<Vec<_>>(), &w_th, d.rate);

    let rows: Vec<(GroundTruthRow, Intervention, f64, f64)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let p = &prepared[i];
            let mut rng = seeds::rng(cfg.seed, &[i as u64, LABEL_STREAM]);
            let f_es = (c_es * w_es[i]).min(1.0);
            let f_th = (c_th * w_th[i]).min(1.0);
            let mut post = pre[i];
            post[es] = pre[i][es] * (1.0 - f_es) + pre[i][th] * f_th;
            post[th] = pre[i][th] * (1.0 - f_th) + pre[i][es] * f_es;

            let mut rule_label = None;
            let mut label = None;
            for &r in &p.holding {
                let rule = &cfg.planted_rules[r];
                if rng.random::<f64>() < rule.probability {
                    rule_label = Some(rule.name.clone());
                    label = Some(rule.intervention);
                    break;
                }
            }
            let pre_label = label.unwrap_or_else(|| {
                let sm = softmax(&p.logits, &intercepts);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = Intervention::ALL[3];
                for k in Intervention::ALL {
                    acc += sm[k.index()];
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                pick
            });
            let u: f64 = rng.random();
            let actual = match pre_label {
                Intervention::Es if u < f_es => Intervention::Th,
                Intervention::Th if u < f_th => Intervention::Es,
                other => other,
            };

            let p_es = (om.base_reentry_es + om.reentry_es_jitter * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0);
            let p_th = (p_es - p.benefit).clamp(0.0, 1.0);
            let obs_es = (p_es + om.noise * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0);
            let obs_th = (p_th + om.noise * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0);
            let row = GroundTruthRow {
                id: records[i].id.clone(),
                rule_label,
                pre_discretion_label: pre_label,
                actual,
                flipped: actual != pre_label,
                true_assignment_probs: post,
                true_p_reentry_es: p_es,
                true_p_reentry_th: p_th,
                vulnerability: p.vulnerability as u32,
            };
            (row, actual, obs_es, obs_th)
        })
        .collect();

    let mut truth_rows = Vec::with_capacity(cfg.n);
    for (rec, (row, actual, obs_es, obs_th)) in records.iter_mut().zip(rows) {
        rec.actual = actual;
        rec.p_reentry_es = Some(obs_es);
        rec.p_reentry_th = Some(obs_th);
        truth_rows.push(row);
    }
    let truth = GroundTruth {
        rows: truth_rows,
        intercepts: Intervention::ALL.iter().map(|&k| (k, intercepts[k.index()])).collect(),
        flip_scale_es_to_th: c_es,
        flip_scale_th_to_es: c_th,
        planted_features: cfg.planted_rules.iter().fold(BTreeMap::new(), |mut acc, r| {
            let set: &mut BTreeSet<String> = acc.entry(r.intervention).or_default();
            set.extend(r.conditions.iter().map(|c| c.feature().to_string()));
            acc
        }),
    };
    Ok((records, truth))
}

