//! One-vs-all resolution, predicted-vs-actual cross tabulation and the
//! resampling analysis of discretionary ES/TH reassignments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{HouseholdRecord, Intervention};
use crate::error::{Error, Result};
use crate::scoring::{marginal_benefit, VulnerabilityScorer};
use crate::seeds;
use crate::stats::{resample_test, PermutationTestResult};

/// Highest score wins; exact ties go to the less intensive intervention.
pub fn resolve_one_vs_all(scores: &BTreeMap<Intervention, f64>) -> Result<Intervention> {
    let mut best: Option<(Intervention, f64)> = None;
    for iv in Intervention::BY_INTENSITY {
        let s = *scores
            .get(&iv)
            .ok_or_else(|| Error::MissingScore(iv.code().to_string()))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("{iv} score {s} outside [0, 1]")));
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((iv, s));
        }
    }
    Ok(best.unwrap().0)
}

/// Resolves row-aligned score columns, one per intervention.
pub fn resolve_all(columns: &BTreeMap<Intervention, Vec<f64>>) -> Result<Vec<Intervention>> {
    let n = columns.values().next().map_or(0, Vec::len);
    for iv in Intervention::ALL {
        let c = columns
            .get(&iv)
            .ok_or_else(|| Error::MissingScore(iv.code().to_string()))?;
        if c.len() != n {
            return Err(Error::LengthMismatch { left: n, right: c.len() });
        }
    }
    (0..n)
        .map(|i| resolve_one_vs_all(&columns.iter().map(|(&k, v)| (k, v[i])).collect()))
        .collect()
}

/// Counts indexed `[predicted][actual]` in ES, TH, RRH, Prev order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub counts: [[u64; 4]; 4],
}

impl CrossTab {
    pub fn get(&self, predicted: Intervention, actual: Intervention) -> u64 {
        self.counts[predicted.index()][actual.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn matched(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn mismatched(&self) -> u64 {
        self.total() - self.matched()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<16}", "predicted\\actual");
        for a in Intervention::ALL {
            let _ = write!(s, "{:>8}", a.code());
        }
        s.push('\n');
        for p in Intervention::ALL {
            let _ = write!(s, "{:<16}", p.code());
            for a in Intervention::ALL {
                let _ = write!(s, "{:>8}", self.get(p, a));
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "total {}, matched {}, mismatched {}",
            self.total(),
            self.matched(),
            self.mismatched()
        );
        s
    }
}

pub fn cross_tab(predicted: &[Intervention], actual: &[Intervention]) -> Result<CrossTab> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    let mut t = CrossTab::default();
    for (p, a) in predicted.iter().zip(actual) {
        t.counts[p.index()][a.index()] += 1;
    }
    Ok(t)
}

/// Row indices of the two discretionary subgroups.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubgroupIndices {
    /// Predicted ES, assigned TH.
    pub es_to_th: Vec<usize>,
    /// Predicted TH, assigned ES.
    pub th_to_es: Vec<usize>,
}

pub fn subgroup_indices(predicted: &[Intervention], actual: &[Intervention]) -> Result<SubgroupIndices> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    let mut g = SubgroupIndices::default();
    for (i, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
        match (p, a) {
            (Intervention::Es, Intervention::Th) => g.es_to_th.push(i),
            (Intervention::Th, Intervention::Es) => g.th_to_es.push(i),
            _ => {}
        }
    }
    Ok(g)
}

/// `(es_to_th, th_to_es)` household ids.
pub fn extract_subgroups(
    predicted: &[Intervention],
    actual: &[Intervention],
    ids: &[String],
) -> Result<(Vec<String>, Vec<String>)> {
    if ids.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: ids.len(),
        });
    }
    let g = subgroup_indices(predicted, actual)?;
    let pick = |v: &[usize]| v.iter().map(|&i| ids[i].clone()).collect();
    Ok((pick(&g.es_to_th), pick(&g.th_to_es)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub n_resamples: usize,
    pub seed: u64,
    /// Draw null groups from the predicted population minus the subgroup.
    #[serde(default)]
    pub exclude_observed: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            n_resamples: 1000,
            seed: 0,
            exclude_observed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretionTests {
    pub es_to_th_vs: PermutationTestResult,
    pub th_to_es_vs: PermutationTestResult,
    pub es_to_th_mb: PermutationTestResult,
    pub th_to_es_mb: PermutationTestResult,
}

impl DiscretionTests {
    /// `(subgroup, metric, source population, result)` in report order.
    pub fn entries(&self) -> [(&'static str, &'static str, &'static str, &PermutationTestResult); 4] {
        [
            ("EStoTH", "VS", "predicted ES", &self.es_to_th_vs),
            ("THtoES", "VS", "predicted TH", &self.th_to_es_vs),
            ("EStoTH", "MB", "predicted ES", &self.es_to_th_mb),
            ("THtoES", "MB", "predicted TH", &self.th_to_es_mb),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretionReport {
    pub crosstab: CrossTab,
    pub subgroup_es_to_th: Vec<String>,
    pub subgroup_th_to_es: Vec<String>,
    pub tests: DiscretionTests,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl DiscretionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.crosstab.to_text();
        let _ = writeln!(
            s,
            "\nEStoTH (predicted ES, assigned TH): {}\nTHtoES (predicted TH, assigned ES): {}\n",
            self.subgroup_es_to_th.len(),
            self.subgroup_th_to_es.len()
        );
        let _ = writeln!(
            s,
            "{:<8}{:<4}{:>14}{:>7}{:>11}{:>10}{:>10}{:>10}{:>12}{:>10}",
            "group", "", "population", "size", "observed", "null p5", "null p50", "null p95", "percentile", "p"
        );
        for (group, metric, pop, t) in self.tests.entries() {
            let mut sorted = t.null_means.clone();
            sorted.sort_by(f64::total_cmp);
            let _ = writeln!(
                s,
                "{:<8}{:<4}{:>14}{:>7}{:>11.4}{:>10.4}{:>10.4}{:>10.4}{:>12.1}{:>10.4}",
                group,
                metric,
                pop,
                t.group_size,
                t.observed_mean,
                quantile(&sorted, 0.05),
                quantile(&sorted, 0.5),
                quantile(&sorted, 0.95),
                t.percentile,
                t.p_two_sided
            );
        }
        s
    }
}

/// Tests each discretionary subgroup's mean vulnerability score and mean
/// marginal benefit against random groups of the same size drawn from all
/// households predicted to receive the subgroup's predicted intervention.
pub fn analyze(
    records: &[HouseholdRecord],
    predicted: &[Intervention],
    scorer: &VulnerabilityScorer,
    cfg: &AnalyzeConfig,
) -> Result<DiscretionReport> {
    if records.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: predicted.len(),
        });
    }
    let actual: Vec<Intervention> = records.iter().map(|r| r.actual).collect();
    let crosstab = cross_tab(predicted, &actual)?;
    let groups = subgroup_indices(predicted, &actual)?;

    let vs: Vec<f64> = scorer
        .score_all(records)?
        .into_iter()
        .map(|b| b.total as f64)
        .collect();

    // population of each source intervention, and the subgroup's positions
    // within it
    let population = |source: Intervention, group: &[usize]| -> (Vec<usize>, Vec<usize>) {
        let members: Vec<usize> = (0..records.len()).filter(|&i| predicted[i] == source).collect();
        let mut pos = vec![usize::MAX; records.len()];
        for (k, &i) in members.iter().enumerate() {
            pos[i] = k;
        }
        (members, group.iter().map(|&i| pos[i]).collect())
    };
    let (es_pop, es_obs) = population(Intervention::Es, &groups.es_to_th);
    let (th_pop, th_obs) = population(Intervention::Th, &groups.th_to_es);

    let mb_of = |members: &[usize]| -> Result<Vec<f64>> { members.iter().map(|&i| marginal_benefit(&records[i])).collect() };
    let es_mb = mb_of(&es_pop)?;
    let th_mb = mb_of(&th_pop)?;
    let es_vs: Vec<f64> = es_pop.iter().map(|&i| vs[i]).collect();
    let th_vs: Vec<f64> = th_pop.iter().map(|&i| vs[i]).collect();

    let run = |k: u64, values: &[f64], obs: &[usize]| {
        resample_test(values, obs, cfg.n_resamples, seeds::derive(cfg.seed, &[k]), cfg.exclude_observed)
    };
    let ((a, b), (c, d)) = rayon::join(
        || (run(0, &es_vs, &es_obs), run(1, &th_vs, &th_obs)),
        || (run(2, &es_mb, &es_obs), run(3, &th_mb, &th_obs)),
    );
    let ids = |g: &[usize]| g.iter().map(|&i| records[i].id.clone()).collect();
    Ok(DiscretionReport {
        crosstab,
        subgroup_es_to_th: ids(&groups.es_to_th),
        subgroup_th_to_es: ids(&groups.th_to_es),
        tests: DiscretionTests {
            es_to_th_vs: a?,
            th_to_es_vs: b?,
            es_to_th_mb: c?,
            th_to_es_mb: d?,
        },
    })
}

#[cfg(test)]
mod tests;
