//! The end-to-end protocol: replicated short trees, tuned CART and boosted
//! models per intervention, replicate consistency, and the discretion
//! analysis driven by the best short trees.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosted::{accuracy, fit_gbt, grid_search, BoostedModel, GbtConfig, GridResult, GridSpec};
use crate::data::{binarize, split_indices, EncodedDataset, HouseholdRecord, Intervention};
use crate::discretion::{analyze, resolve_all, AnalyzeConfig, DiscretionReport};
use crate::error::{Error, Result};
use crate::scoring::VulnerabilityScorer;
use crate::seeds;
use crate::stats::{auc, correlation_matrix, delong_ci, mean_off_diagonal, AucEstimate};
use crate::tree::{fit_tree, Criterion, DecisionTree, TreeConfig};

const SPLIT_STREAM: u64 = 0;
const TREE_STREAM: u64 = 1;
const GRID_STREAM: u64 = 2;
const DISCRETION_STREAM: u64 = 3;

/// Households scored by the discretion analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringPopulation {
    #[default]
    FullData,
    TestSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub split_ratio: f64,
    pub n_replicates: usize,
    /// Draw a fresh train/test split per replicate; otherwise replicates
    /// differ only in the tree seed.
    pub resplit_replicates: bool,
    pub short_tree: TreeConfig,
    pub cart: BTreeMap<Intervention, TreeConfig>,
    pub grid: GridSpec,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub ci_level: f64,
    pub n_resamples: usize,
    pub scoring_population: ScoringPopulation,
    pub exclude_observed: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        use Intervention::*;
        let cart = [
            (Es, TreeConfig::cart(Criterion::Gini, 9, 8, 4)),
            (Th, TreeConfig::cart(Criterion::Gini, 7, 8, 4)),
            (Rrh, TreeConfig::cart(Criterion::Gini, 4, 2, 3)),
            (Prev, TreeConfig::cart(Criterion::Gini, 8, 9, 1)),
        ]
        .into_iter()
        .collect();
        PipelineConfig {
            seed: 0,
            split_ratio: 0.7,
            n_replicates: 10,
            resplit_replicates: false,
            short_tree: TreeConfig::short(),
            cart,
            grid: GridSpec::default(),
            learning_rate: 0.1,
            max_bins: 256,
            ci_level: 0.95,
            n_resamples: 1000,
            scoring_population: ScoringPopulation::FullData,
            exclude_observed: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::InvalidConfig("n_replicates must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("split_ratio {} not in (0, 1)", self.split_ratio)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!("ci_level {} not in (0, 1)", self.ci_level)));
        }
        if self.n_resamples == 0 {
            return Err(Error::InvalidConfig("n_resamples must be positive".into()));
        }
        self.short_tree.validate().map_err(|e| Error::InvalidConfig(format!("short_tree: {e}")))?;
        for k in Intervention::ALL {
            self.cart
                .get(&k)
                .ok_or_else(|| Error::InvalidConfig(format!("no CART settings for {k}")))?
                .validate()
                .map_err(|e| Error::InvalidConfig(format!("cart {k}: {e}")))?;
        }
        self.gbt_base().validate().map_err(|e| Error::InvalidConfig(format!("boosting: {e}")))
    }

    fn gbt_base(&self) -> GbtConfig {
        GbtConfig {
            learning_rate: self.learning_rate,
            max_bins: self.max_bins,
            ..GbtConfig::default()
        }
    }

    /// Train/test rows of replicate `r`. Replicate 0 is the split shared by
    /// the CART and boosted models.
    pub fn split(&self, n: usize, r: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let r = if self.resplit_replicates { r } else { 0 };
        split_indices(n, self.split_ratio, seeds::derive(self.seed, &[SPLIT_STREAM, r as u64]))
    }
}

fn labels_for(data: &EncodedDataset, rows: &[usize], k: Intervention) -> Vec<u8> {
    rows.iter().map(|&i| u8::from(data.labels[i] == k)).collect()
}

#[derive(Debug, Clone)]
pub struct Replicate {
    pub intervention: Intervention,
    pub index: usize,
    pub tree: DecisionTree,
    pub test_auc: f64,
    pub test_accuracy: f64,
    pub test_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ShortTrees {
    pub replicates: BTreeMap<Intervention, Vec<Replicate>>,
}

impl ShortTrees {
    /// Highest test accuracy; the earliest replicate wins ties.
    pub fn best(&self, k: Intervention) -> &Replicate {
        let reps = &self.replicates[&k];
        let mut best = &reps[0];
        for r in &reps[1..] {
            if r.test_accuracy > best.test_accuracy {
                best = r;
            }
        }
        best
    }

    pub fn mean_auc(&self, k: Intervention) -> f64 {
        let reps = &self.replicates[&k];
        reps.iter().map(|r| r.test_auc).sum::<f64>() / reps.len() as f64
    }
}

/// Fits `n_replicates` short trees per intervention, each on its own
/// seeded split with its own tree seed.
pub fn train_short_trees(data: &EncodedDataset, cfg: &PipelineConfig) -> Result<ShortTrees> {
    let jobs: Vec<(Intervention, usize)> = Intervention::ALL
        .iter()
        .flat_map(|&k| (0..cfg.n_replicates).map(move |r| (k, r)))
        .collect();
    let fitted: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(k, r)| -> Result<Replicate> {
            let (train, test) = cfg.split(data.n_rows(), r)?;
            let tree_cfg = cfg
                .short_tree
                .clone()
                .with_seed(seeds::derive(cfg.seed, &[TREE_STREAM, r as u64, k.index() as u64]));
            let tree = fit_tree(&data.subset(&train), &labels_for(data, &train, k), &tree_cfg)?;
            let test_data = data.subset(&test);
            let y = labels_for(data, &test, k);
            let scores = tree.predict_dataset(&test_data)?;
            Ok(Replicate {
                intervention: k,
                index: r,
                tree,
                test_auc: auc(&scores, &y)?,
                test_accuracy: accuracy(&scores, &y),
                test_rows: test,
            })
        })
        .collect::<Result<_>>()?;
    let mut replicates: BTreeMap<Intervention, Vec<Replicate>> = BTreeMap::new();
    for rep in fitted {
        replicates.entry(rep.intervention).or_default().push(rep);
    }
    Ok(ShortTrees { replicates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    ShortTree,
    Cart,
    Boosted,
}

impl ModelFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::ShortTree => "short tree",
            ModelFamily::Cart => "CART",
            ModelFamily::Boosted => "boosted",
        }
    }
}

/// One line of the AUC table. Single-fit families report the same value
/// as mean and best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub intervention: Intervention,
    pub family: ModelFamily,
    pub mean_auc: f64,
    pub best_auc: f64,
    pub ci: AucEstimate,
}

#[derive(Debug, Clone)]
pub struct BoostedFit {
    pub model: BoostedModel,
    pub grid: GridResult,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub short: ShortTrees,
    pub cart: BTreeMap<Intervention, DecisionTree>,
    pub boosted: BTreeMap<Intervention, BoostedFit>,
    /// Test rows of the shared split.
    pub test_rows: Vec<usize>,
    /// Test-set scores per family and intervention (shared split for CART
    /// and boosted; each best replicate's own split for short trees).
    pub test_scores: BTreeMap<(ModelFamily, Intervention), (Vec<f64>, Vec<u8>)>,
    pub rows: Vec<AucRow>,
}

pub fn train_all(data: &EncodedDataset, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let short = train_short_trees(data, cfg)?;
    let (train, test) = cfg.split(data.n_rows(), 0)?;
    let train_data = data.subset(&train);
    let test_data = data.subset(&test);

    let fits: Vec<(Intervention, DecisionTree, BoostedFit)> = Intervention::ALL
        .par_iter()
        .map(|&k| -> Result<_> {
            let y = labels_for(data, &train, k);
            let cart = fit_tree(&train_data, &y, &cfg.cart[&k])?;
            let grid = grid_search(
                &train_data,
                &y,
                &cfg.grid,
                &cfg.gbt_base(),
                seeds::derive(cfg.seed, &[GRID_STREAM, k.index() as u64]),
            )?;
            let model = fit_gbt(
                &train_data,
                &y,
                &GbtConfig {
                    n_estimators: grid.best_n_estimators,
                    max_depth: grid.best_max_depth,
                    ..cfg.gbt_base()
                },
            )?;
            Ok((k, cart, BoostedFit { model, grid }))
        })
        .collect::<Result<_>>()?;

    let mut out = TrainOutcome {
        short,
        cart: BTreeMap::new(),
        boosted: BTreeMap::new(),
        test_rows: test.clone(),
        test_scores: BTreeMap::new(),
        rows: Vec::new(),
    };
    for (k, cart, boosted) in fits {
        let y = labels_for(data, &test, k);
        let best = out.short.best(k);
        let best_y = labels_for(data, &best.test_rows, k);
        let best_scores = best.tree.predict_dataset(&data.subset(&best.test_rows))?;
        let families = [
            (ModelFamily::ShortTree, best_scores, best_y, Some(out.short.mean_auc(k))),
            (ModelFamily::Cart, cart.predict_dataset(&test_data)?, y.clone(), None),
            (ModelFamily::Boosted, boosted.model.predict_dataset(&test_data)?, y, None),
        ];
        for (family, scores, labels, mean) in families {
            let ci = delong_ci(&scores, &labels, cfg.ci_level)?;
            out.rows.push(AucRow {
                intervention: k,
                family,
                mean_auc: mean.unwrap_or(ci.auc),
                best_auc: ci.auc,
                ci,
            });
            out.test_scores.insert((family, k), (scores, labels));
        }
        out.cart.insert(k, cart);
        out.boosted.insert(k, boosted);
    }
    out.rows.sort_by_key(|r| (r.family, r.intervention.index()));
    Ok(out)
}

/// The AUC table, one block per model family.
pub fn auc_table_text(rows: &[AucRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:<12}{:>10}{:>10}   95% CI", "model", "intervention", "mean AUC", "best AUC");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14}{:<12}{:>10.4}{:>10.4}   [{:.4}, {:.4}]",
            r.family.label(),
            r.intervention.code(),
            r.mean_auc,
            r.best_auc,
            r.ci.ci_low,
            r.ci.ci_high
        );
    }
    s
}

pub fn auc_table_csv(rows: &[AucRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "intervention", "mean_auc", "best_auc", "ci_low", "ci_high", "n_pos", "n_neg"])?;
    for r in rows {
        w.write_record([
            r.family.label().to_string(),
            r.intervention.code().to_string(),
            r.mean_auc.to_string(),
            r.best_auc.to_string(),
            r.ci.ci_low.to_string(),
            r.ci.ci_high.to_string(),
            r.ci.n_pos.to_string(),
            r.ci.n_neg.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<auc table>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Spearman matrix of the replicates' scores over every row of `data`.
pub fn consistency_matrix(data: &EncodedDataset, replicates: &[Replicate]) -> Result<Vec<Vec<f64>>> {
    let scores: Vec<Vec<f64>> = replicates
        .par_iter()
        .map(|r| r.tree.predict_dataset(data))
        .collect::<Result<_>>()?;
    correlation_matrix(&scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub intervention: Intervention,
    pub matrix: Vec<Vec<f64>>,
    /// `None` with fewer than two replicates.
    pub mean_off_diagonal: Option<f64>,
}

pub fn consistency(data: &EncodedDataset, short: &ShortTrees) -> Result<Vec<Consistency>> {
    Intervention::ALL
        .iter()
        .map(|&k| {
            let matrix = consistency_matrix(data, &short.replicates[&k])?;
            Ok(Consistency {
                intervention: k,
                mean_off_diagonal: mean_off_diagonal(&matrix),
                matrix,
            })
        })
        .collect()
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Rows scored by the discretion analysis.
pub fn scoring_rows(n: usize, cfg: &PipelineConfig) -> Result<Vec<usize>> {
    Ok(match cfg.scoring_population {
        ScoringPopulation::FullData => (0..n).collect(),
        ScoringPopulation::TestSplit => cfg.split(n, 0)?.1,
    })
}

/// Predicted intervention per row from the best short tree of each
/// intervention.
pub fn predict_interventions(data: &EncodedDataset, short: &ShortTrees) -> Result<Vec<Intervention>> {
    let mut columns = BTreeMap::new();
    for k in Intervention::ALL {
        columns.insert(k, short.best(k).tree.predict_dataset(data)?);
    }
    resolve_all(&columns)
}

/// Scored records and their predicted interventions.
pub fn discretion_inputs(
    records: &[HouseholdRecord],
    data: &EncodedDataset,
    short: &ShortTrees,
    cfg: &PipelineConfig,
) -> Result<(Vec<HouseholdRecord>, Vec<Intervention>)> {
    if records.len() != data.n_rows() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: data.n_rows(),
        });
    }
    let rows = scoring_rows(records.len(), cfg)?;
    let predicted = predict_interventions(&data.subset(&rows), short)?;
    Ok((rows.iter().map(|&i| records[i].clone()).collect(), predicted))
}

pub fn analyze_config(cfg: &PipelineConfig) -> AnalyzeConfig {
    AnalyzeConfig {
        n_resamples: cfg.n_resamples,
        seed: seeds::derive(cfg.seed, &[DISCRETION_STREAM]),
        exclude_observed: cfg.exclude_observed,
    }
}

/// Discretion analysis over the scoring population, with predictions from
/// the best short trees.
pub fn discretion(
    records: &[HouseholdRecord],
    data: &EncodedDataset,
    short: &ShortTrees,
    scorer: &VulnerabilityScorer,
    cfg: &PipelineConfig,
) -> Result<DiscretionReport> {
    let (picked, predicted) = discretion_inputs(records, data, short, cfg)?;
    analyze(&picked, &predicted, scorer, &analyze_config(cfg))
}

/// One-vs-all labels of `data` for `k`.
pub fn target(data: &EncodedDataset, k: Intervention) -> Vec<u8> {
    binarize(&data.labels, k)
}
