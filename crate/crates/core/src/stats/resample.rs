use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Where an observed group mean falls among means of random same-size
/// groups drawn without replacement from a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub observed_mean: f64,
    pub group_size: usize,
    pub population_size: usize,
    pub n_resamples: usize,
    pub null_mean: f64,
    pub null_sd: f64,
    /// Mid-p percentile in [0, 100]: share of null means below the
    /// observed one, ties counting one half.
    pub percentile: f64,
    pub p_two_sided: f64,
    pub seed: u64,
    pub null_means: Vec<f64>,
}

impl PermutationTestResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Draws `n_resamples` groups of `observed.len()` values from `population`
/// (or from the members not in `observed` when `exclude_observed`).
///
/// `observed` indexes into `population`. Each resample uses its own stream
/// derived from `seed`, so results do not depend on the thread count.
pub fn resample_test(
    population: &[f64],
    observed: &[usize],
    n_resamples: usize,
    seed: u64,
    exclude_observed: bool,
) -> Result<PermutationTestResult> {
    let k = observed.len();
    if k == 0 {
        return Err(Error::EmptyGroup);
    }
    if n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be positive".into()));
    }
    let mut seen = vec![false; population.len()];
    for &i in observed {
        if i >= population.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                population: population.len(),
            });
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!("duplicate group index {i}")));
        }
        seen[i] = true;
    }
    let pool: Vec<f64> = if exclude_observed {
        population
            .iter()
            .zip(&seen)
            .filter(|(_, &s)| !s)
            .map(|(&x, _)| x)
            .collect()
    } else {
        population.to_vec()
    };
    if k >= pool.len() {
        return Err(Error::GroupTooLarge {
            group: k,
            population: pool.len(),
        });
    }

    let observed_mean = observed.iter().map(|&i| population[i]).sum::<f64>() / k as f64;
    let null_means: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds::rng(seed, &[r as u64]);
            sample(&mut rng, pool.len(), k).iter().map(|i| pool[i]).sum::<f64>() / k as f64
        })
        .collect();

    Ok(summarize(observed_mean, k, pool.len(), seed, null_means))
}

fn summarize(
    observed_mean: f64,
    group_size: usize,
    population_size: usize,
    seed: u64,
    null_means: Vec<f64>,
) -> PermutationTestResult {
    let r = null_means.len() as f64;
    // Means of the same values in different orders can differ in the last
    // bits; compare with a small relative tolerance.
    let tol = 1e-12 * observed_mean.abs().max(1.0);
    let (mut less, mut equal) = (0usize, 0usize);
    for &m in &null_means {
        if (m - observed_mean).abs() <= tol {
            equal += 1;
        } else if m < observed_mean {
            less += 1;
        }
    }
    let q = (less as f64 + 0.5 * equal as f64) / r;
    let null_mean = null_means.iter().sum::<f64>() / r;
    let null_sd = if null_means.len() > 1 {
        (null_means.iter().map(|m| (m - null_mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    PermutationTestResult {
        observed_mean,
        group_size,
        population_size,
        n_resamples: null_means.len(),
        null_mean,
        null_sd,
        percentile: 100.0 * q,
        p_two_sided: (2.0 * q.min(1.0 - q) + 1.0 / (r + 1.0)).min(1.0),
        seed,
        null_means,
    }
}
