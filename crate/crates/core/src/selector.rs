//! Thompson sampling over the Pareto set.
//!
//! Each metric of each model gets a Normal-Inverse-Gamma posterior fit from
//! the retrieved samples: `μ = x̄`, `ν = n`, `α = n/2`, `β = (n−1)s²/2`. A
//! decision draws `σ̃² ~ InvGamma(α, β)`, `μ̃ ~ N(μ, σ̃²/ν)`, then
//! `x̃ ~ N(μ̃, σ̃²)`, scores `U′ = w_p·x̃_P − w_c·x̃_C − w_d·x̃_D`, and
//! picks the argmax.
//!
//! `β` is floored at `variance_floor`; a single sample uses
//! `ν = min_pseudo_count` and `α = 0.5 + ν/2` so every posterior stays proper.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::TrilemmaProfile;
use crate::rng::RandomSource;
use crate::types::{ModelId, RouterConfig, SelectionMode, TrilemmaWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("no samples to fit")]
    EmptySamples,
    #[error("no profiles to select from")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPosterior {
    pub mu: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Unbiased sample mean and variance.
fn mean_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (
        mean,
        if samples.len() > 1 {
            ss / (n - 1.0)
        } else {
            0.0
        },
    )
}

pub fn fit_nig(samples: &[f64], config: &RouterConfig) -> Result<NigPosterior, SelectError> {
    let (mu, s2) = match samples.len() {
        0 => return Err(SelectError::EmptySamples),
        _ => mean_var(samples),
    };
    let n = samples.len() as f64;
    Ok(if samples.len() == 1 {
        NigPosterior {
            mu,
            nu: config.min_pseudo_count,
            alpha: 0.5 + config.min_pseudo_count / 2.0,
            beta: config.variance_floor,
        }
    } else {
        NigPosterior {
            mu,
            nu: n,
            alpha: n / 2.0,
            beta: ((n - 1.0) * s2 / 2.0).max(config.variance_floor),
        }
    })
}

/// One posterior-predictive draw: variance, then mean, then the value.
pub fn sample_metric(posterior: &NigPosterior, rng: &mut RandomSource) -> f64 {
    let variance = rng.inverse_gamma(posterior.alpha, posterior.beta);
    let mean = rng.normal(posterior.mu, variance / posterior.nu);
    rng.normal(mean, variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledUtility {
    pub model: ModelId,
    pub x_p: f64,
    pub x_c: f64,
    pub x_d: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub model: ModelId,
    pub utilities: Vec<SampledUtility>,
}

/// Min-max scales `values` to `[0, 1]`; a constant column maps to zeros.
fn min_max(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

/// Picks a model from Pareto-filtered profiles.
pub fn select(
    profiles: &[TrilemmaProfile],
    config: &RouterConfig,
    rng: &mut RandomSource,
) -> Result<SelectionResult, SelectError> {
    if profiles.is_empty() {
        return Err(SelectError::EmptyInput);
    }
    let mut draws: Vec<[f64; 3]> = Vec::with_capacity(profiles.len());
    for p in profiles {
        draws.push(match config.selection {
            SelectionMode::Thompson => [
                sample_metric(&fit_nig(&p.perf_samples, config)?, rng),
                sample_metric(&fit_nig(&p.cost_samples, config)?, rng),
                sample_metric(&fit_nig(&p.dur_samples, config)?, rng),
            ],
            SelectionMode::Greedy => [p.p_hat, p.c_hat, p.d_hat],
        });
    }
    let mut scored: Vec<[f64; 3]> = draws.clone();
    if config.normalize_metrics {
        for axis in 0..3 {
            let mut col: Vec<f64> = scored.iter().map(|d| d[axis]).collect();
            min_max(&mut col);
            for (row, v) in scored.iter_mut().zip(col) {
                row[axis] = v;
            }
        }
    }
    let utilities: Vec<SampledUtility> = profiles
        .iter()
        .zip(draws.iter().zip(&scored))
        .map(|(p, (raw, s))| SampledUtility {
            model: p.model.clone(),
            x_p: raw[0],
            x_c: raw[1],
            x_d: raw[2],
            utility: utility(&config.weights, s),
        })
        .collect();
    let best = (0..profiles.len())
        .max_by(|&i, &j| better(&utilities[i], &profiles[i], &utilities[j], &profiles[j]))
        .expect("non-empty");
    Ok(SelectionResult {
        model: profiles[best].model.clone(),
        utilities,
    })
}

fn utility(w: &TrilemmaWeights, x: &[f64; 3]) -> f64 {
    w.utility(x[0], x[1], x[2])
}

/// Orders by utility; ties go to lower `ĉ`, then lower `d̂`, then the
/// lexicographically smaller model name. `Greater` means `a` wins.
fn better(
    a: &SampledUtility,
    pa: &TrilemmaProfile,
    b: &SampledUtility,
    pb: &TrilemmaProfile,
) -> Ordering {
    a.utility
        .total_cmp(&b.utility)
        .then(pb.c_hat.total_cmp(&pa.c_hat))
        .then(pb.d_hat.total_cmp(&pa.d_hat))
        .then(pb.model.cmp(&pa.model))
}
