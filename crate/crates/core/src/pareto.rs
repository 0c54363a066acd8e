//! Per-model trilemma statistics and Pareto filtration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::CandidateSet;
use crate::types::{ModelId, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParetoError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("no profiles to filter")]
    EmptyInput,
}

/// Aggregated `(P̂, Ĉ, D̂)` for one model, with the samples behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrilemmaProfile {
    pub model: ModelId,
    pub p_hat: f64,
    pub c_hat: f64,
    pub d_hat: f64,
    pub n: usize,
    pub perf_samples: Vec<f64>,
    pub cost_samples: Vec<f64>,
    pub dur_samples: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl TrilemmaProfile {
    /// Builds a profile from raw samples. Panics if the lists are empty or of unequal length.
    pub fn from_samples(
        model: ModelId,
        perf_samples: Vec<f64>,
        cost_samples: Vec<f64>,
        dur_samples: Vec<f64>,
    ) -> Self {
        let n = perf_samples.len();
        assert!(n > 0, "profile needs at least one sample");
        assert!(cost_samples.len() == n && dur_samples.len() == n);
        Self {
            model,
            p_hat: mean(&perf_samples),
            c_hat: mean(&cost_samples),
            d_hat: mean(&dur_samples),
            n,
            perf_samples,
            cost_samples,
            dur_samples,
        }
    }

    pub fn triple(&self) -> (f64, f64, f64) {
        (self.p_hat, self.c_hat, self.d_hat)
    }
}

/// Groups records by model, in first-appearance order.
pub fn aggregate_records<'a>(
    records: impl IntoIterator<Item = &'a StepRecord>,
) -> Vec<TrilemmaProfile> {
    let mut order: Vec<ModelId> = Vec::new();
    let mut groups: HashMap<ModelId, [Vec<f64>; 3]> = HashMap::new();
    for r in records {
        let g = groups.entry(r.model.clone()).or_insert_with(|| {
            order.push(r.model.clone());
            Default::default()
        });
        g[0].push(r.performance_sample());
        g[1].push(r.cost);
        g[2].push(r.duration);
    }
    order
        .into_iter()
        .map(|m| {
            let [p, c, d] = groups.remove(&m).expect("grouped above");
            TrilemmaProfile::from_samples(m, p, c, d)
        })
        .collect()
}

/// One profile per distinct model in the candidate set.
pub fn aggregate_stats(cand: &CandidateSet) -> Result<Vec<TrilemmaProfile>, ParetoError> {
    if cand.is_empty() {
        return Err(ParetoError::EmptyCandidateSet);
    }
    Ok(aggregate_records(cand.records.iter().map(|r| r.as_ref())))
}

/// Raw triple dominance: higher performance, lower cost, lower duration, with
/// at least one strict improvement.
pub fn dominates_triple(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    let weakly = a.0 >= b.0 && a.1 <= b.1 && a.2 <= b.2;
    let strictly = a.0 > b.0 || a.1 < b.1 || a.2 < b.2;
    weakly && strictly
}

pub fn dominates(a: &TrilemmaProfile, b: &TrilemmaProfile) -> bool {
    dominates_triple(a.triple(), b.triple())
}

/// Indices of the non-dominated triples, ascending.
///
/// Triples are visited in lexicographic order of (−performance, cost,
/// duration). Any dominator of a triple sorts strictly before it, and
/// dominance is transitive, so each triple only needs checking against the
/// survivors found so far.
pub fn non_dominated_indices(triples: &[(f64, f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (triples[i], triples[j]);
        b.0.total_cmp(&a.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front
            .iter()
            .any(|&f| dominates_triple(triples[f], triples[i]))
        {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Keeps the non-dominated profiles, preserving input order.
pub fn pareto_filter(profiles: &[TrilemmaProfile]) -> Result<Vec<TrilemmaProfile>, ParetoError> {
    if profiles.is_empty() {
        return Err(ParetoError::EmptyInput);
    }
    let triples: Vec<_> = profiles.iter().map(TrilemmaProfile::triple).collect();
    Ok(non_dominated_indices(&triples)
        .into_iter()
        .map(|i| profiles[i].clone())
        .collect())
}
