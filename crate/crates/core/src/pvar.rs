//! Pairwise preference probabilities and preference-variance (PVar)
//! computation.
//!
//! Two PVar routes exist and both are kept:
//!
//! * [`estimate_pvar`] is the empirical estimator over n sampled responses:
//!   the squared deviations of all n(n-1) ordered pairwise probabilities
//!   from 1/2, divided by n(n-1). The diagonal i = j is excluded.
//! * [`exact_pvar`] is the population variance under an explicit response
//!   distribution, with (y_i, y_j) drawn independently. The diagonal is
//!   included, consistent with independent sampling; it contributes zero
//!   deviation but carries probability mass.
//!
//! On a uniform distribution over the same n responses the two relate by
//! the factor (n-1)/n.
//!
//! The mean preference is pinned at exactly 1/2 in both routes and never
//! re-estimated: p(i,j) + p(j,i) = 1, so the mean over ordered pairs (and
//! over any exchangeable pair measure) is 1/2 by symmetry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PVarEstimate, PromptRecord};

/// Numerically stable logistic sigmoid, branching on the sign of the
/// argument so neither exp overflows.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry probability that a response with reward `r_i` is preferred
/// over one with reward `r_j`: sigma(r_i - r_j).
pub fn preference_probability(r_i: f64, r_j: f64) -> Result<f64> {
    if !r_i.is_finite() || !r_j.is_finite() {
        return Err(Error::InvalidInput(format!(
            "preference_probability requires finite rewards, got ({r_i}, {r_j})"
        )));
    }
    Ok(sigmoid(r_i - r_j))
}

/// One ordered pairwise preference probability between responses `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseProbability {
    pub i: usize,
    pub j: usize,
    pub p: f64,
}

/// All n(n-1) ordered pairwise probabilities for a reward list.
pub fn pairwise_probabilities(rewards: &[f64]) -> Result<Vec<PairwiseProbability>> {
    check_rewards(rewards)?;
    let n = rewards.len();
    let mut out = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(PairwiseProbability {
                    i,
                    j,
                    p: sigmoid(rewards[i] - rewards[j]),
                });
            }
        }
    }
    Ok(out)
}

fn check_rewards(rewards: &[f64]) -> Result<()> {
    if let Some(idx) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite reward at index {idx}"
        )));
    }
    Ok(())
}

/// Empirical PVar over n sampled responses:
/// sum over ordered pairs i != j of (sigma(r_i - r_j) - 1/2)^2, divided by
/// n(n-1), with the mean pinned at 1/2.
///
/// Repeated rewards are legitimate Monte Carlo samples and are not
/// deduplicated. The squared deviation is symmetric in (i, j), so each
/// unordered pair is evaluated once and counted twice.
pub fn estimate_pvar(rewards: &[f64]) -> Result<f64> {
    check_rewards(rewards)?;
    let n = rewards.len();
    if n < 2 {
        return Err(Error::Ineligible(format!(
            "PVar estimation needs at least 2 responses, got {n}"
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dev = sigmoid(rewards[i] - rewards[j]) - 0.5;
            sum += 2.0 * dev * dev;
        }
    }
    let pvar = sum / (n * (n - 1)) as f64;
    // The math guarantees [0, 0.25]; shave off accumulated rounding dust.
    Ok(pvar.clamp(0.0, 0.25))
}

/// A finite probability distribution over an ordered support of outcomes,
/// identified by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

/// Tolerance for the normalization check.
pub const NORMALIZATION_TOL: f64 = 1e-12;

impl DiscreteDistribution {
    /// Validates non-negativity and normalization within 1e-12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput(
                "distribution needs a nonempty support".to_string(),
            ));
        }
        if let Some(idx) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "probability at index {idx} is negative or non-finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, expected 1 within {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "uniform distribution needs at least one outcome".to_string(),
            ));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// Distribution concentrated on a single outcome.
    pub fn degenerate(n: usize, outcome: usize) -> Result<Self> {
        if outcome >= n {
            return Err(Error::InvalidInput(format!(
                "outcome {outcome} out of range for support of size {n}"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[outcome] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Expectation of `values` under this distribution.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(self.probs.iter().zip(values).map(|(p, v)| p * v).sum())
    }

    /// Variance of `values` under this distribution (two-pass).
    pub fn variance(&self, values: &[f64]) -> Result<f64> {
        let mean = self.expectation(values)?;
        Ok(self
            .probs
            .iter()
            .zip(values)
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .sum())
    }
}

/// Exact PVar: variance of sigma(r(y_i) - r(y_j)) over independent
/// (y_i, y_j) ~ dist x dist, diagonal included. `rewards[k]` is the reward
/// of the k-th support outcome.
pub fn exact_pvar(dist: &DiscreteDistribution, rewards: &[f64]) -> Result<f64> {
    check_rewards(rewards)?;
    if rewards.len() != dist.len() {
        return Err(Error::InvalidInput(format!(
            "distribution has {} outcomes but {} rewards were given",
            dist.len(),
            rewards.len()
        )));
    }
    let probs = dist.probs();
    let n = probs.len();
    let mut var = 0.0;
    for i in 0..n {
        if probs[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if probs[j] == 0.0 {
                continue;
            }
            let dev = sigmoid(rewards[i] - rewards[j]) - 0.5;
            var += probs[i] * probs[j] * dev * dev;
        }
    }
    Ok(var.clamp(0.0, 0.25))
}

/// A prompt that [`batch_estimate`] could not score, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPrompt {
    /// Index of the record in the input dataset.
    pub index: usize,
    pub prompt_id: String,
    pub reason: String,
}

/// Result of estimating a whole dataset: one estimate per eligible prompt,
/// plus skip reports for the rest, both in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    pub estimates: Vec<PVarEstimate>,
    pub skipped: Vec<SkippedPrompt>,
}

/// Estimate PVar for every eligible record. Records failing validation
/// (duplicate ids, non-finite rewards, n < 2, duplicate prompt_id within
/// the dataset) are skipped and reported, never thrown.
pub fn batch_estimate(dataset: &[PromptRecord]) -> BatchOutcome {
    let mut outcome = BatchOutcome::default();
    let mut seen_prompts = std::collections::HashSet::new();
    for (index, record) in dataset.iter().enumerate() {
        if !record.prompt_id.is_empty() && !seen_prompts.insert(record.prompt_id.clone()) {
            outcome.skipped.push(SkippedPrompt {
                index,
                prompt_id: record.prompt_id.clone(),
                reason: "duplicate prompt_id in dataset".to_string(),
            });
            continue;
        }
        let violations = crate::model::validate_record(record).violations;
        if !violations.is_empty() {
            let reason = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            outcome.skipped.push(SkippedPrompt {
                index,
                prompt_id: record.prompt_id.clone(),
                reason,
            });
            continue;
        }
        match estimate_pvar(&record.rewards()) {
            Ok(pvar) => outcome.estimates.push(PVarEstimate {
                prompt_id: record.prompt_id.clone(),
                pvar,
                n_responses: record.responses.len(),
                mean_pref: 0.5,
            }),
            Err(err) => outcome.skipped.push(SkippedPrompt {
                index,
                prompt_id: record.prompt_id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    outcome
}
