//! Shared domain types: scored responses, prompt records, estimates,
//! preference pairs, and selection manifests.
//!
//! All types are immutable values and safe to share across threads.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A candidate response together with its reward-model score.
///
/// Rewards are accepted as given, in whatever units the reward model
/// produces; the Bradley-Terry sigmoid only ever sees differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub response_id: String,
    #[serde(default)]
    pub text: String,
    pub reward: f64,
}

impl ScoredResponse {
    pub fn new(response_id: impl Into<String>, reward: f64) -> Self {
        Self {
            response_id: response_id.into(),
            text: String::new(),
            reward,
        }
    }
}

/// A prompt with its scored candidate responses; the unit of selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    #[serde(default)]
    pub prompt_text: String,
    pub responses: Vec<ScoredResponse>,
}

impl PromptRecord {
    pub fn new(prompt_id: impl Into<String>, responses: Vec<ScoredResponse>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            prompt_text: String::new(),
            responses,
        }
    }

    /// Rewards in response order.
    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }

    /// A prompt needs at least two responses before pairwise comparisons
    /// mean anything.
    pub fn is_eligible(&self) -> bool {
        self.responses.len() >= 2
    }
}

/// A single data-quality problem found in a [`PromptRecord`].
///
/// Violations are data, not failures: callers collect them and decide
/// whether to skip the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptyPromptId,
    EmptyResponseId { index: usize },
    DuplicateResponseId { response_id: String },
    NonFiniteReward { response_id: String },
    TooFewResponses { n: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPromptId => write!(f, "empty prompt_id"),
            Violation::EmptyResponseId { index } => {
                write!(f, "empty response_id at index {index}")
            }
            Violation::DuplicateResponseId { response_id } => {
                write!(f, "duplicate response_id {response_id:?}")
            }
            Violation::NonFiniteReward { response_id } => {
                write!(f, "non-finite reward on response {response_id:?}")
            }
            Violation::TooFewResponses { n } => {
                write!(f, "too few responses for estimation (n = {n}, need 2)")
            }
        }
    }
}

/// Outcome of [`validate_record`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check a record against the intra-record invariants: non-empty ids,
/// unique response ids, finite rewards, and n >= 2.
///
/// Never fails; violations come back as data.
pub fn validate_record(record: &PromptRecord) -> ValidationResult {
    let mut violations = Vec::new();
    if record.prompt_id.is_empty() {
        violations.push(Violation::EmptyPromptId);
    }
    let mut seen = HashSet::new();
    for (index, response) in record.responses.iter().enumerate() {
        if response.response_id.is_empty() {
            violations.push(Violation::EmptyResponseId { index });
        } else if !seen.insert(response.response_id.as_str()) {
            violations.push(Violation::DuplicateResponseId {
                response_id: response.response_id.clone(),
            });
        }
        if !response.reward.is_finite() {
            violations.push(Violation::NonFiniteReward {
                response_id: response.response_id.clone(),
            });
        }
    }
    if record.responses.len() < 2 {
        violations.push(Violation::TooFewResponses {
            n: record.responses.len(),
        });
    }
    ValidationResult { violations }
}

/// Per-prompt empirical preference variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVarEstimate {
    pub prompt_id: String,
    /// Always within [0, 0.25].
    pub pvar: f64,
    pub n_responses: usize,
    /// Pinned at 1/2: pairwise probabilities satisfy p(i,j) + p(j,i) = 1,
    /// so the mean over ordered pairs is exactly one half.
    pub mean_pref: f64,
}

/// Chosen/rejected pair built from the highest- and lowest-scored responses
/// of one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub chosen_id: String,
    pub rejected_id: String,
    pub reward_chosen: f64,
    pub reward_rejected: f64,
}

/// Which ranking a selection run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Highest estimated PVar first.
    PvarTop,
    /// Lowest estimated PVar first.
    PvarBottom,
    /// Seeded uniform sample without replacement.
    Random,
    /// Largest max-minus-min reward gap first.
    RewardGapTop,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::PvarTop,
        StrategyKind::PvarBottom,
        StrategyKind::Random,
        StrategyKind::RewardGapTop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::PvarTop => "pvar_top",
            StrategyKind::PvarBottom => "pvar_bottom",
            StrategyKind::Random => "random",
            StrategyKind::RewardGapTop => "reward_gap_top",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "pvar_top" => Ok(StrategyKind::PvarTop),
            "pvar_bottom" => Ok(StrategyKind::PvarBottom),
            "random" => Ok(StrategyKind::Random),
            "reward_gap_top" => Ok(StrategyKind::RewardGapTop),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy {other:?} (expected one of pvar_top, pvar_bottom, random, reward_gap_top)"
            ))),
        }
    }
}

/// Deterministic, reproducible record of which prompts a strategy selected
/// and the scores that ranked them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub strategy: StrategyKind,
    pub fraction: f64,
    pub seed: u64,
    /// Name and version of the algorithm that produced the ordering, so the
    /// run reproduces across implementations.
    pub generator: String,
    /// Selected prompt ids, in selection order.
    pub selected: Vec<String>,
    /// Ranking scores aligned with `selected`; absent for random selection,
    /// which ranks by seed rather than by score.
    pub scores: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(prompt_id: &str, rewards: &[f64]) -> PromptRecord {
        let responses = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| ScoredResponse::new(format!("r{i}"), r))
            .collect();
        PromptRecord::new(prompt_id, responses)
    }

    #[test]
    fn well_formed_record_validates() {
        let rec = record("p0", &[0.1, 0.5, -0.3]);
        assert!(validate_record(&rec).is_ok());
    }

    #[test]
    fn duplicate_response_id_is_flagged() {
        let mut rec = record("p0", &[0.1, 0.5]);
        rec.responses[1].response_id = "r0".to_string();
        let result = validate_record(&rec);
        assert_eq!(
            result.violations,
            vec![Violation::DuplicateResponseId {
                response_id: "r0".to_string()
            }]
        );
    }

    #[test]
    fn non_finite_reward_is_flagged() {
        let mut rec = record("p0", &[0.1, 0.5]);
        rec.responses[0].reward = f64::NAN;
        let result = validate_record(&rec);
        assert_eq!(
            result.violations,
            vec![Violation::NonFiniteReward {
                response_id: "r0".to_string()
            }]
        );

        rec.responses[0].reward = f64::INFINITY;
        assert!(!validate_record(&rec).is_ok());
    }

    #[test]
    fn too_few_responses_is_flagged_not_fatal() {
        let rec = record("p0", &[0.1]);
        let result = validate_record(&rec);
        assert_eq!(result.violations, vec![Violation::TooFewResponses { n: 1 }]);
        assert!(!rec.is_eligible());
    }

    #[test]
    fn empty_ids_are_flagged() {
        let mut rec = record("", &[0.1, 0.2]);
        rec.responses[0].response_id = String::new();
        let result = validate_record(&rec);
        assert!(result.violations.contains(&Violation::EmptyPromptId));
        assert!(result
            .violations
            .contains(&Violation::EmptyResponseId { index: 0 }));
    }

    #[test]
    fn strategy_kind_round_trips_through_str() {
        for kind in StrategyKind::ALL {
            assert_eq!(kind.as_str().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("pvar-top".parse::<StrategyKind>().is_err());
    }
}
