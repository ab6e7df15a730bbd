//! Preference-variance (PVar) toolkit.
//!
//! Computes pairwise Bradley-Terry preference probabilities and per-prompt
//! preference variance from reward-scored responses, selects high-value
//! prompts for DPO under an annotation budget, and pairs that with a
//! desk-scale tabular DPO engine whose gradient-norm bounds are verified
//! by exact enumeration.

pub mod bounds;
pub mod error;
pub mod model;
pub mod pvar;
pub mod selection;
pub mod sweep;
pub mod synth;
pub mod toydpo;

pub use error::{Error, Result};
pub use model::{
    validate_record, PVarEstimate, PreferencePair, PromptRecord, ScoredResponse, SelectionManifest,
    StrategyKind, ValidationResult, Violation,
};
pub use pvar::{
    batch_estimate, estimate_pvar, exact_pvar, pairwise_probabilities, preference_probability,
    BatchOutcome, DiscreteDistribution, PairwiseProbability, SkippedPrompt,
};
pub use selection::{
    build_preference_pair, rank_by_score, reward_gap, select, selection_count, SelectionStrategy,
};
pub use toydpo::{
    dpo_gradient, dpo_loss, expected_dpo_gradient, implicit_reward, mean_margin, train, DpoConfig,
    TabularPolicy, TokenPair, TraceStep, TrainTrace,
};
