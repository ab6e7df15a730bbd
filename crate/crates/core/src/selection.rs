//! Prompt ranking, reproducible subset selection, and chosen/rejected pair
//! construction.
//!
//! Every ordering here is total and deterministic: score ties break by
//! prompt_id ascending, and random selection uses a fixed, named generator
//! so manifests reproduce byte-for-byte across runs and platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{PreferencePair, PromptRecord, SelectionManifest, StrategyKind};

/// Generator id recorded in manifests produced by score-ranked strategies.
pub const RANKED_GENERATOR: &str = "stable-rank-v1";
/// Generator id recorded in manifests produced by random selection:
/// ChaCha8 keyed by the seed, driving a partial Fisher-Yates shuffle over
/// the id-sorted prompt list (indices drawn as next_u64 mod remaining).
pub const RANDOM_GENERATOR: &str = "chacha8-fisher-yates-v1";

/// How to pick a subset of prompts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    /// Fraction of the dataset to keep, in (0, 1].
    pub fraction: f64,
    /// Consumed only by [`StrategyKind::Random`]; recorded always.
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, fraction: f64, seed: u64) -> Result<Self> {
        if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
            return Err(Error::InvalidInput(format!(
                "fraction must lie in (0, 1], got {fraction}"
            )));
        }
        Ok(Self {
            kind,
            fraction,
            seed,
        })
    }
}

fn check_scores(scores: &[(String, f64)]) -> Result<()> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite score {s} for prompt {id:?}"
        )));
    }
    Ok(())
}

/// Rank prompt ids by score, descending, ties broken by prompt_id ascending.
pub fn rank_by_score(scores: &[(String, f64)]) -> Result<Vec<String>> {
    Ok(rank(scores, Direction::Descending)?
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

#[derive(Clone, Copy)]
enum Direction {
    Descending,
    Ascending,
}

fn rank(scores: &[(String, f64)], direction: Direction) -> Result<Vec<(String, f64)>> {
    check_scores(scores)?;
    let mut ranked: Vec<(String, f64)> = scores.to_vec();
    ranked.sort_by(|a, b| {
        let by_score = match direction {
            // Finite scores, so partial_cmp cannot fail.
            Direction::Descending => b.1.partial_cmp(&a.1).unwrap(),
            Direction::Ascending => a.1.partial_cmp(&b.1).unwrap(),
        };
        by_score.then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// Number of prompts a fraction keeps: ceil(fraction * n), at least 1 on a
/// nonempty dataset. The tiny nudge keeps products like 0.1 * 100 from
/// rounding up to 11 through floating-point excess.
pub fn selection_count(fraction: f64, dataset_size: usize) -> usize {
    if dataset_size == 0 {
        return 0;
    }
    let raw = fraction * dataset_size as f64;
    let count = (raw - 1e-9).ceil() as usize;
    count.clamp(1, dataset_size)
}

/// Select prompts according to `strategy`.
///
/// `scores` must carry one entry per prompt in the dataset (the selection
/// score appropriate to the strategy: estimated PVar for the pvar
/// strategies, reward gap for the gap baseline; ignored by random). The
/// manifest lists exactly `ceil(fraction * dataset_size)` prompt ids.
pub fn select(
    scores: &[(String, f64)],
    strategy: &SelectionStrategy,
    dataset_size: usize,
) -> Result<SelectionManifest> {
    if scores.len() != dataset_size {
        return Err(Error::InvalidInput(format!(
            "scores cover {} prompts but dataset has {dataset_size}",
            scores.len()
        )));
    }
    let keep = selection_count(strategy.fraction, dataset_size);
    let (generator, selected, kept_scores) = match strategy.kind {
        StrategyKind::PvarTop | StrategyKind::RewardGapTop => {
            let ranked = rank(scores, Direction::Descending)?;
            split(ranked, keep)
        }
        StrategyKind::PvarBottom => {
            let ranked = rank(scores, Direction::Ascending)?;
            split(ranked, keep)
        }
        StrategyKind::Random => {
            check_scores(scores)?;
            let mut ids: Vec<String> = scores.iter().map(|(id, _)| id.clone()).collect();
            ids.sort();
            let sampled = sample_without_replacement(&mut ids, keep, strategy.seed);
            (RANDOM_GENERATOR, sampled, None)
        }
    };
    Ok(SelectionManifest {
        strategy: strategy.kind,
        fraction: strategy.fraction,
        seed: strategy.seed,
        generator: generator.to_string(),
        selected,
        scores: kept_scores,
    })
}

fn split(ranked: Vec<(String, f64)>, keep: usize) -> (&'static str, Vec<String>, Option<Vec<f64>>) {
    let head = &ranked[..keep.min(ranked.len())];
    (
        RANKED_GENERATOR,
        head.iter().map(|(id, _)| id.clone()).collect(),
        Some(head.iter().map(|(_, s)| *s).collect()),
    )
}

/// Partial Fisher-Yates over the id-sorted list; the first `keep` slots are
/// the sample, in draw order. Index draws use next_u64 mod remaining (the
/// modulo bias is far below anything observable at dataset scale, and the
/// procedure is frozen under the RANDOM_GENERATOR name).
fn sample_without_replacement(ids: &mut [String], keep: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ids.len();
    for slot in 0..keep.min(n) {
        let remaining = (n - slot) as u64;
        let offset = (rng.next_u64() % remaining) as usize;
        ids.swap(slot, slot + offset);
    }
    ids[..keep.min(n)].to_vec()
}

/// Largest reward difference between any two of the record's responses:
/// max reward minus min reward.
pub fn reward_gap(record: &PromptRecord) -> Result<f64> {
    let rewards = record.rewards();
    if rewards.len() < 2 {
        return Err(Error::Ineligible(format!(
            "reward gap needs at least 2 responses, prompt {:?} has {}",
            record.prompt_id,
            rewards.len()
        )));
    }
    if let Some(idx) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite reward at index {idx} in prompt {:?}",
            record.prompt_id
        )));
    }
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Build the chosen/rejected pair from the highest- and lowest-scored
/// responses. Ties on the max or min go to the earliest response in record
/// order. All-equal rewards have no usable pair and yield a
/// degenerate-pair error for the caller to handle.
pub fn build_preference_pair(record: &PromptRecord) -> Result<PreferencePair> {
    let rewards = record.rewards();
    if rewards.len() < 2 {
        return Err(Error::Ineligible(format!(
            "pair construction needs at least 2 responses, prompt {:?} has {}",
            record.prompt_id,
            rewards.len()
        )));
    }
    if let Some(idx) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite reward at index {idx} in prompt {:?}",
            record.prompt_id
        )));
    }
    let mut best = 0;
    let mut worst = 0;
    for (i, &r) in rewards.iter().enumerate() {
        if r > rewards[best] {
            best = i;
        }
        if r < rewards[worst] {
            worst = i;
        }
    }
    if rewards[best] == rewards[worst] {
        return Err(Error::DegeneratePair(format!(
            "all {} responses of prompt {:?} share reward {}",
            rewards.len(),
            record.prompt_id,
            rewards[best]
        )));
    }
    Ok(PreferencePair {
        prompt_id: record.prompt_id.clone(),
        chosen_id: record.responses[best].response_id.clone(),
        rejected_id: record.responses[worst].response_id.clone(),
        reward_chosen: rewards[best],
        reward_rejected: rewards[worst],
    })
}
