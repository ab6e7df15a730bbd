//! Shared fixtures for the benchmarks: seeded datasets and bound-check
//! instances sized like the acceptance sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvar_core::model::{PromptRecord, ScoredResponse};
use pvar_core::synth;
use pvar_core::toydpo::{TabularPolicy, TokenPair};

/// A reward-scored dataset with `prompts` records of 5 responses each.
pub fn scored_dataset(prompts: usize, seed: u64) -> Vec<PromptRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..prompts)
        .map(|p| {
            PromptRecord::new(
                format!("p{p:05}"),
                (0..5)
                    .map(|r| ScoredResponse::new(format!("r{r}"), rng.gen_range(-5.0..5.0)))
                    .collect(),
            )
        })
        .collect()
}

/// A bound-check instance at the sweep's upper size: vocab 5, horizon 2.
pub fn bound_instance(seed: u64) -> (TabularPolicy, TabularPolicy, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = synth::random_policy(&mut rng, 1, 5, 2, 2.0).unwrap();
    let reference = synth::random_policy(&mut rng, 1, 5, 2, 2.0).unwrap();
    (policy, reference, 0.1)
}

/// Distinct-response training pairs drawn from the policy's space.
pub fn training_pairs(policy: &TabularPolicy, count: usize, seed: u64) -> Vec<TokenPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let responses = policy.enumerate_responses();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let w = rng.gen_range(0..responses.len());
        let l = rng.gen_range(0..responses.len());
        if w != l {
            pairs.push(TokenPair::new(
                0,
                responses[w].clone(),
                responses[l].clone(),
            ));
        }
    }
    pairs
}
