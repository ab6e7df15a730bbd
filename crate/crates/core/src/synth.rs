//! Seeded synthetic instances: random tabular policies, random
//! distributions, randomized bound-check instances, and the heterogeneous
//! toy dataset used to replicate the selection experiment at desk scale.
//!
//! Everything here is a pure function of its seed, so sweeps and tests
//! reproduce exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{PromptRecord, ScoredResponse};
use crate::pvar::DiscreteDistribution;
use crate::selection::build_preference_pair;
use crate::toydpo::{train, DpoConfig, TabularPolicy, TokenPair};

/// RNG used for all instance generation.
pub fn instance_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Policy with logits drawn uniformly from [-scale, scale].
pub fn random_policy<R: Rng>(
    rng: &mut R,
    n_prompts: usize,
    vocab: usize,
    horizon: usize,
    scale: f64,
) -> Result<TabularPolicy> {
    let template = TabularPolicy::uniform(n_prompts, vocab, horizon)?;
    let logits: Vec<f64> = (0..template.n_params())
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    TabularPolicy::new(n_prompts, vocab, horizon, logits)
}

/// Random point on the n-simplex (normalized uniforms).
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Result<DiscreteDistribution> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::new(raw.into_iter().map(|x| x / total).collect())
}

const BETAS: [f64; 3] = [0.01, 0.1, 1.0];
const SCALES: [f64; 3] = [0.5, 1.5, 4.0];

/// Random (policy, reference, beta) triple for the online-bound sweeps:
/// vocab <= 5, horizon <= 2, beta in {0.01, 0.1, 1}.
pub fn theorem1_instance(seed: u64) -> (TabularPolicy, TabularPolicy, f64) {
    let mut rng = instance_rng(seed);
    let vocab = rng.gen_range(2..=5);
    let horizon = rng.gen_range(1..=2);
    let beta = BETAS[rng.gen_range(0..BETAS.len())];
    let scale = SCALES[rng.gen_range(0..SCALES.len())];
    // The caps guarantee these constructors cannot fail.
    let policy = random_policy(&mut rng, 1, vocab, horizon, scale).unwrap();
    let reference = if rng.gen_bool(0.5) {
        TabularPolicy::uniform(1, vocab, horizon).unwrap()
    } else {
        random_policy(&mut rng, 1, vocab, horizon, scale).unwrap()
    };
    (policy, reference, beta)
}

/// One offline-to-online bound instance: an initial policy, a perturbed
/// external reward model, a synthetic ground truth, and a policy trained
/// away from the initial one for 1 to 50 steps.
#[derive(Debug, Clone)]
pub struct Theorem2Instance {
    pub policy: TabularPolicy,
    pub policy_initial: TabularPolicy,
    pub reference: TabularPolicy,
    pub reward_phi: Vec<f64>,
    pub reward_star: Vec<f64>,
    pub beta: f64,
    pub train_steps: usize,
}

pub fn theorem2_instance(seed: u64) -> Result<Theorem2Instance> {
    let mut rng = instance_rng(seed);
    let vocab = rng.gen_range(2..=5);
    let horizon = rng.gen_range(1..=2);
    let beta = BETAS[rng.gen_range(0..BETAS.len())];
    let scale = SCALES[rng.gen_range(0..SCALES.len())];
    let policy_initial = random_policy(&mut rng, 1, vocab, horizon, scale)?;
    let reference = if rng.gen_bool(0.5) {
        TabularPolicy::uniform(1, vocab, horizon)?
    } else {
        random_policy(&mut rng, 1, vocab, horizon, scale)?
    };
    let n = policy_initial.n_responses();
    // Ground truth is synthetic and held fixed; the external reward model
    // is the ground truth plus bounded noise.
    let reward_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let noise = rng.gen_range(0.0..0.8);
    let reward_phi: Vec<f64> = reward_star
        .iter()
        .map(|r| r + noise * rng.gen_range(-1.0..1.0))
        .collect();

    let responses = policy_initial.enumerate_responses();
    let n_pairs = rng.gen_range(3..=8);
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j || reward_phi[i] == reward_phi[j] {
            continue;
        }
        let (winner, loser) = if reward_phi[i] > reward_phi[j] {
            (i, j)
        } else {
            (j, i)
        };
        pairs.push(TokenPair::new(
            0,
            responses[winner].clone(),
            responses[loser].clone(),
        ));
    }
    let train_steps = rng.gen_range(1..=50);
    let learning_rate = [0.05, 0.2, 0.5][rng.gen_range(0..3)];
    let config = DpoConfig::new(beta, learning_rate, train_steps, seed)?;
    let (policy, _) = train(&policy_initial, &reference, &pairs, &config)?;
    Ok(Theorem2Instance {
        policy,
        policy_initial,
        reference,
        reward_phi,
        reward_star,
        beta,
        train_steps,
    })
}

/// Random (values, mu, nu) triple for the variance-difference lemma, with
/// occasional equal-measure and constant-value edge instances.
pub fn lemma1_instance(seed: u64) -> (Vec<f64>, DiscreteDistribution, DiscreteDistribution) {
    let mut rng = instance_rng(seed);
    let n = rng.gen_range(2..=10);
    let values: Vec<f64> = if rng.gen_bool(0.1) {
        vec![rng.gen(); n]
    } else {
        (0..n).map(|_| rng.gen()).collect()
    };
    let mu = random_distribution(&mut rng, n).unwrap();
    let nu = if rng.gen_bool(0.1) {
        mu.clone()
    } else {
        random_distribution(&mut rng, n).unwrap()
    };
    (values, mu, nu)
}

/// Random (rewards_a, rewards_b, mu) triple for the reward-change lemma.
pub fn lemma2_instance(seed: u64) -> (Vec<f64>, Vec<f64>, DiscreteDistribution) {
    let mut rng = instance_rng(seed);
    let n = rng.gen_range(2..=10);
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let b: Vec<f64> = if rng.gen_bool(0.2) {
        // Pure shift: PVar is invariant, the bound only gains slack.
        let shift = rng.gen_range(-2.0..2.0);
        a.iter().map(|x| x + shift).collect()
    } else {
        (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
    };
    let mu = random_distribution(&mut rng, n).unwrap();
    (a, b, mu)
}

/// Random distribution pair for the product-measure lemma.
pub fn lemma3_instance(seed: u64) -> (DiscreteDistribution, DiscreteDistribution) {
    let mut rng = instance_rng(seed);
    let n = rng.gen_range(2..=8);
    if rng.gen_bool(0.05) {
        let p = DiscreteDistribution::degenerate(n, 0).unwrap();
        let q = DiscreteDistribution::degenerate(n, n - 1).unwrap();
        return (p, q);
    }
    let p = random_distribution(&mut rng, n).unwrap();
    let q = if rng.gen_bool(0.1) {
        p.clone()
    } else {
        random_distribution(&mut rng, n).unwrap()
    };
    (p, q)
}

/// Chebyshev sweep instance: an online-bound instance plus a threshold.
pub fn chebyshev_instance(seed: u64) -> (TabularPolicy, TabularPolicy, f64, f64) {
    let (policy, reference, beta) = theorem1_instance(seed);
    let mut rng = instance_rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let c = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
    (policy, reference, beta, c)
}

/// Shape of the synthetic selection dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDatasetSpec {
    /// Number of prompts; the first half is generated low-diversity, the
    /// second half high-diversity.
    pub prompts: usize,
    pub vocab: usize,
    pub horizon: usize,
    pub samples_per_prompt: usize,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        ToyDatasetSpec {
            prompts: 12,
            vocab: 4,
            horizon: 2,
            samples_per_prompt: 5,
            seed: 0,
        }
    }
}

/// A reward-scored synthetic dataset whose prompts span low to high PVar,
/// together with the policy that generated the responses.
///
/// Low-diversity prompts emit near-identical responses (a sharply peaked
/// first-token distribution and a small reward scale), high-diversity
/// prompts spread over the whole response space with a large reward scale.
/// Estimated PVar therefore separates the two groups, and a selected
/// subset maps back onto token-level preference pairs for training.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub records: Vec<PromptRecord>,
    /// The generation policy; also the training start point and reference.
    pub policy: TabularPolicy,
    sequences: Vec<Vec<Vec<usize>>>,
}

impl ToyDataset {
    pub fn prompt_index(&self, prompt_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.prompt_id == prompt_id)
    }

    /// Chosen/rejected token pair for one prompt, via the argmax/argmin
    /// pair construction on its record.
    pub fn token_pair(&self, prompt_id: &str) -> Result<TokenPair> {
        let index = self
            .prompt_index(prompt_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown prompt_id {prompt_id:?}")))?;
        let record = &self.records[index];
        let pair = build_preference_pair(record)?;
        let winner = self.sequence_for(index, &pair.chosen_id)?;
        let loser = self.sequence_for(index, &pair.rejected_id)?;
        Ok(TokenPair::new(index, winner, loser))
    }

    pub fn token_pairs(&self, prompt_ids: &[String]) -> Result<Vec<TokenPair>> {
        prompt_ids.iter().map(|id| self.token_pair(id)).collect()
    }

    fn sequence_for(&self, prompt_index: usize, response_id: &str) -> Result<Vec<usize>> {
        let record = &self.records[prompt_index];
        let slot = record
            .responses
            .iter()
            .position(|r| r.response_id == response_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown response_id {response_id:?}")))?;
        Ok(self.sequences[prompt_index][slot].clone())
    }
}

const LOW_DIVERSITY_PEAK: f64 = 9.0;
const LOGIT_JITTER: f64 = 0.4;
const LOW_REWARD_SCALE: f64 = 0.1;
const HIGH_REWARD_SCALE: f64 = 2.5;

/// Generate the synthetic heterogeneous-PVar dataset.
pub fn toy_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    if spec.prompts < 2 {
        return Err(Error::InvalidInput(
            "toy dataset needs at least 2 prompts".to_string(),
        ));
    }
    if spec.samples_per_prompt < 2 {
        return Err(Error::InvalidInput(
            "toy dataset needs at least 2 samples per prompt".to_string(),
        ));
    }
    let mut rng = instance_rng(spec.seed);
    let template = TabularPolicy::uniform(spec.prompts, spec.vocab, spec.horizon)?;
    let mut logits = vec![0.0; template.n_params()];
    let low_cut = spec.prompts / 2;

    for prompt in 0..spec.prompts {
        // Jitter every row, then peak the root row of low-diversity prompts
        // on token 0 so nearly all their samples share a prefix.
        let root = template.state_index(prompt, &[])?;
        for state in prompt_states(&template, prompt)? {
            for t in 0..spec.vocab {
                logits[state * spec.vocab + t] = rng.gen_range(-LOGIT_JITTER..LOGIT_JITTER);
            }
        }
        if prompt < low_cut {
            logits[root * spec.vocab] += LOW_DIVERSITY_PEAK;
        }
    }
    let policy = TabularPolicy::new(spec.prompts, spec.vocab, spec.horizon, logits)?;

    // Per-(prompt, position, token) reward weights; reward of a response is
    // the prompt's scale times the sum of its token weights, so similar
    // sequences earn similar rewards.
    let mut weights = vec![0.0; spec.prompts * spec.horizon * spec.vocab];
    for w in &mut weights {
        *w = rng.gen_range(-1.0..1.0);
    }
    let reward_of = |prompt: usize, y: &[usize]| -> f64 {
        let scale = if prompt < low_cut {
            LOW_REWARD_SCALE
        } else {
            HIGH_REWARD_SCALE
        };
        scale
            * y.iter()
                .enumerate()
                .map(|(pos, &tok)| weights[(prompt * spec.horizon + pos) * spec.vocab + tok])
                .sum::<f64>()
    };

    let mut records = Vec::with_capacity(spec.prompts);
    let mut sequences = Vec::with_capacity(spec.prompts);
    for prompt in 0..spec.prompts {
        let mut drawn: Vec<Vec<usize>> = Vec::new();
        // Redraw if every sample earned the same reward; such a prompt has
        // no usable pair. Distinct sequences get distinct rewards almost
        // surely, so a few attempts always suffice.
        for _attempt in 0..64 {
            drawn = (0..spec.samples_per_prompt)
                .map(|_| policy.sample_response(prompt, &mut rng))
                .collect::<Result<_>>()?;
            let rewards: Vec<f64> = drawn.iter().map(|y| reward_of(prompt, y)).collect();
            let spread = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - rewards.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 0.0 {
                break;
            }
        }
        let responses: Vec<ScoredResponse> = drawn
            .iter()
            .enumerate()
            .map(|(slot, y)| ScoredResponse {
                response_id: format!("r{slot}"),
                text: y
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                reward: reward_of(prompt, y),
            })
            .collect();
        records.push(PromptRecord {
            prompt_id: format!("p{prompt:03}"),
            prompt_text: String::new(),
            responses,
        });
        sequences.push(drawn);
    }
    Ok(ToyDataset {
        records,
        policy,
        sequences,
    })
}

fn prompt_states(template: &TabularPolicy, prompt: usize) -> Result<Vec<usize>> {
    let mut states = vec![template.state_index(prompt, &[])?];
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 1..template.horizon() {
        let mut next = Vec::new();
        for prefix in &frontier {
            for token in 0..template.vocab() {
                let mut extended = prefix.clone();
                extended.push(token);
                states.push(template.state_index(prompt, &extended)?);
                next.push(extended);
            }
        }
        frontier = next;
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvar::batch_estimate;

    #[test]
    fn instances_are_seed_deterministic() {
        let (p1, r1, b1) = theorem1_instance(99);
        let (p2, r2, b2) = theorem1_instance(99);
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        assert_eq!(b1, b2);

        let a = theorem2_instance(7).unwrap();
        let b = theorem2_instance(7).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.reward_phi, b.reward_phi);
    }

    #[test]
    fn toy_dataset_is_deterministic_and_well_formed() {
        let spec = ToyDatasetSpec {
            seed: 5,
            ..Default::default()
        };
        let first = toy_dataset(&spec).unwrap();
        let second = toy_dataset(&spec).unwrap();
        assert_eq!(first.records, second.records);
        assert_eq!(first.policy, second.policy);

        assert_eq!(first.records.len(), 12);
        for record in &first.records {
            assert_eq!(record.responses.len(), 5);
            assert!(crate::model::validate_record(record).is_ok());
        }
    }

    #[test]
    fn toy_dataset_estimated_pvar_separates_the_halves() {
        let spec = ToyDatasetSpec {
            seed: 5,
            ..Default::default()
        };
        let dataset = toy_dataset(&spec).unwrap();
        let outcome = batch_estimate(&dataset.records);
        assert_eq!(outcome.estimates.len(), 12);
        let low_max = outcome.estimates[..6]
            .iter()
            .map(|e| e.pvar)
            .fold(0.0, f64::max);
        let high_min = outcome.estimates[6..]
            .iter()
            .map(|e| e.pvar)
            .fold(f64::INFINITY, f64::min);
        assert!(
            low_max < high_min,
            "low-diversity pvar up to {low_max} should sit below high-diversity minimum {high_min}"
        );
    }

    #[test]
    fn token_pairs_map_back_to_generated_sequences() {
        let spec = ToyDatasetSpec {
            seed: 5,
            ..Default::default()
        };
        let dataset = toy_dataset(&spec).unwrap();
        for record in &dataset.records {
            let pair = dataset.token_pair(&record.prompt_id).unwrap();
            assert!(pair.winner.len() == 2 && pair.loser.len() == 2);
            assert_ne!(pair.winner, pair.loser, "argmax and argmin must differ");
            // Winner really is the argmax response's sequence.
            let best = record
                .responses
                .iter()
                .cloned()
                .reduce(|a, b| if b.reward > a.reward { b } else { a })
                .unwrap();
            let text: String = pair
                .winner
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            assert_eq!(best.text, text);
        }
        assert!(dataset.token_pair("nope").is_err());
    }
}
