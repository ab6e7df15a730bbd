//! Desk-scale DPO: tabular softmax policies over enumerable response
//! spaces, exact losses and analytic gradients, and a deterministic
//! full-batch training loop.
//!
//! A policy's parameters are its logits, one row per context state, where
//! a state encodes (prompt, response prefix). Responses are fixed-length
//! token sequences of length `horizon`, so the whole response space has
//! vocab^horizon members and every expectation can be enumerated exactly.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pvar::{sigmoid, DiscreteDistribution};

/// Caps keeping vocab^horizon enumeration cheap.
pub const MAX_VOCAB: usize = 10;
pub const MAX_HORIZON: usize = 3;
pub const MAX_RESPONSES: usize = 1000;

/// Finite-context, finite-vocabulary softmax policy whose logits are its
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_prompts: usize,
    vocab: usize,
    horizon: usize,
    /// Row-major, one row of `vocab` logits per context state.
    logits: Vec<f64>,
}

impl TabularPolicy {
    /// Build a policy from explicit logits. Fails if the dimensions exceed
    /// the enumeration caps or the logits have the wrong length.
    pub fn new(n_prompts: usize, vocab: usize, horizon: usize, logits: Vec<f64>) -> Result<Self> {
        if n_prompts == 0 {
            return Err(Error::InvalidInput("need at least one prompt".to_string()));
        }
        if !(2..=MAX_VOCAB).contains(&vocab) {
            return Err(Error::Capacity(format!(
                "vocab must lie in 2..={MAX_VOCAB}, got {vocab}"
            )));
        }
        if !(1..=MAX_HORIZON).contains(&horizon) {
            return Err(Error::Capacity(format!(
                "horizon must lie in 1..={MAX_HORIZON}, got {horizon}"
            )));
        }
        if vocab.pow(horizon as u32) > MAX_RESPONSES {
            return Err(Error::Capacity(format!(
                "response space {vocab}^{horizon} exceeds {MAX_RESPONSES}"
            )));
        }
        let expected = n_prompts * states_per_prompt(vocab, horizon) * vocab;
        if logits.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} logits, got {}",
                logits.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput("non-finite logit".to_string()));
        }
        Ok(Self {
            n_prompts,
            vocab,
            horizon,
            logits,
        })
    }

    /// Policy with all logits zero: uniform over every row.
    pub fn uniform(n_prompts: usize, vocab: usize, horizon: usize) -> Result<Self> {
        let params = n_prompts * states_per_prompt(vocab, horizon) * vocab;
        Self::new(n_prompts, vocab, horizon, vec![0.0; params])
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn n_states(&self) -> usize {
        self.n_prompts * states_per_prompt(self.vocab, self.horizon)
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    /// Size of the response space, vocab^horizon.
    pub fn n_responses(&self) -> usize {
        self.vocab.pow(self.horizon as u32)
    }

    pub fn same_shape(&self, other: &TabularPolicy) -> bool {
        self.n_prompts == other.n_prompts
            && self.vocab == other.vocab
            && self.horizon == other.horizon
    }

    /// Index of the context state reached at `prompt` after emitting
    /// `prefix`.
    pub fn state_index(&self, prompt: usize, prefix: &[usize]) -> Result<usize> {
        if prompt >= self.n_prompts {
            return Err(Error::InvalidInput(format!(
                "prompt {prompt} out of range (have {})",
                self.n_prompts
            )));
        }
        if prefix.len() >= self.horizon {
            return Err(Error::InvalidInput(format!(
                "prefix of length {} has no next-token state at horizon {}",
                prefix.len(),
                self.horizon
            )));
        }
        let mut level_offset = 0;
        let mut level_size = 1;
        for _ in 0..prefix.len() {
            level_offset += level_size;
            level_size *= self.vocab;
        }
        let mut within = 0;
        for &token in prefix {
            if token >= self.vocab {
                return Err(Error::InvalidInput(format!(
                    "token {token} out of range for vocab {}",
                    self.vocab
                )));
            }
            within = within * self.vocab + token;
        }
        Ok(prompt * states_per_prompt(self.vocab, self.horizon) + level_offset + within)
    }

    fn row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.vocab..(state + 1) * self.vocab]
    }

    /// Softmax of one state's logit row.
    pub fn softmax_row(&self, state: usize) -> Vec<f64> {
        let row = self.row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn log_softmax_entry(&self, state: usize, token: usize) -> f64 {
        let row = self.row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        (row[token] - max) - log_sum
    }

    /// Log-probability of generating response `y` for `prompt`: the sum of
    /// per-step log-softmax terms along the prefix tree.
    pub fn log_prob(&self, prompt: usize, y: &[usize]) -> Result<f64> {
        if y.len() != self.horizon {
            return Err(Error::InvalidInput(format!(
                "response length {} does not match horizon {}",
                y.len(),
                self.horizon
            )));
        }
        let mut total = 0.0;
        for (i, &token) in y.iter().enumerate() {
            if token >= self.vocab {
                return Err(Error::InvalidInput(format!(
                    "token {token} out of range for vocab {}",
                    self.vocab
                )));
            }
            let state = self.state_index(prompt, &y[..i])?;
            total += self.log_softmax_entry(state, token);
        }
        Ok(total)
    }

    /// Probability of generating response `y` for `prompt`.
    pub fn prob(&self, prompt: usize, y: &[usize]) -> Result<f64> {
        Ok(self.log_prob(prompt, y)?.exp())
    }

    /// Every response of length `horizon`, in lexicographic token order.
    pub fn enumerate_responses(&self) -> Vec<Vec<usize>> {
        let n = self.n_responses();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut seq = vec![0; self.horizon];
            let mut rest = k;
            for slot in (0..self.horizon).rev() {
                seq[slot] = rest % self.vocab;
                rest /= self.vocab;
            }
            out.push(seq);
        }
        out
    }

    /// The policy's distribution over [`Self::enumerate_responses`] order.
    pub fn response_distribution(&self, prompt: usize) -> Result<DiscreteDistribution> {
        let mut probs = Vec::with_capacity(self.n_responses());
        for y in self.enumerate_responses() {
            probs.push(self.prob(prompt, &y)?);
        }
        // Rows normalize to 1e-12, so the product measure does too; fold
        // the residual dust back in rather than trip the constructor.
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        DiscreteDistribution::new(probs)
    }

    /// Draw one response by walking the prefix tree.
    pub fn sample_response<R: Rng>(&self, prompt: usize, rng: &mut R) -> Result<Vec<usize>> {
        let mut y = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let state = self.state_index(prompt, &y)?;
            let probs = self.softmax_row(state);
            let draw: f64 = rng.gen();
            let mut cumulative = 0.0;
            let mut token = self.vocab - 1;
            for (t, p) in probs.iter().enumerate() {
                cumulative += p;
                if draw < cumulative {
                    token = t;
                    break;
                }
            }
            y.push(token);
        }
        Ok(y)
    }

    fn gradient_step(&mut self, gradient: &[f64], learning_rate: f64) {
        for (logit, g) in self.logits.iter_mut().zip(gradient) {
            *logit -= learning_rate * g;
        }
    }
}

fn states_per_prompt(vocab: usize, horizon: usize) -> usize {
    let mut total = 0;
    let mut level = 1;
    for _ in 0..horizon {
        total += level;
        level *= vocab;
    }
    total
}

/// A preference pair over the toy response space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPair {
    pub prompt: usize,
    pub winner: Vec<usize>,
    pub loser: Vec<usize>,
}

impl TokenPair {
    pub fn new(prompt: usize, winner: Vec<usize>, loser: Vec<usize>) -> Self {
        Self {
            prompt,
            winner,
            loser,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    Ok(())
}

fn check_shapes(policy: &TabularPolicy, reference: &TabularPolicy) -> Result<()> {
    if !policy.same_shape(reference) {
        return Err(Error::InvalidInput(format!(
            "policy shape ({}, {}, {}) does not match reference ({}, {}, {})",
            policy.n_prompts,
            policy.vocab,
            policy.horizon,
            reference.n_prompts,
            reference.vocab,
            reference.horizon
        )));
    }
    Ok(())
}

/// Implicit reward of response `y`: beta * (log pi(y|x) - log pi_ref(y|x)).
pub fn implicit_reward(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    y: &[usize],
    beta: f64,
) -> Result<f64> {
    check_shapes(policy, reference)?;
    check_beta(beta)?;
    Ok(beta * (policy.log_prob(prompt, y)? - reference.log_prob(prompt, y)?))
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn pair_margin(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pair: &TokenPair,
    beta: f64,
) -> Result<f64> {
    let win = implicit_reward(policy, reference, pair.prompt, &pair.winner, beta)?;
    let lose = implicit_reward(policy, reference, pair.prompt, &pair.loser, beta)?;
    Ok(win - lose)
}

/// DPO loss: mean over pairs of -log sigma(margin), where the margin is
/// the implicit-reward difference between winner and loser.
pub fn dpo_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[TokenPair],
    beta: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no preference pairs given".to_string()));
    }
    let mut total = 0.0;
    for pair in pairs {
        total += softplus(-pair_margin(policy, reference, pair, beta)?);
    }
    Ok(total / pairs.len() as f64)
}

/// Mean implicit-reward margin over the pair set.
pub fn mean_margin(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[TokenPair],
    beta: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no preference pairs given".to_string()));
    }
    let mut total = 0.0;
    for pair in pairs {
        total += pair_margin(policy, reference, pair, beta)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Add `weight * grad(log pi(y|x))` into `out`. At each visited state the
/// gradient of the log-softmax is onehot(token) minus the softmax row;
/// unvisited states contribute nothing.
fn accumulate_log_prob_grad(
    policy: &TabularPolicy,
    prompt: usize,
    y: &[usize],
    weight: f64,
    out: &mut [f64],
) -> Result<()> {
    for (i, &token) in y.iter().enumerate() {
        let state = policy.state_index(prompt, &y[..i])?;
        let probs = policy.softmax_row(state);
        let base = state * policy.vocab;
        for (t, p) in probs.iter().enumerate() {
            out[base + t] -= weight * p;
        }
        out[base + token] += weight;
    }
    Ok(())
}

/// Analytic gradient of [`dpo_loss`] with respect to every logit:
/// per pair, -(1 - sigma(margin)) * beta * [grad log pi(winner) - grad log
/// pi(loser)], averaged over the pair set.
pub fn dpo_gradient(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[TokenPair],
    beta: f64,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no preference pairs given".to_string()));
    }
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / pairs.len() as f64;
    for pair in pairs {
        let margin = pair_margin(policy, reference, pair, beta)?;
        let coef = -beta * (1.0 - sigmoid(margin)) * scale;
        accumulate_log_prob_grad(policy, pair.prompt, &pair.winner, coef, &mut grad)?;
        accumulate_log_prob_grad(policy, pair.prompt, &pair.loser, -coef, &mut grad)?;
    }
    Ok(grad)
}

/// Exact DPO gradient with pairs drawn from the policy's own product
/// distribution: the sum over all ordered response pairs (y_w, y_l) of
/// pi(y_w) pi(y_l) * (-beta) (1 - p(y_w, y_l)) * [grad log pi(y_w) - grad
/// log pi(y_l)].
///
/// Grouping the double sum per response first gives the same vector in
/// O(N^2) scalar work plus one O(N * horizon * vocab) accumulation pass.
pub fn expected_dpo_gradient(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
) -> Result<Vec<f64>> {
    check_shapes(policy, reference)?;
    check_beta(beta)?;
    if policy.n_responses() > MAX_RESPONSES {
        return Err(Error::Capacity(format!(
            "response space {} exceeds {MAX_RESPONSES}",
            policy.n_responses()
        )));
    }
    let responses = policy.enumerate_responses();
    let mut probs = Vec::with_capacity(responses.len());
    let mut rewards = Vec::with_capacity(responses.len());
    for y in &responses {
        probs.push(policy.prob(prompt, y)?);
        rewards.push(implicit_reward(policy, reference, prompt, y, beta)?);
    }
    let mut grad = vec![0.0; policy.n_params()];
    for (y, response) in responses.iter().enumerate() {
        if probs[y] == 0.0 {
            continue;
        }
        let mut asymmetry = 0.0;
        for other in 0..responses.len() {
            asymmetry += probs[other]
                * (sigmoid(rewards[y] - rewards[other]) - sigmoid(rewards[other] - rewards[y]));
        }
        let coef = beta * probs[y] * asymmetry;
        if coef != 0.0 {
            accumulate_log_prob_grad(policy, prompt, response, coef, &mut grad)?;
        }
    }
    Ok(grad)
}

/// Training hyperparameters for the full-batch loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Recorded for provenance; the loop itself is deterministic.
    pub seed: u64,
}

impl DpoConfig {
    pub fn new(beta: f64, learning_rate: f64, steps: usize, seed: u64) -> Result<Self> {
        check_beta(beta)?;
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        Ok(Self {
            beta,
            learning_rate,
            steps,
            seed,
        })
    }
}

/// One row of the training trace, recorded before the step's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub loss: f64,
    pub margin: f64,
    pub grad_norm: f64,
}

/// Per-step loss, margin, and gradient norm over a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub steps: Vec<TraceStep>,
}

impl TrainTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    pub fn final_margin(&self) -> Option<f64> {
        self.steps.last().map(|s| s.margin)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Run full-batch gradient descent on the DPO loss. Deterministic: no
/// minibatching, no momentum, no randomness.
pub fn train(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    pairs: &[TokenPair],
    config: &DpoConfig,
) -> Result<(TabularPolicy, TrainTrace)> {
    check_shapes(policy, reference)?;
    let config = DpoConfig::new(config.beta, config.learning_rate, config.steps, config.seed)?;
    let mut current = policy.clone();
    let mut trace = TrainTrace::default();
    for step in 0..config.steps {
        let loss = dpo_loss(&current, reference, pairs, config.beta)?;
        let margin = mean_margin(&current, reference, pairs, config.beta)?;
        let grad = dpo_gradient(&current, reference, pairs, config.beta)?;
        let grad_norm = l2_norm(&grad);
        if !loss.is_finite() || !margin.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        trace.steps.push(TraceStep {
            step,
            loss,
            margin,
            grad_norm,
        });
        current.gradient_step(&grad, config.learning_rate);
    }
    Ok((current, trace))
}
