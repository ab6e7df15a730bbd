//! Numerical verification of the PVar gradient bounds and their supporting
//! lemmas on enumerable tabular instances.
//!
//! Every expectation, variance, supremum, and total-variation distance here
//! is computed by exact enumeration over the response space, so a `holds`
//! flag is an arithmetic fact about the instance, not a statistical claim.
//! Tolerances only absorb floating-point rounding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pvar::{exact_pvar, sigmoid, DiscreteDistribution};
use crate::toydpo::{expected_dpo_gradient, implicit_reward, l2_norm, TabularPolicy};

/// Slack tolerance for the theorem checks; absorbs rounding in the cube
/// root and the gradient norm.
pub const BOUND_TOL: f64 = 1e-9;
/// Tolerance for the exact lemma and Chebyshev checks.
pub const LEMMA_TOL: f64 = 1e-12;

/// Upper bound on the spectral norm of the logit Jacobian with respect to
/// the parameters.
///
/// For a tabular policy the logit row of a context state *is* a slice of
/// the parameter vector, so the Jacobian is a fixed 0/1 selection matrix
/// with orthonormal rows and spectral norm exactly 1, independent of the
/// parameter values.
pub fn gamma(_policy: &TabularPolicy) -> f64 {
    1.0
}

/// The gradient-bound constant: 8 * beta * |y| * gamma, with |y| the
/// maximum response length.
pub fn constant_c(beta: f64, max_len: usize, gamma: f64) -> f64 {
    8.0 * beta * max_len as f64 * gamma
}

/// Online preference variance: the variance, under the policy's own
/// product distribution, of the preference probability built from implicit
/// rewards.
pub fn online_pvar(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
) -> Result<f64> {
    let dist = policy.response_distribution(prompt)?;
    let mut rewards = Vec::with_capacity(policy.n_responses());
    for y in policy.enumerate_responses() {
        rewards.push(implicit_reward(policy, reference, prompt, &y, beta)?);
    }
    exact_pvar(&dist, &rewards)
}

/// The three components of the offline-to-online error term, each computed
/// exactly over the enumerated response space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiBreakdown {
    /// 2 * sup_y |implicit reward - external reward|.
    pub policy_reward_disagreement: f64,
    /// 2 * sup_y |external reward - ground-truth reward|.
    pub reward_model_error: f64,
    /// 6 * TV between the product measures of the current and initial
    /// policies.
    pub policy_shift: f64,
}

impl XiBreakdown {
    pub fn total(&self) -> f64 {
        self.policy_reward_disagreement + self.reward_model_error + self.policy_shift
    }
}

/// One verified bound instance: gradient norm, the PVar entering the
/// bound, the assembled bound value, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub grad_norm: f64,
    /// Online PVar for the first theorem, offline PVar for the second.
    pub pvar: f64,
    pub constant_c: f64,
    pub bound_value: f64,
    pub xi: Option<XiBreakdown>,
    pub holds: bool,
    /// bound_value - grad_norm; negative beyond [`BOUND_TOL`] means a
    /// violation.
    pub slack: f64,
}

impl BoundCheck {
    fn assemble(grad_norm: f64, pvar: f64, constant: f64, xi: Option<XiBreakdown>) -> Self {
        let inner = pvar + xi.as_ref().map_or(0.0, XiBreakdown::total);
        let bound_value = constant * inner.cbrt();
        BoundCheck {
            grad_norm,
            pvar,
            constant_c: constant,
            bound_value,
            xi,
            holds: grad_norm <= bound_value + BOUND_TOL,
            slack: bound_value - grad_norm,
        }
    }
}

/// Check `||grad L_DPO|| <= 8 beta |y| gamma * PVar^(1/3)` for one prompt,
/// with the gradient taken in expectation over the policy's own pair
/// distribution and PVar the online preference variance.
pub fn theorem1_check(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
) -> Result<BoundCheck> {
    let grad = expected_dpo_gradient(policy, reference, prompt, beta)?;
    let pvar = online_pvar(policy, reference, prompt, beta)?;
    let constant = constant_c(beta, policy.horizon(), gamma(policy));
    Ok(BoundCheck::assemble(l2_norm(&grad), pvar, constant, None))
}

/// The two-term bound split behind the theorem, evaluated at the
/// minimizing threshold c = (2 PVar)^(1/3): the near-1/2 pairs contribute
/// at most 4 beta c |y| gamma, the tail pairs at most
/// 4 beta |y| gamma PVar / c^2. Their sum dominates the gradient norm and
/// is itself below the rounded-up single constant.
pub fn decomposed_bound(beta: f64, max_len: usize, gamma: f64, pvar: f64) -> (f64, f64) {
    if pvar <= 0.0 {
        return (0.0, 0.0);
    }
    let threshold = (2.0 * pvar).cbrt();
    let near_half = 4.0 * beta * threshold * max_len as f64 * gamma;
    let tail = 4.0 * beta * max_len as f64 * gamma * pvar / (threshold * threshold);
    (near_half, tail)
}

/// Result of one Chebyshev mass comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevCheck {
    /// Exact probability mass of pairs with |p - 1/2| > c.
    pub mass: f64,
    /// PVar / c^2.
    pub bound: f64,
    pub holds: bool,
}

/// Exact mass of the extreme-preference pair set against its Chebyshev
/// bound PVar / c^2.
pub fn chebyshev_mass_check(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
    c: f64,
) -> Result<ChebyshevCheck> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "threshold c must be positive and finite, got {c}"
        )));
    }
    let dist = policy.response_distribution(prompt)?;
    let probs = dist.probs();
    let mut rewards = Vec::with_capacity(probs.len());
    for y in policy.enumerate_responses() {
        rewards.push(implicit_reward(policy, reference, prompt, &y, beta)?);
    }
    let mut mass = 0.0;
    for (i, &pi) in probs.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        for (j, &pj) in probs.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let pref = sigmoid(rewards[i] - rewards[j]);
            if (pref - 0.5).abs() > c {
                mass += pi * pj;
            }
        }
    }
    let pvar = exact_pvar(&dist, &rewards)?;
    let bound = pvar / (c * c);
    Ok(ChebyshevCheck {
        mass,
        bound,
        holds: mass <= bound + LEMMA_TOL,
    })
}

/// Total variation distance between two distributions on the same support:
/// half the L1 distance.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {} vs {} outcomes",
            p.len(),
            q.len()
        )));
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0)
}

/// Exact TV distance between the product measures p x p and q x q.
pub fn product_tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {} vs {} outcomes",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (pi, qi) in p.probs().iter().zip(q.probs()) {
        for (pj, qj) in p.probs().iter().zip(q.probs()) {
            total += (pi * pj - qi * qj).abs();
        }
    }
    Ok(total / 2.0)
}

/// Two exactly evaluated sides of an inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl LemmaCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        LemmaCheck {
            lhs,
            rhs,
            holds: lhs <= rhs + LEMMA_TOL,
        }
    }
}

/// Variance difference by measure change:
/// |Var_mu(U) - Var_nu(U)| <= 6 TV(mu, nu) for U bounded in [0, 1].
pub fn lemma1_check(
    values: &[f64],
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
) -> Result<LemmaCheck> {
    if values.len() != mu.len() || values.len() != nu.len() {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {} values vs {} and {} outcomes",
            values.len(),
            mu.len(),
            nu.len()
        )));
    }
    if let Some(v) = values
        .iter()
        .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::InvalidInput(format!(
            "lemma 1 needs values in [0, 1], got {v}"
        )));
    }
    let lhs = (mu.variance(values)? - nu.variance(values)?).abs();
    let rhs = 6.0 * tv_distance(mu, nu)?;
    Ok(LemmaCheck::new(lhs, rhs))
}

/// PVar difference by reward change under a fixed measure:
/// |PVar(r1) - PVar(r2)| <= 2 sup |r1 - r2|.
pub fn lemma2_check(
    rewards_a: &[f64],
    rewards_b: &[f64],
    mu: &DiscreteDistribution,
) -> Result<LemmaCheck> {
    if rewards_a.len() != rewards_b.len() || rewards_a.len() != mu.len() {
        return Err(Error::InvalidInput(format!(
            "support mismatch: {} vs {} rewards on {} outcomes",
            rewards_a.len(),
            rewards_b.len(),
            mu.len()
        )));
    }
    let lhs = (exact_pvar(mu, rewards_a)? - exact_pvar(mu, rewards_b)?).abs();
    let delta = rewards_a
        .iter()
        .zip(rewards_b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(LemmaCheck::new(lhs, 2.0 * delta))
}

/// TV of product measures against twice the marginal TV:
/// TV(p x p, q x q) <= 2 TV(p, q).
pub fn lemma3_check(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<LemmaCheck> {
    let lhs = product_tv_distance(p, q)?;
    let rhs = 2.0 * tv_distance(p, q)?;
    Ok(LemmaCheck::new(lhs, rhs))
}

/// Compute the three error components bridging offline PVar to the online
/// gradient bound. `reward_phi` and `reward_star` are per-response values
/// in [`TabularPolicy::enumerate_responses`] order.
pub fn xi_terms(
    policy_theta: &TabularPolicy,
    policy_theta0: &TabularPolicy,
    reward_phi: &[f64],
    reward_star: &[f64],
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
) -> Result<XiBreakdown> {
    if !policy_theta.same_shape(policy_theta0) || !policy_theta.same_shape(reference) {
        return Err(Error::InvalidInput(
            "policy, initial policy, and reference must share a shape".to_string(),
        ));
    }
    let n = policy_theta.n_responses();
    if reward_phi.len() != n || reward_star.len() != n {
        return Err(Error::InvalidInput(format!(
            "need {n} rewards per function, got {} and {}",
            reward_phi.len(),
            reward_star.len()
        )));
    }
    if reward_phi.iter().chain(reward_star).any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite reward".to_string()));
    }
    let mut disagreement = 0.0f64;
    for (k, y) in policy_theta.enumerate_responses().iter().enumerate() {
        let implicit = implicit_reward(policy_theta, reference, prompt, y, beta)?;
        disagreement = disagreement.max((implicit - reward_phi[k]).abs());
    }
    let model_error = reward_phi
        .iter()
        .zip(reward_star)
        .map(|(phi, star)| (phi - star).abs())
        .fold(0.0, f64::max);
    let shift = product_tv_distance(
        &policy_theta.response_distribution(prompt)?,
        &policy_theta0.response_distribution(prompt)?,
    )?;
    Ok(XiBreakdown {
        policy_reward_disagreement: 2.0 * disagreement,
        reward_model_error: 2.0 * model_error,
        policy_shift: 6.0 * shift,
    })
}

/// Check the offline-to-online bound
/// `||grad|| <= C * (offline PVar + Xi)^(1/3)`, with the offline PVar the
/// exact preference variance of the external rewards under the initial
/// policy's product measure.
pub fn theorem2_check(
    policy_theta: &TabularPolicy,
    policy_theta0: &TabularPolicy,
    reward_phi: &[f64],
    reward_star: &[f64],
    reference: &TabularPolicy,
    prompt: usize,
    beta: f64,
) -> Result<BoundCheck> {
    let xi = xi_terms(
        policy_theta,
        policy_theta0,
        reward_phi,
        reward_star,
        reference,
        prompt,
        beta,
    )?;
    let offline_pvar = exact_pvar(&policy_theta0.response_distribution(prompt)?, reward_phi)?;
    let grad = expected_dpo_gradient(policy_theta, reference, prompt, beta)?;
    let constant = constant_c(beta, policy_theta.horizon(), gamma(policy_theta));
    Ok(BoundCheck::assemble(
        l2_norm(&grad),
        offline_pvar,
        constant,
        Some(xi),
    ))
}
