//! Randomized verification sweeps: many independent seeded instances per
//! inequality, each checked by exact enumeration.
//!
//! Rows are keyed by instance seed, so any reported violation reproduces
//! in isolation.

use crate::bounds::{
    chebyshev_mass_check, lemma1_check, lemma2_check, lemma3_check, online_pvar, theorem1_check,
    theorem2_check, BoundCheck, ChebyshevCheck, LemmaCheck,
};
use crate::error::Result;
use crate::synth;

/// One theorem-check row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremSweepRow {
    pub seed: u64,
    pub check: BoundCheck,
}

/// A theorem-2 row also carries the online PVar at the trained parameters
/// so the pre-cube-root inequality can be inspected.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2SweepRow {
    pub seed: u64,
    pub check: BoundCheck,
    pub online_pvar: f64,
}

impl Theorem2SweepRow {
    /// The proof's key step before taking cube roots:
    /// online PVar <= offline PVar + Xi.
    pub fn intermediate_holds(&self) -> bool {
        let xi = self.check.xi.as_ref().map_or(0.0, |x| x.total());
        self.online_pvar <= self.check.pvar + xi + crate::bounds::LEMMA_TOL
    }
}

/// Check the online gradient bound on `count` random tabular instances.
pub fn theorem1_sweep(count: usize, base_seed: u64) -> Result<Vec<TheoremSweepRow>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let (policy, reference, beta) = synth::theorem1_instance(seed);
        let check = theorem1_check(&policy, &reference, 0, beta)?;
        rows.push(TheoremSweepRow { seed, check });
    }
    Ok(rows)
}

/// Check the offline-to-online bound on `count` random instances with
/// perturbed reward models and 1 to 50 training steps.
pub fn theorem2_sweep(count: usize, base_seed: u64) -> Result<Vec<Theorem2SweepRow>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let instance = synth::theorem2_instance(seed)?;
        let check = theorem2_check(
            &instance.policy,
            &instance.policy_initial,
            &instance.reward_phi,
            &instance.reward_star,
            &instance.reference,
            0,
            instance.beta,
        )?;
        let online = online_pvar(&instance.policy, &instance.reference, 0, instance.beta)?;
        rows.push(Theorem2SweepRow {
            seed,
            check,
            online_pvar: online,
        });
    }
    Ok(rows)
}

/// Check the Chebyshev mass inequality on `count` random instances.
pub fn chebyshev_sweep(count: usize, base_seed: u64) -> Result<Vec<(u64, ChebyshevCheck)>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let (policy, reference, beta, c) = synth::chebyshev_instance(seed);
        rows.push((seed, chebyshev_mass_check(&policy, &reference, 0, beta, c)?));
    }
    Ok(rows)
}

pub fn lemma1_sweep(count: usize, base_seed: u64) -> Result<Vec<(u64, LemmaCheck)>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let (values, mu, nu) = synth::lemma1_instance(seed);
        rows.push((seed, lemma1_check(&values, &mu, &nu)?));
    }
    Ok(rows)
}

pub fn lemma2_sweep(count: usize, base_seed: u64) -> Result<Vec<(u64, LemmaCheck)>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let (a, b, mu) = synth::lemma2_instance(seed);
        rows.push((seed, lemma2_check(&a, &b, &mu)?));
    }
    Ok(rows)
}

pub fn lemma3_sweep(count: usize, base_seed: u64) -> Result<Vec<(u64, LemmaCheck)>> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let seed = base_seed.wrapping_add(i as u64);
        let (p, q) = synth::lemma3_instance(seed);
        rows.push((seed, lemma3_check(&p, &q)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_are_deterministic_and_hold() {
        let first = theorem1_sweep(25, 1000).unwrap();
        let second = theorem1_sweep(25, 1000).unwrap();
        assert_eq!(first, second);
        assert!(first.iter().all(|row| row.check.holds));

        let t2 = theorem2_sweep(10, 2000).unwrap();
        assert!(t2
            .iter()
            .all(|row| row.check.holds && row.intermediate_holds()));

        assert!(chebyshev_sweep(25, 3000)
            .unwrap()
            .iter()
            .all(|(_, c)| c.holds));
        assert!(lemma1_sweep(50, 4000).unwrap().iter().all(|(_, c)| c.holds));
        assert!(lemma2_sweep(50, 5000).unwrap().iter().all(|(_, c)| c.holds));
        assert!(lemma3_sweep(50, 6000).unwrap().iter().all(|(_, c)| c.holds));
    }
}
