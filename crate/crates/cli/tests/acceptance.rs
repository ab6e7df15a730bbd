//! Acceptance suite: one test per criterion, each printing a summary line
//! (visible with `--nocapture`) after its assertions pass.
//!
//! Run with:
//!   cargo test -p pvar-cli --test acceptance -- --nocapture

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvar_cli::io;
use pvar_core::bounds::{online_pvar, BOUND_TOL, LEMMA_TOL};
use pvar_core::model::StrategyKind;
use pvar_core::pvar::{batch_estimate, estimate_pvar, preference_probability};
use pvar_core::selection::{select, selection_count, SelectionStrategy};
use pvar_core::sweep;
use pvar_core::synth;
use pvar_core::toydpo::{
    dpo_gradient, dpo_loss, expected_dpo_gradient, l2_norm, mean_margin, train, DpoConfig,
    TabularPolicy, TokenPair,
};

fn random_rewards(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect()
}

#[test]
fn criterion_01_estimator_matches_double_loop_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut max_diff = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let rewards = random_rewards(&mut rng, n);

        // Independent oracle: full double loop over ordered pairs.
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let p = 1.0 / (1.0 + (-(rewards[i] - rewards[j])).exp());
                    sum += (p - 0.5) * (p - 0.5);
                }
            }
        }
        let oracle = sum / (n * (n - 1)) as f64;
        let diff = (estimate_pvar(&rewards).unwrap() - oracle).abs();
        max_diff = max_diff.max(diff);
        assert!(diff < 1e-12, "estimator diverged from oracle by {diff}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "[acceptance] criterion 1 (estimator-oracle equivalence): \
         1000 lists, max |diff| = {max_diff:.2e}, elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_02_estimator_range_symmetry_shift_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);

    let mut worst_symmetry = 0.0f64;
    for _ in 0..10_000 {
        let a = rng.gen_range(-50.0..50.0);
        let b = rng.gen_range(-50.0..50.0);
        let gap = (preference_probability(a, b).unwrap() + preference_probability(b, a).unwrap()
            - 1.0)
            .abs();
        worst_symmetry = worst_symmetry.max(gap);
        assert!(gap < 1e-12, "symmetry violated by {gap}");
    }

    let mut worst_shift = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let rewards = random_rewards(&mut rng, n);
        let pvar = estimate_pvar(&rewards).unwrap();
        assert!((0.0..=0.25).contains(&pvar), "pvar {pvar} out of range");

        let shift = rng.gen_range(-50.0..50.0);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let gap = (pvar - estimate_pvar(&shifted).unwrap()).abs();
        worst_shift = worst_shift.max(gap);
        assert!(gap < 1e-12, "shift invariance violated by {gap}");
    }
    println!(
        "[acceptance] criterion 2 (range, symmetry, shift invariance): \
         worst symmetry gap {worst_symmetry:.2e}, worst shift gap {worst_shift:.2e} -> PASS"
    );
}

#[test]
fn criterion_03_analytic_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut worst = 0.0f64;
    for instance in 0..100 {
        let (policy, reference, beta) = synth::theorem1_instance(3000 + instance);
        let responses = policy.enumerate_responses();
        let n_pairs = rng.gen_range(2..=6);
        let mut pairs = Vec::with_capacity(n_pairs);
        while pairs.len() < n_pairs {
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

        let analytic = dpo_gradient(&policy, &reference, &pairs, beta).unwrap();

        let step = 1e-5;
        let mut numeric = vec![0.0; policy.n_params()];
        for k in 0..policy.n_params() {
            let mut up = policy.logits().to_vec();
            up[k] += step;
            let mut down = policy.logits().to_vec();
            down[k] -= step;
            let plus = dpo_loss(
                &TabularPolicy::new(1, policy.vocab(), policy.horizon(), up).unwrap(),
                &reference,
                &pairs,
                beta,
            )
            .unwrap();
            let minus = dpo_loss(
                &TabularPolicy::new(1, policy.vocab(), policy.horizon(), down).unwrap(),
                &reference,
                &pairs,
                beta,
            )
            .unwrap();
            numeric[k] = (plus - minus) / (2.0 * step);
        }

        let mut diff = 0.0;
        for (a, b) in analytic.iter().zip(&numeric) {
            diff += (a - b) * (a - b);
        }
        let relative = diff.sqrt() / l2_norm(&numeric).max(1e-10);
        worst = worst.max(relative);
        assert!(
            relative < 1e-6,
            "instance {instance}: relative gradient error {relative}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "[acceptance] criterion 3 (gradient vs central differences): \
         100 instances, worst relative error {worst:.2e}, elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_04_theorem1_sweep_holds_on_1000_instances() {
    let start = Instant::now();
    let rows = sweep::theorem1_sweep(1000, 40_000).unwrap();
    assert_eq!(rows.len(), 1000);
    let mut min_slack = f64::INFINITY;
    for row in &rows {
        min_slack = min_slack.min(row.check.slack);
        assert!(
            row.check.slack >= -BOUND_TOL,
            "seed {}: gradient norm {} exceeds bound {}",
            row.seed,
            row.check.grad_norm,
            row.check.bound_value
        );
        assert!(row.check.holds);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");

    // The exported sweep report: 1000 data rows, holds column all true.
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    io::emit_bound_sweep(&rows, &csv_path).unwrap();
    let body = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(body.lines().count(), 1001);
    assert!(body.lines().skip(1).all(|line| line.ends_with(",true")));

    println!(
        "[acceptance] criterion 4 (theorem-1 sweep): 1000/1000 hold, \
         min slack {min_slack:.3e}, elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_05_theorem2_sweep_holds_on_500_instances() {
    let start = Instant::now();
    let rows = sweep::theorem2_sweep(500, 50_000).unwrap();
    assert_eq!(rows.len(), 500);
    let mut min_slack = f64::INFINITY;
    for row in &rows {
        min_slack = min_slack.min(row.check.slack);
        assert!(
            row.check.holds,
            "seed {}: gradient norm {} exceeds bound {}",
            row.seed, row.check.grad_norm, row.check.bound_value
        );
        let xi = row.check.xi.expect("theorem-2 checks carry xi");
        assert!(
            row.online_pvar <= row.check.pvar + xi.total() + LEMMA_TOL,
            "seed {}: online PVar {} exceeds offline {} + xi {}",
            row.seed,
            row.online_pvar,
            row.check.pvar,
            xi.total()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "[acceptance] criterion 5 (theorem-2 sweep): 500/500 hold incl. \
         intermediate inequality, min slack {min_slack:.3e}, elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_06_lemma_and_chebyshev_sweeps_hold() {
    let start = Instant::now();
    let lemma1 = sweep::lemma1_sweep(1000, 60_000).unwrap();
    assert!(lemma1.iter().all(|(_, c)| c.holds), "lemma 1 violated");
    let lemma2 = sweep::lemma2_sweep(1000, 61_000).unwrap();
    assert!(lemma2.iter().all(|(_, c)| c.holds), "lemma 2 violated");
    let lemma3 = sweep::lemma3_sweep(1000, 62_000).unwrap();
    assert!(lemma3.iter().all(|(_, c)| c.holds), "lemma 3 violated");
    let chebyshev = sweep::chebyshev_sweep(1000, 63_000).unwrap();
    assert!(chebyshev.iter().all(|(_, c)| c.holds), "chebyshev violated");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "[acceptance] criterion 6 (lemmas 1-3 + chebyshev): 4 x 1000/1000 hold, \
         elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_07_selection_determinism_and_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);

    // select == sort-then-prefix oracle on 1000 random score sets.
    for round in 0..1000 {
        let n = rng.gen_range(1..=50);
        let scores: Vec<(String, f64)> = (0..n)
            .map(|i| (format!("p{i:03}"), rng.gen_range(0.0..0.25)))
            .collect();
        let fraction = rng.gen_range(0.01..=1.0);
        let strategy = SelectionStrategy::new(StrategyKind::PvarTop, fraction, 0).unwrap();
        let manifest = select(&scores, &strategy, n).unwrap();

        let mut oracle = scores.clone();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let keep = selection_count(fraction, n);
        let expected: Vec<String> = oracle[..keep].iter().map(|(id, _)| id.clone()).collect();
        assert_eq!(manifest.selected, expected, "round {round} diverged");
    }

    // Identical seeds produce byte-identical manifest files.
    let dir = tempfile::tempdir().unwrap();
    let scores: Vec<(String, f64)> = (0..40)
        .map(|i| (format!("p{i:03}"), rng.gen_range(0.0..0.25)))
        .collect();
    for kind in [StrategyKind::Random, StrategyKind::PvarTop] {
        let strategy = SelectionStrategy::new(kind, 0.3, 77).unwrap();
        let first_path = dir.path().join(format!("{kind}_a.json"));
        let second_path = dir.path().join(format!("{kind}_b.json"));
        io::emit_manifest(&select(&scores, &strategy, 40).unwrap(), &first_path).unwrap();
        io::emit_manifest(&select(&scores, &strategy, 40).unwrap(), &second_path).unwrap();
        assert_eq!(
            std::fs::read(&first_path).unwrap(),
            std::fs::read(&second_path).unwrap(),
            "{kind} manifests differ between identical runs"
        );
    }

    // The paper's top-10% regime: fraction 0.1 over 100 prompts keeps 10.
    let scores: Vec<(String, f64)> = (0..100)
        .map(|i| (format!("p{i:03}"), rng.gen_range(0.0..0.25)))
        .collect();
    let strategy = SelectionStrategy::new(StrategyKind::PvarTop, 0.1, 0).unwrap();
    let manifest = select(&scores, &strategy, 100).unwrap();
    assert_eq!(manifest.selected.len(), 10);

    println!(
        "[acceptance] criterion 7 (selection determinism and correctness): \
         1000 oracle matches, byte-identical manifests, 0.1 x 100 = 10 -> PASS"
    );
}

#[test]
fn criterion_08_top_pvar_half_trains_to_lower_loss_and_higher_margin() {
    let start = Instant::now();
    let spec = synth::ToyDatasetSpec {
        seed: 42,
        ..Default::default()
    };
    let dataset = synth::toy_dataset(&spec).unwrap();
    let outcome = batch_estimate(&dataset.records);
    assert_eq!(
        outcome.estimates.len(),
        dataset.records.len(),
        "every synthetic prompt must be estimable"
    );
    let scores: Vec<(String, f64)> = outcome
        .estimates
        .iter()
        .map(|e| (e.prompt_id.clone(), e.pvar))
        .collect();

    let config = DpoConfig::new(1.0, 0.1, 200, spec.seed).unwrap();
    let mut results = Vec::new();
    for kind in [StrategyKind::PvarTop, StrategyKind::PvarBottom] {
        let strategy = SelectionStrategy::new(kind, 0.5, spec.seed).unwrap();
        let manifest = select(&scores, &strategy, scores.len()).unwrap();
        let pairs = dataset.token_pairs(&manifest.selected).unwrap();
        assert_eq!(pairs.len(), dataset.records.len() / 2);
        let (trained, trace) = train(&dataset.policy, &dataset.policy, &pairs, &config).unwrap();
        assert_eq!(trace.steps.len(), 200);
        let loss = dpo_loss(&trained, &dataset.policy, &pairs, config.beta).unwrap();
        let margin = mean_margin(&trained, &dataset.policy, &pairs, config.beta).unwrap();
        results.push((kind, loss, margin));
    }
    let (_, top_loss, top_margin) = results[0];
    let (_, bottom_loss, bottom_margin) = results[1];
    assert!(
        top_loss < bottom_loss,
        "top-PVar half should train to lower loss: {top_loss} vs {bottom_loss}"
    );
    assert!(
        top_margin > bottom_margin,
        "top-PVar half should reach higher margin: {top_margin} vs {bottom_margin}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "[acceptance] criterion 8 (toy replication): top half loss {top_loss:.4} < \
         bottom {bottom_loss:.4}, top margin {top_margin:.4} > bottom {bottom_margin:.4}, \
         elapsed {elapsed:?} -> PASS"
    );
}

#[test]
fn criterion_09_trivial_anchors_at_the_reference_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let policy = synth::random_policy(&mut rng, 1, 4, 2, 2.0).unwrap();
    let responses = policy.enumerate_responses();
    let pairs = vec![
        TokenPair::new(0, responses[2].clone(), responses[11].clone()),
        TokenPair::new(0, responses[7].clone(), responses[0].clone()),
    ];

    let loss = dpo_loss(&policy, &policy, &pairs, 0.37).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);

    let pvar = online_pvar(&policy, &policy, 0, 0.37).unwrap();
    assert_eq!(pvar, 0.0);

    let grad = expected_dpo_gradient(&policy, &policy, 0, 0.37).unwrap();
    assert!(grad.iter().all(|g| g.abs() < 1e-12));

    println!(
        "[acceptance] criterion 9 (trivial anchors): loss = log 2, online PVar = 0, \
         expected gradient = 0 -> PASS"
    );
}
