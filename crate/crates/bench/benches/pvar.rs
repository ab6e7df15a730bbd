use criterion::{black_box, criterion_group, criterion_main, Criterion};

use pvar_bench::{bound_instance, scored_dataset, training_pairs};
use pvar_core::bounds::{theorem1_check, theorem2_check};
use pvar_core::pvar::{batch_estimate, estimate_pvar};
use pvar_core::synth;
use pvar_core::toydpo::{expected_dpo_gradient, train, DpoConfig};

fn bench_estimator(c: &mut Criterion) {
    let rewards = [0.3, -1.2, 0.9, 2.4, -0.7];
    c.bench_function("estimate_pvar_n5", |b| {
        b.iter(|| estimate_pvar(black_box(&rewards)).unwrap())
    });

    let dataset = scored_dataset(1000, 1);
    c.bench_function("batch_estimate_1000_prompts", |b| {
        b.iter(|| batch_estimate(black_box(&dataset)))
    });
}

fn bench_gradients(c: &mut Criterion) {
    let (policy, reference, beta) = bound_instance(2);
    c.bench_function("expected_dpo_gradient_v5_l2", |b| {
        b.iter(|| expected_dpo_gradient(black_box(&policy), &reference, 0, beta).unwrap())
    });

    let pairs = training_pairs(&policy, 6, 3);
    let config = DpoConfig::new(1.0, 0.1, 200, 0).unwrap();
    c.bench_function("train_200_steps_6_pairs", |b| {
        b.iter(|| train(black_box(&policy), &reference, &pairs, &config).unwrap())
    });
}

fn bench_bound_checks(c: &mut Criterion) {
    let (policy, reference, beta) = bound_instance(4);
    c.bench_function("theorem1_check_v5_l2", |b| {
        b.iter(|| theorem1_check(black_box(&policy), &reference, 0, beta).unwrap())
    });

    let instance = synth::theorem2_instance(5).unwrap();
    c.bench_function("theorem2_check", |b| {
        b.iter(|| {
            theorem2_check(
                black_box(&instance.policy),
                &instance.policy_initial,
                &instance.reward_phi,
                &instance.reward_star,
                &instance.reference,
                0,
                instance.beta,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_estimator,
    bench_gradients,
    bench_bound_checks
);
criterion_main!(benches);
