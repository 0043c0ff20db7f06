// SPDX-License-Identifier: MIT OR Apache-2.0

use std::hint::black_box;

use cbmw_core::cbm::{train, TrainConfig};
use cbmw_core::intervene::{
    run_intervention, ConceptEdit, InterventionRequest, PropagationMode, Target, ValueSource,
};
use cbmw_core::metrics::mutual_information;
use cbmw_core::nn::{bce_grad, Activation, DenseNet, Gradients};
use cbmw_core::{Mode, PatientRecord, Split};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = DenseNet::init(&[40, 64, 20], &[Activation::Relu, Activation::Sigmoid], &mut rng).unwrap();
    let x: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
    let t: Vec<f64> = (0..20).map(|_| f64::from(rng.random_range(0..2u8))).collect();
    let mut grads = Gradients::zeros_like(&g);

    c.bench_function("concept_net_forward", |b| b.iter(|| g.forward(black_box(&x)).unwrap()));
    c.bench_function("concept_net_forward_backward", |b| {
        b.iter(|| {
            let trace = g.forward_trace(black_box(&x)).unwrap();
            let d: Vec<f64> = trace.output().iter().zip(&t).map(|(&p, &t)| bce_grad(p, t)).collect();
            g.backward(&trace, &d, &mut grads)
        })
    });
}

fn interventions(c: &mut Criterion) {
    let (cohort, stats) = cbmw_bench::cohort(600, 3);
    let cfg = TrainConfig { seed: 3, mode: Mode::ContextAware, epochs: 5, ..TrainConfig::default() };
    let model = train(&cohort, &cfg).unwrap();
    let records: Vec<&PatientRecord> = cohort.split(Split::Test).collect();
    let edits: Vec<ConceptEdit> = ["sofa_respiration_worst", "sofa_renal_avg", "sofa_cardiovascular_worst"]
        .iter()
        .map(|n| ConceptEdit::new(n.to_string(), ValueSource::GroundTruth))
        .collect();

    let mut group = c.benchmark_group("intervention_test_split");
    for mode in [PropagationMode::Independent, PropagationMode::Correlated] {
        let request = InterventionRequest::new(edits.clone(), mode).with_target(Target::All);
        group.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| run_intervention(&model, &stats, black_box(&records), &request).unwrap())
        });
    }
    group.finish();
}

fn mutual_info(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<u8> = (0..2000).map(|_| rng.random_range(0..2)).collect();
    let b: Vec<u8> = a.iter().map(|&v| if rng.random_bool(0.2) { 1 - v } else { v }).collect();
    c.bench_function("mutual_information_2000", |bn| {
        bn.iter(|| mutual_information(black_box(&a), black_box(&b)).unwrap())
    });
}

criterion_group!(benches, forward_backward, interventions, mutual_info);
criterion_main!(benches);
