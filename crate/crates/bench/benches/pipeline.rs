use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use laft_core::corpus::SplitTag;
use laft_core::harness::SynthSpec;
use laft_core::noise::{self, NoiseKind, NoiseSpec};
use laft_core::objective::{loss_gradient, LossWeights, NoisyRule, ObjectiveContext, ObjectiveSample};
use laft_core::oracle::SimulatedOracle;
use laft_core::separate::{coarse_separate, fine_separate, Subset, ThresholdSchedule};
use laft_core::trainer::{Classifier, HashedFeaturizer, LinearClassifier, SparseFeatures};
use laft_core::ConfidenceVector;

fn bench(c: &mut Criterion) {
    let spec = SynthSpec::default();
    let clean = spec.generate("b", 2000, SplitTag::Train).unwrap();
    let featurizer = HashedFeaturizer::default();

    c.bench_function("featurize 2000 texts", |b| {
        b.iter(|| clean.samples().iter().map(|s| featurizer.features(black_box(&s.text)).nnz()).sum::<usize>())
    });

    c.bench_function("inject idn 40%", |b| {
        b.iter(|| noise::inject(black_box(&clean), &NoiseSpec::new(NoiseKind::Idn, 0.4, 1)).unwrap())
    });

    let (train, _) = noise::inject(&clean, &NoiseSpec::new(NoiseKind::Sn, 0.4, 1)).unwrap();
    let oracle = SimulatedOracle::new(0.8, 2.0, 0).unwrap();
    let n = train.num_classes();
    let llm_conf: HashMap<String, ConfidenceVector> = train
        .samples()
        .iter()
        .map(|s| (s.id.clone(), oracle.confidences(s, n, 0).unwrap()))
        .collect();
    let llm: HashMap<String, usize> = llm_conf.iter().map(|(k, v)| (k.clone(), v.argmax())).collect();
    let model = LinearClassifier::zeros(n, featurizer.dim());
    let clf: HashMap<String, ConfidenceVector> = train
        .samples()
        .iter()
        .map(|s| (s.id.clone(), model.confidence(&featurizer.features(&s.text)).unwrap()))
        .collect();
    let sched = ThresholdSchedule::default();

    c.bench_function("separate 2000 samples", |b| {
        b.iter(|| {
            let (_, d) = coarse_separate(&train, &llm).unwrap();
            fine_separate(&d, Some(&llm_conf), &clf, &sched, 5).unwrap()
        })
    });

    let feats: Vec<SparseFeatures> = train.samples()[..32].iter().map(|s| featurizer.features(&s.text)).collect();
    let batch: Vec<ObjectiveSample<'_>> = train.samples()[..32]
        .iter()
        .zip(&feats)
        .enumerate()
        .map(|(i, (s, x))| ObjectiveSample {
            features: x,
            subset: Subset::ALL[i % 3],
            easy_label: llm[&s.id],
            assigned: s.assigned_label,
            llm_agg: &llm_conf[&s.id],
        })
        .collect();
    let ctx = ObjectiveContext {
        epoch: 3,
        schedule: sched,
        weights: LossWeights::default(),
        noisy_rule: NoisyRule::OracleSoft,
    };
    c.bench_function("loss gradient, batch 32", |b| b.iter(|| loss_gradient(&model, black_box(&batch), &ctx).unwrap()));
}

criterion_group!(benches, bench);
criterion_main!(benches);
