use avsad::audio::AcousticConfig;
use avsad::corpus::{corpus_utterance, CorpusConfig};
use avsad::features::{assemble_utterance, extract_features, FeatureKind};
use avsad::nn::{LayerSpec, Pass};
use avsad::video::LandmarkSchema;
use avsad::zoo::{build_brnn, BrnnConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn features(c: &mut Criterion) {
    let cfg = CorpusConfig {
        duration_range: [3.0, 3.0],
        ..CorpusConfig::default()
    };
    let u = corpus_utterance(&cfg, 0, 0);
    let (ac, schema) = (AcousticConfig::default(), LandmarkSchema::default());
    let mut g = c.benchmark_group("extract 3s");
    for kind in [FeatureKind::Mel, FeatureKind::Spec, FeatureKind::Sadjadi, FeatureKind::Visual26, FeatureKind::Roi] {
        g.bench_function(kind.name(), |b| b.iter(|| extract_features(black_box(&u), &[kind], &ac, &schema).unwrap()));
    }
    g.finish();
}

fn layers(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("layer forward, 800 rows");
    for (name, spec) in [("maxout 286-64", LayerSpec::maxout(286, 64)), ("lstm 64-64", LayerSpec::lstm(64, 64))] {
        let mut layer = spec.instantiate("b", &mut rng).unwrap();
        let x = avsad::Tensor::full(&[800, spec.input_dim().unwrap()], 0.1);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut pass = Pass {
                    training: false,
                    record: false,
                    steps: 100,
                    batch: 8,
                    rng: &mut rng,
                };
                layer.forward(black_box(x.clone()), &mut pass).unwrap()
            })
        });
    }
    g.finish();
}

fn brnn(c: &mut Criterion) {
    let cfg = CorpusConfig {
        duration_range: [3.0, 3.0],
        ..CorpusConfig::default()
    };
    let u = corpus_utterance(&cfg, 1, 0);
    let b = BrnnConfig::with_scale(0.125);
    let contract = b.contract();
    let feats = extract_features(&u, &contract.features(), &AcousticConfig::default(), &LandmarkSchema::default()).unwrap();
    let batch = assemble_utterance(&contract, &feats).unwrap();
    let mut graph = build_brnn(&b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("brnn@0.125 forward 3s", |bch| {
        bch.iter(|| graph.forward(black_box(&batch.input), false, false, &mut rng).unwrap())
    });
    c.bench_function("brnn@0.125 forward+backward 3s", |bch| {
        bch.iter(|| {
            let out = graph.forward(&batch.input, true, true, &mut rng).unwrap();
            let l = graph.objective_loss(&out, &batch.input, &batch.labels, None).unwrap();
            graph.backward(&l.d_output).unwrap();
            graph.zero_grad();
        })
    });
}

criterion_group!(benches, features, layers, brnn);
criterion_main!(benches);
