//! Comprehension evaluation with one worker versus a rayon pool. Build with
//! `--no-default-features` to measure the sequential fallback alone.

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use refexp::comprehension::{evaluate_comprehension, CandidateSource};
use refexp::context::FeatureConfig;
use refexp::dataset::{build_vocabulary, Dataset};
use refexp::speaker::Speaker;
use refexp::synth::{generate, SynthConfig};
use refexp::training::ModelConfig;

fn setup() -> (Dataset, refexp::dataset::Vocabulary, Speaker, FeatureConfig, BTreeSet<u64>) {
    let data = generate(&SynthConfig {
        num_scenes: 120,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = Dataset::from_parts(&data.annotations, &data.features).unwrap();
    let vocab = build_vocabulary(ds.expressions.iter().map(|e| e.tokens.as_slice()), 1);
    let features = FeatureConfig::default();
    let cfg = ModelConfig::default().speaker_config(vocab.len(), features.bundle_dim(data.features.dim));
    let speaker = Speaker::new(cfg, 1).unwrap();
    let regions = ds.scenes.iter().flat_map(|s| s.regions.iter().map(|r| r.region_id)).collect();
    (ds, vocab, speaker, features, regions)
}

fn bench(c: &mut Criterion) {
    let (ds, vocab, speaker, features, regions) = setup();
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let mut group = c.benchmark_group("comprehension");
    group.sample_size(10);
    for workers in [1, threads] {
        group.bench_with_input(BenchmarkId::new("workers", workers), &workers, |b, &w| {
            b.iter(|| {
                evaluate_comprehension(&ds, &vocab, &speaker, &features, &regions, &CandidateSource::GroundTruth, w)
                    .unwrap()
                    .accuracy
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
