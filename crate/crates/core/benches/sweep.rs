//! Sequential vs rayon-parallel repetition scheduling on a reduced benchmark
//! sweep. Build with `--no-default-features` to see the fallback path alone.

use criterion::{criterion_group, criterion_main, Criterion};
use dptc::experiment::{run_experiment, DatasetSpec, ExecMode, ExperimentConfig, SweepSpec};
use dptc::pipelines::{InputClamp, Mechanism, NoiseMode};
use dptc::solvers::{Backbone, FitConfig};

fn config(backbone: Backbone) -> ExperimentConfig {
    let sweep = |mechanism| SweepSpec {
        mechanism,
        epsilons: vec![0.1, 1.0],
        missing_ratios: vec![],
        clip_m: Some(0.1),
        lipschitz: Some(0.1),
        clamp_after_input: Some(InputClamp::ObservedRange),
        noise: NoiseMode::Sampled,
    };
    ExperimentConfig {
        name: None,
        seed: 1,
        repetitions: 8,
        backbone,
        dataset: DatasetSpec::Synthetic {
            dims: [20, 20, 20],
            rank: 3,
            snr: 1.0,
            missing_ratio: 0.5,
        },
        rank: None,
        fit: Some(FitConfig {
            epochs: 20,
            ..FitConfig::synthetic(backbone, 3, 0)
        }),
        sweeps: vec![sweep(Mechanism::Input), sweep(Mechanism::Gradient), sweep(Mechanism::Output)],
        output: None,
        record_runtime: false,
        max_seconds: None,
    }
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let cfg = config(backbone);
        group.bench_function(format!("{backbone}/sequential"), |b| {
            b.iter(|| run_experiment(&cfg, ExecMode::Sequential).unwrap())
        });
        group.bench_function(format!("{backbone}/parallel"), |b| {
            b.iter(|| run_experiment(&cfg, ExecMode::Parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
