//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use dptc::data::{load_ml100k, Split};
use dptc::experiment::{
    emit_report, run_experiment, summarize, DatasetSpec, ExecMode, ExperimentConfig, ResultRow,
    SummaryRow, SweepSpec,
};
use dptc::mechanisms::{exp_mech_vector, gradient_sensitivity, l2_norm, laplace_sample, PrivacyBudget};
use dptc::pipelines::{InputClamp, Mechanism, NoiseMode};
use dptc::rng::RngStream;
use dptc::solvers::{
    cp_entry_gradients, fit_cp_observed, fit_tucker_observed_with, tucker_entry_gradients, Backbone,
    CpModel, FitConfig, TuckerModel, TuckerOptions, Unperturbed,
};
use dptc::tensor::{Matrix, ObservationSet, ObservedTensor, Tensor3};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma, Laplace};

const ROOT_SEED: u64 = 20_240_601;

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn cp_entry_loss(m: &CpModel, x: f64, [i, j, k]: [usize; 3], lambda: f64) -> f64 {
    let reg: f64 = [m.a.row(i), m.b.row(j), m.c.row(k)]
        .iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum();
    (x - m.predict(i, j, k)).powi(2) + lambda * reg
}

fn tucker_entry_loss(m: &TuckerModel, x: f64, [i, j, k]: [usize; 3], lo: f64, lg: f64) -> f64 {
    let reg: f64 = [m.a.row(i), m.b.row(j), m.c.row(k)]
        .iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum();
    (x - m.predict(i, j, k)).powi(2) + lo * reg + lg * m.g.frobenius_sq()
}

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_TOL * analytic.abs().max(numeric.abs()).max(1.0)
}

fn central<F: Fn(f64) -> f64>(f: F, x0: f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

/// Returns (instances, failures, worst relative error) for each backbone.
fn gradient_check(seed: u64) -> [(usize, usize, f64); 2] {
    let mut rng = RngStream::from_seed(seed);
    let mut out = [(0, 0, 0.0f64); 2];
    for _ in 0..100 {
        let dims = [rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6)];
        let d = rng.random_range(1..5);
        let idx = [rng.random_range(0..dims[0]), rng.random_range(0..dims[1]), rng.random_range(0..dims[2])];
        let x = rng.random_range(-2.0..2.0);
        let lambda = rng.random_range(0.0..0.1);
        let lg = rng.random_range(0.0..0.1);

        // CP
        let m = CpModel::new(
            random_matrix(&mut rng, dims[0], d),
            random_matrix(&mut rng, dims[1], d),
            random_matrix(&mut rng, dims[2], d),
        )
        .unwrap();
        let g = cp_entry_gradients(x, idx, &m, lambda).unwrap();
        let mut ok = true;
        for r in 0..d {
            for (which, analytic) in [(0, g.a[r]), (1, g.b[r]), (2, g.c[r])] {
                let row = idx[which];
                let numeric = central(
                    |v| {
                        let mut p = m.clone();
                        [&mut p.a, &mut p.b, &mut p.c][which].set(row, r, v);
                        cp_entry_loss(&p, x, idx, lambda)
                    },
                    [&m.a, &m.b, &m.c][which].get(row, r),
                );
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
                out[0].2 = out[0].2.max(rel);
                ok &= close(analytic, numeric);
            }
        }
        out[0].0 += 1;
        out[0].1 += usize::from(!ok);

        // Tucker
        let m = TuckerModel::new(
            random_matrix(&mut rng, dims[0], d),
            random_matrix(&mut rng, dims[1], d),
            random_matrix(&mut rng, dims[2], d),
            Tensor3::from_fn([d; 3], |_, _, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let g = tucker_entry_gradients(x, idx, &m, lambda, lg).unwrap();
        let mut ok = true;
        let mut check = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            out[1].2 = out[1].2.max(rel);
            ok &= close(analytic, numeric);
        };
        for r in 0..d {
            for (which, analytic) in [(0, g.a[r]), (1, g.b[r]), (2, g.c[r])] {
                let row = idx[which];
                let numeric = central(
                    |v| {
                        let mut p = m.clone();
                        [&mut p.a, &mut p.b, &mut p.c][which].set(row, r, v);
                        tucker_entry_loss(&p, x, idx, lambda, lg)
                    },
                    [&m.a, &m.b, &m.c][which].get(row, r),
                );
                check(analytic, numeric);
            }
        }
        for p in 0..d {
            for q in 0..d {
                for t in 0..d {
                    let numeric = central(
                        |v| {
                            let mut pm = m.clone();
                            pm.g.set(p, q, t, v);
                            tucker_entry_loss(&pm, x, idx, lambda, lg)
                        },
                        m.g.get(p, q, t),
                    );
                    check(g.g.get(p, q, t), numeric);
                }
            }
        }
        out[1].0 += 1;
        out[1].1 += usize::from(!ok);
    }
    out
}

#[test]
fn criterion_01_gradient_oracle() {
    let [cp, tk] = gradient_check(ROOT_SEED);
    let pass = cp.1 == 0 && tk.1 == 0 && cp.0 == 100 && tk.0 == 100;
    report(
        1,
        pass,
        &format!(
            "cp {}/{} ok, worst rel err {:.2e}; tucker {}/{} ok, worst rel err {:.2e}",
            cp.0 - cp.1,
            cp.0,
            cp.2,
            tk.0 - tk.1,
            tk.0,
            tk.2
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn cp_tucker_epoch(seed: u64) -> (f64, Vec<f64>) {
    let mut rng = RngStream::from_seed(seed);
    let dims = [7, 6, 5];
    let x = Tensor3::from_fn(dims, |_, _, _| rng.random_range(0.0..1.0));
    let triples: Vec<[usize; 3]> = ObservationSet::full(dims)
        .iter()
        .filter(|_| rng.random_bool(0.6))
        .collect();
    let obs = ObservedTensor::gather(&x, &ObservationSet::new(dims, triples).unwrap()).unwrap();
    let cp_cfg = FitConfig {
        epochs: 1,
        ..FitConfig::synthetic_cp(3, seed)
    };
    let tk_cfg = FitConfig {
        lambda_o: cp_cfg.lambda,
        lambda_g: 0.0,
        ..FitConfig::synthetic_tucker(3, seed)
    };
    let tk_cfg = FitConfig { epochs: 1, ..tk_cfg };
    let cp = fit_cp_observed(&obs, &cp_cfg).unwrap().model;
    let opts = TuckerOptions {
        core: Some(Tensor3::superdiagonal(3)),
        freeze_core: true,
    };
    let tk = fit_tucker_observed_with(&obs, &tk_cfg, &opts, &mut Unperturbed).unwrap().model;
    let diff = [cp.a.max_abs_diff(&tk.a), cp.b.max_abs_diff(&tk.b), cp.c.max_abs_diff(&tk.c)]
        .into_iter()
        .fold(0.0, f64::max);
    let fingerprint = cp.a.as_slice().iter().chain(tk.c.as_slice()).copied().collect();
    (diff, fingerprint)
}

#[test]
fn criterion_02_cp_equals_superdiagonal_tucker() {
    let (diff, _) = cp_tucker_epoch(ROOT_SEED);
    let pass = diff <= 1e-10;
    report(2, pass, &format!("max factor difference after one epoch {diff:.2e}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

struct SamplerReport {
    lines: Vec<String>,
    pass: bool,
    fingerprint: Vec<f64>,
}

fn sampler_checks(seed: u64) -> SamplerReport {
    const N: usize = 100_000;
    let crit = ks_critical(N, 0.01);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut fingerprint = Vec::new();

    for (t, scale) in [0.5, 1.0, 4.0].into_iter().enumerate() {
        let mut rng = RngStream::derive(seed, &[1, t as u64]);
        let xs: Vec<f64> = (0..N).map(|_| laplace_sample(scale, &mut rng).unwrap()).collect();
        fingerprint.extend_from_slice(&xs[..4]);
        let law = Laplace::new(0.0, scale).unwrap();
        let d = ks_statistic(xs, |x| law.cdf(x));
        pass &= d < crit;
        lines.push(format!("laplace b={scale}: D={d:.4}"));
    }

    // Δ = 2m with m = 1
    let (delta, eps) = (2.0, 0.5);
    let sens = gradient_sensitivity(1.0).unwrap();
    assert_eq!(sens.value(), delta);
    let budget = PrivacyBudget::new(eps).unwrap();
    for dim in [1usize, 3, 10] {
        let mut rng = RngStream::derive(seed, &[2, dim as u64]);
        let radii: Vec<f64> = (0..N)
            .map(|_| l2_norm(&exp_mech_vector(dim, sens, budget, &mut rng).unwrap()))
            .collect();
        fingerprint.extend_from_slice(&radii[..4]);
        let law = Gamma::new(dim as f64, eps / delta).unwrap();
        let d = ks_statistic(radii, |r| law.cdf(r));
        pass &= d < crit;
        lines.push(format!("exp-mech radius d={dim}: D={d:.4}"));
    }

    // d = 1: the vector mechanism is the Laplace mechanism with b = Δ/ε.
    let b = delta / eps;
    let mut rng = RngStream::derive(seed, &[3]);
    let m = 1_000_000;
    let xs: Vec<f64> = (0..m)
        .map(|_| exp_mech_vector(1, sens, budget, &mut rng).unwrap()[0])
        .collect();
    let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / m as f64;
    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
    let (e1, e2) = ((mean_abs - b).abs() / b, (var - 2.0 * b * b).abs() / (2.0 * b * b));
    pass &= e1 < 0.01 && e2 < 0.01;
    lines.push(format!("d=1 E|x| rel err {e1:.4}, var rel err {e2:.4}"));
    let law = Laplace::new(0.0, b).unwrap();
    let d = ks_statistic(xs[..N].to_vec(), |x| law.cdf(x));
    pass &= d < crit;
    lines.push(format!("d=1 vs Laplace: D={d:.4}"));
    fingerprint.extend_from_slice(&xs[..4]);

    lines.push(format!("critical {crit:.4}"));
    SamplerReport {
        lines,
        pass,
        fingerprint,
    }
}

#[test]
fn criterion_03_sampler_correctness() {
    let r = sampler_checks(ROOT_SEED);
    report(3, r.pass, &r.lines.join("; "));
    assert!(r.pass);
}

// ---------------------------------------------------------------- 4

/// Worst binned likelihood ratio of the scalar Laplace mechanism on inputs
/// 0 and Δ, over bins where both histograms hold at least 1000 samples.
fn empirical_ratio(seed: u64, eps: f64) -> (f64, usize, Vec<f64>) {
    const N: usize = 1_000_000;
    let delta = 1.0;
    let b = delta / eps;
    let lo = -3.0 * b;
    let hi = delta + 3.0 * b;
    let inner = ((hi - lo) / b).ceil() as usize;
    // bin 0 is (-inf, lo), bin inner+1 is [lo + inner*b, inf)
    let bin = |v: f64| -> usize {
        if v < lo {
            0
        } else {
            (((v - lo) / b).floor() as usize + 1).min(inner + 1)
        }
    };
    let mut hist = [vec![0usize; inner + 2], vec![0usize; inner + 2]];
    let mut fingerprint = Vec::new();
    for (side, input) in [0.0, delta].into_iter().enumerate() {
        let mut rng = RngStream::derive(seed, &[4, eps.to_bits(), side as u64]);
        for n in 0..N {
            let v = input + laplace_sample(b, &mut rng).unwrap();
            if n < 2 {
                fingerprint.push(v);
            }
            hist[side][bin(v)] += 1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for (p, q) in hist[0].iter().zip(&hist[1]) {
        if *p >= 1000 && *q >= 1000 {
            used += 1;
            let (p, q) = (*p as f64, *q as f64);
            worst = worst.max(p / q).max(q / p);
        }
    }
    (worst, used, fingerprint)
}

#[test]
fn criterion_04_empirical_epsilon_bound() {
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.5, 1.0] {
        let (worst, used, _) = empirical_ratio(ROOT_SEED, eps);
        let bound = eps.exp() * 1.05;
        pass &= worst <= bound && used > 0;
        parts.push(format!("eps={eps}: worst ratio {worst:.4} vs bound {bound:.4} over {used} bins"));
    }
    report(4, pass, &parts.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 5, 6, 7

const IP_OP_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const GP_GRID: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
const CLIP_M: f64 = 0.1;

fn sweep(mechanism: Mechanism, epsilons: &[f64], missing_ratios: &[f64]) -> SweepSpec {
    SweepSpec {
        mechanism,
        epsilons: epsilons.to_vec(),
        missing_ratios: missing_ratios.to_vec(),
        clip_m: Some(CLIP_M),
        lipschitz: Some(CLIP_M),
        clamp_after_input: Some(InputClamp::ObservedRange),
        noise: NoiseMode::Sampled,
    }
}

fn benchmark_config(backbone: Backbone, repetitions: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(format!("benchmark-{backbone}")),
        seed: ROOT_SEED,
        repetitions,
        backbone,
        dataset: DatasetSpec::Synthetic {
            dims: [20, 20, 20],
            rank: 3,
            snr: 1.0,
            missing_ratio: 0.5,
        },
        rank: None,
        fit: None,
        sweeps: vec![
            sweep(Mechanism::Input, &IP_OP_GRID, &[]),
            sweep(Mechanism::Output, &IP_OP_GRID, &[]),
            sweep(Mechanism::Gradient, &GP_GRID, &[]),
        ],
        output: None,
        record_runtime: false,
        max_seconds: None,
    }
}

fn benchmark(backbone: Backbone) -> &'static [SummaryRow] {
    static CELLS: [OnceLock<Vec<SummaryRow>>; 2] = [OnceLock::new(), OnceLock::new()];
    let cell = &CELLS[match backbone {
        Backbone::Cp => 0,
        Backbone::Tucker => 1,
    }];
    cell.get_or_init(|| {
        let out = run_experiment(&benchmark_config(backbone, 50), ExecMode::default()).unwrap();
        assert!(!out.aborted);
        summarize(&out.rows)
    })
}

fn mean_at(rows: &[SummaryRow], mech: Mechanism, eps: Option<f64>) -> (f64, f64, usize) {
    let r = rows
        .iter()
        .find(|r| r.mechanism == mech && r.epsilon == eps)
        .unwrap_or_else(|| panic!("no summary for {mech} at {eps:?}"));
    (r.mean_rmse.unwrap_or(f64::INFINITY), r.std_rmse.unwrap_or(f64::INFINITY), r.diverged)
}

#[test]
fn criterion_05_privacy_utility_tradeoff() {
    let mut pass = true;
    let mut parts = Vec::new();
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let rows = benchmark(backbone);
        let (base, _, _) = mean_at(rows, Mechanism::None, None);
        let mut above = true;
        for mech in [Mechanism::Input, Mechanism::Output] {
            let means: Vec<f64> = IP_OP_GRID.iter().map(|&e| mean_at(rows, mech, Some(e)).0).collect();
            let violations = means.windows(2).filter(|w| w[1] > w[0]).count();
            above &= means.iter().all(|&m| m > base);
            pass &= violations <= 1 && means[0] >= means[means.len() - 1];
            parts.push(format!(
                "{backbone}/{mech}: {violations} violations, rmse {:.4}..{:.4}",
                means[0],
                means[means.len() - 1]
            ));
        }
        let gp_above = GP_GRID.iter().all(|&e| mean_at(rows, Mechanism::Gradient, Some(e)).0 > base);
        pass &= above;
        parts.push(format!(
            "{backbone}: baseline {base:.4} below all IP/OP means: {above}; below all GP means: {gp_above}"
        ));
    }
    report(5, pass, &parts.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_gradient_perturbation_near_baseline() {
    let mut pass = true;
    let mut parts = Vec::new();
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let rows = benchmark(backbone);
        let (base, _, _) = mean_at(rows, Mechanism::None, None);
        let (gp, _, _) = mean_at(rows, Mechanism::Gradient, Some(1.0));
        let rel = (gp - base).abs() / base;
        pass &= rel <= 0.15;
        parts.push(format!("{backbone}: GP {gp:.4} vs baseline {base:.4}, rel diff {rel:.3}"));
    }
    report(6, pass, &parts.join("; "));
    assert!(pass);
}

#[test]
fn criterion_07_gradient_perturbation_most_stable() {
    let mut pass = true;
    let mut parts = Vec::new();
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let rows = benchmark(backbone);
        let (_, ip, _) = mean_at(rows, Mechanism::Input, Some(0.1));
        let (_, op, _) = mean_at(rows, Mechanism::Output, Some(0.1));
        let (_, gp, _) = mean_at(rows, Mechanism::Gradient, Some(0.1));
        pass &= gp < ip && gp < op;
        parts.push(format!("{backbone}: std GP {gp:.4}, IP {ip:.4}, OP {op:.4}"));
    }
    report(7, pass, &parts.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 8

const MR_GRID: [f64; 3] = [0.1, 0.5, 0.9];

fn missing_ratio_config(backbone: Backbone, repetitions: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(format!("missing-ratio-{backbone}")),
        sweeps: [Mechanism::Input, Mechanism::Gradient, Mechanism::Output]
            .into_iter()
            .map(|m| sweep(m, &[0.5], &MR_GRID))
            .collect(),
        ..benchmark_config(backbone, repetitions)
    }
}

#[test]
fn criterion_08_missing_ratio_degradation() {
    let mut pass = true;
    let mut parts = Vec::new();
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let out = run_experiment(&missing_ratio_config(backbone, 10), ExecMode::default()).unwrap();
        let rows = summarize(&out.rows);
        for mech in [Mechanism::Input, Mechanism::Gradient, Mechanism::Output] {
            let m: Vec<f64> = MR_GRID
                .iter()
                .map(|&mr| {
                    rows.iter()
                        .find(|r| r.mechanism == mech && r.missing_ratio == Some(mr))
                        .and_then(|r| r.mean_rmse)
                        .unwrap_or(f64::INFINITY)
                })
                .collect();
            let (low, high) = (m[1] - m[0], m[2] - m[1]);
            pass &= high > low;
            parts.push(format!(
                "{backbone}/{mech}: rmse {:.4}/{:.4}/{:.4}, gaps {low:.4} then {high:.4}",
                m[0], m[1], m[2]
            ));
        }
    }
    report(8, pass, &parts.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn ml100k_root() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("ML100K_ROOT").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|p| p.join("ua.base").is_file() && p.join("ua.test").is_file())
}

fn ml100k_config(root: PathBuf, backbone: Backbone, fit: Option<FitConfig>) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(format!("ml100k-{backbone}")),
        seed: ROOT_SEED,
        repetitions: 1,
        backbone,
        dataset: DatasetSpec::Ml100k { root, split: Split::Ua },
        rank: None,
        fit,
        sweeps: [Mechanism::Input, Mechanism::Gradient, Mechanism::Output]
            .into_iter()
            .map(|m| sweep(m, &[1.0], &[]))
            .collect(),
        output: None,
        record_runtime: false,
        max_seconds: None,
    }
}

#[test]
fn criterion_09_movielens_pipeline() {
    let Some(root) = ml100k_root() else {
        report(
            9,
            false,
            "ML-100K ua files not found; set ML100K_ROOT or run scripts/fetch_ml100k.py",
        );
        panic!("ML-100K data unavailable");
    };
    let ds = load_ml100k(&root, Split::Ua).unwrap();
    let records = ds.train.len() + ds.test.len();
    let max_day = ds.train.iter().chain(&ds.test).map(|r| r.day).max().unwrap_or(0);
    let mut pass = records == 100_000 && max_day < 212;
    let mut parts = vec![format!("ua records {records}, last day bin {max_day}")];
    for backbone in [Backbone::Cp, Backbone::Tucker] {
        let out = run_experiment(&ml100k_config(root.clone(), backbone, None), ExecMode::default()).unwrap();
        let base = out.rows.iter().find(|r| r.mechanism == Mechanism::None).unwrap();
        let finite = |v: Option<f64>| v.filter(|x| x.is_finite());
        let (Some(base_rmse), Some(base_raw)) = (finite(base.rmse), finite(base.rmse_raw)) else {
            pass = false;
            parts.push(format!("{backbone}: baseline did not produce a finite RMSE"));
            continue;
        };
        for r in &out.rows {
            let (rmse, raw) = (finite(r.rmse), finite(r.rmse_raw));
            pass &= !r.diverged && rmse.is_some() && raw.is_some();
            if r.mechanism != Mechanism::None {
                pass &= rmse.is_some_and(|v| v >= base_rmse) && raw.is_some_and(|v| v >= base_raw);
            }
            parts.push(format!(
                "{backbone}/{}: rmse {} (rating units {})",
                r.mechanism,
                rmse.map_or("n/a".into(), |v| format!("{v:.4}")),
                raw.map_or("n/a".into(), |v| format!("{v:.4}")),
            ));
        }
    }
    report(9, pass, &parts.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 10

fn report_bytes(rows: &[ResultRow]) -> (Vec<u8>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(rows, dir.path()).unwrap();
    (fs::read(paths.results).unwrap(), fs::read(paths.summary).unwrap())
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn criterion_10_determinism() {
    let mut checks: Vec<(String, bool)> = Vec::new();

    let g = |s| gradient_check(s).map(|(n, f, w)| (n, f, w.to_bits()));
    checks.push(("gradient oracle".into(), g(ROOT_SEED) == g(ROOT_SEED)));
    checks.push(("cp/tucker epoch".into(), bits(&cp_tucker_epoch(ROOT_SEED).1) == bits(&cp_tucker_epoch(ROOT_SEED).1)));
    checks.push((
        "samplers".into(),
        bits(&sampler_checks(ROOT_SEED).fingerprint) == bits(&sampler_checks(ROOT_SEED).fingerprint),
    ));
    let e = |s| {
        let (w, u, f) = empirical_ratio(s, 1.0);
        (w.to_bits(), u, bits(&f))
    };
    checks.push(("epsilon histogram".into(), e(ROOT_SEED) == e(ROOT_SEED)));

    for backbone in [Backbone::Cp, Backbone::Tucker] {
        for (label, cfg) in [
            ("benchmark", benchmark_config(backbone, 3)),
            ("missing ratio", missing_ratio_config(backbone, 2)),
        ] {
            let a = run_experiment(&cfg, ExecMode::Sequential).unwrap();
            let b = run_experiment(&cfg, ExecMode::Parallel).unwrap();
            let c = run_experiment(&cfg, ExecMode::Parallel).unwrap();
            let same = report_bytes(&a.rows) == report_bytes(&b.rows)
                && report_bytes(&b.rows) == report_bytes(&c.rows);
            checks.push((format!("{label} {backbone} csv"), same));
        }
    }

    let mut note = String::new();
    match ml100k_root() {
        Some(root) => {
            let fit = FitConfig {
                epochs: 3,
                ..FitConfig::movielens(Backbone::Tucker, 3, 0)
            };
            let cfg = ml100k_config(root, Backbone::Tucker, Some(fit));
            let a = run_experiment(&cfg, ExecMode::Sequential).unwrap();
            let b = run_experiment(&cfg, ExecMode::Parallel).unwrap();
            checks.push(("ml100k csv".into(), report_bytes(&a.rows) == report_bytes(&b.rows)));
        }
        None => note = "; ML-100K part not run (data missing)".into(),
    }

    let pass = checks.iter().all(|(_, ok)| *ok);
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
    report(
        10,
        pass,
        &format!(
            "{} reproducibility checks, {} differ{}{}",
            checks.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) },
            note
        ),
    );
    assert!(pass);
}
