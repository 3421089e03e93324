//! RMSE evaluation, repeated sweeps over privacy budgets and missing ratios,
//! and CSV reporting.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{biscale, gen_synthetic, load_ml100k, RatingDataset, Split, SyntheticData, SyntheticSpec};
use crate::error::{Error, Result};
use crate::pipelines::{run_pipeline, CompletionResult, DpConfig, InputClamp, Mechanism, NoiseMode};
use crate::rng::{derive_seed, site};
use crate::solvers::{Backbone, FitConfig};
use crate::tensor::{ObservationSet, ObservedTensor, Tensor3};

/// Root mean squared error between paired predictions and targets.
pub fn rmse_values(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("RMSE over an empty test set".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// RMSE of the completed model against `truth` on the held-out positions.
pub fn rmse(result: &CompletionResult, truth: &Tensor3, omega_test: &ObservationSet) -> Result<f64> {
    let target = ObservedTensor::gather(truth, omega_test)?;
    rmse_observed(result, &target)
}

pub fn rmse_observed(result: &CompletionResult, truth: &ObservedTensor) -> Result<f64> {
    if truth.dims() != result.dims() {
        return Err(Error::Shape(format!(
            "model dims {:?} vs test dims {:?}",
            result.dims(),
            truth.dims()
        )));
    }
    let pred: Vec<f64> = truth
        .omega()
        .iter()
        .map(|[i, j, k]| result.model.predict_unchecked(i, j, k))
        .collect();
    rmse_values(&pred, truth.values())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        dims: [usize; 3],
        rank: usize,
        snr: f64,
        /// Used by sweeps that do not list their own missing ratios.
        missing_ratio: f64,
    },
    Ml100k {
        root: PathBuf,
        split: Split,
    },
}

/// A family of sweep points sharing one mechanism: the cartesian product of
/// `epsilons` and `missing_ratios`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub mechanism: Mechanism,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub missing_ratios: Vec<f64>,
    #[serde(default)]
    pub clip_m: Option<f64>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub clamp_after_input: Option<InputClamp>,
    #[serde(default)]
    pub noise: NoiseMode,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub repetitions: usize,
    pub backbone: Backbone,
    pub dataset: DatasetSpec,
    /// Fitted rank; defaults to the generating rank, or 3 for rating data.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Solver settings; defaults to the built-in settings for the backbone
    /// and dataset. Its `seed` is replaced per repetition.
    #[serde(default)]
    pub fit: Option<FitConfig>,
    pub sweeps: Vec<SweepSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// When false, `runtime_seconds` is written as 0 so reports are
    /// byte-reproducible.
    #[serde(default = "default_true")]
    pub record_runtime: bool,
    #[serde(default)]
    pub max_seconds: Option<f64>,
}

pub const DEFAULT_RATING_RANK: usize = 3;

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(out) = &cfg.output {
            if out.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.output = Some(base.join(out));
            }
        }
        if let DatasetSpec::Ml100k { root, .. } = &mut cfg.dataset {
            if root.is_relative() {
                *root = path.parent().unwrap_or(Path::new(".")).join(&*root);
            }
        }
        Ok(cfg)
    }

    pub fn fit_config(&self) -> FitConfig {
        let rank = self.rank.unwrap_or(match &self.dataset {
            DatasetSpec::Synthetic { rank, .. } => *rank,
            DatasetSpec::Ml100k { .. } => DEFAULT_RATING_RANK,
        });
        match (&self.fit, &self.dataset) {
            (Some(f), _) => f.clone(),
            (None, DatasetSpec::Synthetic { .. }) => FitConfig::synthetic(self.backbone, rank, 0),
            (None, DatasetSpec::Ml100k { .. }) => FitConfig::movielens(self.backbone, rank, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.sweeps.is_empty() || self.sweeps.iter().all(|s| s.epsilons.is_empty()) {
            return Err(Error::Config("at least one sweep point is required".into()));
        }
        if let Some(t) = self.max_seconds {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::Config(format!("max_seconds must be positive, got {t}")));
            }
        }
        self.fit_config().validate()?;
        for p in self.points() {
            p.dp.validate()?;
            if let (DatasetSpec::Synthetic { dims, rank, snr, .. }, Some(mr)) = (&self.dataset, p.missing_ratio) {
                SyntheticSpec {
                    dims: *dims,
                    rank: *rank,
                    backbone: self.backbone,
                    snr: *snr,
                    missing_ratio: mr,
                    seed: 0,
                }
                .validate()?;
            }
        }
        if matches!(self.dataset, DatasetSpec::Ml100k { .. })
            && self.sweeps.iter().any(|s| !s.missing_ratios.is_empty())
        {
            return Err(Error::Config("missing ratios only apply to synthetic data".into()));
        }
        Ok(())
    }

    /// Expanded sweep points in execution order: one baseline per missing
    /// ratio, then every sweep's points.
    pub fn points(&self) -> Vec<SweepPoint> {
        let default_mr = match &self.dataset {
            DatasetSpec::Synthetic { missing_ratio, .. } => Some(*missing_ratio),
            DatasetSpec::Ml100k { .. } => None,
        };
        let mrs_of = |s: &SweepSpec| -> Vec<Option<f64>> {
            if s.missing_ratios.is_empty() {
                vec![default_mr]
            } else {
                s.missing_ratios.iter().map(|&m| Some(m)).collect()
            }
        };
        let mut baselines: Vec<Option<f64>> = Vec::new();
        for s in &self.sweeps {
            for mr in mrs_of(s) {
                if !baselines.contains(&mr) {
                    baselines.push(mr);
                }
            }
        }
        let mut points: Vec<SweepPoint> = baselines
            .into_iter()
            .map(|mr| SweepPoint {
                missing_ratio: mr,
                dp: DpConfig::none(),
            })
            .collect();
        for s in &self.sweeps {
            if s.mechanism == Mechanism::None {
                continue;
            }
            for mr in mrs_of(s) {
                for &eps in &s.epsilons {
                    points.push(SweepPoint {
                        missing_ratio: mr,
                        dp: DpConfig {
                            mechanism: s.mechanism,
                            epsilon: eps,
                            clip_m: s.clip_m,
                            lipschitz: s.lipschitz,
                            clamp_after_input: s.clamp_after_input.unwrap_or(InputClamp::ObservedRange),
                            noise_seed: 0,
                            noise: s.noise,
                        },
                    });
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub missing_ratio: Option<f64>,
    pub dp: DpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mechanism: Mechanism,
    pub backbone: Backbone,
    pub epsilon: Option<f64>,
    pub missing_ratio: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    /// Absent when the run diverged.
    pub rmse: Option<f64>,
    /// Rating data only: RMSE in original rating units.
    pub rmse_raw: Option<f64>,
    pub diverged: bool,
    pub runtime_seconds: f64,
}

/// How repetitions are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Repetitions run on the rayon pool. Without the `parallel` feature
    /// this behaves like `Sequential`.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by sweep point, then repetition.
    pub rows: Vec<ResultRow>,
    /// True when `max_seconds` elapsed before every fit ran.
    pub aborted: bool,
}

enum Prepared {
    Synthetic,
    Ratings(Box<RatingData>),
}

struct RatingData {
    train: ObservedTensor,
    test: ObservedTensor,
    dataset: RatingDataset,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    fit: FitConfig,
    points: Vec<SweepPoint>,
    prepared: Prepared,
    start: Instant,
    aborted: AtomicBool,
    sink: Option<Mutex<csv::Writer<File>>>,
}

impl Context<'_> {
    fn out_of_time(&self) -> bool {
        if self.aborted.load(Ordering::Relaxed) {
            return true;
        }
        match self.cfg.max_seconds {
            Some(limit) if self.start.elapsed().as_secs_f64() > limit => {
                self.aborted.store(true, Ordering::Relaxed);
                true
            }
            _ => false,
        }
    }

    fn flush(&self, row: &ResultRow) -> Result<()> {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().expect("result writer poisoned");
            w.serialize(row)?;
            w.flush().map_err(|e| Error::io(PARTIAL_RESULTS, e))?;
        }
        Ok(())
    }

    fn synthetic(&self, rep: usize, mr: f64) -> Result<SyntheticData> {
        let DatasetSpec::Synthetic { dims, rank, snr, .. } = &self.cfg.dataset else {
            unreachable!("synthetic point on rating data")
        };
        gen_synthetic(&SyntheticSpec {
            dims: *dims,
            rank: *rank,
            backbone: self.cfg.backbone,
            snr: *snr,
            missing_ratio: mr,
            seed: derive_seed(self.cfg.seed, &[rep as u64, site::DATA]),
        })
    }

    fn repetition(&self, rep: usize) -> Result<Vec<(usize, ResultRow)>> {
        let fit_seed = derive_seed(self.cfg.seed, &[rep as u64, site::FIT]);
        let fit = FitConfig {
            seed: fit_seed,
            ..self.fit.clone()
        };
        let mut cache: HashMap<u64, (ObservedTensor, ObservedTensor)> = HashMap::new();
        let mut out = Vec::with_capacity(self.points.len());
        for (idx, point) in self.points.iter().enumerate() {
            if self.out_of_time() {
                break;
            }
            let started = Instant::now();
            let dp = point
                .dp
                .clone()
                .with_noise_seed(derive_seed(self.cfg.seed, &[rep as u64, idx as u64, site::NOISE]));
            let (train, test) = match (&self.prepared, point.missing_ratio) {
                (Prepared::Ratings(r), _) => (&r.train, &r.test),
                (Prepared::Synthetic, Some(mr)) => {
                    let (a, b) = match cache.entry(mr.to_bits()) {
                        Entry::Occupied(e) => e.into_mut(),
                        Entry::Vacant(v) => {
                            let d = self.synthetic(rep, mr)?;
                            let train = ObservedTensor::gather(&d.x_noisy, &d.omega_train)?;
                            let test = ObservedTensor::gather(&d.x_true, &d.omega_test)?;
                            v.insert((train, test))
                        }
                    };
                    (&*a, &*b)
                }
                (Prepared::Synthetic, None) => unreachable!("synthetic points carry a missing ratio"),
            };
            let (rmse, rmse_raw, diverged) = match run_pipeline(train, &fit, &dp, self.cfg.backbone) {
                Ok(result) => {
                    let scaled = rmse_observed(&result, test)?;
                    let raw = match &self.prepared {
                        Prepared::Ratings(r) => Some(raw_rmse(&result, &r.dataset)?),
                        Prepared::Synthetic => None,
                    };
                    (Some(scaled), raw, false)
                }
                Err(Error::Divergence { .. }) => (None, None, true),
                Err(e) => return Err(e),
            };
            let row = ResultRow {
                mechanism: dp.mechanism,
                backbone: self.cfg.backbone,
                epsilon: (dp.mechanism != Mechanism::None).then_some(dp.epsilon),
                missing_ratio: point.missing_ratio,
                repetition: rep,
                seed: fit_seed,
                rmse,
                rmse_raw,
                diverged,
                runtime_seconds: if self.cfg.record_runtime {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            };
            self.flush(&row)?;
            out.push((idx, row));
        }
        Ok(out)
    }
}

fn raw_rmse(result: &CompletionResult, dataset: &RatingDataset) -> Result<f64> {
    let pred: Vec<f64> = dataset
        .test
        .iter()
        .map(|r| dataset.to_raw(r, result.model.predict_unchecked(r.user, r.item, r.day)))
        .collect();
    let truth: Vec<f64> = dataset.test.iter().map(|r| r.raw).collect();
    rmse_values(&pred, &truth)
}

pub const PARTIAL_RESULTS: &str = "results.partial.csv";
pub const RESULTS: &str = "results.csv";
pub const SUMMARY: &str = "summary.csv";
pub const PLOT_SCRIPT: &str = "plot.py";

/// Runs every sweep point for every repetition.
///
/// Per repetition `r`, data come from seed `derive_seed(root, [r, DATA])`,
/// model initialization and pass order from `[r, FIT]` and mechanism noise
/// from `[r, point, NOISE]`, so all points of a repetition share data and
/// initialization. A diverging fit is recorded in its row. When
/// `cfg.output` is set, rows are appended to `results.partial.csv` there as
/// they finish.
pub fn run_experiment(cfg: &ExperimentConfig, exec: ExecMode) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let prepared = match &cfg.dataset {
        DatasetSpec::Synthetic { .. } => Prepared::Synthetic,
        DatasetSpec::Ml100k { root, split } => {
            let dataset = biscale(&load_ml100k(root, *split)?)?;
            Prepared::Ratings(Box::new(RatingData {
                train: dataset.train_observed()?,
                test: dataset.test_observed()?,
                dataset,
            }))
        }
    };
    let sink = match &cfg.output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(PARTIAL_RESULTS);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            Some(Mutex::new(csv::Writer::from_writer(file)))
        }
        None => None,
    };
    let ctx = Context {
        cfg,
        fit: cfg.fit_config(),
        points: cfg.points(),
        prepared,
        start: Instant::now(),
        aborted: AtomicBool::new(false),
        sink,
    };

    let per_rep: Vec<Result<Vec<(usize, ResultRow)>>> = match exec {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..cfg.repetitions).into_par_iter().map(|r| ctx.repetition(r)).collect()
        }
        _ => (0..cfg.repetitions).map(|r| ctx.repetition(r)).collect(),
    };
    let mut keyed = Vec::new();
    for r in per_rep {
        keyed.extend(r?);
    }
    keyed.sort_by_key(|(idx, row)| (*idx, row.repetition));
    Ok(ExperimentOutput {
        rows: keyed.into_iter().map(|(_, row)| row).collect(),
        aborted: ctx.aborted.load(Ordering::Relaxed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mechanism: Mechanism,
    pub backbone: Backbone,
    pub epsilon: Option<f64>,
    pub missing_ratio: Option<f64>,
    pub runs: usize,
    pub diverged: usize,
    pub mean_rmse: Option<f64>,
    /// Population standard deviation.
    pub std_rmse: Option<f64>,
    pub mean_rmse_raw: Option<f64>,
    pub std_rmse_raw: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Mean and population standard deviation of RMSE per (mechanism, backbone,
/// ε, missing ratio), in order of first appearance. Diverged runs are
/// counted but excluded from the statistics.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (Mechanism, Backbone, Option<u64>, Option<u64>);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key = (
            r.mechanism,
            r.backbone,
            r.epsilon.map(f64::to_bits),
            r.missing_ratio.map(f64::to_bits),
        );
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let scaled: Vec<f64> = g.iter().filter_map(|r| r.rmse).collect();
            let raw: Vec<f64> = g.iter().filter_map(|r| r.rmse_raw).collect();
            let (mean_rmse, std_rmse) = mean_std(&scaled);
            let (mean_rmse_raw, std_rmse_raw) = mean_std(&raw);
            SummaryRow {
                mechanism: key.0,
                backbone: key.1,
                epsilon: key.2.map(f64::from_bits),
                missing_ratio: key.3.map(f64::from_bits),
                runs: g.len(),
                diverged: g.iter().filter(|r| r.diverged).count(),
                mean_rmse,
                std_rmse,
                mean_rmse_raw,
                std_rmse_raw,
            }
        })
        .collect()
}

const PLOT_PY: &str = r#"#!/usr/bin/env python3
"""Mean RMSE curves with +-1 standard deviation bands from summary.csv."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def num(s):
    return float(s) if s not in ("", None) else None


here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "summary.csv")
rows = list(csv.DictReader(open(path)))
for r in rows:
    for k in ("epsilon", "missing_ratio", "mean_rmse", "std_rmse"):
        r[k] = num(r[k])

perturbed = [r for r in rows if r["mechanism"] != "none" and r["mean_rmse"] is not None]
eps_values = sorted({r["epsilon"] for r in perturbed})
mr_values = sorted({r["missing_ratio"] for r in perturbed if r["missing_ratio"] is not None})
x_key = "epsilon" if len(eps_values) > 1 or len(mr_values) <= 1 else "missing_ratio"

fig, ax = plt.subplots(figsize=(6, 4))
for mech in sorted({r["mechanism"] for r in perturbed}):
    pts = sorted((r for r in perturbed if r["mechanism"] == mech), key=lambda r: r[x_key])
    xs = [r[x_key] for r in pts]
    mean = [r["mean_rmse"] for r in pts]
    std = [r["std_rmse"] for r in pts]
    ax.plot(xs, mean, marker="o", label=mech)
    ax.fill_between(xs, [m - s for m, s in zip(mean, std)], [m + s for m, s in zip(mean, std)], alpha=0.25)

base = [r for r in rows if r["mechanism"] == "none" and r["mean_rmse"] is not None]
if base and x_key == "missing_ratio":
    base.sort(key=lambda r: r["missing_ratio"])
    xs = [r["missing_ratio"] for r in base]
    mean = [r["mean_rmse"] for r in base]
    std = [r["std_rmse"] for r in base]
    ax.plot(xs, mean, "k--", label="baseline")
    ax.fill_between(xs, [m - s for m, s in zip(mean, std)], [m + s for m, s in zip(mean, std)], color="k", alpha=0.1)
elif base:
    m, s = base[0]["mean_rmse"], base[0]["std_rmse"]
    ax.axhline(m, color="k", linestyle="--", label="baseline")
    ax.axhspan(m - s, m + s, color="k", alpha=0.1)

if x_key == "epsilon" and eps_values and min(eps_values) > 0 and max(eps_values) / min(eps_values) >= 100:
    ax.set_xscale("log")
ax.set_xlabel("epsilon" if x_key == "epsilon" else "missing ratio")
ax.set_ylabel("RMSE")
ax.legend()
fig.tight_layout()
out = os.path.join(os.path.dirname(os.path.abspath(path)), "rmse.png")
fig.savefig(out, dpi=150)
print(out)
"#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plot_script: PathBuf,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `results.csv`, `summary.csv` and `plot.py` into `dir` and removes
/// any partial results file left there by [`run_experiment`].
pub fn emit_report(rows: &[ResultRow], dir: &Path) -> Result<ReportPaths> {
    if rows.is_empty() {
        return Err(Error::Data("no result rows to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ReportPaths {
        results: dir.join(RESULTS),
        summary: dir.join(SUMMARY),
        plot_script: dir.join(PLOT_SCRIPT),
    };
    write_csv(&paths.results, rows)?;
    write_csv(&paths.summary, &summarize(rows))?;
    fs::write(&paths.plot_script, PLOT_PY).map_err(|e| Error::io(&paths.plot_script, e))?;
    let partial = dir.join(PARTIAL_RESULTS);
    if partial.exists() {
        fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    Ok(paths)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
