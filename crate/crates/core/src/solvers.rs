//! Per-entry SGD for the regularized CP and Tucker completion objectives.
//!
//! Each observed entry visit computes the gradients of
//! `(x_ijk - x̂_ijk)² + λ(‖a_i‖² + ‖b_j‖² + ‖c_k‖²)` (plus `λ_g‖G‖²` for
//! Tucker) from a snapshot of the model, then updates row `a_i`, row `b_j`,
//! row `c_k` and finally the core, in that order. The `c_k` gradient passes
//! through a [`CGradientHook`] first, which is where gradient perturbation
//! plugs in.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{site, RngStream};
use crate::tensor::{cp_reconstruct, tucker_reconstruct, Matrix, ObservationSet, ObservedTensor, Tensor3};

/// Training aborts once the epoch objective exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Cp,
    Tucker,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Cp => "cp",
            Backbone::Tucker => "tucker",
        }
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cp" => Ok(Backbone::Cp),
            "tucker" => Ok(Backbone::Tucker),
            other => Err(Error::Config(format!("unknown backbone `{other}`"))),
        }
    }
}

fn check_factor_ranks(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<usize> {
    if a.cols() != b.cols() || b.cols() != c.cols() {
        return Err(Error::Shape(format!(
            "factor matrices need a shared rank, got {}, {}, {}",
            a.cols(),
            b.cols(),
            c.cols()
        )));
    }
    Ok(a.cols())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl CpModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        check_factor_ranks(&a, &b, &c)?;
        Ok(Self { a, b, c })
    }

    /// Factors drawn i.i.d. uniform on `[0, 1/√d]`, A then B then C.
    pub fn random(dims: [usize; 3], rank: usize, rng: &mut RngStream) -> Self {
        let hi = 1.0 / (rank as f64).sqrt();
        let mut factor = |rows| Matrix::from_fn(rows, rank, |_, _| rng.random_range(0.0..hi));
        let a = factor(dims[0]);
        let b = factor(dims[1]);
        let c = factor(dims[2]);
        Self { a, b, c }
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.rows(), self.b.rows(), self.c.rows()]
    }

    #[inline]
    pub fn predict(&self, i: usize, j: usize, k: usize) -> f64 {
        let (a, b, c) = (self.a.row(i), self.b.row(j), self.c.row(k));
        a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
    }

    pub fn reconstruct(&self) -> Tensor3 {
        cp_reconstruct(&self.a, &self.b, &self.c).expect("ranks checked at construction")
    }

    pub fn factors_frobenius_sq(&self) -> f64 {
        self.a.frobenius_sq() + self.b.frobenius_sq() + self.c.frobenius_sq()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub g: Tensor3,
}

impl TuckerModel {
    /// Requires a cubic `d x d x d` core matching the shared factor rank.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, g: Tensor3) -> Result<Self> {
        let d = check_factor_ranks(&a, &b, &c)?;
        if g.dims() != [d, d, d] {
            return Err(Error::Shape(format!(
                "core dims {:?} do not match rank {d}",
                g.dims()
            )));
        }
        Ok(Self { a, b, c, g })
    }

    /// Factors uniform on `[0, 1/√d]`, then core entries uniform on `[-1/d, 1/d]`.
    pub fn random(dims: [usize; 3], rank: usize, rng: &mut RngStream) -> Self {
        let CpModel { a, b, c } = CpModel::random(dims, rank, rng);
        let hi = 1.0 / rank as f64;
        let g = Tensor3::from_fn([rank; 3], |_, _, _| rng.random_range(-hi..=hi));
        Self { a, b, c, g }
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.rows(), self.b.rows(), self.c.rows()]
    }

    #[inline]
    pub fn predict(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = self.rank();
        let (a, b, c) = (self.a.row(i), self.b.row(j), self.c.row(k));
        let g = self.g.as_slice();
        let mut s = 0.0;
        for p in 0..d {
            let mut sp = 0.0;
            for q in 0..d {
                let core = &g[(p * d + q) * d..(p * d + q + 1) * d];
                let gc: f64 = core.iter().zip(c).map(|(x, y)| x * y).sum();
                sp += b[q] * gc;
            }
            s += a[p] * sp;
        }
        s
    }

    pub fn reconstruct(&self) -> Tensor3 {
        tucker_reconstruct(&self.g, &self.a, &self.b, &self.c).expect("dims checked at construction")
    }

    pub fn factors_frobenius_sq(&self) -> f64 {
        self.a.frobenius_sq() + self.b.frobenius_sq() + self.c.frobenius_sq()
    }
}

/// A fitted model of either backbone.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cp(CpModel),
    Tucker(TuckerModel),
}

impl Model {
    pub fn backbone(&self) -> Backbone {
        match self {
            Model::Cp(_) => Backbone::Cp,
            Model::Tucker(_) => Backbone::Tucker,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        match self {
            Model::Cp(m) => m.dims(),
            Model::Tucker(m) => m.dims(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Model::Cp(m) => m.rank(),
            Model::Tucker(m) => m.rank(),
        }
    }

    /// Unchecked prediction; callers validate indices.
    #[inline]
    pub fn predict_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        match self {
            Model::Cp(m) => m.predict(i, j, k),
            Model::Tucker(m) => m.predict(i, j, k),
        }
    }

    pub fn c(&self) -> &Matrix {
        match self {
            Model::Cp(m) => &m.c,
            Model::Tucker(m) => &m.c,
        }
    }

    pub fn c_mut(&mut self) -> &mut Matrix {
        match self {
            Model::Cp(m) => &mut m.c,
            Model::Tucker(m) => &mut m.c,
        }
    }

    pub fn reconstruct(&self) -> Tensor3 {
        match self {
            Model::Cp(m) => m.reconstruct(),
            Model::Tucker(m) => m.reconstruct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub rank: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// CP regularization λ.
    #[serde(default)]
    pub lambda: f64,
    /// Tucker factor regularization λ_o.
    #[serde(default)]
    pub lambda_o: f64,
    /// Tucker core regularization λ_g.
    #[serde(default)]
    pub lambda_g: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle: bool,
}

fn default_shuffle() -> bool {
    true
}

impl FitConfig {
    /// Synthetic-study CP settings: λ = 0.01, η = 0.005, 100 epochs.
    pub fn synthetic_cp(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            learning_rate: 0.005,
            epochs: 100,
            lambda: 0.01,
            lambda_o: 0.0,
            lambda_g: 0.0,
            seed,
            shuffle: true,
        }
    }

    /// Synthetic-study Tucker settings: λ_o = 0.001, λ_g = 0.0001, η = 0.005, 100 epochs.
    pub fn synthetic_tucker(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            learning_rate: 0.005,
            epochs: 100,
            lambda: 0.0,
            lambda_o: 0.001,
            lambda_g: 0.0001,
            seed,
            shuffle: true,
        }
    }

    /// Rating-tensor CP settings: λ = 0.01, η = 0.005, 100 epochs.
    pub fn movielens_cp(rank: usize, seed: u64) -> Self {
        Self::synthetic_cp(rank, seed)
    }

    /// Rating-tensor Tucker settings: λ_o = 0.01, λ_g = 0.001, η = 0.003, 100 epochs.
    pub fn movielens_tucker(rank: usize, seed: u64) -> Self {
        Self {
            learning_rate: 0.003,
            lambda_o: 0.01,
            lambda_g: 0.001,
            ..Self::synthetic_tucker(rank, seed)
        }
    }

    pub fn movielens(backbone: Backbone, rank: usize, seed: u64) -> Self {
        match backbone {
            Backbone::Cp => Self::movielens_cp(rank, seed),
            Backbone::Tucker => Self::movielens_tucker(rank, seed),
        }
    }

    pub fn synthetic(backbone: Backbone, rank: usize, seed: u64) -> Self {
        match backbone {
            Backbone::Cp => Self::synthetic_cp(rank, seed),
            Backbone::Tucker => Self::synthetic_tucker(rank, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_o", self.lambda_o),
            ("lambda_g", self.lambda_g),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_model_dims(model_dims: [usize; 3], data_dims: [usize; 3]) -> Result<()> {
    if model_dims != data_dims {
        return Err(Error::Shape(format!(
            "model dims {model_dims:?} do not match data dims {data_dims:?}"
        )));
    }
    Ok(())
}

/// `‖P_Ω(X − [[A, B, C]])‖²_F + λ(‖A‖²_F + ‖B‖²_F + ‖C‖²_F)` over observed entries.
pub fn cp_objective_observed(obs: &ObservedTensor, m: &CpModel, lambda: f64) -> Result<f64> {
    check_model_dims(m.dims(), obs.dims())?;
    let fit: f64 = obs
        .entries()
        .map(|([i, j, k], x)| (x - m.predict(i, j, k)).powi(2))
        .sum();
    Ok(fit + lambda * m.factors_frobenius_sq())
}

pub fn cp_objective(x: &Tensor3, omega: &ObservationSet, m: &CpModel, lambda: f64) -> Result<f64> {
    cp_objective_observed(&ObservedTensor::gather(x, omega)?, m, lambda)
}

/// Tucker counterpart of [`cp_objective_observed`] with the extra `λ_g‖G‖²_F` term.
pub fn tucker_objective_observed(
    obs: &ObservedTensor,
    m: &TuckerModel,
    lambda_o: f64,
    lambda_g: f64,
) -> Result<f64> {
    check_model_dims(m.dims(), obs.dims())?;
    let fit: f64 = obs
        .entries()
        .map(|([i, j, k], x)| (x - m.predict(i, j, k)).powi(2))
        .sum();
    Ok(fit + lambda_o * m.factors_frobenius_sq() + lambda_g * m.g.frobenius_sq())
}

pub fn tucker_objective(
    x: &Tensor3,
    omega: &ObservationSet,
    m: &TuckerModel,
    lambda_o: f64,
    lambda_g: f64,
) -> Result<f64> {
    tucker_objective_observed(&ObservedTensor::gather(x, omega)?, m, lambda_o, lambda_g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpGradients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `x_ijk - x̂_ijk` at the snapshot.
    pub residual: f64,
}

impl CpGradients {
    fn zeros(d: usize) -> Self {
        Self {
            a: vec![0.0; d],
            b: vec![0.0; d],
            c: vec![0.0; d],
            residual: 0.0,
        }
    }
}

fn check_index(dims: [usize; 3], [i, j, k]: [usize; 3]) -> Result<()> {
    if i >= dims[0] || j >= dims[1] || k >= dims[2] {
        return Err(Error::Index { i, j, k, dims });
    }
    Ok(())
}

fn cp_gradients_into(out: &mut CpGradients, x: f64, [i, j, k]: [usize; 3], m: &CpModel, lambda: f64) {
    let (a, b, c) = (m.a.row(i), m.b.row(j), m.c.row(k));
    let e = x - m.predict(i, j, k);
    out.residual = e;
    for r in 0..a.len() {
        out.a[r] = -2.0 * e * b[r] * c[r] + 2.0 * lambda * a[r];
        out.b[r] = -2.0 * e * a[r] * c[r] + 2.0 * lambda * b[r];
        out.c[r] = -2.0 * e * a[r] * b[r] + 2.0 * lambda * c[r];
    }
}

/// Gradients of the per-entry loss with respect to rows `a_i`, `b_j`, `c_k`.
pub fn cp_entry_gradients(
    x_ijk: f64,
    index: [usize; 3],
    m: &CpModel,
    lambda: f64,
) -> Result<CpGradients> {
    check_index(m.dims(), index)?;
    let mut out = CpGradients::zeros(m.rank());
    cp_gradients_into(&mut out, x_ijk, index, m, lambda);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerGradients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub g: Tensor3,
    pub residual: f64,
}

/// Scratch buffers reused across entry visits.
struct TuckerScratch {
    grads: TuckerGradients,
    // gc[p*d + q] = sum_t g[p,q,t] c[k,t]
    gc: Vec<f64>,
}

impl TuckerScratch {
    fn new(d: usize) -> Self {
        Self {
            grads: TuckerGradients {
                a: vec![0.0; d],
                b: vec![0.0; d],
                c: vec![0.0; d],
                g: Tensor3::zeros([d, d, d]),
                residual: 0.0,
            },
            gc: vec![0.0; d * d],
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn tucker_gradients_into(
    s: &mut TuckerScratch,
    x: f64,
    [i, j, k]: [usize; 3],
    m: &TuckerModel,
    lambda_o: f64,
    lambda_g: f64,
) {
    let d = m.rank();
    let (a, b, c) = (m.a.row(i), m.b.row(j), m.c.row(k));
    let g = m.g.as_slice();
    for pq in 0..d * d {
        s.gc[pq] = g[pq * d..(pq + 1) * d].iter().zip(c).map(|(x, y)| x * y).sum();
    }
    // grad_a needs sum_{q,t} g b c, which is sum_q b_q gc[p,q]
    let out = &mut s.grads;
    let mut xhat = 0.0;
    for p in 0..d {
        let w: f64 = (0..d).map(|q| b[q] * s.gc[p * d + q]).sum();
        out.a[p] = w;
        xhat += a[p] * w;
    }
    let e = x - xhat;
    out.residual = e;
    for p in 0..d {
        out.a[p] = -2.0 * e * out.a[p] + 2.0 * lambda_o * a[p];
    }
    for q in 0..d {
        let w: f64 = (0..d).map(|p| a[p] * s.gc[p * d + q]).sum();
        out.b[q] = -2.0 * e * w + 2.0 * lambda_o * b[q];
    }
    out.c.fill(0.0);
    let gg = out.g.as_mut_slice();
    for p in 0..d {
        for q in 0..d {
            let ab = a[p] * b[q];
            let base = (p * d + q) * d;
            for t in 0..d {
                out.c[t] += ab * g[base + t];
                gg[base + t] = -2.0 * e * ab * c[t] + 2.0 * lambda_g * g[base + t];
            }
        }
    }
    for t in 0..d {
        out.c[t] = -2.0 * e * out.c[t] + 2.0 * lambda_o * c[t];
    }
}

/// Gradients of the per-entry Tucker loss with respect to `a_i`, `b_j`, `c_k` and `G`.
pub fn tucker_entry_gradients(
    x_ijk: f64,
    index: [usize; 3],
    m: &TuckerModel,
    lambda_o: f64,
    lambda_g: f64,
) -> Result<TuckerGradients> {
    check_index(m.dims(), index)?;
    let mut s = TuckerScratch::new(m.rank());
    tucker_gradients_into(&mut s, x_ijk, index, m, lambda_o, lambda_g);
    Ok(s.grads)
}

/// Intercepts the `c_k` row gradient right before it is applied.
pub trait CGradientHook {
    fn apply(&mut self, grad_c: &mut [f64]) -> Result<()>;
}

/// Leaves gradients untouched; the non-private solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unperturbed;

impl CGradientHook for Unperturbed {
    #[inline]
    fn apply(&mut self, _grad_c: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fit<M> {
    pub model: M,
    /// Training objective of the initialized model.
    pub initial_objective: f64,
    /// Training objective after each epoch.
    pub epoch_objectives: Vec<f64>,
}

/// Tucker-only knobs used by equivalence tests.
#[derive(Debug, Clone, Default)]
pub struct TuckerOptions {
    /// Replaces the random core after initialization.
    pub core: Option<Tensor3>,
    /// Skips core updates entirely.
    pub freeze_core: bool,
}

fn check_objective(epoch: usize, objective: f64) -> Result<()> {
    if !objective.is_finite() || objective > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { epoch, objective });
    }
    Ok(())
}

fn prepare(obs: &ObservedTensor, cfg: &FitConfig) -> Result<(RngStream, RngStream, Vec<usize>)> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::Config("cannot fit an empty observation set".into()));
    }
    Ok((
        RngStream::derive(cfg.seed, &[site::INIT]),
        RngStream::derive(cfg.seed, &[site::SHUFFLE]),
        (0..obs.len()).collect(),
    ))
}

#[inline]
fn axpy_neg(row: &mut [f64], eta: f64, grad: &[f64]) {
    for (x, g) in row.iter_mut().zip(grad) {
        *x -= eta * g;
    }
}

pub fn fit_cp_observed_with<H: CGradientHook>(
    obs: &ObservedTensor,
    cfg: &FitConfig,
    hook: &mut H,
) -> Result<Fit<CpModel>> {
    let (mut init_rng, mut shuffle_rng, mut order) = prepare(obs, cfg)?;
    let mut model = CpModel::random(obs.dims(), cfg.rank, &mut init_rng);
    let initial_objective = cp_objective_observed(obs, &model, cfg.lambda)?;
    let mut grads = CpGradients::zeros(cfg.rank);
    let triples = obs.omega().triples();
    let values = obs.values();
    let eta = cfg.learning_rate;
    let mut epoch_objectives = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for &n in &order {
            let [i, j, k] = triples[n];
            cp_gradients_into(&mut grads, values[n], [i, j, k], &model, cfg.lambda);
            hook.apply(&mut grads.c)?;
            axpy_neg(model.a.row_mut(i), eta, &grads.a);
            axpy_neg(model.b.row_mut(j), eta, &grads.b);
            axpy_neg(model.c.row_mut(k), eta, &grads.c);
        }
        let objective = cp_objective_observed(obs, &model, cfg.lambda)?;
        check_objective(epoch, objective)?;
        epoch_objectives.push(objective);
    }
    Ok(Fit {
        model,
        initial_objective,
        epoch_objectives,
    })
}

pub fn fit_cp_observed(obs: &ObservedTensor, cfg: &FitConfig) -> Result<Fit<CpModel>> {
    fit_cp_observed_with(obs, cfg, &mut Unperturbed)
}

/// Fits a CP model to the entries of `x` at `omega`.
pub fn fit_cp(x: &Tensor3, omega: &ObservationSet, cfg: &FitConfig) -> Result<Fit<CpModel>> {
    fit_cp_observed(&ObservedTensor::gather(x, omega)?, cfg)
}

pub fn fit_tucker_observed_with<H: CGradientHook>(
    obs: &ObservedTensor,
    cfg: &FitConfig,
    opts: &TuckerOptions,
    hook: &mut H,
) -> Result<Fit<TuckerModel>> {
    let (mut init_rng, mut shuffle_rng, mut order) = prepare(obs, cfg)?;
    let mut model = TuckerModel::random(obs.dims(), cfg.rank, &mut init_rng);
    if let Some(core) = &opts.core {
        if core.dims() != [cfg.rank; 3] {
            return Err(Error::Shape(format!(
                "core override has dims {:?}, rank is {}",
                core.dims(),
                cfg.rank
            )));
        }
        model.g = core.clone();
    }
    let (lo, lg) = (cfg.lambda_o, cfg.lambda_g);
    let initial_objective = tucker_objective_observed(obs, &model, lo, lg)?;
    let mut scratch = TuckerScratch::new(cfg.rank);
    let triples = obs.omega().triples();
    let values = obs.values();
    let eta = cfg.learning_rate;
    let mut epoch_objectives = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for &n in &order {
            let [i, j, k] = triples[n];
            tucker_gradients_into(&mut scratch, values[n], [i, j, k], &model, lo, lg);
            let grads = &mut scratch.grads;
            hook.apply(&mut grads.c)?;
            axpy_neg(model.a.row_mut(i), eta, &grads.a);
            axpy_neg(model.b.row_mut(j), eta, &grads.b);
            axpy_neg(model.c.row_mut(k), eta, &grads.c);
            if !opts.freeze_core {
                axpy_neg(model.g.as_mut_slice(), eta, grads.g.as_slice());
            }
        }
        let objective = tucker_objective_observed(obs, &model, lo, lg)?;
        check_objective(epoch, objective)?;
        epoch_objectives.push(objective);
    }
    Ok(Fit {
        model,
        initial_objective,
        epoch_objectives,
    })
}

pub fn fit_tucker_observed(obs: &ObservedTensor, cfg: &FitConfig) -> Result<Fit<TuckerModel>> {
    fit_tucker_observed_with(obs, cfg, &TuckerOptions::default(), &mut Unperturbed)
}

/// Fits a Tucker model with a `d x d x d` core to the entries of `x` at `omega`.
pub fn fit_tucker(x: &Tensor3, omega: &ObservationSet, cfg: &FitConfig) -> Result<Fit<TuckerModel>> {
    fit_tucker_observed(&ObservedTensor::gather(x, omega)?, cfg)
}

/// Dispatches on `backbone`, returning a type-erased [`Model`].
pub fn fit_observed_with<H: CGradientHook>(
    backbone: Backbone,
    obs: &ObservedTensor,
    cfg: &FitConfig,
    hook: &mut H,
) -> Result<Fit<Model>> {
    Ok(match backbone {
        Backbone::Cp => {
            let f = fit_cp_observed_with(obs, cfg, hook)?;
            Fit {
                model: Model::Cp(f.model),
                initial_objective: f.initial_objective,
                epoch_objectives: f.epoch_objectives,
            }
        }
        Backbone::Tucker => {
            let f = fit_tucker_observed_with(obs, cfg, &TuckerOptions::default(), hook)?;
            Fit {
                model: Model::Tucker(f.model),
                initial_objective: f.initial_objective,
                epoch_objectives: f.epoch_objectives,
            }
        }
    })
}
