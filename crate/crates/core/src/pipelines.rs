//! Input, gradient and output perturbation around the SGD solvers.
//!
//! All three spend the whole budget on a single release and perturb only the
//! observed data, the `C` gradient, or the released `C` respectively. Fit
//! randomness (initialization and pass order) comes from `FitConfig::seed`
//! and mechanism noise from `DpConfig::noise_seed`, so the same fit seed
//! gives the same unperturbed trajectory under every mechanism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{
    clip_l2_in_place, exp_mech_fill, gradient_sensitivity, input_sensitivity, laplace_sample,
    output_sensitivity, PrivacyBudget, Sensitivity,
};
use crate::rng::RngStream;
use crate::solvers::{fit_observed_with, Backbone, CGradientHook, FitConfig, Model, Unperturbed};
use crate::tensor::{ObservationSet, ObservedTensor, Tensor3};

/// Largest tensor [`complete`] will materialize by default.
pub const DEFAULT_COMPLETE_CAP: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    None,
    Input,
    Gradient,
    Output,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::None => "none",
            Mechanism::Input => "input",
            Mechanism::Gradient => "gradient",
            Mechanism::Output => "output",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mechanism::None),
            "input" => Ok(Mechanism::Input),
            "gradient" => Ok(Mechanism::Gradient),
            "output" => Ok(Mechanism::Output),
            other => Err(Error::Config(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// Post-noise clamping of perturbed inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InputClamp {
    #[default]
    Off,
    /// Clamp to `[min, max]` of the observed values before noise.
    ObservedRange,
    Range { lo: f64, hi: f64 },
}

/// Whether gradient perturbation actually samples noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Sampled,
    /// Clip but add nothing; isolates the effect of clipping.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    /// Gradient clipping constant `m`.
    #[serde(default)]
    pub clip_m: Option<f64>,
    /// Lipschitz constant `L` for output perturbation; falls back to `clip_m`.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub clamp_after_input: InputClamp,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub noise: NoiseMode,
}

impl DpConfig {
    pub fn none() -> Self {
        Self {
            mechanism: Mechanism::None,
            epsilon: 1.0,
            clip_m: None,
            lipschitz: None,
            clamp_after_input: InputClamp::Off,
            noise_seed: 0,
            noise: NoiseMode::Sampled,
        }
    }

    pub fn input(epsilon: f64, clamp: InputClamp) -> Self {
        Self {
            mechanism: Mechanism::Input,
            epsilon,
            clamp_after_input: clamp,
            ..Self::none()
        }
    }

    pub fn gradient(epsilon: f64, clip_m: f64) -> Self {
        Self {
            mechanism: Mechanism::Gradient,
            epsilon,
            clip_m: Some(clip_m),
            ..Self::none()
        }
    }

    pub fn output(epsilon: f64, lipschitz: f64) -> Self {
        Self {
            mechanism: Mechanism::Output,
            epsilon,
            lipschitz: Some(lipschitz),
            ..Self::none()
        }
    }

    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        PrivacyBudget::new(self.epsilon)
    }

    /// Resolved `L`: explicit value, else the clipping constant.
    pub fn resolved_lipschitz(&self) -> Result<f64> {
        match self.lipschitz.or(self.clip_m) {
            Some(l) if l.is_finite() && l > 0.0 => Ok(l),
            Some(l) => Err(Error::Config(format!("Lipschitz constant must be positive, got {l}"))),
            None => Err(Error::Config(
                "output perturbation needs `lipschitz` (or `clip_m`) to be set".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mechanism {
            Mechanism::None => Ok(()),
            Mechanism::Input => {
                self.budget()?;
                if let InputClamp::Range { lo, hi } = self.clamp_after_input {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(Error::Config(format!("invalid clamp range [{lo}, {hi}]")));
                    }
                }
                Ok(())
            }
            Mechanism::Gradient => {
                self.budget()?;
                let m = self
                    .clip_m
                    .ok_or_else(|| Error::Config("gradient perturbation needs `clip_m`".into()))?;
                gradient_sensitivity(m).map(|_| ())
            }
            Mechanism::Output => {
                self.budget()?;
                self.resolved_lipschitz().map(|_| ())
            }
        }
    }
}

/// What a pipeline did to reach its release.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismMetadata {
    pub mechanism: Mechanism,
    pub epsilon: Option<f64>,
    pub sensitivity: Option<Sensitivity>,
    /// Laplace scale or exponential-mechanism radius scale `Δ/ε`.
    pub noise_scale: Option<f64>,
    pub noise_seed: u64,
    /// Largest `C` gradient norm applied after clipping (gradient perturbation).
    pub max_clipped_grad_norm: Option<f64>,
}

impl MechanismMetadata {
    fn plain(mechanism: Mechanism, dp: &DpConfig) -> Self {
        Self {
            mechanism,
            epsilon: (mechanism != Mechanism::None).then_some(dp.epsilon),
            sensitivity: None,
            noise_scale: None,
            noise_seed: dp.noise_seed,
            max_clipped_grad_norm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub model: Model,
    pub initial_objective: f64,
    pub epoch_objectives: Vec<f64>,
    pub metadata: MechanismMetadata,
}

impl CompletionResult {
    pub fn dims(&self) -> [usize; 3] {
        self.model.dims()
    }
}

fn expect_mechanism(dp: &DpConfig, wanted: Mechanism) -> Result<()> {
    if dp.mechanism != wanted && dp.mechanism != Mechanism::None {
        return Err(Error::Config(format!(
            "{wanted} pipeline invoked with mechanism `{}`",
            dp.mechanism
        )));
    }
    dp.validate()
}

fn run_plain(obs: &ObservedTensor, fit: &FitConfig, dp: &DpConfig, backbone: Backbone) -> Result<CompletionResult> {
    let f = fit_observed_with(backbone, obs, fit, &mut Unperturbed)?;
    Ok(CompletionResult {
        model: f.model,
        initial_objective: f.initial_objective,
        epoch_objectives: f.epoch_objectives,
        metadata: MechanismMetadata::plain(Mechanism::None, dp),
    })
}

/// Adds one Laplace(Δ/ε) draw to every observed value, then clamps if asked.
/// Returns the perturbed observations, the sensitivity and the noise scale
/// (`None` when Δ = 0 and nothing was added).
pub fn perturb_observed(
    obs: &ObservedTensor,
    dp: &DpConfig,
) -> Result<(ObservedTensor, Sensitivity, Option<f64>)> {
    let budget = dp.budget()?;
    let delta = input_sensitivity(obs)?;
    let (lo, hi) = match dp.clamp_after_input {
        InputClamp::Off => (f64::NEG_INFINITY, f64::INFINITY),
        InputClamp::ObservedRange => obs.min_max().expect("nonempty: sensitivity computed"),
        InputClamp::Range { lo, hi } => (lo, hi),
    };
    if delta.value() == 0.0 {
        return Ok((obs.map_values(|_, v| v.clamp(lo, hi))?, delta, None));
    }
    let scale = delta.scale(budget);
    let mut rng = RngStream::from_seed(dp.noise_seed);
    let mut noisy = Vec::with_capacity(obs.len());
    for &v in obs.values() {
        noisy.push((v + laplace_sample(scale, &mut rng)?).clamp(lo, hi));
    }
    Ok((
        ObservedTensor::new(obs.omega().clone(), noisy)?,
        delta,
        Some(scale),
    ))
}

/// Dense view of input perturbation: `X′` equals `X` off `omega` and the
/// perturbed values on it.
pub fn perturb_dense_input(x: &Tensor3, omega: &ObservationSet, dp: &DpConfig) -> Result<Tensor3> {
    let (noisy, _, _) = perturb_observed(&ObservedTensor::gather(x, omega)?, dp)?;
    let mut out = x.clone();
    for ([i, j, k], v) in noisy.entries() {
        out.set(i, j, k, v);
    }
    Ok(out)
}

/// Laplace noise on the observed entries, then the non-private fit.
pub fn run_input_perturbation(
    obs: &ObservedTensor,
    fit: &FitConfig,
    dp: &DpConfig,
    backbone: Backbone,
) -> Result<CompletionResult> {
    expect_mechanism(dp, Mechanism::Input)?;
    if dp.mechanism == Mechanism::None {
        return run_plain(obs, fit, dp, backbone);
    }
    let (noisy, delta, scale) = perturb_observed(obs, dp)?;
    let f = fit_observed_with(backbone, &noisy, fit, &mut Unperturbed)?;
    Ok(CompletionResult {
        model: f.model,
        initial_objective: f.initial_objective,
        epoch_objectives: f.epoch_objectives,
        metadata: MechanismMetadata {
            sensitivity: Some(delta),
            noise_scale: scale,
            ..MechanismMetadata::plain(Mechanism::Input, dp)
        },
    })
}

/// Clips each `C` row gradient to norm `m`, then adds exponential-mechanism
/// noise calibrated to `Δ = 2m`. One fresh noise vector per entry visit.
#[derive(Debug)]
pub struct GradientPerturbation {
    clip_m: f64,
    delta: Sensitivity,
    budget: PrivacyBudget,
    noise: NoiseMode,
    rng: RngStream,
    buf: Vec<f64>,
    max_clipped_norm: f64,
}

impl GradientPerturbation {
    pub fn new(rank: usize, dp: &DpConfig) -> Result<Self> {
        let clip_m = dp
            .clip_m
            .ok_or_else(|| Error::Config("gradient perturbation needs `clip_m`".into()))?;
        Ok(Self {
            clip_m,
            delta: gradient_sensitivity(clip_m)?,
            budget: dp.budget()?,
            noise: dp.noise,
            rng: RngStream::from_seed(dp.noise_seed),
            buf: vec![0.0; rank],
            max_clipped_norm: 0.0,
        })
    }

    pub fn sensitivity(&self) -> Sensitivity {
        self.delta
    }

    pub fn max_clipped_norm(&self) -> f64 {
        self.max_clipped_norm
    }
}

impl CGradientHook for GradientPerturbation {
    fn apply(&mut self, grad_c: &mut [f64]) -> Result<()> {
        let before = clip_l2_in_place(grad_c, self.clip_m);
        self.max_clipped_norm = self.max_clipped_norm.max(before.min(self.clip_m));
        if self.noise == NoiseMode::Sampled {
            exp_mech_fill(&mut self.buf, self.delta, self.budget, &mut self.rng)?;
            for (g, n) in grad_c.iter_mut().zip(&self.buf) {
                *g += n;
            }
        }
        Ok(())
    }
}

/// Clipping without noise.
#[derive(Debug, Clone, Copy)]
pub struct ClipOnly(pub f64);

impl CGradientHook for ClipOnly {
    fn apply(&mut self, grad_c: &mut [f64]) -> Result<()> {
        clip_l2_in_place(grad_c, self.0);
        Ok(())
    }
}

pub fn run_gradient_perturbation(
    obs: &ObservedTensor,
    fit: &FitConfig,
    dp: &DpConfig,
    backbone: Backbone,
) -> Result<CompletionResult> {
    expect_mechanism(dp, Mechanism::Gradient)?;
    if dp.mechanism == Mechanism::None {
        return run_plain(obs, fit, dp, backbone);
    }
    let mut hook = GradientPerturbation::new(fit.rank, dp)?;
    let f = fit_observed_with(backbone, obs, fit, &mut hook)?;
    Ok(CompletionResult {
        model: f.model,
        initial_objective: f.initial_objective,
        epoch_objectives: f.epoch_objectives,
        metadata: MechanismMetadata {
            sensitivity: Some(hook.sensitivity()),
            noise_scale: Some(hook.sensitivity().scale(hook.budget)),
            max_clipped_grad_norm: Some(hook.max_clipped_norm()),
            ..MechanismMetadata::plain(Mechanism::Gradient, dp)
        },
    })
}

/// Non-private fit, then one exponential-mechanism vector added to each row
/// of the released `C`, calibrated to `Δ = 2·epochs·L·η`.
pub fn run_output_perturbation(
    obs: &ObservedTensor,
    fit: &FitConfig,
    dp: &DpConfig,
    backbone: Backbone,
) -> Result<CompletionResult> {
    expect_mechanism(dp, Mechanism::Output)?;
    if dp.mechanism == Mechanism::None {
        return run_plain(obs, fit, dp, backbone);
    }
    let budget = dp.budget()?;
    let delta = output_sensitivity(fit.epochs, dp.resolved_lipschitz()?, fit.learning_rate)?;
    let mut f = fit_observed_with(backbone, obs, fit, &mut Unperturbed)?;
    let mut rng = RngStream::from_seed(dp.noise_seed);
    let mut noise = vec![0.0; fit.rank];
    let c = f.model.c_mut();
    for k in 0..c.rows() {
        exp_mech_fill(&mut noise, delta, budget, &mut rng)?;
        for (x, n) in c.row_mut(k).iter_mut().zip(&noise) {
            *x += n;
        }
    }
    Ok(CompletionResult {
        model: f.model,
        initial_objective: f.initial_objective,
        epoch_objectives: f.epoch_objectives,
        metadata: MechanismMetadata {
            sensitivity: Some(delta),
            noise_scale: Some(delta.scale(budget)),
            ..MechanismMetadata::plain(Mechanism::Output, dp)
        },
    })
}

/// Routes to the pipeline selected by `dp.mechanism`.
pub fn run_pipeline(
    obs: &ObservedTensor,
    fit: &FitConfig,
    dp: &DpConfig,
    backbone: Backbone,
) -> Result<CompletionResult> {
    match dp.mechanism {
        Mechanism::None => {
            dp.validate()?;
            run_plain(obs, fit, dp, backbone)
        }
        Mechanism::Input => run_input_perturbation(obs, fit, dp, backbone),
        Mechanism::Gradient => run_gradient_perturbation(obs, fit, dp, backbone),
        Mechanism::Output => run_output_perturbation(obs, fit, dp, backbone),
    }
}

/// Reconstruction at one position without materializing the tensor.
pub fn predict(result: &CompletionResult, i: usize, j: usize, k: usize) -> Result<f64> {
    let dims = result.dims();
    if i >= dims[0] || j >= dims[1] || k >= dims[2] {
        return Err(Error::Index { i, j, k, dims });
    }
    Ok(result.model.predict_unchecked(i, j, k))
}

/// Full reconstruction, refused above `cap` entries.
pub fn complete(result: &CompletionResult, cap: usize) -> Result<Tensor3> {
    let dims = result.dims();
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    match n {
        Some(n) if n <= cap => Ok(result.model.reconstruct()),
        _ => Err(Error::Config(format!(
            "refusing to materialize {dims:?} tensor (cap {cap} entries)"
        ))),
    }
}
