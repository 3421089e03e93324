//! Noise samplers, sensitivities and gradient clipping.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::ObservedTensor;

/// Privacy parameter ε, finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "privacy budget must be finite and positive, got {epsilon}"
            )));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityKind {
    /// L1 sensitivity of the observed input entries.
    InputL1,
    /// L2 sensitivity of a clipped per-row gradient.
    GradientL2,
    /// L2 sensitivity of the released factor rows after SGD.
    OutputL2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    value: f64,
    kind: SensitivityKind,
}

impl Sensitivity {
    pub fn new(value: f64, kind: SensitivityKind) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Config(format!(
                "sensitivity must be finite and non-negative, got {value}"
            )));
        }
        Ok(Self { value, kind })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn kind(self) -> SensitivityKind {
        self.kind
    }

    /// Noise scale `Δ / ε`.
    pub fn scale(self, budget: PrivacyBudget) -> f64 {
        self.value / budget.epsilon()
    }
}

/// Range of the observed values, `max - min`.
pub fn input_sensitivity(observed: &ObservedTensor) -> Result<Sensitivity> {
    let (lo, hi) = observed
        .min_max()
        .ok_or_else(|| Error::Config("input sensitivity of an empty observation set".into()))?;
    Sensitivity::new(hi - lo, SensitivityKind::InputL1)
}

/// Inverse CDF of the zero-mean Laplace distribution evaluated at
/// `u + 1/2`, for `u` in the open interval (-1/2, 1/2).
#[inline]
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One draw from Laplace(0, `scale`).
pub fn laplace_sample(scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!(
            "laplace scale must be finite and positive, got {scale}"
        )));
    }
    loop {
        let u = rng.random::<f64>() - 0.5;
        // u = -1/2 maps to an infinite draw
        if u > -0.5 {
            return Ok(laplace_from_uniform(u, scale));
        }
    }
}

/// Draws a `d`-dimensional vector with density proportional to
/// `exp(-ε‖κ‖₂ / Δ)`: a uniform direction on the unit sphere times a
/// Gamma(d, Δ/ε) radius, which is that density's exact radial marginal.
pub fn exp_mech_vector(
    d: usize,
    delta: Sensitivity,
    budget: PrivacyBudget,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d];
    exp_mech_fill(&mut out, delta, budget, rng)?;
    Ok(out)
}

/// In-place variant of [`exp_mech_vector`] writing `out.len()` coordinates.
pub fn exp_mech_fill(
    out: &mut [f64],
    delta: Sensitivity,
    budget: PrivacyBudget,
    rng: &mut RngStream,
) -> Result<()> {
    if out.is_empty() {
        return Err(Error::Config("noise vector dimension must be at least 1".into()));
    }
    if delta.value() == 0.0 {
        out.fill(0.0);
        return Ok(());
    }
    let radius_dist = Gamma::new(out.len() as f64, delta.scale(budget))
        .map_err(|e| Error::Config(format!("gamma radius: {e}")))?;
    let norm = loop {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        let n = l2_norm(out);
        if n > 0.0 {
            break n;
        }
    };
    let radius: f64 = radius_dist.sample(rng);
    for x in out.iter_mut() {
        *x *= radius / norm;
    }
    Ok(())
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `v` in place to `v / max(1, ‖v‖₂ / m)` and returns the norm it
/// had before clipping. Vectors already inside the ball are left untouched.
pub fn clip_l2_in_place(v: &mut [f64], m: f64) -> f64 {
    let norm = l2_norm(v);
    if norm > m {
        let factor = norm / m;
        for x in v.iter_mut() {
            *x /= factor;
        }
    }
    norm
}

pub fn clip_l2(v: &[f64], m: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    clip_l2_in_place(&mut out, m);
    out
}

/// `Δ = 2m` for gradients clipped to norm `m`.
pub fn gradient_sensitivity(m: f64) -> Result<Sensitivity> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::Config(format!(
            "clipping constant must be finite and positive, got {m}"
        )));
    }
    Sensitivity::new(2.0 * m, SensitivityKind::GradientL2)
}

/// `Δ = 2·τ·L·η` for `τ` passes of permutation SGD with an `L`-Lipschitz
/// loss and constant step `η`.
pub fn output_sensitivity(epochs: usize, lipschitz: f64, learning_rate: f64) -> Result<Sensitivity> {
    if epochs == 0 || lipschitz.is_nan() || lipschitz <= 0.0 || learning_rate.is_nan() || learning_rate <= 0.0 {
        return Err(Error::Config(format!(
            "output sensitivity needs positive epochs, L and η (got {epochs}, {lipschitz}, {learning_rate})"
        )));
    }
    Sensitivity::new(
        2.0 * epochs as f64 * lipschitz * learning_rate,
        SensitivityKind::OutputL2,
    )
}
