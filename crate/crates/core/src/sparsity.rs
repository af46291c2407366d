//! Hard-concrete L0 gates on the core tensor (sparse RT).
//!
//! Each core entry `g̃` is multiplied by a gate `z ∈ [0, 1]`. During training
//! `z` is a stretched and clamped sample of a binary-concrete variable with
//! location `log α`; at evaluation it is the deterministic
//! `clamp(σ(log α)(ζ − γ) + γ)`. The expected number of nonzero gates,
//! `Σ σ(log α − β log(−γ/ζ))`, is a differentiable stand-in for `‖G‖₀`.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rtucker::CoreTensor;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Distribution constants and initialization of the gate locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardConcreteParams {
    /// Temperature β.
    pub beta: f64,
    /// Upper end of the stretch interval.
    pub zeta: f64,
    /// Lower end of the stretch interval.
    pub gamma: f64,
    pub loc_mean: f64,
    pub loc_std: f64,
}

impl Default for HardConcreteParams {
    fn default() -> Self {
        HardConcreteParams {
            beta: 2.0 / 3.0,
            zeta: 1.1,
            gamma: -0.1,
            loc_mean: 3.0,
            loc_std: 1.0,
        }
    }
}

impl HardConcreteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature {} outside (0, 1)",
                self.beta
            )));
        }
        if !(self.gamma < 0.0 && self.zeta > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "stretch interval ({}, {}) must contain [0, 1] strictly",
                self.gamma, self.zeta
            )));
        }
        if !(self.loc_std >= 0.0 && self.loc_mean.is_finite()) {
            return Err(Error::InvalidArgument("bad gate location init".into()));
        }
        Ok(())
    }

    fn stretch(&self, s: f64) -> f64 {
        s * (self.zeta - self.gamma) + self.gamma
    }

    /// `β log(−γ/ζ)`, the shift inside the expected-L0 sigmoid.
    fn l0_shift(&self) -> f64 {
        self.beta * (-self.gamma / self.zeta).ln()
    }
}

/// Gate locations `log α`, one per core entry, in the core's slice-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct HardConcreteGates {
    log_alpha: Vec<f64>,
    params: HardConcreteParams,
}

/// One stochastic draw of the gates, with what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSample {
    pub z: Vec<f64>,
    /// Unstretched sigmoid output `s`.
    pub s: Vec<f64>,
    /// Stretched value before clamping.
    pub stretched: Vec<f64>,
}

impl GateSample {
    /// `∂z/∂log α` along the sampling path; zero where the clamp is active.
    pub fn dz_dlog_alpha(&self, params: &HardConcreteParams) -> Vec<f64> {
        self.s
            .iter()
            .zip(&self.stretched)
            .map(|(&s, &st)| {
                if st > 0.0 && st < 1.0 {
                    (params.zeta - params.gamma) * s * (1.0 - s) / params.beta
                } else {
                    0.0
                }
            })
            .collect()
    }
}

impl HardConcreteGates {
    pub fn from_log_alpha(log_alpha: Vec<f64>, params: HardConcreteParams) -> Result<Self> {
        params.validate()?;
        if log_alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gate log alpha".into()));
        }
        Ok(HardConcreteGates { log_alpha, params })
    }

    /// `log α ~ Normal(loc_mean, loc_std)`.
    pub fn init<R: Rng + ?Sized>(len: usize, params: HardConcreteParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let normal = Normal::new(params.loc_mean, params.loc_std)
            .map_err(|e| Error::InvalidArgument(format!("gate init: {e}")))?;
        let log_alpha = (0..len).map(|_| normal.sample(rng)).collect();
        Ok(HardConcreteGates { log_alpha, params })
    }

    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }

    pub fn params(&self) -> &HardConcreteParams {
        &self.params
    }

    pub fn log_alpha(&self) -> &[f64] {
        &self.log_alpha
    }

    pub fn log_alpha_mut(&mut self) -> &mut [f64] {
        &mut self.log_alpha
    }

    /// Uniform noise for one draw; never exactly 0 or 1.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.len()).map(|_| rng.sample::<f64, _>(Open01)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GateSample {
        let u = self.draw_noise(rng);
        self.sample_with_noise(&u)
    }

    /// Gates for fixed uniform noise `u`.
    pub fn sample_with_noise(&self, u: &[f64]) -> GateSample {
        let p = &self.params;
        let mut out = GateSample {
            z: Vec::with_capacity(u.len()),
            s: Vec::with_capacity(u.len()),
            stretched: Vec::with_capacity(u.len()),
        };
        for (&la, &u) in self.log_alpha.iter().zip(u) {
            let s = sigmoid(((u.ln() - (1.0 - u).ln()) + la) / p.beta);
            let st = p.stretch(s);
            out.s.push(s);
            out.stretched.push(st);
            out.z.push(st.clamp(0.0, 1.0));
        }
        out
    }

    /// Test-time gates.
    pub fn deterministic(&self) -> Vec<f64> {
        self.log_alpha
            .iter()
            .map(|&la| self.params.stretch(sigmoid(la)).clamp(0.0, 1.0))
            .collect()
    }

    /// Probability that each gate is nonzero.
    pub fn nonzero_probabilities(&self) -> Vec<f64> {
        let shift = self.params.l0_shift();
        self.log_alpha.iter().map(|&la| sigmoid(la - shift)).collect()
    }

    /// Expected number of nonzero gates.
    pub fn expected_l0(&self) -> f64 {
        self.nonzero_probabilities().iter().sum()
    }

    /// `∂ expected_l0 / ∂ log α`.
    pub fn expected_l0_grad(&self) -> Vec<f64> {
        self.nonzero_probabilities().iter().map(|p| p * (1.0 - p)).collect()
    }

    /// Fraction of entries whose deterministic gate is exactly zero.
    pub fn sparsity(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let zeros = self.deterministic().iter().filter(|&&z| z == 0.0).count();
        zeros as f64 / self.len() as f64
    }
}

/// Fraction of core entries switched off by the deterministic gates.
pub fn sparsity_report(gates: &HardConcreteGates) -> f64 {
    gates.sparsity()
}

/// `G = G̃ ⊙ z` on free entries. Structurally fixed entries are never gated.
/// Backward: `∂/∂G̃ = z · upstream`, `∂/∂z = G̃ · upstream`.
pub fn apply_gates(core: &CoreTensor, z: &[f64]) -> Result<CoreTensor> {
    if z.len() != core.len() {
        return Err(Error::Dimension(format!(
            "{} gates for {} core entries",
            z.len(),
            core.len()
        )));
    }
    let mut out = core.clone();
    let fixed = core.fixed_mask().map(|m| m.as_slice().expect("standard layout mask"));
    for (idx, (v, g)) in out.values_mut().iter_mut().zip(z).enumerate() {
        if !fixed.is_some_and(|f| f[idx]) {
            *v *= g;
        }
    }
    Ok(out)
}

/// Strength and warm-up of the L0 penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Config {
    pub lambda: f64,
    /// Number of initial epochs trained without the penalty.
    pub warmup_epochs: usize,
}

impl Default for L0Config {
    fn default() -> Self {
        L0Config {
            lambda: 0.0,
            warmup_epochs: 25,
        }
    }
}

impl L0Config {
    /// Penalty weight in effect during 0-based `epoch`.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            0.0
        } else {
            self.lambda
        }
    }
}
