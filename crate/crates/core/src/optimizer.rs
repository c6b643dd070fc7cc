//! Batch-size schedules and the projected minibatch-SGD step.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchSchedule {
    /// Constant batch ⌈√T⌉ for a known horizon.
    FixedTime { horizon: u64 },
    /// Batch `K·τ`.
    AnyTimeLinear { slope: u64 },
    /// Batch ⌈ς^(τ−1)⌉.
    Exponential { base: f64 },
}

impl BatchSchedule {
    pub fn fixed_time(horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidSchedule("horizon must be positive".into()));
        }
        Ok(Self::FixedTime { horizon })
    }

    pub fn any_time_linear(slope: u64) -> Result<Self> {
        if slope == 0 {
            return Err(Error::InvalidSchedule("slope must be positive".into()));
        }
        Ok(Self::AnyTimeLinear { slope })
    }

    pub fn exponential(base: f64) -> Result<Self> {
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::InvalidSchedule(format!("base must exceed 1, got {base}")));
        }
        Ok(Self::Exponential { base })
    }

    /// Exponential schedule with ς = 1/γ, γ = 1 − ηα + 2η². Requires γ ∈ (0,1).
    pub fn from_stepsize(eta: f64, alpha: f64) -> Result<Self> {
        let g = contraction(eta, alpha);
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "contraction factor {g} outside (0,1) for eta={eta}, alpha={alpha}"
            )));
        }
        Self::exponential(1.0 / g)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::FixedTime { horizon } => Self::fixed_time(horizon).map(|_| ()),
            Self::AnyTimeLinear { slope } => Self::any_time_linear(slope).map(|_| ()),
            Self::Exponential { base } => Self::exponential(base).map(|_| ()),
        }
    }

    /// n_τ for τ ≥ 1 (τ = 0 is treated as 1).
    pub fn batch_size(&self, tau: u64) -> u64 {
        let tau = tau.max(1);
        match *self {
            Self::FixedTime { horizon } => ceil_sqrt(horizon),
            Self::AnyTimeLinear { slope } => slope.saturating_mul(tau),
            Self::Exponential { base } => {
                let v = base.powf((tau - 1) as f64);
                if v >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    // guard against 2^k evaluating to 2^k + ulp
                    let r = v.round();
                    if (v - r).abs() <= 1e-9 * r.max(1.0) {
                        (r as u64).max(1)
                    } else {
                        (v.ceil() as u64).max(1)
                    }
                }
            }
        }
    }

    /// Smallest k with n_1 + … + n_k ≥ T.
    pub fn tau_max(&self, horizon: u64) -> u64 {
        let mut total: u64 = 0;
        let mut k = 0;
        while total < horizon {
            k += 1;
            total = total.saturating_add(self.batch_size(k));
        }
        k.max(1)
    }

    pub fn base(&self) -> Option<f64> {
        match *self {
            Self::Exponential { base } => Some(base),
            _ => None,
        }
    }
}

pub fn contraction(eta: f64, alpha: f64) -> f64 {
    1.0 - eta * alpha + 2.0 * eta * eta
}

fn ceil_sqrt(t: u64) -> u64 {
    let mut r = (t as f64).sqrt() as u64;
    while r * r < t {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= t {
        r -= 1;
    }
    r.max(1)
}

/// Analytical switch-count bounds.
pub fn fixed_time_switch_bound(horizon: u64) -> f64 {
    (horizon as f64).sqrt() + 1.0
}

pub fn exponential_switch_bound(base: f64, horizon: u64) -> f64 {
    ((base - 1.0) * horizon as f64 + 1.0).ln() / base.ln() + 2.0
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    w: Vec<f64>,
    tau: u64,
    eta: f64,
    schedule: BatchSchedule,
}

impl OptimizerState {
    pub fn new(w: Vec<f64>, eta: f64, schedule: BatchSchedule, set: &ConstraintSet) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidArgument(format!("stepsize must be positive, got {eta}")));
        }
        schedule.validate()?;
        if !set.contains(&w, 1e-6) {
            return Err(Error::InfeasibleStart);
        }
        Ok(Self { w, tau: 1, eta, schedule })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn schedule(&self) -> BatchSchedule {
        self.schedule
    }

    pub fn current_batch(&self) -> u64 {
        self.schedule.batch_size(self.tau)
    }

    /// w ← Π[w − (η/n_τ) Σ g], τ ← τ + 1.
    pub fn minibatch_step(&mut self, gradients: &[Vec<f64>], set: &ConstraintSet) -> Result<()> {
        let n_tau = self.current_batch();
        if gradients.is_empty() || gradients.len() as u64 != n_tau {
            return Err(Error::BatchSize { expected: n_tau as usize, got: gradients.len() });
        }
        let scale = self.eta / n_tau as f64;
        let mut next = self.w.clone();
        for g in gradients {
            if g.len() != next.len() {
                return Err(Error::Dimension { expected: next.len(), got: g.len() });
            }
            for (v, gi) in next.iter_mut().zip(g) {
                *v -= scale * gi;
            }
        }
        self.w = set.project(&next)?;
        self.tau += 1;
        Ok(())
    }
}

/// Problem constants used by the stepsize admissibility checks and by the
/// analytical bounds. Unknown values are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta0: Option<f64>,
    pub alpha0: Option<f64>,
    pub sigma0: Option<f64>,
    pub sigma: Option<f64>,
    pub diameter: Option<f64>,
    pub max_gradient: Option<f64>,
    pub max_cost: Option<f64>,
    pub hitting_bound: Option<f64>,
    pub slope: Option<f64>,
}

impl TheoryConstants {
    /// κ = max{R², σ²}.
    pub fn kappa(&self) -> Option<f64> {
        let r = self.diameter?;
        let s = self.sigma.or(self.sigma0)?;
        Some((r * r).max(s * s))
    }

    /// Stepsize admissibility warnings; empty when everything checks out.
    pub fn stepsize_warnings(&self, eta: f64, schedule: &BatchSchedule) -> Vec<String> {
        let mut out = Vec::new();
        match schedule {
            BatchSchedule::Exponential { .. } => {
                match (self.alpha, self.beta) {
                    (Some(a), Some(b)) => {
                        let cap = (a / 2.0).min(1.0 / a).min(1.0 / (2.0 * b));
                        if eta > cap {
                            out.push(format!(
                                "eta={eta} exceeds min(alpha/2, 1/alpha, 1/(2 beta)) = {cap}"
                            ));
                        }
                    }
                    _ => out.push("alpha or beta unknown; exponential stepsize condition unchecked".into()),
                }
                if let Some(a) = self.alpha {
                    let g = contraction(eta, a);
                    if !(g > 0.0 && g < 1.0) {
                        out.push(format!("contraction factor {g} outside (0,1)"));
                    }
                }
            }
            _ => match self.beta {
                Some(b) if eta >= 1.0 / b => out.push(format!("eta={eta} is not below 1/beta = {}", 1.0 / b)),
                Some(_) => {}
                None => out.push("beta unknown; stepsize condition unchecked".into()),
            },
        }
        out
    }
}
