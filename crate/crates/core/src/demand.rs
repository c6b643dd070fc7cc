//! Demand distributions, independent or coupled through a Gaussian copula.

use rand_distr::{Distribution, Gamma, Geometric, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, DiscreteCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::stream::RandomStream;

/// Marginal demand family. Normal and gamma draws are clipped at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Uniform { low: f64, high: f64 },
    ClippedNormal { mean: f64, std_dev: f64 },
    Poisson { rate: f64 },
    /// Failures before the first success, support `{0, 1, 2, ...}`.
    Geometric { p: f64 },
    /// Shape `r` and inverse scale `rate`.
    ClippedGamma { shape: f64, rate: f64 },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDemand(m.to_string()));
        match *self {
            Family::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low < 0.0 || high < low {
                    return bad("uniform requires 0 <= low <= high");
                }
            }
            Family::ClippedNormal { mean, std_dev } => {
                if !mean.is_finite() || !(std_dev > 0.0 && std_dev.is_finite()) {
                    return bad("normal requires a finite mean and std_dev > 0");
                }
            }
            Family::Poisson { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad("poisson requires rate > 0");
                }
            }
            Family::Geometric { p } => {
                if !(p > 0.0 && p <= 1.0) {
                    return bad("geometric requires p in (0, 1]");
                }
            }
            Family::ClippedGamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return bad("gamma requires shape > 0 and rate > 0");
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        match *self {
            Family::Poisson { .. } | Family::Geometric { .. } => true,
            Family::Uniform { low, high } => low == high,
            _ => false,
        }
    }

    /// Supremum of the marginal density on the positive half-line.
    ///
    /// Discrete families (and a degenerate uniform) have no density; their
    /// largest point mass stands in as a bookkeeping value.
    pub fn density_sup(&self) -> Option<f64> {
        match *self {
            Family::Uniform { low, high } if high > low => Some(1.0 / (high - low)),
            Family::Uniform { .. } => Some(1.0),
            Family::ClippedNormal { std_dev, .. } => {
                Some(1.0 / (std_dev * (2.0 * std::f64::consts::PI).sqrt()))
            }
            Family::ClippedGamma { shape, rate } => {
                if shape < 1.0 {
                    None
                } else if shape == 1.0 {
                    Some(rate)
                } else {
                    let mode = (shape - 1.0) / rate;
                    let ln_f = shape * rate.ln() + (shape - 1.0) * mode.ln()
                        - rate * mode
                        - statrs::function::gamma::ln_gamma(shape);
                    Some(ln_f.exp())
                }
            }
            Family::Poisson { rate } => {
                let d = statrs::distribution::Poisson::new(rate).ok()?;
                let mode = rate.floor() as u64;
                use statrs::distribution::Discrete;
                Some(d.pmf(mode).max(d.pmf(mode.saturating_sub(1))))
            }
            Family::Geometric { p } => Some(p),
        }
    }

    /// Infimum of the density over the interior of the support, when positive.
    pub fn density_inf(&self) -> Option<f64> {
        match *self {
            Family::Uniform { low, high } if high > low => Some(1.0 / (high - low)),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Family::Uniform { low, high } => 0.5 * (low + high),
            Family::ClippedNormal { mean, std_dev } => {
                // E[max(X, 0)] for X ~ N(mean, std_dev^2)
                let z = mean / std_dev;
                mean * std_normal_cdf(z) + std_dev * std_normal_pdf(z)
            }
            Family::Poisson { rate } => rate,
            Family::Geometric { p } => (1.0 - p) / p,
            Family::ClippedGamma { shape, rate } => shape / rate,
        }
    }

    /// Upper end of the support, if finite.
    pub fn support_max(&self) -> Option<f64> {
        match *self {
            Family::Uniform { high, .. } => Some(high),
            Family::Geometric { p } if p == 1.0 => Some(0.0),
            _ => None,
        }
    }

    /// Marginal CDF of the (clipped) demand.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Family::Uniform { low, high } => {
                if x >= high {
                    1.0
                } else if x < low {
                    0.0
                } else {
                    (x - low) / (high - low)
                }
            }
            Family::ClippedNormal { mean, std_dev } => std_normal_cdf((x - mean) / std_dev),
            Family::Poisson { rate } => statrs::distribution::Poisson::new(rate)
                .map(|d| d.cdf(x.floor() as u64))
                .unwrap_or(0.0),
            Family::Geometric { p } => 1.0 - (1.0 - p).powf(x.floor() + 1.0),
            Family::ClippedGamma { shape, rate } => statrs::distribution::Gamma::new(shape, rate)
                .map(|d| d.cdf(x))
                .unwrap_or(0.0),
        }
    }

    /// Generalized inverse `inf { x : F(x) >= u }` of the clipped marginal.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match *self {
            Family::Uniform { low, high } => low + (high - low) * u,
            Family::ClippedNormal { mean, std_dev } => {
                (mean + std_dev * std_normal_quantile(u)).max(0.0)
            }
            Family::Poisson { rate } => statrs::distribution::Poisson::new(rate)
                .map(|d| d.inverse_cdf(u) as f64)
                .unwrap_or(0.0),
            Family::Geometric { p } => {
                if p == 1.0 || u <= p {
                    0.0
                } else if u >= 1.0 {
                    f64::INFINITY
                } else {
                    ((1.0 - u).ln() / (1.0 - p).ln()).ceil() - 1.0
                }
            }
            Family::ClippedGamma { shape, rate } => statrs::distribution::Gamma::new(shape, rate)
                .map(|d| d.inverse_cdf(u))
                .unwrap_or(0.0),
        }
    }

    fn draw(&self, stream: &mut RandomStream) -> f64 {
        // Parameters were validated at construction.
        match *self {
            Family::Uniform { low, high } => {
                if high > low {
                    Uniform::new_inclusive(low, high).unwrap().sample(stream)
                } else {
                    low
                }
            }
            Family::ClippedNormal { mean, std_dev } => {
                Normal::new(mean, std_dev).unwrap().sample(stream).max(0.0)
            }
            Family::Poisson { rate } => Poisson::new(rate).unwrap().sample(stream),
            Family::Geometric { p } => Geometric::new(p).unwrap().sample(stream) as f64,
            Family::ClippedGamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).unwrap().sample(stream).max(0.0)
            }
        }
    }

    /// Maps a standard normal score to this marginal.
    fn from_normal_score(&self, z: f64) -> f64 {
        match *self {
            Family::ClippedNormal { mean, std_dev } => (mean + std_dev * z).max(0.0),
            _ => self.quantile(std_normal_cdf(z)),
        }
    }
}

/// A stationary demand distribution of dimension `n`, with i.i.d. marginals
/// from one [`Family`], optionally correlated through a Gaussian copula.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandModel {
    family: Family,
    dim: usize,
    /// Lower-triangular Cholesky factor of the copula correlation.
    chol: Option<Vec<Vec<f64>>>,
    density_upper: f64,
    density_lower: Option<f64>,
}

impl DemandModel {
    pub fn new(family: Family, dim: usize) -> Result<Self> {
        family.validate()?;
        if dim == 0 {
            return Err(Error::InvalidDemand("dimension must be positive".into()));
        }
        let density_upper = family.density_sup().ok_or_else(|| {
            Error::InvalidDemand("density is unbounded (gamma shape < 1)".into())
        })?;
        Ok(Self {
            family,
            dim,
            chol: None,
            density_upper,
            density_lower: family.density_inf(),
        })
    }

    pub fn scalar(family: Family) -> Result<Self> {
        Self::new(family, 1)
    }

    /// Couples the marginals through a Gaussian copula with the given
    /// correlation matrix.
    pub fn with_correlation(mut self, corr: &[Vec<f64>]) -> Result<Self> {
        let n = self.dim;
        if corr.len() != n || corr.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidDemand(format!(
                "correlation must be {n}x{n}"
            )));
        }
        for i in 0..n {
            if (corr[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDemand("correlation diagonal must be 1".into()));
            }
            for j in 0..i {
                if (corr[i][j] - corr[j][i]).abs() > 1e-12 || corr[i][j].abs() > 1.0 {
                    return Err(Error::InvalidDemand(
                        "correlation must be symmetric with entries in [-1, 1]".into(),
                    ));
                }
            }
        }
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    let v = corr[i][i] - s;
                    if v <= 1e-12 {
                        return Err(Error::InvalidDemand(
                            "correlation matrix is not positive definite".into(),
                        ));
                    }
                    l[i][j] = v.sqrt();
                } else {
                    l[i][j] = (corr[i][j] - s) / l[j][j];
                }
            }
        }
        self.chol = Some(l);
        Ok(self)
    }

    /// Overrides the density bounds. For continuous families the upper bound
    /// must dominate the true density and the lower bound must not exceed
    /// the true infimum on the support.
    pub fn with_density_bounds(mut self, upper: f64, lower: Option<f64>) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::InvalidDemand("density upper bound must be positive".into()));
        }
        let sup = self.family.density_sup().unwrap_or(f64::INFINITY);
        if !self.family.is_discrete() && upper < sup * (1.0 - 1e-12) {
            return Err(Error::InvalidDemand(format!(
                "declared density upper bound {upper} is below the density supremum {sup}"
            )));
        }
        if let Some(lo) = lower {
            if !(lo > 0.0) || lo > upper {
                return Err(Error::InvalidDemand(
                    "density lower bound must lie in (0, upper]".into(),
                ));
            }
            if let Some(inf) = self.family.density_inf() {
                if lo > inf * (1.0 + 1e-12) {
                    return Err(Error::InvalidDemand(format!(
                        "declared density lower bound {lo} exceeds the density infimum {inf}"
                    )));
                }
            } else {
                log::warn!("density lower bound declared for a family without a positive infimum");
            }
        }
        self.density_upper = upper;
        self.density_lower = lower;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_correlated(&self) -> bool {
        self.chol.is_some()
    }

    /// β0: upper bound on each marginal density.
    pub fn density_upper(&self) -> f64 {
        self.density_upper
    }

    /// α0: lower bound on each marginal density over its support, if any.
    pub fn density_lower(&self) -> Option<f64> {
        self.density_lower
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.family.cdf(0.0) < 1.0
    }

    /// One draw of the demand vector.
    pub fn sample(&self, stream: &mut RandomStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(stream, &mut out);
        out
    }

    pub fn sample_into(&self, stream: &mut RandomStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.chol {
            None => {
                for d in out.iter_mut() {
                    *d = self.family.draw(stream);
                }
            }
            Some(l) => {
                let eps: Vec<f64> = (0..self.dim)
                    .map(|_| rand_distr::StandardNormal.sample(stream))
                    .collect();
                for (i, d) in out.iter_mut().enumerate() {
                    let z: f64 = (0..=i).map(|k| l[i][k] * eps[k]).sum();
                    *d = self.family.from_normal_score(z);
                }
            }
        }
    }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    statrs::distribution::Normal::standard().inverse_cdf(u)
}
