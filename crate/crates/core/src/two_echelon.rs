//! Doubling-epoch central planner for a serial two-echelon system: the
//! retailer level comes from an empirical quantile over the first half of
//! each epoch, the supplier level from minibatch SGD over the second half.
//!
//! Per-period cost, with `d'` the previous period's demand:
//!
//! ```text
//! ŝ₁ = s₁ − (d' − s₂)⁺
//! H  = h₁ (ŝ₁ − d)⁺ + p₁ (d − ŝ₁)⁺ + h₂ (s₂ − d)⁺
//! ```
//!
//! The supplier gradient used by the planner is the derivative of `H` in
//! `s₂` plus a confidence term shrinking with the epoch length.

use serde::{Deserialize, Serialize};

use crate::baselines::saa_level;
use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::optimizer::BatchSchedule;
use crate::stream::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoEchelonParams {
    pub h1: f64,
    pub h2: f64,
    pub p1: f64,
    #[serde(default = "one")]
    pub c1: f64,
    /// Demand upper bound entering the confidence term.
    pub demand_bound: f64,
    pub s_max: f64,
    pub eta: f64,
    #[serde(default = "unit_linear")]
    pub schedule: BatchSchedule,
    /// Levels `(s₁, s₂)` used in the first epoch.
    #[serde(default)]
    pub initial: [f64; 2],
}

fn one() -> f64 {
    1.0
}

fn unit_linear() -> BatchSchedule {
    BatchSchedule::AnyTimeLinear { slope: 1 }
}

impl TwoEchelonParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        for (name, v) in [("h1", self.h1), ("h2", self.h2), ("p1", self.p1), ("c1", self.c1)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if self.h1 + self.p1 <= 0.0 {
            return bad("h1 + p1 must be positive".into());
        }
        if !(self.demand_bound.is_finite() && self.demand_bound > 0.0) {
            return bad(format!("demand_bound must be positive, got {}", self.demand_bound));
        }
        if !(self.s_max.is_finite() && self.s_max >= 0.0) {
            return bad(format!("s_max must be nonnegative, got {}", self.s_max));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.initial.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("initial levels must be nonnegative".into());
        }
        self.schedule.validate()
    }

    /// `(h₂ + p₁)/(h₁ + p₁)`.
    pub fn retailer_ratio(&self) -> f64 {
        (self.h2 + self.p1) / (self.h1 + self.p1)
    }

    /// Retailer level actually available after the supplier ships.
    pub fn effective_retailer(&self, s1: f64, s2: f64, d_prev: f64) -> f64 {
        s1 - (d_prev - s2).max(0.0)
    }

    pub fn period_cost(&self, s1: f64, s2: f64, d_prev: f64, d: f64) -> f64 {
        let r = self.effective_retailer(s1, s2, d_prev);
        self.h1 * (r - d).max(0.0) + self.p1 * (d - r).max(0.0) + self.h2 * (s2 - d).max(0.0)
    }

    fn confidence(&self, horizon: u64, epoch_len: usize) -> f64 {
        let log = 3.0 * (horizon as f64).ln() + self.demand_bound.ln();
        self.c1 * (self.h1 + self.p1) * (2.0 * log.max(0.0) / epoch_len as f64).sqrt()
    }
}

/// `Φ̂⁻¹(q)`: the smallest observation `x` with `Φ̂(x) >= q`.
pub fn empirical_quantile(data: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0,1], got {q}")));
    }
    saa_level(data, q).ok_or_else(|| Error::InvalidArgument("empty sample".into()))
}

/// Epoch lengths `2, 4, 8, ...`, the last truncated so they sum to `horizon`.
pub fn epoch_lengths(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let (mut left, mut len) = (horizon, 2u64);
    while left > 0 {
        out.push(len.min(left));
        left = left.saturating_sub(len);
        len = len.saturating_mul(2);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochDecision {
    pub s1: f64,
    pub s2: f64,
    /// Supplier iterates `s₂,ᵢ` for `i = L/2+1..L`.
    pub iterates: Vec<f64>,
    pub updates: u64,
}

/// One call of the epoch optimizer on `data` (`L` demands, `L` even).
/// `w_start` seeds the supplier iterate.
pub fn epoch_optimize(data: &[f64], params: &TwoEchelonParams, horizon: u64, w_start: f64) -> Result<EpochDecision> {
    let len = data.len();
    if len < 2 || len % 2 != 0 {
        return Err(Error::InvalidArgument(format!("epoch length must be even and >= 2, got {len}")));
    }
    let half = len / 2;
    let mut first = data[..half].to_vec();
    first.sort_by(f64::total_cmp);
    let cdf = |x: f64| first.partition_point(|&v| v <= x) as f64 / half as f64;
    let s1 = empirical_quantile(&first, params.retailer_ratio())?;
    let bonus = params.confidence(horizon, len);

    let mut w = w_start.clamp(0.0, params.s_max);
    let (mut tau, mut sum, mut count, mut updates) = (1u64, 0.0, 0u64, 0u64);
    let mut iterates = Vec::with_capacity(half);
    // 1-based i = half+1..=len maps to data[i-1]
    for i in half..len {
        let (d_prev, d) = (data[i - 1], data[i]);
        let s2 = w;
        iterates.push(s2);
        let r = if d_prev <= s2 { s1 } else { s1 + s2 - d_prev };
        let mut g = params.h2 * indicator(s2 >= d) + bonus * cdf(s2);
        if s2 <= d_prev {
            g += (params.h1 + params.p1) * indicator(r >= d) - params.p1;
        }
        sum += g;
        count += 1;
        if count == params.schedule.batch_size(tau) {
            w = (w - params.eta / count as f64 * sum).clamp(0.0, params.s_max);
            tau += 1;
            sum = 0.0;
            count = 0;
            updates += 1;
        }
    }
    let s2 = iterates.iter().sum::<f64>() / half as f64;
    Ok(EpochDecision { s1, s2, iterates, updates })
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub start: u64,
    pub len: u64,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerRun {
    pub epochs: Vec<EpochRecord>,
    pub total_cost: f64,
}

/// Runs the planner for `horizon` periods. `on_period(t, cost)` sees every
/// period's cost as it happens.
pub fn planner_run<F>(
    params: &TwoEchelonParams,
    demand: &DemandModel,
    horizon: u64,
    stream: &mut RandomStream,
    mut on_period: F,
) -> Result<PlannerRun>
where
    F: FnMut(u64, f64),
{
    params.validate()?;
    if horizon < 2 {
        return Err(Error::InvalidArgument("horizon must be at least 2".into()));
    }
    if demand.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: demand.dim() });
    }
    let [mut s1, mut s2] = params.initial;
    let mut d = [0.0];
    let mut d_prev = 0.0;
    let mut t = 1u64;
    let mut total = 0.0;
    let mut epochs = Vec::new();
    for len in epoch_lengths(horizon) {
        epochs.push(EpochRecord { start: t, len, s1, s2 });
        let mut data = Vec::with_capacity(len as usize);
        for _ in 0..len {
            demand.sample_into(stream, &mut d);
            let cost = params.period_cost(s1, s2, d_prev, d[0]);
            total += cost;
            on_period(t, cost);
            data.push(d[0]);
            d_prev = d[0];
            t += 1;
        }
        if t <= horizon {
            let next = epoch_optimize(&data, params, horizon, s2)?;
            s1 = next.s1;
            s2 = next.s2;
        }
    }
    Ok(PlannerRun { epochs, total_cost: total })
}

/// Sample-average minimizer of the stationary per-period cost over
/// `s₂ ∈ [0, s_max]`, `s₁` free. `pairs` are `(d', d)` draws.
///
/// For fixed `s₂` the cost is a newsvendor in `s₁` against
/// `d + (d' − s₂)⁺`, solved exactly by an order statistic; `s₂` is searched
/// on a grid and refined by golden section.
pub fn optimal_levels(params: &TwoEchelonParams, pairs: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let q = params.p1 / (params.h1 + params.p1);
    let mut buf = vec![0.0; pairs.len()];
    let mut eval = |s2: f64| -> (f64, f64) {
        for (b, &(dp, d)) in buf.iter_mut().zip(pairs) {
            *b = d + (dp - s2).max(0.0);
        }
        let k = ((q * buf.len() as f64).ceil() as usize).clamp(1, buf.len()) - 1;
        let (_, s1, _) = buf.select_nth_unstable_by(k, f64::total_cmp);
        let s1 = *s1;
        let c = pairs.iter().map(|&(dp, d)| params.period_cost(s1, s2, dp, d)).sum::<f64>() / pairs.len() as f64;
        (c, s1)
    };
    let grid = 200;
    let step = params.s_max / grid as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for k in 0..=grid {
        let s2 = k as f64 * step;
        let (c, s1) = eval(s2);
        if c < best.0 {
            best = (c, s1, s2);
        }
    }
    let (mut lo, mut hi) = ((best.2 - step).max(0.0), (best.2 + step).min(params.s_max));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if eval(a).0 <= eval(b).0 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mid = 0.5 * (lo + hi);
    let (c, s1) = eval(mid);
    if c < best.0 {
        best = (c, s1, mid);
    }
    Ok((best.1, best.2, best.0))
}
