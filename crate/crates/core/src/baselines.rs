//! Reference policies: projected SGD with decaying stepsizes, and the
//! full-information SAA newsvendor.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::meta_policy::{order_up_to, Application, PeriodKind, Policy};

/// Projected SGD that moves its target every period with stepsize `η/t^p`.
/// The gradient is estimated at the implemented level.
#[derive(Clone, Debug)]
pub struct SgdPolicy {
    w: Vec<f64>,
    t: u64,
    eta: f64,
    power: f64,
    updates: u64,
}

impl SgdPolicy {
    /// `w` is given in target space.
    pub fn new(w: Vec<f64>, eta: f64, power: f64, set: &ConstraintSet) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidArgument(format!("stepsize must be positive, got {eta}")));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::InvalidArgument(format!("stepsize power must be >= 0, got {power}")));
        }
        if !set.contains(&w, 1e-6) {
            return Err(Error::InfeasibleStart);
        }
        Ok(Self { w, t: 1, eta, power, updates: 0 })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn period(&self) -> u64 {
        self.t
    }

    /// `w ← Π[w − (η/t^p) g]`, `t ← t + 1`.
    pub fn step(&mut self, g: &[f64], set: &ConstraintSet) -> Result<()> {
        let lr = self.eta / (self.t as f64).powf(self.power);
        let next: Vec<f64> = self.w.iter().zip(g).map(|(w, g)| w - lr * g).collect();
        let next = set.project(&next)?;
        if next != self.w {
            self.updates += 1;
        }
        self.w = next;
        self.t += 1;
        Ok(())
    }
}

impl Policy for SgdPolicy {
    fn decide(&mut self, x: &[f64], app: &dyn Application) -> Result<(Vec<f64>, PeriodKind)> {
        order_up_to(x, &app.to_decision(&self.w), app)
    }

    fn observe(&mut self, y: &[f64], observation: &[f64], _demand: &[f64], app: &dyn Application) -> Result<()> {
        let g = app.gradient(y, observation);
        self.step(&g, app.target_set())
    }

    fn target(&self) -> Vec<f64> {
        self.w.clone()
    }

    fn updates(&self) -> u64 {
        self.updates
    }
}

/// Running `⌈q·m⌉`-th order statistic of a growing sample.
#[derive(Clone, Debug, Default)]
pub struct QuantileTracker {
    q: f64,
    // the k smallest values, k = ⌈q m⌉
    low: BinaryHeap<OrdF64>,
    high: BinaryHeap<Reverse<OrdF64>>,
}

#[derive(Clone, Copy, Debug)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl QuantileTracker {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0,1], got {q}")));
        }
        Ok(Self { q, ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.low.len() + self.high.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, v: f64) {
        match self.low.peek() {
            Some(top) if v > top.0 => self.high.push(Reverse(OrdF64(v))),
            _ => self.low.push(OrdF64(v)),
        }
        let k = order_index(self.q, self.len());
        while self.low.len() > k {
            let v = self.low.pop().expect("nonempty");
            self.high.push(Reverse(v));
        }
        while self.low.len() < k {
            let Reverse(v) = self.high.pop().expect("nonempty");
            self.low.push(v);
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.low.peek().map(|v| v.0)
    }
}

/// `⌈q·m⌉`, at least 1.
fn order_index(q: f64, m: usize) -> usize {
    let k = (q * m as f64).ceil() as usize;
    // guard against q·m landing a hair above an integer
    let k = if k > 1 && ((k - 1) as f64 - q * m as f64).abs() < 1e-9 { k - 1 } else { k };
    k.clamp(1, m.max(1))
}

/// `⌈q·m⌉`-th order statistic; `None` for an empty history.
pub fn saa_level(history: &[f64], q: f64) -> Option<f64> {
    if history.is_empty() {
        return None;
    }
    let mut v = history.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[order_index(q, v.len()) - 1])
}

/// Orders up to the per-coordinate empirical critical quantile of all past
/// demand. Needs uncensored demand.
#[derive(Clone, Debug)]
pub struct SaaPolicy {
    trackers: Vec<QuantileTracker>,
    // demand coordinate read by each tracker
    sources: Vec<usize>,
    initial: Vec<f64>,
    updates: u64,
    last: Vec<f64>,
}

impl SaaPolicy {
    /// `ratios[i] = b_i / (b_i + h_i)`; `initial` is used before any data.
    pub fn new(ratios: &[f64], initial: Vec<f64>) -> Result<Self> {
        if ratios.len() != initial.len() {
            return Err(Error::Dimension { expected: initial.len(), got: ratios.len() });
        }
        let trackers = ratios.iter().map(|&q| QuantileTracker::new(q)).collect::<Result<_>>()?;
        let sources = (0..initial.len()).collect();
        Ok(Self { trackers, sources, last: initial.clone(), initial, updates: 0 })
    }

    /// Lets tracker `i` read demand coordinate `sources[i]`, e.g. every
    /// echelon level against one scalar demand.
    pub fn with_sources(mut self, sources: Vec<usize>) -> Result<Self> {
        if sources.len() != self.trackers.len() {
            return Err(Error::Dimension { expected: self.trackers.len(), got: sources.len() });
        }
        self.sources = sources;
        Ok(self)
    }

    pub fn level(&self) -> Vec<f64> {
        self.trackers
            .iter()
            .zip(&self.initial)
            .map(|(t, &init)| t.value().unwrap_or(init))
            .collect()
    }
}

impl Policy for SaaPolicy {
    fn decide(&mut self, x: &[f64], app: &dyn Application) -> Result<(Vec<f64>, PeriodKind)> {
        let w = app.target_set().project(&self.level())?;
        order_up_to(x, &app.to_decision(&w), app)
    }

    fn observe(&mut self, _y: &[f64], _observation: &[f64], demand: &[f64], _app: &dyn Application) -> Result<()> {
        for (t, &j) in self.trackers.iter_mut().zip(&self.sources) {
            let d = *demand.get(j).ok_or(Error::Dimension { expected: j + 1, got: demand.len() })?;
            t.push(d);
        }
        let now = self.level();
        if now != self.last {
            self.updates += 1;
            self.last = now;
        }
        Ok(())
    }

    fn target(&self) -> Vec<f64> {
        self.level()
    }

    fn updates(&self) -> u64 {
        self.updates
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line() -> ConstraintSet {
        ConstraintSet::boxed(vec![0.0], vec![10.0]).unwrap()
    }

    #[test]
    fn sgd_step_examples() {
        let set = line();
        let mut p = SgdPolicy::new(vec![5.0], 1.0, 1.0, &set).unwrap();
        p.step(&[1.0], &set).unwrap();
        assert_eq!(p.w(), &[4.0]);

        let mut p = SgdPolicy::new(vec![5.0], 1.0, 0.5, &set).unwrap();
        p.t = 4;
        p.step(&[2.0], &set).unwrap();
        assert_eq!(p.w(), &[4.0]);

        let mut p = SgdPolicy::new(vec![1.0], 1.0, 1.0, &set).unwrap();
        p.step(&[50.0], &set).unwrap();
        assert_eq!(p.w(), &[0.0]);
    }

    #[test]
    fn saa_examples() {
        assert_eq!(saa_level(&[1.0, 2.0, 3.0, 4.0], 0.75), Some(3.0));
        assert_eq!(saa_level(&[4.0, 1.0, 3.0, 2.0], 1.0), Some(4.0));
        assert_eq!(saa_level(&[4.0, 1.0, 3.0, 2.0], 0.999_999), Some(4.0));
        assert_eq!(saa_level(&[7.5], 0.3), Some(7.5));
        assert_eq!(saa_level(&[], 0.3), None);
    }

    #[test]
    fn saa_policy_falls_back_to_initial_level() {
        let p = SaaPolicy::new(&[0.5], vec![2.0]).unwrap();
        assert_eq!(p.level(), vec![2.0]);
        assert!(QuantileTracker::new(0.0).is_err());
    }

    #[test]
    fn shared_source_feeds_every_tracker() {
        let mut p = SaaPolicy::new(&[0.5, 1.0], vec![0.0, 0.0]).unwrap().with_sources(vec![0, 0]).unwrap();
        for d in [1.0, 2.0, 3.0, 4.0] {
            for (t, &j) in p.trackers.iter_mut().zip(&p.sources) {
                t.push([d][j]);
            }
        }
        assert!(SaaPolicy::new(&[0.5], vec![0.0]).unwrap().with_sources(vec![0, 0]).is_err());
        assert_eq!(p.level(), vec![2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn tracker_matches_sorting(xs in prop::collection::vec(0.0f64..100.0, 1..200), q in 0.01f64..1.0) {
            let mut t = QuantileTracker::new(q).unwrap();
            for (m, &x) in xs.iter().enumerate() {
                t.push(x);
                prop_assert_eq!(t.value(), saa_level(&xs[..=m], q));
            }
        }
    }
}
