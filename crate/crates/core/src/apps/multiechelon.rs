//! Serial multi-echelon system with downstream emergency transport and lost
//! sales. Learning happens on prefix sums `ỹ = B y`, where the cost separates
//! into scalar newsvendor terms.

use super::{check_positive, norm, pos};
use crate::constraints::{ConstraintSet, Halfspace};
use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::meta_policy::Application;
use crate::optimizer::TheoryConstants;

#[derive(Clone, Debug)]
pub struct MultiEchelon {
    h: Vec<f64>,
    b: Vec<f64>,
    rho: Vec<f64>,
    demand: DemandModel,
    decision_set: ConstraintSet,
    tilde_set: ConstraintSet,
}

impl MultiEchelon {
    pub fn new(h: Vec<f64>, b: Vec<f64>, rho: Vec<f64>, demand: DemandModel) -> Result<Self> {
        let n = rho.len();
        if n == 0 {
            return Err(Error::InvalidInstance("need at least one stage".into()));
        }
        check_positive("h", &h, n)?;
        check_positive("b", &b, n)?;
        check_positive("rho", &rho, n)?;
        if demand.dim() != 1 {
            return Err(Error::Dimension { expected: 1, got: demand.dim() });
        }
        let decision_set = ConstraintSet::boxed(vec![0.0; n], rho.clone())?;
        let tilde_set = tilde_set(&rho)?;
        Ok(Self { h, b, rho, demand, decision_set, tilde_set })
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `Γ̃ = B Γ`.
    pub fn tilde_set(&self) -> &ConstraintSet {
        &self.tilde_set
    }

    /// Holding, transport and lost-sales cost, term by term.
    pub fn cost_detailed(&self, y: &[f64], d: f64) -> f64 {
        let n = y.len();
        let b_total: f64 = self.b.iter().sum();
        let mut cost = 0.0;
        let mut before = 0.0; // y_1 + … + y_{i−1}
        for i in 0..n {
            let stage_h: f64 = self.h[i..].iter().sum();
            let unmet = pos(d - before);
            cost += stage_h * pos(y[i] - unmet);
            before += y[i];
            if i + 1 < n {
                let upstream: f64 = y[i + 1..].iter().sum();
                cost += self.b[i] * upstream.min(pos(d - before));
            }
        }
        cost + b_total * pos(d - before)
    }

    /// `Σ h_i (ỹ_i − d)⁺ + b_i (d − ỹ_i)⁺`.
    pub fn cost_simplified(&self, y: &[f64], d: f64) -> f64 {
        let mut acc = 0.0;
        let mut cost = 0.0;
        for i in 0..y.len() {
            acc += y[i];
            cost += self.h[i] * pos(acc - d) + self.b[i] * pos(d - acc);
        }
        cost
    }

    pub fn dynamics(&self, y: &[f64], d: f64) -> Vec<f64> {
        let mut before = 0.0;
        y.iter()
            .map(|&yi| {
                let x = pos(yi - pos(d - before));
                before += yi;
                x
            })
            .collect()
    }

    /// Total sales `min(d, ỹ_n)`.
    pub fn censor(&self, y: &[f64], d: f64) -> f64 {
        d.min(y.iter().sum())
    }

    /// `h ⊙ 1[ỹ > d] − b ⊙ 1[ỹ <= d]`, with `ỹ_i <= d` read off as `s >= ỹ_i`.
    pub fn gradient_estimator_tilde(&self, y_tilde: &[f64], sales: f64) -> Vec<f64> {
        y_tilde
            .iter()
            .enumerate()
            .map(|(i, &v)| if sales < v { self.h[i] } else { -self.b[i] })
            .collect()
    }

    /// With `i* = max{i : w_i < x_i}`: `y_i = x_i` up to `i*`, `w_i` above.
    pub fn transition_solver(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        match (0..x.len()).rev().find(|&i| w[i] < x[i]) {
            None => w.to_vec(),
            Some(star) => (0..x.len()).map(|i| if i <= star { x[i] } else { w[i] }).collect(),
        }
    }

    pub fn sigma0(&self) -> f64 {
        (norm(&self.h).powi(2) + norm(&self.b).powi(2)).sqrt()
    }

    /// `1 + 6 β0 Σ ρ`.
    pub fn hitting_bound(&self) -> f64 {
        1.0 + 6.0 * self.demand.density_upper() * self.rho.iter().sum::<f64>()
    }

    /// Per-coordinate newsvendor solution `ỹ_i = F⁻¹(b_i/(b_i+h_i))`, before
    /// accounting for `Γ̃`.
    pub fn unconstrained_optimum(&self) -> Vec<f64> {
        let fam = self.demand.family();
        (0..self.h.len())
            .map(|i| fam.quantile(self.b[i] / (self.b[i] + self.h[i])))
            .collect()
    }

    pub fn theory_constants(&self) -> TheoryConstants {
        let hb: Vec<f64> = self.h.iter().zip(&self.b).map(|(a, b)| a + b).collect();
        let max = hb.iter().cloned().fold(0.0, f64::max);
        let min = hb.iter().cloned().fold(f64::INFINITY, f64::min);
        TheoryConstants {
            beta: Some(max * self.demand.density_upper()),
            alpha: self.demand.density_lower().map(|a0| a0 * min),
            beta0: Some(self.demand.density_upper()),
            alpha0: self.demand.density_lower(),
            sigma0: Some(self.sigma0()),
            sigma: Some(self.sigma0()),
            diameter: self.tilde_set.diameter().ok(),
            max_gradient: Some(self.sigma0()),
            hitting_bound: Some(self.hitting_bound()),
            ..Default::default()
        }
    }
}

/// `{ ỹ : 0 <= ỹ_i − ỹ_{i−1} <= ρ_i }` plus the redundant box
/// `0 <= ỹ_i <= ρ_1 + … + ρ_i` that certifies boundedness.
fn tilde_set(rho: &[f64]) -> Result<ConstraintSet> {
    let n = rho.len();
    let upper = transform(rho);
    let mut hs = Vec::with_capacity(2 * n);
    for i in 1..n {
        let mut up = vec![0.0; n];
        up[i] = 1.0;
        up[i - 1] = -1.0;
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        hs.push(Halfspace::new(up, rho[i]));
        hs.push(Halfspace::new(down, 0.0));
    }
    ConstraintSet::new(vec![0.0; n], Some(upper), hs)
}

/// Prefix sums.
pub fn transform(y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    y.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// First differences; rejects a decreasing sequence.
pub fn inverse_transform(y_tilde: &[f64]) -> Result<Vec<f64>> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(y_tilde.len());
    for (i, &v) in y_tilde.iter().enumerate() {
        if v < prev {
            return Err(Error::InvalidArgument(format!("prefix sums decrease at index {i}")));
        }
        out.push(v - prev);
        prev = v;
    }
    Ok(out)
}

impl Application for MultiEchelon {
    fn dim(&self) -> usize {
        self.rho.len()
    }

    fn target_set(&self) -> &ConstraintSet {
        &self.tilde_set
    }

    fn decision_set(&self) -> &ConstraintSet {
        &self.decision_set
    }

    fn demand(&self) -> &DemandModel {
        &self.demand
    }

    fn cost(&self, y: &[f64], d: &[f64]) -> f64 {
        self.cost_simplified(y, d[0])
    }

    fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        MultiEchelon::dynamics(self, y, d[0])
    }

    fn observe(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        vec![self.censor(y, d[0])]
    }

    fn gradient(&self, y: &[f64], observation: &[f64]) -> Vec<f64> {
        self.gradient_estimator_tilde(&transform(y), observation[0])
    }

    fn transition(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.transition_solver(x, w))
    }

    fn sigma0(&self) -> f64 {
        MultiEchelon::sigma0(self)
    }

    fn hitting_bound(&self) -> f64 {
        MultiEchelon::hitting_bound(self)
    }

    /// First differences, clamped into `[0, ρ]` to absorb projection noise.
    fn to_decision(&self, target: &[f64]) -> Vec<f64> {
        let mut prev = 0.0;
        target
            .iter()
            .zip(&self.rho)
            .map(|(&v, &r)| {
                let q = (v - prev).clamp(0.0, r);
                prev = v;
                q
            })
            .collect()
    }

    fn to_target(&self, y: &[f64]) -> Vec<f64> {
        transform(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Family;
    use proptest::prelude::*;

    fn two() -> MultiEchelon {
        MultiEchelon::new(
            vec![1.0, 1.0],
            vec![2.0, 3.0],
            vec![10.0, 10.0],
            DemandModel::scalar(Family::Uniform { low: 0.0, high: 10.0 }).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        let a = two();
        let y = [2.0, 3.0];
        for (d, want) in [(4.0, 5.0), (0.0, 7.0), (6.0, 11.0)] {
            assert_eq!(a.cost_detailed(&y, d), want, "detailed d={d}");
            assert_eq!(a.cost_simplified(&y, d), want, "simplified d={d}");
        }
    }

    #[test]
    fn transform_examples() {
        assert_eq!(transform(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 6.0]);
        assert_eq!(inverse_transform(&[1.0, 3.0, 6.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(transform(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert!(inverse_transform(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let a = two();
        assert_eq!(a.gradient_estimator_tilde(&[1.0, 3.0], 2.0), vec![-2.0, 1.0]);
        assert_eq!(a.gradient_estimator_tilde(&[1.0, 3.0], 0.0), vec![1.0, 1.0]);
        // d = 5 > ỹ_n, sales = 3
        assert_eq!(a.gradient_estimator_tilde(&[1.0, 3.0], a.censor(&[1.0, 2.0], 5.0)), vec![-2.0, -3.0]);
    }

    #[test]
    fn transition_examples() {
        let a = MultiEchelon::new(
            vec![1.0; 3],
            vec![1.0; 3],
            vec![10.0; 3],
            DemandModel::scalar(Family::Uniform { low: 0.0, high: 10.0 }).unwrap(),
        )
        .unwrap();
        assert_eq!(a.transition_solver(&[2.0, 1.0, 0.0], &[1.0, 2.0, 3.0]), vec![2.0, 2.0, 3.0]);
        assert_eq!(a.transition_solver(&[1.0, 3.0, 2.0], &[2.0, 1.0, 3.0]), vec![1.0, 3.0, 3.0]);
        assert_eq!(a.transition_solver(&[0.0, 0.0, 5.0], &[1.0, 1.0, 1.0]), vec![0.0, 0.0, 5.0]);
        assert!((a.hitting_bound() - 19.0).abs() < 1e-12);
    }

    #[test]
    fn dynamics_examples() {
        let a = two();
        assert_eq!(a.dynamics(&[2.0, 3.0], 4.0), vec![0.0, 1.0]);
        assert_eq!(a.dynamics(&[2.0, 3.0], 0.0), vec![2.0, 3.0]);
        assert_eq!(a.dynamics(&[2.0, 3.0], 9.0), vec![0.0, 0.0]);
    }

    #[test]
    fn tilde_projection_matches_grid() {
        let a = MultiEchelon::new(
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, 1.0],
            DemandModel::scalar(Family::Uniform { low: 0.0, high: 10.0 }).unwrap(),
        )
        .unwrap();
        for p in [[3.0, 1.0], [-1.0, 4.0], [1.0, 0.5], [2.5, 2.5]] {
            let got = a.tilde_set().project(&p).unwrap();
            let mut best = (f64::INFINITY, [0.0; 2]);
            for i in 0..=2000 {
                for j in 0..=3000 {
                    let (u, v) = (i as f64 * 1e-3, j as f64 * 1e-3);
                    if v >= u && v - u <= 1.0 + 1e-12 {
                        let dd = (u - p[0]).powi(2) + (v - p[1]).powi(2);
                        if dd < best.0 {
                            best = (dd, [u, v]);
                        }
                    }
                }
            }
            assert!((got[0] - best.1[0]).abs() < 2e-3 && (got[1] - best.1[1]).abs() < 2e-3, "{p:?}: {got:?} vs {:?}", best.1);
        }
    }

    proptest! {
        #[test]
        fn detailed_equals_simplified(
            y in prop::collection::vec(0.0f64..10.0, 1..6),
            d in 0.0f64..40.0,
            h in prop::collection::vec(0.1f64..5.0, 5),
            b in prop::collection::vec(0.1f64..50.0, 5),
        ) {
            let n = y.len();
            let a = MultiEchelon::new(
                h[..n].to_vec(), b[..n].to_vec(), vec![10.0; n],
                DemandModel::scalar(Family::Uniform { low: 0.0, high: 10.0 }).unwrap(),
            ).unwrap();
            let (u, v) = (a.cost_detailed(&y, d), a.cost_simplified(&y, d));
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
        }

        #[test]
        fn dynamics_never_exceed_stock(y in prop::collection::vec(0.0f64..10.0, 3), d in 0.0f64..40.0) {
            let a = MultiEchelon::new(
                vec![1.0; 3], vec![1.0; 3], vec![10.0; 3],
                DemandModel::scalar(Family::Uniform { low: 0.0, high: 10.0 }).unwrap(),
            ).unwrap();
            let x = a.dynamics(&y, d);
            for i in 0..3 {
                prop_assert!(x[i] <= y[i] && x[i] >= 0.0);
            }
            // what remains is exactly the stock beyond demand
            let left: f64 = x.iter().sum();
            prop_assert!((left - (y.iter().sum::<f64>() - d).max(0.0)).abs() < 1e-9);
        }

        #[test]
        fn gradient_norm_bounded(y in prop::collection::vec(0.0f64..10.0, 2), d in 0.0f64..30.0) {
            let a = two();
            let g = a.gradient(&y, &a.observe(&y, &[d]));
            prop_assert!(norm(&g) <= a.sigma0());
        }
    }
}
