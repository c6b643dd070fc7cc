//! Multi-product inventory under linear resource constraints, lost sales and
//! censored demand.

use super::{check_positive, norm, pos};
use crate::constraints::ConstraintSet;
use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::meta_policy::Application;
use crate::optimizer::TheoryConstants;

#[derive(Clone, Debug)]
pub struct MultiProduct {
    h: Vec<f64>,
    b: Vec<f64>,
    set: ConstraintSet,
    demand: DemandModel,
}

impl MultiProduct {
    pub fn new(h: Vec<f64>, b: Vec<f64>, set: ConstraintSet, demand: DemandModel) -> Result<Self> {
        let n = set.dim();
        check_positive("h", &h, n)?;
        check_positive("b", &b, n)?;
        if demand.dim() != n {
            return Err(Error::Dimension { expected: n, got: demand.dim() });
        }
        if !set.has_nonnegative_rows() {
            return Err(Error::InvalidInstance("resource matrix must be nonnegative".into()));
        }
        Ok(Self { h, b, set, demand })
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn set(&self) -> &ConstraintSet {
        &self.set
    }

    pub fn cost(&self, y: &[f64], d: &[f64]) -> f64 {
        (0..y.len())
            .map(|i| self.h[i] * pos(y[i] - d[i]) + self.b[i] * pos(d[i] - y[i]))
            .sum()
    }

    pub fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        y.iter().zip(d).map(|(a, b)| pos(a - b)).collect()
    }

    /// Sales `min(d, y)`.
    pub fn censor(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        y.iter().zip(d).map(|(a, b)| a.min(*b)).collect()
    }

    /// `h` where sales fell short of stock, `−b` on a stockout (`s >= y`).
    pub fn gradient_estimator(&self, y: &[f64], sales: &[f64]) -> Vec<f64> {
        (0..y.len())
            .map(|i| if sales[i] < y[i] { self.h[i] } else { -self.b[i] })
            .collect()
    }

    /// Full-information version `h ⊙ 1[y > d] − b ⊙ 1[y <= d]`.
    pub fn full_gradient(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        (0..y.len())
            .map(|i| if y[i] > d[i] { self.h[i] } else { -self.b[i] })
            .collect()
    }

    /// Projection of `w` onto `Γ ∩ { y >= x }`.
    pub fn transition_solver(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        if x.iter().zip(w).all(|(a, b)| a <= b) {
            return Ok(w.to_vec());
        }
        self.set.with_floor(x)?.project(w)
    }

    pub fn sigma0(&self) -> f64 {
        (norm(&self.h).powi(2) + norm(&self.b).powi(2)).sqrt()
    }

    /// `n + 6 n β0 R`.
    pub fn hitting_bound(&self) -> f64 {
        let n = self.h.len() as f64;
        let r = self.set.diameter().unwrap_or(f64::INFINITY);
        n + 6.0 * n * self.demand.density_upper() * r
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
            diameter: self.set.diameter().ok(),
            max_gradient: Some(self.sigma0()),
            hitting_bound: Some(self.hitting_bound()),
            ..Default::default()
        }
    }
}

impl Application for MultiProduct {
    fn dim(&self) -> usize {
        self.h.len()
    }

    fn target_set(&self) -> &ConstraintSet {
        &self.set
    }

    fn decision_set(&self) -> &ConstraintSet {
        &self.set
    }

    fn demand(&self) -> &DemandModel {
        &self.demand
    }

    fn cost(&self, y: &[f64], d: &[f64]) -> f64 {
        MultiProduct::cost(self, y, d)
    }

    fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        MultiProduct::dynamics(self, y, d)
    }

    fn observe(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        self.censor(y, d)
    }

    fn gradient(&self, y: &[f64], observation: &[f64]) -> Vec<f64> {
        self.gradient_estimator(y, observation)
    }

    fn transition(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.transition_solver(x, w)
    }

    fn sigma0(&self) -> f64 {
        MultiProduct::sigma0(self)
    }

    fn hitting_bound(&self) -> f64 {
        MultiProduct::hitting_bound(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Family;
    use proptest::prelude::*;

    fn app(set: ConstraintSet) -> MultiProduct {
        let n = set.dim();
        MultiProduct::new(
            vec![1.0, 2.0][..n].to_vec(),
            vec![5.0, 6.0][..n].to_vec(),
            set,
            DemandModel::new(Family::Uniform { low: 0.0, high: 10.0 }, n).unwrap(),
        )
        .unwrap()
    }

    fn boxed() -> MultiProduct {
        app(ConstraintSet::boxed(vec![0.0, 0.0], vec![20.0, 20.0]).unwrap())
    }

    #[test]
    fn cost_examples() {
        let a = boxed();
        assert_eq!(a.cost(&[3.0, 4.0], &[2.0, 6.0]), 13.0);
        assert_eq!(a.cost(&[3.0, 4.0], &[3.0, 4.0]), 0.0);
        assert_eq!(a.cost(&[0.0, 0.0], &[1.0, 1.0]), 11.0);
    }

    #[test]
    fn gradient_examples() {
        let a = boxed();
        let y = [3.0, 4.0];
        assert_eq!(a.gradient_estimator(&y, &a.censor(&y, &[1.0, 1.0])), vec![1.0, 2.0]);
        assert_eq!(a.gradient_estimator(&y, &a.censor(&y, &[5.0, 9.0])), vec![-5.0, -6.0]);
        assert_eq!(a.gradient_estimator(&y, &a.censor(&y, &[2.0, 4.0])), vec![1.0, -6.0]);
    }

    #[test]
    fn dynamics_and_censor_examples() {
        let a = boxed();
        assert_eq!(a.dynamics(&[3.0, 4.0], &[2.0, 6.0]), vec![1.0, 0.0]);
        assert_eq!(a.dynamics(&[3.0, 4.0], &[0.0, 0.0]), vec![3.0, 4.0]);
        assert_eq!(a.dynamics(&[3.0, 4.0], &[5.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(a.censor(&[3.0, 4.0], &[2.0, 6.0]), vec![2.0, 4.0]);
        assert_eq!(a.censor(&[3.0, 4.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(a.censor(&[3.0, 4.0], &[3.0, 4.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn transition_examples() {
        let a = app(ConstraintSet::packing(&[vec![1.0, 1.0]], &[2.0]).unwrap());
        let y = a.transition_solver(&[1.5, 0.0], &[0.5, 0.5]).unwrap();
        assert!((y[0] - 1.5).abs() < 1e-9 && (y[1] - 0.5).abs() < 1e-9, "{y:?}");
        assert_eq!(a.transition_solver(&[0.2, 0.1], &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);

        let b = app(ConstraintSet::boxed(vec![0.0, 0.0], vec![3.0, 3.0]).unwrap());
        assert_eq!(b.transition_solver(&[2.0, 0.0], &[0.0, 0.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn transition_matches_grid_oracle() {
        let a = app(ConstraintSet::packing(&[vec![1.0, 1.0]], &[2.0]).unwrap());
        let (x, w) = ([1.5, 0.0], [0.5, 0.5]);
        let mut best = (f64::INFINITY, [0.0; 2]);
        for i in 1500..=2000 {
            for j in 0..=500 {
                let y = [i as f64 * 1e-3, j as f64 * 1e-3];
                if y[0] + y[1] <= 2.0 + 1e-12 {
                    let d = (y[0] - w[0]).powi(2) + (y[1] - w[1]).powi(2);
                    if d < best.0 {
                        best = (d, y);
                    }
                }
            }
        }
        let y = a.transition_solver(&x, &w).unwrap();
        assert!((y[0] - best.1[0]).abs() < 2e-3 && (y[1] - best.1[1]).abs() < 2e-3);
    }

    #[test]
    fn constants() {
        let a = app(ConstraintSet::packing(&[vec![1.0, 1.0]], &[2.0]).unwrap());
        assert!((a.sigma0() - (1.0f64 + 4.0 + 25.0 + 36.0).sqrt()).abs() < 1e-12);
        // n + 6 n beta0 R with beta0 = 0.1 and R = 2 sqrt 8
        let m = 2.0 + 12.0 * 0.1 * 2.0 * 8f64.sqrt();
        assert!((a.hitting_bound() - m).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_instances() {
        let set = ConstraintSet::boxed(vec![0.0], vec![1.0]).unwrap();
        let d = DemandModel::scalar(Family::Uniform { low: 0.0, high: 1.0 }).unwrap();
        assert!(MultiProduct::new(vec![0.0], vec![1.0], set.clone(), d.clone()).is_err());
        assert!(MultiProduct::new(vec![1.0, 1.0], vec![1.0], set.clone(), d.clone()).is_err());
        let d2 = DemandModel::new(Family::Uniform { low: 0.0, high: 1.0 }, 2).unwrap();
        assert!(MultiProduct::new(vec![1.0], vec![1.0], set, d2).is_err());
    }

    proptest! {
        #[test]
        fn censored_gradient_matches_full_information(
            y in prop::collection::vec(0.0f64..10.0, 2),
            d in prop::collection::vec(0.0f64..10.0, 2),
        ) {
            let a = boxed();
            prop_assert_eq!(a.gradient_estimator(&y, &a.censor(&y, &d)), a.full_gradient(&y, &d));
            let g = a.gradient_estimator(&y, &a.censor(&y, &d));
            prop_assert!(norm(&g) <= a.sigma0());
        }

        #[test]
        fn transition_output_is_feasible_and_optimal(
            xs in prop::collection::vec(0.0f64..1.0, 2),
            w in prop::collection::vec(0.0f64..2.0, 2),
            q in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 50),
        ) {
            let a = app(ConstraintSet::packing(&[vec![1.0, 1.0], vec![1.0, 3.0]], &[2.0, 3.0]).unwrap());
            // a reachable state: scale into the set
            let x = vec![xs[0] * 0.9, xs[1] * 0.6];
            let w = a.set().project(&w).unwrap();
            let y = a.transition_solver(&x, &w).unwrap();
            prop_assert!(y[0] >= x[0] - 1e-9 && y[1] >= x[1] - 1e-9);
            prop_assert!(a.set().contains(&y, 1e-9));
            let floor = a.set().with_floor(&x).unwrap();
            for (u, v) in q {
                let p = [x[0] + u * 2.0, x[1] + v * 1.0];
                if floor.contains(&p, 0.0) {
                    let lhs = (p[0] - y[0]) * (w[0] - y[0]) + (p[1] - y[1]) * (w[1] - y[1]);
                    prop_assert!(lhs <= 1e-9);
                }
            }
        }
    }
}
