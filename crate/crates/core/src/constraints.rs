//! Polyhedral feasible regions `{ y : lower <= y <= upper, A y <= rho }` and
//! Euclidean projection onto them.

use crate::error::{Error, Result};

/// Successive-iterate tolerance for the Dykstra fallback.
pub const PROJECTION_TOL: f64 = 1e-9;
/// Maximum number of full Dykstra cycles.
pub const PROJECTION_MAX_CYCLES: usize = 100_000;

/// A single linear inequality `coeffs · y <= bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl Halfspace {
    pub fn new(coeffs: Vec<f64>, bound: f64) -> Self {
        Self { coeffs, bound }
    }

    fn value(&self, y: &[f64]) -> f64 {
        dot(&self.coeffs, y)
    }

    fn norm_sq(&self) -> f64 {
        dot(&self.coeffs, &self.coeffs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    halfspaces: Vec<Halfspace>,
}

impl ConstraintSet {
    /// Builds and validates a set. `upper = None` leaves the box open above.
    ///
    /// The set must contain `lower` and every coordinate must have a finite
    /// implied upper bound.
    pub fn new(lower: Vec<f64>, upper: Option<Vec<f64>>, halfspaces: Vec<Halfspace>) -> Result<Self> {
        let n = lower.len();
        if n == 0 {
            return Err(Error::InvalidConstraints("dimension must be positive".into()));
        }
        let upper = upper.unwrap_or_else(|| vec![f64::INFINITY; n]);
        if upper.len() != n {
            return Err(Error::Dimension { expected: n, got: upper.len() });
        }
        for h in &halfspaces {
            if h.coeffs.len() != n {
                return Err(Error::Dimension { expected: n, got: h.coeffs.len() });
            }
            if h.coeffs.iter().any(|c| !c.is_finite()) || !h.bound.is_finite() {
                return Err(Error::InvalidConstraints("non-finite halfspace".into()));
            }
            if h.norm_sq() == 0.0 && h.bound < 0.0 {
                return Err(Error::InvalidConstraints("empty halfspace 0 <= negative".into()));
            }
        }
        if lower.iter().zip(&upper).any(|(l, u)| !l.is_finite() || l > u || u.is_nan()) {
            return Err(Error::InvalidConstraints("lower bound must be finite and <= upper".into()));
        }
        let set = Self { lower, upper, halfspaces };
        if !set.contains(&set.lower, 1e-12) {
            return Err(Error::InvalidConstraints("lower corner is infeasible".into()));
        }
        if let Some(j) = set.implied_upper().iter().position(|u| !u.is_finite()) {
            return Err(Error::InvalidConstraints(format!("coordinate {j} is unbounded")));
        }
        Ok(set)
    }

    /// The box `[lower, upper]`.
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(lower, Some(upper), Vec::new())
    }

    /// `{ y >= 0 : A y <= rho }` with `A` given row by row.
    pub fn packing(a: &[Vec<f64>], rho: &[f64]) -> Result<Self> {
        if a.len() != rho.len() {
            return Err(Error::Dimension { expected: a.len(), got: rho.len() });
        }
        let n = a.first().map_or(0, Vec::len);
        let set = Self::new(
            vec![0.0; n],
            None,
            a.iter().zip(rho).map(|(r, &b)| Halfspace::new(r.clone(), b)).collect(),
        )?;
        if !set.has_nonnegative_rows() {
            return Err(Error::InvalidConstraints("resource coefficients must be nonnegative".into()));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn has_nonnegative_rows(&self) -> bool {
        self.halfspaces.iter().all(|h| h.coeffs.iter().all(|&c| c >= 0.0) && h.bound >= 0.0)
    }

    /// The same set intersected with `{ y >= floor }`. Fails if the
    /// intersection is empty at its lower corner.
    pub fn with_floor(&self, floor: &[f64]) -> Result<Self> {
        if floor.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: floor.len() });
        }
        let lower: Vec<f64> = self.lower.iter().zip(floor).map(|(a, b)| a.max(*b)).collect();
        let set = Self {
            lower,
            upper: self.upper.clone(),
            halfspaces: self.halfspaces.clone(),
        };
        if set.lower.iter().zip(&set.upper).any(|(l, u)| l > u) || !set.contains(&set.lower, 1e-9) {
            return Err(Error::InvalidConstraints("floor lies outside the set".into()));
        }
        Ok(set)
    }

    /// True iff no constraint is violated by more than `tol`.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        y.len() == self.dim() && self.max_violation(y) <= tol
    }

    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for ((&yi, &l), &u) in y.iter().zip(&self.lower).zip(&self.upper) {
            v = v.max(l - yi).max(yi - u);
        }
        for h in &self.halfspaces {
            v = v.max(h.value(y) - h.bound);
        }
        v
    }

    /// Per-coordinate upper bounds implied by the box and by halfspaces whose
    /// coefficients are all nonnegative.
    pub fn implied_upper(&self) -> Vec<f64> {
        let n = self.dim();
        let mut ub = self.upper.clone();
        for h in &self.halfspaces {
            if h.coeffs.iter().any(|&c| c < 0.0) {
                continue;
            }
            for j in 0..n {
                let a = h.coeffs[j];
                if a <= 0.0 {
                    continue;
                }
                let others: f64 = (0..n)
                    .filter(|&k| k != j)
                    .map(|k| h.coeffs[k] * self.lower[k])
                    .sum();
                ub[j] = ub[j].min((h.bound - others) / a);
            }
        }
        ub
    }

    /// Certified upper bound on the diameter: twice the largest norm any
    /// point of the set can have, coordinate by coordinate.
    pub fn diameter(&self) -> Result<f64> {
        let ub = self.implied_upper();
        let mut sq = 0.0;
        for (j, (&l, &u)) in self.lower.iter().zip(&ub).enumerate() {
            if !u.is_finite() {
                return Err(Error::InvalidConstraints(format!("coordinate {j} is unbounded")));
            }
            let m = l.abs().max(u.abs());
            sq += m * m;
        }
        Ok(2.0 * sq.sqrt())
    }

    fn clamp_box(&self, y: &mut [f64]) {
        for ((v, &l), &u) in y.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }

    /// Euclidean projection. Uses an exact primal active-set method started
    /// from the feasible lower corner; Dykstra's algorithm is the fallback if
    /// the active-set iteration stalls.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if point.len() != n {
            return Err(Error::Dimension { expected: n, got: point.len() });
        }
        if self.contains(point, 0.0) {
            return Ok(point.to_vec());
        }
        if self.halfspaces.is_empty() {
            let mut x = point.to_vec();
            self.clamp_box(&mut x);
            return Ok(x);
        }
        match self.project_active_set(point) {
            Some(y) => Ok(y),
            None => self.project_dykstra(point),
        }
    }

    /// All constraints as rows `a · y <= b`: halfspaces, then lower bounds,
    /// then finite upper bounds.
    fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.dim();
        let mut rows: Vec<(Vec<f64>, f64)> =
            self.halfspaces.iter().map(|h| (h.coeffs.clone(), h.bound)).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            rows.push((e, -self.lower[j]));
        }
        for j in 0..n {
            if self.upper[j].is_finite() {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                rows.push((e, self.upper[j]));
            }
        }
        rows
    }

    fn project_active_set(&self, point: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let rows = self.rows();
        let scale = 1.0 + point.iter().chain(&self.lower).map(|v| v.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * scale;
        let mut y = self.lower.clone();
        let mut work: Vec<usize> = Vec::new();

        for _ in 0..50 * (rows.len() + n) {
            // minimize |y' - p|^2 on the working affine set
            let (target, lambda) = affine_projection(point, &rows, &work)?;
            let d: Vec<f64> = target.iter().zip(&y).map(|(t, v)| t - v).collect();
            if d.iter().map(|v| v.abs()).fold(0.0, f64::max) <= tol {
                match lambda
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l < -1e-10 * scale)
                    .min_by(|a, b| a.1.total_cmp(b.1))
                {
                    None => {
                        self.clamp_box(&mut y);
                        return (self.max_violation(&y) <= 1e-9 * scale).then_some(y);
                    }
                    Some((k, _)) => {
                        work.remove(k);
                        continue;
                    }
                }
            }
            // longest feasible step toward the target
            let mut step = 1.0;
            let mut block = None;
            for (i, (a, b)) in rows.iter().enumerate() {
                if work.contains(&i) {
                    continue;
                }
                let ad = dot(a, &d);
                if ad > 1e-14 * scale {
                    let room = (b - dot(a, &y)).max(0.0);
                    let s = room / ad;
                    if s < step {
                        step = s;
                        block = Some(i);
                    }
                }
            }
            for (v, di) in y.iter_mut().zip(&d) {
                *v += step * di;
            }
            if let Some(i) = block {
                work.push(i);
            }
        }
        None
    }

    /// Dykstra's alternating projections over the halfspaces and the box.
    pub fn project_dykstra(&self, point: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if point.len() != n {
            return Err(Error::Dimension { expected: n, got: point.len() });
        }
        let mut x = point.to_vec();
        let m = self.halfspaces.len();
        let norms: Vec<f64> = self.halfspaces.iter().map(Halfspace::norm_sq).collect();
        // One correction vector per set; the box is last.
        let mut corr = vec![vec![0.0; n]; m + 1];
        let mut z = vec![0.0; n];
        let mut prev = vec![0.0; n];
        let scale = 1.0 + point.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut change = f64::INFINITY;

        for _ in 0..PROJECTION_MAX_CYCLES {
            prev.copy_from_slice(&x);
            let mut corr_change: f64 = 0.0;
            for (k, h) in self.halfspaces.iter().enumerate() {
                for i in 0..n {
                    z[i] = x[i] + corr[k][i];
                }
                let excess = h.value(&z) - h.bound;
                if excess > 0.0 && norms[k] > 0.0 {
                    let t = excess / norms[k];
                    for i in 0..n {
                        x[i] = z[i] - t * h.coeffs[i];
                    }
                } else {
                    x.copy_from_slice(&z);
                }
                for i in 0..n {
                    let c = z[i] - x[i];
                    corr_change = corr_change.max((c - corr[k][i]).abs());
                    corr[k][i] = c;
                }
            }
            for i in 0..n {
                z[i] = x[i] + corr[m][i];
            }
            x.copy_from_slice(&z);
            self.clamp_box(&mut x);
            for i in 0..n {
                let c = z[i] - x[i];
                corr_change = corr_change.max((c - corr[m][i]).abs());
                corr[m][i] = c;
            }

            // the iterate can sit still for a cycle while corrections move
            change = dist(&x, &prev).max(corr_change);
            if change <= PROJECTION_TOL && self.max_violation(&x) <= PROJECTION_TOL * scale {
                return Ok(x);
            }
        }
        Err(Error::ProjectionDidNotConverge {
            iterations: PROJECTION_MAX_CYCLES,
            change,
        })
    }
}

/// Projection of `p` onto `{ y : a_i · y = b_i, i in work }` together with
/// the multipliers, `y = p - sum lambda_i a_i`.
fn affine_projection(p: &[f64], rows: &[(Vec<f64>, f64)], work: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    if work.is_empty() {
        return Some((p.to_vec(), Vec::new()));
    }
    let k = work.len();
    let mut mat: Vec<Vec<f64>> = work
        .iter()
        .map(|&i| {
            let mut r: Vec<f64> = work.iter().map(|&j| dot(&rows[i].0, &rows[j].0)).collect();
            r.push(dot(&rows[i].0, p) - rows[i].1);
            r
        })
        .collect();
    let lambda = solve_dense(&mut mat)?;
    let mut y = p.to_vec();
    for (l, &i) in lambda.iter().zip(work) {
        for (v, a) in y.iter_mut().zip(&rows[i].0) {
            *v -= l * a;
        }
    }
    debug_assert_eq!(lambda.len(), k);
    Some((y, lambda))
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mat: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let k = mat.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs()))?;
        if mat[piv][c].abs() < 1e-12 {
            return None;
        }
        mat.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = mat[r][c] / mat[c][c];
                if f != 0.0 {
                    for j in c..=k {
                        mat[r][j] -= f * mat[c][j];
                    }
                }
            }
        }
    }
    Some((0..k).map(|i| mat[i][k] / mat[i][i]).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex2() -> ConstraintSet {
        ConstraintSet::packing(&[vec![1.0, 1.0]], &[2.0]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        dist(a, b) <= tol
    }

    #[test]
    fn projects_symmetric_point_onto_simplex_face() {
        let p = simplex2().project(&[2.0, 2.0]).unwrap();
        assert!(close(&p, &[1.0, 1.0], 1e-8), "{p:?}");
    }

    #[test]
    fn feasible_points_are_fixed() {
        let s = simplex2();
        assert_eq!(s.project(&[0.3, 1.2]).unwrap(), vec![0.3, 1.2]);
    }

    #[test]
    fn projection_with_raised_floor() {
        // {y >= (1,1), y1 + y2 <= 4}; (3,0) -> (3,1)
        let s = ConstraintSet::new(vec![1.0, 1.0], None, vec![Halfspace::new(vec![1.0, 1.0], 4.0)]).unwrap();
        let p = s.project(&[3.0, 0.0]).unwrap();
        assert!(close(&p, &[3.0, 1.0], 1e-8), "{p:?}");
        // grid oracle at step 1e-3 over the region
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 1000..=3000 {
            for j in 1000..=3000 {
                let (a, b) = (i as f64 * 1e-3, j as f64 * 1e-3);
                if a + b <= 4.0 + 1e-12 {
                    let d = (a - 3.0).powi(2) + b * b;
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
        }
        assert!(close(&p, &[best.1, best.2], 2e-3));
    }

    #[test]
    fn box_projection_is_a_clamp() {
        let s = ConstraintSet::boxed(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        assert_eq!(s.project(&[-0.5, 12.0]).unwrap(), vec![0.0, 10.0]);
    }

    #[test]
    fn diameter_examples() {
        let b = ConstraintSet::boxed(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert!((b.diameter().unwrap() - 10.0).abs() < 1e-12);
        assert!((simplex2().diameter().unwrap() - 2.0 * 8f64.sqrt()).abs() < 1e-12);
        let u = ConstraintSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((u.diameter().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diameter_uses_tightest_resource() {
        let s = ConstraintSet::packing(&[vec![1.0, 2.0], vec![4.0, 1.0]], &[8.0, 8.0]).unwrap();
        // y1 <= min(8/1, 8/4) = 2, y2 <= min(8/2, 8/1) = 4
        assert!((s.diameter().unwrap() - 2.0 * 20f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbounded_and_empty_sets() {
        assert!(ConstraintSet::new(vec![0.0, 0.0], None, vec![Halfspace::new(vec![1.0, 0.0], 1.0)]).is_err());
        assert!(ConstraintSet::new(vec![1.0], Some(vec![2.0]), vec![Halfspace::new(vec![1.0], 0.5)]).is_err());
        assert!(ConstraintSet::boxed(vec![2.0], vec![1.0]).is_err());
        assert!(ConstraintSet::packing(&[vec![1.0, -1.0]], &[1.0]).is_err());
    }

    #[test]
    fn contains_examples() {
        let s = simplex2();
        assert!(s.contains(&[1.0, 1.0], 0.0));
        assert!(!s.contains(&[1.1, 1.0], 0.0));
        assert!(s.contains(&[1.05, 1.0], 0.1));
    }

    #[test]
    fn floor_intersection() {
        let s = simplex2().with_floor(&[1.5, 0.0]).unwrap();
        let p = s.project(&[0.5, 0.5]).unwrap();
        assert!(close(&p, &[1.5, 0.5], 1e-8), "{p:?}");
        assert!(simplex2().with_floor(&[1.5, 1.0]).is_err());
    }

    fn random_set() -> impl Strategy<Value = ConstraintSet> {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..2.0, 3), 1..4),
            prop::collection::vec(0.5f64..5.0, 3),
            prop::collection::vec(1.0f64..6.0, 3),
        )
            .prop_map(|(rows, rho, ub)| {
                let hs = rows.into_iter().zip(rho).map(|(r, b)| Halfspace::new(r, b)).collect();
                ConstraintSet::new(vec![0.0; 3], Some(ub), hs).unwrap()
            })
    }

    proptest! {
        #[test]
        fn active_set_agrees_with_dykstra(set in random_set(), p in prop::collection::vec(-5.0f64..10.0, 3)) {
            let exact = set.project(&p).unwrap();
            if let Ok(dyk) = set.project_dykstra(&p) {
                prop_assert!(dist(&exact, &dyk) <= 1e-5, "{:?} vs {:?}", exact, dyk);
            }
        }

        #[test]
        fn projection_is_idempotent(set in random_set(), p in prop::collection::vec(-5.0f64..10.0, 3)) {
            let q = set.project(&p).unwrap();
            let r = set.project(&q).unwrap();
            prop_assert!(dist(&q, &r) <= 2.0 * PROJECTION_TOL, "d={} q={:?} r={:?}", dist(&q, &r), q, r);
            prop_assert!(set.contains(&q, 1e-6));
        }

        #[test]
        fn projection_satisfies_variational_inequality(
            set in random_set(),
            p in prop::collection::vec(-5.0f64..10.0, 3),
            w in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let proj = set.project(&p).unwrap();
            // a feasible point: shrink a box corner toward the origin until feasible
            let ub = set.implied_upper();
            let mut q: Vec<f64> = w.iter().zip(&ub).map(|(a, u)| a * u).collect();
            while !set.contains(&q, 0.0) {
                q.iter_mut().for_each(|v| *v *= 0.5);
            }
            let lhs: f64 = (0..3).map(|i| (q[i] - proj[i]) * (p[i] - proj[i])).sum();
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(lhs <= 1e-7 * (1.0 + norm), "lhs {}", lhs);
        }
    }
}
