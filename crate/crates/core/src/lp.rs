//! Dense two-phase simplex for small standard-form programs
//! `min c·x  s.t.  A x = b, x >= 0`, returning a dual optimum as well.
//!
//! Bland's rule throughout, so degenerate pivots cannot cycle. Intended as an
//! exact oracle for problems with a few dozen variables.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Optimal `π` of `max π·b  s.t.  Aᵀπ <= c`.
    pub duals: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    fn reduced_cost(&self, cost: &[f64], col: usize) -> f64 {
        cost[col]
            - self
                .rows
                .iter()
                .zip(&self.basis)
                .map(|(row, &b)| cost[b] * row[col])
                .sum::<f64>()
    }

    /// Minimizes `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..allowed)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.reduced_cost(cost, j) < -EPS);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Lp("unbounded".into()));
            };
            self.pivot(r, col);
        }
        Err(Error::Lp("pivot limit reached".into()))
    }
}

pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    let n = c.len();
    if b.len() != m {
        return Err(Error::Dimension { expected: m, got: b.len() });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension { expected: n, got: row.len() });
    }
    // rows flipped so the right-hand side is nonnegative; one artificial each
    let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let width = n + m;
    let rows = (0..m)
        .map(|i| {
            let mut r = vec![0.0; width + 1];
            for j in 0..n {
                r[j] = sign[i] * a[i][j];
            }
            r[n + i] = 1.0;
            r[width] = sign[i] * b[i];
            r
        })
        .collect();
    let mut t = Tableau { rows, basis: (n..n + m).collect(), width };

    let phase1: Vec<f64> = (0..width).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    t.optimize(&phase1, width)?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rhs(i)).sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return Err(Error::Lp(format!("infeasible (phase-one residual {infeasibility})")));
    }
    // drive zero-level artificials out of the basis where possible
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t.basis.contains(&j) && t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    let phase2: Vec<f64> = (0..width).map(|j| if j < n { c[j] } else { 0.0 }).collect();
    t.optimize(&phase2, n)?;

    let mut x = vec![0.0; n];
    for (i, &bi) in t.basis.iter().enumerate() {
        if bi < n {
            x[bi] = t.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    // reduced cost of artificial i is −π'_i; undo the row flips
    let duals = (0..m).map(|i| -sign[i] * t.reduced_cost(&phase2, n + i)).collect();
    Ok(LpSolution { x, objective, duals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_certificate(a: &[Vec<f64>], b: &[f64], c: &[f64], s: &LpSolution) {
        for (row, bi) in a.iter().zip(b) {
            let ax: f64 = row.iter().zip(&s.x).map(|(p, q)| p * q).sum();
            assert!((ax - bi).abs() < 1e-8, "primal residual");
        }
        for j in 0..c.len() {
            let col: f64 = (0..a.len()).map(|i| a[i][j] * s.duals[i]).sum();
            assert!(col <= c[j] + 1e-8, "dual infeasible at {j}: {col} > {}", c[j]);
        }
        let dual_obj: f64 = s.duals.iter().zip(b).map(|(p, q)| p * q).sum();
        assert!((dual_obj - s.objective).abs() < 1e-8, "{dual_obj} vs {}", s.objective);
    }

    #[test]
    fn small_program() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x2 + s2 = 3
        let a = vec![vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]];
        let b = vec![4.0, 3.0];
        let c = vec![-1.0, -2.0, 0.0, 0.0];
        let s = solve(&a, &b, &c).unwrap();
        assert!((s.objective + 7.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 3.0).abs() < 1e-12);
        check_certificate(&a, &b, &c, &s);
    }

    #[test]
    fn negative_rhs_rows() {
        // x1 - x2 = -2, x1 + x2 = 4 -> x = (1, 3)
        let a = vec![vec![1.0, -1.0], vec![1.0, 1.0]];
        let b = vec![-2.0, 4.0];
        let c = vec![1.0, 1.0];
        let s = solve(&a, &b, &c).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 3.0).abs() < 1e-12);
        check_certificate(&a, &b, &c, &s);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let b = vec![1.0, 2.0];
        let c = vec![1.0, 3.0];
        let s = solve(&a, &b, &c).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        check_certificate(&a, &b, &c, &s);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert!(solve(&a, &[-1.0], &[1.0, 1.0]).is_err());
        let a = vec![vec![1.0, -1.0]];
        assert!(solve(&a, &[1.0], &[-1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn random_transport_programs_certify(
            supply in prop::collection::vec(1.0f64..10.0, 2),
            demand in prop::collection::vec(0.0f64..5.0, 2),
            costs in prop::collection::vec(-3.0f64..5.0, 4),
        ) {
            // ship x_ij from 2 sources to 2 sinks, sinks need exact demand,
            // sources have slack: rows sources (with slack), sinks
            let a = vec![
                vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            ];
            let b = vec![supply[0] + 5.0, supply[1] + 5.0, demand[0], demand[1]];
            let mut c = costs.clone();
            c.extend([0.0, 0.0]);
            let s = solve(&a, &b, &c).unwrap();
            check_certificate(&a, &b, &c, &s);
        }
    }
}
