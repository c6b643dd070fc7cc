//! One warehouse, `n` stores. Stock is positioned first; after demand is seen
//! the warehouse ships to short stores, most profitable (`b − c`) first.
//!
//! Vectors of length `n + 1` put the warehouse at index 0.

use serde::{Deserialize, Serialize};

use super::{check_positive, norm, pos};
use crate::constraints::ConstraintSet;
use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::lp;
use crate::meta_policy::Application;
use crate::optimizer::TheoryConstants;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltRule {
    /// Halt the store with the smallest `b − c`.
    #[default]
    LeastProfitable,
    /// Halt the store with the largest `b − c`.
    MostProfitable,
}

#[derive(Clone, Debug)]
pub struct Owms {
    h: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    rho: Vec<f64>,
    demand: DemandModel,
    set: ConstraintSet,
    order: Vec<usize>,
    halt: HaltRule,
}

/// Result of the second-stage delivery. Store-indexed vectors have length
/// `n`; `s` follows the delivery order.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryOutcome {
    /// Warehouse stock left after each delivery, in priority order.
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub o: Vec<f64>,
    pub l: Vec<f64>,
    pub cost: f64,
}

impl DeliveryOutcome {
    pub fn leftover(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }
}

/// Standard-form data `H y + W z' = d'`, `min c'·z'`.
#[derive(Clone, Debug)]
pub struct StandardForm {
    pub h: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpOracle {
    pub cost: f64,
    pub duals: Vec<f64>,
    /// `−Hᵀπ`.
    pub gradient: Vec<f64>,
}

impl Owms {
    /// `h` and `rho` have length `n + 1`; `b`, `c` have length `n`.
    ///
    /// Rejects instances where the greedy delivery is not optimal: a store
    /// must never prefer over-delivery (`h_0 <= c_i + h_i`) and delivering to
    /// a short store must not lose money (`c_i <= b_i + h_0`).
    pub fn new(h: Vec<f64>, b: Vec<f64>, c: Vec<f64>, rho: Vec<f64>, demand: DemandModel) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::InvalidInstance("need at least one store".into()));
        }
        check_positive("h", &h, n + 1)?;
        check_positive("b", &b, n)?;
        check_positive("c", &c, n)?;
        check_positive("rho", &rho, n + 1)?;
        if demand.dim() != n {
            return Err(Error::Dimension { expected: n, got: demand.dim() });
        }
        for i in 0..n {
            if h[0] > c[i] + h[i + 1] {
                return Err(Error::InvalidInstance(format!(
                    "warehouse holding {} exceeds fare plus store holding at store {}",
                    h[0],
                    i + 1
                )));
            }
            if c[i] > b[i] + h[0] {
                return Err(Error::InvalidInstance(format!("fare exceeds its benefit at store {}", i + 1)));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| (b[j] - c[j]).total_cmp(&(b[i] - c[i])).then(i.cmp(&j)));
        let set = ConstraintSet::boxed(vec![0.0; n + 1], rho.clone())?;
        Ok(Self { h, b, c, rho, demand, set, order, halt: HaltRule::default() })
    }

    pub fn with_halt_rule(mut self, halt: HaltRule) -> Self {
        self.halt = halt;
        self
    }

    pub fn stores(&self) -> usize {
        self.b.len()
    }

    /// Store indices (0-based) in delivery priority.
    pub fn priority(&self) -> &[usize] {
        &self.order
    }

    /// `b_i <= c_i` makes delivery unattractive on its own; allowed but
    /// reported.
    pub fn warnings(&self) -> Vec<String> {
        (0..self.stores())
            .filter(|&i| self.b[i] <= self.c[i])
            .map(|i| format!("store {}: lost-sales cost does not exceed the fare", i + 1))
            .collect()
    }

    pub fn greedy_delivery(&self, y: &[f64], d: &[f64]) -> DeliveryOutcome {
        let n = self.stores();
        let mut z = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut s = Vec::with_capacity(n);
        let mut remaining = y[0];
        for &i in &self.order {
            let short = pos(d[i] - y[i + 1]);
            z[i] = remaining.min(short);
            remaining -= z[i];
            l[i] = short - z[i];
            s.push(remaining);
        }
        let o: Vec<f64> = (0..n).map(|i| pos(y[i + 1] - d[i])).collect();
        let cost = (0..n)
            .map(|i| self.c[i] * z[i] + self.h[i + 1] * o[i] + self.b[i] * l[i])
            .sum::<f64>()
            + self.h[0] * remaining;
        DeliveryOutcome { s, z, o, l, cost }
    }

    pub fn cost(&self, y: &[f64], d: &[f64]) -> f64 {
        self.greedy_delivery(y, d).cost
    }

    pub fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        let out = self.greedy_delivery(y, d);
        std::iter::once(out.leftover()).chain(out.o).collect()
    }

    /// Store sales `min(d_i, y_i + z_i)`.
    pub fn censor(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        let out = self.greedy_delivery(y, d);
        (0..self.stores()).map(|i| d[i].min(y[i + 1] + out.z[i])).collect()
    }

    /// Right derivative of the delivery cost from the full outcome.
    pub fn gradient_estimator(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        let out = self.greedy_delivery(y, d);
        let served: Vec<bool> = (0..self.stores()).map(|i| d[i] <= y[i + 1]).collect();
        let short: Vec<bool> = out.l.iter().map(|&v| v > 0.0).collect();
        self.gradient_rules(&out.z, &served, &short, out.leftover())
    }

    /// The same derivative recovered from sales alone. Deliveries are
    /// `(sales − y)⁺`; a store that sold at least its own stock is read as
    /// stocked out unless the warehouse still had stock after serving it.
    pub fn gradient_from_sales(&self, y: &[f64], sales: &[f64]) -> Vec<f64> {
        let n = self.stores();
        let z: Vec<f64> = (0..n).map(|i| pos(sales[i] - y[i + 1])).collect();
        let served: Vec<bool> = (0..n).map(|i| sales[i] < y[i + 1]).collect();
        let tol = 1e-12 * (1.0 + y[0].abs());
        let mut short = vec![false; n];
        let mut remaining = y[0];
        for &i in &self.order {
            remaining -= z[i];
            short[i] = !served[i] && remaining <= tol;
        }
        let leftover = if remaining <= tol { 0.0 } else { remaining };
        self.gradient_rules(&z, &served, &short, leftover)
    }

    fn gradient_rules(&self, z: &[f64], served: &[bool], short: &[bool], leftover: f64) -> Vec<f64> {
        let n = self.stores();
        let next_short = self.order.iter().copied().find(|&j| short[j]);
        let mut g = vec![0.0; n + 1];
        g[0] = match next_short {
            _ if leftover > 0.0 => self.h[0],
            Some(j) => -(self.b[j] - self.c[j]),
            None => self.h[0],
        };
        for i in 0..n {
            g[i + 1] = if served[i] {
                self.h[i + 1]
            } else if short[i] {
                -self.b[i]
            } else {
                // fully served by delivery: one fewer unit shipped
                let freed = match next_short {
                    _ if leftover > 0.0 => self.h[0],
                    Some(j) => self.c[j] - self.b[j],
                    None => self.h[0],
                };
                freed - self.c[i]
            };
            debug_assert!(z[i] >= 0.0);
        }
        g
    }

    /// If the warehouse is still above target, ship nothing to one store so
    /// it drains: `y = max(x, w)` except `y_{i*} = x_{i*}`.
    pub fn transition_solver(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(w).map(|(a, b)| a.max(*b)).collect();
        if x[0] > w[0] {
            let star = self.halted_store();
            y[star + 1] = x[star + 1];
        }
        y
    }

    fn halted_store(&self) -> usize {
        match self.halt {
            HaltRule::LeastProfitable => *self.order.last().expect("nonempty"),
            HaltRule::MostProfitable => self.order[0],
        }
    }

    /// `[(h_0 + Σb)² + Σ(h_i + b_i)²]^{1/2}`.
    pub fn sigma0(&self) -> f64 {
        let head = self.h[0] + self.b.iter().sum::<f64>();
        let tail: Vec<f64> = (0..self.stores()).map(|i| self.h[i + 1] + self.b[i]).collect();
        (head * head + norm(&tail).powi(2)).sqrt()
    }

    /// `n + 6 β0 Σ_{i=0}^n ρ_i`.
    pub fn hitting_bound(&self) -> f64 {
        self.stores() as f64 + 6.0 * self.demand.density_upper() * self.rho.iter().sum::<f64>()
    }

    /// `(n+4)² β0 (h_0 + Σ(h_i + b_i + c_i))`.
    pub fn smoothness(&self) -> f64 {
        let n = self.stores() as f64;
        let s: f64 = (0..self.stores()).map(|i| self.h[i + 1] + self.b[i] + self.c[i]).sum();
        (n + 4.0).powi(2) * self.demand.density_upper() * (self.h[0] + s)
    }

    pub fn theory_constants(&self) -> TheoryConstants {
        TheoryConstants {
            beta: Some(self.smoothness()),
            beta0: Some(self.demand.density_upper()),
            sigma0: Some(self.sigma0()),
            sigma: Some(self.sigma0()),
            diameter: self.set.diameter().ok(),
            max_gradient: Some(self.sigma0()),
            hitting_bound: Some(self.hitting_bound()),
            ..Default::default()
        }
    }

    /// Column order of `z'`: `z_1..n`, `z⁽¹⁾_0..n`, `z⁽²⁾_1..n`, `z⁽³⁾_0`,
    /// `z⁽⁴⁾_0..n`, `z⁽⁵⁾_0..n`. Rows: warehouse capacity, warehouse
    /// holding, store holding, store lost sales.
    pub fn standard_form(&self, d: &[f64]) -> StandardForm {
        let n = self.stores();
        let cols = n + (n + 1) + n + 1 + (n + 1) + (n + 1);
        let (z, z1, z2, z3, z4, z5) = (0, n, 2 * n + 1, 3 * n + 1, 3 * n + 2, 4 * n + 3);
        debug_assert_eq!(z5 + n + 1, cols);
        let rows = 2 + 2 * n;
        let mut w = vec![vec![0.0; cols]; rows];
        let mut h = vec![vec![0.0; n + 1]; rows];
        let mut dd = vec![0.0; rows];

        h[0][0] = 1.0;
        h[1][0] = 1.0;
        for i in 0..n {
            w[0][z + i] = -1.0;
            w[1][z + i] = -1.0;
        }
        w[0][z3] = -1.0;
        w[1][z1] = -1.0;
        w[1][z4] = 1.0;
        for i in 0..n {
            let (r1, r2) = (2 + i, 2 + n + i);
            h[r1][i + 1] = 1.0;
            h[r2][i + 1] = 1.0;
            w[r1][z + i] = 1.0;
            w[r1][z1 + i + 1] = -1.0;
            w[r1][z4 + i + 1] = 1.0;
            w[r2][z + i] = 1.0;
            w[r2][z2 + i] = 1.0;
            w[r2][z5 + i + 1] = -1.0;
            dd[r1] = d[i];
            dd[r2] = d[i];
        }
        let mut c = vec![0.0; cols];
        c[z..z + n].copy_from_slice(&self.c);
        c[z1..z1 + n + 1].copy_from_slice(&self.h);
        c[z2..z2 + n].copy_from_slice(&self.b);
        StandardForm { h, w, c, d: dd }
    }

    /// Solves the delivery program as a linear program and differentiates it
    /// through its dual.
    pub fn lp_oracle(&self, y: &[f64], d: &[f64]) -> Result<LpOracle> {
        let sf = self.standard_form(d);
        let rhs: Vec<f64> = sf
            .d
            .iter()
            .zip(&sf.h)
            .map(|(di, row)| di - row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let sol = lp::solve(&sf.w, &rhs, &sf.c)?;
        let gradient = (0..y.len())
            .map(|j| -(0..sf.h.len()).map(|r| sf.h[r][j] * sol.duals[r]).sum::<f64>())
            .collect();
        Ok(LpOracle { cost: sol.objective, duals: sol.duals, gradient })
    }
}

impl Application for Owms {
    fn dim(&self) -> usize {
        self.stores() + 1
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
        Owms::cost(self, y, d)
    }

    fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        Owms::dynamics(self, y, d)
    }

    fn observe(&self, y: &[f64], d: &[f64]) -> Vec<f64> {
        self.censor(y, d)
    }

    fn gradient(&self, y: &[f64], observation: &[f64]) -> Vec<f64> {
        self.gradient_from_sales(y, observation)
    }

    fn transition(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.transition_solver(x, w))
    }

    fn sigma0(&self) -> f64 {
        Owms::sigma0(self)
    }

    fn hitting_bound(&self) -> f64 {
        Owms::hitting_bound(self)
    }
}
