//! The learning meta-policy: feasibility-gated order-up-to decisions with
//! low-switching minibatch updates of the target level.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::optimizer::{BatchSchedule, OptimizerState};
use crate::stream::RandomStream;

/// Slack on `x <= w` so projection noise does not create spurious waiting
/// periods.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Slack on the transition-solver contract checks.
pub const CONTRACT_TOL: f64 = 1e-6;

/// One inventory system. Decisions `y` and states `x` live in decision space;
/// the learned target lives in target space, which differs only when the
/// application reparametrizes (the serial system optimizes prefix sums).
pub trait Application {
    /// Dimension of decisions and states.
    fn dim(&self) -> usize;
    /// Feasible region in target space.
    fn target_set(&self) -> &ConstraintSet;
    /// Feasible region in decision space.
    fn decision_set(&self) -> &ConstraintSet;
    fn demand(&self) -> &DemandModel;
    fn cost(&self, y: &[f64], d: &[f64]) -> f64;
    /// Next-period starting inventory; always `<= y`.
    fn dynamics(&self, y: &[f64], d: &[f64]) -> Vec<f64>;
    /// What the firm sees after the period (sales, never raw demand).
    fn observe(&self, y: &[f64], d: &[f64]) -> Vec<f64>;
    /// Gradient estimate in target space, built from the observation only.
    fn gradient(&self, y: &[f64], observation: &[f64]) -> Vec<f64>;
    /// Feasible decision `y >= x` while the target `w` is unreachable.
    /// `w` is given in decision space.
    fn transition(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>>;
    /// Bound on the per-sample gradient norm.
    fn sigma0(&self) -> f64;
    /// Bound on the expected length of a waiting stretch.
    fn hitting_bound(&self) -> f64;

    fn to_decision(&self, target: &[f64]) -> Vec<f64> {
        target.to_vec()
    }

    fn to_target(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodKind {
    Working,
    Waiting,
}

/// Any ordering policy that can be driven by [`simulate`].
pub trait Policy {
    fn decide(&mut self, x: &[f64], app: &dyn Application) -> Result<(Vec<f64>, PeriodKind)>;
    /// `demand` is the uncensored realization; only full-information
    /// baselines may look at it.
    fn observe(&mut self, y: &[f64], observation: &[f64], demand: &[f64], app: &dyn Application) -> Result<()>;
    /// Current target in target space.
    fn target(&self) -> Vec<f64>;
    /// Number of target updates performed so far.
    fn updates(&self) -> u64;
}

#[derive(Clone, Debug)]
pub struct MetaPolicy {
    opt: OptimizerState,
    buffer: Vec<Vec<f64>>,
    pending: Option<PeriodKind>,
    working: u64,
    waiting: u64,
}

impl MetaPolicy {
    /// Starts with the target equal to the initial inventory.
    pub fn new(x1: &[f64], schedule: BatchSchedule, eta: f64, app: &dyn Application) -> Result<Self> {
        if x1.len() != app.dim() {
            return Err(Error::Dimension { expected: app.dim(), got: x1.len() });
        }
        if !app.decision_set().contains(x1, CONTRACT_TOL) {
            return Err(Error::InfeasibleStart);
        }
        let w = app.to_target(x1);
        let opt = OptimizerState::new(w, eta, schedule, app.target_set())?;
        Ok(Self {
            opt,
            buffer: Vec::new(),
            pending: None,
            working: 0,
            waiting: 0,
        })
    }

    /// Target in target space.
    pub fn w(&self) -> &[f64] {
        self.opt.w()
    }

    pub fn tau(&self) -> u64 {
        self.opt.tau()
    }

    /// Working-period counter `l` of the running batch.
    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn working_periods(&self) -> u64 {
        self.working
    }

    pub fn waiting_periods(&self) -> u64 {
        self.waiting
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }
}

impl Policy for MetaPolicy {
    fn decide(&mut self, x: &[f64], app: &dyn Application) -> Result<(Vec<f64>, PeriodKind)> {
        let w = app.to_decision(self.opt.w());
        let (y, kind) = order_up_to(x, &w, app)?;
        match kind {
            PeriodKind::Working => self.working += 1,
            PeriodKind::Waiting => self.waiting += 1,
        }
        self.pending = Some(kind);
        Ok((y, kind))
    }

    fn observe(&mut self, y: &[f64], observation: &[f64], _demand: &[f64], app: &dyn Application) -> Result<()> {
        let kind = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidArgument("observe called without decide".into()))?;
        if kind == PeriodKind::Waiting {
            return Ok(());
        }
        self.buffer.push(app.gradient(y, observation));
        if self.buffer.len() as u64 == self.opt.current_batch() {
            self.opt.minibatch_step(&self.buffer, app.target_set())?;
            self.buffer.clear();
        }
        Ok(())
    }

    fn target(&self) -> Vec<f64> {
        self.opt.w().to_vec()
    }

    fn updates(&self) -> u64 {
        self.opt.tau() - 1
    }
}

/// `y = w` when `x <= w`, otherwise the application's transition solver,
/// with its contract checked.
pub fn order_up_to(x: &[f64], w: &[f64], app: &dyn Application) -> Result<(Vec<f64>, PeriodKind)> {
    if x.len() != w.len() {
        return Err(Error::Dimension { expected: w.len(), got: x.len() });
    }
    if x.iter().zip(w).all(|(xi, wi)| *xi <= wi + FEASIBILITY_TOL) {
        return Ok((w.to_vec(), PeriodKind::Working));
    }
    let y = app.transition(x, w)?;
    if y.len() != x.len() {
        return Err(Error::TransitionContract(format!("returned {} coordinates", y.len())));
    }
    if let Some(i) = (0..x.len()).find(|&i| y[i] < x[i] - CONTRACT_TOL) {
        return Err(Error::TransitionContract(format!(
            "y[{i}] = {} below inventory {}",
            y[i], x[i]
        )));
    }
    if !app.decision_set().contains(&y, CONTRACT_TOL) {
        return Err(Error::TransitionContract(format!("{y:?} outside the feasible set")));
    }
    Ok((y, PeriodKind::Waiting))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Period {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub cost: f64,
    pub kind: PeriodKind,
}

/// Aggregates of one simulated episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeSummary {
    pub total_cost: f64,
    /// Number of distinct target levels in force during the horizon.
    pub targets_used: u64,
    pub working: u64,
    pub waiting: u64,
    pub final_target: Vec<f64>,
}

/// Runs `horizon` periods: decide, draw demand, pay, transition, observe.
/// `on_period` sees every period as it happens.
pub fn simulate<F>(
    app: &dyn Application,
    policy: &mut dyn Policy,
    x1: &[f64],
    horizon: u64,
    stream: &mut RandomStream,
    mut on_period: F,
) -> Result<EpisodeSummary>
where
    F: FnMut(u64, &Period),
{
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let mut x = x1.to_vec();
    let mut d = vec![0.0; app.demand().dim()];
    let mut summary = EpisodeSummary::default();
    let mut last_updates = None;
    for t in 1..=horizon {
        let (y, kind) = policy.decide(&x, app)?;
        let u = policy.updates();
        if last_updates != Some(u) {
            summary.targets_used += 1;
            last_updates = Some(u);
        }
        app.demand().sample_into(stream, &mut d);
        let cost = app.cost(&y, &d);
        let next = app.dynamics(&y, &d);
        let obs = app.observe(&y, &d);
        match kind {
            PeriodKind::Working => summary.working += 1,
            PeriodKind::Waiting => summary.waiting += 1,
        }
        summary.total_cost += cost;
        let period = Period { x: std::mem::replace(&mut x, next), y, d: d.clone(), cost, kind };
        policy.observe(&period.y, &obs, &period.d, app)?;
        on_period(t, &period);
    }
    summary.final_target = policy.target();
    Ok(summary)
}

/// Full trajectory of one episode.
pub fn run_episode(
    app: &dyn Application,
    policy: &mut dyn Policy,
    x1: &[f64],
    horizon: u64,
    stream: &mut RandomStream,
) -> Result<(Vec<Period>, EpisodeSummary)> {
    let mut periods = Vec::with_capacity(horizon as usize);
    let summary = simulate(app, policy, x1, horizon, stream, |_, p| periods.push(p.clone()))?;
    Ok((periods, summary))
}

/// Lengths of maximal runs of consecutive waiting periods.
pub fn waiting_stretches(kinds: impl IntoIterator<Item = PeriodKind>) -> Vec<u64> {
    let mut out = Vec::new();
    let mut run = 0;
    for k in kinds {
        if k == PeriodKind::Waiting {
            run += 1;
        } else if run > 0 {
            out.push(run);
            run = 0;
        }
    }
    if run > 0 {
        out.push(run);
    }
    out
}
