//! Replicated simulation and aggregation.

use std::time::Instant;

use rayon::prelude::*;

use invmeta::baselines::{SaaPolicy, SgdPolicy};
use invmeta::meta_policy::{simulate, Application, MetaPolicy, Policy};
use invmeta::stream::RandomStream;
use invmeta::two_echelon::planner_run;

use crate::config::{ExperimentConfig, Instance, PolicyConfig, PolicyKind};
use crate::error::{HarnessError, Result};
use crate::oracle::{optimal_oracle, OracleResult};

/// Replications simulated together before their results are folded in.
const CHUNK: usize = 64;

/// `(C − T·C*)/(T·C*) × 100`.
pub fn relative_average_regret(total_cost: f64, horizon: u64, optimal: f64) -> Result<f64> {
    if !(optimal > 0.0) {
        return Err(HarnessError::Oracle(format!("optimal cost must be positive, got {optimal}")));
    }
    if horizon == 0 {
        return Err(HarnessError::Config("horizon must be positive".into()));
    }
    let base = horizon as f64 * optimal;
    Ok((total_cost - base) / base * 100.0)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; all cores when `None`.
    pub jobs: Option<usize>,
    pub curves: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub policy: String,
    pub horizon: u64,
    pub replication: u64,
    pub message: String,
}

/// Aggregates for one `(policy, T)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub policy: String,
    pub horizon: u64,
    /// Replications that completed.
    pub replications: u64,
    pub mean_rel_regret_pct: f64,
    pub std_rel_regret_pct: f64,
    pub mean_switches: f64,
    pub mean_waiting_periods: f64,
    pub wall_clock_s: f64,
    /// Cumulative cost of each completed replication, by index.
    pub total_costs: Vec<f64>,
    /// Final target of each completed replication (empty for the planner).
    pub final_targets: Vec<Vec<f64>>,
    /// Per-period `(mean, std)` of relative average regret.
    pub curve: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub application: String,
    pub oracle: OracleResult,
    pub rows: Vec<Row>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

struct Outcome {
    total: f64,
    switches: u64,
    waiting: u64,
    final_target: Vec<f64>,
    cumulative: Option<Vec<f64>>,
}

/// Welford accumulator, fed in replication order.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation; 0 for fewer than two values.
    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

pub fn build_policy(
    spec: &PolicyConfig,
    instance: &Instance,
    app: &dyn Application,
    x1: &[f64],
    horizon: u64,
) -> Result<Box<dyn Policy>> {
    let constants = instance.theory_constants();
    Ok(match &spec.kind {
        PolicyKind::Meta { eta, schedule } => {
            Box::new(MetaPolicy::new(x1, schedule.resolve(horizon, *eta, &constants)?, *eta, app)?)
        }
        PolicyKind::Sgd { eta, power } => {
            let w = app.target_set().project(&app.to_target(x1))?;
            Box::new(SgdPolicy::new(w, *eta, *power, app.target_set())?)
        }
        PolicyKind::Saa => {
            let initial = app.to_target(x1);
            match instance {
                Instance::Multiproduct(a) => {
                    let q: Vec<f64> = a.h().iter().zip(a.b()).map(|(h, b)| b / (b + h)).collect();
                    Box::new(SaaPolicy::new(&q, initial)?)
                }
                Instance::Multiechelon(a) => {
                    let q: Vec<f64> = a.h().iter().zip(a.b()).map(|(h, b)| b / (b + h)).collect();
                    let n = q.len();
                    Box::new(SaaPolicy::new(&q, initial)?.with_sources(vec![0; n])?)
                }
                _ => return Err(HarnessError::Config("SAA is not defined for this application".into())),
            }
        }
        PolicyKind::Planner { .. } => {
            return Err(HarnessError::Config("the planner only runs on two_echelon".into()))
        }
    })
}

fn run_replication(
    cfg: &ExperimentConfig,
    instance: &Instance,
    spec: &PolicyConfig,
    horizon: u64,
    replication: u64,
    curves: bool,
) -> Result<Outcome> {
    let mut stream = RandomStream::new(cfg.seed, replication);
    let mut cumulative = curves.then(|| Vec::with_capacity(horizon as usize));
    let mut acc = 0.0;
    let mut record = |cost: f64| {
        acc += cost;
        if let Some(c) = cumulative.as_mut() {
            c.push(acc);
        }
    };
    match instance {
        Instance::TwoEchelon { params, demand } => {
            let run = planner_run(params, demand, horizon, &mut stream, |_, c| record(c))?;
            let mut switches = 0;
            let mut last = None;
            for e in &run.epochs {
                if last != Some((e.s1, e.s2)) {
                    switches += 1;
                    last = Some((e.s1, e.s2));
                }
            }
            Ok(Outcome { total: run.total_cost, switches, waiting: 0, final_target: Vec::new(), cumulative })
        }
        _ => {
            let app = instance.app().expect("inventory application");
            let x1 = cfg.initial(app);
            let mut policy = build_policy(spec, instance, app, &x1, horizon)?;
            let s = simulate(app, policy.as_mut(), &x1, horizon, &mut stream, |_, p| record(p.cost))?;
            Ok(Outcome {
                total: s.total_cost,
                switches: s.targets_used,
                waiting: s.waiting,
                final_target: s.final_target,
                cumulative,
            })
        }
    }
}

/// Computes the oracle, then runs every `(policy, T, replication)`.
/// Replication `r` of every policy and horizon sees the demand stream keyed
/// by `(seed, r)`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SimulationResult> {
    let (instance, warnings) = cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = opts.jobs {
            b = b.num_threads(j.max(1));
        }
        b.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
    };
    let oracle_stream = RandomStream::new(cfg.seed, u64::MAX).fork(0x0AC1E);
    let oracle = pool.install(|| optimal_oracle(&instance, &cfg.oracle, &oracle_stream))?;
    if !(oracle.cost > 0.0) {
        return Err(HarnessError::Oracle(format!("optimal cost {} is not positive", oracle.cost)));
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for spec in &cfg.policy {
        let label = spec.label();
        for &horizon in &cfg.horizons {
            let started = Instant::now();
            let mut regret = Moments::default();
            let mut switches = Moments::default();
            let mut waiting = Moments::default();
            let mut totals = Vec::new();
            let mut finals = Vec::new();
            let mut curve = opts.curves.then(|| vec![Moments::default(); horizon as usize]);
            let reps: Vec<u64> = (0..cfg.replications).collect();
            for chunk in reps.chunks(CHUNK) {
                let outcomes: Vec<Result<Outcome>> = pool.install(|| {
                    chunk
                        .par_iter()
                        .map(|&r| run_replication(cfg, &instance, spec, horizon, r, opts.curves))
                        .collect()
                });
                for (&r, out) in chunk.iter().zip(outcomes) {
                    match out {
                        Ok(o) => {
                            regret.push(relative_average_regret(o.total, horizon, oracle.cost)?);
                            switches.push(o.switches as f64);
                            waiting.push(o.waiting as f64);
                            totals.push(o.total);
                            finals.push(o.final_target);
                            if let (Some(curve), Some(cum)) = (curve.as_mut(), o.cumulative) {
                                for (t, (m, c)) in curve.iter_mut().zip(cum).enumerate() {
                                    m.push(relative_average_regret(c, t as u64 + 1, oracle.cost)?);
                                }
                            }
                        }
                        Err(e) => failures.push(Failure {
                            policy: label.clone(),
                            horizon,
                            replication: r,
                            message: e.to_string(),
                        }),
                    }
                }
            }
            let elapsed = started.elapsed().as_secs_f64();
            rows.push(Row {
                policy: label.clone(),
                horizon,
                replications: regret.n,
                mean_rel_regret_pct: regret.mean(),
                std_rel_regret_pct: regret.std(),
                mean_switches: switches.mean(),
                mean_waiting_periods: waiting.mean(),
                wall_clock_s: if cfg.wall_clock { elapsed } else { 0.0 },
                total_costs: totals,
                final_targets: finals,
                curve: curve.map(|c| c.iter().map(|m| (m.mean(), m.std())).collect()),
            });
        }
    }
    Ok(SimulationResult { application: cfg.application.as_str().to_string(), oracle, rows, failures, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_examples() {
        assert_eq!(relative_average_regret(110.0, 10, 10.0).unwrap(), 10.0);
        assert_eq!(relative_average_regret(100.0, 10, 10.0).unwrap(), 0.0);
        assert_eq!(relative_average_regret(150.0, 10, 10.0).unwrap(), 50.0);
        assert!(relative_average_regret(1.0, 10, 0.0).is_err());
        assert!(relative_average_regret(1.0, 10, -1.0).is_err());
    }

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean() - mean).abs() < 1e-12);
        assert!((m.std() - var.sqrt()).abs() < 1e-12);
    }
}
