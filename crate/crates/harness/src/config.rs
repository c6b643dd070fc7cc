//! TOML experiment configuration and the instances it describes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use invmeta::apps::owms::HaltRule;
use invmeta::apps::{MultiEchelon, MultiProduct, Owms};
use invmeta::constraints::{ConstraintSet, Halfspace};
use invmeta::demand::{DemandModel, Family};
use invmeta::meta_policy::Application;
use invmeta::optimizer::{BatchSchedule, TheoryConstants};
use invmeta::two_echelon::TwoEchelonParams;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplicationId {
    Multiproduct,
    Multiechelon,
    Owms,
    TwoEchelon,
}

impl ApplicationId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ApplicationId::Multiproduct => "multiproduct",
            ApplicationId::Multiechelon => "multiechelon",
            ApplicationId::Owms => "owms",
            ApplicationId::TwoEchelon => "two_echelon",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub application: ApplicationId,
    pub instance: InstanceConfig,
    pub demand: DemandConfig,
    pub policy: Vec<PolicyConfig>,
    pub horizons: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Starting inventory in decision space; zeros when absent.
    #[serde(default)]
    pub initial_inventory: Option<Vec<f64>>,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Writes measured wall-clock seconds; `false` writes 0 so that output
    /// files are byte-reproducible.
    #[serde(default = "yes")]
    pub wall_clock: bool,
}

fn yes() -> bool {
    true
}

/// Instance parameters; which keys are required depends on `application`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub h: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub halfspaces: Vec<HalfspaceConfig>,
    pub halt_rule: Option<HaltRule>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub p1: Option<f64>,
    pub c1: Option<f64>,
    pub demand_bound: Option<f64>,
    pub s_max: Option<f64>,
    pub initial_levels: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfspaceConfig {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemandConfig {
    #[serde(flatten)]
    pub family: Family,
    /// Correlation matrix of a Gaussian copula across products.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub density_upper: Option<f64>,
    #[serde(default)]
    pub density_lower: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Sample size of each SAA sample set.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sample size used while optimizing non-separable costs.
    #[serde(default = "default_search_samples")]
    pub search_samples: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Iterations used while optimizing non-separable costs.
    #[serde(default = "default_search_iterations")]
    pub search_iterations: usize,
}

fn default_samples() -> usize {
    1_000_000
}
fn default_search_samples() -> usize {
    20_000
}
fn default_iterations() -> usize {
    10_000
}
fn default_search_iterations() -> usize {
    2_000
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            search_samples: default_search_samples(),
            iterations: default_iterations(),
            search_iterations: default_search_iterations(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: PolicyKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Meta { eta: f64, schedule: ScheduleConfig },
    Sgd { eta: f64, power: f64 },
    Saa,
    Planner { eta: f64, #[serde(default)] schedule: Option<ScheduleConfig> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleConfig {
    /// `⌈√T⌉` with `T` the horizon being run.
    FixedTime,
    AnyTimeLinear { slope: u64 },
    /// Either `base` directly or the base implied by `eta` and strong
    /// convexity `alpha` (taken from the instance when omitted).
    Exponential {
        #[serde(default)]
        base: Option<f64>,
        #[serde(default)]
        alpha: Option<f64>,
    },
}

impl ScheduleConfig {
    pub fn resolve(&self, horizon: u64, eta: f64, constants: &TheoryConstants) -> Result<BatchSchedule> {
        Ok(match *self {
            ScheduleConfig::FixedTime => BatchSchedule::fixed_time(horizon)?,
            ScheduleConfig::AnyTimeLinear { slope } => BatchSchedule::any_time_linear(slope)?,
            ScheduleConfig::Exponential { base: Some(base), .. } => BatchSchedule::exponential(base)?,
            ScheduleConfig::Exponential { base: None, alpha } => {
                let alpha = alpha.or(constants.alpha).ok_or_else(|| {
                    HarnessError::Config(
                        "exponential schedule needs `base`, `alpha`, or a demand density lower bound".into(),
                    )
                })?;
                BatchSchedule::from_stepsize(eta, alpha)?
            }
        })
    }
}

impl PolicyConfig {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            PolicyKind::Meta { schedule, .. } => match schedule {
                ScheduleConfig::FixedTime => "MS-FT".into(),
                ScheduleConfig::AnyTimeLinear { .. } => "MS-AT".into(),
                ScheduleConfig::Exponential { .. } => "MS-EXP".into(),
            },
            PolicyKind::Sgd { power, .. } => format!("SGD-{power}"),
            PolicyKind::Saa => "SAA".into(),
            PolicyKind::Planner { .. } => "MS-TE".into(),
        }
    }
}

/// A constructed instance.
#[derive(Clone, Debug)]
pub enum Instance {
    Multiproduct(MultiProduct),
    Multiechelon(MultiEchelon),
    Owms(Owms),
    TwoEchelon { params: TwoEchelonParams, demand: DemandModel },
}

impl Instance {
    /// The inventory application, absent for the two-echelon planner.
    pub fn app(&self) -> Option<&dyn Application> {
        match self {
            Instance::Multiproduct(a) => Some(a),
            Instance::Multiechelon(a) => Some(a),
            Instance::Owms(a) => Some(a),
            Instance::TwoEchelon { .. } => None,
        }
    }

    pub fn theory_constants(&self) -> TheoryConstants {
        match self {
            Instance::Multiproduct(a) => a.theory_constants(),
            Instance::Multiechelon(a) => a.theory_constants(),
            Instance::Owms(a) => a.theory_constants(),
            Instance::TwoEchelon { .. } => TheoryConstants::default(),
        }
    }
}

fn need<T: Clone>(v: &Option<T>, app: ApplicationId, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| HarnessError::Config(format!("{} instance requires `{key}`", app.as_str())))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn demand_model(&self, dim: usize) -> Result<DemandModel> {
        let mut m = DemandModel::new(self.demand.family, dim)?;
        if let Some(c) = &self.demand.correlation {
            m = m.with_correlation(c)?;
        }
        if let Some(u) = self.demand.density_upper {
            m = m.with_density_bounds(u, self.demand.density_lower)?;
        } else if self.demand.density_lower.is_some() {
            return Err(HarnessError::Config("`density_lower` requires `density_upper`".into()));
        }
        Ok(m)
    }

    pub fn build_instance(&self) -> Result<Instance> {
        let id = self.application;
        let inst = &self.instance;
        Ok(match id {
            ApplicationId::Multiproduct => {
                let h = need(&inst.h, id, "h")?;
                let b = need(&inst.b, id, "b")?;
                let n = h.len();
                let lower = inst.lower.clone().unwrap_or_else(|| vec![0.0; n]);
                let hs = inst.halfspaces.iter().map(|r| Halfspace::new(r.coeffs.clone(), r.bound)).collect();
                let set = ConstraintSet::new(lower, inst.upper.clone(), hs)?;
                Instance::Multiproduct(MultiProduct::new(h, b, set, self.demand_model(n)?)?)
            }
            ApplicationId::Multiechelon => {
                let h = need(&inst.h, id, "h")?;
                let b = need(&inst.b, id, "b")?;
                let rho = need(&inst.rho, id, "rho")?;
                Instance::Multiechelon(MultiEchelon::new(h, b, rho, self.demand_model(1)?)?)
            }
            ApplicationId::Owms => {
                let b = need(&inst.b, id, "b")?;
                let n = b.len();
                let app = Owms::new(
                    need(&inst.h, id, "h")?,
                    b,
                    need(&inst.c, id, "c")?,
                    need(&inst.rho, id, "rho")?,
                    self.demand_model(n)?,
                )?;
                Instance::Owms(app.with_halt_rule(inst.halt_rule.unwrap_or_default()))
            }
            ApplicationId::TwoEchelon => {
                let planner = self.policy.iter().find_map(|p| match &p.kind {
                    PolicyKind::Planner { eta, schedule } => Some((*eta, schedule.clone())),
                    _ => None,
                });
                let (eta, schedule) = planner.unwrap_or((1.0, None));
                let schedule = match schedule {
                    None => BatchSchedule::AnyTimeLinear { slope: 1 },
                    Some(s) => s.resolve(2, eta, &TheoryConstants::default())?,
                };
                let params = TwoEchelonParams {
                    h1: need(&inst.h1, id, "h1")?,
                    h2: need(&inst.h2, id, "h2")?,
                    p1: need(&inst.p1, id, "p1")?,
                    c1: inst.c1.unwrap_or(1.0),
                    demand_bound: need(&inst.demand_bound, id, "demand_bound")?,
                    s_max: need(&inst.s_max, id, "s_max")?,
                    eta,
                    schedule,
                    initial: inst.initial_levels.unwrap_or([0.0, 0.0]),
                };
                params.validate()?;
                Instance::TwoEchelon { params, demand: self.demand_model(1)? }
            }
        })
    }

    /// Structural checks plus admissibility warnings. Errors on anything
    /// that would make a run meaningless.
    pub fn validate(&self) -> Result<(Instance, Vec<String>)> {
        if self.horizons.is_empty() {
            return Err(HarnessError::Config("horizon list is empty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(HarnessError::Config("horizons must be positive".into()));
        }
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be positive".into()));
        }
        if self.policy.is_empty() {
            return Err(HarnessError::Config("no policy configured".into()));
        }
        let mut labels: Vec<String> = self.policy.iter().map(|p| p.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("policy names must be unique".into()));
        }
        let instance = self.build_instance()?;
        let mut warnings = Vec::new();
        let constants = instance.theory_constants();
        for p in &self.policy {
            let label = p.label();
            match (&p.kind, &instance) {
                (PolicyKind::Planner { .. }, Instance::TwoEchelon { .. }) => {}
                (PolicyKind::Planner { .. }, _) | (_, Instance::TwoEchelon { .. }) => {
                    return Err(HarnessError::Config(format!(
                        "policy `{label}` does not apply to {}",
                        self.application.as_str()
                    )))
                }
                (PolicyKind::Saa, Instance::Owms(_)) => {
                    return Err(HarnessError::Config("SAA has no order-up-to rule for owms".into()))
                }
                (PolicyKind::Meta { eta, schedule }, _) => {
                    for &t in &self.horizons {
                        let s = schedule.resolve(t, *eta, &constants)?;
                        for w in constants.stepsize_warnings(*eta, &s) {
                            warnings.push(format!("{label} (T={t}): {w}"));
                        }
                    }
                }
                (PolicyKind::Sgd { eta, power }, _) => {
                    if !(*eta > 0.0 && power.is_finite() && *power >= 0.0) {
                        return Err(HarnessError::Config(format!("{label}: needs eta > 0 and power >= 0")));
                    }
                }
                _ => {}
            }
        }
        if self.application == ApplicationId::TwoEchelon
            && self.policy.iter().filter(|p| matches!(p.kind, PolicyKind::Planner { .. })).count() > 1
        {
            return Err(HarnessError::Config("two_echelon runs a single planner policy".into()));
        }
        if let Instance::Owms(a) = &instance {
            warnings.extend(a.warnings());
        }
        if let (Some(x), Some(app)) = (&self.initial_inventory, instance.app()) {
            if x.len() != app.dim() {
                return Err(HarnessError::Config(format!(
                    "initial_inventory has {} entries, instance has {}",
                    x.len(),
                    app.dim()
                )));
            }
            if !app.decision_set().contains(x, 1e-9) {
                return Err(HarnessError::Config("initial_inventory lies outside the feasible set".into()));
            }
        }
        Ok((instance, warnings))
    }

    /// Starting inventory in decision space.
    pub fn initial(&self, app: &dyn Application) -> Vec<f64> {
        self.initial_inventory.clone().unwrap_or_else(|| app.decision_set().lower().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"
        application = "multiproduct"
        horizons = [100, 1000]
        replications = 4
        seed = 7

        [instance]
        h = [1.0]
        b = [50.0]
        lower = [0.0]
        upper = [20.0]

        [demand]
        family = "uniform"
        low = 0.0
        high = 10.0

        [[policy]]
        kind = "meta"
        eta = 0.05
        schedule = { kind = "fixed_time" }

        [[policy]]
        kind = "sgd"
        eta = 0.5
        power = 0.5

        [[policy]]
        kind = "saa"
    "#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(SINGLE).unwrap();
        let (inst, _) = cfg.validate().unwrap();
        assert!(matches!(inst, Instance::Multiproduct(_)));
        let labels: Vec<_> = cfg.policy.iter().map(|p| p.label()).collect();
        assert_eq!(labels, ["MS-FT", "SGD-0.5", "SAA"]);
    }

    #[test]
    fn rejects_empty_horizons_and_unknown_keys() {
        let cfg = ExperimentConfig::from_toml(&SINGLE.replace("[100, 1000]", "[]")).unwrap();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml(&SINGLE.replace("seed = 7", "seed = 7\nsede = 3")).is_err());
    }

    #[test]
    fn missing_instance_key_is_named() {
        let cfg = ExperimentConfig::from_toml(&SINGLE.replace("b = [50.0]", "")).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("`b`"), "{err}");
    }

    #[test]
    fn exponential_base_from_alpha() {
        let s = ScheduleConfig::Exponential { base: None, alpha: Some(5.1) };
        let b = s.resolve(10, 0.05, &TheoryConstants::default()).unwrap();
        assert!(b.base().unwrap() > 1.0);
        let s = ScheduleConfig::Exponential { base: None, alpha: None };
        assert!(s.resolve(10, 0.05, &TheoryConstants::default()).is_err());
    }
}
