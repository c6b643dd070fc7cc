//! wasm-bindgen bindings for the static demo page in `www/`.

use invmeta::apps::MultiProduct;
use invmeta::baselines::saa_level;
use invmeta::constraints::{ConstraintSet, Halfspace};
use invmeta::demand::{DemandModel, Family};
use invmeta::meta_policy::{simulate, MetaPolicy};
use invmeta::optimizer::BatchSchedule;
use invmeta::stream::RandomStream;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Projects `(x, y)` onto `{0 <= y <= upper, a_k · y <= b_k}`.
/// `rows` is flat `[a1, a2, b, a1, a2, b, ...]`.
#[wasm_bindgen]
pub fn project_point(x: f64, y: f64, upper_x: f64, upper_y: f64, rows: &[f64]) -> Result<Vec<f64>, JsError> {
    if rows.len() % 3 != 0 {
        return Err(JsError::new("rows must hold triples (a1, a2, b)"));
    }
    let halfspaces = rows.chunks(3).map(|r| Halfspace::new(vec![r[0], r[1]], r[2])).collect();
    let set = ConstraintSet::new(vec![0.0, 0.0], Some(vec![upper_x, upper_y]), halfspaces).map_err(js_err)?;
    set.project(&[x, y]).map_err(js_err)
}

/// Runs the meta-policy on a single-product newsvendor with `U(0, high)`
/// demand. Returns `[target_1, ..., target_T, cost_1, ..., cost_T]`.
#[wasm_bindgen]
pub fn newsvendor_episode(
    h: f64,
    b: f64,
    high: f64,
    eta: f64,
    exponential: bool,
    horizon: u32,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let horizon = u64::from(horizon);
    let demand = DemandModel::scalar(Family::Uniform { low: 0.0, high }).map_err(js_err)?;
    let set = ConstraintSet::boxed(vec![0.0], vec![2.0 * high]).map_err(js_err)?;
    let app = MultiProduct::new(vec![h], vec![b], set, demand).map_err(js_err)?;
    let schedule = if exponential {
        BatchSchedule::exponential(1.5)
    } else {
        BatchSchedule::fixed_time(horizon)
    }
    .map_err(js_err)?;
    let mut policy = MetaPolicy::new(&[0.0], schedule, eta, &app).map_err(js_err)?;
    let mut targets = Vec::with_capacity(horizon as usize);
    let mut costs = Vec::with_capacity(horizon as usize);
    simulate(&app, &mut policy, &[0.0], horizon, &mut RandomStream::new(seed, 0), |_, p| {
        targets.push(p.y[0]);
        costs.push(p.cost);
    })
    .map_err(js_err)?;
    targets.extend(costs);
    Ok(targets)
}

/// Sample-average order-up-to level: the `⌈q·n⌉`-th smallest observation.
#[wasm_bindgen]
pub fn empirical_level(history: &[f64], q: f64) -> Result<f64, JsError> {
    saa_level(history, q).ok_or_else(|| JsError::new("empty history or q outside (0, 1]"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_triangle() {
        let p = project_point(5.0, 5.0, 10.0, 10.0, &[1.0, 1.0, 4.0]).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-9 && (p[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn episode_layout_and_learning() {
        let out = newsvendor_episode(1.0, 50.0, 10.0, 0.05, true, 4000, 1).unwrap();
        assert_eq!(out.len(), 8000);
        let late = out[3000..4000].iter().sum::<f64>() / 1000.0;
        assert!((late - 500.0 / 51.0).abs() < 0.5, "late mean {late}");
    }

    #[test]
    fn saa_level_matches_order_statistic() {
        assert_eq!(empirical_level(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.0);
    }
}
