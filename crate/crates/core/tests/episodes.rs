use invmeta::apps::{MultiEchelon, MultiProduct, Owms};
use invmeta::baselines::{SaaPolicy, SgdPolicy};
use invmeta::constraints::{ConstraintSet, Halfspace};
use invmeta::demand::{DemandModel, Family};
use invmeta::meta_policy::{run_episode, Application, MetaPolicy, PeriodKind, Policy};
use invmeta::optimizer::BatchSchedule;
use invmeta::stream::RandomStream;
use proptest::prelude::*;

fn uniform(n: usize) -> DemandModel {
    DemandModel::new(Family::Uniform { low: 0.0, high: 10.0 }, n).unwrap()
}

fn apps() -> Vec<Box<dyn Application>> {
    let set = ConstraintSet::new(vec![0.0, 0.0], None, vec![Halfspace::new(vec![1.0, 1.0], 15.0)]).unwrap();
    vec![
        Box::new(MultiProduct::new(vec![1.0, 2.0], vec![50.0, 30.0], set, uniform(2)).unwrap()),
        Box::new(MultiEchelon::new(vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0], vec![10.0; 3], uniform(1)).unwrap()),
        Box::new(
            Owms::new(
                vec![0.5, 1.0, 1.0, 1.0],
                vec![70.0, 50.0, 30.0],
                vec![10.0, 20.0, 30.0],
                vec![20.0, 10.0, 10.0, 10.0],
                uniform(3),
            )
            .unwrap(),
        ),
    ]
}

/// Checks the per-period invariants shared by every policy: orders only
/// raise inventory, decisions stay feasible, working periods implement the
/// target, and inventory follows the application's dynamics.
fn check_episode(app: &dyn Application, policy: &mut dyn Policy, x1: &[f64], horizon: u64, seed: u64) {
    let (periods, summary) = run_episode(app, policy, x1, horizon, &mut RandomStream::new(seed, 0)).unwrap();

    let mut x = x1.to_vec();
    let mut total = 0.0;
    for p in &periods {
        assert_eq!(p.x, x);
        assert!(p.y.iter().zip(&p.x).all(|(y, x)| *y >= x - 1e-6), "y {:?} below x {:?}", p.y, p.x);
        assert!(app.decision_set().contains(&p.y, 1e-6), "{:?} infeasible", p.y);
        assert!(p.cost >= -1e-12);
        assert!((p.cost - app.cost(&p.y, &p.d)).abs() < 1e-12);
        total += p.cost;
        x = app.dynamics(&p.y, &p.d);
    }
    assert!((total - summary.total_cost).abs() <= 1e-9 * (1.0 + total));
    assert_eq!(summary.working + summary.waiting, horizon);
    assert_eq!(summary.working, periods.iter().filter(|p| p.kind == PeriodKind::Working).count() as u64);
    assert!(app.target_set().contains(&summary.final_target, 1e-6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn meta_policy_episodes(seed in any::<u64>(), eta in 0.005f64..0.5, which in 0usize..3, fixed in any::<bool>()) {
        let app = &apps()[which];
        let horizon = 300;
        let schedule = if fixed { BatchSchedule::fixed_time(horizon).unwrap() } else { BatchSchedule::any_time_linear(1).unwrap() };
        let x1 = app.decision_set().lower().to_vec();
        let mut policy = MetaPolicy::new(&x1, schedule, eta, app.as_ref()).unwrap();
        check_episode(app.as_ref(), &mut policy, &x1, horizon, seed);
    }

    #[test]
    fn baseline_episodes(seed in any::<u64>(), which in 0usize..2) {
        let app = &apps()[which];
        let x1 = app.decision_set().lower().to_vec();
        let w1 = app.target_set().lower().to_vec();
        let mut sgd = SgdPolicy::new(w1.clone(), 0.2, 0.5, app.target_set()).unwrap();
        check_episode(app.as_ref(), &mut sgd, &x1, 200, seed);
    }

    #[test]
    fn waiting_periods_only_from_overstock(seed in any::<u64>()) {
        // start far above any target: every period waits until stock drains
        let app = &apps()[0];
        let mut policy = MetaPolicy::new(&[0.0, 0.0], BatchSchedule::any_time_linear(1).unwrap(), 0.1, app.as_ref()).unwrap();
        let (periods, _) = run_episode(app.as_ref(), &mut policy, &[7.5, 7.5], 50, &mut RandomStream::new(seed, 0)).unwrap();
        let first_working = periods.iter().position(|p| p.kind == PeriodKind::Working).unwrap_or(periods.len());
        prop_assert!(first_working >= 1);
        for p in &periods[..first_working] {
            prop_assert!(p.x.iter().any(|&v| v > 1e-9));
        }
    }
}

#[test]
fn saa_episode_on_single_product() {
    let app = MultiProduct::new(
        vec![1.0],
        vec![50.0],
        ConstraintSet::boxed(vec![0.0], vec![20.0]).unwrap(),
        uniform(1),
    )
    .unwrap();
    let mut saa = SaaPolicy::new(&[50.0 / 51.0], vec![0.0]).unwrap();
    check_episode(&app, &mut saa, &[0.0], 5000, 3);
    assert!((saa.level()[0] - 500.0 / 51.0).abs() < 0.3);
}
