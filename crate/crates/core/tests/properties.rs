use proptest::prelude::*;

use timefilter::adaptivity::{integrate_adaptive, AdaptiveConfig};
use timefilter::integrators::{
    integrate_bdf2, integrate_be, integrate_be_filtered, integrate_oneleg_lmm, integrate_rkf45, NuPolicy, TimeGrid,
    Trajectory,
};
use timefilter::problems::{make_problem, ProblemKind, ProblemSpec};
use timefilter::{Matrix, OdeProblem, SolverConfig, StateVec};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn problem(kind: ProblemKind) -> (OdeProblem, ProblemSpec) {
    let spec = ProblemSpec::new(kind);
    (make_problem(&spec).unwrap(), spec)
}

fn final_error(p: &OdeProblem, tr: &Trajectory) -> f64 {
    (tr.final_state() - p.exact(tr.final_time()).unwrap()).amax()
}

fn orders<F>(mut run: F) -> Vec<f64>
where
    F: FnMut(&TimeGrid) -> f64,
{
    let errs: Vec<f64> = (0..6)
        .map(|i| run(&TimeGrid::constant(0.0, 2.0, 0.1 * 0.5f64.powi(i)).unwrap()))
        .collect();
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn bdf2_is_second_order() {
    let (p, spec) = problem(ProblemKind::LinearForced);
    let o = orders(|g| final_error(&p, &integrate_bdf2(&p, &spec.y0, g, &cfg()).unwrap()));
    assert!(o.iter().all(|x| (1.85..=2.15).contains(x)), "{o:?}");
}

#[test]
fn oneleg_with_be_startup_is_second_order() {
    let (p, spec) = problem(ProblemKind::LinearForced);
    let o = orders(|g| {
        let tr = integrate_be(&p, &spec.y0, g, &cfg()).unwrap();
        let y1 = tr.records[0].y.clone();
        final_error(
            &p,
            &integrate_oneleg_lmm(&p, &spec.y0, &y1, g, NuPolicy::Fixed(2.0 / 3.0), &cfg()).unwrap(),
        )
    });
    assert!(o.iter().all(|x| (1.85..=2.15).contains(x)), "{o:?}");
}

#[test]
fn other_fixed_nu_stays_first_order() {
    let (p, spec) = problem(ProblemKind::LinearForced);
    let o = orders(|g| {
        final_error(
            &p,
            &integrate_be_filtered(&p, &spec.y0, g, NuPolicy::Fixed(0.3), &cfg()).unwrap(),
        )
    });
    assert!(o.iter().all(|x| (0.9..=1.1).contains(x)), "{o:?}");
}

#[test]
fn quasiperiodic_grid_equivalence_on_long_runs() {
    let (p, spec) = problem(ProblemKind::Quasiperiodic);
    let g = TimeGrid::from_ratios(0.0, 20.0, 0.05, &[1.5, 0.8, 1.25, 0.7, 1.2]).unwrap();
    let bf = integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::SecondOrder, &cfg()).unwrap();
    let ol = integrate_oneleg_lmm(&p, &spec.y0, &bf.records[0].y, &g, NuPolicy::SecondOrder, &cfg()).unwrap();
    for (a, b) in bf.records.iter().zip(&ol.records) {
        assert!((&a.y - &b.y).amax() < 1e-9 * a.y.amax().max(1.0), "t = {}", a.t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_step_and_oneleg_agree(seed in 0u64..10_000, nu in -0.4f64..1.4, lambda in -50.0f64..-0.1) {
        let p = OdeProblem::new("nonlinear", 2, move |t, y| {
            StateVec::from_vec(vec![lambda * y[0] + y[1] * y[1] * 0.1, -y[1] + (t * 3.0).cos() - 0.2 * y[0] * y[1]])
        });
        let y0 = StateVec::from_vec(vec![1.0, -0.5]);
        let g = TimeGrid::random_ratios(0.0, 1.0, 100, seed).unwrap();
        let policy = NuPolicy::Fixed(nu);
        prop_assume!(policy.validate_for(&g).is_ok());
        let bf = integrate_be_filtered(&p, &y0, &g, policy, &cfg()).unwrap();
        let ol = integrate_oneleg_lmm(&p, &y0, &bf.records[0].y, &g, policy, &cfg()).unwrap();
        prop_assert!(bf.is_completed() && ol.is_completed());
        for (a, b) in bf.records.iter().zip(&ol.records) {
            prop_assert!((&a.y - &b.y).amax() <= 1e-9, "t = {}", a.t);
        }
    }

    #[test]
    fn stiff_decay_is_bounded(exp in 2.0f64..6.0, im in 0.0f64..1.0) {
        // Re lambda k < 0 with |lambda k| up to 1e6: the magnitude never exceeds
        // the initial value and dies out
        let lk = -(10f64.powf(exp));
        let lambda = (lk, lk * im);
        let p = OdeProblem::new("rotating-decay", 2, move |_, y| {
            StateVec::from_vec(vec![lambda.0 * y[0] - lambda.1 * y[1], lambda.1 * y[0] + lambda.0 * y[1]])
        })
        .with_jacobian(move |_, _| Matrix::from_row_slice(2, 2, &[lambda.0, -lambda.1, lambda.1, lambda.0]));
        let y0 = StateVec::from_vec(vec![1.0, 0.0]);
        let g = TimeGrid::constant(0.0, 60.0, 1.0).unwrap();
        let tr = integrate_be_filtered(&p, &y0, &g, NuPolicy::Fixed(2.0 / 3.0), &cfg()).unwrap();
        prop_assert!(tr.is_completed());
        for r in &tr.records {
            prop_assert!(r.y.norm() <= 1.0 + 1e-12);
        }
        prop_assert!(tr.final_state().norm() < 1e-10);
    }
}

#[test]
fn sussman_approaches_equilibrium() {
    let (p, spec) = problem(ProblemKind::Sussman);
    let target = StateVec::from_vec(vec![0.0, 1.0]);
    let g = TimeGrid::constant(0.0, 20.0, 0.1).unwrap();
    for tr in [
        integrate_be(&p, &spec.y0, &g, &cfg()).unwrap(),
        integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::Fixed(2.0 / 3.0), &cfg()).unwrap(),
        integrate_bdf2(&p, &spec.y0, &g, &cfg()).unwrap(),
    ] {
        assert!((tr.final_state() - &target).amax() < 1e-6, "{}", tr.method);
    }
    // larger steps converge at the method's own contraction rate
    for k in [0.5, 1.0] {
        let g = TimeGrid::constant(0.0, 60.0, k).unwrap();
        let tr = integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::Fixed(2.0 / 3.0), &cfg()).unwrap();
        assert!((tr.final_state() - &target).amax() < 1e-6, "k = {k}");
    }
}

#[test]
fn pendulum_be_loses_amplitude_faster() {
    let (p, spec) = problem(ProblemKind::Pendulum);
    let g = TimeGrid::constant(0.0, 60.0, 0.1).unwrap();
    let late_amplitude = |tr: &Trajectory| {
        tr.records
            .iter()
            .filter(|r| r.t >= 40.0)
            .map(|r| r.y[0].abs())
            .fold(0.0, f64::max)
    };
    let be = integrate_be(&p, &spec.y0, &g, &cfg()).unwrap();
    let bf = integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::Fixed(2.0 / 3.0), &cfg()).unwrap();
    assert!(late_amplitude(&be) < late_amplitude(&bf));
}

#[test]
fn lorenz_reference_is_finite() {
    let (p, spec) = problem(ProblemKind::Lorenz);
    let tr = integrate_rkf45(&p, &spec.y0, (0.0, 5.0), 1e-10).unwrap();
    assert!(tr.is_completed());
    assert_eq!(tr.final_time(), 5.0);
    assert!(tr.records.iter().all(|r| r.y.iter().all(|v| v.is_finite())));
}

#[test]
fn adaptive_beats_fixed_on_quasiperiodic() {
    let (p, spec) = problem(ProblemKind::Quasiperiodic);
    let tr = integrate_adaptive(&p, &spec.y0, (0.0, 20.0), &AdaptiveConfig::new(0.1, 0.1), &cfg()).unwrap();
    assert!(tr.is_completed());
    assert_eq!(tr.final_time(), 20.0);
    let fixed = integrate_be_filtered(
        &p,
        &spec.y0,
        &TimeGrid::constant(0.0, 20.0, 0.1).unwrap(),
        NuPolicy::Fixed(2.0 / 3.0),
        &cfg(),
    )
    .unwrap();
    assert!(tr.max_error(&p).unwrap() < fixed.max_error(&p).unwrap());
    let mut ks: Vec<f64> = tr.records.iter().map(|r| r.k).collect();
    ks.dedup();
    assert!(ks.len() > 1);
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let (p, spec) = problem(ProblemKind::Lorenz);
    let g = TimeGrid::random_ratios(0.0, 2.0, 300, 5).unwrap();
    let a = integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::SecondOrder, &cfg()).unwrap();
    let b = integrate_be_filtered(&p, &spec.y0, &g, NuPolicy::SecondOrder, &cfg()).unwrap();
    assert_eq!(a, b);
}
