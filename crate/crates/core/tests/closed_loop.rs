use ddlqg::controller::{run_closed_loop, Controller};
use ddlqg::dd_kalman::{estimate_state, filter_bank_from_data, DataFilterBank};
use ddlqg::dd_lqg::*;
use ddlqg::dd_lqr::{canonical_initial_states, lqr_gain_from_data};
use ddlqg::linalg;
use ddlqg::oracle::*;
use ddlqg::system::*;
use ddlqg::window::EstimationWindow;
use nalgebra::{DMatrix, DVector};

fn plant() -> (LinearSystem, CostWeights) {
    (LinearSystem::benchmark(), CostWeights::benchmark())
}

fn trained(n: usize, seed: u64) -> (DMatrix<f64>, DataFilterBank) {
    let (sys, w) = plant();
    let spec = ExperimentInputSpec::new(DMatrix::identity(1, 1), 50, n, seed).unwrap();
    let ds = generate_open_loop_dataset(&sys, &spec).unwrap();
    let k = lqr_gain_from_data(&ds, &w, &canonical_initial_states(2), None)
        .unwrap()
        .k;
    (k, filter_bank_from_data(&ds).unwrap())
}

#[test]
fn episode_inputs_are_gain_times_filter_estimate() {
    let (sys, _) = plant();
    let (k, bank) = trained(2_000, 1);
    let ep = run_dd_lqg_episode(&sys, &k, &bank, 77).unwrap();
    for t in 0..=50 {
        let window = EstimationWindow::from_records(t, &ep.inputs, &ep.outputs);
        let u = &k * estimate_state(&bank, &window).unwrap();
        assert!((u - ep.inputs.column(t)).abs().max() < 1e-12, "t = {t}");
    }
}

#[test]
fn collection_replays_from_seed() {
    let (sys, _) = plant();
    let (k, bank) = trained(1_000, 2);
    let a = collect_closed_loop_dataset(&sys, &k, &bank, 10, 5).unwrap();
    let b = collect_closed_loop_dataset(&sys, &k, &bank, 10, 5).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.y, b.y);
    let c = collect_closed_loop_dataset(&sys, &k, &bank, 10, 6).unwrap();
    assert_ne!(a.u, c.u);
}

#[test]
fn window_matrix_has_full_row_rank_for_fifty_episodes() {
    let (sys, w) = plant();
    let k = lqr_gain(&sys, &w).unwrap().k;
    let kf = kalman_oracle(&sys, 50).unwrap();
    for seed in 0..20 {
        let cl = collect_closed_loop_dataset(&sys, &k, &kf, 50, seed).unwrap();
        let windows = linalg::vstack(&[&cl.u_window, &cl.y_window]);
        assert_eq!(linalg::rank(&windows), 4, "seed {seed}");
    }
}

#[test]
fn oracle_static_gain_cost_matches_recursive_controller() {
    let (sys, w) = plant();
    let lqr = lqr_gain(&sys, &w).unwrap();
    let exact = lqg_static_gain(&sys, &w).unwrap();
    let recursive = evaluate_lqg_cost(
        &sys,
        &w,
        || Box::new(RecursiveLqg::new(&sys, lqr.k.clone(), FilterKind::TimeVarying)) as Box<dyn Controller>,
        500,
        200,
        &InitialState::Random,
        11,
    )
    .unwrap();
    let static_law = evaluate_lqg_cost(
        &sys,
        &w,
        || {
            let warm = Box::new(RecursiveLqg::new(&sys, lqr.k.clone(), FilterKind::TimeVarying));
            Box::new(ddlqg::controller::StaticGainController::new(exact.k.clone(), 2, warm)) as Box<dyn Controller>
        },
        500,
        200,
        &InitialState::Random,
        11,
    )
    .unwrap();
    let se = recursive.std_err.max(static_law.std_err);
    assert!(
        (recursive.mean - static_law.mean).abs() < 3.0 * se,
        "{recursive:?} vs {static_law:?}"
    );
}

#[test]
fn data_driven_static_gain_stabilizes() {
    let (sys, _) = plant();
    let (k, bank) = trained(10_000, 3);
    let cl = collect_closed_loop_dataset(&sys, &k, &bank, 50, 4).unwrap();
    let est = lqg_gain_from_data(&cl, &k, &bank).unwrap();
    for seed in 0..20 {
        let (x0, noise) = episode_conditions(&sys, 500, 1_000 + seed).unwrap();
        let warm = Box::new(SeparatedLqg::new(k.clone(), &bank));
        let run = run_static_lqg(&est.k, 2, &sys, warm, &x0, &noise).unwrap();
        let tail = run.states.columns(400, 101).abs().max();
        assert!(tail < 100.0, "seed {seed}: {tail}");
    }
}

#[test]
fn static_gain_shape_and_rank_error() {
    let (sys, w) = plant();
    let k = lqr_gain(&sys, &w).unwrap().k;
    let kf = kalman_oracle(&sys, 20).unwrap();
    let cl = collect_closed_loop_dataset(&sys, &k, &kf, 6, 1).unwrap();
    let est = lqg_gain_from_data(&cl, &k, &kf).unwrap();
    assert_eq!(est.k.shape(), (1, 4));

    let mut cl0 = cl.clone();
    cl0.u_window.fill(0.0);
    cl0.y_window.fill(0.0);
    assert!(matches!(
        lqg_gain_from_data(&cl0, &k, &kf),
        Err(ddlqg::Error::WindowRankDeficient { rows: 4, .. })
    ));
}

#[test]
fn recursive_lqg_matches_oracle_bank_with_zero_initial_state() {
    let (sys, w) = plant();
    let k = lqr_gain(&sys, &w).unwrap().k;
    let kf = kalman_oracle(&sys, 40).unwrap();
    let noise = NoiseRealization::draw(&sys, 40, 3).unwrap();
    let x0 = DVector::zeros(2);
    let ep = run_dd_lqg_episode_with(&sys, &k, &kf, &x0, &noise).unwrap();
    let mut rec = RecursiveLqg::new(&sys, k, FilterKind::TimeVarying);
    let reference = run_closed_loop(&sys, &mut rec, &x0, &noise).unwrap();
    assert!((ep.inputs - reference.inputs).abs().max() < 1e-10);
}
