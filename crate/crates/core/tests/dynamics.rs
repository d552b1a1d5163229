use rand::Rng as _;
use sbm_deepwalk::experiments::{run_sweep, Pipeline, RunOutcome};
use sbm_deepwalk::linalg::Matrix;
use sbm_deepwalk::rng::seeded;
use sbm_deepwalk::trainer::{init_state, Termination};
use sbm_deepwalk::{
    block_values, build_linear_update, error_term_norm, expected_cooccurrence, linear_step,
    run_deepwalk, run_linearized, CoocScaling, EmbeddingState, SbmParams, Stopping, TrainConfig,
    Trajectory,
};

fn random_matrix(rows: usize, cols: usize, rng: &mut sbm_deepwalk::rng::Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

#[test]
fn error_term_is_quadratic_in_the_embedding_norm() {
    let mut rng = seeded(11);
    let eps = 0.1;
    for trial in 0..1000 {
        let n = 5 + trial % 40;
        let d = 1 + trial % 3;
        // Symmetric, non-negative, row sums at most 2.
        let a = Matrix::from_fn(n, n, |_, _| rng.random::<f64>());
        let mut c = &a + a.transpose();
        let top = c.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
        c *= 2.0 * rng.random::<f64>() / top;
        let mut x = random_matrix(n, d, &mut rng);
        let mut y = random_matrix(n, d, &mut rng);
        let norm = (x.norm_squared() + y.norm_squared()).sqrt();
        let radius = eps * rng.random::<f64>();
        x *= radius / norm;
        y *= radius / norm;
        let e = error_term_norm(&c, &x, &y).unwrap();
        assert!(e <= 4.0 * eps * eps, "trial {trial}: {e}");
    }
}

/// Growth control: below the threshold, one step grows `‖w‖` by less than
/// a factor `1 + 2η`.
fn assert_growth_control(traj: &Trajectory, eta: f64) {
    for pair in traj.records.windows(2) {
        if pair[0].norm_w <= traj.threshold {
            assert!(
                pair[1].norm_w < (1.0 + 2.0 * eta) * pair[0].norm_w,
                "iteration {}: {} -> {}",
                pair[0].iter,
                pair[0].norm_w,
                pair[1].norm_w
            );
        }
    }
}

#[test]
fn population_run_stops_just_past_the_threshold() {
    for (n, k, d) in [(120, 3, 1), (200, 2, 2), (150, 3, 3)] {
        let params = SbmParams::new(n, k, 0.4, 0.1).unwrap();
        let c = expected_cooccurrence(&params, 10, 5)
            .unwrap()
            .rescaled(CoocScaling::RowMean(2.0));
        let cfg = TrainConfig {
            dim: d,
            seed: n as u64,
            ..TrainConfig::new(0.01)
        };
        let (traj, state) = run_deepwalk(&c.values, &cfg, None).unwrap();
        assert_eq!(traj.termination, Termination::Threshold);
        let eps_delta = traj.threshold;
        assert!(state.norm() >= eps_delta);
        assert!(state.norm() <= (1.0 + 2.0 * cfg.eta) * eps_delta);
        assert!((4.0 * eps_delta * eps_delta) < 1.0);
        assert_growth_control(&traj, cfg.eta);
    }
}

#[test]
fn linear_iterates_match_matrix_powers_and_growth_rate() {
    let params = SbmParams::new(50, 2, 0.5, 0.1).unwrap();
    let eta = 0.05;
    let c = expected_cooccurrence(&params, 6, 3).unwrap();
    let lin = build_linear_update(&c, eta, 2).unwrap();
    let gamma = block_values(&params, 6, 3).unwrap().gamma;
    let cfg = TrainConfig {
        dim: 2,
        seed: 4,
        ..TrainConfig::new(eta)
    };
    let w0 = init_state(50, &cfg).unwrap();
    let lmat = lin.lmat();
    let mut state = w0.clone();
    let mut direct = w0.stacked();
    for t in 1..=20 {
        state = linear_step(&state, &lin).unwrap();
        direct = &lmat * direct;
        assert!((state.stacked() - &direct).abs().max() <= 1e-10);
        assert!(state.norm() <= (1.0 + 4.0 * eta * gamma).powi(t) * w0.norm());
    }
    assert_eq!(state.iter, 20);
}

#[test]
fn nonlinear_and_linear_runs_share_their_start() {
    let params = SbmParams::new(60, 3, 0.5, 0.1).unwrap();
    let c = expected_cooccurrence(&params, 10, 5).unwrap();
    let cfg = TrainConfig {
        stopping: Stopping::FixedIters(5),
        record_states: true,
        seed: 8,
        ..TrainConfig::new(1.0 / 60.0)
    };
    let lin = build_linear_update(&c, cfg.eta, 3).unwrap();
    let (a, _) = run_deepwalk(&c.values, &cfg, None).unwrap();
    let (b, _) = run_linearized(&lin, &cfg, None).unwrap();
    let first = |t: &Trajectory| -> EmbeddingState { t.states[0].clone() };
    assert_eq!(first(&a).stacked(), first(&b).stacked());
}

fn sweep(n: usize) -> Vec<RunOutcome> {
    let k = if n.is_multiple_of(3) { 3 } else { 2 };
    let pipe = Pipeline::new(SbmParams::new(n, k, 0.4, 0.1).unwrap());
    let seeds: Vec<u64> = (0..10).collect();
    run_sweep(&pipe, &TrainConfig::new(0.01), &seeds).unwrap()
}

/// Projection residual at the stopping time, `‖w − Πw‖ ≤ 4‖w‖/Δ`, and the
/// direction of `z = Πw` over the run.
#[test]
fn residual_and_signal_direction_along_sampled_runs() {
    for n in [200, 600] {
        let runs = sweep(n);
        let mut residual_ok = 0;
        let mut angles = Vec::new();
        for r in &runs {
            assert_growth_control(&r.trajectory, r.config.eta);
            let delta = r.config.delta_for(n);
            let bound = 4.0 * r.state.norm() / delta;
            residual_ok += usize::from(r.final_residual() <= bound);
            angles.push(r.z_angle());
        }
        let angle_ok = angles.iter().filter(|&&a| a <= 0.1).count();
        eprintln!("n={n}: residual bound in {residual_ok}/10, angles {angles:.3?}");
        assert!(
            residual_ok >= 9,
            "n={n}: residual bound held in {residual_ok}/10"
        );
        if n == 600 {
            assert!(
                angle_ok >= 9,
                "angle(z_t_f, z_0) <= 0.1 in {angle_ok}/10: {angles:?}"
            );
        }
    }
}
