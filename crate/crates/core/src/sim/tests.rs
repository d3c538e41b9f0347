use super::*;
use crate::controller::Variant;

fn far_world(config: &Config, mode: Mode) -> World {
    let plant = Plant::new(config, mode);
    let q = [Vector3::new(0.3, -0.6, 0.2), Vector3::new(-0.2, 0.5, -0.1)];
    World {
        robots: [plant.rest_state(0, q[0]), plant.rest_state(1, q[1])],
        box_state: BoxState::at_rest(Vector2::new(0.0, 0.5), 0.1),
    }
}

#[test]
fn detached_box_falls_ballistically() {
    let mut config = Config::default();
    config.box_params.gravity = -9.81;
    let plant = Plant::new(&config, Mode::Rigid);
    let mut w = far_world(&config, Mode::Rigid);
    w.box_state.dp = Vector2::new(0.3, 1.0);
    w.box_state.dtheta = 2.0;
    let b0 = w.box_state;
    let tau = [Vector3::zeros(); 2];
    let h = 1e-4;
    for _ in 0..1000 {
        w = plant.step(&w, &tau, h);
    }
    let t = 0.1;
    let b = w.box_state;
    let g = -9.81;
    assert!((b.p.x - (b0.p.x + 0.3 * t)).abs() < 1e-8);
    assert!((b.p.y - (b0.p.y + 1.0 * t + 0.5 * g * t * t)).abs() < 1e-8);
    assert!((b.dp.y - (1.0 + g * t)).abs() < 1e-8);
    assert!((b.theta - (b0.theta + 2.0 * t)).abs() < 1e-8);
}

#[test]
fn free_arm_conserves_energy() {
    let mut config = Config::default();
    for r in config.robots.iter_mut() {
        r.joint_damping = [0.0; 3];
    }
    let plant = Plant::new(&config, Mode::Rigid);
    let mut w = far_world(&config, Mode::Rigid);
    w.robots[0].dq = Vector3::new(1.0, -2.0, 3.0);
    w.robots[0].motor_dq = w.robots[0].dq;
    let energy =
        |w: &World| crate::dynamics::mechanical_energy(&config.robots[0], &w.robots[0].q, &w.robots[0].dq, 0.0);
    let e0 = energy(&w);
    for _ in 0..10_000 {
        w = plant.step(&w, &[Vector3::zeros(); 2], 1e-4);
    }
    assert!(((energy(&w) - e0) / e0).abs() < 1e-6);
}

fn short_config(horizon: f64) -> Config {
    let mut c = Config::default();
    c.sim.horizon = horizon;
    c
}

fn baseline_scenario(mode: Mode) -> Scenario {
    Scenario {
        variant: Variant::NoImpactMap,
        mode,
        ..Scenario::default()
    }
}

#[test]
fn halving_the_step_converges() {
    let mut config = short_config(0.3);
    let scenario = baseline_scenario(Mode::Rigid);
    let a = run_episode(&config, &scenario, None).unwrap();
    config.sim.dt_integrator = 5e-5;
    let b = run_episode(&config, &scenario, None).unwrap();
    let (ra, rb) = (a.rows.last().unwrap(), b.rows.last().unwrap());
    for i in 0..2 {
        let rel = (ra.robots[i].q - rb.robots[i].q).norm() / rb.robots[i].q.norm();
        assert!(rel < 1e-5, "robot {i}: {rel}");
    }
}

/// With the joint-torque loop the stiff limit is the rigid arm plus an
/// apparent rotor inertia `B/(1+K_T)` and a `K_S/(1+K_T)` torque lag, so the
/// rotor is made light and the rate feedback dropped; the step is refined
/// for the resulting fast transmission mode.
#[test]
fn stiff_transmission_approaches_rigid() {
    let mut config = short_config(0.2);
    config.flexible.stiffness = 1e6;
    config.flexible.motor_inertia = 3e-4;
    config.flexible.torque_rate_gain = 0.0;
    config.sim.dt_integrator = 1e-5;
    let rigid = run_episode(&config, &baseline_scenario(Mode::Rigid), None).unwrap();
    let flex = run_episode(&config, &baseline_scenario(Mode::Flexible), None).unwrap();
    for (a, b) in rigid.rows.iter().zip(&flex.rows) {
        assert_eq!(a.phase, Phase::Ante);
        for i in 0..2 {
            let d = (a.ee[i].p - b.ee[i].p).norm();
            assert!(d < 1e-3, "t {} robot {i}: {d}", a.t);
        }
    }
}

#[test]
fn episodes_are_deterministic() {
    let config = short_config(0.2);
    let scenario = baseline_scenario(Mode::Flexible);
    let a = run_episode(&config, &scenario, None).unwrap();
    let b = run_episode(&config, &scenario, None).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn csv_round_trip_is_exact() {
    let config = short_config(0.05);
    let log = run_episode(&config, &baseline_scenario(Mode::Rigid), None).unwrap();
    let rows = EpisodeLog::rows_from_csv(&log.to_csv()).unwrap();
    assert_eq!(rows, log.rows);
}

#[test]
fn control_period_must_be_a_multiple() {
    let sim = SimConfig {
        dt_integrator: 3e-4,
        ..SimConfig::default()
    };
    assert!(sim.validate(1e-3).is_err());
    assert_eq!(SimConfig::default().substeps(1e-3).unwrap(), 10);
}

/// Box momentum change against the integrated contact forces, written from
/// the face geometry: `−λ_N n + λ_T t` on the box at each contact point.
#[test]
fn box_momentum_matches_contact_impulse() {
    let config = Config::default();
    let plant = Plant::new(&config, Mode::Rigid);
    let start = crate::predictor::sample_impact_configs(&config, &[[0.03, -0.02]]).unwrap()[0];
    let frames = |w: &World| -> [ArmFrame; 2] {
        std::array::from_fn(|i| ArmFrame::new(&config.robots[i], &w.robots[i].q, &w.robots[i].dq))
    };
    let wrench = |w: &World| -> (Vector3<f64>, [f64; NUM_CONTACTS]) {
        let kin = contact_kinematics(&config.robots, &frames(w), &config.box_params, &w.box_state);
        let mut total = Vector3::zeros();
        let mut normals = [0.0; NUM_CONTACTS];
        for (k, c) in kin.iter().enumerate() {
            let p = ContactPoint::resolve(c.gap, c.gap_rate, c.slip_rate, &config.contact);
            let f = -p.lambda_n * c.normal + p.lambda_t * c.tangent;
            let r = c.point - w.box_state.p;
            total += Vector3::new(f.x, f.y, r.x * f.y - r.y * f.x);
            normals[k] = p.lambda_n;
        }
        (total, normals)
    };
    let momentum = |w: &World| {
        let b = &w.box_state;
        Vector3::new(
            config.box_params.mass * b.dp.x,
            config.box_params.mass * b.dp.y,
            config.box_params.inertia * b.dtheta,
        )
    };
    let h = 1e-5;
    let tau = [Vector3::zeros(); 2];
    let mut w = start.world;
    let (mut f_prev, mut n_prev) = wrench(&w);
    let mut impulse = Vector3::zeros();
    let (mut peak, mut largest_step): (f64, f64) = (0.0, 0.0);
    for _ in 0..5000 {
        w = plant.step(&w, &tau, h);
        let (f, n) = wrench(&w);
        impulse += 0.5 * h * (f_prev + f);
        for k in 0..NUM_CONTACTS {
            peak = peak.max(n[k]);
            largest_step = largest_step.max((n[k] - n_prev[k]).abs());
        }
        (f_prev, n_prev) = (f, n);
    }
    let change = momentum(&w) - momentum(&start.world);
    assert!(impulse.norm() > 0.05, "no collision happened: {impulse}");
    assert!(
        (change - impulse).amax() < 1e-3 * impulse.amax(),
        "{change} vs {impulse}"
    );
    // Normal forces rise and fall continuously at this resolution.
    assert!(largest_step < 0.05 * peak, "λ_N step {largest_step} vs peak {peak}");
}
