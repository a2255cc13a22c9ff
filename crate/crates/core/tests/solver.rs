use upperstage::dynamics::ThrustProfile;
use upperstage::error::Error;
use upperstage::orbital::{shape_from_apsides, shape_from_state, PolarKinematics};
use upperstage::performance::estimate;
use upperstage::pmp_verify::PmpThresholds;
use upperstage::solver::*;

fn linear() -> SolveResult {
    solve(&Scenario::default()).unwrap().result
}

#[test]
fn linear_column_of_the_table() {
    let r = linear();
    let [t1, t2] = r.profile.params();
    assert!((r.m_f - 1422.5).abs() < 0.5, "{}", r.m_f);
    assert!((r.t_f - 1308.5).abs() < 2.0, "{}", r.t_f);
    assert!((r.phi_f_deg - 69.7).abs() < 0.3, "{}", r.phi_f_deg);
    assert!((t1 - 26_467.0).abs() < 50.0, "{t1}");
    assert!((t2 + 10.976).abs() < 0.05, "{t2}");
    assert!((r.dv_gravity - 555.0).abs() < 3.0);
    assert!((r.dv_aoa - 27.0).abs() < 2.0);
    assert!(r.iterations <= 25);
    assert!(r.residual.iter().all(|x| x.abs() < 10.0));
    assert!(r.m_f < 10_000.0);
    assert!(r.losses.impulse_identity_residual().abs() < 0.1);
    assert!(r.losses.dv_aoa < 0.1 * r.losses.dv_gravity);
}

#[test]
fn converged_parameters_round_to_the_printed_ones() {
    let [t1, t2] = linear().profile.params();
    assert_eq!(format!("{:.3}", t1 / 1000.0), "26.467");
    assert_eq!(format!("{t2:.3}"), "-10.976");
    // At printed precision the slope alone shifts the apogee by about 1.5 km.
    let r = shoot([26_467.0, -10.976], &Scenario::default()).unwrap();
    assert!(r[0].abs() > 100.0 && r[0].abs() < 5000.0, "{r:?}");
}

#[test]
fn bilevel_column_at_750_s() {
    let sc = Scenario::default().with_profile(ProfileKind::Bilevel { switch_after: 750.0 });
    let r = solve(&sc).unwrap().result;
    let [t1, t2] = r.profile.params();
    assert!((t1 - 23_378.0).abs() < 50.0, "{t1}");
    assert!((t2 - 14_015.0).abs() < 50.0, "{t2}");
    assert!((r.m_f - 1422.5).abs() < 0.5);
    assert!((r.t_f - 1299.5).abs() < 2.0);
    assert!((r.phi_f_deg - 69.3).abs() < 0.3);
    assert!((r.dv_gravity - 558.0).abs() < 3.0);
    assert!((r.dv_aoa - 25.0).abs() < 2.0);
}

#[test]
fn final_mass_is_nearly_flat_across_profiles() {
    let sc = Scenario::default();
    let mut masses = vec![linear().m_f];
    for (_, r) in solve_switch_times(&sc, &[250.0, 500.0, 750.0]) {
        masses.push(r.unwrap().m_f);
    }
    let lo = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.3, "{masses:?}");
}

#[test]
fn analytic_estimate_within_two_percent() {
    let sc = Scenario::default();
    let est = estimate(&sc.initial, sc.mass, &sc.target, sc.propulsion.exhaust_velocity, None, &sc.constants).unwrap();
    let m_f = linear().m_f;
    assert!((est.m_f_est - m_f).abs() / m_f < 0.02);
}

#[test]
fn solved_trajectory_satisfies_pointwise_conditions() {
    let r = linear();
    let thr = PmpThresholds::default();
    assert!(r.pmp.pointwise.max_h0_norm < thr.h0);
    assert!(r.pmp.pointwise.max_phi_norm <= thr.phi);
    let tc = r.pmp.terminal.unwrap();
    assert!(tc.gamma_f.abs() < 1e-8 && tc.theta_dot_error() < 1e-4);
}

#[test]
fn jacobian_entries_stable_under_step_halving() {
    let sc = Scenario::default();
    let p = linear().profile.params();
    let r0 = shoot(p, &sc).unwrap();
    let floors = [1.0, 1e-3];
    for j in 0..2 {
        let h = (sc.settings.fd_step * p[j].abs()).max(floors[j]);
        let col = |step: f64| {
            let mut q = p;
            q[j] += step;
            let r = shoot(q, &sc).unwrap();
            [(r[0] - r0[0]) / step, (r[1] - r0[1]) / step]
        };
        let (a, b) = (col(h), col(0.5 * h));
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 0.02 * b[i].abs(), "column {j}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn far_too_little_thrust_cannot_reach_the_target() {
    let sc = Scenario::default();
    let traj = sc.propagate([2000.0, 0.0]).unwrap();
    let (_, rp) = shape_from_state(&traj.last().state, &sc.constants).unwrap().apsis_radii().unwrap();
    assert!(rp < sc.constants.earth_radius);
    assert!(shoot([2000.0, 0.0], &sc).unwrap()[0] < -1e7);
    assert!(matches!(shoot([20_000.0, -100.0], &sc), Err(Error::NonPositiveThrust { .. })));
}

#[test]
fn target_already_reached_by_a_tiny_burn() {
    // Start just before perigee of the transfer orbit, slightly descending.
    let base = Scenario::default();
    let c = base.constants;
    let gto = base.target;
    let gamma: f64 = -0.01;
    let sin_gamma = |r: f64| {
        let v = (2.0 * (gto.energy + c.mu / r)).sqrt();
        -(1.0 - (gto.ang_momentum / (r * v)).powi(2)).max(0.0).sqrt()
    };
    let (_, rp) = gto.apsis_radii().unwrap();
    let (mut a, mut b) = (rp, 1.1 * rp);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (sin_gamma(m) - gamma.sin()) > 0.0 {
            a = m
        } else {
            b = m
        }
    }
    let r = 0.5 * (a + b);
    let mut sc = base.clone();
    sc.initial = PolarKinematics { r, v: (2.0 * (gto.energy + c.mu / r)).sqrt(), gamma, phi: 0.0 };
    let tiny = sc.propagate([200.0, 0.0]).unwrap();
    sc.target = shape_from_state(&tiny.last().state, &c).unwrap();
    sc.guess = Some([150.0, 0.0]);

    let sol = solve(&sc).unwrap().result;
    assert!(sol.t_f < 20.0, "{}", sol.t_f);
    assert!((sol.t_f - tiny.t_final()).abs() < 0.1);
    assert!(sol.residual.iter().all(|x| x.abs() < 10.0));
}

#[test]
fn higher_perigee_costs_mass() {
    let base = Scenario::default();
    let masses: Vec<f64> = [250e3, 300e3, 350e3]
        .iter()
        .map(|alt| {
            let mut sc = base.clone();
            sc.target = shape_from_apsides(36_000e3, *alt, &sc.constants).unwrap();
            solve(&sc).unwrap().result.m_f
        })
        .collect();
    assert!(masses[0] > masses[1] && masses[1] > masses[2], "{masses:?}");
}

#[test]
fn energy_momentum_residual_agrees() {
    let mut sc = Scenario::default();
    sc.settings.residual = ResidualKind::EnergyMomentum;
    let r = solve(&sc).unwrap().result;
    assert!((r.m_f - linear().m_f).abs() < 0.05);
}

#[test]
fn iteration_cap_reports_best_iterate() {
    let mut sc = Scenario::default();
    sc.settings.max_iter = 1;
    match solve(&sc) {
        Err(Error::NonConvergence { iterations, best_params, .. }) => {
            assert_eq!(iterations, 1);
            assert!(best_params[0] > 0.0);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn sweep_records_reach_and_failures() {
    let sc = Scenario::default();
    let p = linear().profile.params();
    let pts = [
        SweepPoint { params: p, switch_after: None },
        SweepPoint { params: [-5.0, 0.0], switch_after: None },
        SweepPoint { params: [20_000.0, -100.0], switch_after: None },
    ];
    let recs = sweep(&sc, &pts);
    assert_eq!(recs.len(), 3);
    match &recs[0].outcome {
        SweepOutcome::Reached(r) => {
            let (ra, rp) = sc.target.apsis_radii().unwrap();
            assert!((r.apogee_radius - ra).abs() < 10.0 && (r.perigee_radius - rp).abs() < 10.0);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(&recs[1].outcome, SweepOutcome::Failed { reason, .. } if reason == "invalid_input"));
    assert!(matches!(&recs[2].outcome, SweepOutcome::Failed { reason, .. } if reason == "non_positive_thrust"));
    assert_eq!(recs, sweep(&sc, &pts));
}

#[test]
fn bilevel_switch_grid_sweep_uses_each_switch_time() {
    let sc = Scenario::default().with_profile(ProfileKind::Bilevel { switch_after: 500.0 });
    let recs = sweep(&sc, &grid(&[26_000.0], &[14_000.0], &[250.0, 750.0]));
    let t_f: Vec<f64> = recs
        .iter()
        .map(|r| match r.outcome {
            SweepOutcome::Reached(x) => x.t_f,
            _ => panic!("{r:?}"),
        })
        .collect();
    assert_ne!(t_f[0], t_f[1]);
    assert_eq!(recs[1].point.switch_after, Some(750.0));
}

#[test]
fn switch_time_search_does_not_lose_mass() {
    let sc = Scenario::default();
    let (t1, best) = optimize_switch_time(&sc, 250.0, 750.0, 20.0).unwrap();
    assert!((250.0..=750.0).contains(&t1));
    assert!(matches!(best.profile, ThrustProfile::Bilevel { .. }));
    for (_, r) in solve_switch_times(&sc, &[500.0, 750.0]) {
        assert!(best.m_f >= r.unwrap().m_f - 0.05);
    }
    assert!(optimize_switch_time(&sc, 750.0, 250.0, 1.0).is_err());
}
