//! Numerical checks of the Pontryagin necessary conditions along a trajectory.
//!
//! Costates come from the closed forms in [`crate::steering`] with the
//! normalization `|p_v| = 1`, `p_m = v_e / m`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::integrator::{initial_step, Dopri5, OdeSystem};
use crate::dynamics::{Propulsion, Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::orbital::{circular_speed, Apsis, Constants};
use crate::steering::{angular_rate, reconstruct_costates, thrust_direction, CostateReconstruction};

/// Sign given to the steering-law rate magnitude when it enters the closed-form `p_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSign {
    /// `omega = +sqrt(mu/r^3 (1 - 3 sin^2 theta))`, i.e. `phi_dot - theta_dot`.
    Positive,
    /// `omega = -sqrt(...)`, i.e. `theta_dot - phi_dot`.
    Negated,
}

impl OmegaSign {
    pub fn factor(self) -> f64 {
        match self {
            OmegaSign::Positive => 1.0,
            OmegaSign::Negated => -1.0,
        }
    }
}

/// `H = H0 + T Phi` and its parts at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTerms {
    pub h: f64,
    pub h0: f64,
    pub phi: f64,
}

fn costates_at(point: &TrajectoryPoint, prop: &Propulsion, c: &Constants, sign: OmegaSign) -> CostateReconstruction {
    let rate = angular_rate(point.polar.r, point.theta, c).unwrap_or(f64::NAN);
    reconstruct_costates(point.theta, point.polar.phi, sign.factor() * rate, point.state.mass, prop.exhaust_velocity)
}

fn gravity(r: &Vector2<f64>, c: &Constants) -> Vector2<f64> {
    let rn = r.norm();
    -c.mu / (rn * rn * rn) * r
}

/// `dg/dr = mu/r^3 (3 r_hat r_hat^T - I)`.
fn gravity_gradient(r: &Vector2<f64>, c: &Constants) -> Matrix2<f64> {
    let rn = r.norm();
    let u = r / rn;
    c.mu / (rn * rn * rn) * (3.0 * u * u.transpose() - Matrix2::identity())
}

pub fn hamiltonian_at(point: &TrajectoryPoint, prop: &Propulsion, c: &Constants, sign: OmegaSign) -> HamiltonianTerms {
    let p = costates_at(point, prop, c, sign);
    let s = &point.state;
    let h0 = p.p_r.dot(&s.velocity) + p.p_v.dot(&gravity(&s.position, c));
    let phi = p.p_v.norm() / s.mass - p.p_m / prop.exhaust_velocity;
    HamiltonianTerms { h: h0 + point.thrust * phi, h0, phi }
}

/// `|x| r^2 / mu`: an acceleration-like quantity in units of local gravity.
fn per_gravity(x: f64, r: f64, c: &Constants) -> f64 {
    x.abs() * r * r / c.mu
}

/// Maxima of the pointwise Hamiltonian checks over the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseSummary {
    /// `max |H| r^2 / mu`.
    pub max_h_norm: f64,
    /// `max |H0| r / v_c^2`.
    pub max_h0_norm: f64,
    /// `max |Phi| m` (dimensionless).
    pub max_phi_norm: f64,
}

pub fn pointwise_summary(
    points: &[TrajectoryPoint],
    prop: &Propulsion,
    c: &Constants,
    sign: OmegaSign,
) -> PointwiseSummary {
    let mut out = PointwiseSummary { max_h_norm: 0.0, max_h0_norm: 0.0, max_phi_norm: 0.0 };
    for p in points {
        let hm = hamiltonian_at(p, prop, c, sign);
        let r = p.polar.r;
        // NaN (steering law outside its domain) must show up as a failure.
        out.max_h_norm = nan_max(out.max_h_norm, per_gravity(hm.h, r, c));
        out.max_h0_norm = nan_max(out.max_h0_norm, per_gravity(hm.h0, r, c));
        out.max_phi_norm = nan_max(out.max_phi_norm, (hm.phi * p.state.mass).abs());
    }
    out
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Try both rate signs and keep the one with the smaller Hamiltonian.
/// Returns the choice and `max |H0|` normalized for (positive, negated).
pub fn resolve_omega_sign(points: &[TrajectoryPoint], prop: &Propulsion, c: &Constants) -> (OmegaSign, [f64; 2]) {
    let pos = pointwise_summary(points, prop, c, OmegaSign::Positive).max_h0_norm;
    let neg = pointwise_summary(points, prop, c, OmegaSign::Negated).max_h0_norm;
    let sign = if neg < pos || pos.is_nan() { OmegaSign::Negated } else { OmegaSign::Positive };
    (sign, [pos, neg])
}

/// Costates integrated through the adjoint equations, sampled on the trajectory points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateSample {
    pub time: f64,
    pub p_r: [f64; 2],
    pub p_v: [f64; 2],
    pub p_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateHistory {
    pub samples: Vec<CostateSample>,
    /// Max over samples of the largest relative mismatch of `p_r`, `p_v`, `p_m`
    /// against the closed forms.
    pub max_relative_deviation: f64,
    /// `max | |p_v| - 1 |` of the integrated costates.
    pub max_pv_norm_deviation: f64,
    /// `max |m p_m - Psi_0| / Psi_0` of the integrated costates.
    pub max_psi_deviation: f64,
}

struct AdjointOde<'a> {
    traj: &'a Trajectory,
}

impl OdeSystem<5> for AdjointOde<'_> {
    fn rhs(&self, t: f64, y: &[f64; 5]) -> Result<[f64; 5]> {
        let traj = self.traj;
        let c = &traj.constants;
        let s = traj.state_at(t)?;
        let kin = s.polar()?;
        let theta = traj.program.pitch(kin.r, kin.v, kin.gamma, c)?;
        let thrust = traj.profile.thrust_at(t, traj.t0);
        let p_r = Vector2::new(y[0], y[1]);
        let p_v = Vector2::new(y[2], y[3]);
        let dp_r = -gravity_gradient(&s.position, c).transpose() * p_v;
        let u = thrust_direction(theta, kin.phi);
        let dp_m = thrust / (s.mass * s.mass) * p_v.dot(&u);
        Ok([dp_r.x, dp_r.y, -p_r.x, -p_r.y, dp_m])
    }
}

fn pack(p: &CostateReconstruction) -> [f64; 5] {
    [p.p_r.x, p.p_r.y, p.p_v.x, p.p_v.y, p.p_m]
}

/// Integrate the adjoint equations from the closed-form costates at `t0` and
/// compare against the closed forms at every stored sample.
pub fn propagate_costates(traj: &Trajectory, sign: OmegaSign, rel_tol: f64) -> Result<CostateHistory> {
    let c = &traj.constants;
    let prop = &traj.propulsion;
    let first = traj.initial();
    let y0 = pack(&costates_at(first, prop, c, sign));
    let scale_r = y0[0].hypot(y0[1]).max(f64::MIN_POSITIVE);
    let stepper = Dopri5::<5> {
        rel_tol,
        abs_tol: [rel_tol * scale_r, rel_tol * scale_r, rel_tol, rel_tol, rel_tol * y0[4]],
        // Trial stages must stay inside the trajectory's time span.
        max_step: (traj.t_final() - first.time).min(20.0),
        min_step: 1e-9,
    };
    let sys = AdjointOde { traj };
    let psi0 = first.state.mass * y0[4];

    // The thrust may jump at the bilevel switch; restart there.
    let mut breaks: Vec<f64> = traj.points.iter().map(|p| p.time).collect();
    if let Some(sw) = traj.profile.switch_after() {
        let ts = traj.t0 + sw;
        if ts > first.time && ts < traj.t_final() {
            let idx = breaks.partition_point(|t| *t < ts);
            if breaks.get(idx) != Some(&ts) {
                breaks.insert(idx, ts);
            }
        }
    }

    let mut t = first.time;
    let mut y = y0;
    let mut dy = sys.rhs(t, &y)?;
    let mut h = initial_step(&sys, t, &y, &dy, &stepper)?;
    let mut samples = Vec::with_capacity(traj.points.len());
    let mut hist = CostateHistory {
        samples: Vec::new(),
        max_relative_deviation: 0.0,
        max_pv_norm_deviation: 0.0,
        max_psi_deviation: 0.0,
    };
    let mut point_iter = traj.points.iter().peekable();
    for &target in &breaks {
        while t < target {
            let (step, h_next) = stepper.adaptive_step(&sys, t, &y, &dy, h, target)?;
            t = if step.dense.t_end() >= target { target } else { step.dense.t_end() };
            y = step.y;
            dy = step.dy;
            h = h_next;
        }
        let restart = traj.profile.switch_after().map(|sw| traj.t0 + sw) == Some(target);
        if restart {
            dy = sys.rhs(t, &y)?;
        }
        while let Some(p) = point_iter.next_if(|p| p.time <= target) {
            let closed = costates_at(p, prop, c, sign);
            let dr = (Vector2::new(y[0], y[1]) - closed.p_r).norm() / closed.p_r.norm();
            let dv = (Vector2::new(y[2], y[3]) - closed.p_v).norm() / closed.p_v.norm();
            let dm = (y[4] - closed.p_m).abs() / closed.p_m;
            hist.max_relative_deviation = nan_max(hist.max_relative_deviation, dr.max(dv).max(dm));
            hist.max_pv_norm_deviation = nan_max(hist.max_pv_norm_deviation, (y[2].hypot(y[3]) - 1.0).abs());
            hist.max_psi_deviation = nan_max(hist.max_psi_deviation, (p.state.mass * y[4] - psi0).abs() / psi0);
            samples.push(CostateSample { time: p.time, p_r: [y[0], y[1]], p_v: [y[2], y[3]], p_m: y[4] });
        }
    }
    hist.samples = samples;
    Ok(hist)
}

/// Finite-difference weights for derivative `order` at `x0` over arbitrary nodes
/// (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Terminal conditions at the `gamma = 0` event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalChecks {
    pub apsis: Apsis,
    pub sin_theta_f: f64,
    pub gamma_f: f64,
    /// One-sided finite-difference pitch rate at `t_f`, rad/s.
    pub theta_dot_fd: f64,
    /// `(v_f - v_c(r_f)) / r_f`, rad/s.
    pub theta_dot_model: f64,
    /// Sign of `v_f - v_c(r_f)` matches the injection apsis (positive at perigee).
    pub rate_sign_consistent: bool,
    /// The final leg approached from below (perigee) or above (apogee).
    pub final_leg_consistent: bool,
    pub theta_ddot_fd: f64,
    /// `T / (m r)` at `t_f`, rad/s^2.
    pub theta_ddot_model: f64,
    /// The reached orbit is circular to within 1e-3 in speed, so the
    /// second-derivative check applies.
    pub circular: bool,
}

impl TerminalChecks {
    pub fn theta_dot_error(&self) -> f64 {
        (self.theta_dot_fd - self.theta_dot_model).abs()
    }

    pub fn theta_ddot_relative_error(&self) -> f64 {
        (self.theta_ddot_fd - self.theta_ddot_model).abs() / self.theta_ddot_model.abs()
    }
}

/// Terminal checks from an explicit list of `(t, theta)` samples ending at `t_f`.
fn terminal_from_samples(
    samples: &[(f64, f64)],
    last: &TrajectoryPoint,
    apsis: Apsis,
    approach_gamma: f64,
    c: &Constants,
) -> TerminalChecks {
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let t_f = last.time;
    let d1 = fd_weights(t_f, &ts, 1);
    let d2 = fd_weights(t_f, &ts, 2);
    let dot = |w: &[f64]| w.iter().zip(samples).map(|(w, s)| w * s.1).sum::<f64>();
    let r = last.polar.r;
    let vc = circular_speed(r, c);
    let model = (last.polar.v - vc) / r;
    let rate_sign_consistent = match apsis {
        Apsis::Perigee => model > 0.0,
        Apsis::Apogee => model < 0.0,
    };
    let final_leg_consistent = match apsis {
        Apsis::Perigee => approach_gamma < 0.0,
        Apsis::Apogee => approach_gamma > 0.0,
    };
    TerminalChecks {
        apsis,
        sin_theta_f: last.theta.sin(),
        gamma_f: last.polar.gamma,
        theta_dot_fd: dot(&d1),
        theta_dot_model: model,
        rate_sign_consistent,
        final_leg_consistent,
        theta_ddot_fd: dot(&d2),
        theta_ddot_model: last.thrust / (last.state.mass * r),
        circular: ((last.polar.v - vc) / vc).abs() < 1e-3,
    }
}

/// Default spacing of the five terminal stencil samples, s.
pub const STENCIL_SPACING: f64 = 1.0;

/// Terminal checks on a propagated trajectory, sampling the dense output.
pub fn terminal_checks(traj: &Trajectory) -> Result<TerminalChecks> {
    let t_f = traj.t_final();
    let h = STENCIL_SPACING.min((t_f - traj.t0) / 8.0);
    if !(h > 0.0) {
        return Err(Error::InvalidInput("trajectory too short for terminal checks".into()));
    }
    let mut samples = Vec::with_capacity(5);
    for k in (0..5).rev() {
        let t = t_f - k as f64 * h;
        let p = if k == 0 { *traj.last() } else { traj.point_at(t)? };
        samples.push((t, p.theta));
    }
    let before = traj.point_at(t_f - h)?;
    Ok(terminal_from_samples(&samples, traj.last(), traj.injection.apsis, before.polar.gamma, &traj.constants))
}

/// Terminal checks from stored samples only (e.g. a trajectory read back from CSV).
pub fn terminal_checks_from_points(points: &[TrajectoryPoint], c: &Constants) -> Result<TerminalChecks> {
    if points.len() < 5 {
        return Err(Error::InvalidInput(format!("need at least 5 samples for terminal checks, got {}", points.len())));
    }
    let tail = &points[points.len() - 5..];
    let samples: Vec<(f64, f64)> = tail.iter().map(|p| (p.time, p.theta)).collect();
    let last = &tail[4];
    let approach = tail[3].polar.gamma;
    let apsis = if approach < 0.0 { Apsis::Perigee } else { Apsis::Apogee };
    Ok(terminal_from_samples(&samples, last, apsis, approach, c))
}

/// Largest relative mismatch between the thrust-direction rate implied by the
/// samples (`phi_dot - theta_dot`, central differences) and the steering-law magnitude.
pub fn thrust_rate_mismatch(points: &[TrajectoryPoint], c: &Constants) -> f64 {
    let mut worst: f64 = 0.0;
    for w in points.windows(3) {
        let (a, b, d) = (&w[0], &w[1], &w[2]);
        let dt = d.time - a.time;
        if dt <= 0.0 || (b.time - a.time - 0.5 * dt).abs() > 1e-9 * dt {
            continue;
        }
        let fd = ((d.polar.phi - d.theta) - (a.polar.phi - a.theta)) / dt;
        let model = angular_rate(b.polar.r, b.theta, c).unwrap_or(f64::NAN);
        worst = nan_max(worst, (fd - model).abs() / model);
    }
    worst
}

/// Pass thresholds for [`PmpReport::checks`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmpThresholds {
    pub phi: f64,
    pub h0: f64,
    pub pv_norm: f64,
    pub psi: f64,
    pub costate: f64,
    pub terminal_angle: f64,
    pub theta_dot: f64,
    pub theta_ddot_rel: f64,
}

impl Default for PmpThresholds {
    fn default() -> Self {
        Self {
            phi: 4.0 * f64::EPSILON,
            h0: 1e-8,
            pv_norm: 1e-8,
            psi: 1e-8,
            costate: 1e-6,
            terminal_angle: 1e-8,
            theta_dot: 1e-4,
            theta_ddot_rel: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmpReport {
    pub omega_sign: OmegaSign,
    /// `max |H0|` normalized under each sign choice: (positive, negated).
    pub h0_by_sign: [f64; 2],
    pub pointwise: PointwiseSummary,
    /// Absent when only stored samples were available.
    pub costates: Option<CostateStats>,
    pub thrust_rate_mismatch: f64,
    pub terminal: Option<TerminalChecks>,
    pub costate_sign_note: String,
}

/// Costate-propagation maxima without the sample history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostateStats {
    pub max_relative_deviation: f64,
    pub max_pv_norm_deviation: f64,
    pub max_psi_deviation: f64,
}

impl From<&CostateHistory> for CostateStats {
    fn from(h: &CostateHistory) -> Self {
        Self {
            max_relative_deviation: h.max_relative_deviation,
            max_pv_norm_deviation: h.max_pv_norm_deviation,
            max_psi_deviation: h.max_psi_deviation,
        }
    }
}

const SIGN_NOTE: &str = "costates scaled by |p_v| = 1 and p_m = v_e/m > 0, \
    i.e. p0 = -v_e/m_f < 0; all checks are invariant under positive rescaling";

/// Relative tolerance used for the adjoint integration.
pub const COSTATE_REL_TOL: f64 = 1e-12;

/// Full report on a propagated trajectory.
pub fn verify(traj: &Trajectory) -> Result<PmpReport> {
    let c = &traj.constants;
    let prop = &traj.propulsion;
    let (sign, h0_by_sign) = resolve_omega_sign(&traj.points, prop, c);
    let costates = propagate_costates(traj, sign, COSTATE_REL_TOL)?;
    Ok(PmpReport {
        omega_sign: sign,
        h0_by_sign,
        pointwise: pointwise_summary(&traj.points, prop, c, sign),
        costates: Some(CostateStats::from(&costates)),
        thrust_rate_mismatch: thrust_rate_mismatch(&traj.points, c),
        terminal: Some(terminal_checks(traj)?),
        costate_sign_note: SIGN_NOTE.into(),
    })
}

/// Report from stored samples only; the costate propagation is skipped.
pub fn verify_points(points: &[TrajectoryPoint], prop: &Propulsion, c: &Constants) -> Result<PmpReport> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("trajectory needs at least two samples".into()));
    }
    let (sign, h0_by_sign) = resolve_omega_sign(points, prop, c);
    Ok(PmpReport {
        omega_sign: sign,
        h0_by_sign,
        pointwise: pointwise_summary(points, prop, c, sign),
        costates: None,
        thrust_rate_mismatch: thrust_rate_mismatch(points, c),
        terminal: terminal_checks_from_points(points, c).ok(),
        costate_sign_note: SIGN_NOTE.into(),
    })
}

impl PmpReport {
    /// Every check with its value and verdict. NaN values fail.
    pub fn checks(&self, thr: &PmpThresholds) -> Vec<Check> {
        let mut out = Vec::new();
        let mut push = |name: &str, value: f64, threshold: f64| {
            out.push(Check { name: name.into(), value, threshold, pass: value <= threshold });
        };
        push("phi", self.pointwise.max_phi_norm, thr.phi);
        push("h0", self.pointwise.max_h0_norm, thr.h0);
        push("h", self.pointwise.max_h_norm, thr.h0);
        if let Some(cs) = &self.costates {
            push("pv_norm", cs.max_pv_norm_deviation, thr.pv_norm);
            push("psi", cs.max_psi_deviation, thr.psi);
            push("costate_ode", cs.max_relative_deviation, thr.costate);
        }
        if let Some(t) = &self.terminal {
            push("sin_theta_f", t.sin_theta_f.abs(), thr.terminal_angle);
            push("gamma_f", t.gamma_f.abs(), thr.terminal_angle);
            push("theta_dot_f", t.theta_dot_error(), thr.theta_dot);
            push("rate_sign", if t.rate_sign_consistent { 0.0 } else { 1.0 }, 0.0);
            push("final_leg", if t.final_leg_consistent { 0.0 } else { 1.0 }, 0.0);
            if t.circular {
                push("theta_ddot_f", t.theta_ddot_relative_error(), thr.theta_ddot_rel);
            }
        }
        out
    }

    pub fn all_pass(&self, thr: &PmpThresholds) -> bool {
        self.checks(thr).iter().all(|c| c.pass)
    }
}
