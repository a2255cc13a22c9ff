//! Shooting on the thrust-profile parameters so that the closed-loop ascent
//! ends on the target orbit, plus reachability sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, InjectionMode, IntegratorConfig, Propulsion, ThrustProfile, Trajectory};
use crate::error::{Error, Result};
use crate::orbital::{shape_from_apsides, shape_from_state, Constants, OrbitShape, PlanarState, PolarKinematics};
use crate::performance::{accumulate_losses, LossBreakdown};
use crate::pmp_verify::{verify, PmpReport};

/// Which terminal quantities the residual compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `(r_a - r_a*, r_p - r_p*)` in meters.
    #[default]
    Apsides,
    /// Relative energy and angular-momentum errors, scaled to meters by
    /// `r_a* + r_p*` and `r_p*` respectively.
    EnergyMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Convergence threshold on each residual component, m.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
    /// Maximum number of step halvings per Newton iteration.
    pub max_halvings: usize,
    /// Thrust-to-weight ratio of the constant-thrust seed.
    pub twr: f64,
    pub residual: ResidualKind,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            residual_tol: 10.0,
            max_iter: 50,
            fd_step: 1e-5,
            max_halvings: 10,
            twr: 0.25,
            residual: ResidualKind::Apsides,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.residual_tol > 0.0
            && self.max_iter > 0
            && self.fd_step > 0.0
            && self.max_halvings > 0
            && self.twr > 0.0
            && self.twr.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("solver settings must all be positive: {self:?}")))
        }
    }
}

/// Shape of the thrust law; the two levels or (level, slope) are the unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    Linear,
    /// Switch from the first to the second level `switch_after` seconds after ignition.
    Bilevel { switch_after: f64 },
}

impl ProfileKind {
    pub fn with_params(&self, p: [f64; 2]) -> ThrustProfile {
        match *self {
            ProfileKind::Linear => ThrustProfile::Linear { initial: p[0], slope: p[1] },
            ProfileKind::Bilevel { switch_after } => ThrustProfile::Bilevel { first: p[0], second: p[1], switch_after },
        }
    }

    /// Absolute floors on the finite-difference steps.
    fn fd_floors(&self) -> [f64; 2] {
        match self {
            ProfileKind::Linear => [1.0, 1e-3],
            ProfileKind::Bilevel { .. } => [1.0, 1.0],
        }
    }

    /// Thrust stays positive over `[0, window]` seconds after ignition.
    fn positive_over(&self, p: [f64; 2], window: f64) -> bool {
        match self {
            ProfileKind::Linear => p[0] > 0.0 && p[0] + p[1] * window > 0.0,
            ProfileKind::Bilevel { .. } => p[0] > 0.0 && p[1] > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub constants: Constants,
    pub initial: PolarKinematics,
    pub mass: f64,
    pub target: OrbitShape,
    pub propulsion: Propulsion,
    pub profile: ProfileKind,
    pub mode: InjectionMode,
    pub integrator: IntegratorConfig,
    pub settings: SolverSettings,
    /// Overrides the constant-thrust seed.
    pub guess: Option<[f64; 2]>,
}

impl Default for Scenario {
    /// Upper stage at 150 km, 5 km/s, 30 deg flight path angle, 10 t, Isp
    /// 300 s, aiming for a 300 x 36 000 km transfer orbit.
    fn default() -> Self {
        let c = Constants::default();
        Self {
            initial: PolarKinematics { r: c.radius(150e3), v: 5000.0, gamma: 30f64.to_radians(), phi: 0.0 },
            mass: 10_000.0,
            target: shape_from_apsides(36_000e3, 300e3, &c).expect("valid default target"),
            propulsion: Propulsion { exhaust_velocity: 2942.0 },
            profile: ProfileKind::Linear,
            mode: InjectionMode::Perigee,
            integrator: IntegratorConfig::default(),
            settings: SolverSettings::default(),
            guess: None,
            constants: c,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.propulsion.validate()?;
        self.integrator.validate()?;
        self.settings.validate()?;
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput(format!("initial mass must be positive, got {} kg", self.mass)));
        }
        if !(self.initial.r > 0.0 && self.initial.v > 0.0) {
            return Err(Error::InvalidInput("initial radius and speed must be positive".into()));
        }
        if !(self.initial.gamma.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidInput(format!(
                "initial flight path angle must lie in (-90, 90) deg, got {} deg",
                self.initial.gamma.to_degrees()
            )));
        }
        if !self.target.is_closed() || self.target.apsis_radii().is_none() {
            return Err(Error::InvalidInput("target orbit must be bound and non-radial".into()));
        }
        if let ProfileKind::Bilevel { switch_after } = self.profile {
            if !(switch_after >= 0.0 && switch_after.is_finite()) {
                return Err(Error::InvalidInput(format!("switch time must be non-negative, got {switch_after} s")));
            }
        }
        if let Some(g) = self.guess {
            self.profile.with_params(g).validate()?;
        }
        Ok(())
    }

    pub fn initial_state(&self) -> PlanarState {
        PlanarState::from_polar(&self.initial, self.mass, 0.0)
    }

    fn target_radii(&self) -> (f64, f64) {
        self.target.apsis_radii().expect("validated target")
    }

    pub fn with_profile(&self, profile: ProfileKind) -> Self {
        Self { profile, ..self.clone() }
    }

    pub fn propagate(&self, p: [f64; 2]) -> Result<Trajectory> {
        propagate(
            &self.initial_state(),
            &self.profile.with_params(p),
            &self.propulsion,
            self.mode,
            &self.integrator,
            &self.constants,
        )
    }
}

/// Constant-thrust seed `T = twr m0 g0` (linear: zero slope; bilevel: equal levels),
/// unless the scenario overrides it.
pub fn initial_guess(scenario: &Scenario) -> Result<[f64; 2]> {
    if let Some(g) = scenario.guess {
        return Ok(g);
    }
    let twr = scenario.settings.twr;
    if !(twr > 0.0) {
        return Err(Error::InvalidInput(format!("thrust-to-weight seed must be positive, got {twr}")));
    }
    let t_bar = twr * scenario.mass * scenario.constants.g0;
    Ok(match scenario.profile {
        ProfileKind::Linear => [t_bar, 0.0],
        ProfileKind::Bilevel { .. } => [t_bar, t_bar],
    })
}

fn residual_of(traj: &Trajectory, scenario: &Scenario) -> Result<[f64; 2]> {
    let c = &scenario.constants;
    let achieved = shape_from_state(&traj.last().state, c)?;
    let (ra_t, rp_t) = scenario.target_radii();
    match scenario.settings.residual {
        ResidualKind::Apsides => {
            let (ra, rp) = achieved.apsis_radii().ok_or_else(|| {
                Error::DegenerateOrbit(format!("achieved orbit is unbound (energy {:.1} J/kg)", achieved.energy))
            })?;
            Ok([ra - ra_t, rp - rp_t])
        }
        ResidualKind::EnergyMomentum => {
            let t = &scenario.target;
            Ok([
                (achieved.energy - t.energy) / t.energy.abs() * (ra_t + rp_t),
                (achieved.ang_momentum - t.ang_momentum) / t.ang_momentum * rp_t,
            ])
        }
    }
}

/// Terminal residual for the given profile parameters.
pub fn shoot(p: [f64; 2], scenario: &Scenario) -> Result<[f64; 2]> {
    evaluate(p, scenario).map(|e| e.residual)
}

struct Evaluation {
    residual: [f64; 2],
    traj: Trajectory,
}

fn evaluate(p: [f64; 2], scenario: &Scenario) -> Result<Evaluation> {
    let traj = scenario.propagate(p)?;
    let residual = residual_of(&traj, scenario)?;
    Ok(Evaluation { residual, traj })
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].hypot(r[1])
}

fn converged(r: [f64; 2], tol: f64) -> bool {
    r[0].abs() < tol && r[1].abs() < tol
}

/// Forward-difference Jacobian; falls back to a backward difference when the
/// forward point cannot be evaluated.
fn jacobian(p: [f64; 2], r: [f64; 2], scenario: &Scenario) -> Result<[[f64; 2]; 2]> {
    let floors = scenario.profile.fd_floors();
    let rel = scenario.settings.fd_step;
    let cols: Vec<Result<[f64; 2]>> = (0..2)
        .into_par_iter()
        .map(|j| {
            let h = (rel * p[j].abs()).max(floors[j]);
            let column = |step: f64| -> Result<[f64; 2]> {
                let mut q = p;
                q[j] += step;
                let rq = shoot(q, scenario)?;
                Ok([(rq[0] - r[0]) / step, (rq[1] - r[1]) / step])
            };
            match column(h) {
                Err(e) if e.is_infeasible_point() => column(-h),
                other => other,
            }
        })
        .collect();
    let c0 = cols[0].clone()?;
    let c1 = cols[1].clone()?;
    Ok([[c0[0], c1[0]], [c0[1], c1[1]]])
}

fn newton_step(j: [[f64; 2]; 2], r: [f64; 2], p: [f64; 2]) -> Result<[f64; 2]> {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let scale = (j[0][0] * j[1][1]).abs().max((j[0][1] * j[1][0]).abs());
    if !(det.abs() > 1e-12 * scale) || !det.is_finite() {
        return Err(Error::SingularJacobian { params: p });
    }
    Ok([-(j[1][1] * r[0] - j[0][1] * r[1]) / det, -(-j[1][0] * r[0] + j[0][0] * r[1]) / det])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub params: [f64; 2],
    pub residual: [f64; 2],
    /// Fraction of the full Newton step that was accepted (1 on the seed).
    pub step_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub profile: ThrustProfile,
    /// Final mass, kg.
    pub m_f: f64,
    /// Burn duration `t_f - t0`, s.
    pub t_f: f64,
    /// Angular range, deg.
    pub phi_f_deg: f64,
    pub dv_gravity: f64,
    pub dv_aoa: f64,
    pub losses: LossBreakdown,
    pub apogee_radius: f64,
    pub perigee_radius: f64,
    pub residual: [f64; 2],
    pub residual_norm: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub pmp: PmpReport,
}

/// A converged result together with its trajectory.
#[derive(Debug, Clone)]
pub struct Solution {
    pub result: SolveResult,
    pub trajectory: Trajectory,
}

fn summarize(
    traj: Trajectory,
    residual: [f64; 2],
    iterations: usize,
    history: Vec<IterationRecord>,
) -> Result<Solution> {
    let last = traj.last();
    let achieved = shape_from_state(&last.state, &traj.constants)?;
    let (ra, rp) = achieved.apsis_radii().ok_or_else(|| Error::DegenerateOrbit("achieved orbit is unbound".into()))?;
    let losses = accumulate_losses(&traj);
    let result = SolveResult {
        profile: traj.profile,
        m_f: last.state.mass,
        t_f: traj.t_final() - traj.t0,
        phi_f_deg: last.polar.phi.to_degrees(),
        dv_gravity: losses.dv_gravity,
        dv_aoa: losses.dv_aoa,
        losses,
        apogee_radius: ra,
        perigee_radius: rp,
        residual,
        residual_norm: norm(residual),
        iterations,
        history,
        pmp: verify(&traj)?,
    };
    Ok(Solution { result, trajectory: traj })
}

/// Damped Newton iteration on the terminal residual.
pub fn solve(scenario: &Scenario) -> Result<Solution> {
    scenario.validate()?;
    let settings = &scenario.settings;
    let mut p = initial_guess(scenario)?;
    scenario.profile.with_params(p).validate()?;
    let mut cur = evaluate(p, scenario)?;
    let mut history = vec![IterationRecord { params: p, residual: cur.residual, step_scale: 1.0 }];

    for iter in 0..=settings.max_iter {
        if converged(cur.residual, settings.residual_tol) {
            return summarize(cur.traj, cur.residual, iter, history);
        }
        if iter == settings.max_iter {
            break;
        }
        let j = jacobian(p, cur.residual, scenario)?;
        let dp = newton_step(j, cur.residual, p)?;
        let window = cur.traj.t_final() - cur.traj.t0;
        let n0 = norm(cur.residual);

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let q = [p[0] + lambda * dp[0], p[1] + lambda * dp[1]];
            if scenario.profile.positive_over(q, window) {
                match evaluate(q, scenario) {
                    Ok(e) if norm(e.residual) < n0 => {
                        accepted = Some((q, e));
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if e.is_infeasible_point() => {}
                    Err(e) => return Err(e),
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((q, e)) => {
                p = q;
                cur = e;
                history.push(IterationRecord { params: p, residual: cur.residual, step_scale: lambda });
            }
            None => return Err(Error::NonConvergence { iterations: iter + 1, residual_norm: n0, best_params: p }),
        }
    }
    Err(Error::NonConvergence { iterations: settings.max_iter, residual_norm: norm(cur.residual), best_params: p })
}

/// One evaluation point of a reachability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub params: [f64; 2],
    /// Overrides the scenario's switch time (bilevel only).
    pub switch_after: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reach {
    pub apogee_radius: f64,
    pub perigee_radius: f64,
    pub m_f: f64,
    pub t_f: f64,
    pub phi_f_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepOutcome {
    Reached(Reach),
    Failed { reason: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub point: SweepPoint,
    pub outcome: SweepOutcome,
}

/// Cartesian product of parameter and switch-time lists. An empty switch
/// list keeps the scenario's own switch time.
pub fn grid(t1: &[f64], t2: &[f64], switch_after: &[f64]) -> Vec<SweepPoint> {
    let switches: Vec<Option<f64>> =
        if switch_after.is_empty() { vec![None] } else { switch_after.iter().map(|s| Some(*s)).collect() };
    let mut out = Vec::with_capacity(t1.len() * t2.len() * switches.len());
    for &s in &switches {
        for &a in t1 {
            for &b in t2 {
                out.push(SweepPoint { params: [a, b], switch_after: s });
            }
        }
    }
    out
}

fn failed(e: &Error) -> SweepOutcome {
    SweepOutcome::Failed { reason: e.reason().into(), message: e.to_string() }
}

fn scenario_for(scenario: &Scenario, switch_after: Option<f64>) -> Scenario {
    match (scenario.profile, switch_after) {
        (ProfileKind::Bilevel { .. }, Some(s)) => scenario.with_profile(ProfileKind::Bilevel { switch_after: s }),
        _ => scenario.clone(),
    }
}

/// Propagate every grid point independently; failures are recorded per point.
pub fn sweep(scenario: &Scenario, points: &[SweepPoint]) -> Vec<SweepRecord> {
    points
        .par_iter()
        .map(|pt| {
            let sc = scenario_for(scenario, pt.switch_after);
            let outcome =
                sc.profile.with_params(pt.params).validate().and_then(|_| sc.propagate(pt.params)).and_then(|traj| {
                    let last = traj.last();
                    let shape = shape_from_state(&last.state, &sc.constants)?;
                    let (ra, rp) = shape
                        .apsis_radii()
                        .ok_or_else(|| Error::DegenerateOrbit("achieved orbit is unbound".into()))?;
                    Ok(Reach {
                        apogee_radius: ra,
                        perigee_radius: rp,
                        m_f: last.state.mass,
                        t_f: traj.t_final() - traj.t0,
                        phi_f_deg: last.polar.phi.to_degrees(),
                    })
                });
            SweepRecord { point: *pt, outcome: outcome.map(SweepOutcome::Reached).unwrap_or_else(|e| failed(&e)) }
        })
        .collect()
}

/// Solve the bilevel problem independently at each switch time.
pub fn solve_switch_times(scenario: &Scenario, switch_times: &[f64]) -> Vec<(f64, Result<SolveResult>)> {
    switch_times
        .par_iter()
        .map(|&s| {
            let sc = scenario.with_profile(ProfileKind::Bilevel { switch_after: s });
            (s, solve(&sc).map(|sol| sol.result))
        })
        .collect()
}

/// Golden-section search for the switch time maximizing the final mass on
/// `[lo, hi]`. Every trial is an independent bilevel solve.
pub fn optimize_switch_time(scenario: &Scenario, lo: f64, hi: f64, tol: f64) -> Result<(f64, SolveResult)> {
    if !(lo >= 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::InvalidInput(format!("need 0 <= lo < hi and tol > 0 (lo = {lo}, hi = {hi}, tol = {tol})")));
    }
    let run = |s: f64| solve(&scenario.with_profile(ProfileKind::Bilevel { switch_after: s })).map(|x| x.result);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = run(x1)?;
    let mut f2 = run(x2)?;
    while b - a > tol {
        if f1.m_f >= f2.m_f {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = run(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = run(x2)?;
        }
    }
    Ok(if f1.m_f >= f2.m_f { (x1, f1) } else { (x2, f2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_quarter_weight() {
        let sc = Scenario::default();
        let g = initial_guess(&sc).unwrap();
        assert_eq!(g, [24_516.625, 0.0]);
        assert!((g[0] - 26_467.0).abs() / 26_467.0 < 0.1);

        let bi = sc.with_profile(ProfileKind::Bilevel { switch_after: 500.0 });
        assert_eq!(initial_guess(&bi).unwrap(), [24_516.625, 24_516.625]);

        let mut zero = sc.clone();
        zero.settings.twr = 0.0;
        assert!(matches!(initial_guess(&zero), Err(Error::InvalidInput(_))));
        assert!(zero.validate().is_err());
    }

    #[test]
    fn newton_step_solves_and_detects_singularity() {
        let j = [[2.0, 1.0], [1.0, 3.0]];
        let dp = newton_step(j, [3.0, 5.0], [0.0; 2]).unwrap();
        assert!((2.0 * dp[0] + dp[1] + 3.0).abs() < 1e-14);
        assert!((dp[0] + 3.0 * dp[1] + 5.0).abs() < 1e-14);
        assert!(matches!(
            newton_step([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0], [7.0, 8.0]),
            Err(Error::SingularJacobian { params: [7.0, 8.0] })
        ));
    }

    #[test]
    fn positivity_window() {
        assert!(ProfileKind::Linear.positive_over([100.0, -1.0], 99.0));
        assert!(!ProfileKind::Linear.positive_over([100.0, -1.0], 100.0));
        assert!(!ProfileKind::Bilevel { switch_after: 1.0 }.positive_over([1.0, 0.0], 10.0));
    }

    #[test]
    fn grid_product_and_empty_grid() {
        assert_eq!(grid(&[1.0, 2.0], &[3.0], &[]).len(), 2);
        assert_eq!(grid(&[1.0], &[2.0], &[250.0, 500.0, 750.0]).len(), 3);
        assert!(grid(&[], &[1.0], &[]).is_empty());
        assert!(sweep(&Scenario::default(), &[]).is_empty());
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::default().validate().is_ok());
        let s = Scenario { mass: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.target = OrbitShape::new(1.0, 1e10, &s.constants);
        assert!(s.validate().is_err());
        let mut s = Scenario::default();
        s.settings.residual_tol = -1.0;
        assert!(s.validate().is_err());
    }
}
