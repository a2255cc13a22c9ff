//! Thrust profiles, closed-loop equations of motion and propagation to the
//! apsis-injection event.

pub mod integrator;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbital::{Apsis, Constants, PlanarState, PolarKinematics};
use crate::steering::{angular_rate, thrust_direction, PitchProgram};
use integrator::{initial_step, DenseSegment, Dopri5, OdeSystem};

/// Integrated vector: position (2), velocity (2), mass, then the gravity-loss,
/// angle-of-attack-loss and `int T/m dt` accumulators.
pub const STATE_DIM: usize = 8;
type Raw = [f64; STATE_DIM];

/// Thrust level as a function of time since ignition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThrustProfile {
    /// `T(t) = initial + (t - t0) slope`
    Linear { initial: f64, slope: f64 },
    /// `first` before `t0 + switch_after`, `second` from then on.
    Bilevel { first: f64, second: f64, switch_after: f64 },
}

impl ThrustProfile {
    pub fn thrust_at(&self, t: f64, t0: f64) -> f64 {
        let dt = t - t0;
        match *self {
            ThrustProfile::Linear { initial, slope } => initial + dt * slope,
            ThrustProfile::Bilevel { first, second, switch_after } => {
                if dt < switch_after {
                    first
                } else {
                    second
                }
            }
        }
    }

    /// The two shooting unknowns `(T1, T2)`.
    pub fn params(&self) -> [f64; 2] {
        match *self {
            ThrustProfile::Linear { initial, slope } => [initial, slope],
            ThrustProfile::Bilevel { first, second, .. } => [first, second],
        }
    }

    pub fn with_params(&self, p: [f64; 2]) -> Self {
        match *self {
            ThrustProfile::Linear { .. } => ThrustProfile::Linear { initial: p[0], slope: p[1] },
            ThrustProfile::Bilevel { switch_after, .. } => {
                ThrustProfile::Bilevel { first: p[0], second: p[1], switch_after }
            }
        }
    }

    pub fn switch_after(&self) -> Option<f64> {
        match *self {
            ThrustProfile::Bilevel { switch_after, .. } => Some(switch_after),
            ThrustProfile::Linear { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite thrust parameters {p:?}")));
        }
        match *self {
            ThrustProfile::Linear { initial, .. } if initial <= 0.0 => {
                Err(Error::InvalidInput(format!("initial thrust must be positive, got {initial} N")))
            }
            ThrustProfile::Bilevel { first, second, switch_after } => {
                if first <= 0.0 || second <= 0.0 {
                    Err(Error::InvalidInput(format!(
                        "bilevel thrust levels must be positive, got {first} N and {second} N"
                    )))
                } else if !(switch_after >= 0.0) {
                    Err(Error::InvalidInput(format!("switch time must not precede ignition, got {switch_after} s")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Smooth pieces of the profile, as (start, end, affine thrust law).
    fn pieces(&self, t0: f64) -> Vec<ThrustPiece> {
        match *self {
            ThrustProfile::Linear { initial, slope } => {
                vec![ThrustPiece { start: t0, end: None, level: initial, slope }]
            }
            ThrustProfile::Bilevel { first, second, switch_after } => {
                let t1 = t0 + switch_after;
                let mut pieces = Vec::with_capacity(2);
                if switch_after > 0.0 {
                    pieces.push(ThrustPiece { start: t0, end: Some(t1), level: first, slope: 0.0 });
                }
                pieces.push(ThrustPiece { start: t1, end: None, level: second, slope: 0.0 });
                pieces
            }
        }
    }
}

pub fn thrust_at(profile: &ThrustProfile, t: f64, t0: f64) -> f64 {
    profile.thrust_at(t, t0)
}

#[derive(Debug, Clone, Copy)]
struct ThrustPiece {
    start: f64,
    end: Option<f64>,
    level: f64,
    slope: f64,
}

impl ThrustPiece {
    fn thrust(&self, t: f64) -> f64 {
        self.level + (t - self.start) * self.slope
    }

    /// Time at which a decreasing thrust reaches zero.
    fn zero_time(&self) -> Option<f64> {
        (self.slope < 0.0).then(|| self.start - self.level / self.slope)
    }

    /// Time after `from` at which `propellant` kg have been burned.
    fn burn_time(&self, from: f64, propellant: f64, v_e: f64) -> Option<f64> {
        // T(from + tau) = a + b tau; burned = (a tau + b tau^2 / 2) / v_e
        let a = self.thrust(from);
        let b = self.slope;
        let target = propellant * v_e;
        if b == 0.0 {
            return (a > 0.0).then(|| from + target / a);
        }
        let disc = a * a + 2.0 * b * target;
        if disc < 0.0 {
            return None;
        }
        let tau = 2.0 * target / (a + disc.sqrt());
        (tau > 0.0).then_some(from + tau)
    }
}

/// Fraction of the initial mass treated as "no propellant left".
const DRY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propulsion {
    /// Exhaust velocity, m/s.
    pub exhaust_velocity: f64,
}

impl Propulsion {
    pub fn from_isp(isp: f64, c: &Constants) -> Self {
        Self { exhaust_velocity: isp * c.g0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exhaust_velocity > 0.0) {
            return Err(Error::InvalidInput(format!(
                "exhaust velocity must be positive, got {}",
                self.exhaust_velocity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Relative local error tolerance.
    pub rel_tol: f64,
    /// Absolute local error tolerance, in SI units of each state component.
    pub abs_tol: f64,
    /// Largest step, s.
    pub max_step: f64,
    /// Flight path angle tolerance at the terminal event, rad.
    pub event_tol: f64,
    /// Propagation window after ignition, s.
    pub max_time: f64,
    /// Spacing of the stored trajectory samples, s.
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-8, max_step: 20.0, event_tol: 1e-10, max_time: 5000.0, sample_interval: 1.0 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rel_tol, self.abs_tol, self.max_step, self.event_tol, self.max_time, self.sample_interval];
        if all.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("integrator settings must be positive and finite: {self:?}")))
        }
    }

    /// Same settings with both error tolerances multiplied by `factor`.
    pub fn with_tolerance_factor(&self, factor: f64) -> Self {
        Self { rel_tol: self.rel_tol * factor, abs_tol: self.abs_tol * factor, ..*self }
    }

    fn stepper(&self) -> Dopri5<STATE_DIM> {
        Dopri5 { rel_tol: self.rel_tol, abs_tol: [self.abs_tol; STATE_DIM], max_step: self.max_step, min_step: 1e-9 }
    }
}

/// Which zero of the flight path angle terminates the propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// First upward zero crossing, after a strictly negative excursion.
    #[default]
    Perigee,
    /// First downward zero crossing.
    Apogee,
    /// First zero crossing in either direction.
    #[serde(alias = "first")]
    FirstCrossing,
}

impl InjectionMode {
    fn triggers(&self, g_prev: f64, g_new: f64) -> bool {
        let rising = g_prev < 0.0 && g_new >= 0.0;
        let falling = g_prev > 0.0 && g_new <= 0.0;
        match self {
            InjectionMode::Perigee => rising,
            InjectionMode::Apogee => falling,
            InjectionMode::FirstCrossing => rising || falling,
        }
    }
}

/// Time derivative of the vehicle state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector2<f64>,
    pub acceleration: Vector2<f64>,
    pub mass_rate: f64,
}

/// Equations of motion for a given thrust level under a pitch program.
pub fn derivatives(
    state: &PlanarState,
    thrust: f64,
    prop: &Propulsion,
    c: &Constants,
    program: PitchProgram,
) -> Result<StateDerivative> {
    let r = state.radius();
    let kin = state.polar()?;
    let theta = program.pitch(r, kin.v, kin.gamma, c)?;
    let u = thrust_direction(theta, kin.phi);
    Ok(StateDerivative {
        velocity: state.velocity,
        acceleration: -c.mu / (r * r * r) * state.position + (thrust / state.mass) * u,
        mass_rate: -thrust / prop.exhaust_velocity,
    })
}

/// Closed-loop equations of motion with the optimal pitch law.
pub fn rhs(
    state: &PlanarState,
    profile: &ThrustProfile,
    t0: f64,
    prop: &Propulsion,
    c: &Constants,
) -> Result<StateDerivative> {
    if !(state.mass > 0.0) || !(state.radius() > 0.0) {
        return Err(Error::InvalidInput(format!("state needs positive mass and radius: {state:?}")));
    }
    derivatives(state, profile.thrust_at(state.time, t0), prop, c, PitchProgram::Optimal)
}

struct AscentOde<'a> {
    piece: ThrustPiece,
    prop: &'a Propulsion,
    c: &'a Constants,
    program: PitchProgram,
}

impl OdeSystem<STATE_DIM> for AscentOde<'_> {
    fn rhs(&self, t: f64, y: &Raw) -> Result<Raw> {
        let m = y[4];
        if !(m > 0.0) {
            return Err(Error::MassDepleted { time: t });
        }
        let thrust = self.piece.thrust(t);
        // zero is reachable only at the very end of a piece, which is clipped there
        if !(thrust >= 0.0) {
            return Err(Error::NonPositiveThrust { time: t, thrust });
        }
        let pos = Vector2::new(y[0], y[1]);
        let vel = Vector2::new(y[2], y[3]);
        let kin = PolarKinematics::from_cartesian(&pos, &vel)?;
        let theta = self.program.pitch(kin.r, kin.v, kin.gamma, self.c)?;
        let u = thrust_direction(theta, kin.phi);
        let grav = self.c.mu / (kin.r * kin.r);
        let acc = thrust / m;
        let a = -grav / kin.r * pos + acc * u;
        Ok([
            vel.x,
            vel.y,
            a.x,
            a.y,
            -thrust / self.prop.exhaust_velocity,
            grav * kin.gamma.sin(),
            acc * (1.0 - (theta - kin.gamma).cos()),
            acc,
        ])
    }
}

fn sin_gamma(y: &Raw) -> f64 {
    let radial = y[0] * y[2] + y[1] * y[3];
    radial / ((y[0] * y[0] + y[1] * y[1]).sqrt() * (y[2] * y[2] + y[3] * y[3]).sqrt())
}

fn to_state(y: &Raw, t: f64) -> PlanarState {
    PlanarState { position: Vector2::new(y[0], y[1]), velocity: Vector2::new(y[2], y[3]), mass: y[4], time: t }
}

/// One stored sample of a propagated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub state: PlanarState,
    pub polar: PolarKinematics,
    /// Applied pitch angle, rad.
    pub theta: f64,
    /// Thrust-direction rate magnitude from the steering law (NaN outside its domain).
    pub omega: f64,
    pub thrust: f64,
    /// Accumulated gravity loss, m/s.
    pub dv_gravity: f64,
    /// Accumulated angle-of-attack loss, m/s.
    pub dv_aoa: f64,
    /// Accumulated `int T/m dt`, m/s.
    pub thrust_impulse: f64,
}

/// The terminal zero of the flight path angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub time: f64,
    /// Perigee when gamma rose through zero, apogee when it fell.
    pub apsis: Apsis,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub injection: Injection,
    pub profile: ThrustProfile,
    pub propulsion: Propulsion,
    pub constants: Constants,
    pub program: PitchProgram,
    pub t0: f64,
    /// Smallest flight path angle seen at step boundaries and samples, rad.
    pub min_gamma: f64,
    segments: Vec<DenseSegment<STATE_DIM>>,
}

impl Trajectory {
    pub fn t_final(&self) -> f64 {
        self.injection.time
    }

    pub fn initial(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least two points")
    }

    pub fn step_count(&self) -> usize {
        self.segments.len()
    }

    fn raw_at(&self, t: f64) -> Result<Raw> {
        let (first, last) = (self.segments[0].t_start, self.t_final());
        if t < first || t > last {
            return Err(Error::InvalidInput(format!("t = {t} s is outside the trajectory [{first}, {last}]")));
        }
        let idx = self.segments.partition_point(|s| s.t_end() < t).min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        Ok(if t == seg.t_end() { seg.end_state() } else { seg.eval(t) })
    }

    /// Dense-output state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<PlanarState> {
        Ok(to_state(&self.raw_at(t)?, t))
    }

    /// Fully populated sample at time `t`.
    pub fn point_at(&self, t: f64) -> Result<TrajectoryPoint> {
        let y = self.raw_at(t)?;
        make_point(&y, t, self.profile.thrust_at(t, self.t0), &self.constants, self.program)
    }
}

fn make_point(y: &Raw, t: f64, thrust: f64, c: &Constants, program: PitchProgram) -> Result<TrajectoryPoint> {
    let state = to_state(y, t);
    let polar = state.polar()?;
    let theta = program.pitch(polar.r, polar.v, polar.gamma, c)?;
    Ok(TrajectoryPoint {
        time: t,
        state,
        polar,
        theta,
        omega: angular_rate(polar.r, theta, c).unwrap_or(f64::NAN),
        thrust,
        dv_gravity: y[5],
        dv_aoa: y[6],
        thrust_impulse: y[7],
    })
}

/// Propagate under the optimal closed-loop law until the injection event.
pub fn propagate(
    initial: &PlanarState,
    profile: &ThrustProfile,
    prop: &Propulsion,
    mode: InjectionMode,
    cfg: &IntegratorConfig,
    c: &Constants,
) -> Result<Trajectory> {
    propagate_with(initial, profile, prop, mode, cfg, c, PitchProgram::Optimal)
}

/// Propagate under an arbitrary pitch program.
pub fn propagate_with(
    initial: &PlanarState,
    profile: &ThrustProfile,
    prop: &Propulsion,
    mode: InjectionMode,
    cfg: &IntegratorConfig,
    c: &Constants,
    program: PitchProgram,
) -> Result<Trajectory> {
    profile.validate()?;
    prop.validate()?;
    cfg.validate()?;
    c.validate()?;
    if !(initial.mass > 0.0) {
        return Err(Error::InvalidInput(format!("initial mass must be positive, got {}", initial.mass)));
    }
    let kin0 = initial.polar()?;
    if !(kin0.gamma.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidInput(format!(
            "initial flight path angle {} rad must be strictly inside (-pi/2, pi/2)",
            kin0.gamma
        )));
    }

    let stepper = cfg.stepper();
    let t0 = initial.time;
    let t_limit = t0 + cfg.max_time;
    let mut t = t0;
    let mut y: Raw =
        [initial.position.x, initial.position.y, initial.velocity.x, initial.velocity.y, initial.mass, 0.0, 0.0, 0.0];
    let mut g_prev = sin_gamma(&y);
    let mut min_gamma = kin0.gamma;
    let mut segments: Vec<DenseSegment<STATE_DIM>> = Vec::new();

    for piece in profile.pieces(t0) {
        let sys = AscentOde { piece, prop, c, program };
        // The piece ends at the earliest of: its own end, the time limit, the
        // thrust reaching zero, or the propellant running out.
        let mut stop = (t_limit, Some(Error::NoInjection { time: t_limit }));
        let mut consider = |time: f64, err: Option<Error>| {
            if time < stop.0 {
                stop = (time, err);
            }
        };
        if let Some(end) = piece.end {
            consider(end, None);
        }
        if let Some(t_zero) = piece.zero_time() {
            consider(t_zero, Some(Error::NonPositiveThrust { time: t_zero, thrust: 0.0 }));
        }
        let floor = DRY_FLOOR * initial.mass;
        if let Some(t_dep) = piece.burn_time(t, y[4] - floor, prop.exhaust_velocity) {
            consider(t_dep, Some(Error::MassDepleted { time: t_dep }));
        }
        let (piece_end, stop_err) = stop;
        if t >= piece_end {
            if let Some(err) = stop_err {
                return Err(err);
            }
            continue;
        }

        let mut dy = sys.rhs(t, &y)?;
        let mut h = initial_step(&sys, t, &y, &dy, &stepper)?;
        while t < piece_end {
            let (mut step, h_next) = stepper.adaptive_step(&sys, t, &y, &dy, h, piece_end)?;
            let g_new = sin_gamma(&step.y);
            if mode.triggers(g_prev, g_new) {
                let last = refine_event(&stepper, &sys, t, &y, &dy, &step, g_prev, cfg.event_tol)?;
                let t_f = last.dense.t_end();
                min_gamma = min_gamma.min(sin_gamma(&last.y).asin());
                segments.push(last.dense);
                let injection = Injection {
                    time: t_f,
                    apsis: if g_prev < 0.0 { Apsis::Perigee } else { Apsis::Apogee },
                    gamma: 0.0,
                };
                return finish(
                    segments,
                    injection,
                    *profile,
                    *prop,
                    *c,
                    program,
                    t0,
                    cfg,
                    min_gamma,
                    piece.thrust(t_f),
                );
            }
            min_gamma = min_gamma.min(g_new.asin());
            if step.dense.t_end() >= piece_end || (piece_end - step.dense.t_end()) < 1e-9 {
                // land exactly on the boundary so the next piece restarts there
                step.dense.snap_end(piece_end);
            }
            t = step.dense.t_end();
            y = step.y;
            dy = step.dy;
            h = h_next;
            g_prev = g_new;
            segments.push(step.dense);
        }
        if let Some(err) = stop_err {
            return Err(err);
        }
    }
    Err(Error::NoInjection { time: t })
}

/// Locate the zero of sin(gamma) inside an accepted step and return the exact
/// Runge-Kutta step that ends on it.
#[allow(clippy::too_many_arguments)]
fn refine_event(
    stepper: &Dopri5<STATE_DIM>,
    sys: &AscentOde<'_>,
    t: f64,
    y: &Raw,
    dy: &Raw,
    accepted: &integrator::Step<STATE_DIM>,
    g_start: f64,
    event_tol: f64,
) -> Result<integrator::Step<STATE_DIM>> {
    let h_full = accepted.dense.h;
    let g_end = sin_gamma(&accepted.y);

    // First guess from the dense output: Illinois iteration on the interpolant.
    let dense_g = |s: f64| sin_gamma(&accepted.dense.eval(t + s));
    let (mut a, mut fa, mut b, mut fb) = (0.0, g_start, h_full, g_end);
    let mut guess = h_full;
    for _ in 0..100 {
        let s = b - fb * (b - a) / (fb - fa);
        let fs = dense_g(s);
        guess = s;
        if fs == 0.0 || (b - a).abs() < 1e-12 * h_full {
            break;
        }
        if (fs > 0.0) == (fb > 0.0) {
            fa *= 0.5;
        } else {
            a = b;
            fa = fb;
        }
        b = s;
        fb = fs;
        if fs.abs() < 0.01 * event_tol {
            break;
        }
    }

    // Polish on exact steps: secant in the step size, bracketed by [0, h_full].
    let (mut lo, mut f_lo, mut hi, mut f_hi) = (0.0, g_start, h_full, g_end);
    let mut s = guess.clamp(1e-9 * h_full, h_full);
    let mut best: Option<integrator::Step<STATE_DIM>> = None;
    for _ in 0..60 {
        let step = stepper.step(sys, t, y, dy, s)?;
        let g = sin_gamma(&step.y);
        if g.asin().abs() < event_tol {
            return Ok(step);
        }
        if (g > 0.0) == (f_hi > 0.0) {
            hi = s;
            f_hi = g;
        } else {
            lo = s;
            f_lo = g;
        }
        best = Some(step);
        let secant = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        s = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 * h_full {
            break;
        }
    }
    Ok(best.expect("at least one refinement step"))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    segments: Vec<DenseSegment<STATE_DIM>>,
    mut injection: Injection,
    profile: ThrustProfile,
    propulsion: Propulsion,
    constants: Constants,
    program: PitchProgram,
    t0: f64,
    cfg: &IntegratorConfig,
    mut min_gamma: f64,
    final_thrust: f64,
) -> Result<Trajectory> {
    let t_f = injection.time;
    let mut traj =
        Trajectory { points: Vec::new(), injection, profile, propulsion, constants, program, t0, min_gamma, segments };

    let n = ((t_f - t0) / cfg.sample_interval).ceil() as usize;
    let mut points = Vec::with_capacity(n + 1);
    for k in 0..n {
        let t = t0 + k as f64 * cfg.sample_interval;
        if t >= t_f {
            break;
        }
        let p = traj.point_at(t)?;
        min_gamma = min_gamma.min(p.polar.gamma);
        points.push(p);
    }
    let y_f = traj.segments.last().expect("non-empty").end_state();
    let last = make_point(&y_f, t_f, final_thrust, &constants, program)?;
    injection.gamma = last.polar.gamma;
    points.push(last);
    if points.len() < 2 {
        // injection within the first sample interval: keep both endpoints
        let first = traj.point_at(t0)?;
        points.insert(0, first);
    }
    traj.points = points;
    traj.injection = injection;
    traj.min_gamma = min_gamma;
    Ok(traj)
}
