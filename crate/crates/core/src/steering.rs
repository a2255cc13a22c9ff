//! Closed-loop optimal thrust direction.
//!
//! Along a minimum-fuel arc with a linear or bilevel thrust level, the pitch
//! angle `theta` (thrust direction above the local horizontal) depends only on
//! the current `(r, v, gamma)` through the implicit relation
//!
//! ```text
//! sin(gamma - theta) = (v_c / v) sin(theta) / sqrt(1 - 3 sin^2(theta)),   v_c = sqrt(mu / r)
//! ```
//!
//! together with the thrust-direction rate `omega = sqrt(mu/r^3 (1 - 3 sin^2 theta))`
//! and closed-form position/velocity costates.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbital::{circular_speed, Constants};

/// Largest admissible pitch magnitude, `asin(1/sqrt(3))`; beyond it `omega` is imaginary.
pub fn theta_max() -> f64 {
    (1.0 / 3f64.sqrt()).asin()
}

const RESIDUAL_TARGET: f64 = 1e-15;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringSolution {
    pub theta: f64,
    pub omega: f64,
    pub omega_dot: f64,
}

/// Costates reconstructed from the pitch angle, normalized so `|p_v| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostateReconstruction {
    pub p_r: Vector2<f64>,
    pub p_v: Vector2<f64>,
    pub p_m: f64,
}

/// Residual of the implicit pitch equation, `speed_ratio = v_c / v`.
pub fn pitch_residual(theta: f64, gamma: f64, speed_ratio: f64) -> f64 {
    let s = theta.sin();
    (gamma - theta).sin() - speed_ratio * s / (1.0 - 3.0 * s * s).sqrt()
}

fn pitch_residual_slope(theta: f64, gamma: f64, speed_ratio: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let q = 1.0 - 3.0 * s * s;
    -(gamma - theta).cos() - speed_ratio * c / (q * q.sqrt())
}

/// Optimal pitch angle for the kinematic state `(r, v, gamma)`.
///
/// The root is taken on the branch `|theta| < theta_max()` with the sign of
/// `gamma`. The residual is strictly decreasing in `theta` there, so the root is
/// unique and lies between 0 and `min(gamma, theta_max)`.
pub fn solve_pitch(r: f64, v: f64, gamma: f64, c: &Constants) -> Result<f64> {
    if !(r > 0.0) || !(v > 0.0) {
        return Err(Error::Domain(format!("need r > 0 and v > 0 (r = {r}, v = {v})")));
    }
    if !(gamma.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("flight path angle {gamma} rad is not strictly inside (-pi/2, pi/2)")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let ratio = circular_speed(r, c) / v;
    let theta = solve_positive_branch(gamma.abs(), ratio);
    Ok(theta.copysign(gamma))
}

// Bracketed secant with bisection fallback, for gamma > 0.
fn solve_positive_branch(gamma: f64, ratio: f64) -> f64 {
    let f = |t: f64| pitch_residual(t, gamma, ratio);
    let mut lo = 0.0;
    let mut f_lo = gamma.sin();
    let (mut hi, mut f_hi) = if gamma < theta_max() { (gamma, f(gamma)) } else { (theta_max(), f64::NEG_INFINITY) };
    let mut best = (lo, f_lo);
    let mut width = hi - lo;

    for _ in 0..MAX_ITER {
        let secant = if f_hi.is_finite() { hi - f_hi * (hi - lo) / (f_hi - f_lo) } else { f64::NAN };
        let x = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() <= RESIDUAL_TARGET {
            return x;
        }
        if fx > 0.0 {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
            f_hi = fx;
        }
        // Force a bisection when the secant stalls on one side.
        let new_width = hi - lo;
        if new_width > 0.5 * width {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm.abs() < best.1.abs() {
                best = (mid, fm);
            }
            if fm > 0.0 {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
        }
        width = hi - lo;
        if width <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    // Polish with one Newton step if it helps (the slope is available in closed form).
    let (x, fx) = best;
    let polished = x - fx / pitch_residual_slope(x, gamma, ratio);
    if polished > 0.0 && polished < theta_max() && f(polished).abs() < fx.abs() {
        polished
    } else {
        x
    }
}

/// Inertial angular rate of the thrust direction, `sqrt(mu/r^3 (1 - 3 sin^2 theta))`.
///
/// Returned positive: it is the rate `phi_dot - theta_dot` of the thrust
/// direction on a prograde ascent.
pub fn angular_rate(r: f64, theta: f64, c: &Constants) -> Result<f64> {
    let s = theta.sin();
    let q = 1.0 - 3.0 * s * s;
    if q < -1e-12 {
        return Err(Error::Domain(format!("sin^2(theta) = {} exceeds 1/3", s * s)));
    }
    Ok((c.mu / (r * r * r) * q.max(0.0)).sqrt())
}

/// `-(3 mu / r^3) sin(theta) cos(theta)`.
pub fn angular_rate_derivative(r: f64, theta: f64, c: &Constants) -> f64 {
    let (s, co) = theta.sin_cos();
    -3.0 * c.mu / (r * r * r) * s * co
}

pub fn steering_solution(r: f64, v: f64, gamma: f64, c: &Constants) -> Result<SteeringSolution> {
    let theta = solve_pitch(r, v, gamma, c)?;
    Ok(SteeringSolution { theta, omega: angular_rate(r, theta, c)?, omega_dot: angular_rate_derivative(r, theta, c) })
}

/// Costates in closed form:
/// `p_r = omega (-cos(theta - phi), sin(theta - phi))`,
/// `p_v = (sin(theta - phi), cos(theta - phi))`, `p_m = v_e / m`.
///
/// `omega` is used exactly as given; the sign that makes the Hamiltonian
/// vanish is resolved by [`crate::pmp_verify`].
pub fn reconstruct_costates(theta: f64, phi: f64, omega: f64, mass: f64, v_e: f64) -> CostateReconstruction {
    debug_assert!(mass > 0.0 && v_e > 0.0);
    let (s, c) = (theta - phi).sin_cos();
    CostateReconstruction { p_r: Vector2::new(-omega * c, omega * s), p_v: Vector2::new(s, c), p_m: v_e / mass }
}

/// Unit thrust vector at pitch `theta` above the local horizontal at longitude `phi`.
pub fn thrust_direction(theta: f64, phi: f64) -> Vector2<f64> {
    let (s, c) = (theta - phi).sin_cos();
    Vector2::new(s, c)
}

/// Pitch program used to close the loop during propagation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchProgram {
    /// The optimal closed-loop law.
    #[default]
    Optimal,
    /// Optimal pitch plus a constant offset (rad); deliberately non-optimal.
    Offset(f64),
    /// Thrust along the velocity (`theta = gamma`), zero angle of attack.
    VelocityAligned,
}

impl PitchProgram {
    pub fn pitch(&self, r: f64, v: f64, gamma: f64, c: &Constants) -> Result<f64> {
        match *self {
            PitchProgram::Optimal => solve_pitch(r, v, gamma, c),
            PitchProgram::Offset(delta) => Ok(solve_pitch(r, v, gamma, c)? + delta),
            PitchProgram::VelocityAligned => Ok(gamma),
        }
    }
}
