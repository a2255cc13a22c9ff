//! Analytic performance guess and post-flight velocity-loss accounting.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::orbital::{apsis_speed, circular_speed, Apsis, Constants, OrbitShape, PolarKinematics};
use crate::steering::{angular_rate, solve_pitch};

/// Velocity budget of an ascent, m/s (mass in kg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `int g sin(gamma) dt`
    pub dv_gravity: f64,
    /// `int (T/m) (1 - cos(theta - gamma)) dt`; zero in the analytic estimate.
    pub dv_aoa: f64,
    /// Speed gain `v_f - v_0`.
    pub speed_gain: f64,
    /// Total impulse `int T/m dt = v_e ln(m0 / m_f)`.
    pub dv_total_impulse: f64,
    /// Final mass given by the rocket equation for `dv_total_impulse`.
    pub m_f_est: f64,
}

impl LossBreakdown {
    /// `speed_gain + losses - total impulse`; zero up to quadrature error.
    pub fn impulse_identity_residual(&self) -> f64 {
        self.speed_gain + self.dv_gravity + self.dv_aoa - self.dv_total_impulse
    }
}

/// Gravity-loss estimate `v_c(r0) gamma0^2 / 4`.
pub fn gravity_loss_estimate(r0: f64, gamma0: f64, c: &Constants) -> f64 {
    0.25 * circular_speed(r0, c) * gamma0 * gamma0
}

/// Intermediate form of the gravity-loss estimate, `2/3 r (|omega_f| - |omega_0|)`,
/// from the thrust-direction rate magnitudes at both ends. Cross-check only.
pub fn gravity_loss_from_rates(r: f64, rate0: f64, rate_f: f64) -> f64 {
    2.0 / 3.0 * r * (rate_f - rate0)
}

/// Rocket-equation final mass for a perigee injection on `target`.
pub fn final_mass_estimate(m0: f64, v0: f64, target: &OrbitShape, dv_gravity: f64, v_e: f64) -> Result<f64> {
    if !(m0 > 0.0) || !(v_e > 0.0) {
        return Err(Error::InvalidInput(format!("need m0 > 0 and v_e > 0 (m0 = {m0}, v_e = {v_e})")));
    }
    let v_p = apsis_speed(target, Apsis::Perigee)?;
    Ok(m0 * (-(dv_gravity + v_p - v0) / v_e).exp())
}

/// Pre-flight guess for a perigee injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    pub circular_speed0: f64,
    pub target_perigee_speed: f64,
    pub dv_gravity: f64,
    /// Cross-check of `dv_gravity` through the rate form with the exact initial pitch.
    pub dv_gravity_rate_form: f64,
    pub dv_total: f64,
    pub m_f_est: f64,
    /// Estimated burn duration at the seed thrust level, s.
    pub burn_time_est: Option<f64>,
}

impl PerformanceEstimate {
    pub fn losses(&self, v0: f64) -> LossBreakdown {
        LossBreakdown {
            dv_gravity: self.dv_gravity,
            dv_aoa: 0.0,
            speed_gain: self.target_perigee_speed - v0,
            dv_total_impulse: self.dv_total,
            m_f_est: self.m_f_est,
        }
    }
}

pub fn estimate(
    initial: &PolarKinematics,
    m0: f64,
    target: &OrbitShape,
    v_e: f64,
    seed_thrust: Option<f64>,
    c: &Constants,
) -> Result<PerformanceEstimate> {
    let dv_gravity = gravity_loss_estimate(initial.r, initial.gamma, c);
    let v_p = apsis_speed(target, Apsis::Perigee)?;
    let m_f_est = final_mass_estimate(m0, initial.v, target, dv_gravity, v_e)?;

    let theta0 = solve_pitch(initial.r, initial.v, initial.gamma, c)?;
    let rate_form =
        gravity_loss_from_rates(initial.r, angular_rate(initial.r, theta0, c)?, angular_rate(initial.r, 0.0, c)?);
    Ok(PerformanceEstimate {
        circular_speed0: circular_speed(initial.r, c),
        target_perigee_speed: v_p,
        dv_gravity,
        dv_gravity_rate_form: rate_form,
        dv_total: dv_gravity + v_p - initial.v,
        m_f_est,
        burn_time_est: seed_thrust.filter(|t| *t > 0.0).map(|t| (m0 - m_f_est) * v_e / t),
    })
}

/// Loss budget read from the accumulators carried by a propagated trajectory.
pub fn accumulate_losses(traj: &Trajectory) -> LossBreakdown {
    let first = traj.initial();
    let last = traj.last();
    let m0 = first.state.mass;
    LossBreakdown {
        dv_gravity: last.dv_gravity,
        dv_aoa: last.dv_aoa,
        speed_gain: last.polar.v - first.polar.v,
        dv_total_impulse: last.thrust_impulse,
        m_f_est: m0 * (-last.thrust_impulse / traj.propulsion.exhaust_velocity).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::shape_from_apsides;
    use approx::assert_relative_eq;

    const R0: f64 = 6_528_137.0;

    #[test]
    fn gravity_loss_guess() {
        let c = Constants::default();
        let g0 = 30f64.to_radians();
        let dv = gravity_loss_estimate(R0, g0, &c);
        assert!((dv - 536.0).abs() < 0.5);
        assert_relative_eq!(dv, 535.564_205_115_428, max_relative = 1e-12);
        assert_eq!(gravity_loss_estimate(R0, 0.0, &c), 0.0);
        assert_relative_eq!(gravity_loss_estimate(R0, 2.0 * g0, &c), 4.0 * dv, max_relative = 1e-14);
    }

    #[test]
    fn rate_form_agrees_in_the_small_angle_limit() {
        let c = Constants::default();
        let gamma0 = 5f64.to_radians();
        let quad = gravity_loss_estimate(R0, gamma0, &c);
        let rates = gravity_loss_from_rates(
            R0,
            angular_rate(R0, 0.5 * gamma0, &c).unwrap(),
            angular_rate(R0, 0.0, &c).unwrap(),
        );
        assert_relative_eq!(rates, quad, max_relative = 0.01);
    }

    #[test]
    fn final_mass_guess() {
        let c = Constants::default();
        let gto = shape_from_apsides(36_000e3, 300e3, &c).unwrap();
        let m_f = final_mass_estimate(10_000.0, 5000.0, &gto, 536.0, 2942.0).unwrap();
        assert!((m_f - 1445.0).abs() < 1.0, "{m_f}");

        let v_p = apsis_speed(&gto, Apsis::Perigee).unwrap();
        assert_eq!(final_mass_estimate(10_000.0, v_p, &gto, 0.0, 2942.0).unwrap(), 10_000.0);
        assert!(final_mass_estimate(10_000.0, 5000.0, &gto, 536.0, 0.0).is_err());
    }

    #[test]
    fn full_estimate() {
        let c = Constants::default();
        let gto = shape_from_apsides(36_000e3, 300e3, &c).unwrap();
        let kin = PolarKinematics { r: R0, v: 5000.0, gamma: 30f64.to_radians(), phi: 0.0 };
        let est = estimate(&kin, 10_000.0, &gto, 2942.0, Some(0.25 * 10_000.0 * c.g0), &c).unwrap();
        assert_relative_eq!(est.m_f_est, 1_445.326_178_188_82, max_relative = 1e-10);
        assert!((est.burn_time_est.unwrap() - 1026.56).abs() < 0.01);
        let l = est.losses(5000.0);
        assert!(l.impulse_identity_residual().abs() < 1e-9);
    }
}
