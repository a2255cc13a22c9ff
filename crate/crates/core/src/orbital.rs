//! Planar two-body mechanics.
//!
//! Cartesian states, polar kinematics `(r, v, gamma, phi)` and orbit shape
//! descriptors (specific energy, angular momentum, apsides). Everything is SI.
//!
//! Polar convention: the position is `r (cos phi, sin phi)` and the velocity is
//! `v (-sin(phi - gamma), cos(phi - gamma))`, so `gamma` is measured from the
//! local horizontal (positive upward) and prograde motion is counter-clockwise.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the central body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Gravitational parameter, m^3/s^2.
    pub mu: f64,
    /// Equatorial radius, m. Altitudes are measured above it.
    pub earth_radius: f64,
    /// Standard gravity, m/s^2. Only used for Isp and thrust-to-weight conversions.
    pub g0: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { mu: 3.986005e14, earth_radius: 6_378_137.0, g0: 9.80665 }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.earth_radius > 0.0) || !(self.g0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "constants must be positive (mu = {}, earth_radius = {}, g0 = {})",
                self.mu, self.earth_radius, self.g0
            )));
        }
        Ok(())
    }

    /// Radius of a point at geometric altitude `altitude` (m).
    pub fn radius(&self, altitude: f64) -> f64 {
        self.earth_radius + altitude
    }

    pub fn altitude(&self, radius: f64) -> f64 {
        radius - self.earth_radius
    }
}

/// Integrated state of the point-mass vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub mass: f64,
    pub time: f64,
}

impl PlanarState {
    pub fn from_polar(kin: &PolarKinematics, mass: f64, time: f64) -> Self {
        let (position, velocity) = kin.to_cartesian();
        Self { position, velocity, mass, time }
    }

    pub fn polar(&self) -> Result<PolarKinematics> {
        PolarKinematics::from_cartesian(&self.position, &self.velocity)
    }

    pub fn radius(&self) -> f64 {
        self.position.norm()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Radius, speed, flight path angle and longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarKinematics {
    pub r: f64,
    pub v: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl PolarKinematics {
    pub fn from_cartesian(position: &Vector2<f64>, velocity: &Vector2<f64>) -> Result<Self> {
        let r = position.norm();
        let v = velocity.norm();
        if !(r > 0.0) {
            return Err(Error::InvalidInput("position at the origin".into()));
        }
        if !(v > 0.0) {
            return Err(Error::InvalidInput("zero velocity leaves the flight path angle undefined".into()));
        }
        let radial = position.dot(velocity) / r;
        let horizontal = position.perp(velocity) / r;
        Ok(Self { r, v, gamma: radial.atan2(horizontal), phi: position.y.atan2(position.x) })
    }

    pub fn to_cartesian(&self) -> (Vector2<f64>, Vector2<f64>) {
        let (s_phi, c_phi) = self.phi.sin_cos();
        let (s_dir, c_dir) = (self.phi - self.gamma).sin_cos();
        (Vector2::new(self.r * c_phi, self.r * s_phi), Vector2::new(-self.v * s_dir, self.v * c_dir))
    }
}

/// Which apsis of an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Apsis {
    Perigee,
    Apogee,
}

/// Orbit shape in terms of specific energy and angular momentum.
///
/// The remaining descriptors are derived on demand; apsides only exist for
/// bound, non-radial orbits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitShape {
    /// Specific energy `v^2/2 - mu/r`, J/kg.
    pub energy: f64,
    /// Specific angular momentum modulus, m^2/s.
    pub ang_momentum: f64,
    mu: f64,
}

impl OrbitShape {
    pub fn new(energy: f64, ang_momentum: f64, c: &Constants) -> Self {
        Self { energy, ang_momentum: ang_momentum.abs(), mu: c.mu }
    }

    pub fn is_closed(&self) -> bool {
        self.energy < 0.0
    }

    pub fn is_radial(&self) -> bool {
        self.ang_momentum == 0.0
    }

    pub fn semi_major(&self) -> Option<f64> {
        self.is_closed().then(|| -self.mu / (2.0 * self.energy))
    }

    pub fn eccentricity(&self) -> f64 {
        let h = self.ang_momentum;
        let e2 = 1.0 + 2.0 * self.energy * h * h / (self.mu * self.mu);
        e2.max(0.0).sqrt()
    }

    /// `(r_apogee, r_perigee)` for bound non-radial orbits.
    pub fn apsis_radii(&self) -> Option<(f64, f64)> {
        let a = self.semi_major()?;
        let e = self.eccentricity();
        if self.is_radial() || e >= 1.0 {
            return None;
        }
        let h = self.ang_momentum;
        let r_p = h * h / (self.mu * (1.0 + e));
        Some((a * (1.0 + e), r_p))
    }

    pub fn apsis_radius(&self, which: Apsis) -> Option<f64> {
        let (r_a, r_p) = self.apsis_radii()?;
        Some(match which {
            Apsis::Apogee => r_a,
            Apsis::Perigee => r_p,
        })
    }
}

/// Energy and angular momentum of a Cartesian state.
pub fn shape_from_state(state: &PlanarState, c: &Constants) -> Result<OrbitShape> {
    let r = state.radius();
    let v = state.speed();
    if !(r > 0.0) || !(v > 0.0) {
        return Err(Error::InvalidInput(format!("shape needs r > 0 and v > 0 (r = {r}, v = {v})")));
    }
    let energy = 0.5 * v * v - c.mu / r;
    let h = state.position.perp(&state.velocity);
    Ok(OrbitShape::new(energy, h, c))
}

/// Energy and angular momentum from polar kinematics (`h = r v cos gamma`).
pub fn shape_from_polar(kin: &PolarKinematics, c: &Constants) -> Result<OrbitShape> {
    if !(kin.r > 0.0) || !(kin.v > 0.0) {
        return Err(Error::InvalidInput(format!("shape needs r > 0 and v > 0 (r = {}, v = {})", kin.r, kin.v)));
    }
    let energy = 0.5 * kin.v * kin.v - c.mu / kin.r;
    Ok(OrbitShape::new(energy, kin.r * kin.v * kin.gamma.cos(), c))
}

/// Orbit with the given apogee and perigee altitudes (m). Negative perigee
/// altitudes are legal as long as the perigee radius stays positive.
pub fn shape_from_apsides(apogee_alt: f64, perigee_alt: f64, c: &Constants) -> Result<OrbitShape> {
    shape_from_apsis_radii(c.radius(apogee_alt), c.radius(perigee_alt), c)
}

pub fn shape_from_apsis_radii(r_a: f64, r_p: f64, c: &Constants) -> Result<OrbitShape> {
    if !(r_p > 0.0) {
        return Err(Error::InvalidInput(format!("perigee radius must be positive, got {r_p} m")));
    }
    if !(r_a >= r_p) {
        return Err(Error::InvalidInput(format!("apogee radius {r_a} m is below perigee radius {r_p} m")));
    }
    let sum = r_a + r_p;
    let energy = -c.mu / sum;
    // h^2 = mu a (1 - e^2) = 2 mu r_a r_p / (r_a + r_p)
    let h = (2.0 * c.mu * r_a * r_p / sum).sqrt();
    Ok(OrbitShape::new(energy, h, c))
}

/// Speed at an apsis, where the velocity is horizontal.
pub fn apsis_speed(shape: &OrbitShape, which: Apsis) -> Result<f64> {
    if shape.is_radial() {
        return Err(Error::DegenerateOrbit("radial orbit has no apsis speed".into()));
    }
    let r = shape
        .apsis_radius(which)
        .ok_or_else(|| Error::DegenerateOrbit("apsides are only defined for bound orbits".into()))?;
    Ok(shape.ang_momentum / r)
}

pub fn circular_speed(r: f64, c: &Constants) -> f64 {
    debug_assert!(r > 0.0);
    (c.mu / r).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c() -> Constants {
        Constants::default()
    }

    #[test]
    fn initial_ascent_state_apsides() {
        let c = c();
        let kin = PolarKinematics { r: c.radius(150e3), v: 5000.0, gamma: 30f64.to_radians(), phi: 0.0 };
        let shape = shape_from_polar(&kin, &c).unwrap();
        let (r_a, r_p) = shape.apsis_radii().unwrap();
        assert!((c.altitude(r_a) / 1e3 - 661.7).abs() < 0.05);
        assert!((c.altitude(r_p) / 1e3 + 5209.4).abs() < 0.05);

        // and back from the printed apsides
        let back = shape_from_apsides(661.7e3, -5209.4e3, &c).unwrap();
        assert_relative_eq!(back.energy, shape.energy, max_relative = 1e-5);
        assert_relative_eq!(back.ang_momentum, shape.ang_momentum, max_relative = 1e-5);
    }

    #[test]
    fn circular_state_has_zero_eccentricity() {
        let c = c();
        let r0 = c.radius(300e3);
        let kin = PolarKinematics { r: r0, v: circular_speed(r0, &c), gamma: 0.0, phi: 1.0 };
        let shape = shape_from_polar(&kin, &c).unwrap();
        assert!(shape.eccentricity() < 1e-7);
        let (r_a, r_p) = shape.apsis_radii().unwrap();
        assert_relative_eq!(r_a, r0, max_relative = 1e-12);
        assert_relative_eq!(r_p, r0, max_relative = 1e-12);

        let same = shape_from_apsides(300e3, 300e3, &c).unwrap();
        assert_eq!(same.eccentricity(), 0.0);
    }

    #[test]
    fn gto_shape() {
        let c = c();
        let gto = shape_from_apsides(36_000e3, 300e3, &c).unwrap();
        assert_relative_eq!(gto.semi_major().unwrap(), 24_528_137.0, max_relative = 1e-14);
        assert_relative_eq!(gto.eccentricity(), 0.727_735_661_293_803, max_relative = 1e-12);
        assert_relative_eq!(gto.energy, -8_125_372.505_869_48, max_relative = 1e-12);
        assert_relative_eq!(gto.ang_momentum, 6.781_647_786_316_907e10, max_relative = 1e-12);

        // state at perigee reproduces the same shape
        let r_p = c.radius(300e3);
        let v_p = apsis_speed(&gto, Apsis::Perigee).unwrap();
        let state =
            PlanarState { position: Vector2::new(r_p, 0.0), velocity: Vector2::new(0.0, v_p), mass: 1.0, time: 0.0 };
        let s = shape_from_state(&state, &c).unwrap();
        assert_relative_eq!(s.energy, gto.energy, max_relative = 1e-12);
        assert_relative_eq!(s.ang_momentum, r_p * 10_155.0, max_relative = 1e-6);
    }

    #[test]
    fn apsis_speeds() {
        let c = c();
        let gto = shape_from_apsides(36_000e3, 300e3, &c).unwrap();
        let v_p = apsis_speed(&gto, Apsis::Perigee).unwrap();
        let v_a = apsis_speed(&gto, Apsis::Apogee).unwrap();
        assert!((v_p - 10_155.0).abs() < 0.5);
        assert_relative_eq!(v_p, 10_154.999_495_094_08, max_relative = 1e-12);
        assert_relative_eq!(v_a, 1_600.270_390_913_34, max_relative = 1e-12);

        let r = c.radius(500e3);
        let circ = shape_from_apsis_radii(r, r, &c).unwrap();
        for which in [Apsis::Perigee, Apsis::Apogee] {
            assert_relative_eq!(apsis_speed(&circ, which).unwrap(), circular_speed(r, &c), max_relative = 1e-14);
        }
    }

    #[test]
    fn apsis_speed_rejects_open_and_radial() {
        let c = c();
        let hyperbolic = OrbitShape::new(1e6, 7e10, &c);
        assert!(apsis_speed(&hyperbolic, Apsis::Perigee).is_err());
        let radial = OrbitShape::new(-1e7, 0.0, &c);
        assert!(matches!(apsis_speed(&radial, Apsis::Perigee), Err(Error::DegenerateOrbit(_))));
    }

    #[test]
    fn circular_speeds() {
        let c = c();
        assert_relative_eq!(circular_speed(6_528_137.0, &c), 7_814.015_881_741_86, max_relative = 1e-13);
        assert_relative_eq!(circular_speed(c.radius(300e3), &c), 7_725.760_796_099_63, max_relative = 1e-13);
        let r = 7e6;
        assert_relative_eq!(circular_speed(4.0 * r, &c), 0.5 * circular_speed(r, &c), max_relative = 1e-15);
    }

    #[test]
    fn apogee_below_perigee_is_rejected() {
        let c = c();
        assert!(matches!(shape_from_apsides(200e3, 300e3, &c), Err(Error::InvalidInput(_))));
        assert!(shape_from_apsides(300e3, -7000e3, &c).is_err());
    }

    #[test]
    fn polar_conversions() {
        let (pos, vel) = (Vector2::new(7e6, 0.0), Vector2::new(0.0, 7500.0));
        let k = PolarKinematics::from_cartesian(&pos, &vel).unwrap();
        assert_eq!(k.phi, 0.0);
        assert_eq!(k.gamma, 0.0);

        // phi = 90 deg, gamma = 30 deg from the polar relations, then inverted
        let (r, v, g) = (7e6, 6000.0, 30f64.to_radians());
        let phi = PI / 2.0;
        let pos = Vector2::new(0.0, r);
        let vel = Vector2::new(-v * (phi - g).sin(), v * (phi - g).cos());
        let k = PolarKinematics::from_cartesian(&pos, &vel).unwrap();
        assert_relative_eq!(k.gamma, g, max_relative = 1e-14);
        assert_relative_eq!(k.phi, phi, max_relative = 1e-15);

        assert!(PolarKinematics::from_cartesian(&pos, &Vector2::zeros()).is_err());
    }

    #[test]
    fn polar_round_trip_on_initial_state() {
        let c = c();
        let k = PolarKinematics { r: c.radius(150e3), v: 5000.0, gamma: 30f64.to_radians(), phi: 0.0 };
        let s = PlanarState::from_polar(&k, 10_000.0, 0.0);
        let back = s.polar().unwrap();
        assert_relative_eq!(back.r, k.r, max_relative = 1e-12);
        assert_relative_eq!(back.v, k.v, max_relative = 1e-12);
        assert_relative_eq!(back.gamma, k.gamma, max_relative = 1e-12);
        assert!(back.phi.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn shape_apsides_round_trip(
            alt in 100e3f64..2000e3,
            v in 4000.0f64..10_500.0,
            gamma in -1.4f64..1.4,
            phi in -3.0f64..3.0,
        ) {
            let c = c();
            let k = PolarKinematics { r: c.radius(alt), v, gamma, phi };
            let shape = shape_from_state(&PlanarState::from_polar(&k, 1.0, 0.0), &c).unwrap();
            prop_assume!(shape.is_closed());
            let (r_a, r_p) = shape.apsis_radii().unwrap();
            prop_assert!(r_a >= r_p);
            let back = shape_from_apsis_radii(r_a, r_p, &c).unwrap();
            prop_assert!(((back.energy - shape.energy) / shape.energy).abs() < 1e-10);
            prop_assert!(((back.ang_momentum - shape.ang_momentum) / shape.ang_momentum).abs() < 1e-10);

            let v_p = apsis_speed(&shape, Apsis::Perigee).unwrap();
            let v_a = apsis_speed(&shape, Apsis::Apogee).unwrap();
            prop_assert!(v_p >= v_a);
        }

        #[test]
        fn angular_momentum_two_ways(
            r in 6.5e6f64..8e6,
            v in 1000.0f64..11_000.0,
            gamma in -1.5f64..1.5,
            phi in -3.1f64..3.1,
        ) {
            let c = c();
            let k = PolarKinematics { r, v, gamma, phi };
            let cart = shape_from_state(&PlanarState::from_polar(&k, 1.0, 0.0), &c).unwrap();
            let polar = shape_from_polar(&k, &c).unwrap();
            prop_assert!(((cart.ang_momentum - polar.ang_momentum) / polar.ang_momentum).abs() < 1e-12);
        }
    }
}
