#![allow(dead_code)]

use upperstage::dynamics::{
    propagate, propagate_with, InjectionMode, IntegratorConfig, Propulsion, ThrustProfile, Trajectory,
};
use upperstage::orbital::{Constants, PlanarState, PolarKinematics};
use upperstage::steering::PitchProgram;

pub const M0: f64 = 10_000.0;
pub const VE: f64 = 2942.0;

pub const TABLE_LINEAR: ThrustProfile = ThrustProfile::Linear { initial: 26_467.0, slope: -10.976 };

pub fn c() -> Constants {
    Constants::default()
}

pub fn initial_kin() -> PolarKinematics {
    PolarKinematics { r: c().radius(150e3), v: 5000.0, gamma: 30f64.to_radians(), phi: 0.0 }
}

pub fn initial() -> PlanarState {
    PlanarState::from_polar(&initial_kin(), M0, 0.0)
}

pub fn prop() -> Propulsion {
    Propulsion { exhaust_velocity: VE }
}

pub fn fly(profile: &ThrustProfile) -> Trajectory {
    propagate(&initial(), profile, &prop(), InjectionMode::Perigee, &IntegratorConfig::default(), &c())
        .expect("propagation")
}

pub fn fly_with(profile: &ThrustProfile, program: PitchProgram) -> Trajectory {
    propagate_with(&initial(), profile, &prop(), InjectionMode::Perigee, &IntegratorConfig::default(), &c(), program)
        .expect("propagation")
}
