//! Scenario files (TOML). Every key carries its unit as a suffix; every
//! section is optional and defaults to the 150 km / 5 km/s / 30 deg upper
//! stage aiming for a 300 x 36 000 km transfer orbit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use upperstage::dynamics::{InjectionMode, IntegratorConfig, Propulsion};
use upperstage::orbital::{shape_from_apsides, Constants, PolarKinematics};
use upperstage::solver::{ProfileKind, ResidualKind, Scenario, SolverSettings};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub constants: ConstantsSection,
    pub initial: InitialSection,
    pub target: TargetSection,
    pub propulsion: PropulsionSection,
    pub profile: ProfileSection,
    pub integrator: IntegratorSection,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    pub mu_m3s2: f64,
    pub earth_radius_m: f64,
    pub g0_ms2: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        let c = Constants::default();
        Self { mu_m3s2: c.mu, earth_radius_m: c.earth_radius, g0_ms2: c.g0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub altitude_km: f64,
    pub velocity_ms: f64,
    pub gamma_deg: f64,
    pub mass_kg: f64,
    /// Longitude of the ignition point; only shifts the reported angles.
    pub phi_deg: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { altitude_km: 150.0, velocity_ms: 5000.0, gamma_deg: 30.0, mass_kg: 10_000.0, phi_deg: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub apogee_km: f64,
    pub perigee_km: f64,
    pub injection: InjectionMode,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { apogee_km: 36_000.0, perigee_km: 300.0, injection: InjectionMode::Perigee }
    }
}

/// Exactly one of the two may be given; neither means `ve_ms = 2942`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropulsionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isp_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ve_ms: Option<f64>,
}

pub const DEFAULT_VE: f64 = 2942.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKindName {
    #[default]
    Linear,
    Bilevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub kind: ProfileKindName,
    /// Switch time after ignition, bilevel only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1_s: Option<f64>,
    /// Starting `[T1, T2]`: N and N/s for linear, N and N for bilevel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guess: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step_s: f64,
    pub event_tol_rad: f64,
    pub max_time_s: f64,
    pub sample_interval_s: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step_s: d.max_step,
            event_tol_rad: d.event_tol,
            max_time_s: d.max_time,
            sample_interval_s: d.sample_interval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub residual_tol_m: f64,
    pub max_iter: usize,
    pub fd_step_rel: f64,
    pub max_halvings: usize,
    pub twr: f64,
    pub residual: ResidualKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverSettings::default();
        Self {
            residual_tol_m: d.residual_tol,
            max_iter: d.max_iter,
            fd_step_rel: d.fd_step,
            max_halvings: d.max_halvings,
            twr: d.twr,
            residual: d.residual,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation { reason: "schema", message: msg.into() }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation { reason: "schema", message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario file serializes")
    }

    pub fn exhaust_velocity(&self) -> Result<f64, CliError> {
        match (self.propulsion.isp_s, self.propulsion.ve_ms) {
            (Some(_), Some(_)) => Err(invalid("give either propulsion.isp_s or propulsion.ve_ms, not both")),
            (Some(isp), None) => Ok(isp * self.constants.g0_ms2),
            (None, Some(ve)) => Ok(ve),
            (None, None) => Ok(DEFAULT_VE),
        }
    }

    /// Same scenario with every default written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if out.propulsion.isp_s.is_none() && out.propulsion.ve_ms.is_none() {
            out.propulsion.ve_ms = Some(DEFAULT_VE);
        }
        out
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let k = &self.constants;
        let constants = Constants { mu: k.mu_m3s2, earth_radius: k.earth_radius_m, g0: k.g0_ms2 };
        let i = &self.initial;
        let t = &self.target;
        if !(t.apogee_km >= t.perigee_km) {
            return Err(invalid(format!(
                "target.apogee_km ({}) must not be below target.perigee_km ({})",
                t.apogee_km, t.perigee_km
            )));
        }
        let target = shape_from_apsides(t.apogee_km * 1e3, t.perigee_km * 1e3, &constants)?;
        let profile = match (self.profile.kind, self.profile.t1_s) {
            (ProfileKindName::Linear, None) => ProfileKind::Linear,
            (ProfileKindName::Linear, Some(_)) => {
                return Err(invalid("profile.t1_s only applies to kind = \"bilevel\""))
            }
            (ProfileKindName::Bilevel, Some(t1)) => ProfileKind::Bilevel { switch_after: t1 },
            (ProfileKindName::Bilevel, None) => return Err(invalid("kind = \"bilevel\" needs profile.t1_s")),
        };
        let g = &self.integrator;
        let s = &self.solver;
        let scenario = Scenario {
            initial: PolarKinematics {
                r: constants.radius(i.altitude_km * 1e3),
                v: i.velocity_ms,
                gamma: i.gamma_deg.to_radians(),
                phi: i.phi_deg.to_radians(),
            },
            mass: i.mass_kg,
            target,
            propulsion: Propulsion { exhaust_velocity: self.exhaust_velocity()? },
            profile,
            mode: t.injection,
            integrator: IntegratorConfig {
                rel_tol: g.rel_tol,
                abs_tol: g.abs_tol,
                max_step: g.max_step_s,
                event_tol: g.event_tol_rad,
                max_time: g.max_time_s,
                sample_interval: g.sample_interval_s,
            },
            settings: SolverSettings {
                residual_tol: s.residual_tol_m,
                max_iter: s.max_iter,
                fd_step: s.fd_step_rel,
                max_halvings: s.max_halvings,
                twr: s.twr,
                residual: s.residual,
            },
            guess: self.profile.guess,
            constants,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        let f = ScenarioFile::parse("").unwrap();
        assert_eq!(f.to_scenario().unwrap(), Scenario::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ScenarioFile::parse("[initial]\naltitude = 150\n").unwrap_err();
        assert!(matches!(e, CliError::Validation { reason: "schema", .. }));
        assert!(ScenarioFile::parse("[orbit]\n").is_err());
    }

    #[test]
    fn isp_is_converted_with_g0() {
        let f = ScenarioFile::parse("[propulsion]\nisp_s = 300\n").unwrap();
        assert_eq!(f.exhaust_velocity().unwrap(), 300.0 * 9.80665);
        let both = ScenarioFile::parse("[propulsion]\nisp_s = 300\nve_ms = 2942\n").unwrap();
        assert!(both.to_scenario().is_err());
    }

    #[test]
    fn inverted_apsides_fail_validation() {
        let f = ScenarioFile::parse("[target]\napogee_km = 200\nperigee_km = 300\n").unwrap();
        assert!(matches!(f.to_scenario(), Err(CliError::Validation { .. })));
    }

    #[test]
    fn bilevel_needs_switch_time() {
        let f = ScenarioFile::parse("[profile]\nkind = \"bilevel\"\n").unwrap();
        assert!(f.to_scenario().is_err());
        let f = ScenarioFile::parse("[profile]\nkind = \"bilevel\"\nt1_s = 500\n").unwrap();
        assert_eq!(f.to_scenario().unwrap().profile, ProfileKind::Bilevel { switch_after: 500.0 });
    }

    #[test]
    fn resolved_file_round_trips() {
        let f = ScenarioFile::parse("[profile]\nkind = \"bilevel\"\nt1_s = 250\nguess = [30000, 12000]\n").unwrap();
        let echoed = ScenarioFile::parse(&f.resolved().to_toml()).unwrap();
        assert_eq!(echoed, f.resolved());
        assert_eq!(echoed.to_scenario().unwrap(), f.to_scenario().unwrap());
    }
}
