//! Trajectory CSV: one row per stored sample, final row at the injection event.

use std::io::{Read, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use upperstage::dynamics::{Propulsion, TrajectoryPoint};
use upperstage::orbital::{Constants, PlanarState, PolarKinematics};
use upperstage::pmp_verify::{hamiltonian_at, OmegaSign};

use crate::CliError;

pub const HEADER: [&str; 17] = [
    "t_s",
    "x_m",
    "y_m",
    "r_m",
    "alt_km",
    "v_ms",
    "gamma_deg",
    "theta_deg",
    "aoa_deg",
    "phi_deg",
    "mass_kg",
    "thrust_N",
    "omega_rads",
    "H_norm",
    "Phi",
    "dVg_ms",
    "dVt_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub r_m: f64,
    pub alt_km: f64,
    pub v_ms: f64,
    pub gamma_deg: f64,
    pub theta_deg: f64,
    pub aoa_deg: f64,
    pub phi_deg: f64,
    pub mass_kg: f64,
    #[serde(rename = "thrust_N")]
    pub thrust_n: f64,
    pub omega_rads: f64,
    #[serde(rename = "H_norm")]
    pub h_norm: f64,
    #[serde(rename = "Phi")]
    pub phi: f64,
    #[serde(rename = "dVg_ms")]
    pub dvg_ms: f64,
    #[serde(rename = "dVt_ms")]
    pub dvt_ms: f64,
}

impl Row {
    /// `H_norm` is `H r^2 / mu` under the given rate sign.
    pub fn from_point(p: &TrajectoryPoint, prop: &Propulsion, c: &Constants, sign: OmegaSign) -> Self {
        let h = hamiltonian_at(p, prop, c, sign);
        let r = p.polar.r;
        Self {
            t_s: p.time,
            x_m: p.state.position.x,
            y_m: p.state.position.y,
            r_m: r,
            alt_km: c.altitude(r) / 1e3,
            v_ms: p.polar.v,
            gamma_deg: p.polar.gamma.to_degrees(),
            theta_deg: p.theta.to_degrees(),
            aoa_deg: (p.theta - p.polar.gamma).to_degrees(),
            phi_deg: p.polar.phi.to_degrees(),
            mass_kg: p.state.mass,
            thrust_n: p.thrust,
            omega_rads: p.omega,
            h_norm: h.h * r * r / c.mu,
            phi: h.phi,
            dvg_ms: p.dv_gravity,
            dvt_ms: p.dv_aoa,
        }
    }

    /// Rebuild a sample. The impulse accumulator is recovered from the mass
    /// through the rocket equation.
    pub fn to_point(&self, m0: f64, prop: &Propulsion) -> TrajectoryPoint {
        let phi = self.y_m.atan2(self.x_m);
        let polar =
            PolarKinematics { r: self.x_m.hypot(self.y_m), v: self.v_ms, gamma: self.gamma_deg.to_radians(), phi };
        let (_, velocity) = polar.to_cartesian();
        let state =
            PlanarState { position: Vector2::new(self.x_m, self.y_m), velocity, mass: self.mass_kg, time: self.t_s };
        TrajectoryPoint {
            time: self.t_s,
            state,
            polar,
            theta: self.theta_deg.to_radians(),
            omega: self.omega_rads,
            thrust: self.thrust_n,
            dv_gravity: self.dvg_ms,
            dv_aoa: self.dvt_ms,
            thrust_impulse: prop.exhaust_velocity * (m0 / self.mass_kg).ln(),
        }
    }
}

pub fn write_rows<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io { path: "trajectory.csv".into(), message: e.to_string() })
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>, CliError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(CliError::Validation {
            reason: "csv_header",
            message: format!("expected header {}, got {}", HEADER.join(","), header.join(",")),
        });
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Validation { reason: "csv", message: e.to_string() }
}
