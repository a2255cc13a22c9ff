//! Command-line front end: `estimate`, `solve`, `sweep` and `verify`.
//!
//! Exit status: 0 on success, 1 on invalid input (schema, validation, I/O),
//! 2 when the shooting problem cannot be solved. Errors go to stderr as
//! `error[<reason>]: <message>`.

pub mod config;
pub mod trajectory_csv;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use upperstage::dynamics::{InjectionMode, Trajectory};
use upperstage::performance::{estimate, PerformanceEstimate};
use upperstage::pmp_verify::{resolve_omega_sign, verify_points, Check, PmpReport, PmpThresholds};
use upperstage::solver::{
    grid, optimize_switch_time, solve, solve_switch_times, sweep, ProfileKind, Scenario, SolveResult, SweepOutcome,
};

use config::ScenarioFile;
use trajectory_csv::Row;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation { reason: &'static str, message: String },
    Io { path: String, message: String },
    Solver(upperstage::Error),
}

impl CliError {
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Validation { reason, .. } => reason,
            CliError::Io { .. } => "io",
            CliError::Solver(e) => e.reason(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Io { .. } => 1,
            CliError::Solver(upperstage::Error::InvalidInput(_)) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation { message, .. } => f.write_str(message),
            CliError::Io { path, message } => write!(f, "{path}: {message}"),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<upperstage::Error> for CliError {
    fn from(e: upperstage::Error) -> Self {
        CliError::Solver(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "upperstage",
    version,
    about = "Minimum-fuel upper-stage ascent under the closed-loop optimal steering law"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic gravity-loss and final-mass guess.
    Estimate(Common),
    /// Solve for the thrust profile reaching the target orbit.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Search the bilevel switch time on LO,HI (s) for the largest final mass.
        #[arg(long, value_name = "LO,HI", value_parser = parse_pair)]
        optimize_t1: Option<(f64, f64)>,
    },
    /// Reachability sweep over thrust parameters or switch times.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `t1=250,500,750`, `T1=...` or `T2=...`; repeatable. A grid with
        /// only `t1` solves the bilevel problem at each switch time.
        #[arg(long = "grid", value_name = "AXIS=V1,V2,...", required = true)]
        grid: Vec<String>,
    },
    /// PMP diagnostics for a scenario (solved first) or a trajectory CSV.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML) or, for `verify`, a trajectory CSV.
    #[arg(value_name = "INPUT")]
    pub input: Option<PathBuf>,
    /// Scenario file; for `verify` on a CSV it supplies the propulsion and constants.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Write the fully resolved scenario to `<out>/scenario.toml`.
    #[arg(long)]
    pub echo_config: bool,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub tol_abs: Option<f64>,
    #[arg(long)]
    pub tol_event: Option<f64>,
    /// Residual tolerance on each apsis radius, m.
    #[arg(long)]
    pub tol_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Perigee,
    Apogee,
    First,
}

impl From<ModeArg> for InjectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Perigee => InjectionMode::Perigee,
            ModeArg::Apogee => InjectionMode::Apogee,
            ModeArg::First => InjectionMode::FirstCrossing,
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

/// Parsed `--grid` axes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub t1: Vec<f64>,
    pub thrust1: Vec<f64>,
    pub thrust2: Vec<f64>,
}

pub fn parse_grid(specs: &[String]) -> Result<Grid, CliError> {
    let bad = |m: String| CliError::Validation { reason: "grid", message: m };
    let mut g = Grid::default();
    for spec in specs {
        let (axis, values) =
            spec.split_once('=').ok_or_else(|| bad(format!("grid axis `{spec}` must look like t1=250,500")))?;
        let vals = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("`{v}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let slot = match axis.trim() {
            "t1" => &mut g.t1,
            "T1" => &mut g.thrust1,
            "T2" => &mut g.thrust2,
            other => return Err(bad(format!("unknown grid axis `{other}` (use t1, T1, T2)"))),
        };
        slot.extend(vals);
    }
    if g.thrust1.is_empty() != g.thrust2.is_empty() {
        return Err(bad("T1 and T2 must be given together".into()));
    }
    if g.t1.is_empty() && g.thrust1.is_empty() {
        return Err(bad("empty grid".into()));
    }
    Ok(g)
}

struct Loaded {
    file: ScenarioFile,
    scenario: Scenario,
}

fn load(common: &Common, path: Option<&Path>) -> Result<Loaded, CliError> {
    let mut file = match path {
        Some(p) => ScenarioFile::load(p)?,
        None => ScenarioFile::default(),
    };
    if let Some(m) = common.mode {
        file.target.injection = m.into();
    }
    if let Some(v) = common.tol_rel {
        file.integrator.rel_tol = v;
    }
    if let Some(v) = common.tol_abs {
        file.integrator.abs_tol = v;
    }
    if let Some(v) = common.tol_event {
        file.integrator.event_tol_rad = v;
    }
    if let Some(v) = common.tol_residual {
        file.solver.residual_tol_m = v;
    }
    let file = file.resolved();
    let scenario = file.to_scenario()?;
    Ok(Loaded { file, scenario })
}

fn scenario_path(common: &Common) -> Result<Option<&Path>, CliError> {
    match (&common.input, &common.scenario) {
        (Some(_), Some(_)) => Err(CliError::Validation {
            reason: "arguments",
            message: "give the scenario either positionally or with --scenario".into(),
        }),
        (Some(p), None) | (None, Some(p)) => Ok(Some(p.as_path())),
        (None, None) => Ok(None),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Machine-readable output: `stable` is reproducible byte for byte, `meta` is not.
#[derive(Debug, Serialize)]
pub struct Document<T: Serialize> {
    pub stable: T,
    pub meta: Meta,
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub generated_unix_s: u64,
}

impl Meta {
    fn now() -> Self {
        Self {
            tool: "upperstage",
            version: env!("CARGO_PKG_VERSION"),
            generated_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

fn to_json<T: Serialize>(stable: T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(&Document { stable, meta: Meta::now() }).expect("document serializes");
    s.push(b'\n');
    s
}

#[derive(Debug, Serialize)]
struct EstimateDoc<'a> {
    command: &'static str,
    scenario: &'a ScenarioFile,
    estimate: PerformanceEstimate,
}

#[derive(Debug, Serialize)]
struct SolveDoc<'a> {
    command: &'static str,
    scenario: &'a ScenarioFile,
    result: &'a SolveResult,
    pmp_checks: Vec<Check>,
}

#[derive(Debug, Serialize)]
struct VerifyDoc<'a> {
    command: &'static str,
    source: String,
    report: &'a PmpReport,
    checks: Vec<Check>,
}

pub fn trajectory_rows(traj: &Trajectory) -> Vec<Row> {
    let (sign, _) = resolve_omega_sign(&traj.points, &traj.propulsion, &traj.constants);
    traj.points.iter().map(|p| Row::from_point(p, &traj.propulsion, &traj.constants, sign)).collect()
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    trajectory_csv::write_rows(&trajectory_rows(traj), &mut buf)?;
    write_file(dir, "trajectory.csv", &buf)
}

pub fn format_estimate(e: &PerformanceEstimate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "circular speed at ignition   v_c    = {:10.1} m/s", e.circular_speed0);
    let _ = writeln!(s, "target perigee speed         v_p    = {:10.1} m/s", e.target_perigee_speed);
    let _ = writeln!(s, "gravity loss estimate        dV_G   = {:10.1} m/s", e.dv_gravity);
    let _ = writeln!(s, "  (rate form, exact pitch)          = {:10.1} m/s", e.dv_gravity_rate_form);
    let _ = writeln!(s, "required impulse             dV     = {:10.1} m/s", e.dv_total);
    let _ = writeln!(s, "final mass estimate          m_f    = {:10.1} kg", e.m_f_est);
    if let Some(t) = e.burn_time_est {
        let _ = writeln!(s, "burn time at seed thrust     t_b    = {:10.1} s", t);
    }
    s
}

pub fn format_result(r: &SolveResult, c: &upperstage::orbital::Constants) -> String {
    let mut s = String::new();
    let [p1, p2] = r.profile.params();
    match r.profile.switch_after() {
        None => {
            let _ = writeln!(s, "profile            linear");
            let _ = writeln!(s, "T1                 {:12.3} kN", p1 / 1e3);
            let _ = writeln!(s, "T2                 {:12.3} N/s", p2);
        }
        Some(t1) => {
            let _ = writeln!(s, "profile            bilevel, switch at {t1:.1} s");
            let _ = writeln!(s, "T1                 {:12.3} kN", p1 / 1e3);
            let _ = writeln!(s, "T2                 {:12.3} kN", p2 / 1e3);
        }
    }
    let _ = writeln!(s, "final mass         {:12.1} kg", r.m_f);
    let _ = writeln!(s, "final time         {:12.1} s", r.t_f);
    let _ = writeln!(s, "angular range      {:12.1} deg", r.phi_f_deg);
    let _ = writeln!(s, "gravity losses     {:12.0} m/s", r.dv_gravity);
    let _ = writeln!(s, "AoA losses         {:12.0} m/s", r.dv_aoa);
    let _ = writeln!(s, "apogee             {:12.3} km", c.altitude(r.apogee_radius) / 1e3);
    let _ = writeln!(s, "perigee            {:12.3} km", c.altitude(r.perigee_radius) / 1e3);
    let _ = writeln!(s, "iterations         {:12}", r.iterations);
    let _ = writeln!(s, "residual           {:12.3e} m", r.residual_norm);
    s
}

pub fn format_checks(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{:<14} {:>12.3e}  (<= {:.1e})  {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    s
}

fn cmd_estimate(common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let l = load(common, scenario_path(common)?)?;
    let sc = &l.scenario;
    let seed = sc.settings.twr * sc.mass * sc.constants.g0;
    let est = estimate(&sc.initial, sc.mass, &sc.target, sc.propulsion.exhaust_velocity, Some(seed), &sc.constants)?;
    let _ = stdout.write_all(format_estimate(&est).as_bytes());
    write_file(
        &common.out,
        "estimate.json",
        &to_json(EstimateDoc { command: "estimate", scenario: &l.file, estimate: est }),
    )?;
    Ok(())
}

fn cmd_solve(common: &Common, optimize_t1: Option<(f64, f64)>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let l = load(common, scenario_path(common)?)?;
    if common.echo_config {
        write_file(&common.out, "scenario.toml", l.file.to_toml().as_bytes())?;
    }
    let sol = match optimize_t1 {
        None => solve(&l.scenario)?,
        Some((lo, hi)) => {
            let (t1, _) = optimize_switch_time(&l.scenario, lo, hi, 1.0)?;
            solve(&l.scenario.with_profile(ProfileKind::Bilevel { switch_after: t1 }))?
        }
    };
    let checks = sol.result.pmp.checks(&PmpThresholds::default());
    let _ = stdout.write_all(format_result(&sol.result, &l.scenario.constants).as_bytes());
    let _ = writeln!(stdout, "\nPMP checks");
    let _ = stdout.write_all(format_checks(&checks).as_bytes());
    write_file(
        &common.out,
        "result.json",
        &to_json(SolveDoc { command: "solve", scenario: &l.file, result: &sol.result, pmp_checks: checks }),
    )?;
    write_trajectory(&common.out, &sol.trajectory)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReachRow {
    t1_s: Option<f64>,
    #[serde(rename = "T1")]
    thrust1: f64,
    #[serde(rename = "T2")]
    thrust2: f64,
    status: &'static str,
    reason: String,
    apogee_km: Option<f64>,
    perigee_km: Option<f64>,
    mass_kg: Option<f64>,
    t_f_s: Option<f64>,
    phi_f_deg: Option<f64>,
    iterations: Option<usize>,
}

impl ReachRow {
    fn failed(t1: Option<f64>, p: [f64; 2], reason: &str) -> Self {
        Self {
            t1_s: t1,
            thrust1: p[0],
            thrust2: p[1],
            status: "failed",
            reason: reason.into(),
            apogee_km: None,
            perigee_km: None,
            mass_kg: None,
            t_f_s: None,
            phi_f_deg: None,
            iterations: None,
        }
    }
}

fn cmd_sweep(common: &Common, grid_specs: &[String], stdout: &mut dyn Write) -> Result<(), CliError> {
    let g = parse_grid(grid_specs)?;
    let l = load(common, scenario_path(common)?)?;
    let c = l.scenario.constants;
    let km = |r: f64| c.altitude(r) / 1e3;
    let rows: Vec<ReachRow> = if g.thrust1.is_empty() {
        solve_switch_times(&l.scenario, &g.t1)
            .into_iter()
            .map(|(t1, r)| match r {
                Ok(r) => ReachRow {
                    t1_s: Some(t1),
                    thrust1: r.profile.params()[0],
                    thrust2: r.profile.params()[1],
                    status: "solved",
                    reason: String::new(),
                    apogee_km: Some(km(r.apogee_radius)),
                    perigee_km: Some(km(r.perigee_radius)),
                    mass_kg: Some(r.m_f),
                    t_f_s: Some(r.t_f),
                    phi_f_deg: Some(r.phi_f_deg),
                    iterations: Some(r.iterations),
                },
                Err(e) => ReachRow::failed(Some(t1), [f64::NAN; 2], e.reason()),
            })
            .collect()
    } else {
        let base = match (l.scenario.profile, g.t1.is_empty()) {
            (ProfileKind::Linear, false) => l.scenario.with_profile(ProfileKind::Bilevel { switch_after: g.t1[0] }),
            _ => l.scenario.clone(),
        };
        sweep(&base, &grid(&g.thrust1, &g.thrust2, &g.t1))
            .into_iter()
            .map(|rec| {
                let t1 = rec.point.switch_after.or(match base.profile {
                    ProfileKind::Bilevel { switch_after } => Some(switch_after),
                    ProfileKind::Linear => None,
                });
                match rec.outcome {
                    SweepOutcome::Reached(x) => ReachRow {
                        t1_s: t1,
                        thrust1: rec.point.params[0],
                        thrust2: rec.point.params[1],
                        status: "reached",
                        reason: String::new(),
                        apogee_km: Some(km(x.apogee_radius)),
                        perigee_km: Some(km(x.perigee_radius)),
                        mass_kg: Some(x.m_f),
                        t_f_s: Some(x.t_f),
                        phi_f_deg: Some(x.phi_f_deg),
                        iterations: None,
                    },
                    SweepOutcome::Failed { reason, .. } => ReachRow::failed(t1, rec.point.params, &reason),
                }
            })
            .collect()
    };

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Io { path: "reachability.csv".into(), message: e.to_string() })?;
        }
        w.flush().map_err(|e| io_err(Path::new("reachability.csv"), e))?;
    }
    write_file(&common.out, "reachability.csv", &buf)?;
    for r in &rows {
        let _ = writeln!(
            stdout,
            "t1 {:>7} T1 {:>12.3} T2 {:>12.3}  {:<8} {}",
            r.t1_s.map(|t| format!("{t}")).unwrap_or_else(|| "-".into()),
            r.thrust1,
            r.thrust2,
            r.status,
            match (r.apogee_km, r.perigee_km, r.mass_kg) {
                (Some(a), Some(p), Some(m)) => format!("{a:.1} x {p:.1} km, m_f {m:.1} kg"),
                _ => r.reason.clone(),
            }
        );
    }
    Ok(())
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_verify(common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (report, source) = match &common.input {
        Some(p) if is_csv(p) => {
            let l = load(common, common.scenario.as_deref())?;
            let f = std::fs::File::open(p).map_err(|e| io_err(p, e))?;
            let rows = trajectory_csv::read_rows(f)?;
            let first = rows
                .first()
                .ok_or_else(|| CliError::Validation { reason: "csv", message: "trajectory has no rows".into() })?;
            let m0 = first.mass_kg;
            let prop = l.scenario.propulsion;
            let points: Vec<_> = rows.iter().map(|r| r.to_point(m0, &prop)).collect();
            let rep = verify_points(&points, &prop, &l.scenario.constants)?;
            (rep, p.display().to_string())
        }
        _ => {
            let l = load(common, scenario_path(common)?)?;
            let sol = solve(&l.scenario)?;
            write_trajectory(&common.out, &sol.trajectory)?;
            let src =
                scenario_path(common)?.map(|p| p.display().to_string()).unwrap_or_else(|| "default scenario".into());
            (sol.result.pmp, src)
        }
    };
    let checks = report.checks(&PmpThresholds::default());
    let _ = writeln!(stdout, "omega sign convention: {:?}", report.omega_sign);
    let _ = writeln!(stdout, "thrust-direction rate mismatch: {:.3e}", report.thrust_rate_mismatch);
    let _ = stdout.write_all(format_checks(&checks).as_bytes());
    write_file(
        &common.out,
        "pmp_report.json",
        &to_json(VerifyDoc { command: "verify", source, report: &report, checks }),
    )?;
    Ok(())
}

/// Run the CLI on `argv` (program name first) and return the exit status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = writeln!(stderr, "error[arguments]: {}", text.trim_end());
            }
            return code;
        }
    };
    let res = match &cli.command {
        Command::Estimate(c) => cmd_estimate(c, stdout),
        Command::Solve { common, optimize_t1 } => cmd_solve(common, *optimize_t1, stdout),
        Command::Sweep { common, grid } => cmd_sweep(common, grid, stdout),
        Command::Verify(c) => cmd_verify(c, stdout),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error[{}]: {}", e.reason(), e);
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid(&["t1=250,500,750".into()]).unwrap();
        assert_eq!(g.t1, vec![250.0, 500.0, 750.0]);
        let g = parse_grid(&["T1=1,2".into(), "T2=3".into()]).unwrap();
        assert_eq!((g.thrust1.len(), g.thrust2.len()), (2, 1));
        assert!(parse_grid(&["T1=1".into()]).is_err());
        assert!(parse_grid(&["x=1".into()]).is_err());
        assert!(parse_grid(&["t1=a".into()]).is_err());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        let v = CliError::Validation { reason: "schema", message: String::new() };
        assert_eq!(v.exit_code(), 1);
        let nc = CliError::Solver(upperstage::Error::NonConvergence {
            iterations: 3,
            residual_norm: 1.0,
            best_params: [1.0, 2.0],
        });
        assert_eq!((nc.exit_code(), nc.reason()), (2, "non_convergence"));
        assert_eq!(CliError::Solver(upperstage::Error::InvalidInput("x".into())).exit_code(), 1);
    }
}
