//! Command-line front end: `sweep`, `verify`, `weak-values` and `spectral`.
//!
//! Settings come from an optional `key=value` file and from flags, flags
//! winning. Every output file starts with the fully resolved configuration
//! so it can be regenerated exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::Error;
use crate::hilbert::Quadrature;
use crate::optomech::{
    amplification_curve, build_tri_mode, coherent_free_quadrature, coherent_ps_probability, default_delta_grid,
    first_order_prediction, fit_oscillation, period_times, postselection_ket, ExactSimulation, ExperimentConfig,
    MirrorState, PostselectionSpec, StateKind,
};
use crate::spectral::{cross_overlap_analytic, cross_overlap_numeric, spectral_grid, validate_tri_mode_reduction};
use crate::weakmeas::weak_values;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Phase agreement required by `verify`, in radians.
pub const VERIFY_PHASE_TOL: f64 = 0.05;

/// Absolute residual allowed by `verify` when the coupling is zero.
pub const VERIFY_ZERO_COUPLING_TOL: f64 = 1e-10;

/// Largest eigenvalue modulus of the spin-1 operators.
const SPIN_ONE_RADIUS: f64 = 1.0;

#[derive(Parser, Debug)]
#[command(name = "optoweak", version, about = "Weak-value amplification of a photon-kicked mirror")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Amplification factor and postselection probability over δ
    Sweep,
    /// Exact conditional quadrature against the first-order prediction
    Verify,
    /// Weak values of Jx and Jy for a postselection setting
    WeakValues,
    /// Reduction of the scattered photon to three sideband modes
    Spectral,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Verify => "verify",
            Command::WeakValues => "weak-values",
            Command::Spectral => "spectral",
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Mechanical frequency Ω (rad/s, or Hz with --hz)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub omega: Option<String>,
    /// Vacuum optomechanical coupling g0
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub g0: Option<String>,
    /// Cavity linewidth Γ [default: Ω/100]
    #[arg(long = "gamma-cav", global = true, allow_negative_numbers = true)]
    pub gamma_cav: Option<String>,
    /// Photon linewidth ε [default: Γ/100]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub epsilon: Option<String>,
    /// Mirror state: thermal, coherent or fock
    #[arg(long, global = true)]
    pub state: Option<String>,
    /// Mean phonon number(s), comma separated; the Fock index for fock/spectral
    #[arg(long = "N", global = true)]
    pub n: Option<String>,
    /// Coherent-state phase β [default: θ + π/2]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<String>,
    /// Postselection parameter δ
    #[arg(long, global = true)]
    pub delta: Option<String>,
    /// δ values: comma list or lo:hi:count (log spaced)
    #[arg(long = "delta-grid", global = true)]
    pub delta_grid: Option<String>,
    /// Postselection phase θ
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<String>,
    /// Points per mechanical period, or a comma list of times in seconds
    #[arg(long, global = true)]
    pub times: Option<String>,
    /// Output file [default: stdout]
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// csv or json
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Rates are given in cycles/s and converted with 2π
    #[arg(long, global = true)]
    pub hz: bool,
}

const KEYS: &[&str] = &[
    "omega", "g0", "gamma-cav", "epsilon", "state", "N", "beta", "delta", "delta-grid", "theta", "times", "out",
    "format", "hz",
];

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let opts = [
            ("omega", &self.omega),
            ("g0", &self.g0),
            ("gamma-cav", &self.gamma_cav),
            ("epsilon", &self.epsilon),
            ("state", &self.state),
            ("N", &self.n),
            ("beta", &self.beta),
            ("delta", &self.delta),
            ("delta-grid", &self.delta_grid),
            ("theta", &self.theta),
            ("times", &self.times),
            ("out", &self.out),
            ("format", &self.format),
        ];
        let mut out: Vec<_> = opts.iter().filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.clone()))).collect();
        if self.hz {
            out.push(("hz", "true".into()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    /// Regime violation or failed tolerance check.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::EmptyGrid | Error::InvalidDimension(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn normalize_key(key: &str) -> Option<&'static str> {
    let k = key.trim().replace('_', "-");
    let k = if k == "n" { "N".to_string() } else { k };
    KEYS.iter().copied().find(|&known| known == k)
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = normalize_key(k).ok_or_else(|| CliError::Usage(format!("config line {}: unknown key '{}'", i + 1, k.trim())))?;
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorKind {
    Thermal,
    Coherent,
    Fock,
}

impl MirrorKind {
    fn name(self) -> &'static str {
        match self {
            MirrorKind::Thermal => "thermal",
            MirrorKind::Coherent => "coherent",
            MirrorKind::Fock => "fock",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeGrid {
    PerPeriod(usize),
    Explicit(Vec<f64>),
}

/// Everything a command needs, after defaults, file and flags are merged.
/// Rates are in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub omega: f64,
    pub g0: f64,
    pub gamma_cav: f64,
    pub epsilon: f64,
    pub hz: bool,
    pub state: MirrorKind,
    pub n: Vec<f64>,
    pub beta: Option<f64>,
    pub delta: f64,
    pub delta_grid: Option<Vec<f64>>,
    pub theta: f64,
    pub times: TimeGrid,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// 12 significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(",")
}

fn parse_f64(key: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("--{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(CliError::Usage(format!("--{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

/// Comma list, or `lo:hi:count` for log-spaced values.
pub fn parse_delta_grid(v: &str) -> CliResult<Vec<f64>> {
    let grid = if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage("--delta-grid: expected lo:hi:count".into()));
        }
        let (lo, hi) = (parse_f64("delta-grid", parts[0])?, parse_f64("delta-grid", parts[1])?);
        let count: usize =
            parts[2].trim().parse().map_err(|_| CliError::Usage(format!("--delta-grid: bad count '{}'", parts[2])))?;
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(CliError::Usage("--delta-grid: need 0 < lo < hi and count >= 2".into()));
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
    } else {
        parse_list("delta-grid", v)?
    };
    if grid.is_empty() {
        return Err(CliError::Usage("--delta-grid is empty".into()));
    }
    if let Some(d) = grid.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(CliError::Usage(format!("--delta-grid: {d} is outside (0, 1)")));
    }
    Ok(grid)
}

fn parse_times(v: &str) -> CliResult<TimeGrid> {
    let v = v.trim();
    if !v.contains(',') {
        if let Ok(n) = v.parse::<usize>() {
            if n < 3 {
                return Err(CliError::Usage("--times: need at least 3 points per period".into()));
            }
            return Ok(TimeGrid::PerPeriod(n));
        }
    }
    let ts = parse_list("times", v)?;
    if ts.is_empty() {
        return Err(CliError::Usage("--times is empty".into()));
    }
    Ok(TimeGrid::Explicit(ts))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!("--{key}: expected true or false, got '{v}'"))),
    }
}

impl RunConfig {
    pub fn resolve(command: Command, map: &BTreeMap<String, String>) -> CliResult<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let hz = get("hz").map(|v| parse_bool("hz", v)).transpose()?.unwrap_or(false);
        let unit = if hz { 2.0 * PI } else { 1.0 };
        let rate = |k: &str| get(k).map(|v| parse_f64(k, v).map(|x| x * unit)).transpose();

        let omega = rate("omega")?.unwrap_or(1e6 * unit);
        let g0 = rate("g0")?.unwrap_or(500.0 * unit);
        let gamma_cav = rate("gamma-cav")?.unwrap_or(omega / 100.0);
        let epsilon = rate("epsilon")?.unwrap_or(gamma_cav / 100.0);
        if omega <= 0.0 || g0 < 0.0 || gamma_cav <= 0.0 || epsilon <= 0.0 {
            return Err(CliError::Usage("rates must be positive (g0 may be zero)".into()));
        }

        let state = match get("state").unwrap_or("thermal") {
            "thermal" => MirrorKind::Thermal,
            "coherent" => MirrorKind::Coherent,
            "fock" => MirrorKind::Fock,
            other => return Err(CliError::Usage(format!("--state: unknown state '{other}'"))),
        };
        let n = parse_list("N", get("N").unwrap_or("1"))?;
        if n.is_empty() {
            return Err(CliError::Usage("--N is empty".into()));
        }
        if let Some(x) = n.iter().find(|&&x| x < 0.0) {
            return Err(CliError::Usage(format!("--N: {x} is negative")));
        }
        let beta = get("beta").map(|v| parse_f64("beta", v)).transpose()?;
        let delta = get("delta").map(|v| parse_f64("delta", v)).transpose()?.unwrap_or(0.1);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CliError::Usage(format!("--delta: {delta} is outside (0, 1)")));
        }
        let delta_grid = get("delta-grid").map(parse_delta_grid).transpose()?;
        let theta = get("theta").map(|v| parse_f64("theta", v)).transpose()?.unwrap_or(0.0);
        let times = get("times").map(parse_times).transpose()?.unwrap_or(TimeGrid::PerPeriod(12));
        let out = get("out").map(PathBuf::from);
        let format = match get("format").unwrap_or("csv") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(CliError::Usage(format!("--format: unknown format '{other}'"))),
        };
        Ok(RunConfig {
            command,
            omega,
            g0,
            gamma_cav,
            epsilon,
            hz,
            state,
            n,
            beta,
            delta,
            delta_grid,
            theta,
            times,
            out,
            format,
        })
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig::new(self.omega, self.g0).with_cavity(self.gamma_cav, self.epsilon)
    }

    /// Fully resolved settings in a fixed order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let exp = self.experiment();
        let mut out = vec![
            ("command", self.command.name().to_string()),
            ("omega", fmt_num(self.omega)),
            ("g0", fmt_num(self.g0)),
            ("gamma-cav", fmt_num(self.gamma_cav)),
            ("epsilon", fmt_num(self.epsilon)),
            ("omega-cav", fmt_num(exp.omega_cav)),
            ("omega0", fmt_num(exp.omega0)),
            ("gamma-eff", fmt_num(exp.gamma_eff())),
            ("hz", self.hz.to_string()),
            ("state", self.state.name().to_string()),
            ("N", fmt_list(&self.n)),
            ("beta", self.beta.map_or_else(|| "theta+pi/2".to_string(), fmt_num)),
            ("delta", fmt_num(self.delta)),
            ("delta-grid", self.delta_grid.as_ref().map_or_else(|| "default".to_string(), |g| fmt_list(g))),
            ("theta", fmt_num(self.theta)),
            (
                "times",
                match &self.times {
                    TimeGrid::PerPeriod(n) => format!("{n} per period"),
                    TimeGrid::Explicit(ts) => fmt_list(ts),
                },
            ),
            ("format", if self.format == Format::Csv { "csv" } else { "json" }.to_string()),
        ];
        out.push(("out", self.out.as_ref().map_or_else(|| "-".to_string(), |p| p.display().to_string())));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn beta_for(&self, theta: f64) -> f64 {
        self.beta.unwrap_or(theta + FRAC_PI_2)
    }

    fn single_n(&self) -> CliResult<f64> {
        match self.n.as_slice() {
            [x] => Ok(*x),
            _ => Err(CliError::Usage(format!("{} takes a single --N", self.command.name()))),
        }
    }

    fn fock_index(&self) -> CliResult<usize> {
        let x = self.single_n()?;
        if x.fract() != 0.0 {
            return Err(CliError::Usage(format!("--N: Fock index must be an integer, got {x}")));
        }
        Ok(x as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

/// A data table with its provenance and summary block.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub config: Vec<(String, String)>,
    pub summary: Vec<(String, Cell)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# optoweak {} {}\n", self.command, env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.config {
            s.push_str(&format!("# config.{k}={v}\n"));
        }
        for (k, v) in &self.summary {
            s.push_str(&format!("# summary.{k}={}\n", v.csv()));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let config: serde_json::Map<String, Value> = self.config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let summary: serde_json::Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({
            "metadata": {
                "program": "optoweak",
                "version": env!("CARGO_PKG_VERSION"),
                "command": self.command,
                "config": config,
                "summary": summary,
            },
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report is valid json");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Report plus the verdict that decides the exit code.
pub struct Outcome {
    pub report: Report,
    pub failure: Option<String>,
}

fn sweep(cfg: &RunConfig) -> CliResult<Outcome> {
    let kind = match cfg.state {
        MirrorKind::Thermal => StateKind::Thermal,
        MirrorKind::Coherent => StateKind::Coherent,
        MirrorKind::Fock => return Err(CliError::Usage("sweep supports thermal and coherent states".into())),
    };
    let exp = cfg.experiment();
    let curves = cfg
        .n
        .par_iter()
        .map(|&n| {
            let grid = match &cfg.delta_grid {
                Some(g) => g.clone(),
                None => default_delta_grid(&exp, n)?,
            };
            let mut points = amplification_curve(&exp, n, kind, &grid)?;
            if let (StateKind::Coherent, Some(beta)) = (kind, cfg.beta) {
                for p in &mut points {
                    let ps = PostselectionSpec::new(p.delta, cfg.theta)?;
                    p.ps_probability = coherent_ps_probability(exp.gamma_eff(), &ps, n, beta);
                }
            }
            Ok((n, points))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let rows = curves
        .iter()
        .flat_map(|(n, pts)| {
            pts.iter().map(move |p| {
                vec![Cell::Num(*n), Cell::Num(p.delta), Cell::Num(p.ps_probability), Cell::Num(p.f), Cell::Bool(p.regime_ok)]
            })
        })
        .collect();
    Ok(Outcome {
        report: Report {
            command: "sweep",
            config: cfg.pairs(),
            summary: vec![("curves".into(), Cell::Text(curves.len().to_string()))],
            columns: vec!["N", "delta", "ps_probability", "f", "regime_ok"],
            rows,
        },
        failure: None,
    })
}

fn verify(cfg: &RunConfig) -> CliResult<Outcome> {
    let exp = cfg.experiment();
    let gamma = exp.gamma_eff();
    let n = cfg.single_n()?;
    let mirror = match cfg.state {
        MirrorKind::Thermal => MirrorState::Thermal { mean: n },
        MirrorKind::Coherent => MirrorState::Coherent { mean: n, phase: cfg.beta_for(cfg.theta) },
        MirrorKind::Fock => MirrorState::Fock { n: cfg.fock_index()? },
    };
    let scale = gamma * n.max(1.0).sqrt();
    if cfg.delta < 10.0 * scale {
        return Err(CliError::Failure(format!(
            "regime violation: delta = {} is below 10*gamma*sqrt(N) = {}; the first-order prediction does not apply",
            cfg.delta,
            10.0 * scale
        )));
    }
    let ps = PostselectionSpec::new(cfg.delta, cfg.theta)?;
    let times = match &cfg.times {
        TimeGrid::PerPeriod(k) => period_times(cfg.omega, *k),
        TimeGrid::Explicit(ts) => ts.clone(),
    };
    let sim = ExactSimulation::new(&exp, &mirror)?;
    let exact = sim.conditional_quadrature(&ps, Quadrature::X, &times)?;
    let free = |t: f64| match mirror {
        MirrorState::Coherent { mean, phase } => coherent_free_quadrature(mean, phase, cfg.omega, t, Quadrature::X),
        _ => 0.0,
    };
    let mut rows = Vec::with_capacity(times.len());
    let (mut shift_exact, mut shift_pred) = (Vec::new(), Vec::new());
    let mut max_residual: f64 = 0.0;
    for (&t, r) in times.iter().zip(&exact) {
        let analytic = first_order_prediction(&exp, &mirror, &ps, t, Quadrature::X);
        let residual = r.expectation - analytic;
        max_residual = max_residual.max(residual.abs());
        shift_exact.push(r.expectation - free(t));
        shift_pred.push(analytic - free(t));
        rows.push(vec![Cell::Num(t), Cell::Num(r.expectation), Cell::Num(analytic), Cell::Num(residual)]);
    }
    let ps_probability = exact.first().map_or(0.0, |r| r.ps_probability);
    let mut summary = vec![("ps_probability".to_string(), Cell::Num(ps_probability))];

    let failure = if cfg.g0 == 0.0 {
        summary.push(("tolerance".into(), Cell::Num(VERIFY_ZERO_COUPLING_TOL)));
        summary.push(("max_residual".into(), Cell::Num(max_residual)));
        (max_residual > VERIFY_ZERO_COUPLING_TOL)
            .then(|| format!("residual {max_residual:e} exceeds {VERIFY_ZERO_COUPLING_TOL:e} at zero coupling"))
    } else {
        let fe = fit_oscillation(&times, &shift_exact, cfg.omega)?;
        let fp = fit_oscillation(&times, &shift_pred, cfg.omega)?;
        let rel = (fe.amplitude / fp.amplitude - 1.0).abs();
        let tol = 5.0 * scale / cfg.delta;
        let dphase = (fe.phase - fp.phase + PI).rem_euclid(2.0 * PI) - PI;
        summary.extend([
            ("amplitude_exact".to_string(), Cell::Num(fe.amplitude)),
            ("amplitude_analytic".into(), Cell::Num(fp.amplitude)),
            ("phase_exact".into(), Cell::Num(fe.phase)),
            ("phase_analytic".into(), Cell::Num(fp.phase)),
            ("amplitude_relative_error".into(), Cell::Num(rel)),
            ("tolerance".into(), Cell::Num(tol)),
            ("phase_error".into(), Cell::Num(dphase)),
            ("phase_tolerance".into(), Cell::Num(VERIFY_PHASE_TOL)),
            ("max_residual".into(), Cell::Num(max_residual)),
        ]);
        if rel > tol {
            Some(format!("amplitude off by {rel:e}, tolerance {tol:e}"))
        } else if dphase.abs() > VERIFY_PHASE_TOL {
            Some(format!("phase off by {dphase:e} rad"))
        } else {
            None
        }
    };
    summary.push(("pass".into(), Cell::Bool(failure.is_none())));
    Ok(Outcome {
        report: Report {
            command: "verify",
            config: cfg.pairs(),
            summary,
            columns: vec!["t", "exact", "analytic", "residual"],
            rows,
        },
        failure,
    })
}

fn weak_values_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let ps = PostselectionSpec::new(cfg.delta, cfg.theta)?;
    let sys = build_tri_mode();
    let psi = sys.state.as_ket().expect("tri-mode preselection is pure").clone();
    let wv = weak_values(&psi, &postselection_ket(&ps), &sys)?;
    let row = |name: &str, z: num_complex::Complex64| {
        vec![
            Cell::Text(name.into()),
            Cell::Num(z.re),
            Cell::Num(z.im),
            Cell::Num(z.norm()),
            Cell::Num(z.arg()),
            Cell::Bool(z.norm() > SPIN_ONE_RADIUS),
        ]
    };
    Ok(Outcome {
        report: Report {
            command: "weak-values",
            config: cfg.pairs(),
            summary: vec![("anomalous".into(), Cell::Bool(wv.is_anomalous(SPIN_ONE_RADIUS)))],
            columns: vec!["operator", "re", "im", "modulus", "phase", "anomalous"],
            rows: vec![row("Jx", wv.jx), row("Jy", wv.jy)],
        },
        failure: None,
    })
}

fn spectral_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let n = cfg.fock_index()?;
    let exp = cfg.experiment();
    let rep = validate_tri_mode_reduction(&exp, n)?;
    let grid = spectral_grid(&exp)?;
    let overlap = cross_overlap_numeric(&grid, exp.omega0, exp.omega0 + exp.omega, exp.epsilon).norm();
    let g = rep.coupling;
    let mut rows = vec![vec![
        Cell::Text("carrier".into()),
        Cell::Num(n as f64),
        Cell::Num(1.0),
        Cell::Num(rep.carrier.re),
        Cell::Num(rep.carrier.im),
        Cell::Num(rep.carrier_deviation),
    ]];
    if let (Some(up), Some(dev)) = (rep.up, rep.up_deviation) {
        rows.push(vec![
            Cell::Text("up".into()),
            Cell::Num((n - 1) as f64),
            Cell::Num(-2.0 * g * (n as f64).sqrt()),
            Cell::Num(up.re),
            Cell::Num(up.im),
            Cell::Num(dev),
        ]);
    }
    rows.push(vec![
        Cell::Text("down".into()),
        Cell::Num((n + 1) as f64),
        Cell::Num(2.0 * g * ((n + 1) as f64).sqrt()),
        Cell::Num(rep.down.re),
        Cell::Num(rep.down.im),
        Cell::Num(rep.down_deviation),
    ]);
    let summary = vec![
        ("global_phase".to_string(), Cell::Num(rep.global_phase)),
        ("leakage".into(), Cell::Num(rep.leakage)),
        ("total_norm".into(), Cell::Num(rep.total_norm)),
        ("tail_bound".into(), Cell::Num(rep.tail_bound)),
        ("l2_full_vs_single_term".into(), Cell::Num(rep.l2_full_vs_single)),
        ("l2_single_term_vs_monochromatic".into(), Cell::Num(rep.l2_single_vs_mono)),
        ("l2_full_vs_monochromatic".into(), Cell::Num(rep.l2_full_vs_mono)),
        ("cross_overlap".into(), Cell::Num(overlap)),
        ("cross_overlap_analytic".into(), Cell::Num(cross_overlap_analytic(exp.omega, exp.epsilon))),
        ("regime_ok".into(), Cell::Bool(rep.regime_ok)),
        ("pass".into(), Cell::Bool(rep.passed)),
    ];
    let failure = (!rep.passed).then(|| {
        if rep.regime_ok {
            "reduction coefficients deviate by more than 5%".to_string()
        } else {
            "regime violation: sidebands, carrier detuning or linewidths outside the resolved regime".to_string()
        }
    });
    Ok(Outcome {
        report: Report {
            command: "spectral",
            config: cfg.pairs(),
            summary,
            columns: vec!["branch", "m", "expected", "observed_re", "observed_im", "deviation"],
            rows,
        },
        failure,
    })
}

pub fn execute(cfg: &RunConfig) -> CliResult<Outcome> {
    match cfg.command {
        Command::Sweep => sweep(cfg),
        Command::Verify => verify(cfg),
        Command::WeakValues => weak_values_cmd(cfg),
        Command::Spectral => spectral_cmd(cfg),
    }
}

/// Merges the config file (if any) with the flags; flags win.
pub fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut map = match &cli.flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    for (k, v) in cli.flags.pairs() {
        map.insert(k.to_string(), v);
    }
    RunConfig::resolve(cli.command, &map)
}

/// Runs the program and returns its exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = resolve(&cli).and_then(|cfg| execute(&cfg).map(|o| (cfg, o)));
    let (cfg, outcome) = match result {
        Ok(x) => x,
        Err(e) => {
            let _ = writeln!(stderr, "optoweak: {e}");
            return e.exit_code();
        }
    };
    let text = outcome.report.render(cfg.format);
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "optoweak: {e}");
        return EXIT_USAGE;
    }
    match outcome.failure {
        Some(msg) => {
            let _ = writeln!(stderr, "optoweak: {msg}");
            EXIT_FAILURE
        }
        None => EXIT_OK,
    }
}
