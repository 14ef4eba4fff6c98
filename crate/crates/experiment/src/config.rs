//! Experiment configuration: a flat `key = value unit` text format.
//!
//! ```text
//! # nanopillar with a heavier oscillator
//! kind = figure3-sweep
//! mass = 40e-19 kg
//! voltage = 25 V
//! sweep_mass_factors = 1, 2, 4
//! ```
//!
//! Blank lines and `#` comments are ignored. Dimensional values need a unit;
//! they are converted to the internal nm/ns/eV system on parsing. Unknown keys
//! are rejected, and every problem in a file is reported at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use shuttle_core::engine;
use shuttle_core::ensemble::{EnsembleConfig, HistogramGrid};
use shuttle_core::model::{Occupation, Params};
use shuttle_core::units;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Figure2,
    Figure3Sweep,
    StrokeAudit,
    Feasibility,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Figure2,
        ExperimentKind::Figure3Sweep,
        ExperimentKind::StrokeAudit,
        ExperimentKind::Feasibility,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Figure2 => "figure2",
            ExperimentKind::Figure3Sweep => "figure3-sweep",
            ExperimentKind::StrokeAudit => "stroke-audit",
            ExperimentKind::Feasibility => "feasibility",
            ExperimentKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment kind '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// Multipliers of the configured mass and friction for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub mass_factors: Vec<f64>,
    pub gamma_factors: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            mass_factors: vec![1.0, 2.0, 4.0],
            gamma_factors: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: Params,
    pub ensemble: EnsembleConfig,
    pub grid: HistogramGrid,
    pub sweep: Sweep,
    pub stroke_threshold: f64,
    pub stroke_resolution: i64,
    /// Pillar diameter for the feasibility estimate [nm].
    pub diameter: f64,
    /// Trajectories rerun at dt and dt/2 for the first-law convergence check.
    pub convergence_trajectories: usize,
    pub out_dir: Option<PathBuf>,
    /// Keys as given in the file with their raw values, for the manifest.
    pub given: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Figure2,
            params: Params::default(),
            ensemble: EnsembleConfig::default(),
            grid: HistogramGrid::default(),
            sweep: Sweep::default(),
            stroke_threshold: shuttle_core::stroke::DEFAULT_THRESHOLD,
            stroke_resolution: shuttle_core::stroke::DEFAULT_RESOLUTION,
            diameter: 5.0,
            convergence_trajectories: 4,
            out_dir: None,
            given: BTreeMap::new(),
        }
    }
}

/// One problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based line, or `None` for whole-config invariants.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} problem(s) in config:\n  {}", .0.len(), .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n  "))]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Length,
    Time,
    Energy,
    Mass,
    Friction,
    Frequency,
    Voltage,
    Temperature,
    Velocity,
    InverseLength,
    Number,
}

impl Dim {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Length => &[("nm", 1.0), ("pm", 1e-3), ("um", 1e3), ("m", 1e9)],
            Dim::Time => &[("ns", 1.0), ("ps", 1e-3), ("us", 1e3), ("s", 1e9)],
            Dim::Energy => &[("eV", 1.0), ("meV", 1e-3), ("J", units::EV_PER_JOULE)],
            Dim::Mass => &[("kg", units::KG_TO_INTERNAL_MASS), ("g", units::KG_TO_INTERNAL_MASS * 1e-3)],
            Dim::Friction => &[("kg/s", units::KG_PER_S_TO_INTERNAL_FRICTION)],
            Dim::Frequency => &[("GHz", 1.0), ("1/ns", 1.0), ("rad/ns", 1.0), ("MHz", 1e-3), ("Hz", 1e-9)],
            Dim::Voltage => &[("V", 1.0), ("mV", 1e-3)],
            Dim::Temperature => &[("K", 1.0)],
            Dim::Velocity => &[("nm/ns", 1.0), ("m/s", 1.0)],
            Dim::InverseLength => &[("1/nm", 1.0), ("1/m", 1e-9)],
            Dim::Number => &[],
        }
    }
}

const KEYS: &[(&str, Dim)] = &[
    ("omega", Dim::Frequency),
    ("mass", Dim::Mass),
    ("gamma", Dim::Friction),
    ("temperature", Dim::Temperature),
    ("alpha", Dim::InverseLength),
    ("voltage", Dim::Voltage),
    ("mu_left", Dim::Energy),
    ("mu_right", Dim::Energy),
    ("gamma0", Dim::Frequency),
    ("lambda", Dim::Length),
    ("eps0", Dim::Energy),
    ("x0", Dim::Length),
    ("v0", Dim::Velocity),
    ("dt", Dim::Time),
    ("t_final", Dim::Time),
    ("output_interval", Dim::Time),
    ("checkpoint_interval", Dim::Time),
    ("hist_x_range", Dim::Length),
    ("hist_v_range", Dim::Velocity),
    ("diameter", Dim::Length),
    ("stroke_threshold", Dim::Number),
];

const INTEGER_KEYS: &[&str] = &[
    "q0",
    "n_traj",
    "seed",
    "workers",
    "hist_bins_x",
    "hist_bins_v",
    "stroke_resolution",
    "convergence_trajectories",
];

const LIST_KEYS: &[&str] = &["sweep_mass_factors", "sweep_gamma_factors"];

const TEXT_KEYS: &[&str] = &["kind", "out_dir"];

fn parse_quantity(raw: &str, dim: Dim) -> Result<f64, String> {
    let mut parts = raw.split_whitespace();
    let number = parts.next().ok_or("missing value")?;
    let unit = parts.next();
    if parts.next().is_some() {
        return Err(format!("expected '<number> <unit>', got '{raw}'"));
    }
    let value: f64 = number.parse().map_err(|_| format!("'{number}' is not a number"))?;
    match (dim, unit) {
        (Dim::Number, None) => Ok(value),
        (Dim::Number, Some(u)) => Err(format!("unexpected unit '{u}' for a dimensionless value")),
        (_, None) => {
            let names: Vec<_> = dim.units().iter().map(|u| u.0).collect();
            Err(format!("missing unit (one of {})", names.join(", ")))
        }
        (_, Some(u)) => dim
            .units()
            .iter()
            .find(|(name, _)| *name == u)
            .map(|(_, factor)| value * factor)
            .ok_or_else(|| {
                let names: Vec<_> = dim.units().iter().map(|u| u.0).collect();
                format!("unit '{u}' not accepted here (one of {})", names.join(", "))
            }),
    }
}

/// Parses and validates a config, returning every problem found.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut issues = Vec::new();
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    let mut integers: BTreeMap<&str, i64> = BTreeMap::new();
    let mut lists: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut cfg = ExperimentConfig::default();
    for (n, raw_line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut issue = |message: String| {
            issues.push(ConfigIssue {
                line: Some(line_no),
                message,
            })
        };
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            issue(format!("expected 'key = value', got '{line}'"));
            continue;
        };
        let (key, raw) = (key.trim(), raw.trim());
        if cfg.given.insert(key.to_string(), raw.to_string()).is_some() {
            issue(format!("'{key}' given more than once"));
            continue;
        }
        if let Some(&(name, dim)) = KEYS.iter().find(|(k, _)| *k == key) {
            match parse_quantity(raw, dim) {
                Ok(v) => {
                    values.insert(name, v);
                }
                Err(e) => issue(format!("{key}: {e}")),
            }
        } else if let Some(&name) = INTEGER_KEYS.iter().find(|k| **k == key) {
            match raw.parse::<i64>() {
                Ok(v) => {
                    integers.insert(name, v);
                }
                Err(_) => issue(format!("{key}: '{raw}' is not an integer")),
            }
        } else if let Some(&name) = LIST_KEYS.iter().find(|k| **k == key) {
            let parsed: Result<Vec<f64>, _> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect();
            match parsed {
                Ok(v) => {
                    lists.insert(name, v);
                }
                Err(_) => issue(format!("{key}: expected a comma-separated list of numbers")),
            }
        } else if TEXT_KEYS.contains(&key) {
            match key {
                "kind" => match raw.parse() {
                    Ok(k) => cfg.kind = k,
                    Err(e) => issue(e),
                },
                _ => cfg.out_dir = Some(PathBuf::from(raw)),
            }
        } else {
            issue(format!("unknown key '{key}'"));
        }
    }

    let p = &mut cfg.params;
    let set = |target: &mut f64, key: &str| {
        if let Some(&v) = values.get(key) {
            *target = v;
        }
    };
    set(&mut p.omega, "omega");
    set(&mut p.mass, "mass");
    set(&mut p.gamma, "gamma");
    set(&mut p.temperature, "temperature");
    set(&mut p.alpha, "alpha");
    set(&mut p.gamma0, "gamma0");
    set(&mut p.lambda_tun, "lambda");
    set(&mut p.x0, "x0");
    set(&mut p.v0, "v0");
    set(&mut p.dt, "dt");
    set(&mut p.t_final, "t_final");
    if let Some(&eps0) = values.get("eps0") {
        *p = p.clone().with_eps0(eps0);
    }
    if let Some(&v) = values.get("voltage") {
        *p = p.clone().with_bias(v);
    }
    set(&mut p.mu_left, "mu_left");
    set(&mut p.mu_right, "mu_right");
    if values.contains_key("mu_left") != values.contains_key("mu_right") {
        issues.push(ConfigIssue {
            line: None,
            message: "mu_left and mu_right must be given together".into(),
        });
    }
    if let Some(&q) = integers.get("q0") {
        match Occupation::try_from(q) {
            Ok(q) => p.q0 = q,
            Err(e) => issues.push(ConfigIssue {
                line: None,
                message: format!("q0: {e}"),
            }),
        }
    }
    let mut count = |key: &'static str, min: i64, target: &mut dyn FnMut(i64)| {
        if let Some(&v) = integers.get(key) {
            if v < min {
                issues.push(ConfigIssue {
                    line: None,
                    message: format!("{key} must be at least {min}, got {v}"),
                });
            } else {
                target(v);
            }
        }
    };
    count("n_traj", 0, &mut |v| p.n_traj = v as usize);
    count("seed", 0, &mut |v| p.master_seed = v as u64);
    count("workers", 1, &mut |v| cfg.ensemble.workers = Some(v as usize));
    count("hist_bins_x", 1, &mut |v| cfg.grid.nx = v as usize);
    count("hist_bins_v", 1, &mut |v| cfg.grid.nv = v as usize);
    count("stroke_resolution", 3, &mut |v| cfg.stroke_resolution = v);
    count("convergence_trajectories", 0, &mut |v| cfg.convergence_trajectories = v as usize);
    set(&mut cfg.ensemble.output_interval, "output_interval");
    set(&mut cfg.ensemble.checkpoint_interval, "checkpoint_interval");
    set(&mut cfg.diameter, "diameter");
    set(&mut cfg.stroke_threshold, "stroke_threshold");
    if let Some(&h) = values.get("hist_x_range") {
        (cfg.grid.x_min, cfg.grid.x_max) = (-h, h);
    }
    if let Some(&h) = values.get("hist_v_range") {
        (cfg.grid.v_min, cfg.grid.v_max) = (-h, h);
    }
    if let Some(v) = lists.remove("sweep_mass_factors") {
        cfg.sweep.mass_factors = v;
    }
    if let Some(v) = lists.remove("sweep_gamma_factors") {
        cfg.sweep.gamma_factors = v;
    }

    check_invariants(&cfg, &mut issues);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(issues))
    }
}

fn check_invariants(cfg: &ExperimentConfig, issues: &mut Vec<ConfigIssue>) {
    let mut fail = |message: String| issues.push(ConfigIssue { line: None, message });
    if let Err(violations) = cfg.params.validate() {
        violations.into_iter().for_each(|v| fail(v.to_string()));
    }
    let p = &cfg.params;
    if p.dt > 0.0 && p.t_final > 0.0 {
        let steps = |name, interval| engine::steps_for(name, interval, p.dt);
        match (
            steps("t_final", p.t_final),
            steps("output_interval", cfg.ensemble.output_interval),
            steps("checkpoint_interval", cfg.ensemble.checkpoint_interval),
        ) {
            (Ok(n), Ok(out), Ok(ck)) => {
                if n % out != 0 {
                    fail("t_final must be a multiple of output_interval".into());
                }
                if ck % out != 0 {
                    fail("checkpoint_interval must be a multiple of output_interval".into());
                }
            }
            (a, b, c) => [a.err(), b.err(), c.err()]
                .into_iter()
                .flatten()
                .for_each(|e| fail(e.to_string())),
        }
    }
    if !(cfg.grid.x_max > 0.0 && cfg.grid.v_max > 0.0) {
        fail("histogram ranges must be positive".into());
    }
    if !(cfg.stroke_threshold > 0.0) {
        fail(format!("stroke_threshold must be positive, got {}", cfg.stroke_threshold));
    }
    if cfg.kind == ExperimentKind::Figure3Sweep {
        for (name, list) in [
            ("sweep_mass_factors", &cfg.sweep.mass_factors),
            ("sweep_gamma_factors", &cfg.sweep.gamma_factors),
        ] {
            if list.is_empty() {
                fail(format!("{name} must not be empty for a sweep"));
            }
            if list.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
                fail(format!("{name} entries must be positive"));
            }
        }
    }
    if cfg.kind == ExperimentKind::Feasibility {
        if !(cfg.diameter > 0.0) {
            fail(format!("diameter must be positive, got {} nm", cfg.diameter));
        }
        if !(p.voltage > 0.0) {
            fail(format!("feasibility needs a positive voltage, got {} V", p.voltage));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = validate_config("").unwrap();
        assert_eq!(cfg.params, Params::default());
        assert_eq!(cfg.kind, ExperimentKind::Figure2);
    }

    #[test]
    fn units_are_converted() {
        let cfg = validate_config(
            "mass = 40e-19 kg\ngamma = 5e-12 kg/s\nx0 = -5000 pm\nt_final = 0.1 us # shorter\nomega = 250 MHz\n",
        )
        .unwrap();
        assert_relative_eq!(cfg.params.mass, 2.0 * Params::default().mass, max_relative = 1e-14);
        assert_relative_eq!(cfg.params.gamma, Params::default().gamma, max_relative = 1e-14);
        assert_relative_eq!(cfg.params.x0, -5.0);
        assert_relative_eq!(cfg.params.t_final, 100.0);
        assert_relative_eq!(cfg.params.omega, 0.25);
    }

    #[test]
    fn reversed_bias_is_accepted() {
        let cfg = validate_config("voltage = -25 V").unwrap();
        assert_eq!(cfg.params.mu_left, -12.5);
        assert_eq!(cfg.params.mu_right, 12.5);
    }

    #[test]
    fn all_problems_are_reported() {
        let err = validate_config("mass = 0 kg\nmas = 3 kg\ndt = 0.001\nn_traj = 0\nkind = figure9\n").unwrap_err();
        let text = err.to_string();
        for needle in ["mass must be positive", "unknown key 'mas'", "missing unit", "n_traj", "figure9"] {
            assert!(text.contains(needle), "{needle} missing from:\n{text}");
        }
        assert_eq!(err.0.len(), 5);
    }

    #[test]
    fn wrong_unit_is_rejected() {
        let err = validate_config("voltage = 25 eV").unwrap_err();
        assert!(err.0[0].message.contains("unit 'eV' not accepted"));
        assert_eq!(err.0[0].line, Some(1));
    }

    #[test]
    fn sweep_lists_must_not_be_empty() {
        let err = validate_config("kind = figure3-sweep\nsweep_mass_factors = \n").unwrap_err();
        assert!(err.to_string().contains("sweep_mass_factors must not be empty"));
    }

    #[test]
    fn misaligned_output_grid_is_rejected() {
        let err = validate_config("output_interval = 0.03 ns\n").unwrap_err();
        assert!(err.to_string().contains("multiple of output_interval"));
    }
}
