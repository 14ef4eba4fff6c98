//! Run directories: CSV tables with unit-suffixed headers and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use shuttle_core::model::Params;
use shuttle_core::units;

use crate::config::ExperimentConfig;
use crate::RunError;

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// A directory receiving the files of one run.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(path).map_err(|e| RunError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes `name` with the given header and rows.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), RunError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.path.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Records a file written by someone else (e.g. a nested run).
    pub fn adopt(&mut self, relative: String) {
        self.files.push(relative);
    }

    pub fn manifest(&mut self, manifest: &RunManifest) -> Result<(), RunError> {
        let path = self.path.join("manifest.toml");
        let mut m = manifest.clone();
        m.files = self.files.clone();
        let text = toml::to_string(&m)?;
        fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub boltzmann_ev_per_k: f64,
    pub elementary_charge_c: f64,
    pub vacuum_permittivity_f_per_m: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            boltzmann_ev_per_k: units::BOLTZMANN_EV_PER_K,
            elementary_charge_c: units::ELEMENTARY_CHARGE_C,
            vacuum_permittivity_f_per_m: units::VACUUM_PERMITTIVITY_F_PER_M,
        }
    }
}

/// Parameters of a run in the units used on input.
#[derive(Debug, Clone, Serialize)]
pub struct ParamsEcho {
    pub omega_per_ns: f64,
    pub mass_kg: f64,
    pub gamma_kg_per_s: f64,
    pub temperature_k: f64,
    pub alpha_per_nm: f64,
    pub voltage_v: f64,
    pub mu_left_ev: f64,
    pub mu_right_ev: f64,
    pub gamma0_per_ns: f64,
    pub lambda_nm: f64,
    pub eps0_ev: f64,
    pub x0_nm: f64,
    pub v0_nm_per_ns: f64,
    pub q0: u8,
    pub dt_ns: f64,
    pub t_final_ns: f64,
    pub n_traj: usize,
    pub master_seed: u64,
}

impl From<&Params> for ParamsEcho {
    fn from(p: &Params) -> Self {
        Self {
            omega_per_ns: p.omega,
            mass_kg: units::mass_to_kg(p.mass),
            gamma_kg_per_s: units::friction_to_kg_per_s(p.gamma),
            temperature_k: p.temperature,
            alpha_per_nm: p.alpha,
            voltage_v: p.voltage,
            mu_left_ev: p.mu_left,
            mu_right_ev: p.mu_right,
            gamma0_per_ns: p.gamma0,
            lambda_nm: p.lambda_tun,
            eps0_ev: p.eps0,
            x0_nm: p.x0,
            v0_nm_per_ns: p.v0,
            q0: p.q0.index() as u8,
            dt_ns: p.dt,
            t_final_ns: p.t_final,
            n_traj: p.n_traj,
            master_seed: p.master_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub version: String,
    pub master_seed: u64,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub workers: usize,
    pub constants: Constants,
    /// Keys given in the config file, verbatim.
    pub config: BTreeMap<String, String>,
    pub params: ParamsEcho,
    pub diagnostics: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, params: &Params, started: SystemTime) -> Self {
        Self {
            kind: cfg.kind.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: params.master_seed,
            started_unix_s: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_s: started.elapsed().map_or(0.0, |d| d.as_secs_f64()),
            workers: cfg.ensemble.workers.unwrap_or_else(rayon_threads),
            constants: Constants::default(),
            config: cfg.given.clone(),
            params: params.into(),
            diagnostics: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn diagnostic(&mut self, key: &str, value: f64) -> &mut Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
