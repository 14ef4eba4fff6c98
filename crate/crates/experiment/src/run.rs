//! Experiment drivers: each kind runs its simulations, writes its tables and
//! a manifest into the run directory and returns its diagnostics.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shuttle_core::engine::{self, EngineError};
use shuttle_core::ensemble::{self, EnsembleSeries, Observable};
use shuttle_core::model::{self, Params};
use shuttle_core::reduced::{self, Deviation, LimitCycle, ReducedError, ReducedLaws, ReducedTrace};
use shuttle_core::stroke::{self, StrokeAudit, StrokeError};
use shuttle_core::thermo::{self, CycleMatching, Estimate, ThermoError, ThermoReport};
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::feasibility;
use crate::output::{num, RunDir, RunManifest};

/// Relative tolerance of the cycle-matching conditions.
pub const MATCHING_TOLERANCE: f64 = 0.1;

/// Cycles at the end of the run over which ensemble and reduced model are compared.
pub const COMPARISON_CYCLES: f64 = 5.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Reduced(#[from] ReducedError),
    #[error(transparent)]
    Stroke(#[from] StrokeError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cannot serialize manifest: {0}")]
    Manifest(#[from] toml::ser::Error),
}

impl RunError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Mean absolute first-law residual at dt and dt/2 over the first few
/// trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstLawConvergence {
    pub trajectories: usize,
    /// [eV]
    pub residual: f64,
    /// [eV]
    pub residual_half: f64,
    /// Largest |residual| / transferred energy at dt.
    pub relative: f64,
}

impl FirstLawConvergence {
    pub fn ratio(&self) -> f64 {
        self.residual / self.residual_half
    }
}

pub fn first_law_convergence(p: &Params, trajectories: usize) -> Result<FirstLawConvergence, EngineError> {
    let half = Params { dt: p.dt / 2.0, ..p.clone() };
    let mut out = FirstLawConvergence {
        trajectories,
        residual: 0.0,
        residual_half: 0.0,
        relative: 0.0,
    };
    for i in 0..trajectories as u64 {
        let a = engine::simulate_trajectory(p, i, p.t_final)?;
        let b = engine::simulate_trajectory(&half, i, half.t_final)?;
        out.residual += a.first_law_residual(p).abs() / trajectories as f64;
        out.residual_half += b.first_law_residual(&half).abs() / trajectories as f64;
        out.relative = out.relative.max(a.relative_first_law_residual(p));
    }
    Ok(out)
}

/// Ensemble, thermodynamics and reduced model of one parameter set.
#[derive(Debug, Clone)]
pub struct AutonomousRun {
    pub series: EnsembleSeries,
    pub report: ThermoReport,
    pub trace: ReducedTrace,
    pub cycle: LimitCycle,
    pub laws: ReducedLaws,
    pub deviation: Deviation,
    pub matching: CycleMatching,
}

impl AutonomousRun {
    /// Smallest Σ/stderr over the checkpoints (Σ at t = 0 is exactly 0 and skipped).
    pub fn min_entropy_production_sigmas(&self) -> f64 {
        thermo::second_law_check(&self.report)
            .iter()
            .filter(|(t, _)| *t > 0.0)
            .map(|(_, e)| e.mean / e.stderr)
            .fold(f64::INFINITY, f64::min)
    }

    /// ΔU_O + 𝒲_mech relative to |𝒲_mech| over the run.
    pub fn work_balance(&self) -> f64 {
        let w = *self.trace.work_mech.last().unwrap_or(&f64::NAN);
        (self.matching.delta_u_osc.mean + w).abs() / w.abs()
    }
}

pub fn analyze_autonomous(cfg: &ExperimentConfig, p: &Params) -> Result<AutonomousRun, RunError> {
    let series = ensemble::simulate_ensemble(p, &cfg.ensemble)?;
    let report = thermo::thermo_report(&series, cfg.grid)?;
    let trace = reduced::solve_reduced(p, p.t_final)?;
    let cycle = reduced::limit_cycle(&trace)?;
    let laws = reduced::reduced_laws(&trace);
    let window = (p.t_final - COMPARISON_CYCLES * p.tau_cycle()).max(0.0);
    let deviation = reduced::compare_to_autonomous(&trace, &series, window)?;
    let matching = thermo::cycle_matching_conditions(&report, MATCHING_TOLERANCE);
    Ok(AutonomousRun {
        series,
        report,
        trace,
        cycle,
        laws,
        deviation,
        matching,
    })
}

/// Seed of sweep point `index`, independent of the number of points.
pub fn point_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index + 1);
    rng.next_u64()
}

/// Summary of one (m, γ) point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mass_factor: f64,
    pub gamma_factor: f64,
    pub params: Params,
    pub delta_u_osc: Estimate,
    pub heat_osc: Estimate,
    pub work_mech_reduced: f64,
    pub work_balance: f64,
    pub matching: CycleMatching,
    pub min_entropy_production_sigmas: f64,
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    Autonomous(Box<AutonomousRun>, Option<FirstLawConvergence>),
    Sweep(Vec<SweepPoint>),
    Strokes(Box<StrokeAudit>),
    Feasibility(feasibility::Feasibility),
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub diagnostics: BTreeMap<String, f64>,
    pub outcome: RunOutcome,
}

/// Runs the experiment described by `cfg` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, RunError> {
    let started = SystemTime::now();
    let mut dir = RunDir::create(out_dir)?;
    let p = &cfg.params;
    let mut diag = BTreeMap::new();
    let outcome = match cfg.kind {
        ExperimentKind::Figure2 | ExperimentKind::Custom => {
            let run = analyze_autonomous(cfg, p)?;
            write_autonomous(&mut dir, &run)?;
            autonomous_diagnostics(&run, &mut diag);
            let conv = if cfg.convergence_trajectories > 0 {
                let c = first_law_convergence(p, cfg.convergence_trajectories)?;
                diag.insert("first_law_residual_eV".into(), c.residual);
                diag.insert("first_law_residual_half_dt_eV".into(), c.residual_half);
                diag.insert("first_law_convergence_ratio".into(), c.ratio());
                diag.insert("first_law_max_relative".into(), c.relative);
                Some(c)
            } else {
                None
            };
            RunOutcome::Autonomous(Box::new(run), conv)
        }
        ExperimentKind::Figure3Sweep => {
            let points = run_sweep(cfg, &mut dir)?;
            write_sweep(&mut dir, &points)?;
            RunOutcome::Sweep(points)
        }
        ExperimentKind::StrokeAudit => {
            let schedule = stroke::build_schedule_with(p, cfg.stroke_threshold, cfg.stroke_resolution)?;
            let audit = stroke::audit_schedule(p, schedule, reduced::DEFAULT_STEPS_PER_CYCLE)?;
            write_strokes(&mut dir, &audit)?;
            diag.insert("max_deviation".into(), audit.max_deviation);
            diag.insert("heat_left_error".into(), audit.heat_left_error);
            diag.insert("heat_right_error".into(), audit.heat_right_error);
            diag.insert("p1_swing".into(), audit.p1_swing);
            diag.insert("work_mech_strokes_eV".into(), audit.work_mech_strokes);
            diag.insert("work_mech_reduced_eV".into(), audit.work_mech_reduced);
            diag.insert("stroke_integral".into(), audit.schedule.integral.numeric);
            diag.insert("stroke_bound".into(), audit.schedule.integral.bound);
            RunOutcome::Strokes(Box::new(audit))
        }
        ExperimentKind::Feasibility => {
            let f = feasibility::feasibility(cfg.diameter, p.voltage);
            let d1 = feasibility::diameter_for(1.0, p.voltage);
            dir.csv(
                "feasibility.csv",
                &[
                    "diameter_nm",
                    "voltage_V",
                    "capacitance_F",
                    "electrons",
                    "electrons_rounded",
                    "charging_energy_eV",
                    "diameter_single_electron_nm",
                ],
                [vec![
                    num(f.diameter),
                    num(f.voltage),
                    num(f.capacitance),
                    num(f.electrons),
                    f.electrons_rounded.to_string(),
                    num(f.charging_energy),
                    num(d1),
                ]],
            )?;
            diag.insert("electrons".into(), f.electrons);
            diag.insert("diameter_single_electron_nm".into(), d1);
            RunOutcome::Feasibility(f)
        }
    };
    let mut manifest = RunManifest::new(cfg, p, started);
    manifest.diagnostics = diag.clone();
    dir.manifest(&manifest)?;
    let mut files = dir.files().to_vec();
    files.push("manifest.toml".into());
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        diagnostics: diag,
        outcome,
    })
}

fn autonomous_diagnostics(run: &AutonomousRun, diag: &mut BTreeMap<String, f64>) {
    let d = &run.deviation;
    diag.insert("p1_rms_deviation".into(), d.p1_rms);
    diag.insert("p1_sup_deviation".into(), d.p1_sup);
    diag.insert("p1_loop_rms_deviation".into(), d.loop_rms);
    diag.insert("eps_rms_deviation_eV".into(), d.eps_rms);
    diag.insert("limit_cycle_area_eV".into(), run.cycle.area());
    diag.insert("limit_cycle_work_mech_eV".into(), run.cycle.work_mech);
    diag.insert("limit_cycle_index".into(), run.cycle.cycle_index as f64);
    diag.insert("reduced_first_law_relative".into(), run.laws.first_law_relative);
    diag.insert("reduced_min_entropy_production".into(), run.laws.min_entropy_production());
    diag.insert("min_entropy_production_sigmas".into(), run.min_entropy_production_sigmas());
    diag.insert("max_clipped_mass".into(), run.report.max_clipped_mass());
    diag.insert("heat_ratio".into(), run.matching.heat_ratio);
    diag.insert("entropy_ratio".into(), run.matching.entropy_ratio);
    diag.insert("entropy_ratio_balance".into(), run.matching.entropy_ratio_balance);
    diag.insert("work_balance".into(), run.work_balance());
}

fn observable_column(obs: Observable) -> &'static str {
    match obs {
        Observable::Occupation => "P1_prob",
        Observable::Position => "x_nm",
        Observable::Velocity => "v_nm_per_ns",
        Observable::VelocitySquared => "v2_nm2_per_ns2",
        Observable::OscillatorEnergy => "H_O_eV",
        Observable::DotEnergy => "H_D_eV",
        Observable::TotalEnergy => "U_DO_eV",
        Observable::Amplitude => "amplitude_nm",
        Observable::HeatLeft => "Q_L_eV",
        Observable::HeatRight => "Q_R_eV",
        Observable::HeatOsc => "Q_O_eV",
        Observable::WorkChem => "W_chem_eV",
        Observable::FirstLawResidual => "first_law_residual_eV",
    }
}

fn write_autonomous(dir: &mut RunDir, run: &AutonomousRun) -> Result<(), RunError> {
    let series = &run.series;
    let p = &series.params;

    let mut header = vec!["t_ns".to_string()];
    for obs in Observable::ALL {
        let c = observable_column(obs);
        header.push(format!("mean_{c}"));
        header.push(format!("stderr_{c}"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let means: Vec<Vec<f64>> = Observable::ALL.iter().map(|&o| series.mean(o)).collect();
    let errs: Vec<Vec<f64>> = Observable::ALL.iter().map(|&o| series.stderr(o)).collect();
    dir.csv(
        "ensemble_series.csv",
        &header,
        series.times.iter().enumerate().map(|(i, &t)| {
            let mut row = vec![num(t)];
            for k in 0..Observable::ALL.len() {
                row.push(num(means[k][i]));
                row.push(num(errs[k][i]));
            }
            row
        }),
    )?;

    let tr = &run.trace;
    dir.csv(
        "reduced_trace.csv",
        &[
            "t_ns",
            "x_nm",
            "eps_eV",
            "P1_prob",
            "dP1_per_ns",
            "W_mech_eV",
            "Q_L_eV",
            "Q_R_eV",
            "W_chem_eV",
            "S_D_kB",
        ],
        (0..tr.len()).map(|i| {
            vec![
                num(tr.times[i]),
                num(tr.x[i]),
                num(tr.eps[i]),
                num(tr.p1[i]),
                num(tr.dp1[i]),
                num(tr.work_mech[i]),
                num(tr.heat_left[i]),
                num(tr.heat_right[i]),
                num(tr.work_chem[i]),
                num(tr.dot_entropy(i)),
            ]
        }),
    )?;

    let occupation = series.mean(Observable::Occupation);
    let position = series.mean(Observable::Position);
    let ensemble_rows = series.times.iter().enumerate().map(|(i, &t)| {
        vec![
            num(t),
            num(model::charging_energy(position[i], p)),
            num(occupation[i]),
            "ensemble".to_string(),
        ]
    });
    let reduced_rows =
        (0..tr.len()).map(|i| vec![num(tr.times[i]), num(tr.eps[i]), num(tr.p1[i]), "reduced".to_string()]);
    dir.csv(
        "fig2_parametric.csv",
        &["t_ns", "eps_eV", "P1_prob", "source"],
        ensemble_rows.chain(reduced_rows),
    )?;

    let c = &run.cycle;
    let step = tr.step;
    dir.csv(
        "limit_cycle.csv",
        &["t_ns", "eps_eV", "P1_prob"],
        c.eps
            .iter()
            .zip(&c.p1)
            .enumerate()
            .map(|(i, (&e, &q))| vec![num(c.start_time + i as f64 * step), num(e), num(q)]),
    )?;

    dir.csv(
        "thermo_report.csv",
        &[
            "t_ns",
            "U_DO_eV",
            "U_DO_stderr_eV",
            "U_D_eV",
            "U_O_eV",
            "U_O_stderr_eV",
            "S_DO_kB",
            "S_DO_stderr_kB",
            "S_D_kB",
            "S_O_given_D_kB",
            "Q_L_eV",
            "Q_R_eV",
            "Q_O_eV",
            "Q_O_stderr_eV",
            "W_chem_eV",
            "first_law_residual_eV",
            "Sigma_kB",
            "Sigma_stderr_kB",
            "Sigma_split_kB",
            "clipped_mass",
        ],
        run.report.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.energies.total.mean),
                num(r.energies.total.stderr),
                num(r.energies.dot.mean),
                num(r.energies.oscillator.mean),
                num(r.energies.oscillator.stderr),
                num(r.entropies.joint),
                num(r.joint_entropy_stderr),
                num(r.entropies.dot),
                num(r.entropies.conditional),
                num(r.heat_left.mean),
                num(r.heat_right.mean),
                num(r.heat_osc.mean),
                num(r.heat_osc.stderr),
                num(r.work_chem.mean),
                num(r.first_law_residual.mean),
                num(r.entropy_production.mean),
                num(r.entropy_production.stderr),
                num(r.entropy_production_split),
                num(r.clipped_mass),
            ]
        }),
    )?;
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<Vec<SweepPoint>, RunError> {
    let base = &cfg.params;
    let mut points = Vec::new();
    let mut index = 0u64;
    for (i, &mf) in cfg.sweep.mass_factors.iter().enumerate() {
        for (j, &gf) in cfg.sweep.gamma_factors.iter().enumerate() {
            let p = Params {
                mass: base.mass * mf,
                gamma: base.gamma * gf,
                master_seed: point_seed(base.master_seed, index),
                ..base.clone()
            };
            index += 1;
            let run = analyze_autonomous(cfg, &p)?;
            let name = format!("m{i}_g{j}");
            let mut sub = RunDir::create(&dir.path().join(&name))?;
            write_autonomous(&mut sub, &run)?;
            let mut point_cfg = cfg.clone();
            point_cfg.kind = ExperimentKind::Custom;
            let mut manifest = RunManifest::new(&point_cfg, &p, SystemTime::now());
            let mut diag = BTreeMap::new();
            autonomous_diagnostics(&run, &mut diag);
            manifest.diagnostics = diag;
            sub.manifest(&manifest)?;
            for f in sub.files() {
                dir.adopt(format!("{name}/{f}"));
            }
            dir.adopt(format!("{name}/manifest.toml"));
            points.push(SweepPoint {
                mass_factor: mf,
                gamma_factor: gf,
                work_mech_reduced: *run.trace.work_mech.last().unwrap_or(&f64::NAN),
                work_balance: run.work_balance(),
                delta_u_osc: run.matching.delta_u_osc,
                heat_osc: run.matching.heat_osc,
                min_entropy_production_sigmas: run.min_entropy_production_sigmas(),
                matching: run.matching,
                params: p,
            });
        }
    }
    Ok(points)
}

fn write_sweep(dir: &mut RunDir, points: &[SweepPoint]) -> Result<(), RunError> {
    dir.csv(
        "fig3_sweep.csv",
        &[
            "m_kg",
            "m_factor",
            "gamma_kg_per_s",
            "gamma_factor",
            "seed",
            "dU_O_eV",
            "dU_O_stderr_eV",
            "Q_O_eV",
            "Q_O_stderr_eV",
            "W_mech_reduced_eV",
            "dS_O_given_D_kB",
            "heat_ratio",
            "work_balance",
            "entropy_ratio",
            "entropy_ratio_balance",
            "min_Sigma_over_stderr",
        ],
        points.iter().map(|s| {
            vec![
                num(shuttle_core::units::mass_to_kg(s.params.mass)),
                num(s.mass_factor),
                num(shuttle_core::units::friction_to_kg_per_s(s.params.gamma)),
                num(s.gamma_factor),
                s.params.master_seed.to_string(),
                num(s.delta_u_osc.mean),
                num(s.delta_u_osc.stderr),
                num(s.heat_osc.mean),
                num(s.heat_osc.stderr),
                num(s.work_mech_reduced),
                num(s.matching.delta_s_conditional),
                num(s.matching.heat_ratio),
                num(s.work_balance),
                num(s.matching.entropy_ratio),
                num(s.matching.entropy_ratio_balance),
                num(s.min_entropy_production_sigmas),
            ]
        }),
    )
}

fn write_strokes(dir: &mut RunDir, audit: &StrokeAudit) -> Result<(), RunError> {
    let tau_cycle = audit.cycle.params.tau_cycle();
    dir.csv(
        "schedule.csv",
        &["stroke", "piece", "start_fraction", "end_fraction", "start_ns", "end_ns"],
        audit.schedule.segments().into_iter().map(|(piece, kind, iv)| {
            vec![
                kind.to_string(),
                piece.to_string(),
                iv.start.to_string(),
                iv.end.to_string(),
                num(stroke::to_f64(iv.start) * tau_cycle),
                num(stroke::to_f64(iv.end) * tau_cycle),
            ]
        }),
    )?;
    let kbt = audit.cycle.params.thermal_energy();
    dir.csv(
        "strokes.csv",
        &[
            "stroke",
            "dU_D_eV",
            "W_mech_eV",
            "Q_L_eV",
            "Q_R_eV",
            "W_chem_eV",
            "dS_D_kB",
            "first_law_residual_eV",
            "Sigma_kB",
        ],
        audit.strokes.iter().map(|s| {
            vec![
                s.kind.to_string(),
                num(s.delta_u_dot),
                num(s.work_mech),
                num(s.heat_left),
                num(s.heat_right),
                num(s.work_chem),
                num(s.delta_s_dot),
                num(s.first_law_residual()),
                num(s.entropy_production(kbt)),
            ]
        }),
    )?;
    let (c, r) = (&audit.cycle, &audit.reduced);
    dir.csv(
        "cycle_trace.csv",
        &["t_ns", "eps_eV", "P1_cycle_prob", "P1_reduced_prob"],
        (0..c.len()).map(|i| vec![num(c.times[i]), num(c.eps[i]), num(c.p1[i]), num(r.p1[i])]),
    )
}
