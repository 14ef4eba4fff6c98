//! Ensemble energies, histogram entropies and first/second-law audits of the
//! autonomous model.
//!
//! Entropies are in units of k_B. Only differences between checkpoints are
//! physical: the constant from the cell area cancels.

use thiserror::Error;

use crate::ensemble::{Checkpoint, EnsembleSeries, HistogramGrid, PhaseHistogram};
use crate::model::{Occupation, Params};
use crate::stats::RunningStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("no checkpoint at t = {0} ns")]
    MissingCheckpoint(f64),
    #[error("ensemble has no checkpoints")]
    Empty,
}

/// Mean with its standard error (NaN for fewer than two trajectories).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl From<RunningStats> for Estimate {
    fn from(s: RunningStats) -> Self {
        Self {
            mean: s.mean(),
            stderr: s.stderr(),
        }
    }
}

fn estimate(values: impl IntoIterator<Item = f64>) -> Estimate {
    let mut s = RunningStats::new();
    values.into_iter().for_each(|v| s.push(v));
    s.into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub total: Estimate,
    pub dot: Estimate,
    pub oscillator: Estimate,
}

fn checkpoint_energies(c: &Checkpoint, p: &Params) -> Energies {
    let states = || c.records.iter().map(|r| r.state(c.t));
    Energies {
        total: estimate(states().map(|s| s.total_energy(p))),
        dot: estimate(states().map(|s| s.dot_energy(p))),
        oscillator: estimate(states().map(|s| s.oscillator_energy(p))),
    }
}

/// U_DO = ⟨H_O + ε(x)q⟩, U_D = ⟨ε(x)q⟩ and U_O = ⟨H_O⟩ at checkpoint `t`.
pub fn internal_energy(series: &EnsembleSeries, t: f64) -> Result<Energies, ThermoError> {
    let c = series.checkpoint_at(t).ok_or(ThermoError::MissingCheckpoint(t))?;
    Ok(checkpoint_energies(c, &series.params))
}

/// Plug-in entropies of a phase histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    /// −Σ p ln(p/ΔxΔv).
    pub joint: f64,
    /// −Σ_q P_q ln P_q.
    pub dot: f64,
    /// joint − dot.
    pub conditional: f64,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn entropies(hist: &PhaseHistogram) -> Entropies {
    let area = hist.grid.cell_area();
    let joint = -hist.probabilities.iter().map(|&p| plogp(p)).sum::<f64>() + area.ln();
    let dot = -(plogp(hist.marginal(Occupation::Empty)) + plogp(hist.marginal(Occupation::Filled)));
    Entropies {
        joint,
        dot,
        conditional: joint - dot,
    }
}

/// Per-trajectory terms −ln(p_b/ΔxΔv) of the cell each record occupies,
/// whose mean is the plug-in joint entropy.
fn surprisals(hist: &PhaseHistogram, c: &Checkpoint) -> Vec<f64> {
    let area = hist.grid.cell_area();
    c.records
        .iter()
        .map(|r| -(hist.probabilities[hist.grid.locate(r.x, r.v, r.q).0] / area).ln())
        .collect()
}

/// Thermodynamic state of the ensemble at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoRow {
    pub t: f64,
    pub energies: Energies,
    pub entropies: Entropies,
    /// Standard error of the joint entropy (influence-function estimate).
    pub joint_entropy_stderr: f64,
    pub heat_left: Estimate,
    pub heat_right: Estimate,
    pub heat_osc: Estimate,
    pub work_chem: Estimate,
    /// ΔU_DO − ΣQ_ν − W_chem [eV].
    pub first_law_residual: Estimate,
    /// ΔS_DO − ΣQ_ν/k_BT, in k_B.
    pub entropy_production: Estimate,
    /// ΔS_D − Q_L/k_BT − Q_R/k_BT + ΔS_{O|D} − Q_O/k_BT, in k_B.
    pub entropy_production_split: f64,
    pub clipped_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoReport {
    pub grid: HistogramGrid,
    pub thermal_energy: f64,
    pub rows: Vec<ThermoRow>,
}

impl ThermoReport {
    pub fn first(&self) -> &ThermoRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &ThermoRow {
        self.rows.last().expect("report has rows")
    }

    pub fn row_at(&self, t: f64) -> Option<&ThermoRow> {
        self.rows.iter().find(|r| (r.t - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn max_clipped_mass(&self) -> f64 {
        self.rows.iter().map(|r| r.clipped_mass).fold(0.0, f64::max)
    }

    /// Largest |ΔS_D| over the checkpoints, in k_B.
    pub fn dot_entropy_scale(&self) -> f64 {
        let s0 = self.first().entropies.dot;
        self.rows.iter().map(|r| (r.entropies.dot - s0).abs()).fold(0.0, f64::max)
    }
}

/// Energies, entropies, ledgers and entropy production at every checkpoint,
/// with histograms on `grid`.
pub fn thermo_report(series: &EnsembleSeries, grid: HistogramGrid) -> Result<ThermoReport, ThermoError> {
    let p = &series.params;
    let kbt = p.thermal_energy();
    let first = series.checkpoints.first().ok_or(ThermoError::Empty)?;
    let hist0 = PhaseHistogram::from_records(grid, &first.records);
    let s0 = entropies(&hist0);
    let surprisal0 = surprisals(&hist0, first);
    let e0: Vec<f64> = first.records.iter().map(|r| r.state(0.0).total_energy(p)).collect();
    let mut rows = Vec::with_capacity(series.checkpoints.len());
    for c in &series.checkpoints {
        let hist = PhaseHistogram::from_records(grid, &c.records);
        let ent = entropies(&hist);
        let surprisal = surprisals(&hist, c);
        let rec = &c.records;
        let est = |f: &dyn Fn(usize) -> f64| estimate((0..rec.len()).map(f));
        let heat_left = est(&|i| rec[i].heat_left);
        let heat_right = est(&|i| rec[i].heat_right);
        let heat_osc = est(&|i| rec[i].heat_osc);
        let joint_se = estimate(surprisal.iter().copied()).stderr;
        // The mean surprisal is the plug-in joint entropy, so Σ is the mean of
        // these paired per-trajectory terms.
        let production = est(&|i| surprisal[i] - surprisal0[i] - rec[i].heat_total() / kbt);
        let split = (ent.dot - s0.dot) - heat_left.mean / kbt - heat_right.mean / kbt
            + (ent.conditional - s0.conditional)
            - heat_osc.mean / kbt;
        rows.push(ThermoRow {
            t: c.t,
            energies: checkpoint_energies(c, p),
            entropies: ent,
            joint_entropy_stderr: joint_se,
            heat_left,
            heat_right,
            heat_osc,
            work_chem: est(&|i| rec[i].work_chem),
            first_law_residual: est(&|i| {
                rec[i].state(c.t).total_energy(p) - e0[i] - rec[i].heat_total() - rec[i].work_chem
            }),
            entropy_production: production,
            entropy_production_split: split,
            clipped_mass: hist.clipped_mass,
        });
    }
    Ok(ThermoReport {
        grid,
        thermal_energy: kbt,
        rows,
    })
}

/// Entropy production Σ(t) with its standard error at each checkpoint.
pub fn second_law_check(report: &ThermoReport) -> Vec<(f64, Estimate)> {
    report.rows.iter().map(|r| (r.t, r.entropy_production)).collect()
}

/// Change of Σ between two checkpoints, with the standard error of the
/// paired per-trajectory differences.
pub fn entropy_production_change(
    series: &EnsembleSeries,
    grid: HistogramGrid,
    t_from: f64,
    t_to: f64,
) -> Result<Estimate, ThermoError> {
    let kbt = series.params.thermal_energy();
    let a = series.checkpoint_at(t_from).ok_or(ThermoError::MissingCheckpoint(t_from))?;
    let b = series.checkpoint_at(t_to).ok_or(ThermoError::MissingCheckpoint(t_to))?;
    let (ha, hb) = (
        PhaseHistogram::from_records(grid, &a.records),
        PhaseHistogram::from_records(grid, &b.records),
    );
    let (sa, sb) = (surprisals(&ha, a), surprisals(&hb, b));
    let terms = estimate(
        (0..a.records.len()).map(|i| sb[i] - sa[i] - (b.records[i].heat_total() - a.records[i].heat_total()) / kbt),
    );
    Ok(terms)
}

/// Conditions under which the autonomous engine is described by a cycle of
/// the dot alone: negligible oscillator heat and conditional entropy change.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMatching {
    pub tolerance: f64,
    /// ΔU_O over the run [eV].
    pub delta_u_osc: Estimate,
    pub heat_osc: Estimate,
    /// |Q_O|/k_BT, in k_B.
    pub heat_osc_entropy: f64,
    /// ΔS_{O|D} over the run, in k_B.
    pub delta_s_conditional: f64,
    /// max_t |ΔS_D(t)|, in k_B.
    pub dot_entropy_scale: f64,
    /// |ΔS_D| + |Q_L + Q_R|/k_BT at the final checkpoint, in k_B.
    pub dot_balance_scale: f64,
    /// |Q_O| / |ΔU_O|.
    pub heat_ratio: f64,
    /// |ΔS_{O|D}| / max_t |ΔS_D|; bounded below by the bin-alignment noise of
    /// the histogram when the ensemble is narrower than a cell.
    pub entropy_ratio: f64,
    /// |ΔS_{O|D}| / (|ΔS_D| + |Q_L + Q_R|/k_BT), against the full dot entropy
    /// balance.
    pub entropy_ratio_balance: f64,
}

impl CycleMatching {
    pub fn heat_negligible(&self) -> bool {
        self.heat_ratio <= self.tolerance
    }

    pub fn entropy_negligible(&self) -> bool {
        self.entropy_ratio <= self.tolerance
    }

    pub fn consistent(&self) -> bool {
        self.heat_negligible() && self.entropy_negligible()
    }
}

pub fn cycle_matching_conditions(report: &ThermoReport, tolerance: f64) -> CycleMatching {
    let (a, b) = (report.first(), report.last());
    let du = Estimate {
        mean: b.energies.oscillator.mean - a.energies.oscillator.mean,
        stderr: b.energies.oscillator.stderr,
    };
    let ds_cond = b.entropies.conditional - a.entropies.conditional;
    let scale = report.dot_entropy_scale();
    let lead_heat = b.heat_left.mean + b.heat_right.mean;
    let balance = (b.entropies.dot - a.entropies.dot).abs() + lead_heat.abs() / report.thermal_energy;
    let ratio = |num: f64, den: f64| if den > 0.0 { num.abs() / den } else { f64::INFINITY };
    CycleMatching {
        tolerance,
        delta_u_osc: du,
        heat_osc: b.heat_osc,
        heat_osc_entropy: b.heat_osc.mean.abs() / report.thermal_energy,
        delta_s_conditional: ds_cond,
        dot_entropy_scale: scale,
        dot_balance_scale: balance,
        heat_ratio: b.heat_osc.mean.abs() / du.mean.abs(),
        entropy_ratio: ratio(ds_cond, scale),
        entropy_ratio_balance: ratio(ds_cond, balance),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::PointRecord;
    use approx::assert_relative_eq;

    fn rec(x: f64, v: f64, q: Occupation) -> PointRecord {
        PointRecord {
            x,
            v,
            q,
            heat_left: 0.0,
            heat_right: 0.0,
            heat_osc: 0.0,
            work_chem: 0.0,
        }
    }

    #[test]
    fn single_cell_has_minimal_entropy() {
        let grid = HistogramGrid::symmetric(1.0, 10, 2.0, 10);
        let h = PhaseHistogram::from_records(grid, &[rec(0.05, 0.1, Occupation::Filled); 7]);
        let s = entropies(&h);
        assert_relative_eq!(s.joint, grid.cell_area().ln());
        assert_eq!(s.dot, 0.0);
        assert_relative_eq!(s.conditional, grid.cell_area().ln());
    }

    #[test]
    fn uniform_over_four_cells() {
        let grid = HistogramGrid::symmetric(1.0, 2, 1.0, 2);
        let records = [
            rec(-0.5, -0.5, Occupation::Empty),
            rec(0.5, -0.5, Occupation::Empty),
            rec(-0.5, 0.5, Occupation::Empty),
            rec(0.5, 0.5, Occupation::Empty),
        ];
        let s = entropies(&PhaseHistogram::from_records(grid, &records));
        assert_relative_eq!(s.conditional - grid.cell_area().ln(), 4f64.ln(), max_relative = 1e-14);
        assert_eq!(s.dot, 0.0);
    }

    #[test]
    fn even_charge_split_gives_ln2() {
        let grid = HistogramGrid::symmetric(1.0, 2, 1.0, 2);
        let records = [rec(0.5, 0.5, Occupation::Empty), rec(0.5, 0.5, Occupation::Filled)];
        let s = entropies(&PhaseHistogram::from_records(grid, &records));
        assert_relative_eq!(s.dot, std::f64::consts::LN_2);
        assert_relative_eq!(s.conditional, grid.cell_area().ln());
    }
}
