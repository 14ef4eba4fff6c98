//! Parallel ensembles of trajectories with a reduction that does not depend on
//! the number of workers, plus per-trajectory phase-space records at
//! checkpoints from which histograms and entropies are built.

use rayon::prelude::*;

use crate::engine::{self, EngineError, ShuttleState, ThermoLedger};
use crate::model::{Occupation, Params};
use crate::stats::RunningStats;

/// Trajectories reduced sequentially into one partial result before merging.
const BLOCK: usize = 8;

/// Ensemble observables recorded on the output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    /// q, whose mean is P₁.
    Occupation,
    Position,
    Velocity,
    VelocitySquared,
    /// H_O [eV].
    OscillatorEnergy,
    /// ε(x)q [eV].
    DotEnergy,
    /// H_O + ε(x)q [eV].
    TotalEnergy,
    /// Oscillation envelope about the charge-dependent rest position [nm].
    Amplitude,
    HeatLeft,
    HeatRight,
    HeatOsc,
    WorkChem,
    /// ΔU_DO − ΣQ_ν − W_chem since t = 0 [eV].
    FirstLawResidual,
}

impl Observable {
    pub const ALL: [Observable; 13] = [
        Observable::Occupation,
        Observable::Position,
        Observable::Velocity,
        Observable::VelocitySquared,
        Observable::OscillatorEnergy,
        Observable::DotEnergy,
        Observable::TotalEnergy,
        Observable::Amplitude,
        Observable::HeatLeft,
        Observable::HeatRight,
        Observable::HeatOsc,
        Observable::WorkChem,
        Observable::FirstLawResidual,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn evaluate(self, s: &ShuttleState, l: &ThermoLedger, e0: f64, p: &Params) -> f64 {
        match self {
            Observable::Occupation => s.q.as_f64(),
            Observable::Position => s.x,
            Observable::Velocity => s.v,
            Observable::VelocitySquared => s.v * s.v,
            Observable::OscillatorEnergy => s.oscillator_energy(p),
            Observable::DotEnergy => s.dot_energy(p),
            Observable::TotalEnergy => s.total_energy(p),
            Observable::Amplitude => s.amplitude(p),
            Observable::HeatLeft => l.heat_left(),
            Observable::HeatRight => l.heat_right(),
            Observable::HeatOsc => l.heat_osc(),
            Observable::WorkChem => l.work_chem(),
            Observable::FirstLawResidual => s.total_energy(p) - e0 - l.heat_total() - l.work_chem(),
        }
    }
}

const N_OBS: usize = Observable::ALL.len();

/// Sampling and execution options of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Spacing of the mean/stderr time series [ns].
    pub output_interval: f64,
    /// Spacing of the per-trajectory phase-space records [ns]; a multiple of
    /// `output_interval`. The final time is always recorded.
    pub checkpoint_interval: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            output_interval: 0.05,
            checkpoint_interval: 5.0,
            workers: None,
        }
    }
}

/// State and ledger of one trajectory at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub v: f64,
    pub q: Occupation,
    pub heat_left: f64,
    pub heat_right: f64,
    pub heat_osc: f64,
    pub work_chem: f64,
}

impl PointRecord {
    fn new(s: &ShuttleState, l: &ThermoLedger) -> Self {
        Self {
            x: s.x,
            v: s.v,
            q: s.q,
            heat_left: l.heat_left(),
            heat_right: l.heat_right(),
            heat_osc: l.heat_osc(),
            work_chem: l.work_chem(),
        }
    }

    pub fn heat_total(&self) -> f64 {
        self.heat_left + self.heat_right + self.heat_osc
    }

    pub fn state(&self, t: f64) -> ShuttleState {
        ShuttleState {
            x: self.x,
            v: self.v,
            q: self.q,
            t,
        }
    }
}

/// Records of all trajectories at one time, ordered by trajectory index.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub records: Vec<PointRecord>,
}

/// Means, standard errors and checkpoint records of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub params: Params,
    pub times: Vec<f64>,
    stats: Vec<[RunningStats; N_OBS]>,
    pub checkpoints: Vec<Checkpoint>,
}

impl EnsembleSeries {
    pub fn n_traj(&self) -> usize {
        self.stats.first().map_or(0, |s| s[0].count() as usize)
    }

    /// Standard errors need at least two trajectories; with one they are NaN.
    pub fn stderr_defined(&self) -> bool {
        self.n_traj() >= 2
    }

    pub fn stats(&self, obs: Observable, i: usize) -> RunningStats {
        self.stats[i][obs.index()]
    }

    pub fn mean(&self, obs: Observable) -> Vec<f64> {
        self.stats.iter().map(|s| s[obs.index()].mean()).collect()
    }

    pub fn stderr(&self, obs: Observable) -> Vec<f64> {
        self.stats.iter().map(|s| s[obs.index()].stderr()).collect()
    }

    /// Index of the output sample closest to `t`, if within half a step.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t);
        [i.saturating_sub(1), i]
            .into_iter()
            .filter(|&j| j < self.times.len())
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
            .filter(|&j| (self.times[j] - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn checkpoint_at(&self, t: f64) -> Option<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| (c.t - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }
}

struct Partial {
    stats: Vec<[RunningStats; N_OBS]>,
    checkpoints: Vec<Vec<PointRecord>>,
}

impl Partial {
    fn new(n_out: usize, n_ck: usize, capacity: usize) -> Self {
        Self {
            stats: vec![[RunningStats::new(); N_OBS]; n_out],
            checkpoints: (0..n_ck).map(|_| Vec::with_capacity(capacity)).collect(),
        }
    }

    fn merge(&mut self, other: Partial) {
        for (a, b) in self.stats.iter_mut().zip(&other.stats) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        for (a, b) in self.checkpoints.iter_mut().zip(other.checkpoints) {
            a.extend(b);
        }
    }
}

struct Layout {
    n_steps: u64,
    out_stride: u64,
    n_out: usize,
    ck_steps: Vec<u64>,
}

fn layout(p: &Params, cfg: &EnsembleConfig) -> Result<Layout, EngineError> {
    let n_steps = engine::horizon_steps(p)?;
    let out_stride = engine::steps_for("output_interval", cfg.output_interval, p.dt)?;
    let ck_stride = engine::steps_for("checkpoint_interval", cfg.checkpoint_interval, p.dt)?;
    if n_steps % out_stride != 0 {
        return Err(EngineError::Grid {
            name: "t_final",
            value: p.t_final,
            dt: cfg.output_interval,
        });
    }
    if ck_stride % out_stride != 0 {
        return Err(EngineError::Grid {
            name: "checkpoint_interval",
            value: cfg.checkpoint_interval,
            dt: cfg.output_interval,
        });
    }
    let mut ck_steps: Vec<u64> = (0..=n_steps).step_by(ck_stride as usize).collect();
    if ck_steps.last() != Some(&n_steps) {
        ck_steps.push(n_steps);
    }
    Ok(Layout {
        n_steps,
        out_stride,
        n_out: (n_steps / out_stride) as usize + 1,
        ck_steps,
    })
}

fn run_block(p: &Params, lay: &Layout, indices: std::ops::Range<usize>) -> Result<Partial, EngineError> {
    let mut part = Partial::new(lay.n_out, lay.ck_steps.len(), indices.len());
    let e0 = ShuttleState::initial(p).total_energy(p);
    for index in indices {
        let index = index as u64;
        let mut next_ck = 0usize;
        let stats = &mut part.stats;
        let checkpoints = &mut part.checkpoints;
        let wrap = |source| EngineError::Trajectory {
            index,
            source: Box::new(source),
        };
        let (final_state, _) = engine::run_trajectory(p, index, lay.out_stride, |step, s, l| {
            let k = (step / lay.out_stride) as usize;
            for obs in Observable::ALL {
                stats[k][obs.index()].push(obs.evaluate(s, l, e0, p));
            }
            if next_ck < lay.ck_steps.len() && lay.ck_steps[next_ck] == step {
                checkpoints[next_ck].push(PointRecord::new(s, l));
                next_ck += 1;
            }
        })
        .map_err(wrap)?;
        debug_assert_eq!(final_state.t, lay.n_steps as f64 * p.dt);
        debug_assert_eq!(next_ck, lay.ck_steps.len());
    }
    Ok(part)
}

/// Runs `p.n_traj` trajectories seeded by `(p.master_seed, index)`.
///
/// Trajectories are grouped into fixed blocks of consecutive indices; each
/// block is reduced in index order and blocks are merged in index order, so
/// the result is bit-identical for any number of workers. Any failing
/// trajectory aborts the whole ensemble and is reported by index.
pub fn simulate_ensemble(p: &Params, cfg: &EnsembleConfig) -> Result<EnsembleSeries, EngineError> {
    p.validate().map_err(EngineError::InvalidParams)?;
    let lay = layout(p, cfg)?;
    let n = p.n_traj;
    let blocks: Vec<_> = (0..n).step_by(BLOCK).map(|a| a..(a + BLOCK).min(n)).collect();
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    // Waves bound the number of partial results alive at once.
    let wave = 4 * workers;
    let mut total = Partial::new(lay.n_out, lay.ck_steps.len(), n);
    for chunk in blocks.chunks(wave) {
        let parts: Vec<Result<Partial, EngineError>> =
            pool.install(|| chunk.par_iter().map(|r| run_block(p, &lay, r.clone())).collect());
        for part in parts {
            total.merge(part?);
        }
    }
    Ok(EnsembleSeries {
        params: p.clone(),
        times: (0..lay.n_out)
            .map(|k| (k as u64 * lay.out_stride) as f64 * p.dt)
            .collect(),
        stats: total.stats,
        checkpoints: lay
            .ck_steps
            .iter()
            .zip(total.checkpoints)
            .map(|(&s, records)| Checkpoint {
                t: s as f64 * p.dt,
                records,
            })
            .collect(),
    })
}

/// Rectangular (x, v) grid shared by both charge states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub nv: usize,
}

impl Default for HistogramGrid {
    fn default() -> Self {
        Self {
            x_min: -12.0,
            x_max: 12.0,
            nx: 120,
            v_min: -12.0,
            v_max: 12.0,
            nv: 120,
        }
    }
}

impl HistogramGrid {
    /// Grid centred on (0, 0) with the given half-widths and bin counts.
    pub fn symmetric(x_half: f64, nx: usize, v_half: f64, nv: usize) -> Self {
        Self {
            x_min: -x_half,
            x_max: x_half,
            nx,
            v_min: -v_half,
            v_max: v_half,
            nv,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / self.nv as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dv()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nv
    }

    /// Same range with twice as many bins along each axis.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            nv: 2 * self.nv,
            ..*self
        }
    }

    fn axis(value: f64, min: f64, width: f64, n: usize) -> (usize, bool) {
        let k = ((value - min) / width).floor();
        if k < 0.0 {
            (0, true)
        } else if k >= n as f64 {
            (n - 1, true)
        } else {
            (k as usize, false)
        }
    }

    /// Flat index of the cell containing (x, v, q); samples outside the grid
    /// are assigned to the nearest edge cell and flagged.
    pub fn locate(&self, x: f64, v: f64, q: Occupation) -> (usize, bool) {
        let (ix, cx) = Self::axis(x, self.x_min, self.dx(), self.nx);
        let (iv, cv) = Self::axis(v, self.v_min, self.dv(), self.nv);
        (q.index() * self.cells() + ix * self.nv + iv, cx || cv)
    }
}

/// Joint probabilities over (q, x-bin, v-bin).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub grid: HistogramGrid,
    /// Indexed by `q·nx·nv + ix·nv + iv`.
    pub probabilities: Vec<f64>,
    /// Probability mass that fell outside the grid and was clamped to the edge.
    pub clipped_mass: f64,
}

impl PhaseHistogram {
    pub fn from_records(grid: HistogramGrid, records: &[PointRecord]) -> Self {
        let mut counts = vec![0u64; 2 * grid.cells()];
        let mut clipped = 0u64;
        for r in records {
            let (cell, out) = grid.locate(r.x, r.v, r.q);
            counts[cell] += 1;
            clipped += out as u64;
        }
        let n = records.len().max(1) as f64;
        Self {
            grid,
            probabilities: counts.iter().map(|&c| c as f64 / n).collect(),
            clipped_mass: clipped as f64 / n,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Probability of the charge state q.
    pub fn marginal(&self, q: Occupation) -> f64 {
        let c = self.grid.cells();
        self.probabilities[q.index() * c..(q.index() + 1) * c].iter().sum()
    }
}
