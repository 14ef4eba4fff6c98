//! Dot driven by an ideal oscillator: the time-dependent master equation with
//! the prescribed trajectory `x_t = x₀ cos ωt`, its heat and work integrals,
//! and the limit cycle in the (ε, 𝒫₁) plane.

use thiserror::Error;

use crate::ensemble::{EnsembleSeries, Observable};
use crate::model::{self, Lead, ModelError, Params};

/// Default resolution of the reduced solver.
pub const DEFAULT_STEPS_PER_CYCLE: usize = 4096;

/// Largest tolerated `h·(Γ_L + Γ_R)` inside a Runge–Kutta stage.
pub const MAX_STEP_RATE: f64 = 0.5;

/// Sup-distance between successive cycles below which 𝒫₁ counts as periodic.
pub const CYCLE_CONVERGENCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReducedError {
    #[error("step {step} ns too coarse at t = {t} ns: rate*step = {} > {MAX_STEP_RATE}", .rate * .step)]
    StepTooLarge { t: f64, rate: f64, step: f64 },
    #[error("need at least {needed} full cycles, trace has {available}")]
    TooShort { needed: usize, available: usize },
    #[error("no limit cycle within the trace: closest successive cycles differ by {best}")]
    NotConverged { best: f64 },
    #[error("ensemble time {t} ns lies outside the reduced trace [0, {t_end}] ns")]
    GridMismatch { t: f64, t_end: f64 },
    #[error("invalid horizon or resolution: {0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Position of the ideal oscillator, `x₀ cos ωt`.
pub fn ideal_position(t: f64, p: &Params) -> f64 {
    p.x0 * (p.omega * t).cos()
}

pub fn ideal_velocity(t: f64, p: &Params) -> f64 {
    -p.x0 * p.omega * (p.omega * t).sin()
}

/// Binary Gibbs–Shannon entropy of the dot in units of k_B.
pub fn dot_entropy(p1: f64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    h(p1) + h(1.0 - p1)
}

/// Right-hand side of the augmented system
/// `(𝒫₁, 𝒲_mech, 𝒬_L, 𝒬_R, 𝒲_chem)` with only the leads in `leads` active.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Flows {
    pub dp1: f64,
    pub work_mech: f64,
    pub heat_left: f64,
    pub heat_right: f64,
    pub work_chem: f64,
}

pub(crate) fn flows(t: f64, p1: f64, p: &Params, leads: &[Lead]) -> Result<(Flows, f64), ReducedError> {
    let x = ideal_position(t, p);
    let eps = model::charging_energy(x, p);
    let rates = model::rate_matrix(x, p)?;
    let mut out = Flows {
        work_mech: p1 * (-p.alpha * p.voltage * ideal_velocity(t, p)),
        ..Flows::default()
    };
    let mut total_rate = 0.0;
    for &lead in leads {
        let r = rates.lead(lead);
        total_rate += r.total();
        let current = r.current_into_dot(p1);
        out.dp1 += current;
        let mu = p.mu(lead);
        let heat = (eps - mu) * current;
        match lead {
            Lead::Left => out.heat_left += heat,
            Lead::Right => out.heat_right += heat,
        }
        out.work_chem += mu * current;
    }
    Ok((out, total_rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Integrals {
    pub p1: f64,
    pub work_mech: f64,
    pub heat_left: f64,
    pub heat_right: f64,
    pub work_chem: f64,
}

impl Integrals {
    fn advanced(&self, k: &Flows, h: f64) -> Self {
        Self {
            p1: self.p1 + h * k.dp1,
            work_mech: self.work_mech + h * k.work_mech,
            heat_left: self.heat_left + h * k.heat_left,
            heat_right: self.heat_right + h * k.heat_right,
            work_chem: self.work_chem + h * k.work_chem,
        }
    }
}

/// One classical Runge–Kutta step; returns the new integrals and dP₁/dt at
/// the end of the step.
pub(crate) fn rk4_step(
    t: f64,
    y: &Integrals,
    h: f64,
    p: &Params,
    leads: &[Lead],
) -> Result<Integrals, ReducedError> {
    let check = |t: f64, rate: f64| {
        if rate * h > MAX_STEP_RATE {
            Err(ReducedError::StepTooLarge { t, rate, step: h })
        } else {
            Ok(())
        }
    };
    let (k1, r1) = flows(t, y.p1, p, leads)?;
    check(t, r1)?;
    let (k2, r2) = flows(t + 0.5 * h, y.p1 + 0.5 * h * k1.dp1, p, leads)?;
    check(t + 0.5 * h, r2)?;
    let (k3, _) = flows(t + 0.5 * h, y.p1 + 0.5 * h * k2.dp1, p, leads)?;
    let (k4, r4) = flows(t + h, y.p1 + h * k3.dp1, p, leads)?;
    check(t + h, r4)?;
    let combine = |f: fn(&Flows) -> f64| (f(&k1) + 2.0 * f(&k2) + 2.0 * f(&k3) + f(&k4)) / 6.0;
    let slope = Flows {
        dp1: combine(|k| k.dp1),
        work_mech: combine(|k| k.work_mech),
        heat_left: combine(|k| k.heat_left),
        heat_right: combine(|k| k.heat_right),
        work_chem: combine(|k| k.work_chem),
    };
    Ok(y.advanced(&slope, h))
}

/// Solution of the reduced model on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrace {
    pub params: Params,
    pub steps_per_cycle: usize,
    /// Grid spacing [ns].
    pub step: f64,
    pub times: Vec<f64>,
    pub p1: Vec<f64>,
    /// d𝒫₁/dt on the grid [1/ns], used for interpolation.
    pub dp1: Vec<f64>,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub work_mech: Vec<f64>,
    pub heat_left: Vec<f64>,
    pub heat_right: Vec<f64>,
    pub work_chem: Vec<f64>,
}

impl ReducedTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// 𝒰_D = ε(x_t)𝒫₁ [eV].
    pub fn dot_energy(&self, i: usize) -> f64 {
        self.eps[i] * self.p1[i]
    }

    /// 𝒮_D in units of k_B.
    pub fn dot_entropy(&self, i: usize) -> f64 {
        dot_entropy(self.p1[i])
    }

    pub fn full_cycles(&self) -> usize {
        (self.len() - 1) / self.steps_per_cycle
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// 𝒫₁(t) by cubic Hermite interpolation between grid points.
    pub fn p1_at(&self, t: f64) -> Result<f64, ReducedError> {
        let t_end = self.end_time();
        if !(t >= 0.0 && t <= t_end * (1.0 + 1e-12)) {
            return Err(ReducedError::GridMismatch { t, t_end });
        }
        let i = ((t / self.step).floor() as usize).min(self.len() - 2);
        let h = self.step;
        let s = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.p1[i] + h10 * h * self.dp1[i] + h01 * self.p1[i + 1] + h11 * h * self.dp1[i + 1])
    }
}

/// Solves the reduced model up to `t_final` with the default resolution.
pub fn solve_reduced(p: &Params, t_final: f64) -> Result<ReducedTrace, ReducedError> {
    solve_reduced_with(p, t_final, DEFAULT_STEPS_PER_CYCLE, p.q0.as_f64())
}

/// Solves the reduced model with `steps_per_cycle` grid points per period and
/// initial filling probability `p1_init`.
pub fn solve_reduced_with(
    p: &Params,
    t_final: f64,
    steps_per_cycle: usize,
    p1_init: f64,
) -> Result<ReducedTrace, ReducedError> {
    if steps_per_cycle == 0 || !(t_final > 0.0) {
        return Err(ReducedError::Setup(format!(
            "t_final = {t_final}, steps_per_cycle = {steps_per_cycle}"
        )));
    }
    let step = p.tau_cycle() / steps_per_cycle as f64;
    let n = (t_final / step).round().max(1.0) as usize;
    integrate(p, steps_per_cycle, n, p1_init, &|_| &Lead::BOTH)
}

/// Integrates `n` steps of size τ/`steps_per_cycle`, coupling the dot during
/// step `i` only to the leads returned by `leads(i)`.
pub(crate) fn integrate(
    p: &Params,
    steps_per_cycle: usize,
    n: usize,
    p1_init: f64,
    leads: &dyn Fn(usize) -> &'static [Lead],
) -> Result<ReducedTrace, ReducedError> {
    if steps_per_cycle == 0 || !(0.0..=1.0).contains(&p1_init) {
        return Err(ReducedError::Setup(format!(
            "steps_per_cycle = {steps_per_cycle}, p1 = {p1_init}"
        )));
    }
    let step = p.tau_cycle() / steps_per_cycle as f64;
    let mut trace = ReducedTrace {
        params: p.clone(),
        steps_per_cycle,
        step,
        times: Vec::with_capacity(n + 1),
        p1: Vec::with_capacity(n + 1),
        dp1: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        eps: Vec::with_capacity(n + 1),
        work_mech: Vec::with_capacity(n + 1),
        heat_left: Vec::with_capacity(n + 1),
        heat_right: Vec::with_capacity(n + 1),
        work_chem: Vec::with_capacity(n + 1),
    };
    let mut y = Integrals {
        p1: p1_init,
        ..Integrals::default()
    };
    for i in 0..=n {
        let t = i as f64 * step;
        if i > 0 {
            y = rk4_step((i - 1) as f64 * step, &y, step, p, leads(i - 1))?;
        }
        let x = ideal_position(t, p);
        trace.times.push(t);
        trace.p1.push(y.p1);
        trace.dp1.push(flows(t, y.p1, p, leads(i.min(n.saturating_sub(1))))?.0.dp1);
        trace.x.push(x);
        trace.eps.push(model::charging_energy(x, p));
        trace.work_mech.push(y.work_mech);
        trace.heat_left.push(y.heat_left);
        trace.heat_right.push(y.heat_right);
        trace.work_chem.push(y.work_chem);
    }
    Ok(trace)
}

/// One period started from the fixed point of the cycle map, which is affine
/// in the initial filling: 𝒫(τ) = a·𝒫(0) + b.
pub(crate) fn periodic_orbit_with(
    p: &Params,
    steps_per_cycle: usize,
    leads: &dyn Fn(usize) -> &'static [Lead],
) -> Result<ReducedTrace, ReducedError> {
    let end = |p1: f64| -> Result<f64, ReducedError> {
        Ok(*integrate(p, steps_per_cycle, steps_per_cycle, p1, leads)?.p1.last().unwrap())
    };
    let b = end(0.0)?;
    let a = end(1.0)? - b;
    let fixed = if (1.0 - a).abs() < 1e-12 {
        p.q0.as_f64()
    } else {
        (b / (1.0 - a)).clamp(0.0, 1.0)
    };
    integrate(p, steps_per_cycle, steps_per_cycle, fixed, leads)
}

/// The periodic solution of the reduced model over one cycle.
pub fn periodic_orbit(p: &Params, steps_per_cycle: usize) -> Result<ReducedTrace, ReducedError> {
    periodic_orbit_with(p, steps_per_cycle, &|_| &Lead::BOTH)
}

/// Converged periodic orbit of 𝒫₁ in the (ε, 𝒫₁) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    /// Index of the first cycle that repeats its predecessor.
    pub cycle_index: usize,
    pub start_time: f64,
    pub eps: Vec<f64>,
    pub p1: Vec<f64>,
    /// Sup-distance in 𝒫₁ to the previous cycle.
    pub convergence: f64,
    /// Shoelace evaluation of ∮𝒫₁ dε over the loop [eV].
    pub loop_integral: f64,
    /// 𝒲_mech accumulated over the same cycle [eV].
    pub work_mech: f64,
}

impl LimitCycle {
    /// 𝒫₁ on the rising (dε/dt > 0) or falling branch of the loop at `eps`,
    /// clamped to the loop's ε range.
    pub fn p1_on_branch(&self, eps: f64, rising: bool) -> f64 {
        let n = self.eps.len();
        let mut branch: Vec<(f64, f64)> = (0..n)
            .filter(|&i| (self.eps[(i + 1) % n] > self.eps[i]) == rising)
            .map(|i| (self.eps[i], self.p1[i]))
            .collect();
        branch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some(&first) = branch.first() else {
            return f64::NAN;
        };
        let last = *branch.last().unwrap();
        if eps <= first.0 {
            return first.1;
        }
        if eps >= last.0 {
            return last.1;
        }
        let j = branch.partition_point(|b| b.0 < eps);
        let (a, b) = (branch[j - 1], branch[j]);
        if b.0 == a.0 {
            return b.1;
        }
        a.1 + (b.1 - a.1) * (eps - a.0) / (b.0 - a.0)
    }

    /// Enclosed area counted positive for a loop that hands work to the
    /// oscillator, i.e. −∮𝒫₁dε. Drawn with 𝒫₁ horizontal and ε vertical,
    /// such a loop runs clockwise.
    pub fn area(&self) -> f64 {
        -self.loop_integral
    }
}

/// ∮ y dx of the closed polygon through the points, closing the last segment.
pub fn loop_integral(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            0.5 * (ys[i] + ys[j]) * (xs[j] - xs[i])
        })
        .sum()
}

/// Finds the first cycle whose 𝒫₁ differs from the previous one by less than
/// [`CYCLE_CONVERGENCE`] everywhere.
pub fn limit_cycle(trace: &ReducedTrace) -> Result<LimitCycle, ReducedError> {
    let n = trace.steps_per_cycle;
    let cycles = trace.full_cycles();
    if cycles < 3 {
        return Err(ReducedError::TooShort {
            needed: 3,
            available: cycles,
        });
    }
    let mut best = f64::INFINITY;
    for k in 1..cycles {
        let distance = (0..=n)
            .map(|i| (trace.p1[k * n + i] - trace.p1[(k - 1) * n + i]).abs())
            .fold(0.0, f64::max);
        best = best.min(distance);
        if distance < CYCLE_CONVERGENCE {
            let range = k * n..(k + 1) * n;
            let eps = trace.eps[range.clone()].to_vec();
            let p1 = trace.p1[range].to_vec();
            return Ok(LimitCycle {
                cycle_index: k,
                start_time: trace.times[k * n],
                loop_integral: loop_integral(&eps, &p1),
                eps,
                p1,
                convergence: distance,
                work_mech: trace.work_mech[(k + 1) * n] - trace.work_mech[k * n],
            });
        }
    }
    Err(ReducedError::NotConverged { best })
}

/// First- and second-law audit of a reduced trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLaws {
    /// max_t |Δ𝒰_D − 𝒬_L − 𝒬_R − 𝒲_chem − 𝒲_mech| [eV].
    pub first_law_residual: f64,
    /// The same residual relative to the largest |term| seen.
    pub first_law_relative: f64,
    /// Δ𝒮_D − (𝒬_L + 𝒬_R)/k_BT over [0, t] on the grid, in k_B.
    pub entropy_production: Vec<f64>,
    /// Entropy production of each full cycle, in k_B.
    pub cycle_entropy_production: Vec<f64>,
    /// Dot entropy change over each full cycle, in k_B.
    pub cycle_entropy_change: Vec<f64>,
}

impl ReducedLaws {
    pub fn min_entropy_production(&self) -> f64 {
        self.entropy_production.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn reduced_laws(trace: &ReducedTrace) -> ReducedLaws {
    let kbt = trace.params.thermal_energy();
    let u0 = trace.dot_energy(0);
    let s0 = trace.dot_entropy(0);
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut production = Vec::with_capacity(trace.len());
    for i in 0..trace.len() {
        let du = trace.dot_energy(i) - u0;
        let terms = [
            trace.heat_left[i],
            trace.heat_right[i],
            trace.work_chem[i],
            trace.work_mech[i],
        ];
        residual = residual.max((du - terms.iter().sum::<f64>()).abs());
        scale = terms.iter().fold(scale, |acc, v| acc.max(v.abs()));
        let lead_heat = trace.heat_left[i] + trace.heat_right[i];
        production.push(trace.dot_entropy(i) - s0 - lead_heat / kbt);
    }
    let n = trace.steps_per_cycle;
    let mut cycle_production = Vec::new();
    let mut cycle_entropy = Vec::new();
    for k in 0..trace.full_cycles() {
        let (a, b) = (k * n, (k + 1) * n);
        let ds = trace.dot_entropy(b) - trace.dot_entropy(a);
        let heat = trace.heat_left[b] - trace.heat_left[a] + trace.heat_right[b] - trace.heat_right[a];
        cycle_entropy.push(ds);
        cycle_production.push(ds - heat / kbt);
    }
    ReducedLaws {
        first_law_residual: residual,
        first_law_relative: if scale > 0.0 { residual / scale } else { 0.0 },
        entropy_production: production,
        cycle_entropy_production: cycle_production,
        cycle_entropy_change: cycle_entropy,
    }
}

/// Deviations between the reduced model and an autonomous ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub window_start: f64,
    pub window_end: f64,
    pub samples: usize,
    pub p1_sup: f64,
    pub p1_rms: f64,
    /// RMS of ε(⟨x⟩) − ε(x_t) [eV].
    pub eps_rms: f64,
    /// RMS distance in 𝒫₁ between the ensemble points (ε(⟨x⟩), P₁) and the
    /// reduced loop branch with the same direction of ε; insensitive to a
    /// phase drift of the oscillator.
    pub loop_rms: f64,
    /// Final-time ledger differences, ensemble minus reduced [eV].
    pub heat_left: f64,
    pub heat_right: f64,
    pub work_chem: f64,
}

/// Compares the ensemble occupation and ledgers with the reduced model over
/// the ensemble samples in `[window_start, ∞)`.
pub fn compare_to_autonomous(
    trace: &ReducedTrace,
    ensemble: &EnsembleSeries,
    window_start: f64,
) -> Result<Deviation, ReducedError> {
    let p = &trace.params;
    let cycle = limit_cycle(trace)?;
    let ens_eps: Vec<f64> = ensemble
        .mean(Observable::Position)
        .iter()
        .map(|&x| model::charging_energy(x, p))
        .collect();
    let mut loop_sq = 0.0;
    let occupation = ensemble.mean(Observable::Occupation);
    let position = ensemble.mean(Observable::Position);
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let mut eps_sq = 0.0;
    let mut count = 0usize;
    for (i, &t) in ensemble.times.iter().enumerate() {
        if t < window_start {
            continue;
        }
        let reduced = trace.p1_at(t)?;
        let d = occupation[i] - reduced;
        sup = sup.max(d.abs());
        sq += d * d;
        let de = model::charging_energy(position[i], p) - model::charging_energy(ideal_position(t, p), p);
        eps_sq += de * de;
        let (a, b) = (i.saturating_sub(1), (i + 1).min(ens_eps.len() - 1));
        let on_loop = cycle.p1_on_branch(ens_eps[i], ens_eps[b] > ens_eps[a]);
        loop_sq += (occupation[i] - on_loop).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(ReducedError::GridMismatch {
            t: window_start,
            t_end: trace.end_time(),
        });
    }
    let last = ensemble.times.len() - 1;
    let t_last = ensemble.times[last];
    let j = (t_last / trace.step).round() as usize;
    if j >= trace.len() || (trace.times[j] - t_last).abs() > 0.5 * trace.step {
        return Err(ReducedError::GridMismatch {
            t: t_last,
            t_end: trace.end_time(),
        });
    }
    let at_end = |obs: Observable| ensemble.mean(obs)[last];
    Ok(Deviation {
        window_start,
        window_end: t_last,
        samples: count,
        p1_sup: sup,
        p1_rms: (sq / count as f64).sqrt(),
        eps_rms: (eps_sq / count as f64).sqrt(),
        loop_rms: (loop_sq / count as f64).sqrt(),
        heat_left: at_end(Observable::HeatLeft) - trace.heat_left[j],
        heat_right: at_end(Observable::HeatRight) - trace.heat_right[j],
        work_chem: at_end(Observable::WorkChem) - trace.work_chem[j],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_tunneling_keeps_occupation() {
        let p = Params {
            gamma0: 0.0,
            ..Params::default()
        };
        let trace = solve_reduced(&p, 4.0 * p.tau_cycle()).unwrap();
        let eps0 = trace.eps[0];
        for i in 0..trace.len() {
            assert_eq!(trace.p1[i], 1.0);
            assert_eq!(trace.heat_left[i], 0.0);
            assert_eq!(trace.work_chem[i], 0.0);
            assert_relative_eq!(trace.work_mech[i], trace.eps[i] - eps0, epsilon = 1e-11);
        }
        let laws = reduced_laws(&trace);
        assert!(laws.first_law_residual < 1e-11);
        let cycle = limit_cycle(&trace).unwrap();
        assert!(cycle.area().abs() < 1e-12);
    }

    #[test]
    fn frozen_oscillator_relaxes_to_two_state_steady_state() {
        let p = Params {
            omega: 1e-7,
            x0: -2.0,
            ..Params::default()
        }
        .with_bias(0.3);
        let p = Params {
            temperature: 3000.0,
            ..p
        };
        // τ/2²⁶ ≈ 0.94 ns per step.
        let trace = solve_reduced_with(&p, 2000.0, 1 << 26, 0.0).unwrap();
        let x = p.x0;
        let r = model::rate_matrix(x, &p).unwrap();
        let expected = (r.left.gain + r.right.gain) / (r.left.total() + r.right.total());
        assert_relative_eq!(*trace.p1.last().unwrap(), expected, max_relative = 1e-6);
        assert!(expected > 0.05 && expected < 0.95);
    }

    #[test]
    fn step_too_coarse_is_a_fault() {
        let p = Params::default();
        assert!(matches!(
            solve_reduced_with(&p, 50.0, 16, 1.0),
            Err(ReducedError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn default_device_reaches_a_working_limit_cycle() {
        let p = Params::default();
        let trace = solve_reduced(&p, p.t_final).unwrap();
        assert!(trace.p1.iter().all(|v| (0.0..=1.0).contains(v)));
        let cycle = limit_cycle(&trace).unwrap();
        assert!(cycle.cycle_index <= 3, "converged only at cycle {}", cycle.cycle_index);
        assert!(cycle.area() > 0.0);
        let rel = (cycle.loop_integral - cycle.work_mech).abs() / cycle.work_mech.abs();
        assert!(rel < 1e-3, "Green identity off by {rel}");
        let laws = reduced_laws(&trace);
        assert!(laws.first_law_relative < 1e-8, "{}", laws.first_law_relative);
        assert!(laws.min_entropy_production() > -1e-9);
        // Voltage-driven engine: chemical work pays for the extracted work.
        let last = trace.len() - 1;
        assert!(trace.work_chem[last] > -trace.work_mech[last]);
        assert!(trace.work_mech[last] < 0.0);
    }

    #[test]
    fn converged_cycles_close_state_functions() {
        let p = Params::default();
        let trace = solve_reduced(&p, 8.0 * p.tau_cycle()).unwrap();
        let laws = reduced_laws(&trace);
        let n = trace.steps_per_cycle;
        let k = trace.full_cycles() - 1;
        let (a, b) = (k * n, (k + 1) * n);
        assert!(laws.cycle_entropy_change[k].abs() < 1e-8);
        let du = trace.dot_energy(b) - trace.dot_energy(a);
        assert!(du.abs() < 1e-7);
        let w = trace.work_mech[b] - trace.work_mech[a];
        let q = trace.heat_left[b] - trace.heat_left[a] + trace.heat_right[b] - trace.heat_right[a];
        let c = trace.work_chem[b] - trace.work_chem[a];
        assert_relative_eq!(w, -q - c, max_relative = 1e-7);
        assert!(laws.cycle_entropy_production[k] >= 0.0);
    }

    #[test]
    fn periodic_orbit_closes() {
        let p = Params::default();
        let orbit = periodic_orbit(&p, 4096).unwrap();
        assert!((orbit.p1[0] - orbit.p1[4096]).abs() < 1e-10);
        let trace = solve_reduced(&p, 8.0 * p.tau_cycle()).unwrap();
        let k = 7 * 4096;
        for i in (0..=4096).step_by(256) {
            assert!((orbit.p1[i] - trace.p1[k + i]).abs() < 1e-8);
        }
    }

    #[test]
    fn hermite_interpolation_hits_nodes() {
        let p = Params::default();
        let trace = solve_reduced(&p, 30.0).unwrap();
        for i in [0, 17, 400, trace.len() - 1] {
            assert_relative_eq!(trace.p1_at(trace.times[i]).unwrap(), trace.p1[i], epsilon = 1e-12);
        }
        assert!(trace.p1_at(31.0).is_err());
    }

    #[test]
    fn shoelace_of_unit_square() {
        // Counter-clockwise square: ∮ y dx = −1.
        let xs = [0.0, 1.0, 1.0, 0.0];
        let ys = [0.0, 0.0, 1.0, 1.0];
        assert_relative_eq!(loop_integral(&xs, &ys), -1.0);
    }

    #[test]
    fn dot_entropy_limits() {
        assert_eq!(dot_entropy(0.0), 0.0);
        assert_eq!(dot_entropy(1.0), 0.0);
        assert_relative_eq!(dot_entropy(0.5), std::f64::consts::LN_2);
    }
}
