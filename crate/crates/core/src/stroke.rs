//! Partition of the cycle into dissipative and isentropic strokes, the
//! stroke-wise propagator of the dot, and its thermodynamics.

use std::fmt;

use num_rational::Rational64;
use thiserror::Error;

use crate::model::{Lead, Params};
use crate::reduced::{self, ReducedError, ReducedTrace};

/// Default resolution of the isentropic window, in fractions of a cycle.
pub const DEFAULT_RESOLUTION: i64 = 24;

/// Default threshold on the smallness integral I.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// `e^{|x₀|/λ}` must reach this for the rates to separate into strokes.
pub const MIN_RATE_CONTRAST: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrokeError {
    #[error("isentropic window {tau_isen} ns outside (0, {half_period}) ns")]
    WindowOutOfRange { tau_isen: f64, half_period: f64 },
    #[error(
        "rate contrast e^(|x0|/lambda) = {contrast} is below {MIN_RATE_CONTRAST}; increase |x0| or decrease lambda"
    )]
    WeakRateContrast { contrast: f64 },
    #[error("no isentropic window of at least 1/{resolution} cycle has I <= {threshold} (smallest gives {smallest}); lower gamma0 or raise the threshold")]
    NoAdmissibleWindow {
        threshold: f64,
        resolution: i64,
        smallest: f64,
    },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Reduced(#[from] ReducedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrokeKind {
    LeftDissipative,
    Isentropic,
    RightDissipative,
}

impl StrokeKind {
    fn leads(self) -> &'static [Lead] {
        const LEFT: [Lead; 1] = [Lead::Left];
        const RIGHT: [Lead; 1] = [Lead::Right];
        match self {
            StrokeKind::LeftDissipative => &LEFT,
            StrokeKind::RightDissipative => &RIGHT,
            StrokeKind::Isentropic => &[],
        }
    }
}

impl fmt::Display for StrokeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrokeKind::LeftDissipative => "left-dissipative",
            StrokeKind::Isentropic => "isentropic",
            StrokeKind::RightDissipative => "right-dissipative",
        })
    }
}

/// Half-open interval of cycle fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: Rational64,
    pub end: Rational64,
}

impl Interval {
    pub fn length(&self) -> Rational64 {
        self.end - self.start
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// One stroke, possibly wrapping around the start of the cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub kind: StrokeKind,
    /// Time-ordered pieces within [0, 1).
    pub pieces: Vec<Interval>,
}

/// Smallness integral over an isentropic window centred where x_t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeIntegral {
    /// ∫(Γ_L + Γ_R) dt over the window.
    pub numeric: f64,
    /// τ_isen Γ₀ exp[(|x₀|/λ) sin(ωτ_isen/2)].
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeSchedule {
    /// Four strokes: the dissipative stroke at the starting turning point,
    /// an isentropic stroke, the opposite dissipative stroke and a second
    /// isentropic stroke.
    pub strokes: Vec<Stroke>,
    /// Duration of each isentropic stroke as a fraction of the cycle.
    pub isentropic_fraction: Rational64,
    /// [ns]
    pub tau_isen: f64,
    pub rate_contrast: f64,
    pub integral: StrokeIntegral,
    pub threshold: f64,
}

impl StrokeSchedule {
    /// All pieces in time order with the index of their stroke.
    pub fn segments(&self) -> Vec<(usize, StrokeKind, Interval)> {
        let mut out: Vec<_> = self
            .strokes
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.pieces.iter().map(move |&iv| (k, s.kind, iv)))
            .collect();
        out.sort_by_key(|s| (s.2.start, s.2.end));
        out
    }

    /// Checks that the pieces tile [0, 1) without gaps or overlaps.
    pub fn check_partition(&self) -> Result<(), StrokeError> {
        let mut cursor = Rational64::from_integer(0);
        for (_, _, iv) in self.segments() {
            if iv.start != cursor || iv.end < iv.start {
                return Err(StrokeError::InvalidSchedule(format!("gap or overlap at {cursor}")));
            }
            cursor = iv.end;
        }
        if cursor != Rational64::from_integer(1) {
            return Err(StrokeError::InvalidSchedule(format!("pieces end at {cursor}")));
        }
        Ok(())
    }

    /// Lowest common denominator of all boundaries.
    pub fn denominator(&self) -> i64 {
        self.segments().iter().fold(1, |acc, (_, _, iv)| {
            lcm(lcm(acc, *iv.start.denom()), *iv.end.denom())
        })
    }

    /// Schedule whose isentropic strokes last `fraction` of a cycle each,
    /// centred on the passages through x = 0. Zero gives purely dissipative
    /// strokes, one half purely isentropic ones.
    pub fn with_isentropic_fraction(p: &Params, fraction: Rational64) -> Result<Self, StrokeError> {
        let half = Rational64::new(1, 2);
        if fraction < Rational64::from_integer(0) || fraction > half {
            return Err(StrokeError::InvalidSchedule(format!("isentropic fraction {fraction}")));
        }
        let quarter = Rational64::new(1, 4);
        let w = fraction / 2;
        let (first, second) = if p.x0 <= 0.0 {
            (StrokeKind::LeftDissipative, StrokeKind::RightDissipative)
        } else {
            (StrokeKind::RightDissipative, StrokeKind::LeftDissipative)
        };
        let iv = |a, b| Interval { start: a, end: b };
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        let three_q = Rational64::new(3, 4);
        let strokes = vec![
            Stroke {
                kind: first,
                pieces: vec![iv(zero, quarter - w), iv(three_q + w, one)],
            },
            Stroke {
                kind: StrokeKind::Isentropic,
                pieces: vec![iv(quarter - w, quarter + w)],
            },
            Stroke {
                kind: second,
                pieces: vec![iv(quarter + w, three_q - w)],
            },
            Stroke {
                kind: StrokeKind::Isentropic,
                pieces: vec![iv(three_q - w, three_q + w)],
            },
        ];
        let tau_isen = to_f64(fraction) * p.tau_cycle();
        let schedule = Self {
            strokes,
            isentropic_fraction: fraction,
            tau_isen,
            rate_contrast: rate_contrast(p),
            integral: if fraction == zero {
                StrokeIntegral {
                    numeric: 0.0,
                    bound: 0.0,
                }
            } else if fraction == half {
                StrokeIntegral {
                    numeric: f64::NAN,
                    bound: f64::NAN,
                }
            } else {
                stroke_integral(tau_isen, p)?
            },
            threshold: f64::NAN,
        };
        schedule.check_partition()?;
        Ok(schedule)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// e^{|x₀|/λ}.
pub fn rate_contrast(p: &Params) -> f64 {
    (p.x0.abs() / p.lambda_tun).exp()
}

/// Closed-form bound of the smallness integral.
pub fn stroke_bound(tau_isen: f64, p: &Params) -> f64 {
    tau_isen * p.gamma0 * ((p.x0.abs() / p.lambda_tun) * (0.5 * p.omega * tau_isen).sin()).exp()
}

/// Smallness integral for an isentropic window of `tau_isen` ns centred on
/// the passage through x = 0, numerically and as the closed-form bound.
pub fn stroke_integral(tau_isen: f64, p: &Params) -> Result<StrokeIntegral, StrokeError> {
    let half_period = 0.5 * p.tau_cycle();
    if !(tau_isen > 0.0 && tau_isen < half_period) {
        return Err(StrokeError::WindowOutOfRange { tau_isen, half_period });
    }
    // Composite Simpson over the window centred at ωt = π/2.
    let n = 2048;
    let a = 0.25 * p.tau_cycle() - 0.5 * tau_isen;
    let h = tau_isen / n as f64;
    let f = |t: f64| {
        let x = reduced::ideal_position(t, p);
        crate::model::tunneling_rate(x, Lead::Left, p) + crate::model::tunneling_rate(x, Lead::Right, p)
    };
    let mut sum = f(a) + f(a + tau_isen);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    Ok(StrokeIntegral {
        numeric: sum * h / 3.0,
        bound: stroke_bound(tau_isen, p),
    })
}

/// Largest isentropic window, in steps of `1/resolution` of a cycle and
/// below half a cycle, whose bound stays within `threshold`.
pub fn build_schedule_with(p: &Params, threshold: f64, resolution: i64) -> Result<StrokeSchedule, StrokeError> {
    if resolution < 3 {
        return Err(StrokeError::InvalidSchedule(format!("resolution {resolution}")));
    }
    let contrast = rate_contrast(p);
    if !(contrast >= MIN_RATE_CONTRAST) {
        return Err(StrokeError::WeakRateContrast { contrast });
    }
    let tau = p.tau_cycle();
    let max_steps = (resolution - 1) / 2;
    let admissible = (1..=max_steps)
        .take_while(|&j| stroke_bound(j as f64 / resolution as f64 * tau, p) <= threshold)
        .last()
        .ok_or(StrokeError::NoAdmissibleWindow {
            threshold,
            resolution,
            smallest: stroke_bound(tau / resolution as f64, p),
        })?;
    let mut schedule = StrokeSchedule::with_isentropic_fraction(p, Rational64::new(admissible, resolution))?;
    schedule.threshold = threshold;
    Ok(schedule)
}

/// [`build_schedule_with`] at the default resolution of 1/24 cycle.
pub fn build_schedule(p: &Params, threshold: f64) -> Result<StrokeSchedule, StrokeError> {
    build_schedule_with(p, threshold, DEFAULT_RESOLUTION)
}

/// Grid points per cycle: a multiple of the schedule denominator near
/// `target`, so every boundary lies on the grid.
pub fn steps_per_cycle(schedule: &StrokeSchedule, target: usize) -> usize {
    let den = schedule.denominator() as usize;
    den * target.div_ceil(den)
}

fn grid_index(r: Rational64, steps: usize) -> usize {
    (*r.numer() as usize * steps) / *r.denom() as usize
}

/// Lead sets per integration step for the schedule on `steps` grid points.
fn lead_table(schedule: &StrokeSchedule, steps: usize) -> Vec<&'static [Lead]> {
    let mut table = vec![&[][..]; steps];
    for (_, kind, iv) in schedule.segments() {
        for slot in &mut table[grid_index(iv.start, steps)..grid_index(iv.end, steps)] {
            *slot = kind.leads();
        }
    }
    table
}

/// Dot evolution over one cycle under the stroke-wise generator, starting
/// from `p1_init`.
pub fn cycle_propagate(
    p: &Params,
    schedule: &StrokeSchedule,
    p1_init: f64,
    steps: usize,
) -> Result<ReducedTrace, StrokeError> {
    let table = lead_table(schedule, steps);
    Ok(reduced::integrate(p, steps, steps, p1_init, &|i| table[i])?)
}

/// Periodic solution of the stroke-wise propagator.
pub fn cycle_periodic(p: &Params, schedule: &StrokeSchedule, steps: usize) -> Result<ReducedTrace, StrokeError> {
    let table = lead_table(schedule, steps);
    Ok(reduced::periodic_orbit_with(p, steps, &|i| table[i])?)
}

/// Thermodynamics of one stroke, summed over its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeReport {
    pub kind: StrokeKind,
    pub pieces: Vec<Interval>,
    pub delta_u_dot: f64,
    pub work_mech: f64,
    pub heat_left: f64,
    pub heat_right: f64,
    pub work_chem: f64,
    /// In k_B.
    pub delta_s_dot: f64,
}

impl StrokeAudit {
    /// Deviation relative to the reduced model's swing of 𝒫₁.
    pub fn relative_deviation(&self) -> f64 {
        self.max_deviation / self.p1_swing
    }
}

impl StrokeReport {
    pub fn heat(&self) -> f64 {
        self.heat_left + self.heat_right
    }

    /// Δ𝒰_D − 𝒬 − 𝒲_chem − 𝒲_mech [eV].
    pub fn first_law_residual(&self) -> f64 {
        self.delta_u_dot - self.heat() - self.work_chem - self.work_mech
    }

    /// Δ𝒮_D − 𝒬/k_BT, in k_B.
    pub fn entropy_production(&self, kbt: f64) -> f64 {
        self.delta_s_dot - self.heat() / kbt
    }
}

/// Per-stroke energy and entropy balance of a one-cycle trace on a grid
/// aligned with the schedule.
pub fn stroke_thermo(trace: &ReducedTrace, schedule: &StrokeSchedule) -> Vec<StrokeReport> {
    let steps = trace.steps_per_cycle;
    schedule
        .strokes
        .iter()
        .map(|stroke| {
            let mut r = StrokeReport {
                kind: stroke.kind,
                pieces: stroke.pieces.clone(),
                delta_u_dot: 0.0,
                work_mech: 0.0,
                heat_left: 0.0,
                heat_right: 0.0,
                work_chem: 0.0,
                delta_s_dot: 0.0,
            };
            for iv in &stroke.pieces {
                let (a, b) = (grid_index(iv.start, steps), grid_index(iv.end, steps));
                r.delta_u_dot += trace.dot_energy(b) - trace.dot_energy(a);
                r.delta_s_dot += trace.dot_entropy(b) - trace.dot_entropy(a);
                r.work_mech += trace.work_mech[b] - trace.work_mech[a];
                r.heat_left += trace.heat_left[b] - trace.heat_left[a];
                r.heat_right += trace.heat_right[b] - trace.heat_right[a];
                r.work_chem += trace.work_chem[b] - trace.work_chem[a];
            }
            r
        })
        .collect()
}

/// Stroke-wise cycle against the full reduced model over their periodic
/// orbits.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeAudit {
    pub schedule: StrokeSchedule,
    pub steps_per_cycle: usize,
    pub cycle: ReducedTrace,
    pub reduced: ReducedTrace,
    pub strokes: Vec<StrokeReport>,
    /// max_t |𝒫₁ − [𝒫₁]_cycle|.
    pub max_deviation: f64,
    /// max_t 𝒫₁ − min_t 𝒫₁ of the reduced model over the cycle.
    pub p1_swing: f64,
    /// Relative difference of the summed stroke heats from the reduced
    /// model's per-cycle heat, per lead.
    pub heat_left_error: f64,
    pub heat_right_error: f64,
    /// Σ_s 𝒲_mech^(s) and the reduced model's per-cycle 𝒲_mech [eV].
    pub work_mech_strokes: f64,
    pub work_mech_reduced: f64,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Compares the stroke description with the reduced model for `schedule`.
pub fn audit_schedule(p: &Params, schedule: StrokeSchedule, target_steps: usize) -> Result<StrokeAudit, StrokeError> {
    let steps = steps_per_cycle(&schedule, target_steps);
    let cycle = cycle_periodic(p, &schedule, steps)?;
    let reduced = reduced::periodic_orbit(p, steps)?;
    let strokes = stroke_thermo(&cycle, &schedule);
    let max_deviation = cycle
        .p1
        .iter()
        .zip(&reduced.p1)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let p1_swing = reduced.p1.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - reduced.p1.iter().copied().fold(f64::INFINITY, f64::min);
    let sum = |f: fn(&StrokeReport) -> f64| strokes.iter().map(f).sum::<f64>();
    let last = steps;
    Ok(StrokeAudit {
        heat_left_error: relative(sum(|s| s.heat_left), reduced.heat_left[last]),
        heat_right_error: relative(sum(|s| s.heat_right), reduced.heat_right[last]),
        work_mech_strokes: sum(|s| s.work_mech),
        work_mech_reduced: reduced.work_mech[last],
        schedule,
        steps_per_cycle: steps,
        cycle,
        reduced,
        strokes,
        max_deviation,
        p1_swing,
    })
}

/// Builds the schedule for `threshold` and audits it.
pub fn audit(p: &Params, threshold: f64) -> Result<StrokeAudit, StrokeError> {
    let schedule = build_schedule(p, threshold)?;
    audit_schedule(p, schedule, reduced::DEFAULT_STEPS_PER_CYCLE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn r(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }

    #[test]
    fn default_schedule() {
        let p = Params::default();
        let s = build_schedule(&p, 0.1).unwrap();
        assert_eq!(s.isentropic_fraction, r(1, 12));
        let bounds: Vec<_> = s.segments().iter().map(|(_, k, iv)| (*k, iv.start, iv.end)).collect();
        assert_eq!(
            bounds,
            vec![
                (StrokeKind::LeftDissipative, r(0, 1), r(5, 24)),
                (StrokeKind::Isentropic, r(5, 24), r(7, 24)),
                (StrokeKind::RightDissipative, r(7, 24), r(17, 24)),
                (StrokeKind::Isentropic, r(17, 24), r(19, 24)),
                (StrokeKind::LeftDissipative, r(19, 24), r(1, 1)),
            ]
        );
        assert_relative_eq!(s.tau_isen, p.tau_cycle() / 12.0, max_relative = 1e-15);
        // (2π/0.25/12)·0.01·exp(6 sin(π/12))
        let oracle = 2.0 * std::f64::consts::PI / 0.25 / 12.0 * 0.01 * (6.0 * (std::f64::consts::PI / 12.0).sin()).exp();
        assert_relative_eq!(s.integral.bound, oracle, max_relative = 1e-12);
        assert!((s.integral.bound - 0.099).abs() < 1e-3);
    }

    #[test]
    fn mirrored_start_swaps_labels() {
        let p = Params {
            x0: 6.0,
            ..Params::default()
        };
        let s = build_schedule(&p, 0.1).unwrap();
        assert_eq!(s.strokes[0].kind, StrokeKind::RightDissipative);
        assert_eq!(s.strokes[2].kind, StrokeKind::LeftDissipative);
    }

    #[test]
    fn flat_geometry_is_rejected() {
        let p = Params {
            x0: 0.0,
            ..Params::default()
        };
        assert!(matches!(build_schedule(&p, 0.1), Err(StrokeError::WeakRateContrast { .. })));
    }

    #[test]
    fn unbounded_threshold_saturates_below_half_cycle() {
        let s = build_schedule(&Params::default(), f64::INFINITY).unwrap();
        assert_eq!(s.isentropic_fraction, r(11, 24));
    }

    #[test]
    fn impossible_threshold_faults() {
        assert!(matches!(
            build_schedule(&Params::default(), 1e-6),
            Err(StrokeError::NoAdmissibleWindow { .. })
        ));
    }

    #[test]
    fn no_tunneling_gives_zero_integral() {
        let p = Params {
            gamma0: 0.0,
            ..Params::default()
        };
        let i = stroke_integral(5.0, &p).unwrap();
        assert_eq!((i.numeric, i.bound), (0.0, 0.0));
        assert!(stroke_integral(p.tau_cycle(), &p).is_err());
    }

    #[test]
    fn isentropic_strokes_are_identity() {
        let p = Params::default();
        let s = build_schedule(&p, 0.1).unwrap();
        let steps = steps_per_cycle(&s, 4096);
        let trace = cycle_propagate(&p, &s, 0.3, steps).unwrap();
        for report in stroke_thermo(&trace, &s) {
            match report.kind {
                StrokeKind::Isentropic => {
                    assert_eq!(report.heat(), 0.0);
                    assert_eq!(report.work_chem, 0.0);
                    assert_eq!(report.delta_s_dot, 0.0);
                }
                _ => {
                    assert!(report.first_law_residual().abs() < 1e-9);
                    assert!(report.entropy_production(p.thermal_energy()) > -1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_length_dissipative_strokes_leave_the_dot_alone() {
        let p = Params::default();
        let s = StrokeSchedule::with_isentropic_fraction(&p, r(1, 2)).unwrap();
        let trace = cycle_propagate(&p, &s, 0.37, 4096).unwrap();
        assert!(trace.p1.iter().all(|&v| v == 0.37));
        assert!(trace.heat_left.iter().chain(&trace.work_chem).all(|&v| v == 0.0));
    }

    #[test]
    fn default_audit_is_consistent() {
        let audit = audit(&Params::default(), 0.1).unwrap();
        assert_eq!(audit.steps_per_cycle, 4104);
        assert!(audit.max_deviation <= 0.05, "{}", audit.max_deviation);
        assert!(audit.heat_left_error <= 0.1 && audit.heat_right_error <= 0.1);
    }

    proptest! {
        #[test]
        fn partitions_are_exact(j in 0i64..=12) {
            let s = StrokeSchedule::with_isentropic_fraction(&Params::default(), r(j, 24)).unwrap();
            prop_assert!(s.check_partition().is_ok());
            // Half-period reflection swaps the dissipative strokes.
            let shift = |x: Rational64| (x + r(1, 2)) - (x + r(1, 2)).trunc();
            let left = &s.strokes[0];
            let right = &s.strokes[2];
            let total: Rational64 = left.pieces.iter().map(|iv| iv.length()).sum();
            prop_assert_eq!(total, right.pieces[0].length());
            prop_assert_eq!(shift(right.pieces[0].start), shift(left.pieces[1].start - r(1, 2)));
        }

        #[test]
        fn bound_is_increasing(t in 0.5f64..12.0, g in 0.001f64..0.05, x0 in 1.0f64..8.0) {
            let p = Params { gamma0: g, x0: -x0, ..Params::default() };
            let b = stroke_bound(t, &p);
            prop_assert!(stroke_bound(t * 1.01, &p) > b);
            let stronger = Params { gamma0: g * 1.01, ..p.clone() };
            prop_assert!(stroke_bound(t, &stronger) > b);
            let wider = Params { x0: -x0 * 1.01, ..p.clone() };
            prop_assert!(stroke_bound(t, &wider) > b);
        }

        #[test]
        fn bound_majorizes_numeric_integral(j in 2i64..12) {
            let p = Params::default();
            let i = stroke_integral(j as f64 / 24.0 * p.tau_cycle(), &p).unwrap();
            prop_assert!(i.numeric <= i.bound);
        }
    }
}
