//! Jump–diffusion sampler for the coupled oscillator and dot.
//!
//! Each step first samples at most one tunneling event at the current
//! position, then advances the oscillator with a velocity-Verlet kick–drift–kick
//! for the conservative forces followed by a midpoint (Crank–Nicolson) update
//! of the friction and thermal noise. The heat from the oscillator bath is the
//! kinetic energy change of that last sub-step, which is exactly the
//! Stratonovich product `(−γ v̄ dt + √(2γk_BT dt) ξ) · v̄` with the midpoint
//! velocity `v̄`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{self, Lead, Occupation, ParamViolation, Params};
use crate::stats::CompensatedSum;

/// Largest allowed `(Γ_L(x) + Γ_R(x))·dt`.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid parameters: {}", format_violations(.0))]
    InvalidParams(Vec<ParamViolation>),
    #[error(
        "step too large at t = {t} ns, x = {x} nm: total tunneling rate {rate} /ns gives rate*dt = {} >= {MAX_JUMP_PROBABILITY}; reduce dt below {} ns",
        .rate * .dt,
        MAX_JUMP_PROBABILITY / .rate
    )]
    StepTooLarge { t: f64, x: f64, rate: f64, dt: f64 },
    #[error("state became non-finite at t = {t} ns (x = {x}, v = {v})")]
    NonFinite { t: f64, x: f64, v: f64 },
    #[error("{name} = {value} ns is not a positive integer multiple of dt = {dt} ns")]
    Grid { name: &'static str, value: f64, dt: f64 },
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<EngineError>,
    },
}

pub(crate) fn format_violations(v: &[ParamViolation]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Instantaneous state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuttleState {
    /// [nm]
    pub x: f64,
    /// [nm/ns]
    pub v: f64,
    pub q: Occupation,
    /// [ns]
    pub t: f64,
}

impl ShuttleState {
    pub fn initial(p: &Params) -> Self {
        Self {
            x: p.x0,
            v: p.v0,
            q: p.q0,
            t: 0.0,
        }
    }

    /// H_O = mv²/2 + kx²/2 [eV].
    pub fn oscillator_energy(&self, p: &Params) -> f64 {
        0.5 * p.mass * self.v * self.v + 0.5 * p.spring_constant() * self.x * self.x
    }

    /// ε(x)·q [eV].
    pub fn dot_energy(&self, p: &Params) -> f64 {
        model::charging_energy(self.x, p) * self.q.as_f64()
    }

    /// U_DO integrand, H_O + ε(x)q [eV].
    pub fn total_energy(&self, p: &Params) -> f64 {
        self.oscillator_energy(p) + self.dot_energy(p)
    }

    /// Envelope of the oscillation about the charge-dependent rest position [nm].
    pub fn amplitude(&self, p: &Params) -> f64 {
        let rest = model::electrostatic_force(self.q, p) / p.spring_constant();
        let dx = self.x - rest;
        let dv = self.v / p.omega;
        (dx * dx + dv * dv).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpDirection {
    /// An electron tunnels from the lead onto the dot.
    In,
    /// An electron tunnels from the dot into the lead.
    Out,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub lead: Lead,
    pub direction: JumpDirection,
    /// Dot position at the jump [nm].
    pub x: f64,
    /// ε(x) at the jump [eV].
    pub energy: f64,
}

/// Heat, work and jump counts accumulated along one trajectory.
///
/// Sign conventions: heats are counted positive when energy flows from the
/// bath into the system; chemical work is positive when electrons move along
/// the bias.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThermoLedger {
    heat_left: CompensatedSum,
    heat_right: CompensatedSum,
    heat_osc: CompensatedSum,
    work_chem: CompensatedSum,
    pub jumps_in_left: u64,
    pub jumps_out_left: u64,
    pub jumps_in_right: u64,
    pub jumps_out_right: u64,
}

impl ThermoLedger {
    pub fn heat_left(&self) -> f64 {
        self.heat_left.value()
    }

    pub fn heat_right(&self) -> f64 {
        self.heat_right.value()
    }

    pub fn heat_osc(&self) -> f64 {
        self.heat_osc.value()
    }

    pub fn work_chem(&self) -> f64 {
        self.work_chem.value()
    }

    pub fn heat(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.heat_left(),
            Lead::Right => self.heat_right(),
        }
    }

    /// Q_L + Q_R + Q_O.
    pub fn heat_total(&self) -> f64 {
        self.heat_left() + self.heat_right() + self.heat_osc()
    }

    /// Σ|Q_ν| + |W_chem|, the scale of energy exchanged with the environment.
    pub fn transferred(&self) -> f64 {
        self.heat_left().abs() + self.heat_right().abs() + self.heat_osc().abs() + self.work_chem().abs()
    }

    /// Electrons absorbed from `lead`, net of those returned.
    pub fn net_electrons_from(&self, lead: Lead) -> i64 {
        match lead {
            Lead::Left => self.jumps_in_left as i64 - self.jumps_out_left as i64,
            Lead::Right => self.jumps_in_right as i64 - self.jumps_out_right as i64,
        }
    }

    pub fn jump_count(&self) -> u64 {
        self.jumps_in_left + self.jumps_out_left + self.jumps_in_right + self.jumps_out_right
    }

    pub fn apply(&mut self, inc: &LedgerIncrement) {
        self.heat_osc.add(inc.heat_osc);
        if let Some(jump) = inc.jump {
            self.heat_left.add(inc.heat_left);
            self.heat_right.add(inc.heat_right);
            self.work_chem.add(inc.work_chem);
            self.count_jump(&jump);
        }
    }

    fn count_jump(&mut self, jump: &JumpEvent) {
        let counter = match (jump.lead, jump.direction) {
            (Lead::Left, JumpDirection::In) => &mut self.jumps_in_left,
            (Lead::Left, JumpDirection::Out) => &mut self.jumps_out_left,
            (Lead::Right, JumpDirection::In) => &mut self.jumps_in_right,
            (Lead::Right, JumpDirection::Out) => &mut self.jumps_out_right,
        };
        *counter += 1;
    }
}

/// Ledger change produced by a single step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LedgerIncrement {
    pub heat_left: f64,
    pub heat_right: f64,
    pub heat_osc: f64,
    pub work_chem: f64,
    pub jump: Option<JumpEvent>,
}

/// Precomputed per-step coefficients for one parameter set.
#[derive(Debug, Clone)]
pub struct Stepper {
    dt: f64,
    half_dt_over_mass: f64,
    spring: f64,
    field_force: f64,
    half_mass: f64,
    friction_decay: f64,
    noise_kick: f64,
    eps0: f64,
    mu_left: f64,
    mu_right: f64,
    beta: f64,
    gamma0: f64,
    inv_lambda: f64,
}

impl Stepper {
    pub fn new(p: &Params) -> Result<Self, EngineError> {
        p.validate().map_err(EngineError::InvalidParams)?;
        let dt = p.dt;
        // Midpoint rule for m dv = −γ v̄ dt + √(2γk_BT dt) ξ.
        let a = p.gamma * dt / (2.0 * p.mass);
        let sigma = (2.0 * p.gamma * p.thermal_energy()).sqrt() / p.mass;
        Ok(Self {
            dt,
            half_dt_over_mass: 0.5 * dt / p.mass,
            spring: p.spring_constant(),
            field_force: p.alpha * p.voltage,
            half_mass: 0.5 * p.mass,
            friction_decay: (1.0 - a) / (1.0 + a),
            noise_kick: sigma * dt.sqrt() / (1.0 + a),
            eps0: p.eps0,
            mu_left: p.mu_left,
            mu_right: p.mu_right,
            beta: p.beta(),
            gamma0: p.gamma0,
            inv_lambda: 1.0 / p.lambda_tun,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by one step and books the ledger changes.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        state: &mut ShuttleState,
        ledger: &mut ThermoLedger,
        rng: &mut R,
    ) -> Result<Option<JumpEvent>, EngineError> {
        let inc = self.increment(state, rng)?;
        ledger.apply(&inc);
        Ok(inc.jump)
    }

    /// One step; returns the ledger increment instead of booking it.
    pub fn increment<R: Rng + ?Sized>(
        &self,
        state: &mut ShuttleState,
        rng: &mut R,
    ) -> Result<LedgerIncrement, EngineError> {
        if !(state.x.is_finite() && state.v.is_finite()) {
            return Err(EngineError::NonFinite {
                t: state.t,
                x: state.x,
                v: state.v,
            });
        }
        let mut inc = LedgerIncrement::default();
        let dt = self.dt;

        // Tunneling at the current position.
        let e = (state.x * self.inv_lambda).exp();
        let gamma_left = self.gamma0 / e;
        let gamma_right = self.gamma0 * e;
        let total = gamma_left + gamma_right;
        if total * dt >= MAX_JUMP_PROBABILITY || !total.is_finite() {
            return Err(EngineError::StepTooLarge {
                t: state.t,
                x: state.x,
                rate: total,
                dt,
            });
        }
        if self.gamma0 > 0.0 {
            let eps = self.eps0 - self.field_force * state.x;
            let z_left = self.beta * (eps - self.mu_left);
            let z_right = self.beta * (eps - self.mu_right);
            // Filling needs f(ε), emptying needs 1 − f(ε).
            let (p_left, p_right) = match state.q {
                Occupation::Empty => (
                    gamma_left * model::logistic_of_exponent(z_left) * dt,
                    gamma_right * model::logistic_of_exponent(z_right) * dt,
                ),
                Occupation::Filled => (
                    gamma_left * model::logistic_of_exponent(-z_left) * dt,
                    gamma_right * model::logistic_of_exponent(-z_right) * dt,
                ),
            };
            let u: f64 = rng.random();
            let lead = if u < p_left {
                Some(Lead::Left)
            } else if u < p_left + p_right {
                Some(Lead::Right)
            } else {
                None
            };
            if let Some(lead) = lead {
                let mu = match lead {
                    Lead::Left => self.mu_left,
                    Lead::Right => self.mu_right,
                };
                let (direction, sign) = match state.q {
                    Occupation::Empty => (JumpDirection::In, 1.0),
                    Occupation::Filled => (JumpDirection::Out, -1.0),
                };
                let heat = sign * (eps - mu);
                match lead {
                    Lead::Left => inc.heat_left = heat,
                    Lead::Right => inc.heat_right = heat,
                }
                inc.work_chem = sign * mu;
                inc.jump = Some(JumpEvent {
                    lead,
                    direction,
                    x: state.x,
                    energy: eps,
                });
                state.q = state.q.flipped();
            }
        }

        // Conservative part: kick, drift, kick.
        let charge_force = self.field_force * state.q.as_f64();
        let mut v = state.v + (charge_force - self.spring * state.x) * self.half_dt_over_mass;
        let x = state.x + v * dt;
        v += (charge_force - self.spring * x) * self.half_dt_over_mass;

        // Friction and noise.
        if self.noise_kick > 0.0 || self.friction_decay != 1.0 {
            let xi: f64 = rng.sample(StandardNormal);
            let v_new = self.friction_decay * v + self.noise_kick * xi;
            inc.heat_osc = self.half_mass * (v_new * v_new - v * v);
            v = v_new;
        }

        if !(x.is_finite() && v.is_finite()) {
            return Err(EngineError::NonFinite { t: state.t, x, v });
        }
        state.x = x;
        state.v = v;
        state.t += dt;
        Ok(inc)
    }
}

/// Single step from `state` with parameters `p`.
pub fn step<R: Rng + ?Sized>(
    state: &ShuttleState,
    p: &Params,
    rng: &mut R,
) -> Result<(ShuttleState, LedgerIncrement), EngineError> {
    let stepper = Stepper::new(p)?;
    let mut next = *state;
    let inc = stepper.increment(&mut next, rng)?;
    Ok((next, inc))
}

/// Random stream of trajectory `index` under `master_seed`.
///
/// ChaCha is counter based: every (seed, stream) pair is an independent,
/// reproducible sequence, so trajectories can run on any worker in any order.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Converts an interval into a whole number of integrator steps.
pub fn steps_for(name: &'static str, interval: f64, dt: f64) -> Result<u64, EngineError> {
    let ratio = interval / dt;
    let steps = ratio.round();
    if !(steps >= 1.0) || (ratio - steps).abs() > 1e-6 * steps {
        return Err(EngineError::Grid {
            name,
            value: interval,
            dt,
        });
    }
    Ok(steps as u64)
}

/// Number of steps covering the horizon `p.t_final`.
pub fn horizon_steps(p: &Params) -> Result<u64, EngineError> {
    steps_for("t_final", p.t_final, p.dt)
}

/// Runs trajectory `index` and calls `observe` at step 0 and every `stride`
/// steps thereafter (including the last step when it falls on the grid).
pub fn run_trajectory<F>(
    p: &Params,
    index: u64,
    stride: u64,
    mut observe: F,
) -> Result<(ShuttleState, ThermoLedger), EngineError>
where
    F: FnMut(u64, &ShuttleState, &ThermoLedger),
{
    let stepper = Stepper::new(p)?;
    let n_steps = horizon_steps(p)?;
    let mut rng = trajectory_rng(p.master_seed, index);
    let mut state = ShuttleState::initial(p);
    let mut ledger = ThermoLedger::default();
    observe(0, &state, &ledger);
    let mut until_sample = stride;
    for i in 1..=n_steps {
        stepper.advance(&mut state, &mut ledger, &mut rng)?;
        until_sample -= 1;
        if until_sample == 0 {
            until_sample = stride;
            state.t = i as f64 * p.dt;
            observe(i, &state, &ledger);
        }
    }
    state.t = n_steps as f64 * p.dt;
    Ok((state, ledger))
}

/// One stored point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub state: ShuttleState,
    pub heat_left: f64,
    pub heat_right: f64,
    pub heat_osc: f64,
    pub work_chem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub initial: ShuttleState,
    pub final_state: ShuttleState,
    pub ledger: ThermoLedger,
}

impl Trajectory {
    /// ΔU_DO − ΣQ_ν − W_chem between the endpoints.
    pub fn first_law_residual(&self, p: &Params) -> f64 {
        let du = self.final_state.total_energy(p) - self.initial.total_energy(p);
        du - self.ledger.heat_total() - self.ledger.work_chem()
    }

    /// Residual relative to Σ|Q_ν| + |W_chem|.
    pub fn relative_first_law_residual(&self, p: &Params) -> f64 {
        self.first_law_residual(p).abs() / self.ledger.transferred()
    }
}

/// Simulates trajectory `index` of the ensemble defined by `p`, storing
/// samples every `output_interval` ns.
pub fn simulate_trajectory(p: &Params, index: u64, output_interval: f64) -> Result<Trajectory, EngineError> {
    let stride = steps_for("output_interval", output_interval, p.dt)?;
    let mut samples = Vec::new();
    let (final_state, ledger) = run_trajectory(p, index, stride, |_, s, l| {
        samples.push(TrajectorySample {
            state: *s,
            heat_left: l.heat_left(),
            heat_right: l.heat_right(),
            heat_osc: l.heat_osc(),
            work_chem: l.work_chem(),
        })
    })?;
    Ok(Trajectory {
        samples,
        initial: ShuttleState::initial(p),
        final_state,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn isolated() -> Params {
        Params {
            gamma: 0.0,
            gamma0: 0.0,
            q0: Occupation::Empty,
            ..Params::default()
        }
    }

    #[test]
    fn undamped_oscillator_conserves_energy() {
        let mut p = isolated();
        p.dt = 1e-3 / p.omega;
        let stepper = Stepper::new(&p).unwrap();
        let mut rng = trajectory_rng(1, 0);
        let mut s = ShuttleState::initial(&p);
        let mut ledger = ThermoLedger::default();
        let e0 = s.oscillator_energy(&p);
        let steps = (p.tau_cycle() / p.dt).round() as u64;
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            stepper.advance(&mut s, &mut ledger, &mut rng).unwrap();
            worst = worst.max((s.oscillator_energy(&p) - e0).abs() / e0);
        }
        assert!(worst < 1e-4, "relative drift {worst}");
        assert_eq!(ledger.heat_osc(), 0.0);
        assert_eq!(ledger.jump_count(), 0);
    }

    #[test]
    fn frozen_dot_books_no_lead_exchange() {
        let p = Params {
            gamma0: 0.0,
            t_final: 20.0,
            ..Params::default()
        };
        let traj = simulate_trajectory(&p, 3, 1.0).unwrap();
        assert_eq!(traj.ledger.heat_left(), 0.0);
        assert_eq!(traj.ledger.heat_right(), 0.0);
        assert_eq!(traj.ledger.work_chem(), 0.0);
        assert_eq!(traj.final_state.q, p.q0);
        assert!(traj.ledger.heat_osc() != 0.0);
    }

    #[test]
    fn step_size_fault_names_a_remedy() {
        let p = Params {
            dt: 0.05,
            x0: -6.0,
            ..Params::default()
        };
        let s = ShuttleState::initial(&p);
        let err = step(&s, &p, &mut trajectory_rng(0, 0)).unwrap_err();
        match &err {
            EngineError::StepTooLarge { rate, .. } => assert!(*rate > 4.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("reduce dt"));
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let p = Params::default();
        let s = ShuttleState {
            x: 0.0,
            v: f64::INFINITY,
            q: Occupation::Empty,
            t: 0.0,
        };
        assert!(matches!(
            step(&s, &p, &mut trajectory_rng(0, 0)),
            Err(EngineError::NonFinite { .. })
        ));
    }

    #[test]
    fn jump_bookkeeping_identities() {
        let p = Params {
            t_final: 100.0,
            ..Params::default()
        };
        let stepper = Stepper::new(&p).unwrap();
        let mut rng = trajectory_rng(p.master_seed, 7);
        let mut s = ShuttleState::initial(&p);
        let mut ledger = ThermoLedger::default();
        let mut signed_energy = [0.0f64; 2];
        let steps = horizon_steps(&p).unwrap();
        for _ in 0..steps {
            if let Some(j) = stepper.advance(&mut s, &mut ledger, &mut rng).unwrap() {
                let sign = if j.direction == JumpDirection::In { 1.0 } else { -1.0 };
                let slot = if j.lead == Lead::Left { 0 } else { 1 };
                signed_energy[slot] += sign * j.energy;
            }
        }
        assert!(ledger.jump_count() > 4, "expected shuttling, got {}", ledger.jump_count());
        let n_left = ledger.net_electrons_from(Lead::Left);
        let n_right = ledger.net_electrons_from(Lead::Right);
        // μ = ±12.5 eV are dyadic: the integer-weighted identity is exact.
        assert_eq!(ledger.work_chem(), p.mu_left * n_left as f64 + p.mu_right * n_right as f64);
        assert_relative_eq!(
            ledger.heat_left() + p.mu_left * n_left as f64,
            signed_energy[0],
            epsilon = 1e-9
        );
        assert_relative_eq!(
            ledger.heat_right() + p.mu_right * n_right as f64,
            signed_energy[1],
            epsilon = 1e-9
        );
        let dq = s.q.as_f64() - p.q0.as_f64();
        assert_eq!((n_left + n_right) as f64, dq);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = Params {
            t_final: 30.0,
            ..Params::default()
        };
        let a = simulate_trajectory(&p, 11, 0.5).unwrap();
        let b = simulate_trajectory(&p, 11, 0.5).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&p, 12, 0.5).unwrap();
        assert_ne!(a.ledger, c.ledger);
    }

    #[test]
    fn output_grid_must_divide_dt() {
        let p = Params::default();
        assert!(matches!(
            simulate_trajectory(&p, 0, 1.234_567_89e-4),
            Err(EngineError::Grid { .. })
        ));
        assert_eq!(steps_for("x", 0.05, 1e-4).unwrap(), 500);
    }
}
