//! Physical model of the shuttle: tunneling rates, Fermi factors, charging
//! energy and the electrostatic force on the nanopillar.
//!
//! All functions are pure. Units are nm, ns and eV with e = 1 (see [`crate::units`]).

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::units;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite input to {op}: {value}")]
    NonFinite { op: &'static str, value: f64 },
    #[error("inverse temperature must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("dot occupation must be 0 or 1, got {0}")]
    InvalidOccupation(i64),
}

/// Charge state of the dot in the ultrastrong Coulomb-blockade limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Occupation {
    Empty,
    Filled,
}

impl Occupation {
    pub fn as_f64(self) -> f64 {
        match self {
            Occupation::Empty => 0.0,
            Occupation::Filled => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Occupation::Empty => 0,
            Occupation::Filled => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Occupation::Empty => Occupation::Filled,
            Occupation::Filled => Occupation::Empty,
        }
    }
}

impl TryFrom<i64> for Occupation {
    type Error = ModelError;

    fn try_from(q: i64) -> Result<Self, Self::Error> {
        match q {
            0 => Ok(Occupation::Empty),
            1 => Ok(Occupation::Filled),
            other => Err(ModelError::InvalidOccupation(other)),
        }
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lead {
    Left,
    Right,
}

impl Lead {
    pub const BOTH: [Lead; 2] = [Lead::Left, Lead::Right];

    pub fn mirrored(self) -> Self {
        match self {
            Lead::Left => Lead::Right,
            Lead::Right => Lead::Left,
        }
    }
}

/// Model parameters in internal units.
///
/// `x0` is the signed initial position of the oscillator. The default places
/// it at the left turning point, `-6 nm`, so that the dot starts next to the
/// left lead.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Angular frequency [1/ns].
    pub omega: f64,
    /// [eV·ns²/nm²]
    pub mass: f64,
    /// Friction coefficient [eV·ns/nm²].
    pub gamma: f64,
    /// [K]
    pub temperature: f64,
    /// Inverse length of the field between the leads [1/nm].
    pub alpha: f64,
    /// Bias [V]; with e = 1 this is also the bias energy in eV.
    pub voltage: f64,
    /// [eV]
    pub mu_left: f64,
    /// [eV]
    pub mu_right: f64,
    /// Bare tunneling rate [1/ns].
    pub gamma0: f64,
    /// Tunneling length [nm].
    pub lambda_tun: f64,
    /// On-site energy [eV].
    pub eps0: f64,
    /// Initial position [nm].
    pub x0: f64,
    /// Initial velocity [nm/ns].
    pub v0: f64,
    pub q0: Occupation,
    /// Integrator step [ns].
    pub dt: f64,
    /// Horizon [ns].
    pub t_final: f64,
    pub n_traj: usize,
    pub master_seed: u64,
}

/// Parameters of the nanopillar device: ω = 0.25 GHz, m = 20·10⁻¹⁹ kg,
/// λ = 1 nm, α = 0.01 nm⁻¹, γ = 0.05·10⁻¹⁰ kg/s, Γ₀ = 0.01 GHz, V = 25 V,
/// T = 1 K, μ_L,R = ε₀ ± eV/2, |x₀| = 6 nm, v₀ = 0, filled dot, 250 ns,
/// 1000 trajectories.
impl Default for Params {
    fn default() -> Self {
        let voltage = 25.0;
        let eps0 = 0.0;
        Self {
            omega: 0.25,
            mass: units::mass_from_kg(20e-19),
            gamma: units::friction_from_kg_per_s(0.05e-10),
            temperature: 1.0,
            alpha: 0.01,
            voltage,
            mu_left: eps0 + voltage / 2.0,
            mu_right: eps0 - voltage / 2.0,
            gamma0: 0.01,
            lambda_tun: 1.0,
            eps0,
            x0: -6.0,
            v0: 0.0,
            q0: Occupation::Filled,
            dt: 1e-4,
            t_final: 250.0,
            n_traj: 1000,
            master_seed: 20_200_715,
        }
    }
}

/// One violated parameter invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamViolation {
    #[error("{name} must be {requirement}, got {value}")]
    Range {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("n_traj must be at least 1")]
    NoTrajectories,
    #[error("mu_left - mu_right = {difference} eV does not match e*V = {voltage} eV")]
    BiasMismatch { difference: f64, voltage: f64 },
}

impl Params {
    /// Spring constant k = m ω² [eV/nm²].
    pub fn spring_constant(&self) -> f64 {
        self.mass * self.omega * self.omega
    }

    /// k_B T [eV].
    pub fn thermal_energy(&self) -> f64 {
        units::thermal_energy(self.temperature)
    }

    /// β = 1/(k_B T) [1/eV].
    pub fn beta(&self) -> f64 {
        1.0 / self.thermal_energy()
    }

    /// Period of the free oscillation, 2π/ω [ns].
    pub fn tau_cycle(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn mu(&self, lead: Lead) -> f64 {
        match lead {
            Lead::Left => self.mu_left,
            Lead::Right => self.mu_right,
        }
    }

    /// Sets the bias and places the chemical potentials symmetrically around ε₀.
    pub fn with_bias(mut self, voltage: f64) -> Self {
        self.voltage = voltage;
        self.mu_left = self.eps0 + voltage / 2.0;
        self.mu_right = self.eps0 - voltage / 2.0;
        self
    }

    /// Shifts ε₀ and both chemical potentials by the same amount.
    pub fn with_eps0(mut self, eps0: f64) -> Self {
        let shift = eps0 - self.eps0;
        self.eps0 = eps0;
        self.mu_left += shift;
        self.mu_right += shift;
        self
    }

    /// Checks every invariant and reports all violations.
    pub fn validate(&self) -> Result<(), Vec<ParamViolation>> {
        let mut out = Vec::new();
        let mut positive = |name, value: f64| {
            if !(value > 0.0 && value.is_finite()) {
                out.push(ParamViolation::Range {
                    name,
                    requirement: "positive and finite",
                    value,
                });
            }
        };
        positive("mass", self.mass);
        positive("omega", self.omega);
        positive("lambda_tun", self.lambda_tun);
        positive("temperature", self.temperature);
        positive("dt", self.dt);
        positive("t_final", self.t_final);
        for (name, value) in [("gamma", self.gamma), ("gamma0", self.gamma0)] {
            if !(value >= 0.0 && value.is_finite()) {
                out.push(ParamViolation::Range {
                    name,
                    requirement: "non-negative and finite",
                    value,
                });
            }
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("voltage", self.voltage),
            ("mu_left", self.mu_left),
            ("mu_right", self.mu_right),
            ("eps0", self.eps0),
            ("x0", self.x0),
            ("v0", self.v0),
        ] {
            if !value.is_finite() {
                out.push(ParamViolation::Range {
                    name,
                    requirement: "finite",
                    value,
                });
            }
        }
        if self.n_traj == 0 {
            out.push(ParamViolation::NoTrajectories);
        }
        let difference = self.mu_left - self.mu_right;
        if (difference - self.voltage).abs() > 1e-9 * self.voltage.abs().max(1.0) {
            out.push(ParamViolation::BiasMismatch {
                difference,
                voltage: self.voltage,
            });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Logistic function 1/(1 + e^z), evaluated without overflow for any finite z.
#[inline]
pub(crate) fn logistic_of_exponent(z: f64) -> f64 {
    // Beyond these bounds the result rounds to exactly 0 or 1; skip the exp.
    if z > 746.0 {
        0.0
    } else if z < -38.0 {
        1.0
    } else if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Fermi function [e^{β(E−μ)} + 1]⁻¹.
pub fn fermi(energy: f64, mu: f64, beta: f64) -> Result<f64, ModelError> {
    for value in [energy, mu, beta] {
        if !value.is_finite() {
            return Err(ModelError::NonFinite { op: "fermi", value });
        }
    }
    if beta <= 0.0 {
        return Err(ModelError::NonPositiveBeta(beta));
    }
    Ok(logistic_of_exponent(beta * (energy - mu)))
}

/// Bare tunneling rate Γ_ν(x) [1/ns]; Γ_L(x) = Γ₀e^{−x/λ} and Γ_R(x) = Γ_L(−x).
pub fn tunneling_rate(x: f64, lead: Lead, p: &Params) -> f64 {
    let signed = match lead {
        Lead::Left => -x,
        Lead::Right => x,
    };
    p.gamma0 * (signed / p.lambda_tun).exp()
}

/// Charging energy ε(x) = ε₀ − eαVx of the filled dot [eV].
pub fn charging_energy(x: f64, p: &Params) -> f64 {
    p.eps0 - p.alpha * p.voltage * x
}

/// Force of the field on the charged dot, F = eαVq [eV/nm].
///
/// Chosen so that −∂ε(x)q/∂x = F: the dot's potential energy and the force
/// on the pillar come from the same term of the Hamiltonian.
pub fn electrostatic_force(q: Occupation, p: &Params) -> f64 {
    p.alpha * p.voltage * q.as_f64()
}

/// Gain (0 → 1) and loss (1 → 0) rates through one lead [1/ns].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadRates {
    pub gain: f64,
    pub loss: f64,
}

impl LeadRates {
    pub fn total(&self) -> f64 {
        self.gain + self.loss
    }

    /// Net particle current into the dot for occupation probability `p1`.
    pub fn current_into_dot(&self, p1: f64) -> f64 {
        self.gain * (1.0 - p1) - self.loss * p1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMatrix {
    pub left: LeadRates,
    pub right: LeadRates,
}

impl RateMatrix {
    pub fn lead(&self, lead: Lead) -> LeadRates {
        match lead {
            Lead::Left => self.left,
            Lead::Right => self.right,
        }
    }

    /// Full generator R = R^L + R^R in the basis (q=0, q=1); `m[row][col]`.
    pub fn generator(&self) -> [[f64; 2]; 2] {
        Self::generator_of(&[self.left, self.right])
    }

    /// Generator of a single lead.
    pub fn lead_generator(&self, lead: Lead) -> [[f64; 2]; 2] {
        Self::generator_of(&[self.lead(lead)])
    }

    fn generator_of(leads: &[LeadRates]) -> [[f64; 2]; 2] {
        let gain: f64 = leads.iter().map(|r| r.gain).sum();
        let loss: f64 = leads.iter().map(|r| r.loss).sum();
        [[-gain, loss], [gain, -loss]]
    }

    /// Probability current into the filled state, dP₁/dt.
    pub fn drift(&self, p1: f64) -> f64 {
        self.left.current_into_dot(p1) + self.right.current_into_dot(p1)
    }

    /// Escape rate out of occupation `q`.
    pub fn escape_rate(&self, q: Occupation) -> f64 {
        match q {
            Occupation::Empty => self.left.gain + self.right.gain,
            Occupation::Filled => self.left.loss + self.right.loss,
        }
    }
}

/// Rate matrices of both leads at position `x`.
pub fn rate_matrix(x: f64, p: &Params) -> Result<RateMatrix, ModelError> {
    if !x.is_finite() {
        return Err(ModelError::NonFinite {
            op: "rate_matrix",
            value: x,
        });
    }
    let eps = charging_energy(x, p);
    let beta = p.beta();
    let lead_rates = |lead: Lead| -> Result<LeadRates, ModelError> {
        let gamma = tunneling_rate(x, lead, p);
        let f = fermi(eps, p.mu(lead), beta)?;
        // 1 − f(E) is the logistic of the negated exponent; avoids cancellation.
        let one_minus_f = logistic_of_exponent(-beta * (eps - p.mu(lead)));
        Ok(LeadRates {
            gain: gamma * f,
            loss: gamma * one_minus_f,
        })
    };
    Ok(RateMatrix {
        left: lead_rates(Lead::Left)?,
        right: lead_rates(Lead::Right)?,
    })
}
