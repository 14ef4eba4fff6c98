//! Number of electrons a pillar of given diameter can shuttle before its
//! charging energy exceeds the bias.

use shuttle_core::units::{ELEMENTARY_CHARGE_C, VACUUM_PERMITTIVITY_F_PER_M};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// [nm]
    pub diameter: f64,
    /// [V]
    pub voltage: f64,
    /// Self-capacitance 4πε₀d [F].
    pub capacitance: f64,
    /// N = √(2CV/e).
    pub electrons: f64,
    pub electrons_rounded: u64,
    /// Charging energy (eN)²/2C of the rounded count [eV].
    pub charging_energy: f64,
}

/// Capacitance of a sphere of diameter `d` nm [F].
pub fn capacitance(diameter_nm: f64) -> f64 {
    4.0 * PI * VACUUM_PERMITTIVITY_F_PER_M * diameter_nm * 1e-9
}

/// Solves eV = (eN)²/2C for N.
pub fn feasibility(diameter_nm: f64, voltage: f64) -> Feasibility {
    let c = capacitance(diameter_nm);
    let electrons = (2.0 * c * voltage / ELEMENTARY_CHARGE_C).sqrt();
    let rounded = electrons.round() as u64;
    let q = rounded as f64 * ELEMENTARY_CHARGE_C;
    Feasibility {
        diameter: diameter_nm,
        voltage,
        capacitance: c,
        electrons,
        electrons_rounded: rounded,
        charging_energy: q * q / (2.0 * c) / ELEMENTARY_CHARGE_C,
    }
}

/// Diameter [nm] at which exactly `electrons` electrons fit under `voltage`.
pub fn diameter_for(electrons: f64, voltage: f64) -> f64 {
    electrons * electrons * ELEMENTARY_CHARGE_C / (2.0 * voltage * 4.0 * PI * VACUUM_PERMITTIVITY_F_PER_M) * 1e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn five_nanometre_pillar() {
        let f = feasibility(5.0, 25.0);
        assert_eq!(f.electrons_rounded, 13);
        assert!(f.charging_energy <= 25.0 * 1.05);
    }

    #[test]
    fn inversion_round_trips() {
        let d = diameter_for(1.0, 25.0);
        assert_relative_eq!(feasibility(d, 25.0).electrons, 1.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn electrons_grow_with_diameter_and_voltage(d in 0.01f64..1e3, v in 0.1f64..100.0) {
            let base = feasibility(d, v).electrons;
            prop_assert!(feasibility(d * 1.1, v).electrons > base);
            prop_assert!(feasibility(d, v * 1.1).electrons > base);
            prop_assert!((diameter_for(base, v) - d).abs() <= 1e-9 * d);
        }
    }
}
