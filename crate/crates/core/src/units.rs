//! Internal unit system and SI conversions.
//!
//! Everything inside the crate is expressed in nanometres, nanoseconds and
//! electronvolts, with the elementary charge set to one. A voltage in volts is
//! then numerically an energy in eV per unit charge.

/// Boltzmann constant [eV/K] (CODATA 2018, exact).
pub const BOLTZMANN_EV_PER_K: f64 = 8.617_333_262e-5;

/// Elementary charge [C] (exact).
pub const ELEMENTARY_CHARGE_C: f64 = 1.602_176_634e-19;

/// Vacuum permittivity [F/m] (CODATA 2018).
pub const VACUUM_PERMITTIVITY_F_PER_M: f64 = 8.854_187_812_8e-12;

/// One joule in eV.
pub const EV_PER_JOULE: f64 = 1.0 / ELEMENTARY_CHARGE_C;

/// 1 kg = 1 J s²/m², and s²/m² = ns²/nm², so the factor is just J → eV.
pub const KG_TO_INTERNAL_MASS: f64 = EV_PER_JOULE;

/// 1 kg/s = 1 J s/m² = 1e-9 eV ns/nm² per eV/J.
pub const KG_PER_S_TO_INTERNAL_FRICTION: f64 = EV_PER_JOULE * 1e-9;

/// Mass [kg] to internal mass [eV·ns²/nm²].
pub fn mass_from_kg(kg: f64) -> f64 {
    kg * KG_TO_INTERNAL_MASS
}

/// Internal mass back to kg.
pub fn mass_to_kg(internal: f64) -> f64 {
    internal / KG_TO_INTERNAL_MASS
}

/// Friction [kg/s] to internal friction [eV·ns/nm²].
pub fn friction_from_kg_per_s(kg_per_s: f64) -> f64 {
    kg_per_s * KG_PER_S_TO_INTERNAL_FRICTION
}

pub fn friction_to_kg_per_s(internal: f64) -> f64 {
    internal / KG_PER_S_TO_INTERNAL_FRICTION
}

/// Thermal energy k_B·T [eV].
pub fn thermal_energy(temperature_k: f64) -> f64 {
    BOLTZMANN_EV_PER_K * temperature_k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_mass_conversion() {
        // 1 J = 6.241509e18 eV; s²/m² and ns²/nm² coincide.
        assert_relative_eq!(mass_from_kg(1.0), 6.241_509_074e18, max_relative = 1e-9);
        assert_relative_eq!(mass_from_kg(20e-19), 12.483_018, max_relative = 1e-6);
        assert_relative_eq!(mass_to_kg(mass_from_kg(3.7e-18)), 3.7e-18, max_relative = 1e-15);
    }

    #[test]
    fn reference_friction_conversion() {
        // 5e-12 kg/s · 6.2415e18 eV/J · 1e-9 s/ns
        assert_relative_eq!(friction_from_kg_per_s(0.05e-10), 0.031_207_545, max_relative = 1e-7);
    }

    #[test]
    fn one_kelvin() {
        assert_relative_eq!(thermal_energy(1.0), 8.617_333_262e-5);
    }
}
