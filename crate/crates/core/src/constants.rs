//! CODATA 2018 constants and the atomic units used for dipole moments.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Boltzmann constant (J/K).
    pub kb: f64,
    /// Speed of light in vacuum (m/s).
    pub c: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
    /// Vacuum permeability (H/m).
    pub mu0: f64,
    /// Atomic unit of electric dipole moment, e a0 (C m).
    pub e_a0: f64,
    /// Mass of a ⁸⁷Rb atom (kg).
    pub m_rb87: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    kb: 1.380_649e-23,
    c: 299_792_458.0,
    eps0: 8.854_187_812_8e-12,
    mu0: 1.256_637_062_12e-6,
    e_a0: 8.478_353_625_5e-30,
    m_rb87: 1.443_160_648e-25,
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA
    }
}

impl PhysicalConstants {
    /// Planck constant h = 2πħ.
    pub fn h(&self) -> f64 {
        TWO_PI * self.hbar
    }

    /// Relative deviation of c² ε₀ μ₀ from one.
    pub fn maxwell_residual(&self) -> f64 {
        (self.c * self.c * self.eps0 * self.mu0 - 1.0).abs()
    }
}

/// Converts a frequency quoted as ω/2π (Hz) to an angular rate (rad/s).
#[inline]
pub fn angular(hz: f64) -> f64 {
    TWO_PI * hz
}

/// Converts an angular rate (rad/s) back to ω/2π (Hz).
#[inline]
pub fn per_two_pi(rad_per_s: f64) -> f64 {
    rad_per_s / TWO_PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_positive_and_consistent() {
        let k = CODATA;
        for v in [k.hbar, k.kb, k.c, k.eps0, k.mu0, k.e_a0, k.m_rb87] {
            assert!(v > 0.0);
        }
        assert!(k.maxwell_residual() < 1e-10);
    }

    #[test]
    fn mhz_round_trip() {
        for mhz in [0.001, 0.5, 2.1, 7.6, 9.0, 1234.5] {
            let back = per_two_pi(angular(mhz * 1e6)) / 1e6;
            assert!(((back - mhz) / mhz).abs() < 1e-12);
        }
    }
}
