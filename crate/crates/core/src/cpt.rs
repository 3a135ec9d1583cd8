//! Coherent population trapping in the |1⟩–|2⟩–|3⟩ ladder and the
//! five-level dark state reached once the write and microwave fields are on.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Zero-order density-matrix elements of the trapping state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptState {
    pub rho11: f64,
    pub rho33: f64,
    pub rho13: Complex64,
}

impl CptState {
    /// |ρ13|² − ρ11ρ33; zero for a pure dark state.
    pub fn purity_defect(&self) -> f64 {
        self.rho13.norm_sqr() - self.rho11 * self.rho33
    }
}

/// Normalized amplitudes of |D⟩ on |1⟩, |3⟩ and |5⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkStateAmplitudes {
    pub c1: Complex64,
    pub c3: Complex64,
    pub c5: Complex64,
}

impl DarkStateAmplitudes {
    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.c3.norm_sqr() + self.c5.norm_sqr()
    }
}

/// Trapping state of the probe (|1⟩↔|2⟩) and auxiliary (|2⟩↔|3⟩) pair.
pub fn cpt_zero_order(omega_p: Complex64, omega_a: Complex64) -> Result<CptState> {
    let p2 = omega_p.norm_sqr();
    let a2 = omega_a.norm_sqr();
    let total = p2 + a2;
    if total == 0.0 {
        return Err(Error::UndefinedState(
            "probe and auxiliary Rabi frequencies are both zero".into(),
        ));
    }
    Ok(CptState {
        rho11: a2 / total,
        rho33: p2 / total,
        rho13: -omega_p * omega_a / total,
    })
}

/// |D⟩ ∝ Ω_W*Ω_A*|1⟩ − Ω_W*Ω_P|3⟩ + Ω_M*Ω_P|5⟩, normalized.
pub fn dark_state(
    omega_w: Complex64,
    omega_a: Complex64,
    omega_p: Complex64,
    omega_m: Complex64,
) -> Result<DarkStateAmplitudes> {
    let c1 = omega_w.conj() * omega_a.conj();
    let c3 = -omega_w.conj() * omega_p;
    let c5 = omega_m.conj() * omega_p;
    let norm = (c1.norm_sqr() + c3.norm_sqr() + c5.norm_sqr()).sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedState(
            "every dark-state amplitude vanishes".into(),
        ));
    }
    Ok(DarkStateAmplitudes {
        c1: c1 / norm,
        c3: c3 / norm,
        c5: c5 / norm,
    })
}
