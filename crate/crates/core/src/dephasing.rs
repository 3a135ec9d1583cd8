//! Mean-field Rydberg dephasing: van der Waals level-shift dispersion,
//! dipole-exchange variance and motional decoherence of the spin wave.

use std::f64::consts::PI;

use crate::config::TransducerConfig;
use crate::constants::{PhysicalConstants, TWO_PI};
use crate::cpt;
use crate::error::{Error, Result};

/// Whether tabulated interaction coefficients are quoted as ω/2π or as ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C6Convention {
    /// Quoted as ω/2π; multiplied by 2π before use.
    Cyclic,
    /// Quoted as angular rates.
    Angular,
}

impl C6Convention {
    fn factor(self) -> f64 {
        match self {
            C6Convention::Cyclic => TWO_PI,
            C6Convention::Angular => 1.0,
        }
    }
}

/// Which |3⟩ population feeds the level-shift variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho33Source {
    /// Trapping state of the probe/auxiliary Rabi frequencies.
    TrappedState,
    /// The ensemble's configured ρ33.
    Ensemble,
    Fixed(f64),
}

/// Interaction coefficients. C6 and C3 are stored in the units they are
/// quoted in (Hz·m⁶, Hz·m³); `c6_convention` decides the 2π.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionParams {
    pub c6_33: f64,
    pub c6_55: f64,
    pub c6_35_mean: f64,
    pub c3: f64,
    /// Linewidth of the pumping Rydberg EIT (rad/s).
    pub gamma_pump: f64,
    /// 1/e² radius of the coupling beam (m).
    pub coupling_waist: f64,
    /// Overrides the radius derived from C6_33 and γ_pump.
    pub blockade_radius: Option<f64>,
    pub rho33_source: Rho33Source,
    pub c6_convention: C6Convention,
}

impl Default for InteractionParams {
    fn default() -> Self {
        // C6_33 follows from R_B = 4.1 µm at γ_pump/2π = 3 MHz; |5⟩ pairs are
        // assumed to interact like |3⟩ pairs for lack of a tabulated value.
        InteractionParams {
            c6_33: 7.125e9 * 1e-36,
            c6_55: 7.125e9 * 1e-36,
            c6_35_mean: 0.15e9 * 1e-36,
            c3: 0.29e9 * 1e-18,
            gamma_pump: TWO_PI * 3e6,
            coupling_waist: 128e-6,
            blockade_radius: None,
            rho33_source: Rho33Source::TrappedState,
            c6_convention: C6Convention::Cyclic,
        }
    }
}

impl InteractionParams {
    pub fn c6_33_angular(&self) -> f64 {
        self.c6_33 * self.c6_convention.factor()
    }

    pub fn c6_55_angular(&self) -> f64 {
        self.c6_55 * self.c6_convention.factor()
    }

    pub fn c6_35_angular(&self) -> f64 {
        self.c6_35_mean * self.c6_convention.factor()
    }

    pub fn c3_angular(&self) -> f64 {
        self.c3 * self.c6_convention.factor()
    }

    pub fn blockade_radius(&self) -> Result<f64> {
        match self.blockade_radius {
            Some(r) if r > 0.0 => Ok(r),
            Some(r) => Err(Error::Domain(format!(
                "blockade radius {r} must be positive"
            ))),
            None => blockade_radius(self.c6_33_angular(), self.gamma_pump),
        }
    }
}

/// R_B = (2 C6 / γ_pump)^{1/6}.
pub fn blockade_radius(c6_33: f64, gamma_pump: f64) -> Result<f64> {
    if !(c6_33 > 0.0 && gamma_pump > 0.0) {
        return Err(Error::Domain(
            "blockade radius needs positive C6 and pumping linewidth".into(),
        ));
    }
    Ok((2.0 * c6_33 / gamma_pump).powf(1.0 / 6.0))
}

/// ϑ = 4π C6² ρ n / (9 R_B⁹): variance of the vdW shift from neighbours
/// outside the blockade sphere.
pub fn level_shift_variance(c6: f64, rho_pop: f64, n_at: f64, r_b: f64) -> Result<f64> {
    if r_b <= 0.0 {
        return Err(Error::Domain("blockade radius must be positive".into()));
    }
    if rho_pop < 0.0 || n_at < 0.0 {
        return Err(Error::Domain(
            "population and density must be non-negative".into(),
        ));
    }
    Ok(4.0 * PI * c6 * c6 * rho_pop * n_at / (9.0 * r_b.powi(9)))
}

/// γ51 = √N̄ γ0.
pub fn gamma51_of_photon_number(n_bar: f64, gamma0: f64) -> Result<f64> {
    if n_bar < 0.0 {
        return Err(Error::Domain(format!("photon number {n_bar} is negative")));
    }
    Ok(n_bar.sqrt() * gamma0)
}

/// ϑ45 = 4π C3² |P41 P51*| n / (3 ρ11 R_B³), the exchange variance with
/// the outer cut-off at the coupling waist dropped.
pub fn dde_variance(c3: f64, pp_mag: f64, rho11: f64, n_at: f64, r_b: f64, w: f64) -> Result<f64> {
    if !(r_b > 0.0) || r_b >= w {
        return Err(Error::Domain(format!(
            "exchange integral needs 0 < R_B < w, got R_B = {r_b:e} m, w = {w:e} m"
        )));
    }
    if rho11 <= 0.0 {
        return Err(Error::Domain("ρ11 must be positive".into()));
    }
    Ok(4.0 * PI * c3 * c3 * pp_mag * n_at / (3.0 * rho11 * r_b.powi(3)))
}

/// One-dimensional thermal speed u = √(k_B T / m) and the time
/// τ_sw = λ_sw / (2π u) to cross 1/2π of the spin-wave wavelength.
pub fn motional_coherence(
    k: &PhysicalConstants,
    temperature: f64,
    lambda_sw: f64,
    mass: f64,
) -> Result<(f64, f64)> {
    if temperature <= 0.0 || mass <= 0.0 {
        return Err(Error::Domain(
            "temperature and mass must be positive".into(),
        ));
    }
    let u = (k.kb * temperature / mass).sqrt();
    Ok((u, lambda_sw / (TWO_PI * u)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamGeometry {
    Copropagating,
    Counterpropagating,
}

/// 2π / |k_P − k_A| for collinear beams. Returns +∞ when the wavevectors
/// cancel.
pub fn spin_wave_wavelength(k_p: f64, k_a: f64, geometry: BeamGeometry) -> f64 {
    let mismatch = match geometry {
        BeamGeometry::Copropagating => (k_p - k_a).abs(),
        BeamGeometry::Counterpropagating => k_p.abs() + k_a.abs(),
    };
    if mismatch == 0.0 {
        f64::INFINITY
    } else {
        TWO_PI / mismatch
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingBudget {
    pub var_33: f64,
    pub var_35: f64,
    pub var_55: f64,
    pub var_45: f64,
    pub gamma0: f64,
    pub r_b: f64,
    pub rho33: f64,
    pub n_bar: f64,
    pub tau_sw: f64,
    pub lambda_sw: f64,
    pub u: f64,
}

impl DephasingBudget {
    pub fn gamma51(&self, n_bar: f64) -> Result<f64> {
        gamma51_of_photon_number(n_bar, self.gamma0)
    }
}

/// Population ρ33 selected by the interaction settings.
pub fn rho33_for(cfg: &TransducerConfig) -> Result<f64> {
    Ok(match cfg.interactions.rho33_source {
        Rho33Source::TrappedState => {
            cpt::cpt_zero_order(
                cfg.fields.probe.rabi.into(),
                cfg.fields.auxiliary.rabi.into(),
            )?
            .rho33
        }
        Rho33Source::Ensemble => cfg.ensemble.rho33,
        Rho33Source::Fixed(r) => r,
    })
}

/// Estimate of |P41 P51*| for N̄ stored excitations spread over the
/// interaction volume π r² L: |P51|² = N̄/(n V) and the write-field
/// adiabatic relation |P41| ≈ 2|P51|/(Ω_W T_p).
pub fn coherence_product(cfg: &TransducerConfig) -> f64 {
    let e = &cfg.ensemble;
    let volume = PI * e.radius * e.radius * e.length;
    let p51_sq = cfg.pulse.photon_number / (e.density * volume);
    let ratio = 2.0 / (cfg.fields.write.rabi * cfg.pulse.fwhm);
    p51_sq * ratio
}

/// Full budget at the configured photon number; γ0 is the N̄ = 1 value.
pub fn dephasing_budget(cfg: &TransducerConfig) -> Result<DephasingBudget> {
    let ip = &cfg.interactions;
    let e = &cfg.ensemble;
    let r_b = ip.blockade_radius()?;
    let rho33 = rho33_for(cfg)?;
    let n_bar = cfg.pulse.photon_number;
    let volume = PI * e.radius * e.radius * e.length;
    let rho55 = n_bar / (e.density * volume);
    let var_33 = level_shift_variance(ip.c6_33_angular(), rho33, e.density, r_b)?;
    let var_35 = level_shift_variance(ip.c6_35_angular(), n_bar * rho33, e.density, r_b)?;
    let var_55 = level_shift_variance(ip.c6_55_angular(), rho55, e.density, r_b)?;
    let var_45 = dde_variance(
        ip.c3_angular(),
        coherence_product(cfg),
        e.rho11,
        e.density,
        r_b,
        ip.coupling_waist,
    )?;
    let gamma0 = level_shift_variance(ip.c6_35_angular(), rho33, e.density, r_b)?.sqrt();
    let k_p = TWO_PI / cfg.fields.probe.wavelength(cfg.constants.c);
    let k_a = TWO_PI / cfg.fields.auxiliary.wavelength(cfg.constants.c);
    let lambda_sw = spin_wave_wavelength(k_p, k_a, BeamGeometry::Copropagating);
    let (u, tau_sw) = motional_coherence(
        &cfg.constants,
        e.temperature,
        lambda_sw,
        cfg.constants.m_rb87,
    )?;
    Ok(DephasingBudget {
        var_33,
        var_35,
        var_55,
        var_45,
        gamma0,
        r_b,
        rho33,
        n_bar,
        tau_sw,
        lambda_sw,
        u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::CODATA;

    #[test]
    fn blockade_radius_inversion() {
        let gp = TWO_PI * 3e6;
        // Invert R_B = 4.1 µm: C6 = γ R⁶ / 2.
        let c6 = gp * (4.1e-6f64).powi(6) / 2.0;
        let c6_cyclic_ghz_um6 = c6 / TWO_PI / 1e9 / 1e-36;
        assert!((c6_cyclic_ghz_um6 - 7.1).abs() < 0.05);
        let r = blockade_radius(c6, gp).unwrap();
        assert!((r - 4.1e-6).abs() < 1e-15);
        let r8 = blockade_radius(8.0 * c6, gp).unwrap();
        assert!((r8 / r - 2f64.sqrt()).abs() < 1e-12);
        assert!(blockade_radius(0.0, gp).is_err());
        assert!((InteractionParams::default().blockade_radius().unwrap() - 4.1e-6).abs() < 1e-9);
    }

    #[test]
    fn variance_scalings() {
        let base = level_shift_variance(1e-27, 0.1, 2.4e16, 4.1e-6).unwrap();
        assert_eq!(
            level_shift_variance(1e-27, 0.0, 2.4e16, 4.1e-6).unwrap(),
            0.0
        );
        let n2 = level_shift_variance(1e-27, 0.1, 4.8e16, 4.1e-6).unwrap();
        assert!((n2 / base - 2.0).abs() < 1e-12);
        let c2 = level_shift_variance(2e-27, 0.1, 2.4e16, 4.1e-6).unwrap();
        assert!((c2 / base - 4.0).abs() < 1e-12);
        let r2 = level_shift_variance(1e-27, 0.1, 2.4e16, 8.2e-6).unwrap();
        assert!((base / r2 - 512.0).abs() < 1e-9);
        assert!(level_shift_variance(1e-27, 0.1, 2.4e16, 0.0).is_err());
    }

    #[test]
    fn gamma51_law() {
        assert_eq!(gamma51_of_photon_number(1.0, 7.0).unwrap(), 7.0);
        assert_eq!(gamma51_of_photon_number(4.0, 7.0).unwrap(), 14.0);
        assert!((gamma51_of_photon_number(0.1, 1.0).unwrap() - 0.316_227_766).abs() < 1e-9);
        assert!(gamma51_of_photon_number(-1.0, 1.0).is_err());
    }

    #[test]
    fn exchange_variance() {
        assert_eq!(dde_variance(1.0, 0.0, 0.5, 1e16, 4e-6, 1e-4).unwrap(), 0.0);
        let a = dde_variance(1.0, 1e-6, 0.5, 1e16, 4e-6, 1e-4).unwrap();
        let b = dde_variance(2.0, 1e-6, 0.5, 1e16, 4e-6, 1e-4).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(dde_variance(1.0, 1e-6, 0.5, 1e16, 2e-4, 1e-4).is_err());
    }

    #[test]
    fn motional_time() {
        let (u, tau) = motional_coherence(&CODATA, 150e-6, 1.3e-6, CODATA.m_rb87).unwrap();
        assert!((u - (CODATA.kb * 150e-6 / CODATA.m_rb87).sqrt()).abs() < 1e-15);
        assert!((tau - 1.7e-6).abs() < 0.03 * 1.7e-6);
        let (_, t4) = motional_coherence(&CODATA, 600e-6, 1.3e-6, CODATA.m_rb87).unwrap();
        assert!((tau / t4 - 2.0).abs() < 1e-12);
        let (_, tl) = motional_coherence(&CODATA, 150e-6, 2.6e-6, CODATA.m_rb87).unwrap();
        assert!((tl / tau - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spin_wave_conventions() {
        let kp = TWO_PI / 780.2e-9;
        let ka = TWO_PI / 479.7e-9;
        let co = spin_wave_wavelength(kp, ka, BeamGeometry::Copropagating);
        let counter = spin_wave_wavelength(kp, ka, BeamGeometry::Counterpropagating);
        assert!((co - 1.245e-6).abs() < 0.005e-6);
        assert!((counter - 0.297e-6).abs() < 0.005e-6);
        assert!((co - 1.3e-6).abs() < (counter - 1.3e-6).abs());
        assert_eq!(
            spin_wave_wavelength(ka, kp, BeamGeometry::Copropagating),
            co
        );
        assert!(spin_wave_wavelength(kp, kp, BeamGeometry::Copropagating).is_infinite());
    }

    #[test]
    fn budget_at_preset() {
        let cfg = TransducerConfig::paper_fig2a();
        let b = dephasing_budget(&cfg).unwrap();
        let g0 = b.gamma0 / TWO_PI;
        assert!(g0 > 10.8e3 / 2.0 && g0 < 10.8e3 * 2.0, "{g0}");
        assert!(b.var_55 < b.var_35);
        assert!(b.var_45 / b.var_35 < 0.1, "{}", b.var_45 / b.var_35);
        assert!((b.gamma51(b.n_bar).unwrap() - b.n_bar.sqrt() * b.gamma0).abs() < 1e-12);
    }
}
