//! Experimental calibration: mixer pulse shaping, the photon number of an
//! input pulse, density profile and averaged receiving cross-section, OD
//! extraction and the count-based storage efficiency.

use std::f64::consts::{LN_2, PI};

use crate::constants::PhysicalConstants;
use crate::cpt::CptState;
use crate::error::{Error, Result};
use crate::fitting::{fit_nlls, FitModel, FitOptions};
use crate::thermal::integrate;

/// Gaussian response of the IF port: Ω_M(U) = s_LO a exp(−(U − U0)²/(2w²)).
/// The default centre and width make a 0 → 200 mV → 0 triangle of 1 µs
/// produce a 300 ns FWHM pulse; they are approximate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerCalibration {
    /// Peak Rabi frequency at unit LO scale (rad/s).
    pub amplitude: f64,
    /// Voltage of maximum output (V).
    pub center: f64,
    /// Gaussian width (V).
    pub width: f64,
    /// Output is linear in the LO amplitude.
    pub lo_scale: f64,
    /// Calibrated IF interval (V).
    pub range: (f64, f64),
}

impl MixerCalibration {
    pub fn nominal(amplitude: f64) -> Self {
        MixerCalibration {
            amplitude,
            center: 0.200,
            width: 0.051,
            lo_scale: 1.0,
            range: (0.0, 0.200),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixerOutput {
    pub omega: f64,
    /// U lay outside the calibrated interval.
    pub extrapolated: bool,
}

pub fn mixer_output(u: f64, cal: &MixerCalibration) -> MixerOutput {
    let x = (u - cal.center) / cal.width;
    MixerOutput {
        omega: cal.lo_scale * cal.amplitude * (-x * x / 2.0).exp(),
        extrapolated: u < cal.range.0 - 1e-12 || u > cal.range.1 + 1e-12,
    }
}

/// Symmetric triangle from 0 to `peak` and back over `duration`, starting at t = 0.
pub fn triangular_voltage(t: f64, duration: f64, peak: f64) -> f64 {
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    peak * (1.0 - (2.0 * t / duration - 1.0).abs())
}

/// Ω_M(t) produced by a triangular IF pulse.
pub fn shaped_pulse(times: &[f64], duration: f64, peak: f64, cal: &MixerCalibration) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            if (0.0..=duration).contains(&t) {
                mixer_output(triangular_voltage(t, duration, peak), cal).omega
            } else {
                0.0
            }
        })
        .collect()
}

/// Microwave intensity c ε0 (ħΩ/μ)²/2 of a plane wave with Rabi frequency Ω.
pub fn intensity(k: &PhysicalConstants, rabi: f64, dipole_ea0: f64) -> f64 {
    let e = k.hbar * rabi / (dipole_ea0 * k.e_a0);
    k.c * k.eps0 * e * e / 2.0
}

/// ∫I_M dt of a sampled Rabi waveform (trapezoid), J/m².
pub fn fluence(k: &PhysicalConstants, rabi: &[f64], dt: f64, dipole_ea0: f64) -> f64 {
    let n = rabi.len();
    rabi.iter()
        .enumerate()
        .map(|(i, &r)| {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            w * intensity(k, r, dipole_ea0)
        })
        .sum::<f64>()
        * dt
}

/// N̄ = ∫I_M dt · S_M/(ħω_M).
pub fn input_photon_number(
    k: &PhysicalConstants,
    rabi: &[f64],
    dt: f64,
    s_m: f64,
    dipole_ea0: f64,
    omega_m: f64,
) -> f64 {
    fluence(k, rabi, dt, dipole_ea0) * s_m / (k.hbar * omega_m)
}

/// Peak Rabi frequency of a Gaussian pulse Ω0 exp(−2ln2 (t/T_p)²) carrying
/// `n_bar` photons through `area`: the inverse of `input_photon_number`.
pub fn peak_rabi_for_photon_number(
    k: &PhysicalConstants,
    n_bar: f64,
    fwhm: f64,
    dipole_ea0: f64,
    omega_m: f64,
    area: f64,
) -> f64 {
    // ∫exp(−4ln2 t²/T_p²)dt = T_p √(π/(4 ln2))
    let shape = fwhm * (PI / (4.0 * LN_2)).sqrt();
    let per_rabi2 = intensity(k, 1.0, dipole_ea0) * shape * area / (k.hbar * omega_m);
    (n_bar.max(0.0) / per_rabi2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryInputs {
    pub length: f64,
    /// Probe radius at the entrance face (the waist).
    pub w_front: f64,
    pub w_rear: f64,
    /// 1/e² half width of the density; 2L/3 when absent.
    pub w_a: Option<f64>,
    pub d_l: f64,
    pub gamma2: f64,
    /// Probe angular frequency.
    pub omega_p: f64,
    pub dipole_12_ea0: f64,
    pub kappa: f64,
}

impl GeometryInputs {
    pub fn reported(k: &PhysicalConstants) -> Self {
        GeometryInputs {
            length: 20e-3,
            w_front: 54e-6,
            w_rear: 79e-6,
            w_a: None,
            d_l: 122.0,
            gamma2: crate::constants::angular(6.0e6),
            omega_p: 2.0 * PI * k.c / 780.2e-9,
            dipole_12_ea0: 2.99,
            kappa: DetectionEfficiency::default().kappa(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryCalibration {
    pub w_p: f64,
    /// Rayleigh range; infinite for a collimated beam.
    pub rayleigh: f64,
    pub w_a: f64,
    pub length: f64,
    pub n_max: f64,
    /// Averaged density 𝒩.
    pub n_avg: f64,
    pub s_m: f64,
    pub mean_radius: f64,
    pub kappa: f64,
}

impl GeometryCalibration {
    /// w_P √(1 + (z/R)²).
    pub fn radius(&self, z: f64) -> f64 {
        self.w_p * (1.0 + (z / self.rayleigh).powi(2)).sqrt()
    }

    /// ñ(z) = n_max exp(−2((z − L/2)/w_A)²) inside the medium.
    pub fn density(&self, z: f64) -> f64 {
        if !(0.0..=self.length).contains(&z) {
            return 0.0;
        }
        self.n_max * (-2.0 * ((z - self.length / 2.0) / self.w_a).powi(2)).exp()
    }
}

/// S_M = (1/L)∫π r²(z) ρ̃²(z) dz.
pub fn averaged_cross_section(
    length: f64,
    radius: impl Fn(f64) -> f64,
    rho_tilde: impl Fn(f64) -> f64,
) -> Result<f64> {
    let f = |z: f64| PI * radius(z).powi(2) * rho_tilde(z).powi(2);
    let scale = f(length / 2.0).abs().max(1e-300);
    Ok(integrate(f, 0.0, length, 1e-12 * scale * length)? / length)
}

pub fn density_and_cross_section(
    k: &PhysicalConstants,
    g: &GeometryInputs,
) -> Result<GeometryCalibration> {
    if !(g.length > 0.0 && g.w_front > 0.0 && g.w_rear >= g.w_front) {
        return Err(Error::Domain(
            "beam must not shrink along a medium of positive length".into(),
        ));
    }
    if !(g.kappa > 0.0 && g.kappa <= 1.0) {
        return Err(Error::Domain(format!(
            "detection efficiency {} outside (0, 1]",
            g.kappa
        )));
    }
    let ratio = g.w_rear / g.w_front;
    let rayleigh = if ratio > 1.0 {
        g.length / (ratio * ratio - 1.0).sqrt()
    } else {
        f64::INFINITY
    };
    let w_a = g.w_a.unwrap_or(2.0 * g.length / 3.0);
    let mu = g.dipole_12_ea0 * k.e_a0;
    let beta = 2.0 * g.omega_p * mu * mu / (k.hbar * k.eps0 * k.c);
    let shape = |z: f64| (-2.0 * ((z - g.length / 2.0) / w_a).powi(2)).exp();
    let profile = integrate(shape, 0.0, g.length, 1e-14 * g.length)?;
    let n_max = g.d_l * g.gamma2 / beta / profile;
    let n_avg = g.d_l * g.gamma2 / (beta * g.length);
    let mut cal = GeometryCalibration {
        w_p: g.w_front,
        rayleigh,
        w_a,
        length: g.length,
        n_max,
        n_avg,
        s_m: 0.0,
        mean_radius: 0.0,
        kappa: g.kappa,
    };
    let c = cal;
    cal.s_m = averaged_cross_section(g.length, |z| c.radius(z), |z| c.density(z) / n_avg)?;
    cal.mean_radius = (cal.s_m / PI).sqrt();
    Ok(cal)
}

/// Component transmissions along the optical detection path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEfficiency {
    pub optics: f64,
    pub filter: f64,
    pub fiber: f64,
    pub detector: f64,
}

impl Default for DetectionEfficiency {
    fn default() -> Self {
        DetectionEfficiency {
            optics: 0.91,
            filter: 0.80,
            fiber: 0.83,
            detector: 0.65,
        }
    }
}

impl DetectionEfficiency {
    pub fn kappa(&self) -> f64 {
        self.optics * self.filter * self.fiber * self.detector
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdFit {
    pub d0: f64,
    pub sigma: f64,
    /// A large part of the scan is fully absorbed.
    pub ill_conditioned: bool,
    pub converged: bool,
}

/// Single-parameter fit of I_in exp(−d0/(1 + 4ω²/Γ2²)) to a probe scan.
pub fn fit_global_od(omega: &[f64], transmission: &[f64], i_in: f64, gamma2: f64) -> Result<OdFit> {
    let reach = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if reach < 3.0 * gamma2 {
        return Err(Error::Domain(format!(
            "scan reaches {:.3} linewidths; at least 3 are needed",
            reach / gamma2
        )));
    }
    let model = FitModel::TwoLevel { i_in, gamma2 };
    let init = model.initial_guess(omega, transmission);
    let r = fit_nlls(
        &model,
        omega,
        transmission,
        None,
        &init,
        &FitOptions::default(),
    )?;
    let dark = transmission.iter().filter(|&&t| t < 1e-6 * i_in).count();
    Ok(OdFit {
        d0: r.params[0],
        sigma: r.uncertainties[0],
        ill_conditioned: dark * 5 > transmission.len(),
        converged: r.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionData {
    pub dipole_12_ea0: f64,
    pub dipole_34_ea0: f64,
    pub lambda_p: f64,
    pub lambda_m: f64,
    pub gamma2: f64,
    /// Spontaneous decay of |4⟩.
    pub gamma4: f64,
}

/// (d_M, d_L) = (|μ34|²λ_P Γ2 ρ33 d0/(|μ12|²λ_M Γ4), ρ11 d0).
pub fn partial_od(d0: f64, cpt: &CptState, t: &TransitionData) -> Result<(f64, f64)> {
    let factors = [
        t.dipole_12_ea0,
        t.dipole_34_ea0,
        t.lambda_p,
        t.lambda_m,
        t.gamma2,
        t.gamma4,
    ];
    if d0 < 0.0 || factors.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(
            "partial OD needs positive dipoles, wavelengths and rates".into(),
        ));
    }
    let ratio = (t.dipole_34_ea0 / t.dipole_12_ea0).powi(2);
    let d_m = ratio * t.lambda_p * t.gamma2 * cpt.rho33 * d0 / (t.lambda_m * t.gamma4);
    Ok((d_m, cpt.rho11 * d0))
}

/// η = ħω_M (C_L − C_N)/(κ S_M ∫I_M dt), with counts per input pulse.
pub fn ase_from_counts(
    k: &PhysicalConstants,
    c_l: f64,
    c_n: f64,
    kappa: f64,
    s_m: f64,
    fluence: f64,
    omega_m: f64,
) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Domain(format!(
            "detection efficiency {kappa} outside (0, 1]"
        )));
    }
    if c_l < c_n {
        return Err(Error::Domain(format!(
            "signal counts {c_l} below noise counts {c_n}"
        )));
    }
    if !(fluence > 0.0 && s_m > 0.0) {
        return Err(Error::Domain("input pulse carries no energy".into()));
    }
    Ok(k.hbar * omega_m * (c_l - c_n) / (kappa * s_m * fluence))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    pub eta_ii: f64,
    pub eta: f64,
    /// S_I = S_M; otherwise the two efficiencies differ.
    pub applicable: bool,
}

/// Intensity-to-intensity efficiency (I_L/ħω_L)/(Ī_M/ħω_M) for N_L
/// converted photons in a pulse of duration t0, next to the area-normalized
/// efficiency ħω_M N_L/(S_M ∫I_M dt).
#[allow(clippy::too_many_arguments)]
pub fn intensity_efficiency_equivalence(
    k: &PhysicalConstants,
    n_l: f64,
    omega_l: f64,
    s_i: f64,
    s_m: f64,
    t0: f64,
    fluence: f64,
    omega_m: f64,
) -> Result<Equivalence> {
    if !(t0 > 0.0 && s_i > 0.0 && s_m > 0.0 && fluence > 0.0) {
        return Err(Error::Domain(
            "pulse duration, areas and energy must be positive".into(),
        ));
    }
    let i_l = n_l * k.hbar * omega_l / (s_i * t0);
    let i_m = fluence / t0;
    let eta_ii = (i_l / (k.hbar * omega_l)) / (i_m / (k.hbar * omega_m));
    let eta = k.hbar * omega_m * n_l / (s_m * fluence);
    Ok(Equivalence {
        eta_ii,
        eta,
        applicable: (s_i - s_m).abs() <= 1e-12 * s_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{angular, CODATA};
    use crate::cpt::cpt_zero_order;
    use crate::spectral::fwhm;
    use num_complex::Complex64;

    #[test]
    fn mixer_pulse_shape() {
        let cal = MixerCalibration::nominal(1.0);
        assert!(mixer_output(0.0, &cal).omega < 1e-3);
        assert!(!mixer_output(0.1, &cal).extrapolated);
        assert!(mixer_output(0.3, &cal).extrapolated);
        let t: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.5e-9).collect();
        let pulse = shaped_pulse(&t, 1e-6, 0.2, &cal);
        let w = fwhm(&t, &pulse).unwrap();
        assert!((w - 300e-9).abs() < 3e-9, "{w}");
        let doubled = MixerCalibration {
            lo_scale: 2.0,
            ..cal
        };
        assert_eq!(
            mixer_output(0.15, &doubled).omega,
            2.0 * mixer_output(0.15, &cal).omega
        );
    }

    #[test]
    fn photon_number_scaling_and_inversion() {
        let dt = 1e-9;
        let omega_m = angular(37.9e9);
        let area = PI * 66e-6f64.powi(2);
        assert_eq!(
            input_photon_number(&CODATA, &[0.0; 100], dt, area, 1271.0, omega_m),
            0.0
        );
        let p0 = peak_rabi_for_photon_number(&CODATA, 0.1, 300e-9, 1271.0, omega_m, area);
        let rabi: Vec<f64> = (0..3000)
            .map(|i| {
                let x = (i as f64 * dt - 1.5e-6) / 300e-9;
                p0 * (-2.0 * LN_2 * x * x).exp()
            })
            .collect();
        let n = input_photon_number(&CODATA, &rabi, dt, area, 1271.0, omega_m);
        assert!((n - 0.1).abs() < 1e-9, "{n}");
        let doubled: Vec<f64> = rabi.iter().map(|r| 3.0 * r).collect();
        let n3 = input_photon_number(&CODATA, &doubled, dt, area, 1271.0, omega_m);
        assert!((n3 / n - 9.0).abs() < 1e-12);
    }

    #[test]
    fn receiving_radius_from_beam_expansion() {
        let g = density_and_cross_section(&CODATA, &GeometryInputs::reported(&CODATA)).unwrap();
        assert!((g.rayleigh - 18.73e-3).abs() < 0.01e-3);
        assert!((g.mean_radius - 66e-6).abs() < 1e-6, "{}", g.mean_radius);
        assert!(g.radius(0.0) == 54e-6 && (g.radius(20e-3) - 79e-6).abs() < 1e-12);
        // ∫ñ dz = 𝒩L.
        let total = integrate(|z| g.density(z), 0.0, g.length, 1e-12 * g.n_max * g.length).unwrap();
        assert!((total / (g.n_avg * g.length) - 1.0).abs() < 1e-6);
        // Averaged density is of the order of the quoted 2.4e10 cm^-3.
        assert!(g.n_avg > 1e16 && g.n_avg < 4e16, "{}", g.n_avg);
    }

    #[test]
    fn degenerate_geometry() {
        let r0 = 50e-6;
        let s = averaged_cross_section(0.02, |_| r0, |_| 1.0).unwrap();
        assert!((s - PI * r0 * r0).abs() < 1e-12 * s);
        // Weight concentrated where the beam is narrow shrinks S_M.
        let r = |z: f64| 50e-6 * (1.0 + z / 0.02);
        let front = |z: f64| (-z / 0.005).exp();
        let rear = |z: f64| front(0.02 - z);
        let a = averaged_cross_section(0.02, r, front).unwrap();
        let b = averaged_cross_section(0.02, r, rear).unwrap();
        assert!(a < b);
    }

    #[test]
    fn global_od_recovery() {
        let gamma2 = angular(6.0e6);
        let omega: Vec<f64> = (0..401)
            .map(|i| angular(-20e6 + i as f64 * 0.1e6))
            .collect();
        let model = FitModel::TwoLevel { i_in: 1.0, gamma2 };
        let data: Vec<f64> = omega.iter().map(|&w| model.value(w, &[140.0])).collect();
        let fit = fit_global_od(&omega, &data, 1.0, gamma2).unwrap();
        assert!((fit.d0 / 140.0 - 1.0).abs() < 0.01, "{}", fit.d0);
        let flat: Vec<f64> = omega.iter().map(|_| 1.0).collect();
        let fit = fit_global_od(&omega, &flat, 1.0, gamma2).unwrap();
        assert!(fit.d0.abs() < 1e-6);
        assert!(fit_global_od(&omega[150..250], &data[150..250], 1.0, gamma2).is_err());
    }

    #[test]
    fn partial_optical_depths() {
        let t = TransitionData {
            dipole_12_ea0: 2.99,
            dipole_34_ea0: 1271.0,
            lambda_p: 780.2e-9,
            lambda_m: 7.9e-3,
            gamma2: angular(6.0e6),
            gamma4: angular(740.0),
        };
        let cpt = CptState {
            rho11: 0.865,
            rho33: 0.135,
            rho13: Complex64::new(0.0, 0.0),
        };
        let (d_m, d_l) = partial_od(141.0, &cpt, &t).unwrap();
        assert!((d_l - 122.0).abs() < 0.1);
        let want = (1271.0f64 / 2.99).powi(2) * 780.2e-9 * 6.0e6 * 0.135 * 141.0 / (7.9e-3 * 740.0);
        assert!((d_m / want - 1.0).abs() < 1e-12);
        let none = CptState {
            rho11: 1.0,
            rho33: 0.0,
            rho13: Complex64::new(0.0, 0.0),
        };
        assert_eq!(partial_od(141.0, &none, &t).unwrap().0, 0.0);
        let s = cpt_zero_order(Complex64::new(2.1, 0.0), Complex64::new(7.6, 0.0)).unwrap();
        let (_, d_l) = partial_od(141.0, &s, &t).unwrap();
        assert!(d_l <= 141.0);
    }

    #[test]
    fn kappa_product() {
        let k = DetectionEfficiency::default().kappa();
        assert!((k - 0.91 * 0.80 * 0.83 * 0.65).abs() < 1e-15);
        assert!((k / 0.39 - 1.0).abs() < 0.01);
    }

    #[test]
    fn ase_and_equivalence() {
        let omega_m = angular(37.9e9);
        let s_m = PI * 66e-6f64.powi(2);
        assert_eq!(
            ase_from_counts(&CODATA, 0.2, 0.2, 0.39, s_m, 1e-12, omega_m).unwrap(),
            0.0
        );
        assert!(ase_from_counts(&CODATA, 0.2, 0.1, 0.39, s_m, 0.0, omega_m).is_err());
        let a = ase_from_counts(&CODATA, 0.3, 0.1, 0.39, s_m, 1e-18, omega_m).unwrap();
        let b = ase_from_counts(&CODATA, 0.5, 0.1, 0.39, s_m, 2e-18, omega_m).unwrap();
        assert!((b / a - 1.0).abs() < 1e-12);
        let e = intensity_efficiency_equivalence(
            &CODATA,
            0.05,
            angular(384e12),
            s_m,
            s_m,
            1e-6,
            1e-18,
            omega_m,
        )
        .unwrap();
        assert!(e.applicable);
        assert!((e.eta_ii - e.eta).abs() <= 1e-12 * e.eta);
        let e = intensity_efficiency_equivalence(
            &CODATA,
            0.05,
            angular(384e12),
            2.0 * s_m,
            s_m,
            1e-6,
            1e-18,
            omega_m,
        )
        .unwrap();
        assert!(!e.applicable);
        assert!((e.eta / e.eta_ii - 2.0).abs() < 1e-12);
    }
}
