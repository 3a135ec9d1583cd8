//! Frequency-domain propagation of the microwave pulse through the EIT
//! medium and the slow-light efficiency chain built on it.

use std::f64::consts::LN_2;

use num_complex::Complex64;

use crate::config::{PulseSpec, TransducerConfig};
use crate::error::{Error, Result};

/// 32 ln 2 γ t_d² / (Γ T_p²): the broadening coefficient of one channel.
pub fn alpha_coefficient(gamma: f64, big_gamma: f64, delay: f64, fwhm: f64) -> Result<f64> {
    if big_gamma <= 0.0 || fwhm <= 0.0 {
        return Err(Error::Domain(
            "broadening coefficient needs positive Γ and pulse width".into(),
        ));
    }
    Ok(32.0 * LN_2 * gamma * delay * delay / (big_gamma * fwhm * fwhm))
}

/// Broadening and delays of the two channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Broadening {
    pub zeta_m: f64,
    pub t_dm: f64,
    pub alpha_m: f64,
    pub alpha_l: f64,
    pub t_dl: f64,
}

pub fn broadening_and_delay(cfg: &TransducerConfig) -> Result<Broadening> {
    let omega_w = cfg.fields.write.rabi;
    if omega_w <= 0.0 {
        return Err(Error::Domain(
            "write Rabi frequency is zero; the microwave group delay diverges".into(),
        ));
    }
    let tp = cfg.pulse.fwhm;
    if tp <= 0.0 {
        return Err(Error::Domain("pulse FWHM must be positive".into()));
    }
    let lv = &cfg.levels;
    let od = cfg.effective_mw_od();
    let w2 = omega_w * omega_w;
    let zeta_m = (1.0 + 32.0 * LN_2 * lv.gamma41 * lv.gamma4 * od / (tp * tp * w2 * w2)).sqrt();
    let t_dm = lv.gamma4 * od / w2;
    Ok(Broadening {
        zeta_m,
        t_dm,
        alpha_m: alpha_coefficient(lv.gamma41, lv.gamma4, t_dm, tp)?,
        alpha_l: alpha_coefficient(lv.gamma61, lv.gamma6, cfg.storage.t_dl, cfg.storage.t_pl)?,
        t_dl: cfg.storage.t_dl,
    })
}

/// Optical group delay Γ6 ρ11 d_L / Ω_R² by analogy with the microwave
/// channel. Only an estimate: the configured t_dL is what the chain uses.
pub fn optical_delay_estimate(cfg: &TransducerConfig) -> Result<f64> {
    let omega_r = cfg.fields.read.rabi;
    if omega_r <= 0.0 {
        return Err(Error::Domain("read Rabi frequency is zero".into()));
    }
    Ok(cfg.levels.gamma6 * cfg.ensemble.rho11 * cfg.ensemble.d_l / (omega_r * omega_r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyBreakdown {
    pub t_dm: f64,
    pub t_dl: f64,
    pub t_d: f64,
    pub zeta_m: f64,
    pub alpha_m: f64,
    pub alpha_l: f64,
    pub eta_m: f64,
    pub eta_l: f64,
    pub eta_t: f64,
    pub eta0: f64,
    pub eta_s: f64,
    pub eta_c: f64,
    pub eta: f64,
    pub t_pl: f64,
}

/// Inputs of the slow-light chain when every factor is given explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainInputs {
    pub gamma51: f64,
    pub t_dm: f64,
    pub t_dl: f64,
    pub d_m: f64,
    pub d_l: f64,
    pub alpha_m: f64,
    pub alpha_l: f64,
    pub t_pl: f64,
    pub eta_s: f64,
    pub eta_c: f64,
}

/// η_M = e^{−2γ51 t_dM}/√(1+α_M/d_M), η_L likewise, η = η_M η_L η_s η_c.
pub fn efficiency_chain(p: &ChainInputs) -> Result<EfficiencyBreakdown> {
    if !(p.d_m > 0.0 && p.d_l > 0.0) {
        return Err(Error::Domain("optical depths must be positive".into()));
    }
    let broad_m = (1.0 + p.alpha_m / p.d_m).sqrt();
    let broad_l = (1.0 + p.alpha_l / p.d_l).sqrt();
    let eta_m = (-2.0 * p.gamma51 * p.t_dm).exp() / broad_m;
    let eta_l = (-2.0 * p.gamma51 * p.t_dl).exp() / broad_l;
    let eta_t = eta_m * eta_l;
    Ok(EfficiencyBreakdown {
        t_dm: p.t_dm,
        t_dl: p.t_dl,
        t_d: p.t_dm + p.t_dl,
        zeta_m: broad_m,
        alpha_m: p.alpha_m,
        alpha_l: p.alpha_l,
        eta_m,
        eta_l,
        eta_t,
        eta0: 1.0 / (broad_m * broad_l),
        eta_s: p.eta_s,
        eta_c: p.eta_c,
        eta: eta_t * p.eta_s * p.eta_c,
        t_pl: p.t_pl,
    })
}

/// Efficiency chain of a configured scenario. The microwave channel uses
/// the OD ρ33 d_M that appears in the propagation kernel, so η_M equals the
/// pulse area transmitted by the closed-form waveform.
pub fn transmission_efficiency(cfg: &TransducerConfig) -> Result<EfficiencyBreakdown> {
    let b = broadening_and_delay(cfg)?;
    efficiency_chain(&ChainInputs {
        gamma51: cfg.levels.gamma51,
        t_dm: b.t_dm,
        t_dl: b.t_dl,
        d_m: cfg.effective_mw_od(),
        d_l: cfg.ensemble.d_l,
        alpha_m: b.alpha_m,
        alpha_l: b.alpha_l,
        t_pl: cfg.storage.t_pl,
        eta_s: cfg.storage.eta_s,
        eta_c: cfg.storage.eta_c,
    })
}

/// η = η0 exp(−2√N̄ γ0 t_d).
pub fn photon_number_efficiency(n_bar: f64, eta0: f64, gamma0: f64, t_d: f64) -> Result<f64> {
    if n_bar < 0.0 {
        return Err(Error::Domain(format!("photon number {n_bar} is negative")));
    }
    Ok(eta0 * (-2.0 * n_bar.sqrt() * gamma0 * t_d).exp())
}

/// Optimal-storage scaling η = 1 − β/d_M, clipped to [0, 1].
pub fn od_scaling(d_m: f64, beta: f64) -> Result<f64> {
    if d_m <= 0.0 {
        return Err(Error::Domain(format!("OD {d_m} must be positive")));
    }
    Ok((1.0 - beta / d_m).clamp(0.0, 1.0))
}

/// Exponent κ(ω) with W_M(ω, L) = W_M(ω, 0) e^{κ(ω)}:
///
/// κ = iωL/c + ρ33 d_M Γ4 (iω − γ51) / (4(iω − γ41)(iω − γ51) + Ω_W²).
///
/// The value at position z follows by scaling with z/L.
pub fn mw_kernel(omega: f64, cfg: &TransducerConfig) -> Result<Complex64> {
    let lv = &cfg.levels;
    let iw = Complex64::new(0.0, omega);
    let vacuum = iw * cfg.ensemble.length / cfg.constants.c;
    let od = cfg.effective_mw_od();
    if od == 0.0 {
        return Ok(vacuum);
    }
    let w = cfg.fields.write.rabi;
    let den = 4.0 * (iw - lv.gamma41) * (iw - lv.gamma51) + w * w;
    if den.norm() == 0.0 {
        return Err(Error::Pole { omega });
    }
    Ok(vacuum + od * lv.gamma4 * (iw - lv.gamma51) / den)
}

/// Transmission |e^{κ(δ)}|² of the microwave channel times the optical
/// channel efficiency η_L at detuning δ.
pub fn detuning_response(delta: f64, cfg: &TransducerConfig) -> Result<f64> {
    let k = mw_kernel(delta, cfg)?;
    let eta_l = transmission_efficiency(cfg)?.eta_l;
    Ok((2.0 * k.re).exp() * eta_l)
}

/// Output of the Gaussian propagation, sampled on the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPropagation {
    pub times: Vec<f64>,
    pub input: Vec<f64>,
    /// Closed-form slow pulse truncated at second order in ω.
    pub closed_form: Vec<f64>,
    /// Inverse Fourier transform of the full kernel.
    pub numeric: Vec<Complex64>,
    pub peak: f64,
    pub t_dm: f64,
    pub zeta_m: f64,
    pub width: f64,
    /// Ω_W² ≫ γ41γ51 holds (by two orders of magnitude); the closed form is
    /// an approximation otherwise.
    pub valid: bool,
}

/// Closed-form output Ω_M0/ζ exp(−γ51 t_dM − 2 ln2 ((t − t0 − L/c − t_dM)/(ζT_p))²).
pub fn closed_form_waveform(
    pulse: &PulseSpec,
    cfg: &TransducerConfig,
    times: &[f64],
) -> Result<Vec<f64>> {
    let b = broadening_and_delay(cfg)?;
    let lag = pulse.center + cfg.ensemble.length / cfg.constants.c + b.t_dm;
    let amp = pulse.peak_rabi / b.zeta_m * (-cfg.levels.gamma51 * b.t_dm).exp();
    let width = b.zeta_m * pulse.fwhm;
    Ok(times
        .iter()
        .map(|&t| {
            let x = (t - lag) / width;
            amp * (-2.0 * LN_2 * x * x).exp()
        })
        .collect())
}

/// Ω_M(t, L) = Ω_M0 T_p/√(8π ln2) ∫dω exp(−iω(t−t0) − T_p²ω²/(8 ln2) + κ(ω)),
/// by the trapezoid rule on `points` nodes spanning ±`span`/T_p.
pub fn numeric_waveform(
    pulse: &PulseSpec,
    cfg: &TransducerConfig,
    times: &[f64],
    points: usize,
    span: f64,
) -> Result<Vec<Complex64>> {
    if points < 2 {
        return Err(Error::Domain(
            "frequency grid needs at least two points".into(),
        ));
    }
    let tp = pulse.fwhm;
    let w_max = span / tp;
    let dw = 2.0 * w_max / (points - 1) as f64;
    let a = tp * tp / (8.0 * LN_2);
    let pref = pulse.peak_rabi * tp / (8.0 * std::f64::consts::PI * LN_2).sqrt();
    let mut spectrum = Vec::with_capacity(points);
    for k in 0..points {
        let w = -w_max + k as f64 * dw;
        let weight = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let e = mw_kernel(w, cfg)? - a * w * w;
        spectrum.push(e.exp() * (weight * dw * pref));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let s = t - pulse.center;
            // Phase rotation e^{−iωs} advanced by a constant step per node.
            let step = Complex64::from_polar(1.0, -dw * s);
            let mut phase = Complex64::from_polar(1.0, w_max * s);
            let mut acc = Complex64::new(0.0, 0.0);
            for f in &spectrum {
                acc += f * phase;
                phase *= step;
            }
            acc
        })
        .collect())
}

pub fn propagate_gaussian_analytic(
    pulse: &PulseSpec,
    cfg: &TransducerConfig,
    times: &[f64],
) -> Result<AnalyticPropagation> {
    let b = broadening_and_delay(cfg)?;
    let lv = &cfg.levels;
    let w = cfg.fields.write.rabi;
    Ok(AnalyticPropagation {
        times: times.to_vec(),
        input: times.iter().map(|&t| pulse.envelope(t)).collect(),
        closed_form: closed_form_waveform(pulse, cfg, times)?,
        numeric: numeric_waveform(
            pulse,
            cfg,
            times,
            cfg.storage.omega_points,
            cfg.storage.omega_span,
        )?,
        peak: pulse.peak_rabi / b.zeta_m,
        t_dm: b.t_dm,
        zeta_m: b.zeta_m,
        width: b.zeta_m * pulse.fwhm,
        valid: w * w >= 100.0 * lv.gamma41 * lv.gamma51,
    })
}

/// Relative L² distance ‖a − b‖/‖b‖ on a common uniform grid.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Full width at half maximum of a sampled non-negative profile, with
/// linear interpolation at both crossings.
pub fn fwhm(times: &[f64], y: &[f64]) -> Option<f64> {
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if ymax <= 0.0 {
        return None;
    }
    let half = ymax / 2.0;
    let mut left = None;
    for i in (1..=imax).rev() {
        if y[i - 1] < half {
            let f = (half - y[i - 1]) / (y[i] - y[i - 1]);
            left = Some(times[i - 1] + f * (times[i] - times[i - 1]));
            break;
        }
    }
    let mut right = None;
    for i in imax..y.len() - 1 {
        if y[i + 1] < half {
            let f = (y[i] - half) / (y[i] - y[i + 1]);
            right = Some(times[i] + f * (times[i + 1] - times[i]));
            break;
        }
    }
    Some(right? - left?)
}
