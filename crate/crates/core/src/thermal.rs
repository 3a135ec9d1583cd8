//! Blackbody microwave background: occupation, flux onto the medium,
//! angular conversion through the needle-shaped ensemble and the resulting
//! noise-equivalent temperature.

use std::f64::consts::PI;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Reference temperature at which the angular conversion integral is done;
/// other temperatures follow by rescaling the Bose factor.
pub const REFERENCE_TEMPERATURE: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalScenario {
    /// Microwave frequency ν (Hz).
    pub frequency: f64,
    /// Environment temperature (K).
    pub temperature: f64,
    /// Storage bandwidth (Hz).
    pub bandwidth: f64,
    /// Interaction time τ (s).
    pub interaction_time: f64,
    /// Medium radius r (m).
    pub radius: f64,
    /// Medium length L (m).
    pub length: f64,
    pub eta_max: f64,
    /// Non-thermal noise per pulse.
    pub stray_noise: f64,
}

impl Default for ThermalScenario {
    fn default() -> Self {
        ThermalScenario {
            frequency: 37e9,
            temperature: 300.0,
            bandwidth: 2.1e6,
            interaction_time: 550e-9,
            radius: 66e-6,
            length: 20e-3,
            eta_max: 0.93,
            stray_noise: 0.01,
        }
    }
}

impl ThermalScenario {
    /// Cylinder surface 2πr² + 2πrL.
    pub fn area(&self) -> f64 {
        2.0 * PI * self.radius * self.radius + 2.0 * PI * self.radius * self.length
    }

    /// Grazing angle arcsin(2r/L) below which photons traverse the full length.
    pub fn theta_min(&self) -> Result<f64> {
        let x = 2.0 * self.radius / self.length;
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!(
                "2r/L = {x} must lie in (0, 1) for a needle-shaped medium"
            )));
        }
        Ok(x.asin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    pub n_occ: f64,
    pub phi: f64,
    pub n_stored: f64,
    pub n_th: f64,
    pub n_st: f64,
    pub t_ne: f64,
    /// T_NE from the Rayleigh-Jeans (linear) Bose factor.
    pub t_ne_linear: f64,
    /// n_st reaches the thermal count at the reference temperature.
    pub t_ne_flagged: bool,
}

/// Bose occupation 1/(e^{hν/kT} − 1). Zero at T ≤ 0 (the limit).
pub fn mean_occupation(k: &PhysicalConstants, nu: f64, temperature: f64) -> Result<f64> {
    if nu <= 0.0 {
        return Err(Error::Domain(format!("frequency {nu} must be positive")));
    }
    if temperature <= 0.0 {
        return Ok(0.0);
    }
    let x = k.h() * nu / (k.kb * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Photon flux through the surface A over the storage band: the spectral
/// radiance 2ν²n̄/c² integrated over the hemisphere with cos θ (a factor π)
/// and over the band by Simpson's rule.
pub fn thermal_flux(k: &PhysicalConstants, s: &ThermalScenario) -> Result<f64> {
    if s.bandwidth <= 0.0 {
        return Ok(0.0);
    }
    let n = 64;
    let h = s.bandwidth / n as f64;
    let lo = s.frequency - s.bandwidth / 2.0;
    let mut acc = 0.0;
    for i in 0..=n {
        let nu = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * 2.0 * nu * nu * mean_occupation(k, nu, s.temperature)? / (k.c * k.c);
    }
    Ok(acc * h / 3.0 * PI * s.area())
}

/// Narrowband form (2ν²n̄/c²) π A B.
pub fn thermal_flux_narrowband(k: &PhysicalConstants, s: &ThermalScenario) -> Result<f64> {
    let n = mean_occupation(k, s.frequency, s.temperature)?;
    Ok(2.0 * s.frequency * s.frequency * n / (k.c * k.c) * PI * s.area() * s.bandwidth)
}

/// N = Φτ/2: one of two polarizations is converted.
pub fn stored_thermal_photons(phi: f64, tau: f64) -> f64 {
    phi * tau / 2.0
}

/// Storage efficiency along a chord of length l when the OD grows with l:
/// η(l) = 1 − (1 − η_max) L / l, clipped at zero. Equals η_max at l = L.
pub fn od_scaled_efficiency(eta_max: f64, length: f64) -> impl Fn(f64) -> f64 {
    move |l: f64| (1.0 - (1.0 - eta_max) * length / l).max(0.0)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: usize,
    evals: &mut usize,
) -> Result<f64> {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    *evals += 2;
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "no convergence on [{a:e}, {b:e}] after {evals} evaluations (error {:e})",
            diff.abs() / 15.0
        )));
    }
    Ok(
        adaptive(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1, evals)?
            + adaptive(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1, evals)?,
    )
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    let mut evals = 3;
    adaptive(&f, a, fa, b, fb, whole, m, fm, tol, 50, &mut evals)
}

/// Thermal photons converted to optical counts: the bulk integral
/// ∫ η(l(θ)) N sinθ/2 dθ over [θmin, π − θmin] with l = 2r/sinθ, plus the
/// paraxial cap 2 η(L) N (1 − cos θmin)/(4π).
///
/// The bulk integral is symmetric about π/2 and is done on [θmin, π/2] in
/// the variable ln θ, which resolves the steep rise of η near θmin.
pub fn converted_noise_count(
    s: &ThermalScenario,
    n_stored: f64,
    eta_of_length: impl Fn(f64) -> f64,
) -> Result<f64> {
    let theta_min = s.theta_min()?;
    let integrand = |u: f64| {
        let theta = u.exp();
        let l = 2.0 * s.radius / theta.sin();
        eta_of_length(l) * theta.sin() / 2.0 * theta
    };
    let upper = (PI / 2.0).ln();
    let scale = integrand(theta_min.ln()).abs().max(1e-300);
    let half = integrate(integrand, theta_min.ln(), upper, 1e-4 * scale * 1e-2)?;
    let bulk = 2.0 * half * n_stored;
    let cap = 2.0 * eta_of_length(s.length) * n_stored * (1.0 - theta_min.cos()) / (4.0 * PI);
    Ok(bulk + cap)
}

/// n_th at the scenario temperature, via the reference-temperature integral.
pub fn noise_count(k: &PhysicalConstants, s: &ThermalScenario) -> Result<f64> {
    let reference = ThermalScenario {
        temperature: REFERENCE_TEMPERATURE,
        ..s.clone()
    };
    let phi = thermal_flux(k, &reference)?;
    let n = stored_thermal_photons(phi, s.interaction_time);
    let n_ref = converted_noise_count(s, n, od_scaled_efficiency(s.eta_max, s.length))?;
    let ratio = mean_occupation(k, s.frequency, s.temperature)?
        / mean_occupation(k, s.frequency, REFERENCE_TEMPERATURE)?;
    Ok(n_ref * ratio)
}

/// n_th(T) = n_th(300 K) n̄(ν, T)/n̄(ν, 300 K) on a temperature grid.
pub fn noise_count_vs_temperature(
    k: &PhysicalConstants,
    s: &ThermalScenario,
    n_th_reference: f64,
    temperatures: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let n_ref = mean_occupation(k, s.frequency, REFERENCE_TEMPERATURE)?;
    temperatures
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return Err(Error::Domain(format!("temperature {t} must be positive")));
            }
            Ok((
                t,
                n_th_reference * mean_occupation(k, s.frequency, t)? / n_ref,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTemperature {
    pub kelvin: f64,
    /// The solution reached or exceeded the reference temperature.
    pub flagged: bool,
}

/// Temperature at which the thermal count equals the non-thermal floor n_st,
/// by bisection on the Bose factor.
pub fn noise_equivalent_temperature(
    k: &PhysicalConstants,
    n_th_reference: f64,
    n_st: f64,
    s: &ThermalScenario,
) -> Result<NoiseTemperature> {
    if n_st <= 0.0 {
        return Err(Error::Domain("stray noise floor must be positive".into()));
    }
    if n_th_reference <= 0.0 {
        return Err(Error::Domain("thermal count must be positive".into()));
    }
    let n_ref = mean_occupation(k, s.frequency, REFERENCE_TEMPERATURE)?;
    let target = n_st / n_th_reference * n_ref;
    if (n_st - n_th_reference).abs() <= 1e-15 * n_st {
        return Ok(NoiseTemperature {
            kelvin: REFERENCE_TEMPERATURE,
            flagged: true,
        });
    }
    let f = |t: f64| -> Result<f64> { Ok(mean_occupation(k, s.frequency, t)? - target) };
    let mut lo = 1e-6;
    let mut hi = REFERENCE_TEMPERATURE;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(
                "no noise-equivalent temperature below 1e12 K".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let kelvin = 0.5 * (lo + hi);
    Ok(NoiseTemperature {
        kelvin,
        flagged: kelvin >= REFERENCE_TEMPERATURE,
    })
}

/// Full budget of a scenario with the anchored OD-scaling η(l).
pub fn noise_budget(k: &PhysicalConstants, s: &ThermalScenario) -> Result<NoiseBudget> {
    let n_occ = mean_occupation(k, s.frequency, s.temperature)?;
    let phi = thermal_flux(k, s)?;
    let n_stored = stored_thermal_photons(phi, s.interaction_time);
    let n_th = converted_noise_count(s, n_stored, od_scaled_efficiency(s.eta_max, s.length))?;
    // Scenario temperature is the reference for T_NE.
    let n_th_ref = n_th * mean_occupation(k, s.frequency, REFERENCE_TEMPERATURE)? / n_occ;
    let t_ne = noise_equivalent_temperature(k, n_th_ref, s.stray_noise, s)?;
    Ok(NoiseBudget {
        n_occ,
        phi,
        n_stored,
        n_th,
        n_st: s.stray_noise,
        t_ne: t_ne.kelvin,
        t_ne_linear: REFERENCE_TEMPERATURE * s.stray_noise / n_th_ref,
        t_ne_flagged: t_ne.flagged,
    })
}
