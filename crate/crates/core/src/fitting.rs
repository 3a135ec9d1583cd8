//! Weighted nonlinear least squares (Levenberg-Marquardt) and the model
//! catalog used for storage-time, spectral, photon-number and calibration
//! fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fit models with analytic Jacobians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    /// A exp(−τ²/τ_coh²)
    GaussianDecay,
    /// A exp(−τ/τ_D)
    ExponentialDecay,
    /// A / (1 + 4(x − x0)²/w²), w the FWHM
    Lorentzian,
    /// 1 − β/d
    OdScaling,
    /// η0 exp(−2√N γ0 t_d) with t_d fixed
    PhotonNumber { t_d: f64 },
    /// a exp(−(U − U0)²/(2s²))
    MixerGaussian,
    /// I_in exp(−d0/(1 + 4ω²/Γ2²)) with I_in and Γ2 fixed
    TwoLevel { i_in: f64, gamma2: f64 },
    /// 1 + (g0 − 1) exp(−|τ|/τ_coh)
    G2Exponential,
}

impl FitModel {
    pub fn catalog() -> Vec<(&'static str, FitModel)> {
        vec![
            ("gaussian_decay", FitModel::GaussianDecay),
            ("exponential_decay", FitModel::ExponentialDecay),
            ("lorentzian", FitModel::Lorentzian),
            ("od_scaling", FitModel::OdScaling),
            ("photon_number", FitModel::PhotonNumber { t_d: 623e-9 }),
            ("mixer_gaussian", FitModel::MixerGaussian),
            (
                "two_level",
                FitModel::TwoLevel {
                    i_in: 1.0,
                    gamma2: crate::constants::angular(6.0e6),
                },
            ),
            ("g2_exponential", FitModel::G2Exponential),
        ]
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::GaussianDecay => &["amplitude", "tau_coh"],
            FitModel::ExponentialDecay => &["amplitude", "tau_d"],
            FitModel::Lorentzian => &["amplitude", "center", "fwhm"],
            FitModel::OdScaling => &["beta"],
            FitModel::PhotonNumber { .. } => &["eta0", "gamma0"],
            FitModel::MixerGaussian => &["amplitude", "center", "width"],
            FitModel::TwoLevel { .. } => &["d0"],
            FitModel::G2Exponential => &["g2_0", "tau_coh"],
        }
    }

    pub fn value(&self, x: f64, p: &[f64]) -> f64 {
        match *self {
            FitModel::GaussianDecay => p[0] * (-(x / p[1]).powi(2)).exp(),
            FitModel::ExponentialDecay => p[0] * (-x / p[1]).exp(),
            FitModel::Lorentzian => p[0] / (1.0 + 4.0 * ((x - p[1]) / p[2]).powi(2)),
            FitModel::OdScaling => 1.0 - p[0] / x,
            FitModel::PhotonNumber { t_d } => p[0] * (-2.0 * x.sqrt() * p[1] * t_d).exp(),
            FitModel::MixerGaussian => p[0] * (-((x - p[1]) / p[2]).powi(2) / 2.0).exp(),
            FitModel::TwoLevel { i_in, gamma2 } => {
                i_in * (-p[0] / (1.0 + 4.0 * (x / gamma2).powi(2))).exp()
            }
            FitModel::G2Exponential => 1.0 + (p[0] - 1.0) * (-x.abs() / p[1]).exp(),
        }
    }

    /// ∂value/∂p into `out`.
    pub fn jacobian(&self, x: f64, p: &[f64], out: &mut [f64]) {
        match *self {
            FitModel::GaussianDecay => {
                let e = (-(x / p[1]).powi(2)).exp();
                out[0] = e;
                out[1] = p[0] * e * 2.0 * x * x / p[1].powi(3);
            }
            FitModel::ExponentialDecay => {
                let e = (-x / p[1]).exp();
                out[0] = e;
                out[1] = p[0] * e * x / (p[1] * p[1]);
            }
            FitModel::Lorentzian => {
                let u = (x - p[1]) / p[2];
                let d = 1.0 + 4.0 * u * u;
                out[0] = 1.0 / d;
                out[1] = p[0] * 8.0 * u / (p[2] * d * d);
                out[2] = p[0] * 8.0 * u * u / (p[2] * d * d);
            }
            FitModel::OdScaling => out[0] = -1.0 / x,
            FitModel::PhotonNumber { t_d } => {
                let k = -2.0 * x.sqrt() * t_d;
                let e = (k * p[1]).exp();
                out[0] = e;
                out[1] = p[0] * k * e;
            }
            FitModel::MixerGaussian => {
                let u = (x - p[1]) / p[2];
                let e = (-u * u / 2.0).exp();
                out[0] = e;
                out[1] = p[0] * e * u / p[2];
                out[2] = p[0] * e * u * u / p[2];
            }
            FitModel::TwoLevel { i_in, gamma2 } => {
                let l = 1.0 / (1.0 + 4.0 * (x / gamma2).powi(2));
                out[0] = -l * i_in * (-p[0] * l).exp();
            }
            FitModel::G2Exponential => {
                let e = (-x.abs() / p[1]).exp();
                out[0] = e;
                out[1] = (p[0] - 1.0) * e * x.abs() / (p[1] * p[1]);
            }
        }
    }

    /// Deterministic starting point from the data: amplitudes from the
    /// extreme sample, widths and time constants from the 1/e or half-maximum
    /// crossing, rates from a log-linear regression.
    pub fn initial_guess(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let (imax, ymax) = argmax(y);
        let first = y.first().copied().unwrap_or(1.0);
        match *self {
            FitModel::GaussianDecay | FitModel::ExponentialDecay => {
                let t = crossing(x, y, ymax / std::f64::consts::E).unwrap_or(span(x) / 2.0);
                vec![ymax, t.max(f64::MIN_POSITIVE)]
            }
            FitModel::Lorentzian => {
                let w = half_width(x, y, imax).unwrap_or(span(x) / 4.0);
                vec![ymax, x[imax], w]
            }
            FitModel::OdScaling => {
                let b = x.iter().zip(y).map(|(d, e)| d * (1.0 - e)).sum::<f64>() / x.len() as f64;
                vec![b]
            }
            FitModel::PhotonNumber { t_d } => {
                let pts: Vec<(f64, f64)> = x
                    .iter()
                    .zip(y)
                    .filter(|(_, v)| **v > 0.0)
                    .map(|(n, v)| (n.sqrt(), v.ln()))
                    .collect();
                let (slope, intercept) = linear_regression(&pts);
                vec![intercept.exp(), (-slope / (2.0 * t_d)).max(0.0)]
            }
            FitModel::MixerGaussian => {
                let w = half_width(x, y, imax).unwrap_or(span(x) / 4.0);
                vec![ymax, x[imax], w / (8.0 * std::f64::consts::LN_2).sqrt()]
            }
            FitModel::TwoLevel { i_in, .. } => {
                let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
                vec![(-(ymin.max(1e-300) / i_in).ln()).clamp(0.1, 50.0)]
            }
            FitModel::G2Exponential => {
                let i0 = x
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let g0 = y.get(i0).copied().unwrap_or(first);
                let excess: Vec<f64> = y.iter().map(|v| v - 1.0).collect();
                let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
                let mut pairs: Vec<(f64, f64)> = ax.into_iter().zip(excess).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (xs, es): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                let t =
                    crossing(&xs, &es, (g0 - 1.0) / std::f64::consts::E).unwrap_or(span(x) / 2.0);
                vec![g0, t.max(f64::MIN_POSITIVE)]
            }
        }
    }
}

fn argmax(y: &[f64]) -> (usize, f64) {
    y.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    )
}

fn span(x: &[f64]) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).max(f64::MIN_POSITIVE)
}

/// First x at which a sample sequence falls below `level`.
fn crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for i in 1..y.len() {
        if y[i - 1] >= level && y[i] < level {
            let f = (y[i - 1] - level) / (y[i - 1] - y[i]);
            return Some(x[i - 1] + f * (x[i] - x[i - 1]));
        }
    }
    None
}

fn half_width(x: &[f64], y: &[f64], imax: usize) -> Option<f64> {
    let half = y[imax] / 2.0;
    let right = (imax..y.len()).find(|&i| y[i] < half)?;
    let left = (0..=imax).rev().find(|&i| y[i] < half)?;
    Some((x[right] - x[left]).abs())
}

fn linear_regression(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, pts.first().map(|p| p.1).unwrap_or(0.0));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<&'static str>,
    pub params: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Weighted sum of squared residuals.
    pub residual_norm: f64,
    /// Largest cosine between the residual and a Jacobian column.
    pub gradient_measure: f64,
    pub converged: bool,
    pub iterations: usize,
    /// χ² after each accepted step.
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.params[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.uncertainties[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub lambda0: f64,
    /// Convergence threshold on the residual-column cosine.
    pub gradient_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            lambda0: 1e-3,
            gradient_tol: 1e-8,
        }
    }
}

fn evaluate(
    model: &FitModel,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    p: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let m = p.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, m);
    let mut row = vec![0.0; m];
    for i in 0..n {
        r[i] = (y[i] - model.value(x[i], p)) * w[i];
        model.jacobian(x[i], p, &mut row);
        for k in 0..m {
            j[(i, k)] = row[k] * w[i];
        }
    }
    (r, j)
}

fn gradient_measure(r: &DVector<f64>, j: &DMatrix<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    (0..j.ncols())
        .map(|k| {
            let c = j.column(k);
            let cn = c.norm();
            if cn == 0.0 {
                0.0
            } else {
                c.dot(r).abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes Σ((y − f(x; p))/σ)² from `init`. Without σ every point has
/// unit weight and the covariance is scaled by χ²/(n − p).
pub fn fit_nlls(
    model: &FitModel,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    let m = model.param_names().len();
    if init.len() != m {
        return Err(Error::Domain(format!(
            "model has {m} parameters, {} given",
            init.len()
        )));
    }
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
        return Err(Error::Domain("data arrays differ in length".into()));
    }
    if x.len() < m + 1 {
        return Err(Error::Underdetermined {
            points: x.len(),
            params: m,
        });
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Domain("uncertainties must be positive".into()));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; x.len()],
    };
    let mut p = DVector::from_column_slice(init);
    let (mut r, mut j) = evaluate(model, x, y, &w, p.as_slice());
    let mut chi2 = r.norm_squared();
    let mut lambda = opts.lambda0;
    let mut history = vec![chi2];
    let mut iterations = 0;
    let mut converged = gradient_measure(&r, &j) <= opts.gradient_tol;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        let mut stalled = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let (rt, jt) = evaluate(model, x, y, &w, trial.as_slice());
            let c2 = rt.norm_squared();
            if c2.is_finite() && c2 <= chi2 {
                let small = step.norm() <= 1e-14 * (p.norm() + 1e-300);
                p = trial;
                r = rt;
                j = jt;
                let gain = chi2 - c2;
                chi2 = c2;
                history.push(chi2);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                let gm = gradient_measure(&r, &j);
                if gm <= opts.gradient_tol || chi2 <= 1e-28 * x.len() as f64 {
                    converged = true;
                } else if small || gain <= 1e-15 * chi2 {
                    // No further progress at working precision.
                    converged = gm <= 1e-6;
                    stalled = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if stalled {
            break;
        }
        if !accepted {
            // Stalled: no descent direction left at working precision.
            converged = gradient_measure(&r, &j) <= opts.gradient_tol.max(1e-6);
            break;
        }
    }
    let dof = (x.len() - m) as f64;
    let scale = if sigma.is_some() { 1.0 } else { chi2 / dof };
    let jtj = j.transpose() * &j;
    let covariance = jtj
        .try_inverse()
        .map(|c| c * scale)
        .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
    Ok(FitResult {
        names: model.param_names().to_vec(),
        params: p.as_slice().to_vec(),
        uncertainties: (0..m).map(|k| covariance[(k, k)].sqrt()).collect(),
        covariance,
        residual_norm: chi2,
        gradient_measure: gradient_measure(&r, &j),
        converged,
        iterations,
        history,
    })
}

/// Fit with the model's own initial guess.
pub fn fit_auto(
    model: &FitModel,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
) -> Result<FitResult> {
    let init = model.initial_guess(x, y);
    fit_nlls(model, x, y, sigma, &init, &FitOptions::default())
}

/// Smallest τ ≥ 0 with f(τ) = level for a decreasing f, by bisection to
/// 1e-12 relative. `scale` seeds the bracket search.
pub fn threshold_crossing(f: impl Fn(f64) -> f64, level: f64, scale: f64) -> Result<f64> {
    let f0 = f(0.0);
    if f0 < level {
        return Err(Error::Domain(format!(
            "model starts at {f0}, below the threshold level {level}"
        )));
    }
    if f0 == level {
        return Ok(0.0);
    }
    let mut hi = scale.abs().max(f64::MIN_POSITIVE);
    let mut n = 0;
    while f(hi) > level {
        hi *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::Domain(
                "model never reaches the threshold level".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Storage time at which a fitted decay falls to `level` (0.5 for the
/// no-cloning limit).
pub fn no_cloning_threshold(model: &FitModel, params: &[f64], level: f64) -> Result<f64> {
    let scale = match model {
        FitModel::GaussianDecay | FitModel::ExponentialDecay | FitModel::G2Exponential => params[1],
        _ => 1.0,
    };
    threshold_crossing(|t| model.value(t, params), level, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample(model: &FitModel, p: &[f64], x: &[f64], noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        x.iter()
            .map(|&v| {
                let y = model.value(v, p);
                y * (1.0 + noise * n.sample(&mut rng))
            })
            .collect()
    }

    #[test]
    fn exact_gaussian_recovery() {
        let m = FitModel::GaussianDecay;
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.05e-6).collect();
        let y = sample(&m, &[0.82, 0.9e-6], &x, 0.0, 0);
        let r = fit_nlls(&m, &x, &y, None, &[0.6, 0.5e-6], &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.params[0] / 0.82 - 1.0).abs() < 1e-6);
        assert!((r.params[1] / 0.9e-6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn photon_number_law_with_noise() {
        let m = FitModel::PhotonNumber { t_d: 623e-9 };
        let x: Vec<f64> = (0..30)
            .map(|i| 0.1 * (1300.0f64).powf(i as f64 / 29.0))
            .collect();
        let truth = [0.88, crate::constants::angular(12.8e3)];
        let y = sample(&m, &truth, &x, 0.02, 11);
        let r = fit_auto(&m, &x, &y, None).unwrap();
        assert!(r.converged);
        for (got, want) in r.params.iter().zip(truth) {
            assert!((got / want - 1.0).abs() < 0.05, "{:?}", r.params);
        }
    }

    #[test]
    fn underdetermined_is_rejected() {
        let m = FitModel::Lorentzian;
        assert!(matches!(
            fit_nlls(
                &m,
                &[0.0, 1.0],
                &[1.0, 0.5],
                None,
                &[1.0, 0.0, 1.0],
                &FitOptions::default()
            ),
            Err(Error::Underdetermined {
                points: 2,
                params: 3
            })
        ));
    }

    #[test]
    fn residual_history_is_monotone() {
        let m = FitModel::Lorentzian;
        let x: Vec<f64> = (0..101).map(|i| -5.0 + i as f64 * 0.1).collect();
        let y = sample(&m, &[1.0, 0.3, 2.1], &x, 0.02, 3);
        let r = fit_nlls(&m, &x, &y, None, &[0.5, -1.0, 5.0], &FitOptions::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.converged);
        assert!(r.gradient_measure <= 1e-6);
    }

    #[test]
    fn catalog_values() {
        let g = FitModel::GaussianDecay;
        assert!((g.value(2.0, &[3.0, 2.0]) - 3.0 / std::f64::consts::E).abs() < 1e-15);
        let l = FitModel::Lorentzian;
        assert!((l.value(1.5, &[2.0, 0.5, 2.0]) - 1.0).abs() < 1e-15);
        let t = FitModel::TwoLevel {
            i_in: 1.0,
            gamma2: 1.0,
        };
        assert!(t.value(0.0, &[140.0]) < 1e-60);
        assert_eq!(t.value(0.3, &[0.0]), 1.0);
    }

    #[test]
    fn thresholds() {
        let t = no_cloning_threshold(&FitModel::GaussianDecay, &[0.82, 0.9e-6], 0.5).unwrap();
        assert!((t - 0.9e-6 * (0.82f64 / 0.5).ln().sqrt()).abs() < 1e-16);
        assert!((t - 0.633e-6).abs() < 1e-9);
        let t = no_cloning_threshold(&FitModel::ExponentialDecay, &[0.93, 2e-6], 0.5).unwrap();
        assert!((t - 2e-6 * 1.86f64.ln()).abs() < 1e-16);
        let t = no_cloning_threshold(&FitModel::GaussianDecay, &[0.82, 0.9e-6], 0.82).unwrap();
        assert_eq!(t, 0.0);
        assert!(no_cloning_threshold(&FitModel::GaussianDecay, &[0.4, 0.9e-6], 0.5).is_err());
    }

    fn check_jacobian(m: FitModel, x: f64, p: &[f64]) -> std::result::Result<(), TestCaseError> {
        let mut j = vec![0.0; p.len()];
        m.jacobian(x, p, &mut j);
        for k in 0..p.len() {
            let h = 1e-5 * p[k].abs().max(1e-300);
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[k] += h;
            b[k] -= h;
            let fd = (m.value(x, &a) - m.value(x, &b)) / (2.0 * h);
            let scale = j[k].abs().max(m.value(x, p).abs() / p[k].abs()).max(1e-300);
            prop_assert!(
                (fd - j[k]).abs() <= 1e-6 * scale,
                "{m:?} k={k} fd={fd} an={}",
                j[k]
            );
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn jacobians_match_finite_differences(
            u in 0.05f64..3.0, a in 0.2f64..2.0, b in 0.3f64..3.0, c in -1.0f64..1.0
        ) {
            check_jacobian(FitModel::GaussianDecay, u * 1e-6, &[a, b * 1e-6])?;
            check_jacobian(FitModel::ExponentialDecay, u * 1e-6, &[a, b * 1e-6])?;
            check_jacobian(FitModel::Lorentzian, c * 3.0, &[a, c, b])?;
            check_jacobian(FitModel::OdScaling, u * 1e6, &[b * 8e4])?;
            check_jacobian(FitModel::PhotonNumber { t_d: 623e-9 }, u * 40.0, &[a, b * 8e4])?;
            check_jacobian(FitModel::MixerGaussian, u * 0.1, &[a, 0.2, b * 0.05])?;
            check_jacobian(FitModel::TwoLevel { i_in: 1.0, gamma2: 3.7e7 }, c * 2e8, &[b * 40.0])?;
            check_jacobian(FitModel::G2Exponential, c * 1e-6, &[1.0 + a, b * 1e-6])?;
        }
    }
}
