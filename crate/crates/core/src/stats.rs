//! Second-order correlations of the retrieved light: first-order coherence
//! from the transmission spectrum, the predicted g²(τ) of a thermal plus
//! coherent plus stray mixture, and a Monte Carlo HBT experiment.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::config::TransducerConfig;
use crate::error::{Error, Result};
use crate::spectral::detuning_response;

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsParams {
    /// FWHM of the Lorentzian |S(δ)|² (Hz).
    pub spectrum_fwhm: f64,
    pub pulses: u64,
    pub seed: u64,
    /// Detection window per pulse (s).
    pub window: f64,
    /// Coincidence histogram resolution (s).
    pub tau_bin: f64,
}

impl Default for StatisticsParams {
    fn default() -> Self {
        StatisticsParams {
            spectrum_fwhm: 2.1e6,
            pulses: 1_000_000,
            seed: 20240607,
            window: 1e-6,
            tau_bin: 1e-9,
        }
    }
}

/// |S(δ)|² on a uniform detuning grid (rad/s), peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub delta_grid: Vec<f64>,
    pub s2: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(delta_grid: Vec<f64>, s2: Vec<f64>) -> Result<Self> {
        if delta_grid.len() != s2.len() || delta_grid.len() < 4 {
            return Err(Error::Domain(
                "spectral density needs matching grids of at least four points".into(),
            ));
        }
        if s2.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "spectral density must be finite and non-negative".into(),
            ));
        }
        let peak = s2.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::Domain("spectral density vanishes".into()));
        }
        let d = delta_grid[1] - delta_grid[0];
        if d <= 0.0
            || delta_grid
                .windows(2)
                .any(|w| ((w[1] - w[0]) / d - 1.0).abs() > 1e-6)
        {
            return Err(Error::Domain(
                "detuning grid must be uniform and increasing".into(),
            ));
        }
        Ok(SpectralDensity {
            delta_grid,
            s2: s2.into_iter().map(|v| v / peak).collect(),
        })
    }

    /// Lorentzian of angular FWHM `gamma`, sampled on `points` nodes over
    /// ±`half_span` FWHMs.
    pub fn lorentzian(gamma: f64, points: usize, half_span: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Domain("linewidth must be positive".into()));
        }
        let x = half_span * gamma;
        let grid: Vec<f64> = (0..points)
            .map(|k| -x + 2.0 * x * k as f64 / (points - 1) as f64)
            .collect();
        let s2 = grid
            .iter()
            .map(|d| 1.0 / (1.0 + 4.0 * d * d / (gamma * gamma)))
            .collect();
        Self::new(grid, s2)
    }

    /// Transmission of the configured medium versus microwave detuning.
    pub fn from_response(cfg: &TransducerConfig, points: usize, half_span: f64) -> Result<Self> {
        let grid: Vec<f64> = (0..points)
            .map(|k| -half_span + 2.0 * half_span * k as f64 / (points - 1) as f64)
            .collect();
        let s2 = grid
            .iter()
            .map(|&d| detuning_response(d, cfg))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, s2)
    }

    pub fn spacing(&self) -> f64 {
        self.delta_grid[1] - self.delta_grid[0]
    }
}

/// g¹(τ) sampled on τ ≥ 0; negative lags follow from g¹(−τ) = g¹(τ)*.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceFunction {
    pub tau: Vec<f64>,
    pub g1: Vec<Complex64>,
    /// The spectrum had not decayed to 1% of its peak at the grid edges.
    pub leakage: bool,
}

impl CoherenceFunction {
    /// e^{−|τ|/τ_c} on [0, t_max].
    pub fn exponential(tau_c: f64, t_max: f64, points: usize) -> Result<Self> {
        if tau_c <= 0.0 {
            return Err(Error::Domain("coherence time must be positive".into()));
        }
        let tau: Vec<f64> = (0..points)
            .map(|k| t_max * k as f64 / (points - 1) as f64)
            .collect();
        let g1 = tau
            .iter()
            .map(|t| Complex64::new((-t / tau_c).exp(), 0.0))
            .collect();
        Ok(CoherenceFunction {
            tau,
            g1,
            leakage: false,
        })
    }

    /// Linear interpolation; zero beyond the sampled range.
    pub fn at(&self, tau: f64) -> Complex64 {
        let t = tau.abs();
        let last = *self.tau.last().unwrap_or(&0.0);
        if t > last || self.tau.len() < 2 {
            return if t == 0.0 && !self.g1.is_empty() {
                self.g1[0]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let dt = self.tau[1] - self.tau[0];
        let i = ((t / dt) as usize).min(self.tau.len() - 2);
        let f = (t - self.tau[i]) / dt;
        let v = self.g1[i] * (1.0 - f) + self.g1[i + 1] * f;
        if tau < 0.0 {
            v.conj()
        } else {
            v
        }
    }

    /// First lag at which |g¹| falls to 1/e.
    pub fn coherence_time(&self) -> Option<f64> {
        let target = (-1.0f64).exp();
        for i in 1..self.tau.len() {
            let (a, b) = (self.g1[i - 1].norm(), self.g1[i].norm());
            if b <= target {
                let f = (a - target) / (a - b);
                return Some(self.tau[i - 1] + f * (self.tau[i] - self.tau[i - 1]));
            }
        }
        None
    }
}

/// Wiener-Khinchin: g¹(τ) = (1/2π)∫|S(δ)|² e^{−iδτ}dδ / (same at τ = 0).
/// The spectrum is zero-padded by `padding` (≥ 1) before the FFT, which
/// sets the lag resolution 2π/(padding·N·dδ).
pub fn g1_from_spectrum(s: &SpectralDensity, padding: usize) -> Result<CoherenceFunction> {
    let n = s.s2.len();
    let m = n * padding.max(1);
    let dd = s.spacing();
    let mut buf: Vec<Complex64> = s.s2.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let d0 = s.delta_grid[0];
    let dtau = 2.0 * PI / (m as f64 * dd);
    let half = m / 2;
    let tau: Vec<f64> = (0..half).map(|k| k as f64 * dtau).collect();
    let raw: Vec<Complex64> = (0..half)
        .map(|k| buf[k] * Complex64::from_polar(1.0, -d0 * tau[k]))
        .collect();
    let norm = raw[0];
    if norm.norm() == 0.0 {
        return Err(Error::Domain("spectral density integrates to zero".into()));
    }
    let edge = s.s2[0].max(s.s2[n - 1]);
    Ok(CoherenceFunction {
        tau,
        g1: raw.into_iter().map(|v| v / norm).collect(),
        leakage: edge > 0.01,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Inputs {
    pub n_th: f64,
    pub n_st: f64,
    pub n_bar: f64,
    pub eta: f64,
    pub g1: CoherenceFunction,
}

impl G2Inputs {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_th", self.n_th),
            ("n_st", self.n_st),
            ("n_bar", self.n_bar),
            ("eta", self.eta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        if self.g1.g1.is_empty() || (self.g1.g1[0] - 1.0).norm() > 1e-9 {
            return Err(Error::Domain("g1(0) must equal 1".into()));
        }
        if self.g1.g1.iter().any(|v| v.norm() > 1.0 + 1e-9) {
            return Err(Error::Domain("|g1| exceeds 1".into()));
        }
        Ok(())
    }

    fn coherent(&self) -> f64 {
        self.eta * self.n_bar
    }
}

/// g²(τ) = 1 + (|n_th g¹(τ) + ηN̄|² − η²N̄²)/(n_th + n_st + ηN̄)².
pub fn g2_predicted(tau: f64, inputs: &G2Inputs) -> Result<f64> {
    let c = inputs.coherent();
    let den = inputs.n_th + inputs.n_st + c;
    if den <= 0.0 {
        return Err(Error::Domain("no light: n_th + n_st + ηN̄ = 0".into()));
    }
    let num = (inputs.n_th * inputs.g1.at(tau) + c).norm_sqr() - c * c;
    Ok(1.0 + num / (den * den))
}

/// 1 + (g²(0) − 1) e^{−|τ|/τ_coh}.
pub fn exponential_g2_model(tau: f64, g2_0: f64, tau_coh: f64) -> f64 {
    1.0 + (g2_0 - 1.0) * (-tau.abs() / tau_coh).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtParams {
    pub pulses: u64,
    pub seed: u64,
    pub window: f64,
    pub tau_bin: f64,
    /// Fine bins per reported bin; made odd so the central bin is centred on zero.
    pub rebin: usize,
    /// Resolution of the simulated thermal field.
    pub field_step: f64,
    pub max_lag: f64,
    pub shard_size: u64,
}

impl HbtParams {
    pub fn from_statistics(p: &StatisticsParams) -> Self {
        HbtParams {
            pulses: p.pulses,
            seed: p.seed,
            window: p.window,
            tau_bin: p.tau_bin,
            rebin: 25,
            field_step: 5e-9,
            max_lag: p.window / 2.0,
            shard_size: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbtHistogram {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub err: Vec<f64>,
    pub coincidences: Vec<u64>,
    /// Prediction averaged over each reported bin with the pair-density weight.
    pub analytic: Vec<f64>,
    pub mean_counts_a: f64,
    pub mean_counts_b: f64,
    pub coherence_time: f64,
    pub pulses: u64,
    pub seed: u64,
}

impl HbtHistogram {
    /// Largest |g2_mc − g2_analytic|/σ over bins with at least `min_counts`
    /// coincidences.
    pub fn max_deviation(&self, min_counts: u64) -> f64 {
        (0..self.tau.len())
            .filter(|&i| self.coincidences[i] >= min_counts)
            .map(|i| (self.g2[i] - self.analytic[i]).abs() / self.err[i])
            .fold(0.0, f64::max)
    }
}

struct Shard {
    hist: Vec<u64>,
    counts_a: u64,
    counts_b: u64,
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

/// Detection times of one detector given the cumulative cell means.
fn arrivals(rng: &mut ChaCha8Rng, cumulative: &[f64], step: f64, n: u64, out: &mut Vec<f64>) {
    out.clear();
    let total = *cumulative.last().unwrap();
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let cell = cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1);
        out.push((cell as f64 + rng.random::<f64>()) * step);
    }
}

/// HBT experiment on the mixture. The thermal part is a Cox process whose
/// complex amplitude is an Ornstein-Uhlenbeck process with correlation
/// e^{−|τ|/τ_c}, τ_c the 1/e time of g¹; the coherent amplitude adds at the
/// field level and stray light is uniform Poisson. Each detection goes to
/// either detector with probability 1/2. Shards of `shard_size` pulses use
/// ChaCha stream `shard` of `seed`, so results do not depend on threads.
pub fn hbt_monte_carlo(inputs: &G2Inputs, p: &HbtParams) -> Result<HbtHistogram> {
    inputs.validate()?;
    if p.pulses < 10_000 {
        return Err(Error::Domain(format!(
            "{} pulses; at least 10^4 are needed",
            p.pulses
        )));
    }
    if !(p.window > 0.0 && p.tau_bin > 0.0 && p.field_step > 0.0 && p.max_lag > 0.0) {
        return Err(Error::Domain(
            "window, bins and lag range must be positive".into(),
        ));
    }
    let tau_c = inputs
        .g1
        .coherence_time()
        .ok_or_else(|| Error::Domain("g1 does not decay to 1/e on its grid".into()))?;
    let rebin = p.rebin.max(1) | 1;
    let coarse_side = (p.max_lag / (p.tau_bin * rebin as f64)).floor() as usize;
    let half = coarse_side * rebin + rebin / 2;
    let nfine = 2 * half + 1;
    let cells = (p.window / p.field_step).round().max(1.0) as usize;
    let step = p.window / cells as f64;
    let rho = (-step / tau_c).exp();
    let kick = (1.0 - rho * rho).sqrt();
    let sigma = (inputs.n_th * step / p.window).sqrt();
    let alpha = (inputs.coherent() * step / p.window).sqrt();
    let stray = inputs.n_st * step / p.window;

    let shards = p.pulses.div_ceil(p.shard_size.max(1));
    let run = |shard: u64| -> Shard {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(shard);
        let n = p.shard_size.min(p.pulses - shard * p.shard_size);
        let mut hist = vec![0u64; nfine];
        let (mut counts_a, mut counts_b) = (0, 0);
        let mut cumulative = vec![0.0; cells];
        let (mut ta, mut tb) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let mut e = complex_normal(&mut rng) * sigma;
            let mut acc = 0.0;
            for c in cumulative.iter_mut() {
                acc += (e + alpha).norm_sqr() + stray;
                *c = acc;
                e = e * rho + complex_normal(&mut rng) * (sigma * kick);
            }
            let na = poisson(&mut rng, acc / 2.0);
            let nb = poisson(&mut rng, acc / 2.0);
            counts_a += na;
            counts_b += nb;
            if na == 0 || nb == 0 {
                continue;
            }
            arrivals(&mut rng, &cumulative, step, na, &mut ta);
            arrivals(&mut rng, &cumulative, step, nb, &mut tb);
            for &a in &ta {
                for &b in &tb {
                    let k = ((b - a) / p.tau_bin).round();
                    if k.abs() <= half as f64 {
                        hist[(k as i64 + half as i64) as usize] += 1;
                    }
                }
            }
        }
        Shard {
            hist,
            counts_a,
            counts_b,
        }
    };
    let results: Vec<Shard> = (0..shards).into_par_iter().map(run).collect();

    let mut fine = vec![0u64; nfine];
    let (mut ca, mut cb) = (0u64, 0u64);
    for s in &results {
        for (f, h) in fine.iter_mut().zip(&s.hist) {
            *f += h;
        }
        ca += s.counts_a;
        cb += s.counts_b;
    }
    let pulses = p.pulses as f64;
    let mean_a = ca as f64 / pulses;
    let mean_b = cb as f64 / pulses;
    let rate = mean_a * mean_b / (p.window * p.window);

    let ncoarse = 2 * coarse_side + 1;
    let mut out = HbtHistogram {
        tau: Vec::with_capacity(ncoarse),
        g2: Vec::with_capacity(ncoarse),
        err: Vec::with_capacity(ncoarse),
        coincidences: Vec::with_capacity(ncoarse),
        analytic: Vec::with_capacity(ncoarse),
        mean_counts_a: mean_a,
        mean_counts_b: mean_b,
        coherence_time: tau_c,
        pulses: p.pulses,
        seed: p.seed,
    };
    for j in 0..ncoarse {
        let lo = j * rebin;
        let mut count = 0u64;
        let mut expected = 0.0;
        let mut weighted = 0.0;
        for (i, &c) in fine.iter().enumerate().skip(lo).take(rebin) {
            let tau = (i as f64 - half as f64) * p.tau_bin;
            // Pair density of uncorrelated light at this lag.
            let w = (p.window - tau.abs()).max(0.0) * p.tau_bin;
            count += c;
            expected += w;
            weighted += w * g2_predicted(tau, inputs)?;
        }
        let uncorrelated = pulses * rate * expected;
        out.tau
            .push((lo as f64 + (rebin / 2) as f64 - half as f64) * p.tau_bin);
        out.coincidences.push(count);
        out.analytic.push(if expected > 0.0 {
            weighted / expected
        } else {
            f64::NAN
        });
        if uncorrelated > 0.0 {
            out.g2.push(count as f64 / uncorrelated);
            out.err.push((count.max(1) as f64).sqrt() / uncorrelated);
        } else {
            out.g2.push(f64::NAN);
            out.err.push(f64::NAN);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TWO_PI;

    fn inputs(n_th: f64, n_st: f64, coherent: f64, tau_c: f64) -> G2Inputs {
        G2Inputs {
            n_th,
            n_st,
            n_bar: coherent,
            eta: 1.0,
            g1: CoherenceFunction::exponential(tau_c, 20.0 * tau_c, 4001).unwrap(),
        }
    }

    #[test]
    fn lorentzian_coherence() {
        let gamma = TWO_PI * 2.1e6;
        let s = SpectralDensity::lorentzian(gamma, 1 << 16, 400.0).unwrap();
        let g = g1_from_spectrum(&s, 4).unwrap();
        assert!(!g.leakage);
        assert!((g.g1[0] - 1.0).norm() < 1e-12);
        let tau_c = 2.0 / gamma;
        for &t in g.tau.iter().filter(|&&t| t <= 5.0 * tau_c) {
            let want = (-gamma * t / 2.0).exp();
            assert!(
                (g.at(t).norm() - want).abs() < 0.01,
                "{t} {}",
                g.at(t).norm()
            );
        }
        let tc = g.coherence_time().unwrap();
        assert!((tc / tau_c - 1.0).abs() < 0.01, "{tc}");
    }

    #[test]
    fn narrow_spectrum_is_monochromatic() {
        // Unit-width Gaussian line: g¹ stays near 1 for τ ≪ 1.
        let grid: Vec<f64> = (0..4096)
            .map(|k| -20.0 + 40.0 * k as f64 / 4095.0)
            .collect();
        let s2 = grid.iter().map(|d| (-d * d / 2.0).exp()).collect();
        let g = g1_from_spectrum(&SpectralDensity::new(grid, s2).unwrap(), 8).unwrap();
        assert!(!g.leakage);
        for (t, v) in g.tau.iter().zip(&g.g1).filter(|(t, _)| **t <= 0.1) {
            assert!((v.norm() - (-t * t / 2.0f64).exp()).abs() < 1e-6);
            assert!(v.norm() > 0.99);
        }
        // A grid that truncates the line is flagged.
        let s = SpectralDensity::lorentzian(1.0, 4096, 0.01).unwrap();
        assert!(g1_from_spectrum(&s, 1).unwrap().leakage);
    }

    #[test]
    fn g2_at_quoted_noise() {
        let i = inputs(0.109, 0.01, 0.0, 150e-9);
        let g = g2_predicted(0.0, &i).unwrap();
        assert!((g - (1.0 + (0.109f64 / 0.119).powi(2))).abs() < 1e-12);
        assert!((g - 1.84).abs() < 0.01);
        assert!(g2_predicted(1.0, &i).unwrap() == 1.0);
        assert!(g2_predicted(0.0, &inputs(0.0, 0.0, 0.0, 1.0)).is_err());
        let strong = g2_predicted(0.0, &inputs(0.109, 0.01, 1e4, 150e-9)).unwrap();
        assert!((strong - 1.0).abs() < 1e-3);
    }

    #[test]
    fn scaling_invariance_only_without_coherent_light() {
        let a = g2_predicted(50e-9, &inputs(0.1, 0.02, 0.0, 150e-9)).unwrap();
        let b = g2_predicted(50e-9, &inputs(0.3, 0.06, 0.0, 150e-9)).unwrap();
        assert!((a - b).abs() < 1e-12);
        // Scaling the noise at fixed coherent input changes g²; scaling all
        // three counts together never does.
        let a = g2_predicted(50e-9, &inputs(0.1, 0.02, 0.1, 150e-9)).unwrap();
        let b = g2_predicted(50e-9, &inputs(0.3, 0.06, 0.1, 150e-9)).unwrap();
        assert!((a - b).abs() > 1e-3);
        let c = g2_predicted(50e-9, &inputs(0.3, 0.06, 0.3, 150e-9)).unwrap();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn exponential_model() {
        assert_eq!(exponential_g2_model(0.0, 1.8, 0.82e-6), 1.8);
        assert!((exponential_g2_model(1.0, 1.8, 0.82e-6) - 1.0).abs() < 1e-12);
        let v = exponential_g2_model(0.82e-6, 1.8, 0.82e-6);
        assert!((v - (1.0 + 0.8 / std::f64::consts::E)).abs() < 1e-12);
        assert!((v - 1.294).abs() < 1e-3);
    }

    fn small_run(i: &G2Inputs, pulses: u64, seed: u64) -> HbtHistogram {
        let mut p = HbtParams::from_statistics(&StatisticsParams::default());
        p.pulses = pulses;
        p.seed = seed;
        p.field_step = 20e-9;
        hbt_monte_carlo(i, &p).unwrap()
    }

    #[test]
    fn poisson_light_is_uncorrelated() {
        let h = small_run(&inputs(0.0, 0.5, 0.5, 150e-9), 20_000, 1);
        let c = h.tau.len() / 2;
        assert_eq!(h.tau[c], 0.0);
        assert!((h.g2[c] - 1.0).abs() < 3.0 * h.err[c]);
        assert!(h.max_deviation(20) < 4.5);
    }

    #[test]
    fn single_mode_thermal_bunches() {
        // Coherence far longer than the window: one thermal mode per pulse.
        let h = small_run(&inputs(1.0, 0.0, 0.0, 1e-3), 20_000, 2);
        let c = h.tau.len() / 2;
        assert!(
            (h.g2[c] - 2.0).abs() < 3.0 * h.err[c],
            "{} ± {}",
            h.g2[c],
            h.err[c]
        );
    }

    #[test]
    fn monte_carlo_is_deterministic_and_seed_sensitive() {
        let i = inputs(0.5, 0.05, 0.0, 150e-9);
        let a = small_run(&i, 10_000, 7);
        let b = small_run(&i, 10_000, 7);
        let c = small_run(&i, 10_000, 8);
        assert_eq!(a, b);
        assert_ne!(a.coincidences, c.coincidences);
    }

    #[test]
    fn monte_carlo_is_unbiased_over_seeds() {
        let i = inputs(1.0, 0.1, 0.0, 150e-9);
        let runs: Vec<HbtHistogram> = (0..20).map(|s| small_run(&i, 10_000, 100 + s)).collect();
        let c = runs[0].tau.len() / 2;
        let mean = runs.iter().map(|h| h.g2[c]).sum::<f64>() / 20.0;
        let err = (runs.iter().map(|h| h.err[c].powi(2)).sum::<f64>()).sqrt() / 20.0;
        assert!(
            (mean - runs[0].analytic[c]).abs() < 3.0 * err,
            "{mean} vs {}",
            runs[0].analytic[c]
        );
    }

    #[test]
    fn too_few_pulses_rejected() {
        let mut p = HbtParams::from_statistics(&StatisticsParams::default());
        p.pulses = 100;
        assert!(hbt_monte_carlo(&inputs(0.1, 0.01, 0.0, 1e-7), &p).is_err());
    }
}
