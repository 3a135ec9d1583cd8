//! Bundled reproductions: each experiment turns a configuration into CSV
//! tables plus a summary of engine values against reference values.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::calibration::{
    density_and_cross_section, intensity, intensity_efficiency_equivalence, partial_od,
    peak_rabi_for_photon_number, DetectionEfficiency, GeometryInputs, TransitionData,
};
use crate::config::{RawConfig, TransducerConfig, PAPER_FIG2A, PAPER_FIG3};
use crate::constants::{angular, per_two_pi};
use crate::cpt::cpt_zero_order;
use crate::dephasing::{dephasing_budget, motional_coherence, C6Convention, Rho33Source};
use crate::error::{Error, Result};
use crate::fitting::{
    fit_auto, fit_nlls, no_cloning_threshold, threshold_crossing, FitModel, FitOptions,
};
use crate::solver::{simulate_full_transduction, simulate_storage, ControlSchedule};
use crate::spectral::{
    closed_form_waveform, detuning_response, numeric_waveform, photon_number_efficiency,
    relative_l2, transmission_efficiency,
};
use crate::stats::{
    exponential_g2_model, g1_from_spectrum, g2_predicted, hbt_monte_carlo, G2Inputs, HbtParams,
    SpectralDensity,
};
use crate::thermal::{
    integrate, mean_occupation, noise_budget, noise_count, noise_count_vs_temperature,
    od_scaled_efficiency, stored_thermal_photons, thermal_flux_narrowband, ThermalScenario,
};

pub const EXPERIMENTS: [&str; 9] = [
    "fig2a",
    "fig2c",
    "fig3a",
    "fig3b",
    "fig3c",
    "fig3d",
    "s3b",
    "s3c",
    "noise_budget",
];

/// Acceptance rule of a summary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Check {
    Abs(f64),
    Rel(f64),
    /// Within a multiplicative factor of the reference.
    Factor(f64),
    Range(f64, f64),
    Below(f64),
    Report,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Check::Abs(t) => write!(f, "±{t}"),
            Check::Rel(t) => write!(f, "±{}%", t * 100.0),
            Check::Factor(t) => write!(f, "×{t}"),
            Check::Range(a, b) => write!(f, "[{a}, {b}]"),
            Check::Below(t) => write!(f, "<{t}"),
            Check::Report => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub engine: f64,
    pub reference: Option<f64>,
    pub check: Check,
}

impl SummaryRow {
    fn new(name: &str, engine: f64, reference: Option<f64>, check: Check) -> Self {
        SummaryRow {
            name: name.to_string(),
            engine,
            reference,
            check,
        }
    }

    /// `None` for report-only rows.
    pub fn passed(&self) -> Option<bool> {
        let x = self.engine;
        let r = self.reference.unwrap_or(0.0);
        let ok = match self.check {
            Check::Report => return None,
            Check::Abs(t) => (x - r).abs() <= t,
            Check::Rel(t) => (x - r).abs() <= t * r.abs(),
            Check::Factor(t) => x > 0.0 && r > 0.0 && (x / r).max(r / x) <= t,
            Check::Range(a, b) => (a..=b).contains(&x),
            Check::Below(t) => x < t,
        };
        Some(ok && x.is_finite())
    }

    fn status(&self) -> &'static str {
        match self.passed() {
            None => "report",
            Some(true) => "pass",
            Some(false) => "fail",
        }
    }
}

/// One CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    fn push_text(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub name: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    fn new(name: &str, seed: u64) -> Self {
        ExperimentOutput {
            name: name.to_string(),
            seed,
            tables: Vec::new(),
            summary: Vec::new(),
        }
    }

    fn row(&mut self, name: &str, engine: f64, reference: Option<f64>, check: Check) {
        self.summary
            .push(SummaryRow::new(name, engine, reference, check));
    }

    /// No summary row failed.
    pub fn passed(&self) -> bool {
        self.summary.iter().all(|r| r.passed() != Some(false))
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(
            "summary",
            &["name", "engine_value", "paper_value", "tolerance", "pass"],
        );
        for r in &self.summary {
            t.push_text(vec![
                r.name.clone(),
                r.engine.to_string(),
                r.reference.map(|v| v.to_string()).unwrap_or_default(),
                r.check.to_string(),
                r.status().to_string(),
            ]);
        }
        t
    }

    /// Writes every table, `summary.csv` and a `metadata.json` sidecar
    /// holding everything that is not reproducible.
    pub fn write(&self, dir: &Path, config_source: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for t in &self.tables {
            t.write(&dir.join(format!("{}.csv", t.name)))?;
        }
        self.summary_table().write(&dir.join("summary.csv"))?;
        write_metadata(dir, &self.name, self.seed, config_source)
    }
}

fn write_metadata(dir: &Path, name: &str, seed: u64, config_source: &str) -> Result<()> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "experiment": name,
        "seed": seed,
        "config": config_source,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "timestamp_unix": timestamp,
    });
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })
}

fn check_name(name: &str) -> Result<()> {
    if EXPERIMENTS.contains(&name) {
        Ok(())
    } else {
        Err(Error::UnknownExperiment {
            name: name.to_string(),
            valid: EXPERIMENTS.join(", "),
        })
    }
}

/// Text of the bundled preset an experiment runs on by default.
pub fn default_config_text(name: &str) -> Result<&'static str> {
    check_name(name)?;
    Ok(if name.starts_with("fig3") {
        PAPER_FIG3
    } else {
        PAPER_FIG2A
    })
}

pub fn run_experiment(name: &str, cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    check_name(name)?;
    match name {
        "fig2a" => fig2a(cfg),
        "fig2c" => fig2c(cfg),
        "fig3a" => fig3a(cfg),
        "fig3b" => fig3b(cfg),
        "fig3c" => fig3c(cfg),
        "fig3d" => fig3d(cfg),
        "s3b" => s3b(cfg),
        "s3c" => s3c(cfg),
        "noise_budget" => noise_budget_experiment(cfg),
        _ => unreachable!("name checked above"),
    }
}

/// `lin:a:b:n`, `log:a:b:n` or a comma-separated list. An empty string is
/// an empty grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let bad = |m: &str| Error::Usage(format!("grid `{spec}`: {m}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("`{s}` is not a number")))
    };
    if let Some(kind @ ("lin" | "log")) = spec.split(':').next() {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 4 {
            return Err(bad("expected kind:start:stop:count"));
        }
        let (a, b) = (num(parts[1])?, num(parts[2])?);
        let n: usize = parts[3]
            .trim()
            .parse()
            .map_err(|_| bad("count must be a non-negative integer"))?;
        if kind == "log" && !(a > 0.0 && b > 0.0) {
            return Err(bad("log grid bounds must be positive"));
        }
        let at = |i: usize| {
            if n == 1 {
                0.0
            } else {
                i as f64 / (n - 1) as f64
            }
        };
        return Ok((0..n)
            .map(|i| match kind {
                "lin" => a + (b - a) * at(i),
                _ => (a.ln() + (b.ln() - a.ln()) * at(i)).exp(),
            })
            .collect());
    }
    spec.split(',').map(num).collect()
}

/// Runs `name` at every grid value of `axis` (a `section.key` numeric config
/// field in the file's unit). Columns are the axis and each summary row's
/// engine value; row order follows the grid.
pub fn sweep(
    name: &str,
    base: &RawConfig,
    axis: &str,
    grid: &[f64],
    seed: Option<u64>,
) -> Result<Table> {
    check_name(name)?;
    base.clone()
        .set_numeric(axis, grid.first().copied().unwrap_or(1.0))?;
    let build = |value: Option<f64>| -> Result<TransducerConfig> {
        let mut raw = base.clone();
        if let Some(v) = value {
            raw.set_numeric(axis, v)?;
        }
        let mut cfg = raw.build()?;
        if let Some(s) = seed {
            cfg.statistics.seed = s;
        }
        Ok(cfg)
    };
    let outputs: Vec<ExperimentOutput> = if grid.is_empty() {
        Vec::new()
    } else {
        grid.par_iter()
            .map(|&v| run_experiment(name, &build(Some(v))?))
            .collect::<Result<_>>()?
    };
    let names: Vec<String> = match outputs.first() {
        Some(o) => o.summary.iter().map(|r| r.name.clone()).collect(),
        None => run_experiment(name, &build(None)?)?
            .summary
            .into_iter()
            .map(|r| r.name)
            .collect(),
    };
    let mut header = vec![axis.to_string()];
    header.extend(names);
    let mut t = Table {
        name: format!("sweep_{name}"),
        header,
        rows: Vec::new(),
    };
    for (v, o) in grid.iter().zip(&outputs) {
        let mut row = vec![v.to_string()];
        row.extend(o.summary.iter().map(|r| r.engine.to_string()));
        t.push_text(row);
    }
    Ok(t)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

fn peak_time(times: &[f64], y: &[f64]) -> f64 {
    let i = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    times[i]
}

fn fig2a(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig2a", cfg.statistics.seed);
    let k = &cfg.constants;
    let chain = transmission_efficiency(cfg)?;

    let schedule = ControlSchedule::constant_write(cfg);
    let storage = simulate_storage(cfg, &schedule)?;
    let times = &storage.times;
    let solver: Vec<f64> = storage.output.iter().map(|z| z.norm()).collect();
    let input: Vec<f64> = storage.input.iter().map(|z| z.norm()).collect();
    let closed = closed_form_waveform(&cfg.pulse, cfg, times)?;
    let numeric: Vec<f64> = numeric_waveform(
        &cfg.pulse,
        cfg,
        times,
        cfg.storage.omega_points,
        cfg.storage.omega_span,
    )?
    .iter()
    .map(|z| z.norm())
    .collect();
    let mut wave = Table::new(
        "waveforms",
        &["t_ns", "input", "solver", "closed_form", "numeric_kernel"],
    );
    for i in 0..times.len() {
        wave.push(&[times[i] * 1e9, input[i], solver[i], closed[i], numeric[i]]);
    }
    out.tables.push(wave);

    let transduction = simulate_full_transduction(cfg)?;
    let mut retrieved = Table::new("retrieval", &["t_ns", "optical_amplitude"]);
    for (t, a) in transduction
        .retrieval
        .times
        .iter()
        .zip(&transduction.retrieval.output)
    {
        retrieved.push(&[t * 1e9, a.norm()]);
    }
    out.tables.push(retrieved);

    let solver_delay = peak_time(times, &solver) - cfg.pulse.center - cfg.ensemble.length / k.c;
    out.row("eta", chain.eta, Some(0.92), Check::Abs(0.01));
    out.row("eta_m", chain.eta_m, None, Check::Report);
    out.row("eta_l", chain.eta_l, None, Check::Report);
    out.row(
        "t_dm_ns",
        chain.t_dm * 1e9,
        Some(500.0),
        Check::Abs(cfg.grid.dt * 1e9),
    );
    out.row("alpha_m", chain.alpha_m, Some(61.6), Check::Abs(0.1));
    out.row("alpha_l", chain.alpha_l, Some(0.44), Check::Abs(0.01));
    out.row(
        "waveform_l2_solver_vs_closed_form",
        relative_l2(&solver, &closed),
        Some(0.0),
        Check::Below(0.05),
    );
    out.row(
        "waveform_l2_solver_vs_numeric_kernel",
        relative_l2(&solver, &numeric),
        None,
        Check::Report,
    );
    out.row(
        "t_dm_solver_ns",
        solver_delay * 1e9,
        Some(chain.t_dm * 1e9),
        Check::Abs(cfg.grid.dt * 1e9),
    );
    out.row(
        "transmitted_fraction",
        storage.transmitted_energy / storage.input_energy,
        None,
        Check::Report,
    );
    out.row(
        "eta_sim",
        transduction.eta_sim,
        Some(chain.eta),
        Check::Abs(0.10),
    );
    out.row(
        "stored_fraction",
        transduction.storage.stored_fraction,
        None,
        Check::Report,
    );
    out.row(
        "retrieval_efficiency",
        transduction.retrieval_efficiency,
        None,
        Check::Report,
    );

    let (cal, photons) = calibration_tables(cfg)?;
    out.tables.push(cal);
    out.tables.push(photons);
    Ok(out)
}

/// `calibration_report.csv` (quantity, value) and the photon number per
/// input power table.
fn calibration_tables(cfg: &TransducerConfig) -> Result<(Table, Table)> {
    let k = &cfg.constants;
    let f = &cfg.fields;
    let e = &cfg.ensemble;
    let geometry = density_and_cross_section(k, &GeometryInputs::reported(k))?;
    let kappa = DetectionEfficiency::default().kappa();
    let cpt = cpt_zero_order(f.probe.rabi.into(), f.auxiliary.rabi.into())?;
    let transitions = TransitionData {
        dipole_12_ea0: f.probe.dipole_ea0,
        dipole_34_ea0: f.microwave.dipole_ea0,
        lambda_p: f.probe.wavelength(k.c),
        lambda_m: f.microwave.wavelength(k.c),
        gamma2: cfg.levels.gamma2,
        gamma4: cfg.levels.gamma4_spont,
    };
    let (d_m_cpt, d_l_cpt) = partial_od(e.d0, &cpt, &transitions)?;
    let mut report = Table::new("calibration_report", &["quantity", "value"]);
    let rows: [(&str, f64); 12] = [
        ("d0", e.d0),
        ("d_m", e.d_m),
        ("d_l", e.d_l),
        ("d_l_from_rho11", e.rho11 * e.d0),
        ("d_m_trapped_state", d_m_cpt),
        ("d_l_trapped_state", d_l_cpt),
        ("rho33_d_m", cfg.effective_mw_od()),
        ("s_m_m2", geometry.s_m),
        ("mean_radius_m", geometry.mean_radius),
        ("rayleigh_range_m", geometry.rayleigh),
        ("n_max_m3", geometry.n_max),
        ("kappa", kappa),
    ];
    for (q, v) in rows {
        report.push_text(vec![q.to_string(), v.to_string()]);
    }
    let mut photons = Table::new(
        "calibration_photon_number",
        &[
            "n_bar",
            "peak_rabi_mhz",
            "peak_intensity_w_m2",
            "peak_power_w",
        ],
    );
    let omega_m = f.microwave.angular_frequency();
    for n in [0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0] {
        let rabi = peak_rabi_for_photon_number(
            k,
            n,
            cfg.pulse.fwhm,
            f.microwave.dipole_ea0,
            omega_m,
            geometry.s_m,
        );
        let i0 = intensity(k, rabi, f.microwave.dipole_ea0);
        photons.push(&[n, per_two_pi(rabi) * 1e-6, i0, i0 * geometry.s_m]);
    }
    Ok((report, photons))
}

fn fig2c(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig2c", cfg.statistics.seed);
    let budget = dephasing_budget(cfg)?;
    let holds = linspace(0.0, 3e-6, 31);
    let sims: Vec<f64> = holds
        .par_iter()
        .map(|&tau| {
            let mut c = cfg.clone();
            c.storage.hold = tau;
            simulate_full_transduction(&c).map(|t| t.eta_sim)
        })
        .collect::<Result<_>>()?;
    let motional: Vec<f64> = holds
        .iter()
        .map(|t| (-(t / budget.tau_sw).powi(2)).exp())
        .collect();
    let eta: Vec<f64> = sims.iter().zip(&motional).map(|(a, b)| a * b).collect();
    let x_us: Vec<f64> = holds.iter().map(|t| t * 1e6).collect();
    let gauss = fit_auto(&FitModel::GaussianDecay, &x_us, &eta, None)?;
    let expo = fit_auto(&FitModel::ExponentialDecay, &x_us, &eta, None)?;
    let mut table = Table::new(
        "storage_time",
        &[
            "hold_us",
            "eta_sim",
            "motional_factor",
            "eta",
            "gaussian_fit",
            "exponential_fit",
        ],
    );
    for i in 0..holds.len() {
        table.push(&[
            x_us[i],
            sims[i],
            motional[i],
            eta[i],
            FitModel::GaussianDecay.value(x_us[i], &gauss.params),
            FitModel::ExponentialDecay.value(x_us[i], &expo.params),
        ]);
    }
    out.tables.push(table);
    let (_, tau_sw_ref) = motional_coherence(&cfg.constants, 150e-6, 1.3e-6, cfg.constants.m_rb87)?;
    out.row(
        "tau_sw_us_150uK_1.3um",
        tau_sw_ref * 1e6,
        Some(1.7),
        Check::Rel(0.03),
    );
    out.row("tau_sw_us", budget.tau_sw * 1e6, Some(1.7), Check::Report);
    out.row(
        "gaussian_amplitude",
        gauss.params[0],
        Some(0.82),
        Check::Report,
    );
    out.row(
        "gaussian_tau_coh_us",
        gauss.params[1],
        Some(0.9),
        Check::Report,
    );
    out.row(
        "exponential_amplitude",
        expo.params[0],
        Some(0.93),
        Check::Report,
    );
    out.row(
        "exponential_tau_d_us",
        expo.params[1],
        Some(2.0),
        Check::Report,
    );
    let th_g = no_cloning_threshold(&FitModel::GaussianDecay, &gauss.params, 0.5)?;
    let th_e = no_cloning_threshold(&FitModel::ExponentialDecay, &expo.params, 0.5)?;
    out.row(
        "no_cloning_time_gaussian_us",
        th_g,
        Some(0.58),
        Check::Report,
    );
    out.row(
        "no_cloning_time_exponential_us",
        th_e,
        Some(0.56),
        Check::Report,
    );
    Ok(out)
}

fn fig3a(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig3a", cfg.statistics.seed);
    // Far off resonance the medium is transparent again; the transmission
    // peak at δ = 0 is the EIT window between the Autler-Townes lines at
    // ±Ω_W/2, and only that window is fitted.
    let edge_mhz = per_two_pi(cfg.fields.write.rabi / 2.0) * 1e-6;
    let deltas_mhz = linspace(-3.0 * edge_mhz, 3.0 * edge_mhz, 601);
    let response = deltas_mhz
        .iter()
        .map(|&d| detuning_response(angular(d * 1e6), cfg))
        .collect::<Result<Vec<_>>>()?;
    let (x, y): (Vec<f64>, Vec<f64>) = deltas_mhz
        .iter()
        .zip(&response)
        .filter(|(d, _)| d.abs() < 0.9 * edge_mhz)
        .map(|(d, r)| (*d, *r))
        .unzip();
    let fit = fit_auto(&FitModel::Lorentzian, &x, &y, None)?;
    let mut table = Table::new("spectrum", &["detuning_mhz", "response", "lorentzian_fit"]);
    for (d, r) in deltas_mhz.iter().zip(&response) {
        table.push(&[*d, *r, FitModel::Lorentzian.value(*d, &fit.params)]);
    }
    out.tables.push(table);
    let centre = detuning_response(0.0, cfg)?;
    let window_max = y.iter().cloned().fold(0.0, f64::max);
    out.row(
        "window_peak_is_resonance",
        f64::from(u8::from(centre >= window_max)),
        Some(1.0),
        Check::Abs(0.0),
    );
    out.row("response_at_resonance", centre, None, Check::Report);
    out.row(
        "autler_townes_half_splitting_mhz",
        edge_mhz,
        None,
        Check::Report,
    );
    out.row(
        "lorentzian_center_mhz",
        fit.params[1],
        Some(0.0),
        Check::Report,
    );
    out.row(
        "lorentzian_fwhm_mhz",
        fit.params[2],
        Some(2.1),
        Check::Report,
    );
    Ok(out)
}

fn fig3b(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig3b", cfg.statistics.seed);
    let k = &cfg.constants;
    let n_th = noise_budget(k, &cfg.thermal)?.n_th;
    let n_st = cfg.thermal.stray_noise;
    let eta = transmission_efficiency(cfg)?.eta;
    let gamma = angular(cfg.statistics.spectrum_fwhm);
    let spectrum = SpectralDensity::lorentzian(gamma, 1 << 16, 400.0)?;
    let g1 = g1_from_spectrum(&spectrum, 4)?;
    let hbt = HbtParams::from_statistics(&cfg.statistics);
    for (label, multiple) in [("n0", 0.0), ("n5", 5.0), ("n20", 20.0)] {
        let inputs = G2Inputs {
            n_th,
            n_st,
            n_bar: multiple * n_th / eta,
            eta,
            g1: g1.clone(),
        };
        let h = hbt_monte_carlo(&inputs, &hbt)?;
        let mut table = Table::new(
            &format!("g2_{label}"),
            &["tau_ns", "g2_analytic", "g2_mc", "mc_err", "g2_pointwise"],
        );
        for i in 0..h.tau.len() {
            table.push(&[
                h.tau[i] * 1e9,
                h.analytic[i],
                h.g2[i],
                h.err[i],
                g2_predicted(h.tau[i], &inputs)?,
            ]);
        }
        out.tables.push(table);
        let g0 = g2_predicted(0.0, &inputs)?;
        let centre = h
            .tau
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        match label {
            "n0" => {
                out.row("g2_0_analytic_n0", g0, Some(1.84), Check::Abs(0.01));
                out.row("g2_0_mc_n0", h.g2[centre], Some(1.8), Check::Report);
                out.row(
                    "mc_max_deviation_sigma_n0",
                    h.max_deviation(0),
                    Some(0.0),
                    Check::Below(3.0),
                );
                let fit = fit_nlls(
                    &FitModel::G2Exponential,
                    &h.tau.iter().map(|t| t * 1e6).collect::<Vec<_>>(),
                    &h.g2,
                    Some(&h.err),
                    &[h.g2[centre], h.coherence_time * 1e6],
                    &FitOptions::default(),
                )?;
                let tau_c = fit.params[1];
                out.row("g2_fit_tau_coh_us", tau_c, Some(0.82), Check::Report);
                out.row(
                    "g2_fit_g2_0",
                    exponential_g2_model(0.0, fit.params[0], tau_c),
                    Some(1.8),
                    Check::Report,
                );
                out.row(
                    "g1_coherence_time_us",
                    h.coherence_time * 1e6,
                    None,
                    Check::Report,
                );
            }
            "n20" => {
                out.row("g2_0_analytic_n20", g0, Some(1.0), Check::Abs(0.02));
                out.row(
                    "mc_max_deviation_sigma_n20",
                    h.max_deviation(0),
                    None,
                    Check::Report,
                );
            }
            _ => {
                out.row("g2_0_analytic_n5", g0, None, Check::Report);
                out.row(
                    "mc_max_deviation_sigma_n5",
                    h.max_deviation(0),
                    None,
                    Check::Report,
                );
            }
        }
    }
    out.row("n_th", n_th, Some(0.109), Check::Report);
    Ok(out)
}

fn fig3c(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig3c", cfg.statistics.seed);
    let budget = dephasing_budget(cfg)?;
    let gamma0 = budget.gamma0;
    let mut ideal = cfg.clone();
    ideal.levels.gamma51 = 0.0;
    let chain0 = transmission_efficiency(&ideal)?;
    let eta0 = chain0.eta;
    let t_d = chain0.t_d;
    let n_bar = logspace(0.1, 100.0, 25);
    let model = FitModel::PhotonNumber { t_d };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.statistics.seed);
    let noise = Normal::new(0.0, 0.02).expect("valid width");
    let mut clean = Vec::with_capacity(n_bar.len());
    let mut noisy = Vec::with_capacity(n_bar.len());
    for &n in &n_bar {
        let y = photon_number_efficiency(n, eta0, gamma0, t_d)?;
        clean.push(y);
        noisy.push(y * (1.0 + noise.sample(&mut rng)));
    }
    let fit = fit_auto(&model, &n_bar, &noisy, None)?;
    let mut table = Table::new("photon_number", &["n_bar", "eta", "eta_synthetic", "fit"]);
    for i in 0..n_bar.len() {
        table.push(&[
            n_bar[i],
            clean[i],
            noisy[i],
            model.value(n_bar[i], &fit.params),
        ]);
    }
    out.tables.push(table);
    let khz = |g: f64| per_two_pi(g) * 1e-3;
    out.row("gamma0_khz", khz(gamma0), Some(12.8), Check::Report);
    out.row(
        "gamma0_khz_vs_mean_field",
        khz(gamma0),
        Some(10.8),
        Check::Factor(2.0),
    );
    out.row("eta0", eta0, Some(0.88), Check::Report);
    out.row("fit_eta0", fit.params[0], Some(eta0), Check::Rel(0.05));
    out.row(
        "fit_gamma0_khz",
        khz(fit.params[1]),
        Some(khz(gamma0)),
        Check::Rel(0.05),
    );
    for (tag, convention, source) in [
        (
            "cyclic_trapped",
            C6Convention::Cyclic,
            Rho33Source::TrappedState,
        ),
        (
            "cyclic_ensemble",
            C6Convention::Cyclic,
            Rho33Source::Ensemble,
        ),
        (
            "angular_trapped",
            C6Convention::Angular,
            Rho33Source::TrappedState,
        ),
        (
            "angular_ensemble",
            C6Convention::Angular,
            Rho33Source::Ensemble,
        ),
    ] {
        let mut c = cfg.clone();
        c.interactions.c6_convention = convention;
        c.interactions.rho33_source = source;
        let g = dephasing_budget(&c)?.gamma0;
        out.row(
            &format!("gamma0_khz_{tag}"),
            khz(g),
            Some(10.8),
            Check::Report,
        );
    }
    Ok(out)
}

fn fig3d(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("fig3d", cfg.statistics.seed);
    let d_m = logspace(1e5, 1e7, 9);
    let d0 = cfg.ensemble.d_m;
    let w0 = cfg.fields.write.rabi;
    let configs: Vec<TransducerConfig> = d_m
        .iter()
        .map(|&d| {
            let mut c = cfg.clone();
            c.levels.gamma51 = 0.0;
            c.ensemble.d_m = d;
            // Fixed microwave group delay.
            c.fields.write.rabi = w0 * (d / d0).sqrt();
            c
        })
        .collect();
    let eta = configs
        .par_iter()
        .map(|c| simulate_full_transduction(c).map(|t| t.eta_sim))
        .collect::<Result<Vec<_>>>()?;
    let chain = configs
        .iter()
        .map(|c| transmission_efficiency(c).map(|b| b.eta_t))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_auto(&FitModel::OdScaling, &d_m, &eta, None)?;
    let mut table = Table::new("od_scaling", &["d_m", "eta_sim", "eta_t", "fit"]);
    for i in 0..d_m.len() {
        table.push(&[
            d_m[i],
            eta[i],
            chain[i],
            FitModel::OdScaling.value(d_m[i], &fit.params),
        ]);
    }
    out.tables.push(table);
    let monotone = |v: &[f64]| f64::from(u8::from(v.windows(2).all(|w| w[1] >= w[0])));
    out.row(
        "eta_t_monotone_in_d_m",
        monotone(&chain),
        Some(1.0),
        Check::Abs(0.0),
    );
    out.row(
        "eta_sim_monotone_in_d_m",
        monotone(&eta),
        None,
        Check::Report,
    );
    out.row("beta", fit.params[0], Some(80796.0), Check::Report);
    out.row(
        "eta_sim_max",
        eta.iter().cloned().fold(0.0, f64::max),
        None,
        Check::Report,
    );
    Ok(out)
}

fn s3b(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("s3b", cfg.statistics.seed);
    let s = &cfg.thermal;
    let eta = od_scaled_efficiency(s.eta_max, s.length);
    let mut table = Table::new("efficiency_vs_length", &["length_mm", "eta"]);
    for l in logspace(2.0 * s.radius, s.length, 200) {
        table.push(&[l * 1e3, eta(l)]);
    }
    out.tables.push(table);
    let theta = threshold_crossing(
        |t: f64| eta(2.0 * s.radius / t.sin().max(1e-300)),
        0.005,
        s.theta_min()?,
    )?;
    out.row("acceptance_angle_rad", theta, Some(0.077), Check::Report);
    let norm = integrate(|t: f64| t.sin() / 2.0, 0.0, std::f64::consts::PI, 1e-13)?;
    out.row(
        "solid_angle_normalization",
        norm,
        Some(1.0),
        Check::Abs(1e-10),
    );
    Ok(out)
}

fn s3c(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("s3c", cfg.statistics.seed);
    let k = &cfg.constants;
    let s = ThermalScenario {
        temperature: crate::thermal::REFERENCE_TEMPERATURE,
        ..cfg.thermal.clone()
    };
    let n_ref = noise_count(k, &s)?;
    let temps = logspace(1e-3, 300.0, 61);
    let curve = noise_count_vs_temperature(k, &s, n_ref, &temps)?;
    let mut table = Table::new("noise_vs_temperature", &["temperature_k", "n_th"]);
    for (t, n) in &curve {
        table.push(&[*t, *n]);
    }
    out.tables.push(table);
    let at = |t: f64| -> Result<f64> { Ok(noise_count_vs_temperature(k, &s, n_ref, &[t])?[0].1) };
    out.row("n_th_300k", n_ref, Some(0.109), Check::Report);
    out.row("n_th_4k", at(4.0)?, Some(1e-3), Check::Below(1e-3));
    out.row("n_th_10mk", at(10e-3)?, Some(1e-4), Check::Below(1e-4));
    Ok(out)
}

fn noise_budget_experiment(cfg: &TransducerConfig) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("noise_budget", cfg.statistics.seed);
    let k = &cfg.constants;
    let s = &cfg.thermal;
    let b = noise_budget(k, s)?;
    let b91 = noise_budget(
        k,
        &ThermalScenario {
            eta_max: 0.91,
            ..s.clone()
        },
    )?;
    out.row("n_occupation", b.n_occ, Some(170.0), Check::Abs(3.0));
    out.row("flux_mhz", b.phi * 1e-6, Some(295.0), Check::Rel(0.05));
    out.row(
        "flux_narrowband_mhz",
        thermal_flux_narrowband(k, s)? * 1e-6,
        Some(295.0),
        Check::Report,
    );
    out.row("n_stored", b.n_stored, Some(81.2), Check::Rel(0.02));
    out.row(
        "n_stored_at_reference_flux",
        stored_thermal_photons(295e6, s.interaction_time),
        Some(81.2),
        Check::Rel(0.02),
    );
    out.row("n_th_eta_max_93", b.n_th, Some(0.109), Check::Rel(0.10));
    out.row("n_th_eta_max_91", b91.n_th, Some(0.08), Check::Rel(0.15));
    out.row("n_st", b.n_st, Some(0.01), Check::Report);
    out.row("t_ne_k", b.t_ne, Some(26.0), Check::Range(24.0, 30.0));
    out.row("t_ne_linear_k", b.t_ne_linear, Some(26.0), Check::Report);
    out.row(
        "mean_occupation_4k",
        mean_occupation(k, s.frequency, 4.0)?,
        None,
        Check::Report,
    );
    Ok(out)
}

/// Seed-free check that a config parses and builds.
pub fn validate_config(text: &str) -> Result<TransducerConfig> {
    RawConfig::parse(text)?.build()
}

/// The intensity efficiency equals the area-normalized efficiency when the
/// collection and receiving areas coincide.
pub fn equivalence_check(cfg: &TransducerConfig, eta: f64) -> Result<f64> {
    let k = &cfg.constants;
    let s_m = cfg.receiving_area();
    let fluence = 1e-12;
    let omega_m = cfg.fields.microwave.angular_frequency();
    let n_l = eta * s_m * fluence / (k.hbar * omega_m);
    let e = intensity_efficiency_equivalence(
        k,
        n_l,
        cfg.fields.signal.angular_frequency(),
        s_m,
        s_m,
        cfg.pulse.fwhm,
        fluence,
        omega_m,
    )?;
    Ok((e.eta_ii - e.eta).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("lin:0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("log:1:100:3").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12 && (g[2] - 100.0).abs() < 1e-9);
        assert_eq!(parse_grid("3, 1,2").unwrap(), vec![3.0, 1.0, 2.0]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("lin:0:1:0").unwrap().is_empty());
        assert_eq!(parse_grid("lin:2:5:1").unwrap(), vec![2.0]);
        assert!(parse_grid("log:0:1:3").is_err());
        assert!(parse_grid("lin:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn unknown_names_list_valid_ones() {
        let err = run_experiment("nope", &TransducerConfig::paper_fig2a()).unwrap_err();
        let msg = err.to_string();
        assert!(EXPERIMENTS.iter().all(|n| msg.contains(n)));
    }

    #[test]
    fn check_rules() {
        let r = |e, c| SummaryRow::new("x", e, Some(2.0), c).passed();
        assert_eq!(r(2.05, Check::Abs(0.1)), Some(true));
        assert_eq!(r(2.2, Check::Rel(0.05)), Some(false));
        assert_eq!(r(3.9, Check::Factor(2.0)), Some(true));
        assert_eq!(r(0.9, Check::Factor(2.0)), Some(false));
        assert_eq!(r(1.5, Check::Range(1.0, 2.0)), Some(true));
        assert_eq!(r(1.5, Check::Below(1.0)), Some(false));
        assert_eq!(r(f64::NAN, Check::Below(1.0)), Some(false));
        assert_eq!(r(7.0, Check::Report), None);
    }

    #[test]
    fn equivalence_is_exact() {
        let cfg = TransducerConfig::paper_fig2a();
        assert!(equivalence_check(&cfg, 0.92).unwrap() <= 1e-12);
    }

    #[test]
    fn non_numeric_axis_is_a_usage_error() {
        let raw = RawConfig::parse(PAPER_FIG2A).unwrap();
        let err = sweep("s3b", &raw, "fields.pol_p", &[1.0], None).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        let err = sweep("s3b", &raw, "nonsense", &[1.0], None).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn empty_sweep_has_header_only() {
        let raw = RawConfig::parse(PAPER_FIG2A).unwrap();
        let t = sweep("s3b", &raw, "thermal.eta_max", &[], None).unwrap();
        assert!(t.rows.is_empty());
        assert_eq!(t.header[0], "thermal.eta_max");
        assert!(t.header.len() > 1);
    }

    #[test]
    fn sweep_preserves_grid_order() {
        let raw = RawConfig::parse(PAPER_FIG2A).unwrap();
        let grid = [0.95, 0.91, 0.93];
        let t = sweep("noise_budget", &raw, "thermal.eta_max", &grid, None).unwrap();
        let col = t
            .header
            .iter()
            .position(|h| h == "n_th_eta_max_93")
            .unwrap();
        let got: Vec<f64> = t.rows.iter().map(|r| r[0].parse().unwrap()).collect();
        assert_eq!(got, grid);
        let n: Vec<f64> = t.rows.iter().map(|r| r[col].parse().unwrap()).collect();
        assert!(n[1] < n[2] && n[2] < n[0]);
    }
}
