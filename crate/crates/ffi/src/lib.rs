//! C ABI over the transduce engine.
//!
//! Configurations and simulation results are opaque handles owned by the
//! caller and released with the matching `_free` function. Every call returns
//! a [`TransduceStatus`]; the message of the last failure on the calling
//! thread is available from [`transduce_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use transduce::config::{RawConfig, PAPER_FIG2A, PAPER_FIG3};
use transduce::constants::angular;
use transduce::experiments::{default_config_text, run_experiment};
use transduce::solver::{simulate_full_transduction, Transduction};
use transduce::spectral::transmission_efficiency;
use transduce::stats::{g1_from_spectrum, g2_predicted, G2Inputs, SpectralDensity};
use transduce::thermal::noise_budget;
use transduce::{Error, TransducerConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransduceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidConfig = 4,
    Domain = 5,
    Numerical = 6,
    UnknownExperiment = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for TransduceStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::Csv(_) => TransduceStatus::Io,
            Error::Parse { .. } => TransduceStatus::Parse,
            Error::Invariant { .. } | Error::Usage(_) => TransduceStatus::InvalidConfig,
            Error::Domain(_)
            | Error::UndefinedState(_)
            | Error::DivisionByZero(_)
            | Error::Underdetermined { .. } => TransduceStatus::Domain,
            Error::Pole { .. } | Error::RefineGrid(_) | Error::Quadrature(_) => {
                TransduceStatus::Numerical
            }
            Error::UnknownExperiment { .. } => TransduceStatus::UnknownExperiment,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(TransduceStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(TransduceStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TransduceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TransduceStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the engine");
            TransduceStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TransduceStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            TransduceStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Parsed configuration.
pub struct TransduceConfig {
    raw: RawConfig,
    built: TransducerConfig,
}

impl TransduceConfig {
    fn parse(text: &str) -> Result<Self, Failure> {
        let raw = RawConfig::parse(text)?;
        let built = raw.build()?;
        Ok(TransduceConfig { raw, built })
    }
}

/// Result of a storage, hold and retrieval simulation.
pub struct TransduceRun {
    inner: Transduction,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TransduceEfficiency {
    pub eta: f64,
    pub eta_t: f64,
    pub eta_m: f64,
    pub eta_l: f64,
    pub eta0: f64,
    pub t_dm: f64,
    pub t_dl: f64,
    pub alpha_m: f64,
    pub alpha_l: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TransduceNoiseBudget {
    pub mean_occupation: f64,
    pub flux: f64,
    pub stored_photons: f64,
    pub thermal_count: f64,
    pub stray_count: f64,
    pub noise_temperature: f64,
    pub noise_temperature_linear: f64,
    pub noise_temperature_flagged: bool,
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the untruncated message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn transduce_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn transduce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bundled preset: `"fig2a"` (single-photon storage) or `"fig3"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn transduce_config_preset(
    name: *const c_char,
    out_cfg: *mut *mut TransduceConfig,
) -> TransduceStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        let text = match text(name, "name")? {
            "fig2a" => PAPER_FIG2A,
            "fig3" => PAPER_FIG3,
            other => {
                return Err(Failure(
                    TransduceStatus::InvalidConfig,
                    format!("unknown preset `{other}` (valid: fig2a, fig3)"),
                ))
            }
        };
        *slot = Box::into_raw(Box::new(TransduceConfig::parse(text)?));
        Ok(())
    })
}

/// Parses configuration text in the `[section] key = value unit` format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn transduce_config_parse(
    source: *const c_char,
    out_cfg: *mut *mut TransduceConfig,
) -> TransduceStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        let cfg = TransduceConfig::parse(text(source, "source")?)?;
        *slot = Box::into_raw(Box::new(cfg));
        Ok(())
    })
}

/// Sets a numeric field `section.key` (in the unit already used for it) and
/// revalidates. On failure the handle is unchanged.
///
/// # Safety
/// `cfg` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn transduce_config_set(
    cfg: *mut TransduceConfig,
    path: *const c_char,
    value: f64,
) -> TransduceStatus {
    guard(|| {
        let cfg = out(cfg, "cfg")?;
        let mut raw = cfg.raw.clone();
        raw.set_numeric(text(path, "path")?, value)?;
        let built = raw.build()?;
        *cfg = TransduceConfig { raw, built };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn transduce_config_free(cfg: *mut TransduceConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Efficiency chain of the configuration.
///
/// # Safety
/// `cfg` must come from this library and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_efficiency(
    cfg: *const TransduceConfig,
    result: *mut TransduceEfficiency,
) -> TransduceStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let slot = out(result, "result")?;
        let b = transmission_efficiency(&cfg.built)?;
        *slot = TransduceEfficiency {
            eta: b.eta,
            eta_t: b.eta_t,
            eta_m: b.eta_m,
            eta_l: b.eta_l,
            eta0: b.eta0,
            t_dm: b.t_dm,
            t_dl: b.t_dl,
            alpha_m: b.alpha_m,
            alpha_l: b.alpha_l,
        };
        Ok(())
    })
}

/// Thermal noise budget of the configured scenario.
///
/// # Safety
/// `cfg` must come from this library and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_noise_budget(
    cfg: *const TransduceConfig,
    result: *mut TransduceNoiseBudget,
) -> TransduceStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let slot = out(result, "result")?;
        let b = noise_budget(&cfg.built.constants, &cfg.built.thermal)?;
        *slot = TransduceNoiseBudget {
            mean_occupation: b.n_occ,
            flux: b.phi,
            stored_photons: b.n_stored,
            thermal_count: b.n_th,
            stray_count: b.n_st,
            noise_temperature: b.t_ne,
            noise_temperature_linear: b.t_ne_linear,
            noise_temperature_flagged: b.t_ne_flagged,
        };
        Ok(())
    })
}

/// g²(τ) of converted light for `n_bar` input photons, with the configured
/// noise budget, chain efficiency and Lorentzian line.
///
/// # Safety
/// `cfg` must come from this library and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_g2(
    cfg: *const TransduceConfig,
    n_bar: f64,
    tau: f64,
    result: *mut f64,
) -> TransduceStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let slot = out(result, "result")?;
        let c = &cfg.built;
        let gamma = angular(c.statistics.spectrum_fwhm);
        let g1 = g1_from_spectrum(&SpectralDensity::lorentzian(gamma, 1 << 14, 200.0)?, 2)?;
        let inputs = G2Inputs {
            n_th: noise_budget(&c.constants, &c.thermal)?.n_th,
            n_st: c.thermal.stray_noise,
            n_bar,
            eta: transmission_efficiency(c)?.eta,
            g1,
        };
        *slot = g2_predicted(tau, &inputs)?;
        Ok(())
    })
}

/// Runs storage, hold and retrieval.
///
/// # Safety
/// `cfg` must come from this library and `out_run` must be valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_simulate(
    cfg: *const TransduceConfig,
    out_run: *mut *mut TransduceRun,
) -> TransduceStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let slot = out(out_run, "out_run")?;
        let inner = simulate_full_transduction(&cfg.built)?;
        *slot = Box::into_raw(Box::new(TransduceRun { inner }));
        Ok(())
    })
}

/// Retrieved optical photons per input microwave photon.
///
/// # Safety
/// `run` must come from this library and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_run_efficiency(
    run: *const TransduceRun,
    result: *mut f64,
) -> TransduceStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        *out(result, "result")? = run.inner.eta_sim;
        Ok(())
    })
}

/// Copies retrieval times (s) and output amplitudes into caller buffers of
/// `capacity` entries. `len` always receives the number of samples; when it
/// exceeds `capacity` nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// `run` must come from this library, `len` must be valid, and `times` and
/// `amplitudes` must be null or hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn transduce_run_output(
    run: *const TransduceRun,
    times: *mut f64,
    amplitudes: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> TransduceStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let r = &run.inner.retrieval;
        *out(len, "len")? = r.times.len();
        if r.times.len() > capacity {
            return Err(Failure(
                TransduceStatus::BufferTooSmall,
                format!("need {} samples, buffer holds {capacity}", r.times.len()),
            ));
        }
        if times.is_null() || amplitudes.is_null() {
            return Err(null("output buffer"));
        }
        for (i, (t, a)) in r.times.iter().zip(&r.output).enumerate() {
            *times.add(i) = *t;
            *amplitudes.add(i) = a.norm();
        }
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn transduce_run_free(run: *mut TransduceRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs a bundled experiment and writes its CSVs into `out_dir`. A null
/// `cfg` selects the experiment's bundled preset. `passed` receives whether
/// every summary row met its tolerance.
///
/// # Safety
/// `name` and `out_dir` must be NUL-terminated, `cfg` null or from this
/// library, and `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn transduce_run_experiment(
    name: *const c_char,
    cfg: *const TransduceConfig,
    seed: u64,
    out_dir: *const c_char,
    passed: *mut bool,
) -> TransduceStatus {
    guard(|| {
        let name = text(name, "name")?;
        let dir = text(out_dir, "out_dir")?;
        let slot = out(passed, "passed")?;
        let (mut built, source) = match cfg.as_ref() {
            Some(c) => (c.built.clone(), "handle"),
            None => (
                RawConfig::parse(default_config_text(name)?)?.build()?,
                "bundled",
            ),
        };
        built.statistics.seed = seed;
        let result = run_experiment(name, &built)?;
        result.write(Path::new(dir), source)?;
        *slot = result.passed();
        Ok(())
    })
}
