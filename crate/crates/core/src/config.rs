//! Configuration types and the `.cfg` text format.
//!
//! A config file is a list of `[section]` headers followed by `key = value`
//! lines. Values carry an explicit unit suffix where the quantity has one:
//!
//! ```text
//! [fields]
//! omega_w = 1.8 MHz        # rates are written as ω/2π and stored as rad/s
//! lambda_p = 780.2 nm
//!
//! [ensemble]
//! density = 2.4e10 cm^-3
//! length = 20 mm
//! ```
//!
//! `#` starts a comment. Unknown sections or keys are rejected so typos
//! surface as errors instead of silently falling back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::calibration;
use crate::constants::{PhysicalConstants, CODATA, TWO_PI};
use crate::cpt::{self, CptState};
use crate::dephasing::{C6Convention, InteractionParams, Rho33Source};
use crate::error::{Error, Result};
use crate::solver::SolverGrid;
use crate::stats::StatisticsParams;
use crate::thermal::ThermalScenario;

pub const PAPER_FIG2A: &str = include_str!("../configs/paper_fig2a.cfg");
pub const PAPER_FIG3: &str = include_str!("../configs/paper_fig3.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    SigmaPlus,
    SigmaMinus,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::SigmaPlus => f.write_str("sigma+"),
            Polarization::SigmaMinus => f.write_str("sigma-"),
        }
    }
}

/// One driving or signal field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    /// Peak Rabi frequency (rad/s).
    pub rabi: f64,
    /// Carrier frequency ν (Hz).
    pub frequency: f64,
    pub polarization: Option<Polarization>,
    /// |μ| of the driven transition in units of e a0.
    pub dipole_ea0: f64,
    /// Mean beam radius (m), if known.
    pub beam_radius: Option<f64>,
}

impl Field {
    pub fn wavelength(&self, c: f64) -> f64 {
        c / self.frequency
    }

    pub fn angular_frequency(&self) -> f64 {
        TWO_PI * self.frequency
    }
}

/// The six fields of the storage and retrieval ladders.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    /// |1⟩↔|2⟩ auxiliary probe (P).
    pub probe: Field,
    /// |2⟩↔|3⟩ auxiliary coupling (A).
    pub auxiliary: Field,
    /// |4⟩↔|5⟩ microwave write control (W).
    pub write: Field,
    /// |5⟩↔|6⟩ optical read control (R).
    pub read: Field,
    /// |3⟩↔|4⟩ microwave signal (M).
    pub microwave: Field,
    /// |6⟩↔|1⟩ retrieved optical signal (L).
    pub signal: Field,
}

/// Decay and dephasing rates, all in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    pub gamma2: f64,
    pub gamma3: f64,
    /// Decay rate of |4⟩ used in the propagation kernel.
    pub gamma4: f64,
    /// Spontaneous decay of |4⟩ entering the microwave cross-section.
    pub gamma4_spont: f64,
    pub gamma6: f64,
    pub gamma41: f64,
    pub gamma51: f64,
    pub gamma61: f64,
    /// γ41 was tied to Γ4 rather than given explicitly.
    pub gamma41_is_gamma4: bool,
    /// γ61 was tied to Γ6/2 rather than given explicitly.
    pub gamma61_is_half_gamma6: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    /// Total atomic number density (m⁻³).
    pub density: f64,
    /// Medium length (m).
    pub length: f64,
    /// Medium radius (m).
    pub radius: f64,
    /// 1/e² half-width of the longitudinal density profile (m).
    pub density_halfwidth: f64,
    /// Global optical depth of |1⟩↔|2⟩.
    pub d0: f64,
    /// Atomic temperature (K).
    pub temperature: f64,
    pub rho11: f64,
    pub rho33: f64,
    pub rho13: f64,
    /// ρ11/ρ33 came from the config rather than the trapping state.
    pub populations_overridden: bool,
    /// Microwave cross-section σ_M (m²).
    pub sigma_m: f64,
    /// Optical cross-section σ_L (m²).
    pub sigma_l: f64,
    pub d_m: f64,
    pub d_l: f64,
    pub d_m_overridden: bool,
    pub d_l_overridden: bool,
}

impl EnsembleParams {
    pub fn n1(&self) -> f64 {
        self.rho11 * self.density
    }

    pub fn n3(&self) -> f64 {
        self.rho33 * self.density
    }
}

/// Gaussian microwave input pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    /// Peak input Rabi frequency Ω_M0 (rad/s).
    pub peak_rabi: f64,
    /// Intensity FWHM T_p (s).
    pub fwhm: f64,
    /// Mean photon number per pulse.
    pub photon_number: f64,
    /// Centre time t0 (s).
    pub center: f64,
}

impl PulseSpec {
    /// Ω_M(t, z=0) = Ω_M0 exp(−2 ln2 (t−t0)²/T_p²).
    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.fwhm;
        self.peak_rabi * (-2.0 * std::f64::consts::LN_2 * x * x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalDirection {
    Forward,
    Backward,
}

/// Storage sequence and efficiency-chain inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageSpec {
    /// Hold time τ between write turn-off and read turn-on (s).
    pub hold: f64,
    /// Control-field ramp duration (s).
    pub ramp: f64,
    /// Absolute write turn-off time (s); `None` places the pulse centre at
    /// the middle of the medium.
    pub write_off: Option<f64>,
    /// Duration of the retrieval window (s).
    pub read_window: f64,
    /// Optical-channel group delay t_dL (s).
    pub t_dl: f64,
    /// FWHM of the slow optical pulse T_pL (s).
    pub t_pl: f64,
    pub eta_s: f64,
    pub eta_c: f64,
    pub direction: RetrievalDirection,
    /// Points of the ω-grid used for the full propagation integral.
    pub omega_points: usize,
    /// Half-span of the ω-grid in units of 1/T_p.
    pub omega_span: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerConfig {
    pub constants: PhysicalConstants,
    pub fields: FieldParams,
    pub levels: LevelScheme,
    pub ensemble: EnsembleParams,
    pub pulse: PulseSpec,
    pub grid: SolverGrid,
    pub storage: StorageSpec,
    pub interactions: InteractionParams,
    pub thermal: ThermalScenario,
    pub statistics: StatisticsParams,
}

impl TransducerConfig {
    pub fn paper_fig2a() -> Self {
        RawConfig::parse(PAPER_FIG2A)
            .and_then(|raw| raw.build())
            .expect("bundled fig2a config is valid")
    }

    pub fn paper_fig3() -> Self {
        RawConfig::parse(PAPER_FIG3)
            .and_then(|raw| raw.build())
            .expect("bundled fig3 config is valid")
    }

    /// Product ρ33·d_M entering the microwave propagation kernel.
    pub fn effective_mw_od(&self) -> f64 {
        self.ensemble.rho33 * self.ensemble.d_m
    }

    /// Averaged microwave receiving cross-section for a uniform beam of the
    /// medium radius, π r².
    pub fn receiving_area(&self) -> f64 {
        std::f64::consts::PI * self.ensemble.radius * self.ensemble.radius
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<TransducerConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RawConfig::parse(&text)?.build()
}

/// Fills σ_M, σ_L, d_M = n3 σ_M L and d_L = n1 σ_L L from dipoles,
/// wavelengths and decay rates. Explicit OD overrides are kept.
pub fn derive_cross_sections(config: &TransducerConfig) -> Result<EnsembleParams> {
    let k = &config.constants;
    let f = &config.fields;
    let lv = &config.levels;
    let sigma_m = absorption_cross_section(
        k,
        f.microwave.dipole_ea0,
        f.microwave.wavelength(k.c),
        lv.gamma4_spont,
    )
    .map_err(|_| Error::DivisionByZero("Γ4 of the |3⟩↔|4⟩ transition is zero".into()))?;
    let sigma_l =
        absorption_cross_section(k, f.signal.dipole_ea0, f.signal.wavelength(k.c), lv.gamma6)
            .map_err(|_| Error::DivisionByZero("Γ6 of the |1⟩↔|6⟩ transition is zero".into()))?;

    let mut e = config.ensemble.clone();
    e.sigma_m = sigma_m;
    e.sigma_l = sigma_l;
    if !e.d_m_overridden {
        e.d_m = e.n3() * sigma_m * e.length;
    }
    if !e.d_l_overridden {
        e.d_l = e.n1() * sigma_l * e.length;
    }
    Ok(e)
}

/// σ = 4π|μ|² / (λ ε0 ħ Γ).
pub fn absorption_cross_section(
    k: &PhysicalConstants,
    dipole_ea0: f64,
    wavelength: f64,
    gamma: f64,
) -> Result<f64> {
    if gamma == 0.0 {
        return Err(Error::DivisionByZero("decay rate is zero".into()));
    }
    let mu = dipole_ea0 * k.e_a0;
    Ok(4.0 * std::f64::consts::PI * mu * mu / (wavelength * k.eps0 * k.hbar * gamma))
}

// ---------------------------------------------------------------------------
// Raw key/value layer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// Angular rate written as ω/2π.
    Rate,
    /// Plain frequency ν in Hz.
    Frequency,
    Length,
    Time,
    Density,
    Temperature,
    Scalar,
    Dipole,
    Count,
    Flag,
    Text,
    /// C6 coefficient written as (ω/2π)·µm⁶.
    C6,
    /// C3 coefficient written as (ω/2π)·µm³.
    C3,
}

struct KeySpec {
    section: &'static str,
    key: &'static str,
    kind: Kind,
}

macro_rules! keys {
    ($($section:literal : [$($key:literal => $kind:ident),* $(,)?]),* $(,)?) => {
        &[$($(KeySpec { section: $section, key: $key, kind: Kind::$kind },)*)*]
    };
}

static KEYS: &[KeySpec] = keys! {
    "fields": [
        "omega_p" => Rate, "omega_a" => Rate, "omega_w" => Rate, "omega_r" => Rate,
        "omega_m" => Rate, "omega_l" => Rate,
        "lambda_p" => Length, "lambda_a" => Length, "lambda_w" => Length,
        "lambda_r" => Length, "lambda_m" => Length, "lambda_l" => Length,
        "freq_p" => Frequency, "freq_a" => Frequency, "freq_w" => Frequency,
        "freq_r" => Frequency, "freq_m" => Frequency, "freq_l" => Frequency,
        "dipole_p" => Dipole, "dipole_a" => Dipole, "dipole_w" => Dipole,
        "dipole_r" => Dipole, "dipole_m" => Dipole, "dipole_l" => Dipole,
        "pol_p" => Text, "pol_a" => Text, "pol_w" => Text,
        "pol_r" => Text, "pol_m" => Text, "pol_l" => Text,
        "radius_p" => Length, "radius_a" => Length, "radius_w" => Length,
        "radius_r" => Length, "radius_m" => Length, "radius_l" => Length,
    ],
    "levels": [
        "gamma2" => Rate, "gamma3" => Rate, "gamma4" => Rate, "gamma4_spont" => Rate,
        "gamma6" => Rate, "gamma41" => Rate, "gamma51" => Rate, "gamma61" => Rate,
    ],
    "ensemble": [
        "density" => Density, "length" => Length, "radius" => Length,
        "density_halfwidth" => Length, "d0" => Scalar, "temperature" => Temperature,
        "rho11" => Scalar, "rho33" => Scalar, "d_m" => Scalar, "d_l" => Scalar,
    ],
    "pulse": [
        "fwhm" => Time, "center" => Time, "photon_number" => Scalar, "peak_rabi" => Rate,
    ],
    "grid": [
        "nz" => Count, "dt" => Time, "t_start" => Time, "t_end" => Time,
        "co_moving" => Flag, "snapshot_stride" => Count,
        "omega_points" => Count, "omega_span" => Scalar,
    ],
    "storage": [
        "hold" => Time, "ramp" => Time, "write_off" => Time, "read_window" => Time,
        "t_dl" => Time, "t_pl" => Time, "eta_s" => Scalar, "eta_c" => Scalar,
        "direction" => Text,
    ],
    "dephasing": [
        "c6_33" => C6, "c6_55" => C6, "c6_35_mean" => C6, "c3" => C3,
        "gamma_pump" => Rate, "coupling_waist" => Length, "blockade_radius" => Length,
        "rho33_source" => Text, "c6_convention" => Text,
    ],
    "thermal": [
        "frequency" => Frequency, "temperature" => Temperature, "bandwidth" => Frequency,
        "interaction_time" => Time, "eta_max" => Scalar, "stray_noise" => Scalar,
    ],
    "statistics": [
        "spectrum_fwhm" => Frequency, "pulses" => Count, "seed" => Count,
        "window" => Time, "tau_bin" => Time,
    ],
};

fn lookup(section: &str, key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.section == section && k.key == key)
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    text: String,
    line: usize,
}

/// Parsed but not yet validated key/value content of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        let mut any = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            any = true;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("malformed section header `{line}`"),
                })?;
                let name = name.trim();
                if !KEYS.iter().any(|k| k.section == name) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unknown section `[{name}]`"),
                    });
                }
                raw.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let section = current.as_deref().ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("key `{key}` outside of any section"),
            })?;
            let spec = lookup(section, key).ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("unknown key `{key}` in [{section}]"),
            })?;
            // Check units eagerly so the diagnostic carries the line number.
            parse_value(spec.kind, value).map_err(|message| Error::Parse {
                line: lineno,
                message: format!("{section}.{key}: {message}"),
            })?;
            let slot = raw.sections.get_mut(section).expect("section exists");
            if slot.contains_key(key) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate key `{key}` in [{section}]"),
                });
            }
            slot.insert(
                key.to_string(),
                Entry {
                    text: value.to_string(),
                    line: lineno,
                },
            );
        }
        if !any {
            return Err(Error::Parse {
                line: 0,
                message: "configuration is empty".into(),
            });
        }
        Ok(raw)
    }

    /// Sets `section.key` to a numeric value. The unit of an existing entry
    /// is kept; otherwise the canonical unit of the key's kind is used.
    pub fn set_numeric(&mut self, path: &str, value: f64) -> Result<()> {
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::Usage(format!("axis `{path}` must look like section.key")))?;
        let spec = lookup(section, key)
            .ok_or_else(|| Error::Usage(format!("unknown config field `{path}`")))?;
        if matches!(spec.kind, Kind::Flag | Kind::Text) {
            return Err(Error::Usage(format!(
                "config field `{path}` is not numeric"
            )));
        }
        let slot = self.sections.entry(section.to_string()).or_default();
        let unit = match slot.get(key) {
            Some(e) => split_unit(&e.text).1.to_string(),
            None => canonical_unit(spec.kind).to_string(),
        };
        let text = if spec.kind == Kind::Count {
            format!("{}", value.round() as i64)
        } else if unit.is_empty() {
            format!("{value:e}")
        } else {
            format!("{value:e} {unit}")
        };
        parse_value(spec.kind, &text).map_err(Error::Usage)?;
        slot.insert(key.to_string(), Entry { text, line: 0 });
        Ok(())
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn get(&self, section: &str, key: &str) -> Result<Option<Value>> {
        let Some(entry) = self.entry(section, key) else {
            return Ok(None);
        };
        let spec = lookup(section, key).expect("validated at parse time");
        parse_value(spec.kind, &entry.text)
            .map(Some)
            .map_err(|message| Error::Parse {
                line: entry.line,
                message: format!("{section}.{key}: {message}"),
            })
    }

    fn num(&self, section: &str, key: &str) -> Result<Option<f64>> {
        Ok(match self.get(section, key)? {
            Some(Value::Number(x)) => Some(x),
            Some(_) => None,
            None => None,
        })
    }

    fn req(&self, section: &str, key: &str) -> Result<f64> {
        self.num(section, key)?
            .ok_or_else(|| Error::invariant(format!("{section}.{key}"), "required key is missing"))
    }

    fn text(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.text.trim().to_string())
    }

    fn flag(&self, section: &str, key: &str) -> Result<Option<bool>> {
        Ok(match self.get(section, key)? {
            Some(Value::Flag(b)) => Some(b),
            _ => None,
        })
    }

    /// Builds and validates the typed configuration.
    pub fn build(&self) -> Result<TransducerConfig> {
        let k = CODATA;
        let fields = self.build_fields(&k)?;
        let levels = self.build_levels()?;
        let mut config = TransducerConfig {
            constants: k,
            ensemble: self.build_ensemble(&fields)?,
            fields,
            levels,
            pulse: PulseSpec {
                peak_rabi: 0.0,
                fwhm: self.req("pulse", "fwhm")?,
                photon_number: self.num("pulse", "photon_number")?.unwrap_or(1.0),
                center: self.num("pulse", "center")?.unwrap_or(0.0),
            },
            grid: self.build_grid()?,
            storage: self.build_storage()?,
            interactions: self.build_interactions()?,
            thermal: self.build_thermal()?,
            statistics: self.build_statistics()?,
        };
        config.ensemble = derive_cross_sections(&config)?;
        config.pulse.peak_rabi = match self.num("pulse", "peak_rabi")? {
            Some(p) => p,
            None => calibration::peak_rabi_for_photon_number(
                &config.constants,
                config.pulse.photon_number,
                config.pulse.fwhm,
                config.fields.microwave.dipole_ea0,
                config.fields.microwave.angular_frequency(),
                config.receiving_area(),
            ),
        };
        validate(&config)?;
        Ok(config)
    }

    fn build_field(
        &self,
        k: &PhysicalConstants,
        tag: &str,
        needs_carrier: bool,
        default_pol: Polarization,
    ) -> Result<Field> {
        let lambda = self.num("fields", &format!("lambda_{tag}"))?;
        let freq = self.num("fields", &format!("freq_{tag}"))?;
        let frequency = match (lambda, freq) {
            (Some(l), Some(f)) => {
                if ((l * f - k.c) / k.c).abs() > 1e-6 {
                    return Err(Error::invariant(
                        format!("fields.lambda_{tag}"),
                        format!("wavelength {l:e} m and frequency {f:e} Hz disagree (λν ≠ c)"),
                    ));
                }
                f
            }
            (Some(l), None) => {
                if l <= 0.0 {
                    return Err(Error::invariant(
                        format!("fields.lambda_{tag}"),
                        "must be positive",
                    ));
                }
                k.c / l
            }
            (None, Some(f)) => f,
            (None, None) if needs_carrier => {
                return Err(Error::invariant(
                    format!("fields.lambda_{tag}"),
                    "carrier wavelength or frequency is required",
                ))
            }
            (None, None) => f64::NAN,
        };
        let polarization = match self.text("fields", &format!("pol_{tag}")) {
            None => Some(default_pol),
            Some(t) => Some(match t.as_str() {
                "sigma+" | "σ+" => Polarization::SigmaPlus,
                "sigma-" | "σ-" | "σ−" => Polarization::SigmaMinus,
                other => {
                    return Err(Error::invariant(
                        format!("fields.pol_{tag}"),
                        format!("unknown polarization `{other}`"),
                    ))
                }
            }),
        };
        Ok(Field {
            rabi: self.num("fields", &format!("omega_{tag}"))?.unwrap_or(0.0),
            frequency,
            polarization,
            dipole_ea0: self.num("fields", &format!("dipole_{tag}"))?.unwrap_or(0.0),
            beam_radius: self.num("fields", &format!("radius_{tag}"))?,
        })
    }

    fn build_fields(&self, k: &PhysicalConstants) -> Result<FieldParams> {
        use Polarization::*;
        Ok(FieldParams {
            probe: self.build_field(k, "p", true, SigmaPlus)?,
            auxiliary: self.build_field(k, "a", false, SigmaMinus)?,
            write: self.build_field(k, "w", false, SigmaMinus)?,
            read: self.build_field(k, "r", false, SigmaPlus)?,
            microwave: self.build_field(k, "m", true, SigmaPlus)?,
            signal: self.build_field(k, "l", true, SigmaMinus)?,
        })
    }

    fn build_levels(&self) -> Result<LevelScheme> {
        let gamma4 = self.req("levels", "gamma4")?;
        let gamma6 = self.req("levels", "gamma6")?;
        let gamma41 = self.num("levels", "gamma41")?;
        let gamma61 = self.num("levels", "gamma61")?;
        Ok(LevelScheme {
            gamma2: self.req("levels", "gamma2")?,
            gamma3: self.num("levels", "gamma3")?.unwrap_or(0.0),
            gamma4,
            gamma4_spont: self.num("levels", "gamma4_spont")?.unwrap_or(gamma4),
            gamma6,
            gamma41: gamma41.unwrap_or(gamma4),
            gamma51: self.req("levels", "gamma51")?,
            gamma61: gamma61.unwrap_or(gamma6 / 2.0),
            gamma41_is_gamma4: gamma41.is_none(),
            gamma61_is_half_gamma6: gamma61.is_none(),
        })
    }

    fn build_ensemble(&self, fields: &FieldParams) -> Result<EnsembleParams> {
        let length = self.req("ensemble", "length")?;
        let rho11 = self.num("ensemble", "rho11")?;
        let rho33 = self.num("ensemble", "rho33")?;
        let trapped: CptState = if fields.probe.rabi == 0.0 && fields.auxiliary.rabi == 0.0 {
            CptState {
                rho11: 1.0,
                rho33: 0.0,
                rho13: 0.0.into(),
            }
        } else {
            cpt::cpt_zero_order(fields.probe.rabi.into(), fields.auxiliary.rabi.into())?
        };
        let overridden = rho11.is_some() || rho33.is_some();
        let rho11 = rho11.unwrap_or(trapped.rho11);
        let rho33 = rho33.unwrap_or(trapped.rho33);
        // Pure-state coherence consistent with the (possibly overridden)
        // populations; the sign follows the trapping state.
        let rho13 = if overridden {
            -(rho11 * rho33).max(0.0).sqrt()
        } else {
            trapped.rho13.re
        };
        let d_m = self.num("ensemble", "d_m")?;
        let d_l = self.num("ensemble", "d_l")?;
        Ok(EnsembleParams {
            density: self.req("ensemble", "density")?,
            length,
            radius: self.num("ensemble", "radius")?.unwrap_or(66e-6),
            density_halfwidth: self
                .num("ensemble", "density_halfwidth")?
                .unwrap_or(2.0 * length / 3.0),
            d0: self.num("ensemble", "d0")?.unwrap_or(0.0),
            temperature: self.num("ensemble", "temperature")?.unwrap_or(150e-6),
            rho11,
            rho33,
            rho13,
            populations_overridden: overridden,
            sigma_m: 0.0,
            sigma_l: 0.0,
            d_m: d_m.unwrap_or(0.0),
            d_l: d_l.unwrap_or(0.0),
            d_m_overridden: d_m.is_some(),
            d_l_overridden: d_l.is_some(),
        })
    }

    fn build_grid(&self) -> Result<SolverGrid> {
        let d = SolverGrid::default();
        Ok(SolverGrid {
            nz: self.num("grid", "nz")?.map(|x| x as usize).unwrap_or(d.nz),
            dt: self.num("grid", "dt")?.unwrap_or(d.dt),
            t_start: self.num("grid", "t_start")?.unwrap_or(d.t_start),
            t_end: self.num("grid", "t_end")?.unwrap_or(d.t_end),
            co_moving: self.flag("grid", "co_moving")?.unwrap_or(true),
            snapshot_stride: self
                .num("grid", "snapshot_stride")?
                .map(|x| x as usize)
                .unwrap_or(d.snapshot_stride),
        })
    }

    fn build_storage(&self) -> Result<StorageSpec> {
        let direction = match self.text("storage", "direction").as_deref() {
            None | Some("backward") => RetrievalDirection::Backward,
            Some("forward") => RetrievalDirection::Forward,
            Some(other) => {
                return Err(Error::invariant(
                    "storage.direction",
                    format!("expected `forward` or `backward`, found `{other}`"),
                ))
            }
        };
        Ok(StorageSpec {
            hold: self.num("storage", "hold")?.unwrap_or(50e-9),
            ramp: self.num("storage", "ramp")?.unwrap_or(10e-9),
            write_off: self.num("storage", "write_off")?,
            read_window: self.num("storage", "read_window")?.unwrap_or(3e-6),
            t_dl: self.num("storage", "t_dl")?.unwrap_or(123e-9),
            t_pl: self.num("storage", "t_pl")?.unwrap_or(620e-9),
            eta_s: self.num("storage", "eta_s")?.unwrap_or(1.0),
            eta_c: self.num("storage", "eta_c")?.unwrap_or(1.0),
            direction,
            omega_points: self
                .num("grid", "omega_points")?
                .map(|x| x as usize)
                .unwrap_or(4096),
            omega_span: self.num("grid", "omega_span")?.unwrap_or(8.0),
        })
    }

    fn build_interactions(&self) -> Result<InteractionParams> {
        let d = InteractionParams::default();
        let rho33_source = match self.text("dephasing", "rho33_source").as_deref() {
            None => d.rho33_source,
            Some("cpt") => Rho33Source::TrappedState,
            Some("ensemble") => Rho33Source::Ensemble,
            Some(other) => match other.parse::<f64>() {
                Ok(r) if (0.0..=1.0).contains(&r) => Rho33Source::Fixed(r),
                _ => {
                    return Err(Error::invariant(
                        "dephasing.rho33_source",
                        format!(
                            "expected cpt, ensemble or a population in [0, 1]; found `{other}`"
                        ),
                    ))
                }
            },
        };
        let c6_convention = match self.text("dephasing", "c6_convention").as_deref() {
            None => d.c6_convention,
            Some("cyclic") => C6Convention::Cyclic,
            Some("angular") => C6Convention::Angular,
            Some(other) => {
                return Err(Error::invariant(
                    "dephasing.c6_convention",
                    format!("expected cyclic or angular, found `{other}`"),
                ))
            }
        };
        // Coefficients are stored as given (ω/2π units); the convention flag
        // decides whether 2π is applied when they are used.
        Ok(InteractionParams {
            c6_33: self.num("dephasing", "c6_33")?.unwrap_or(d.c6_33),
            c6_55: self.num("dephasing", "c6_55")?.unwrap_or(d.c6_55),
            c6_35_mean: self.num("dephasing", "c6_35_mean")?.unwrap_or(d.c6_35_mean),
            c3: self.num("dephasing", "c3")?.unwrap_or(d.c3),
            gamma_pump: self.num("dephasing", "gamma_pump")?.unwrap_or(d.gamma_pump),
            coupling_waist: self
                .num("dephasing", "coupling_waist")?
                .unwrap_or(d.coupling_waist),
            blockade_radius: self.num("dephasing", "blockade_radius")?,
            rho33_source,
            c6_convention,
        })
    }

    fn build_thermal(&self) -> Result<ThermalScenario> {
        let d = ThermalScenario::default();
        Ok(ThermalScenario {
            frequency: self.num("thermal", "frequency")?.unwrap_or(d.frequency),
            temperature: self.num("thermal", "temperature")?.unwrap_or(d.temperature),
            bandwidth: self.num("thermal", "bandwidth")?.unwrap_or(d.bandwidth),
            interaction_time: self
                .num("thermal", "interaction_time")?
                .unwrap_or(d.interaction_time),
            radius: self.num("ensemble", "radius")?.unwrap_or(d.radius),
            length: self.num("ensemble", "length")?.unwrap_or(d.length),
            eta_max: self.num("thermal", "eta_max")?.unwrap_or(d.eta_max),
            stray_noise: self.num("thermal", "stray_noise")?.unwrap_or(d.stray_noise),
        })
    }

    fn build_statistics(&self) -> Result<StatisticsParams> {
        let d = StatisticsParams::default();
        Ok(StatisticsParams {
            spectrum_fwhm: self
                .num("statistics", "spectrum_fwhm")?
                .unwrap_or(d.spectrum_fwhm),
            pulses: self
                .num("statistics", "pulses")?
                .map(|x| x as u64)
                .unwrap_or(d.pulses),
            seed: self
                .num("statistics", "seed")?
                .map(|x| x as u64)
                .unwrap_or(d.seed),
            window: self.num("statistics", "window")?.unwrap_or(d.window),
            tau_bin: self.num("statistics", "tau_bin")?.unwrap_or(d.tau_bin),
        })
    }
}

fn validate(c: &TransducerConfig) -> Result<()> {
    let f = &c.fields;
    for (name, field) in [
        ("fields.omega_p", &f.probe),
        ("fields.omega_a", &f.auxiliary),
        ("fields.omega_w", &f.write),
        ("fields.omega_r", &f.read),
        ("fields.omega_m", &f.microwave),
        ("fields.omega_l", &f.signal),
    ] {
        if !(field.rabi >= 0.0) {
            return Err(Error::invariant(
                name,
                "Rabi frequency must be non-negative",
            ));
        }
        if field.dipole_ea0 < 0.0 {
            return Err(Error::invariant(
                name.replace("omega", "dipole"),
                "must be non-negative",
            ));
        }
    }
    let lv = &c.levels;
    for (name, v) in [
        ("levels.gamma2", lv.gamma2),
        ("levels.gamma3", lv.gamma3),
        ("levels.gamma4", lv.gamma4),
        ("levels.gamma4_spont", lv.gamma4_spont),
        ("levels.gamma6", lv.gamma6),
        ("levels.gamma41", lv.gamma41),
        ("levels.gamma51", lv.gamma51),
        ("levels.gamma61", lv.gamma61),
    ] {
        if !(v >= 0.0) {
            return Err(Error::invariant(name, "rate must be non-negative"));
        }
    }
    let e = &c.ensemble;
    for (name, v) in [
        ("ensemble.density", e.density),
        ("ensemble.length", e.length),
        ("ensemble.radius", e.radius),
    ] {
        if !(v > 0.0) {
            return Err(Error::invariant(name, "must be positive"));
        }
    }
    if !(0.0..=1.0).contains(&e.rho11) {
        return Err(Error::invariant(
            "ensemble.rho11",
            "population must lie in [0, 1]",
        ));
    }
    if !(0.0..=1.0).contains(&e.rho33) {
        return Err(Error::invariant(
            "ensemble.rho33",
            "population must lie in [0, 1]",
        ));
    }
    if e.rho11 + e.rho33 > 1.0 + 1e-12 {
        return Err(Error::invariant("ensemble.rho33", "ρ11 + ρ33 exceeds one"));
    }
    if e.d_m < 0.0 || e.d_l < 0.0 {
        return Err(Error::invariant(
            "ensemble.d_m",
            "optical depths must be non-negative",
        ));
    }
    if !(c.pulse.fwhm > 0.0) {
        return Err(Error::invariant("pulse.fwhm", "must be positive"));
    }
    if c.pulse.photon_number < 0.0 {
        return Err(Error::invariant(
            "pulse.photon_number",
            "must be non-negative",
        ));
    }
    c.grid.validate(e.length, c.constants.c)?;
    let s = &c.storage;
    for (name, v) in [("storage.eta_s", s.eta_s), ("storage.eta_c", s.eta_c)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invariant(name, "efficiency must lie in [0, 1]"));
        }
    }
    if s.omega_points < 16 {
        return Err(Error::invariant(
            "grid.omega_points",
            "need at least 16 points",
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Values and units
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Flag(bool),
    Text,
}

fn split_unit(text: &str) -> (&str, &str) {
    let text = text.trim();
    match text.find(char::is_whitespace) {
        Some(pos) => (&text[..pos], text[pos..].trim()),
        None => (text, ""),
    }
}

fn canonical_unit(kind: Kind) -> &'static str {
    match kind {
        Kind::Rate => "MHz",
        Kind::Frequency => "Hz",
        Kind::Length => "m",
        Kind::Time => "s",
        Kind::Density => "m^-3",
        Kind::Temperature => "K",
        Kind::Dipole => "ea0",
        Kind::C6 => "GHz*um^6",
        Kind::C3 => "GHz*um^3",
        Kind::Scalar | Kind::Count | Kind::Flag | Kind::Text => "",
    }
}

fn parse_value(kind: Kind, text: &str) -> std::result::Result<Value, String> {
    match kind {
        Kind::Text => {
            if text.trim().is_empty() {
                Err("empty value".into())
            } else {
                Ok(Value::Text)
            }
        }
        Kind::Flag => match text.trim() {
            "true" | "yes" | "1" => Ok(Value::Flag(true)),
            "false" | "no" | "0" => Ok(Value::Flag(false)),
            other => Err(format!("expected true/false, found `{other}`")),
        },
        _ => {
            let (num, unit) = split_unit(text);
            let x: f64 = num
                .parse()
                .map_err(|_| format!("`{num}` is not a number"))?;
            if !x.is_finite() {
                return Err(format!("`{num}` is not finite"));
            }
            let scale = unit_scale(kind, unit)?;
            if kind == Kind::Count && (x < 0.0 || x.fract() != 0.0) {
                return Err(format!("`{num}` is not a non-negative integer"));
            }
            Ok(Value::Number(x * scale))
        }
    }
}

fn unit_scale(kind: Kind, unit: &str) -> std::result::Result<f64, String> {
    let unit = unit.replace(['µ', 'μ'], "u");
    let freq = |u: &str| -> Option<f64> {
        Some(match u {
            "Hz" => 1.0,
            "kHz" => 1e3,
            "MHz" => 1e6,
            "GHz" => 1e9,
            "THz" => 1e12,
            _ => return None,
        })
    };
    let scale = match kind {
        Kind::Rate => freq(&unit).map(|s| s * TWO_PI),
        Kind::Frequency => freq(&unit),
        Kind::Length => match unit.as_str() {
            "nm" => Some(1e-9),
            "um" => Some(1e-6),
            "mm" => Some(1e-3),
            "cm" => Some(1e-2),
            "m" => Some(1.0),
            _ => None,
        },
        Kind::Time => match unit.as_str() {
            "ps" => Some(1e-12),
            "ns" => Some(1e-9),
            "us" => Some(1e-6),
            "ms" => Some(1e-3),
            "s" => Some(1.0),
            _ => None,
        },
        Kind::Density => match unit.as_str() {
            "cm^-3" => Some(1e6),
            "m^-3" => Some(1.0),
            _ => None,
        },
        Kind::Temperature => match unit.as_str() {
            "K" => Some(1.0),
            "mK" => Some(1e-3),
            "uK" => Some(1e-6),
            _ => None,
        },
        Kind::Dipole => match unit.as_str() {
            "" | "ea0" => Some(1.0),
            _ => None,
        },
        Kind::C6 => match unit.as_str() {
            "GHz*um^6" => Some(1e9 * 1e-36),
            "MHz*um^6" => Some(1e6 * 1e-36),
            "Hz*m^6" => Some(1.0),
            _ => None,
        },
        Kind::C3 => match unit.as_str() {
            "GHz*um^3" => Some(1e9 * 1e-18),
            "MHz*um^3" => Some(1e6 * 1e-18),
            "Hz*m^3" => Some(1.0),
            _ => None,
        },
        Kind::Scalar | Kind::Count => match unit.as_str() {
            "" => Some(1.0),
            _ => None,
        },
        Kind::Flag | Kind::Text => Some(1.0),
    };
    scale.ok_or_else(|| {
        if unit.is_empty() {
            format!("missing unit (expected e.g. `{}`)", canonical_unit(kind))
        } else {
            format!(
                "unit `{unit}` is not valid here (expected e.g. `{}`)",
                canonical_unit(kind)
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::per_two_pi;

    fn mhz(rad: f64) -> f64 {
        per_two_pi(rad) / 1e6
    }

    #[test]
    fn bundled_fig2a_matches_caption() {
        let c = TransducerConfig::paper_fig2a();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9 * b.abs().max(1e-3);
        assert!(close(mhz(c.fields.probe.rabi), 2.1));
        assert!(close(mhz(c.fields.auxiliary.rabi), 7.6));
        assert!(close(mhz(c.fields.write.rabi), 1.8));
        assert!(close(mhz(c.fields.read.rabi), 9.0));
        assert!(close(mhz(c.levels.gamma2), 6.0));
        assert!(close(mhz(c.levels.gamma3), 0.5));
        assert!(close(mhz(c.levels.gamma4), 0.001));
        assert!(close(mhz(c.levels.gamma6), 1.0));
        assert!(c.levels.gamma41_is_gamma4);
        assert_eq!(c.levels.gamma41, c.levels.gamma4);
        assert!(c.levels.gamma61_is_half_gamma6);
        assert_eq!(c.levels.gamma61, c.levels.gamma6 / 2.0);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(RawConfig::parse(""), Err(Error::Parse { .. })));
        assert!(matches!(
            RawConfig::parse("  # only a comment\n\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn negative_probe_rabi_is_named() {
        let text = PAPER_FIG2A.replace("omega_p = 2.1 MHz", "omega_p = -2.1 MHz");
        let err = RawConfig::parse(&text).unwrap().build().unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert_eq!(field, "fields.omega_p"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = RawConfig::parse("[fields]\nomega_p = 2.1 parsecs\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("omega_p"));
            }
            other => panic!("unexpected error {other}"),
        }
        let err = RawConfig::parse("[fields]\nomega_q = 2.1 MHz\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = RawConfig::parse("omega_p = 2.1 MHz\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn wavelength_frequency_consistency() {
        let text = PAPER_FIG2A.replace("lambda_m = 7.9 mm", "lambda_m = 7.9 mm\nfreq_m = 37.5 GHz");
        // 7.9 mm and 37.5 GHz differ by ~1 %, beyond the 1e-6 tolerance.
        let err = RawConfig::parse(&text).unwrap().build().unwrap_err();
        assert!(matches!(err, Error::Invariant { .. }));
    }

    #[test]
    fn cross_sections_and_linearity() {
        let c = TransducerConfig::paper_fig3();
        let k = c.constants;
        let sigma = absorption_cross_section(&k, 1271.0, 7.9e-3, TWO_PI * 740.0).unwrap();
        // Hand evaluation of 4π|μ|²/(λ ε0 ħ Γ).
        let mu = 1271.0 * 8.478_353_625_5e-30;
        let expect = 4.0 * std::f64::consts::PI * mu * mu
            / (7.9e-3 * 8.854_187_812_8e-12 * 1.054_571_817e-34 * TWO_PI * 740.0);
        assert!(((sigma - expect) / expect).abs() < 1e-12);

        let mut c2 = c.clone();
        c2.ensemble.d_m_overridden = false;
        c2.ensemble.rho33 = 0.02;
        let a = derive_cross_sections(&c2).unwrap();
        c2.ensemble.rho33 = 0.04;
        let b = derive_cross_sections(&c2).unwrap();
        assert!((b.d_m / a.d_m - 2.0).abs() < 1e-12);
        c2.ensemble.rho33 = 0.0;
        assert_eq!(derive_cross_sections(&c2).unwrap().d_m, 0.0);

        c2.levels.gamma4_spont = 0.0;
        assert!(matches!(
            derive_cross_sections(&c2),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn set_numeric_keeps_units() {
        let mut raw = RawConfig::parse(PAPER_FIG2A).unwrap();
        raw.set_numeric("fields.omega_w", 3.6).unwrap();
        let c = raw.build().unwrap();
        assert!((mhz(c.fields.write.rabi) - 3.6).abs() < 1e-12);
        assert!(raw.set_numeric("storage.direction", 1.0).is_err());
        assert!(raw.set_numeric("nonsense", 1.0).is_err());
    }
}
