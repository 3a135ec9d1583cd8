//! Time-domain integration of the first-order Maxwell-Bloch system through
//! write, hold and read.
//!
//! Both ladders share one structure. With ζ = z/L and τ = t − z/c,
//!
//! ```text
//! ∂ζ Ω = i g P
//! ∂τ P = −γp P + (i/2) b Ω + (i/2) Ωc S
//! ∂τ S = −γs S + (i/2) Ωc* P
//! ```
//!
//! where S is the |1⟩↔|5⟩ spin wave, P the optical or microwave coherence
//! and Ωc the write or read control. For the microwave ladder b = ρ13 and
//! g b = ρ33 d_M Γ4 / 2, which reproduces the analytic propagation kernel;
//! for the optical ladder b = ρ11 and g = d_L Γ6 / 2.
//!
//! The quantity
//!
//! ```text
//! (2g/b) ∫ (|P|² + |S|²) dζ + ∫ (|Ω(1,τ)|² − |Ω(0,τ)|²) dτ
//! ```
//!
//! is constant when every decay vanishes, so |Ω|² is a photon flux in a
//! common unit for both channels and (2g/b)|S|² is the stored excitation
//! density. The spin wave is rescaled between ladders so that this
//! excitation number is handed over unchanged.
//!
//! The CPT background (ρ11, ρ33, ρ13) is frozen at its configured value for
//! the whole sequence.

use num_complex::Complex64;

use crate::config::{RetrievalDirection, TransducerConfig};
use crate::error::{Error, Result};
use crate::spectral;

type C = Complex64;

const I: C = C::new(0.0, 1.0);
const ZERO: C = C::new(0.0, 0.0);

/// Coherences above this magnitude leave the perturbative regime.
pub const WEAK_EXCITATION_LIMIT: f64 = 0.1;

/// Space-time discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    pub nz: usize,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Integrate in the retarded frame τ = t − z/c. Otherwise the field is
    /// advanced explicitly in the lab frame and dt ≤ dz/c is required.
    pub co_moving: bool,
    /// Keep every n-th time step in the recorded field history.
    pub snapshot_stride: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        SolverGrid {
            nz: 128,
            dt: 1e-9,
            t_start: 0.0,
            t_end: 4e-6,
            co_moving: true,
            snapshot_stride: 10,
        }
    }
}

impl SolverGrid {
    pub fn dz(&self, length: f64) -> f64 {
        length / (self.nz - 1) as f64
    }

    pub fn nt(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize + 1
    }

    pub fn validate(&self, length: f64, c: f64) -> Result<()> {
        if self.nz < 8 {
            return Err(Error::invariant(
                "grid.nz",
                "need at least 8 spatial points",
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invariant("grid.dt", "must be positive"));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::invariant("grid.t_end", "must exceed t_start"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::invariant(
                "grid.snapshot_stride",
                "must be at least 1",
            ));
        }
        if !self.co_moving && self.dt > self.dz(length) / c {
            return Err(Error::RefineGrid(format!(
                "lab-frame stepping needs dt ≤ dz/c = {:e} s, got {:e} s",
                self.dz(length) / c,
                self.dt
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear write and read control envelopes on the absolute clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub write_level: f64,
    pub read_level: f64,
    /// Start of the write ramp-down; `None` keeps the write field on.
    pub write_off: Option<f64>,
    /// Start of the read ramp-up.
    pub read_on: f64,
    pub ramp: f64,
}

impl ControlSchedule {
    /// Write off when the pulse centre sits mid-medium (or at the configured
    /// time), read on after the hold.
    pub fn from_config(cfg: &TransducerConfig) -> Result<Self> {
        let off = match cfg.storage.write_off {
            Some(t) => t,
            None => cfg.pulse.center + spectral::broadening_and_delay(cfg)?.t_dm / 2.0,
        };
        let s = ControlSchedule {
            write_level: cfg.fields.write.rabi,
            read_level: cfg.fields.read.rabi,
            write_off: Some(off),
            read_on: off + cfg.storage.ramp + cfg.storage.hold,
            ramp: cfg.storage.ramp,
        };
        s.validate()?;
        Ok(s)
    }

    /// Write field held on for the whole window; no read.
    pub fn constant_write(cfg: &TransducerConfig) -> Self {
        ControlSchedule {
            write_level: cfg.fields.write.rabi,
            read_level: 0.0,
            write_off: None,
            read_on: f64::INFINITY,
            ramp: cfg.storage.ramp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ramp < 0.0 {
            return Err(Error::invariant("storage.ramp", "must be non-negative"));
        }
        if let Some(off) = self.write_off {
            if self.read_level > 0.0 && self.read_on < off + self.ramp {
                return Err(Error::invariant(
                    "storage.hold",
                    "read field would overlap the write field",
                ));
            }
        } else if self.read_level > 0.0 && self.read_on.is_finite() {
            return Err(Error::invariant(
                "storage.write_off",
                "read cannot start while the write field stays on",
            ));
        }
        Ok(())
    }

    /// End of the write ramp-down.
    pub fn write_end(&self) -> Option<f64> {
        self.write_off.map(|t| t + self.ramp)
    }

    pub fn write(&self, t: f64) -> f64 {
        match self.write_off {
            None => self.write_level,
            Some(off) if t < off => self.write_level,
            Some(off) if t < off + self.ramp => self.write_level * (1.0 - (t - off) / self.ramp),
            Some(_) => 0.0,
        }
    }

    pub fn read(&self, t: f64) -> f64 {
        if t < self.read_on {
            0.0
        } else if t < self.read_on + self.ramp {
            self.read_level * (t - self.read_on) / self.ramp
        } else {
            self.read_level
        }
    }

    pub fn sample(&self, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            times.iter().map(|&t| self.write(t)).collect(),
            times.iter().map(|&t| self.read(t)).collect(),
        )
    }
}

/// Recorded history on the (z, t) grid, every `snapshot_stride` steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpinWaveField {
    pub z: Vec<f64>,
    pub times: Vec<f64>,
    pub omega_m: Vec<Vec<C>>,
    pub omega_l: Vec<Vec<C>>,
    pub p41: Vec<Vec<C>>,
    pub p51: Vec<Vec<C>>,
    pub p61: Vec<Vec<C>>,
    pub direction: Option<RetrievalDirection>,
    pub max_coherence: f64,
    /// Some |P| exceeded [`WEAK_EXCITATION_LIMIT`].
    pub weak_excitation_violated: bool,
}

/// One ladder of the first-order system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub b: f64,
    pub g: f64,
    pub gamma_p: f64,
    pub gamma_s: f64,
}

impl Channel {
    pub fn microwave(cfg: &TransducerConfig) -> Result<Self> {
        let b = cfg.ensemble.rho13;
        let od = cfg.effective_mw_od();
        if od > 0.0 && b == 0.0 {
            return Err(Error::Domain(
                "microwave ladder has OD but no |1⟩↔|3⟩ coherence".into(),
            ));
        }
        Ok(Channel {
            b,
            g: if od == 0.0 {
                0.0
            } else {
                od * cfg.levels.gamma4 / (2.0 * b)
            },
            gamma_p: cfg.levels.gamma41,
            gamma_s: cfg.levels.gamma51,
        })
    }

    pub fn optical(cfg: &TransducerConfig) -> Self {
        Channel {
            b: cfg.ensemble.rho11,
            g: cfg.ensemble.d_l * cfg.levels.gamma6 / 2.0,
            gamma_p: cfg.levels.gamma61,
            gamma_s: cfg.levels.gamma51,
        }
    }

    /// Weight 2g/b turning ∫|S|²dζ into a photon number in flux units.
    pub fn excitation_weight(&self) -> f64 {
        if self.b == 0.0 {
            0.0
        } else {
            2.0 * self.g / self.b
        }
    }
}

/// exp(A dt) for A = [[−γp, iΩc/2], [iΩc/2, −γs]].
fn local_propagator(ch: &Channel, control: f64, dt: f64) -> [[C; 2]; 2] {
    let mean = -(ch.gamma_p + ch.gamma_s) / 2.0;
    let delta = (ch.gamma_p - ch.gamma_s) / 2.0;
    let off = I * control / 2.0;
    // A = mean·1 + M with M = [[−δ, off], [off, δ]] and M² = q·1.
    let q = C::new(delta * delta, 0.0) + off * off;
    let x = q.sqrt() * dt;
    let (cosh, sinhc) = if x.norm() < 1e-4 {
        let x2 = x * x;
        (
            1.0 + x2 / 2.0 + x2 * x2 / 24.0,
            1.0 + x2 / 6.0 + x2 * x2 / 120.0,
        )
    } else {
        (x.cosh(), x.sinh() / x)
    };
    let scale = (mean * dt).exp();
    let s = sinhc * dt;
    [
        [(cosh - s * delta) * scale, s * off * scale],
        [s * off * scale, (cosh + s * delta) * scale],
    ]
}

struct Run {
    times: Vec<f64>,
    input: Vec<C>,
    output: Vec<C>,
    history: SpinWaveField,
}

/// Integrates one ladder from `t0` for `steps` steps, starting from the
/// given coherences. `coherent` records (Ω, P, S) snapshots into the
/// history slots chosen by `optical`.
#[allow(clippy::too_many_arguments)]
fn integrate(
    ch: &Channel,
    grid: &SolverGrid,
    length: f64,
    c: f64,
    t0: f64,
    steps: usize,
    control: impl Fn(f64) -> f64,
    input: impl Fn(f64) -> C,
    p: &mut [C],
    s: &mut [C],
    optical: bool,
) -> Run {
    let nz = p.len();
    let dzeta = 1.0 / (nz - 1) as f64;
    let dt = grid.dt;
    let half = I * ch.g * dzeta / 2.0;
    let kappa = I * ch.b * dt / 4.0;
    let denom = 1.0 - kappa * half;

    let mut omega = vec![ZERO; nz];
    omega[0] = input(t0);
    for j in 1..nz {
        omega[j] = omega[j - 1] + half * (p[j - 1] + p[j]);
    }

    let mut history = SpinWaveField {
        z: (0..nz).map(|j| j as f64 * dzeta * length).collect(),
        ..Default::default()
    };
    let record = |h: &mut SpinWaveField, t: f64, omega: &[C], p: &[C], s: &[C]| {
        h.times.push(t);
        if optical {
            h.omega_l.push(omega.to_vec());
            h.p61.push(p.to_vec());
        } else {
            h.omega_m.push(omega.to_vec());
            h.p41.push(p.to_vec());
        }
        h.p51.push(s.to_vec());
    };
    let mut max_coh = p
        .iter()
        .chain(s.iter())
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    record(&mut history, t0, &omega, p, s);

    let mut times = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    times.push(t0);
    inputs.push(omega[0]);
    outputs.push(omega[nz - 1]);

    let mut r_p = vec![ZERO; nz];
    let mut r_s = vec![ZERO; nz];
    let nu = c * dt / (length * dzeta);
    let lab_gain = I * ch.g * c * dt / length;

    for n in 0..steps {
        let t = t0 + n as f64 * dt;
        let t_next = t0 + (n + 1) as f64 * dt;
        let e = local_propagator(ch, control(t + dt / 2.0), dt);
        for j in 0..nz {
            let fp = p[j] + (dt / 2.0) * (I * ch.b / 2.0) * omega[j];
            r_p[j] = e[0][0] * fp + e[0][1] * s[j];
            r_s[j] = e[1][0] * fp + e[1][1] * s[j];
        }
        let inp = input(t_next);
        if grid.co_moving {
            omega[0] = inp;
            p[0] = r_p[0] + kappa * omega[0];
            s[0] = r_s[0];
            for j in 1..nz {
                let carry = omega[j - 1] + half * p[j - 1];
                p[j] = (r_p[j] + kappa * carry) / denom;
                omega[j] = carry + half * p[j];
                s[j] = r_s[j];
            }
        } else {
            // Explicit upwind transport, then the atoms see the new field.
            for j in (1..nz).rev() {
                omega[j] = omega[j] - nu * (omega[j] - omega[j - 1]) + lab_gain * p[j];
            }
            omega[0] = inp;
            for j in 0..nz {
                p[j] = r_p[j] + kappa * omega[j];
                s[j] = r_s[j];
            }
        }
        for j in 0..nz {
            max_coh = max_coh.max(p[j].norm()).max(s[j].norm());
        }
        times.push(t_next);
        inputs.push(omega[0]);
        outputs.push(omega[nz - 1]);
        if (n + 1) % grid.snapshot_stride == 0 || n + 1 == steps {
            record(&mut history, t_next, &omega, p, s);
        }
    }
    history.max_coherence = max_coh;
    history.weak_excitation_violated = max_coh > WEAK_EXCITATION_LIMIT;
    Run {
        times,
        input: inputs,
        output: outputs,
        history,
    }
}

/// ∫|y|² dt by the trapezoid rule on a uniform grid.
pub fn energy(values: &[C], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().map(|z| z.norm_sqr()).sum();
            dt * (inner + 0.5 * (values[0].norm_sqr() + values[n - 1].norm_sqr()))
        }
    }
}

/// ∫|S|² dζ by the trapezoid rule on [0, 1].
pub fn spatial_norm(s: &[C]) -> f64 {
    energy(s, 1.0 / (s.len() - 1) as f64)
}

fn check_resolution(cfg: &TransducerConfig) -> Result<()> {
    let g = &cfg.grid;
    let tp = cfg.pulse.fwhm;
    if g.dt > tp / 20.0 {
        return Err(Error::RefineGrid(format!(
            "dt = {:e} s resolves the {:e} s pulse with fewer than 20 steps",
            g.dt, tp
        )));
    }
    if let Ok(b) = spectral::broadening_and_delay(cfg) {
        if b.t_dm > tp {
            let extent = tp / b.t_dm;
            let dzeta = 1.0 / (g.nz - 1) as f64;
            if extent / dzeta < 8.0 {
                return Err(Error::RefineGrid(format!(
                    "compressed pulse spans {:.1} cells; need nz ≥ {}",
                    extent / dzeta,
                    (8.0 / extent).ceil() as usize + 1
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageResult {
    pub field: SpinWaveField,
    /// P51(z) at the end of the write ramp.
    pub spin_wave: Vec<C>,
    pub times: Vec<f64>,
    pub input: Vec<C>,
    pub output: Vec<C>,
    pub input_energy: f64,
    pub transmitted_energy: f64,
    /// Excitation left in the spin wave at write-off.
    pub stored_energy: f64,
    pub stored_fraction: f64,
}

/// Write stage: read field off, microwave pulse enters at ζ = 0. Runs to
/// the end of the write ramp, or to `grid.t_end` when the write field stays
/// on.
pub fn simulate_storage(
    cfg: &TransducerConfig,
    schedule: &ControlSchedule,
) -> Result<StorageResult> {
    schedule.validate()?;
    check_resolution(cfg)?;
    let g = &cfg.grid;
    let pulse = &cfg.pulse;
    if pulse.envelope(g.t_start).abs() > 1e-6 * pulse.peak_rabi.abs() {
        return Err(Error::invariant(
            "grid.t_start",
            "input pulse has not decayed at the start of the window",
        ));
    }
    let t_stop = schedule.write_end().unwrap_or(g.t_end);
    if t_stop <= g.t_start {
        return Err(Error::invariant(
            "storage.write_off",
            "write field turns off before the window",
        ));
    }
    let steps = ((t_stop - g.t_start) / g.dt).ceil() as usize;
    let ch = Channel::microwave(cfg)?;
    let mut p = vec![ZERO; g.nz];
    let mut s = vec![ZERO; g.nz];
    let run = integrate(
        &ch,
        g,
        cfg.ensemble.length,
        cfg.constants.c,
        g.t_start,
        steps,
        |t| schedule.write(t),
        |t| C::new(pulse.envelope(t), 0.0),
        &mut p,
        &mut s,
        false,
    );
    // The part of the pulse arriving after write-off is lost, not ignored.
    let full: Vec<C> = (0..g.nt())
        .map(|i| C::new(pulse.envelope(g.t_start + i as f64 * g.dt), 0.0))
        .collect();
    let input_energy = energy(&full, g.dt);
    let transmitted_energy = energy(&run.output, g.dt);
    let stored_energy = ch.excitation_weight() * spatial_norm(&s);
    Ok(StorageResult {
        field: run.history,
        spin_wave: s,
        times: run.times,
        input: run.input,
        output: run.output,
        input_energy,
        transmitted_energy,
        stored_energy,
        stored_fraction: if input_energy > 0.0 {
            stored_energy / input_energy
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub field: SpinWaveField,
    pub times: Vec<f64>,
    pub output: Vec<C>,
    /// Spin-wave excitation at read-on, in flux units.
    pub initial_energy: f64,
    pub retrieved_energy: f64,
}

/// Read stage from a stored P51(z) (storage normalization, z measured from
/// the microwave entrance). Backward retrieval reverses the spin wave in
/// space and integrates the same forward equations: emission towards the
/// original entrance face.
pub fn simulate_retrieval(
    spin_wave: &[C],
    cfg: &TransducerConfig,
    schedule: &ControlSchedule,
    direction: RetrievalDirection,
) -> Result<RetrievalResult> {
    schedule.validate()?;
    let g = &cfg.grid;
    if spin_wave.len() != g.nz {
        return Err(Error::Domain(format!(
            "spin wave has {} points, grid has {}",
            spin_wave.len(),
            g.nz
        )));
    }
    let write = Channel::microwave(cfg)?;
    let read = Channel::optical(cfg);
    let w_read = read.excitation_weight();
    let scale = if w_read > 0.0 {
        (write.excitation_weight() / w_read).sqrt()
    } else {
        0.0
    };
    let mut s: Vec<C> = spin_wave.iter().map(|&x| x * scale).collect();
    if direction == RetrievalDirection::Backward {
        s.reverse();
    }
    let initial_energy = w_read * spatial_norm(&s);
    let mut p = vec![ZERO; g.nz];
    let t0 = if schedule.read_on.is_finite() {
        schedule.read_on
    } else {
        0.0
    };
    let steps = (cfg.storage.read_window / g.dt).ceil() as usize;
    let run = integrate(
        &read,
        g,
        cfg.ensemble.length,
        cfg.constants.c,
        t0,
        steps,
        |t| schedule.read(t),
        |_| ZERO,
        &mut p,
        &mut s,
        true,
    );
    let mut field = run.history;
    field.direction = Some(direction);
    Ok(RetrievalResult {
        retrieved_energy: energy(&run.output, g.dt),
        field,
        times: run.times,
        output: run.output,
        initial_energy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transduction {
    pub storage: StorageResult,
    pub retrieval: RetrievalResult,
    pub schedule: ControlSchedule,
    /// Retrieved optical photons per input microwave photon.
    pub eta_sim: f64,
    pub retrieval_efficiency: f64,
    pub weak_excitation_violated: bool,
}

/// Storage, hold (P51 decays at γ51), then retrieval in the configured
/// direction.
pub fn simulate_full_transduction(cfg: &TransducerConfig) -> Result<Transduction> {
    let schedule = ControlSchedule::from_config(cfg)?;
    let storage = simulate_storage(cfg, &schedule)?;
    let decay = (-cfg.levels.gamma51 * cfg.storage.hold).exp();
    let held: Vec<C> = storage.spin_wave.iter().map(|&x| x * decay).collect();
    let retrieval = simulate_retrieval(&held, cfg, &schedule, cfg.storage.direction)?;
    let eta_sim = if storage.input_energy > 0.0 {
        retrieval.retrieved_energy / storage.input_energy
    } else {
        0.0
    };
    let retrieval_efficiency = if retrieval.initial_energy > 0.0 {
        retrieval.retrieved_energy / retrieval.initial_energy
    } else {
        0.0
    };
    Ok(Transduction {
        weak_excitation_violated: storage.field.weak_excitation_violated
            || retrieval.field.weak_excitation_violated,
        storage,
        retrieval,
        schedule,
        eta_sim,
        retrieval_efficiency,
    })
}
