//! Detected counts from a simulated transduction, fed back through the
//! count-based efficiency estimate.

use transduce::calibration::{ase_from_counts, fluence, input_photon_number, DetectionEfficiency};
use transduce::solver::simulate_full_transduction;
use transduce::TransducerConfig;

#[test]
fn efficiency_from_counts_recovers_the_simulation() {
    let cfg = TransducerConfig::paper_fig2a();
    let k = &cfg.constants;
    let t = simulate_full_transduction(&cfg).unwrap();
    let dt = cfg.grid.dt;
    let rabi: Vec<f64> = (0..cfg.grid.nt())
        .map(|i| cfg.pulse.envelope(cfg.grid.t_start + i as f64 * dt))
        .collect();
    let area = cfg.receiving_area();
    let mw = &cfg.fields.microwave;
    let omega_m = mw.angular_frequency();
    let n_in = input_photon_number(k, &rabi, dt, area, mw.dipole_ea0, omega_m);
    // The configured photon number fixes the pulse amplitude.
    assert!((n_in - cfg.pulse.photon_number).abs() < 1e-3 * cfg.pulse.photon_number);

    let kappa = DetectionEfficiency::default().kappa();
    let noise = 0.119;
    for pulses in [1.0, 1e4] {
        let c_n = noise * kappa * pulses;
        let c_l = c_n + kappa * t.eta_sim * n_in * pulses;
        let f = fluence(k, &rabi, dt, mw.dipole_ea0) * pulses;
        let eta = ase_from_counts(k, c_l, c_n, kappa, area, f, omega_m).unwrap();
        assert!(
            (eta - t.eta_sim).abs() <= 0.01 * t.eta_sim,
            "{eta} vs {}",
            t.eta_sim
        );
    }
}
