use std::path::Path;
use std::process::{Command, Output};

fn transduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transduce"))
        .args(args)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let out = transduce(&["run", "fig9z"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for name in transduce::experiments::EXPERIMENTS {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn run_writes_summary_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s3b");
    let out = transduce(&["run", "s3b", "--out", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(
        summary[0],
        ["name", "engine_value", "paper_value", "tolerance", "pass"]
    );
    assert!(summary[1..]
        .iter()
        .all(|r| r[4] == "pass" || r[4] == "report"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["experiment"], "s3b");
    assert!(meta["timestamp_unix"].as_u64().unwrap() > 0);
    assert!(read_csv(&out_dir.join("efficiency_vs_length.csv")).len() > 100);
}

#[test]
fn failing_rows_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s3c");
    let out = transduce(&["run", "s3c", "--out", out_dir.to_str().unwrap()]);
    let summary = read_csv(&out_dir.join("summary.csv"));
    let any_fail = summary[1..].iter().any(|r| r[4] == "fail");
    assert_eq!(out.status.success(), !any_fail);
}

#[test]
fn noise_budget_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nb");
    transduce(&["run", "noise_budget", "--out", out_dir.to_str().unwrap()]);
    let summary = read_csv(&out_dir.join("summary.csv"));
    let get = |n: &str| -> f64 {
        summary.iter().find(|r| r[0] == n).unwrap()[1]
            .parse()
            .unwrap()
    };
    assert!((get("n_th_eta_max_93") - 0.109).abs() < 0.011);
    assert!((24.0..=30.0).contains(&get("t_ne_k")));
    assert_eq!(get("n_st"), 0.01);
}

#[test]
fn empty_and_single_point_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = transduce(&[
        "sweep",
        "noise_budget",
        "--axis",
        "thermal.eta_max",
        "--grid",
        "",
        "--out",
        d,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = read_csv(&dir.path().join("sweep_noise_budget.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "thermal.eta_max");

    let out = transduce(&[
        "sweep",
        "noise_budget",
        "--axis",
        "thermal.eta_max",
        "--grid",
        "0.93",
        "--out",
        d,
    ]);
    assert!(out.status.success());
    let sweep = read_csv(&dir.path().join("sweep_noise_budget.csv"));
    let run_dir = dir.path().join("run");
    transduce(&["run", "noise_budget", "--out", run_dir.to_str().unwrap()]);
    let summary = read_csv(&run_dir.join("summary.csv"));
    assert_eq!(sweep.len(), 2);
    for (i, row) in summary[1..].iter().enumerate() {
        assert_eq!(sweep[0][i + 1], row[0]);
        assert_eq!(sweep[1][i + 1], row[1]);
    }
}

#[test]
fn od_sweep_tracks_the_efficiency_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = transduce(&[
        "sweep",
        "fig2a",
        "--axis",
        "ensemble.d_m",
        "--grid",
        "log:2e5:1.5e6:3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.code().is_some());
    let rows = read_csv(&dir.path().join("sweep_fig2a.csv"));
    assert_eq!(rows.len(), 4);
    let col = rows[0].iter().position(|h| h == "eta").unwrap();
    let axis: Vec<f64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert!((axis[0] - 2e5).abs() < 1e-6 && (axis[2] - 1.5e6).abs() < 1e-3);
    // Fixed Ω_W: the delay grows with d_M and so does the dephasing loss.
    let eta: Vec<f64> = rows[1..].iter().map(|r| r[col].parse().unwrap()).collect();
    assert!(eta[0] > eta[1] && eta[1] > eta[2]);
}

#[test]
fn non_numeric_axis_is_rejected() {
    let out = transduce(&["sweep", "s3b", "--axis", "fields.pol_p", "--grid", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not numeric"));
}

#[test]
fn validate_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, transduce::config::PAPER_FIG3).unwrap();
    assert!(transduce(&["validate", "--config", good.to_str().unwrap()])
        .status
        .success());
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[pulse]\nfwhm = 300 parsecs\n").unwrap();
    let out = transduce(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn seed_changes_only_the_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    transduce(&["run", "fig3c", "--seed", "1", "--out", a.to_str().unwrap()]);
    transduce(&["run", "fig3c", "--seed", "2", "--out", b.to_str().unwrap()]);
    let ta = read_csv(&a.join("photon_number.csv"));
    let tb = read_csv(&b.join("photon_number.csv"));
    // Clean curve identical, synthetic draws differ.
    assert!(ta.iter().zip(&tb).all(|(x, y)| x[1] == y[1]));
    assert!(ta[1..].iter().zip(&tb[1..]).any(|(x, y)| x[2] != y[2]));
}
