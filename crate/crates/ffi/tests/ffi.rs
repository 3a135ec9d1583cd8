use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use transduce_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    unsafe {
        transduce_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn preset(name: &str) -> *mut TransduceConfig {
    let name = CString::new(name).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { transduce_config_preset(name.as_ptr(), &mut cfg) },
        TransduceStatus::Ok
    );
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(transduce_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { transduce_config_parse(ptr::null(), &mut cfg) },
        TransduceStatus::NullPointer
    );
    assert!(last_error().contains("source"));
    let mut e = TransduceEfficiency::default();
    assert_eq!(
        unsafe { transduce_efficiency(ptr::null(), &mut e) },
        TransduceStatus::NullPointer
    );
    let cfg = preset("fig2a");
    assert_eq!(
        unsafe { transduce_efficiency(cfg, ptr::null_mut()) },
        TransduceStatus::NullPointer
    );
    unsafe {
        transduce_config_free(cfg);
        transduce_config_free(ptr::null_mut());
        transduce_run_free(ptr::null_mut());
    }
}

#[test]
fn parse_errors_map_to_status_codes() {
    let bad = CString::new("[ensemble]\nd_m = banana\n").unwrap();
    let mut cfg = ptr::null_mut();
    let status = unsafe { transduce_config_parse(bad.as_ptr(), &mut cfg) };
    assert_eq!(status, TransduceStatus::Parse);
    assert!(cfg.is_null());
    assert!(last_error().contains("line 2"));
    let invalid = [0xffu8, 0];
    let status = unsafe { transduce_config_parse(invalid.as_ptr().cast(), &mut cfg) };
    assert_eq!(status, TransduceStatus::InvalidUtf8);
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let mut cfg = ptr::null_mut();
    unsafe { transduce_config_parse(ptr::null(), &mut cfg) };
    let full = unsafe { transduce_last_error(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 4];
    let n = unsafe { transduce_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full);
    assert_eq!(buf[3], 0);
    let cfg = preset("fig3");
    assert_eq!(last_error(), "");
    unsafe { transduce_config_free(cfg) };
}

#[test]
fn efficiency_matches_the_engine() {
    let cfg = preset("fig2a");
    let mut e = TransduceEfficiency::default();
    assert_eq!(
        unsafe { transduce_efficiency(cfg, &mut e) },
        TransduceStatus::Ok
    );
    let built = transduce::config::RawConfig::parse(transduce::config::PAPER_FIG2A)
        .unwrap()
        .build()
        .unwrap();
    let b = transduce::spectral::transmission_efficiency(&built).unwrap();
    assert_eq!(e.eta, b.eta);
    assert_eq!(e.eta_t, b.eta_t);
    assert!((e.eta_t - e.eta_m * e.eta_l).abs() < 1e-12);
    assert!(e.eta <= e.eta_t);
    unsafe { transduce_config_free(cfg) };
}

#[test]
fn set_round_trips_and_rejects_without_mutating() {
    let cfg = preset("fig2a");
    let mut before = TransduceEfficiency::default();
    unsafe { transduce_efficiency(cfg, &mut before) };
    let path = CString::new("ensemble.d_m").unwrap();
    assert_eq!(
        unsafe { transduce_config_set(cfg, path.as_ptr(), -1.0) },
        TransduceStatus::InvalidConfig
    );
    let mut same = TransduceEfficiency::default();
    unsafe { transduce_efficiency(cfg, &mut same) };
    assert_eq!(before.eta, same.eta);
    assert_eq!(
        unsafe { transduce_config_set(cfg, path.as_ptr(), 5e5) },
        TransduceStatus::Ok
    );
    let mut after = TransduceEfficiency::default();
    unsafe { transduce_efficiency(cfg, &mut after) };
    assert!(after.alpha_m < before.alpha_m);
    unsafe { transduce_config_free(cfg) };
}

#[test]
fn noise_budget_and_g2() {
    let cfg = preset("fig3");
    let mut nb = TransduceNoiseBudget::default();
    assert_eq!(
        unsafe { transduce_noise_budget(cfg, &mut nb) },
        TransduceStatus::Ok
    );
    assert!((nb.mean_occupation - 170.0).abs() < 3.0);
    let mut g0 = 0.0;
    let mut g_far = 0.0;
    assert_eq!(
        unsafe { transduce_g2(cfg, 0.0, 0.0, &mut g0) },
        TransduceStatus::Ok
    );
    assert_eq!(
        unsafe { transduce_g2(cfg, 0.0, 1e-3, &mut g_far) },
        TransduceStatus::Ok
    );
    assert!(g0 > 1.5 && g0 <= 2.0 + 1e-9, "{g0}");
    assert!((g_far - 1.0).abs() < 1e-3, "{g_far}");
    assert_eq!(
        unsafe { transduce_g2(cfg, -1.0, 0.0, &mut g0) },
        TransduceStatus::Domain
    );
    unsafe { transduce_config_free(cfg) };
}

#[test]
fn simulation_output_copy() {
    let cfg = preset("fig2a");
    let mut run = ptr::null_mut();
    assert_eq!(
        unsafe { transduce_simulate(cfg, &mut run) },
        TransduceStatus::Ok
    );
    let mut eta = 0.0;
    assert_eq!(
        unsafe { transduce_run_efficiency(run, &mut eta) },
        TransduceStatus::Ok
    );
    assert!(eta > 0.5 && eta < 1.0);
    let mut len = 0;
    let status =
        unsafe { transduce_run_output(run, ptr::null_mut(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(status, TransduceStatus::BufferTooSmall);
    assert!(len > 0);
    let mut t = vec![0.0; len];
    let mut a = vec![0.0; len];
    let mut got = 0;
    let status =
        unsafe { transduce_run_output(run, t.as_mut_ptr(), a.as_mut_ptr(), len, &mut got) };
    assert_eq!(status, TransduceStatus::Ok);
    assert_eq!(got, len);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!(a.iter().all(|x| x.is_finite() && *x >= 0.0));
    unsafe {
        transduce_run_free(run);
        transduce_config_free(cfg);
    }
}

#[test]
fn experiment_runs_into_directory() {
    let dir = std::env::temp_dir().join(format!("transduce-ffi-{}", std::process::id()));
    let name = CString::new("s3b").unwrap();
    let out = CString::new(dir.to_str().unwrap()).unwrap();
    let mut passed = false;
    let status = unsafe {
        transduce_run_experiment(name.as_ptr(), ptr::null(), 7, out.as_ptr(), &mut passed)
    };
    assert_eq!(status, TransduceStatus::Ok, "{}", last_error());
    assert!(passed);
    assert!(dir.join("summary.csv").exists());
    let bogus = CString::new("fig9").unwrap();
    let status = unsafe {
        transduce_run_experiment(bogus.as_ptr(), ptr::null(), 7, out.as_ptr(), &mut passed)
    };
    assert_eq!(status, TransduceStatus::UnknownExperiment);
    assert!(last_error().contains("fig2a"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn c_program_links_against_header_and_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // The test binary lives in target/<profile>/deps; the static library one
    // level up. cargo test only builds the rlib, so build the archive here.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let mut build = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()));
    build
        .args(["build", "--lib", "-p", "transduce-ffi"])
        .current_dir(&manifest);
    if profile_dir.file_name().is_some_and(|n| n == "release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success());
    let lib = profile_dir.join("libtransduce_ffi.a");
    let bin = std::env::temp_dir().join(format!("transduce-smoke-{}", std::process::id()));
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    std::fs::remove_file(&bin).ok();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("c smoke ok"));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
        {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
