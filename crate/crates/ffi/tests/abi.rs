use std::ffi::{CStr, CString};
use std::ptr;

use visia_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(visia_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn vae_matches_published_row() {
    assert!((visia_vae(97.84, 1.86, 79.80) - 120.33).abs() < 0.01);
}

#[test]
fn builtin_run_roundtrip() {
    let name = CString::new("open-wall").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { visia_scenario_builtin(name.as_ptr(), &mut s) }, VisiaStatus::Ok);
    assert!(!s.is_null());
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { visia_run(s, VisiaMode::VisibilityAware, 0.0, &mut run) }, VisiaStatus::Ok);
    let mut m = VisiaMetrics::default();
    assert_eq!(unsafe { visia_run_metrics(run, &mut m) }, VisiaStatus::Ok);
    assert_eq!(m.exit_code, 0);
    assert!(m.cr > 90.0 && m.or_ == 0.0 && m.frames > 0);
    assert!(unsafe { visia_run_ok(run) });

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { visia_run_report_json(run, &mut json) }, VisiaStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["mode"], "visibility-aware");
    unsafe { visia_string_free(json) };

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { visia_run_frames_csv(run, &mut csv) }, VisiaStatus::Ok);
    let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_owned();
    assert!(text.starts_with("t,x,y,z,theta,psi,occluded\n"));
    assert_eq!(text.lines().count() as u64, m.frames + 1);
    unsafe { visia_string_free(csv) };

    assert_eq!(unsafe { visia_scenario_set_seed(s, 3) }, VisiaStatus::Ok);
    unsafe {
        visia_run_free(run);
        visia_scenario_free(s);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { visia_scenario_builtin(ptr::null(), &mut s) }, VisiaStatus::NullPointer);
    assert!(last_error().contains("null"));
    let bad = CString::new("nope").unwrap();
    assert_eq!(unsafe { visia_scenario_builtin(bad.as_ptr(), &mut s) }, VisiaStatus::InvalidArgument);
    assert!(last_error().contains("nope"));
    let junk = CString::new("{not json").unwrap();
    assert_eq!(unsafe { visia_scenario_from_json(junk.as_ptr(), &mut s) }, VisiaStatus::Parse);
    assert!(s.is_null());
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { visia_run(ptr::null(), VisiaMode::ClearanceOnly, 0.0, &mut run) }, VisiaStatus::NullPointer);
    assert_eq!(unsafe { visia_run_metrics(ptr::null(), ptr::null_mut()) }, VisiaStatus::NullPointer);
    assert!(!unsafe { visia_run_ok(ptr::null()) });
    unsafe {
        visia_run_free(ptr::null_mut());
        visia_scenario_free(ptr::null_mut());
        visia_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { visia_scenario_builtin(ptr::null(), &mut s) }, VisiaStatus::NullPointer);
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_empty());
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/visia.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct VisiaScenario VisiaScenario;"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", concat!(env!("CARGO_MANIFEST_DIR"), "/include/visia.h")])
        .output()
    else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
