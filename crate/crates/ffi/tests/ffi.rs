use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lienav_ffi::*;

fn last_error() -> String {
    let p = lienav_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn builtin(name: &str) -> *mut LienavScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { lienav_scenario_builtin(name.as_ptr(), &mut sc) },
        LienavStatus::Ok
    );
    assert!(!sc.is_null());
    sc
}

#[test]
fn builtin_handles_report_dimensions() {
    let sc = builtin("rolling-disc");
    unsafe {
        assert_eq!(lienav_scenario_state_dim(sc), 4);
        assert_eq!(lienav_scenario_input_dim(sc), 2);
        lienav_scenario_free(sc);
        assert_eq!(lienav_scenario_state_dim(ptr::null()), 0);
        lienav_scenario_free(ptr::null_mut());
    }
}

#[test]
fn unknown_builtin_sets_error() {
    let name = CString::new("nope").unwrap();
    let mut sc = ptr::null_mut();
    let st = unsafe { lienav_scenario_builtin(name.as_ptr(), &mut sc) };
    assert_eq!(st, LienavStatus::UnknownBuiltin);
    assert!(sc.is_null());
    assert!(last_error().contains("nope"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { lienav_scenario_builtin(ptr::null(), &mut sc) },
        LienavStatus::NullPointer
    );
    let mut v = 0.0;
    let x = [0.0; 3];
    assert_eq!(
        unsafe { lienav_potential_value(ptr::null(), x.as_ptr(), 3, &mut v) },
        LienavStatus::NullPointer
    );
}

#[test]
fn potential_and_gradient_match_library() {
    let sc = builtin("rigid-body");
    let lib = lienav::scenarios::builtin_rigid_body();
    let x = [0.3, -0.4, -2.6];
    let mut v = 0.0;
    let mut g = [0.0; 3];
    unsafe {
        assert_eq!(lienav_potential_value(sc, x.as_ptr(), 3, &mut v), LienavStatus::Ok);
        assert_eq!(
            lienav_potential_gradient(sc, x.as_ptr(), 3, g.as_mut_ptr(), 3),
            LienavStatus::Ok
        );
    }
    use lienav::potential::Potential;
    assert_eq!(v, lib.potential.value(&x).unwrap());
    assert_eq!(g.to_vec(), lib.potential.gradient(&x).unwrap().as_slice().to_vec());

    let mut small = [0.0; 2];
    let st = unsafe { lienav_potential_gradient(sc, x.as_ptr(), 3, small.as_mut_ptr(), 2) };
    assert_eq!(st, LienavStatus::BufferTooSmall);
    let st = unsafe { lienav_potential_gradient(sc, x.as_ptr(), 2, g.as_mut_ptr(), 3) };
    assert_eq!(st, LienavStatus::DimensionMismatch);
    unsafe { lienav_scenario_free(sc) };
}

#[test]
fn coefficients_and_controls() {
    let sc = builtin("rigid-body");
    let x = [0.0, 0.0, -3.0];
    let mut a = [0.0; 3];
    let mut u = [0.0; 2];
    let mut g = [0.0; 3];
    unsafe {
        assert_eq!(
            lienav_coefficients(sc, x.as_ptr(), 3, a.as_mut_ptr(), 3),
            LienavStatus::Ok
        );
        assert_eq!(
            lienav_potential_gradient(sc, x.as_ptr(), 3, g.as_mut_ptr(), 3),
            LienavStatus::Ok
        );
        assert_eq!(
            lienav_control(sc, 0.0, x.as_ptr(), 3, u.as_mut_ptr(), 2),
            LienavStatus::Ok
        );
    }
    // At x1 = x2 = 0 the third column of F is (0, 0, −2).
    assert!((a[2] - 0.25 * g[2]).abs() < 1e-9);
    // τ = 0: sin terms vanish, u1 = a1 + amplitude·cbrt(a3).
    assert!(u[1].abs() < 1e-12);
    unsafe { lienav_scenario_free(sc) };
}

#[test]
fn toml_round_trip() {
    let sc = builtin("rigid-body");
    let mut text = ptr::null_mut();
    unsafe {
        assert_eq!(lienav_scenario_to_toml(sc, &mut text), LienavStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(lienav_scenario_from_toml(text, &mut back), LienavStatus::Ok);
        let mut text2 = ptr::null_mut();
        assert_eq!(lienav_scenario_to_toml(back, &mut text2), LienavStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(text2));
        lienav_string_free(text);
        lienav_string_free(text2);
        lienav_scenario_free(back);
        lienav_scenario_free(sc);
    }
    let bad = CString::new("name = 3").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { lienav_scenario_from_toml(bad.as_ptr(), &mut out) },
        LienavStatus::Schema
    );
}

#[test]
fn short_simulation() {
    let sc = builtin("rigid-body");
    unsafe {
        assert_eq!(lienav_scenario_set_params(sc, 0.5, 0.5, 2.0), LienavStatus::Ok);
        assert_eq!(
            lienav_scenario_set_params(sc, -1.0, 0.5, 2.0),
            LienavStatus::InvalidArgument
        );
        let mut t = ptr::null_mut();
        assert_eq!(lienav_simulate(sc, &mut t), LienavStatus::Ok);
        let len = lienav_trajectory_len(t);
        assert_eq!(lienav_trajectory_epochs(t), 4);
        let mut times = vec![0.0; len];
        let mut states = vec![0.0; 3 * len];
        assert_eq!(lienav_trajectory_times(t, times.as_mut_ptr(), len), LienavStatus::Ok);
        assert_eq!(
            lienav_trajectory_states(t, states.as_mut_ptr(), 3 * len),
            LienavStatus::Ok
        );
        assert_eq!(&states[..3], &[0.0, 0.0, -3.0]);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!((times[len - 1] - 2.0).abs() < 1e-12);
        let mut term = LienavTermination::Converged;
        assert_eq!(lienav_trajectory_termination(t, &mut term), LienavStatus::Ok);
        assert_eq!(term, LienavTermination::HorizonExhausted);
        let (mut mm, mut fd) = (0.0, 0.0);
        assert_eq!(lienav_trajectory_summary(t, &mut mm, &mut fd), LienavStatus::Ok);
        assert!(mm > 0.0 && fd > 0.0);
        lienav_trajectory_free(t);
        lienav_scenario_free(sc);
    }
}

#[test]
fn header_is_valid_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/lienav.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "lienav_scenario_builtin",
        "lienav_simulate",
        "lienav_trajectory_states",
        "lienav_last_error",
        "LIENAV_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
