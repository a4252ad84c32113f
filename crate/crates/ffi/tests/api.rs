use std::ffi::{CStr, CString};
use std::ptr;

use cgle_rpo_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rpo_last_error()) }.to_string_lossy().into_owned()
}

fn plane(k: i32, r: f64) -> *mut RpoState {
    let mut s = ptr::null_mut();
    let st = unsafe { rpo_plane_wave(16, 16, k, r, -7.0, 5.0, 0.1, 1.0, &mut s) };
    assert_eq!(st, RpoStatus::Ok, "{}", last_error());
    assert!(!s.is_null());
    s
}

#[test]
fn plane_wave_accessors() {
    let s = plane(1, 16.0);
    unsafe {
        let mut res = f64::NAN;
        assert_eq!(rpo_residual_norm(s, &mut res), RpoStatus::Ok);
        assert!(res < 1e-12);
        let mut g = [0.0; 3];
        assert_eq!(rpo_group_shift(s, g.as_mut_ptr()), RpoStatus::Ok);
        assert_eq!(g[1], 1.0);
        assert_eq!(g[2], 0.1);
        let mut p = [0.0; 3];
        assert_eq!(rpo_parameters(s, p.as_mut_ptr()), RpoStatus::Ok);
        assert_eq!(p, [16.0, -7.0, 5.0]);
        assert_eq!(rpo_unknown_count(s), 2 * 15 * 15 + 3);
        assert_eq!(rpo_unknown_count(ptr::null()), 0);
        let mut closure = f64::NAN;
        assert_eq!(rpo_closure_residual(s, 0, &mut closure), RpoStatus::Ok);
        assert!(closure < 1e-8);
        rpo_free(s);
    }
}

#[test]
fn invalid_arguments_and_nulls() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(rpo_plane_wave(7, 16, 0, 16.0, -7.0, 5.0, 0.1, 0.0, &mut s), RpoStatus::InvalidArgument);
        assert!(s.is_null());
        assert!(last_error().contains("grid"));
        assert_eq!(rpo_plane_wave(16, 16, 5, 16.0, -7.0, 5.0, 0.1, 0.0, &mut s), RpoStatus::InvalidArgument);
        assert_eq!(rpo_plane_wave(16, 16, 0, 16.0, -7.0, 5.0, 0.1, 0.0, ptr::null_mut()), RpoStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(rpo_residual_norm(ptr::null(), &mut x), RpoStatus::NullPointer);
        assert_eq!(rpo_refine(ptr::null_mut(), 0.0, 0, ptr::null_mut()), RpoStatus::NullPointer);
        rpo_free(ptr::null_mut());

        let s = plane(0, 16.0);
        assert_eq!(rpo_residual_norm(s, &mut x), RpoStatus::Ok);
        assert_eq!(last_error(), "");
        let bad = CString::new("kappa").unwrap();
        assert_eq!(rpo_continue(s, bad.as_ptr(), 20.0, ptr::null_mut()), RpoStatus::InvalidArgument);
        rpo_free(s);
    }
}

#[test]
fn file_round_trip_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("pw.rpo").to_str().unwrap()).unwrap();
    let s = plane(1, 16.0);
    unsafe {
        assert_eq!(rpo_write(s, path.as_ptr()), RpoStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rpo_read(path.as_ptr(), &mut back), RpoStatus::Ok);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        rpo_group_shift(s, a.as_mut_ptr());
        rpo_group_shift(back, b.as_mut_ptr());
        assert_eq!(a, b);
        rpo_free(back);

        let broken = dir.path().join("broken.rpo");
        std::fs::write(&broken, "RPO1\nLx 6.2831853071795862e0\nparams 1 2\n").unwrap();
        let broken = CString::new(broken.to_str().unwrap()).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(rpo_read(broken.as_ptr(), &mut out), RpoStatus::Parse);
        assert!(last_error().contains("line 3"));
        let missing = CString::new(dir.path().join("none.rpo").to_str().unwrap()).unwrap();
        assert_eq!(rpo_read(missing.as_ptr(), &mut out), RpoStatus::Io);
        assert!(out.is_null());
        rpo_free(s);
    }
}

#[test]
fn refine_and_continue() {
    let s = plane(0, 16.0);
    unsafe {
        let mut iters = usize::MAX;
        assert_eq!(rpo_refine(s, 0.0, 0, &mut iters), RpoStatus::Ok);
        assert_eq!(iters, 0);

        let r = CString::new("R").unwrap();
        let mut steps = 0;
        assert_eq!(rpo_continue(s, r.as_ptr(), 20.0, &mut steps), RpoStatus::Ok, "{}", last_error());
        assert!(steps > 0);
        let mut p = [0.0; 3];
        rpo_parameters(s, p.as_mut_ptr());
        assert_eq!(p[0], 20.0);
        let mut res = 1.0;
        rpo_residual_norm(s, &mut res);
        assert!(res <= 1e-7);

        let mut dim = usize::MAX;
        let mut small = ptr::null_mut();
        assert_eq!(rpo_plane_wave(16, 8, 0, 16.0, -7.0, 5.0, 0.05, 0.0, &mut small), RpoStatus::Ok);
        assert_eq!(rpo_unstable_dimension(small, 512, &mut dim), RpoStatus::Ok);
        assert_eq!(dim, 8);
        rpo_free(small);
        rpo_free(s);
    }
}

#[test]
fn refine_failure_leaves_state() {
    let s = plane(1, 16.0);
    unsafe {
        let mut g = [0.0; 3];
        rpo_group_shift(s, g.as_mut_ptr());
        let mut before = 0.0;
        rpo_residual_norm(s, &mut before);
        // A tolerance below the residual floor cannot be met in one step.
        let st = rpo_refine(s, 1e-300, 1, ptr::null_mut());
        assert_eq!(st, RpoStatus::NoConvergence);
        assert!(!last_error().is_empty());
        let mut after = [0.0; 3];
        rpo_group_shift(s, after.as_mut_ptr());
        assert_eq!(g, after);
        rpo_free(s);
    }
}
