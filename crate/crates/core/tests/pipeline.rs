//! Properties that cross module boundaries.

use cgle_rpo::continuation::{self, ContinuationConfig, PathStatus};
use cgle_rpo::dynamics::{closure_residual, plane_wave, relative_monodromy};
use cgle_rpo::gmres::GmresConfig;
use cgle_rpo::newton::{newton_solve, NewtonConfig};
use cgle_rpo::spectral::Grid;
use cgle_rpo::symmetry::{classify, same_orbit, torus_act_state, Verdict, DEFAULT_TOL};
use cgle_rpo::system::{residual_norm, ParamName, Parameters};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bf() -> Parameters {
    Parameters::new(16.0, -7.0, 5.0)
}

#[test]
fn refined_state_is_on_the_plane_wave_orbit() {
    let g = Grid::new(16, 16).unwrap();
    let exact = plane_wave(g, 1, bf(), 0.1, 1.0).unwrap();
    let mut s = exact.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for z in s.field.coefficients_mut() {
        *z += Complex64::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3));
    }
    let out = newton_solve(&s, &NewtonConfig::default(), &GmresConfig::default()).unwrap();
    assert!(out.converged);
    assert!(out.reports.iter().all(|r| r.b_iterations <= 4));
    let rel = same_orbit(&exact, &out.state, 1e-6).unwrap();
    // The refined point may sit at a nearby T on the same branch, so only
    // compare when the periods agree.
    if (out.state.shift.t - exact.shift.t).abs() < 1e-9 {
        assert_eq!(rel.verdict, Verdict::SameOrbit);
    }
    assert!(closure_residual(&out.state, 2048).unwrap() <= 1e-6);
}

#[test]
fn monodromy_is_torus_invariant() {
    let g = Grid::new(16, 8).unwrap();
    let s = plane_wave(g, 1, bf(), 0.05, 0.3).unwrap();
    let acted = torus_act_state(&s, 0.7, 1.9, 0.0);
    assert!(residual_norm(&acted).unwrap() < 1e-12);
    let (a, b) = (relative_monodromy(&s, 512).unwrap(), relative_monodromy(&acted, 512).unwrap());
    assert_eq!(a.unstable_dimension, b.unstable_dimension);
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x.norm() - y.norm()).abs() < 1e-8 * x.norm().max(1.0));
    }
}

#[test]
fn continuation_points_validate_dynamically() {
    let g = Grid::new(8, 8).unwrap();
    let s = plane_wave(g, 1, bf(), 0.1, 1.0).unwrap();
    let cfg = ContinuationConfig::new(ParamName::Mu, 4.0);
    let rec = continuation::run(&s, &cfg, &NewtonConfig::default(), &GmresConfig::default(), |_| Ok(())).unwrap();
    assert_eq!(rec.status, PathStatus::ReachedTarget);
    assert_eq!(rec.last_state().params.mu, 4.0);
    for p in &rec.points {
        assert!(closure_residual(&p.state, 1024).unwrap() <= 1e-5);
        assert!(p.b_max_iters <= 4);
        assert_eq!(p.symmetry, classify(&p.state, DEFAULT_TOL).unwrap().flags());
    }
}

#[test]
fn fold_towards_vanishing_amplitude() {
    // a^2 = R - 1 on the k = 1 branch: continuing R downward reaches the
    // zero-amplitude end of the branch.
    let g = Grid::new(8, 8).unwrap();
    let s = plane_wave(g, 1, Parameters::new(2.0, -7.0, 5.0), 0.1, 1.0).unwrap();
    let cfg = ContinuationConfig { max_steps: 60, ..ContinuationConfig::new(ParamName::R, 0.5) };
    let rec = continuation::run(&s, &cfg, &NewtonConfig::default(), &GmresConfig::default(), |_| Ok(())).unwrap();
    assert_ne!(rec.status, PathStatus::ReachedTarget);
    if rec.status == PathStatus::Stalled {
        assert!(rec.diagnostics.is_some());
    }
    let mut last = 0.0;
    for p in &rec.points {
        assert!(p.residual_norm <= 1e-7);
        assert!(p.arclength > last);
        assert!(p.ds >= cfg.ds_min && p.ds <= cfg.ds_max);
        last = p.arclength;
        let a = p.state.field.norm();
        assert!((a * a - (p.state.params.r - 1.0)).abs() < 1e-6, "{a} {}", p.state.params.r);
    }
}
