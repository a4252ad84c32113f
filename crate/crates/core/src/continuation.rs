//! Pseudo-arclength continuation in one parameter.
//!
//! The active parameter `lambda` is appended to the unknown vector. Each
//! corrector solves the invariance equations together with one linear
//! constraint, so the augmented system still has three more unknowns than
//! equations and the minimum-norm Newton machinery applies unchanged.

use crate::error::{Error, Result};
use crate::gmres::GmresConfig;
use crate::newton::{newton_iterate, newton_solve, BorderedOperator, NewtonConfig, NewtonRun, NonlinearSystem};
use crate::spectral::Grid;
use crate::symmetry::{classify, DEFAULT_TOL};
use crate::system::{norm, param_column, residual, residual_norm, Linearization, ParamName, Parameters, StatePoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    pub param: ParamName,
    pub target: f64,
    pub ds0: f64,
    pub ds_max: f64,
    pub ds_min: f64,
    pub grow: f64,
    pub shrink: f64,
    pub max_steps: usize,
}

impl ContinuationConfig {
    pub fn new(param: ParamName, target: f64) -> Self {
        Self {
            param,
            target,
            ds0: 0.02,
            ds_max: 0.5,
            ds_min: 1e-4,
            grow: 1.3,
            shrink: 0.5,
            max_steps: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.target.is_finite()
            && self.ds_min > 0.0
            && self.ds_min <= self.ds0
            && self.ds0 <= self.ds_max
            && self.grow >= 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid continuation configuration {self:?}")));
        }
        Ok(())
    }
}

/// Unknown vector with the active parameter appended.
pub fn augment(s: &StatePoint, param: ParamName) -> Vec<f64> {
    let mut x = s.to_unknowns();
    x.push(s.params.get(param));
    x
}

pub fn from_augmented(grid: Grid, params: Parameters, param: ParamName, x: &[f64]) -> Result<StatePoint> {
    let q = grid.unknown_count();
    if x.len() != q + 1 {
        return Err(Error::DimensionMismatch { expected: q + 1, found: x.len() });
    }
    let s = StatePoint::from_unknowns(grid, params.with(param, x[q]), &x[..q])?;
    s.validate()?;
    Ok(s)
}

fn unit_parameter_direction(len: usize, sign: f64) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[len - 1] = sign;
    e
}

fn secant(prev: &[f64], cur: &[f64]) -> Option<Vec<f64>> {
    let d: Vec<f64> = cur.iter().zip(prev).map(|(c, p)| c - p).collect();
    let n = norm(&d);
    (n > 0.0).then(|| d.into_iter().map(|v| v / n).collect())
}

/// Secant predictor from two accepted points; coincident points advance the
/// parameter alone.
pub fn predict(prev: &StatePoint, cur: &StatePoint, param: ParamName, ds: f64) -> Result<Vec<f64>> {
    if prev.grid() != cur.grid() {
        return Err(Error::GridMismatch);
    }
    let (xp, xc) = (augment(prev, param), augment(cur, param));
    let dir = secant(&xp, &xc).unwrap_or_else(|| unit_parameter_direction(xc.len(), 1.0));
    Ok(xc.iter().zip(&dir).map(|(x, d)| x + ds * d).collect())
}

/// Jacobian of the invariance equations bordered by the `lambda` column and
/// a constraint row.
struct AugmentedLinearization {
    base: Linearization,
    param_col: Vec<f64>,
    constraint: Vec<f64>,
}

impl BorderedOperator for AugmentedLinearization {
    fn rows(&self) -> usize {
        self.base.rows() + 1
    }

    fn cols(&self) -> usize {
        self.base.cols() + 1
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let q = self.base.cols();
        let mut out = self.base.apply(&v[..q]);
        if v[q] != 0.0 {
            out.iter_mut().zip(&self.param_col).for_each(|(o, c)| *o += v[q] * c);
        }
        out.push(norm_dot(&self.constraint, v));
        out
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let q = self.base.cols();
        let mut out = if j < q { self.base.column(j) } else { self.param_col.clone() };
        out.push(self.constraint[j]);
        out
    }

    fn precondition(&self, r: &mut [f64]) {
        let p = self.base.rows();
        self.base.precondition(&mut r[..p]);
    }

    fn null_basis(&self) -> [Vec<f64>; 3] {
        let c = &self.constraint;
        let cc = norm_dot(c, c);
        self.base.kernel_estimate().0.map(|mut v| {
            v.push(0.0);
            let f = norm_dot(c, &v) / cc;
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= f * b);
            v
        })
    }
}

fn norm_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Invariance equations plus `secant . (x - anchor) = ds`.
struct Arclength {
    grid: Grid,
    params: Parameters,
    param: ParamName,
    anchor: Vec<f64>,
    secant: Vec<f64>,
    ds: f64,
}

impl Arclength {
    fn state(&self, x: &[f64]) -> Result<StatePoint> {
        from_augmented(self.grid, self.params, self.param, x)
    }
}

impl NonlinearSystem for Arclength {
    type Linear = AugmentedLinearization;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut f = residual(&self.state(x)?)?;
        let d: Vec<f64> = x.iter().zip(&self.anchor).map(|(a, b)| a - b).collect();
        f.push(norm_dot(&self.secant, &d) - self.ds);
        Ok(f)
    }

    fn linearize(&self, x: &[f64]) -> Result<AugmentedLinearization> {
        let s = self.state(x)?;
        Ok(AugmentedLinearization {
            param_col: param_column(&s, self.param)?,
            base: Linearization::new(&s)?,
            constraint: self.secant.clone(),
        })
    }
}

/// Newton corrector on the arclength-augmented system, anchored at an
/// accepted point.
pub fn correct(
    pred: &[f64],
    anchor: &StatePoint,
    secant: &[f64],
    ds: f64,
    param: ParamName,
    ncfg: &NewtonConfig,
    gcfg: &GmresConfig,
) -> Result<(StatePoint, NewtonRun)> {
    let sys = Arclength {
        grid: anchor.grid(),
        params: anchor.params,
        param,
        anchor: augment(anchor, param),
        secant: secant.to_vec(),
        ds,
    };
    if pred.len() != sys.anchor.len() || secant.len() != sys.anchor.len() {
        return Err(Error::DimensionMismatch { expected: sys.anchor.len(), found: pred.len().min(secant.len()) });
    }
    let run = newton_iterate(&sys, pred, ncfg, gcfg)?;
    let state = sys.state(&run.x).unwrap_or_else(|_| anchor.clone());
    Ok((state, run))
}

#[derive(Debug, Clone)]
pub struct PathPoint {
    pub step: usize,
    pub state: StatePoint,
    /// Step size in effect when the point was accepted.
    pub ds: f64,
    /// Cumulative distance in the augmented unknown space.
    pub arclength: f64,
    pub newton_iters: usize,
    pub gmres_max_iters: usize,
    pub b_max_iters: usize,
    pub residual_norm: f64,
    pub symmetry: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    ReachedTarget,
    /// The step size fell below its lower bound.
    Stalled,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub param: ParamName,
    pub start: StatePoint,
    pub points: Vec<PathPoint>,
    pub status: PathStatus,
    pub rejected: usize,
    /// Last corrector failure, if any.
    pub diagnostics: Option<String>,
}

impl PathRecord {
    pub fn last_state(&self) -> &StatePoint {
        self.points.last().map_or(&self.start, |p| &p.state)
    }
}

/// Continue a converged state towards `cfg.target`, calling `on_point` for
/// every accepted point as soon as it is accepted.
pub fn run(
    s0: &StatePoint,
    cfg: &ContinuationConfig,
    ncfg: &NewtonConfig,
    gcfg: &GmresConfig,
    mut on_point: impl FnMut(&PathPoint) -> Result<()>,
) -> Result<PathRecord> {
    cfg.validate()?;
    gcfg.validate()?;
    s0.validate()?;
    let r0 = residual_norm(s0)?;
    if !(r0 <= ncfg.f_tol) {
        return Err(Error::InvalidArgument(format!(
            "start state is not converged: residual {r0:e} > {:e}",
            ncfg.f_tol
        )));
    }
    let mut record = PathRecord {
        param: cfg.param,
        start: s0.clone(),
        points: Vec::new(),
        status: PathStatus::ReachedTarget,
        rejected: 0,
        diagnostics: None,
    };
    let lambda0 = s0.params.get(cfg.param);
    if cfg.target == lambda0 {
        return Ok(record);
    }
    let dir = (cfg.target - lambda0).signum();
    let mut cur = s0.clone();
    let mut xcur = augment(&cur, cfg.param);
    let mut sec = unit_parameter_direction(xcur.len(), dir);
    let mut ds = cfg.ds0;
    let mut arclength = 0.0;
    let q = xcur.len() - 1;

    loop {
        if record.points.len() >= cfg.max_steps {
            record.status = PathStatus::MaxSteps;
            break;
        }
        let lam = xcur[q];
        let lam_pred = lam + ds * sec[q];
        let landing = (lam_pred - cfg.target) * (lam - cfg.target) <= 0.0 && sec[q] * dir > 0.0;

        let attempt = if landing {
            let scale = (cfg.target - lam) / sec[q];
            let x: Vec<f64> = xcur[..q].iter().zip(&sec).map(|(x, d)| x + scale * d).collect();
            StatePoint::from_unknowns(cur.grid(), cur.params.with(cfg.param, cfg.target), &x)
                .and_then(|pred| newton_solve(&pred, ncfg, gcfg))
                .map(|out| (out.state, out.converged, out.reports, out.failure))
        } else {
            let pred: Vec<f64> = xcur.iter().zip(&sec).map(|(x, d)| x + ds * d).collect();
            correct(&pred, &cur, &sec, ds, cfg.param, ncfg, gcfg)
                .map(|(s, run)| (s, run.converged, run.reports, run.failure))
        };

        let accepted = match attempt {
            Ok((state, true, reports, _)) => match residual_norm(&state) {
                Ok(r) if r <= ncfg.f_tol => Some((state, reports, r)),
                Ok(r) => {
                    record.diagnostics = Some(format!("corrected residual {r:e} above tolerance"));
                    None
                }
                Err(e) => {
                    record.diagnostics = Some(e.to_string());
                    None
                }
            },
            Ok((_, false, _, failure)) => {
                record.diagnostics = failure.or_else(|| Some("corrector did not converge".into()));
                None
            }
            Err(e) => {
                record.diagnostics = Some(e.to_string());
                None
            }
        };

        let Some((state, reports, rnorm)) = accepted else {
            record.rejected += 1;
            ds *= cfg.shrink;
            if ds < cfg.ds_min {
                record.status = PathStatus::Stalled;
                break;
            }
            continue;
        };

        let xnew = augment(&state, cfg.param);
        let step_len = norm(&xnew.iter().zip(&xcur).map(|(a, b)| a - b).collect::<Vec<_>>());
        arclength += step_len;
        let point = PathPoint {
            step: record.points.len() + 1,
            symmetry: classify(&state, DEFAULT_TOL).map(|r| r.flags()).unwrap_or_default(),
            state,
            ds,
            arclength,
            newton_iters: reports.len(),
            gmres_max_iters: reports.iter().map(|r| r.max_gmres_iterations()).max().unwrap_or(0),
            b_max_iters: reports.iter().map(|r| r.b_iterations).max().unwrap_or(0),
            residual_norm: rnorm,
        };
        on_point(&point)?;
        if let Some(s) = secant(&xcur, &xnew) {
            sec = s;
        }
        cur = point.state.clone();
        xcur = xnew;
        record.points.push(point);
        if landing {
            record.status = PathStatus::ReachedTarget;
            break;
        }
        ds = (ds * cfg.grow).min(cfg.ds_max);
    }
    Ok(record)
}
