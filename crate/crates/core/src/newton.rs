//! Minimum-norm Newton steps for systems with three more unknowns than
//! equations.
//!
//! The Jacobian `J` (`p x q`, `q = p + 3`) is split into a square block `Js`
//! and the three remaining columns `Jr`. Solving `Js Z = [Jr | b]` reduces
//! `J z = b` to `[I | M] z' = c`, whose minimum-norm solution is
//! `z' = (y, M^T y)` with `(I + M M^T) y = c`. Column permutations preserve
//! the 2-norm, so un-permuting `z'` gives the minimum-norm `z`.

use rayon::prelude::*;

use crate::error::Result;
use crate::gmres::{gmres, GmresConfig, GmresOutcome};
use crate::system::{norm, Linearization, StatePoint};

/// Linear operator with `cols() == rows() + 3`.
pub trait BorderedOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;

    fn column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.cols()];
        e[j] = 1.0;
        self.apply(&e)
    }

    /// Approximate inverse applied to a vector of length `rows()`.
    fn precondition(&self, r: &mut [f64]);

    /// Three vectors spanning (approximately) the kernel.
    fn null_basis(&self) -> [Vec<f64>; 3];
}

/// Pick three coordinates on which the given basis is well conditioned, by
/// Gaussian elimination with partial pivoting.
pub fn pivot_columns(basis: &[Vec<f64>; 3]) -> [usize; 3] {
    let mut v = basis.clone();
    let mut chosen = [usize::MAX; 3];
    for k in 0..3 {
        let mut best = (usize::MAX, -1.0);
        for (j, x) in v[k].iter().enumerate() {
            if chosen[..k].contains(&j) {
                continue;
            }
            if x.abs() > best.1 {
                best = (j, x.abs());
            }
        }
        let j = best.0;
        chosen[k] = j;
        let piv = v[k][j];
        if piv != 0.0 {
            let (head, tail) = v.split_at_mut(k + 1);
            for w in tail.iter_mut() {
                let f = w[j] / piv;
                w.iter_mut().zip(&head[k]).for_each(|(a, b)| *a -= f * b);
            }
        }
    }
    chosen
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// GMRES iterations for the three `Jr` columns and the right-hand side.
    pub js_iterations: [usize; 4],
    pub b_iterations: usize,
    pub step_norm: f64,
    pub success: bool,
    /// Columns of `J` removed from the square block.
    pub swapped: [usize; 3],
}

impl StepReport {
    pub fn max_gmres_iterations(&self) -> usize {
        self.js_iterations.iter().copied().max().unwrap_or(0).max(self.b_iterations)
    }
}

#[derive(Debug, Clone)]
pub struct BorderedStep {
    pub z: Vec<f64>,
    pub report: StepReport,
}

/// Square block `Js` of a bordered operator: the three columns picked by
/// pivoting on the kernel basis are removed and the surplus columns take
/// their places.
pub struct SquareBlock<'a, O: BorderedOperator> {
    op: &'a O,
    /// Removed columns of `J`, ascending.
    pub removed: [usize; 3],
    /// Pivot order of the removed columns.
    pub swapped: [usize; 3],
    /// Column of `J` held by each column of `Js`.
    pub slots: Vec<usize>,
}

impl<'a, O: BorderedOperator> SquareBlock<'a, O> {
    pub fn new(op: &'a O) -> Self {
        let (p, q) = (op.rows(), op.cols());
        debug_assert_eq!(q, p + 3);
        let swapped = pivot_columns(&op.null_basis());
        let mut removed = swapped;
        removed.sort_unstable();
        let mut incoming = (p..q).filter(|j| !removed.contains(j));
        let mut slots: Vec<usize> = (0..p).collect();
        for &r in removed.iter().filter(|&&r| r < p) {
            slots[r] = incoming.next().expect("column bookkeeping");
        }
        Self { op, removed, swapped, slots }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.op.cols()];
        for (s, xi) in self.slots.iter().zip(x) {
            v[*s] = *xi;
        }
        self.op.apply(&v)
    }

    /// GMRES on `Js x = rhs`, optionally with the operator's preconditioner.
    pub fn solve(&self, rhs: &[f64], cfg: &GmresConfig, precondition: bool) -> GmresOutcome {
        let pre = |r: &mut [f64]| self.op.precondition(r);
        let pre: Option<&dyn Fn(&mut [f64])> = if precondition { Some(&pre) } else { None };
        gmres(|x| self.apply(x), rhs, cfg, pre)
    }
}

/// Minimum-norm solution of `J z = b` for a bordered operator.
pub fn bordered_solve<O: BorderedOperator>(op: &O, b: &[f64], cfg: &GmresConfig) -> BorderedStep {
    let (p, q) = (op.rows(), op.cols());
    debug_assert_eq!(b.len(), p);
    let block = SquareBlock::new(op);
    let (removed, swapped) = (block.removed, block.swapped);
    let slots = &block.slots;

    let solves: Vec<_> = (0..4)
        .into_par_iter()
        .map(|k| {
            let rhs = if k < 3 { op.column(removed[k]) } else { b.to_vec() };
            block.solve(&rhs, cfg, true)
        })
        .collect();

    let js_iterations = std::array::from_fn(|k| solves[k].iterations);
    let mut success = solves.iter().all(|s| s.converged);
    let m: Vec<&[f64]> = solves[..3].iter().map(|s| s.x.as_slice()).collect();
    let c = &solves[3].x;

    let mt = |y: &[f64]| -> [f64; 3] {
        std::array::from_fn(|k| m[k].iter().zip(y).map(|(a, b)| a * b).sum())
    };
    let bmat = |y: &[f64]| {
        let w = mt(y);
        let mut out = y.to_vec();
        for k in 0..3 {
            out.iter_mut().zip(m[k]).for_each(|(o, mk)| *o += w[k] * mk);
        }
        out
    };
    let bsol = gmres(bmat, c, cfg, None);
    success &= bsol.converged;

    let tail = mt(&bsol.x);
    let mut z = vec![0.0; q];
    for (s, yi) in slots.iter().zip(&bsol.x) {
        z[*s] = *yi;
    }
    for k in 0..3 {
        z[removed[k]] = tail[k];
    }
    let step_norm = norm(&z);
    BorderedStep {
        z,
        report: StepReport {
            js_iterations,
            b_iterations: bsol.iterations,
            step_norm,
            success,
            swapped,
        },
    }
}

/// Minimum-norm Newton correction at a state for the right-hand side `b`.
pub fn bordered_newton_step(s: &StatePoint, b: &[f64], cfg: &GmresConfig) -> Result<BorderedStep> {
    cfg.validate()?;
    let p = s.grid().equation_count();
    if b.len() != p {
        return Err(crate::Error::DimensionMismatch { expected: p, found: b.len() });
    }
    let lin = Linearization::new(s)?;
    Ok(bordered_solve(&lin, b, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Convergence threshold on the residual 2-norm.
    pub f_tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_iter: 10, f_tol: 1e-7 }
    }
}

/// Nonlinear system with three more unknowns than equations.
pub trait NonlinearSystem: Sync {
    type Linear: BorderedOperator;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&self, x: &[f64]) -> Result<Self::Linear>;
}

#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub x: Vec<f64>,
    pub converged: bool,
    /// Residual norm before each step and after the last one.
    pub history: Vec<f64>,
    pub reports: Vec<StepReport>,
    /// Why the iteration stopped early, if it did.
    pub failure: Option<String>,
}

impl NewtonRun {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    pub fn max_gmres_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.max_gmres_iterations()).max().unwrap_or(0)
    }

    pub fn max_b_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.b_iterations).max().unwrap_or(0)
    }
}

/// Full-step Newton with minimum-norm corrections.
pub fn newton_iterate<S: NonlinearSystem>(
    sys: &S,
    x0: &[f64],
    ncfg: &NewtonConfig,
    gcfg: &GmresConfig,
) -> Result<NewtonRun> {
    gcfg.validate()?;
    let mut x = x0.to_vec();
    let mut f = sys.residual(&x)?;
    let mut run = NewtonRun {
        x: Vec::new(),
        converged: false,
        history: vec![norm(&f)],
        reports: Vec::new(),
        failure: None,
    };
    loop {
        let fnorm = *run.history.last().unwrap();
        if fnorm <= ncfg.f_tol {
            run.converged = true;
            break;
        }
        if !fnorm.is_finite() {
            run.failure = Some("residual is not finite".into());
            break;
        }
        if run.reports.len() >= ncfg.max_iter {
            run.failure = Some(format!("no convergence in {} iterations", ncfg.max_iter));
            break;
        }
        let lin = match sys.linearize(&x) {
            Ok(l) => l,
            Err(e) => {
                run.failure = Some(e.to_string());
                break;
            }
        };
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = bordered_solve(&lin, &rhs, gcfg);
        let ok = step.report.success;
        run.reports.push(step.report);
        if !ok {
            run.failure = Some("linear solve failed".into());
            break;
        }
        x.iter_mut().zip(&step.z).for_each(|(a, b)| *a += b);
        f = match sys.residual(&x) {
            Ok(f) => f,
            Err(e) => {
                run.failure = Some(e.to_string());
                break;
            }
        };
        run.history.push(norm(&f));
    }
    run.x = x;
    Ok(run)
}

struct Invariance {
    grid: crate::spectral::Grid,
    params: crate::system::Parameters,
}

impl NonlinearSystem for Invariance {
    type Linear = Linearization;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::system::residual(&StatePoint::from_unknowns(self.grid, self.params, x)?)
    }

    fn linearize(&self, x: &[f64]) -> Result<Linearization> {
        Linearization::new(&StatePoint::from_unknowns(self.grid, self.params, x)?)
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: StatePoint,
    pub converged: bool,
    pub history: Vec<f64>,
    pub reports: Vec<StepReport>,
    pub failure: Option<String>,
}

impl NewtonOutcome {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    pub fn residual_norm(&self) -> f64 {
        *self.history.last().unwrap_or(&f64::NAN)
    }
}

/// Solve the invariance equations starting from `s0`.
pub fn newton_solve(s0: &StatePoint, ncfg: &NewtonConfig, gcfg: &GmresConfig) -> Result<NewtonOutcome> {
    s0.validate()?;
    let sys = Invariance { grid: s0.grid(), params: s0.params };
    let run = newton_iterate(&sys, &s0.to_unknowns(), ncfg, gcfg)?;
    let state = match StatePoint::from_unknowns(s0.grid(), s0.params, &run.x) {
        Ok(s) => s,
        Err(_) => s0.clone(),
    };
    Ok(NewtonOutcome {
        state,
        converged: run.converged,
        history: run.history,
        reports: run.reports,
        failure: run.failure,
    })
}
