//! Left-preconditioned GMRES with modified Gram-Schmidt orthogonalization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    /// Relative tolerance on the preconditioned residual.
    pub tol: f64,
    /// Total Arnoldi steps allowed across restarts.
    pub max_iter: usize,
    /// Restart length; `None` runs full GMRES.
    pub restart: Option<usize>,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 3000,
            restart: None,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.restart == Some(0) {
            return Err(Error::InvalidArgument(format!("invalid GMRES configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative preconditioned residual.
    pub residual: f64,
    pub converged: bool,
    /// The Krylov space became invariant before the tolerance test fired.
    pub breakdown: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solve `A x = b`, monitoring `|M^-1 (b - A x)| / |M^-1 b|`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    cfg: &GmresConfig,
    precond: Option<&dyn Fn(&mut [f64])>,
) -> GmresOutcome {
    let n = b.len();
    let pre = |v: &mut [f64]| {
        if let Some(p) = precond {
            p(v)
        }
    };
    let mut pb = b.to_vec();
    pre(&mut pb);
    let bnorm = norm(&pb);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, residual: 0.0, converged: true, breakdown: false };
    }

    let mut total = 0;
    let mut first = true;
    loop {
        let mut r = if first {
            pb.clone()
        } else {
            let ax = apply(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            pre(&mut r);
            r
        };
        first = false;
        let beta = norm(&r);
        if beta / bnorm <= cfg.tol {
            return GmresOutcome { x, iterations: total, residual: beta / bnorm, converged: true, breakdown: false };
        }
        let cycle = cfg.restart.unwrap_or(cfg.max_iter).min(cfg.max_iter - total);
        if cycle == 0 {
            return GmresOutcome { x, iterations: total, residual: beta / bnorm, converged: false, breakdown: false };
        }

        r.iter_mut().for_each(|v| *v /= beta);
        let mut basis = vec![r];
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(cycle);
        let mut cs: Vec<f64> = Vec::with_capacity(cycle);
        let mut sn: Vec<f64> = Vec::with_capacity(cycle);
        let mut g = vec![beta];
        let mut res = beta;
        let mut breakdown = false;

        for j in 0..cycle {
            let mut w = apply(&basis[j]);
            pre(&mut w);
            let wnorm = norm(&w);
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
                col.push(hij);
            }
            let hnext = norm(&w);
            col.push(hnext);
            for i in 0..j {
                let (c, s) = (cs[i], sn[i]);
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = c * a + s * bb;
                col[i + 1] = -s * a + c * bb;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            total += 1;
            res = g[j + 1].abs();

            if hnext <= 1e-14 * wnorm.max(f64::MIN_POSITIVE) {
                breakdown = true;
                break;
            }
            if res / bnorm <= cfg.tol {
                break;
            }
            w.iter_mut().for_each(|v| *v /= hnext);
            basis.push(w);
        }

        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[l][i] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += yi * vi);
        }

        let rel = res / bnorm;
        if rel <= cfg.tol || breakdown || total >= cfg.max_iter {
            return GmresOutcome { x, iterations: total, residual: rel, converged: rel <= cfg.tol, breakdown };
        }
    }
}
