//! Torus action, reflection conjugacy, discrete symmetry detection and
//! orbit comparison.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField, LX};
use crate::system::{GroupShift, StatePoint};

/// Relative mismatch accepted as a symmetry.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Parameter points closer than this count as the same point.
pub const DISTINCT_THRESHOLD: f64 = 0.05;

const NEGLIGIBLE: f64 = 1e-10;

/// Multiply `a[m, n]` by `e^{i alpha} e^{i m s} e^{i n tau}`.
pub fn torus_act(f: &SpectralField, alpha: f64, s: f64, tau: f64) -> SpectralField {
    let g = f.grid();
    let coef = f
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let (m, n) = g.mode(i);
            z * Complex64::from_polar(1.0, alpha + m as f64 * s + n as f64 * tau)
        })
        .collect();
    SpectralField::from_coefficients(g, coef).expect("same grid")
}

pub fn torus_act_state(s: &StatePoint, alpha: f64, shift: f64, tau: f64) -> StatePoint {
    StatePoint {
        field: torus_act(&s.field, alpha, shift, tau),
        ..s.clone()
    }
}

/// Move every coefficient `(m, n)` to `target(m, n)`, failing when a
/// non-negligible coefficient would leave the grid.
fn remap(f: &SpectralField, target: impl Fn(i32, i32) -> (i32, i32)) -> Result<SpectralField> {
    let g = f.grid();
    let mut out = SpectralField::zeros(g);
    for (i, z) in f.coefficients().iter().enumerate() {
        let (m, n) = g.mode(i);
        let (tm, tn) = target(m, n);
        if g.contains(tm, tn) {
            out.set(tm, tn, *z);
        } else if z.norm() >= NEGLIGIBLE {
            return Err(Error::ShearRange { m, n, magnitude: z.norm() });
        }
    }
    Ok(out)
}

/// The same orbit written with `phi + 2 pi j` and `S + Lx k`.
pub fn reexpress(s: &StatePoint, j: i64, k: i64) -> Result<StatePoint> {
    let field = remap(&s.field, |m, n| (m, n + j as i32 + m * k as i32))?;
    Ok(StatePoint {
        field,
        shift: GroupShift::new(s.shift.phi + TAU * j as f64, s.shift.s + LX * k as f64, s.shift.t),
        params: s.params,
    })
}

/// Image under `x -> -x`: coefficients `a[-m, n]` with shift `-S`.
///
/// The form with shift `Lx - S` is `reexpress(&conjugate(s)?, 0, 1)`.
pub fn conjugate(s: &StatePoint) -> StatePoint {
    let field = remap(&s.field, |m, n| (-m, n)).expect("reflection keeps every mode on the grid");
    StatePoint {
        field,
        shift: GroupShift::new(s.shift.phi, -s.shift.s, s.shift.t),
        params: s.params,
    }
}

/// Largest `l` whose residue class `m = -1 (mod l)` carries all but a
/// fraction `tol` of the power.
pub fn detect_l_symmetry(f: &SpectralField, tol: f64) -> Result<Option<usize>> {
    let g = f.grid();
    let mut power = vec![0.0; g.nx() - 1];
    for (i, z) in f.coefficients().iter().enumerate() {
        power[(g.mode(i).0 + g.m_max()) as usize] += z.norm_sqr();
    }
    let total: f64 = power.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroField);
    }
    for l in (2..=g.nx() / 2).rev() {
        let off: f64 = power
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as i32 - g.m_max() + 1).rem_euclid(l as i32) != 0)
            .map(|(_, p)| p)
            .sum();
        if off <= tol * total {
            return Ok(Some(l));
        }
    }
    Ok(None)
}

/// `A(x, t) = e^{i phase} A(-x + center, t + time_shift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectShift {
    pub phase: f64,
    pub center: f64,
    pub time_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymmetryReport {
    pub l_symmetry: Option<usize>,
    /// `A(x, t) = A(-x + 2 c, t)`, reported in `[0, Lx/2)`.
    pub even_center: Option<f64>,
    /// `A(x, t) = -A(-x + 2 c, t)`, reported in `[0, Lx/2)`.
    pub odd_center: Option<f64>,
    pub reflect_shift: Option<ReflectShift>,
    pub tol: f64,
}

impl SymmetryReport {
    /// Compact comma-separated flags, e.g. `l=2,even@pi/2,odd@0`.
    pub fn flags(&self) -> String {
        let mut out = Vec::new();
        if let Some(l) = self.l_symmetry {
            out.push(format!("l={l}"));
        }
        if let Some(c) = self.even_center {
            out.push(format!("even@{}", format_angle(c)));
        }
        if let Some(c) = self.odd_center {
            out.push(format!("odd@{}", format_angle(c)));
        }
        if let Some(r) = self.reflect_shift {
            out.push(format!(
                "reflect@{}/phase={}/dt={:.6}",
                format_angle(r.center),
                format_angle(r.phase),
                r.time_shift
            ));
        }
        out.join(",")
    }

    pub fn is_empty(&self) -> bool {
        self.l_symmetry.is_none() && self.even_center.is_none() && self.odd_center.is_none() && self.reflect_shift.is_none()
    }
}

/// Angles that are simple fractions of pi print symbolically.
fn format_angle(x: f64) -> String {
    if x.abs() < 1e-6 {
        return "0".into();
    }
    for den in [1i64, 2, 3, 4, 6, 8] {
        let num = x * den as f64 / PI;
        let r = num.round();
        if (num - r).abs() < 1e-6 * den as f64 && r != 0.0 {
            let r = r as i64;
            let head = match r {
                1 => "pi".to_string(),
                -1 => "-pi".to_string(),
                _ => format!("{r}pi"),
            };
            return if den == 1 { head } else { format!("{head}/{den}") };
        }
    }
    format!("{x:.6}")
}

/// Samples of `A` on a uniform grid over one period in `x` and `t`,
/// optionally reflected and shifted: `A(-x + 2 c, t + dt)`.
struct Reconstruction<'a> {
    s: &'a StatePoint,
    px: usize,
    pt: usize,
}

impl Reconstruction<'_> {
    fn samples(&self, reflect: Option<f64>, dt_frac: f64) -> Vec<Complex64> {
        let g = self.s.grid();
        let sh = self.s.shift;
        let (px, pt) = (self.px, self.pt);
        let mm = g.m_max();
        // h[m][k] = sum_n a[m,n] e^{i w_{mn} (theta_k + dt)}, w_{mn} = 2 pi n - phi - m S.
        let mut h = vec![Complex64::default(); (g.nx() - 1) * pt];
        for (i, z) in self.s.field.coefficients().iter().enumerate() {
            if *z == Complex64::default() {
                continue;
            }
            let (m, n) = g.mode(i);
            let w = TAU * n as f64 - sh.phi - m as f64 * sh.s;
            let mut z = *z;
            if let Some(c) = reflect {
                z *= Complex64::from_polar(1.0, 2.0 * m as f64 * c);
            }
            for k in 0..pt {
                let th = k as f64 / pt as f64 + dt_frac;
                h[(m + mm) as usize * pt + k] += z * Complex64::from_polar(1.0, w * th);
            }
        }
        let sign = if reflect.is_some() { -1.0 } else { 1.0 };
        let mut out = vec![Complex64::default(); px * pt];
        for m in -mm..=mm {
            let row = &h[(m + mm) as usize * pt..(m + mm + 1) as usize * pt];
            for j in 0..px {
                let e = Complex64::from_polar(1.0, sign * m as f64 * LX * j as f64 / px as f64);
                for k in 0..pt {
                    out[j + k * px] += row[k] * e;
                }
            }
        }
        out
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn sq_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Minimize `f` on `[lo, hi]` by golden-section search.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Search reflection centers in `[0, Lx/2)` on a grid, refine the best one,
/// and return `(center, mismatch)`.
fn best_center(nx: usize, mismatch: impl Fn(f64) -> f64) -> (f64, f64) {
    let count = 4 * nx;
    let h = PI / count as f64;
    let (mut best_c, mut best) = (0.0, f64::INFINITY);
    for j in 0..count {
        let c = j as f64 * h;
        let v = mismatch(c);
        if v < best {
            best = v;
            best_c = c;
        }
    }
    let (c, v) = golden(&mismatch, best_c - h, best_c + h);
    if v < best {
        (c.rem_euclid(PI), v)
    } else {
        (best_c, best)
    }
}

/// Reflection symmetries with time shifts `0` (even and odd) and `T/2`.
pub fn detect_reflection(s: &StatePoint, tol: f64) -> SymmetryReport {
    let g = s.grid();
    let rec = Reconstruction { s, px: 2 * g.nx(), pt: 2 * g.nt() };
    let a = rec.samples(None, 0.0);
    let na = sq_norm(&a);
    let mut report = SymmetryReport { tol, ..Default::default() };
    if na == 0.0 {
        return report;
    }
    // |A - e^{i p} B|^2 = |A|^2 + |B|^2 - 2 Re(e^{i p} <A, B>)
    let (rec, a) = (&rec, &a);
    let fixed = |sign: f64| {
        move |c: f64| {
            let b = rec.samples(Some(c), 0.0);
            let d = na + sq_norm(&b) - 2.0 * sign * inner(a, &b).re;
            (d.max(0.0) / na).sqrt()
        }
    };
    let (c, v) = best_center(g.nx(), fixed(1.0));
    if v <= tol {
        report.even_center = Some(c);
    }
    let (c, v) = best_center(g.nx(), fixed(-1.0));
    if v <= tol {
        report.odd_center = Some(c);
    }
    let free = |c: f64| {
        let b = rec.samples(Some(c), 0.5);
        let d = na + sq_norm(&b) - 2.0 * inner(a, &b).norm();
        (d.max(0.0) / na).sqrt()
    };
    let (c, v) = best_center(g.nx(), free);
    if v <= tol {
        let b = rec.samples(Some(c), 0.5);
        let phase = inner(&b, a).arg().rem_euclid(TAU);
        report.reflect_shift = Some(ReflectShift {
            phase,
            center: (2.0 * c).rem_euclid(LX),
            time_shift: s.shift.t / 2.0,
        });
    }
    report
}

/// All symmetry checks at once.
pub fn classify(s: &StatePoint, tol: f64) -> Result<SymmetryReport> {
    let mut r = detect_reflection(s, tol);
    r.l_symmetry = detect_l_symmetry(&s.field, tol)?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    SameOrbit,
    ConjugateOrbits,
    Distinct,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::SameOrbit => "same_orbit",
            Verdict::ConjugateOrbits => "conjugate_orbits",
            Verdict::Distinct => "distinct",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRelation {
    pub verdict: Verdict,
    /// `(alpha, s, tau)` carrying the first state onto the second (or onto
    /// the conjugate of the second).
    pub element: Option<[f64; 3]>,
    pub mismatch: f64,
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Compare `(phi, S, T)` modulo the period lattice; on success return the
/// lattice offsets `(j, k)` with `phi2 = phi1 + 2 pi j`, `S2 = S1 + Lx k`.
fn matching_shift(a: &GroupShift, b: &GroupShift, tol: f64) -> Option<(i64, i64)> {
    let dt = (a.t - b.t).abs();
    if dt > tol * a.t.abs().max(1.0) {
        return None;
    }
    let dphi = b.phi - a.phi;
    let j = (dphi / TAU).round();
    let ds = b.s - a.s;
    let k = (ds / LX).round();
    if (dphi - TAU * j).abs() > tol || (ds - LX * k).abs() > tol {
        return None;
    }
    Some((j as i64, k as i64))
}

/// Torus element mapping coefficients `a` onto `b`, if any.
fn align(grid: Grid, a: &[Complex64], b: &[Complex64]) -> Option<([f64; 3], f64)> {
    let scale = sq_norm(a).sqrt().max(sq_norm(b).sqrt());
    if scale == 0.0 {
        return Some(([0.0; 3], 0.0));
    }
    let amax = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut modes: Vec<usize> = (0..a.len())
        .filter(|&i| a[i].norm() >= 1e-3 * amax && b[i].norm() >= 1e-3 * amax)
        .collect();
    if modes.is_empty() {
        return None;
    }
    modes.sort_by(|&i, &j| a[j].norm().total_cmp(&a[i].norm()));
    let rows: Vec<[f64; 3]> = modes
        .iter()
        .map(|&i| {
            let (m, n) = grid.mode(i);
            [1.0, m as f64, n as f64]
        })
        .collect();
    let phases: Vec<f64> = modes.iter().map(|&i| (b[i] / a[i]).arg()).collect();
    let weights: Vec<f64> = modes.iter().map(|&i| a[i].norm()).collect();

    let top = modes.len().min(16);
    let candidates = lattice_candidates(&rows[..top], &phases[..top]);
    let mismatch = |x: &[f64; 3]| -> f64 {
        let d: f64 = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (za, zb))| {
                let (m, n) = grid.mode(i);
                (za * Complex64::from_polar(1.0, x[0] + m as f64 * x[1] + n as f64 * x[2]) - zb).norm_sqr()
            })
            .sum();
        d.sqrt() / scale
    };
    let mut best = candidates
        .into_iter()
        .map(|x| (mismatch(&x), x))
        .min_by(|p, q| p.0.total_cmp(&q.0))?;

    // Weighted least-squares polish over all significant modes.
    for _ in 0..2 {
        let x = best.1;
        let mut ata = Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for ((r, th), w) in rows.iter().zip(&phases).zip(&weights) {
            let e = wrap_pi(th - (x[0] + r[1] * x[1] + r[2] * x[2]));
            let rv = Vector3::new(r[0], r[1], r[2]);
            ata += w * w * rv * rv.transpose();
            atb += w * w * e * rv;
        }
        let dx = ata.svd(true, true).solve(&atb, 1e-12).ok()?;
        let cand = [x[0] + dx[0], x[1] + dx[1], x[2] + dx[2]];
        let v = mismatch(&cand);
        if v < best.0 {
            best = (v, cand);
        }
    }
    let x = best.1;
    Some(([x[0].rem_euclid(TAU), x[1].rem_euclid(TAU), x[2].rem_euclid(TAU)], best.0))
}

/// Solutions of `alpha + m s + n tau = theta (mod 2 pi)` for an independent
/// subset of the rows, one per class of the solution lattice.
fn lattice_candidates(rows: &[[f64; 3]], phases: &[f64]) -> Vec<[f64; 3]> {
    let det3 = |i: usize, j: usize, k: usize| {
        Matrix3::from_rows(&[
            Vector3::from(rows[i]).transpose(),
            Vector3::from(rows[j]).transpose(),
            Vector3::from(rows[k]).transpose(),
        ])
        .determinant()
    };
    let n = rows.len();
    let mut best: Option<(f64, [usize; 3])> = None;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let d = det3(i, j, k).abs();
                if d > 0.5 && best.map_or(true, |(bd, _)| d < bd - 0.5) {
                    best = Some((d, [i, j, k]));
                }
            }
        }
    }
    if let Some((d, idx)) = best {
        let m = Matrix3::from_rows(&idx.map(|i| Vector3::from(rows[i]).transpose()));
        let inv = m.try_inverse().expect("nonzero determinant");
        let count = (d.round() as i64).clamp(1, 8);
        let theta = Vector3::new(phases[idx[0]], phases[idx[1]], phases[idx[2]]);
        let mut out = Vec::new();
        for a in 0..count {
            for b in 0..count {
                for c in 0..count {
                    let k = Vector3::new(a as f64, b as f64, c as f64) * TAU;
                    let x = inv * (theta + k);
                    out.push([x[0], x[1], x[2]]);
                }
            }
        }
        return out;
    }
    // Rank-deficient support: solve for as many unknowns as the rank
    // allows, keep the others at zero.
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let d = rows[i][p] * rows[j][q] - rows[i][q] * rows[j][p];
                if d.abs() > 0.5 {
                    let count = (d.abs().round() as i64).clamp(1, 8);
                    for ka in 0..count {
                        for kb in 0..count {
                            let (ta, tb) = (phases[i] + TAU * ka as f64, phases[j] + TAU * kb as f64);
                            let xp = (ta * rows[j][q] - tb * rows[i][q]) / d;
                            let xq = (rows[i][p] * tb - rows[j][p] * ta) / d;
                            let mut x = [0.0; 3];
                            x[p] = xp;
                            x[q] = xq;
                            out.push(x);
                        }
                    }
                    return out;
                }
            }
        }
    }
    vec![[phases[0], 0.0, 0.0]]
}

/// Decide whether two states lie on the same torus orbit, on orbits
/// exchanged by reflection, or on unrelated orbits.
pub fn same_orbit(s1: &StatePoint, s2: &StatePoint, tol: f64) -> Result<OrbitRelation> {
    if s1.grid() != s2.grid() {
        return Err(Error::GridMismatch);
    }
    let direct = try_align(s1, s2, tol);
    if let Some((x, v)) = direct {
        if v <= tol {
            return Ok(OrbitRelation { verdict: Verdict::SameOrbit, element: Some(x), mismatch: v });
        }
    }
    if let Some((x, v)) = try_align(s1, &conjugate(s2), tol) {
        if v <= tol {
            return Ok(OrbitRelation { verdict: Verdict::ConjugateOrbits, element: Some(x), mismatch: v });
        }
    }
    Ok(OrbitRelation {
        verdict: Verdict::Distinct,
        element: None,
        mismatch: direct.map_or(f64::INFINITY, |d| d.1),
    })
}

fn try_align(s1: &StatePoint, s2: &StatePoint, tol: f64) -> Option<([f64; 3], f64)> {
    let (j, k) = matching_shift(&s1.shift, &s2.shift, tol)?;
    let s2 = reexpress(s2, -j, -k).ok()?;
    align(s1.grid(), s1.field.coefficients(), s2.field.coefficients())
}

/// Number of clusters among parameter points, greedily merging points
/// closer than the distinctness threshold.
pub fn count_distinct(points: &[[f64; 3]]) -> usize {
    let mut reps: Vec<[f64; 3]> = Vec::new();
    for p in points {
        let near = reps.iter().any(|r| {
            let d: f64 = r.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            d.sqrt() < DISTINCT_THRESHOLD
        });
        if !near {
            reps.push(*p);
        }
    }
    reps.len()
}
