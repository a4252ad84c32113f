//! The invariance equations for a relative periodic orbit and their
//! linearization.
//!
//! A state is the tuple of space-time coefficients, the group element
//! `(phi, S, T)` and the parameter point `(R, nu, mu)`. The real unknown
//! vector interleaves `(Re, Im)` of each coefficient in canonical order and
//! then appends `phi, S, T`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::newton::{pivot_columns, BorderedOperator};
use crate::spectral::{coefficients_of, cubic_conv, dealiased_size, samples_of, Grid, SpectralField};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    pub r: f64,
    pub nu: f64,
    pub mu: f64,
}

impl Parameters {
    pub fn new(r: f64, nu: f64, mu: f64) -> Self {
        Self { r, nu, mu }
    }

    pub fn get(&self, which: ParamName) -> f64 {
        match which {
            ParamName::R => self.r,
            ParamName::Nu => self.nu,
            ParamName::Mu => self.mu,
        }
    }

    pub fn with(mut self, which: ParamName, value: f64) -> Self {
        match which {
            ParamName::R => self.r = value,
            ParamName::Nu => self.nu = value,
            ParamName::Mu => self.mu = value,
        }
        self
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.nu, self.mu]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    R,
    Nu,
    Mu,
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamName::R => "R",
            ParamName::Nu => "nu",
            ParamName::Mu => "mu",
        })
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(ParamName::R),
            "nu" => Ok(ParamName::Nu),
            "mu" => Ok(ParamName::Mu),
            other => Err(Error::InvalidArgument(format!("unknown parameter '{other}'"))),
        }
    }
}

/// Rotation angle, spatial shift and period of the orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupShift {
    pub phi: f64,
    pub s: f64,
    pub t: f64,
}

impl GroupShift {
    pub fn new(phi: f64, s: f64, t: f64) -> Self {
        Self { phi, s, t }
    }

    /// `phi` in `[0, 2pi)` and `S` in `[0, Lx)`, for reporting only.
    pub fn reduced(&self) -> Self {
        Self {
            phi: self.phi.rem_euclid(TAU),
            s: self.s.rem_euclid(crate::spectral::LX),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    pub field: SpectralField,
    pub shift: GroupShift,
    pub params: Parameters,
}

impl StatePoint {
    pub fn new(field: SpectralField, shift: GroupShift, params: Parameters) -> Result<Self> {
        let s = Self { field, shift, params };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift.t > 0.0) {
            return Err(Error::NonPositivePeriod(self.shift.t));
        }
        let finite = [self.shift.phi, self.shift.s, self.shift.t, self.params.r, self.params.nu, self.params.mu]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.field.coefficients().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        self.field.grid()
    }

    pub fn to_unknowns(&self) -> Vec<f64> {
        let mut x = split(self.field.coefficients());
        x.extend_from_slice(&[self.shift.phi, self.shift.s, self.shift.t]);
        x
    }

    pub fn from_unknowns(grid: Grid, params: Parameters, x: &[f64]) -> Result<Self> {
        let q = grid.unknown_count();
        if x.len() != q {
            return Err(Error::DimensionMismatch { expected: q, found: x.len() });
        }
        let p = grid.equation_count();
        let field = SpectralField::from_coefficients(grid, join(&x[..p]))?;
        Ok(Self {
            field,
            shift: GroupShift::new(x[p], x[p + 1], x[p + 2]),
            params,
        })
    }
}

pub(crate) fn split(c: &[Complex64]) -> Vec<f64> {
    c.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub(crate) fn join(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Diagonal coefficient of the linear part for mode `(m, n)`.
pub fn linear_multiplier(shift: &GroupShift, params: &Parameters, m: i32, n: i32) -> Complex64 {
    let (m, n) = (m as f64, n as f64);
    let t = shift.t;
    I * ((TAU * n - shift.phi - m * shift.s) / t) - params.r + m * m * Complex64::new(1.0, params.nu)
}

fn check_state(s: &StatePoint) -> Result<()> {
    if !(s.shift.t > 0.0) {
        return Err(Error::NonPositivePeriod(s.shift.t));
    }
    s.validate()
}

fn residual_complex(s: &StatePoint) -> Result<Vec<Complex64>> {
    check_state(s)?;
    let g = s.grid();
    let nl = cubic_conv(&s.field, &s.field, &s.field)?;
    let w = Complex64::new(1.0, s.params.mu);
    Ok(s.field
        .coefficients()
        .iter()
        .zip(nl.coefficients())
        .enumerate()
        .map(|(i, (a, c3))| {
            let (m, n) = g.mode(i);
            linear_multiplier(&s.shift, &s.params, m, n) * a + w * c3
        })
        .collect())
}

/// Residual of the invariance equations, length `2(Nx-1)(Nt-1)`.
pub fn residual(s: &StatePoint) -> Result<Vec<f64>> {
    Ok(split(&residual_complex(s)?))
}

pub fn residual_norm(s: &StatePoint) -> Result<f64> {
    Ok(norm(&residual(s)?))
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Jacobian-vector product for a direction over coefficients and `phi, S, T`.
pub fn jvp(s: &StatePoint, v: &[f64]) -> Result<Vec<f64>> {
    let q = s.grid().unknown_count();
    if v.len() != q {
        return Err(Error::DimensionMismatch { expected: q, found: v.len() });
    }
    Ok(Linearization::new(s)?.apply(v))
}

/// Derivative of the residual with respect to one parameter.
pub fn param_column(s: &StatePoint, which: ParamName) -> Result<Vec<f64>> {
    let g = s.grid();
    let a = s.field.coefficients();
    let col: Vec<Complex64> = match which {
        ParamName::R => a.iter().map(|z| -z).collect(),
        ParamName::Nu => a
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let m = g.mode(i).0 as f64;
                I * m * m * z
            })
            .collect(),
        ParamName::Mu => cubic_conv(&s.field, &s.field, &s.field)?
            .coefficients()
            .iter()
            .map(|z| I * z)
            .collect(),
    };
    Ok(split(&col))
}

/// Infinitesimal generators of the torus action: `i a`, `i m a`, `i n a`,
/// with zero `phi, S, T` components.
pub fn kernel_generators(s: &StatePoint) -> [Vec<f64>; 3] {
    let g = s.grid();
    let a = s.field.coefficients();
    let make = |w: &dyn Fn(i32, i32) -> f64| {
        let mut v: Vec<f64> = split(
            &a.iter()
                .enumerate()
                .map(|(i, z)| {
                    let (m, n) = g.mode(i);
                    I * w(m, n) * z
                })
                .collect::<Vec<_>>(),
        );
        v.extend_from_slice(&[0.0; 3]);
        v
    };
    [make(&|_, _| 1.0), make(&|m, _| m as f64), make(&|_, n| n as f64)]
}

/// Apply the inverse of the block-diagonal linear-part Jacobian.
pub fn precond_apply(s: &StatePoint, r: &[f64]) -> Result<Vec<f64>> {
    let p = s.grid().equation_count();
    if r.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: r.len() });
    }
    let mut out = r.to_vec();
    apply_block_inverse(&clamped_multipliers(s), &mut out);
    Ok(out)
}

fn multipliers(s: &StatePoint) -> Vec<Complex64> {
    s.grid()
        .mode_iter()
        .map(|(m, n)| linear_multiplier(&s.shift, &s.params, m, n))
        .collect()
}

fn clamped_multipliers(s: &StatePoint) -> Vec<Complex64> {
    clamp(multipliers(s))
}

fn clamp(mut c: Vec<Complex64>) -> Vec<Complex64> {
    let floor = 1e-10 * c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if floor == 0.0 {
        return c.iter().map(|_| Complex64::new(1.0, 0.0)).collect();
    }
    for z in c.iter_mut() {
        let r = z.norm();
        if r < floor {
            *z = if r == 0.0 { Complex64::new(floor, 0.0) } else { *z * (floor / r) };
        }
    }
    c
}

fn apply_block_inverse(c: &[Complex64], r: &mut [f64]) {
    for (pair, z) in r.chunks_exact_mut(2).zip(c) {
        let v = Complex64::new(pair[0], pair[1]) / z;
        pair[0] = v.re;
        pair[1] = v.im;
    }
}

/// Columns of the full unknown vector moved out of the square block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapColumns {
    pub columns: [usize; 3],
    /// Set when the torus orbit has dimension below three, so that some of
    /// the `phi, S, T` columns are swapped out instead of coefficient columns.
    pub degenerate: bool,
}

/// Choose the three columns removed from the Jacobian so the remaining
/// square block is invertible.
pub fn select_swap_columns(s: &StatePoint) -> Result<SwapColumns> {
    if s.field.is_zero() {
        return Err(Error::ZeroField);
    }
    let lin = Linearization::new(s)?;
    let (basis, degenerate) = lin.kernel_estimate();
    Ok(SwapColumns {
        columns: pivot_columns(&basis),
        degenerate,
    })
}

/// Jacobian of the invariance equations at a fixed state, with the
/// collocation data needed for repeated products.
pub struct Linearization {
    grid: Grid,
    shift: GroupShift,
    coef: Vec<Complex64>,
    mult: Vec<Complex64>,
    precond: Vec<Complex64>,
    /// `(1 + i mu) A^2` on the padded grid.
    a_sq: Vec<Complex64>,
    /// `2 (1 + i mu) |A|^2` on the padded grid.
    a_abs: Vec<Complex64>,
    residual: Vec<Complex64>,
}

impl Linearization {
    pub fn new(s: &StatePoint) -> Result<Self> {
        check_state(s)?;
        let grid = s.grid();
        let (px, pt) = dealiased_size(grid);
        let w = Complex64::new(1.0, s.params.mu);
        let a = samples_of(grid, s.field.coefficients(), px, pt);
        let a_sq: Vec<Complex64> = a.iter().map(|z| w * z * z).collect();
        let a_abs: Vec<Complex64> = a.iter().map(|z| w * (2.0 * z.norm_sqr())).collect();
        let cube: Vec<Complex64> = a.iter().map(|z| z * z.norm_sqr()).collect();
        let nl = coefficients_of(grid, cube, px, pt);
        let mult = multipliers(s);
        let residual = s
            .field
            .coefficients()
            .iter()
            .zip(&mult)
            .zip(&nl)
            .map(|((a, c), n3)| c * a + w * n3)
            .collect();
        Ok(Self {
            grid,
            shift: s.shift,
            coef: s.field.coefficients().to_vec(),
            precond: clamp(mult.clone()),
            mult,
            a_sq,
            a_abs,
            residual,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn residual(&self) -> Vec<f64> {
        split(&self.residual)
    }

    /// Complex factors of the `phi, S, T` columns for mode `(m, n)`.
    fn shift_factors(&self, m: i32, n: i32) -> [Complex64; 3] {
        let t = self.shift.t;
        let (mf, nf) = (m as f64, n as f64);
        [
            -I / t,
            -I * mf / t,
            -I * (TAU * nf - self.shift.phi - mf * self.shift.s) / (t * t),
        ]
    }

    fn shift_column(&self, which: usize) -> Vec<f64> {
        let col: Vec<Complex64> = self
            .coef
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let (m, n) = self.grid.mode(i);
                self.shift_factors(m, n)[which] * a
            })
            .collect();
        split(&col)
    }

    /// Coefficient-block action on a complex direction.
    fn apply_coefficients(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (px, pt) = dealiased_size(self.grid);
        let mut s = samples_of(self.grid, v, px, pt);
        for ((z, a2), ab) in s.iter_mut().zip(&self.a_sq).zip(&self.a_abs) {
            *z = a2 * z.conj() + ab * *z;
        }
        let nl = coefficients_of(self.grid, s, px, pt);
        v.iter()
            .zip(&self.mult)
            .zip(nl)
            .map(|((x, c), y)| c * x + y)
            .collect()
    }

    /// Approximate basis of the Jacobian kernel, and whether any basis
    /// vector lies in the `phi, S, T` block.
    ///
    /// Each direction `gamma` of the torus Lie algebra gives either the
    /// coefficient-space generator `i (gamma . (1, m, n)) a`, or, when that
    /// generator is small, a combination of the `phi, S, T` columns that the
    /// same direction annihilates. The better approximate null vector of the
    /// two is kept.
    pub(crate) fn kernel_estimate(&self) -> ([Vec<f64>; 3], bool) {
        let p = self.grid.equation_count();
        let weights: Vec<[f64; 3]> = self
            .grid
            .mode_iter()
            .map(|(m, n)| [1.0, m as f64, n as f64])
            .collect();
        let mut gram = Matrix3::<f64>::zeros();
        for (a, w) in self.coef.iter().zip(&weights) {
            let s = a.norm_sqr();
            for i in 0..3 {
                for j in 0..3 {
                    gram[(i, j)] += w[i] * w[j] * s;
                }
            }
        }
        let eig = SymmetricEigen::new(gram);
        let (phi, s_shift, t) = (self.shift.phi, self.shift.s, self.shift.t);
        let mut degenerate = false;
        let basis = std::array::from_fn(|k| {
            let gamma = eig.eigenvectors.column(k);
            let sigma = eig.eigenvalues[k].max(0.0).sqrt();
            let alpha = [
                gamma[0] + gamma[2] * phi / TAU,
                gamma[1] + gamma[2] * s_shift / TAU,
                gamma[2] * t / TAU,
            ];
            let alpha_norm = norm(&alpha);
            let shift_res = sigma / (t * alpha_norm);
            let coef_res = if sigma > 0.0 {
                let r: f64 = self
                    .residual
                    .iter()
                    .zip(&weights)
                    .map(|(f, w)| {
                        let d = gamma[0] * w[0] + gamma[1] * w[1] + gamma[2] * w[2];
                        d * d * f.norm_sqr()
                    })
                    .sum();
                r.sqrt() / sigma
            } else {
                f64::INFINITY
            };
            let mut v = vec![0.0; p + 3];
            if coef_res <= shift_res {
                for (i, (a, w)) in self.coef.iter().zip(&weights).enumerate() {
                    let d = gamma[0] * w[0] + gamma[1] * w[1] + gamma[2] * w[2];
                    let z = I * d * a / sigma;
                    v[2 * i] = z.re;
                    v[2 * i + 1] = z.im;
                }
            } else {
                degenerate = true;
                for j in 0..3 {
                    v[p + j] = alpha[j] / alpha_norm;
                }
            }
            v
        });
        (basis, degenerate)
    }
}

impl BorderedOperator for Linearization {
    fn rows(&self) -> usize {
        self.grid.equation_count()
    }

    fn cols(&self) -> usize {
        self.grid.unknown_count()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let p = self.rows();
        let vc = join(&v[..p]);
        let mut out = self.apply_coefficients(&vc);
        let (dphi, ds, dt) = (v[p], v[p + 1], v[p + 2]);
        if dphi != 0.0 || ds != 0.0 || dt != 0.0 {
            for (i, (o, a)) in out.iter_mut().zip(&self.coef).enumerate() {
                let (m, n) = self.grid.mode(i);
                let f = self.shift_factors(m, n);
                *o += (f[0] * dphi + f[1] * ds + f[2] * dt) * a;
            }
        }
        split(&out)
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let p = self.rows();
        if j >= p {
            return self.shift_column(j - p);
        }
        let mut e = vec![Complex64::new(0.0, 0.0); p / 2];
        e[j / 2] = if j % 2 == 0 { Complex64::new(1.0, 0.0) } else { I };
        split(&self.apply_coefficients(&e))
    }

    fn precondition(&self, r: &mut [f64]) {
        apply_block_inverse(&self.precond, r);
    }

    fn null_basis(&self) -> [Vec<f64>; 3] {
        self.kernel_estimate().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plane_wave_k1(grid: Grid) -> StatePoint {
        let mut f = SpectralField::zeros(grid);
        f.set(1, 0, c(15f64.sqrt(), 0.0));
        StatePoint::new(f, GroupShift::new(5.8, 1.0, 0.1), Parameters::new(16.0, -7.0, 5.0)).unwrap()
    }

    fn random_state(grid: Grid, seed: u64) -> StatePoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef = (0..grid.modes())
            .map(|_| c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let f = SpectralField::from_coefficients(grid, coef).unwrap();
        StatePoint::new(f, GroupShift::new(0.7, 0.4, 0.6), Parameters::new(3.0, 0.5, -1.5)).unwrap()
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let g = Grid::new(8, 8).unwrap();
        let s = StatePoint::new(SpectralField::zeros(g), GroupShift::new(1.0, 2.0, 0.3), Parameters::new(2.0, 1.0, 1.0))
            .unwrap();
        assert!(residual(&s).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn plane_wave_residual_vanishes() {
        let s = plane_wave_k1(Grid::new(8, 8).unwrap());
        assert_eq!(linear_multiplier(&s.shift, &s.params, 1, 0), c(-15.0, -75.0));
        assert!(residual_norm(&s).unwrap() < 1e-12);
    }

    #[test]
    fn stokes_wave_residual_vanishes() {
        let g = Grid::new(8, 8).unwrap();
        let mut f = SpectralField::zeros(g);
        f.set(0, 0, c(4.0, 0.0));
        for s_shift in [0.0, 1.3, 4.0] {
            let s = StatePoint::new(f.clone(), GroupShift::new(4.0, s_shift, 0.05), Parameters::new(16.0, -7.0, 5.0))
                .unwrap();
            assert!(residual_norm(&s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn residual_rejects_bad_period() {
        let mut s = plane_wave_k1(Grid::new(8, 8).unwrap());
        s.shift.t = 0.0;
        assert!(matches!(residual(&s), Err(Error::NonPositivePeriod(_))));
        s.shift.t = f64::NAN;
        assert!(residual(&s).is_err());
    }

    #[test]
    fn unknown_round_trip() {
        let s = random_state(Grid::new(8, 10).unwrap(), 1);
        let x = s.to_unknowns();
        assert_eq!(x.len(), s.grid().unknown_count());
        let back = StatePoint::from_unknowns(s.grid(), s.params, &x).unwrap();
        assert_eq!(back, s);
        assert!(StatePoint::from_unknowns(s.grid(), s.params, &x[1..]).is_err());
    }

    #[test]
    fn jvp_matches_central_differences() {
        let s = random_state(Grid::new(8, 8).unwrap(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = s.to_unknowns();
        for _ in 0..5 {
            let v: Vec<f64> = (0..x0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eps = 1e-6;
            let at = |sign: f64| {
                let x: Vec<f64> = x0.iter().zip(&v).map(|(a, b)| a + sign * eps * b).collect();
                residual(&StatePoint::from_unknowns(s.grid(), s.params, &x).unwrap()).unwrap()
            };
            let (fp, fm) = (at(1.0), at(-1.0));
            let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let j = jvp(&s, &v).unwrap();
            let err: Vec<f64> = fd.iter().zip(&j).map(|(a, b)| a - b).collect();
            assert!(norm(&err) <= 1e-6 * norm(&j));
        }
    }

    #[test]
    fn jvp_of_zero_is_zero() {
        let s = random_state(Grid::new(8, 8).unwrap(), 3);
        let z = jvp(&s, &vec![0.0; s.grid().unknown_count()]).unwrap();
        assert!(z.iter().all(|x| *x == 0.0));
        assert!(jvp(&s, &[0.0; 4]).is_err());
    }

    #[test]
    fn columns_agree_with_products() {
        let s = random_state(Grid::new(8, 8).unwrap(), 4);
        let lin = Linearization::new(&s).unwrap();
        let q = lin.cols();
        for j in [0, 1, 17, q - 3, q - 2, q - 1] {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            let a = lin.apply(&e);
            let b = lin.column(j);
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            assert!(norm(&d) <= 1e-13 * (1.0 + norm(&a)));
        }
    }

    #[test]
    fn parameter_columns() {
        let g = Grid::new(8, 8).unwrap();
        let mut f = SpectralField::zeros(g);
        f.set(1, 0, c(2.0, 0.0));
        f.set(2, 0, c(1.0, 0.0));
        let s = StatePoint::new(f, GroupShift::new(0.1, 0.2, 0.3), Parameters::new(1.0, 2.0, 3.0)).unwrap();
        let col_r = param_column(&s, ParamName::R).unwrap();
        let i10 = g.index(1, 0);
        assert_eq!((col_r[2 * i10], col_r[2 * i10 + 1]), (-2.0, -0.0));
        let col_nu = param_column(&s, ParamName::Nu).unwrap();
        let i20 = g.index(2, 0);
        assert_eq!((col_nu[2 * i20], col_nu[2 * i20 + 1]), (0.0, 4.0));

        let s = random_state(g, 5);
        let eps = 1e-6;
        for which in [ParamName::R, ParamName::Nu, ParamName::Mu] {
            let v = s.params.get(which);
            let mut sp = s.clone();
            sp.params = s.params.with(which, v + eps);
            let mut sm = s.clone();
            sm.params = s.params.with(which, v - eps);
            let (fp, fm) = (residual(&sp).unwrap(), residual(&sm).unwrap());
            let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let col = param_column(&s, which).unwrap();
            let d: Vec<f64> = fd.iter().zip(&col).map(|(a, b)| a - b).collect();
            assert!(norm(&d) <= 1e-6 * norm(&col), "{which}");
        }
    }

    #[test]
    fn residual_linear_in_r_and_nu() {
        let s = random_state(Grid::new(8, 8).unwrap(), 6);
        let f0 = residual(&s).unwrap();
        for which in [ParamName::R, ParamName::Nu] {
            let delta = 0.37;
            let mut s1 = s.clone();
            s1.params = s.params.with(which, s.params.get(which) + delta);
            let f1 = residual(&s1).unwrap();
            let col = param_column(&s, which).unwrap();
            for i in 0..f0.len() {
                assert!((f1[i] - f0[i] - delta * col[i]).abs() < 1e-13 * (1.0 + f0[i].abs()));
            }
        }
    }

    #[test]
    fn kernel_generator_shapes() {
        let g = Grid::new(8, 8).unwrap();
        let s = plane_wave_k1(g);
        let [v1, v2, v3] = kernel_generators(&s);
        let i10 = g.index(1, 0);
        let a = 15f64.sqrt();
        for (j, x) in v2.iter().enumerate() {
            let expect = if j == 2 * i10 + 1 { a } else { 0.0 };
            assert_eq!(*x, expect);
        }
        assert_eq!(v1, v2);
        assert!(v3.iter().all(|x| *x == 0.0));

        let mut f = SpectralField::zeros(g);
        f.set(0, 0, c(4.0, 0.0));
        let s = StatePoint::new(f, GroupShift::new(4.0, 0.0, 0.05), Parameters::new(16.0, -7.0, 5.0)).unwrap();
        let [_, v2, v3] = kernel_generators(&s);
        assert!(v2.iter().chain(&v3).all(|x| *x == 0.0));
    }

    #[test]
    fn kernel_generators_annihilated_at_plane_wave() {
        let s = plane_wave_k1(Grid::new(16, 16).unwrap());
        for v in kernel_generators(&s) {
            assert!(norm(&jvp(&s, &v).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn preconditioner_inverts_block_diagonal() {
        let g = Grid::new(8, 8).unwrap();
        let s = random_state(g, 7);
        let c = multipliers(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..g.equation_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dx: Vec<f64> = split(&join(&x).iter().zip(&c).map(|(a, b)| a * b).collect::<Vec<_>>());
        let back = precond_apply(&s, &dx).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditioner_plane_wave_block() {
        let g = Grid::new(8, 8).unwrap();
        let s = plane_wave_k1(g);
        let (u, w) = (0.3, -1.1);
        let mut r = vec![0.0; g.equation_count()];
        let i = g.index(1, 0);
        r[2 * i] = -15.0 * u + 75.0 * w;
        r[2 * i + 1] = -75.0 * u - 15.0 * w;
        let out = precond_apply(&s, &r).unwrap();
        assert!((out[2 * i] - u).abs() < 1e-14 && (out[2 * i + 1] - w).abs() < 1e-14);
    }

    #[test]
    fn preconditioner_clamps_resonance() {
        let g = Grid::new(8, 8).unwrap();
        // c(1,0) = i(-phi - S)/T - R + 1 + i nu vanishes for R = 1, phi + S = nu T.
        let s = StatePoint::new(SpectralField::zeros(g), GroupShift::new(0.2, 0.1, 0.1), Parameters::new(1.0, 3.0, 0.0))
            .unwrap();
        assert!(linear_multiplier(&s.shift, &s.params, 1, 0).norm() < 1e-12);
        let out = precond_apply(&s, &vec![1.0; g.equation_count()]).unwrap();
        assert!(out.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn swap_columns_plane_wave() {
        let g = Grid::new(8, 8).unwrap();
        let s = plane_wave_k1(g);
        let sw = select_swap_columns(&s).unwrap();
        let i10 = g.index(1, 0);
        assert_eq!(sw.columns[0], 2 * i10 + 1);
        assert!(sw.degenerate);
        let [a, b, c] = sw.columns;
        assert!(a != b && b != c && a != c);
    }

    #[test]
    fn swap_columns_stokes_and_generic() {
        let g = Grid::new(8, 8).unwrap();
        let mut f = SpectralField::zeros(g);
        f.set(0, 0, c(4.0, 0.0));
        let s = StatePoint::new(f, GroupShift::new(4.0, 0.0, 0.05), Parameters::new(16.0, -7.0, 5.0)).unwrap();
        let sw = select_swap_columns(&s).unwrap();
        assert!(sw.degenerate);
        let p = g.equation_count();
        assert!(sw.columns.contains(&(2 * g.index(0, 0) + 1)));
        assert!(sw.columns.contains(&(p + 1)));

        let s = random_state(g, 8);
        let [a, b, c] = select_swap_columns(&s).unwrap().columns;
        assert!(a != b && b != c && a != c);

        let z = StatePoint::new(SpectralField::zeros(g), s.shift, s.params).unwrap();
        assert!(matches!(select_swap_columns(&z), Err(Error::ZeroField)));
    }
}
