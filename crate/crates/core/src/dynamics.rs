//! Galerkin-truncated ODEs for the spatial Fourier coefficients `a_m(t)`,
//! their exponential time-differencing integrator, and orbit validation by
//! direct integration.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};
use crate::system::{GroupShift, Parameters, StatePoint};

/// Steps per period used when none is given.
pub const DEFAULT_STEPS: usize = 2048;

/// Threshold on the monodromy eigenvalue magnitudes.
pub const UNIT_TOL: f64 = 1e-6;

const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    nx: usize,
    /// Coefficients for `m = -Nx/2+1 ..= Nx/2-1`.
    pub a: Vec<Complex64>,
    pub t: f64,
}

impl OdeState {
    pub fn new(nx: usize, a: Vec<Complex64>, t: f64) -> Result<Self> {
        if nx < 8 || nx % 2 != 0 {
            return Err(Error::InvalidGrid { nx, nt: 0 });
        }
        if a.len() != nx - 1 {
            return Err(Error::DimensionMismatch { expected: nx - 1, found: a.len() });
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || !t.is_finite() {
            return Err(Error::NonFinite("ODE state"));
        }
        Ok(Self { nx, a, t })
    }

    /// Spatial coefficients at `t = 0` of a space-time state.
    pub fn initial(s: &StatePoint) -> Self {
        let g = s.grid();
        let mut a = vec![Complex64::new(0.0, 0.0); g.nx() - 1];
        for (i, c) in s.field.coefficients().iter().enumerate() {
            let (m, _) = g.mode(i);
            a[(m + g.m_max()) as usize] += c;
        }
        Self { nx: g.nx(), a, t: 0.0 }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn norm(&self) -> f64 {
        l2(&self.a)
    }
}

fn l2(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Padded 1-D transforms for the cubic term.
struct Spatial {
    nx: usize,
    p: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spatial {
    fn new(nx: usize) -> Self {
        let p = 2 * nx;
        let mut planner = FftPlanner::new();
        Self {
            nx,
            p,
            fwd: planner.plan_fft_forward(p),
            inv: planner.plan_fft_inverse(p),
        }
    }

    fn m_max(&self) -> i32 {
        (self.nx / 2 - 1) as i32
    }

    fn samples(&self, a: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.p];
        for (i, z) in a.iter().enumerate() {
            let m = i as i32 - self.m_max();
            buf[m.rem_euclid(self.p as i32) as usize] = *z;
        }
        self.inv.process(&mut buf);
        buf
    }

    fn coefficients(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.p as f64;
        (0..self.nx - 1)
            .map(|i| {
                let m = i as i32 - self.m_max();
                buf[m.rem_euclid(self.p as i32) as usize] * scale
            })
            .collect()
    }
}

fn linear_part(nx: usize, p: &Parameters) -> Vec<Complex64> {
    let mm = (nx / 2 - 1) as i32;
    (-mm..=mm)
        .map(|m| {
            let k2 = (m * m) as f64;
            Complex64::new(p.r - k2, -k2 * p.nu)
        })
        .collect()
}

/// Right-hand side of the truncated ODE system.
pub fn ode_rhs(a: &OdeState, p: &Parameters) -> Vec<Complex64> {
    let sp = Spatial::new(a.nx);
    let lin = linear_part(a.nx, p);
    let nl = cubic_term(&sp, &a.a, p.mu);
    a.a.iter().zip(&lin).zip(nl).map(|((z, l), n)| l * z + n).collect()
}

/// `-(1 + i mu) P[|A|^2 A]`.
fn cubic_term(sp: &Spatial, a: &[Complex64], mu: f64) -> Vec<Complex64> {
    let w = -Complex64::new(1.0, mu);
    let s: Vec<Complex64> = sp.samples(a).into_iter().map(|z| w * z * z.norm_sqr()).collect();
    sp.coefficients(s)
}

/// Exponential time-differencing coefficients for one diagonal linear part.
struct EtdCoefficients {
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl EtdCoefficients {
    /// Contour-integral evaluation of the phi-functions, accurate for small
    /// `|L h|` where the closed forms cancel.
    fn new(lin: &[Complex64], h: f64) -> Self {
        const POINTS: usize = 32;
        let roots: Vec<Complex64> = (0..POINTS)
            .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * (j as f64 + 0.5) / POINTS as f64))
            .collect();
        let mut out = Self {
            e: Vec::with_capacity(lin.len()),
            e2: Vec::with_capacity(lin.len()),
            q: Vec::with_capacity(lin.len()),
            f1: Vec::with_capacity(lin.len()),
            f2: Vec::with_capacity(lin.len()),
            f3: Vec::with_capacity(lin.len()),
        };
        for l in lin {
            let lh = l * h;
            let (mut q, mut f1, mut f2, mut f3) = (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let z = lh + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z / 2.0).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            let scale = h / POINTS as f64;
            out.e.push(lh.exp());
            out.e2.push((lh / 2.0).exp());
            out.q.push(q * scale);
            out.f1.push(f1 * scale);
            out.f2.push(f2 * scale);
            out.f3.push(f3 * scale);
        }
        out
    }
}

/// Collocation data of the base trajectory at one ETDRK4 stage:
/// `-(1 + i mu) U^2` and `-2 (1 + i mu) |U|^2`.
struct StageFactors {
    sq: Vec<Complex64>,
    abs: Vec<Complex64>,
}

struct Integrator {
    sp: Spatial,
    etd: EtdCoefficients,
    mu: f64,
}

impl Integrator {
    fn new(nx: usize, p: &Parameters, h: f64) -> Self {
        Self {
            sp: Spatial::new(nx),
            etd: EtdCoefficients::new(&linear_part(nx, p), h),
            mu: p.mu,
        }
    }

    fn factors(&self, u: &[Complex64]) -> StageFactors {
        let w = -Complex64::new(1.0, self.mu);
        let s = self.sp.samples(u);
        StageFactors {
            sq: s.iter().map(|z| w * z * z).collect(),
            abs: s.iter().map(|z| w * 2.0 * z.norm_sqr()).collect(),
        }
    }

    fn variational_term(&self, v: &[Complex64], f: &StageFactors) -> Vec<Complex64> {
        let s: Vec<Complex64> = self
            .sp
            .samples(v)
            .into_iter()
            .zip(f.sq.iter().zip(&f.abs))
            .map(|(z, (a2, ab))| a2 * z.conj() + ab * z)
            .collect();
        self.sp.coefficients(s)
    }

    /// One ETDRK4 step for a system with diagonal linear part and nonlinear
    /// term `n(stage, value)`.
    fn step(&self, u: &[Complex64], mut n: impl FnMut(usize, &[Complex64]) -> Vec<Complex64>) -> Vec<Complex64> {
        let e = &self.etd;
        let nu = n(0, u);
        let a: Vec<Complex64> = (0..u.len()).map(|i| e.e2[i] * u[i] + e.q[i] * nu[i]).collect();
        let na = n(1, &a);
        let b: Vec<Complex64> = (0..u.len()).map(|i| e.e2[i] * u[i] + e.q[i] * na[i]).collect();
        let nb = n(2, &b);
        let c: Vec<Complex64> = (0..u.len())
            .map(|i| e.e2[i] * a[i] + e.q[i] * (2.0 * nb[i] - nu[i]))
            .collect();
        let nc = n(3, &c);
        (0..u.len())
            .map(|i| e.e[i] * u[i] + e.f1[i] * nu[i] + 2.0 * e.f2[i] * (na[i] + nb[i]) + e.f3[i] * nc[i])
            .collect()
    }
}

fn check_blow_up(a: &[Complex64], t: f64) -> Result<()> {
    let n = l2(a);
    if !(n <= BLOW_UP) {
        return Err(Error::BlowUp { t, norm: n });
    }
    Ok(())
}

/// Fixed-step fourth-order exponential time differencing from `a0.t` to
/// `a0.t + t_end`.
pub fn integrate(a0: &OdeState, p: &Parameters, t_end: f64, steps: usize) -> Result<OdeState> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let h = t_end / steps as f64;
    let it = Integrator::new(a0.nx, p, h);
    let mut u = a0.a.clone();
    for k in 0..steps {
        u = it.step(&u, |_, v| cubic_term(&it.sp, v, p.mu));
        check_blow_up(&u, a0.t + (k + 1) as f64 * h)?;
    }
    Ok(OdeState { nx: a0.nx, a: u, t: a0.t + t_end })
}

/// Apply `a_m -> e^{i phi} e^{i m S} a_m`.
fn apply_group(a: &mut [Complex64], shift: &GroupShift) {
    let mm = (a.len() / 2) as i32;
    for (i, z) in a.iter_mut().enumerate() {
        let m = (i as i32 - mm) as f64;
        *z *= Complex64::from_polar(1.0, shift.phi + m * shift.s);
    }
}

/// Relative distance between `a(0)` and the group-shifted `a(T)`.
pub fn closure_residual(s: &StatePoint, steps: usize) -> Result<f64> {
    s.validate()?;
    let a0 = OdeState::initial(s);
    let mut end = integrate(&a0, &s.params, s.shift.t, steps)?.a;
    apply_group(&mut end, &s.shift);
    let diff: Vec<Complex64> = end.iter().zip(&a0.a).map(|(x, y)| x - y).collect();
    let scale = a0.norm();
    Ok(if scale == 0.0 { l2(&diff) } else { l2(&diff) / scale })
}

#[derive(Debug, Clone)]
pub struct MonodromyResult {
    /// Sorted by decreasing magnitude.
    pub eigenvalues: Vec<Complex64>,
    pub unstable_dimension: usize,
    pub unit_count: usize,
    /// Real `2(Nx-1)` square matrix acting on interleaved `(Re, Im)` of `a_m`.
    pub matrix: DMatrix<f64>,
}

/// Group action composed with the linearized time-`T` flow.
pub fn relative_monodromy(s: &StatePoint, steps: usize) -> Result<MonodromyResult> {
    s.validate()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let a0 = OdeState::initial(s);
    let nx = a0.nx;
    let h = s.shift.t / steps as f64;
    let it = Integrator::new(nx, &s.params, h);

    let mut stages: Vec<[StageFactors; 4]> = Vec::with_capacity(steps);
    let mut u = a0.a.clone();
    for k in 0..steps {
        let mut recorded: Vec<StageFactors> = Vec::with_capacity(4);
        let next = it.step(&u, |_, v| {
            let f = it.factors(v);
            let w = -Complex64::new(1.0, s.params.mu);
            let cube: Vec<Complex64> = it.sp.samples(v).into_iter().map(|z| w * z * z.norm_sqr()).collect();
            recorded.push(f);
            it.sp.coefficients(cube)
        });
        let arr: [StageFactors; 4] = recorded.try_into().map_err(|_| Error::InvalidArgument("stage count".into()))?;
        stages.push(arr);
        u = next;
        check_blow_up(&u, (k + 1) as f64 * h)?;
    }

    let dim = 2 * (nx - 1);
    let columns: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut v = vec![Complex64::new(0.0, 0.0); nx - 1];
            v[j / 2] = if j % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            for st in &stages {
                v = it.step(&v, |k, w| it.variational_term(w, &st[k]));
            }
            apply_group(&mut v, &s.shift);
            v.iter().flat_map(|z| [z.re, z.im]).collect()
        })
        .collect();
    let mut matrix = DMatrix::zeros(dim, dim);
    for (j, col) in columns.iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            matrix[(i, j)] = *x;
        }
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowUp { t: s.shift.t, norm: f64::INFINITY });
    }

    let mut eigenvalues: Vec<Complex64> = matrix
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let unstable_dimension = eigenvalues.iter().filter(|z| z.norm() > 1.0 + UNIT_TOL).count();
    let unit_count = eigenvalues.iter().filter(|z| (z.norm() - 1.0).abs() <= UNIT_TOL).count();
    Ok(MonodromyResult {
        eigenvalues,
        unstable_dimension,
        unit_count,
        matrix,
    })
}

/// The single-mode solution `sqrt(R - k^2) e^{i(k x - omega t)}`.
pub fn plane_wave(grid: Grid, k: i32, p: Parameters, t: f64, s: f64) -> Result<StatePoint> {
    let a2 = p.r - (k * k) as f64;
    if !(a2 > 0.0) {
        return Err(Error::NoPlaneWave { k, r: p.r });
    }
    if k.abs() > grid.m_max() {
        return Err(Error::InvalidArgument(format!("wavenumber {k} is not retained on the grid")));
    }
    let omega = p.mu * a2 + p.nu * (k * k) as f64;
    let raw = omega * t - k as f64 * s;
    let wraps = (raw / std::f64::consts::TAU).floor();
    let phi = raw - wraps * std::f64::consts::TAU;
    let n = -(wraps as i64);
    if n.abs() > grid.n_max() as i64 {
        return Err(Error::InvalidArgument(format!("phase {raw} needs temporal index {n}, outside the grid")));
    }
    let mut field = SpectralField::zeros(grid);
    field.set(k, n as i32, Complex64::new(a2.sqrt(), 0.0));
    StatePoint::new(field, GroupShift::new(phi, s, t), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::residual_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bf() -> Parameters {
        Parameters::new(16.0, -7.0, 5.0)
    }

    #[test]
    fn plane_wave_with_negative_raw_phase() {
        let g = Grid::new(8, 8).unwrap();
        let s = plane_wave(g, 1, Parameters::new(2.0, -7.0, 5.0), 0.1, 1.0).unwrap();
        assert!(s.shift.phi >= 0.0 && s.shift.phi < std::f64::consts::TAU);
        assert_eq!(s.field.get(1, 1), c(1.0, 0.0));
        assert!(residual_norm(&s).unwrap() < 1e-12);
    }

    fn direct_rhs(a: &[Complex64], p: &Parameters) -> Vec<Complex64> {
        let mm = (a.len() / 2) as i32;
        let mut out: Vec<Complex64> = (-mm..=mm)
            .zip(a)
            .map(|(m, z)| {
                let k2 = (m * m) as f64;
                (p.r - k2 * c(1.0, p.nu)) * z
            })
            .collect();
        for m1 in -mm..=mm {
            for m2 in -mm..=mm {
                for m3 in -mm..=mm {
                    let m = m1 + m2 - m3;
                    if m.abs() <= mm {
                        let t = a[(m1 + mm) as usize] * a[(m2 + mm) as usize] * a[(m3 + mm) as usize].conj();
                        out[(m + mm) as usize] -= c(1.0, p.mu) * t;
                    }
                }
            }
        }
        out
    }

    fn random_ode(nx: usize, amp: f64, seed: u64) -> OdeState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..nx - 1).map(|_| c(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp))).collect();
        OdeState::new(nx, a, 0.0).unwrap()
    }

    #[test]
    fn rhs_zero_and_stokes() {
        let z = OdeState::new(8, vec![c(0.0, 0.0); 7], 0.0).unwrap();
        assert!(ode_rhs(&z, &bf()).iter().all(|v| v.norm() == 0.0));
        let mut a = vec![c(0.0, 0.0); 7];
        a[3] = c(4.0, 0.0);
        let r = ode_rhs(&OdeState::new(8, a, 0.0).unwrap(), &bf());
        assert!((r[3] - c(0.0, -320.0)).norm() < 1e-12);
    }

    #[test]
    fn rhs_matches_direct_sum() {
        let a = random_ode(8, 1.0, 1);
        let p = Parameters::new(2.0, 0.3, -0.8);
        let r = ode_rhs(&a, &p);
        let d = direct_rhs(&a.a, &p);
        for (x, y) in r.iter().zip(&d) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn stokes_rotation() {
        let mut a = vec![c(0.0, 0.0); 31];
        a[15] = c(4.0, 0.0);
        let a0 = OdeState::new(32, a, 0.0).unwrap();
        let end = integrate(&a0, &bf(), 0.05, DEFAULT_STEPS).unwrap();
        let expect = Complex64::from_polar(4.0, -4.0);
        assert!((end.a[15] - expect).norm() < 1e-10);
        assert!((end.t - 0.05).abs() < 1e-15);
    }

    #[test]
    fn linear_limit() {
        let mut a = vec![c(0.0, 0.0); 7];
        a[3 + 2] = c(1e-9, 0.0);
        let p = Parameters::new(1.0, 0.5, 3.0);
        let end = integrate(&OdeState::new(8, a, 0.0).unwrap(), &p, 0.3, 64).unwrap();
        let expect = 1e-9 * (c(1.0 - 4.0, -4.0 * 0.5) * 0.3).exp();
        assert!((end.a[5] - expect).norm() < 1e-9 * 1e-10);
    }

    #[test]
    fn step_halving_converges() {
        let a0 = random_ode(16, 0.3, 2);
        let p = Parameters::new(4.0, 1.0, -1.0);
        let coarse = integrate(&a0, &p, 0.2, 256).unwrap();
        let fine = integrate(&a0, &p, 0.2, 512).unwrap();
        let finer = integrate(&a0, &p, 0.2, 1024).unwrap();
        let d = |x: &OdeState, y: &OdeState| l2(&x.a.iter().zip(&y.a).map(|(a, b)| a - b).collect::<Vec<_>>());
        let (e1, e2) = (d(&coarse, &fine), d(&fine, &finer));
        assert!(e2 <= 1e-8 * finer.norm());
        assert!(e1 / e2 > 10.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn blow_up_reported() {
        let p = Parameters::new(1.0, 0.0, 0.0);
        let blow = integrate(&OdeState::new(8, vec![c(1e9, 0.0); 7], 0.0).unwrap(), &p, 1e-3, 4);
        assert!(matches!(blow, Err(Error::BlowUp { .. })));
        assert!(integrate(&OdeState::new(8, vec![c(0.0, 0.0); 7], 0.0).unwrap(), &p, 1.0, 0).is_err());
    }

    #[test]
    fn plane_wave_constructor() {
        let g = Grid::new(16, 16).unwrap();
        let s = plane_wave(g, 1, bf(), 0.1, 1.0).unwrap();
        assert!((s.shift.phi - 5.8).abs() < 1e-12);
        assert!((s.field.get(1, 0).re - 15f64.sqrt()).abs() < 1e-15);
        assert!(residual_norm(&s).unwrap() < 1e-12);
        let s = plane_wave(g, 0, bf(), 0.05, 0.0).unwrap();
        assert!((s.shift.phi - 4.0).abs() < 1e-12);
        assert_eq!(s.field.get(0, 0), c(4.0, 0.0));
        assert!(matches!(
            plane_wave(g, 4, bf(), 0.1, 0.0),
            Err(Error::NoPlaneWave { .. })
        ));
    }

    #[test]
    fn closure_of_plane_waves_and_non_solutions() {
        let g = Grid::new(16, 16).unwrap();
        for k in [0, 1, 2] {
            let s = plane_wave(g, k, bf(), 0.07, 0.3).unwrap();
            assert!(closure_residual(&s, DEFAULT_STEPS).unwrap() < 1e-10, "k={k}");
        }
        let mut s = plane_wave(g, 1, bf(), 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for z in s.field.coefficients_mut() {
            *z += c(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        }
        assert!(closure_residual(&s, DEFAULT_STEPS).unwrap() > 1e-3);
    }

    #[test]
    fn stokes_phase_direction_has_unit_multiplier() {
        let g = Grid::new(8, 8).unwrap();
        let s = plane_wave(g, 0, bf(), 0.05, 0.0).unwrap();
        let m = relative_monodromy(&s, 512).unwrap();
        let dim = m.matrix.nrows();
        let mut v = nalgebra::DVector::zeros(dim);
        v[2 * 3 + 1] = 4.0;
        let mv = &m.matrix * &v;
        assert!((mv - &v).norm() < 1e-6 * v.norm());
        assert!(m.unstable_dimension >= 1);
    }
}
