//! Truncated space-time Fourier representation and padded transforms.
//!
//! A field is stored as coefficients `a[m, n]` with `m` in `-Nx/2+1 ..= Nx/2-1`
//! and `n` in `-Nt/2+1 ..= Nt/2-1`, `m` varying fastest. Samples live on a
//! uniform grid over one spatial period and one scaled time period
//! `theta = t / T` in `[0, 1)`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Spatial period. Wavenumbers are therefore the integers `k_m = m`.
pub const LX: f64 = TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    nx: usize,
    nt: usize,
}

impl Grid {
    pub fn new(nx: usize, nt: usize) -> Result<Self> {
        if nx < 8 || nt < 8 || nx % 2 != 0 || nt % 2 != 0 {
            return Err(Error::InvalidGrid { nx, nt });
        }
        Ok(Self { nx, nt })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn lx(&self) -> f64 {
        LX
    }

    /// Largest retained spatial index `Nx/2 - 1`.
    pub fn m_max(&self) -> i32 {
        (self.nx / 2 - 1) as i32
    }

    /// Largest retained temporal index `Nt/2 - 1`.
    pub fn n_max(&self) -> i32 {
        (self.nt / 2 - 1) as i32
    }

    /// Number of retained modes, `(Nx-1)(Nt-1)`.
    pub fn modes(&self) -> usize {
        (self.nx - 1) * (self.nt - 1)
    }

    /// Real equations of the invariance system, `2(Nx-1)(Nt-1)`.
    pub fn equation_count(&self) -> usize {
        2 * self.modes()
    }

    /// Real unknowns of the invariance system: coefficients plus `phi, S, T`.
    pub fn unknown_count(&self) -> usize {
        self.equation_count() + 3
    }

    pub fn contains(&self, m: i32, n: i32) -> bool {
        m.abs() <= self.m_max() && n.abs() <= self.n_max()
    }

    pub fn index(&self, m: i32, n: i32) -> usize {
        debug_assert!(self.contains(m, n));
        let w = self.nx - 1;
        (m + self.m_max()) as usize + (n + self.n_max()) as usize * w
    }

    pub fn mode(&self, idx: usize) -> (i32, i32) {
        let w = self.nx - 1;
        let m = (idx % w) as i32 - self.m_max();
        let n = (idx / w) as i32 - self.n_max();
        (m, n)
    }

    /// All retained `(m, n)` pairs in canonical order.
    pub fn mode_iter(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.modes()).map(move |i| self.mode(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coef: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coef: vec![Complex64::new(0.0, 0.0); grid.modes()],
        }
    }

    pub fn from_coefficients(grid: Grid, coef: Vec<Complex64>) -> Result<Self> {
        if coef.len() != grid.modes() {
            return Err(Error::DimensionMismatch {
                expected: grid.modes(),
                found: coef.len(),
            });
        }
        if coef.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(Self { grid, coef })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coef
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coef
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coef
    }

    pub fn get(&self, m: i32, n: i32) -> Complex64 {
        if self.grid.contains(m, n) {
            self.coef[self.grid.index(m, n)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn set(&mut self, m: i32, n: i32, value: Complex64) {
        let i = self.grid.index(m, n);
        self.coef[i] = value;
    }

    pub fn norm(&self) -> f64 {
        self.coef.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// Samples on a `px x pt` grid, `x` index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationField {
    px: usize,
    pt: usize,
    samples: Vec<Complex64>,
}

impl CollocationField {
    pub fn from_samples(px: usize, pt: usize, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != px * pt {
            return Err(Error::DimensionMismatch {
                expected: px * pt,
                found: samples.len(),
            });
        }
        Ok(Self { px, pt, samples })
    }

    pub fn px(&self) -> usize {
        self.px
    }

    pub fn pt(&self) -> usize {
        self.pt
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn at(&self, j: usize, k: usize) -> Complex64 {
        self.samples[j + k * self.px]
    }
}

struct Plans {
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_t: Arc<dyn Fft<f64>>,
    inv_t: Arc<dyn Fft<f64>>,
}

fn plans(px: usize, pt: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry((px, pt))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                fwd_x: planner.plan_fft_forward(px),
                inv_x: planner.plan_fft_inverse(px),
                fwd_t: planner.plan_fft_forward(pt),
                inv_t: planner.plan_fft_inverse(pt),
            })
        })
        .clone()
}

/// In-place unnormalized 2-D transform; `inverse` selects the `e^{+i}` kernel.
fn fft2(buf: &mut [Complex64], px: usize, pt: usize, inverse: bool) {
    let p = plans(px, pt);
    let (fx, ft) = if inverse {
        (&p.inv_x, &p.inv_t)
    } else {
        (&p.fwd_x, &p.fwd_t)
    };
    fx.process(buf);
    let mut tmp = vec![Complex64::new(0.0, 0.0); px * pt];
    for k in 0..pt {
        for j in 0..px {
            tmp[k + j * pt] = buf[j + k * px];
        }
    }
    ft.process(&mut tmp);
    for j in 0..px {
        for k in 0..pt {
            buf[j + k * px] = tmp[k + j * pt];
        }
    }
}

fn wrap(i: i32, p: usize) -> usize {
    i.rem_euclid(p as i32) as usize
}

pub(crate) fn scatter_padded(grid: Grid, coef: &[Complex64], px: usize, pt: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); px * pt];
    for (i, c) in coef.iter().enumerate() {
        let (m, n) = grid.mode(i);
        buf[wrap(m, px) + wrap(n, pt) * px] = *c;
    }
    buf
}

/// Samples of the coefficient vector on the `px x pt` grid.
pub(crate) fn samples_of(grid: Grid, coef: &[Complex64], px: usize, pt: usize) -> Vec<Complex64> {
    let mut buf = scatter_padded(grid, coef, px, pt);
    fft2(&mut buf, px, pt, true);
    buf
}

/// Retained coefficients of a sample array; consumes the buffer as scratch.
pub(crate) fn coefficients_of(grid: Grid, mut buf: Vec<Complex64>, px: usize, pt: usize) -> Vec<Complex64> {
    fft2(&mut buf, px, pt, false);
    let scale = 1.0 / (px * pt) as f64;
    grid.mode_iter()
        .map(|(m, n)| buf[wrap(m, px) + wrap(n, pt) * px] * scale)
        .collect()
}

/// Padded collocation sizes that make a cubic product alias-free.
pub fn dealiased_size(grid: Grid) -> (usize, usize) {
    (2 * grid.nx(), 2 * grid.nt())
}

pub fn to_physical(f: &SpectralField, px: usize, pt: usize) -> Result<CollocationField> {
    let g = f.grid();
    check_sizes(g, px, pt)?;
    Ok(CollocationField {
        px,
        pt,
        samples: samples_of(g, f.coefficients(), px, pt),
    })
}

pub fn to_spectral(c: &CollocationField, grid: Grid) -> Result<SpectralField> {
    check_sizes(grid, c.px, c.pt)?;
    let coef = coefficients_of(grid, c.samples.clone(), c.px, c.pt);
    Ok(SpectralField { grid, coef })
}

fn check_sizes(grid: Grid, px: usize, pt: usize) -> Result<()> {
    if px < grid.nx() || px % 2 != 0 {
        return Err(Error::DimensionMismatch { expected: grid.nx(), found: px });
    }
    if pt < grid.nt() || pt % 2 != 0 {
        return Err(Error::DimensionMismatch { expected: grid.nt(), found: pt });
    }
    Ok(())
}

/// Retained coefficients of `A * B * conj(C)`.
pub fn cubic_conv(a: &SpectralField, b: &SpectralField, c: &SpectralField) -> Result<SpectralField> {
    let grid = a.grid();
    if b.grid() != grid || c.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let (px, pt) = dealiased_size(grid);
    let sa = samples_of(grid, a.coefficients(), px, pt);
    let mut prod = samples_of(grid, b.coefficients(), px, pt);
    let sc = samples_of(grid, c.coefficients(), px, pt);
    for ((p, x), z) in prod.iter_mut().zip(&sa).zip(&sc) {
        *p = *x * *p * z.conj();
    }
    Ok(SpectralField {
        grid,
        coef: coefficients_of(grid, prod, px, pt),
    })
}

/// Power summed over `n` for each `m` and over `m` for each `n`, both in
/// ascending index order.
pub fn power_spectra(f: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let g = f.grid();
    let mut spatial = vec![0.0; g.nx() - 1];
    let mut temporal = vec![0.0; g.nt() - 1];
    for (i, c) in f.coefficients().iter().enumerate() {
        let (m, n) = g.mode(i);
        let p = c.norm_sqr();
        spatial[(m + g.m_max()) as usize] += p;
        temporal[(n + g.n_max()) as usize] += p;
    }
    (spatial, temporal)
}

/// Largest power in the outermost retained index of either spectrum,
/// relative to the largest power overall. Zero for the zero field.
pub fn decay_ratio(f: &SpectralField) -> f64 {
    let (s, t) = power_spectra(f);
    let peak = s.iter().chain(&t).cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let edge = [s[0], s[s.len() - 1], t[0], t[t.len() - 1]]
        .into_iter()
        .fold(0.0, f64::max);
    edge / peak
}
