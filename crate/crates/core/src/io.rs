//! Text persistence for solutions and continuation paths.
//!
//! Solution files are line oriented:
//!
//! ```text
//! RPO1
//! Lx 6.2831853071795862e0
//! params <R> <nu> <mu>
//! group <phi> <S> <T>
//! grid <Nx> <Nt>
//! coef <m> <n> <re> <im>     (one line per mode, canonical order)
//! ```
//!
//! Reals carry 17 significant digits, which round-trips every `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::continuation::PathPoint;
use crate::error::{Error, Result};
use crate::spectral::{power_spectra, Grid, SpectralField, LX};
use crate::system::{GroupShift, ParamName, Parameters, StatePoint};

pub const MAGIC: &str = "RPO1";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_solution(s: &StatePoint) -> String {
    let g = s.grid();
    let mut out = String::with_capacity(64 * (g.modes() + 5));
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("Lx {}\n", real(LX)));
    let p = s.params;
    out.push_str(&format!("params {} {} {}\n", real(p.r), real(p.nu), real(p.mu)));
    let h = s.shift;
    out.push_str(&format!("group {} {} {}\n", real(h.phi), real(h.s), real(h.t)));
    out.push_str(&format!("grid {} {}\n", g.nx(), g.nt()));
    for (i, z) in s.field.coefficients().iter().enumerate() {
        let (m, n) = g.mode(i);
        out.push_str(&format!("coef {m} {n} {} {}\n", real(z.re), real(z.im)));
    }
    out
}

pub fn write_solution(mut w: impl Write, s: &StatePoint) -> Result<()> {
    w.write_all(format_solution(s).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn write_solution_file(path: impl AsRef<Path>, s: &StatePoint) -> Result<()> {
    write_solution(BufWriter::new(File::create(path)?), s)
}

pub fn read_solution_file(path: impl AsRef<Path>) -> Result<StatePoint> {
    parse_solution(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { line, message: message.into() }
    }

    /// Next line split into words, with its expected keyword and arity.
    fn record(&mut self, key: &str, arity: usize) -> Result<(usize, Vec<&'a str>)> {
        let Some((i, text)) = self.inner.next() else {
            return Err(self.err(self.last + 1, format!("unexpected end of file, expected '{key}'")));
        };
        self.last = i + 1;
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.first() != Some(&key) {
            return Err(self.err(i + 1, format!("expected '{key}'")));
        }
        if words.len() != arity + 1 {
            return Err(self.err(i + 1, format!("'{key}' takes {arity} values, found {}", words.len() - 1)));
        }
        Ok((i + 1, words[1..].to_vec()))
    }
}

fn number<T: std::str::FromStr>(line: usize, word: &str) -> Result<T> {
    word.parse().map_err(|_| Error::Parse { line, message: format!("cannot parse '{word}'") })
}

fn finite(line: usize, word: &str) -> Result<f64> {
    let v: f64 = number(line, word)?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite value '{word}'") });
    }
    Ok(v)
}

pub fn parse_solution(text: &str) -> Result<StatePoint> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    match lines.inner.next() {
        Some((_, l)) if l.trim() == MAGIC => lines.last = 1,
        _ => return Err(Error::Parse { line: 1, message: format!("missing '{MAGIC}' header") }),
    }
    let (ln, w) = lines.record("Lx", 1)?;
    let lx = finite(ln, w[0])?;
    if (lx - LX).abs() > 1e-12 {
        return Err(lines.err(ln, format!("only Lx = 2 pi is supported, found {lx}")));
    }
    let (ln, w) = lines.record("params", 3)?;
    let params = Parameters::new(finite(ln, w[0])?, finite(ln, w[1])?, finite(ln, w[2])?);
    let (ln, w) = lines.record("group", 3)?;
    let shift = GroupShift::new(finite(ln, w[0])?, finite(ln, w[1])?, finite(ln, w[2])?);
    if !(shift.t > 0.0) {
        return Err(lines.err(ln, "period must be positive"));
    }
    let (ln, w) = lines.record("grid", 2)?;
    let grid = Grid::new(number(ln, w[0])?, number(ln, w[1])?).map_err(|e| lines.err(ln, e.to_string()))?;

    let mut coef = Vec::with_capacity(grid.modes());
    for i in 0..grid.modes() {
        let (ln, w) = lines.record("coef", 4)?;
        let (m, n): (i32, i32) = (number(ln, w[0])?, number(ln, w[1])?);
        if (m, n) != grid.mode(i) {
            let (em, en) = grid.mode(i);
            return Err(lines.err(ln, format!("mode ({m},{n}) out of order, expected ({em},{en})")));
        }
        coef.push(Complex64::new(finite(ln, w[2])?, finite(ln, w[3])?));
    }
    for (i, l) in lines.inner.by_ref() {
        if !l.trim().is_empty() {
            return Err(Error::Parse { line: i + 1, message: "trailing content".into() });
        }
    }
    StatePoint::new(SpectralField::from_coefficients(grid, coef)?, shift, params)
}

pub const PATH_HEADER: [&str; 14] = [
    "step",
    "param",
    "R",
    "nu",
    "mu",
    "phi",
    "S",
    "T",
    "field_norm",
    "residual_norm",
    "newton_iters",
    "gmres_max_iters",
    "symmetry",
    "solution_file",
];

/// Continuation path CSV, flushed after every row so an interrupted run
/// leaves a readable file.
pub struct PathCsvWriter {
    inner: csv::Writer<File>,
}

impl PathCsvWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(PATH_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, param: ParamName, point: &PathPoint, solution_file: &str) -> Result<()> {
        let s = &point.state;
        let r = |x: f64| real(x);
        self.inner.write_record([
            point.step.to_string(),
            param.to_string(),
            r(s.params.r),
            r(s.params.nu),
            r(s.params.mu),
            r(s.shift.phi),
            r(s.shift.s),
            r(s.shift.t),
            r(s.field.norm()),
            r(point.residual_norm),
            point.newton_iters.to_string(),
            point.gmres_max_iters.to_string(),
            point.symmetry.clone(),
            solution_file.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Spatial and temporal power spectra as CSV: `kind,index,power`.
pub fn spectrum_csv(f: &SpectralField) -> Result<String> {
    let (spatial, temporal) = power_spectra(f);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "index", "power"])?;
    let g = f.grid();
    for (i, p) in spatial.iter().enumerate() {
        w.write_record(["spatial".to_string(), (i as i32 - g.m_max()).to_string(), real(*p)])?;
    }
    for (i, p) in temporal.iter().enumerate() {
        w.write_record(["temporal".to_string(), (i as i32 - g.n_max()).to_string(), real(*p)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("ascii output"))
}
