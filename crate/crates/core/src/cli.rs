//! Command-line front end shared by the `rpo` binary and the tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuation::{self, ContinuationConfig, PathStatus};
use crate::dynamics::{closure_residual, plane_wave, relative_monodromy, DEFAULT_STEPS};
use crate::error::Error;
use crate::gmres::GmresConfig;
use crate::io::{read_solution_file, spectrum_csv, write_solution_file, PathCsvWriter};
use crate::newton::{newton_solve, NewtonConfig};
use crate::spectral::{decay_ratio, Grid};
use crate::symmetry::{classify, same_orbit, DEFAULT_TOL};
use crate::system::{residual_norm, ParamName, Parameters};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_STALL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "rpo", version, about = "Relative periodic orbits of the cubic complex Ginzburg-Landau equation")]
struct Cli {
    /// Worker threads (defaults to RPO_THREADS, then the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct SolverOpts {
    #[arg(long, default_value_t = 1e-7)]
    newton_tol: f64,
    #[arg(long, default_value_t = 10)]
    newton_maxit: usize,
    #[arg(long, default_value_t = 1e-9)]
    gmres_tol: f64,
    #[arg(long, default_value_t = 3000)]
    gmres_maxit: usize,
    /// GMRES restart length (full GMRES when omitted).
    #[arg(long)]
    gmres_restart: Option<usize>,
}

impl SolverOpts {
    fn configs(&self) -> (NewtonConfig, GmresConfig) {
        (
            NewtonConfig { max_iter: self.newton_maxit, f_tol: self.newton_tol },
            GmresConfig { tol: self.gmres_tol, max_iter: self.gmres_maxit, restart: self.gmres_restart },
        )
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Newton-refine a solution file.
    Refine {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Arclength continuation in one parameter.
    Continue {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        param: ParamName,
        #[arg(long, allow_negative_numbers = true)]
        target: f64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        ds0: f64,
        #[arg(long, default_value_t = 0.5)]
        ds_max: f64,
        #[arg(long, default_value_t = 1e-4)]
        ds_min: f64,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        #[command(flatten)]
        solver: SolverOpts,
    },
    /// Report discrete symmetries.
    Classify {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Relative monodromy eigenvalues and unstable dimension.
    Monodromy {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
    /// Closure residual of direct time integration over one period.
    Integrate {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
    },
    /// Spatial and temporal power spectra as CSV.
    Spectrum { file: PathBuf },
    /// Decide whether two solutions lie on the same group orbit.
    OrbitCompare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Write a plane-wave solution, optionally perturbed.
    InitPlaneWave {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        k: i32,
        #[arg(long, default_value_t = 16.0)]
        r: f64,
        #[arg(long, default_value_t = -7.0, allow_negative_numbers = true)]
        nu: f64,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        mu: f64,
        #[arg(long, default_value_t = 0.05)]
        period: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        shift: f64,
        #[arg(long, default_value_t = 16)]
        nx: usize,
        #[arg(long, default_value_t = 16)]
        nt: usize,
        /// Uniform noise amplitude added to every coefficient.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } => EXIT_PARSE,
        _ => EXIT_FAILURE,
    }
}

fn configure_threads(requested: Option<usize>) {
    let n = requested.or_else(|| std::env::var("RPO_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n.filter(|&n| n > 0) {
        // A second configuration in the same process is ignored.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Run the CLI with explicit arguments and output streams; returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    configure_threads(cli.threads);
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> crate::Result<i32> {
    match cmd {
        Command::Refine { input, output, solver } => {
            let s0 = read_solution_file(&input)?;
            let (ncfg, gcfg) = solver.configs();
            let res = newton_solve(&s0, &ncfg, &gcfg)?;
            for (i, r) in res.history.iter().enumerate() {
                writeln!(err, "newton {i} residual {r:.6e}")?;
            }
            if !res.converged {
                writeln!(err, "no convergence: {}", res.failure.as_deref().unwrap_or("unknown"))?;
                return Ok(EXIT_NO_CONVERGENCE);
            }
            write_solution_file(&output, &res.state)?;
            writeln!(
                out,
                "converged iterations {} residual {:.6e} max_gmres {}",
                res.iterations(),
                res.residual_norm(),
                res.reports.iter().map(|r| r.max_gmres_iterations()).max().unwrap_or(0)
            )?;
            Ok(EXIT_OK)
        }
        Command::Continue { input, param, target, out_dir, ds0, ds_max, ds_min, max_steps, solver } => {
            let s0 = read_solution_file(&input)?;
            let (ncfg, gcfg) = solver.configs();
            let refined = newton_solve(&s0, &ncfg, &gcfg)?;
            if !refined.converged {
                writeln!(err, "input does not converge at its parameters (residual {:.6e})", refined.residual_norm())?;
                return Ok(EXIT_NO_CONVERGENCE);
            }
            std::fs::create_dir_all(&out_dir)?;
            let ds0 = ds0.min(ds_max);
            let cfg = ContinuationConfig { ds0, ds_max, ds_min: ds_min.min(ds0), max_steps, ..ContinuationConfig::new(param, target) };
            let mut csv = PathCsvWriter::create(out_dir.join("path.csv"))?;
            let record = continuation::run(&refined.state, &cfg, &ncfg, &gcfg, |p| {
                let name = format!("step_{:05}.rpo", p.step);
                write_solution_file(out_dir.join(&name), &p.state)?;
                csv.append(param, p, &name)
            })?;
            let last = record.last_state();
            writeln!(
                out,
                "steps {} rejected {} final {param} {:.16e}",
                record.points.len(),
                record.rejected,
                last.params.get(param)
            )?;
            match record.status {
                PathStatus::ReachedTarget => Ok(EXIT_OK),
                status => {
                    writeln!(
                        err,
                        "stopped before target ({status:?}): {}",
                        record.diagnostics.as_deref().unwrap_or("step budget exhausted")
                    )?;
                    Ok(EXIT_STALL)
                }
            }
        }
        Command::Classify { file, tol } => {
            let s = read_solution_file(&file)?;
            let r = classify(&s, tol)?;
            writeln!(out, "{}", if r.is_empty() { "none".to_string() } else { r.flags() })?;
            Ok(EXIT_OK)
        }
        Command::Monodromy { file, steps } => {
            let s = read_solution_file(&file)?;
            let m = relative_monodromy(&s, steps)?;
            writeln!(out, "unstable_dimension {}", m.unstable_dimension)?;
            writeln!(out, "unit_count {}", m.unit_count)?;
            for z in &m.eigenvalues {
                writeln!(out, "eig {:.12e} {:.12e} {:.12e}", z.re, z.im, z.norm())?;
            }
            Ok(EXIT_OK)
        }
        Command::Integrate { file, steps } => {
            let s = read_solution_file(&file)?;
            writeln!(out, "closure_residual {:.6e}", closure_residual(&s, steps)?)?;
            Ok(EXIT_OK)
        }
        Command::Spectrum { file } => {
            let s = read_solution_file(&file)?;
            write!(out, "{}", spectrum_csv(&s.field)?)?;
            writeln!(err, "decay_ratio {:.6e}", decay_ratio(&s.field))?;
            Ok(EXIT_OK)
        }
        Command::OrbitCompare { first, second, tol } => {
            let (a, b) = (read_solution_file(&first)?, read_solution_file(&second)?);
            let rel = same_orbit(&a, &b, tol)?;
            match rel.element {
                Some(x) => writeln!(out, "{} alpha {:.12e} s {:.12e} tau {:.12e} mismatch {:.3e}", rel.verdict, x[0], x[1], x[2], rel.mismatch)?,
                None => writeln!(out, "{} mismatch {:.3e}", rel.verdict, rel.mismatch)?,
            }
            Ok(EXIT_OK)
        }
        Command::InitPlaneWave { output, k, r, nu, mu, period, shift, nx, nt, noise, seed } => {
            let mut s = plane_wave(Grid::new(nx, nt)?, k, Parameters::new(r, nu, mu), period, shift)?;
            if noise > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for z in s.field.coefficients_mut() {
                    *z += Complex64::new(rng.gen_range(-noise..noise), rng.gen_range(-noise..noise));
                }
            }
            write_solution_file(&output, &s)?;
            writeln!(out, "residual {:.6e}", residual_norm(&s)?)?;
            Ok(EXIT_OK)
        }
    }
}
