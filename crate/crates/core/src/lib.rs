//! Relative periodic orbits of the cubic complex Ginzburg-Landau equation
//!
//! ```text
//! A_t = R A + (1 + i nu) A_xx - (1 + i mu) A |A|^2,   x in [0, 2 pi)
//! ```
//!
//! Solutions with `A(x, t) = e^{i phi} A(x + S, t + T)` are found as zeros of
//! a space-time Galerkin system, refined by minimum-norm Newton-GMRES,
//! followed in parameters by arclength continuation, classified by their
//! discrete symmetries and checked against direct time integration.

pub mod cli;
pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod gmres;
pub mod io;
pub mod newton;
pub mod spectral;
pub mod symmetry;
pub mod system;

pub use error::{Error, Result};
