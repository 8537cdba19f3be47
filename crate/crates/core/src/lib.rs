//! Continuous-time forward-backward splitting for block-structured objectives
//! `Psi(x, y) = f(x) + g(y) + H(x, y)` with nonsmooth blocks `f`, `g` coupled
//! by a smooth function `H`.
//!
//! The crate integrates the associated proximal dynamical system, checks the
//! stepsize admissibility condition that guarantees sufficient decrease,
//! monitors a Lyapunov functional along trajectories, verifies criticality of
//! limit points through a prox fixed-point residual, and classifies
//! convergence rates via Lojasiewicz-exponent fitting.
//!
//! Modules:
//! - [`problem`]: block objectives, gradient checks, Lipschitz estimation
//! - [`proxlib`]: closed-form proximal operators plus a grid argmin oracle
//! - [`dynamics`]: right-hand sides of the dynamical system and the stepsize
//!   condition checker
//! - [`integrate`]: ODE solvers (Euler, RK4, adaptive 4(5)) and the discrete
//!   PALM / forward-backward algorithms they reduce to at step one
//! - [`analysis`]: Lyapunov monitoring, subgradient bounds, criticality,
//!   arc length, rate fitting
//! - [`cli`]: run/sweep/check/proxtest/rates commands, CSV and manifest output

pub mod analysis;
pub mod cli;
pub mod dynamics;
pub mod integrate;
pub mod problem;
pub mod proxlib;
pub mod vecops;

mod error;

pub use error::{Error, Result};
