//! Quasi-periodic equilibria of Frenkel-Kontorova models on quasicrystals.
//!
//! The hull function `ĥ: T^d → R` and the counterterm `λ` solve
//! `ĥ(σ+ωα) + ĥ(σ−ωα) − 2ĥ(σ) + Û(σ + αĥ(σ)) + λ = 0`. Functions on the torus
//! are truncated Fourier series ([`torus`]); the quasi-Newton iteration
//! ([`solver`]) reduces each step to two first-difference equations
//! ([`cohomology`]).

// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohomology;
pub mod continuation;
pub mod io;
pub mod lindstedt;
pub mod model;
pub mod solver;
pub mod torus;

pub use cohomology::{diophantine_estimate, solve_first_difference, Direction, FrequencyData};
pub use continuation::{bisect_breakdown, continue_family, ContinuationConfig};
pub use lindstedt::{lindstedt_eval, lindstedt_expand, LindstedtSeries};
pub use model::{build_force, error_functional, eval_force_along, ForceModel, ForceSpec, Mode};
pub use solver::{quasi_newton_step, solve, SolveOptions, SolverState};
pub use torus::{LatticeIndex, NormReport, TorusFunction};
