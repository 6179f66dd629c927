//! Recovery of sparse signals and low-rank matrices from measurements that
//! carry a fraction of gross, arbitrarily located errors.
//!
//! The crate is organized around the three convex programs it solves:
//!
//! * `min ‖x‖₁ + λ‖f‖₁  s.t.  Ax + f = y` (noiseless compressed sensing with corruptions),
//! * the same objective under `‖Ax + f − y‖₂ ≤ ε` (noisy case),
//! * `min ‖L‖_* + λ‖S‖₁  s.t.  P_O(L) + S = P_O(L₀) + S₀` (matrix completion with corrupted entries),
//!
//! together with the random models they are analyzed under ([`models`]),
//! the proximal building blocks ([`proxops`]), the dual-certificate and
//! restricted-isometry machinery ([`certificates`]) and a Monte-Carlo
//! harness ([`experiments`]).

pub mod certificates;
pub mod cli;
pub mod cs_solver;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod mask;
pub mod mc_solver;
pub mod models;
pub mod proxops;
pub mod seed;

pub use error::{Error, Result};
pub use mask::Mask;
