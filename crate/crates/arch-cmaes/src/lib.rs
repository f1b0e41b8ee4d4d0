//! Black-box minimization under explicit linear inequality constraints.
//!
//! The optimizer is a standard CMA-ES engine ([`cmaes`]) combined with an
//! adaptive ranking constraint handler ([`arch`]): infeasible candidates are
//! repaired onto the feasible region by a projection in the Mahalanobis metric
//! of the current sampling distribution ([`repair`]), and selection ranks a
//! blend of objective rank and repair-distance rank whose weight adapts
//! on line. Two reference handlers (rejection resampling and an adaptive
//! box-penalty) live in [`baselines`], and [`harness`] holds the benchmark
//! problems, trial runner, and CSV log tooling used by the CLI.

pub mod arch;
pub mod baselines;
pub mod cmaes;
pub mod constraints;
pub mod harness;
pub mod numerics;
pub mod repair;
