//! Doc-tested mirror of the book under `book/`: each module embeds one
//! chapter, so `cargo test -p guide` compiles and runs every code snippet
//! and the book cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/constraints.md")]
pub mod constraints {}

#[doc = include_str!("../../../book/src/cmaes.md")]
pub mod cmaes {}

#[doc = include_str!("../../../book/src/repair.md")]
pub mod repair {}

#[doc = include_str!("../../../book/src/ranking.md")]
pub mod ranking {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}
