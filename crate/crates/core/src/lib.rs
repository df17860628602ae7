//! Shared-memory recursive SPIKE solver for banded linear systems.
//!
//! A banded `A` is split into row partitions, one per thread (or two threads
//! for some inner partitions). Each partition is factored independently, the
//! coupling between partitions is condensed into small "spike" tips, and
//! the resulting reduced system is solved recursively, halving the number
//! of partitions per level. The same factorization serves forward
//! (`A X = F`) and transposed (`A^T X = F`) solves.
//!
//! ```
//! use spike_core::band::{generate_banded, random_block, relative_residual, RngSeed};
//! use spike_core::{FactorOptions, PartitionPlan, RhsHint, SpikeFactorization};
//!
//! let a = generate_banded(2000, 4, 4, 1.5, RngSeed(1)).unwrap();
//! let f = random_block(2000, 3, RngSeed(2));
//! let plan = PartitionPlan::balanced(a.n(), a.kl(), a.ku(), 4, 1.0, RhsHint::Known(3)).unwrap();
//! let fact = SpikeFactorization::factorize(&a, &plan, FactorOptions::default()).unwrap();
//! let x = fact.solve(&f).unwrap();
//! assert!(relative_residual(&a, &x, &f, false).unwrap() < 1e-12);
//! let xt = fact.transpose_solve(&f).unwrap();
//! assert!(relative_residual(&a, &xt, &f, true).unwrap() < 1e-12);
//! ```

pub mod band;
pub mod error;
pub mod factor;
pub mod kernels;
pub mod partition;
pub mod reduced;
pub mod solve;
pub mod spike2x2;
pub mod study;

pub use error::{Result, SpikeError};
pub use factor::{FactorOptions, SpikeFactorization};
pub use partition::{PartitionKind, PartitionPlan, RhsHint};
pub use solve::{iterative_refine, RefineReport, RefineStatus, SolveReport};
