//! Per-block banded factorizations and the triangular sweeps built on them.

mod edge;
mod lu;
mod sweep;

pub use edge::{EdgeFactors, NearSide};
pub use lu::{LuFactors, UlFactors};
pub use sweep::{Meter, Span, Stage, SweepCounter};

use crate::band::{BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};

pub fn lu_factor(a: &BandedMatrix, pivoting: bool, boost_eps: f64) -> Result<LuFactors> {
    LuFactors::factor(a, pivoting, boost_eps)
}

pub fn ul_factor(a: &BandedMatrix, pivoting: bool, boost_eps: f64) -> Result<UlFactors> {
    UlFactors::factor(a, pivoting, boost_eps)
}

/// `U^{-1} L^{-1} P F`, or `P^T L^{-T} U^{-T} F` when `transpose` is set.
/// Counts two full solve sweeps.
pub fn solve_factored(
    factors: &LuFactors,
    f: &DenseBlock,
    transpose: bool,
    counter: &mut SweepCounter,
) -> Result<DenseBlock> {
    if f.rows() != factors.order() {
        return Err(SpikeError::ShapeMismatch {
            expected: format!("{} rows", factors.order()),
            got: format!("{} rows", f.rows()),
        });
    }
    let mut x = f.clone();
    factors.solve_in_place(&mut x, transpose);
    counter.record(Stage::Solve, Span::Full);
    counter.record(Stage::Solve, Span::Full);
    Ok(x)
}
