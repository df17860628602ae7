//! Sweep accounting.
//!
//! A "full sweep" is one triangular pass over a whole partition. Sweeps over
//! O(k) rows are truncated and not counted. On a dual-thread partition each
//! thread sweeps half the partition; two such half-sweeps count as one full
//! unit, so counts are stored in half-units internally.

use std::ops::AddAssign;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Factor,
    Solve,
}

/// Extent of a single triangular pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Span {
    /// Spans the whole partition.
    Full,
    /// Spans one half of a dual-thread partition.
    Half,
    /// Spans O(k) rows.
    Truncated,
}

impl Span {
    fn halves(self) -> usize {
        match self {
            Span::Full => 2,
            Span::Half => 1,
            Span::Truncated => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepCounter {
    factor_halves: usize,
    solve_halves: usize,
}

impl SweepCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: Stage, span: Span) {
        match stage {
            Stage::Factor => self.factor_halves += span.halves(),
            Stage::Solve => self.solve_halves += span.halves(),
        }
    }

    /// Full-sweep units spent factoring (half-sweep pairs round down).
    pub fn full_sweeps_factor(&self) -> usize {
        self.factor_halves / 2
    }

    pub fn full_sweeps_solve(&self) -> usize {
        self.solve_halves / 2
    }

    pub fn half_sweeps_factor(&self) -> usize {
        self.factor_halves
    }

    pub fn half_sweeps_solve(&self) -> usize {
        self.solve_halves
    }
}

impl AddAssign for SweepCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.factor_halves += rhs.factor_halves;
        self.solve_halves += rhs.solve_halves;
    }
}

/// A counter bound to one stage, handed to sweep call sites.
#[derive(Debug)]
pub struct Meter<'a> {
    counter: &'a mut SweepCounter,
    stage: Stage,
}

impl<'a> Meter<'a> {
    pub fn new(counter: &'a mut SweepCounter, stage: Stage) -> Self {
        Self { counter, stage }
    }

    #[inline]
    pub fn tick(&mut self, span: Span) {
        self.counter.record(self.stage, span);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_pair_into_units() {
        let mut c = SweepCounter::new();
        let mut m = Meter::new(&mut c, Stage::Factor);
        m.tick(Span::Half);
        m.tick(Span::Truncated);
        assert_eq!(c.full_sweeps_factor(), 0);
        c.record(Stage::Factor, Span::Half);
        c.record(Stage::Solve, Span::Full);
        assert_eq!((c.full_sweeps_factor(), c.full_sweeps_solve()), (1, 1));
        let mut d = c;
        d += c;
        assert_eq!(d.half_sweeps_factor(), 4);
    }
}
