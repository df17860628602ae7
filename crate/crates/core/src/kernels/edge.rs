//! Factors of a block that couples to a neighbour on one side only.
//!
//! This covers the first partition (LU, coupled below), the last partition
//! (UL, coupled above) and the two halves of a dual-thread partition. A
//! block coupled above is stored as the LU factorization of its reversal,
//! so in "local" coordinates the coupled ("near") side is always the bottom
//! `k` rows, and every operation reduces to a sweep that is either full or
//! truncated to the last `k` rows.

use super::lu::LuFactors;
use super::sweep::{Meter, Span};
use crate::band::{BandedMatrix, DenseBlock};
use crate::error::Result;

/// Which side of the block touches its neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NearSide {
    Bottom,
    Top,
}

#[derive(Clone, Debug)]
pub struct EdgeFactors {
    lu: LuFactors,
    near: NearSide,
    k: usize,
    span: Span,
}

impl EdgeFactors {
    /// Factors `a` (LU when coupled below, UL when coupled above). `span`
    /// is how a full pass over this block is counted.
    pub fn factor(
        mut a: BandedMatrix,
        near: NearSide,
        k: usize,
        pivoting: bool,
        boost_eps: f64,
        scale: f64,
        span: Span,
    ) -> Result<Self> {
        debug_assert!(a.n() >= k);
        if near == NearSide::Top {
            a.reverse_in_place();
        }
        let lu = LuFactors::factor_scaled(&a, pivoting, boost_eps, scale)?;
        Ok(Self { lu, near, k, span })
    }

    pub fn rows(&self) -> usize {
        self.lu.order()
    }

    pub fn near(&self) -> NearSide {
        self.near
    }

    pub fn lu(&self) -> &LuFactors {
        &self.lu
    }

    pub fn boost_count(&self) -> usize {
        self.lu.boost_count()
    }

    fn flip(&self, b: &mut DenseBlock) {
        if self.near == NearSide::Top {
            b.reverse_rows();
        }
    }

    fn local(&self, f: &DenseBlock) -> DenseBlock {
        let mut b = f.clone();
        self.flip(&mut b);
        b
    }

    /// Local vector that is zero except for `tip` on the near `k` rows.
    fn near_only(&self, tip: &DenseBlock) -> DenseBlock {
        let m = self.rows();
        let mut b = DenseBlock::zeros(m, tip.cols());
        let mut t = tip.clone();
        self.flip(&mut t);
        b.set_rows(m - self.k, &t);
        b
    }

    fn near_tip(&self, local: &DenseBlock) -> DenseBlock {
        let m = self.rows();
        let mut t = local.sub_rows(m - self.k, m);
        self.flip(&mut t);
        t
    }

    /// Near `k` rows of `A^{-1} [coupling on the near side]`, using only
    /// truncated sweeps.
    pub fn coupling_tip(&self, coupling: &DenseBlock, meter: &mut Meter) -> DenseBlock {
        let m = self.rows();
        let mut b = self.near_only(coupling);
        self.lu.lower(&mut b, m - self.k);
        self.lu.upper(&mut b, m - self.k);
        meter.tick(Span::Truncated);
        meter.tick(Span::Truncated);
        self.near_tip(&b)
    }

    /// First half of `A^{-1} f`: returns the `L`-swept local vector for a
    /// later [`retrieve`](Self::retrieve) and the near tip of `A^{-1} f`.
    pub fn near_solve(&self, f: &DenseBlock, meter: &mut Meter) -> (DenseBlock, DenseBlock) {
        let m = self.rows();
        let mut z = self.local(f);
        self.lu.lower(&mut z, 0);
        meter.tick(self.span);
        let mut y = z.clone();
        self.lu.upper(&mut y, m - self.k);
        meter.tick(Span::Truncated);
        let tip = self.near_tip(&y);
        (z, tip)
    }

    /// `A^{-1} (f - [correction on the near side])` given `z` from
    /// [`near_solve`](Self::near_solve) of `f` (or zeros when `f = 0`).
    pub fn retrieve(
        &self,
        mut z: DenseBlock,
        correction: &DenseBlock,
        meter: &mut Meter,
    ) -> DenseBlock {
        let m = self.rows();
        let mut w = self.near_only(correction);
        self.lu.lower(&mut w, m - self.k);
        meter.tick(Span::Truncated);
        z.sub_rows_assign(0, &w);
        self.lu.upper(&mut z, 0);
        meter.tick(self.span);
        self.flip(&mut z);
        z
    }

    /// First half of a transposed solve. The near rows of `f` are treated
    /// as zero; returns the partially swept local vector for
    /// [`finish_transpose`](Self::finish_transpose) and the near tip of
    /// `A^{-T} [f with near rows zeroed]`.
    pub fn near_solve_transpose(
        &self,
        f: &DenseBlock,
        meter: &mut Meter,
    ) -> (DenseBlock, DenseBlock) {
        let m = self.rows();
        let mut u = self.local(f);
        u.zero_rows(m - self.k, m);
        self.lu.upper_t(&mut u, 0);
        meter.tick(self.span);
        let mut h = u.clone();
        self.lu.lower_t(&mut h, m - self.k);
        meter.tick(Span::Truncated);
        (u, self.near_tip(&h))
    }

    /// `A^{-T} f` where `f` equals the input of the matching
    /// [`near_solve_transpose`](Self::near_solve_transpose) call except on
    /// the near rows, which take the values `near`.
    pub fn finish_transpose(
        &self,
        mut u: DenseBlock,
        near: &DenseBlock,
        meter: &mut Meter,
    ) -> DenseBlock {
        let m = self.rows();
        let mut t = near.clone();
        self.flip(&mut t);
        u.set_rows(m - self.k, &t);
        self.lu.upper_t(&mut u, m - self.k);
        meter.tick(Span::Truncated);
        self.lu.lower_t(&mut u, 0);
        meter.tick(self.span);
        self.flip(&mut u);
        u
    }

    /// Plain `A^{-1} f` or `A^{-T} f` (two passes of this block's span).
    pub fn solve(&self, f: &DenseBlock, transpose: bool, meter: &mut Meter) -> DenseBlock {
        let mut b = self.local(f);
        self.lu.solve_in_place(&mut b, transpose);
        meter.tick(self.span);
        meter.tick(self.span);
        self.flip(&mut b);
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::oracle::{oracle_solve, DEFAULT_BOOST_EPS};
    use crate::band::{generate_banded, random_block, RngSeed};
    use crate::kernels::sweep::{Stage, SweepCounter};

    fn close(a: &DenseBlock, b: &DenseBlock, tol: f64) {
        let mut d = a.clone();
        d.sub_rows_assign(0, b);
        let r = d.frobenius_norm() / b.frobenius_norm().max(1e-300);
        assert!(r <= tol, "relative difference {r}");
    }

    fn place(m: usize, k: usize, near: NearSide, tip: &DenseBlock) -> DenseBlock {
        let mut f = DenseBlock::zeros(m, tip.cols());
        match near {
            NearSide::Bottom => f.set_rows(m - k, tip),
            NearSide::Top => f.set_rows(0, tip),
        }
        f
    }

    fn tip_of(x: &DenseBlock, k: usize, near: NearSide) -> DenseBlock {
        match near {
            NearSide::Bottom => x.sub_rows(x.rows() - k, x.rows()),
            NearSide::Top => x.sub_rows(0, k),
        }
    }

    #[test]
    fn edge_operations_match_oracle() {
        let (m, k) = (30, 3);
        for near in [NearSide::Bottom, NearSide::Top] {
            for piv in [false, true] {
                let a = generate_banded(m, k, 2, 0.9, RngSeed(1)).unwrap();
                let e = EdgeFactors::factor(a.clone(), near, k, piv, DEFAULT_BOOST_EPS, a.max_abs(), Span::Full)
                    .unwrap();
                let mut c = SweepCounter::new();
                let mut meter = Meter::new(&mut c, Stage::Solve);
                let coupling = random_block(k, k, RngSeed(2));
                let tip = e.coupling_tip(&coupling, &mut meter);
                let want = oracle_solve(&a, &place(m, k, near, &coupling), false, true).unwrap();
                close(&tip, &tip_of(&want, k, near), 1e-12);

                let f = random_block(m, 2, RngSeed(3));
                let corr = random_block(k, 2, RngSeed(4));
                let (z, ytip) = e.near_solve(&f, &mut meter);
                let y = oracle_solve(&a, &f, false, true).unwrap();
                close(&ytip, &tip_of(&y, k, near), 1e-12);
                let x = e.retrieve(z, &corr, &mut meter);
                let mut g = f.clone();
                g.sub_rows_assign(0, &place(m, k, near, &corr));
                close(&x, &oracle_solve(&a, &g, false, true).unwrap(), 1e-12);

                let (u, h) = e.near_solve_transpose(&f, &mut meter);
                let mut fz = f.clone();
                match near {
                    NearSide::Bottom => fz.zero_rows(m - k, m),
                    NearSide::Top => fz.zero_rows(0, k),
                }
                let ht = oracle_solve(&a, &fz, true, true).unwrap();
                close(&h, &tip_of(&ht, k, near), 1e-12);
                let nearv = random_block(k, 2, RngSeed(5));
                let x = e.finish_transpose(u, &nearv, &mut meter);
                let mut g = fz.clone();
                match near {
                    NearSide::Bottom => g.set_rows(m - k, &nearv),
                    NearSide::Top => g.set_rows(0, &nearv),
                }
                close(&x, &oracle_solve(&a, &g, true, true).unwrap(), 1e-12);
                drop(meter);
                // near_solve + retrieve + near_solve_transpose + finish: 4 full passes.
                assert_eq!(c.full_sweeps_solve(), 4);
            }
        }
    }
}
