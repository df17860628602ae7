//! The two-block SPIKE kernel.
//!
//! A block is split at `ceil(m/2)`: the top half is LU-factored, the bottom
//! half UL-factored, and the two are coupled through a single 2k x 2k
//! system. It runs as a self-contained two-thread solver and is the engine
//! behind inner partitions that own two threads. Every solve does one full
//! pass per half per thread, a barrier, the small coupling solve, and a
//! second pass per half; no pass ever covers more than half the block.

use std::thread;

use crate::band::{BandedMatrix, DenseBlock, DenseLu};
use crate::error::{Result, SpikeError};
use crate::kernels::{EdgeFactors, Meter, NearSide, Span, Stage, SweepCounter};

/// Boost used when a coupling block has an all-zero pivot column.
pub(crate) const COUPLING_BOOST: f64 = 1.490_116_119_384_765_6e-8;

/// Runs `a` on the current thread and `b` on a scoped helper thread.
pub(crate) fn join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B + Send) -> (A, B)
where
    B: Send,
{
    thread::scope(|s| {
        let hb = s.spawn(b);
        let ra = a();
        (ra, hb.join().expect("worker thread panicked"))
    })
}

/// Stacks two blocks with equal column counts.
pub(crate) fn vstack(top: &DenseBlock, bottom: &DenseBlock) -> DenseBlock {
    let mut out = DenseBlock::zeros(top.rows() + bottom.rows(), top.cols());
    out.set_rows(0, top);
    out.set_rows(top.rows(), bottom);
    out
}

/// Spike tips of an enclosing partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTips {
    pub vt: DenseBlock,
    pub vb: DenseBlock,
    pub wt: DenseBlock,
    pub wb: DenseBlock,
}

#[derive(Clone, Debug)]
pub struct Spike2x2Factors {
    k: usize,
    split: usize,
    rows: usize,
    top: EdgeFactors,
    bottom: EdgeFactors,
    b_inner: DenseBlock,
    c_inner: DenseBlock,
    vtip: DenseBlock,
    wtip: DenseBlock,
    reduced: DenseLu,
}

impl Spike2x2Factors {
    /// Factors both halves concurrently and forms the coupling block.
    ///
    /// `k` is the padded half-bandwidth and `scale` the magnitude used for
    /// zero-pivot detection. No full sweeps are spent here.
    pub fn factor(
        a: &BandedMatrix,
        k: usize,
        pivoting: bool,
        boost_eps: f64,
        scale: f64,
        counter: &mut SweepCounter,
    ) -> Result<Self> {
        let m = a.n();
        let split = m.div_ceil(2);
        if k == 0 || m - split < k {
            return Err(SpikeError::InvalidDimensions(format!(
                "block of {m} rows is too small for a two-way split with k={k}"
            )));
        }
        let b_inner = a.dense_window(split - k, split, split, split + k);
        let c_inner = a.dense_window(split, split + k, split - k, split);
        let top_a = a.diagonal_block(0, split);
        let bottom_a = a.diagonal_block(split, m);
        let (top, bottom) = join(
            || -> Result<_> {
                let mut c = SweepCounter::new();
                let e = EdgeFactors::factor(top_a, NearSide::Bottom, k, pivoting, boost_eps, scale, Span::Half)?;
                let tip = e.coupling_tip(&b_inner, &mut Meter::new(&mut c, Stage::Factor));
                Ok((e, tip, c))
            },
            || -> Result<_> {
                let mut c = SweepCounter::new();
                let e = EdgeFactors::factor(bottom_a, NearSide::Top, k, pivoting, boost_eps, scale, Span::Half)?;
                let tip = e.coupling_tip(&c_inner, &mut Meter::new(&mut c, Stage::Factor));
                Ok((e, tip, c))
            },
        );
        let (top, vtip, ca) = top?;
        let (bottom, wtip, cb) = bottom?;
        *counter += ca;
        *counter += cb;
        let reduced = DenseLu::factor(&coupling_matrix(&vtip, &wtip), COUPLING_BOOST)?;
        Ok(Self {
            k,
            split,
            rows: m,
            top,
            bottom,
            b_inner,
            c_inner,
            vtip,
            wtip,
            reduced,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn split(&self) -> usize {
        self.split
    }

    /// Bottom `k` rows of the top half's internal spike.
    pub fn vtip(&self) -> &DenseBlock {
        &self.vtip
    }

    /// Top `k` rows of the bottom half's internal spike.
    pub fn wtip(&self) -> &DenseBlock {
        &self.wtip
    }

    pub fn boost_count(&self) -> usize {
        self.top.boost_count() + self.bottom.boost_count() + self.reduced.boosts()
    }

    fn halves(&self, f: &DenseBlock) -> (DenseBlock, DenseBlock) {
        (f.sub_rows(0, self.split), f.sub_rows(self.split, self.rows))
    }

    /// `A^{-1} F` (or `A^{-T} F`); two full-sweep units.
    pub fn solve(&self, f: &DenseBlock, transpose: bool, counter: &mut SweepCounter) -> DenseBlock {
        self.solve_staged(f, transpose, counter, Stage::Solve)
    }

    fn solve_staged(
        &self,
        f: &DenseBlock,
        transpose: bool,
        counter: &mut SweepCounter,
        stage: Stage,
    ) -> DenseBlock {
        debug_assert_eq!(f.rows(), self.rows);
        let k = self.k;
        let (f1, f2) = self.halves(f);
        let mut ca = SweepCounter::new();
        let mut cb = SweepCounter::new();
        let x = if !transpose {
            let ((z1, y1b), (z2, y2t)) = join(
                || self.top.near_solve(&f1, &mut Meter::new(&mut ca, stage)),
                || self.bottom.near_solve(&f2, &mut Meter::new(&mut cb, stage)),
            );
            let mut r = vstack(&y1b, &y2t);
            self.reduced.solve_in_place(&mut r);
            let (x1b, x2t) = (r.sub_rows(0, k), r.sub_rows(k, 2 * k));
            let (x1, x2) = join(
                || {
                    let corr = self.b_inner.matmul(&x2t);
                    self.top.retrieve(z1, &corr, &mut Meter::new(&mut ca, stage))
                },
                || {
                    let corr = self.c_inner.matmul(&x1b);
                    self.bottom.retrieve(z2, &corr, &mut Meter::new(&mut cb, stage))
                },
            );
            vstack(&x1, &x2)
        } else {
            let ((u1, h1), (u2, h2)) = join(
                || self.top.near_solve_transpose(&f1, &mut Meter::new(&mut ca, stage)),
                || self.bottom.near_solve_transpose(&f2, &mut Meter::new(&mut cb, stage)),
            );
            let mut g1b = f1.sub_rows(self.split - k, self.split);
            g1b.gemm_tn_acc(-1.0, &self.c_inner, &h2);
            let mut g2t = f2.sub_rows(0, k);
            g2t.gemm_tn_acc(-1.0, &self.b_inner, &h1);
            let mut r = vstack(&g1b, &g2t);
            self.reduced.solve_transpose_in_place(&mut r);
            let (y1b, y2t) = (r.sub_rows(0, k), r.sub_rows(k, 2 * k));
            let (x1, x2) = join(
                || self.top.finish_transpose(u1, &y1b, &mut Meter::new(&mut ca, stage)),
                || self.bottom.finish_transpose(u2, &y2t, &mut Meter::new(&mut cb, stage)),
            );
            vstack(&x1, &x2)
        };
        *counter += ca;
        *counter += cb;
        x
    }

    /// Top and bottom `k` rows of `A^{-1}[0; bhat]` and `A^{-1}[chat; 0]`
    /// for the enclosing partition, in three full-sweep units: each thread
    /// does one `L` pass and two `U` passes over its half.
    pub fn spikes(
        &self,
        bhat: &DenseBlock,
        chat: &DenseBlock,
        counter: &mut SweepCounter,
    ) -> SpikeTips {
        let k = self.k;
        let m1 = self.split;
        let m2 = self.rows - self.split;
        let mut ca = SweepCounter::new();
        let mut cb = SweepCounter::new();
        let mut fw = DenseBlock::zeros(m1, k);
        fw.set_rows(0, chat);
        let mut fv = DenseBlock::zeros(m2, k);
        fv.set_rows(m2 - k, bhat);
        let ((zw1, yw1b), (zv2, yv2t)) = join(
            || self.top.near_solve(&fw, &mut Meter::new(&mut ca, Stage::Factor)),
            || self.bottom.near_solve(&fv, &mut Meter::new(&mut cb, Stage::Factor)),
        );
        // One batched coupling solve: W columns first, then V columns.
        let mut r = DenseBlock::zeros(2 * k, 2 * k);
        for j in 0..k {
            for i in 0..k {
                r.set(i, j, yw1b.get(i, j));
                r.set(k + i, k + j, yv2t.get(i, j));
            }
        }
        self.reduced.solve_in_place(&mut r);
        let block = |r0: usize, c0: usize| DenseBlock::from_fn(k, k, |i, j| r.get(r0 + i, c0 + j));
        let (xw1b, xw2t) = (block(0, 0), block(k, 0));
        let (xv1b, xv2t) = (block(0, k), block(k, k));
        let ((xw1, xv1), (xv2, xw2)) = join(
            || {
                let mut meter = Meter::new(&mut ca, Stage::Factor);
                let w = self.top.retrieve(zw1, &self.b_inner.matmul(&xw2t), &mut meter);
                let v = self.top.retrieve(DenseBlock::zeros(m1, k), &self.b_inner.matmul(&xv2t), &mut meter);
                (w, v)
            },
            || {
                let mut meter = Meter::new(&mut cb, Stage::Factor);
                let v = self.bottom.retrieve(zv2, &self.c_inner.matmul(&xv1b), &mut meter);
                let w = self.bottom.retrieve(DenseBlock::zeros(m2, k), &self.c_inner.matmul(&xw1b), &mut meter);
                (v, w)
            },
        );
        *counter += ca;
        *counter += cb;
        SpikeTips {
            vt: xv1.sub_rows(0, k),
            vb: xv2.sub_rows(m2 - k, m2),
            wt: xw1.sub_rows(0, k),
            wb: xw2.sub_rows(m2 - k, m2),
        }
    }
}

/// `[[I, vb], [wt, I]]`.
pub(crate) fn coupling_matrix(vb: &DenseBlock, wt: &DenseBlock) -> DenseBlock {
    let k = vb.rows();
    let mut m = DenseBlock::identity(2 * k);
    for j in 0..k {
        for i in 0..k {
            m.set(i, k + j, vb.get(i, j));
            m.set(k + i, j, wt.get(i, j));
        }
    }
    m
}

pub fn factor_2x2(
    a: &BandedMatrix,
    pivoting: bool,
    boost_eps: f64,
) -> Result<Spike2x2Factors> {
    let k = a.kl().max(a.ku()).max(1);
    Spike2x2Factors::factor(a, k, pivoting, boost_eps, a.max_abs(), &mut SweepCounter::new())
}

pub fn solve_2x2(factors: &Spike2x2Factors, f: &DenseBlock, transpose: bool) -> Result<DenseBlock> {
    if f.rows() != factors.rows() {
        return Err(SpikeError::ShapeMismatch {
            expected: format!("{} rows", factors.rows()),
            got: format!("{} rows", f.rows()),
        });
    }
    Ok(factors.solve(f, transpose, &mut SweepCounter::new()))
}
