//! Factorization `A = D S`: per-partition factors, spike tips and the
//! recursive reduced system.
//!
//! Partition `i` has diagonal block `A_i`, a k x k block `B_i` coupling its
//! last rows to the first columns of partition `i + 1`, and a k x k block
//! `C_i` coupling its first rows to the last columns of partition `i - 1`
//! (both zero-padded when `kl != ku`). The spikes are `V_i = A_i^{-1}[0; B_i]`
//! and `W_i = A_i^{-1}[C_i; 0]`; only their top and bottom `k` rows are
//! kept. The first partition never forms `V`'s top nor the last `W`'s bottom.
//!
//! Sweep budget (full passes over a partition): first and last partitions
//! need none, since only truncated passes touch the near tip; inner
//! partitions spend one on `V` (its `L` pass starts `k` rows from the
//! bottom) and two on `W`, whether they run on one thread or two.

use std::thread;

use crate::band::oracle::DEFAULT_BOOST_EPS;
use crate::band::{BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};
use crate::kernels::{EdgeFactors, LuFactors, Meter, NearSide, Span, Stage, SweepCounter};
use crate::partition::{PartitionKind, PartitionPlan};
use crate::reduced::ReducedLevels;
use crate::spike2x2::{vstack, Spike2x2Factors, SpikeTips};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorOptions {
    pub pivoting: bool,
    /// Relative magnitude of a boosted pivot (non-pivoting mode).
    pub boost_eps: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            pivoting: false,
            boost_eps: DEFAULT_BOOST_EPS,
        }
    }
}

impl FactorOptions {
    pub fn pivoting() -> Self {
        Self {
            pivoting: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum PartFactors {
    /// Single partition: plain LU.
    Serial(LuFactors),
    First(EdgeFactors),
    Last(EdgeFactors),
    Inner(LuFactors),
    Dual(Spike2x2Factors),
}

impl PartFactors {
    fn boost_count(&self) -> usize {
        match self {
            PartFactors::Serial(lu) | PartFactors::Inner(lu) => lu.boost_count(),
            PartFactors::First(e) | PartFactors::Last(e) => e.boost_count(),
            PartFactors::Dual(d) => d.boost_count(),
        }
    }
}

/// Stored tips of one partition's spikes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartitionTips {
    pub vt: Option<DenseBlock>,
    pub vb: Option<DenseBlock>,
    pub wt: Option<DenseBlock>,
    pub wb: Option<DenseBlock>,
}

/// Runs `f(i)` for `i in 0..n`, each on its own scoped thread (index 0 on
/// the calling thread).
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if n <= 1 {
        return (0..n).map(&f).collect();
    }
    thread::scope(|s| {
        let handles: Vec<_> = (1..n).map(|i| {
            let f = &f;
            s.spawn(move || f(i))
        }).collect();
        let mut out = Vec::with_capacity(n);
        out.push(f(0));
        out.extend(handles.into_iter().map(|h| h.join().expect("partition worker panicked")));
        out
    })
}

/// Immutable factorization reused by any number of forward and transposed
/// solves.
#[derive(Clone, Debug)]
pub struct SpikeFactorization {
    pub(crate) plan: PartitionPlan,
    pub(crate) n: usize,
    pub(crate) k: usize,
    pub(crate) options: FactorOptions,
    pub(crate) parts: Vec<PartFactors>,
    /// `bhat[i]` couples partition `i` to `i + 1`.
    pub(crate) bhat: Vec<DenseBlock>,
    /// `chat[i]` couples partition `i` to `i - 1` (`chat[0]` is zero).
    pub(crate) chat: Vec<DenseBlock>,
    pub(crate) tips: Vec<PartitionTips>,
    pub(crate) levels: Option<ReducedLevels>,
    pub(crate) counters: Vec<SweepCounter>,
}

impl SpikeFactorization {
    pub fn factorize(a: &BandedMatrix, plan: &PartitionPlan, options: FactorOptions) -> Result<Self> {
        plan.check_matrix(a.n(), a.kl(), a.ku())?;
        if !(options.boost_eps > 0.0) {
            return Err(SpikeError::InvalidDimensions(format!(
                "boost magnitude must be positive, got {}",
                options.boost_eps
            )));
        }
        let n = a.n();
        let k = plan.k();
        let p = plan.p();
        let scale = a.max_abs();
        if p == 1 {
            let lu = LuFactors::factor_scaled(a, options.pivoting, options.boost_eps, scale)?;
            return Ok(Self {
                plan: plan.clone(),
                n,
                k,
                options,
                parts: vec![PartFactors::Serial(lu)],
                bhat: Vec::new(),
                chat: vec![DenseBlock::zeros(k, k)],
                tips: vec![PartitionTips::default()],
                levels: None,
                counters: vec![SweepCounter::new()],
            });
        }
        let bhat: Vec<DenseBlock> = (0..p - 1)
            .map(|i| {
                let e = plan.bounds()[i + 1];
                a.dense_window(e - k, e, e, e + k)
            })
            .collect();
        let chat: Vec<DenseBlock> = (0..p)
            .map(|i| {
                if i == 0 {
                    return DenseBlock::zeros(k, k);
                }
                let s = plan.bounds()[i];
                a.dense_window(s, s + k, s - k, s)
            })
            .collect();
        let results = par_map(p, |i| -> Result<(PartFactors, PartitionTips, SweepCounter)> {
            let r = plan.range(i);
            let block = a.diagonal_block(r.start, r.end);
            let m = block.n();
            let mut counter = SweepCounter::new();
            let mut meter = Meter::new(&mut counter, Stage::Factor);
            let (pivoting, eps) = (options.pivoting, options.boost_eps);
            let (part, tips) = if i == 0 {
                let e = EdgeFactors::factor(block, NearSide::Bottom, k, pivoting, eps, scale, Span::Full)?;
                let vb = e.coupling_tip(&bhat[0], &mut meter);
                (PartFactors::First(e), PartitionTips { vb: Some(vb), ..Default::default() })
            } else if i == p - 1 {
                let e = EdgeFactors::factor(block, NearSide::Top, k, pivoting, eps, scale, Span::Full)?;
                let wt = e.coupling_tip(&chat[i], &mut meter);
                (PartFactors::Last(e), PartitionTips { wt: Some(wt), ..Default::default() })
            } else if plan.kinds()[i] == PartitionKind::InnerDual {
                let d = Spike2x2Factors::factor(&block, k, pivoting, eps, scale, &mut counter)?;
                let SpikeTips { vt, vb, wt, wb } = d.spikes(&bhat[i], &chat[i], &mut counter);
                let tips = PartitionTips {
                    vt: Some(vt),
                    vb: Some(vb),
                    wt: Some(wt),
                    wb: Some(wb),
                };
                return Ok((PartFactors::Dual(d), tips, counter));
            } else {
                let lu = LuFactors::factor_scaled(&block, pivoting, eps, scale)?;
                let mut v = DenseBlock::zeros(m, k);
                v.set_rows(m - k, &bhat[i]);
                lu.lower(&mut v, m - k);
                meter.tick(Span::Truncated);
                lu.upper(&mut v, 0);
                meter.tick(Span::Full);
                let mut w = DenseBlock::zeros(m, k);
                w.set_rows(0, &chat[i]);
                lu.lower(&mut w, 0);
                meter.tick(Span::Full);
                lu.upper(&mut w, 0);
                meter.tick(Span::Full);
                let tips = PartitionTips {
                    vt: Some(v.sub_rows(0, k)),
                    vb: Some(v.sub_rows(m - k, m)),
                    wt: Some(w.sub_rows(0, k)),
                    wb: Some(w.sub_rows(m - k, m)),
                };
                (PartFactors::Inner(lu), tips)
            };
            Ok((part, tips, counter))
        });
        let mut parts = Vec::with_capacity(p);
        let mut tips = Vec::with_capacity(p);
        let mut counters = Vec::with_capacity(p);
        for r in results {
            let (f, t, c) = r?;
            parts.push(f);
            tips.push(t);
            counters.push(c);
        }
        let zero = DenseBlock::zeros(k, k);
        let stack = |a: &Option<DenseBlock>, b: &Option<DenseBlock>| {
            vstack(a.as_ref().unwrap_or(&zero), b.as_ref().unwrap_or(&zero))
        };
        let v: Vec<DenseBlock> = tips.iter().map(|t| stack(&t.vt, &t.vb)).collect();
        let w: Vec<DenseBlock> = tips.iter().map(|t| stack(&t.wt, &t.wb)).collect();
        let levels = ReducedLevels::factorize(v, w, k, plan.threads_used())?;
        Ok(Self {
            plan: plan.clone(),
            n,
            k,
            options,
            parts,
            bhat,
            chat,
            tips,
            levels: Some(levels),
            counters,
        })
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Padded half-bandwidth used for coupling blocks and tips.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn options(&self) -> FactorOptions {
        self.options
    }

    /// Per-partition sweep counters recorded while factoring.
    pub fn factor_counters(&self) -> &[SweepCounter] {
        &self.counters
    }

    pub fn tips(&self) -> &[PartitionTips] {
        &self.tips
    }

    pub fn reduced_levels(&self) -> Option<&ReducedLevels> {
        self.levels.as_ref()
    }

    /// Coupling block between partitions `i` and `i + 1` (upper corner).
    pub fn coupling_below(&self, i: usize) -> &DenseBlock {
        &self.bhat[i]
    }

    /// Coupling block between partitions `i` and `i - 1` (lower corner).
    pub fn coupling_above(&self, i: usize) -> &DenseBlock {
        &self.chat[i]
    }

    /// Boosted pivots across all partition factors and coupling blocks.
    pub fn boost_count(&self) -> usize {
        self.parts.iter().map(PartFactors::boost_count).sum::<usize>()
            + self.levels.as_ref().map_or(0, ReducedLevels::boost_count)
    }
}

pub fn factorize(a: &BandedMatrix, plan: &PartitionPlan, options: FactorOptions) -> Result<SpikeFactorization> {
    SpikeFactorization::factorize(a, plan, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::oracle::oracle_solve;
    use crate::band::{generate_banded, RngSeed};
    use crate::partition::{Ratios, RhsHint};

    fn rel(a: &DenseBlock, b: &DenseBlock) -> f64 {
        let mut d = a.clone();
        d.sub_rows_assign(0, b);
        d.frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_gives_zero_tips() {
        let mut a = BandedMatrix::zeros(64, 2, 2).unwrap();
        for i in 0..64 {
            a.set(i, i, 1.0).unwrap();
        }
        let plan = PartitionPlan::new(64, 2, 2, 6, Ratios { r12: 1.0, r13: 2.0 }).unwrap();
        let f = SpikeFactorization::factorize(&a, &plan, FactorOptions::default()).unwrap();
        for t in f.tips() {
            for tip in [&t.vt, &t.vb, &t.wt, &t.wb].into_iter().flatten() {
                assert!(tip.is_zero());
            }
        }
    }

    #[test]
    fn tips_match_oracle_and_budget() {
        let (n, k) = (96, 2);
        let a = generate_banded(n, k, k, 1.5, RngSeed(1)).unwrap();
        for threads in [4, 6] {
            for piv in [false, true] {
                let plan = PartitionPlan::balanced(n, k, k, threads, 1.0, RhsHint::Known(2)).unwrap();
                assert_eq!(plan.p(), 4);
                let opts = FactorOptions { pivoting: piv, ..Default::default() };
                let f = SpikeFactorization::factorize(&a, &plan, opts).unwrap();
                for i in 0..4 {
                    let r = plan.range(i);
                    let ai = a.diagonal_block(r.start, r.end);
                    let m = r.len();
                    let t = &f.tips()[i];
                    if i < 3 {
                        let mut rhs = DenseBlock::zeros(m, k);
                        rhs.set_rows(m - k, f.coupling_below(i));
                        let v = oracle_solve(&ai, &rhs, false, true).unwrap();
                        assert!(rel(t.vb.as_ref().unwrap(), &v.sub_rows(m - k, m)) < 1e-12);
                        if i > 0 {
                            assert!(rel(t.vt.as_ref().unwrap(), &v.sub_rows(0, k)) < 1e-12);
                        }
                    }
                    if i > 0 {
                        let mut rhs = DenseBlock::zeros(m, k);
                        rhs.set_rows(0, f.coupling_above(i));
                        let w = oracle_solve(&ai, &rhs, false, true).unwrap();
                        assert!(rel(t.wt.as_ref().unwrap(), &w.sub_rows(0, k)) < 1e-12);
                        if i < 3 {
                            assert!(rel(t.wb.as_ref().unwrap(), &w.sub_rows(m - k, m)) < 1e-12);
                        }
                    }
                    let want = if i == 0 || i == 3 { 0 } else { 3 };
                    assert_eq!(f.factor_counters()[i].full_sweeps_factor(), want);
                }
            }
        }
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let a = generate_banded(100, 3, 3, 1.5, RngSeed(2)).unwrap();
        let plan = PartitionPlan::balanced(120, 3, 3, 2, 1.0, RhsHint::Known(1)).unwrap();
        assert!(matches!(
            SpikeFactorization::factorize(&a, &plan, FactorOptions::default()),
            Err(SpikeError::PlanMismatch(_))
        ));
    }
}
