//! Forward and transposed solves on a [`SpikeFactorization`], plus
//! iterative refinement.
//!
//! Forward (`A X = F`): each partition computes the tips of
//! `Y_i = A_i^{-1} F_i`; the reduced system turns them into solution tips;
//! each partition then recomputes
//! `X_i = A_i^{-1}(F_i - [C_i X_{i-1,bottom}; 0; B_i X_{i+1,top}])`.
//!
//! Transposed (`A^T X = F`, using `A^T = S^T D^T`): each partition applies
//! `A_i^{-T}` to its right-hand side with the boundary tips zeroed (the
//! first and last partitions keep their outer tip, which is already final)
//! and passes `B^T`/`C^T` times the resulting tips to its neighbours. The
//! transposed reduced system yields the boundary tips `Y`, and each
//! partition finishes with `X_i = A_i^{-T}[Y_top; F_middle; Y_bottom]`.
//!
//! First and last partitions spend two full sweeps per solve (the second
//! application reuses the first's work on all but `k` rows); inner
//! partitions spend four.

use crate::band::{relative_residual, BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};
use crate::factor::{par_map, PartFactors, SpikeFactorization};
use crate::kernels::{Meter, Span, Stage, SweepCounter};

/// Instrumentation of one solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    /// Per-partition sweep counts of this solve.
    pub counters: Vec<SweepCounter>,
    /// Number of 2k x 2k coupling solves in the reduced phase.
    pub two_k_solves: usize,
}

/// Per-partition state carried across the reduced phase.
enum Pending {
    Kept(DenseBlock),
    None,
}

fn top(b: &DenseBlock, k: usize) -> DenseBlock {
    b.sub_rows(0, k)
}

fn bottom(b: &DenseBlock, k: usize) -> DenseBlock {
    b.sub_rows(b.rows() - k, b.rows())
}

fn full_solve(lu: &crate::kernels::LuFactors, f: &DenseBlock, transpose: bool, meter: &mut Meter) -> DenseBlock {
    let mut x = f.clone();
    lu.solve_in_place(&mut x, transpose);
    meter.tick(Span::Full);
    meter.tick(Span::Full);
    x
}

impl SpikeFactorization {
    fn check_rhs(&self, f: &DenseBlock) -> Result<()> {
        if f.rows() != self.n {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} rows", self.n),
                got: format!("{} rows", f.rows()),
            });
        }
        Ok(())
    }

    fn assemble(&self, pieces: Vec<DenseBlock>, cols: usize) -> DenseBlock {
        let mut x = DenseBlock::zeros(self.n, cols);
        for (i, piece) in pieces.iter().enumerate() {
            x.set_rows(self.plan.bounds()[i], piece);
        }
        x
    }

    pub fn solve(&self, f: &DenseBlock) -> Result<DenseBlock> {
        Ok(self.solve_with_report(f)?.0)
    }

    pub fn transpose_solve(&self, f: &DenseBlock) -> Result<DenseBlock> {
        Ok(self.transpose_solve_with_report(f)?.0)
    }

    pub fn solve_with_report(&self, f: &DenseBlock) -> Result<(DenseBlock, SolveReport)> {
        self.check_rhs(f)?;
        let k = self.k;
        let p = self.plan.p();
        let c = f.cols();
        if let PartFactors::Serial(lu) = &self.parts[0] {
            let mut counter = SweepCounter::new();
            let x = full_solve(lu, f, false, &mut Meter::new(&mut counter, Stage::Solve));
            return Ok((x, SolveReport { counters: vec![counter], two_k_solves: 0 }));
        }
        let levels = self.levels.as_ref().expect("multi-partition factorization has levels");

        // D-stage: tips of Y_i = A_i^{-1} F_i.
        let stage1 = par_map(p, |i| {
            let r = self.plan.range(i);
            let fi = f.sub_rows(r.start, r.end);
            let mut counter = SweepCounter::new();
            let mut meter = Meter::new(&mut counter, Stage::Solve);
            let zero = DenseBlock::zeros(k, c);
            let (tips, keep) = match &self.parts[i] {
                PartFactors::First(e) => {
                    let (z, yb) = e.near_solve(&fi, &mut meter);
                    (vstack_tips(&zero, &yb), Pending::Kept(z))
                }
                PartFactors::Last(e) => {
                    let (z, yt) = e.near_solve(&fi, &mut meter);
                    (vstack_tips(&yt, &zero), Pending::Kept(z))
                }
                PartFactors::Inner(lu) => {
                    let y = full_solve(lu, &fi, false, &mut meter);
                    (vstack_tips(&top(&y, k), &bottom(&y, k)), Pending::None)
                }
                PartFactors::Dual(d) => {
                    let y = d.solve(&fi, false, &mut counter);
                    (vstack_tips(&top(&y, k), &bottom(&y, k)), Pending::None)
                }
                PartFactors::Serial(_) => unreachable!(),
            };
            (tips, keep, counter)
        });
        let mut ytips = Vec::with_capacity(p);
        let mut kept = Vec::with_capacity(p);
        let mut counters = Vec::with_capacity(p);
        for (t, z, cn) in stage1 {
            ytips.push(t);
            kept.push(z);
            counters.push(cn);
        }

        let two_k_solves = levels.solve_in_place(&mut ytips)?;
        let xtips = &ytips;
        let kept: Vec<std::sync::Mutex<Pending>> = kept.into_iter().map(std::sync::Mutex::new).collect();

        // Retrieval.
        let stage2 = par_map(p, |i| {
            let r = self.plan.range(i);
            let mut counter = SweepCounter::new();
            let mut meter = Meter::new(&mut counter, Stage::Solve);
            let z = std::mem::replace(&mut *kept[i].lock().unwrap(), Pending::None);
            let x = match (&self.parts[i], z) {
                (PartFactors::First(e), Pending::Kept(z)) => {
                    let corr = self.bhat[i].matmul(&top(&xtips[i + 1], k));
                    e.retrieve(z, &corr, &mut meter)
                }
                (PartFactors::Last(e), Pending::Kept(z)) => {
                    let corr = self.chat[i].matmul(&bottom(&xtips[i - 1], k));
                    e.retrieve(z, &corr, &mut meter)
                }
                (part, _) => {
                    let mut g = f.sub_rows(r.start, r.end);
                    let m = g.rows();
                    g.sub_rows_assign(0, &self.chat[i].matmul(&bottom(&xtips[i - 1], k)));
                    g.sub_rows_assign(m - k, &self.bhat[i].matmul(&top(&xtips[i + 1], k)));
                    match part {
                        PartFactors::Inner(lu) => full_solve(lu, &g, false, &mut meter),
                        PartFactors::Dual(d) => {
                            d.solve(&g, false, &mut counter)
                        }
                        _ => unreachable!(),
                    }
                }
            };
            (x, counter)
        });
        let mut pieces = Vec::with_capacity(p);
        for (i, (x, cn)) in stage2.into_iter().enumerate() {
            pieces.push(x);
            counters[i] += cn;
        }
        Ok((self.assemble(pieces, c), SolveReport { counters, two_k_solves }))
    }

    pub fn transpose_solve_with_report(&self, f: &DenseBlock) -> Result<(DenseBlock, SolveReport)> {
        self.check_rhs(f)?;
        let k = self.k;
        let p = self.plan.p();
        let c = f.cols();
        if let PartFactors::Serial(lu) = &self.parts[0] {
            let mut counter = SweepCounter::new();
            let x = full_solve(lu, f, true, &mut Meter::new(&mut counter, Stage::Solve));
            return Ok((x, SolveReport { counters: vec![counter], two_k_solves: 0 }));
        }
        let levels = self.levels.as_ref().expect("multi-partition factorization has levels");

        // S-stage: tips of A_i^{-T} applied to the middle of F_i.
        let stage1 = par_map(p, |i| {
            let r = self.plan.range(i);
            let fi = f.sub_rows(r.start, r.end);
            let m = fi.rows();
            let mut counter = SweepCounter::new();
            let mut meter = Meter::new(&mut counter, Stage::Solve);
            // (top tip of A_i^{-T}[..], bottom tip, kept state)
            let out = match &self.parts[i] {
                PartFactors::First(e) => {
                    let (u, h) = e.near_solve_transpose(&fi, &mut meter);
                    (None, Some(h), Pending::Kept(u))
                }
                PartFactors::Last(e) => {
                    let (u, h) = e.near_solve_transpose(&fi, &mut meter);
                    (Some(h), None, Pending::Kept(u))
                }
                part => {
                    let mut g = fi.clone();
                    g.zero_rows(0, k);
                    g.zero_rows(m - k, m);
                    let s = match part {
                        PartFactors::Inner(lu) => full_solve(lu, &g, true, &mut meter),
                        PartFactors::Dual(d) => {
                            d.solve(&g, true, &mut counter)
                        }
                        _ => unreachable!(),
                    };
                    (Some(top(&s, k)), Some(bottom(&s, k)), Pending::None)
                }
            };
            (out, counter)
        });
        let mut gtips: Vec<DenseBlock> = (0..p)
            .map(|i| {
                let r = self.plan.range(i);
                vstack_tips(&f.sub_rows(r.start, r.start + k), &f.sub_rows(r.end - k, r.end))
            })
            .collect();
        let mut kept = Vec::with_capacity(p);
        let mut counters = Vec::with_capacity(p);
        for (i, ((ht, hb, z), cn)) in stage1.into_iter().enumerate() {
            if let Some(ht) = ht {
                // Feeds the bottom tip of partition i - 1 through C_i^T.
                let mut d = DenseBlock::zeros(k, c);
                d.gemm_tn_acc(1.0, &self.chat[i], &ht);
                gtips[i - 1].sub_rows_assign(k, &d);
            }
            if let Some(hb) = hb {
                // Feeds the top tip of partition i + 1 through B_i^T.
                let mut d = DenseBlock::zeros(k, c);
                d.gemm_tn_acc(1.0, &self.bhat[i], &hb);
                gtips[i + 1].sub_rows_assign(0, &d);
            }
            kept.push(std::sync::Mutex::new(z));
            counters.push(cn);
        }

        let two_k_solves = levels.solve_transpose_in_place(&mut gtips)?;
        let ytips = &gtips;

        // D-stage: X_i = A_i^{-T}[Y_top; F_middle; Y_bottom].
        let stage2 = par_map(p, |i| {
            let r = self.plan.range(i);
            let mut counter = SweepCounter::new();
            let mut meter = Meter::new(&mut counter, Stage::Solve);
            let z = std::mem::replace(&mut *kept[i].lock().unwrap(), Pending::None);
            let x = match (&self.parts[i], z) {
                (PartFactors::First(e), Pending::Kept(u)) => {
                    e.finish_transpose(u, &bottom(&ytips[i], k), &mut meter)
                }
                (PartFactors::Last(e), Pending::Kept(u)) => {
                    e.finish_transpose(u, &top(&ytips[i], k), &mut meter)
                }
                (part, _) => {
                    let mut g = f.sub_rows(r.start, r.end);
                    let m = g.rows();
                    g.set_rows(0, &top(&ytips[i], k));
                    g.set_rows(m - k, &bottom(&ytips[i], k));
                    match part {
                        PartFactors::Inner(lu) => full_solve(lu, &g, true, &mut meter),
                        PartFactors::Dual(d) => {
                            d.solve(&g, true, &mut counter)
                        }
                        _ => unreachable!(),
                    }
                }
            };
            (x, counter)
        });
        let mut pieces = Vec::with_capacity(p);
        for (i, (x, cn)) in stage2.into_iter().enumerate() {
            pieces.push(x);
            counters[i] += cn;
        }
        Ok((self.assemble(pieces, c), SolveReport { counters, two_k_solves }))
    }
}

fn vstack_tips(t: &DenseBlock, b: &DenseBlock) -> DenseBlock {
    crate::spike2x2::vstack(t, b)
}

pub fn solve(fact: &SpikeFactorization, f: &DenseBlock) -> Result<DenseBlock> {
    fact.solve(f)
}

pub fn transpose_solve(fact: &SpikeFactorization, f: &DenseBlock) -> Result<DenseBlock> {
    fact.transpose_solve(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineStatus {
    Converged,
    /// A correction reduced the residual by less than 1.1x.
    Stagnated,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineReport {
    pub status: RefineStatus,
    /// Corrections applied.
    pub iterations: usize,
    /// Relative residual before the first and after every correction.
    pub residuals: Vec<f64>,
}

impl RefineReport {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }
}

/// Residual-correction loop `X += A^{-1}(F - A X)` (or with `A^T`) until
/// the relative residual is at most `tol`, progress stalls, or `max_iters`
/// corrections have been applied. The best iterate is returned.
pub fn iterative_refine(
    fact: &SpikeFactorization,
    a: &BandedMatrix,
    f: &DenseBlock,
    x0: DenseBlock,
    max_iters: usize,
    tol: f64,
    transpose: bool,
) -> Result<(DenseBlock, RefineReport)> {
    let mut x = x0;
    let mut res = relative_residual(a, &x, f, transpose)?;
    let mut residuals = vec![res];
    let mut status = RefineStatus::MaxIterations;
    let mut iterations = 0;
    if res <= tol {
        status = RefineStatus::Converged;
    } else {
        while iterations < max_iters {
            let mut r = f.clone();
            r.sub_rows_assign(0, &a.matmul(&x, transpose)?);
            let d = if transpose { fact.transpose_solve(&r)? } else { fact.solve(&r)? };
            let mut next = x.clone();
            for (xv, dv) in next.data_mut().iter_mut().zip(d.data()) {
                *xv += dv;
            }
            let next_res = relative_residual(a, &next, f, transpose)?;
            iterations += 1;
            residuals.push(next_res);
            let improved = next_res < res;
            if improved {
                x = next;
            }
            if next_res <= tol {
                status = RefineStatus::Converged;
                break;
            }
            if next_res * 1.1 > res {
                status = RefineStatus::Stagnated;
                break;
            }
            res = next_res;
        }
    }
    Ok((x, RefineReport { status, iterations, residuals }))
}
