//! Measurement helpers shared by the CLI and the acceptance checks:
//! timing, benchmark rows, partition-ratio sweeps and the
//! residual-versus-condition study.

use std::time::Instant;

use crate::band::oracle::{estimate_condition_1, oracle_solve};
use crate::band::{generate_banded, random_block, relative_residual, BandedMatrix, DenseBlock, RngSeed};
use crate::error::Result;
use crate::factor::{FactorOptions, SpikeFactorization};
use crate::kernels::SweepCounter;
use crate::partition::{compute_ratios, PartitionPlan, Ratios, RhsHint};

/// Runs `f` `runs` times and returns the median wall time in seconds
/// together with the last result.
pub fn median_time<T>(runs: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let runs = runs.max(1);
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    times.sort_by(f64::total_cmp);
    Ok((times[runs / 2], last.expect("runs >= 1")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchStage {
    Factor,
    Solve,
    TransposeSolve,
}

impl BenchStage {
    pub fn name(self) -> &'static str {
        match self {
            BenchStage::Factor => "factor",
            BenchStage::Solve => "solve",
            BenchStage::TransposeSolve => "transpose-solve",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub stage: BenchStage,
    pub threads: usize,
    pub partitions: usize,
    pub seconds: f64,
    /// Relative residual of the solve (absent for factorization rows).
    pub residual: Option<f64>,
    /// Full sweeps summed over partitions.
    pub full_sweeps: usize,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "stage,threads,partitions,seconds,residual,full_sweeps";

    pub fn csv(&self) -> String {
        let residual = self.residual.map(|r| format!("{r:.3e}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{},{}",
            self.stage.name(),
            self.threads,
            self.partitions,
            self.seconds,
            residual,
            self.full_sweeps
        )
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub options: FactorOptions,
    pub transpose: bool,
    /// Cost constant used for partition sizing.
    pub k_const: f64,
    /// Explicit ratios; overrides `k_const` when set.
    pub ratios: Option<Ratios>,
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            options: FactorOptions::default(),
            transpose: false,
            k_const: 1.0,
            ratios: None,
            runs: 3,
        }
    }
}

fn full_sweeps(counters: &[SweepCounter], factor: bool) -> usize {
    counters
        .iter()
        .map(|c| if factor { c.full_sweeps_factor() } else { c.full_sweeps_solve() })
        .sum()
}

fn plan_for(a: &BandedMatrix, threads: usize, nrhs: usize, cfg: &BenchConfig) -> Result<PartitionPlan> {
    let k = a.kl().max(a.ku()).max(1);
    let ratios = cfg
        .ratios
        .unwrap_or_else(|| compute_ratios(cfg.k_const, RhsHint::Known(nrhs), k));
    PartitionPlan::new(a.n(), a.kl(), a.ku(), threads, ratios)
}

/// Factor and solve timings for one thread count: a factor row, a solve
/// row and, if requested, a transpose-solve row on the same factorization.
pub fn bench_threads(a: &BandedMatrix, f: &DenseBlock, threads: usize, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let plan = plan_for(a, threads, f.cols(), cfg)?;
    let (t_factor, fact) = median_time(cfg.runs, || SpikeFactorization::factorize(a, &plan, cfg.options))?;
    let mut rows = vec![BenchRow {
        stage: BenchStage::Factor,
        threads,
        partitions: plan.p(),
        seconds: t_factor,
        residual: None,
        full_sweeps: full_sweeps(fact.factor_counters(), true),
    }];
    let mut stages = vec![(BenchStage::Solve, false)];
    if cfg.transpose {
        stages.push((BenchStage::TransposeSolve, true));
    }
    for (stage, transpose) in stages {
        let (secs, (x, report)) = median_time(cfg.runs, || {
            if transpose {
                fact.transpose_solve_with_report(f)
            } else {
                fact.solve_with_report(f)
            }
        })?;
        rows.push(BenchRow {
            stage,
            threads,
            partitions: plan.p(),
            seconds: secs,
            residual: Some(relative_residual(a, &x, f, transpose)?),
            full_sweeps: full_sweeps(&report.counters, false),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub r12: f64,
    pub r13: f64,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
    /// Whether this point is the one predicted by the cost model.
    pub calculated: bool,
}

impl RatioRow {
    pub const CSV_HEADER: &'static str = "r12,r13,factor_seconds,solve_seconds,total_seconds,calculated";

    pub fn total(&self) -> f64 {
        self.factor_seconds + self.solve_seconds
    }

    pub fn csv(&self) -> String {
        format!(
            "{:.4},{:.4},{:.6},{:.6},{:.6},{}",
            self.r12,
            self.r13,
            self.factor_seconds,
            self.solve_seconds,
            self.total(),
            self.calculated
        )
    }
}

/// Times factor + solve for every `(r12, r13)` pair of the grid plus the
/// point given by the cost model. Pairs whose plan is infeasible (a
/// partition below its minimum size) are skipped.
pub fn ratio_sweep(
    a: &BandedMatrix,
    f: &DenseBlock,
    threads: usize,
    r12s: &[f64],
    r13s: &[f64],
    cfg: &BenchConfig,
) -> Result<Vec<RatioRow>> {
    let k = a.kl().max(a.ku()).max(1);
    let calc = compute_ratios(cfg.k_const, RhsHint::Known(f.cols()), k);
    let mut points: Vec<(Ratios, bool)> = vec![(calc, true)];
    for &r12 in r12s {
        for &r13 in r13s {
            points.push((Ratios { r12, r13 }, false));
        }
    }
    let mut rows = Vec::with_capacity(points.len());
    for (ratios, calculated) in points {
        let plan = match PartitionPlan::new(a.n(), a.kl(), a.ku(), threads, ratios) {
            Ok(plan) => plan,
            Err(_) if !calculated => continue,
            Err(e) => return Err(e),
        };
        let (tf, fact) = median_time(cfg.runs, || SpikeFactorization::factorize(a, &plan, cfg.options))?;
        let (ts, _) = median_time(cfg.runs, || fact.solve(f))?;
        rows.push(RatioRow {
            r12: ratios.r12,
            r13: ratios.r13,
            factor_seconds: tf,
            solve_seconds: ts,
            calculated,
        });
    }
    Ok(rows)
}

/// How much faster the best measured grid point is than the calculated
/// point, in percent of the calculated total (0 when the calculated point
/// is itself the best).
pub fn best_gain_percent(rows: &[RatioRow]) -> Option<f64> {
    let calc = rows.iter().find(|r| r.calculated)?.total();
    let best = rows.iter().map(RatioRow::total).fold(f64::INFINITY, f64::min);
    Some(((calc - best) / calc * 100.0).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudySolver {
    SpikeNopivot,
    SpikePivot,
    OraclePivot,
}

impl StudySolver {
    pub const ALL: [StudySolver; 3] = [StudySolver::SpikeNopivot, StudySolver::SpikePivot, StudySolver::OraclePivot];

    pub fn name(self) -> &'static str {
        match self {
            StudySolver::SpikeNopivot => "spike-nopivot",
            StudySolver::SpikePivot => "spike-pivot",
            StudySolver::OraclePivot => "oracle-pivot",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub dd: f64,
    pub condition: f64,
    pub solver: StudySolver,
    pub residual: f64,
}

impl AccuracyRow {
    pub const CSV_HEADER: &'static str = "dd,condition,solver,residual";

    pub fn csv(&self) -> String {
        format!("{:e},{:.2e},{},{:.3e}", self.dd, self.condition, self.solver.name(), self.residual)
    }
}

/// Target condition numbers of the default study: one per decade.
pub const STUDY_CONDITION_TARGETS: [f64; 9] = [1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10];

fn condition_at(n: usize, k: usize, seed: u64, dd: f64) -> Result<f64> {
    let a = generate_banded(n, k, k, dd, RngSeed(seed))?;
    // An exactly singular sample counts as infinitely ill-conditioned.
    Ok(estimate_condition_1(&a).unwrap_or(f64::INFINITY))
}

/// Diagonal-dominance levels at which the generator (fixed `seed`) yields
/// matrices with estimated condition close to each target.
///
/// Lowering `dd` moves the diagonal through values where the matrix is
/// singular; the condition number blows up like `1/|dd - dd*|` around such a
/// point. The largest one below 1 is located by a coarse scan and refined
/// by ternary search, then every target is bracketed between it and
/// `dd = 1.5` and found by bisection on `log(cond)`.
pub fn dd_for_conditions(n: usize, k: usize, seed: u64, targets: &[f64]) -> Result<Vec<f64>> {
    let mut grid = Vec::new();
    let mut dd = 1.0;
    while dd > 0.005 {
        grid.push(dd);
        dd *= 0.93;
    }
    let conds = grid
        .iter()
        .map(|&d| condition_at(n, k, seed, d))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..grid.len())
        .max_by(|&i, &j| conds[i].total_cmp(&conds[j]))
        .expect("non-empty grid");
    let (mut lo, mut hi) = (
        grid[(best + 1).min(grid.len() - 1)],
        grid[best.saturating_sub(1)],
    );
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if condition_at(n, k, seed, m1)? > condition_at(n, k, seed, m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let pole = 0.5 * (lo + hi);
    let ceiling = condition_at(n, k, seed, pole)?;
    let mut out = Vec::with_capacity(targets.len());
    for &target in targets {
        // `lo` is on the ill-conditioned side of the bracket.
        let (mut lo, mut hi) = (pole, 1.5);
        if target >= ceiling {
            out.push(pole);
            continue;
        }
        let mut mid = hi;
        for _ in 0..100 {
            mid = 0.5 * (lo + hi);
            let c = condition_at(n, k, seed, mid)?;
            // Within a factor of two is close enough for decade bucketing.
            if (c / target).ln().abs() < 2f64.ln() {
                break;
            }
            if c > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(mid);
    }
    Ok(out)
}

/// Residual of each solver on generated `n x n` matrices with half-bandwidth
/// `k`, one matrix per diagonal-dominance level. All levels share the same
/// off-diagonal entries (same seed), so the condition number varies
/// continuously with `dd`. SPIKE runs use `threads`
/// threads; a single random right-hand side is used per matrix.
pub fn accuracy_study(n: usize, k: usize, dds: &[f64], threads: usize, seed: u64) -> Result<Vec<AccuracyRow>> {
    let mut rows = Vec::with_capacity(dds.len() * 3);
    for (idx, &dd) in dds.iter().enumerate() {
        let a = generate_banded(n, k, k, dd, RngSeed(seed))?;
        let f = random_block(n, 1, RngSeed(seed ^ 0x5eed ^ idx as u64));
        let condition = estimate_condition_1(&a)?;
        let plan = PartitionPlan::balanced(n, k, k, threads, 1.0, RhsHint::Known(1))?;
        for solver in StudySolver::ALL {
            let x = match solver {
                StudySolver::SpikeNopivot => {
                    SpikeFactorization::factorize(&a, &plan, FactorOptions::default())?.solve(&f)?
                }
                StudySolver::SpikePivot => {
                    SpikeFactorization::factorize(&a, &plan, FactorOptions::pivoting())?.solve(&f)?
                }
                StudySolver::OraclePivot => oracle_solve(&a, &f, false, true)?,
            };
            let residual = relative_residual(&a, &x, &f, false)?;
            rows.push(AccuracyRow { dd, condition, solver, residual });
        }
    }
    Ok(rows)
}

/// Pass/fail summary of an accuracy study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StudyVerdict {
    /// Every solver reaches residual <= 1e-10 wherever condition <= 1e5.
    pub well_conditioned_accurate: bool,
    /// Pivoting SPIKE stays within 10x of the pivoting oracle everywhere.
    pub pivot_tracks_oracle: bool,
    /// Somewhere above condition 1e8 the non-pivoting residual exceeds
    /// the pivoting one by at least 10x; `None` if no sample is that
    /// ill-conditioned.
    pub nopivot_degrades: Option<bool>,
}

impl StudyVerdict {
    pub fn passed(&self) -> bool {
        self.well_conditioned_accurate && self.pivot_tracks_oracle && self.nopivot_degrades != Some(false)
    }
}

pub fn evaluate_study(rows: &[AccuracyRow]) -> StudyVerdict {
    let residual = |dd: f64, solver: StudySolver| {
        rows.iter()
            .find(|r| r.dd == dd && r.solver == solver)
            .map(|r| r.residual)
    };
    let mut well = true;
    let mut tracks = true;
    let mut degrades = None;
    for row in rows.iter().filter(|r| r.solver == StudySolver::OraclePivot) {
        let (Some(nopiv), Some(piv)) = (
            residual(row.dd, StudySolver::SpikeNopivot),
            residual(row.dd, StudySolver::SpikePivot),
        ) else {
            continue;
        };
        if row.condition <= 1e5 && [nopiv, piv, row.residual].iter().any(|&r| !(r <= 1e-10)) {
            well = false;
        }
        if !(piv <= 10.0 * row.residual) {
            tracks = false;
        }
        if row.condition > 1e8 {
            let hit = nopiv >= 10.0 * piv;
            degrades = Some(degrades.unwrap_or(false) || hit);
        }
    }
    StudyVerdict {
        well_conditioned_accurate: well,
        pivot_tracks_oracle: tracks,
        nopivot_degrades: degrades,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three() {
        let mut calls = 0;
        let (t, v) = median_time(3, || {
            calls += 1;
            Ok(calls)
        })
        .unwrap();
        assert!(t >= 0.0);
        assert_eq!(v, 3);
    }

    #[test]
    fn bench_rows_per_stage() {
        let a = generate_banded(400, 4, 4, 1.5, RngSeed(1)).unwrap();
        let f = random_block(400, 4, RngSeed(2));
        let cfg = BenchConfig { transpose: true, runs: 1, ..Default::default() };
        let rows = bench_threads(&a, &f, 4, &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].stage, BenchStage::Factor);
        assert!(rows[1..].iter().all(|r| r.residual.unwrap() <= 1e-12));
    }

    #[test]
    fn single_point_sweep_is_valid() {
        let a = generate_banded(300, 2, 2, 1.5, RngSeed(3)).unwrap();
        let f = random_block(300, 1, RngSeed(4));
        let cfg = BenchConfig { runs: 1, ..Default::default() };
        let rows = ratio_sweep(&a, &f, 4, &[1.0], &[2.0], &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.iter().filter(|r| r.calculated).count(), 1);
        assert!(best_gain_percent(&rows).unwrap() >= 0.0);
    }
}
