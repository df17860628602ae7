//! Thread distribution, partition sizing and calibration of the
//! solve-to-factor cost constant `K`.
//!
//! With `t` threads the matrix is cut into `p` partitions, `p` the largest
//! power of two not above `t`. The first and last partitions always get one
//! thread; leftover threads are handed out one at a time to inner
//! partitions, starting from the second, which then run the two-thread
//! kernel. Anything beyond `p - 2` extra threads is left idle.
//!
//! Sizes are balanced with two ratios: `R12 = n1/n2` (first or last vs a
//! two-thread inner partition) and `R13 = n1/n3` (vs a one-thread inner
//! partition), derived from per-row costs where `K` is the cost of a solve
//! sweep relative to a factorization sweep.

use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::band::{generate_banded, random_block, RngSeed};
use crate::error::{Result, SpikeError};
use crate::kernels::LuFactors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PartitionKind {
    /// First or last partition: one thread, LU (first) or UL (last).
    FirstLast,
    InnerSingle,
    InnerDual,
}

impl PartitionKind {
    pub fn threads(self) -> usize {
        match self {
            PartitionKind::InnerDual => 2,
            _ => 1,
        }
    }
}

/// Thread-to-partition assignment before sizes are known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadLayout {
    pub p: usize,
    pub kinds: Vec<PartitionKind>,
    pub threads_used: usize,
    pub idle_threads: usize,
}

impl ThreadLayout {
    pub fn dual_count(&self) -> usize {
        self.kinds.iter().filter(|&&k| k == PartitionKind::InnerDual).count()
    }

    pub fn inner_single_count(&self) -> usize {
        self.kinds.iter().filter(|&&k| k == PartitionKind::InnerSingle).count()
    }

    /// One digit per partition: threads assigned to it.
    pub fn pattern(&self) -> String {
        self.kinds.iter().map(|k| k.threads().to_string()).collect()
    }
}

pub fn distribute_threads(t: usize) -> Result<ThreadLayout> {
    if t == 0 {
        return Err(SpikeError::InvalidThreads(t));
    }
    let p = 1usize << (usize::BITS - 1 - t.leading_zeros());
    if p == 1 {
        return Ok(ThreadLayout {
            p,
            kinds: vec![PartitionKind::FirstLast],
            threads_used: 1,
            idle_threads: 0,
        });
    }
    let extra = t - p;
    let duals = extra.min(p - 2);
    let kinds = (0..p)
        .map(|i| {
            if i == 0 || i == p - 1 {
                PartitionKind::FirstLast
            } else if i <= duals {
                PartitionKind::InnerDual
            } else {
                PartitionKind::InnerSingle
            }
        })
        .collect();
    Ok(ThreadLayout {
        p,
        kinds,
        threads_used: p + duals,
        idle_threads: extra - duals,
    })
}

/// What is known about the number of right-hand sides when sizing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhsHint {
    Known(usize),
    /// Few right-hand sides: factorization cost dominates (`nrhs/k -> 0`).
    FactorDominant,
    /// Many right-hand sides: solve cost dominates (`nrhs/k -> inf`).
    SolveDominant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratios {
    pub r12: f64,
    pub r13: f64,
}

/// Load-balancing ratios for cost constant `k_const` and half-bandwidth `k`.
pub fn compute_ratios(k_const: f64, hint: RhsHint, k: usize) -> Ratios {
    let r13 = match hint {
        RhsHint::SolveDominant => 2.0,
        RhsHint::FactorDominant => 1.0 + 1.5 * k_const,
        RhsHint::Known(nrhs) => {
            let s = nrhs as f64 / k.max(1) as f64;
            1.0 / (1.0 + k_const * s) + (1.5 + 2.0 * s) / (1.0 / k_const + s)
        }
    };
    Ratios { r12: r13 / 2.0, r13 }
}

/// Partition boundaries (`p + 1` offsets) for `n` rows.
///
/// Inner and last partitions are rounded to the nearest integer and the
/// first partition absorbs the remainder, so sizes always sum to `n`. A
/// size may come out non-positive for extreme inputs; such offsets are
/// clamped and rejected by the minimum-size check of [`PartitionPlan`].
pub fn compute_sizes(n: usize, layout: &ThreadLayout, ratios: Ratios) -> Vec<usize> {
    let p = layout.p;
    if p == 1 {
        return vec![0, n];
    }
    let x = layout.dual_count() as f64;
    let y = layout.inner_single_count() as f64;
    let Ratios { r12, r13 } = ratios;
    let n1 = n as f64 * r12 * r13 / (2.0 * r12 * r13 + x * r13 + y * r12);
    let n2 = (n1 / r12).round() as i64;
    let n3 = (n1 / r13).round() as i64;
    let mut sizes: Vec<i64> = layout
        .kinds
        .iter()
        .map(|k| match k {
            PartitionKind::FirstLast => n1.round() as i64,
            PartitionKind::InnerDual => n2,
            PartitionKind::InnerSingle => n3,
        })
        .collect();
    sizes[0] = n as i64 - sizes[1..].iter().sum::<i64>();
    let mut bounds = Vec::with_capacity(p + 1);
    let mut acc: i64 = 0;
    bounds.push(0);
    for s in sizes {
        acc += s;
        bounds.push(acc.clamp(0, n as i64) as usize);
    }
    bounds
}

/// Smallest partition a kind can hold for padded half-bandwidth `k`.
pub fn min_partition_size(kind: PartitionKind, k: usize) -> usize {
    match kind {
        PartitionKind::InnerDual => 2 * (2 * k + 1),
        _ => 2 * k + 1,
    }
}

/// Partition boundaries, per-partition kinds and the ratios used.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    n: usize,
    k: usize,
    layout: ThreadLayout,
    bounds: Vec<usize>,
    ratios: Ratios,
    threads_requested: usize,
}

impl PartitionPlan {
    /// Builds a plan for `threads` threads. If a partition would fall below
    /// its minimum size, the partition count is halved (and the threads
    /// redistributed) until the plan fits.
    pub fn new(n: usize, kl: usize, ku: usize, threads: usize, ratios: Ratios) -> Result<Self> {
        if n == 0 {
            return Err(SpikeError::InvalidDimensions("matrix order must be at least 1".into()));
        }
        if !(ratios.r12 > 0.0 && ratios.r13 > 0.0) {
            return Err(SpikeError::InvalidDimensions(format!(
                "partition ratios must be positive, got R12={}, R13={}",
                ratios.r12, ratios.r13
            )));
        }
        let k = kl.max(ku).max(1);
        let mut t = threads;
        loop {
            let layout = distribute_threads(t)?;
            let bounds = compute_sizes(n, &layout, ratios);
            let fits = layout
                .kinds
                .iter()
                .enumerate()
                .all(|(i, &kind)| bounds[i + 1] >= bounds[i] + min_partition_size(kind, k));
            if layout.p == 1 || fits {
                return Ok(Self {
                    n,
                    k,
                    layout,
                    bounds,
                    ratios,
                    threads_requested: threads,
                });
            }
            let half = layout.p / 2;
            t = if half == 1 { 1 } else { threads.min(2 * half - 2) };
        }
    }

    /// Plan with ratios from the cost model.
    pub fn balanced(
        n: usize,
        kl: usize,
        ku: usize,
        threads: usize,
        k_const: f64,
        hint: RhsHint,
    ) -> Result<Self> {
        let k = kl.max(ku).max(1);
        Self::new(n, kl, ku, threads, compute_ratios(k_const, hint, k))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Padded half-bandwidth the plan was sized for.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.layout.p
    }

    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.bounds[i]..self.bounds[i + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn kinds(&self) -> &[PartitionKind] {
        &self.layout.kinds
    }

    pub fn layout(&self) -> &ThreadLayout {
        &self.layout
    }

    pub fn threads_requested(&self) -> usize {
        self.threads_requested
    }

    pub fn threads_used(&self) -> usize {
        self.layout.threads_used
    }

    pub fn idle_threads(&self) -> usize {
        self.threads_requested - self.layout.threads_used
    }

    pub fn ratios(&self) -> Ratios {
        self.ratios
    }

    /// Checks that the plan was built for a matrix of this shape.
    pub fn check_matrix(&self, n: usize, kl: usize, ku: usize) -> Result<()> {
        if n != self.n {
            return Err(SpikeError::PlanMismatch(format!(
                "plan covers {} rows, matrix has {n}",
                self.n
            )));
        }
        if kl.max(ku).max(1) > self.k {
            return Err(SpikeError::PlanMismatch(format!(
                "plan sized for half-bandwidth {}, matrix has kl={kl}, ku={ku}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Median of per-repetition `solve / factor` time ratios.
pub fn k_from_timings(solve_secs: &[f64], factor_secs: &[f64]) -> f64 {
    let mut r: Vec<f64> = solve_secs
        .iter()
        .zip(factor_secs)
        .map(|(s, f)| s / f)
        .collect();
    r.sort_by(f64::total_cmp);
    let m = r.len() / 2;
    if r.len() % 2 == 1 {
        r[m]
    } else {
        0.5 * (r[m - 1] + r[m])
    }
}

/// Shortest total measurement accepted by [`calibrate_k`], in milliseconds.
pub const MIN_CALIBRATION_MS: f64 = 10.0;

/// Measures `K` with a serial non-pivoting factorization of an
/// `n_sample x n_sample` matrix of half-bandwidth `k_sample` followed by a
/// solve with `k_sample` right-hand sides; median over five repetitions.
pub fn calibrate_k(n_sample: usize, k_sample: usize) -> Result<f64> {
    let k = k_sample.max(1);
    let n = n_sample.max(2 * k + 1);
    let a = generate_banded(n, k, k, 1.5, RngSeed(0x5eed))?;
    let f = random_block(n, k, RngSeed(0xf00d));
    let mut solve = Vec::with_capacity(5);
    let mut factor = Vec::with_capacity(5);
    for _ in 0..5 {
        let t0 = Instant::now();
        let lu = LuFactors::factor(&a, false, crate::band::oracle::DEFAULT_BOOST_EPS)?;
        factor.push(t0.elapsed().as_secs_f64());
        let mut x = f.clone();
        let t1 = Instant::now();
        lu.solve_in_place(&mut x, false);
        solve.push(t1.elapsed().as_secs_f64());
        std::hint::black_box(&x);
    }
    let total_ms = 1e3 * (solve.iter().sum::<f64>() + factor.iter().sum::<f64>());
    let min_rep = factor.iter().chain(&solve).copied().fold(f64::INFINITY, f64::min);
    if total_ms < MIN_CALIBRATION_MS || min_rep <= 0.0 {
        let grow = (MIN_CALIBRATION_MS / total_ms.max(1e-6)).ceil().max(2.0);
        return Err(SpikeError::TimerResolution {
            elapsed_ms: total_ms,
            suggested_n: (n as f64 * grow).min(usize::MAX as f64 / 2.0) as usize,
        });
    }
    Ok(k_from_timings(&solve, &factor))
}

/// Reads `K` from a cache file of `key=value` lines. A missing file yields
/// `None`.
pub fn read_k_cache(path: &Path) -> Result<Option<f64>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            if key.trim() == "K" {
                let k: f64 = value.trim().parse().map_err(|_| SpikeError::Malformed {
                    path: path.to_path_buf(),
                    reason: format!("bad K value '{}'", value.trim()),
                })?;
                if !(k > 0.0 && k.is_finite()) {
                    return Err(SpikeError::Malformed {
                        path: path.to_path_buf(),
                        reason: format!("K must be positive, got {k}"),
                    });
                }
                return Ok(Some(k));
            }
        }
    }
    Err(SpikeError::Malformed {
        path: path.to_path_buf(),
        reason: "no K entry".into(),
    })
}

pub fn write_k_cache(path: &Path, k: f64) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, format!("K={k}\n"))?;
    Ok(())
}
