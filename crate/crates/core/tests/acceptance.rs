//! Acceptance checks, run without the libtest harness so that the one
//! `PASS`/`FAIL` line per criterion always reaches stdout.
//!
//! The wall-clock speed gate needs at least four hardware threads. On a
//! smaller machine it still runs and reports `FAIL` with the measured
//! ratios, but does not abort the suite.

use std::time::{Duration, Instant};

use spike_core::band::oracle::oracle_solve;
use spike_core::band::{generate_banded, random_block, relative_residual, DenseBlock, RngSeed};
use spike_core::kernels::SweepCounter;
use spike_core::partition::{compute_ratios, distribute_threads, PartitionKind, Ratios};
use spike_core::reduced::{assemble_dense, ReducedLevels};
use spike_core::study::{accuracy_study, dd_for_conditions, evaluate_study, median_time, STUDY_CONDITION_TARGETS};
use spike_core::{FactorOptions, PartitionPlan, RhsHint, SpikeFactorization};

const RESIDUAL_TOL: f64 = 1e-12;
const AGREEMENT_TOL: f64 = 1e-10;
const REDUCED_TOL: f64 = 1e-13;
const RATIO_TOL: f64 = 1e-12;
const SPEED_GATE: f64 = 0.7;

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure is expected on this machine and must not abort the run.
    advisory: bool,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into(), advisory: false }
    }
}

/// max_i |x_i - y_i| / |y_i|, over entries with nonzero reference value.
fn componentwise(x: &DenseBlock, y: &DenseBlock) -> f64 {
    x.data()
        .iter()
        .zip(y.data())
        .filter(|(_, b)| **b != 0.0)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max)
}

fn oracle_grid() -> Outcome {
    let start = Instant::now();
    let mut cases = 0usize;
    let mut worst_res = 0.0f64;
    let mut worst_cw = 0.0f64;
    let mut failures = Vec::new();
    for &n in &[64usize, 512, 4096] {
        for &k in &[1usize, 4, 16] {
            let a = generate_banded(n, k, k, 1.5, RngSeed((n * 31 + k) as u64)).unwrap();
            let rhs: Vec<DenseBlock> = [1, k, 3 * k]
                .iter()
                .enumerate()
                .map(|(s, &c)| random_block(n, c, RngSeed((n + k + s) as u64)))
                .collect();
            let refs: Vec<[DenseBlock; 2]> = rhs
                .iter()
                .map(|f| {
                    [
                        oracle_solve(&a, f, false, true).unwrap(),
                        oracle_solve(&a, f, true, true).unwrap(),
                    ]
                })
                .collect();
            for t in 2..=14 {
                for pivoting in [false, true] {
                    let plan = PartitionPlan::balanced(n, k, k, t, 1.0, RhsHint::Known(k)).unwrap();
                    let opts = FactorOptions { pivoting, ..Default::default() };
                    let fact = SpikeFactorization::factorize(&a, &plan, opts).unwrap();
                    for (f, want) in rhs.iter().zip(&refs) {
                        for transpose in [false, true] {
                            let x = if transpose { fact.transpose_solve(f) } else { fact.solve(f) }.unwrap();
                            let res = relative_residual(&a, &x, f, transpose).unwrap();
                            let cw = componentwise(&x, &want[transpose as usize]);
                            worst_res = worst_res.max(res);
                            worst_cw = worst_cw.max(cw);
                            cases += 1;
                            if !(res <= RESIDUAL_TOL && cw <= AGREEMENT_TOL) && failures.len() < 5 {
                                failures.push(format!(
                                    "n={n} k={k} t={t} p={} nrhs={} piv={pivoting} tr={transpose}: res={res:.1e} cw={cw:.1e}",
                                    plan.p(),
                                    f.cols()
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(300);
    Outcome::new(
        pass,
        format!(
            "{cases} cases, worst residual {worst_res:.2e}, worst componentwise {worst_cw:.2e}, {:.1}s{}",
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn sweep_parity() -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    for &(n, k, t) in &[(2000usize, 4usize, 4usize), (2000, 4, 6), (4000, 8, 12), (3000, 3, 5), (4000, 2, 8), (4000, 2, 14)] {
        let a = generate_banded(n, k, k, 1.5, RngSeed(t as u64)).unwrap();
        let f = random_block(n, 3, RngSeed(99));
        for pivoting in [false, true] {
            let plan = PartitionPlan::balanced(n, k, k, t, 1.0, RhsHint::Known(3)).unwrap();
            let opts = FactorOptions { pivoting, ..Default::default() };
            let fact = SpikeFactorization::factorize(&a, &plan, opts).unwrap();
            let (_, report) = fact.solve_with_report(&f).unwrap();
            let p = plan.p();
            for i in 0..p {
                let inner = i != 0 && i != p - 1;
                let want = if inner { (3, 4) } else { (0, 2) };
                let got = (
                    fact.factor_counters()[i].full_sweeps_factor(),
                    report.counters[i].full_sweeps_solve(),
                );
                checked += 1;
                if got != want {
                    bad.push(format!("t={t} piv={pivoting} part {i} ({:?}): {got:?}", plan.kinds()[i]));
                }
            }
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{checked} partitions checked; (factor, solve) = (0, 2) edge, (3, 4) inner {}", bad.join("; ")),
    )
}

fn reduced_brute_force() -> Outcome {
    let mut worst = 0.0f64;
    let mut count_ok = true;
    for &p in &[2usize, 4, 8] {
        for &k in &[1usize, 2, 3] {
            let mk = |s: u64| {
                let mut b = random_block(2 * k, k, RngSeed(s));
                b.data_mut().iter_mut().for_each(|x| *x *= 0.4);
                b
            };
            let mut v: Vec<_> = (0..p).map(|i| mk(10 * p as u64 + i as u64)).collect();
            let mut w: Vec<_> = (0..p).map(|i| mk(1000 + 10 * p as u64 + i as u64)).collect();
            v[p - 1] = DenseBlock::zeros(2 * k, k);
            w[0] = DenseBlock::zeros(2 * k, k);
            let s = assemble_dense(&v, &w, k);
            let levels = ReducedLevels::factorize(v, w, k, 2).unwrap();
            let rhs = random_block(2 * k * p, 2, RngSeed(7));
            let split = |b: &DenseBlock| -> Vec<DenseBlock> {
                (0..p).map(|i| b.sub_rows(2 * k * i, 2 * k * (i + 1))).collect()
            };
            for transpose in [false, true] {
                let mut y = split(&rhs);
                let count = if transpose {
                    levels.solve_transpose_in_place(&mut y).unwrap()
                } else {
                    levels.solve_in_place(&mut y).unwrap()
                };
                count_ok &= count == p - 1;
                let dense = if transpose { s.transpose() } else { s.clone() };
                let lu = spike_core::band::DenseLu::factor(&dense, 0.0).unwrap();
                let mut want = rhs.clone();
                lu.solve_in_place(&mut want);
                for (i, b) in y.iter().enumerate() {
                    worst = worst.max(b.max_rel_diff(&want.sub_rows(2 * k * i, 2 * k * (i + 1))));
                }
            }
        }
    }
    Outcome::new(
        worst <= REDUCED_TOL && count_ok,
        format!("worst difference {worst:.2e}, 2k-solve count = p-1: {count_ok}"),
    )
}

fn ratio_formulas() -> Outcome {
    let mut worst = 0.0f64;
    for &kc in &[0.25, 2.0 / 3.0, 1.0, 4.0 / 3.0, 3.0] {
        for &k in &[1usize, 8, 160] {
            for big in [compute_ratios(kc, RhsHint::Known(1 << 60), k), compute_ratios(kc, RhsHint::SolveDominant, k)] {
                worst = worst.max((big.r12 - 1.0).abs()).max((big.r13 - 2.0).abs());
            }
            let zero = compute_ratios(kc, RhsHint::Known(0), k);
            worst = worst.max((zero.r12 - (0.5 + 0.75 * kc)).abs());
        }
    }
    let mut size_fail = Vec::new();
    for t in 2..=64 {
        for (n, ratios) in [
            (100_000usize, compute_ratios(1.0, RhsHint::Known(8), 8)),
            (77_777, compute_ratios(4.0 / 3.0, RhsHint::FactorDominant, 4)),
            (50_001, Ratios { r12: 1.15, r13: 2.3 }),
        ] {
            let plan = PartitionPlan::new(n, 4, 4, t, ratios).unwrap();
            let sizes = plan.sizes();
            let sum: usize = sizes.iter().sum();
            let n2 = sizes.iter().zip(plan.kinds()).find(|(_, &k)| k == PartitionKind::InnerDual).map(|(s, _)| *s);
            let n3 = sizes.iter().zip(plan.kinds()).find(|(_, &k)| k == PartitionKind::InnerSingle).map(|(s, _)| *s);
            let rel_ok = match (n2, n3) {
                (Some(a), Some(b)) => (a as i64 - 2 * b as i64).abs() <= 1,
                _ => true,
            };
            if sum != n || !rel_ok {
                size_fail.push(format!("t={t} n={n} sizes={sizes:?}"));
            }
        }
    }
    Outcome::new(
        worst <= RATIO_TOL && size_fail.is_empty(),
        format!("worst limit error {worst:.1e}; size checks over t=2..64 {}", if size_fail.is_empty() { "ok".into() } else { size_fail.join("; ") }),
    )
}

fn thread_table() -> Outcome {
    // (t, threads per partition, idle)
    let table: [(usize, &str, usize); 12] = [
        (4, "1111", 0),
        (5, "1211", 0),
        (6, "1221", 0),
        (7, "1221", 1),
        (8, "11111111", 0),
        (9, "12111111", 0),
        (10, "12211111", 0),
        (11, "12221111", 0),
        (12, "12222111", 0),
        (13, "12222211", 0),
        (14, "12222221", 0),
        (15, "12222221", 1),
    ];
    let bad: Vec<String> = table
        .iter()
        .filter_map(|&(t, pat, idle)| {
            let l = distribute_threads(t).unwrap();
            (l.pattern() != pat || l.idle_threads != idle).then(|| format!("t={t}: {} idle {}", l.pattern(), l.idle_threads))
        })
        .collect();
    Outcome::new(bad.is_empty(), format!("t=4..15 {}", if bad.is_empty() { "match".into() } else { bad.join("; ") }))
}

fn transpose_reuse() -> Outcome {
    let mut worst = 0.0f64;
    let mut unchanged = true;
    for &(n, k, t) in &[(300usize, 6usize, 4usize), (2000, 8, 6), (4096, 8, 12), (1000, 3, 2)] {
        let a = generate_banded(n, k, k, 1.5, RngSeed(n as u64)).unwrap();
        let f = random_block(n, 4, RngSeed(5));
        for pivoting in [false, true] {
            let plan = PartitionPlan::balanced(n, k, k, t, 1.0, RhsHint::Known(4)).unwrap();
            let fact = SpikeFactorization::factorize(&a, &plan, FactorOptions { pivoting, ..Default::default() }).unwrap();
            let before: Vec<SweepCounter> = fact.factor_counters().to_vec();
            let _ = fact.solve(&f).unwrap();
            let x = fact.transpose_solve(&f).unwrap();
            unchanged &= fact.factor_counters() == before.as_slice();
            let want = oracle_solve(&a, &f, true, true).unwrap();
            worst = worst
                .max(relative_residual(&a, &x, &f, true).unwrap())
                .max(x.max_rel_diff(&want));
        }
    }
    Outcome::new(
        worst <= RESIDUAL_TOL && unchanged,
        format!("worst transpose error {worst:.2e}; factor counters unchanged: {unchanged}"),
    )
}

fn accuracy() -> Outcome {
    let start = Instant::now();
    let dds = dd_for_conditions(2000, 8, 42, &STUDY_CONDITION_TARGETS).unwrap();
    let rows = accuracy_study(2000, 8, &dds, 2, 42).unwrap();
    let v = evaluate_study(&rows);
    let conds: Vec<f64> = rows.iter().step_by(3).map(|r| r.condition).collect();
    let lo = conds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = conds.iter().copied().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = v.passed() && v.nopivot_degrades == Some(true) && lo <= 1e2 * 2.0 && hi >= 1e10 / 2.0
        && elapsed < Duration::from_secs(120);
    Outcome::new(
        pass,
        format!(
            "condition {lo:.1e}..{hi:.1e}; (a) {} (b) {} (c) {:?}; {:.1}s",
            v.well_conditioned_accurate,
            v.pivot_tracks_oracle,
            v.nopivot_degrades,
            elapsed.as_secs_f64()
        ),
    )
}

fn speed() -> Outcome {
    let (n, k, nrhs) = (200_000usize, 64usize, 64usize);
    let a = generate_banded(n, k, k, 1.5, RngSeed(1)).unwrap();
    let f = random_block(n, nrhs, RngSeed(2));
    let time = |t: usize| -> f64 {
        let plan = PartitionPlan::balanced(n, k, k, t, 1.0, RhsHint::Known(nrhs)).unwrap();
        median_time(3, || {
            let fact = SpikeFactorization::factorize(&a, &plan, FactorOptions::default())?;
            fact.solve(&f)
        })
        .unwrap()
        .0
    };
    let t1 = time(1);
    let t2 = time(2);
    let t4 = time(4);
    let r4 = t4 / t1;
    let cpus = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
    let mut out = Outcome::new(
        r4 < SPEED_GATE,
        format!(
            "t=1 {t1:.3}s, t=4/t=1 = {r4:.2} (gate < {SPEED_GATE}), t=2/t=1 = {:.2} (reported only); {cpus} hardware thread(s)",
            t2 / t1
        ),
    );
    out.advisory = cpus < 4;
    out
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence grid", oracle_grid),
        ("sweep-count parity", sweep_parity),
        ("reduced-system brute force", reduced_brute_force),
        ("ratio formulas and sizes", ratio_formulas),
        ("thread distribution table", thread_table),
        ("transpose reuse", transpose_reuse),
        ("accuracy study", accuracy),
        ("scaled speed", speed),
    ];
    let mut hard_failures = Vec::new();
    for (name, check) in checks {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && o.advisory { " [needs >= 4 hardware threads; not gated]" } else { "" };
        println!("{tag} {name}: {}{note}", o.detail);
        if !o.pass && !o.advisory {
            hard_failures.push(name);
        }
    }
    if !hard_failures.is_empty() {
        eprintln!("failed: {hard_failures:?}");
        std::process::exit(1);
    }
}
