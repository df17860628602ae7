use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use spike_core::band::io::{read_matrix, write_matrix, MatrixFormat};
use spike_core::band::oracle::DEFAULT_BOOST_EPS;
use spike_core::band::{degree_of_diagonal_dominance, generate_banded, random_block, BandedMatrix, RngSeed};
use spike_core::partition::{calibrate_k, read_k_cache, write_k_cache, Ratios};
use spike_core::study::{
    accuracy_study, best_gain_percent, bench_threads, dd_for_conditions, evaluate_study, ratio_sweep,
    AccuracyRow, BenchConfig, BenchRow, RatioRow, STUDY_CONDITION_TARGETS,
};
use spike_core::{FactorOptions, SpikeError};

use crate::args::{AccuracyArgs, BenchArgs, CalibrateArgs, Format, GenArgs, MatrixArgs, SolverArgs, SweepArgs};

/// Cost constant used when neither a flag nor a cache provides one.
const DEFAULT_K: f64 = 1.0;

fn cache_path(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("SPIKE_K_CACHE") {
        return PathBuf::from(p);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_default();
    home.join(".config").join("spike").join("k_cache")
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn generate(m: &MatrixArgs) -> Result<BandedMatrix> {
    let Some(n) = m.n else {
        bail!("--n is required to generate a matrix");
    };
    let (kl, ku) = m.bands();
    Ok(generate_banded(n, kl, ku, m.dd, RngSeed(m.seed))?)
}

pub fn gen(a: &GenArgs) -> Result<bool> {
    let m = generate(&a.matrix)?;
    let format = match a.format {
        Some(Format::Mm) => MatrixFormat::MatrixMarket,
        Some(Format::Spkb) => MatrixFormat::Spkb,
        None => MatrixFormat::from_path(&a.out),
    };
    write_matrix(&m, &a.out, format)?;
    eprintln!(
        "wrote {} (n={}, kl={}, ku={}, dd={:.4})",
        a.out.display(),
        m.n(),
        m.kl(),
        m.ku(),
        degree_of_diagonal_dominance(&m)
    );
    Ok(true)
}

pub fn calibrate(a: &CalibrateArgs) -> Result<bool> {
    let n = a.n.unwrap_or(200 * a.k.max(1));
    match calibrate_k(n, a.k) {
        Ok(k) => {
            println!("K={k:.6}");
            if a.write_cache {
                let path = cache_path(a.cache.as_deref());
                write_k_cache(&path, k)?;
                eprintln!("cached in {}", path.display());
            }
            Ok(true)
        }
        Err(e @ SpikeError::TimerResolution { .. }) => {
            eprintln!("warning: sample too small: {e}");
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

struct Setup {
    a: BandedMatrix,
    cfg: BenchConfig,
}

fn setup(s: &SolverArgs) -> Result<Setup> {
    let a = match &s.matrix {
        Some(p) => read_matrix(p).with_context(|| format!("reading {}", p.display()))?,
        None => generate(&s.gen)?,
    };
    let k_const = match s.ratio_k {
        Some(k) if k > 0.0 => k,
        Some(k) => bail!("--ratio-k must be positive, got {k}"),
        None => read_k_cache(&cache_path(s.cache.as_deref()))?.unwrap_or(DEFAULT_K),
    };
    let options = FactorOptions {
        pivoting: s.pivot,
        boost_eps: s.boost_eps.unwrap_or(DEFAULT_BOOST_EPS),
    };
    Ok(Setup {
        a,
        cfg: BenchConfig {
            options,
            k_const,
            runs: s.runs,
            ..Default::default()
        },
    })
}

pub fn bench(b: &BenchArgs) -> Result<bool> {
    let Setup { a, mut cfg } = setup(&b.solver)?;
    cfg.transpose = b.transpose;
    if let (Some(r12), Some(r13)) = (b.r12, b.r13) {
        cfg.ratios = Some(Ratios { r12, r13 });
    }
    let f = random_block(a.n(), b.solver.nrhs, RngSeed(b.solver.gen.seed ^ 0xf));
    let mut out = output(b.solver.csv.as_deref())?;
    writeln!(out, "{}", BenchRow::CSV_HEADER)?;
    let mut ok = true;
    for &t in &b.threads {
        for row in bench_threads(&a, &f, t, &cfg)? {
            ok &= row.residual.map_or(true, |r| r <= b.tol);
            writeln!(out, "{}", row.csv())?;
        }
    }
    out.flush()?;
    if !ok {
        eprintln!("residual above {:e}", b.tol);
    }
    Ok(ok)
}

pub fn sweep_ratios(s: &SweepArgs) -> Result<bool> {
    let Setup { a, cfg } = setup(&s.solver)?;
    let f = random_block(a.n(), s.solver.nrhs, RngSeed(s.solver.gen.seed ^ 0xf));
    let rows = ratio_sweep(&a, &f, s.threads, &s.r12, &s.r13, &cfg)?;
    let mut out = output(s.solver.csv.as_deref())?;
    writeln!(out, "{}", RatioRow::CSV_HEADER)?;
    for row in &rows {
        writeln!(out, "{}", row.csv())?;
    }
    out.flush()?;
    if let Some(gain) = best_gain_percent(&rows) {
        eprintln!("best measured ratios are {gain:.1}% faster than the calculated ones");
    }
    Ok(true)
}

pub fn accuracy(a: &AccuracyArgs) -> Result<bool> {
    let dds = match &a.dd {
        Some(d) => d.clone(),
        None => dd_for_conditions(a.n, a.k, a.seed, &STUDY_CONDITION_TARGETS)?,
    };
    let rows = accuracy_study(a.n, a.k, &dds, a.threads, a.seed)?;
    let mut out = output(a.csv.as_deref())?;
    writeln!(out, "{}", AccuracyRow::CSV_HEADER)?;
    for row in &rows {
        writeln!(out, "{}", row.csv())?;
    }
    out.flush()?;
    let v = evaluate_study(&rows);
    eprintln!(
        "well-conditioned accurate: {}; pivoting tracks oracle: {}; non-pivoting degrades above 1e8: {}",
        v.well_conditioned_accurate,
        v.pivot_tracks_oracle,
        v.nopivot_degrades.map_or("n/a".to_string(), |b| b.to_string())
    );
    Ok(v.passed())
}
