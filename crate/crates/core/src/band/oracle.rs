//! Serial reference solver: row-oriented banded Gaussian elimination with
//! optional partial pivoting, plus a 1-norm condition estimator.
//!
//! This path shares no code with the partitioned solver so it can serve as
//! ground truth for it. Each row keeps its own column window that grows as
//! elimination introduces fill.

use super::{BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};

/// Default relative size of a boosted pivot, `sqrt(eps)`.
pub const DEFAULT_BOOST_EPS: f64 = 1.490_116_119_384_765_6e-8;

#[derive(Clone, Debug)]
struct Row {
    start: usize,
    vals: Vec<f64>,
}

impl Row {
    fn get(&self, c: usize) -> f64 {
        if c < self.start {
            return 0.0;
        }
        self.vals.get(c - self.start).copied().unwrap_or(0.0)
    }

    /// `self -= l * other` over `other`'s window, widening as needed.
    fn axpy(&mut self, l: f64, other: &Row) {
        let end = (self.start + self.vals.len()).max(other.start + other.vals.len());
        let start = self.start.min(other.start);
        if start < self.start {
            let mut v = vec![0.0; self.start - start];
            v.extend_from_slice(&self.vals);
            self.vals = v;
            self.start = start;
        }
        self.vals.resize(end - self.start, 0.0);
        let off = other.start - self.start;
        for (d, s) in self.vals[off..].iter_mut().zip(&other.vals) {
            *d -= l * s;
        }
    }
}

/// Elimination record of the reference solver for one matrix.
#[derive(Clone, Debug)]
pub struct OracleLu {
    n: usize,
    upper: Vec<Row>,
    /// `steps[j]` = (pivot row chosen at step j, multipliers for rows j+1..).
    steps: Vec<(usize, Vec<f64>)>,
    boosts: usize,
}

impl OracleLu {
    /// Factors `a`. Without pivoting, pivots below `eps * max|A|` are
    /// replaced by `boost_eps * max|A|` (sign preserved).
    pub fn factor(a: &BandedMatrix, pivoting: bool, boost_eps: f64) -> Result<Self> {
        let n = a.n();
        let scale = match a.max_abs() {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        let mut rows: Vec<Row> = (0..n)
            .map(|i| {
                let start = i.saturating_sub(a.kl());
                let end = (i + a.ku() + 1).min(n);
                Row {
                    start,
                    vals: (start..end).map(|j| a.get(i, j)).collect(),
                }
            })
            .collect();
        let mut steps = Vec::with_capacity(n);
        let mut boosts = 0;
        for j in 0..n {
            let last = (j + a.kl()).min(n - 1);
            let mut p = j;
            if pivoting {
                let mut best = rows[j].get(j).abs();
                for i in j + 1..=last {
                    let v = rows[i].get(j).abs();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                if best == 0.0 {
                    return Err(SpikeError::Singular { row: j });
                }
                rows.swap(j, p);
            } else {
                let d = rows[j].get(j);
                if d.abs() < f64::EPSILON * scale {
                    let mag = boost_eps * scale;
                    let b = if d < 0.0 { -mag } else { mag };
                    let off = j - rows[j].start;
                    if rows[j].vals.len() <= off {
                        rows[j].vals.resize(off + 1, 0.0);
                    }
                    rows[j].vals[off] = b;
                    boosts += 1;
                }
            }
            let (head, tail) = rows.split_at_mut(j + 1);
            let pivot_row = &head[j];
            let piv = pivot_row.get(j);
            let mut mults = Vec::with_capacity(last - j);
            for row in tail.iter_mut().take(last - j) {
                let l = row.get(j) / piv;
                if l != 0.0 {
                    row.axpy(l, pivot_row);
                }
                mults.push(l);
            }
            steps.push((p, mults));
        }
        Ok(Self {
            n,
            upper: rows,
            steps,
            boosts,
        })
    }

    pub fn boosts(&self) -> usize {
        self.boosts
    }

    pub fn solve(&self, f: &DenseBlock) -> Result<DenseBlock> {
        if f.rows() != self.n {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} rows", self.n),
                got: format!("{} rows", f.rows()),
            });
        }
        let mut x = f.clone();
        for c in 0..x.cols() {
            let v = x.col_mut(c);
            for (j, (p, mults)) in self.steps.iter().enumerate() {
                v.swap(j, *p);
                let vj = v[j];
                for (i, l) in mults.iter().enumerate() {
                    v[j + 1 + i] -= l * vj;
                }
            }
            for j in (0..self.n).rev() {
                let row = &self.upper[j];
                let mut s = v[j];
                for (off, u) in row.vals.iter().enumerate() {
                    let col = row.start + off;
                    if col > j && col < self.n {
                        s -= u * v[col];
                    }
                }
                v[j] = s / row.get(j);
            }
        }
        Ok(x)
    }
}

/// Solves `A X = F` (or `A^T X = F`) with the reference eliminator.
///
/// The transposed system is handled by eliminating the explicit transpose.
pub fn oracle_solve(
    a: &BandedMatrix,
    f: &DenseBlock,
    transpose: bool,
    pivoting: bool,
) -> Result<DenseBlock> {
    let lu = if transpose {
        OracleLu::factor(&a.transpose(), pivoting, DEFAULT_BOOST_EPS)?
    } else {
        OracleLu::factor(a, pivoting, DEFAULT_BOOST_EPS)?
    };
    lu.solve(f)
}

/// Maximum absolute column sum.
pub fn norm1(a: &BandedMatrix) -> f64 {
    (0..a.n())
        .map(|j| {
            let lo = j.saturating_sub(a.ku());
            let hi = (j + a.kl() + 1).min(a.n());
            (lo..hi).map(|i| a.get(i, j).abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Estimate of `||A||_1 ||A^{-1}||_1` using Hager's iteration with
/// pivoting reference solves.
pub fn estimate_condition_1(a: &BandedMatrix) -> Result<f64> {
    let n = a.n();
    let fwd = OracleLu::factor(a, true, DEFAULT_BOOST_EPS)?;
    let bwd = OracleLu::factor(&a.transpose(), true, DEFAULT_BOOST_EPS)?;
    let mut x = DenseBlock::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = fwd.solve(&x)?;
        let y_norm: f64 = y.col(0).iter().map(|v| v.abs()).sum();
        if y_norm <= est {
            break;
        }
        est = y_norm;
        let xi = DenseBlock::from_fn(n, 1, |i, _| if y.get(i, 0) >= 0.0 { 1.0 } else { -1.0 });
        let z = bwd.solve(&xi)?;
        let (jmax, zmax) = z
            .col(0)
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bj, bv), (j, v)| if v.abs() > bv { (j, v.abs()) } else { (bj, bv) });
        let ztx: f64 = z.col(0).iter().zip(x.col(0)).map(|(a, b)| a * b).sum();
        if zmax <= ztx {
            break;
        }
        x = DenseBlock::zeros(n, 1);
        x.set(jmax, 0, 1.0);
    }
    // Alternative lower bound from an oscillating right-hand side.
    let alt = DenseBlock::from_fn(n, 1, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    let y = fwd.solve(&alt)?;
    let alt_est = 2.0 * y.col(0).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    Ok(norm1(a) * est.max(alt_est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::{generate_banded, random_block, relative_residual, RngSeed};
    use proptest::prelude::*;

    #[test]
    fn identity_returns_rhs() {
        let a = BandedMatrix::identity(7).unwrap();
        let f = random_block(7, 3, RngSeed(1));
        for piv in [false, true] {
            assert_eq!(oracle_solve(&a, &f, false, piv).unwrap(), f);
        }
    }

    #[test]
    fn hand_solved_two_by_two() {
        let mut a = BandedMatrix::zeros(2, 1, 1).unwrap();
        a.set(0, 0, 2.0).unwrap();
        a.set(0, 1, 1.0).unwrap();
        a.set(1, 0, 1.0).unwrap();
        a.set(1, 1, 2.0).unwrap();
        let f = DenseBlock::from_fn(2, 1, |_, _| 3.0);
        for piv in [false, true] {
            let x = oracle_solve(&a, &f, false, piv).unwrap();
            assert!((x.get(0, 0) - 1.0).abs() < 1e-15);
            assert!((x.get(1, 0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_small_residual() {
        let a = generate_banded(64, 3, 3, 1.5, RngSeed(4)).unwrap();
        let f = random_block(64, 2, RngSeed(5));
        for t in [false, true] {
            for piv in [false, true] {
                let x = oracle_solve(&a, &f, t, piv).unwrap();
                assert!(relative_residual(&a, &x, &f, t).unwrap() <= 1e-13);
            }
        }
    }

    #[test]
    fn random_medium_residual() {
        let a = generate_banded(500, 10, 10, 1.5, RngSeed(6)).unwrap();
        let f = random_block(500, 1, RngSeed(7));
        let x = oracle_solve(&a, &f, false, true).unwrap();
        assert!(relative_residual(&a, &x, &f, false).unwrap() <= 1e-13);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let mut a = generate_banded(20, 2, 1, 1.5, RngSeed(8)).unwrap();
        a.set(0, 0, 0.0).unwrap();
        let f = random_block(20, 1, RngSeed(9));
        let x = oracle_solve(&a, &f, false, true).unwrap();
        assert!(relative_residual(&a, &x, &f, false).unwrap() <= 1e-13);
        let lu = OracleLu::factor(&a, false, DEFAULT_BOOST_EPS).unwrap();
        assert_eq!(lu.boosts(), 1);
    }

    #[test]
    fn pivoting_rejects_zero_column() {
        let mut a = BandedMatrix::identity(3).unwrap();
        a = {
            let mut b = BandedMatrix::zeros(3, 1, 1).unwrap();
            for i in 0..3 {
                b.set(i, i, a.get(i, i)).unwrap();
            }
            b
        };
        a.set(1, 1, 0.0).unwrap();
        assert!(matches!(
            OracleLu::factor(&a, true, DEFAULT_BOOST_EPS),
            Err(SpikeError::Singular { row: 1 })
        ));
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let mut a = BandedMatrix::zeros(5, 0, 0).unwrap();
        for (i, d) in [1.0, 10.0, 100.0, 0.5, 2.0].iter().enumerate() {
            a.set(i, i, *d).unwrap();
        }
        let c = estimate_condition_1(&a).unwrap();
        assert!((c - 200.0).abs() < 1e-9);
    }

    #[test]
    fn condition_grows_as_dominance_falls() {
        let well = generate_banded(200, 4, 4, 2.0, RngSeed(3)).unwrap();
        let ill = generate_banded(200, 4, 4, 1e-3, RngSeed(3)).unwrap();
        assert!(estimate_condition_1(&ill).unwrap() > 10.0 * estimate_condition_1(&well).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn oracle_residual_is_small(n in 2usize..=300, k in 1usize..=12,
                                    dd in 1.0f64..4.0, seed in any::<u64>(),
                                    transpose in any::<bool>(), piv in any::<bool>()) {
            let k = k.min(n - 1);
            let a = generate_banded(n, k, k, dd, RngSeed(seed)).unwrap();
            let f = random_block(n, 2, RngSeed(seed.wrapping_add(1)));
            let x = oracle_solve(&a, &f, transpose, piv).unwrap();
            prop_assert!(relative_residual(&a, &x, &f, transpose).unwrap() <= 1e-12);
        }
    }
}
