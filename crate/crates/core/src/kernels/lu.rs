//! Banded LU (optionally partial-pivoting) and UL-by-reversal factorizations
//! with triangular sweeps that can start or stop early.
//!
//! Storage follows the usual band-LU layout: with `uband = ku` (no pivoting)
//! or `uband = kl + ku` (pivoting, room for fill), entry `(i, j)` lives at
//! row `uband + i - j` of column `j`, so `U` occupies rows `0..=uband` and
//! the multipliers of `L` rows `uband + 1..=uband + kl`. Row interchanges
//! are recorded per elimination step and interleaved with the `L` sweep.

use crate::band::{BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};

#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    kl: usize,
    uband: usize,
    pivoting: bool,
    data: Vec<f64>,
    ipiv: Vec<usize>,
    boosts: usize,
    boost_eps: f64,
}

impl LuFactors {
    /// Factors `a`, using `max|a|` as the scale for zero-pivot detection.
    pub fn factor(a: &BandedMatrix, pivoting: bool, boost_eps: f64) -> Result<Self> {
        Self::factor_scaled(a, pivoting, boost_eps, a.max_abs())
    }

    /// Factors `a`. Without pivoting, a pivot smaller than `eps * scale` is
    /// replaced by `boost_eps * scale` carrying the pivot's sign. With
    /// pivoting, the largest candidate within the band is chosen (smallest
    /// row on ties) and an all-zero candidate column is an error.
    pub fn factor_scaled(
        a: &BandedMatrix,
        pivoting: bool,
        boost_eps: f64,
        scale: f64,
    ) -> Result<Self> {
        let n = a.n();
        let kl = a.kl();
        let ku = a.ku();
        let uband = if pivoting { kl + ku } else { ku };
        let ld = uband + kl + 1;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut data = vec![0.0; ld * n];
        let src = a.band_data();
        let src_ld = a.ld();
        for j in 0..n {
            // Source rows ku-(j-lo)..; copy the stored column straight across.
            let dst = j * ld + uband - ku;
            data[dst..dst + src_ld].copy_from_slice(&src[j * src_ld..(j + 1) * src_ld]);
        }
        let mut ipiv = Vec::with_capacity(n);
        let mut boosts = 0;
        let mut mults = vec![0.0; kl];
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let col0 = j * ld + uband - j;
            let ncols = (j + uband).min(n - 1);
            if pivoting {
                let mut p = j;
                let mut best = data[col0 + j].abs();
                for i in j + 1..=last {
                    let v = data[col0 + i].abs();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                if best == 0.0 {
                    return Err(SpikeError::Singular { row: j });
                }
                if p != j {
                    for c in j..=ncols {
                        let base = c * ld + uband - c;
                        data.swap(base + j, base + p);
                    }
                }
                ipiv.push(p);
            } else {
                let d = data[col0 + j];
                if d.abs() < f64::EPSILON * scale {
                    let mag = boost_eps * scale;
                    data[col0 + j] = if d < 0.0 { -mag } else { mag };
                    boosts += 1;
                }
                ipiv.push(j);
            }
            let piv = data[col0 + j];
            let cnt = last - j;
            for (m, v) in mults[..cnt].iter_mut().zip(&mut data[col0 + j + 1..=col0 + last]) {
                *v /= piv;
                *m = *v;
            }
            for c in j + 1..=ncols {
                let base = c * ld + uband - c;
                let u = data[base + j];
                if u == 0.0 {
                    continue;
                }
                for (d, m) in data[base + j + 1..=base + last].iter_mut().zip(&mults[..cnt]) {
                    *d -= m * u;
                }
            }
        }
        Ok(Self {
            n,
            kl,
            uband,
            pivoting,
            data,
            ipiv,
            boosts,
            boost_eps,
        })
    }

    #[inline]
    fn ld(&self) -> usize {
        self.uband + self.kl + 1
    }

    /// Offset such that `data[col_base(j) + i]` is entry `(i, j)`.
    #[inline]
    fn col_base(&self, j: usize) -> usize {
        j * self.ld() + self.uband - j
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn is_pivoting(&self) -> bool {
        self.pivoting
    }

    /// Row chosen as pivot at each elimination step.
    pub fn pivots(&self) -> &[usize] {
        &self.ipiv
    }

    pub fn boost_count(&self) -> usize {
        self.boosts
    }

    pub fn boost_eps(&self) -> f64 {
        self.boost_eps
    }

    /// Entry `(i, j)` of `U` (zero below the diagonal or outside its band).
    pub fn upper_entry(&self, i: usize, j: usize) -> f64 {
        if i > j || j - i > self.uband {
            0.0
        } else {
            self.data[self.col_base(j) + i]
        }
    }

    /// Multiplier stored for row `i` at elimination step `j` (zero outside
    /// `j < i <= j + kl`).
    pub fn lower_entry(&self, i: usize, j: usize) -> f64 {
        if i <= j || i - j > self.kl || i >= self.n {
            0.0
        } else {
            self.data[self.col_base(j) + i]
        }
    }

    /// `B <- L^{-1} P B`, assuming rows of `B` above `start` are zero.
    ///
    /// With pivoting the sweep begins `kl` rows earlier, since rows up to
    /// `kl` places below a step can be swapped into it.
    pub fn lower(&self, b: &mut DenseBlock, start: usize) {
        debug_assert_eq!(b.rows(), self.n);
        debug_assert!(
            (0..b.cols()).all(|c| b.col(c)[..start.min(self.n)].iter().all(|&v| v == 0.0)),
            "nonzero rows above the sweep start"
        );
        let j0 = if self.pivoting {
            start.saturating_sub(self.kl)
        } else {
            start
        };
        let nc = b.cols();
        for j in j0..self.n {
            let last = (j + self.kl).min(self.n - 1);
            let base = self.col_base(j);
            let l = &self.data[base + j + 1..=base + last];
            let p = self.ipiv[j];
            for c in 0..nc {
                let x = b.col_mut(c);
                if p != j {
                    x.swap(j, p);
                }
                let xj = x[j];
                if xj != 0.0 {
                    for (xi, li) in x[j + 1..=last].iter_mut().zip(l) {
                        *xi -= li * xj;
                    }
                }
            }
        }
    }

    /// Rows `lo..n` of `U^{-1} B`. Rows above `lo` are left partially
    /// updated and must be treated as scratch.
    pub fn upper(&self, b: &mut DenseBlock, lo: usize) {
        debug_assert_eq!(b.rows(), self.n);
        let nc = b.cols();
        for j in (lo..self.n).rev() {
            let base = self.col_base(j);
            let top = j.saturating_sub(self.uband).max(lo);
            let ujj = self.data[base + j];
            let u = &self.data[base + top..base + j];
            for c in 0..nc {
                let x = b.col_mut(c);
                let xj = x[j] / ujj;
                x[j] = xj;
                if xj != 0.0 {
                    for (xi, ui) in x[top..j].iter_mut().zip(u) {
                        *xi -= ui * xj;
                    }
                }
            }
        }
    }

    /// Rows `lo..n` of `U^{-T} B`, assuming rows above `lo` already hold
    /// the solution (as after an earlier pass over the same leading rows).
    pub fn upper_t(&self, b: &mut DenseBlock, lo: usize) {
        debug_assert_eq!(b.rows(), self.n);
        let nc = b.cols();
        for j in lo..self.n {
            let base = self.col_base(j);
            let top = j.saturating_sub(self.uband);
            let ujj = self.data[base + j];
            let u = &self.data[base + top..base + j];
            for c in 0..nc {
                let x = b.col_mut(c);
                let dot: f64 = u.iter().zip(&x[top..j]).map(|(a, b)| a * b).sum();
                x[j] = (x[j] - dot) / ujj;
            }
        }
    }

    /// Rows `lo..n` of `P^T L^{-T} B`. With pivoting the sweep continues
    /// `kl` rows past `lo` so every swap that reaches those rows is applied.
    pub fn lower_t(&self, b: &mut DenseBlock, lo: usize) {
        debug_assert_eq!(b.rows(), self.n);
        let j_end = if self.pivoting {
            lo.saturating_sub(self.kl)
        } else {
            lo
        };
        let nc = b.cols();
        for j in (j_end..self.n).rev() {
            let last = (j + self.kl).min(self.n - 1);
            let base = self.col_base(j);
            let l = &self.data[base + j + 1..=base + last];
            let p = self.ipiv[j];
            for c in 0..nc {
                let x = b.col_mut(c);
                let dot: f64 = l.iter().zip(&x[j + 1..=last]).map(|(a, b)| a * b).sum();
                x[j] -= dot;
                if p != j {
                    x.swap(j, p);
                }
            }
        }
    }

    /// `A^{-1} B` or `A^{-T} B` in place.
    pub fn solve_in_place(&self, b: &mut DenseBlock, transpose: bool) {
        if transpose {
            self.upper_t(b, 0);
            self.lower_t(b, 0);
        } else {
            self.lower(b, 0);
            self.upper(b, 0);
        }
    }
}

/// UL-type factorization obtained by LU-factoring `Q A Q`.
#[derive(Clone, Debug)]
pub struct UlFactors {
    inner: LuFactors,
}

impl UlFactors {
    pub fn factor(a: &BandedMatrix, pivoting: bool, boost_eps: f64) -> Result<Self> {
        Self::factor_owned(a.clone(), pivoting, boost_eps, a.max_abs())
    }

    /// Reverses `a` in place and factors the result.
    pub fn factor_owned(
        mut a: BandedMatrix,
        pivoting: bool,
        boost_eps: f64,
        scale: f64,
    ) -> Result<Self> {
        a.reverse_in_place();
        Ok(Self {
            inner: LuFactors::factor_scaled(&a, pivoting, boost_eps, scale)?,
        })
    }

    /// Factors of the reversed matrix.
    pub fn reversed(&self) -> &LuFactors {
        &self.inner
    }

    pub fn boost_count(&self) -> usize {
        self.inner.boost_count()
    }

    /// `X = Q (QAQ)^{-1} Q F` (or the transpose).
    pub fn solve_in_place(&self, b: &mut DenseBlock, transpose: bool) {
        b.reverse_rows();
        self.inner.solve_in_place(b, transpose);
        b.reverse_rows();
    }
}
