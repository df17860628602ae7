//! Dense column-major blocks and a small dense LU used for the 2k x 2k
//! coupling systems.

use crate::error::{Result, SpikeError};

/// A dense `rows x cols` block stored column-major.
///
/// Used for right-hand sides, solutions, spike tips and the small corner
/// blocks coupling neighbouring partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n, n);
        for i in 0..n {
            b.set(i, i, 1.0);
        }
        b
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} values for a {rows}x{cols} block", rows * cols),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Copy of rows `r0..r1`.
    pub fn sub_rows(&self, r0: usize, r1: usize) -> DenseBlock {
        debug_assert!(r0 <= r1 && r1 <= self.rows);
        let mut out = DenseBlock::zeros(r1 - r0, self.cols);
        for j in 0..self.cols {
            out.col_mut(j).copy_from_slice(&self.col(j)[r0..r1]);
        }
        out
    }

    /// Overwrites rows `r0..r0 + src.rows()` with `src`.
    pub fn set_rows(&mut self, r0: usize, src: &DenseBlock) {
        debug_assert_eq!(src.cols, self.cols);
        debug_assert!(r0 + src.rows <= self.rows);
        for j in 0..self.cols {
            self.col_mut(j)[r0..r0 + src.rows].copy_from_slice(src.col(j));
        }
    }

    /// `self[r0.., :] -= src`.
    pub fn sub_rows_assign(&mut self, r0: usize, src: &DenseBlock) {
        debug_assert_eq!(src.cols, self.cols);
        debug_assert!(r0 + src.rows <= self.rows);
        for j in 0..self.cols {
            let dst = &mut self.col_mut(j)[r0..r0 + src.rows];
            for (d, s) in dst.iter_mut().zip(src.col(j)) {
                *d -= s;
            }
        }
    }

    pub fn zero_rows(&mut self, r0: usize, r1: usize) {
        for j in 0..self.cols {
            self.col_mut(j)[r0..r1].fill(0.0);
        }
    }

    /// Reverses the row order in place (left multiplication by the
    /// anti-diagonal permutation).
    pub fn reverse_rows(&mut self) {
        for j in 0..self.cols {
            self.col_mut(j).reverse();
        }
    }

    pub fn transpose(&self) -> DenseBlock {
        DenseBlock::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Dense product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseBlock) -> DenseBlock {
        let mut out = DenseBlock::zeros(self.rows, rhs.cols);
        out.gemm_acc(1.0, self, rhs);
        out
    }

    /// `self += alpha * a * b`.
    pub fn gemm_acc(&mut self, alpha: f64, a: &DenseBlock, b: &DenseBlock) {
        debug_assert_eq!(a.cols, b.rows);
        debug_assert_eq!(self.rows, a.rows);
        debug_assert_eq!(self.cols, b.cols);
        let rows = self.rows;
        for j in 0..b.cols {
            let out = &mut self.data[j * rows..(j + 1) * rows];
            for l in 0..a.cols {
                let s = alpha * b.get(l, j);
                if s == 0.0 {
                    continue;
                }
                for (o, av) in out.iter_mut().zip(a.col(l)) {
                    *o += s * av;
                }
            }
        }
    }

    /// `self += alpha * a^T * b`.
    pub fn gemm_tn_acc(&mut self, alpha: f64, a: &DenseBlock, b: &DenseBlock) {
        debug_assert_eq!(a.rows, b.rows);
        debug_assert_eq!(self.rows, a.cols);
        debug_assert_eq!(self.cols, b.cols);
        for j in 0..b.cols {
            let bc = b.col(j);
            for i in 0..a.cols {
                let dot: f64 = a.col(i).iter().zip(bc).map(|(x, y)| x * y).sum();
                let v = self.get(i, j) + alpha * dot;
                self.set(i, j, v);
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Largest entry-wise difference relative to the largest entry of `other`.
    pub fn max_rel_diff(&self, other: &DenseBlock) -> f64 {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        let scale = other.max_abs().max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    }
}

/// Partial-pivoting LU of a small dense square matrix.
///
/// A column with no nonzero candidate gets a boosted pivot instead of
/// failing; `boosts` records how often that happened.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: DenseBlock,
    pivots: Vec<usize>,
    boosts: usize,
}

impl DenseLu {
    pub fn factor(a: &DenseBlock, boost: f64) -> Result<Self> {
        if a.rows != a.cols {
            return Err(SpikeError::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", a.rows, a.cols),
            });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut pivots = Vec::with_capacity(n);
        let mut boosts = 0;
        for j in 0..n {
            let mut p = j;
            let mut best = lu.get(j, j).abs();
            for i in j + 1..n {
                let v = lu.get(i, j).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots.push(p);
            if p != j {
                for c in 0..n {
                    let t = lu.get(j, c);
                    lu.set(j, c, lu.get(p, c));
                    lu.set(p, c, t);
                }
            }
            if best == 0.0 {
                lu.set(j, j, boost);
                boosts += 1;
            }
            let piv = lu.get(j, j);
            for i in j + 1..n {
                let l = lu.get(i, j) / piv;
                lu.set(i, j, l);
            }
            for c in j + 1..n {
                let u = lu.get(j, c);
                if u == 0.0 {
                    continue;
                }
                for i in j + 1..n {
                    let v = lu.get(i, c) - lu.get(i, j) * u;
                    lu.set(i, c, v);
                }
            }
        }
        Ok(Self {
            n,
            lu,
            pivots,
            boosts,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn boosts(&self) -> usize {
        self.boosts
    }

    /// Overwrites `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut DenseBlock) {
        debug_assert_eq!(b.rows, self.n);
        let n = self.n;
        for c in 0..b.cols {
            let x = b.col_mut(c);
            for (j, &p) in self.pivots.iter().enumerate() {
                x.swap(j, p);
            }
            for j in 0..n {
                let xj = x[j];
                if xj != 0.0 {
                    for i in j + 1..n {
                        x[i] -= self.lu.get(i, j) * xj;
                    }
                }
            }
            for j in (0..n).rev() {
                x[j] /= self.lu.get(j, j);
                let xj = x[j];
                if xj != 0.0 {
                    for i in 0..j {
                        x[i] -= self.lu.get(i, j) * xj;
                    }
                }
            }
        }
    }

    /// Overwrites `b` with `A^{-T} b`.
    pub fn solve_transpose_in_place(&self, b: &mut DenseBlock) {
        debug_assert_eq!(b.rows, self.n);
        let n = self.n;
        for c in 0..b.cols {
            let x = b.col_mut(c);
            // U^T is lower triangular.
            for j in 0..n {
                let mut s = x[j];
                for i in 0..j {
                    s -= self.lu.get(i, j) * x[i];
                }
                x[j] = s / self.lu.get(j, j);
            }
            // L^T is unit upper triangular.
            for j in (0..n).rev() {
                let mut s = x[j];
                for i in j + 1..n {
                    s -= self.lu.get(i, j) * x[i];
                }
                x[j] = s;
            }
            for (j, &p) in self.pivots.iter().enumerate().rev() {
                x.swap(j, p);
            }
        }
    }
}
