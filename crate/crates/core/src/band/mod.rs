//! Band-packed matrices, random generation with a prescribed degree of
//! diagonal dominance, residuals, file I/O and the serial reference solver.

mod dense;
pub mod io;
pub mod oracle;

pub use dense::{DenseBlock, DenseLu};

use rand::distributions::{Distribution, Open01, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpikeError};

/// Seed for the deterministic generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

/// Square banded matrix in column-major band storage.
///
/// Entry `(i, j)` with `-ku <= i - j <= kl` lives at row `ku + i - j` of
/// column `j`, so every column holds `kl + ku + 1` slots. Entries outside
/// the band read as zero and cannot be written.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Result<Self> {
        check_dims(n, kl, ku)?;
        Ok(Self {
            n,
            kl,
            ku,
            data: vec![0.0; (kl + ku + 1) * n],
        })
    }

    pub fn from_band_data(n: usize, kl: usize, ku: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(n, kl, ku)?;
        if data.len() != (kl + ku + 1) * n {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} band slots", (kl + ku + 1) * n),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { n, kl, ku, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut a = Self::zeros(n, 0, 0)?;
        a.data.fill(1.0);
        Ok(a)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn kl(&self) -> usize {
        self.kl
    }

    #[inline]
    pub fn ku(&self) -> usize {
        self.ku
    }

    /// Slots per stored column.
    #[inline]
    pub fn ld(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn band_data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[j * self.ld() + self.ku + i - j]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if !self.in_band(i, j) {
            return Err(SpikeError::BandOverflow {
                row: i,
                col: j,
                kl: self.kl,
                ku: self.ku,
            });
        }
        let ld = self.ld();
        self.data[j * ld + self.ku + i - j] = v;
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Replaces `A` by `Q A Q`, where `Q` is the anti-diagonal permutation.
    ///
    /// In band storage this is exactly a reversal of the data array with the
    /// sub- and super-diagonal counts exchanged.
    pub fn reverse_in_place(&mut self) {
        self.data.reverse();
        std::mem::swap(&mut self.kl, &mut self.ku);
    }

    /// Diagonal block `r0..r1` as its own banded matrix.
    pub fn diagonal_block(&self, r0: usize, r1: usize) -> BandedMatrix {
        debug_assert!(r0 < r1 && r1 <= self.n);
        let m = r1 - r0;
        let kl = self.kl.min(m - 1);
        let ku = self.ku.min(m - 1);
        let mut out = BandedMatrix {
            n: m,
            kl,
            ku,
            data: vec![0.0; (kl + ku + 1) * m],
        };
        let ld = out.ld();
        for j in 0..m {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl + 1).min(m);
            for i in lo..hi {
                out.data[j * ld + ku + i - j] = self.get(r0 + i, r0 + j);
            }
        }
        out
    }

    /// Dense copy of the rectangular window `rows x cols`.
    pub fn dense_window(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> DenseBlock {
        DenseBlock::from_fn(r1 - r0, c1 - c0, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn to_dense(&self) -> DenseBlock {
        self.dense_window(0, self.n, 0, self.n)
    }

    /// Explicit transpose (sub- and super-diagonal counts swap).
    pub fn transpose(&self) -> BandedMatrix {
        let mut out = BandedMatrix {
            n: self.n,
            kl: self.ku,
            ku: self.kl,
            data: vec![0.0; self.data.len()],
        };
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl + 1).min(self.n);
            for i in lo..hi {
                out.set(j, i, self.get(i, j)).expect("transpose stays in band");
            }
        }
        out
    }

    /// `A X` or `A^T X` by direct traversal of the band.
    pub fn matmul(&self, x: &DenseBlock, transpose: bool) -> Result<DenseBlock> {
        if x.rows() != self.n {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} rows", self.n),
                got: format!("{} rows", x.rows()),
            });
        }
        let n = self.n;
        let ld = self.ld();
        let mut out = DenseBlock::zeros(n, x.cols());
        for c in 0..x.cols() {
            let xc = x.col(c);
            let oc = out.col_mut(c);
            for j in 0..n {
                let lo = j.saturating_sub(self.ku);
                let hi = (j + self.kl + 1).min(n);
                let col = &self.data[j * ld + self.ku + lo - j..j * ld + self.ku + hi - j];
                if transpose {
                    oc[j] = col.iter().zip(&xc[lo..hi]).map(|(a, b)| a * b).sum();
                } else {
                    let xj = xc[j];
                    for (o, a) in oc[lo..hi].iter_mut().zip(col) {
                        *o += a * xj;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn check_dims(n: usize, kl: usize, ku: usize) -> Result<()> {
    if n == 0 {
        return Err(SpikeError::InvalidDimensions("matrix order must be at least 1".into()));
    }
    if kl >= n || ku >= n {
        return Err(SpikeError::InvalidDimensions(format!(
            "bandwidths kl={kl}, ku={ku} must be smaller than n={n}"
        )));
    }
    Ok(())
}

/// Random banded matrix whose off-diagonal band entries are uniform in
/// (0, 1) and whose diagonal is `dd` times the off-diagonal column sum.
///
/// The realized degree of diagonal dominance therefore equals `dd` at every
/// column with a nonempty band. A 1x1 matrix gets a zero diagonal.
pub fn generate_banded(
    n: usize,
    kl: usize,
    ku: usize,
    dd: f64,
    seed: RngSeed,
) -> Result<BandedMatrix> {
    if !(dd > 0.0) || !dd.is_finite() {
        return Err(SpikeError::InvalidDimensions(format!(
            "diagonal dominance must be positive and finite, got {dd}"
        )));
    }
    let mut a = BandedMatrix::zeros(n, kl, ku)?;
    let mut rng = seed.rng();
    let ld = a.ld();
    for j in 0..n {
        let lo = j.saturating_sub(ku);
        let hi = (j + kl + 1).min(n);
        let mut sum = 0.0;
        for i in lo..hi {
            if i != j {
                let v: f64 = Open01.sample(&mut rng);
                a.data[j * ld + ku + i - j] = v;
                sum += v;
            }
        }
        a.data[j * ld + ku] = dd * sum;
    }
    Ok(a)
}

/// Dense block with entries uniform in [-1, 1).
pub fn random_block(rows: usize, cols: usize, seed: RngSeed) -> DenseBlock {
    let mut rng = seed.rng();
    let dist = Uniform::new(-1.0, 1.0);
    DenseBlock::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
}

/// `min_i |A_ii| / sum_{j != i} |A_ji|` over columns with a nonzero
/// off-diagonal sum; `+inf` when no such column exists.
pub fn degree_of_diagonal_dominance(a: &BandedMatrix) -> f64 {
    let n = a.n();
    let mut best = f64::INFINITY;
    for j in 0..n {
        let lo = j.saturating_sub(a.ku());
        let hi = (j + a.kl() + 1).min(n);
        let off: f64 = (lo..hi).filter(|&i| i != j).map(|i| a.get(i, j).abs()).sum();
        if off > 0.0 {
            best = best.min(a.get(j, j).abs() / off);
        }
    }
    best
}

/// `||A X - F||_F / ||F||_F` (or with `A^T`).
pub fn relative_residual(
    a: &BandedMatrix,
    x: &DenseBlock,
    f: &DenseBlock,
    transpose: bool,
) -> Result<f64> {
    if f.rows() != a.n() || x.rows() != a.n() || f.cols() != x.cols() {
        return Err(SpikeError::ShapeMismatch {
            expected: format!("{}x{} blocks", a.n(), f.cols()),
            got: format!("X {}x{}, F {}x{}", x.rows(), x.cols(), f.rows(), f.cols()),
        });
    }
    let fnorm = f.frobenius_norm();
    if fnorm == 0.0 {
        return if x.is_zero() {
            Ok(0.0)
        } else {
            Err(SpikeError::DegenerateResidual)
        };
    }
    let mut r = a.matmul(x, transpose)?;
    r.sub_rows_assign(0, f);
    Ok(r.frobenius_norm() / fnorm)
}
