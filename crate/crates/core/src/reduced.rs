//! The reduced system over partition-boundary tips, solved recursively.
//!
//! Level 0 has one group per partition holding its top `k` and bottom `k`
//! rows. Group `g` couples to the top of group `g + 1` through its spike
//! `V_g` and to the bottom of group `g - 1` through `W_g`. Each level pairs
//! neighbouring groups `(2j, 2j + 1)`: the pair is eliminated with one
//! 2k x 2k solve, and the pair's outer spikes, pushed through that pair
//! solve, become the spikes of the merged group at the next level. With `p`
//! partitions this takes `log2(p)` levels and exactly `p - 1` small solves
//! per application. Merged spikes are kept at the full height of their
//! group (split back into 2k-row pieces, one per partition).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use crate::band::{DenseBlock, DenseLu};
use crate::error::{Result, SpikeError};
use crate::spike2x2::{coupling_matrix, COUPLING_BOOST};

/// A spike of a level group: one 2k x k piece per partition in the group.
type Spike = Vec<DenseBlock>;

#[derive(Clone, Debug)]
struct PairBlock {
    lu: DenseLu,
    v_left: Spike,
    w_right: Spike,
}

#[derive(Clone, Debug)]
pub struct ReducedLevels {
    k: usize,
    p: usize,
    threads: usize,
    /// `levels[l][j]` couples groups `2j` and `2j + 1` of level `l`.
    levels: Vec<Vec<PairBlock>>,
    boosts: usize,
}

fn bottom_k(b: &DenseBlock, k: usize) -> DenseBlock {
    b.sub_rows(b.rows() - k, b.rows())
}

/// Runs `f(index, chunk)` on each `chunk`-sized piece of `items`, spread
/// over up to `threads` scoped threads (current thread included).
fn par_chunks<T: Send>(
    items: &mut [T],
    chunk: usize,
    threads: usize,
    f: impl Fn(usize, &mut [T]) + Sync,
) {
    let groups = items.len() / chunk;
    if threads <= 1 || groups <= 1 {
        items.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let per = groups.div_ceil(threads.min(groups));
    thread::scope(|s| {
        let mut parts = items.chunks_mut(per * chunk).enumerate();
        let first = parts.next();
        for (pi, part) in parts {
            let f = &f;
            s.spawn(move || {
                for (i, c) in part.chunks_mut(chunk).enumerate() {
                    f(pi * per + i, c);
                }
            });
        }
        if let Some((_, part)) = first {
            for (i, c) in part.chunks_mut(chunk).enumerate() {
                f(i, c);
            }
        }
    });
}

impl PairBlock {
    /// Applies the inverse of the pair's block `[[I, V_left E_t], [W_right
    /// E_b, I]]` to the stacked pieces `left ++ right` in place.
    fn solve(&self, left: &mut [DenseBlock], right: &mut [DenseBlock], k: usize) {
        let last = left.len() - 1;
        let mut r = DenseBlock::zeros(2 * k, left[0].cols());
        r.set_rows(0, &bottom_k(&left[last], k));
        r.set_rows(k, &right[0].sub_rows(0, k));
        self.lu.solve_in_place(&mut r);
        let z1b = r.sub_rows(0, k);
        let z2t = r.sub_rows(k, 2 * k);
        for (piece, v) in left.iter_mut().zip(&self.v_left) {
            piece.gemm_acc(-1.0, v, &z2t);
        }
        for (piece, w) in right.iter_mut().zip(&self.w_right) {
            piece.gemm_acc(-1.0, w, &z1b);
        }
    }

    /// Applies the inverse transpose of the same block.
    fn solve_transpose(&self, left: &mut [DenseBlock], right: &mut [DenseBlock], k: usize) {
        let c = left[0].cols();
        let mut wg = DenseBlock::zeros(k, c);
        for (piece, w) in right.iter().zip(&self.w_right) {
            wg.gemm_tn_acc(1.0, w, piece);
        }
        let mut vg = DenseBlock::zeros(k, c);
        for (piece, v) in left.iter().zip(&self.v_left) {
            vg.gemm_tn_acc(1.0, v, piece);
        }
        let mut r = DenseBlock::zeros(2 * k, c);
        r.set_rows(0, &wg);
        r.set_rows(k, &vg);
        self.lu.solve_transpose_in_place(&mut r);
        let last = left.len() - 1;
        let rows = left[last].rows();
        left[last].sub_rows_assign(rows - k, &r.sub_rows(0, k));
        right[0].sub_rows_assign(0, &r.sub_rows(k, 2 * k));
    }
}

impl ReducedLevels {
    /// Factors the reduced system from per-partition spike tips.
    ///
    /// `v[i]` and `w[i]` are the 2k x k stacked tips `[top; bottom]` of
    /// partition `i`'s spikes (zero where a spike does not exist). Pairs
    /// within a level are processed on up to `threads` threads.
    pub fn factorize(v: Vec<DenseBlock>, w: Vec<DenseBlock>, k: usize, threads: usize) -> Result<Self> {
        let p = v.len();
        if p < 2 || !p.is_power_of_two() || w.len() != p {
            return Err(SpikeError::InvalidDimensions(format!(
                "reduced system needs a power-of-two partition count >= 2, got {p}"
            )));
        }
        if v.iter().chain(&w).any(|b| b.rows() != 2 * k || b.cols() != k) {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{}x{k} tip blocks", 2 * k),
                got: "blocks of another shape".into(),
            });
        }
        let mut vs: Vec<Spike> = v.into_iter().map(|b| vec![b]).collect();
        let mut ws: Vec<Spike> = w.into_iter().map(|b| vec![b]).collect();
        let mut levels = Vec::new();
        let mut boosts = 0;
        while vs.len() > 1 {
            let groups = vs.len();
            let pairs: Vec<Result<PairBlock>> = (0..groups / 2)
                .map(|j| {
                    let m = coupling_matrix(&bottom_k(vs[2 * j].last().unwrap(), k), &ws[2 * j + 1][0].sub_rows(0, k));
                    Ok(PairBlock {
                        lu: DenseLu::factor(&m, COUPLING_BOOST)?,
                        v_left: vs[2 * j].clone(),
                        w_right: ws[2 * j + 1].clone(),
                    })
                })
                .collect();
            let pairs: Vec<PairBlock> = pairs.into_iter().collect::<Result<_>>()?;
            boosts += pairs.iter().map(|pb| pb.lu.boosts()).sum::<usize>();
            if groups > 2 {
                // Merged spikes: D^{-1}[0; V_right] and D^{-1}[W_left; 0].
                let mut merged: Vec<(Spike, Spike)> = (0..groups / 2)
                    .map(|j| {
                        let h = vs[2 * j].len();
                        let zeros = vec![DenseBlock::zeros(2 * k, k); h];
                        let mut nv = zeros.clone();
                        nv.extend(vs[2 * j + 1].iter().cloned());
                        let mut nw = ws[2 * j].clone();
                        nw.extend(zeros);
                        (nv, nw)
                    })
                    .collect();
                let pairs_ref = &pairs;
                par_chunks(&mut merged, 1, threads, |j, job| {
                    let (nv, nw) = &mut job[0];
                    let h = nv.len() / 2;
                    let pb = &pairs_ref[j];
                    let (l, r) = nv.split_at_mut(h);
                    pb.solve(l, r, k);
                    let (l, r) = nw.split_at_mut(h);
                    pb.solve(l, r, k);
                });
                (vs, ws) = merged.into_iter().unzip();
            } else {
                vs.clear();
            }
            levels.push(pairs);
        }
        Ok(Self {
            k,
            p,
            threads: threads.max(1),
            levels,
            boosts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn partitions(&self) -> usize {
        self.p
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Coupling blocks whose factorization needed a boosted pivot.
    pub fn boost_count(&self) -> usize {
        self.boosts
    }

    fn check(&self, y: &[DenseBlock]) -> Result<()> {
        if y.len() != self.p || y.iter().any(|b| b.rows() != 2 * self.k) {
            return Err(SpikeError::ShapeMismatch {
                expected: format!("{} tip blocks of {} rows", self.p, 2 * self.k),
                got: format!("{} blocks", y.len()),
            });
        }
        Ok(())
    }

    /// Overwrites the stacked tips `y` (one `[top; bottom]` block per
    /// partition) with the solution of the reduced system. Returns the
    /// number of 2k x 2k solves performed.
    pub fn solve_in_place(&self, y: &mut [DenseBlock]) -> Result<usize> {
        self.check(y)?;
        let count = AtomicUsize::new(0);
        for (level, pairs) in self.levels.iter().enumerate() {
            self.apply_level(y, level, pairs, &count, false);
        }
        Ok(count.into_inner())
    }

    /// Transposed counterpart of [`solve_in_place`](Self::solve_in_place):
    /// the same factored blocks applied transposed, last level first.
    pub fn solve_transpose_in_place(&self, g: &mut [DenseBlock]) -> Result<usize> {
        self.check(g)?;
        let count = AtomicUsize::new(0);
        for (level, pairs) in self.levels.iter().enumerate().rev() {
            self.apply_level(g, level, pairs, &count, true);
        }
        Ok(count.into_inner())
    }

    fn apply_level(
        &self,
        y: &mut [DenseBlock],
        level: usize,
        pairs: &[PairBlock],
        count: &AtomicUsize,
        transpose: bool,
    ) {
        let h = 1 << level;
        let k = self.k;
        par_chunks(y, 2 * h, self.threads, |j, chunk| {
            let (l, r) = chunk.split_at_mut(h);
            if transpose {
                pairs[j].solve_transpose(l, r, k);
            } else {
                pairs[j].solve(l, r, k);
            }
            count.fetch_add(1, Ordering::Relaxed);
        });
    }
}

/// Dense assembly of the reduced matrix from stacked tips, for testing.
///
/// Row/column block `i` spans `2k` entries (`[top; bottom]` of partition
/// `i`); `V_i` sits in the top-`k` columns of block `i + 1` and `W_i` in the
/// bottom-`k` columns of block `i - 1`.
pub fn assemble_dense(v: &[DenseBlock], w: &[DenseBlock], k: usize) -> DenseBlock {
    let p = v.len();
    let mut s = DenseBlock::identity(2 * k * p);
    for i in 0..p {
        for r in 0..2 * k {
            for c in 0..k {
                if i + 1 < p {
                    s.set(2 * k * i + r, 2 * k * (i + 1) + c, v[i].get(r, c));
                }
                if i > 0 {
                    s.set(2 * k * i + r, 2 * k * (i - 1) + k + c, w[i].get(r, c));
                }
            }
        }
    }
    s
}

pub fn reduce_factorize(v: Vec<DenseBlock>, w: Vec<DenseBlock>, k: usize) -> Result<ReducedLevels> {
    ReducedLevels::factorize(v, w, k, 1)
}

pub fn reduced_solve(levels: &ReducedLevels, y: &mut [DenseBlock]) -> Result<usize> {
    levels.solve_in_place(y)
}

pub fn reduced_solve_transpose(levels: &ReducedLevels, g: &mut [DenseBlock]) -> Result<usize> {
    levels.solve_transpose_in_place(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::{random_block, RngSeed};

    fn tips(p: usize, k: usize, seed: u64, scale: f64) -> (Vec<DenseBlock>, Vec<DenseBlock>) {
        let mk = |s: u64| {
            let mut b = random_block(2 * k, k, RngSeed(s));
            b.data_mut().iter_mut().for_each(|x| *x *= scale);
            b
        };
        let mut v: Vec<_> = (0..p).map(|i| mk(seed + i as u64)).collect();
        let mut w: Vec<_> = (0..p).map(|i| mk(seed + 100 + i as u64)).collect();
        v[p - 1] = DenseBlock::zeros(2 * k, k);
        w[0] = DenseBlock::zeros(2 * k, k);
        (v, w)
    }

    fn flatten(y: &[DenseBlock]) -> DenseBlock {
        let rows: usize = y.iter().map(|b| b.rows()).sum();
        let mut out = DenseBlock::zeros(rows, y[0].cols());
        let mut r = 0;
        for b in y {
            out.set_rows(r, b);
            r += b.rows();
        }
        out
    }

    #[test]
    fn zero_tips_are_identity() {
        let k = 2;
        let v = vec![DenseBlock::zeros(2 * k, k); 4];
        let lv = ReducedLevels::factorize(v.clone(), v, k, 1).unwrap();
        let y: Vec<_> = (0..4).map(|i| random_block(2 * k, 3, RngSeed(i))).collect();
        let mut x = y.clone();
        assert_eq!(lv.solve_in_place(&mut x).unwrap(), 3);
        assert_eq!(x, y);
        assert_eq!(lv.solve_transpose_in_place(&mut x).unwrap(), 3);
        assert_eq!(x, y);
    }

    #[test]
    fn matches_dense_solve() {
        for p in [2, 4, 8, 16] {
            for k in [1, 2, 3] {
                let (v, w) = tips(p, k, 17 * p as u64 + k as u64, 0.4);
                let s = assemble_dense(&v, &w, k);
                let lu = DenseLu::factor(&s, 1e-8).unwrap();
                for threads in [1, 3] {
                    let lv = ReducedLevels::factorize(v.clone(), w.clone(), k, threads).unwrap();
                    assert_eq!(lv.depth(), p.trailing_zeros() as usize);
                    let y: Vec<_> = (0..p).map(|i| random_block(2 * k, 2, RngSeed(i as u64))).collect();
                    let mut want = flatten(&y);
                    lu.solve_in_place(&mut want);
                    let mut x = y.clone();
                    assert_eq!(lv.solve_in_place(&mut x).unwrap(), p - 1);
                    assert!(flatten(&x).max_rel_diff(&want) < 1e-13, "p={p} k={k}");
                    let mut want_t = flatten(&y);
                    lu.solve_transpose_in_place(&mut want_t);
                    let mut xt = y.clone();
                    assert_eq!(lv.solve_transpose_in_place(&mut xt).unwrap(), p - 1);
                    assert!(flatten(&xt).max_rel_diff(&want_t) < 1e-13, "p={p} k={k}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_partition_count() {
        let b = vec![DenseBlock::zeros(2, 1); 3];
        assert!(ReducedLevels::factorize(b.clone(), b, 1, 1).is_err());
    }
}
