//! Matrix files: Matrix Market coordinate format and the native `SPKB`
//! binary format for banded matrices, Matrix Market array format for dense
//! blocks.
//!
//! Coordinate files written here carry a `% spike-band <kl> <ku>` comment so
//! that the declared band survives a round trip even when its outermost
//! diagonals are zero. Without that comment the band is inferred from the
//! entries.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{BandedMatrix, DenseBlock};
use crate::error::{Result, SpikeError};

const MAGIC: &[u8; 4] = b"SPKB";
const BAND_TAG: &str = "% spike-band";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Spkb,
}

impl MatrixFormat {
    /// `.spkb` selects the binary format, anything else Matrix Market.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("spkb") => MatrixFormat::Spkb,
            _ => MatrixFormat::MatrixMarket,
        }
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> SpikeError {
    SpikeError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_matrix(a: &BandedMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Spkb => {
            w.write_all(MAGIC)?;
            for v in [a.n(), a.kl(), a.ku()] {
                w.write_all(&(v as u64).to_le_bytes())?;
            }
            for v in a.band_data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        MatrixFormat::MatrixMarket => {
            let n = a.n();
            let mut entries = Vec::new();
            for j in 0..n {
                let lo = j.saturating_sub(a.ku());
                let hi = (j + a.kl() + 1).min(n);
                for i in lo..hi {
                    let v = a.get(i, j);
                    if v.to_bits() != 0 {
                        entries.push((i, j, v));
                    }
                }
            }
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{BAND_TAG} {} {}", a.kl(), a.ku())?;
            writeln!(w, "{n} {n} {}", entries.len())?;
            for (i, j, v) in entries {
                writeln!(w, "{} {} {v:e}", i + 1, j + 1)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either format, recognized by the `SPKB` magic bytes.
pub fn read_matrix(path: &Path) -> Result<BandedMatrix> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(malformed(path, "empty file"));
    }
    if bytes.starts_with(MAGIC) {
        read_spkb(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| malformed(path, "not UTF-8 text"))?;
        read_mm(path, text)
    }
}

fn read_spkb(path: &Path, bytes: &[u8]) -> Result<BandedMatrix> {
    if bytes.len() < 28 {
        return Err(malformed(path, "truncated header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap());
    let (n, kl, ku) = (word(0) as usize, word(1) as usize, word(2) as usize);
    let count = kl
        .checked_add(ku)
        .and_then(|s| s.checked_add(1))
        .and_then(|s| s.checked_mul(n))
        .ok_or_else(|| malformed(path, "header dimensions overflow"))?;
    let body = &bytes[28..];
    if Some(body.len()) != count.checked_mul(8) {
        return Err(malformed(
            path,
            format!("expected {count} values, found {} bytes", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    BandedMatrix::from_band_data(n, kl, ku, data).map_err(|e| malformed(path, e.to_string()))
}

fn read_mm(path: &Path, text: &str) -> Result<BandedMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(malformed(path, "missing Matrix Market banner"));
    }
    if h[2] != "coordinate" || h[3] != "real" || h[4] != "general" {
        return Err(malformed(path, "only 'coordinate real general' matrices are supported"));
    }
    let mut declared = None;
    let mut size = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix(BAND_TAG) {
            let v: Vec<usize> = rest
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(path, "bad spike-band comment"))?;
            if v.len() != 2 {
                return Err(malformed(path, "bad spike-band comment"));
            }
            declared = Some((v[0], v[1]));
            continue;
        }
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if size.is_none() {
            let dims: Vec<usize> = fields
                .iter()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(path, "bad size line"))?;
            if dims.len() != 3 || dims[0] != dims[1] {
                return Err(malformed(path, "size line must be 'n n nnz' for a square matrix"));
            }
            size = Some((dims[0], dims[2]));
            continue;
        }
        if fields.len() != 3 {
            return Err(malformed(path, format!("bad entry line '{line}'")));
        }
        let i: usize = fields[0].parse().map_err(|_| malformed(path, "bad row index"))?;
        let j: usize = fields[1].parse().map_err(|_| malformed(path, "bad column index"))?;
        let v: f64 = fields[2].parse().map_err(|_| malformed(path, "bad value"))?;
        let n = size.unwrap().0;
        if i == 0 || j == 0 || i > n || j > n {
            return Err(malformed(path, format!("index ({i}, {j}) out of range")));
        }
        entries.push((i - 1, j - 1, v));
    }
    let (n, nnz) = size.ok_or_else(|| malformed(path, "missing size line"))?;
    if entries.len() != nnz {
        return Err(malformed(
            path,
            format!("declared {nnz} entries, found {}", entries.len()),
        ));
    }
    let (kl, ku) = declared.unwrap_or_else(|| {
        entries.iter().fold((0, 0), |(kl, ku), &(i, j, _)| {
            (kl.max(i.saturating_sub(j)), ku.max(j.saturating_sub(i)))
        })
    });
    let mut a = BandedMatrix::zeros(n, kl, ku).map_err(|e| malformed(path, e.to_string()))?;
    for (i, j, v) in entries {
        a.set(i, j, v)?;
    }
    Ok(a)
}

/// Writes a dense block in Matrix Market array (column-major) format.
pub fn write_dense(b: &DenseBlock, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", b.rows(), b.cols())?;
    for v in b.data() {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense(path: &Path) -> Result<DenseBlock> {
    let text = fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    if !header.to_ascii_lowercase().starts_with("%%matrixmarket matrix array real") {
        return Err(malformed(path, "missing Matrix Market array banner"));
    }
    let mut lines = lines.filter(|l| !l.starts_with('%'));
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| malformed(path, "missing size line"))?
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed(path, "bad size line"))?;
    if dims.len() != 2 {
        return Err(malformed(path, "size line must be 'rows cols'"));
    }
    let data: Vec<f64> = lines
        .map(|l| l.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed(path, "bad value"))?;
    DenseBlock::from_col_major(dims[0], dims[1], data).map_err(|e| malformed(path, e.to_string()))
}
