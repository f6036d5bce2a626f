//! Flat-file cache of eigendecompositions.
//!
//! Layout: `b"LKG1"`, version `u32`, size `M` as `u64`, then `M` eigenvalues and
//! the `M × M` eigenvector matrix in column-major order, all little-endian.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ShapeBuilder};
use sha2::{Digest, Sha256};

use super::{eigen, EigenDecomposition, JacobiMatrix, LatticeWindow, OperatorKind};
use crate::potential::TrigPolynomialPotential;
use crate::{Error, Result};

/// Directory holding cached decompositions; unset disables the cache.
pub const CACHE_ENV: &str = "LKG_CACHE_DIR";

const MAGIC: &[u8; 4] = b"LKG1";
const VERSION: u32 = 1;

/// Hex SHA-256 of the operator's defining data.
pub fn cache_key(
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta: &[f64],
    window: LatticeWindow,
    kind: OperatorKind,
    mass: f64,
) -> String {
    let mut h = Sha256::new();
    h.update((potential.dimension() as u64).to_le_bytes());
    for (k, v) in potential.coefficients() {
        for ki in k {
            h.update(ki.to_le_bytes());
        }
        h.update(v.re.to_le_bytes());
        h.update(v.im.to_le_bytes());
    }
    for w in omega {
        h.update(w.to_le_bytes());
    }
    for t in theta {
        h.update(t.to_le_bytes());
    }
    h.update((window.half_width() as u64).to_le_bytes());
    h.update([kind.tag()]);
    let m = match kind {
        OperatorKind::Schrodinger => 0.0,
        OperatorKind::KleinGordon => mass,
    };
    h.update(m.to_le_bytes());
    hex::encode(h.finalize())
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::CacheFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_decomposition(path: &Path, decomposition: &EigenDecomposition) -> Result<()> {
    let q = decomposition
        .vectors()
        .ok_or_else(|| format_error(path, "decomposition has no eigenvectors"))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(decomposition.len() as u64).to_le_bytes())?;
    for v in decomposition.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    // column-major
    for col in q.columns() {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_decomposition(path: &Path) -> Result<EigenDecomposition> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_error(path, "bad magic"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(format_error(path, format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let m = usize::try_from(u64::from_le_bytes(b8))
        .map_err(|_| format_error(path, "size does not fit in memory"))?;
    let expected = 16 + 8 * (m as u64) * (m as u64 + 1);
    let actual = fs::metadata(path)?.len();
    if actual != expected {
        return Err(format_error(
            path,
            format!("expected {expected} bytes for M = {m}, found {actual}"),
        ));
    }
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            out.push(f64::from_le_bytes(b8));
        }
        Ok(out)
    };
    let values = read_f64s(m)?;
    let data = read_f64s(m * m)?;
    let q =
        Array2::from_shape_vec((m, m).f(), data).map_err(|e| format_error(path, e.to_string()))?;
    Ok(EigenDecomposition::from_parts(values, Some(q)))
}

fn cache_path(key: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    if dir.is_empty() {
        return None;
    }
    Some(PathBuf::from(dir).join(format!("{key}.lkg")))
}

/// Full decomposition of `j`, served from `$LKG_CACHE_DIR/<key>.lkg` when present.
pub fn load_or_compute(key: &str, j: &JacobiMatrix) -> Result<EigenDecomposition> {
    let Some(path) = cache_path(key) else {
        return Ok(eigen(j, true));
    };
    if path.exists() {
        let d = read_decomposition(&path)?;
        if d.len() != j.len() {
            return Err(format_error(
                &path,
                format!(
                    "cached size {} does not match operator size {}",
                    d.len(),
                    j.len()
                ),
            ));
        }
        return Ok(d);
    }
    let d = eigen(j, true);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    write_decomposition(&tmp, &d)?;
    fs::rename(&tmp, &path)?;
    Ok(d)
}
