//! Truncated lattice operators.
//!
//! Both the Schrödinger operator `H_θ = -Δ - 2 + V(θ + nω)` and the
//! Klein-Gordon operator `T = G_θ + m² = -Δ + m² + V(θ + nω)` are symmetric
//! tridiagonal on the window `{-N, …, N}` with Dirichlet zeros outside.

mod cache;
mod eigen;

pub use cache::{cache_key, load_or_compute, read_decomposition, write_decomposition, CACHE_ENV};
pub use eigen::{
    eigen, eigen_count_below, eigenvalue, eigenvalues, sturm_count, EigenDecomposition,
    REORTHOGONALIZATION_GAP,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::potential::TrigPolynomialPotential;
use crate::{Error, Result};

/// Sites `{-N, …, N}` of a finite window of ℤ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeWindow {
    half_width: usize,
}

impl LatticeWindow {
    pub fn new(half_width: usize) -> Self {
        Self { half_width }
    }

    /// Smallest window whose size `2N + 1` is at least `size`.
    pub fn covering(size: usize) -> Self {
        Self::new(size.saturating_sub(1).div_ceil(2))
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Number of sites `M = 2N + 1`.
    pub fn size(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Array offset of site `n`, if it lies in the window.
    pub fn offset(&self, n: i64) -> Option<usize> {
        let o = n + self.half_width as i64;
        (0..self.size() as i64).contains(&o).then_some(o as usize)
    }

    /// Site of array offset `i`.
    pub fn site(&self, i: usize) -> i64 {
        i as i64 - self.half_width as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        let n = self.half_width as i64;
        -n..=n
    }

    /// Unit vector `δ_n` on the window.
    pub fn delta(&self, n: i64) -> Result<Vec<f64>> {
        let i = self.offset(n).ok_or_else(|| {
            Error::Domain(format!(
                "site {n} is outside the window ±{}",
                self.half_width
            ))
        })?;
        let mut v = vec![0.0; self.size()];
        v[i] = 1.0;
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `H_θ = G_θ - 2`.
    Schrodinger,
    /// `T = G_θ + m²`.
    KleinGordon,
}

impl OperatorKind {
    pub fn tag(&self) -> u8 {
        match self {
            OperatorKind::Schrodinger => b'H',
            OperatorKind::KleinGordon => b'T',
        }
    }
}

/// Symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiMatrix {
    diag: Vec<f64>,
    off: Vec<f64>,
    kind: Option<OperatorKind>,
}

impl JacobiMatrix {
    /// Generic Jacobi matrix; `off.len()` must be `diag.len() - 1`.
    pub fn from_parts(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Dimension {
                expected: 1,
                got: 0,
            });
        }
        if off.len() + 1 != diag.len() {
            return Err(Error::Dimension {
                expected: diag.len() - 1,
                got: off.len(),
            });
        }
        Ok(Self {
            diag,
            off,
            kind: None,
        })
    }

    /// Lattice coupling: off-diagonal `-1`.
    pub fn lattice(diag: Vec<f64>) -> Self {
        let off = vec![-1.0; diag.len().saturating_sub(1)];
        Self {
            diag,
            off,
            kind: None,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn kind(&self) -> Option<OperatorKind> {
        self.kind
    }

    /// `J + s·I`.
    pub fn shifted(&self, s: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|d| d + s).collect(),
            off: self.off.clone(),
            kind: self.kind,
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let m = self.len();
        (0..m)
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < m { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let m = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < m { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// `(Jx)_n = d_n x_n + e_{n-1} x_{n-1} + e_n x_{n+1}`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: x.len(),
            });
        }
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = self.len();
        for i in 0..m {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.len();
        let mut a = Array2::zeros((m, m));
        for i in 0..m {
            a[[i, i]] = self.diag[i];
            if i + 1 < m {
                a[[i, i + 1]] = self.off[i];
                a[[i + 1, i]] = self.off[i];
            }
        }
        a
    }
}

/// Builds `H_θ` or `T = G_θ + m²` on `window`.
///
/// The diagonal is `V(θ + nω)` for `H` and `2 + m² + V(θ + nω)` for `T`.
pub fn build_operator(
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta: &[f64],
    window: LatticeWindow,
    kind: OperatorKind,
    mass: f64,
) -> Result<JacobiMatrix> {
    let d = potential.dimension();
    if omega.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: omega.len(),
        });
    }
    if theta.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: theta.len(),
        });
    }
    let offset = match kind {
        OperatorKind::Schrodinger => 0.0,
        OperatorKind::KleinGordon => {
            if !(mass > 0.0) {
                return Err(Error::Domain(format!(
                    "Klein-Gordon operator needs m > 0 (got {mass}); the massless wave equation is not covered"
                )));
            }
            2.0 + mass * mass
        }
    };
    let diag = window
        .sites()
        .map(|n| offset + potential.at_site(theta, omega, n))
        .collect();
    let mut j = JacobiMatrix::lattice(diag);
    j.kind = Some(kind);
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn window_offsets() {
        let w = LatticeWindow::new(3);
        assert_eq!(w.size(), 7);
        for (i, n) in w.sites().enumerate() {
            assert_eq!(w.offset(n), Some(i));
            assert_eq!(w.site(i), n);
        }
        assert_eq!(w.offset(4), None);
        assert_eq!(w.offset(-4), None);
        assert_eq!(LatticeWindow::covering(1601).half_width(), 800);
        assert_eq!(LatticeWindow::covering(1600).size(), 1601);
    }

    #[test]
    fn build_examples() {
        let zero = TrigPolynomialPotential::zero(1);
        let w = LatticeWindow::new(1);
        let h = build_operator(&zero, &[1.0], &[0.0], w, OperatorKind::Schrodinger, 0.0).unwrap();
        assert_eq!(h.diag(), &[0.0, 0.0, 0.0]);
        assert_eq!(h.off_diag(), &[-1.0, -1.0]);
        let t = build_operator(&zero, &[1.0], &[0.0], w, OperatorKind::KleinGordon, 1.0).unwrap();
        assert_eq!(t.diag(), &[3.0, 3.0, 3.0]);

        let v = TrigPolynomialPotential::cosine(0.05, 0.5).unwrap();
        let omega = PI * (5f64.sqrt() - 1.0);
        let h = build_operator(&v, &[omega], &[0.0], w, OperatorKind::Schrodinger, 0.0).unwrap();
        let expect = [0.1 * (-omega).cos(), 0.1, 0.1 * omega.cos()];
        for (a, b) in h.diag().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn massless_klein_gordon_is_rejected() {
        let zero = TrigPolynomialPotential::zero(1);
        let w = LatticeWindow::new(1);
        for m in [0.0, -1.0] {
            let err = build_operator(&zero, &[1.0], &[0.0], w, OperatorKind::KleinGordon, m);
            assert!(matches!(err, Err(Error::Domain(_))));
        }
    }

    #[test]
    fn apply_examples() {
        let h = JacobiMatrix::lattice(vec![0.0; 5]);
        let y = h.apply(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(y, vec![0.0, -1.0, 0.0, -1.0, 0.0]);
        assert_eq!(h.apply(&[0.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(matches!(
            h.apply(&[0.0; 4]),
            Err(Error::Dimension {
                expected: 5,
                got: 4
            })
        ));
    }

    #[test]
    fn apply_is_symmetric_and_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = rng.random_range(1..40);
            let diag: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let j = JacobiMatrix::lattice(diag);
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jx = j.apply(&x).unwrap();
            let jy = j.apply(&y).unwrap();
            let a: f64 = jx.iter().zip(&y).map(|(p, q)| p * q).sum();
            let b: f64 = x.iter().zip(&jy).map(|(p, q)| p * q).sum();
            assert!((a - b).abs() < 1e-12);
            let dense = j.to_dense().dot(&ndarray::Array1::from(x.clone()));
            for (p, q) in dense.iter().zip(&jx) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }
}
