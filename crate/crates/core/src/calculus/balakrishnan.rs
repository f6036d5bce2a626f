//! `T^{-1/2} = (2/π) ∫₀^∞ (T + s²)⁻¹ ds` by Gauss-Legendre quadrature.
//!
//! The head `[0, s_max]` uses one Gauss-Legendre rule. The tail is mapped to
//! `[0, 1]` by `s = s_max / x`, which turns it into `s_max ∫₀¹ (s_max² + x² T)⁻¹ dx`,
//! a smooth integrand. Both pieces are sums of `w_i (T + s_i²)⁻¹`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::lattice::{eigenvalue, JacobiMatrix};
use crate::numeric::tridiag::TridiagLu;
use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Largest window for the dense inverse square root.
pub const MAX_DENSE_SIZE: usize = 512;

#[derive(Debug, Clone, Serialize)]
pub struct BalakrishnanReport {
    #[serde(skip)]
    pub matrix: Array2<f64>,
    pub nodes: usize,
    pub tail_nodes: usize,
    pub s_max: f64,
    /// `∫_{s_max}^∞ ‖(T + s²)⁻¹‖ ds ≤ 1/s_max`.
    pub tail_bound: f64,
}

fn dense_inverse(t: &JacobiMatrix, shift: f64) -> Array2<f64> {
    let m = t.len();
    let diag: Vec<f64> = t.diag().iter().map(|d| d + shift).collect();
    let lu = TridiagLu::factor(t.off_diag(), &diag, t.off_diag());
    let mut out = Array2::zeros((m, m));
    let mut col = vec![0.0; m];
    for k in 0..m {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[k] = 1.0;
        lu.solve_in_place(&mut col);
        for (i, v) in col.iter().enumerate() {
            out[[i, k]] = *v;
        }
    }
    out
}

/// Dense approximation of `T^{-1/2}` with `n_nodes` resolvent evaluations.
pub fn balakrishnan_inv_sqrt(t: &JacobiMatrix, n_nodes: usize) -> Result<BalakrishnanReport> {
    if n_nodes < 8 {
        return Err(Error::Domain(format!(
            "need at least 8 quadrature nodes, got {n_nodes}"
        )));
    }
    let m = t.len();
    if m > MAX_DENSE_SIZE {
        return Err(Error::Domain(format!(
            "dense inverse square root is limited to M ≤ {MAX_DENSE_SIZE}, got {m}"
        )));
    }
    let lowest = eigenvalue(t, 0);
    if !(lowest > 0.0) {
        return Err(Error::Positivity {
            min_eigenvalue: lowest,
        });
    }
    let s_max = 40.0 * eigenvalue(t, m - 1).sqrt();
    let tail_nodes = (n_nodes / 8).max(4);
    let head_nodes = n_nodes - tail_nodes;

    let mut nodes: Vec<(f64, f64)> = GaussRule::new(head_nodes).mapped(0.0, s_max).collect();
    nodes.extend(
        GaussRule::new(tail_nodes)
            .mapped(0.0, 1.0)
            .map(|(x, w)| (s_max / x, w * s_max / (x * x))),
    );

    let mut acc = Array2::<f64>::zeros((m, m));
    let batch = rayon::current_num_threads().max(1);
    for chunk in nodes.chunks(batch) {
        let parts: Vec<Array2<f64>> = chunk
            .par_iter()
            .map(|&(s, w)| dense_inverse(t, s * s) * w)
            .collect();
        for p in parts {
            acc += &p;
        }
    }
    acc *= 2.0 / std::f64::consts::PI;
    Ok(BalakrishnanReport {
        matrix: acc,
        nodes: n_nodes,
        tail_nodes,
        s_max,
        tail_bound: 1.0 / s_max,
    })
}

/// `B₁ = max_n Σ_k |K(n, k)|`.
pub fn inv_sqrt_row_bound(k: &Array2<f64>) -> Result<f64> {
    if k.nrows() != k.ncols() {
        return Err(Error::Dimension {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    Ok(k.rows()
        .into_iter()
        .map(|row| row.iter().fold(0.0, |s, v| s + v.abs()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::spectral_matrix;
    use crate::lattice::{build_operator, eigen, LatticeWindow, OperatorKind};
    use crate::potential::TrigPolynomialPotential;

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn scalar_case() {
        let t = JacobiMatrix::from_parts(vec![4.0; 5], vec![0.0; 4]).unwrap();
        let r = balakrishnan_inv_sqrt(&t, 64).unwrap();
        for ((i, j), v) in r.matrix.indexed_iter() {
            let target = if i == j { 0.5 } else { 0.0 };
            assert!((v - target).abs() < 1e-10);
        }
        let half = Array2::<f64>::eye(3) * 0.5;
        assert_eq!(inv_sqrt_row_bound(&half).unwrap(), 0.5);
    }

    #[test]
    fn converges_to_spectral_oracle() {
        let zero = TrigPolynomialPotential::zero(1);
        let t = build_operator(
            &zero,
            &[1.0],
            &[0.0],
            LatticeWindow::new(50),
            OperatorKind::KleinGordon,
            1.0,
        )
        .unwrap();
        let oracle = spectral_matrix(&eigen(&t, true), |mu| mu.powf(-0.5)).unwrap();
        let mut prev = f64::INFINITY;
        let mut errs = Vec::new();
        for n in [8, 16, 32, 64, 128] {
            let e = max_abs_diff(&balakrishnan_inv_sqrt(&t, n).unwrap().matrix, &oracle);
            assert!(e < prev, "n = {n}: {e} ≥ {prev}");
            prev = e;
            errs.push(e);
        }
        assert!(errs[4] <= 1e-8);
        assert!(errs[3] >= 10.0 * errs[4]);
    }

    #[test]
    fn guards() {
        let h = JacobiMatrix::lattice(vec![0.0; 5]);
        assert!(matches!(
            balakrishnan_inv_sqrt(&h, 16),
            Err(Error::Positivity { .. })
        ));
        let t = JacobiMatrix::lattice(vec![3.0; 5]);
        assert!(balakrishnan_inv_sqrt(&t, 4).is_err());
        let big = JacobiMatrix::lattice(vec![3.0; MAX_DENSE_SIZE + 1]);
        assert!(balakrishnan_inv_sqrt(&big, 16).is_err());
    }
}
