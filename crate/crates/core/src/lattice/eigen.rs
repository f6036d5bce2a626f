//! Sturm-sequence bisection and inverse iteration for symmetric tridiagonal matrices.

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::JacobiMatrix;
use crate::numeric::tridiag::TridiagLu;

/// Absolute bisection tolerance, relative to `max(1, ‖J‖_∞)`.
const BISECTION_TOL: f64 = 1e-12;

/// Eigenvalues closer than this (relative to `max(1, ‖J‖_∞)`) have their
/// eigenvectors re-orthogonalized against each other.
pub const REORTHOGONALIZATION_GAP: f64 = 1e-5;

/// Residual at which inverse iteration stops, relative to the scale.
const RESIDUAL_TARGET: f64 = 1e-11;
const MAX_INVERSE_ITERATIONS: usize = 8;

fn scale_of(j: &JacobiMatrix) -> f64 {
    j.norm_inf().max(1.0)
}

fn pivmin(j: &JacobiMatrix) -> f64 {
    let emax = j.off_diag().iter().fold(0.0f64, |m, e| m.max(e * e));
    f64::MIN_POSITIVE * emax.max(1.0)
}

/// Number of eigenvalues strictly below `x` (one pass of the LDLᵀ pivots).
pub fn sturm_count(j: &JacobiMatrix, x: f64) -> usize {
    sturm_count_with(j.diag(), j.off_diag(), x, pivmin(j))
}

fn sturm_count_with(diag: &[f64], off: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    for i in 0..diag.len() {
        if i > 0 {
            q = (diag[i] - x) - off[i - 1] * off[i - 1] / q;
        }
        // an exactly zero pivot behaves as if x were slightly smaller, so
        // eigenvalues equal to x are not counted
        if q.abs() < pivmin {
            q = if q < 0.0 { -pivmin } else { pivmin };
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Number of eigenvalues of `j` strictly below `e`.
pub fn eigen_count_below(j: &JacobiMatrix, e: f64) -> usize {
    sturm_count(j, e)
}

fn bracket(j: &JacobiMatrix, tol: f64) -> (f64, f64) {
    let (lo, hi) = j.gershgorin();
    let pad = tol + 2.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
    (lo - pad, hi + pad)
}

/// All eigenvalues in ascending order, each to absolute accuracy `10⁻¹²·max(1, ‖J‖_∞)`.
pub fn eigenvalues(j: &JacobiMatrix) -> Vec<f64> {
    let m = j.len();
    let tol = BISECTION_TOL * scale_of(j);
    let pm = pivmin(j);
    let (lo, hi) = bracket(j, tol);
    let mut out = vec![0.0; m];
    let mut stack = vec![(lo, hi, 0usize, m)];
    while let Some((a, b, na, nb)) = stack.pop() {
        if na == nb {
            continue;
        }
        let mid = 0.5 * (a + b);
        if b - a <= tol || mid <= a || mid >= b {
            out[na..nb].iter_mut().for_each(|v| *v = mid);
            continue;
        }
        let nm = sturm_count_with(j.diag(), j.off_diag(), mid, pm).clamp(na, nb);
        stack.push((mid, b, nm, nb));
        stack.push((a, mid, na, nm));
    }
    out
}

/// The `k`-th smallest eigenvalue (0-based).
pub fn eigenvalue(j: &JacobiMatrix, k: usize) -> f64 {
    assert!(k < j.len(), "eigenvalue index {k} out of range");
    let tol = BISECTION_TOL * scale_of(j);
    let pm = pivmin(j);
    let (mut a, mut b) = bracket(j, tol);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if sturm_count_with(j.diag(), j.off_diag(), mid, pm) > k {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Ascending eigenvalues and (optionally) orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`; column-major storage.
    vectors: Option<Array2<f64>>,
}

impl EigenDecomposition {
    pub fn from_parts(values: Vec<f64>, vectors: Option<Array2<f64>>) -> Self {
        if let Some(q) = &vectors {
            assert_eq!(q.nrows(), values.len());
            assert_eq!(q.ncols(), values.len());
        }
        Self { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> Option<&Array2<f64>> {
        self.vectors.as_ref()
    }

    pub fn vector(&self, j: usize) -> Option<ArrayView1<'_, f64>> {
        self.vectors.as_ref().map(|q| q.column(j))
    }

    pub fn lowest(&self) -> f64 {
        self.values[0]
    }

    pub fn highest(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Strict count of eigenvalues below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        self.values.partition_point(|&v| v < e)
    }

    /// `max_j ‖J q_j − μ_j q_j‖₂ / (1 + |μ_j|)`.
    pub fn max_relative_residual(&self, j: &JacobiMatrix) -> Option<f64> {
        let q = self.vectors.as_ref()?;
        let mut worst = 0.0f64;
        let mut jq = vec![0.0; self.len()];
        for (c, &mu) in self.values.iter().enumerate() {
            let col = q.column(c);
            let col = col
                .as_slice_memory_order()
                .map(|s| s.to_vec())
                .unwrap_or_else(|| col.to_vec());
            j.apply_into(&col, &mut jq);
            let r: f64 = jq
                .iter()
                .zip(&col)
                .map(|(a, b)| (a - mu * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / (1.0 + mu.abs()));
        }
        Some(worst)
    }

    /// `‖QᵀQ − I‖_max`.
    pub fn orthogonality_error(&self) -> Option<f64> {
        let q = self.vectors.as_ref()?;
        let g = q.t().dot(q);
        let mut worst = 0.0f64;
        for ((r, c), v) in g.indexed_iter() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        Some(worst)
    }
}

/// Eigen-decomposition of `j` by bisection, with eigenvectors by inverse iteration.
pub fn eigen(j: &JacobiMatrix, want_vectors: bool) -> EigenDecomposition {
    let values = eigenvalues(j);
    if !want_vectors {
        return EigenDecomposition {
            values,
            vectors: None,
        };
    }
    let vectors = inverse_iteration(j, &values);
    EigenDecomposition {
        values,
        vectors: Some(vectors),
    }
}

/// Index ranges of eigenvalues chained by gaps below the re-orthogonalization threshold.
fn clusters(values: &[f64], gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= gap {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn inverse_iteration(j: &JacobiMatrix, values: &[f64]) -> Array2<f64> {
    let m = j.len();
    let scale = scale_of(j);
    let gap = REORTHOGONALIZATION_GAP * scale;
    let groups = clusters(values, gap);

    let mut q = Array2::<f64>::zeros((m, m).f());
    let data = q
        .as_slice_memory_order_mut()
        .expect("fresh array is contiguous");
    let mut chunks = Vec::with_capacity(groups.len());
    let mut rest = data;
    for g in &groups {
        let (head, tail) = rest.split_at_mut(g.len() * m);
        chunks.push(head);
        rest = tail;
    }

    groups
        .iter()
        .zip(chunks)
        .for_each(|(g, out)| cluster_vectors(j, values, g.clone(), gap, scale, out));
    q
}

fn cluster_vectors(
    j: &JacobiMatrix,
    values: &[f64],
    group: std::ops::Range<usize>,
    gap: f64,
    scale: f64,
    out: &mut [f64],
) {
    let m = j.len();
    let pertol = 10.0 * f64::EPSILON * scale;
    let tiny_pivot = f64::EPSILON * scale;
    let target = RESIDUAL_TARGET * scale;
    let sub = j.off_diag().to_vec();

    let mut prev_shift = f64::NEG_INFINITY;
    let mut x = vec![0.0; m];
    let mut jx = vec![0.0; m];
    for (local, idx) in group.clone().enumerate() {
        let mu = values[idx];
        let mut shift = mu;
        if shift - prev_shift < pertol {
            shift = prev_shift + pertol;
        }
        prev_shift = shift;

        let diag: Vec<f64> = j.diag().iter().map(|d| d - shift).collect();
        let mut lu = TridiagLu::factor(&sub, &diag, &sub);
        lu.perturb_small_pivots(tiny_pivot);

        let mut rng = ChaCha8Rng::seed_from_u64(idx as u64);
        x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        normalize(&mut x);

        let (done, current) = out.split_at_mut(local * m);
        let current = &mut current[..m];
        for it in 0..MAX_INVERSE_ITERATIONS {
            lu.solve_in_place(&mut x);
            normalize(&mut x);
            for (k, prev) in done.chunks_exact(m).enumerate() {
                if mu - values[group.start + k] < gap {
                    let dot: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum();
                    x.iter_mut().zip(prev).for_each(|(v, p)| *v -= dot * p);
                }
            }
            normalize(&mut x);
            if it >= 1 {
                j.apply_into(&x, &mut jx);
                let r: f64 = jx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - mu * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if r <= target {
                    break;
                }
            }
        }
        // fix the sign so the largest component is positive
        let (imax, _) = x.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        });
        if x[imax] < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        current.copy_from_slice(&x);
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_operator, LatticeWindow, OperatorKind};
    use crate::potential::TrigPolynomialPotential;
    use std::f64::consts::PI;

    /// Cyclic Jacobi rotations on a dense symmetric matrix; independent of the
    /// tridiagonal machinery.
    fn jacobi_oracle(mut a: Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[[i, j]].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[[p, q]];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v
    }

    fn free(m: usize) -> JacobiMatrix {
        JacobiMatrix::lattice(vec![0.0; m])
    }

    fn amo(lambda: f64, half: usize, theta: f64) -> JacobiMatrix {
        let v = TrigPolynomialPotential::cosine(lambda, 0.5).unwrap();
        let omega = PI * (5f64.sqrt() - 1.0);
        build_operator(
            &v,
            &[omega],
            &[theta],
            LatticeWindow::new(half),
            OperatorKind::Schrodinger,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn free_small_cases() {
        let v = eigenvalues(&free(3));
        let expect = [-(2f64.sqrt()), 0.0, 2f64.sqrt()];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let v = eigenvalues(&free(2));
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        let v = eigenvalues(&free(1));
        assert!(v[0].abs() < 1e-12);
    }

    #[test]
    fn free_dirichlet_formula() {
        let m = 50;
        let v = eigenvalues(&free(m));
        for (j, mu) in v.iter().enumerate() {
            let exact = -2.0 * ((j + 1) as f64 * PI / (m + 1) as f64).cos();
            assert!((mu - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn counts() {
        let h = free(3);
        assert_eq!(eigen_count_below(&h, 0.0), 1);
        assert_eq!(eigen_count_below(&h, -2.0 - 1e-9), 0);
        assert_eq!(eigen_count_below(&h, 3.0), 3);
        let h = amo(0.3, 20, 0.4);
        let dmin = h.diag().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(eigen_count_below(&h, dmin - 2.0), 0);
    }

    #[test]
    fn amo_matches_dense_oracle() {
        // M = 64 requires an even window; use a generic Jacobi matrix of the AMO diagonal
        let omega = PI * (5f64.sqrt() - 1.0);
        let diag: Vec<f64> = (0..64).map(|n| 0.1 * (n as f64 * omega).cos()).collect();
        let j = JacobiMatrix::lattice(diag);
        let oracle = jacobi_oracle(j.to_dense());
        let ours = eigenvalues(&j);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn decomposition_invariants() {
        for j in [
            free(1),
            free(2),
            free(41),
            amo(0.05, 60, 0.3),
            amo(0.3, 80, 1.1),
            amo(1.5, 50, 0.0),
        ] {
            let d = eigen(&j, true);
            assert!(d.max_relative_residual(&j).unwrap() <= 1e-10);
            assert!(
                d.orthogonality_error().unwrap() <= 1e-10,
                "{}",
                d.orthogonality_error().unwrap()
            );
        }
    }

    #[test]
    fn exact_degeneracy_gets_orthonormal_vectors() {
        // block diagonal: two identical decoupled blocks
        let diag = vec![0.3, -0.2, 0.5, 0.3, -0.2, 0.5];
        let off = vec![-1.0, -1.0, 0.0, -1.0, -1.0];
        let j = JacobiMatrix::from_parts(diag, off).unwrap();
        let d = eigen(&j, true);
        assert!(d.orthogonality_error().unwrap() < 1e-12);
        assert!(d.max_relative_residual(&j).unwrap() < 1e-10);
    }

    #[test]
    fn count_matches_full_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = rng.random_range(1..60);
            let diag: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let j = JacobiMatrix::lattice(diag);
            let vals = eigenvalues(&j);
            for _ in 0..10 {
                let e = rng.random_range(-3.5..3.5);
                let d = EigenDecomposition::from_parts(vals.clone(), None);
                assert_eq!(eigen_count_below(&j, e), d.count_below(e));
            }
        }
    }

    #[test]
    fn gershgorin_trace_and_interlacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let m = rng.random_range(2..50);
            let diag: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
            let j = JacobiMatrix::lattice(diag.clone());
            let vals = eigenvalues(&j);
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let dmax = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(vals
                .iter()
                .all(|v| *v >= dmin - 2.0 - 1e-12 && *v <= dmax + 2.0 + 1e-12));
            let tr: f64 = diag.iter().sum();
            let s: f64 = vals.iter().sum();
            assert!((s - tr).abs() <= 1e-12 * tr.abs().max(1.0) * m as f64);
            // grow by one site
            let mut bigger = diag.clone();
            bigger.push(rng.random_range(-1.5..1.5));
            let big = eigenvalues(&JacobiMatrix::lattice(bigger));
            for k in 0..m {
                assert!(big[k] <= vals[k] + 1e-11);
                assert!(vals[k] <= big[k + 1] + 1e-11);
            }
        }
    }

    #[test]
    fn single_eigenvalue_agrees() {
        let j = amo(0.3, 30, 0.2);
        let all = eigenvalues(&j);
        for k in [0, 5, 30, 60] {
            assert!((eigenvalue(&j, k) - all[k]).abs() < 1e-11);
        }
    }
}
