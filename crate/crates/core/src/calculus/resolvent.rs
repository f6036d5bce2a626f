//! Resolvent columns `(T - z)⁻¹ δ_k` and Combes-Thomas decay probes.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::lattice::{eigenvalue, sturm_count, JacobiMatrix, LatticeWindow};
use crate::numeric::{fit_line, tridiag::TridiagLu};
use crate::{Error, Result};

/// Shifts closer than this to the spectrum are refused.
pub const NEAR_SINGULAR_DISTANCE: f64 = 1e-6;

/// Window of `|G|` used by the exponential fit, relative to `max |G|` on top.
const FIT_FLOOR: f64 = 1e-12;
const FIT_CEILING: f64 = 1e-2;
const REQUIRED_DECADES: f64 = 8.0;

/// `dist(z, spec T)` from a Sturm count at `Re z` and the two neighbouring eigenvalues.
pub fn spectral_distance(t: &JacobiMatrix, z: Complex64) -> f64 {
    let x = z.re;
    let c = sturm_count(t, x);
    let mut d = f64::INFINITY;
    if c > 0 {
        d = d.min((x - eigenvalue(t, c - 1)).abs());
    }
    if c < t.len() {
        d = d.min((eigenvalue(t, c) - x).abs());
    }
    d.hypot(z.im)
}

/// LU factorization of `T - z`, reused across source sites.
#[derive(Debug, Clone)]
pub struct ResolventSolver {
    lu: TridiagLu<Complex64>,
    t: JacobiMatrix,
    z: Complex64,
    delta: f64,
}

/// `G(n, k) = ⟨δ_n, (T - z)⁻¹ δ_k⟩` for all `n` of the window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventColumn {
    /// Array offset of the source site.
    pub source: usize,
    pub z: Complex64,
    pub values: Vec<Complex64>,
    pub delta: f64,
}

impl ResolventSolver {
    pub fn new(t: &JacobiMatrix, z: Complex64) -> Result<Self> {
        let delta = spectral_distance(t, z);
        if delta < NEAR_SINGULAR_DISTANCE {
            return Err(Error::NearSingular { distance: delta });
        }
        let diag: Vec<Complex64> = t
            .diag()
            .iter()
            .map(|d| Complex64::new(*d, 0.0) - z)
            .collect();
        let off: Vec<Complex64> = t
            .off_diag()
            .iter()
            .map(|e| Complex64::new(*e, 0.0))
            .collect();
        let lu = TridiagLu::factor(&off, &diag, &off);
        if lu.min_pivot() == 0.0 {
            return Err(Error::NearSingular { distance: delta });
        }
        Ok(Self {
            lu,
            t: t.clone(),
            z,
            delta,
        })
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        if rhs.len() != self.t.len() {
            return Err(Error::Dimension {
                expected: self.t.len(),
                got: rhs.len(),
            });
        }
        let mut x = rhs.to_vec();
        self.lu.solve_in_place(&mut x);
        Ok(x)
    }

    pub fn column(&self, source: usize) -> Result<ResolventColumn> {
        let m = self.t.len();
        if source >= m {
            return Err(Error::Domain(format!(
                "source offset {source} outside window of size {m}"
            )));
        }
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[source] = Complex64::new(1.0, 0.0);
        Ok(ResolventColumn {
            source,
            z: self.z,
            values: self.solve(&e)?,
            delta: self.delta,
        })
    }

    /// Power-iteration estimate of `‖(T - z)⁻¹‖₂` (a lower bound up to rounding).
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let m = self.t.len();
        let mut x: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(1.0 + 0.5 * ((i as f64) * 0.618_034).sin(), 0.0))
            .collect();
        let norm = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let n0 = norm(&x);
        x.iter_mut().for_each(|c| *c /= n0);
        let mut best = 0.0f64;
        for _ in 0..iterations {
            // y = R x, then x = R* y with R* x = conj(R conj x) since T is real symmetric
            let mut y = x.clone();
            self.lu.solve_in_place(&mut y);
            best = best.max(norm(&y));
            let mut w: Vec<Complex64> = y.iter().map(|c| c.conj()).collect();
            self.lu.solve_in_place(&mut w);
            let w: Vec<Complex64> = w.iter().map(|c| c.conj()).collect();
            let nw = norm(&w);
            if nw == 0.0 {
                break;
            }
            x = w.into_iter().map(|c| c / nw).collect();
        }
        best
    }
}

impl ResolventColumn {
    /// `‖(T - z) g - δ_k‖_∞`.
    pub fn residual(&self, t: &JacobiMatrix) -> f64 {
        let m = t.len();
        let g = &self.values;
        let (d, e) = (t.diag(), t.off_diag());
        (0..m)
            .map(|i| {
                let mut acc = (Complex64::new(d[i], 0.0) - self.z) * g[i];
                if i > 0 {
                    acc += e[i - 1] * g[i - 1];
                }
                if i + 1 < m {
                    acc += e[i] * g[i + 1];
                }
                if i == self.source {
                    acc -= 1.0;
                }
                acc.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// `(T - z)⁻¹ δ_k` for a source offset `k`.
pub fn resolvent_column(t: &JacobiMatrix, z: Complex64, k: usize) -> Result<ResolventColumn> {
    ResolventSolver::new(t, z)?.column(k)
}

/// Exponential fit `|G(n, k)| ≈ P e^{-rate·|n-k|}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombesThomasFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub delta: f64,
    /// Decades spanned by `|G|` across the window.
    pub decades: f64,
    pub points_used: usize,
    pub column: ResolventColumn,
}

impl CombesThomasFit {
    /// Rows `n, abs_n_minus_k, log10_abs_G` over the whole window.
    pub fn write_csv(&self, mut w: impl Write, window: LatticeWindow) -> std::io::Result<()> {
        writeln!(w, "n,abs_n_minus_k,log10_abs_G")?;
        let k = self.column.source as i64;
        for (i, g) in self.column.values.iter().enumerate() {
            writeln!(
                w,
                "{},{},{:e}",
                window.site(i),
                (i as i64 - k).abs(),
                g.norm().log10()
            )?;
        }
        Ok(())
    }
}

/// Least-squares decay rate of the resolvent column at source offset `k`.
pub fn combes_thomas_fit(t: &JacobiMatrix, z: Complex64, k: usize) -> Result<CombesThomasFit> {
    let column = resolvent_column(t, z, k)?;
    let abs: Vec<f64> = column.values.iter().map(|g| g.norm()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs
        .iter()
        .cloned()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let decades = (max / min).log10();
    if !(decades >= REQUIRED_DECADES) {
        return Err(Error::WidenWindow { decades });
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, &g) in abs.iter().enumerate() {
        if g >= FIT_FLOOR && g <= FIT_CEILING * max {
            x.push((i as f64 - k as f64).abs());
            y.push(g.ln());
        }
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            got: x.len(),
            need: 3,
        });
    }
    let fit = fit_line(&x, &y);
    Ok(CombesThomasFit {
        rate: -fit.slope,
        prefactor: fit.intercept.exp(),
        r2: fit.r2,
        delta: column.delta,
        decades,
        points_used: x.len(),
        column,
    })
}

/// `c = min rate / (δ/(1+δ))` over a sweep of shifts (on the free operator).
pub fn calibrate_combes_thomas(t: &JacobiMatrix, shifts: &[Complex64], k: usize) -> Result<f64> {
    let mut c = f64::INFINITY;
    for &z in shifts {
        let f = combes_thomas_fit(t, z, k)?;
        c = c.min(f.rate / (f.delta / (1.0 + f.delta)));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_operator, eigen, LatticeWindow, OperatorKind};
    use crate::potential::TrigPolynomialPotential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn free_t(half: usize) -> JacobiMatrix {
        let zero = TrigPolynomialPotential::zero(1);
        build_operator(
            &zero,
            &[1.0],
            &[0.0],
            LatticeWindow::new(half),
            OperatorKind::KleinGordon,
            1.0,
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn three_site_closed_form() {
        // T - z = [[4,-1,0],[-1,4,-1],[0,-1,4]] at z = -1; det = 56
        let t = free_t(1);
        let inv = [[15.0, 4.0, 1.0], [4.0, 16.0, 4.0], [1.0, 4.0, 15.0]];
        for k in 0..3 {
            let col = resolvent_column(&t, Complex64::new(-1.0, 0.0), k).unwrap();
            for n in 0..3 {
                assert!((col.values[n] - Complex64::new(inv[n][k] / 56.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn positive_diagonal_below_spectrum() {
        let v = TrigPolynomialPotential::cosine(0.1, 0.5).unwrap();
        let t = build_operator(
            &v,
            &[PI * (5f64.sqrt() - 1.0)],
            &[0.4],
            LatticeWindow::new(20),
            OperatorKind::KleinGordon,
            1.0,
        )
        .unwrap();
        let solver = ResolventSolver::new(&t, Complex64::new(0.2, 0.0)).unwrap();
        for k in 0..t.len() {
            let g = solver.column(k).unwrap();
            assert!(g.values[k].re > 0.0);
            assert!(g.residual(&t) <= 1e-10 * (1.0 + 0.2));
        }
    }

    #[test]
    fn symmetry_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let m = rng.random_range(3..40);
            let diag: Vec<f64> = (0..m).map(|_| rng.random_range(2.5..3.5)).collect();
            let t = JacobiMatrix::lattice(diag);
            let z = Complex64::new(rng.random_range(-2.0..6.0), rng.random_range(0.1..1.0));
            let s = ResolventSolver::new(&t, z).unwrap();
            let (n, k) = (rng.random_range(0..m), rng.random_range(0..m));
            let a = s.column(k).unwrap().values[n];
            let b = s.column(n).unwrap().values[k];
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn near_singular_shift_is_refused() {
        let t = free_t(5);
        let mu = eigen(&t, false).values()[3];
        let err = ResolventSolver::new(&t, Complex64::new(mu + 1e-9, 0.0));
        assert!(matches!(err, Err(Error::NearSingular { .. })));
    }

    #[test]
    fn free_rate_matches_closed_form() {
        let t = free_t(100);
        let fit = combes_thomas_fit(&t, Complex64::new(-1.0, 0.0), 100).unwrap();
        assert!((fit.rate - 2f64.acosh()).abs() < 1e-3, "{}", fit.rate);
        assert!(fit.r2 > 0.999_999);
        let far = combes_thomas_fit(&t, Complex64::new(-3.0, 0.0), 100).unwrap();
        assert!(far.rate > fit.rate);
    }

    #[test]
    fn narrow_window_asks_to_widen() {
        let t = free_t(5);
        assert!(matches!(
            combes_thomas_fit(&t, Complex64::new(-1.0, 0.0), 5),
            Err(Error::WidenWindow { .. })
        ));
    }

    #[test]
    fn resolvent_norm_is_inverse_distance() {
        let t = free_t(30);
        for z in [
            Complex64::new(-1.0, 0.0),
            Complex64::new(3.0, 0.5),
            Complex64::new(0.5, 0.0),
        ] {
            let s = ResolventSolver::new(&t, z).unwrap();
            let est = s.norm_estimate(200);
            assert!(est <= 1.0 / s.delta() + 1e-8);
            assert!(est >= 0.5 / s.delta());
        }
    }
}
