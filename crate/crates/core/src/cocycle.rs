//! The Schrödinger cocycle `(ω, A(E, θ))` with `A = [[V(θ) - E, -1], [1, 0]]`.
//!
//! The projective action of `A` on directions `(cos φ, sin φ)` is lifted to ℝ
//! with the convention that the lift is π-periodic: writing `φ = jπ + φ₀` with
//! `φ₀ ∈ [0, π)`, the image angle of `(cos φ₀, sin φ₀)` is taken in `[0, 2π)`,
//! where it is continuous in `φ₀` (the second image component `cos φ₀` only
//! vanishes where the first is `-1`). The average lift increment is the fibered
//! rotation number, which is `0` below the spectrum and `π` above it.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::lattice::{build_operator, eigen_count_below, LatticeWindow, OperatorKind};
use crate::numeric::{dot_extended, reduce_mod_pi};
use crate::potential::{lattice_box, TrigPolynomialPotential};
use crate::{Error, Result};

/// Residual above which a gap label is flagged as unreliable.
pub const LABEL_WARNING_RESIDUAL: f64 = 1e-2;

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TransferMatrix {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// Schrödinger step `[[x, -1], [1, 0]]`.
    pub fn schrodinger(x: f64) -> Self {
        Self::new(x, -1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Rescaled to determinant one (requires `det > 0`).
    pub fn unimodular(&self) -> Self {
        let s = self.det().sqrt().recip();
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

/// One cocycle step `A₀(E) + F₀(θ)`.
pub fn transfer(e: f64, potential: &TrigPolynomialPotential, theta: &[f64]) -> TransferMatrix {
    TransferMatrix::schrodinger(potential.evaluate(theta) - e)
}

/// Ordered product `A(θ + (n-1)ω) ⋯ A(θ)`, rescaled to unit determinant after
/// every factor.
///
/// Fails with a domain error when the entries overflow, which happens for
/// hyperbolic energies after roughly `700 / L` steps.
pub fn transfer_product(
    e: f64,
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta: &[f64],
    n: usize,
) -> Result<TransferMatrix> {
    let mut p = TransferMatrix::IDENTITY;
    for step in 0..n {
        let a = TransferMatrix::schrodinger(potential.at_site(theta, omega, step as i64) - e);
        p = a.mul(&p).unimodular();
        if !p.norm().is_finite() {
            return Err(Error::Domain(format!(
                "transfer product overflowed after {step} steps at E = {e}"
            )));
        }
    }
    Ok(p)
}

/// Rotation number with its a-posteriori error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationEstimate {
    /// `ρ ∈ [0, π]`.
    pub rho: f64,
    /// `|ρ_n - ρ_{n/2}| + π/n`.
    pub err: f64,
    /// Lyapunov exponent from the same orbit.
    pub lyapunov: f64,
    pub n_iter: usize,
}

/// Lifted projective orbit under steps `[[x_n, -1], [1, 0]]`, `x_n = step(n)`.
///
/// Returns the rotation estimate; the Lyapunov exponent is the mean of
/// `ln |A_n u_n|` over unit directions `u_n`.
pub fn projective_orbit(n_iter: usize, mut step: impl FnMut(usize) -> f64) -> RotationEstimate {
    assert!(n_iter >= 2, "projective orbit needs at least two steps");
    let half = n_iter / 2;
    // φ = turns·π + phi0, phi0 ∈ [0, π)
    let mut turns: i64 = 0;
    let mut phi0 = 0.0f64;
    let mut log_growth = 0.0;
    let mut lift_half = 0.0;
    for n in 0..n_iter {
        let x = step(n);
        let (s, c) = phi0.sin_cos();
        let y1 = x * c - s;
        let y2 = c;
        log_growth += y1.hypot(y2).ln();
        let mut f = y2.atan2(y1);
        if f < 0.0 {
            f += 2.0 * PI;
        }
        // f ∈ [0, 2π): split into whole half-turns and remainder
        if f >= PI {
            turns += 1;
            phi0 = f - PI;
        } else {
            phi0 = f;
        }
        if phi0 >= PI {
            turns += 1;
            phi0 -= PI;
        }
        if n + 1 == half {
            lift_half = turns as f64 * PI + phi0;
        }
    }
    let lift = turns as f64 * PI + phi0;
    let rho_n = lift / n_iter as f64;
    let rho_half = lift_half / half as f64;
    RotationEstimate {
        rho: rho_n.clamp(0.0, PI),
        err: (rho_n - rho_half).abs() + PI / n_iter as f64,
        lyapunov: (log_growth / n_iter as f64).max(0.0),
        n_iter,
    }
}

/// Fibered rotation number of the cocycle at energy `e`, started at `θ₀`.
pub fn rotation_number(
    e: f64,
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta0: &[f64],
    n_iter: usize,
) -> RotationEstimate {
    projective_orbit(n_iter, |n| potential.at_site(theta0, omega, n as i64) - e)
}

/// Lyapunov exponent `lim (1/n) ln ‖A_n ⋯ A_1‖`, estimated along one orbit.
pub fn lyapunov(
    e: f64,
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta0: &[f64],
    n_iter: usize,
) -> f64 {
    rotation_number(e, potential, omega, theta0, n_iter).lyapunov
}

/// Label `k` with `ρ ≈ ⟨k, ω⟩/2 mod π`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapLabel {
    pub k: Vec<i64>,
    pub residual: f64,
    /// Every index within twice the best residual, best first.
    pub candidates: Vec<(Vec<i64>, f64)>,
    /// Residual exceeds [`LABEL_WARNING_RESIDUAL`].
    pub unlabeled: bool,
}

/// `dist(ρ - ⟨k, ω⟩/2, πℤ)` minimised over `|k|_∞ ≤ k_label`, ties broken lexicographically.
pub fn gap_label(rho: f64, omega: &[f64], k_label: u32) -> Result<GapLabel> {
    if k_label == 0 {
        return Err(Error::Domain("gap label cutoff must be at least 1".into()));
    }
    let half: Vec<f64> = omega.iter().map(|w| 0.5 * w).collect();
    let scored: Vec<(Vec<i64>, f64)> = lattice_box(omega.len(), k_label as i64)
        .map(|k| {
            let (hi, lo) = dot_extended(&k, &half);
            let r = reduce_mod_pi(hi - rho, lo).abs();
            (k, r)
        })
        .collect();
    let (best_k, best) = scored
        .iter()
        .fold(None::<&(Vec<i64>, f64)>, |acc, item| match acc {
            Some(b) if b.1 <= item.1 => Some(b),
            _ => Some(item),
        })
        .cloned()
        .expect("non-empty box");
    let mut candidates: Vec<(Vec<i64>, f64)> = scored
        .into_iter()
        .filter(|(_, r)| *r <= 2.0 * best)
        .collect();
    candidates.sort_by(|x, y| x.1.total_cmp(&y.1).then_with(|| x.0.cmp(&y.0)));
    Ok(GapLabel {
        k: best_k,
        residual: best,
        candidates,
        unlabeled: best > LABEL_WARNING_RESIDUAL,
    })
}

/// Options for [`gap_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapScanOptions {
    pub n_iter: usize,
    /// Two consecutive energies have "constant" ρ when `|Δρ|` is at most this.
    pub rho_tol: f64,
    /// Smallest gap width the scan must resolve; the E-grid step may not exceed it.
    pub gap_width_floor: f64,
    pub k_label: u32,
}

impl Default for GapScanOptions {
    fn default() -> Self {
        Self {
            n_iter: 100_000,
            rho_tol: 1e-3,
            gap_width_floor: 1e-2,
            k_label: 3,
        }
    }
}

/// One energy of a scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub e: f64,
    pub rho: f64,
    pub rho_err: f64,
    pub lyapunov: f64,
    /// Eigenvalues below `e`, summed over the θ-grid.
    pub count_below: usize,
    pub is_gap: bool,
    pub gap_k: Option<Vec<i64>>,
}

/// A maximal run of energies with flat count and flat ρ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub e_lo: f64,
    pub e_hi: f64,
    /// Mean ρ over the run.
    pub rho: f64,
    pub label: GapLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScan {
    pub rows: Vec<ScanRow>,
    pub gaps: Vec<Gap>,
}

/// Scans an ascending energy grid for spectral gaps of the truncated operators.
///
/// A consecutive pair of energies is flat when no eigenvalue of any `H_θ` on the
/// θ-grid lies between them and `|Δρ| ≤ rho_tol`; gaps are maximal runs of
/// flat pairs. ρ is computed from the first θ of the grid.
pub fn gap_scan(
    potential: &TrigPolynomialPotential,
    omega: &[f64],
    theta_grid: &[Vec<f64>],
    window: LatticeWindow,
    e_grid: &[f64],
    options: GapScanOptions,
) -> Result<GapScan> {
    if theta_grid.is_empty() {
        return Err(Error::Domain("gap scan needs at least one θ".into()));
    }
    if e_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "energy grid must be strictly increasing".into(),
        ));
    }
    if let Some(step) = e_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .max_by(f64::total_cmp)
    {
        if step > options.gap_width_floor {
            return Err(Error::Domain(format!(
                "energy grid step {step} exceeds the gap-width floor {}",
                options.gap_width_floor
            )));
        }
    }
    let operators = theta_grid
        .iter()
        .map(|th| build_operator(potential, omega, th, window, OperatorKind::Schrodinger, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let theta0 = &theta_grid[0];
    let mut rows: Vec<ScanRow> = e_grid
        .par_iter()
        .map(|&e| {
            let est = rotation_number(e, potential, omega, theta0, options.n_iter);
            let count_below = operators.iter().map(|h| eigen_count_below(h, e)).sum();
            ScanRow {
                e,
                rho: est.rho,
                rho_err: est.err,
                lyapunov: est.lyapunov,
                count_below,
                is_gap: false,
                gap_k: None,
            }
        })
        .collect();

    let flat: Vec<bool> = rows
        .windows(2)
        .map(|w| {
            w[0].count_below == w[1].count_below && (w[1].rho - w[0].rho).abs() <= options.rho_tol
        })
        .collect();
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < flat.len() {
        if !flat[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < flat.len() && flat[i] {
            i += 1;
        }
        // pairs start..i cover rows start..=i
        let run = &rows[start..=i];
        let rho = run.iter().map(|r| r.rho).sum::<f64>() / run.len() as f64;
        let label = gap_label(rho, omega, options.k_label)?;
        for r in &mut rows[start..=i] {
            r.is_gap = true;
            r.gap_k = Some(label.k.clone());
        }
        gaps.push(Gap {
            e_lo: rows[start].e,
            e_hi: rows[i].e,
            rho,
            label,
        });
    }
    Ok(GapScan { rows, gaps })
}

impl ScanRow {
    pub const CSV_HEADER: &'static str = "E,rho,rho_err,lyapunov,count_below,is_gap,gap_k";

    pub fn to_csv(&self) -> String {
        let k = self
            .gap_k
            .as_ref()
            .map(|k| {
                k.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        format!(
            "{:e},{:e},{:e},{:e},{},{},{}",
            self.e,
            self.rho,
            self.rho_err,
            self.lyapunov,
            self.count_below,
            u8::from(self.is_gap),
            k
        )
    }
}

pub fn write_scan_csv(mut w: impl Write, rows: &[ScanRow]) -> std::io::Result<()> {
    writeln!(w, "{}", ScanRow::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Little-endian f64 records in CSV column order; `gap_k` occupies `dimension`
/// columns, NaN when the row is not in a gap.
pub fn write_scan_bin(
    mut w: impl Write,
    rows: &[ScanRow],
    dimension: usize,
) -> std::io::Result<()> {
    for r in rows {
        let mut rec = vec![
            r.e,
            r.rho,
            r.rho_err,
            r.lyapunov,
            r.count_below as f64,
            if r.is_gap { 1.0 } else { 0.0 },
        ];
        match &r.gap_k {
            Some(k) => rec.extend(k.iter().map(|&x| x as f64)),
            None => rec.extend(std::iter::repeat_n(f64::NAN, dimension)),
        }
        for v in rec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
