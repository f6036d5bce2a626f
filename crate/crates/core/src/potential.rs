//! Quasi-periodic potentials, frequency vectors and the KAM bookkeeping sequences.
//!
//! A potential is a finite trigonometric polynomial `V(θ) = Σ_k v_k e^{i⟨k,θ⟩}`
//! on the torus `𝕋^d`. Its analytic majorant `Σ_k |v_k| e^{r|k|₁}` bounds the
//! sup of the analytic extension to the strip `|Im z| < r`, which is the
//! smallness parameter ε₀ of the perturbative regime.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::dist_to_pi_lattice;
use crate::{Error, Result};

/// Tolerance on `v_{-k} - conj(v_k)` accepted as "real".
const REALITY_TOL: f64 = 1e-14;

/// Finite Fourier series on `𝕋^d` with conjugate-symmetric coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomialPotential {
    dimension: usize,
    coefficients: BTreeMap<Vec<i64>, Complex64>,
    radius: f64,
}

impl TrigPolynomialPotential {
    /// Builds a potential from `(k, v_k)` pairs. Repeated indices are summed.
    pub fn new(
        dimension: usize,
        coefficients: impl IntoIterator<Item = (Vec<i64>, Complex64)>,
        radius: f64,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("potential dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "analytic radius must be positive, got {radius}"
            )));
        }
        let mut map: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (k, v) in coefficients {
            if k.len() != dimension {
                return Err(Error::Config(format!(
                    "coefficient index {k:?} does not have dimension {dimension}"
                )));
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Config(format!("coefficient at {k:?} is not finite")));
            }
            *map.entry(k).or_default() += v;
        }
        map.retain(|_, v| *v != Complex64::new(0.0, 0.0));
        for (k, v) in &map {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            let partner = map.get(&neg).copied().unwrap_or_default();
            if (partner - v.conj()).norm() > REALITY_TOL * (1.0 + v.norm()) {
                return Err(Error::Config(format!(
                    "reality violated: v_{neg:?} = {partner} but conj(v_{k:?}) = {}",
                    v.conj()
                )));
            }
        }
        Ok(Self {
            dimension,
            coefficients: map,
            radius,
        })
    }

    /// `V ≡ 0` on `𝕋^d`.
    pub fn zero(dimension: usize) -> Self {
        Self {
            dimension,
            coefficients: BTreeMap::new(),
            radius: 1.0,
        }
    }

    /// `V(θ) = 2λ cos θ` (almost-Mathieu type), `v_{±1} = λ`.
    pub fn cosine(lambda: f64, radius: f64) -> Result<Self> {
        Self::sum_of_cosines(1, lambda, radius)
    }

    /// `V(θ) = 2λ Σ_i cos θ_i` on `𝕋^d`.
    pub fn sum_of_cosines(dimension: usize, lambda: f64, radius: f64) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(2 * dimension);
        for i in 0..dimension {
            for s in [-1, 1] {
                let mut k = vec![0; dimension];
                k[i] = s;
                coeffs.push((k, Complex64::new(lambda, 0.0)));
            }
        }
        Self::new(dimension, coeffs, radius)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&[i64], Complex64)> {
        self.coefficients.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Multiplies every coefficient by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.coefficients.values_mut() {
            *v *= s;
        }
        out.coefficients
            .retain(|_, v| *v != Complex64::new(0.0, 0.0));
        out
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(
            self.dimension,
            self.coefficients.iter().map(|(k, v)| (k.clone(), *v)),
            radius,
        )
    }

    /// Complex value `Σ_k v_k e^{i⟨k,θ⟩}` before discarding the imaginary part.
    pub fn evaluate_complex(&self, theta: &[f64]) -> Complex64 {
        debug_assert_eq!(theta.len(), self.dimension);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in &self.coefficients {
            let phase: f64 = k.iter().zip(theta).map(|(&ki, &ti)| ki as f64 * ti).sum();
            let (s, c) = phase.sin_cos();
            acc += v * Complex64::new(c, s);
        }
        acc
    }

    /// `V(θ)`; the imaginary part of the Fourier sum cancels by reality.
    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        let z = self.evaluate_complex(theta);
        debug_assert!(z.im.abs() <= 1e-12, "imaginary residue {}", z.im);
        z.re
    }

    /// `V(θ + nω)` for a lattice site `n`.
    pub fn at_site(&self, theta: &[f64], omega: &[f64], n: i64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let mut point = [0.0f64; 8];
        if self.dimension <= point.len() {
            for i in 0..self.dimension {
                point[i] = theta[i] + n as f64 * omega[i];
            }
            self.evaluate(&point[..self.dimension])
        } else {
            let p: Vec<f64> = theta
                .iter()
                .zip(omega)
                .map(|(t, w)| t + n as f64 * w)
                .collect();
            self.evaluate(&p)
        }
    }

    /// `Σ_k |v_k| e^{r|k|₁}`, an upper bound for `|V|_r` and for `sup |V|`.
    pub fn analytic_majorant(&self) -> f64 {
        self.majorant_at(self.radius)
    }

    /// Same majorant at an explicit radius `r ≥ 0`.
    pub fn majorant_at(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .map(|(k, v)| {
                let l1: i64 = k.iter().map(|x| x.abs()).sum();
                v.norm() * (r * l1 as f64).exp()
            })
            .sum()
    }
}

/// Frequency vector `ω ∈ (0, 2π)^d` with a finite-cutoff Diophantine certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    omega: Vec<f64>,
    eta: f64,
    k_max: u32,
    gamma_eff: f64,
}

/// Result of the finite Diophantine scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineMargin {
    /// `min |k|^η dist(⟨k,ω⟩, πℤ)` over `0 < |k|_∞ ≤ K_max`.
    pub gamma_eff: f64,
    /// Lexicographically smallest minimiser among indices whose first nonzero
    /// entry is positive.
    pub argmin: Vec<i64>,
}

impl FrequencyVector {
    pub fn new(omega: Vec<f64>, eta: f64, k_max: u32) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Config("frequency vector is empty".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(**w > 0.0 && **w < 2.0 * PI)) {
            return Err(Error::Config(format!(
                "frequency component {w} is outside (0, 2π)"
            )));
        }
        let d = omega.len() as f64;
        if !(eta > d - 1.0) {
            return Err(Error::Config(format!(
                "Diophantine exponent η = {eta} must exceed d - 1 = {}",
                d - 1.0
            )));
        }
        if k_max == 0 {
            return Err(Error::Config("Diophantine cutoff K_max must be ≥ 1".into()));
        }
        let margin = diophantine_margin(&omega, eta, k_max)?;
        Ok(Self {
            omega,
            eta,
            k_max,
            gamma_eff: margin.gamma_eff,
        })
    }

    /// `π(√5 − 1)`, twice the golden-mean rotation `πα`.
    pub fn golden() -> Self {
        Self::new(vec![PI * (5f64.sqrt() - 1.0)], 1.0, 32).expect("golden frequency is Diophantine")
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn dimension(&self) -> usize {
        self.omega.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn gamma_eff(&self) -> f64 {
        self.gamma_eff
    }

    pub fn margin(&self) -> DiophantineMargin {
        diophantine_margin(&self.omega, self.eta, self.k_max).expect("validated at construction")
    }
}

/// Iterates over all `k ∈ ℤ^d` with `|k|_∞ ≤ bound`, in lexicographic order.
pub(crate) fn lattice_box(d: usize, bound: i64) -> impl Iterator<Item = Vec<i64>> {
    let side = (2 * bound + 1) as u64;
    let total = side.pow(d as u32);
    (0..total).map(move |mut idx| {
        let mut k = vec![0i64; d];
        for slot in k.iter_mut().rev() {
            *slot = (idx % side) as i64 - bound;
            idx /= side;
        }
        k
    })
}

/// Finite-cutoff Diophantine margin of `ω` for exponent `η`.
///
/// The weight uses the ℓ¹ length `|k|₁`. A distance indistinguishable from zero at
/// double precision is reported as a resonance.
pub fn diophantine_margin(omega: &[f64], eta: f64, k_max: u32) -> Result<DiophantineMargin> {
    let d = omega.len();
    let mut best: Option<(f64, Vec<i64>)> = None;
    for k in lattice_box(d, k_max as i64) {
        // k and -k give the same value; keep the representative whose first
        // nonzero entry is positive
        match k.iter().find(|&&x| x != 0) {
            None => continue,
            Some(&first) if first < 0 => continue,
            _ => {}
        }
        let dist = dist_to_pi_lattice(&k, omega);
        let size = k
            .iter()
            .zip(omega)
            .map(|(&ki, wi)| (ki as f64 * wi).abs())
            .sum::<f64>();
        if dist <= 64.0 * f64::EPSILON * (1.0 + size) {
            return Err(Error::Resonance { k });
        }
        let l1: i64 = k.iter().map(|x| x.abs()).sum();
        let g = (l1 as f64).powf(eta) * dist;
        // strict comparison keeps the lexicographically first minimiser
        if best.as_ref().is_none_or(|(b, _)| g < *b) {
            best = Some((g, k));
        }
    }
    let (gamma_eff, argmin) = best.expect("K_max ≥ 1 yields at least one index");
    Ok(DiophantineMargin { gamma_eff, argmin })
}

/// KAM schedule `ε_{j+1} = ε_j^{1+σ}`, `N_j = 4^{j+1} σ |ln ε_j|`.
///
/// The sequence is kept in log space: `ε_j` underflows double precision long
/// before the depths requested by [`kam_depth`] at moderate times.
#[derive(Debug, Clone, PartialEq)]
pub struct KamSchedule {
    eps0: f64,
    ln_eps: Vec<f64>,
}

impl KamSchedule {
    pub const SIGMA: f64 = 1.0 / 200.0;

    pub fn new(eps0: f64, depth: usize) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::Domain(format!("ε₀ must lie in (0, 1), got {eps0}")));
        }
        let mut s = Self {
            eps0,
            ln_eps: vec![eps0.ln()],
        };
        s.extend_to(depth);
        Ok(s)
    }

    fn extend_to(&mut self, depth: usize) {
        while self.ln_eps.len() <= depth {
            let last = *self.ln_eps.last().unwrap();
            self.ln_eps.push((1.0 + Self::SIGMA) * last);
        }
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn sigma(&self) -> f64 {
        Self::SIGMA
    }

    /// Largest stored index `j`.
    pub fn depth(&self) -> usize {
        self.ln_eps.len() - 1
    }

    pub fn ln_eps(&self, j: usize) -> f64 {
        self.ln_eps[j]
    }

    /// `ε_j`; may underflow to zero for deep indices.
    pub fn eps(&self, j: usize) -> f64 {
        self.ln_eps[j].exp()
    }

    /// `N_j`; may overflow to infinity for deep indices.
    pub fn n(&self, j: usize) -> f64 {
        4f64.powi(j as i32 + 1) * Self::SIGMA * self.ln_eps[j].abs()
    }
}

/// Smallest `J ≥ 1` with `ε_J^{3σ/4} ≤ ⟨t⟩^{-5/3}`, scanning the schedule
/// (and its continuation past the stored depth).
pub fn kam_depth(t: f64, schedule: &KamSchedule) -> usize {
    let target = -(5.0 / 3.0) * crate::numeric::japanese(t).ln();
    let coef = 0.75 * KamSchedule::SIGMA;
    let mut j = 1;
    let mut ln_eps = if schedule.depth() >= 1 {
        schedule.ln_eps(1)
    } else {
        (1.0 + KamSchedule::SIGMA) * schedule.ln_eps(0)
    };
    loop {
        if coef * ln_eps <= target {
            return j;
        }
        j += 1;
        ln_eps = if j <= schedule.depth() {
            schedule.ln_eps(j)
        } else {
            (1.0 + KamSchedule::SIGMA) * ln_eps
        };
    }
}

/// Closed form `⌈ln((20/(9σ)) ln⟨t⟩ / |ln ε₀|) / ln(1+σ)⌉` of the same depth,
/// before clamping to `J ≥ 1`.
pub fn kam_depth_formula(t: f64, eps0: f64) -> i64 {
    let sigma = KamSchedule::SIGMA;
    let ratio = 20.0 / (9.0 * sigma) * crate::numeric::japanese(t).ln() / eps0.ln().abs();
    (ratio.ln() / (1.0 + sigma).ln()).ceil() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluate_examples() {
        assert_eq!(TrigPolynomialPotential::zero(1).evaluate(&[1.7]), 0.0);
        let v = TrigPolynomialPotential::cosine(0.05, 0.5).unwrap();
        assert!((v.evaluate(&[0.0]) - 0.1).abs() < 1e-15);
        let v2 = TrigPolynomialPotential::sum_of_cosines(2, 0.05, 0.5).unwrap();
        assert!(v2.evaluate(&[0.0, PI]).abs() < 1e-15);
    }

    #[test]
    fn reality_violation_is_config_error() {
        let err = TrigPolynomialPotential::new(1, vec![(vec![1], Complex64::new(0.1, 0.0))], 0.5)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = TrigPolynomialPotential::new(
            1,
            vec![
                (vec![1], Complex64::new(0.1, 0.2)),
                (vec![-1], Complex64::new(0.1, 0.2)),
            ],
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        // complex but conjugate-symmetric is fine
        TrigPolynomialPotential::new(
            1,
            vec![
                (vec![2], Complex64::new(0.1, 0.2)),
                (vec![-2], Complex64::new(0.1, -0.2)),
                (vec![0], Complex64::new(0.3, 0.0)),
            ],
            0.5,
        )
        .unwrap();
    }

    #[test]
    fn majorant_examples() {
        assert_eq!(TrigPolynomialPotential::zero(1).analytic_majorant(), 0.0);
        let v = TrigPolynomialPotential::cosine(0.05, 0.5).unwrap();
        assert!((v.analytic_majorant() - 0.1 * 0.5f64.exp()).abs() < 1e-15);
        assert!((v.analytic_majorant() - 0.164872).abs() < 1e-6);
        assert!((v.majorant_at(0.0) - 0.1).abs() < 1e-15);
    }

    fn random_potential(rng: &mut ChaCha8Rng, d: usize) -> TrigPolynomialPotential {
        let mut coeffs = Vec::new();
        for k in lattice_box(d, 2) {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            if k > neg {
                continue;
            }
            if k == neg {
                coeffs.push((k, Complex64::new(rng.random_range(-0.1..0.1), 0.0)));
            } else {
                let v = Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                coeffs.push((k, v));
                coeffs.push((neg, v.conj()));
            }
        }
        TrigPolynomialPotential::new(d, coeffs, 0.3).unwrap()
    }

    #[test]
    fn reality_and_majorant_dominance_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1, 2] {
            let v = random_potential(&mut rng, d);
            let bound = v.analytic_majorant();
            for _ in 0..10_000 {
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
                let z = v.evaluate_complex(&theta);
                assert!(z.im.abs() <= 1e-12);
                assert!(z.re.abs() <= bound + 1e-12);
            }
        }
    }

    /// Brute enumeration in plain f64, independent of the extended reduction.
    fn margin_oracle(omega: &[f64], eta: f64, k_max: i64, half_space: bool) -> f64 {
        let mut best = f64::INFINITY;
        for k in lattice_box(omega.len(), k_max) {
            if k.iter().all(|&x| x == 0) {
                continue;
            }
            if half_space && k.iter().find(|&&x| x != 0).copied().unwrap() < 0 {
                continue;
            }
            let x: f64 = k.iter().zip(omega).map(|(&a, b)| a as f64 * b).sum();
            let dist = (x - PI * (x / PI).round()).abs();
            let l1: i64 = k.iter().map(|v| v.abs()).sum();
            best = best.min((l1 as f64).powf(eta) * dist);
        }
        best
    }

    #[test]
    fn golden_margin() {
        let w = PI * (5f64.sqrt() - 1.0) / 2.0;
        let m = diophantine_margin(&[w], 1.0, 3).unwrap();
        assert_eq!(m.argmin, vec![1]);
        assert!((m.gamma_eff - 1.2000).abs() < 5e-5, "{}", m.gamma_eff);
        // per-k values quoted for k = 1, 2, 3
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let vals: Vec<f64> = (1..=3)
            .map(|k| {
                let x = k as f64 * alpha;
                k as f64 * PI * (x - x.round()).abs()
            })
            .collect();
        assert!((vals[0] - 1.2000).abs() < 1e-4);
        assert!((vals[1] - 1.4833).abs() < 1e-4);
        assert!((vals[2] - 1.3751).abs() < 1e-4);
        assert!((margin_oracle(&[w], 1.0, 3, false) - m.gamma_eff).abs() < 1e-12);
    }

    #[test]
    fn exact_resonance_is_reported() {
        match diophantine_margin(&[PI / 2.0], 1.0, 2) {
            Err(Error::Resonance { k }) => assert_eq!(k, vec![2]),
            other => panic!("expected resonance, got {other:?}"),
        }
        assert!(FrequencyVector::new(vec![PI / 2.0], 1.0, 2).is_err());
        assert!(FrequencyVector::new(vec![PI / 2.0], 1.0, 1).is_ok());
    }

    #[test]
    fn two_dimensional_margin_matches_enumeration() {
        let omega = [PI * (2f64.sqrt() - 1.0), PI * (3f64.sqrt() - 1.0)];
        let m = diophantine_margin(&omega, 2.0, 5).unwrap();
        let oracle = margin_oracle(&omega, 2.0, 5, false);
        assert!(m.gamma_eff > 0.0);
        assert!((m.gamma_eff - oracle).abs() < 1e-10 * oracle.max(1.0));
        // symmetric under k -> -k: a half-space scan gives the same minimum
        let half = margin_oracle(&omega, 2.0, 5, true);
        assert!((half - oracle).abs() < 1e-14);
    }

    #[test]
    fn frequency_validation() {
        assert!(FrequencyVector::new(vec![0.0], 1.0, 3).is_err());
        assert!(FrequencyVector::new(vec![7.0], 1.0, 3).is_err());
        assert!(FrequencyVector::new(vec![1.0, 2.0], 0.5, 3).is_err());
        let g = FrequencyVector::golden();
        assert!(g.gamma_eff() > 0.0);
    }

    #[test]
    fn schedule_recurrence() {
        let s = KamSchedule::new(1e-3, 40).unwrap();
        for j in 0..40 {
            let lhs = s.ln_eps(j + 1);
            let rhs = (1.0 + s.sigma()) * s.ln_eps(j);
            assert!(((lhs - rhs) / rhs).abs() <= 1e-14);
            assert!(s.eps(j + 1) < s.eps(j));
            assert!(s.n(j + 1) > s.n(j));
        }
        assert!(KamSchedule::new(1.5, 3).is_err());
    }

    #[test]
    fn kam_depth_examples() {
        let s = KamSchedule::new(1e-3, 4).unwrap();
        // t tiny: ε₁ satisfies the bound already
        assert_eq!(kam_depth(0.0, &s), 1);
        assert_eq!(kam_depth(0.1, &s), 1);
        // ⟨t⟩ = 10³: scan against the ceiling formula
        let t = (1e6f64 - 1.0).sqrt();
        let scan = kam_depth(t, &s);
        let formula = kam_depth_formula(t, 1e-3);
        assert!(formula >= 1);
        assert_eq!(scan as i64, formula);
        assert_eq!(scan, 1223);
        // monotone in t
        let mut prev = 0;
        for e in 0..12 {
            let j = kam_depth(10f64.powi(e), &s);
            assert!(j >= prev);
            prev = j;
        }
    }

    #[test]
    fn kam_depth_agrees_with_formula_on_sweep() {
        for &eps0 in &[1e-2, 1e-3, 1e-6] {
            let s = KamSchedule::new(eps0, 1).unwrap();
            for e in 1..40 {
                let t = 1.7f64.powi(e);
                let f = kam_depth_formula(t, eps0);
                if f >= 1 {
                    assert_eq!(kam_depth(t, &s) as i64, f, "eps0={eps0} t={t}");
                } else {
                    assert_eq!(kam_depth(t, &s), 1);
                }
            }
        }
    }
}
