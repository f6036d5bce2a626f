//! Functional calculus of the truncated Klein-Gordon operator `T = G_θ + m²`.
//!
//! Propagators use the eigendecomposition `T = Q diag(μ) Qᵀ` with frequencies
//! `Ω_j = √μ_j`; resolvents and the Balakrishnan integral use tridiagonal
//! solves directly.

mod balakrishnan;
mod resolvent;

pub use balakrishnan::{
    balakrishnan_inv_sqrt, inv_sqrt_row_bound, BalakrishnanReport, MAX_DENSE_SIZE,
};
pub use resolvent::{
    calibrate_combes_thomas, combes_thomas_fit, resolvent_column, spectral_distance,
    CombesThomasFit, ResolventColumn, ResolventSolver, NEAR_SINGULAR_DISTANCE,
};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::lattice::{eigen, EigenDecomposition, JacobiMatrix};
use crate::{Error, Result};

/// Displacement `u` and velocity `v = ∂_t u` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl WaveState {
    pub fn new(t: f64, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Dimension {
                expected: u.len(),
                got: v.len(),
            });
        }
        Ok(Self { t, u, v })
    }

    pub fn zero(t: f64, m: usize) -> Self {
        Self {
            t,
            u: vec![0.0; m],
            v: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Eigendecomposition of a positive definite `T` with its frequencies `Ω_j = √μ_j`.
#[derive(Debug, Clone)]
pub struct PropagatorCache {
    decomposition: EigenDecomposition,
    frequencies: Vec<f64>,
}

impl PropagatorCache {
    /// Fails with a positivity error unless `μ₁ > 0`.
    pub fn new(decomposition: EigenDecomposition) -> Result<Self> {
        if decomposition.vectors().is_none() {
            return Err(Error::Domain("propagator cache needs eigenvectors".into()));
        }
        let lowest = decomposition.lowest();
        if !(lowest > 0.0) {
            return Err(Error::Positivity {
                min_eigenvalue: lowest,
            });
        }
        let frequencies = decomposition.values().iter().map(|m| m.sqrt()).collect();
        Ok(Self {
            decomposition,
            frequencies,
        })
    }

    pub fn from_operator(t: &JacobiMatrix) -> Result<Self> {
        Self::new(eigen(t, true))
    }

    pub fn decomposition(&self) -> &EigenDecomposition {
        &self.decomposition
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    fn q(&self) -> &Array2<f64> {
        self.decomposition
            .vectors()
            .expect("checked at construction")
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Eigen-coefficients `Qᵀx`.
    pub fn to_modal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self.q().t().dot(&ArrayView1::from(x)).to_vec())
    }

    /// Lattice vector `Qc`.
    pub fn from_modal(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        Ok(self.q().dot(&ArrayView1::from(c)).to_vec())
    }

    /// `‖A x‖₂²` with `A = √T`.
    pub fn a_norm_sq(&self, x: &[f64]) -> Result<f64> {
        let c = self.to_modal(x)?;
        Ok(c.iter()
            .zip(&self.frequencies)
            .map(|(c, w)| (w * c).powi(2))
            .sum())
    }

    /// Linear energy `½‖v‖² + ½‖Au‖²`.
    pub fn linear_energy(&self, state: &WaveState) -> Result<f64> {
        let v2: f64 = state.v.iter().map(|x| x * x).sum();
        Ok(0.5 * v2 + 0.5 * self.a_norm_sq(&state.u)?)
    }

    /// `f(T)x` for a spectral multiplier `f`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut c = self.to_modal(x)?;
        for (cj, mu) in c.iter_mut().zip(self.decomposition.values()) {
            *cj *= f(*mu);
        }
        self.from_modal(&c)
    }
}

/// Dense `Q diag(f(μ)) Qᵀ`.
pub fn spectral_matrix(
    decomposition: &EigenDecomposition,
    f: impl Fn(f64) -> f64,
) -> Result<Array2<f64>> {
    let q = decomposition
        .vectors()
        .ok_or_else(|| Error::Domain("spectral matrix needs eigenvectors".into()))?;
    let mut scaled = q.clone();
    for (mut col, mu) in scaled.columns_mut().into_iter().zip(decomposition.values()) {
        col *= f(*mu);
    }
    Ok(scaled.dot(&q.t()))
}

/// Exact modal flow of `(a, b) = Qᵀ(u, v)` over time `t`.
pub(crate) fn rotate_modes(frequencies: &[f64], a: &mut [f64], b: &mut [f64], t: f64) {
    for ((w, aj), bj) in frequencies.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
        let (s, c) = (w * t).sin_cos();
        let na = c * *aj + s / w * *bj;
        let nb = -w * s * *aj + c * *bj;
        *aj = na;
        *bj = nb;
    }
}

/// Solution of `u'' + Tu = 0` with `u(0) = φ`, `u'(0) = ψ`, at time `t`.
pub fn kg_propagate(
    cache: &PropagatorCache,
    phi: &[f64],
    psi: &[f64],
    t: f64,
) -> Result<WaveState> {
    let mut a = cache.to_modal(phi)?;
    let mut b = cache.to_modal(psi)?;
    rotate_modes(cache.frequencies(), &mut a, &mut b, t);
    WaveState::new(t, cache.from_modal(&a)?, cache.from_modal(&b)?)
}

/// Times evaluated per matrix product in [`propagate_many`].
const TIME_BLOCK: usize = 64;

/// [`kg_propagate`] at many times, batching the synthesis as matrix products.
pub fn propagate_many(
    cache: &PropagatorCache,
    phi: &[f64],
    psi: &[f64],
    times: &[f64],
) -> Result<Vec<WaveState>> {
    let a0 = Array1::from(cache.to_modal(phi)?);
    let b0 = Array1::from(cache.to_modal(psi)?);
    let m = cache.len();
    let q = cache.q();
    let w = cache.frequencies();
    let mut out = Vec::with_capacity(times.len());
    for block in times.chunks(TIME_BLOCK) {
        let k = block.len();
        let mut cu = Array2::<f64>::zeros((m, k));
        let mut cv = Array2::<f64>::zeros((m, k));
        for (col, &t) in block.iter().enumerate() {
            for j in 0..m {
                let (s, c) = (w[j] * t).sin_cos();
                cu[[j, col]] = c * a0[j] + s / w[j] * b0[j];
                cv[[j, col]] = -w[j] * s * a0[j] + c * b0[j];
            }
        }
        let u = q.dot(&cu);
        let v = q.dot(&cv);
        for (col, &t) in block.iter().enumerate() {
            out.push(WaveState {
                t,
                u: u.index_axis(Axis(1), col).to_vec(),
                v: v.index_axis(Axis(1), col).to_vec(),
            });
        }
    }
    Ok(out)
}
