//! Linear and nonlinear Klein-Gordon evolution on a lattice window.
//!
//! Linear trajectories are evaluated from `t = 0` at every recorded time by
//! exact spectral calculus. Nonlinear trajectories use Strang splitting around
//! the same exact linear flow. Both refuse windows that the light cone
//! `|n| ≤ n_support + 1.05·v_max·t` would reach, and both watch the outermost
//! sites for contamination.

mod decay;
mod nonlinear;
mod strichartz;

pub use decay::{decay_fit, decay_fit_series, DecayReport, DECAY_CAVEAT};
pub use nonlinear::{
    energy, evolve_nonlinear, small_data_report, BlowUp, NonlinearRun, Nonlinearity,
    SmallDataReport, SmallDataRow, BLOW_UP_THRESHOLD,
};
pub use strichartz::{
    admissible_q, strichartz_norm, strichartz_report, StrichartzPair, StrichartzReport,
};

pub use crate::calculus::WaveState;

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::calculus::PropagatorCache;
use crate::lattice::LatticeWindow;
use crate::numeric::lp_norm;
use crate::oscillatory::critical_velocity;
use crate::{Error, Result};

/// Sites on each edge watched for boundary contact.
pub const SENTINEL_SITES: usize = 5;
/// Edge amplitude tolerated relative to the peak.
pub const SENTINEL_RATIO: f64 = 1e-8;
/// Safety factor on the maximal group velocity.
pub const CONE_FACTOR: f64 = 1.05;
/// Extra sites kept beyond the light cone.
pub const CONE_MARGIN: f64 = 10.0;

/// Norms recorded at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRecord {
    pub t: f64,
    pub linf: f64,
    pub l2: f64,
    pub l4: f64,
    pub l6: f64,
    pub energy: f64,
}

impl NormRecord {
    fn from_displacement(t: f64, u: &[f64], energy: f64) -> Self {
        Self {
            t,
            linf: lp_norm(u, f64::INFINITY),
            l2: lp_norm(u, 2.0),
            l4: lp_norm(u, 4.0),
            l6: lp_norm(u, 6.0),
            energy,
        }
    }
}

/// Light-cone certificate `N ≥ n_support + 1.05·v_max·t_max + 10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LightCone {
    pub n_support: usize,
    pub v_max: f64,
    pub t_max: f64,
    pub required_half_width: usize,
    pub half_width: usize,
}

impl LightCone {
    /// Fails with a window error when the window is too small.
    pub fn certify(
        window: LatticeWindow,
        phi: &[f64],
        psi: &[f64],
        mass: f64,
        t_max: f64,
    ) -> Result<Self> {
        let v_max = critical_velocity(mass)?.0;
        let n_support = phi
            .iter()
            .zip(psi)
            .enumerate()
            .filter(|(_, (a, b))| **a != 0.0 || **b != 0.0)
            .map(|(i, _)| window.site(i).unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        let required =
            (n_support as f64 + CONE_FACTOR * v_max * t_max.abs() + CONE_MARGIN).ceil() as usize;
        if window.half_width() < required {
            return Err(Error::Window {
                required,
                available: window.half_width(),
            });
        }
        Ok(Self {
            n_support,
            v_max,
            t_max,
            required_half_width: required,
            half_width: window.half_width(),
        })
    }
}

/// Fails when the outermost sites carry more than `SENTINEL_RATIO` of the peak.
pub fn check_boundary(u: &[f64], t: f64) -> Result<()> {
    let peak = lp_norm(u, f64::INFINITY);
    if peak == 0.0 {
        return Ok(());
    }
    let k = SENTINEL_SITES.min(u.len());
    let edge = u[..k]
        .iter()
        .chain(&u[u.len() - k..])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let ratio = edge / peak;
    if ratio >= SENTINEL_RATIO {
        return Err(Error::ContaminatedTrajectory { time: t, ratio });
    }
    Ok(())
}

/// Recorded evolution: norms at every time, full states unless storage-lean.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub records: Vec<NormRecord>,
    #[serde(skip)]
    pub states: Option<Vec<WaveState>>,
    /// `‖φ‖₁ + ‖ψ‖₁`.
    pub data_l1: f64,
    /// `‖φ‖₂ + ‖ψ‖₂`.
    pub data_l2: f64,
    pub light_cone: LightCone,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn is_lean(&self) -> bool {
        self.states.is_none()
    }

    pub fn states(&self) -> Result<&[WaveState]> {
        self.states.as_deref().ok_or(Error::MissingStates)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,linf,l2,l4,l6,energy")?;
        for r in &self.records {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.linf, r.l2, r.l4, r.l6, r.energy
            )?;
        }
        Ok(())
    }
}

/// Options for [`evolve_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolveOptions {
    /// Mass of `T = G + m²`, used for the light cone.
    pub mass: f64,
    /// Keep only norms, not states.
    pub lean: bool,
}

const TIME_BLOCK: usize = 32;

/// Linear trajectory by exact spectral calculus at every time of `t_grid`.
pub fn evolve_linear(
    cache: &PropagatorCache,
    window: LatticeWindow,
    phi: &[f64],
    psi: &[f64],
    t_grid: &[f64],
    options: EvolveOptions,
) -> Result<Trajectory> {
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "time grid must be strictly increasing".into(),
        ));
    }
    if window.size() != cache.len() {
        return Err(Error::Dimension {
            expected: cache.len(),
            got: window.size(),
        });
    }
    let t_max = t_grid.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let light_cone = LightCone::certify(window, phi, psi, options.mass, t_max)?;

    let a0 = Array1::from(cache.to_modal(phi)?);
    let b0 = Array1::from(cache.to_modal(psi)?);
    let w = cache.frequencies();
    let q = cache
        .decomposition()
        .vectors()
        .expect("cache holds vectors");
    let m = cache.len();
    let energy0 = 0.5
        * (0..m)
            .map(|j| b0[j] * b0[j] + (w[j] * a0[j]).powi(2))
            .sum::<f64>();

    let mut records = Vec::with_capacity(t_grid.len());
    let mut states = (!options.lean).then(|| Vec::with_capacity(t_grid.len()));
    for block in t_grid.chunks(TIME_BLOCK) {
        let k = block.len();
        let mut cu = Array2::<f64>::zeros((m, k));
        let mut cv = Array2::<f64>::zeros((m, k));
        let mut energies = vec![0.0; k];
        for (col, &t) in block.iter().enumerate() {
            let mut e = 0.0;
            for j in 0..m {
                let (s, c) = (w[j] * t).sin_cos();
                let a = c * a0[j] + s / w[j] * b0[j];
                let b = -w[j] * s * a0[j] + c * b0[j];
                cu[[j, col]] = a;
                cv[[j, col]] = b;
                e += b * b + (w[j] * a).powi(2);
            }
            energies[col] = 0.5 * e;
        }
        let u = q.dot(&cu);
        let v = states.is_some().then(|| q.dot(&cv));
        for (col, &t) in block.iter().enumerate() {
            let ut = u.column(col).to_vec();
            check_boundary(&ut, t)?;
            records.push(NormRecord::from_displacement(t, &ut, energies[col]));
            if let (Some(states), Some(v)) = (states.as_mut(), v.as_ref()) {
                states.push(WaveState {
                    t,
                    u: ut,
                    v: v.column(col).to_vec(),
                });
            }
        }
    }
    debug_assert!(records
        .iter()
        .all(|r| (r.energy - energy0).abs() <= 1e-8 * energy0.max(1e-300)));
    Ok(Trajectory {
        records,
        states,
        data_l1: lp_norm(phi, 1.0) + lp_norm(psi, 1.0),
        data_l2: lp_norm(phi, 2.0) + lp_norm(psi, 2.0),
        light_cone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::kg_propagate;
    use crate::lattice::{build_operator, OperatorKind};
    use crate::oscillatory::{free_kernel, KernelKind};
    use crate::potential::TrigPolynomialPotential;
    use std::f64::consts::PI;

    pub(super) fn setup(half: usize, lambda: f64) -> (PropagatorCache, LatticeWindow) {
        let v = if lambda == 0.0 {
            TrigPolynomialPotential::zero(1)
        } else {
            TrigPolynomialPotential::cosine(lambda, 0.5).unwrap()
        };
        let w = LatticeWindow::new(half);
        let t = build_operator(
            &v,
            &[PI * (5f64.sqrt() - 1.0)],
            &[0.0],
            w,
            OperatorKind::KleinGordon,
            1.0,
        )
        .unwrap();
        (PropagatorCache::from_operator(&t).unwrap(), w)
    }

    const OPTS: EvolveOptions = EvolveOptions {
        mass: 1.0,
        lean: false,
    };

    #[test]
    fn zero_time_returns_data() {
        let (cache, w) = setup(30, 0.05);
        let phi = w.delta(0).unwrap();
        let psi = w.delta(2).unwrap();
        let tr = evolve_linear(&cache, w, &phi, &psi, &[0.0], OPTS).unwrap();
        let s = &tr.states().unwrap()[0];
        for i in 0..w.size() {
            assert!((s.u[i] - phi[i]).abs() < 1e-12);
            assert!((s.v[i] - psi[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn window_too_small_fails_before_compute() {
        let (cache, w) = setup(30, 0.0);
        let phi = w.delta(0).unwrap();
        let err = evolve_linear(&cache, w, &phi, &vec![0.0; w.size()], &[0.0, 100.0], OPTS);
        assert!(matches!(err, Err(Error::Window { .. })));
    }

    #[test]
    fn energy_is_conserved() {
        let (cache, w) = setup(80, 0.05);
        let phi = w.delta(0).unwrap();
        let psi = w.delta(1).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let tr = evolve_linear(&cache, w, &phi, &psi, &times, OPTS).unwrap();
        let e0 = cache.linear_energy(&tr.states().unwrap()[0]).unwrap();
        for s in tr.states().unwrap() {
            let e = cache.linear_energy(s).unwrap();
            assert!(((e - e0) / e0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_free_kernel() {
        let (cache, w) = setup(100, 0.0);
        let phi = w.delta(0).unwrap();
        let zero = vec![0.0; w.size()];
        let tr = evolve_linear(&cache, w, &phi, &zero, &[10.0, 50.0], OPTS).unwrap();
        for s in tr.states().unwrap() {
            for n in [0i64, 3, -7, 20] {
                let k = free_kernel(n, s.t, 1.0, KernelKind::Cos).unwrap();
                assert!((s.u[w.offset(n).unwrap()] - k).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn time_reversal() {
        let (cache, w) = setup(60, 0.05);
        let phi = w.delta(0).unwrap();
        let psi = w.delta(-1).unwrap();
        let fwd = kg_propagate(&cache, &phi, &psi, 37.0).unwrap();
        let back = kg_propagate(&cache, &fwd.u, &fwd.v, -37.0).unwrap();
        for i in 0..w.size() {
            assert!((back.u[i] - phi[i]).abs() < 1e-9);
            assert!((back.v[i] - psi[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn window_invariance() {
        let times: Vec<f64> = (1..20).map(|i| i as f64 * 2.0).collect();
        let run = |half: usize| {
            let (cache, w) = setup(half, 0.05);
            let phi = w.delta(0).unwrap();
            let zero = vec![0.0; w.size()];
            evolve_linear(&cache, w, &phi, &zero, &times, OPTS).unwrap()
        };
        let (a, b) = (run(60), run(120));
        for (x, y) in a.records.iter().zip(&b.records) {
            for (p, q) in [(x.linf, y.linf), (x.l2, y.l2), (x.l4, y.l4), (x.l6, y.l6)] {
                assert!((p - q).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn sentinel_flags_edge_mass() {
        let mut u = vec![0.0; 30];
        u[15] = 1.0;
        assert!(check_boundary(&u, 1.0).is_ok());
        u[1] = 1e-6;
        assert!(matches!(
            check_boundary(&u, 1.0),
            Err(Error::ContaminatedTrajectory { .. })
        ));
    }
}
