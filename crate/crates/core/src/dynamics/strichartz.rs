//! Mixed space-time norms `‖u‖_{L^q_t ℓ^r}` for τ-admissible pairs.

use serde::{Serialize, Serializer};

use super::{evolve_linear, EvolveOptions, Trajectory, WaveState};
use crate::calculus::PropagatorCache;
use crate::lattice::LatticeWindow;
use crate::numeric::{linear_grid, lp_norm};
use crate::{Error, Result};

/// `q` with `2/q = τ(1 − 2/r)`; `r = 2` gives `q = ∞`.
pub fn admissible_q(tau: f64, r: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0 / 3.0) {
        return Err(Error::Domain(format!(
            "tau must lie in (0, 1/3), got {tau}"
        )));
    }
    if r.is_nan() || r < 2.0 {
        return Err(Error::Domain(format!("r must be at least 2, got {r}")));
    }
    let gain = 1.0 - 2.0 / r;
    if gain == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 / (tau * gain))
}

fn mixed_norm(states: &[WaveState], q: f64, r: f64) -> f64 {
    let space: Vec<f64> = states.iter().map(|s| lp_norm(&s.u, r)).collect();
    if q.is_infinite() {
        return space.iter().cloned().fold(0.0, f64::max);
    }
    let integral: f64 = states
        .windows(2)
        .zip(space.windows(2))
        .map(|(s, n)| 0.5 * (s[1].t - s[0].t) * (n[0].powf(q) + n[1].powf(q)))
        .sum();
    integral.powf(1.0 / q)
}

/// `‖u‖_{L^q_t ℓ^r}` over the trajectory's time span by the composite trapezoid rule.
pub fn strichartz_norm(trajectory: &Trajectory, q: f64, r: f64) -> Result<f64> {
    if q.is_nan() || r.is_nan() || q < 1.0 || r < 1.0 {
        return Err(Error::Domain(format!("invalid exponents q={q}, r={r}")));
    }
    Ok(mixed_norm(trajectory.states()?, q, r))
}

fn exponent<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrichartzPair {
    #[serde(serialize_with = "exponent")]
    pub q: f64,
    #[serde(serialize_with = "exponent")]
    pub r: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub norm: f64,
    /// `norm / (‖φ‖₂ + ‖ψ‖₂)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrichartzReport {
    pub tau: f64,
    pub pairs: Vec<StrichartzPair>,
    #[serde(rename = "T_values")]
    pub t_values: Vec<f64>,
    /// Largest relative change of a ratio between the first and last `T`.
    pub saturation_delta: f64,
}

impl StrichartzReport {
    pub fn ratio(&self, r: f64, t_end: f64) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.r == r && p.t_end == t_end)
            .map(|p| p.ratio)
    }
}

/// Linear evolution on `[0, max T]` with step `dt`, then every admissible
/// pair `(q(r), r)` evaluated on each `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn strichartz_report(
    cache: &PropagatorCache,
    window: LatticeWindow,
    phi: &[f64],
    psi: &[f64],
    tau: f64,
    r_values: &[f64],
    t_values: &[f64],
    dt: f64,
    mass: f64,
) -> Result<StrichartzReport> {
    if t_values.is_empty() || t_values.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("T values must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let t_max = t_values.iter().cloned().fold(0.0, f64::max);
    let steps = (t_max / dt).round() as usize;
    let grid = linear_grid(0.0, steps as f64 * dt, steps + 1);
    let trajectory = evolve_linear(
        cache,
        window,
        phi,
        psi,
        &grid,
        EvolveOptions { mass, lean: false },
    )?;
    let states = trajectory.states()?;
    let mut pairs = Vec::new();
    for &r in r_values {
        let q = admissible_q(tau, r)?;
        for &t_end in t_values {
            let last = states.partition_point(|s| s.t <= t_end + 1e-9 * t_end);
            let norm = mixed_norm(&states[..last], q, r);
            pairs.push(StrichartzPair {
                q,
                r,
                t_end,
                norm,
                ratio: norm / trajectory.data_l2,
            });
        }
    }
    let (t_first, t_last) = (t_values[0], t_values[t_values.len() - 1]);
    let saturation_delta = r_values
        .iter()
        .map(|r| {
            let find = |t| {
                pairs
                    .iter()
                    .find(|p| p.r == *r && p.t_end == t)
                    .unwrap()
                    .ratio
            };
            let (a, b) = (find(t_first), find(t_last));
            if a == 0.0 {
                0.0
            } else {
                ((b - a) / a).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(StrichartzReport {
        tau,
        pairs,
        t_values: t_values.to_vec(),
        saturation_delta,
    })
}
