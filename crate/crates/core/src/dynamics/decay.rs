//! Power-law fits of `‖u(t)‖_∞`.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::Trajectory;
use crate::numeric::{fit_line, japanese};
use crate::{Error, Result};

const ENVELOPE_WINDOW: usize = 5;
const MIN_FIT_POINTS: usize = 8;
const MIN_SAMPLES: usize = 200;
const MIN_FINAL_TIME: f64 = 100.0;
/// The fit window starts at `t_K / FIT_START_DIVISOR`.
const FIT_START_DIVISOR: f64 = 20.0;

/// Attached to every report.
pub const DECAY_CAVEAT: &str =
    "finite-time fit: slowly varying logarithmic factors are absorbed into the fitted exponent";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub tau_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub r2: f64,
    pub points: usize,
    /// `sup_t ⟨t⟩^{τ̂} ‖u(t)‖_∞ / (‖φ‖₁ + ‖ψ‖₁)`.
    #[serde(rename = "K1_empirical")]
    pub k1_empirical: f64,
    pub caveat: &'static str,
}

/// Backward running maximum over `ENVELOPE_WINDOW` samples.
fn envelope(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            values[i.saturating_sub(ENVELOPE_WINDOW - 1)..=i]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Fits `f ≈ C t^{-τ}` to the upper envelope of `values` on `[t_K/20, t_K]`.
///
/// `data_l1` normalises the empirical constant `K₁`.
pub fn decay_fit_series(times: &[f64], values: &[f64], data_l1: f64) -> Result<DecayReport> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: values.len(),
        });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_none_or(|t| *t <= 0.0) {
        return Err(Error::Domain(
            "decay fit needs positive, increasing times".into(),
        ));
    }
    let env = envelope(values);
    let t_hi = *times.last().unwrap();
    let t_lo = t_hi / FIT_START_DIVISOR;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (t, f) in times.iter().zip(&env) {
        if *t >= t_lo && *f > 0.0 {
            x.push(t.ln());
            y.push(f.ln());
        }
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            got: x.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let fit = fit_line(&x, &y);
    let tau_hat = -fit.slope;
    let half_width = if x.len() > 2 {
        let t = StudentsT::new(0.0, 1.0, (x.len() - 2) as f64)
            .map_err(|e| Error::Domain(e.to_string()))?
            .inverse_cdf(0.975);
        t * fit.slope_se
    } else {
        f64::INFINITY
    };
    let k1_empirical = times
        .iter()
        .zip(values)
        .map(|(t, f)| japanese(*t).powf(tau_hat) * f / data_l1)
        .fold(0.0, f64::max);
    Ok(DecayReport {
        tau_hat,
        ci_low: tau_hat - half_width,
        ci_high: tau_hat + half_width,
        t_lo,
        t_hi,
        r2: fit.r2,
        points: x.len(),
        k1_empirical,
        caveat: DECAY_CAVEAT,
    })
}

/// Decay exponent of `‖u(t)‖_∞` along a geometric time grid.
pub fn decay_fit(trajectory: &Trajectory) -> Result<DecayReport> {
    let times = trajectory.times();
    if times.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            got: times.len(),
            need: MIN_SAMPLES,
        });
    }
    let t_hi = *times.last().unwrap();
    if t_hi < MIN_FINAL_TIME {
        return Err(Error::Domain(format!(
            "decay fit needs a final time of at least {MIN_FINAL_TIME}, got {t_hi}"
        )));
    }
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.iter().any(|r| (r / ratios[0] - 1.0).abs() > 1e-6) {
        return Err(Error::Domain(
            "decay fit needs a geometric time grid".into(),
        ));
    }
    let linf: Vec<f64> = trajectory.records.iter().map(|r| r.linf).collect();
    decay_fit_series(&times, &linf, trajectory.data_l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::geometric_grid;

    #[test]
    fn exact_power_law() {
        let t = geometric_grid(50.0, 1500.0, 240);
        let f: Vec<f64> = t.iter().map(|t| t.powf(-1.0 / 3.0)).collect();
        let r = decay_fit_series(&t, &f, 1.0).unwrap();
        assert!((r.tau_hat - 1.0 / 3.0).abs() < 1e-6);
        assert!(r.ci_low <= r.tau_hat && r.tau_hat <= r.ci_high);
    }

    #[test]
    fn envelope_removes_oscillation_bias() {
        let t = geometric_grid(50.0, 1500.0, 240);
        let f: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, t)| t.powf(-0.3) * if i % 3 == 0 { 1.0 } else { 0.5 })
            .collect();
        let r = decay_fit_series(&t, &f, 1.0).unwrap();
        assert!((r.tau_hat - 0.3).abs() < 1e-3);
    }

    #[test]
    fn too_few_points() {
        let t = geometric_grid(50.0, 1500.0, 6);
        let f: Vec<f64> = t.iter().map(|t| t.powf(-0.3)).collect();
        assert!(matches!(
            decay_fit_series(&t, &f, 1.0),
            Err(Error::InsufficientData { .. })
        ));
    }
}
