//! `u'' + Tu = sign·|u|^{p−1}u` by Strang splitting around the exact linear flow.

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use super::{check_boundary, EvolveOptions, LightCone, NormRecord, Trajectory, WaveState};
use crate::calculus::{rotate_modes, PropagatorCache};
use crate::lattice::LatticeWindow;
use crate::numeric::lp_norm;
use crate::{Error, Result};

/// Amplitude at which a run is reported as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;
/// `dt·√μ_M` may not exceed this.
const MAX_PHASE_STEP: f64 = 0.1;

/// Power nonlinearity `sign·|u|^{p−1}u`; `sign = +1` is focusing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nonlinearity {
    pub p: f64,
    pub sign: f64,
}

impl Nonlinearity {
    pub fn new(p: f64, sign: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Domain(format!("sign must be +1 or -1, got {sign}")));
        }
        Ok(Self { p, sign })
    }

    pub fn focusing(p: f64) -> Result<Self> {
        Self::new(p, 1.0)
    }

    pub fn defocusing(p: f64) -> Result<Self> {
        Self::new(p, -1.0)
    }

    /// No nonlinear term; energy reduces to the linear one.
    pub const fn none() -> Self {
        Self { p: 3.0, sign: 0.0 }
    }

    fn force(&self, u: f64) -> f64 {
        self.sign * u.abs().powf(self.p - 1.0) * u
    }

    fn potential(&self, u: &[f64]) -> f64 {
        if self.sign == 0.0 {
            return 0.0;
        }
        let q = self.p + 1.0;
        -self.sign / q * u.iter().map(|x| x.abs().powf(q)).sum::<f64>()
    }
}

/// `½‖v‖² + ½‖Au‖² − sign/(p+1)·‖u‖_{p+1}^{p+1}`.
pub fn energy(
    state: &WaveState,
    cache: &PropagatorCache,
    nonlinearity: Nonlinearity,
) -> Result<f64> {
    Ok(cache.linear_energy(state)? + nonlinearity.potential(&state.u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowUp {
    pub time: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearRun {
    pub trajectory: Trajectory,
    pub nonlinearity: Nonlinearity,
    pub dt: f64,
    pub steps: usize,
    pub initial_energy: f64,
    /// `max |E(t) − E(0)| / |E(0)|` over every step.
    pub energy_drift: f64,
    pub blow_up: Option<BlowUp>,
}

/// Strang splitting with step `dt` up to `t_end`, recording every `record_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn evolve_nonlinear(
    cache: &PropagatorCache,
    window: LatticeWindow,
    phi: &[f64],
    psi: &[f64],
    nonlinearity: Nonlinearity,
    dt: f64,
    t_end: f64,
    record_every: usize,
    options: EvolveOptions,
) -> Result<NonlinearRun> {
    if window.size() != cache.len() {
        return Err(Error::Dimension {
            expected: cache.len(),
            got: window.size(),
        });
    }
    let w = cache.frequencies();
    let omega_max = w.iter().cloned().fold(0.0, f64::max);
    if !(dt > 0.0) || dt * omega_max > MAX_PHASE_STEP {
        return Err(Error::Domain(format!(
            "dt = {dt} must lie in (0, {}]",
            MAX_PHASE_STEP / omega_max
        )));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Domain(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    if (steps as f64 * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::Domain(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    let record_every = record_every.max(1);
    let light_cone = LightCone::certify(window, phi, psi, options.mass, t_end)?;

    let q = cache
        .decomposition()
        .vectors()
        .expect("cache holds vectors");
    let mut a = cache.to_modal(phi)?;
    let mut b = cache.to_modal(psi)?;
    let mut u = phi.to_vec();
    let mut force = Array1::from_iter(u.iter().map(|x| nonlinearity.force(*x)));
    let mut g = q.t().dot(&force);

    let modal_energy = |a: &[f64], b: &[f64], u: &[f64]| {
        0.5 * a
            .iter()
            .zip(b)
            .zip(w)
            .map(|((a, b), w)| b * b + (w * a).powi(2))
            .sum::<f64>()
            + nonlinearity.potential(u)
    };
    let initial_energy = modal_energy(&a, &b, &u);
    let mut energy_drift = 0.0f64;

    let mut records = Vec::new();
    let mut states = (!options.lean).then(Vec::new);
    let mut record = |t: f64, a: &[f64], b: &[f64], u: &[f64], e: f64| -> Result<()> {
        check_boundary(u, t)?;
        records.push(NormRecord::from_displacement(t, u, e));
        if let Some(states) = states.as_mut() {
            let v = q.dot(&ArrayView1::from(b)).to_vec();
            debug_assert_eq!(a.len(), v.len());
            states.push(WaveState {
                t,
                u: u.to_vec(),
                v,
            });
        }
        Ok(())
    };
    record(0.0, &a, &b, &u, initial_energy)?;

    let mut blow_up = None;
    let half = 0.5 * dt;
    for step in 1..=steps {
        for (bj, gj) in b.iter_mut().zip(g.iter()) {
            *bj += half * gj;
        }
        rotate_modes(w, &mut a, &mut b, dt);
        let ua = q.dot(&ArrayView1::from(&a[..]));
        u.copy_from_slice(ua.as_slice().expect("contiguous"));
        let t = step as f64 * dt;
        let peak = lp_norm(&u, f64::INFINITY);
        if !(peak <= BLOW_UP_THRESHOLD) {
            blow_up = Some(BlowUp {
                time: t,
                max_abs: peak,
            });
            break;
        }
        force
            .iter_mut()
            .zip(&u)
            .for_each(|(f, x)| *f = nonlinearity.force(*x));
        g = q.t().dot(&force);
        for (bj, gj) in b.iter_mut().zip(g.iter()) {
            *bj += half * gj;
        }
        let e = modal_energy(&a, &b, &u);
        if initial_energy != 0.0 {
            energy_drift = energy_drift.max(((e - initial_energy) / initial_energy).abs());
        }
        if step % record_every == 0 || step == steps {
            record(t, &a, &b, &u, e)?;
        }
    }

    Ok(NonlinearRun {
        trajectory: Trajectory {
            records,
            states,
            data_l1: lp_norm(phi, 1.0) + lp_norm(psi, 1.0),
            data_l2: lp_norm(phi, 2.0) + lp_norm(psi, 2.0),
            light_cone,
        },
        nonlinearity,
        dt,
        steps,
        initial_energy,
        energy_drift,
        blow_up,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallDataRow {
    pub r: f64,
    pub late_max: f64,
    pub global_max: f64,
    /// `late_max / global_max`, zero for the zero trajectory.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallDataReport {
    /// Late window `[T/2, T]`.
    pub late_from: f64,
    pub rows: Vec<SmallDataRow>,
    pub l2_initial: f64,
    pub l2_sup: f64,
    /// `l2_sup / l2_initial`.
    pub l2_ratio: f64,
}

impl SmallDataReport {
    pub fn row(&self, r: f64) -> Option<&SmallDataRow> {
        self.rows.iter().find(|row| row.r == r)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Late-window against global maxima of `‖u(t)‖_r` for each `r > 2`.
pub fn small_data_report(trajectory: &Trajectory, r_values: &[f64]) -> Result<SmallDataReport> {
    let states = trajectory.states()?;
    if let Some(r) = r_values.iter().find(|r| !(**r > 2.0)) {
        return Err(Error::Domain(format!("r must exceed 2, got {r}")));
    }
    let Some(last) = states.last() else {
        return Err(Error::InsufficientData { got: 0, need: 1 });
    };
    let late_from = 0.5 * last.t;
    let rows = r_values
        .iter()
        .map(|&r| {
            let (mut late_max, mut global_max) = (0.0f64, 0.0f64);
            for s in states {
                let n = lp_norm(&s.u, r);
                global_max = global_max.max(n);
                if s.t >= late_from {
                    late_max = late_max.max(n);
                }
            }
            SmallDataRow {
                r,
                late_max,
                global_max,
                ratio: ratio(late_max, global_max),
            }
        })
        .collect();
    let l2_initial = lp_norm(&states[0].u, 2.0);
    let l2_sup = states
        .iter()
        .map(|s| lp_norm(&s.u, 2.0))
        .fold(0.0, f64::max);
    Ok(SmallDataReport {
        late_from,
        rows,
        l2_initial,
        l2_sup,
        l2_ratio: ratio(l2_sup, l2_initial),
    })
}
