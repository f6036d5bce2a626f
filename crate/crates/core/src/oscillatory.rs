//! Free dispersion relation `Ω̃(ρ) = √(2 + m² - 2cos ρ)` and the free kernel
//!
//! ```text
//! K(n, t) = (1/π) ∫₀^π cos(nρ) cos(t Ω̃(ρ)) dρ
//! ```
//!
//! which is `u(n, t)` for the free equation with data `u(0) = δ₀`, `u'(0) = 0`.
//! The sinc variant `sin(tΩ̃)/Ω̃` corresponds to data `(0, δ₀)`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::quadrature::GaussRule;
use crate::{Error, Result};

/// Absolute tolerance of [`free_kernel`].
pub const KERNEL_TOL: f64 = 1e-9;
/// Gauss-Legendre points per panel.
const PANEL_ORDER: usize = 20;
/// Each panel spans at most this many oscillations.
const OSCILLATIONS_PER_PANEL: f64 = 4.0;
const MAX_PANELS: usize = 1 << 20;

fn check_mass(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("mass must be positive, got {m}")));
    }
    Ok(())
}

/// `Ω̃` and its first three derivatives in closed form.
pub fn dispersion(m: f64, rho: f64, order: u8) -> Result<f64> {
    check_mass(m)?;
    let (s, c) = rho.sin_cos();
    let w = (2.0 + m * m - 2.0 * c).sqrt();
    Ok(match order {
        0 => w,
        1 => s / w,
        2 => c / w - s * s / w.powi(3),
        3 => -s / w - 3.0 * c * s / w.powi(3) + 3.0 * s.powi(3) / w.powi(5),
        _ => {
            return Err(Error::Domain(format!(
                "dispersion derivative order {order} > 3"
            )))
        }
    })
}

fn third_over_sin(a: f64, c: f64) -> f64 {
    // Ω̃'''/sin ρ = -(a² - ac + c² - 3)/Ω̃⁵ with a = 2 + m², c = cos ρ
    (a * a - a * c + c * c - 3.0) / (a - 2.0 * c).powf(2.5)
}

/// Constants of the free dispersion relation for one mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionProfile {
    pub mass: f64,
    /// `min |Ω̃'''(ρ)| / |sin ρ|` on `[0, π]`.
    pub c1: f64,
    /// `max |Ω̃'''(ρ)| / |sin ρ|` on `[0, π]`.
    pub c2: f64,
    /// Inflection point of `Ω̃`.
    pub rho_star: f64,
    /// Maximal group velocity `Ω̃'(ρ*)`.
    pub v_max: f64,
}

impl DispersionProfile {
    pub fn new(m: f64) -> Result<Self> {
        check_mass(m)?;
        let a = 2.0 + m * m;
        let f = |c: f64| third_over_sin(a, c);
        let n = 4096;
        let grid: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let (mut ilo, mut ihi) = (0, 0);
        for (i, &c) in grid.iter().enumerate() {
            let v = f(c);
            if v < lo {
                lo = v;
                ilo = i;
            }
            if v > hi {
                hi = v;
                ihi = i;
            }
        }
        let refine = |i: usize, sign: f64| {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(n)];
            let x = golden_section(|c| sign * f(c), a, b);
            f(x)
        };
        let c1 = lo.min(refine(ilo, 1.0));
        let c2 = hi.max(refine(ihi, -1.0));
        let (v_max, rho_star) = critical_velocity(m)?;
        Ok(Self {
            mass: m,
            c1,
            c2,
            rho_star,
            v_max,
        })
    }

    pub fn omega(&self, rho: f64) -> f64 {
        (2.0 + self.mass * self.mass - 2.0 * rho.cos()).sqrt()
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a < 1e-15 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// `(v_max, ρ*)` with `Ω̃''(ρ*) = 0`, found by bisection on `(0, π)`.
pub fn critical_velocity(m: f64) -> Result<(f64, f64)> {
    check_mass(m)?;
    let f2 = |r: f64| dispersion(m, r, 2).expect("mass checked");
    let (mut a, mut b) = (0.0, PI);
    while b - a > 1e-15 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f2(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let rho = 0.5 * (a + b);
    Ok((dispersion(m, rho, 1)?, rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    /// `cos(tΩ̃)`: data `(δ₀, 0)`.
    Cos,
    /// `sin(tΩ̃)/Ω̃`: data `(0, δ₀)`.
    Sinc,
}

fn panel_count(t: f64, v_max: f64, n_max: f64) -> usize {
    let width = OSCILLATIONS_PER_PANEL * 2.0 * PI / (t.abs() * v_max + n_max.abs() + 1.0);
    (PI / width).ceil().max(1.0) as usize
}

fn kernel_sum(n: i64, t: f64, m: f64, which: KernelKind, rule: &GaussRule, panels: usize) -> f64 {
    let mut acc = 0.0;
    for (r, w) in rule.composite(0.0, PI, panels) {
        let om = (2.0 + m * m - 2.0 * r.cos()).sqrt();
        let time = match which {
            KernelKind::Cos => (t * om).cos(),
            KernelKind::Sinc => (t * om).sin() / om,
        };
        acc += w * (n as f64 * r).cos() * time;
    }
    acc / PI
}

/// The free kernel `K(n, t)`, refined by panel doubling to [`KERNEL_TOL`].
pub fn free_kernel(n: i64, t: f64, m: f64, which: KernelKind) -> Result<f64> {
    check_mass(m)?;
    let v_max = critical_velocity(m)?.0;
    let rule = GaussRule::new(PANEL_ORDER);
    let mut panels = panel_count(t, v_max, n as f64);
    let mut prev = kernel_sum(n, t, m, which, &rule, panels);
    let mut change = f64::INFINITY;
    loop {
        panels *= 2;
        if panels > MAX_PANELS {
            return Err(Error::Precision {
                achieved: change,
                estimate: prev,
            });
        }
        let next = kernel_sum(n, t, m, which, &rule, panels);
        change = (next - prev).abs();
        if change <= KERNEL_TOL {
            return Ok(next);
        }
        prev = next;
    }
}

fn kernel_row_sum(
    n_max: usize,
    t: f64,
    m: f64,
    which: KernelKind,
    rule: &GaussRule,
    panels: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; n_max + 1];
    for (r, w) in rule.composite(0.0, PI, panels) {
        let c = r.cos();
        let om = (2.0 + m * m - 2.0 * c).sqrt();
        let time = match which {
            KernelKind::Cos => (t * om).cos(),
            KernelKind::Sinc => (t * om).sin() / om,
        } * w;
        // cos(nρ) by the Chebyshev recurrence
        let (mut prev, mut cur) = (c, 1.0);
        for slot in acc.iter_mut() {
            *slot += time * cur;
            let next = 2.0 * c * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    acc.iter_mut().for_each(|v| *v /= PI);
    acc
}

/// `K(n, t)` for `n = 0, …, n_max` sharing quadrature nodes across `n`.
pub fn free_kernel_row(n_max: usize, t: f64, m: f64, which: KernelKind) -> Result<Vec<f64>> {
    check_mass(m)?;
    let v_max = critical_velocity(m)?.0;
    let rule = GaussRule::new(PANEL_ORDER);
    let mut panels = panel_count(t, v_max, n_max as f64);
    let mut prev = kernel_row_sum(n_max, t, m, which, &rule, panels);
    let mut change = f64::INFINITY;
    loop {
        panels *= 2;
        if panels > MAX_PANELS {
            return Err(Error::Precision {
                achieved: change,
                estimate: prev.iter().fold(0.0, |a: f64, b| a.max(b.abs())),
            });
        }
        let next = kernel_row_sum(n_max, t, m, which, &rule, panels);
        change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= KERNEL_TOL {
            return Ok(next);
        }
        prev = next;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VdcRow {
    pub t: f64,
    pub sup_abs_k: f64,
    /// `t^exponent · sup_abs_k`.
    pub scaled_value: f64,
    pub n_argmax: i64,
    /// `|K|` at `n = ⌈1.2·v_max·t⌉`, outside the light cone.
    pub outside_cone: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VdcTable {
    pub mass: f64,
    pub exponent: f64,
    pub rows: Vec<VdcRow>,
}

impl VdcTable {
    /// `max / min` of the scaled column.
    pub fn ratio(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                (lo.min(r.scaled_value), hi.max(r.scaled_value))
            });
        hi / lo
    }

    /// Last over first scaled value.
    pub fn growth(&self) -> f64 {
        self.rows.last().unwrap().scaled_value / self.rows[0].scaled_value
    }

    /// The same sup values rescaled with a different exponent.
    pub fn with_exponent(&self, exponent: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| VdcRow {
                scaled_value: r.t.powf(exponent) * r.sup_abs_k,
                ..r.clone()
            })
            .collect();
        Self {
            mass: self.mass,
            exponent,
            rows,
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t,sup_abs_K,scaled_value,n_argmax")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{}",
                r.t, r.sup_abs_k, r.scaled_value, r.n_argmax
            )?;
        }
        Ok(())
    }
}

/// `t^{1/3} sup_n |K(n, t)|` over the light cone `|n| ≤ ⌈1.05·v_max·t⌉`.
pub fn vdc_decay_probe(m: f64, t_grid: &[f64]) -> Result<VdcTable> {
    if t_grid.len() < 8 {
        return Err(Error::InsufficientData {
            got: t_grid.len(),
            need: 8,
        });
    }
    let v_max = critical_velocity(m)?.0;
    let rows = t_grid
        .par_iter()
        .map(|&t| {
            let n_cone = (1.05 * v_max * t).ceil() as usize;
            let row = free_kernel_row(n_cone, t, m, KernelKind::Cos)?;
            let (n_argmax, sup) =
                row.iter()
                    .enumerate()
                    .fold((0usize, 0.0f64), |(bi, bv), (i, v)| {
                        if v.abs() > bv {
                            (i, v.abs())
                        } else {
                            (bi, bv)
                        }
                    });
            let outside =
                free_kernel((1.2 * v_max * t).ceil() as i64, t, m, KernelKind::Cos)?.abs();
            Ok(VdcRow {
                t,
                sup_abs_k: sup,
                scaled_value: t.powf(1.0 / 3.0) * sup,
                n_argmax: n_argmax as i64,
                outside_cone: outside,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VdcTable {
        mass: m,
        exponent: 1.0 / 3.0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(1.0, 0.0, 0).unwrap(), 1.0);
        assert!((dispersion(1.0, PI, 0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(dispersion(1.0, 0.0, 3).unwrap().abs() < 1e-15);
        assert!(dispersion(1.0, PI, 3).unwrap().abs() < 1e-14);
        assert!(dispersion(1.0, 0.3, 4).is_err());
        assert!(dispersion(0.0, 0.3, 0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in [0.5, 1.0, 2.0] {
            for _ in 0..100 {
                let r = rng.random_range(0.01..PI - 0.01);
                for order in 1..=3u8 {
                    let num = fd(|x| dispersion(m, x, order - 1).unwrap(), r, 1e-3);
                    assert!((num - dispersion(m, r, order).unwrap()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn critical_velocity_closed_form() {
        let (v, r) = critical_velocity(1.0).unwrap();
        let c = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((r - c.acos()).abs() < 1e-12);
        assert!((r - 1.178874).abs() < 1e-6);
        assert!((v - 0.618034).abs() < 1e-6);
        for m in [0.5, 1.0, 2.0, 5.0] {
            assert!(critical_velocity(m).unwrap().0 < 1.0);
        }
        assert!(dispersion(1.0, 0.5 * r, 2).unwrap() > 0.0);
        assert!(dispersion(1.0, 0.5 * (r + PI), 2).unwrap() < 0.0);
    }

    #[test]
    fn third_derivative_sandwich() {
        for m in [0.5, 1.0, 3.0] {
            let p = DispersionProfile::new(m).unwrap();
            assert!(p.c1 > 0.0 && p.c2 >= p.c1);
            for i in 0..1000 {
                let r = PI * i as f64 / 999.0;
                let d3 = dispersion(m, r, 3).unwrap().abs();
                let s = r.sin().abs();
                assert!(p.c1 * s <= d3 * (1.0 + 1e-12) + 1e-15);
                assert!(d3 <= p.c2 * s * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn kernel_at_time_zero_is_delta() {
        assert!((free_kernel(0, 0.0, 1.0, KernelKind::Cos).unwrap() - 1.0).abs() < 1e-12);
        for n in 1..5 {
            assert!(free_kernel(n, 0.0, 1.0, KernelKind::Cos).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_is_even_in_n() {
        for (n, t) in [(3, 7.0), (10, 25.0), (40, 60.0)] {
            let a = free_kernel(n, t, 1.0, KernelKind::Cos).unwrap();
            let b = free_kernel(-n, t, 1.0, KernelKind::Cos).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn row_matches_scalar_kernel() {
        let t = 150.0;
        let row = free_kernel_row(120, t, 1.0, KernelKind::Cos).unwrap();
        for n in [0usize, 1, 17, 60, 93, 120] {
            let k = free_kernel(n as i64, t, 1.0, KernelKind::Cos).unwrap();
            assert!((row[n] - k).abs() < 1e-10);
        }
        let row = free_kernel_row(30, 20.0, 1.0, KernelKind::Sinc).unwrap();
        let k = free_kernel(7, 20.0, 1.0, KernelKind::Sinc).unwrap();
        assert!((row[7] - k).abs() < 1e-10);
    }

    #[test]
    fn panel_halving_changes_little() {
        let rule = GaussRule::new(PANEL_ORDER);
        for (n, t) in [(5, 40.0), (50, 100.0), (0, 300.0)] {
            let p = panel_count(t, 0.618_034, n as f64);
            let a = kernel_sum(n, t, 1.0, KernelKind::Cos, &rule, p);
            let b = kernel_sum(n, t, 1.0, KernelKind::Cos, &rule, 2 * p);
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn short_grid_is_rejected() {
        assert!(matches!(
            vdc_decay_probe(1.0, &[100.0, 200.0]),
            Err(Error::InsufficientData { .. })
        ));
    }
}
