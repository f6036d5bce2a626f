//! Small numerical helpers shared across modules.

pub mod tridiag;

use std::f64::consts::PI;

/// Low-order part of π, so that `PI + PI_LO` carries ~107 bits.
const PI_LO: f64 = 1.224_646_799_147_353_2e-16;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Double-f64 accumulation of `Σ k_i x_i`, returned as `(hi, lo)`.
pub fn dot_extended(k: &[i64], x: &[f64]) -> (f64, f64) {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (&ki, &xi) in k.iter().zip(x) {
        let (p, pe) = two_prod(ki as f64, xi);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += se + pe;
    }
    two_sum(hi, lo)
}

/// Signed residue of `hi + lo` modulo π, in `[-π/2, π/2]`.
pub fn reduce_mod_pi(hi: f64, lo: f64) -> f64 {
    let j = (hi / PI).round();
    let (p, pe) = two_prod(j, PI);
    ((hi - p) - pe) + lo - j * PI_LO
}

/// `dist(⟨k, x⟩, πℤ)` with extended-precision accumulation and reduction.
pub fn dist_to_pi_lattice(k: &[i64], x: &[f64]) -> f64 {
    let (hi, lo) = dot_extended(k, x);
    reduce_mod_pi(hi, lo).abs()
}

/// Japanese bracket ⟨t⟩ = √(1 + t²).
#[inline]
pub fn japanese(t: f64) -> f64 {
    t.hypot(1.0)
}

/// ℓ^r norm, `r = ∞` giving the max norm. Serial left-to-right summation.
pub fn lp_norm(x: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        return x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    if r == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / scale).powf(r)).sum();
    scale * s.powf(1.0 / r)
}

/// `n` points geometrically spaced on `[lo, hi]` (both endpoints included).
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` points uniformly spaced on `[lo, hi]` (both endpoints included).
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Ordinary least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len();
    assert_eq!(n, y.len());
    assert!(n >= 2);
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_se = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
        r2,
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_handles_large_multiples() {
        // 10^6 golden steps: compare against a value accumulated in f64 the slow way
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let w = PI * alpha;
        let d = dist_to_pi_lattice(&[1_000_000], &[w]);
        // ‖10^6 α‖ = 0.326... times π
        let frac = (1e6 * alpha) - (1e6 * alpha).round();
        assert!((d - PI * frac.abs()).abs() < 1e-8, "{d}");
    }

    #[test]
    fn lp_norms() {
        let x = [3.0, -4.0];
        assert_eq!(lp_norm(&x, 2.0), 5.0);
        assert_eq!(lp_norm(&x, f64::INFINITY), 4.0);
        assert!((lp_norm(&x, 1.0) - 7.0).abs() < 1e-14);
        assert!((lp_norm(&x, 4.0) - (81.0f64 + 256.0).powf(0.25)).abs() < 1e-13);
        assert_eq!(lp_norm(&[0.0; 3], 6.0), 0.0);
    }

    #[test]
    fn line_fit_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-13);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(50.0, 1500.0, 240);
        assert_eq!(g.len(), 240);
        assert!((g[0] - 50.0).abs() < 1e-12);
        assert_eq!(g[239], 1500.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
