//! Dispatch of a validated config to the module pipelines.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use lkg_core::calculus::{
    balakrishnan_inv_sqrt, calibrate_combes_thomas, combes_thomas_fit, inv_sqrt_row_bound,
    spectral_matrix, PropagatorCache, ResolventSolver,
};
use lkg_core::cocycle::{
    gap_scan, rotation_number, write_scan_bin, write_scan_csv, GapScanOptions,
};
use lkg_core::dynamics::{
    decay_fit, evolve_linear, evolve_nonlinear, small_data_report, strichartz_report,
    EvolveOptions, Nonlinearity, BLOW_UP_THRESHOLD,
};
use lkg_core::lattice::{
    build_operator, cache_key, eigen, eigenvalues, load_or_compute, write_decomposition,
    JacobiMatrix, LatticeWindow, OperatorKind,
};
use lkg_core::numeric::{geometric_grid, linear_grid};
use lkg_core::oscillatory::vdc_decay_probe;
use lkg_core::potential::TrigPolynomialPotential;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Format, PotentialKind, RunConfig, SiteValues, Spacing};
use crate::report::{write_report, Check, Outputs, RunReport};

/// Where and how to run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.directory`.
    pub out_dir: Option<PathBuf>,
    /// Recorded in the report. Every reduction in this build is already
    /// serial or index-ordered, so both modes produce identical numbers.
    pub fixed_order: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("{kind} run failed (config {hash}): {cause:#}")]
pub struct RunError {
    pub kind: &'static str,
    pub hash: String,
    pub cause: anyhow::Error,
}

/// Power iterations for the resolvent norm estimate.
const NORM_ITERATIONS: usize = 200;
/// Tolerance on `‖(T − z)⁻¹‖₂ ≤ 1/δ`.
const RESOLVENT_NORM_SLACK: f64 = 1e-8;
/// Tolerance of the free-case Combes-Thomas rate.
const FREE_RATE_TOL: f64 = 1e-3;
/// Tolerance of linear energy conservation.
const LINEAR_ENERGY_TOL: f64 = 1e-10;
/// Slack on the unitarity bound of the `(∞, 2)` pair.
const ENERGY_PAIR_SLACK: f64 = 1e-9;
/// Accepted range for the drift ratio under `dt → dt/2`.
const SECOND_ORDER_RANGE: (f64, f64) = (3.5, 4.5);

struct Model<'a> {
    config: &'a ExperimentConfig,
    potential: TrigPolynomialPotential,
    window: LatticeWindow,
}

impl<'a> Model<'a> {
    fn new(config: &'a ExperimentConfig) -> anyhow::Result<Self> {
        Ok(Self {
            config,
            potential: config.model.potential()?,
            window: config.lattice.window(),
        })
    }

    fn omega(&self) -> &[f64] {
        &self.config.model.omega
    }

    fn mass(&self) -> f64 {
        self.config.model.mass
    }

    fn is_free(&self) -> bool {
        self.config.model.potential == PotentialKind::Zero || self.potential.is_zero()
    }

    fn operator(&self, theta: &[f64], kind: OperatorKind) -> anyhow::Result<JacobiMatrix> {
        Ok(build_operator(
            &self.potential,
            self.omega(),
            theta,
            self.window,
            kind,
            self.mass(),
        )?)
    }

    fn cache_key(&self, theta: &[f64], kind: OperatorKind) -> String {
        cache_key(
            &self.potential,
            self.omega(),
            theta,
            self.window,
            kind,
            self.mass(),
        )
    }

    fn propagator(&self, theta: &[f64]) -> anyhow::Result<PropagatorCache> {
        let t = self.operator(theta, OperatorKind::KleinGordon)?;
        let d = load_or_compute(&self.cache_key(theta, OperatorKind::KleinGordon), &t)?;
        PropagatorCache::new(d).context("model.mass or the potential make T indefinite")
    }

    fn data(&self, sites: &SiteValues) -> Vec<f64> {
        let mut v = vec![0.0; self.window.size()];
        for (n, x) in sites {
            v[self.window.offset(*n).expect("validated")] += x;
        }
        v
    }

    fn first_theta(&self) -> Vec<f64> {
        self.config.model.thetas().swap_remove(0)
    }
}

fn indexed(stem: &str, ext: &str, i: usize, n: usize) -> String {
    if n == 1 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{i}.{ext}")
    }
}

fn below(name: impl Into<String>, measured: f64, bound: f64) -> Check {
    Check {
        name: name.into(),
        required: format!("< {bound:e}"),
        measured,
        pass: measured < bound,
    }
}

/// Runs `config`, writes its outputs and `report.json`, and returns the report.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let wrap = |cause: anyhow::Error| RunError {
        kind: config.run.kind(),
        hash: config.hash(),
        cause,
    };
    let dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let mut out = Outputs::new(&dir).map_err(|e| wrap(e.into()))?;
    out.write("config.toml", config.canonical().as_bytes())
        .map_err(|e| wrap(e.into()))?;
    let checks = dispatch(config, &mut out).map_err(wrap)?;
    let report = RunReport {
        config: serde_json::to_value(config).expect("config serializes"),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        checks,
        manifest: out.into_manifest(),
    };
    write_report(&dir, &report).map_err(|e| wrap(e.into()))?;
    Ok(report)
}

fn dispatch(config: &ExperimentConfig, out: &mut Outputs) -> anyhow::Result<Vec<Check>> {
    let model = Model::new(config)?;
    let formats = &config.output;
    match &config.run {
        RunConfig::Spectrum { operator, vectors } => {
            spectrum(&model, (*operator).into(), *vectors, out)
        }
        RunConfig::Rotation {
            energies,
            n_iter,
            tolerance,
        } => rotation(&model, energies, *n_iter, *tolerance, out),
        RunConfig::Gaps {
            e_min,
            e_max,
            e_step,
            n_iter,
            rho_tol,
            gap_width_floor,
            k_label,
            label_residual,
        } => {
            let n = ((e_max - e_min) / e_step + 1e-9).floor() as usize + 1;
            let grid: Vec<f64> = (0..n).map(|i| e_min + i as f64 * e_step).collect();
            let opts = GapScanOptions {
                n_iter: *n_iter,
                rho_tol: *rho_tol,
                gap_width_floor: *gap_width_floor,
                k_label: *k_label,
            };
            let scan = gap_scan(
                &model.potential,
                model.omega(),
                &config.model.thetas(),
                model.window,
                &grid,
                opts,
            )?;
            if formats.wants(Format::Csv) {
                out.write_with("scan.csv", |w| write_scan_csv(w, &scan.rows))?;
            }
            if formats.wants(Format::Bin) {
                out.write_with("scan.bin", |w| {
                    write_scan_bin(w, &scan.rows, model.potential.dimension())
                })?;
            }
            if formats.wants(Format::Json) {
                out.write_json("gaps.json", &scan.gaps)?;
            }
            let labelled = scan
                .gaps
                .iter()
                .filter(|g| {
                    g.label.k.iter().any(|k| *k != 0) && g.label.residual <= *label_residual
                })
                .count();
            Ok(vec![Check::at_least("labelled gaps", labelled as f64, 1.0)])
        }
        RunConfig::Evolve {
            t_min,
            t_max,
            samples,
            spacing,
            phi,
            psi,
            lean,
        } => {
            let grid = match spacing {
                Spacing::Geometric => geometric_grid(*t_min, *t_max, *samples),
                Spacing::Linear => linear_grid(*t_min, *t_max, *samples),
            };
            let (phi, psi) = (model.data(phi), model.data(psi));
            let thetas = config.model.thetas();
            let mut checks = Vec::new();
            for (i, theta) in thetas.iter().enumerate() {
                let cache = model.propagator(theta)?;
                let opts = EvolveOptions {
                    mass: model.mass(),
                    lean: *lean,
                };
                let tr = evolve_linear(&cache, model.window, &phi, &psi, &grid, opts)?;
                out.write_with(&indexed("trajectory", "csv", i, thetas.len()), |w| {
                    tr.write_csv(w)
                })?;
                let e0 = tr.records[0].energy;
                let drift = tr
                    .records
                    .iter()
                    .map(|r| {
                        if e0 == 0.0 {
                            0.0
                        } else {
                            ((r.energy - e0) / e0).abs()
                        }
                    })
                    .fold(0.0, f64::max);
                checks.push(Check::at_most(
                    format!("energy drift theta[{i}]"),
                    drift,
                    LINEAR_ENERGY_TOL,
                ));
            }
            Ok(checks)
        }
        RunConfig::Decay {
            t_min,
            t_max,
            samples,
            phi,
            psi,
            tau_min,
            tau_max,
            k1_spread,
        } => decay(
            &model,
            (*t_min, *t_max, *samples),
            (phi, psi),
            *tau_min,
            *tau_max,
            *k1_spread,
            out,
        ),
        RunConfig::Strichartz {
            tau,
            r,
            t_values,
            dt,
            phi,
            psi,
            saturation,
            ..
        } => {
            let cache = model.propagator(&model.first_theta())?;
            let rs = r.values();
            let rep = strichartz_report(
                &cache,
                model.window,
                &model.data(phi),
                &model.data(psi),
                *tau,
                &rs,
                t_values,
                *dt,
                model.mass(),
            )?;
            out.write_json("strichartz.json", &rep)?;
            let (t_first, t_last) = (t_values[0], t_values[t_values.len() - 1]);
            let mut checks = Vec::new();
            for &r in &rs {
                if r == 2.0 {
                    let worst = rep
                        .pairs
                        .iter()
                        .filter(|p| p.r == 2.0)
                        .map(|p| p.ratio)
                        .fold(0.0, f64::max);
                    checks.push(Check::at_most(
                        "energy pair ratio (inf, 2)",
                        worst,
                        1.0 + ENERGY_PAIR_SLACK,
                    ));
                } else if t_values.len() > 1 {
                    let a = rep.ratio(r, t_first).expect("pair present");
                    let b = rep.ratio(r, t_last).expect("pair present");
                    checks.push(below(
                        format!("saturation r={r}"),
                        ((b - a) / a).abs(),
                        *saturation,
                    ));
                }
            }
            Ok(checks)
        }
        RunConfig::Nonlinear {
            p,
            sign,
            dt,
            t_end,
            record_every,
            phi,
            psi,
            r,
            dt_halving,
            drift_tol,
            late_ratio,
            l2_ratio,
        } => {
            let cache = model.propagator(&model.first_theta())?;
            let (phi, psi) = (model.data(phi), model.data(psi));
            let nl = Nonlinearity::new(*p, sign.value())?;
            let opts = EvolveOptions {
                mass: model.mass(),
                lean: false,
            };
            let run = evolve_nonlinear(
                &cache,
                model.window,
                &phi,
                &psi,
                nl,
                *dt,
                *t_end,
                *record_every,
                opts,
            )?;
            out.write_with("trajectory.csv", |w| run.trajectory.write_csv(w))?;
            let mut checks = vec![Check {
                name: "no blow-up".into(),
                required: format!("max |u| <= {BLOW_UP_THRESHOLD:e}"),
                measured: run.blow_up.map_or_else(
                    || {
                        run.trajectory
                            .records
                            .iter()
                            .map(|r| r.linf)
                            .fold(0.0, f64::max)
                    },
                    |b| b.max_abs,
                ),
                pass: run.blow_up.is_none(),
            }];
            checks.push(Check::at_most("energy drift", run.energy_drift, *drift_tol));
            let mut halved = None;
            if *dt_halving {
                let fine = evolve_nonlinear(
                    &cache,
                    model.window,
                    &phi,
                    &psi,
                    nl,
                    dt / 2.0,
                    *t_end,
                    record_every.saturating_mul(2),
                    EvolveOptions { lean: true, ..opts },
                )?;
                let ratio = run.energy_drift / fine.energy_drift;
                checks.push(Check::within(
                    "drift ratio dt/(dt/2)",
                    ratio,
                    SECOND_ORDER_RANGE.0,
                    SECOND_ORDER_RANGE.1,
                ));
                halved = Some(
                    json!({ "dt": dt / 2.0, "energy_drift": fine.energy_drift, "drift_ratio": ratio }),
                );
            }
            let small = if run.blow_up.is_none() {
                let rep = small_data_report(&run.trajectory, r)?;
                for row in &rep.rows {
                    checks.push(Check::at_most(
                        format!("late/global r={}", row.r),
                        row.ratio,
                        *late_ratio,
                    ));
                }
                checks.push(Check::at_most("l2 sup/initial", rep.l2_ratio, *l2_ratio));
                Some(rep)
            } else {
                None
            };
            out.write_json(
                "nonlinear.json",
                &json!({
                    "p": p,
                    "sign": sign,
                    "dt": dt,
                    "steps": run.steps,
                    "initial_energy": run.initial_energy,
                    "energy_drift": run.energy_drift,
                    "blow_up": run.blow_up,
                    "halved": halved,
                    "small_data": small,
                }),
            )?;
            Ok(checks)
        }
        RunConfig::CombesThomas {
            z,
            source,
            calibration_z,
        } => combes_thomas(&model, z, *source, calibration_z, out),
        RunConfig::Balakrishnan {
            n_nodes,
            half_widths,
            tolerance,
            row_tolerance,
        } => balakrishnan(
            &model,
            *n_nodes,
            half_widths,
            *tolerance,
            *row_tolerance,
            out,
        ),
        RunConfig::VdcProbe {
            t_min,
            t_max,
            samples,
            exponent,
            max_ratio,
            control_exponent,
            control_growth,
        } => {
            let table = vdc_decay_probe(model.mass(), &geometric_grid(*t_min, *t_max, *samples))?;
            let table = table.with_exponent(*exponent);
            let control = table.with_exponent(*control_exponent);
            out.write_with("vdc.csv", |w| table.write_csv(w))?;
            out.write_with("vdc_control.csv", |w| control.write_csv(w))?;
            Ok(vec![
                Check::at_most("scaled max/min", table.ratio(), *max_ratio),
                Check::at_least("control growth", control.growth(), *control_growth),
            ])
        }
    }
}

fn spectrum(
    model: &Model,
    kind: OperatorKind,
    vectors: bool,
    out: &mut Outputs,
) -> anyhow::Result<Vec<Check>> {
    let thetas = model.config.model.thetas();
    let mut csv = String::from("theta_index,j,eigenvalue\n");
    let mut checks = Vec::new();
    for (i, theta) in thetas.iter().enumerate() {
        let j = model.operator(theta, kind)?;
        let values = if vectors {
            let d = load_or_compute(&model.cache_key(theta, kind), &j)?;
            checks.push(Check::at_most(
                format!("orthogonality theta[{i}]"),
                d.orthogonality_error().unwrap_or(f64::NAN),
                1e-10,
            ));
            checks.push(Check::at_most(
                format!("relative residual theta[{i}]"),
                d.max_relative_residual(&j).unwrap_or(f64::NAN),
                1e-10,
            ));
            if model.config.output.wants(Format::Bin) {
                let name = indexed("eigen", "lkg", i, thetas.len());
                let path = out.dir().join(&name);
                write_decomposition(&path, &d)?;
                let bytes = std::fs::read(&path)?;
                out.write(&name, &bytes)?;
            }
            d.values().to_vec()
        } else {
            eigenvalues(&j)
        };
        checks.push(Check::within(
            format!("eigenvalue count theta[{i}]"),
            values.len() as f64,
            j.len() as f64,
            j.len() as f64,
        ));
        for (k, v) in values.iter().enumerate() {
            csv.push_str(&format!("{i},{k},{v:e}\n"));
        }
    }
    out.write("eigenvalues.csv", csv.as_bytes())?;
    Ok(checks)
}

fn rotation(
    model: &Model,
    energies: &[f64],
    n_iter: usize,
    tolerance: f64,
    out: &mut Outputs,
) -> anyhow::Result<Vec<Check>> {
    let thetas = model.config.model.thetas();
    let mut csv = String::from("theta_index,E,rho,rho_err,lyapunov\n");
    let mut worst = 0.0f64;
    for (i, theta) in thetas.iter().enumerate() {
        let rows: Vec<_> = energies
            .par_iter()
            .map(|&e| rotation_number(e, &model.potential, model.omega(), theta, n_iter))
            .collect();
        for (e, r) in energies.iter().zip(&rows) {
            csv.push_str(&format!(
                "{i},{e:e},{:e},{:e},{:e}\n",
                r.rho, r.err, r.lyapunov
            ));
            if e.abs() < 2.0 {
                worst = worst.max((r.rho - (-e / 2.0).acos()).abs());
            }
        }
    }
    out.write("rotation.csv", csv.as_bytes())?;
    let mut checks = Vec::new();
    if model.is_free() {
        checks.push(Check::at_most(
            "free rotation number error",
            worst,
            tolerance,
        ));
    }
    Ok(checks)
}

#[derive(Serialize)]
struct DecaySummary {
    thetas: Vec<Vec<f64>>,
    tau_hat: Vec<f64>,
    #[serde(rename = "K1_empirical")]
    k1_empirical: Vec<f64>,
    k1_spread: f64,
}

fn decay(
    model: &Model,
    (t_min, t_max, samples): (f64, f64, usize),
    (phi, psi): (&SiteValues, &SiteValues),
    tau_min: f64,
    tau_max: Option<f64>,
    k1_spread: f64,
    out: &mut Outputs,
) -> anyhow::Result<Vec<Check>> {
    let grid = geometric_grid(t_min, t_max, samples);
    let (phi, psi) = (model.data(phi), model.data(psi));
    let thetas = model.config.model.thetas();
    let mut checks = Vec::new();
    let (mut taus, mut k1s) = (Vec::new(), Vec::new());
    for (i, theta) in thetas.iter().enumerate() {
        let cache = model.propagator(theta)?;
        let opts = EvolveOptions {
            mass: model.mass(),
            lean: true,
        };
        let tr = evolve_linear(&cache, model.window, &phi, &psi, &grid, opts)?;
        drop(cache);
        let rep = decay_fit(&tr)?;
        out.write_with(&indexed("trajectory", "csv", i, thetas.len()), |w| {
            tr.write_csv(w)
        })?;
        out.write_json(&indexed("decay", "json", i, thetas.len()), &rep)?;
        match tau_max {
            Some(hi) => checks.push(Check::within(
                format!("tau_hat theta[{i}]"),
                rep.tau_hat,
                tau_min,
                hi,
            )),
            None => checks.push(Check::at_least(
                format!("tau_hat theta[{i}]"),
                rep.tau_hat,
                tau_min,
            )),
        }
        checks.push(Check::finite(
            format!("K1_empirical theta[{i}]"),
            rep.k1_empirical,
        ));
        taus.push(rep.tau_hat);
        k1s.push(rep.k1_empirical);
    }
    if thetas.len() > 1 {
        let lo = k1s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = k1s.iter().cloned().fold(0.0, f64::max);
        let spread = (hi - lo) / lo;
        checks.push(Check::at_most("K1 spread", spread, k1_spread));
        out.write_json(
            "decay_summary.json",
            &DecaySummary {
                thetas,
                tau_hat: taus,
                k1_empirical: k1s,
                k1_spread: spread,
            },
        )?;
    }
    Ok(checks)
}

#[derive(Serialize)]
struct CombesThomasRow {
    z: [f64; 2],
    rate: f64,
    prefactor: f64,
    r2: f64,
    delta: f64,
    decades: f64,
    points_used: usize,
    lower_bound: f64,
    norm_estimate: f64,
}

fn combes_thomas(
    model: &Model,
    zs: &[[f64; 2]],
    source: i64,
    calibration: &[[f64; 2]],
    out: &mut Outputs,
) -> anyhow::Result<Vec<Check>> {
    let k = model.window.offset(source).expect("validated");
    let theta = model.first_theta();
    let t = model.operator(&theta, OperatorKind::KleinGordon)?;
    let free = build_operator(
        &TrigPolynomialPotential::zero(model.potential.dimension()),
        model.omega(),
        &theta,
        model.window,
        OperatorKind::KleinGordon,
        model.mass(),
    )?;
    let to_c = |z: &[f64; 2]| Complex64::new(z[0], z[1]);
    let shifts: Vec<Complex64> = calibration.iter().map(to_c).collect();
    let c =
        calibrate_combes_thomas(&free, &shifts, k).context("calibrating on the free operator")?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (i, z) in zs.iter().enumerate() {
        let zc = to_c(z);
        let fit = combes_thomas_fit(&t, zc, k)?;
        let norm = ResolventSolver::new(&t, zc)?.norm_estimate(NORM_ITERATIONS);
        let lower = c * fit.delta / (1.0 + fit.delta);
        checks.push(Check::at_least(format!("rate z[{i}]"), fit.rate, lower));
        checks.push(Check::at_most(
            format!("resolvent norm z[{i}]"),
            norm,
            1.0 / fit.delta + RESOLVENT_NORM_SLACK,
        ));
        let m2 = model.mass() * model.mass();
        if model.is_free() && z[1] == 0.0 && z[0] < m2 {
            let exact = ((2.0 + m2 - z[0]) / 2.0).acosh();
            checks.push(Check::at_most(
                format!("free rate error z[{i}]"),
                (fit.rate - exact).abs(),
                FREE_RATE_TOL,
            ));
        }
        if model.config.output.wants(Format::Csv) {
            out.write_with(&indexed("combes_thomas", "csv", i, zs.len()), |w| {
                fit.write_csv(w, model.window)
            })?;
        }
        rows.push(CombesThomasRow {
            z: *z,
            rate: fit.rate,
            prefactor: fit.prefactor,
            r2: fit.r2,
            delta: fit.delta,
            decades: fit.decades,
            points_used: fit.points_used,
            lower_bound: lower,
            norm_estimate: norm,
        });
    }
    out.write_json(
        "combes_thomas.json",
        &json!({ "calibration_c": c, "fits": rows }),
    )?;
    Ok(checks)
}

fn balakrishnan(
    model: &Model,
    n_nodes: usize,
    half_widths: &[usize],
    tolerance: f64,
    row_tolerance: f64,
    out: &mut Outputs,
) -> anyhow::Result<Vec<Check>> {
    let theta = model.first_theta();
    let t = model.operator(&theta, OperatorKind::KleinGordon)?;
    let rep = balakrishnan_inv_sqrt(&t, n_nodes)?;
    let exact = spectral_matrix(&eigen(&t, true), |mu| 1.0 / mu.sqrt())?;
    let err = rep
        .matrix
        .iter()
        .zip(exact.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let b1 = inv_sqrt_row_bound(&rep.matrix)?;
    let mut bounds = vec![json!({ "half_width": model.window.half_width(), "B1": b1 })];
    let mut all = vec![b1];
    for &n in half_widths {
        let tn = build_operator(
            &model.potential,
            model.omega(),
            &theta,
            LatticeWindow::new(n),
            OperatorKind::KleinGordon,
            model.mass(),
        )?;
        let bn = inv_sqrt_row_bound(&balakrishnan_inv_sqrt(&tn, n_nodes)?.matrix)?;
        bounds.push(json!({ "half_width": n, "B1": bn }));
        all.push(bn);
    }
    out.write_json(
        "balakrishnan.json",
        &json!({
            "nodes": rep.nodes,
            "tail_nodes": rep.tail_nodes,
            "s_max": rep.s_max,
            "tail_bound": rep.tail_bound,
            "max_abs_err_vs_eigen": err,
            "row_bound_B1": b1,
            "row_bounds": bounds,
        }),
    )?;
    let mut checks = vec![Check::at_most("max abs error vs eigen", err, tolerance)];
    if all.len() > 1 {
        let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = all.iter().cloned().fold(0.0, f64::max);
        checks.push(Check::at_most(
            "B1 relative spread",
            (hi - lo) / lo,
            row_tolerance,
        ));
    }
    Ok(checks)
}
