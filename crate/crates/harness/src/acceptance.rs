//! Acceptance criteria as executable checks.
//!
//! Each criterion runs either a harness config through [`crate::run`] or a
//! direct comparison against an independent route, then reduces its checks
//! to one pass/fail line. The `fast` suite shrinks windows, horizons and
//! iteration counts; `full` uses the stated sizes.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lkg_core::calculus::{kg_propagate, PropagatorCache};
use lkg_core::cocycle::projective_orbit;
use lkg_core::lattice::{build_operator, eigen_count_below, LatticeWindow, OperatorKind};
use lkg_core::oscillatory::{free_kernel, KernelKind};
use lkg_core::potential::TrigPolynomialPotential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::Check;
use crate::{run, ExperimentConfig, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Fast,
    Full,
}

/// Deliberate defects used to show that a criterion can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Flips the sign of the transfer-matrix diagonal entry.
    FlipTransferSign,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub suite: Suite,
    pub out_root: PathBuf,
    pub mutation: Option<Mutation>,
}

impl Settings {
    pub fn new(suite: Suite, out_root: impl Into<PathBuf>) -> Self {
        Self {
            suite,
            out_root: out_root.into(),
            mutation: None,
        }
    }

    fn full(&self) -> bool {
        self.suite == Suite::Full
    }

    fn pick<T>(&self, fast: T, full: T) -> T {
        if self.full() {
            full
        } else {
            fast
        }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.out_root.join(name)
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn pass(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{verdict}] {:02} {} ({:.1} s)",
            self.id, self.name, self.seconds
        )?;
        if let Some(e) = &self.error {
            write!(f, "\n       error: {e}")?;
        }
        for c in &self.checks {
            let mark = if c.pass { "ok" } else { "FAILED" };
            write!(
                f,
                "\n       {}: {:.6e} (required {}) {mark}",
                c.name, c.measured, c.required
            )?;
        }
        Ok(())
    }
}

pub const CRITERIA: [(usize, &str); 13] = [
    (1, "free decay rate"),
    (2, "quasi-periodic decay persistence"),
    (3, "kernel oracle equivalence"),
    (4, "van der Corput scaling probe"),
    (5, "free rotation number"),
    (6, "rotation number vs eigenvalue count"),
    (7, "gap labelling"),
    (8, "Combes-Thomas decay"),
    (9, "Balakrishnan inverse square root"),
    (10, "Strichartz saturation"),
    (11, "nonlinear energy conservation"),
    (12, "small-data decay"),
    (13, "determinism"),
];

fn run_config(text: &str, dir: &Path) -> anyhow::Result<Vec<Check>> {
    let config = ExperimentConfig::parse(text)?;
    let options = RunOptions {
        out_dir: Some(dir.to_path_buf()),
        fixed_order: true,
    };
    Ok(run(&config, &options)?.checks)
}

fn prefix(tag: &str, checks: Vec<Check>) -> Vec<Check> {
    checks
        .into_iter()
        .map(|mut c| {
            c.name = format!("{tag} {}", c.name);
            c
        })
        .collect()
}

/// Runs criterion `id` (1-based).
pub fn criterion(id: usize, settings: &Settings) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .unwrap_or("unknown");
    let start = Instant::now();
    let outcome = match id {
        1 => free_decay(settings),
        2 => quasi_periodic_decay(settings),
        3 => kernel_oracle(settings),
        4 => vdc_probe(settings),
        5 => free_rotation(settings),
        6 => rotation_vs_count(settings),
        7 => gap_labelling(settings),
        8 => combes_thomas(settings),
        9 => balakrishnan(settings),
        10 => strichartz(settings),
        11 => nonlinear_energy(settings),
        12 => small_data(settings),
        13 => determinism(settings),
        _ => Err(anyhow::anyhow!("no criterion {id}")),
    };
    let (checks, error) = match outcome {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(format!("{e:#}"))),
    };
    CriterionResult {
        id,
        name,
        checks,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every criterion, printing each line as it completes.
pub fn run_suite(settings: &Settings) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|(id, _)| {
            let r = criterion(*id, settings);
            println!("{r}");
            r
        })
        .collect()
}

fn decay_config(half_width: usize, potential: &str, thetas: &str, tau: &str) -> String {
    format!(
        r#"
seed = 1

[model]
potential = "{potential}"
lambda = 0.05
mass = 1.0
{thetas}

[lattice]
half_width = {half_width}

[run]
kind = "decay"
t_min = 50.0
t_max = 1500.0
samples = 240
phi = [[0, 1.0]]
{tau}
"#
    )
}

fn free_decay(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = decay_config(
        s.pick(1024, 4096),
        "zero",
        "",
        "tau_min = 0.30\ntau_max = 0.37",
    );
    run_config(&text, &s.dir("c01"))
}

fn quasi_periodic_decay(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let n = s.pick(4, 8);
    let grid: Vec<String> = (0..n)
        .map(|j| format!("[{:?}]", 2.0 * PI * j as f64 / n as f64))
        .collect();
    let thetas = format!("theta_grid = [{}]", grid.join(", "));
    let text = decay_config(
        s.pick(1024, 4096),
        "cosine",
        &thetas,
        "tau_min = 0.25\nk1_spread = 0.25",
    );
    run_config(&text, &s.dir("c02"))
}

fn kernel_oracle(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let half = s.pick(200, 800);
    let samples = s.pick(10, 40);
    let t_max = s.pick(50.0, 100.0);
    let window = LatticeWindow::new(half);
    let t = build_operator(
        &TrigPolynomialPotential::zero(1),
        &[1.0],
        &[0.0],
        window,
        OperatorKind::KleinGordon,
        1.0,
    )?;
    let cache = PropagatorCache::from_operator(&t)?;
    let delta = window.delta(0)?;
    let zero = vec![0.0; window.size()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let time = rng.random_range(0.0..t_max);
        let n = rng.random_range(-(t_max as i64)..=(t_max as i64));
        let i = window.offset(n).expect("inside window");
        let cos = kg_propagate(&cache, &delta, &zero, time)?;
        let sinc = kg_propagate(&cache, &zero, &delta, time)?;
        worst = worst
            .max((cos.u[i] - free_kernel(n, time, 1.0, KernelKind::Cos)?).abs())
            .max((sinc.u[i] - free_kernel(n, time, 1.0, KernelKind::Sinc)?).abs());
    }
    Ok(vec![Check::at_most(
        "max |kernel - propagator|",
        worst,
        1e-6,
    )])
}

fn vdc_probe(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = format!(
        r#"
seed = 1
[lattice]
half_width = 10
[run]
kind = "vdc-probe"
t_min = 100.0
t_max = {}
samples = {}
max_ratio = 2.0
control_exponent = 0.5
control_growth = 3.0
"#,
        s.pick("1000.0", "10000.0"),
        s.pick(8, 12)
    );
    run_config(&text, &s.dir("c04"))
}

fn free_rotation(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let n_iter = s.pick(100_000, 1_000_000);
    let sign = match s.mutation {
        Some(Mutation::FlipTransferSign) => -1.0,
        None => 1.0,
    };
    let mut worst = 0.0f64;
    for i in 0..20 {
        let e = -2.0 + 4.0 * (i as f64 + 0.5) / 20.0;
        let r = projective_orbit(n_iter, |_| sign * -e);
        worst = worst.max((r.rho - (-e / 2.0).acos()).abs());
    }
    Ok(vec![Check::at_most(
        "max |rho - arccos(-E/2)|",
        worst,
        1e-4,
    )])
}

fn rotation_vs_count(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let half = s.pick(200, 1000);
    let n_iter = s.pick(100_000, 1_000_000);
    let window = LatticeWindow::new(half);
    let m = window.size() as f64;
    let omega = [PI * (5f64.sqrt() - 1.0)];
    let v = TrigPolynomialPotential::cosine(0.05, 0.5)?;
    let h = build_operator(&v, &omega, &[0.0], window, OperatorKind::Schrodinger, 0.0)?;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let e = -1.5 + 3.0 * i as f64 / 9.0;
        let r = lkg_core::cocycle::rotation_number(e, &v, &omega, &[0.0], n_iter);
        let count = eigen_count_below(&h, e) as f64;
        worst = worst.max((r.rho / PI - count / m).abs());
    }
    Ok(vec![Check::at_most(
        "max |rho/pi - count/M|",
        worst,
        5.0 / m,
    )])
}

fn gap_config(n_iter: usize, e_min: f64, e_max: f64) -> String {
    format!(
        r#"
seed = 1
[model]
potential = "cosine"
lambda = 0.3
[lattice]
half_width = 500
[run]
kind = "gaps"
e_min = {e_min:?}
e_max = {e_max:?}
e_step = 0.005
n_iter = {n_iter}
k_label = 3
label_residual = 1e-3
[output]
formats = ["csv", "json", "bin"]
"#
    )
}

fn gap_labelling(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = gap_config(s.pick(20_000, 100_000), -3.0, 3.0);
    run_config(&text, &s.dir("c07"))
}

fn combes_thomas(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let base = |potential: &str, z: &str| {
        format!(
            r#"
seed = 1
[model]
potential = "{potential}"
lambda = 0.1
[lattice]
half_width = 100
[run]
kind = "combes-thomas"
z = {z}
calibration_z = [[-3.0, 0.0], [-1.0, 0.0], [0.5, 0.0]]
"#
        )
    };
    let free = run_config(&base("zero", "[[-1.0, 0.0]]"), &s.dir("c08-free"))?;
    let qp = run_config(
        &base("cosine", "[[-3.0, 0.0], [-1.0, 0.0], [0.5, 0.0]]"),
        &s.dir("c08-qp"),
    )?;
    Ok([prefix("free", free), prefix("lambda=0.1", qp)].concat())
}

fn balakrishnan(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = r#"
seed = 1
[lattice]
half_width = 50
[run]
kind = "balakrishnan"
n_nodes = 128
half_widths = [100, 200]
tolerance = 1e-8
row_tolerance = 0.01
"#;
    run_config(text, &s.dir("c09"))
}

fn strichartz(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = format!(
        r#"
seed = 1
[lattice]
half_width = {}
[run]
kind = "strichartz"
tau = 0.3
r = [2.0, 6.0]
T = {}
dt = 0.02
phi = [[0, 1.0]]
saturation = 0.02
"#,
        s.pick(120, 300),
        s.pick("[50.0, 100.0]", "[100.0, 400.0]")
    );
    run_config(&text, &s.dir("c10"))
}

fn nonlinear_config(
    sign: &str,
    amp: f64,
    dt: f64,
    t_end: f64,
    half: usize,
    record_every: usize,
    halving: bool,
) -> String {
    format!(
        r#"
seed = 1
[lattice]
half_width = {half}
[run]
kind = "nonlinear"
p = 9.0
sign = "{sign}"
dt = {dt:?}
t_end = {t_end:?}
record_every = {record_every}
phi = [[0, {amp:?}]]
psi = [[1, {amp:?}]]
r = [4.0, 6.0, inf]
dt_halving = {halving}
drift_tol = 1e-5
late_ratio = 0.5
l2_ratio = 1.1
"#
    )
}

fn nonlinear_energy(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let t_end = s.pick(20.0, 100.0);
    let text = nonlinear_config("defocusing", 0.5, 1e-3, t_end, s.pick(40, 100), 1000, true);
    let checks = run_config(&text, &s.dir("c11"))?;
    Ok(checks
        .into_iter()
        .filter(|c| c.name.contains("drift") || c.name.contains("blow-up"))
        .collect())
}

fn small_data(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let t_end = s.pick(100.0, 200.0);
    let half = s.pick(140, 240);
    let mut out = Vec::new();
    for sign in ["defocusing", "focusing"] {
        let text = nonlinear_config(sign, 0.05, 0.01, t_end, half, 10, false);
        let checks = run_config(&text, &s.dir(&format!("c12-{sign}")))?;
        out.extend(prefix(
            sign,
            checks
                .into_iter()
                .filter(|c| {
                    c.name.starts_with("late")
                        || c.name.starts_with("l2")
                        || c.name.contains("blow-up")
                })
                .collect(),
        ));
    }
    Ok(out)
}

fn determinism(s: &Settings) -> anyhow::Result<Vec<Check>> {
    let text = gap_config(s.pick(5_000, 20_000), -1.2, -0.6);
    let config = ExperimentConfig::parse(&text)?;
    let mut hashes = Vec::new();
    let mut manifests = Vec::new();
    for i in 0..2 {
        let options = RunOptions {
            out_dir: Some(s.dir(&format!("c13-{i}"))),
            fixed_order: true,
        };
        let report = run(&config, &options)?;
        hashes.push(report.content_hash());
        manifests.push(report.manifest);
    }
    let same = hashes[0] == hashes[1] && manifests[0] == manifests[1];
    Ok(vec![Check {
        name: "identical report hashes".into(),
        required: "equal".into(),
        measured: if same { 0.0 } else { 1.0 },
        pass: same,
    }])
}
