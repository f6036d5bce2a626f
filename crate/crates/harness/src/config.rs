//! Experiment configuration.
//!
//! A config is TOML with a mandatory `seed` and the sections `model`,
//! `lattice`, `run` and `output`. Unknown keys are rejected. Cross-field
//! constraints are checked by [`ExperimentConfig::validate`], and every
//! error names the offending keys.

use std::f64::consts::PI;

use lkg_core::calculus::MAX_DENSE_SIZE;
use lkg_core::dynamics::{admissible_q, CONE_FACTOR, CONE_MARGIN};
use lkg_core::lattice::{LatticeWindow, OperatorKind};
use lkg_core::oscillatory::critical_velocity;
use lkg_core::potential::{FrequencyVector, TrigPolynomialPotential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    pub lattice: LatticeConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    #[default]
    Zero,
    Cosine,
    SumOfCosines,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn golden_omega() -> Vec<f64> {
    vec![PI * (5f64.sqrt() - 1.0)]
}
fn default_radius() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    2.0
}
fn default_k_max() -> u32 {
    20
}
fn default_theta() -> Vec<f64> {
    vec![0.0]
}
fn default_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub potential: PotentialKind,
    /// Overall coupling; multiplies custom coefficients.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub coefficients: Vec<Coefficient>,
    #[serde(default = "golden_omega")]
    pub omega: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_theta")]
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            potential: PotentialKind::Zero,
            lambda: 0.0,
            radius: default_radius(),
            coefficients: Vec::new(),
            omega: golden_omega(),
            eta: default_eta(),
            k_max: default_k_max(),
            theta: default_theta(),
            theta_grid: None,
            mass: default_mass(),
        }
    }
}

impl ModelConfig {
    pub fn dimension(&self) -> usize {
        self.omega.len()
    }

    pub fn potential(&self) -> Result<TrigPolynomialPotential, ConfigError> {
        let d = self.dimension();
        let built = match self.potential {
            PotentialKind::Zero => Ok(TrigPolynomialPotential::zero(d)),
            PotentialKind::Cosine if d != 1 => {
                return Err(invalid(
                    "model.potential",
                    format!("\"cosine\" needs a one-dimensional model.omega, got {d} components"),
                ))
            }
            PotentialKind::Cosine => TrigPolynomialPotential::cosine(self.lambda, self.radius),
            PotentialKind::SumOfCosines => {
                TrigPolynomialPotential::sum_of_cosines(d, self.lambda, self.radius)
            }
            PotentialKind::Custom => TrigPolynomialPotential::new(
                d,
                self.coefficients
                    .iter()
                    .map(|c| (c.k.clone(), self.lambda * Complex64::new(c.re, c.im))),
                self.radius,
            ),
        };
        built.map_err(|e| invalid("model.coefficients", e.to_string()))
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.theta_grid
            .clone()
            .unwrap_or_else(|| vec![self.theta.clone()])
    }

    fn validate(&self) -> Result<(), ConfigError> {
        FrequencyVector::new(self.omega.clone(), self.eta, self.k_max)
            .map_err(|e| invalid("model.omega", e.to_string()))?;
        if self.potential != PotentialKind::Custom && !self.coefficients.is_empty() {
            return Err(invalid(
                "model.coefficients",
                "only allowed with model.potential = \"custom\"",
            ));
        }
        self.potential()?;
        let d = self.dimension();
        if self.theta.len() != d {
            return Err(invalid(
                "model.theta",
                format!(
                    "has {} components but model.omega has {d}",
                    self.theta.len()
                ),
            ));
        }
        if let Some(grid) = &self.theta_grid {
            if grid.is_empty() {
                return Err(invalid("model.theta_grid", "must not be empty"));
            }
            if let Some(i) = grid.iter().position(|t| t.len() != d) {
                return Err(invalid(
                    format!("model.theta_grid[{i}]"),
                    format!("must have {d} components like model.omega"),
                ));
            }
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid(
                "model.mass",
                format!("must be positive, got {}", self.mass),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// `N`; the window is `{-N, …, N}`.
    pub half_width: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl LatticeConfig {
    pub fn window(&self) -> LatticeWindow {
        LatticeWindow::new(self.half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> String {
    "out".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorChoice {
    #[default]
    Schrodinger,
    KleinGordon,
}

impl From<OperatorChoice> for OperatorKind {
    fn from(c: OperatorChoice) -> Self {
        match c {
            OperatorChoice::Schrodinger => OperatorKind::Schrodinger,
            OperatorChoice::KleinGordon => OperatorKind::KleinGordon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Focusing,
    Defocusing,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Focusing => 1.0,
            Sign::Defocusing => -1.0,
        }
    }
}

/// A scalar or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Sparse initial data as `[site, value]` pairs.
pub type SiteValues = Vec<(i64, f64)>;

fn delta_zero() -> SiteValues {
    vec![(0, 1.0)]
}
fn default_n_iter() -> usize {
    100_000
}
fn default_rotation_tol() -> f64 {
    1e-4
}
fn default_rho_tol() -> f64 {
    1e-3
}
fn default_gap_floor() -> f64 {
    1e-2
}
fn default_k_label() -> u32 {
    3
}
fn default_label_residual() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}
fn default_tau_min() -> f64 {
    0.25
}
fn default_k1_spread() -> f64 {
    0.25
}
fn default_saturation() -> f64 {
    0.02
}
fn default_r_list() -> Vec<f64> {
    vec![4.0, 6.0, f64::INFINITY]
}
fn default_one() -> usize {
    1
}
fn default_drift() -> f64 {
    1e-5
}
fn default_late_ratio() -> f64 {
    0.5
}
fn default_l2_ratio() -> f64 {
    1.1
}
fn default_calibration_z() -> Vec<[f64; 2]> {
    vec![[-3.0, 0.0], [-1.0, 0.0], [0.5, 0.0]]
}
fn default_nodes() -> usize {
    128
}
fn default_bk_tol() -> f64 {
    1e-8
}
fn default_row_tol() -> f64 {
    0.01
}
fn default_exponent() -> f64 {
    1.0 / 3.0
}
fn default_vdc_ratio() -> f64 {
    2.0
}
fn default_control_exponent() -> f64 {
    0.5
}
fn default_control_growth() -> f64 {
    3.0
}

/// What to run; the tag is the `kind` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunConfig {
    Spectrum {
        #[serde(default)]
        operator: OperatorChoice,
        #[serde(default)]
        vectors: bool,
    },
    Rotation {
        energies: Vec<f64>,
        #[serde(default = "default_n_iter")]
        n_iter: usize,
        /// Tolerance against `arccos(−E/2)`, checked when `V ≡ 0`.
        #[serde(default = "default_rotation_tol")]
        tolerance: f64,
    },
    Gaps {
        e_min: f64,
        e_max: f64,
        e_step: f64,
        #[serde(default = "default_n_iter")]
        n_iter: usize,
        #[serde(default = "default_rho_tol")]
        rho_tol: f64,
        #[serde(default = "default_gap_floor")]
        gap_width_floor: f64,
        #[serde(default = "default_k_label")]
        k_label: u32,
        #[serde(default = "default_label_residual")]
        label_residual: f64,
    },
    Evolve {
        t_min: f64,
        t_max: f64,
        samples: usize,
        #[serde(default)]
        spacing: Spacing,
        #[serde(default = "delta_zero")]
        phi: SiteValues,
        #[serde(default)]
        psi: SiteValues,
        #[serde(default = "default_true")]
        lean: bool,
    },
    Decay {
        t_min: f64,
        t_max: f64,
        samples: usize,
        #[serde(default = "delta_zero")]
        phi: SiteValues,
        #[serde(default)]
        psi: SiteValues,
        #[serde(default = "default_tau_min")]
        tau_min: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_max: Option<f64>,
        #[serde(default = "default_k1_spread")]
        k1_spread: f64,
    },
    Strichartz {
        tau: f64,
        r: OneOrMany,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<OneOrMany>,
        #[serde(rename = "T")]
        t_values: Vec<f64>,
        dt: f64,
        #[serde(default = "delta_zero")]
        phi: SiteValues,
        #[serde(default)]
        psi: SiteValues,
        #[serde(default = "default_saturation")]
        saturation: f64,
    },
    Nonlinear {
        p: f64,
        sign: Sign,
        dt: f64,
        t_end: f64,
        #[serde(default = "default_one")]
        record_every: usize,
        phi: SiteValues,
        #[serde(default)]
        psi: SiteValues,
        #[serde(default = "default_r_list")]
        r: Vec<f64>,
        /// Also run with `dt/2` and report the drift ratio.
        #[serde(default)]
        dt_halving: bool,
        #[serde(default = "default_drift")]
        drift_tol: f64,
        #[serde(default = "default_late_ratio")]
        late_ratio: f64,
        #[serde(default = "default_l2_ratio")]
        l2_ratio: f64,
    },
    CombesThomas {
        /// Spectral parameters as `[re, im]`.
        z: Vec<[f64; 2]>,
        #[serde(default)]
        source: i64,
        #[serde(default = "default_calibration_z")]
        calibration_z: Vec<[f64; 2]>,
    },
    Balakrishnan {
        #[serde(default = "default_nodes")]
        n_nodes: usize,
        /// Extra half-widths for the row-bound stability check.
        #[serde(default)]
        half_widths: Vec<usize>,
        #[serde(default = "default_bk_tol")]
        tolerance: f64,
        #[serde(default = "default_row_tol")]
        row_tolerance: f64,
    },
    VdcProbe {
        t_min: f64,
        t_max: f64,
        samples: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
        #[serde(default = "default_vdc_ratio")]
        max_ratio: f64,
        /// Exponent of the negative control table.
        #[serde(default = "default_control_exponent")]
        control_exponent: f64,
        /// Minimal last/first growth of the control table.
        #[serde(default = "default_control_growth")]
        control_growth: f64,
    },
}

impl RunConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            RunConfig::Spectrum { .. } => "spectrum",
            RunConfig::Rotation { .. } => "rotation",
            RunConfig::Gaps { .. } => "gaps",
            RunConfig::Evolve { .. } => "evolve",
            RunConfig::Decay { .. } => "decay",
            RunConfig::Strichartz { .. } => "strichartz",
            RunConfig::Nonlinear { .. } => "nonlinear",
            RunConfig::CombesThomas { .. } => "combes-thomas",
            RunConfig::Balakrishnan { .. } => "balakrishnan",
            RunConfig::VdcProbe { .. } => "vdc-probe",
        }
    }

    fn data(&self) -> Option<(&SiteValues, &SiteValues)> {
        match self {
            RunConfig::Evolve { phi, psi, .. }
            | RunConfig::Decay { phi, psi, .. }
            | RunConfig::Strichartz { phi, psi, .. }
            | RunConfig::Nonlinear { phi, psi, .. } => Some((phi, psi)),
            _ => None,
        }
    }

    /// Final time reached by an evolution run.
    fn final_time(&self) -> Option<(&'static str, f64)> {
        match self {
            RunConfig::Evolve { t_max, .. } | RunConfig::Decay { t_max, .. } => {
                Some(("run.t_max", *t_max))
            }
            RunConfig::Strichartz { t_values, .. } => {
                Some(("run.T", t_values.iter().cloned().fold(0.0, f64::max)))
            }
            RunConfig::Nonlinear { t_end, .. } => Some(("run.t_end", *t_end)),
            _ => None,
        }
    }
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            key,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn time_grid(t_min: f64, t_max: f64, samples: usize, spacing: Spacing) -> Result<(), ConfigError> {
    if !(t_min >= 0.0) || (spacing == Spacing::Geometric && t_min <= 0.0) {
        return Err(invalid(
            "run.t_min",
            format!("invalid start time {t_min} for {spacing:?} spacing"),
        ));
    }
    if !(t_max > t_min) {
        return Err(invalid(
            "run.t_max",
            format!("must exceed run.t_min = {t_min}, got {t_max}"),
        ));
    }
    if samples < 2 {
        return Err(invalid("run.samples", "need at least 2 samples"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                ConfigError::Parse(inner.to_string())
            } else {
                ConfigError::Parse(format!("{path}: {inner}"))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical TOML echo: defaults filled in, keys sorted.
    pub fn canonical(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        toml::to_string(&value).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical echo.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if self.lattice.half_width == 0 {
            return Err(invalid("lattice.half_width", "must be at least 1"));
        }
        let window = self.lattice.window();
        let free = self.model.potential == PotentialKind::Zero;

        if let Some((phi, psi)) = self.run.data() {
            for (key, data) in [("run.phi", phi), ("run.psi", psi)] {
                if let Some((n, _)) = data.iter().find(|(n, _)| window.offset(*n).is_none()) {
                    return Err(invalid(
                        key,
                        format!(
                            "site {n} lies outside lattice.half_width = {}",
                            self.lattice.half_width
                        ),
                    ));
                }
            }
            if let Some((key, t_end)) = self.run.final_time() {
                let v_max = critical_velocity(self.model.mass)
                    .map_err(|e| invalid("model.mass", e.to_string()))?
                    .0;
                let support = phi
                    .iter()
                    .chain(psi)
                    .filter(|(_, v)| *v != 0.0)
                    .map(|(n, _)| n.unsigned_abs())
                    .max();
                let required =
                    (support.unwrap_or(0) as f64 + CONE_FACTOR * v_max * t_end + CONE_MARGIN)
                        .ceil();
                if (self.lattice.half_width as f64) < required {
                    return Err(invalid(
                        "lattice.half_width",
                        format!(
                            "light cone needs at least {required} sites for {key} = {t_end} (got {})",
                            self.lattice.half_width
                        ),
                    ));
                }
            }
        }

        match &self.run {
            RunConfig::Spectrum { .. } => {}
            RunConfig::Rotation {
                energies,
                n_iter,
                tolerance,
            } => {
                if energies.is_empty() {
                    return Err(invalid("run.energies", "must not be empty"));
                }
                if *n_iter < 2 {
                    return Err(invalid("run.n_iter", "must be at least 2"));
                }
                positive("run.tolerance", *tolerance)?;
            }
            RunConfig::Gaps {
                e_min,
                e_max,
                e_step,
                n_iter,
                rho_tol,
                gap_width_floor,
                label_residual,
                ..
            } => {
                positive("run.e_step", *e_step)?;
                positive("run.rho_tol", *rho_tol)?;
                positive("run.gap_width_floor", *gap_width_floor)?;
                positive("run.label_residual", *label_residual)?;
                if !(e_max > e_min) {
                    return Err(invalid(
                        "run.e_max",
                        format!("must exceed run.e_min = {e_min}"),
                    ));
                }
                if e_step > gap_width_floor {
                    return Err(invalid(
                        "run.e_step",
                        format!("{e_step} exceeds run.gap_width_floor = {gap_width_floor}"),
                    ));
                }
                if *n_iter < 2 {
                    return Err(invalid("run.n_iter", "must be at least 2"));
                }
            }
            RunConfig::Evolve {
                t_min,
                t_max,
                samples,
                spacing,
                ..
            } => time_grid(*t_min, *t_max, *samples, *spacing)?,
            RunConfig::Decay {
                t_min,
                t_max,
                samples,
                tau_min,
                tau_max,
                k1_spread,
                ..
            } => {
                time_grid(*t_min, *t_max, *samples, Spacing::Geometric)?;
                if *samples < 200 {
                    return Err(invalid(
                        "run.samples",
                        format!("decay fits need at least 200, got {samples}"),
                    ));
                }
                if *t_max < 100.0 {
                    return Err(invalid(
                        "run.t_max",
                        format!("decay fits need at least 100, got {t_max}"),
                    ));
                }
                if let Some(hi) = tau_max {
                    if hi < tau_min {
                        return Err(invalid(
                            "run.tau_max",
                            format!("is below run.tau_min = {tau_min}"),
                        ));
                    }
                }
                positive("run.k1_spread", *k1_spread)?;
            }
            RunConfig::Strichartz {
                tau,
                r,
                q,
                t_values,
                dt,
                saturation,
                ..
            } => {
                positive("run.dt", *dt)?;
                positive("run.saturation", *saturation)?;
                if t_values.is_empty() || t_values.iter().any(|t| !(*t > 0.0)) {
                    return Err(invalid(
                        "run.T",
                        "must be a non-empty list of positive times",
                    ));
                }
                let rs = r.values();
                if rs.is_empty() {
                    return Err(invalid("run.r", "must not be empty"));
                }
                let expected: Vec<f64> = rs
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        admissible_q(*tau, *r).map_err(|e| {
                            let key = if *tau > 0.0 && *tau < 1.0 / 3.0 {
                                format!("run.r[{i}]")
                            } else {
                                "run.tau".to_string()
                            };
                            invalid(key, e.to_string())
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if let Some(q) = q {
                    let qs = q.values();
                    if qs.len() != rs.len() {
                        return Err(invalid(
                            "run.q",
                            format!("has {} entries but run.r has {}", qs.len(), rs.len()),
                        ));
                    }
                    for ((q, r), want) in qs.iter().zip(&rs).zip(&expected) {
                        let lhs = 2.0 / q;
                        let rhs = 2.0 / want;
                        if (lhs - rhs).abs() > 1e-12 {
                            return Err(invalid(
                                "run.q, run.r",
                                format!(
                                    "q = {q} and r = {r} are not admissible for run.tau = {tau}: \
                                     2/q = {lhs} but τ(1 − 2/r) = {rhs}"
                                ),
                            ));
                        }
                    }
                }
            }
            RunConfig::Nonlinear {
                p,
                dt,
                t_end,
                r,
                drift_tol,
                late_ratio,
                l2_ratio,
                ..
            } => {
                if !(*p > 1.0) {
                    return Err(invalid("run.p", format!("must exceed 1, got {p}")));
                }
                positive("run.dt", *dt)?;
                positive("run.t_end", *t_end)?;
                positive("run.drift_tol", *drift_tol)?;
                positive("run.late_ratio", *late_ratio)?;
                positive("run.l2_ratio", *l2_ratio)?;
                if let Some(x) = r.iter().find(|x| !(**x > 2.0)) {
                    return Err(invalid("run.r", format!("entries must exceed 2, got {x}")));
                }
            }
            RunConfig::CombesThomas {
                z,
                source,
                calibration_z,
            } => {
                if z.is_empty() {
                    return Err(invalid("run.z", "must not be empty"));
                }
                if calibration_z.is_empty() {
                    return Err(invalid("run.calibration_z", "must not be empty"));
                }
                if window.offset(*source).is_none() {
                    return Err(invalid(
                        "run.source",
                        format!("site {source} lies outside the window"),
                    ));
                }
            }
            RunConfig::Balakrishnan {
                n_nodes,
                half_widths,
                tolerance,
                row_tolerance,
            } => {
                if *n_nodes < 8 {
                    return Err(invalid(
                        "run.n_nodes",
                        format!("must be at least 8, got {n_nodes}"),
                    ));
                }
                positive("run.tolerance", *tolerance)?;
                positive("run.row_tolerance", *row_tolerance)?;
                for (key, n) in std::iter::once(("lattice.half_width", self.lattice.half_width))
                    .chain(half_widths.iter().map(|n| ("run.half_widths", *n)))
                {
                    if 2 * n + 1 > MAX_DENSE_SIZE {
                        return Err(invalid(
                            key,
                            format!("window size {} exceeds {MAX_DENSE_SIZE}", 2 * n + 1),
                        ));
                    }
                }
            }
            RunConfig::VdcProbe {
                t_min,
                t_max,
                samples,
                exponent,
                max_ratio,
                control_exponent,
                control_growth,
            } => {
                time_grid(*t_min, *t_max, *samples, Spacing::Geometric)?;
                if *samples < 8 {
                    return Err(invalid(
                        "run.samples",
                        format!("need at least 8, got {samples}"),
                    ));
                }
                positive("run.exponent", *exponent)?;
                positive("run.max_ratio", *max_ratio)?;
                positive("run.control_exponent", *control_exponent)?;
                positive("run.control_growth", *control_growth)?;
                if !free {
                    return Err(invalid(
                        "model.potential",
                        "vdc-probe uses the free kernel; set \"zero\"",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECAY: &str = r#"
seed = 7

[lattice]
half_width = 1000

[run]
kind = "decay"
t_min = 50.0
t_max = 1000.0
samples = 200
"#;

    #[test]
    fn minimal_decay_config_fills_defaults() {
        let c = ExperimentConfig::parse(DECAY).unwrap();
        assert_eq!(c.model.mass, 1.0);
        assert_eq!(c.model.potential, PotentialKind::Zero);
        let echo = c.canonical();
        assert!(echo.contains("mass = 1.0"));
        assert!(echo.contains("tau_min = 0.25"));
        assert_eq!(ExperimentConfig::parse(&echo).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = DECAY.replace("samples = 200", "samples = 200\nsampels = 3");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("sampels"), "{err}");
        let text = DECAY.replace("[lattice]", "[lattice]\nboundry = \"dirichlet\"");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("boundry"), "{err}");
    }

    #[test]
    fn duplicate_key_cites_line() {
        let text = DECAY.replace("half_width = 1000", "half_width = 1000\nhalf_width = 2000");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn inadmissible_pair_names_both_keys() {
        let text = r#"
seed = 1
[lattice]
half_width = 300
[run]
kind = "strichartz"
tau = 0.3
q = 3.0
r = 3.0
T = [100.0]
dt = 0.05
"#;
        let err = ExperimentConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("run.q") && err.contains("run.r"), "{err}");
        let ok = text
            .replace("q = 3.0", "q = 10.0")
            .replace("r = 3.0", "r = 6.0");
        assert!(ExperimentConfig::parse(&ok).is_ok());
    }

    #[test]
    fn light_cone_is_checked_before_compute() {
        let text = DECAY.replace("half_width = 1000", "half_width = 600");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.starts_with("lattice.half_width"), "{err}");
    }

    #[test]
    fn missing_seed_and_type_errors() {
        let text = DECAY.replace("seed = 7", "");
        assert!(ExperimentConfig::parse(&text)
            .unwrap_err()
            .to_string()
            .contains("seed"));
        let text = DECAY.replace("samples = 200", "samples = \"many\"");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("run"), "{err}");
    }

    #[test]
    fn infinite_exponents_round_trip() {
        let text = r#"
seed = 1
[lattice]
half_width = 300
[run]
kind = "strichartz"
tau = 0.3
r = [2.0, 6.0, inf]
T = [100.0, 200.0]
dt = 0.05
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.canonical()).unwrap(), c);
    }

    #[test]
    fn every_kind_round_trips() {
        let runs = [
            "kind = \"spectrum\"",
            "kind = \"rotation\"\nenergies = [0.5, -1.0]",
            "kind = \"gaps\"\ne_min = -3.0\ne_max = 3.0\ne_step = 0.005",
            "kind = \"evolve\"\nt_min = 0.0\nt_max = 10.0\nsamples = 11\nspacing = \"linear\"\npsi = [[1, 0.5]]",
            "kind = \"nonlinear\"\np = 9.0\nsign = \"defocusing\"\ndt = 0.01\nt_end = 10.0\nphi = [[0, 0.05]]",
            "kind = \"combes-thomas\"\nz = [[-1.0, 0.0]]",
            "kind = \"balakrishnan\"\nhalf_widths = [100]",
            "kind = \"vdc-probe\"\nt_min = 100.0\nt_max = 10000.0\nsamples = 12",
        ];
        for run in runs {
            let text = format!("seed = 3\n[lattice]\nhalf_width = 50\n[run]\n{run}\n");
            let c = ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{run}: {e}"));
            assert_eq!(ExperimentConfig::parse(&c.canonical()).unwrap(), c, "{run}");
        }
    }
}
