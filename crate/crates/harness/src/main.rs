use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use lkg::acceptance::{run_suite, Settings, Suite};
use lkg::{run, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "lkg",
    version,
    about = "Quasi-periodic lattice Klein-Gordon experiments"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record that reductions must run in a fixed order.
    #[arg(long, global = true)]
    fixed_order: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Spectrum,
    Rotation,
    Gaps,
    Evolve,
    Decay,
    Strichartz,
    Nonlinear,
    CombesThomas,
    Balakrishnan,
    VdcProbe,
    /// Run the acceptance criteria.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Rotation => "rotation",
            Command::Gaps => "gaps",
            Command::Evolve => "evolve",
            Command::Decay => "decay",
            Command::Strichartz => "strichartz",
            Command::Nonlinear => "nonlinear",
            Command::CombesThomas => "combes-thomas",
            Command::Balakrishnan => "balakrishnan",
            Command::VdcProbe => "vdc-probe",
            Command::Verify { .. } => "verify",
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    if let Command::Verify { suite } = cli.command {
        let out = cli.out.unwrap_or_else(|| PathBuf::from("out/verify"));
        let results = run_suite(&Settings::new(suite, out));
        let passed = results.iter().filter(|r| r.pass()).count();
        println!("{passed}/{} criteria passed", results.len());
        return Ok(passed == results.len());
    }
    let Some(path) = cli.config else {
        bail!("--config is required for `{}`", cli.command.kind());
    };
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let config = ExperimentConfig::parse(&text)
        .with_context(|| format!("invalid config {}", path.display()))?;
    let kind = config.run.kind();
    if kind != cli.command.kind() {
        bail!(
            "config run.kind is `{kind}` but subcommand is `{}`",
            cli.command.kind()
        );
    }
    let options = RunOptions {
        out_dir: cli.out,
        fixed_order: cli.fixed_order,
    };
    let report = run(&config, &options)?;
    for c in &report.checks {
        let mark = if c.pass { "ok" } else { "FAILED" };
        println!(
            "{}: {:.6e} (required {}) {mark}",
            c.name, c.measured, c.required
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
