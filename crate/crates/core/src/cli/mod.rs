//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numeric
//! validation failure.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::biphoton::Mode;
use crate::error::Result;
use crate::fitting::Weighting;
use config::{Scenario, ScenarioConfig};
use output::{Format, Writer};

#[derive(Debug, Parser)]
#[command(
    name = "cavity-envelope",
    version,
    about = "Simulate heralded photons reflected off an asymmetric cavity"
)]
pub struct Cli {
    /// TOML scenario file; defaults describe the measured setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Config override `section.key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Signal,
    Idler,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Signal => Mode::Signal,
            ModeArg::Idler => Mode::Idler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Input and filtered envelope intensity versus detection-time difference.
    Filter {
        /// Photon that meets the cavity; defaults to `cavity.mode`.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Expected (and optionally Monte Carlo) coincidence histograms per detuning.
    Histogram {
        #[arg(long)]
        monte_carlo: bool,
        /// Also write the generated time tags.
        #[arg(long, requires = "monte_carlo")]
        write_tags: bool,
    },
    /// Mean intracavity photon number for rising and decaying inputs.
    Excitation,
    /// Fit the model amplitude to a measured histogram.
    Fit {
        /// `bin_start_ns,counts` file.
        #[arg(long)]
        histogram: PathBuf,
        /// Detuning in MHz; defaults to the first configured detuning.
        #[arg(long, allow_hyphen_values = true)]
        detuning: Option<f64>,
        /// Accidental floor per bin; defaults to the configured singles rates.
        #[arg(long)]
        baseline: Option<f64>,
        /// Weight bins by `1 / max(counts, 1)`.
        #[arg(long)]
        poisson: bool,
    },
    /// Side weight, peak photon number and fit residual versus detuning.
    Sweep {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 200.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
    /// Data behind one of the published figures.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        monte_carlo: bool,
    },
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Filter { .. } => "filter".into(),
        Command::Histogram { .. } => "histogram".into(),
        Command::Excitation => "excitation".into(),
        Command::Fit { .. } => "fit".into(),
        Command::Sweep { .. } => "sweep".into(),
        Command::Reproduce { figure, .. } => format!("reproduce {figure:?}").to_lowercase(),
    }
}

fn scenario(cli: &Cli, extra: &[&str]) -> Result<Scenario> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    overrides.extend(extra.iter().map(|s| s.to_string()));
    ScenarioConfig::load(cli.config.as_deref(), &overrides)?.resolve()
}

fn provenance(cli: &Cli, sc: &Scenario) -> String {
    format!(
        "cavity-envelope {} {} seed={}\nconfig {}",
        env!("CARGO_PKG_VERSION"),
        command_name(&cli.command),
        sc.config.run.seed,
        serde_json::to_string(&sc.config).expect("config is serialisable")
    )
}

/// Runs one invocation; every file path written is reported on stdout.
pub fn run(cli: &Cli) -> Result<()> {
    // figure recipes pin the detunings and cavity placement they need
    let extra: &[&str] = match &cli.command {
        Command::Reproduce {
            figure: Figure::Fig2,
            ..
        } => &[
            "cavity.detunings_mhz=[0.0, 27.0, 120.0]",
            "cavity.mode=signal",
        ],
        Command::Reproduce {
            figure: Figure::Fig3,
            ..
        } => &["cavity.detunings_mhz=[0.0]", "cavity.mode=idler"],
        Command::Reproduce {
            figure: Figure::Fig4,
            ..
        } => &["cavity.detunings_mhz=[0.0]"],
        _ => &[],
    };
    let sc = scenario(cli, extra)?;
    let stderr = std::io::stderr();
    for warning in &sc.warnings {
        let _ = writeln!(stderr.lock(), "warning: {warning}");
    }
    let mut w = Writer::new(&cli.out, cli.format, provenance(cli, &sc))?;
    let mut stdout_extra = None;
    match &cli.command {
        Command::Filter { mode } => {
            let mode = mode.map(Mode::from).unwrap_or(sc.config.cavity.mode);
            commands::cmd_filter(&sc, mode, &mut w)?;
        }
        Command::Histogram {
            monte_carlo,
            write_tags,
        } => commands::cmd_histogram(&sc, *monte_carlo, *write_tags, &mut w)?,
        Command::Excitation => commands::cmd_excitation(&sc, &mut w)?,
        Command::Fit {
            histogram,
            detuning,
            baseline,
            poisson,
        } => {
            let weighting = if *poisson {
                Weighting::Poisson
            } else {
                Weighting::Unweighted
            };
            stdout_extra = Some(commands::cmd_fit(
                &sc, histogram, *detuning, *baseline, weighting, &mut w,
            )?);
        }
        Command::Sweep { from, to, steps } => commands::cmd_sweep(&sc, *from, *to, *steps, &mut w)?,
        Command::Reproduce {
            figure,
            monte_carlo,
        } => match figure {
            Figure::Fig2 => {
                commands::cmd_filter(&sc, Mode::Signal, &mut w)?;
                commands::cmd_histogram(&sc, *monte_carlo, false, &mut w)?;
            }
            Figure::Fig3 => {
                commands::cmd_filter(&sc, Mode::Idler, &mut w)?;
                commands::cmd_histogram(&sc, *monte_carlo, false, &mut w)?;
            }
            Figure::Fig4 => commands::cmd_excitation(&sc, &mut w)?,
        },
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for p in &w.written {
        let _ = writeln!(out, "{}", p.display());
    }
    if let Some(s) = stdout_extra {
        let _ = writeln!(out, "{s}");
    }
    Ok(())
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
