//! `fml`: build cube systems, weight them and run the fat/thin experiments.
//!
//! Exit status: 0 on success, 2 when an invariant fails (a witness file is
//! written), 1 on usage or configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fml_core::fatthin::RhoRule;
use fml_core::measure::N0Policy;
use fml_core::scan::{PointSource, Sampling};
use fml_core::{BaseRule, SequenceSpec};

use commands::Outcome;
use config::{parse_n0, parse_probe, parse_rho, parse_source, Command, Probe, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fml_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Parser)]
#[command(name = "fml", version, about = "Cube hierarchies, radial-weight measures and fat/thin experiments")]
struct Cli {
    /// Write the resolved run configuration to this file before running.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Default)]
struct SystemArgs {
    /// System file written by `build`, `distort` or `pushforward`.
    #[arg(long)]
    system: Option<PathBuf>,
    /// 1d or 2d.
    #[arg(long)]
    space: Option<String>,
    /// Base rule such as 7, 3,5,7 or odd:2n+1.
    #[arg(long)]
    bases: Option<BaseRule>,
    /// Sequence for a subsampled dyadic layout, e.g. geometric:0.5.
    #[arg(long)]
    sequence: Option<SequenceSpec>,
    #[arg(long)]
    dyadic_base: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    lazy: bool,
}

#[derive(Args)]
struct MeasureArgs {
    /// A number, `fat` or `thin`.
    #[arg(long, value_parser = parse_rho, allow_hyphen_values = true)]
    rho: RhoRule,
    /// `auto` or a split index.
    #[arg(long, value_parser = parse_n0, default_value = "auto")]
    n0: N0Policy,
    /// Quadrature tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tau: f64,
    /// Allowed relative conservation error.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    rmin: f64,
    #[arg(long, default_value_t = 0.25)]
    rmax: f64,
    /// uniform, centers:L or survivors:L.
    #[arg(long, value_parser = parse_source, default_value = "uniform")]
    source: PointSource,
}

#[derive(Args, Default)]
struct OutArgs {
    /// JSON report or system file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Witness file for invariant violations.
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Build a cube system.
    Build {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check axioms I-V and fit the constants.
    Validate {
        #[command(flatten)]
        sys: SystemArgs,
        /// Comma-separated comparability factors.
        #[arg(long = "T", value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0])]
        ts: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Weight a system and audit mass conservation.
    Measure {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        m: MeasureArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Seeded doubling-ratio scan.
    ScanDoubling {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        m: MeasureArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Survivor masses, center ratios and the product bound per level.
    FatThin {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        m: MeasureArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Build the distorted 2d carpet.
    Distort {
        #[arg(long)]
        bases: BaseRule,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        lazy: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Doubling ratios of the measure restricted to the survivors.
    RestrictScan {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        m: MeasureArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, default_value_t = 6.0)]
        factor: f64,
        /// Survivor level; defaults to the analysis depth.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Inscribed-ball probes in balls intersected with the survivors.
    Plumpness {
        #[command(flatten)]
        sys: SystemArgs,
        /// x,R or x,y,R; repeatable.
        #[arg(long = "probe", value_parser = parse_probe, allow_hyphen_values = true)]
        probes: Vec<Probe>,
        /// Add probes centred on every relocated child.
        #[arg(long)]
        relocated: bool,
        /// Deepest level searched.
        #[arg(long)]
        level: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Push a 1d system forward under x -> x^beta.
    Pushforward {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        beta: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a saved configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn base_config(command: Command, sys: SystemArgs, out: OutArgs) -> RunConfig {
    let mut c = RunConfig::new(command);
    let builds = matches!(command, Command::Build | Command::Distort);
    c.depth = if builds { None } else { sys.depth };
    c.system.depth = if sys.system.is_none() { sys.depth } else { None };
    c.system.file = sys.system;
    c.system.space = sys.space;
    c.system.bases = sys.bases;
    c.system.sequence = sys.sequence;
    c.system.dyadic_base = sys.dyadic_base;
    c.system.lazy = sys.lazy;
    c.outputs.json = out.out;
    c.outputs.witness = out.witness;
    c
}

fn with_measure(mut c: RunConfig, m: MeasureArgs) -> RunConfig {
    c.rho = Some(m.rho);
    c.n0 = m.n0;
    c.tolerances.tau = m.tau;
    c.tolerances.epsilon = m.epsilon;
    c
}

fn with_sampling(mut c: RunConfig, s: SampleArgs) -> RunConfig {
    c.sampling = Sampling { count: s.samples, seed: s.seed, source: s.source, r_min: s.rmin, r_max: s.rmax };
    c
}

fn to_config(sub: Sub) -> Result<RunConfig, CliError> {
    Ok(match sub {
        Sub::Build { sys, out } => base_config(Command::Build, sys, out),
        Sub::Validate { sys, ts, out } => {
            let mut c = base_config(Command::Validate, sys, out);
            c.ts = ts;
            c
        }
        Sub::Measure { sys, m, out } => with_measure(base_config(Command::Measure, sys, out), m),
        Sub::ScanDoubling { sys, m, sample, csv, out } => {
            let mut c = with_sampling(with_measure(base_config(Command::ScanDoubling, sys, out), m), sample);
            c.outputs.csv = csv;
            c
        }
        Sub::FatThin { sys, m, csv, out } => {
            let mut c = with_measure(base_config(Command::FatThin, sys, out), m);
            c.outputs.csv = csv;
            c
        }
        Sub::Distort { bases, depth, lazy, out } => {
            let sys = SystemArgs {
                space: Some("2d".into()),
                bases: Some(bases),
                depth: Some(depth),
                lazy,
                ..SystemArgs::default()
            };
            base_config(Command::Distort, sys, out)
        }
        Sub::RestrictScan { sys, m, sample, factor, level, csv, out } => {
            let mut c = with_sampling(with_measure(base_config(Command::RestrictScan, sys, out), m), sample);
            c.factor = factor;
            c.level = level;
            c.outputs.csv = csv;
            c
        }
        Sub::Plumpness { sys, probes, relocated, level, out } => {
            let mut c = base_config(Command::Plumpness, sys, out);
            c.probes = probes;
            c.relocated = relocated;
            c.level = level;
            c
        }
        Sub::Pushforward { sys, beta, out } => {
            let mut c = base_config(Command::Pushforward, sys, out);
            c.beta = Some(beta);
            c
        }
        Sub::Run { config } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = to_config(cli.command).and_then(|cfg| {
        if let Some(p) = &cli.save_config {
            std::fs::write(p, fml_core::report::to_json(&cfg)?)?;
        }
        commands::run(&cfg)
    });
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(path)) => {
            eprintln!("fml: invariant violated; witness written to {}", path.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fml: {e}");
            ExitCode::from(1)
        }
    }
}
