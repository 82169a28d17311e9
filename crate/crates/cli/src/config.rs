//! Serializable run configuration. A config plus the code version fixes every
//! output byte.

use std::path::PathBuf;

use fml_core::fatthin::RhoRule;
use fml_core::measure::N0Policy;
use fml_core::scan::{PointSource, Sampling};
use fml_core::{BaseRule, Point, SequenceSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Build,
    Validate,
    Measure,
    ScanDoubling,
    FatThin,
    Distort,
    RestrictScan,
    Plumpness,
    Pushforward,
}

/// Where the cube system comes from: a system file, or parameters to build one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSource {
    pub file: Option<PathBuf>,
    /// `1d` or `2d`.
    pub space: Option<String>,
    pub bases: Option<BaseRule>,
    /// Subsampled b-adic layout driven by this sequence.
    pub sequence: Option<SequenceSpec>,
    pub dyadic_base: Option<u64>,
    pub depth: Option<usize>,
    pub lazy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Quadrature tolerance.
    pub tau: f64,
    /// Allowed relative conservation error.
    pub epsilon: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tau: 1e-8, epsilon: 1e-9 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub witness: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: Point,
    pub r: f64,
}

pub fn default_sampling() -> Sampling {
    Sampling { count: 1000, seed: 0, source: PointSource::Uniform, r_min: 1e-4, r_max: 0.25 }
}

fn default_ts() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

fn default_factor() -> f64 {
    fml_core::fatthin::DEFAULT_RESTRICT_FACTOR
}

fn default_n0() -> N0Policy {
    N0Policy::Auto
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub system: SystemSource,
    #[serde(default)]
    pub rho: Option<RhoRule>,
    /// Depth of the analysis; defaults to the system depth.
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default = "default_n0")]
    pub n0: N0Policy,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_ts", rename = "T")]
    pub ts: Vec<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_factor")]
    pub factor: f64,
    /// Survivor level for restricted scans, or the deepest level for plumpness.
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub relocated: bool,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            system: SystemSource::default(),
            rho: None,
            depth: None,
            n0: N0Policy::Auto,
            sampling: default_sampling(),
            tolerances: Tolerances::default(),
            ts: default_ts(),
            beta: None,
            factor: default_factor(),
            level: None,
            probes: Vec::new(),
            relocated: false,
            outputs: Outputs::default(),
        }
    }

    /// Schema checks that need no computation.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let s = &self.system;
        if let Some(space) = &s.space {
            parse_space(space)?;
        }
        if s.bases.is_some() && s.sequence.is_some() {
            return bad("give either bases or sequence, not both".into());
        }
        if s.file.is_some() && (s.bases.is_some() || s.sequence.is_some()) {
            return bad("a system file excludes bases and sequence".into());
        }
        if !(self.tolerances.tau > 0.0) || !(self.tolerances.epsilon > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.ts.iter().any(|t| !(*t > 1.0)) {
            return bad("every T must exceed 1".into());
        }
        if !(self.factor > 1.0) {
            return bad(format!("factor {} must exceed 1", self.factor));
        }
        if self.sampling.r_min <= 0.0 || self.sampling.r_max < self.sampling.r_min {
            return bad("need 0 < rmin ≤ rmax".into());
        }
        let need_rho =
            matches!(self.command, Command::Measure | Command::ScanDoubling | Command::FatThin | Command::RestrictScan);
        if need_rho && self.rho.is_none() {
            return bad(format!("{:?} needs rho", self.command));
        }
        if self.command == Command::Pushforward && self.beta.is_none() {
            return bad("pushforward needs beta".into());
        }
        if self.command == Command::Distort && s.bases.is_none() {
            return bad("distort needs bases".into());
        }
        if self.command == Command::Plumpness && self.probes.is_empty() && !self.relocated {
            return bad("plumpness needs probes or relocated".into());
        }
        Ok(())
    }
}

pub fn parse_space(s: &str) -> Result<usize, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "1d" | "1" => Ok(1),
        "2d" | "2" => Ok(2),
        _ => Err(CliError::Config(format!("space '{s}' is not 1d or 2d"))),
    }
}

/// `1.5`, `fat` or `thin`.
pub fn parse_rho(s: &str) -> Result<RhoRule, String> {
    match s {
        "fat" => Ok(RhoRule::Fat),
        "thin" => Ok(RhoRule::Thin),
        _ => s
            .parse::<f64>()
            .map(|rho| RhoRule::Fixed { rho })
            .map_err(|_| format!("rho '{s}' is not a number, fat or thin")),
    }
}

/// `auto` or a split index.
pub fn parse_n0(s: &str) -> Result<N0Policy, String> {
    match s {
        "auto" => Ok(N0Policy::Auto),
        _ => s.parse::<usize>().map(N0Policy::Fixed).map_err(|_| format!("n0 '{s}' is not auto or an integer")),
    }
}

/// `uniform`, `centers:L` or `survivors:L`.
pub fn parse_source(s: &str) -> Result<PointSource, String> {
    let level = |v: &str| v.parse::<usize>().map_err(|_| format!("bad level in '{s}'"));
    match s.split_once(':') {
        None if s == "uniform" => Ok(PointSource::Uniform),
        Some(("centers", l)) => Ok(PointSource::CubeCenters { level: level(l)? }),
        Some(("survivors", l)) => Ok(PointSource::SurvivorPoints { level: level(l)? }),
        _ => Err(format!("point source '{s}' is not uniform, centers:L or survivors:L")),
    }
}

/// `x,R` or `x,y,R`.
pub fn parse_probe(s: &str) -> Result<Probe, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad probe '{s}'")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, r] => Ok(Probe { x: Point::new1(*x), r: *r }),
        [x, y, r] => Ok(Probe { x: Point::new2(*x, *y), r: *r }),
        _ => Err(format!("probe '{s}' needs 2 or 3 numbers")),
    }
}
