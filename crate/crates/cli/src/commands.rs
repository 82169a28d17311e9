use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fml_core::cube::{build_adic_system, build_distorted_carpet, build_subsampled_dyadic, pushforward_power};
use fml_core::fatthin::{
    choose_rho, fat_thin_on, relative_plumpness_probe, relocation_plumpness_probes, restricted_doubling_scan,
};
use fml_core::measure::{choose_n0, MeasureTree};
use fml_core::report::{doubling_csv, doubling_summary, fat_thin_csv, to_json};
use fml_core::scan::doubling_scan;
use fml_core::validate::validate;
use fml_core::{AlphaSequence, CubeSystem, SpaceModel};
use serde_json::json;

use crate::config::{parse_space, Command, RunConfig};
use crate::CliError;

/// Result of a run that got as far as computing.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// An invariant failed; the witness was written to this path.
    Violation(PathBuf),
}

pub fn load_system(cfg: &RunConfig) -> Result<CubeSystem, CliError> {
    let s = &cfg.system;
    if let Some(path) = &s.file {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(CubeSystem::from_json(&serde_json::from_str(&text)?)?);
    }
    let depth = s.depth.ok_or_else(|| CliError::Config("building a system needs a depth".into()))?;
    if cfg.command == Command::Distort {
        if s.space.as_deref().is_some_and(|sp| parse_space(sp).ok() != Some(2)) {
            return Err(CliError::Config("the distorted carpet lives in 2d".into()));
        }
        return Ok(build_distorted_carpet(s.bases.clone().unwrap(), depth, s.lazy)?);
    }
    let space = SpaceModel::new(parse_space(s.space.as_deref().unwrap_or("1d"))?)?;
    if let Some(bases) = &s.bases {
        return Ok(build_adic_system(space, bases.clone(), depth, s.lazy)?);
    }
    if let Some(seq) = &s.sequence {
        let alpha = AlphaSequence::new(seq.clone())?;
        return Ok(build_subsampled_dyadic(space, s.dyadic_base.unwrap_or(2), alpha, depth, s.lazy)?);
    }
    Err(CliError::Config("no system: give a system file, bases or a sequence".into()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn witness_path(cfg: &RunConfig) -> PathBuf {
    match (&cfg.outputs.witness, &cfg.outputs.json) {
        (Some(w), _) => w.clone(),
        (None, Some(j)) => j.with_extension("witness.json"),
        (None, None) => PathBuf::from("witness.json"),
    }
}

fn violation(cfg: &RunConfig, witness: serde_json::Value) -> Result<Outcome, CliError> {
    let path = witness_path(cfg);
    fs::write(&path, to_json(&witness)?)?;
    Ok(Outcome::Violation(path))
}

fn tree(cfg: &RunConfig, system: CubeSystem) -> Result<MeasureTree, CliError> {
    let rule = cfg.rho.ok_or_else(|| CliError::Config("rho is required".into()))?;
    let rho = choose_rho(&system, rule)?;
    let depth = cfg.depth.unwrap_or(system.depth());
    Ok(MeasureTree::new(Arc::new(system), rho, cfg.n0, depth, cfg.tolerances.tau)?)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.check()?;
    let out = cfg.outputs.json.as_deref();
    match cfg.command {
        Command::Build | Command::Distort => {
            let s = load_system(cfg)?;
            write_text(out, &to_json(&s.to_json()?)?)?;
            Ok(Outcome::Success)
        }
        Command::Pushforward => {
            let s = pushforward_power(&load_system(cfg)?, cfg.beta.unwrap())?;
            write_text(out, &to_json(&s.to_json()?)?)?;
            Ok(Outcome::Success)
        }
        Command::Validate => {
            let s = load_system(cfg)?;
            let depth = cfg.depth.unwrap_or(s.depth());
            let report = validate(&s, depth, &cfg.ts)?;
            write_text(out, &to_json(&report)?)?;
            match report.first_failure() {
                None => Ok(Outcome::Success),
                Some(check) => violation(cfg, json!({ "invariant": "axiom", "check": check })),
            }
        }
        Command::Measure => {
            let t = tree(cfg, load_system(cfg)?)?;
            let audit = t.conservation_audit()?;
            let s = t.system();
            let level1: Vec<_> =
                if t.depth() >= 1 { s.level(1)?.into_iter().map(|c| c.id).collect() } else { Vec::new() };
            let report = json!({
                "rho": t.rho(),
                "depth": t.depth(),
                "tolerance": t.tolerance(),
                "n0": t.n0(),
                "n0_report": choose_n0(s, t.depth())?,
                "conservation": audit,
                "fitted_c4": t.fitted_c4(),
                "coefficients": t.coefficients().into_iter().map(|(a, r)| json!({"a": a, "r": r})).collect::<Vec<_>>(),
                "empty_i_splits": t.empty_i_splits(),
                "k_level1": t.k_table(&level1)?.into_iter().map(|(id, k)| json!({"path": id, "k": k})).collect::<Vec<_>>(),
            });
            write_text(out, &to_json(&report)?)?;
            if audit.max_relative_error > cfg.tolerances.epsilon {
                return violation(
                    cfg,
                    json!({
                        "invariant": "mass-conservation",
                        "cube": audit.worst,
                        "relative_error": audit.max_relative_error,
                        "epsilon": cfg.tolerances.epsilon,
                    }),
                );
            }
            Ok(Outcome::Success)
        }
        Command::ScanDoubling => {
            let t = tree(cfg, load_system(cfg)?)?;
            let rep = doubling_scan(&t, &cfg.sampling)?;
            if let Some(p) = &cfg.outputs.csv {
                fs::write(p, doubling_csv(&rep.samples)?)?;
            }
            write_text(out, &to_json(&doubling_summary(&rep))?)?;
            if let Some(bad) = rep.samples.iter().find(|s| !(s.nu_r > 0.0) || !s.ratio.is_finite()) {
                return violation(cfg, json!({ "invariant": "positive-finite-ball-mass", "sample": bad }));
            }
            Ok(Outcome::Success)
        }
        Command::FatThin => {
            let t = tree(cfg, load_system(cfg)?)?;
            let rep = fat_thin_on(&t)?;
            if let Some(p) = &cfg.outputs.csv {
                fs::write(p, fat_thin_csv(&rep.rows)?)?;
            }
            write_text(out, &to_json(&rep)?)?;
            let broken = rep.rows.iter().find(|r| r.product_bound.is_some_and(|b| r.survivor_mass < b * (1.0 - 1e-12)));
            if let Some(row) = broken {
                return violation(cfg, json!({ "invariant": "survivor-product-bound", "row": row, "cec": rep.cec }));
            }
            Ok(Outcome::Success)
        }
        Command::RestrictScan => {
            let t = tree(cfg, load_system(cfg)?)?;
            let level = cfg.level.unwrap_or(t.depth());
            let rep = restricted_doubling_scan(&t, level, &cfg.sampling, cfg.factor)?;
            if let Some(p) = &cfg.outputs.csv {
                fs::write(p, restricted_csv(&rep))?;
            }
            write_text(out, &to_json(&rep)?)?;
            Ok(Outcome::Success)
        }
        Command::Plumpness => {
            let s = load_system(cfg)?;
            let mut probes: Vec<_> = cfg.probes.iter().map(|p| (p.x, p.r)).collect();
            if cfg.relocated {
                probes.extend(relocation_plumpness_probes(&s)?.into_iter().map(|(_, x, r)| (x, r)));
            }
            for (x, _) in &probes {
                if x.dim() != s.dim() {
                    return Err(CliError::Config(format!(
                        "probe dimension {} does not match the {}d system",
                        x.dim(),
                        s.dim()
                    )));
                }
            }
            let rep = relative_plumpness_probe(&s, cfg.level.unwrap_or(s.depth()), &probes)?;
            write_text(out, &to_json(&rep)?)?;
            Ok(Outcome::Success)
        }
    }
}

/// `split,alpha,r,nu_r,nu_fr,ratio` for the probes at relocated children.
fn restricted_csv(rep: &fml_core::fatthin::RestrictedReport) -> String {
    let mut text = String::from("split,alpha,r,nu_r,nu_fr,ratio\n");
    for p in &rep.relocation_probes {
        let s = &p.sample;
        text.push_str(&format!("{},{},{},{},{},{}\n", p.split, p.alpha, s.r, s.nu_r, s.nu_fr, s.ratio));
    }
    text
}
