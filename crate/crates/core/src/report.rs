//! CSV tables and JSON summaries. Floats use the shortest representation that
//! parses back to the same value, so every table round-trips exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fatthin::{FatThinReport, LevelRow};
use crate::geometry::Point;
use crate::scan::{DoublingReport, Sample};

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn parse(field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::InvalidSpec(format!("bad number {field:?}")))
}

/// Bumped whenever a CSV column list changes.
pub const CSV_VERSION: u32 = 1;

pub fn doubling_header(q: usize) -> Vec<&'static str> {
    if q == 1 {
        vec!["x", "r", "nu_r", "nu_2r", "ratio"]
    } else {
        vec!["x", "y", "r", "nu_r", "nu_2r", "ratio"]
    }
}

pub fn doubling_csv(samples: &[Sample]) -> Result<String> {
    let q = samples.first().map_or(1, |s| s.x.dim());
    let mut w = writer();
    w.write_record(doubling_header(q))?;
    for s in samples {
        let mut rec: Vec<String> = s.x.coords().iter().map(|&c| num(c)).collect();
        rec.extend([num(s.r), num(s.nu_r), num(s.nu_2r), num(s.ratio)]);
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn parse_doubling_csv(text: &str) -> Result<Vec<Sample>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let q = match rd.headers()?.len() {
        5 => 1,
        6 => 2,
        n => return Err(Error::InvalidSpec(format!("doubling table has {n} columns"))),
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(parse).collect::<Result<_>>()?;
        out.push(Sample {
            x: Point::from_slice(&v[..q]).unwrap(),
            r: v[q],
            nu_r: v[q + 1],
            nu_2r: v[q + 2],
            ratio: v[q + 3],
        });
    }
    Ok(out)
}

pub const FAT_THIN_HEADER: [&str; 5] = ["n", "alpha_n", "center_ratio", "survivor_mass", "product_bound"];

pub fn fat_thin_csv(rows: &[LevelRow]) -> Result<String> {
    let mut w = writer();
    w.write_record(FAT_THIN_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            num(r.alpha_n),
            num(r.center_ratio),
            num(r.survivor_mass),
            r.product_bound.map(num).unwrap_or_default(),
        ])?;
    }
    finish(w)
}

pub fn parse_fat_thin_csv(text: &str) -> Result<Vec<LevelRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::InvalidSpec(format!("fat-thin row has {} fields", rec.len())));
        }
        out.push(LevelRow {
            n: rec[0].trim().parse().map_err(|_| Error::InvalidSpec(format!("bad level {:?}", &rec[0])))?,
            alpha_n: parse(&rec[1])?,
            center_ratio: parse(&rec[2])?,
            survivor_mass: parse(&rec[3])?,
            product_bound: if rec[4].trim().is_empty() { None } else { Some(parse(&rec[4])?) },
        });
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// The doubling report without its sample table.
pub fn doubling_summary(r: &DoublingReport) -> serde_json::Value {
    serde_json::json!({
        "csv_version": CSV_VERSION,
        "sampling": r.sampling,
        "samples": r.samples.len(),
        "max_ratio": r.max_ratio,
        "zero_denominators": r.zero_denominators,
        "fitted_constants": r.fitted_constants,
    })
}

pub fn fat_thin_summary(r: &FatThinReport) -> serde_json::Value {
    serde_json::json!({
        "rho": r.rho,
        "exponent": r.exponent,
        "n0": r.n0,
        "cec": r.cec,
        "n1": r.n1,
        "limit_bound": r.limit_bound,
        "extrapolated_limit": r.extrapolated_limit,
        "verdict": r.verdict,
        "membership": r.membership,
        "prediction": r.prediction,
        "consistent": r.consistent,
        "empty_i_splits": r.empty_i_splits,
    })
}
