//! CSV tables and versioned JSON documents.
//!
//! Floats are written with 17 significant digits so every value
//! round-trips exactly; quoting follows RFC 4180 via the `csv` crate.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::PhaseRow;
use crate::spectral::{SpectralDomain, SpectralField};

/// Schema version written into and required from every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Write a header and rows as RFC-4180 CSV.
pub fn write_csv<W: Write, R: AsRef<[String]>>(w: W, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(r.as_ref())?;
    }
    out.flush()?;
    Ok(())
}

fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(serde_json::Value::Null) | Err(_) => String::new(),
        Ok(other) => other.to_string(),
    }
}

pub fn phase_table_csv<W: Write>(w: W, rows: &[PhaseRow]) -> Result<()> {
    write_csv(
        w,
        &["alpha", "gamma", "p", "scale", "prediction", "theorem_case", "observed", "t_star", "error"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.alpha),
                fmt_f64(r.gamma),
                fmt_f64(r.p),
                fmt_f64(r.scale),
                tag(&r.prediction),
                tag(&r.theorem_case),
                tag(&r.observed),
                fmt_opt(r.t_star),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Columns `t`, then one column per named series.
pub fn series_csv<W: Write>(w: W, t: &[f64], names: &[&str], cols: &[&[f64]]) -> Result<()> {
    if names.len() != cols.len() || cols.iter().any(|c| c.len() != t.len()) {
        return Err(Error::Precondition("series lengths differ".into()));
    }
    let mut header = vec!["t"];
    header.extend_from_slice(names);
    write_csv(
        w,
        &header,
        (0..t.len()).map(|i| {
            let mut r = vec![fmt_f64(t[i])];
            r.extend(cols.iter().map(|c| fmt_f64(c[i])));
            r
        }),
    )
}

/// Physical samples of a field: `x,u` in 1D, `x,y,u` in 2D (interior nodes).
pub fn field_csv<W: Write>(w: W, domain: &SpectralDomain, field: &SpectralField) -> Result<()> {
    let axis = domain.axis();
    let phys = field.phys();
    if domain.dimension() == 1 {
        write_csv(
            w,
            &["x", "u"],
            axis.iter().zip(phys).map(|(x, u)| vec![fmt_f64(*x), fmt_f64(*u)]),
        )
    } else {
        let n = axis.len();
        write_csv(
            w,
            &["x", "y", "u"],
            (0..n * n).map(|i| vec![fmt_f64(axis[i / n]), fmt_f64(axis[i % n]), fmt_f64(phys[i])]),
        )
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a leading `schema_version` field.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Stamped {
        schema_version: SCHEMA_VERSION,
        body: value,
    })?)
}

#[derive(Deserialize)]
struct Version {
    schema_version: Option<u32>,
}

/// Parse a config, rejecting missing or foreign schema versions.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let ver: Version = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
    match ver.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::Config(format!(
                "schema_version {other} not supported (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(Error::Config("missing schema_version".into())),
    }
    let mut obj = v;
    if let Some(m) = obj.as_object_mut() {
        m.remove("schema_version");
    }
    serde_json::from_value(obj).map_err(|e| Error::Config(e.to_string()))
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}

/// Write to `path`, or stdout when `None`.
pub fn with_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(File::create(p)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}
