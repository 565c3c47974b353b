//! JSON and CSV writers with a shared, timestamp-free metadata block.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// Run metadata: everything needed to reproduce the output and nothing that varies between runs.
pub fn metadata(command: &str, seed: u64, tau: f64, config: Value) -> Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "tau": tau,
        "config": config,
    })
}

/// Row-major nested arrays.
pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| json!((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()))
            .collect(),
    )
}

pub fn sink(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes a CSV table; with an output file, the metadata goes to `<out>.meta.json` beside it.
pub fn write_csv(
    out: Option<&Path>,
    header: &[&str],
    rows: &[Vec<String>],
    meta: &Value,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    if let Some(path) = out {
        write_json(Some(&sidecar(path)), meta)?;
    }
    Ok(())
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Shortest round-trip representation; non-finite values print as `NaN`/`inf`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            sidecar(Path::new("out/fig1.csv")),
            PathBuf::from("out/fig1.csv.meta.json")
        );
    }

    #[test]
    fn matrix_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matrix(&m), json!([[1.0, 2.0], [3.0, 4.0]]));
    }

    #[test]
    fn numbers_round_trip() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
