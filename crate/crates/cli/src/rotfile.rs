//! Plain-text rotation files: one sample per line, N² whitespace-separated
//! row-major entries. Blank lines and `#` comments are ignored.

use std::io::{BufRead, Write};

use anyhow::{bail, Context};
use nalgebra::DMatrix;
use stein_rotations::Rotation;

/// Inputs further than this from SO(N) are rejected rather than projected.
pub const LOAD_TOLERANCE: f64 = 1e-6;

pub fn read(reader: impl BufRead) -> anyhow::Result<Vec<Rotation>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("line {}: non-numeric entry", lineno + 1))?;
        let n = (values.len() as f64).sqrt().round() as usize;
        if n * n != values.len() || n < 2 {
            bail!(
                "line {}: {} entries is not N² for some N ≥ 2",
                lineno + 1,
                values.len()
            );
        }
        if *dim.get_or_insert(n) != n {
            bail!(
                "line {}: expected {} entries",
                lineno + 1,
                dim.unwrap() * dim.unwrap()
            );
        }
        let rot =
            Rotation::from_matrix_within(DMatrix::from_row_slice(n, n, &values), LOAD_TOLERANCE)
                .with_context(|| format!("line {}", lineno + 1))?;
        out.push(rot);
    }
    Ok(out)
}

pub fn write(mut w: impl Write, rotations: &[Rotation]) -> std::io::Result<()> {
    for r in rotations {
        let m = r.matrix();
        let line: Vec<String> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| format!("{:e}", m[(i, j)])))
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}
