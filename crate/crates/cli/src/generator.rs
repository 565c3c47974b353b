//! Generator specs such as `vmf:F=5*I3`, `cayley:kappa=1`, `rn:sigma=0.3` or `haar`.
//!
//! Matrices are written as `I3`, `2.5*I3`, `diag(0.1,0.2,0.3)` or
//! `[1,0,0;0,1,0;0,0,1]` (rows separated by `;`).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use stein_rotations::{lie, rng::Stream, samplers, CayleyParams, RnParams, Rotation, VmfParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Vmf {
        f: DMatrix<f64>,
    },
    Cayley {
        kappa: f64,
        m: Option<DMatrix<f64>>,
    },
    Rn {
        varsigma: f64,
        mu: Option<DMatrix<f64>>,
    },
    Haar,
}

impl Generator {
    /// Matrix size implied by the spec, or `fallback` when it implies none.
    pub fn dim(&self, fallback: usize) -> usize {
        match self {
            Generator::Vmf { f } => f.nrows(),
            Generator::Cayley { m: Some(m), .. } | Generator::Rn { mu: Some(m), .. } => m.nrows(),
            _ => fallback,
        }
    }

    pub fn sample(
        &self,
        dim: usize,
        count: usize,
        rng: &mut Stream,
    ) -> stein_rotations::Result<Vec<Rotation>> {
        let centre = |m: &Option<DMatrix<f64>>| match m {
            Some(m) => Rotation::new(m.clone()),
            None => Ok(Rotation::identity(dim)),
        };
        match self {
            Generator::Vmf { f } => samplers::sample_vmf(&VmfParams::new(f.clone())?, count, rng),
            Generator::Cayley { kappa, m } => {
                samplers::sample_cayley(&CayleyParams::new(centre(m)?, *kappa)?, count, rng)
            }
            Generator::Rn { varsigma, mu } => {
                samplers::sample_rn(&RnParams::new(centre(mu)?, *varsigma)?, count, rng)
            }
            Generator::Haar => lie::haar_sample(dim, count, rng),
        }
    }
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut args = Vec::new();
        for part in split_top_level(rest)
            .into_iter()
            .filter(|p| !p.trim().is_empty())
        {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
            args.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let take = |key: &str| args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let allow = |keys: &[&str]| match args.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
            Some((k, _)) => Err(format!("unknown parameter '{k}' for generator '{family}'")),
            None => Ok(()),
        };
        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("'{v}' is not a number"))
        };
        match family.trim().to_ascii_lowercase().as_str() {
            "vmf" => {
                allow(&["f"])?;
                let f = parse_matrix(take("f").ok_or("vmf needs F=<matrix>")?)?;
                Ok(Generator::Vmf { f })
            }
            "cayley" => {
                allow(&["kappa", "m"])?;
                let kappa = number(take("kappa").ok_or("cayley needs kappa=<value>")?)?;
                Ok(Generator::Cayley {
                    kappa,
                    m: take("m").map(parse_matrix).transpose()?,
                })
            }
            "rn" => {
                allow(&["sigma", "varsigma", "mu"])?;
                let varsigma = match (take("sigma"), take("varsigma")) {
                    (Some(s), None) => {
                        let sigma = number(s)?;
                        if sigma <= 0.0 {
                            return Err("sigma must be positive".into());
                        }
                        1.0 / (sigma * sigma)
                    }
                    (None, Some(v)) => number(v)?,
                    _ => {
                        return Err(
                            "rn needs exactly one of sigma=<value> or varsigma=<value>".into()
                        )
                    }
                };
                Ok(Generator::Rn {
                    varsigma,
                    mu: take("mu").map(parse_matrix).transpose()?,
                })
            }
            "haar" => {
                allow(&[])?;
                Ok(Generator::Haar)
            }
            other => Err(format!(
                "unknown generator '{other}' (expected vmf, cayley, rn or haar)"
            )),
        }
    }
}

impl fmt::Display for Generator {
    /// Canonical spec that parses back to the same generator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Vmf { f: m } => write!(f, "vmf:F={}", format_matrix(m)),
            Generator::Cayley { kappa, m } => {
                write!(f, "cayley:kappa={kappa}")?;
                m.iter()
                    .try_for_each(|m| write!(f, ",M={}", format_matrix(m)))
            }
            Generator::Rn { varsigma, mu } => {
                write!(f, "rn:varsigma={varsigma}")?;
                mu.iter()
                    .try_for_each(|m| write!(f, ",mu={}", format_matrix(m)))
            }
            Generator::Haar => write!(f, "haar"),
        }
    }
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            r.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    format!("[{}]", rows.join(";"))
}

/// Splits on commas that are not inside brackets or parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>, String> {
    let s = s.trim();
    if let Some((scale, rest)) = s.split_once('*') {
        let scale: f64 = scale
            .trim()
            .parse()
            .map_err(|_| format!("bad scale factor in '{s}'"))?;
        return Ok(parse_matrix(rest)? * scale);
    }
    if let Some(n) = s.strip_prefix('I') {
        let n: usize = n
            .parse()
            .map_err(|_| format!("bad identity size in '{s}'"))?;
        if n == 0 {
            return Err("identity size must be positive".into());
        }
        return Ok(DMatrix::identity(n, n));
    }
    if let Some(inner) = s.strip_prefix("diag(").and_then(|r| r.strip_suffix(')')) {
        let d = numbers(inner)?;
        if d.is_empty() {
            return Err("diag() needs at least one entry".into());
        }
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)));
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let rows = inner
            .split(';')
            .map(numbers)
            .collect::<Result<Vec<_>, _>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(format!("matrix '{s}' is not square"));
        }
        return Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()));
    }
    Err(format!(
        "cannot parse matrix '{s}' (use I3, c*I3, diag(..) or [a,b;c,d])"
    ))
}

fn numbers(s: &str) -> Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("'{t}' is not a number"))
        })
        .collect()
}
