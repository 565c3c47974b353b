//! Seeded experiment harnesses: estimator accuracy against ground truth and
//! goodness-of-fit statistics on Cayley data.
//!
//! Every trial derives its own seed from the run seed and its grid position,
//! trials run in parallel, and rows come back sorted by grid position, so the
//! output depends only on the configuration (apart from timings).

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Result;
use crate::estimators::{
    mksde_vmf, mle_vmf_numeric, mle_vmf_small_f, FittedParams, MleOptions, RnOptions,
    WeightedSamples,
};
use crate::gof::{gof_fit, Family, NullDistribution};
use crate::lie::Rotation;
use crate::rng::{stream, sub_seed, substream};
use crate::samplers::{sample_cayley, sample_vmf, CayleyParams};
use crate::stein::{KernelConfig, VmfParams};

/// Seed of trial `trial` in grid cell `cell`.
pub fn trial_seed(seed: u64, cell: u64, trial: u64) -> u64 {
    sub_seed(sub_seed(seed, cell), trial)
}

/// Estimators compared in the accuracy experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mksde,
    MleSmallF,
    MleNumeric,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mksde, Method::MleSmallF, Method::MleNumeric];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mksde => "mksde",
            Method::MleSmallF => "mle_smallF",
            Method::MleNumeric => "mle_numeric",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| {
                m.as_str().eq_ignore_ascii_case(s)
                    || m.as_str().replace('_', "-").eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| crate::Error::Parse(format!("unknown method '{s}'")))
    }
}

/// Fits `F` with one method.
pub fn estimate_vmf(
    samples: &[Rotation<f64>],
    method: Method,
    kernel: &KernelConfig<f64>,
    mle: &MleOptions,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    Ok(match method {
        Method::Mksde => {
            match mksde_vmf(&WeightedSamples::unweighted(samples.to_vec())?, kernel)?.params {
                FittedParams::Vmf(p) => p.into_matrix(),
                FittedParams::Rn(_) => unreachable!(),
            }
        }
        Method::MleSmallF => mle_vmf_small_f(samples)?.params.into_matrix(),
        Method::MleNumeric => mle_vmf_numeric(samples, mle, rng)?.into_matrix(),
    })
}

/// A labelled ground-truth parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub label: String,
    pub f0: DMatrix<f64>,
}

/// The six 3×3 ground truths: `0.1I, 0.5I, I, 5I, diag(0.1,0.2,0.3)` and one
/// matrix with i.i.d. standard normal entries drawn from `substream(seed, u64::MAX)`.
pub fn standard_ground_truths(seed: u64) -> Vec<GroundTruth> {
    let i3 = DMatrix::<f64>::identity(3, 3);
    let mut rng = substream(seed, u64::MAX);
    let random = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    vec![
        GroundTruth {
            label: "0.1I".into(),
            f0: &i3 * 0.1,
        },
        GroundTruth {
            label: "0.5I".into(),
            f0: &i3 * 0.5,
        },
        GroundTruth {
            label: "I".into(),
            f0: i3.clone(),
        },
        GroundTruth {
            label: "5I".into(),
            f0: &i3 * 5.0,
        },
        GroundTruth {
            label: "diag(0.1,0.2,0.3)".into(),
            f0: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.2, 0.3])),
        },
        GroundTruth {
            label: "random".into(),
            f0: random,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyConfig {
    pub truths: Vec<GroundTruth>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub kernel: KernelConfig<f64>,
    pub methods: Vec<Method>,
    pub mle: MleOptions,
}

/// One estimator run. `frob_error` is NaN and `error` is set when the trial failed.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub f0_label: String,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub frob_error: f64,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

/// Runs every (truth, n, trial) cell; each trial draws one vMF sample shared by all methods.
pub fn run_accuracy(cfg: &AccuracyConfig) -> Vec<AccuracyRow> {
    let cells: Vec<(usize, usize, usize)> = (0..cfg.truths.len())
        .flat_map(|t| (0..cfg.ns.len()).flat_map(move |k| (0..cfg.trials).map(move |r| (t, k, r))))
        .collect();
    let mut rows: Vec<AccuracyRow> = cells
        .into_par_iter()
        .flat_map_iter(|(t, k, trial)| {
            let truth = &cfg.truths[t];
            let n = cfg.ns[k];
            let seed = trial_seed(cfg.seed, (t * cfg.ns.len() + k) as u64, trial as u64);
            let mut rng = stream(seed);
            let row = |method: Method, frob_error: f64, runtime_ms: f64, error: Option<String>| {
                AccuracyRow {
                    f0_label: truth.label.clone(),
                    n,
                    trial,
                    seed,
                    method,
                    frob_error,
                    runtime_ms,
                    error,
                }
            };
            let samples =
                VmfParams::new(truth.f0.clone()).and_then(|p| sample_vmf(&p, n, &mut rng));
            let samples = match samples {
                Ok(s) => s,
                Err(e) => {
                    return cfg
                        .methods
                        .iter()
                        .map(|&m| row(m, f64::NAN, 0.0, Some(e.to_string())))
                        .collect::<Vec<_>>()
                }
            };
            cfg.methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let fit = estimate_vmf(&samples, method, &cfg.kernel, &cfg.mle, &mut rng);
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    match fit {
                        Ok(f) => row(method, (f - &truth.f0).norm(), ms, None),
                        Err(e) => row(method, f64::NAN, ms, Some(e.to_string())),
                    }
                })
                .collect()
        })
        .collect();
    let order = |label: &str| cfg.truths.iter().position(|t| t.label == label);
    rows.sort_by(|a, b| {
        (order(&a.f0_label), a.n, a.trial, a.method).cmp(&(
            order(&b.f0_label),
            b.n,
            b.trial,
            b.method,
        ))
    });
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct CayleyGofConfig {
    pub kappas: Vec<f64>,
    pub n: usize,
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub kernel: KernelConfig<f64>,
    /// Null draws per trial.
    pub m: usize,
    pub betas: Vec<f64>,
}

impl CayleyGofConfig {
    /// n = 500 on SO(3), τ = 1, m = 10⁴, κ ∈ {0.2, 0.5, 1, 1.5, 2}, β ∈ {0.01, 0.05, 0.1}.
    pub fn standard(trials: usize, seed: u64) -> Self {
        Self {
            kappas: vec![0.2, 0.5, 1.0, 1.5, 2.0],
            n: 500,
            dim: 3,
            trials,
            seed,
            kernel: KernelConfig::default(),
            m: 10_000,
            betas: vec![0.01, 0.05, 0.10],
        }
    }
}

/// One test of Cayley data against the vMF family; quantiles and decisions follow `betas`.
#[derive(Debug, Clone, PartialEq)]
pub struct CayleyGofRow {
    pub kappa: f64,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub statistic: f64,
    pub quantiles: Vec<f64>,
    pub rejects: Vec<bool>,
    pub error: Option<String>,
}

/// Cayley samples centred at `I` tested against the vMF family. One null
/// simulation per trial serves every significance level.
pub fn run_cayley_gof(cfg: &CayleyGofConfig) -> Vec<CayleyGofRow> {
    let cells: Vec<(usize, usize)> = (0..cfg.kappas.len())
        .flat_map(|k| (0..cfg.trials).map(move |r| (k, r)))
        .collect();
    let mut rows: Vec<(usize, CayleyGofRow)> = cells
        .into_par_iter()
        .map(|(k, trial)| {
            let kappa = cfg.kappas[k];
            let seed = trial_seed(cfg.seed, k as u64, trial as u64);
            let result = (|| -> Result<(f64, Vec<f64>)> {
                let mut rng = stream(seed);
                let params = CayleyParams::new(Rotation::identity(cfg.dim), kappa)?;
                let samples = sample_cayley(&params, cfg.n, &mut rng)?;
                let fit = gof_fit(&samples, Family::Vmf, &cfg.kernel, &RnOptions::default())?;
                let null = NullDistribution::simulate(&fit.eigenvalues, cfg.m, rng.random())?;
                let quantiles = cfg
                    .betas
                    .iter()
                    .map(|&b| null.quantile(b))
                    .collect::<Result<Vec<_>>>()?;
                Ok((fit.statistic, quantiles))
            })();
            let row = match result {
                Ok((statistic, quantiles)) => CayleyGofRow {
                    kappa,
                    trial,
                    seed,
                    n: cfg.n,
                    statistic,
                    rejects: quantiles.iter().map(|&q| statistic > q).collect(),
                    quantiles,
                    error: None,
                },
                Err(e) => CayleyGofRow {
                    kappa,
                    trial,
                    seed,
                    n: cfg.n,
                    statistic: f64::NAN,
                    quantiles: vec![f64::NAN; cfg.betas.len()],
                    rejects: vec![false; cfg.betas.len()],
                    error: Some(e.to_string()),
                },
            };
            (k, row)
        })
        .collect();
    rows.sort_by_key(|(k, r)| (*k, r.trial));
    rows.into_iter().map(|(_, r)| r).collect()
}

/// Median of the finite values, or NaN when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
