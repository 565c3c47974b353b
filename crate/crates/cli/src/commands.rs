use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde_json::{json, Value};
use stein_rotations::estimators::{
    ksd_v, mksde_rn, mksde_vmf, mle_vmf_numeric, mle_vmf_small_f, projected_mean, FittedParams,
    MleOptions, RnOptions,
};
use stein_rotations::experiments::{
    run_accuracy, run_cayley_gof, standard_ground_truths, AccuracyConfig, CayleyGofConfig, Method,
};
use stein_rotations::gof::{gof_test, GofConfig};
use stein_rotations::rng::{stream, sub_seed};
use stein_rotations::stein::VmfKernel;
use stein_rotations::{
    samplers, Family, KernelConfig, RnParams, Rotation, VmfParams, WeightedSamples,
};

use crate::generator::Generator;
use crate::output::{self, metadata, num};
use crate::{rotfile, Cli, Command, CommonArgs, DataArgs, Experiment, SizeArgs};

/// Stream indices derived from `--seed` for work other than data generation.
const MLE_STREAM: u64 = 1;
const NULL_STREAM: u64 = 2;

/// Significance levels reported by `experiment table1`.
const TABLE1_BETAS: [f64; 3] = [0.01, 0.05, 0.10];

pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(cli: Cli) -> Outcome {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w as usize)
            .build_global()
            .context("cannot start worker pool")?;
    }
    let streams = cli.workers.unwrap_or(1) as usize;
    match cli.command {
        Command::Estimate {
            family,
            method,
            mc_size,
            data,
            size,
            common,
        } => estimate(
            family,
            method,
            mc_size as usize,
            &data,
            &size,
            &common,
            streams,
        ),
        Command::Gof {
            family,
            beta,
            m,
            data,
            size,
            common,
        } => gof(family, beta, m as usize, &data, &size, &common, streams),
        Command::Sample {
            gen,
            n,
            dim,
            seed,
            out,
        } => sample(&gen, n, dim as usize, seed, out.as_deref(), streams),
        Command::Experiment(Experiment::Fig1 {
            trials,
            n,
            method,
            mc_size,
            common,
        }) => fig1(trials as usize, n, method, mc_size as usize, &common),
        Command::Experiment(Experiment::Table1 {
            trials,
            n,
            m,
            kappa,
            dim,
            common,
        }) => table1(trials as usize, n, m as usize, kappa, dim as usize, &common),
    }
}

/// Loads or generates the samples and describes where they came from.
fn load(
    data: &DataArgs,
    size: &SizeArgs,
    seed: u64,
    streams: usize,
) -> Result<(Vec<Rotation>, Value), Failure> {
    match (&data.input, &data.gen) {
        (Some(path), None) => {
            if size.n.is_some() {
                return Err(usage("--n applies only to generated data"));
            }
            let file =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let xs = rotfile::read(BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            if xs.is_empty() {
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{} contains no rotations",
                    path.display()
                )));
            }
            let source = json!({ "in": path.display().to_string(), "n": xs.len() });
            Ok((xs, source))
        }
        (None, Some(gen)) => {
            let n = size.n.ok_or_else(|| usage("--gen requires --n"))?;
            let dim = gen.dim(size.dim as usize);
            let xs = generate(gen, n, dim, seed, streams)?;
            Ok((
                xs,
                json!({ "gen": gen.to_string(), "n": n, "dim": dim, "sampling_streams": streams }),
            ))
        }
        _ => Err(usage("exactly one of --in or --gen is required")),
    }
}

fn generate(
    gen: &Generator,
    n: usize,
    dim: usize,
    seed: u64,
    streams: usize,
) -> Result<Vec<Rotation>, Failure> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if dim < 2 {
        return Err(usage("--dim must be at least 2"));
    }
    Ok(samplers::par_sample(seed, n, streams, |count, rng| {
        gen.sample(dim, count, rng)
    })?)
}

fn kernel(tau: f64) -> Result<KernelConfig, Failure> {
    KernelConfig::new(tau).map_err(|e| usage(e.to_string()))
}

fn rn_init(xs: &[Rotation]) -> anyhow::Result<RnParams> {
    Ok(RnParams::new(projected_mean(xs)?, 1.0)?)
}

fn params_json(p: &FittedParams<f64>) -> Value {
    match p {
        FittedParams::Vmf(v) => output::matrix(v.f()),
        FittedParams::Rn(r) => json!({
            "mu": output::matrix(r.mu().matrix()),
            "varsigma": r.varsigma(),
            "sigma": r.sigma(),
        }),
    }
}

fn estimate(
    family: Family,
    method: Method,
    mc_size: usize,
    data: &DataArgs,
    size: &SizeArgs,
    common: &CommonArgs,
    streams: usize,
) -> Outcome {
    let cfg = kernel(common.tau)?;
    if family == Family::Rn && method != Method::Mksde {
        return Err(usage(format!(
            "--method {} is only available for the vmf family",
            method.as_str()
        )));
    }
    let (xs, source) = load(data, size, common.seed, streams)?;
    let ws = WeightedSamples::unweighted(xs.clone())?;
    let mle = MleOptions {
        mc_size,
        ..MleOptions::default()
    };

    let start = Instant::now();
    let (params, objective, iterations, converged, rank_deficient, in_regime) =
        match (family, method) {
            (Family::Vmf, Method::Mksde) => {
                let r = mksde_vmf(&ws, &cfg)?;
                (
                    r.params,
                    r.objective,
                    r.iterations,
                    r.converged,
                    r.rank_deficient,
                    None,
                )
            }
            (Family::Rn, _) => {
                let r = mksde_rn(&ws, &cfg, &rn_init(&xs)?, &RnOptions::default())?;
                (
                    r.params,
                    r.objective,
                    r.iterations,
                    r.converged,
                    r.rank_deficient,
                    None,
                )
            }
            (Family::Vmf, Method::MleSmallF) => {
                let r = mle_vmf_small_f(&xs)?;
                let objective = vmf_objective(&ws, &r.params, &cfg)?;
                (
                    FittedParams::Vmf(r.params),
                    objective,
                    0,
                    true,
                    false,
                    Some(r.in_regime),
                )
            }
            (Family::Vmf, Method::MleNumeric) => {
                let p = mle_vmf_numeric(&xs, &mle, &mut stream(sub_seed(common.seed, MLE_STREAM)))?;
                let objective = vmf_objective(&ws, &p, &cfg)?;
                (FittedParams::Vmf(p), objective, 0, true, false, None)
            }
        };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut config =
        json!({ "family": family.to_string(), "method": method.as_str(), "data": source });
    if method == Method::MleNumeric {
        config["mc_size"] = json!(mc_size);
    }
    let mut report = json!({
        "metadata": metadata("estimate", common.seed, common.tau, config),
        "family": family.to_string(),
        "method": method.as_str(),
        "n": xs.len(),
        "dim": ws.dim(),
        "params_estimate": params_json(&params),
        "objective": objective,
        "iterations": iterations,
        "converged": converged,
        "rank_deficient": rank_deficient,
        "seed": common.seed,
        "runtime_ms": runtime_ms,
    });
    if let Some(flag) = in_regime {
        report["in_regime"] = json!(flag);
    }
    output::write_json(common.out.as_deref(), &report)?;
    Ok(())
}

fn vmf_objective(ws: &WeightedSamples, p: &VmfParams, cfg: &KernelConfig) -> anyhow::Result<f64> {
    Ok(ksd_v(ws, &VmfKernel::new(p.clone(), *cfg))?)
}

fn gof(
    family: Family,
    beta: f64,
    m: usize,
    data: &DataArgs,
    size: &SizeArgs,
    common: &CommonArgs,
    streams: usize,
) -> Outcome {
    let cfg = GofConfig::new(kernel(common.tau)?, beta, m).map_err(|e| usage(e.to_string()))?;
    let (xs, source) = load(data, size, common.seed, streams)?;
    if xs.len() < 2 {
        return Err(usage("the goodness-of-fit test needs at least two samples"));
    }
    let start = Instant::now();
    let r = gof_test(
        &xs,
        family,
        &cfg,
        &mut stream(sub_seed(common.seed, NULL_STREAM)),
    )?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let eig = &r.eigenvalues;
    let report = json!({
        "metadata": metadata("gof", common.seed, common.tau, json!({
            "family": family.to_string(), "beta": beta, "m": m, "data": source,
        })),
        "family": family.to_string(),
        "n": xs.len(),
        "statistic": r.statistic,
        "quantile": r.quantile,
        "reject": r.reject,
        "beta": r.beta,
        "m": r.m,
        "m_star": r.m_star,
        "theta_hat": params_json(&r.theta_hat),
        "eigenvalues": {
            "count": eig.len(),
            "sum": eig.iter().sum::<f64>(),
            "max": eig.first(),
            "positive": eig.iter().filter(|&&l| l > 0.0).count(),
            "top": &eig[..eig.len().min(10)],
        },
        "converged": r.converged,
        "rank_deficient": r.rank_deficient,
        "seed": common.seed,
        "runtime_ms": runtime_ms,
    });
    output::write_json(common.out.as_deref(), &report)?;
    Ok(())
}

fn sample(
    gen: &Generator,
    n: usize,
    dim: usize,
    seed: u64,
    out: Option<&Path>,
    streams: usize,
) -> Outcome {
    let dim = gen.dim(dim);
    let xs = generate(gen, n, dim, seed, streams)?;
    let mut w = output::sink(out)?;
    writeln!(
        w,
        "# stein-rotations {} sample gen={gen} n={n} dim={dim} seed={seed} streams={streams}",
        env!("CARGO_PKG_VERSION")
    )?;
    rotfile::write(&mut w, &xs)?;
    w.flush()?;
    Ok(())
}

fn fig1(
    trials: usize,
    ns: Vec<usize>,
    methods: Vec<Method>,
    mc_size: usize,
    common: &CommonArgs,
) -> Outcome {
    let kernel = kernel(common.tau)?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(usage("--n needs one or more positive sample sizes"));
    }
    if methods.is_empty() {
        return Err(usage("--method needs at least one method"));
    }
    let truths = standard_ground_truths(common.seed);
    let cfg = AccuracyConfig {
        truths: truths.clone(),
        ns: ns.clone(),
        trials,
        seed: common.seed,
        kernel,
        methods: methods.clone(),
        mle: MleOptions {
            mc_size,
            ..MleOptions::default()
        },
    };
    let rows = run_accuracy(&cfg);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} n={} trial={} {}: {}",
            r.f0_label,
            r.n,
            r.trial,
            r.method.as_str(),
            r.error.as_deref().unwrap_or_default()
        );
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.f0_label.clone(),
                r.n.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.method.as_str().to_string(),
                num(r.frob_error),
                num(r.runtime_ms),
            ]
        })
        .collect();
    let meta = metadata(
        "experiment fig1",
        common.seed,
        common.tau,
        json!({
            "trials": trials,
            "n": ns,
            "methods": methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "mc_size": mc_size,
            "ground_truths": truths.iter().map(|t| json!({ "label": t.label, "f0": output::matrix(&t.f0) })).collect::<Vec<_>>(),
            "failed_rows": rows.iter().filter(|r| r.error.is_some()).count(),
        }),
    );
    output::write_csv(
        common.out.as_deref(),
        &[
            "f0_label",
            "n",
            "trial",
            "seed",
            "method",
            "frob_error",
            "runtime_ms",
        ],
        &table,
        &meta,
    )?;
    Ok(())
}

fn table1(
    trials: usize,
    n: usize,
    m: usize,
    kappas: Vec<f64>,
    dim: usize,
    common: &CommonArgs,
) -> Outcome {
    let kernel = kernel(common.tau)?;
    if n < 2 {
        return Err(usage("--n must be at least 2"));
    }
    if kappas.is_empty() || kappas.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
        return Err(usage("--kappa needs one or more non-negative values"));
    }
    let cfg = CayleyGofConfig {
        kappas: kappas.clone(),
        n,
        dim,
        trials,
        seed: common.seed,
        kernel,
        m,
        betas: TABLE1_BETAS.to_vec(),
    };
    let rows = run_cayley_gof(&cfg);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: kappa={} trial={}: {}",
            r.kappa,
            r.trial,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.kappa),
                r.trial.to_string(),
                r.seed.to_string(),
                r.n.to_string(),
                num(r.statistic),
            ];
            row.extend(r.quantiles.iter().map(|&q| num(q)));
            row.extend(r.rejects.iter().map(|b| b.to_string()));
            row
        })
        .collect();
    let meta = metadata(
        "experiment table1",
        common.seed,
        common.tau,
        json!({
            "trials": trials,
            "n": n,
            "dim": dim,
            "m": m,
            "kappa": kappas,
            "betas": TABLE1_BETAS,
            "null_family": "vmf",
            "cayley_centre": "identity",
            "failed_rows": rows.iter().filter(|r| r.error.is_some()).count(),
        }),
    );
    output::write_csv(
        common.out.as_deref(),
        &[
            "kappa",
            "trial",
            "seed",
            "n",
            "statistic",
            "quantile_0.01",
            "quantile_0.05",
            "quantile_0.10",
            "reject_0.01",
            "reject_0.05",
            "reject_0.10",
        ],
        &table,
        &meta,
    )?;
    Ok(())
}
