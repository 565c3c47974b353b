//! Minimum-KSD goodness-of-fit test.
//!
//! Fit the family by minimizing the V-statistic, then compare `n·KSD²ₙ` with
//! the `(1−β)` quantile of `Σⱼ λ̂ⱼ Zⱼ²`, where `λ̂` is the spectrum of the
//! scaled Gram matrix at the fitted parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    ksd_v, mksde_rn, mksde_vmf, projected_mean, EstimateReport, FittedParams, RnOptions,
    WeightedSamples,
};
use crate::lie::Rotation;
use crate::rng::substream;
use crate::scalar::{lit, Real};
use crate::stein::{gram_matrix, KernelConfig, RnKernel, RnParams, VmfKernel};

/// Minimum number of null draws.
pub const MIN_DRAWS: usize = 100;
/// Default number of null draws.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Sorted Monte Carlo draws of `W = Σⱼ λⱼ Zⱼ²`.
///
/// Draw `i` uses its own stream `substream(seed, i)`, so the draws do not
/// depend on how work is split across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution<T> {
    draws: Vec<T>,
}

impl<T: Real> NullDistribution<T> {
    pub fn simulate(lambdas: &[T], m: usize, seed: u64) -> Result<Self> {
        if m < MIN_DRAWS {
            return Err(Error::InsufficientDraws(m));
        }
        if lambdas.iter().any(|&l| !(l >= T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let mut draws: Vec<T> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                lambdas.iter().fold(T::zero(), |acc, &l| {
                    let z: f64 = rng.sample(StandardNormal);
                    acc + l * lit::<T>(z * z)
                })
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).expect("draws are finite"));
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draws(&self) -> &[T] {
        &self.draws
    }

    /// Upper order statistic `W₍⌈(1−β)m⌉₎`.
    pub fn quantile(&self, beta: T) -> Result<T> {
        check_beta(beta)?;
        let m = self.draws.len();
        let pos = (lit::<T>(m as f64) * (T::one() - beta))
            .to_f64()
            .unwrap_or(f64::NAN);
        // guard against 0.95·10000 landing a hair above 9500
        let k = ((pos - 1e-9).ceil() as usize).clamp(1, m);
        Ok(self.draws[k - 1])
    }
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if !(beta > T::zero() && beta < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "significance level must lie in (0, 1), got {beta}"
        )));
    }
    Ok(())
}

/// Empirical `(1−β)` quantile of `m` draws of `Σⱼ λⱼ Zⱼ²`, seeded from `rng`.
pub fn weighted_chisq_quantile<T: Real, R: Rng + ?Sized>(
    lambdas: &[T],
    m: usize,
    beta: T,
    rng: &mut R,
) -> Result<T> {
    check_beta(beta)?;
    NullDistribution::simulate(lambdas, m, rng.random())?.quantile(beta)
}

/// Parametric family tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Vmf,
    Rn,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Vmf => "vmf",
            Family::Rn => "rn",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vmf" => Ok(Family::Vmf),
            "rn" => Ok(Family::Rn),
            _ => Err(Error::Parse(format!(
                "unknown family '{s}' (expected vmf or rn)"
            ))),
        }
    }
}

/// Settings for [`gof_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct GofConfig<T: Real> {
    pub kernel: KernelConfig<T>,
    pub beta: T,
    /// Number of null draws.
    pub m: usize,
    pub rn: RnOptions<T>,
}

impl<T: Real> GofConfig<T> {
    pub fn new(kernel: KernelConfig<T>, beta: T, m: usize) -> Result<Self> {
        check_beta(beta)?;
        if m < MIN_DRAWS {
            return Err(Error::InsufficientDraws(m));
        }
        Ok(Self {
            kernel,
            beta,
            m,
            rn: RnOptions::default(),
        })
    }
}

/// Everything the test computed.
#[derive(Debug, Clone, PartialEq)]
pub struct GofResult<T: Real> {
    /// Minimized V-statistic `m*ₙ`.
    pub m_star: T,
    pub theta_hat: FittedParams<T>,
    /// `n·m*ₙ`.
    pub statistic: T,
    /// Spectrum of `n⁻¹(k(xᵢ,xⱼ))` with negative round-off clipped to 0, descending.
    pub eigenvalues: Vec<T>,
    pub quantile: T,
    pub beta: T,
    pub reject: bool,
    pub m: usize,
    /// False when the iterative (RN) fit stopped before meeting its tolerance.
    pub converged: bool,
    pub rank_deficient: bool,
}

/// The fit, statistic and clipped spectrum, shared by every significance level.
#[derive(Debug, Clone, PartialEq)]
pub struct GofFit<T: Real> {
    pub report: EstimateReport<T>,
    pub m_star: T,
    pub statistic: T,
    pub eigenvalues: Vec<T>,
}

/// Fits the family and computes `n·m*ₙ` and the Gram spectrum.
pub fn gof_fit<T: Real>(
    samples: &[Rotation<T>],
    family: Family,
    kernel: &KernelConfig<T>,
    rn: &RnOptions<T>,
) -> Result<GofFit<T>> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput(
            "the goodness-of-fit test needs at least two samples",
        ));
    }
    let ws = WeightedSamples::unweighted(samples.to_vec())?;
    let (report, m_star, gram) = match family {
        Family::Vmf => {
            let report = mksde_vmf(&ws, kernel)?;
            let FittedParams::Vmf(p) = &report.params else {
                unreachable!()
            };
            let k = VmfKernel::new(p.clone(), *kernel);
            let m_star = ksd_v(&ws, &k)?;
            let gram = gram_matrix(samples, &k)?;
            (report, m_star, gram)
        }
        Family::Rn => {
            let init = RnParams::new(projected_mean(samples)?, T::one())?;
            let report = mksde_rn(&ws, kernel, &init, rn)?;
            let FittedParams::Rn(p) = &report.params else {
                unreachable!()
            };
            let k = RnKernel::new(p.clone(), *kernel);
            let m_star = ksd_v(&ws, &k)?;
            let gram = gram_matrix(samples, &k)?;
            (report, m_star, gram)
        }
    };
    let mut eigenvalues: Vec<T> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(T::zero()))
        .collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
    let statistic = lit::<T>(samples.len() as f64) * m_star;
    Ok(GofFit {
        report,
        m_star,
        statistic,
        eigenvalues,
    })
}

/// Runs the full test at one significance level.
pub fn gof_test<T: Real, R: Rng + ?Sized>(
    samples: &[Rotation<T>],
    family: Family,
    cfg: &GofConfig<T>,
    rng: &mut R,
) -> Result<GofResult<T>> {
    check_beta(cfg.beta)?;
    let fit = gof_fit(samples, family, &cfg.kernel, &cfg.rn)?;
    let null = NullDistribution::simulate(&fit.eigenvalues, cfg.m, rng.random())?;
    let quantile = null.quantile(cfg.beta)?;
    Ok(GofResult {
        m_star: fit.m_star,
        theta_hat: fit.report.params,
        statistic: fit.statistic,
        eigenvalues: fit.eigenvalues,
        quantile,
        beta: cfg.beta,
        reject: fit.statistic > quantile,
        m: cfg.m,
        converged: fit.report.converged,
        rank_deficient: fit.report.rank_deficient,
    })
}
