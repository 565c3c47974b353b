//! KSD statistics and minimum-KSD estimators.
//!
//! Double sums over sample pairs are split into rows. Each row is summed
//! sequentially by one rayon task and the row totals are added in index
//! order, so every statistic here is bitwise reproducible regardless of the
//! number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lie::{
    frobenius_inner, haar_one, kron, perfect_shuffle, renormalize, skew_of, so_log, standard_basis,
    unvec, vec, Rotation,
};
use crate::scalar::{lit, to_f64, Real};
use crate::stein::{KernelConfig, RnParams, SteinKernelFn, VmfParams};

/// Rotation samples with optional unnormalized importance ratios `q(xᵢ)/w(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples<T: Real> {
    rotations: Vec<Rotation<T>>,
    ratios: Option<Vec<T>>,
}

impl<T: Real> WeightedSamples<T> {
    pub fn new(rotations: Vec<Rotation<T>>, ratios: Option<Vec<T>>) -> Result<Self> {
        let first = rotations
            .first()
            .ok_or(Error::EmptyInput("at least one sample is required"))?;
        let n = first.dim();
        if rotations.iter().any(|r| r.dim() != n) {
            return Err(Error::Dimension("samples have mixed dimensions".into()));
        }
        if let Some(r) = &ratios {
            if r.len() != rotations.len() {
                return Err(Error::Dimension(format!(
                    "{} ratios for {} samples",
                    r.len(),
                    rotations.len()
                )));
            }
            if r.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
                return Err(Error::InvalidParameter(
                    "importance ratios must be positive and finite".into(),
                ));
            }
        }
        Ok(Self { rotations, ratios })
    }

    pub fn unweighted(rotations: Vec<Rotation<T>>) -> Result<Self> {
        Self::new(rotations, None)
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    /// Matrix size N.
    pub fn dim(&self) -> usize {
        self.rotations[0].dim()
    }

    pub fn rotations(&self) -> &[Rotation<T>] {
        &self.rotations
    }

    pub fn ratios(&self) -> Option<&[T]> {
        self.ratios.as_deref()
    }

    /// Ratio of sample `i`, 1 when unweighted.
    pub fn ratio(&self, i: usize) -> T {
        self.ratios.as_ref().map_or(T::one(), |r| r[i])
    }
}

/// Sums `f(i)` over `0..n` in parallel with a fixed association order.
fn ordered_sum<T: Real>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> T {
    let rows: Vec<T> = (0..n).into_par_iter().map(f).collect();
    rows.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// V-statistic `(1/n²)·Σᵢⱼ k(xᵢ,xⱼ)·rᵢ·rⱼ`.
pub fn ksd_v<T: Real, K: SteinKernelFn<T>>(samples: &WeightedSamples<T>, kernel: &K) -> Result<T> {
    let n = samples.len();
    let pts = kernel.prepare_all(samples.rotations())?;
    let two = lit::<T>(2.0);
    let total = ordered_sum(n, |i| {
        let mut off = T::zero();
        for j in (i + 1)..n {
            off += kernel.eval_points(&pts[i], &pts[j]) * samples.ratio(j);
        }
        let ri = samples.ratio(i);
        (kernel.eval_points(&pts[i], &pts[i]) * ri + two * off) * ri
    });
    let nf = lit::<T>(n as f64);
    Ok(total / (nf * nf))
}

/// U-statistic `(1/(n(n−1)))·Σ_{i≠j} k(xᵢ,xⱼ)·rᵢ·rⱼ`.
pub fn ksd_u<T: Real, K: SteinKernelFn<T>>(samples: &WeightedSamples<T>, kernel: &K) -> Result<T> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::EmptyInput(
            "the U-statistic needs at least two samples",
        ));
    }
    let pts = kernel.prepare_all(samples.rotations())?;
    let total = ordered_sum(n, |i| {
        let mut off = T::zero();
        for j in (i + 1)..n {
            off += kernel.eval_points(&pts[i], &pts[j]) * samples.ratio(j);
        }
        off * samples.ratio(i)
    });
    let nf = lit::<T>(n as f64);
    Ok(lit::<T>(2.0) * total / (nf * (nf - T::one())))
}

/// A U-statistic together with its estimated standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UStatistic<T> {
    pub value: T,
    pub std_error: T,
}

/// U-statistic with the Hoeffding variance estimate
/// `Var Uₙ ≈ 4(n−2)/(n(n−1))·ζ₁ + 2/(n(n−1))·ζ₂`.
///
/// `ζ₁` is the sample variance of the row means `h̄ᵢ` and `ζ₂` the second
/// moment of `h` over distinct pairs minus `Uₙ²`. Both are plug-in estimates,
/// so the error is slightly conservative when the kernel is degenerate.
pub fn ksd_u_with_se<T: Real, K: SteinKernelFn<T>>(
    samples: &WeightedSamples<T>,
    kernel: &K,
) -> Result<UStatistic<T>> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::EmptyInput(
            "the U-statistic standard error needs at least three samples",
        ));
    }
    let pts = kernel.prepare_all(samples.rotations())?;
    let rows: Vec<(T, T)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = samples.ratio(i);
            let (mut s, mut s2) = (T::zero(), T::zero());
            for j in (0..n).filter(|&j| j != i) {
                let h = kernel.eval_points(&pts[i], &pts[j]) * ri * samples.ratio(j);
                s += h;
                s2 += h * h;
            }
            (s, s2)
        })
        .collect();
    let nf = lit::<T>(n as f64);
    let pairs = nf * (nf - T::one());
    let (mut sum, mut sum_sq) = (T::zero(), T::zero());
    for &(s, s2) in &rows {
        sum += s;
        sum_sq += s2;
    }
    let u = sum / pairs;
    let mut zeta1 = T::zero();
    for &(s, _) in &rows {
        let d = s / (nf - T::one()) - u;
        zeta1 += d * d;
    }
    zeta1 /= nf;
    let zeta2 = (sum_sq / pairs - u * u).max(T::zero());
    let var = lit::<T>(4.0) * (nf - lit(2.0)) / pairs * zeta1 + lit::<T>(2.0) / pairs * zeta2;
    Ok(UStatistic {
        value: u,
        std_error: var.sqrt(),
    })
}

/// The quadratic `KSD²(F) = vec(F)ᵀ·A·vec(F) − 2·bᵀ·vec(F) + constant` of the
/// von Mises–Fisher V-statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MksdeVmfSystem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub constant: T,
    pub rank_deficient: bool,
}

impl<T: Real> MksdeVmfSystem<T> {
    /// Evaluates the quadratic at `F`, which equals the V-statistic with the kernel at `F`.
    pub fn objective(&self, f: &DMatrix<T>) -> T {
        let v = vec(f);
        v.dot(&(&self.a * &v)) - lit::<T>(2.0) * self.b.dot(&v) + self.constant
    }
}

/// Assembles the vMF system from pairwise terms.
///
/// Per pair, with `e = exp(τ·tr(XᵢᵀXⱼ))` and weight `w = rᵢrⱼ/n²`:
/// - quadratic block `½[I⊗XᵢXⱼᵀ − (Xᵢᵀ⊗Xⱼ)·S]·e·w`, `S` the perfect shuffle;
/// - linear part `B += (τ/2)(Xᵢ−Xⱼ)·𝒜(XᵢᵀXⱼ)·e·w`;
/// - constant `[c(Xᵢ,Xⱼ) − τ²‖𝒜(XᵢᵀXⱼ)‖²·e]·w`.
///
/// The Kronecker sum is accumulated row by row as `Σᵢ Xᵢᵀ⊗(Σⱼ wᵢⱼ Xⱼ)`, so
/// memory stays O(n + N⁴).
pub fn mksde_vmf_system<T: Real>(
    samples: &WeightedSamples<T>,
    cfg: &KernelConfig<T>,
) -> MksdeVmfSystem<T> {
    let n = samples.len();
    let dim = samples.dim();
    let xs = samples.rotations();
    let tau = cfg.tau();
    let half = lit::<T>(0.5);
    let c_scale = tau * half * lit::<T>(dim as f64 - 1.0);
    let nf = lit::<T>(n as f64);
    let inv_n2 = T::one() / (nf * nf);

    struct Row<T: Real> {
        m: DMatrix<T>,
        b: DMatrix<T>,
        constant: T,
    }
    let rows: Vec<Row<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = xs[i].matrix();
            let ri = samples.ratio(i);
            let mut row = Row {
                m: DMatrix::zeros(dim, dim),
                b: DMatrix::zeros(dim, dim),
                constant: T::zero(),
            };
            for j in 0..n {
                let xj = xs[j].matrix();
                let prod = xi.transpose() * xj;
                let t = prod.trace();
                let w = (tau * t).exp() * ri * samples.ratio(j) * inv_n2;
                let s = skew_of(&prod);
                row.m += xj * w;
                row.b += (xi - xj) * &s * w;
                row.constant += (c_scale * t - tau * tau * s.norm_squared()) * w;
            }
            row
        })
        .collect();

    let mut p = DMatrix::<T>::zeros(dim, dim);
    let mut k = DMatrix::<T>::zeros(dim * dim, dim * dim);
    let mut b = DMatrix::<T>::zeros(dim, dim);
    let mut constant = T::zero();
    for (i, row) in rows.iter().enumerate() {
        let xi = xs[i].matrix();
        p += xi * row.m.transpose();
        k += kron(&xi.transpose(), &row.m);
        b += &row.b;
        constant += row.constant;
    }
    let a = (kron(&DMatrix::identity(dim, dim), &p) - k * perfect_shuffle::<T>(dim)) * half;
    let a = (&a + a.transpose()) * half;
    let b = vec(&b) * (tau * half);
    let rank_deficient = rank_deficient(&a);
    MksdeVmfSystem {
        a,
        b,
        constant,
        rank_deficient,
    }
}

fn rank_deficient<T: Real>(a: &DMatrix<T>) -> bool {
    let eig = a.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    let min = eig.iter().fold(max, |m, &l| m.min(l.abs()));
    max == T::zero() || min < lit::<T>(1e-10) * max
}

/// Fitted parameters of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedParams<T: Real> {
    Vmf(VmfParams<T>),
    Rn(RnParams<T>),
}

/// Outcome of a minimum-KSD fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport<T: Real> {
    pub params: FittedParams<T>,
    /// V-statistic at the returned parameters.
    pub objective: T,
    /// Accepted iterations; 0 for the closed-form estimator.
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    /// Objective after each accepted iteration, starting at the initial point.
    pub history: Vec<T>,
}

/// Solves `A·v = b` for symmetric PSD `A`: Cholesky when `A` is well conditioned,
/// otherwise the minimum-norm least-squares solution through the eigendecomposition.
pub fn solve_symmetric<T: Real>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    rank_deficient: bool,
) -> Result<DVector<T>> {
    if !rank_deficient {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(chol.solve(b));
        }
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |m, &l| m.max(l.abs()));
    if max == T::zero() {
        if b.norm() == T::zero() {
            return Ok(DVector::zeros(b.len()));
        }
        return Err(Error::SingularSystem("A vanishes but b does not".into()));
    }
    let cutoff = lit::<T>(1e-10) * max;
    let coords = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        coords.len(),
        coords.iter().zip(eig.eigenvalues.iter()).map(|(&c, &l)| {
            if l.abs() > cutoff {
                c / l
            } else {
                T::zero()
            }
        }),
    );
    let v = &eig.eigenvectors * scaled;
    let residual = (a * &v - b).norm();
    if residual > lit::<T>(1e-6) * (b.norm() + max * v.norm()) {
        return Err(Error::SingularSystem(format!(
            "least-squares residual {:.3e} is too large for a consistent system",
            to_f64(residual)
        )));
    }
    Ok(v)
}

/// Closed-form minimum-KSD estimate of the vMF parameter `F̂ = unvec(A⁻¹b)`.
pub fn mksde_vmf<T: Real>(
    samples: &WeightedSamples<T>,
    cfg: &KernelConfig<T>,
) -> Result<EstimateReport<T>> {
    let system = mksde_vmf_system(samples, cfg);
    let v = solve_symmetric(&system.a, &system.b, system.rank_deficient)?;
    let f = unvec(&v)?;
    let objective = system.objective(&f);
    Ok(EstimateReport {
        params: FittedParams::Vmf(VmfParams::new(f)?),
        objective,
        iterations: 0,
        converged: true,
        rank_deficient: system.rank_deficient,
        history: vec![objective],
    })
}

/// Optimizer settings for [`mksde_rn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnOptions<T> {
    /// Initial geodesic length of a trial step for `μ`.
    pub step: T,
    pub max_iters: usize,
    /// Stop when the gradient norm over `(μ, log ς)` drops below `tol·max(1, objective)`.
    pub tol: T,
    /// Central-difference step for the `μ` gradient.
    pub fd_step: T,
}

impl<T: Real> Default for RnOptions<T> {
    fn default() -> Self {
        Self {
            step: lit(0.25),
            max_iters: 200,
            tol: lit(1e-5),
            fd_step: lit(1e-5),
        }
    }
}

const VARSIGMA_MIN: f64 = 1e-6;
const VARSIGMA_MAX: f64 = 1e8;

/// For fixed `μ` the RN V-statistic is `α·ς² + β·ς + γ`, with `γ` independent of `μ`.
struct RnObjective<'a, T: Real> {
    samples: &'a WeightedSamples<T>,
    tau: T,
    gamma: T,
}

impl<'a, T: Real> RnObjective<'a, T> {
    fn new(samples: &'a WeightedSamples<T>, cfg: &KernelConfig<T>) -> Self {
        let xs = samples.rotations();
        let n = xs.len();
        let tau = cfg.tau();
        let c_scale = tau * lit::<T>(0.5) * lit::<T>(samples.dim() as f64 - 1.0);
        let gamma = ordered_sum(n, |i| {
            let mut acc = T::zero();
            for j in 0..n {
                let prod = xs[i].matrix().transpose() * xs[j].matrix();
                let t = prod.trace();
                let s = skew_of(&prod);
                acc += (c_scale * t - tau * tau * s.norm_squared())
                    * (tau * t).exp()
                    * samples.ratio(j);
            }
            acc * samples.ratio(i)
        });
        let nf = lit::<T>(n as f64);
        Self {
            samples,
            tau,
            gamma: gamma / (nf * nf),
        }
    }

    /// `(α, β)` at `μ`.
    fn coefficients(&self, mu: &Rotation<T>) -> Result<(T, T)> {
        let xs = self.samples.rotations();
        let n = xs.len();
        let logs = xs
            .par_iter()
            .map(|x| so_log(&x.inverse().compose(mu)).map(|l| l.into_matrix()))
            .collect::<Result<Vec<_>>>()?;
        let two = lit::<T>(2.0);
        let diag_e = (self.tau * lit::<T>(self.samples.dim() as f64)).exp();
        let rows: Vec<(T, T)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let ri = self.samples.ratio(i);
                let xi = xs[i].matrix();
                let mut a = frobenius_inner(&logs[i], &logs[i]) * diag_e * ri;
                let mut b = T::zero();
                for j in (i + 1)..n {
                    let prod = xi.transpose() * xs[j].matrix();
                    let e = (self.tau * prod.trace()).exp() * self.samples.ratio(j);
                    let s = skew_of(&prod);
                    a += two * e * frobenius_inner(&logs[i], &logs[j]);
                    b += two * e * (frobenius_inner(&s, &logs[j]) - frobenius_inner(&logs[i], &s));
                }
                (a * ri, b * ri)
            })
            .collect();
        let (mut alpha, mut beta) = (T::zero(), T::zero());
        for (a, b) in rows {
            alpha += a;
            beta += b;
        }
        let nf = lit::<T>(n as f64);
        let scale = T::one() / (nf * nf);
        Ok((alpha * scale, beta * self.tau * scale))
    }

    fn value(&self, mu: &Rotation<T>, varsigma: T) -> Result<T> {
        let (a, b) = self.coefficients(mu)?;
        Ok(a * varsigma * varsigma + b * varsigma + self.gamma)
    }

    /// Exact minimizer over ς of the convex quadratic, clamped to a positive range.
    fn best_varsigma(&self, mu: &Rotation<T>, current: T) -> Result<(T, T)> {
        let (a, b) = self.coefficients(mu)?;
        let v = if a > T::zero() {
            (-b / (lit::<T>(2.0) * a))
                .max(lit(VARSIGMA_MIN))
                .min(lit(VARSIGMA_MAX))
        } else {
            current
        };
        Ok((v, a * v * v + b * v + self.gamma))
    }
}

/// Minimum-KSD estimate of the Riemannian normal `(μ, ς)`.
///
/// `ς = e^η` is profiled out exactly at every `μ` (the objective is a convex
/// quadratic in `ς`), so `∂/∂η` vanishes at every iterate unless the clamp is
/// active. `μ` follows the negative central-difference gradient along
/// `μ·exp(−t·Σ gₗEₗ)` with Armijo backtracking, so accepted objectives never increase.
pub fn mksde_rn<T: Real>(
    samples: &WeightedSamples<T>,
    cfg: &KernelConfig<T>,
    init: &RnParams<T>,
    opts: &RnOptions<T>,
) -> Result<EstimateReport<T>> {
    if init.dim() != samples.dim() {
        return Err(Error::Dimension(
            "initial mean and samples differ in dimension".into(),
        ));
    }
    if !(opts.step > T::zero()) || !(opts.fd_step > T::zero()) || !(opts.tol >= T::zero()) {
        return Err(Error::InvalidParameter(
            "optimizer step sizes must be positive".into(),
        ));
    }
    let objective = RnObjective::new(samples, cfg);
    let basis = standard_basis::<T>(samples.dim())?;
    let mut mu = init.mu().clone();
    let (mut varsigma, mut value) = objective.best_varsigma(&mu, init.varsigma())?;
    let mut history = vec![value];
    let mut radius = opts.step;
    let mut converged = false;
    let mut iterations = 0;
    let two = lit::<T>(2.0);

    while iterations < opts.max_iters {
        let mut grad = Vec::with_capacity(basis.len());
        for e in basis.elements() {
            let plus = objective.value(&mu.retract(&e.scale(opts.fd_step)), varsigma)?;
            let minus = objective.value(&mu.retract(&e.scale(-opts.fd_step)), varsigma)?;
            grad.push((plus - minus) / (two * opts.fd_step));
        }
        let (a, b) = objective.coefficients(&mu)?;
        let d_eta = varsigma * (two * a * varsigma + b);
        let g_norm = grad
            .iter()
            .fold(d_eta * d_eta, |acc, &g| acc + g * g)
            .sqrt();
        if g_norm < opts.tol * value.abs().max(T::one()) {
            converged = true;
            break;
        }
        let mu_norm = grad.iter().fold(T::zero(), |acc, &g| acc + g * g).sqrt();
        if mu_norm == T::zero() {
            converged = true;
            break;
        }
        let direction = basis.combine(&DVector::from_vec(
            grad.iter().map(|&g| -g / mu_norm).collect(),
        ));
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = mu.retract(&direction.scale(radius));
            let (v, val) = objective.best_varsigma(&candidate, varsigma)?;
            if val <= value - lit::<T>(1e-4) * radius * mu_norm {
                mu = renormalize(candidate.matrix())?;
                varsigma = v;
                value = val;
                accepted = true;
                break;
            }
            radius *= lit(0.5);
        }
        if !accepted {
            break;
        }
        iterations += 1;
        history.push(value);
        radius = (radius * two).min(lit(1.0));
    }
    Ok(EstimateReport {
        params: FittedParams::Rn(RnParams::new(mu, varsigma)?),
        objective: value,
        iterations,
        converged,
        rank_deficient: false,
        history,
    })
}

/// Small-concentration approximate vMF maximum likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallFEstimate<T: Real> {
    pub params: VmfParams<T>,
    /// False when the sample mean is too concentrated for the approximation to hold.
    pub in_regime: bool,
}

/// Largest singular value of the sample mean accepted as "small concentration".
pub const SMALL_F_MEAN_LIMIT: f64 = 0.5;

/// `F̂ = N·X̄`, from matching the first moment `E[X] ≈ F/N` near the uniform distribution.
pub fn mle_vmf_small_f<T: Real>(samples: &[Rotation<T>]) -> Result<SmallFEstimate<T>> {
    let mean = sample_mean(samples)?;
    let n = mean.nrows();
    let sigma_max = mean.clone().singular_values().max();
    Ok(SmallFEstimate {
        params: VmfParams::new(mean * lit::<T>(n as f64))?,
        in_regime: sigma_max <= lit(SMALL_F_MEAN_LIMIT),
    })
}

fn sample_mean<T: Real>(samples: &[Rotation<T>]) -> Result<DMatrix<T>> {
    let first = samples
        .first()
        .ok_or(Error::EmptyInput("at least one sample is required"))?;
    let mut mean = DMatrix::zeros(first.dim(), first.dim());
    for x in samples {
        if x.dim() != first.dim() {
            return Err(Error::Dimension("samples have mixed dimensions".into()));
        }
        mean += x.matrix();
    }
    Ok(mean / lit::<T>(samples.len() as f64))
}

/// Settings for [`mle_vmf_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Haar draws used to estimate the normalizing constant.
    pub mc_size: usize,
    pub max_iters: usize,
    /// Stop when the Newton step's Frobenius norm drops below this.
    pub tol: f64,
    /// Hard cap on ‖F̂‖_F, reached only when the sample mean lies outside the
    /// hull of the Monte Carlo draws.
    pub max_norm: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            mc_size: 20_000,
            max_iters: 100,
            tol: 1e-8,
            max_norm: 1e3,
        }
    }
}

/// vMF maximum likelihood with a Monte Carlo normalizing constant.
///
/// Maximizes `⟨F, X̄⟩ − log Ĉ(F)` with `Ĉ(F) = mean_k exp(⟨F, Zₖ⟩)` over one
/// fixed set of Haar draws `Zₖ` (common random numbers), so the surrogate is a
/// smooth concave function of `F`. Newton steps use the exact gradient
/// `X̄ − E_w[Z]` and Hessian `−Cov_w(vec Z)` of the surrogate under the
/// softmax weights, with backtracking; iteration starts at `F = 0`.
pub fn mle_vmf_numeric<T: Real, R: Rng + ?Sized>(
    samples: &[Rotation<T>],
    opts: &MleOptions,
    rng: &mut R,
) -> Result<VmfParams<T>> {
    if opts.mc_size < 1000 {
        return Err(Error::InvalidParameter(format!(
            "mc_size must be at least 1000, got {}",
            opts.mc_size
        )));
    }
    let mean = sample_mean(samples)?;
    let n = mean.nrows();
    let d = n * n;
    let xbar: Vec<f64> = mean.iter().map(|&v| to_f64(v)).collect();
    let draws: Vec<Vec<f64>> = (0..opts.mc_size)
        .map(|_| haar_one::<f64, _>(n, rng).into_matrix().as_slice().to_vec())
        .collect();

    let surrogate = |f: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let dots: Vec<f64> = draws.iter().map(|z| dot(f, z)).collect();
        let shift = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = dots.iter().map(|&t| (t - shift).exp()).collect();
        let total: f64 = weights.iter().sum();
        let log_c = shift + (total / draws.len() as f64).ln();
        let mut mean_z = vec![0.0; d];
        for (z, &w) in draws.iter().zip(&weights) {
            for (m, &v) in mean_z.iter_mut().zip(z) {
                *m += w * v;
            }
        }
        mean_z.iter_mut().for_each(|m| *m /= total);
        let mut cov = vec![0.0; d * d];
        for (z, &w) in draws.iter().zip(&weights) {
            let c: Vec<f64> = z.iter().zip(&mean_z).map(|(a, b)| a - b).collect();
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += w * c[a] * c[b];
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= total);
        (dot(f, &xbar) - log_c, mean_z, cov)
    };

    let mut f = vec![0.0; d];
    let (mut ll, mut mean_z, mut cov) = surrogate(&f);
    for _ in 0..opts.max_iters {
        let grad = DVector::from_iterator(d, xbar.iter().zip(&mean_z).map(|(a, b)| a - b));
        let mut h = DMatrix::from_row_slice(d, d, &cov);
        let ridge = 1e-12 * (h.trace() / d as f64).max(1e-300);
        for k in 0..d {
            h[(k, k)] += ridge;
        }
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = f.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if dot(&cand, &cand).sqrt() > opts.max_norm {
                t *= 0.5;
                continue;
            }
            let (cand_ll, cand_mean, cand_cov) = surrogate(&cand);
            if cand_ll >= ll + 1e-4 * t * grad.dot(&step) {
                f = cand;
                ll = cand_ll;
                mean_z = cand_mean;
                cov = cand_cov;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || t * step.norm() < opts.tol {
            break;
        }
    }
    VmfParams::new(DMatrix::from_iterator(n, n, f.into_iter().map(lit::<T>)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected sample mean: the rotation closest to `X̄` in Frobenius norm.
pub fn projected_mean<T: Real>(samples: &[Rotation<T>]) -> Result<Rotation<T>> {
    renormalize(&sample_mean(samples)?)
}
