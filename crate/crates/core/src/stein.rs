//! Stein kernels on SO(N) for the base kernel `k(X,Y) = exp(τ·tr(XᵀY))`.
//!
//! With the left-invariant basis `X·E_{ij}` and a score `g(X) = ∇_X log p`,
//! the doubly Stein-transformed kernel is
//!
//! ```text
//! k_p(X,Y) = tr[𝒜(Xᵀ(g(X) + τY))ᵀ · 𝒜(Yᵀ(g(Y) + τX))] · e^{τ tr(XᵀY)}
//!          + (τ/2)(N−1) · tr(XᵀY) · e^{τ tr(XᵀY)}
//! ```
//!
//! where `𝒜(A) = (A − Aᵀ)/2`. Only the skew "score coordinate" `𝒜(Xᵀg(X))`
//! of each sample enters, so kernels cache it per sample ([`SteinPoint`]) and
//! pairwise evaluation costs one N×N product.
//!
//! Two families are provided:
//! - von Mises–Fisher, `p(X) ∝ exp(tr(FᵀX))`, score coordinate `𝒜(XᵀF)`;
//! - Riemannian normal, `p(X) ∝ exp(−ς/2·‖Log(μᵀX)‖²_F)`, score
//!   `ς·X·Log(Xᵀμ)` and score coordinate `ς·Log(Xᵀμ)`.
//!
//! [`stein_oracle`] recomputes `k_p` from nothing but `log p` and finite
//! differences along `t ↦ X·exp(t·E)`; it exists to check the closed forms.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lie::{frobenius_inner, skew_of, so_log, standard_basis, Basis, Rotation};
use crate::scalar::{lit, to_f64, Real};

/// Temperature of the base kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<T: Real> {
    tau: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(tau: T) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> T {
        self.tau
    }
}

impl<T: Real> Default for KernelConfig<T> {
    fn default() -> Self {
        Self { tau: T::one() }
    }
}

/// von Mises–Fisher parameters: `p(X | F) ∝ exp(tr(FᵀX))`.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams<T: Real> {
    f: DMatrix<T>,
}

impl<T: Real> VmfParams<T> {
    pub fn new(f: DMatrix<T>) -> Result<Self> {
        if !f.is_square() || f.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "F must be N×N with N ≥ 2, got {}×{}",
                f.nrows(),
                f.ncols()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("F has non-finite entries".into()));
        }
        Ok(Self { f })
    }

    pub fn f(&self) -> &DMatrix<T> {
        &self.f
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.f
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// `tr(FᵀX)`.
    pub fn log_density_unnormalized(&self, x: &Rotation<T>) -> T {
        frobenius_inner(&self.f, x.matrix())
    }
}

/// Riemannian normal parameters: mean `μ` and precision `ς = σ⁻²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnParams<T: Real> {
    mu: Rotation<T>,
    varsigma: T,
}

impl<T: Real> RnParams<T> {
    pub fn new(mu: Rotation<T>, varsigma: T) -> Result<Self> {
        if !(varsigma > T::zero()) || !varsigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "varsigma must be positive and finite, got {varsigma}"
            )));
        }
        Ok(Self { mu, varsigma })
    }

    pub fn from_sigma(mu: Rotation<T>, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Self::new(mu, T::one() / (sigma * sigma))
    }

    pub fn mu(&self) -> &Rotation<T> {
        &self.mu
    }

    pub fn varsigma(&self) -> T {
        self.varsigma
    }

    pub fn sigma(&self) -> T {
        T::one() / self.varsigma.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    /// `−ς/2 · ‖Log(μᵀX)‖²_F`.
    pub fn log_density_unnormalized(&self, x: &Rotation<T>) -> Result<T> {
        let l = so_log(&self.mu.inverse().compose(x))?;
        Ok(-self.varsigma * lit(0.5) * l.matrix().norm_squared())
    }
}

/// Riemannian gradient `∇_X log p`, returned as an ambient N×N matrix tangent at `X`.
pub trait ScoreFn<T: Real>: Sync {
    fn score(&self, x: &Rotation<T>) -> Result<DMatrix<T>>;

    /// The skew matrix `𝒜(Xᵀ·score(X))`, checking that the score is tangent.
    fn skew_coordinate(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        let g = self.score(x)?;
        if g.shape() != x.matrix().shape() {
            return Err(Error::Dimension("score has the wrong shape".into()));
        }
        let xtg = x.matrix().transpose() * &g;
        let sym = (&xtg + xtg.transpose()) * lit::<T>(0.5);
        let residual = sym.norm();
        if !(residual <= T::tangency_tol() * (T::one() + g.norm())) {
            return Err(Error::Tangency(to_f64(residual)));
        }
        Ok(skew_of(&xtg))
    }
}

impl<T: Real> ScoreFn<T> for VmfParams<T> {
    /// `X·𝒜(XᵀF)`.
    fn score(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        Ok(x.matrix() * self.skew_coordinate(x)?)
    }

    fn skew_coordinate(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        check_dims(x.dim(), self.dim())?;
        Ok(skew_of(&(x.matrix().transpose() * &self.f)))
    }
}

impl<T: Real> ScoreFn<T> for RnParams<T> {
    /// `ς·X·Log(Xᵀμ)`.
    fn score(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        Ok(x.matrix() * self.skew_coordinate(x)?)
    }

    fn skew_coordinate(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        check_dims(x.dim(), self.dim())?;
        let l = so_log(&x.inverse().compose(&self.mu))?;
        Ok(l.into_matrix() * self.varsigma)
    }
}

impl<T: Real, F> ScoreFn<T> for F
where
    F: Fn(&Rotation<T>) -> Result<DMatrix<T>> + Sync,
{
    fn score(&self, x: &Rotation<T>) -> Result<DMatrix<T>> {
        self(x)
    }
}

/// A sample together with its cached score coordinate `𝒜(Xᵀ∇_X log p)`.
#[derive(Debug, Clone)]
pub struct SteinPoint<T: Real> {
    pub x: Rotation<T>,
    pub skew_score: DMatrix<T>,
}

/// A bivariate Stein kernel `k_p(X, Y)` bound to a distribution and a [`KernelConfig`].
pub trait SteinKernelFn<T: Real>: Sync {
    type Point: Send + Sync;

    fn prepare(&self, x: &Rotation<T>) -> Result<Self::Point>;

    fn eval_points(&self, a: &Self::Point, b: &Self::Point) -> T;

    fn eval(&self, x: &Rotation<T>, y: &Rotation<T>) -> Result<T> {
        Ok(self.eval_points(&self.prepare(x)?, &self.prepare(y)?))
    }

    fn prepare_all(&self, xs: &[Rotation<T>]) -> Result<Vec<Self::Point>> {
        xs.par_iter().map(|x| self.prepare(x)).collect()
    }
}

/// Stein kernel of the von Mises–Fisher family.
pub type VmfKernel<T> = StdKernel<T, VmfParams<T>>;
/// Stein kernel of the Riemannian normal family.
pub type RnKernel<T> = StdKernel<T, RnParams<T>>;

/// Stein kernel for the base kernel `exp(τ·tr(XᵀY))` and a score `S`.
#[derive(Debug, Clone)]
pub struct StdKernel<T: Real, S> {
    score: S,
    cfg: KernelConfig<T>,
}

impl<T: Real, S: ScoreFn<T>> StdKernel<T, S> {
    pub fn new(score: S, cfg: KernelConfig<T>) -> Self {
        Self { score, cfg }
    }

    pub fn score_fn(&self) -> &S {
        &self.score
    }

    pub fn config(&self) -> &KernelConfig<T> {
        &self.cfg
    }
}

impl<T: Real, S: ScoreFn<T>> SteinKernelFn<T> for StdKernel<T, S> {
    type Point = SteinPoint<T>;

    fn prepare(&self, x: &Rotation<T>) -> Result<SteinPoint<T>> {
        Ok(SteinPoint {
            x: x.clone(),
            skew_score: self.score.skew_coordinate(x)?,
        })
    }

    fn eval_points(&self, a: &SteinPoint<T>, b: &SteinPoint<T>) -> T {
        pair_value(a, b, self.cfg.tau)
    }
}

/// Core pairwise formula.
///
/// `M = XᵀY` is accumulated in a fixed order, so swapping the arguments
/// produces `Mᵀ` bit for bit and the result is exactly symmetric.
pub fn pair_value<T: Real>(a: &SteinPoint<T>, b: &SteinPoint<T>, tau: T) -> T {
    let (x, y) = (a.x.matrix(), b.x.matrix());
    let n = x.nrows();
    let m = xt_y(x, y);
    let t = (0..n).fold(T::zero(), |acc, i| acc + m[(i, i)]);
    let half = lit::<T>(0.5);
    let mut inner = T::zero();
    for j in 0..n {
        for i in 0..n {
            let s = (m[(i, j)] - m[(j, i)]) * half;
            let ts = tau * s;
            inner += (a.skew_score[(i, j)] + ts) * (b.skew_score[(i, j)] - ts);
        }
    }
    let e = (tau * t).exp();
    inner * e + c_value(n, t, e, tau)
}

fn c_value<T: Real>(n: usize, trace: T, e: T, tau: T) -> T {
    tau * lit::<T>(0.5) * lit::<T>(n as f64 - 1.0) * trace * e
}

fn xt_y<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut acc = T::zero();
        for k in 0..n {
            acc += x[(k, i)] * y[(k, j)];
        }
        acc
    })
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `exp(τ·tr(XᵀY))`.
pub fn base_kernel<T: Real>(x: &Rotation<T>, y: &Rotation<T>, cfg: &KernelConfig<T>) -> Result<T> {
    check_dims(x.dim(), y.dim())?;
    Ok((cfg.tau * frobenius_inner(x.matrix(), y.matrix())).exp())
}

/// The parameter-free part `(τ/2)(N−1)·tr(XᵀY)·exp(τ·tr(XᵀY))`.
pub fn c_term<T: Real>(x: &Rotation<T>, y: &Rotation<T>, cfg: &KernelConfig<T>) -> Result<T> {
    check_dims(x.dim(), y.dim())?;
    let t = frobenius_inner(x.matrix(), y.matrix());
    Ok(c_value(x.dim(), t, (cfg.tau * t).exp(), cfg.tau))
}

/// von Mises–Fisher Stein kernel.
pub fn kp_vmf<T: Real>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    p: &VmfParams<T>,
    cfg: &KernelConfig<T>,
) -> Result<T> {
    check_dims(x.dim(), y.dim())?;
    StdKernel::new(p.clone(), *cfg).eval(x, y)
}

/// Riemannian normal Stein kernel.
pub fn kp_rn<T: Real>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    p: &RnParams<T>,
    cfg: &KernelConfig<T>,
) -> Result<T> {
    check_dims(x.dim(), y.dim())?;
    StdKernel::new(p.clone(), *cfg).eval(x, y)
}

/// Stein kernel for an arbitrary score function.
pub fn kp_generic<T: Real, S: ScoreFn<T>>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    score: S,
    cfg: &KernelConfig<T>,
) -> Result<T> {
    check_dims(x.dim(), y.dim())?;
    StdKernel::new(score, *cfg).eval(x, y)
}

/// Step size giving ~1e-9 relative agreement with the closed forms in `f64`.
pub const DEFAULT_ORACLE_STEP: f64 = 1e-3;

/// Finite-difference Stein kernel in the standard basis.
///
/// See [`stein_oracle_in_basis`].
pub fn stein_oracle<T, L>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    log_p: L,
    cfg: &KernelConfig<T>,
    h: T,
) -> Result<T>
where
    T: Real,
    L: Fn(&Rotation<T>) -> Result<T>,
{
    stein_oracle_in_basis(x, y, log_p, cfg, h, &standard_basis(x.dim())?)
}

/// `Σₗ (Dˡ_X + Dˡ_X log p)(Dˡ_Y + Dˡ_Y log p) k(X,Y)` by central differences.
///
/// `Dˡ f(X) = d/dt f(X·exp(t·Eₗ))` at `t = 0`. Each derivative is a central
/// difference with Richardson extrapolation over steps `h` and `h/2`, which
/// cancels the O(h²) truncation term.
pub fn stein_oracle_in_basis<T, L>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    log_p: L,
    cfg: &KernelConfig<T>,
    h: T,
    basis: &Basis<T>,
) -> Result<T>
where
    T: Real,
    L: Fn(&Rotation<T>) -> Result<T>,
{
    if !(h >= lit(1e-6) && h <= lit(1e-3)) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must lie in [1e-6, 1e-3], got {h}"
        )));
    }
    oracle_sum(x, y, &log_p, cfg, h, basis, true)
}

fn oracle_sum<T, L>(
    x: &Rotation<T>,
    y: &Rotation<T>,
    log_p: &L,
    cfg: &KernelConfig<T>,
    h: T,
    basis: &Basis<T>,
    richardson: bool,
) -> Result<T>
where
    T: Real,
    L: Fn(&Rotation<T>) -> Result<T>,
{
    check_dims(x.dim(), y.dim())?;
    check_dims(x.dim(), basis.group_dim())?;
    let k = |a: &Rotation<T>, b: &Rotation<T>| {
        (cfg.tau * frobenius_inner(a.matrix(), b.matrix())).exp()
    };
    let k0 = k(x, y);
    let mut total = T::zero();
    for e in basis.elements() {
        let derivs = |step: T| -> Result<[T; 5]> {
            let xp = x.retract(&e.scale(step));
            let xm = x.retract(&e.scale(-step));
            let yp = y.retract(&e.scale(step));
            let ym = y.retract(&e.scale(-step));
            let two = lit::<T>(2.0) * step;
            Ok([
                (log_p(&xp)? - log_p(&xm)?) / two,
                (log_p(&yp)? - log_p(&ym)?) / two,
                (k(&xp, y) - k(&xm, y)) / two,
                (k(x, &yp) - k(x, &ym)) / two,
                (k(&xp, &yp) - k(&xp, &ym) - k(&xm, &yp) + k(&xm, &ym)) / (two * two),
            ])
        };
        let coarse = derivs(h)?;
        let d = if richardson {
            let fine = derivs(h * lit(0.5))?;
            let mut d = coarse;
            for (v, (c, f)) in d.iter_mut().zip(coarse.iter().zip(fine.iter())) {
                *v = (lit::<T>(4.0) * *f - *c) / lit(3.0);
            }
            d
        } else {
            coarse
        };
        let [dlog_x, dlog_y, dk_x, dk_y, dk_xy] = d;
        total += dk_xy + dlog_y * dk_x + dlog_x * dk_y + dlog_x * dlog_y * k0;
    }
    Ok(total)
}

/// `G[i][j] = k(xᵢ, xⱼ)/n`, computed row-parallel and mirrored so `G = Gᵀ` exactly.
pub fn gram_matrix<T: Real, K: SteinKernelFn<T>>(
    samples: &[Rotation<T>],
    kernel: &K,
) -> Result<DMatrix<T>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("gram matrix needs at least one sample"));
    }
    let n = samples.len();
    let points = kernel.prepare_all(samples)?;
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| kernel.eval_points(&points[i], &points[j]))
                .collect()
        })
        .collect();
    let inv_n = T::one() / lit(n as f64);
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            g[(i, j)] = v * inv_n;
            g[(j, i)] = v * inv_n;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{haar_sample, hat3, so_exp};
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, rng: &mut crate::rng::Stream) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn base_kernel_and_c_term_examples() {
        let cfg = KernelConfig::default();
        let i3 = Rotation::<f64>::identity(3);
        let e3 = 3f64.exp();
        assert!(rel_err(base_kernel(&i3, &i3, &cfg).unwrap(), e3) < 1e-14);
        assert!(rel_err(c_term(&i3, &i3, &cfg).unwrap(), 3.0 * e3) < 1e-14);
        let y = so_exp(&hat3([0.0, 0.0, std::f64::consts::FRAC_PI_2]));
        assert!(rel_err(base_kernel(&i3, &y, &cfg).unwrap(), 1f64.exp()) < 1e-14);

        let mut rng = stream(1);
        let xs = haar_sample::<f64, _>(3, 2, &mut rng).unwrap();
        assert_eq!(
            base_kernel(&xs[0], &xs[1], &cfg),
            base_kernel(&xs[1], &xs[0], &cfg)
        );
        assert_eq!(c_term(&xs[0], &xs[1], &cfg), c_term(&xs[1], &xs[0], &cfg));

        let quarter = so_exp(
            &SkewMatrix::new(
                DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) * std::f64::consts::FRAC_PI_2,
            )
            .unwrap(),
        );
        let cfg2 = KernelConfig::new(2.5).unwrap();
        assert!(
            c_term(&Rotation::identity(2), &quarter, &cfg2)
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(base_kernel(&i3, &Rotation::identity(2), &cfg).is_err());
    }

    use crate::lie::SkewMatrix;

    #[test]
    fn kernel_config_rejects_nonpositive_tau() {
        assert!(KernelConfig::new(0.0).is_err());
        assert!(KernelConfig::new(-1.0).is_err());
        assert!(KernelConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn kp_vmf_closed_form_examples() {
        let mut rng = stream(2);
        let cfg = KernelConfig::default();
        for _ in 0..5 {
            let x = &haar_sample::<f64, _>(3, 1, &mut rng).unwrap()[0];
            let y = &haar_sample::<f64, _>(3, 1, &mut rng).unwrap()[0];
            let f = gaussian(3, &mut rng);
            let p = VmfParams::new(f.clone()).unwrap();

            let a = skew_of(&(x.matrix().transpose() * &f));
            let expected = 3.0 * 3f64.exp() + a.norm_squared() * 3f64.exp();
            assert!(rel_err(kp_vmf(x, x, &p, &cfg).unwrap(), expected) < 1e-12);

            let zero = VmfParams::new(DMatrix::zeros(3, 3)).unwrap();
            let t = frobenius_inner(x.matrix(), y.matrix());
            let s_xy = skew_of(&(x.matrix().transpose() * y.matrix()));
            let s_yx = skew_of(&(y.matrix().transpose() * x.matrix()));
            let expected = c_term(x, y, &cfg).unwrap() + frobenius_inner(&s_xy, &s_yx) * t.exp();
            assert!(rel_err(kp_vmf(x, y, &zero, &cfg).unwrap(), expected) < 1e-12);
        }
    }

    #[test]
    fn kp_rn_at_mean_is_c_term() {
        let cfg = KernelConfig::new(0.7).unwrap();
        for n in 2..=4 {
            let mu = haar_sample::<f64, _>(n, 1, &mut stream(n as u64))
                .unwrap()
                .remove(0);
            let p = RnParams::new(mu.clone(), 4.0).unwrap();
            let nf = n as f64;
            let expected = 0.35 * (nf - 1.0) * nf * (0.7 * nf).exp();
            assert!(rel_err(kp_rn(&mu, &mu, &p, &cfg).unwrap(), expected) < 1e-12);
        }
    }

    #[test]
    fn kernels_are_exactly_symmetric() {
        let mut rng = stream(3);
        let cfg = KernelConfig::new(0.8).unwrap();
        for n in 2..=4 {
            for _ in 0..20 {
                let xs = haar_sample::<f64, _>(n, 3, &mut rng).unwrap();
                let vmf = VmfParams::new(gaussian(n, &mut rng)).unwrap();
                let rn = RnParams::new(xs[2].clone(), 2.0).unwrap();
                assert_eq!(
                    kp_vmf(&xs[0], &xs[1], &vmf, &cfg).unwrap(),
                    kp_vmf(&xs[1], &xs[0], &vmf, &cfg).unwrap()
                );
                assert_eq!(
                    kp_rn(&xs[0], &xs[1], &rn, &cfg).unwrap(),
                    kp_rn(&xs[1], &xs[0], &rn, &cfg).unwrap()
                );
            }
        }
    }

    #[test]
    fn generic_score_reproduces_family_kernels() {
        let mut rng = stream(4);
        let cfg = KernelConfig::default();
        for _ in 0..20 {
            let xs = haar_sample::<f64, _>(3, 3, &mut rng).unwrap();
            let f = gaussian(3, &mut rng);
            let vmf = VmfParams::new(f.clone()).unwrap();
            let vmf_score =
                |x: &Rotation<f64>| Ok(x.matrix() * skew_of(&(x.matrix().transpose() * &f)));
            let a = kp_vmf(&xs[0], &xs[1], &vmf, &cfg).unwrap();
            let b = kp_generic(&xs[0], &xs[1], vmf_score, &cfg).unwrap();
            assert!(rel_err(b, a) < 1e-12);

            let mu = xs[2].clone();
            let rn = RnParams::new(mu.clone(), 1.7).unwrap();
            let rn_score = |x: &Rotation<f64>| {
                Ok(x.matrix() * so_log(&x.inverse().compose(&mu))?.into_matrix() * 1.7)
            };
            let a = kp_rn(&xs[0], &xs[1], &rn, &cfg).unwrap();
            let b = kp_generic(&xs[0], &xs[1], rn_score, &cfg).unwrap();
            assert!(rel_err(b, a) < 1e-12);

            let zero = VmfParams::new(DMatrix::zeros(3, 3)).unwrap();
            let zero_score = |x: &Rotation<f64>| Ok(DMatrix::zeros(x.dim(), x.dim()));
            assert!(
                rel_err(
                    kp_generic(&xs[0], &xs[1], zero_score, &cfg).unwrap(),
                    kp_vmf(&xs[0], &xs[1], &zero, &cfg).unwrap()
                ) < 1e-12
            );
        }
    }

    #[test]
    fn non_tangent_score_is_rejected() {
        let x = Rotation::<f64>::identity(3);
        let bad = |x: &Rotation<f64>| Ok(x.matrix().clone());
        assert!(matches!(
            kp_generic(&x, &x, bad, &KernelConfig::default()),
            Err(Error::Tangency(_))
        ));
    }

    #[test]
    fn closed_forms_match_oracle() {
        let mut rng = stream(5);
        let cfg = KernelConfig::default();
        for n in 2..=4 {
            for _ in 0..20 {
                let xs = haar_sample::<f64, _>(n, 3, &mut rng).unwrap();
                let vmf = VmfParams::new(gaussian(n, &mut rng)).unwrap();
                let exact = kp_vmf(&xs[0], &xs[1], &vmf, &cfg).unwrap();
                let oracle = stein_oracle(
                    &xs[0],
                    &xs[1],
                    |x| Ok(vmf.log_density_unnormalized(x)),
                    &cfg,
                    DEFAULT_ORACLE_STEP,
                )
                .unwrap();
                assert!(
                    rel_err(oracle, exact) < 1e-6,
                    "vMF N={n}: {oracle} vs {exact}"
                );

                let varsigma = rng.random_range(0.5..4.0);
                let rn = RnParams::new(xs[2].clone(), varsigma).unwrap();
                let exact = kp_rn(&xs[0], &xs[1], &rn, &cfg).unwrap();
                let oracle = stein_oracle(
                    &xs[0],
                    &xs[1],
                    |x| rn.log_density_unnormalized(x),
                    &cfg,
                    DEFAULT_ORACLE_STEP,
                )
                .unwrap();
                assert!(
                    rel_err(oracle, exact) < 1e-6,
                    "RN N={n}: {oracle} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn constant_log_density_gives_zero_score_kernel() {
        let mut rng = stream(6);
        let cfg = KernelConfig::default();
        let xs = haar_sample::<f64, _>(3, 2, &mut rng).unwrap();
        let oracle = stein_oracle(&xs[0], &xs[1], |_| Ok(2.5), &cfg, DEFAULT_ORACLE_STEP).unwrap();
        let zero = VmfParams::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(rel_err(oracle, kp_vmf(&xs[0], &xs[1], &zero, &cfg).unwrap()) < 1e-8);
    }

    #[test]
    fn oracle_rejects_out_of_range_step() {
        let x = Rotation::<f64>::identity(3);
        let cfg = KernelConfig::default();
        assert!(stein_oracle(&x, &x, |_| Ok(0.0), &cfg, 1e-2).is_err());
        assert!(stein_oracle(&x, &x, |_| Ok(0.0), &cfg, 1e-7).is_err());
    }

    #[test]
    fn oracle_is_basis_invariant() {
        let mut rng = stream(7);
        let cfg = KernelConfig::default();
        let standard = standard_basis::<f64>(3).unwrap();
        let vmf = VmfParams::new(gaussian(3, &mut rng)).unwrap();
        let xs = haar_sample::<f64, _>(3, 2, &mut rng).unwrap();
        let log_p = |x: &Rotation<f64>| Ok(vmf.log_density_unnormalized(x));
        let base =
            stein_oracle_in_basis(&xs[0], &xs[1], log_p, &cfg, DEFAULT_ORACLE_STEP, &standard)
                .unwrap();
        for _ in 0..5 {
            let q = haar_sample::<f64, _>(3, 1, &mut rng)
                .unwrap()
                .remove(0)
                .into_matrix();
            let rotated = standard.transformed(&q).unwrap();
            let v =
                stein_oracle_in_basis(&xs[0], &xs[1], log_p, &cfg, DEFAULT_ORACLE_STEP, &rotated)
                    .unwrap();
            assert!(rel_err(v, base) < 1e-8, "{v} vs {base}");
        }
    }

    #[test]
    fn vmf_kernel_is_rotation_equivariant() {
        let mut rng = stream(8);
        let cfg = KernelConfig::new(1.3).unwrap();
        for n in 2..=4 {
            let xs = haar_sample::<f64, _>(n, 3, &mut rng).unwrap();
            let f = gaussian(n, &mut rng);
            let r = &xs[2];
            let a = kp_vmf(&xs[0], &xs[1], &VmfParams::new(f.clone()).unwrap(), &cfg).unwrap();
            let b = kp_vmf(
                &r.compose(&xs[0]),
                &r.compose(&xs[1]),
                &VmfParams::new(r.matrix() * &f).unwrap(),
                &cfg,
            )
            .unwrap();
            assert!(rel_err(b, a) < 1e-12);
        }
    }

    #[test]
    fn gram_matrix_properties() {
        let mut rng = stream(9);
        let cfg = KernelConfig::default();
        let kernel = VmfKernel::new(VmfParams::new(gaussian(3, &mut rng)).unwrap(), cfg);
        let xs = haar_sample::<f64, _>(3, 50, &mut rng).unwrap();

        let g1 = gram_matrix(&xs[..1], &kernel).unwrap();
        assert_eq!(g1[(0, 0)], kernel.eval(&xs[0], &xs[0]).unwrap());

        let g = gram_matrix(&xs, &kernel).unwrap();
        assert_eq!((&g - g.transpose()).norm(), 0.0);
        let eig = g.symmetric_eigenvalues();
        let max = eig.max();
        assert!(eig.iter().all(|&l| l >= -1e-8 * max));
        assert!(matches!(
            gram_matrix::<f64, _>(&[], &kernel),
            Err(Error::EmptyInput(_))
        ));
    }
}
