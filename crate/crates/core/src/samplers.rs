//! Exact rejection samplers on SO(N) with Haar proposals.
//!
//! Each density is written as `p(X) ∝ g(X)` with a known bound `g ≤ G`, and a
//! Haar draw is accepted with probability `g(X)/G`. Before drawing, a probe
//! batch estimates the mean acceptance probability; if it is below
//! [`MIN_ACCEPTANCE`] the sampler refuses rather than spinning for hours.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lie::{frobenius_inner, haar_one, Rotation};
use crate::rng::{substream, Stream};
use crate::scalar::{lit, to_f64, Real};
use crate::stein::{RnParams, VmfParams};

/// Acceptance rates below this are reported as [`Error::EnvelopeTooLoose`].
pub const MIN_ACCEPTANCE: f64 = 1e-6;
/// Haar draws in the acceptance probe.
pub const PROBE_SIZE: usize = 4096;

/// Cayley parameters: `p(X | M) ∝ det(I + X·Mᵀ)^κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CayleyParams<T: Real> {
    m: Rotation<T>,
    kappa: T,
}

impl<T: Real> CayleyParams<T> {
    pub fn new(m: Rotation<T>, kappa: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(Self { m, kappa })
    }

    pub fn m(&self) -> &Rotation<T> {
        &self.m
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// `[det(I + X·Mᵀ)/2ᴺ]^κ`, which lies in `[0, 1]` and equals 1 at `X = M`.
    pub fn acceptance(&self, x: &Rotation<T>) -> T {
        let n = self.dim();
        let det =
            (DMatrix::identity(n, n) + x.matrix() * self.m.matrix().transpose()).determinant();
        let ratio = (det / lit::<T>(2f64.powi(n as i32)))
            .max(T::zero())
            .min(T::one());
        if self.kappa == T::zero() {
            T::one()
        } else {
            ratio.powf(self.kappa)
        }
    }
}

/// Sum of singular values of `F`, an upper bound of `tr(FᵀX)` over SO(N).
pub fn vmf_envelope<T: Real>(f: &DMatrix<T>) -> T {
    f.clone().singular_values().sum()
}

/// Accept/reject rule for a rejection sampler with Haar proposals.
pub trait HaarRejection<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Probability of accepting the proposal `x`; `None` means "discard and redraw".
    fn acceptance(&self, x: &Rotation<T>) -> Option<T>;

    /// Advice attached to [`Error::EnvelopeTooLoose`].
    fn hint(&self) -> String;
}

struct Vmf<'a, T: Real> {
    p: &'a VmfParams<T>,
    bound: T,
}

impl<T: Real> HaarRejection<T> for Vmf<'_, T> {
    fn dim(&self) -> usize {
        self.p.dim()
    }

    fn acceptance(&self, x: &Rotation<T>) -> Option<T> {
        Some(
            (frobenius_inner(self.p.f(), x.matrix()) - self.bound)
                .exp()
                .min(T::one()),
        )
    }

    fn hint(&self) -> String {
        format!(
            "F is too concentrated for Haar rejection (sum of singular values {:.3}); use a smaller F",
            to_f64(self.bound)
        )
    }
}

impl<T: Real> HaarRejection<T> for CayleyParams<T> {
    fn dim(&self) -> usize {
        CayleyParams::dim(self)
    }

    fn acceptance(&self, x: &Rotation<T>) -> Option<T> {
        Some(CayleyParams::acceptance(self, x))
    }

    fn hint(&self) -> String {
        format!(
            "kappa = {} is too large for Haar rejection; use a smaller kappa",
            self.kappa
        )
    }
}

impl<T: Real> HaarRejection<T> for RnParams<T> {
    fn dim(&self) -> usize {
        RnParams::dim(self)
    }

    // The antipodal set has measure zero; a proposal there is simply redrawn.
    fn acceptance(&self, x: &Rotation<T>) -> Option<T> {
        self.log_density_unnormalized(x)
            .ok()
            .map(|l| l.exp().min(T::one()))
    }

    fn hint(&self) -> String {
        format!(
            "varsigma = {} is too large for Haar rejection; use a smaller varsigma (larger sigma)",
            self.varsigma()
        )
    }
}

/// Mean acceptance probability over a probe batch of Haar proposals.
pub fn acceptance_rate<T: Real, S: HaarRejection<T> + ?Sized, R: Rng + ?Sized>(
    sampler: &S,
    probes: usize,
    rng: &mut R,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..probes {
        let x = haar_one::<T, _>(sampler.dim(), rng);
        total += sampler.acceptance(&x).map_or(0.0, to_f64);
    }
    total / probes.max(1) as f64
}

/// Draws `count` samples with the given rule, after an acceptance probe.
pub fn sample_rejection<T: Real, S: HaarRejection<T> + ?Sized, R: Rng + ?Sized>(
    sampler: &S,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let rate = acceptance_rate(sampler, PROBE_SIZE, rng);
    if rate < MIN_ACCEPTANCE {
        return Err(Error::EnvelopeTooLoose {
            rate,
            hint: sampler.hint(),
        });
    }
    let n = sampler.dim();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = haar_one::<T, _>(n, rng);
        let Some(p) = sampler.acceptance(&x) else {
            continue;
        };
        let u: f64 = rng.random();
        if lit::<T>(u) < p {
            out.push(x);
        }
    }
    Ok(out)
}

/// Exact draws from `p(X) ∝ exp(tr(FᵀX))`.
pub fn sample_vmf<T: Real, R: Rng + ?Sized>(
    p: &VmfParams<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    sample_rejection(
        &Vmf {
            p,
            bound: vmf_envelope(p.f()),
        },
        count,
        rng,
    )
}

/// Exact draws from `p(X) ∝ det(I + X·Mᵀ)^κ`.
pub fn sample_cayley<T: Real, R: Rng + ?Sized>(
    p: &CayleyParams<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    sample_rejection(p, count, rng)
}

/// Exact draws from `p(X) ∝ exp(−ς/2·‖Log(μᵀX)‖²_F)`.
pub fn sample_rn<T: Real, R: Rng + ?Sized>(
    p: &RnParams<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    sample_rejection(p, count, rng)
}

/// Splits `count` draws over `workers` tasks, task `w` using `substream(seed, w)`.
///
/// The output is the concatenation in task order, so it depends on `workers`
/// but never on thread scheduling.
pub fn par_sample<T, F>(
    seed: u64,
    count: usize,
    workers: usize,
    draw: F,
) -> Result<Vec<Rotation<T>>>
where
    T: Real,
    F: Fn(usize, &mut Stream) -> Result<Vec<Rotation<T>>> + Sync,
{
    let workers = workers.max(1);
    let parts: Vec<Vec<Rotation<T>>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let share = count / workers + usize::from(w < count % workers);
            draw(share, &mut substream(seed, w as u64))
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
