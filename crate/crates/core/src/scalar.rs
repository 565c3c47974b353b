//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All matrix code is written against [`Real`], which is implemented for
//! `f32` and `f64`. Tolerances that depend on the precision of the scalar
//! live here so callers never hard-code `1e-9` against an `f32`.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar usable by the crate: `f32` or `f64`.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Frobenius tolerance on `RᵀR − I` and on `det R − 1` for a valid rotation.
    fn orthogonality_tol() -> Self;
    /// Frobenius tolerance on `S + Sᵀ` for a valid skew matrix.
    fn skew_tol() -> Self;
    /// Minimum distance of a rotation angle from π for the principal log to be accepted.
    fn antipodal_margin() -> Self;
    /// Tolerance on `Xᵀ·g` being skew for a tangent vector `g` at `X`.
    fn tangency_tol() -> Self;
}

impl Real for f64 {
    fn orthogonality_tol() -> Self {
        1e-9
    }
    fn skew_tol() -> Self {
        1e-12
    }
    fn antipodal_margin() -> Self {
        1e-6
    }
    fn tangency_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn orthogonality_tol() -> Self {
        1e-4
    }
    fn skew_tol() -> Self {
        1e-5
    }
    fn antipodal_margin() -> Self {
        1e-3
    }
    fn tangency_tol() -> Self {
        1e-4
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion used for diagnostics and serialized output.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
