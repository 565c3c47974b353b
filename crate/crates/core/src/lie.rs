//! Matrix primitives on SO(N).
//!
//! Rotations are stored as dense `N×N` matrices. The Lie algebra so(N) is
//! represented by [`SkewMatrix`]; left-invariant directions at `X` are
//! `X·E` for `E` in an orthonormal [`Basis`] of skew matrices under the
//! Frobenius inner product `⟨A, B⟩ = tr(AᵀB)`.
//!
//! The module also carries the vectorization toolkit (`vec`, `unvec`,
//! Kronecker product, perfect shuffle) used to write quadratic forms in a
//! matrix argument as ordinary linear algebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// An element of SO(N).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation<T: Real> {
    mat: DMatrix<T>,
}

impl<T: Real> Rotation<T> {
    /// Validates `mat` against the orthogonality and determinant tolerances.
    pub fn new(mat: DMatrix<T>) -> Result<Self> {
        let n = square_dim(&mat)?;
        if n < 2 {
            return Err(Error::Dimension(format!("rotations need N ≥ 2, got {n}")));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotRotation {
                orthogonality: f64::NAN,
                det: f64::NAN,
            });
        }
        let orth = orthogonality_error(&mat);
        let det = mat.determinant();
        let tol = T::orthogonality_tol();
        if orth > tol || (det - T::one()).abs() > tol {
            return Err(Error::NotRotation {
                orthogonality: to_f64(orth),
                det: to_f64(det),
            });
        }
        Ok(Self { mat })
    }

    /// Wraps a matrix the caller knows to be a rotation (e.g. a product of rotations).
    pub fn new_unchecked(mat: DMatrix<T>) -> Self {
        debug_assert!(mat.is_square());
        Self { mat }
    }

    /// Accepts `mat` if it is within `tol` of a rotation and projects it onto SO(N).
    pub fn from_matrix_within(mat: DMatrix<T>, tol: T) -> Result<Self> {
        let n = square_dim(&mat)?;
        if n < 2 {
            return Err(Error::Dimension(format!("rotations need N ≥ 2, got {n}")));
        }
        let orth = orthogonality_error(&mat);
        let det = mat.determinant();
        if !(orth <= tol) || !((det - T::one()).abs() <= tol) {
            return Err(Error::NotRotation {
                orthogonality: to_f64(orth),
                det: to_f64(det),
            });
        }
        renormalize(&mat)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.mat
    }

    /// The group inverse `Rᵀ`.
    pub fn inverse(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
        }
    }

    /// The group product `self · other`.
    pub fn compose(&self, other: &Rotation<T>) -> Self {
        Self {
            mat: &self.mat * &other.mat,
        }
    }

    /// `self · exp(s)`, i.e. moving along the left-invariant direction `s`.
    pub fn retract(&self, s: &SkewMatrix<T>) -> Self {
        self.compose(&so_exp(s))
    }

    pub fn trace(&self) -> T {
        self.mat.trace()
    }
}

/// Frobenius norm of `RᵀR − I`.
pub fn orthogonality_error<T: Real>(mat: &DMatrix<T>) -> T {
    let n = mat.nrows();
    (mat.transpose() * mat - DMatrix::<T>::identity(n, n)).norm()
}

/// Nearest rotation to `mat` in Frobenius norm (polar factor with det fixed to +1).
pub fn renormalize<T: Real>(mat: &DMatrix<T>) -> Result<Rotation<T>> {
    let n = square_dim(mat)?;
    let svd = mat.clone().svd(true, true);
    let (mut u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::Numerical(
                "SVD did not return singular vectors".into(),
            ))
        }
    };
    let mut r = &u * &v_t;
    if r.determinant() < T::zero() {
        // flip the direction paired with the smallest singular value
        let k = (0..n)
            .min_by(|&a, &b| {
                svd.singular_values[a]
                    .partial_cmp(&svd.singular_values[b])
                    .unwrap()
            })
            .unwrap_or(n - 1);
        let neg = -u.column(k).clone_owned();
        u.set_column(k, &neg);
        r = &u * &v_t;
    }
    Ok(Rotation::new_unchecked(r))
}

/// An element of so(N).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix<T: Real> {
    mat: DMatrix<T>,
}

impl<T: Real> SkewMatrix<T> {
    pub fn new(mat: DMatrix<T>) -> Result<Self> {
        square_dim(&mat)?;
        let asym = (&mat + mat.transpose()).norm();
        if !(asym <= T::skew_tol() * (T::one() + mat.norm())) {
            return Err(Error::NotSkew(to_f64(asym)));
        }
        Ok(Self { mat })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            mat: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.mat
    }

    pub fn scale(&self, a: T) -> Self {
        Self { mat: &self.mat * a }
    }

    pub fn norm(&self) -> T {
        self.mat.norm()
    }
}

impl<T: Real> std::ops::Add for &SkewMatrix<T> {
    type Output = SkewMatrix<T>;
    fn add(self, rhs: Self) -> SkewMatrix<T> {
        SkewMatrix {
            mat: &self.mat + &rhs.mat,
        }
    }
}

/// `(A − Aᵀ)/2`, the orthogonal projection onto skew matrices.
pub fn skew_part<T: Real>(a: &DMatrix<T>) -> Result<SkewMatrix<T>> {
    square_dim(a)?;
    Ok(SkewMatrix { mat: skew_of(a) })
}

pub(crate) fn skew_of<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a - a.transpose()) * lit::<T>(0.5)
}

/// An orthonormal basis of so(N) under `⟨A, B⟩ = tr(AᵀB)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis<T: Real> {
    elems: Vec<SkewMatrix<T>>,
}

impl<T: Real> Basis<T> {
    /// Checks orthonormality of the given skew matrices.
    pub fn from_elements(elems: Vec<SkewMatrix<T>>) -> Result<Self> {
        let first = elems.first().ok_or(Error::EmptyInput("basis"))?;
        let n = first.dim();
        if elems.len() != n * (n - 1) / 2 || elems.iter().any(|e| e.dim() != n) {
            return Err(Error::Dimension(format!(
                "so({n}) needs {} basis elements of size {n}",
                n * (n - 1) / 2
            )));
        }
        let basis = Self { elems };
        let gram = basis.gram();
        let dev = (&gram - DMatrix::identity(gram.nrows(), gram.ncols())).amax();
        if dev > lit(1e-9) {
            return Err(Error::InvalidParameter(format!(
                "basis is not orthonormal (max Gram deviation {:.3e})",
                to_f64(dev)
            )));
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    /// Matrix size N of the underlying group.
    pub fn group_dim(&self) -> usize {
        self.elems[0].dim()
    }

    pub fn elements(&self) -> &[SkewMatrix<T>] {
        &self.elems
    }

    /// Trace inner products `tr(EᵢᵀEⱼ)`.
    pub fn gram(&self) -> DMatrix<T> {
        let d = self.elems.len();
        DMatrix::from_fn(d, d, |i, j| {
            frobenius_inner(self.elems[i].matrix(), self.elems[j].matrix())
        })
    }

    /// The basis `Dˡ = Σₖ q[l,k]·Eᵏ`; orthonormal whenever `q` is orthogonal.
    pub fn transformed(&self, q: &DMatrix<T>) -> Result<Self> {
        let d = self.elems.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::Dimension(format!("basis change must be {d}×{d}")));
        }
        let n = self.group_dim();
        let elems = (0..d)
            .map(|l| {
                let mut m = DMatrix::zeros(n, n);
                for (k, e) in self.elems.iter().enumerate() {
                    m += e.matrix() * q[(l, k)];
                }
                SkewMatrix { mat: skew_of(&m) }
            })
            .collect();
        Self::from_elements(elems)
    }

    /// Coordinates `⟨S, Eₗ⟩` of a skew matrix.
    pub fn coordinates(&self, s: &SkewMatrix<T>) -> DVector<T> {
        DVector::from_iterator(
            self.elems.len(),
            self.elems
                .iter()
                .map(|e| frobenius_inner(e.matrix(), s.matrix())),
        )
    }

    /// `Σₗ c[l]·Eₗ`.
    pub fn combine(&self, coords: &DVector<T>) -> SkewMatrix<T> {
        let n = self.group_dim();
        let mut m = DMatrix::zeros(n, n);
        for (e, &c) in self.elems.iter().zip(coords.iter()) {
            m += e.matrix() * c;
        }
        SkewMatrix { mat: m }
    }
}

/// The basis `E_{ij}`, `i < j`, in lexicographic order: `√2/2` at `(i,j)` and `−√2/2` at `(j,i)`.
pub fn standard_basis<T: Real>(n: usize) -> Result<Basis<T>> {
    if n < 2 {
        return Err(Error::Dimension(format!("so(N) needs N ≥ 2, got {n}")));
    }
    let h = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
    let mut elems = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = h;
            m[(j, i)] = -h;
            elems.push(SkewMatrix { mat: m });
        }
    }
    Ok(Basis { elems })
}

/// `[ω]_×` for `ω ∈ ℝ³`.
pub fn hat3<T: Real>(w: [T; 3]) -> SkewMatrix<T> {
    let z = T::zero();
    SkewMatrix {
        mat: DMatrix::from_row_slice(3, 3, &[z, -w[2], w[1], w[2], z, -w[0], -w[1], w[0], z]),
    }
}

/// Inverse of [`hat3`] applied to the skew part of a 3×3 matrix.
pub fn vee3<T: Real>(m: &DMatrix<T>) -> [T; 3] {
    let h = lit::<T>(0.5);
    [
        (m[(2, 1)] - m[(1, 2)]) * h,
        (m[(0, 2)] - m[(2, 0)]) * h,
        (m[(1, 0)] - m[(0, 1)]) * h,
    ]
}

/// Matrix exponential of a skew matrix.
pub fn so_exp<T: Real>(s: &SkewMatrix<T>) -> Rotation<T> {
    let m = s.matrix();
    match m.nrows() {
        2 => {
            let theta = m[(1, 0)];
            let (sn, c) = theta.sin_cos();
            Rotation::new_unchecked(DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]))
        }
        3 => Rotation::new_unchecked(rodrigues(m)),
        _ => Rotation::new_unchecked(expm_scaled_taylor(m)),
    }
}

fn rodrigues<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let w = vee3(m);
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < lit(1e-4) {
        // sin θ/θ and (1 − cos θ)/θ² to O(θ⁶)
        (
            T::one() - theta2 / lit(6.0) + theta2 * theta2 / lit(120.0),
            lit::<T>(0.5) - theta2 / lit(24.0) + theta2 * theta2 / lit(720.0),
        )
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    let k = hat3(w).into_matrix();
    DMatrix::identity(3, 3) + &k * a + (&k * &k) * b
}

fn expm_scaled_taylor<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let norm = to_f64(m.norm());
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let a = m * lit::<T>(0.5f64.powi(squarings));
    let mut result = DMatrix::<T>::identity(n, n);
    let mut term = DMatrix::<T>::identity(n, n);
    let eps = T::default_epsilon();
    for k in 1..30 {
        term = (&term * &a) / lit::<T>(k as f64);
        result += &term;
        if term.norm() <= eps * lit(1e-2) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Principal matrix logarithm of a rotation.
///
/// Fails with [`Error::Antipodal`] when some rotation angle is within
/// [`Real::antipodal_margin`] of π, where the logarithm is not unique.
pub fn so_log<T: Real>(r: &Rotation<T>) -> Result<SkewMatrix<T>> {
    let m = r.matrix();
    let margin = T::antipodal_margin();
    let limit = T::pi() - margin;
    let mat = match m.nrows() {
        2 => {
            let theta = m[(1, 0)].atan2(m[(0, 0)]);
            if theta.abs() > limit {
                return Err(Error::Antipodal {
                    angle: to_f64(theta.abs()),
                });
            }
            DMatrix::from_row_slice(2, 2, &[T::zero(), -theta, theta, T::zero()])
        }
        3 => log3(m, limit)?,
        _ => log_normal(m, limit)?,
    };
    Ok(SkewMatrix { mat: skew_of(&mat) })
}

fn log3<T: Real>(m: &DMatrix<T>, limit: T) -> Result<DMatrix<T>> {
    let half = lit::<T>(0.5);
    let cos = ((m.trace() - T::one()) * half).max(-T::one()).min(T::one());
    let v = vee3(m);
    let sin = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let theta = sin.atan2(cos);
    if theta > limit {
        return Err(Error::Antipodal {
            angle: to_f64(theta),
        });
    }
    if cos >= T::zero() {
        let scale = if theta < lit(1e-4) {
            let t2 = theta * theta;
            T::one() + t2 / lit(6.0) + t2 * t2 * lit(7.0 / 360.0)
        } else {
            theta / sin
        };
        return Ok(hat3([v[0] * scale, v[1] * scale, v[2] * scale]).into_matrix());
    }
    // Near π the antisymmetric part is small; read the axis off the symmetric part.
    let one_minus_cos = T::one() - cos;
    let sym = (m + m.transpose()) * half - DMatrix::identity(3, 3) * cos;
    let k = (0..3)
        .max_by(|&a, &b| sym[(a, a)].partial_cmp(&sym[(b, b)]).unwrap())
        .unwrap_or(0);
    let denom = (sym[(k, k)] * one_minus_cos).sqrt();
    let mut axis = [
        sym[(0, k)] / denom,
        sym[(1, k)] / denom,
        sym[(2, k)] / denom,
    ];
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    for a in axis.iter_mut() {
        *a /= norm;
    }
    if axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2] < T::zero() {
        for a in axis.iter_mut() {
            *a = -*a;
        }
    }
    Ok(hat3([axis[0] * theta, axis[1] * theta, axis[2] * theta]).into_matrix())
}

// The symmetric part S and skew part K of a rotation commute, and on each
// invariant plane S = cos θ·I and K = sin θ·J, so Log R = g(S)·K with
// g = θ / sin θ. For an eigenvector q of S, ‖Kq‖ = sin θ.
fn log_normal<T: Real>(m: &DMatrix<T>, limit: T) -> Result<DMatrix<T>> {
    let half = lit::<T>(0.5);
    let k = (m - m.transpose()) * half;
    let eig = ((m + m.transpose()) * half).symmetric_eigen();
    let q = &eig.eigenvectors;
    let mut g = DVector::<T>::zeros(m.nrows());
    for (i, &cos) in eig.eigenvalues.iter().enumerate() {
        let sin = (&k * q.column(i)).norm();
        let theta = sin.atan2(cos);
        if theta > limit {
            return Err(Error::Antipodal {
                angle: to_f64(theta),
            });
        }
        g[i] = if sin > T::zero() {
            theta / sin
        } else {
            T::one()
        };
    }
    Ok(q * DMatrix::from_diagonal(&g) * q.transpose() * k)
}

/// Riemannian distance `‖Log(XᵀY)‖_F` for the Frobenius metric.
pub fn geodesic_distance<T: Real>(x: &Rotation<T>, y: &Rotation<T>) -> Result<T> {
    Ok(so_log(&x.inverse().compose(y))?.norm())
}

/// Draws `count` Haar-distributed rotations.
///
/// Orthogonalizes a standard Gaussian matrix by QR, multiplies by the signs of
/// the triangular factor's diagonal (which makes the law Haar on O(N)), then
/// flips the first column when the determinant is −1.
pub fn haar_sample<T: Real, R: Rng + ?Sized>(
    n: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Rotation<T>>> {
    if n < 2 {
        return Err(Error::Dimension(format!("rotations need N ≥ 2, got {n}")));
    }
    Ok((0..count).map(|_| haar_one(n, rng)).collect())
}

pub(crate) fn haar_one<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Rotation<T> {
    let g = DMatrix::<T>::from_fn(n, n, |_, _| lit(rng.sample::<f64, _>(StandardNormal)));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < T::zero() {
        q.column_mut(0).neg_mut();
    }
    Rotation::new_unchecked(q)
}

/// Column-stacking vectorization.
pub fn vec<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a vector of length N².
pub fn unvec<T: Real>(v: &DVector<T>) -> Result<DMatrix<T>> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::Dimension(format!(
            "length {} is not a perfect square",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Kronecker product, with `(A⊗B)·vec(X) = vec(B·X·Aᵀ)`.
pub fn kron<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// The N²×N² perfect shuffle (commutation) matrix: `S·vec(F) = vec(Fᵀ)`.
pub fn perfect_shuffle<T: Real>(n: usize) -> DMatrix<T> {
    let mut s = DMatrix::zeros(n * n, n * n);
    for k in 0..n {
        for l in 0..n {
            s[(n * k + l, n * l + k)] = T::one();
        }
    }
    s
}

/// `tr(AᵀB)`, summed in a fixed order so that `⟨A,B⟩` and `⟨B,A⟩` agree bitwise.
pub fn frobenius_inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn square_dim<T: Real>(m: &DMatrix<T>) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}
