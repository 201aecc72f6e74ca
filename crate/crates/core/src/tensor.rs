//! Symmetric-tensor algebra: Schur complements, inertia, norms and the
//! isotropic/traceless split.
//!
//! Every quadratic response object in the crate ([`SymMatrix`]) is a dense
//! real symmetric matrix. Constructors validate symmetry and finiteness and
//! store the exactly symmetrized matrix `(M + Mᵀ)/2`; every matrix returned
//! by an operation is re-symmetrized the same way so the invariant cannot
//! drift over long iterations.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("ragged row {row}: expected {expected} entries, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric (max |M_ij - M_ji| = {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error(
        "fast sector is not positive definite: smallest eigenvalue {min_eigenvalue:e} \
         is below threshold {threshold:e}"
    )]
    FastSectorNotPD { min_eigenvalue: f64, threshold: f64 },
}

/// Real symmetric `d×d` matrix.
#[derive(Clone, PartialEq)]
pub struct SymMatrix<T: Scalar = f64> {
    inner: DMatrix<T>,
}

/// Eigendecomposition with eigenvalues in ascending order; column `i` of
/// `vectors` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymEigen<T: Scalar> {
    pub values: Vec<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Validates and wraps a dense matrix.
    ///
    /// Accepts `max|M_ij − M_ji| ≤ rtol·(1 + max|M_ij|)` and stores the
    /// symmetrized matrix.
    pub fn new(m: DMatrix<T>) -> Result<Self, TensorError> {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Err(TensorError::Empty);
        }
        if rows != cols {
            return Err(TensorError::NotSquare { rows, cols });
        }
        let mut max_abs = T::zero();
        for j in 0..cols {
            for i in 0..rows {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(TensorError::NonFinite { row: i, col: j });
                }
                max_abs = max_abs.max(v.abs());
            }
        }
        let mut asym = T::zero();
        for j in 0..cols {
            for i in (j + 1)..rows {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > T::lit(T::SYMMETRY_RTOL) * (T::one() + max_abs) {
            return Err(TensorError::NotSymmetric {
                max_asymmetry: asym.as_f64(),
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds from row vectors (row-major, as in the JSON wire format).
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, TensorError> {
        Self::new(dense_from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self {
            inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// `v vᵀ`.
    pub fn outer(v: &[T]) -> Self {
        let v = DVector::from_column_slice(v);
        Self::symmetrize(&v * v.transpose())
    }

    /// `(M + Mᵀ)/2` without validation. Used for results computed from
    /// already-valid operands.
    pub(crate) fn symmetrize(m: DMatrix<T>) -> Self {
        let half = T::lit(0.5);
        let t = m.transpose();
        Self {
            inner: (m + t) * half,
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.inner
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn trace(&self) -> T {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> T {
        self.inner.norm()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.inner.amax()
    }

    /// Frobenius inner product `tr(AᵀB)`.
    pub fn frobenius_dot(&self, other: &Self) -> T {
        self.inner.dot(&other.inner)
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.inner * &v))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            inner: &self.inner * s,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut v: Vec<T> = self
            .inner
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        v
    }

    pub fn eigen(&self) -> SymEigen<T> {
        let eig = SymmetricEigen::new(self.inner.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("finite eigenvalues")
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        SymEigen { values, vectors }
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        *self.eigenvalues().last().expect("non-empty matrix")
    }

    /// Applies `f` to the spectrum: `V f(Λ) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Self {
        let SymEigen { values, vectors } = self.eigen();
        let mut scaled = vectors.clone();
        for (j, &l) in values.iter().enumerate() {
            let fl = f(l);
            scaled.column_mut(j).scale_mut(fl);
        }
        Self::symmetrize(scaled * vectors.transpose())
    }

    /// Inverse through the eigendecomposition, or `None` if some eigenvalue
    /// is within the spectral band of zero.
    pub fn inverse(&self) -> Option<Self> {
        let values = self.eigenvalues();
        let scale = operator_norm_of(&values).max(T::one());
        let band = T::lit(T::SPECTRAL_RTOL) * scale;
        if values.iter().any(|l| l.abs() <= band) {
            return None;
        }
        Some(self.map_spectrum(|l| T::one() / l))
    }

    pub fn is_positive_definite(&self) -> bool {
        let values = self.eigenvalues();
        let scale = operator_norm_of(&values).max(T::one());
        values[0] > T::lit(T::SPECTRAL_RTOL) * scale
    }

    pub fn cast<U: Scalar>(&self) -> SymMatrix<U> {
        SymMatrix {
            inner: self.inner.map(|v| U::lit(v.as_f64())),
        }
    }
}

pub(crate) fn dense_from_rows<T: Scalar>(rows: &[Vec<T>]) -> Result<DMatrix<T>, TensorError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(TensorError::Empty);
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(TensorError::Ragged {
                row: i,
                expected: ncols,
                found: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn dense_to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl<T: Scalar> fmt::Debug for SymMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymMatrix")
            .field("rows", &self.to_rows())
            .finish()
    }
}

impl<T: Scalar> Serialize for SymMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for SymMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

// Arithmetic panics on dimension mismatch, like the underlying nalgebra ops.
impl<T: Scalar> Add for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn add(self, rhs: Self) -> SymMatrix<T> {
        SymMatrix::symmetrize(&self.inner + &rhs.inner)
    }
}

impl<T: Scalar> Sub for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn sub(self, rhs: Self) -> SymMatrix<T> {
        SymMatrix::symmetrize(&self.inner - &rhs.inner)
    }
}

impl<T: Scalar> Mul<T> for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn mul(self, rhs: T) -> SymMatrix<T> {
        self.scaled(rhs)
    }
}

impl<T: Scalar> Neg for &SymMatrix<T> {
    type Output = SymMatrix<T>;
    fn neg(self) -> SymMatrix<T> {
        SymMatrix {
            inner: -&self.inner,
        }
    }
}

/// Inertia `(n₊, n₋, n₀)` of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
}

impl Signature {
    /// Classifies a spectrum with band `τ = tol·max(1, max|λ|)`.
    pub fn classify<T: Scalar>(eigenvalues: &[T], tol: T) -> Self {
        let band = tol * operator_norm_of(eigenvalues).max(T::one());
        let mut sig = Signature {
            n_plus: 0,
            n_minus: 0,
            n_zero: 0,
        };
        for &l in eigenvalues {
            if l > band {
                sig.n_plus += 1;
            } else if l < -band {
                sig.n_minus += 1;
            } else {
                sig.n_zero += 1;
            }
        }
        sig
    }

    pub fn dim(&self) -> usize {
        self.n_plus + self.n_minus + self.n_zero
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.n_plus, self.n_minus, self.n_zero)
    }
}

/// Default relative signature tolerance for `T`.
pub fn default_signature_tol<T: Scalar>() -> T {
    T::lit(T::SPECTRAL_RTOL)
}

/// Counts positive, negative and near-zero eigenvalues of `m`.
///
/// Eigenvalues inside `±tol·max(1, ‖m‖_op)` are counted as zero rather than
/// forced to a sign.
pub fn signature<T: Scalar>(m: &SymMatrix<T>, tol: T) -> Signature {
    assert!(tol >= T::zero(), "signature tolerance must be non-negative");
    Signature::classify(&m.eigenvalues(), tol)
}

pub(crate) fn operator_norm_of<T: Scalar>(eigenvalues: &[T]) -> T {
    eigenvalues
        .iter()
        .fold(T::zero(), |acc, l| acc.max(l.abs()))
}

/// Spectral norm `max|λ_i|`.
pub fn operator_norm<T: Scalar>(m: &SymMatrix<T>) -> T {
    operator_norm_of(&m.eigenvalues())
}

/// `m = q·I + s` with `q = tr(m)/d` and `tr(s) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct IsoTracelessSplit<T: Scalar = f64> {
    pub q: T,
    pub s: SymMatrix<T>,
}

impl<T: Scalar> IsoTracelessSplit<T> {
    pub fn reconstruct(&self) -> SymMatrix<T> {
        let mut m = self.s.clone().into_matrix();
        for i in 0..m.nrows() {
            m[(i, i)] += self.q;
        }
        SymMatrix::symmetrize(m)
    }
}

pub fn iso_traceless<T: Scalar>(m: &SymMatrix<T>) -> IsoTracelessSplit<T> {
    let d = m.dim();
    let q = m.trace() / T::from_usize(d).expect("dimension fits scalar");
    let mut s = m.matrix().clone();
    for i in 0..d {
        s[(i, i)] -= q;
    }
    IsoTracelessSplit {
        q,
        s: SymMatrix::symmetrize(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SeparationCheck<T: Scalar = f64> {
    /// `|q| > ‖S‖_op`.
    pub holds: bool,
    pub q: T,
    pub s_norm: T,
}

/// Tests the spectral separation condition `|q| > ‖S‖_op` and returns both
/// scales so callers can track how close they are to crossover.
pub fn separation_check<T: Scalar>(m: &SymMatrix<T>) -> SeparationCheck<T> {
    separation_from_spectrum(&m.eigenvalues())
}

/// Same as [`separation_check`] from a precomputed spectrum: the eigenvalues
/// of `S` are `λ_i − q`.
pub(crate) fn separation_from_spectrum<T: Scalar>(eigenvalues: &[T]) -> SeparationCheck<T> {
    let d = T::from_usize(eigenvalues.len()).expect("dimension fits scalar");
    let q = eigenvalues.iter().fold(T::zero(), |a, &l| a + l) / d;
    let s_norm = eigenvalues
        .iter()
        .fold(T::zero(), |a, &l| a.max((l - q).abs()));
    SeparationCheck {
        holds: q.abs() > s_norm,
        q,
        s_norm,
    }
}

/// Spectral gap `Δ = −λ_max(q_tan)`; positive iff `q_tan` is negative definite.
pub fn stability_margin<T: Scalar>(q_tan: &SymMatrix<T>) -> T {
    -q_tan.max_eigenvalue()
}

/// Weyl criterion: `‖a‖_op < Δ(q_tan)` guarantees that `q_tan + a` keeps
/// every negative eigenvalue of `q_tan`.
pub fn perturbation_preserves_signature<T: Scalar>(
    q_tan: &SymMatrix<T>,
    a: &SymMatrix<T>,
) -> Result<bool, TensorError> {
    if q_tan.dim() != a.dim() {
        return Err(TensorError::DimensionMismatch {
            context: "perturbation_preserves_signature",
            expected: format!("{0}x{0}", q_tan.dim()),
            found: format!("{0}x{0}", a.dim()),
        });
    }
    Ok(operator_norm(a) < stability_margin(q_tan))
}

/// Block partition `Q = [[A, B], [Bᵀ, C]]` with a strictly positive definite
/// fast block `C`.
///
/// The eigendecomposition of `C` is computed once at construction; it both
/// certifies `C > 0` and supplies `C⁻¹` for the Schur complement.
#[derive(Clone)]
pub struct BlockQuadratic<T: Scalar = f64> {
    a: SymMatrix<T>,
    b: DMatrix<T>,
    c: SymMatrix<T>,
    c_eigen: SymEigen<T>,
}

impl<T: Scalar> BlockQuadratic<T> {
    pub fn new(a: SymMatrix<T>, b: DMatrix<T>, c: SymMatrix<T>) -> Result<Self, TensorError> {
        if b.nrows() != a.dim() || b.ncols() != c.dim() {
            return Err(TensorError::DimensionMismatch {
                context: "BlockQuadratic coupling block",
                expected: format!("{}x{}", a.dim(), c.dim()),
                found: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        if let Some((row, col)) = first_non_finite(&b) {
            return Err(TensorError::NonFinite { row, col });
        }
        let c_eigen = c.eigen();
        let threshold = pd_threshold(&c_eigen.values);
        if c_eigen.values[0] <= threshold {
            return Err(TensorError::FastSectorNotPD {
                min_eigenvalue: c_eigen.values[0].as_f64(),
                threshold: threshold.as_f64(),
            });
        }
        Ok(Self { a, b, c, c_eigen })
    }

    /// Splits a full symmetric matrix after the first `d_slow` coordinates.
    pub fn partition(q: &SymMatrix<T>, d_slow: usize) -> Result<Self, TensorError> {
        let d = q.dim();
        if d_slow == 0 || d_slow >= d {
            return Err(TensorError::DimensionMismatch {
                context: "BlockQuadratic::partition",
                expected: format!("0 < d_slow < {d}"),
                found: d_slow.to_string(),
            });
        }
        let m = q.matrix();
        let d_fast = d - d_slow;
        let a = SymMatrix::symmetrize(m.view((0, 0), (d_slow, d_slow)).into_owned());
        let b = m.view((0, d_slow), (d_slow, d_fast)).into_owned();
        let c = SymMatrix::symmetrize(m.view((d_slow, d_slow), (d_fast, d_fast)).into_owned());
        Self::new(a, b, c)
    }

    pub fn a(&self) -> &SymMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &SymMatrix<T> {
        &self.c
    }

    pub fn slow_dim(&self) -> usize {
        self.a.dim()
    }

    pub fn fast_dim(&self) -> usize {
        self.c.dim()
    }

    /// Reassembles the full `(d_s + d_f)` matrix.
    pub fn assemble(&self) -> SymMatrix<T> {
        let (ds, df) = (self.slow_dim(), self.fast_dim());
        let mut m = DMatrix::zeros(ds + df, ds + df);
        m.view_mut((0, 0), (ds, ds)).copy_from(self.a.matrix());
        m.view_mut((0, ds), (ds, df)).copy_from(&self.b);
        m.view_mut((ds, 0), (df, ds)).copy_from(&self.b.transpose());
        m.view_mut((ds, ds), (df, df)).copy_from(self.c.matrix());
        SymMatrix::symmetrize(m)
    }

    /// The subtracted term `B C⁻¹ Bᵀ`, formed as `X Xᵀ` with
    /// `X = B V Λ^{-1/2}` so it is PSD up to rounding.
    pub fn schur_correction(&self) -> SymMatrix<T> {
        let mut x = &self.b * &self.c_eigen.vectors;
        for (j, &l) in self.c_eigen.values.iter().enumerate() {
            x.column_mut(j).scale_mut(T::one() / l.sqrt());
        }
        SymMatrix::symmetrize(&x * x.transpose())
    }
}

impl<T: Scalar> fmt::Debug for BlockQuadratic<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockQuadratic")
            .field("a", &self.a)
            .field("b", &dense_to_rows(&self.b))
            .field("c", &self.c)
            .finish()
    }
}

/// `C > 0` threshold: `1e-10·max(1, ‖C‖_op)` in double precision.
pub(crate) fn pd_threshold<T: Scalar>(eigenvalues: &[T]) -> T {
    T::lit(T::SPECTRAL_RTOL) * operator_norm_of(eigenvalues).max(T::one())
}

pub(crate) fn first_non_finite<T: Scalar>(m: &DMatrix<T>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Eliminates the fast sector: `Q_eff = A − B C⁻¹ Bᵀ`.
///
/// The result is ordered below `A` (`A − Q_eff ⪰ 0`); with `B = 0` it is `A`
/// bit-for-bit.
pub fn schur_complement<T: Scalar>(q: &BlockQuadratic<T>) -> SymMatrix<T> {
    q.a() - &q.schur_correction()
}
