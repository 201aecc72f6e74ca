//! Adiabatic elimination of a stable fast sector from linear moment
//! dynamics, and the gradient bridge `K = −μQ` between drift generators and
//! quadratic response tensors.
//!
//! The same Schur-complement algebra reduces a Liouville-space generator
//! partitioned into slow and fast blocks, so [`eliminate_fast`] serves both.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::{dense_from_rows, dense_to_rows, first_non_finite, SymMatrix, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("fast sector is not dynamically stable (max Re λ(K_ff) = {max_real_part:e})")]
    FastSectorUnstable { max_real_part: f64 },
    #[error("mobility is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    MobilityNotPD { min_eigenvalue: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("generator block {block} contains a non-finite entry at ({row}, {col})")]
    NonFinite {
        block: &'static str,
        row: usize,
        col: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Linear generator `ẋ = K x` partitioned into slow (`s`) and fast (`f`)
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGenerator<T: Scalar = f64> {
    pub k_ss: DMatrix<T>,
    pub k_sf: DMatrix<T>,
    pub k_fs: DMatrix<T>,
    pub k_ff: DMatrix<T>,
}

impl<T: Scalar> BlockGenerator<T> {
    pub fn new(
        k_ss: DMatrix<T>,
        k_sf: DMatrix<T>,
        k_fs: DMatrix<T>,
        k_ff: DMatrix<T>,
    ) -> Result<Self, ReductionError> {
        let (ds, df) = (k_ss.nrows(), k_ff.nrows());
        let expect = [
            ("k_ss", &k_ss, ds, ds),
            ("k_sf", &k_sf, ds, df),
            ("k_fs", &k_fs, df, ds),
            ("k_ff", &k_ff, df, df),
        ];
        for (name, m, r, c) in expect {
            if m.shape() != (r, c) || r == 0 {
                return Err(ReductionError::DimensionMismatch {
                    context: name,
                    expected: format!("{r}x{c} (non-empty)"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            if let Some((row, col)) = first_non_finite(m) {
                return Err(ReductionError::NonFinite {
                    block: name,
                    row,
                    col,
                });
            }
        }
        Ok(Self {
            k_ss,
            k_sf,
            k_fs,
            k_ff,
        })
    }

    /// Splits a full generator after the first `d_slow` coordinates.
    pub fn partition(k: &DMatrix<T>, d_slow: usize) -> Result<Self, ReductionError> {
        let d = k.nrows();
        if k.ncols() != d || d_slow == 0 || d_slow >= d {
            return Err(ReductionError::DimensionMismatch {
                context: "BlockGenerator::partition",
                expected: format!("square matrix with 0 < d_slow < d (d_slow = {d_slow})"),
                found: format!("{}x{}", k.nrows(), k.ncols()),
            });
        }
        let df = d - d_slow;
        Self::new(
            k.view((0, 0), (d_slow, d_slow)).into_owned(),
            k.view((0, d_slow), (d_slow, df)).into_owned(),
            k.view((d_slow, 0), (df, d_slow)).into_owned(),
            k.view((d_slow, d_slow), (df, df)).into_owned(),
        )
    }

    /// Gradient generator `K = −μQ`, partitioned after `d_slow`.
    pub fn from_gradient(
        mu: &Mobility<T>,
        q: &SymMatrix<T>,
        d_slow: usize,
    ) -> Result<Self, ReductionError> {
        Self::partition(&k_from_q(mu, q)?, d_slow)
    }

    pub fn slow_dim(&self) -> usize {
        self.k_ss.nrows()
    }

    pub fn fast_dim(&self) -> usize {
        self.k_ff.nrows()
    }

    pub fn assemble(&self) -> DMatrix<T> {
        let (ds, df) = (self.slow_dim(), self.fast_dim());
        let mut k = DMatrix::zeros(ds + df, ds + df);
        k.view_mut((0, 0), (ds, ds)).copy_from(&self.k_ss);
        k.view_mut((0, ds), (ds, df)).copy_from(&self.k_sf);
        k.view_mut((ds, 0), (df, ds)).copy_from(&self.k_fs);
        k.view_mut((ds, ds), (df, df)).copy_from(&self.k_ff);
        k
    }

    fn require_fast_stable(&self) -> Result<(), ReductionError> {
        match max_real_eigenvalue(&self.k_ff) {
            Some(m) if m < T::zero() => Ok(()),
            Some(m) => Err(ReductionError::FastSectorUnstable {
                max_real_part: m.as_f64(),
            }),
            None => Err(ReductionError::FastSectorUnstable {
                max_real_part: f64::NAN,
            }),
        }
    }

    /// `K_ff⁻¹ K_fs`, after certifying stability of the fast block.
    fn fast_response(&self) -> Result<DMatrix<T>, ReductionError> {
        self.require_fast_stable()?;
        self.k_ff
            .clone()
            .lu()
            .solve(&self.k_fs)
            .ok_or(ReductionError::FastSectorUnstable {
                max_real_part: 0.0,
            })
    }
}

/// Serializable row-major form of a [`BlockGenerator`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BlockGeneratorRows<T: Scalar = f64> {
    pub k_ss: Vec<Vec<T>>,
    pub k_sf: Vec<Vec<T>>,
    pub k_fs: Vec<Vec<T>>,
    pub k_ff: Vec<Vec<T>>,
}

impl<T: Scalar> TryFrom<BlockGeneratorRows<T>> for BlockGenerator<T> {
    type Error = ReductionError;
    fn try_from(r: BlockGeneratorRows<T>) -> Result<Self, ReductionError> {
        BlockGenerator::new(
            dense_from_rows(&r.k_ss)?,
            dense_from_rows(&r.k_sf)?,
            dense_from_rows(&r.k_fs)?,
            dense_from_rows(&r.k_ff)?,
        )
    }
}

impl<T: Scalar> From<&BlockGenerator<T>> for BlockGeneratorRows<T> {
    fn from(k: &BlockGenerator<T>) -> Self {
        Self {
            k_ss: dense_to_rows(&k.k_ss),
            k_sf: dense_to_rows(&k.k_sf),
            k_fs: dense_to_rows(&k.k_fs),
            k_ff: dense_to_rows(&k.k_ff),
        }
    }
}

/// Largest real part of the (complex) spectrum, or `None` if the real Schur
/// iteration fails to converge.
pub fn max_real_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> Option<T> {
    if m.nrows() == 1 {
        return Some(m[(0, 0)]);
    }
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 10_000)?;
    schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .reduce(|a, b| a.max(b))
}

/// True iff every eigenvalue of `k_ff` has strictly negative real part.
pub fn check_fast_stable<T: Scalar>(k_ff: &DMatrix<T>) -> bool {
    if !k_ff.is_square() || k_ff.is_empty() {
        return false;
    }
    matches!(max_real_eigenvalue(k_ff), Some(m) if m < T::zero())
}

/// `K_eff = K_ss − K_sf K_ff⁻¹ K_fs`.
pub fn eliminate_fast<T: Scalar>(k: &BlockGenerator<T>) -> Result<DMatrix<T>, ReductionError> {
    let x = k.fast_response()?;
    Ok(&k.k_ss - &k.k_sf * x)
}

/// Quasi-stationary fast state `x_f = −K_ff⁻¹ K_fs x_s`.
pub fn fast_slave<T: Scalar>(k: &BlockGenerator<T>, x_s: &[T]) -> Result<Vec<T>, ReductionError> {
    if x_s.len() != k.slow_dim() {
        return Err(ReductionError::DimensionMismatch {
            context: "fast_slave",
            expected: k.slow_dim().to_string(),
            found: x_s.len().to_string(),
        });
    }
    let x = k.fast_response()?;
    let xf = -(x * DVector::from_column_slice(x_s));
    Ok(xf.iter().copied().collect())
}

/// Positive definite mobility operator `μ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Mobility<T: Scalar = f64>(SymMatrix<T>);

impl<T: Scalar> Mobility<T> {
    pub fn new(mu: SymMatrix<T>) -> Result<Self, ReductionError> {
        if !mu.is_positive_definite() {
            return Err(ReductionError::MobilityNotPD {
                min_eigenvalue: mu.min_eigenvalue().as_f64(),
            });
        }
        Ok(Self(mu))
    }

    /// `μ = s·I`.
    pub fn scalar(dim: usize, s: T) -> Result<Self, ReductionError> {
        Self::new(SymMatrix::identity(dim).scaled(s))
    }

    pub fn matrix(&self) -> &SymMatrix<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Mobility<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = SymMatrix::<T>::deserialize(d)?;
        Mobility::new(m).map_err(serde::de::Error::custom)
    }
}

/// The product `μ·q`.
pub fn drift_from_response<T: Scalar>(
    mu: &Mobility<T>,
    q: &SymMatrix<T>,
) -> Result<DMatrix<T>, ReductionError> {
    if mu.dim() != q.dim() {
        return Err(ReductionError::DimensionMismatch {
            context: "drift_from_response",
            expected: format!("{0}x{0}", mu.dim()),
            found: format!("{0}x{0}", q.dim()),
        });
    }
    Ok(mu.matrix().matrix() * q.matrix())
}

/// Generator of `ẋ = K x` for a gradient flow: `K = −μQ`.
pub fn k_from_q<T: Scalar>(mu: &Mobility<T>, q: &SymMatrix<T>) -> Result<DMatrix<T>, ReductionError> {
    Ok(-drift_from_response(mu, q)?)
}

/// Decay-rate matrix of `ṗ = −M p`: `M = μ Q_eff`.
pub fn m_from_q<T: Scalar>(
    mu: &Mobility<T>,
    q_eff: &SymMatrix<T>,
) -> Result<DMatrix<T>, ReductionError> {
    drift_from_response(mu, q_eff)
}
