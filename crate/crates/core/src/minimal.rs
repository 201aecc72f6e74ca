//! Minimal coherence-sensitive realization.
//!
//! A slow block `A` coupled to a fast block of stiffness `g` through a
//! coherence-sensitive coupling `χ·b0`:
//!
//! ```text
//! A = I,   B = χ·b0,   C = g·I   ⇒   Q_eff = I − (χ²/g)·b0 b0ᵀ
//! ```
//!
//! so the effective curvature `λ_min(Q_eff)` crosses zero at
//! `χ* = √g / σ_max(b0)`. The parameterization is illustrative; any `A`
//! may be substituted through [`MinimalModelSpec::a`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{self, BoundaryCurve, ScalarField};
use crate::scalar::Scalar;
use crate::tensor::{dense_from_rows, dense_to_rows, schur_complement, BlockQuadratic, SymMatrix, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MinimalError {
    #[error("invalid minimal-model field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalModelSpec<T: Scalar = f64> {
    /// Coherence sensitivity `χ ≥ 0`.
    pub chi: T,
    /// Detector coupling `g > 0` (fast-sector stiffness).
    pub g: T,
    /// Coupling template, `d_s×d_f`, nonzero.
    pub b0: DMatrix<T>,
    /// Slow block; identity when absent.
    pub a: Option<SymMatrix<T>>,
}

impl<T: Scalar> Default for MinimalModelSpec<T> {
    fn default() -> Self {
        Self {
            chi: T::zero(),
            g: T::one(),
            b0: DMatrix::identity(2, 2),
            a: None,
        }
    }
}

impl<T: Scalar> MinimalModelSpec<T> {
    pub fn with(&self, chi: T, g: T) -> Self {
        Self {
            chi,
            g,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), MinimalError> {
        let bad = |field, reason: &str| Err(MinimalError::InvalidSpec { field, reason: reason.into() });
        if !(self.chi >= T::zero() && self.chi.is_finite()) {
            return bad("chi", "must be finite and >= 0");
        }
        if !(self.g > T::zero() && self.g.is_finite()) {
            return bad("g", "must be finite and > 0");
        }
        if self.b0.is_empty() || self.b0.iter().all(|v| *v == T::zero()) {
            return bad("b0", "coupling template must be nonzero");
        }
        if self.b0.iter().any(|v| !v.is_finite()) {
            return bad("b0", "entries must be finite");
        }
        if let Some(a) = &self.a {
            if a.dim() != self.b0.nrows() {
                return bad("a", "slow block must be d_s x d_s with d_s = rows of b0");
            }
        }
        Ok(())
    }

    pub fn slow_dim(&self) -> usize {
        self.b0.nrows()
    }

    pub fn fast_dim(&self) -> usize {
        self.b0.ncols()
    }
}

/// Wire form with the coupling template as row-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct MinimalModelRows<T: Scalar = f64> {
    #[serde(default = "T::zero")]
    pub chi: T,
    #[serde(default = "T::one")]
    pub g: T,
    #[serde(default = "identity_rows")]
    pub b0: Vec<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<SymMatrix<T>>,
}

fn identity_rows<T: Scalar>() -> Vec<Vec<T>> {
    dense_to_rows(&DMatrix::<T>::identity(2, 2))
}

impl<T: Scalar> TryFrom<MinimalModelRows<T>> for MinimalModelSpec<T> {
    type Error = MinimalError;
    fn try_from(r: MinimalModelRows<T>) -> Result<Self, MinimalError> {
        let spec = Self {
            chi: r.chi,
            g: r.g,
            b0: dense_from_rows(&r.b0)?,
            a: r.a,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl<T: Scalar> From<&MinimalModelSpec<T>> for MinimalModelRows<T> {
    fn from(s: &MinimalModelSpec<T>) -> Self {
        Self {
            chi: s.chi,
            g: s.g,
            b0: dense_to_rows(&s.b0),
            a: s.a.clone(),
        }
    }
}

/// `(A, χ·b0, g·I)`.
pub fn build_blocks<T: Scalar>(spec: &MinimalModelSpec<T>) -> Result<BlockQuadratic<T>, MinimalError> {
    spec.validate()?;
    let a = spec
        .a
        .clone()
        .unwrap_or_else(|| SymMatrix::identity(spec.slow_dim()));
    let c = SymMatrix::identity(spec.fast_dim()).scaled(spec.g);
    Ok(BlockQuadratic::new(a, &spec.b0 * spec.chi, c)?)
}

pub fn effective_tensor<T: Scalar>(spec: &MinimalModelSpec<T>) -> Result<SymMatrix<T>, MinimalError> {
    Ok(schur_complement(&build_blocks(spec)?))
}

/// Reconstructed curvature: the smallest eigenvalue of `Q_eff`.
pub fn b_eff_final<T: Scalar>(spec: &MinimalModelSpec<T>) -> Result<T, MinimalError> {
    Ok(effective_tensor(spec)?.min_eigenvalue())
}

/// The direction of least curvature and `vᵀ Q_eff v` along it (unit `v`).
pub fn softest_direction<T: Scalar>(spec: &MinimalModelSpec<T>) -> Result<(Vec<T>, T), MinimalError> {
    let q = effective_tensor(spec)?;
    let eig = q.eigen();
    let v: Vec<T> = eig.vectors.column(0).iter().copied().collect();
    let curv = q.quadratic_form(&v);
    Ok((v, curv))
}

/// Zero crossing `χ* = √g / σ_max(b0)` of [`b_eff_final`] for `A = I`.
pub fn critical_chi<T: Scalar>(g: T, b0: &DMatrix<T>) -> T {
    let smax = b0
        .singular_values()
        .iter()
        .fold(T::zero(), |a, &s| a.max(s));
    g.sqrt() / smax
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalScan {
    pub chi: Vec<f64>,
    pub g: Vec<f64>,
    /// `b_eff_final`, row-major with `chi` outer.
    pub values: Vec<f64>,
    /// Zero level set with `x = chi`, `y = g`.
    pub contour: BoundaryCurve,
}

impl MinimalScan {
    pub fn field(&self) -> ScalarField {
        ScalarField::new(self.chi.clone(), self.g.clone(), self.values.clone())
    }

    pub fn at(&self, ichi: usize, ig: usize) -> f64 {
        self.values[ichi * self.g.len() + ig]
    }

    /// `chi,g,b_eff_final` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chi,g,b_eff_final\n");
        for (i, &c) in self.chi.iter().enumerate() {
            for (j, &g) in self.g.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    contour::fmt_num(c),
                    contour::fmt_num(g),
                    contour::fmt_num(self.at(i, j))
                ));
            }
        }
        out
    }
}

/// Evaluates [`b_eff_final`] on the `chi × g` product grid and extracts its
/// zero contour.
pub fn scan<T: Scalar>(
    chi_grid: &[T],
    g_grid: &[T],
    template: &MinimalModelSpec<T>,
) -> Result<MinimalScan, MinimalError> {
    for (field, grid) in [("chi_grid", chi_grid), ("g_grid", g_grid)] {
        if grid.is_empty() {
            return Err(MinimalError::InvalidSpec { field, reason: "must be non-empty".into() });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MinimalError::InvalidSpec { field, reason: "must be strictly ascending".into() });
        }
    }
    let points: Vec<(T, T)> = chi_grid
        .iter()
        .flat_map(|&c| g_grid.iter().map(move |&g| (c, g)))
        .collect();
    let values = points
        .par_iter()
        .map(|&(c, g)| b_eff_final(&template.with(c, g)).map(T::as_f64))
        .collect::<Result<Vec<f64>, _>>()?;
    let chi: Vec<f64> = chi_grid.iter().map(|v| v.as_f64()).collect();
    let g: Vec<f64> = g_grid.iter().map(|v| v.as_f64()).collect();
    let field = ScalarField::new(chi.clone(), g.clone(), values.clone());
    Ok(MinimalScan {
        contour: contour::extract(&field, 0.0),
        chi,
        g,
        values,
    })
}
