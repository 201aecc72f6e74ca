//! Scalar abstraction for the dense symmetric algebra.
//!
//! The linear-algebra layers (`tensor`, `reduction`, `minimal`, and the
//! Lyapunov solver) are generic over [`Scalar`]; the Monte Carlo layers run in
//! `f64` only, since their determinism guarantees are stated bit-for-bit.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point type usable by the symmetric-tensor algebra.
///
/// Tolerances are expressed relative to the scale of the operand; each
/// precision carries its own relative floor since `1e-12` is meaningless
/// in single precision.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Serialize + DeserializeOwned + Send + Sync
{
    /// Relative tolerance for accepting an input matrix as symmetric.
    const SYMMETRY_RTOL: f64;
    /// Default relative band for zero eigenvalues (signature, positivity).
    const SPECTRAL_RTOL: f64;

    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal converts to every Scalar")
    }

    /// Widens to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always widens to f64")
    }
}

impl Scalar for f64 {
    const SYMMETRY_RTOL: f64 = 1e-12;
    const SPECTRAL_RTOL: f64 = 1e-10;
}

impl Scalar for f32 {
    const SYMMETRY_RTOL: f64 = 1e-5;
    const SPECTRAL_RTOL: f64 = 1e-5;
}
