//! Fluctuation layer: drift from the renormalized response, stationary
//! covariance, Euler–Maruyama sampling of the linear SDE
//! `ṗ = −M p + ξ` with `⟨ξξᵀ⟩ = 2D δ`, and curvature reconstruction.
//!
//! Under the Einstein relation `D = μ/β` and gradient drift `M = μ Q_eff`,
//! the stationary state is Gaussian with log-curvature `β Q_eff`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reduction::{m_from_q, max_real_eigenvalue, Mobility, ReductionError};
use crate::rng::StreamSeed;
use crate::scalar::Scalar;
use crate::tensor::{dense_to_rows, first_non_finite, SymMatrix, TensorError};

/// Step-size guard: `dt·‖M‖₂` must stay below this.
pub const STEP_GUARD: f64 = 0.1;
/// Largest admissible condition number of a sample covariance.
pub const MAX_CONDITION: f64 = 1e12;
const PSD_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("drift has no stationary state (max Re λ(−M) = {max_growth_rate:e})")]
    UnstableDrift { max_growth_rate: f64 },
    #[error("response tensor is not positive definite (min eigenvalue {min_eigenvalue:e}); no stationary Gaussian exists")]
    ResponseNotPD { min_eigenvalue: f64 },
    #[error("step dt = {dt:e} violates the guard dt*||M|| < {STEP_GUARD} (||M|| = {m_norm:e})")]
    StepTooLarge { dt: f64, m_norm: f64 },
    #[error("sample covariance is singular (condition number {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("need more than {required} samples, got {found}")]
    InsufficientSamples { required: usize, found: usize },
    #[error("diffusion matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    DiffusionNotPSD { min_eigenvalue: f64 },
    #[error("inverse temperature must be finite and > 0, got {0}")]
    InvalidBeta(f64),
    #[error("invalid {field}: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
    #[error("Lyapunov system is singular")]
    SingularLyapunov,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

fn require_square<T: Scalar>(field: &'static str, m: &DMatrix<T>, d: usize) -> Result<(), ReconError> {
    if m.shape() != (d, d) {
        return Err(ReconError::InvalidArgument {
            field,
            reason: format!("expected {d}x{d}, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    if let Some((row, col)) = first_non_finite(m) {
        return Err(TensorError::NonFinite { row, col }.into());
    }
    Ok(())
}

/// Fails with `UnstableDrift` unless every eigenvalue of `m` has positive
/// real part.
fn require_stable<T: Scalar>(m: &DMatrix<T>) -> Result<(), ReconError> {
    match max_real_eigenvalue(&(-m)) {
        Some(g) if g < T::zero() => Ok(()),
        Some(g) => Err(ReconError::UnstableDrift {
            max_growth_rate: g.as_f64(),
        }),
        None => Err(ReconError::UnstableDrift {
            max_growth_rate: f64::NAN,
        }),
    }
}

/// Solves `Mᵀ Γ + Γ M = 2D` for symmetric `Γ`.
///
/// The equation is vectorized as `(I⊗Mᵀ + Mᵀ⊗I) vec Γ = 2 vec D` and solved
/// by LU with one step of iterative refinement. The Kronecker system is
/// `d²×d²`, which is fine for the slow sectors handled here (d ≲ 20).
pub fn solve_lyapunov<T: Scalar>(m: &DMatrix<T>, d_mat: &SymMatrix<T>) -> Result<SymMatrix<T>, ReconError> {
    let n = d_mat.dim();
    require_square("drift matrix", m, n)?;
    require_stable(m)?;

    let nn = n * n;
    let mut kron = DMatrix::<T>::zeros(nn, nn);
    // vec index of Γ_ij is i + n·j
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for k in 0..n {
                kron[(row, k + n * j)] += m[(k, i)];
                kron[(row, i + n * k)] += m[(k, j)];
            }
        }
    }
    let two = T::lit(2.0);
    let rhs = DVector::from_fn(nn, |r, _| two * d_mat.get(r % n, r / n));
    let lu = kron.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(ReconError::SingularLyapunov)?;
    let resid = &rhs - &kron * &x;
    if let Some(dx) = lu.solve(&resid) {
        x += dx;
    }
    let gamma = DMatrix::from_fn(n, n, |i, j| x[i + n * j]);
    Ok(SymMatrix::symmetrize(gamma))
}

/// `‖Mᵀ Γ + Γ M − 2D‖_F`.
pub fn lyapunov_residual<T: Scalar>(m: &DMatrix<T>, gamma: &SymMatrix<T>, d_mat: &SymMatrix<T>) -> T {
    let g = gamma.matrix();
    (m.transpose() * g + g * m - d_mat.matrix() * T::lit(2.0)).norm()
}

/// Stationary covariance of `ṗ = −M p + ξ`, i.e. the solution of
/// `M Γ + Γ Mᵀ = 2D` (the Lyapunov equation for `Mᵀ`).
pub fn stationary_covariance<T: Scalar>(m: &DMatrix<T>, d_mat: &SymMatrix<T>) -> Result<SymMatrix<T>, ReconError> {
    solve_lyapunov(&m.transpose(), d_mat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StationaryGaussian<T: Scalar = f64> {
    /// Predicted log-curvature `β Q_eff`.
    pub curvature: SymMatrix<T>,
    /// Stationary covariance of the Einstein-consistent SDE.
    pub covariance: SymMatrix<T>,
    /// `‖Γ⁻¹ − βQ_eff‖_F / ‖βQ_eff‖_F`.
    pub closure_residual: T,
}

/// Gaussian stationary state `P ∝ exp(−β/2 pᵀ Q_eff p)` for drift
/// `M = μ Q_eff` and diffusion `D = μ/β`.
///
/// Returns the predicted curvature `β Q_eff` together with the covariance
/// from the Lyapunov solver and the closure residual between the two.
pub fn stationary_gaussian<T: Scalar>(
    mu: &Mobility<T>,
    q_eff: &SymMatrix<T>,
    beta: T,
) -> Result<StationaryGaussian<T>, ReconError> {
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(ReconError::InvalidBeta(beta.as_f64()));
    }
    if !q_eff.is_positive_definite() {
        return Err(ReconError::ResponseNotPD {
            min_eigenvalue: q_eff.min_eigenvalue().as_f64(),
        });
    }
    let curvature = q_eff.scaled(beta);
    let m = m_from_q(mu, q_eff)?;
    let d_mat = mu.matrix().scaled(T::one() / beta);
    let covariance = stationary_covariance(&m, &d_mat)?;
    let inv = covariance.inverse().ok_or(ReconError::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    let closure_residual = (&inv - &curvature).frobenius_norm() / curvature.frobenius_norm();
    Ok(StationaryGaussian {
        curvature,
        covariance,
        closure_residual,
    })
}

/// Relative Einstein-relation defect `‖D − μ/β‖_F / ‖μ/β‖_F`.
pub fn einstein_check<T: Scalar>(d_mat: &SymMatrix<T>, mu: &Mobility<T>, beta: T) -> Result<T, ReconError> {
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(ReconError::InvalidBeta(beta.as_f64()));
    }
    if d_mat.dim() != mu.dim() {
        return Err(ReconError::InvalidArgument {
            field: "diffusion",
            reason: format!("expected {0}x{0}, got {1}x{1}", mu.dim(), d_mat.dim()),
        });
    }
    let reference = mu.matrix().scaled(T::one() / beta);
    Ok((d_mat - &reference).frobenius_norm() / reference.frobenius_norm())
}

/// Linear SDE `ṗ = −M p + ξ`, `⟨ξ(t) ξ(t')ᵀ⟩ = 2D δ(t − t')`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSDE {
    m: DMatrix<f64>,
    d_mat: SymMatrix,
}

impl LinearSDE {
    /// Validates shapes and `D ⪰ 0`; stability of `M` is checked on use.
    pub fn new(m: DMatrix<f64>, d_mat: SymMatrix) -> Result<Self, ReconError> {
        require_square("drift matrix", &m, d_mat.dim())?;
        let eig = d_mat.eigenvalues();
        let floor = -PSD_CLIP * eig.iter().fold(1.0f64, |a, l| a.max(l.abs()));
        if eig[0] < floor {
            return Err(ReconError::DiffusionNotPSD { min_eigenvalue: eig[0] });
        }
        Ok(Self { m, d_mat })
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn diffusion(&self) -> &SymMatrix {
        &self.d_mat
    }

    pub fn dim(&self) -> usize {
        self.d_mat.dim()
    }

    pub fn is_stable(&self) -> bool {
        require_stable(&self.m).is_ok()
    }

    pub fn stationary_covariance(&self) -> Result<SymMatrix, ReconError> {
        stationary_covariance(&self.m, &self.d_mat)
    }

    /// Largest `dt` allowed by the step guard.
    pub fn max_dt(&self) -> f64 {
        STEP_GUARD / spectral_norm(&self.m)
    }

    /// `L` with `L Lᵀ = D`, clipping eigenvalues down to `−1e-12·scale` at 0.
    fn noise_factor(&self) -> DMatrix<f64> {
        let eig = self.d_mat.eigen();
        let mut l = eig.vectors.clone();
        for (j, &v) in eig.values.iter().enumerate() {
            l.column_mut(j).scale_mut(v.max(0.0).sqrt());
        }
        l
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().fold(0.0f64, |a, &s| a.max(s))
}

/// Sampling schedule: `burn_in` discarded steps, then `n_kept` samples
/// recorded every `thin` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSchedule {
    pub dt: f64,
    pub burn_in: usize,
    pub n_kept: usize,
    pub thin: usize,
}

/// Euler–Maruyama sampling from `p = 0`:
/// `p ← p − M p dt + √(2dt)·L z`.
///
/// Runs `n_steps` steps, discards the first `burn_in` and returns the rest
/// as an `(n_steps − burn_in) × d` matrix.
pub fn simulate_sde(
    sde: &LinearSDE,
    dt: f64,
    n_steps: usize,
    burn_in: usize,
    seed: StreamSeed,
) -> Result<DMatrix<f64>, ReconError> {
    if burn_in > n_steps {
        return Err(ReconError::InvalidArgument {
            field: "burn_in",
            reason: format!("burn_in {burn_in} exceeds n_steps {n_steps}"),
        });
    }
    sample_sde(
        sde,
        &SampleSchedule {
            dt,
            burn_in,
            n_kept: n_steps - burn_in,
            thin: 1,
        },
        seed,
    )
}

/// Euler–Maruyama sampling with thinning; see [`SampleSchedule`].
pub fn sample_sde(sde: &LinearSDE, schedule: &SampleSchedule, seed: StreamSeed) -> Result<DMatrix<f64>, ReconError> {
    require_stable(&sde.m)?;
    let dt = schedule.dt;
    let m_norm = spectral_norm(&sde.m);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ReconError::InvalidArgument {
            field: "dt",
            reason: format!("must be finite and > 0, got {dt}"),
        });
    }
    if dt * m_norm >= STEP_GUARD {
        return Err(ReconError::StepTooLarge { dt, m_norm });
    }
    if schedule.thin == 0 {
        return Err(ReconError::InvalidArgument {
            field: "thin",
            reason: "must be >= 1".into(),
        });
    }
    let d = sde.dim();
    let mut rng = seed.rng();
    let propagator = DMatrix::<f64>::identity(d, d) - &sde.m * dt;
    let noise = sde.noise_factor() * (2.0 * dt).sqrt();
    let mut p = DVector::<f64>::zeros(d);
    let mut z = DVector::<f64>::zeros(d);
    let mut step = |p: &mut DVector<f64>, rng: &mut crate::rng::StreamRng| {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        *p = &propagator * &*p + &noise * &z;
    };
    for _ in 0..schedule.burn_in {
        step(&mut p, &mut rng);
    }
    let mut out = DMatrix::<f64>::zeros(schedule.n_kept, d);
    for r in 0..schedule.n_kept {
        for _ in 0..schedule.thin {
            step(&mut p, &mut rng);
        }
        out.row_mut(r).copy_from(&p.transpose());
    }
    Ok(out)
}

/// Unbiased sample covariance of the rows of `samples`.
pub fn sample_covariance(samples: &DMatrix<f64>) -> SymMatrix {
    let n = samples.nrows();
    let mean = samples.row_mean();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    SymMatrix::symmetrize(centered.transpose() * &centered / (n as f64 - 1.0))
}

/// Global log-curvature estimate: the inverse sample covariance, exact for
/// a Gaussian stationary state.
pub fn estimate_log_curvature(samples: &DMatrix<f64>) -> Result<SymMatrix, ReconError> {
    let (n, d) = samples.shape();
    let required = 10 * d * d;
    if d == 0 || n <= required {
        return Err(ReconError::InsufficientSamples { required, found: n });
    }
    let cov = sample_covariance(samples);
    let eig = cov.eigenvalues();
    let (lo, hi) = (eig[0], eig[d - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(ReconError::SingularCovariance { condition });
    }
    Ok(cov.map_spectrum(|l| 1.0 / l))
}

/// Input of the end-to-end reconstruction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionRequest {
    /// Renormalized response tensor.
    pub q_eff: SymMatrix,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<SymMatrix>,
    #[serde(default = "one")]
    pub beta: f64,
    /// Defaults to the Einstein value `μ/β`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<SymMatrix>,
    /// Defaults to `dt_fraction` of the guarded maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_dt_fraction")]
    pub dt_fraction: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn one() -> f64 {
    1.0
}
fn default_dt_fraction() -> f64 {
    0.2
}
fn default_samples() -> usize {
    100_000
}
fn default_burn_in() -> usize {
    10_000
}
fn default_thin() -> usize {
    10
}

impl ReconstructionRequest {
    pub fn new(q_eff: SymMatrix) -> Self {
        Self {
            q_eff,
            mobility: None,
            beta: 1.0,
            diffusion: None,
            dt: None,
            dt_fraction: default_dt_fraction(),
            n_samples: default_samples(),
            burn_in: default_burn_in(),
            thin: default_thin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Predicted stationary covariance `Γ`.
    pub gamma: SymMatrix,
    /// Estimated curvature (inverse sample covariance).
    pub g_eff: SymMatrix,
    /// `β Q_eff`.
    pub predicted_curvature: SymMatrix,
    /// `‖G_eff − βQ_eff‖_F / ‖βQ_eff‖_F`.
    pub curvature_error: f64,
    pub einstein_residual: f64,
    pub beta: f64,
    pub drift: Vec<Vec<f64>>,
    pub dt: f64,
    pub n_samples: usize,
    pub seed: StreamSeed,
}

/// `Q_eff → M = μQ_eff → SDE samples → G_eff`, compared against `βQ_eff`.
///
/// An indefinite `Q_eff` under positive `μ` yields a drift with a growing
/// mode, reported as [`ReconError::UnstableDrift`] instead of numbers.
pub fn reconstruct(req: &ReconstructionRequest, seed: StreamSeed) -> Result<ReconstructionReport, ReconError> {
    let d = req.q_eff.dim();
    let mu = Mobility::new(req.mobility.clone().unwrap_or_else(|| SymMatrix::identity(d)))?;
    if !(req.beta > 0.0 && req.beta.is_finite()) {
        return Err(ReconError::InvalidBeta(req.beta));
    }
    let m = m_from_q(&mu, &req.q_eff)?;
    let d_mat = req
        .diffusion
        .clone()
        .unwrap_or_else(|| mu.matrix().scaled(1.0 / req.beta));
    let einstein_residual = einstein_check(&d_mat, &mu, req.beta)?;
    let sde = LinearSDE::new(m.clone(), d_mat)?;
    let gamma = sde.stationary_covariance()?;
    let dt = match req.dt {
        Some(dt) => dt,
        None => {
            if !(req.dt_fraction > 0.0 && req.dt_fraction < 1.0) {
                return Err(ReconError::InvalidArgument {
                    field: "dt_fraction",
                    reason: "must lie in (0, 1)".into(),
                });
            }
            req.dt_fraction * sde.max_dt()
        }
    };
    let samples = sample_sde(
        &sde,
        &SampleSchedule {
            dt,
            burn_in: req.burn_in,
            n_kept: req.n_samples,
            thin: req.thin,
        },
        seed,
    )?;
    let g_eff = estimate_log_curvature(&samples)?;
    let predicted = req.q_eff.scaled(req.beta);
    let curvature_error = (&g_eff - &predicted).frobenius_norm() / predicted.frobenius_norm();
    Ok(ReconstructionReport {
        gamma,
        g_eff,
        predicted_curvature: predicted,
        curvature_error,
        einstein_residual,
        beta: req.beta,
        drift: dense_to_rows(&m),
        dt,
        n_samples: req.n_samples,
        seed,
    })
}
