//! Discrete-time signature flow of the tangential response block.
//!
//! The full tensor is `Q = diag(q_N, Q_T)` with `q_N > 0` held fixed. Each
//! step subtracts a sampled PSD Schur contribution, adds a traceless
//! anisotropic perturbation with decaying strength, and projects back to a
//! reference scale:
//!
//! ```text
//! Q_T ← 𝒞(Q_T − ζ Σ_k + a_k A_k),   a_k = a₀ e^{−β k}
//! ```
//!
//! 𝒞 divides by a positive scalar, so it never changes the signature.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{StreamRng, StreamSeed};
use crate::tensor::{separation_from_spectrum, Signature, SymMatrix, TensorError};

/// Frobenius norm below which a tensor is treated as collapsed.
pub const COLLAPSE_FLOOR: f64 = 1e-14;
/// Relative `|tr|/‖·‖_F` below which trace normalization falls back to
/// Frobenius normalization.
pub const TRACE_FLOOR: f64 = 1e-8;
const MAX_ANISOTROPY_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid flow config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("anisotropy draw degenerate after {attempts} attempts")]
    DegenerateDraw { attempts: usize },
    #[error("tensor collapsed to zero (Frobenius norm {frobenius_norm:e})")]
    ZeroTensor { frobenius_norm: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Random model for the PSD Schur contribution `Σ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchurModel {
    /// `Σ = B C⁻¹ Bᵀ` with `C = R diag(e^{σ z}) Rᵀ` (Haar `R`, standard
    /// normal `z`) and Gaussian `B` scaled by `1/√d_fast`.
    LognormalGaussian {
        sigma_log: f64,
        /// Defaults to `d_tan`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_fast: Option<usize>,
    },
    /// `Σ = G Gᵀ` with `G` a `d_tan×rank` Gaussian matrix scaled by
    /// `1/√rank`, so `E[Σ] = I`.
    Wishart {
        /// Defaults to `d_tan`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rank: Option<usize>,
    },
}

impl Default for SchurModel {
    fn default() -> Self {
        SchurModel::LognormalGaussian {
            sigma_log: 1.0,
            d_fast: None,
        }
    }
}

impl SchurModel {
    pub fn validate(&self) -> Result<(), FlowError> {
        match *self {
            SchurModel::LognormalGaussian { sigma_log, d_fast } => {
                if !(sigma_log > 0.0 && sigma_log.is_finite()) {
                    return Err(FlowError::InvalidConfig {
                        field: "schur_model.sigma_log",
                        reason: format!("must be finite and > 0, got {sigma_log}"),
                    });
                }
                if d_fast == Some(0) {
                    return Err(FlowError::InvalidConfig {
                        field: "schur_model.d_fast",
                        reason: "must be >= 1".into(),
                    });
                }
            }
            SchurModel::Wishart { rank } => {
                if rank == Some(0) {
                    return Err(FlowError::InvalidConfig {
                        field: "schur_model.rank",
                        reason: "must be >= 1".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    Frobenius,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disorder {
    /// Fresh `A_k` every step.
    #[default]
    Annealed,
    /// One `A` per trajectory; `Σ_k` is still resampled every step.
    Quenched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub d_tan: usize,
    pub q_n: f64,
    pub zeta: f64,
    pub a0: f64,
    pub beta_decay: f64,
    pub k_max: usize,
    pub norm_mode: NormMode,
    pub schur_model: SchurModel,
    pub disorder: Disorder,
    pub target_n_minus: usize,
    /// Initial tangential block; identity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_init: Option<SymMatrix>,
    pub signature_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            d_tan: 3,
            q_n: 1.0,
            zeta: 0.0,
            a0: 0.0,
            beta_decay: 0.0,
            k_max: 100,
            norm_mode: NormMode::Frobenius,
            schur_model: SchurModel::default(),
            disorder: Disorder::Annealed,
            target_n_minus: 3,
            q_init: None,
            signature_tol: 1e-10,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |field, reason: String| Err(FlowError::InvalidConfig { field, reason });
        if self.d_tan < 1 {
            return bad("d_tan", "must be >= 1".into());
        }
        if self.a0 > 0.0 && self.d_tan < 2 {
            return bad("d_tan", "traceless anisotropy requires d_tan >= 2".into());
        }
        if !(self.q_n > 0.0 && self.q_n.is_finite()) {
            return bad("q_n", format!("must be finite and > 0, got {}", self.q_n));
        }
        for (field, v) in [("zeta", self.zeta), ("a0", self.a0), ("beta_decay", self.beta_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("must be finite and >= 0, got {v}"));
            }
        }
        if self.k_max < 1 {
            return bad("k_max", "must be >= 1".into());
        }
        if self.target_n_minus > self.d_tan {
            return bad(
                "target_n_minus",
                format!("cannot exceed d_tan = {}", self.d_tan),
            );
        }
        if !(self.signature_tol >= 0.0 && self.signature_tol.is_finite()) {
            return bad("signature_tol", "must be finite and >= 0".into());
        }
        if let Some(q) = &self.q_init {
            if q.dim() != self.d_tan {
                return bad(
                    "q_init",
                    format!("expected {0}x{0}, got {1}x{1}", self.d_tan, q.dim()),
                );
            }
        }
        self.schur_model.validate()
    }

    pub fn initial_tangent(&self) -> SymMatrix {
        self.q_init
            .clone()
            .unwrap_or_else(|| SymMatrix::identity(self.d_tan))
    }

    /// Signature of `diag(q_N, q_t)`: the tangential inertia plus the fixed
    /// positive normal direction.
    pub fn full_signature(&self, tangent_eigenvalues: &[f64]) -> Signature {
        let mut sig = Signature::classify(tangent_eigenvalues, self.signature_tol);
        sig.n_plus += 1;
        sig
    }
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Row-major fill keeps the draw order independent of storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = standard_normal_matrix(dim, dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draws one PSD Schur contribution `Σ_k` of size `d_tan×d_tan`.
pub fn sample_sigma<R: Rng + ?Sized>(model: &SchurModel, d_tan: usize, rng: &mut R) -> SymMatrix {
    match *model {
        SchurModel::LognormalGaussian { sigma_log, d_fast } => {
            let d_fast = d_fast.unwrap_or(d_tan);
            let z: Vec<f64> = (0..d_fast).map(|_| rng.sample(StandardNormal)).collect();
            let rot = random_rotation(d_fast, rng);
            let b = standard_normal_matrix(d_tan, d_fast, rng) / (d_fast as f64).sqrt();
            // C = R diag(e^{σz}) Rᵀ is given in eigen-form, so
            // B C⁻¹ Bᵀ = X Xᵀ with X = B R diag(e^{−σz/2}).
            let mut x = b * rot;
            for (j, zj) in z.iter().enumerate() {
                x.column_mut(j).scale_mut((-0.5 * sigma_log * zj).exp());
            }
            SymMatrix::symmetrize(&x * x.transpose())
        }
        SchurModel::Wishart { rank } => {
            let rank = rank.unwrap_or(d_tan);
            let g = standard_normal_matrix(d_tan, rank, rng) / (rank as f64).sqrt();
            SymMatrix::symmetrize(&g * g.transpose())
        }
    }
}

/// Random traceless symmetric matrix with unit Frobenius norm.
pub fn sample_anisotropy<R: Rng + ?Sized>(d_tan: usize, rng: &mut R) -> Result<SymMatrix, FlowError> {
    if d_tan < 2 {
        return Err(FlowError::InvalidConfig {
            field: "d_tan",
            reason: "traceless anisotropy requires d_tan >= 2".into(),
        });
    }
    for _ in 0..MAX_ANISOTROPY_ATTEMPTS {
        let g = standard_normal_matrix(d_tan, d_tan, rng);
        let mut s = (&g + g.transpose()) * 0.5;
        let shift = s.trace() / d_tan as f64;
        for i in 0..d_tan {
            s[(i, i)] -= shift;
        }
        let norm = s.norm();
        if norm >= COLLAPSE_FLOOR {
            return Ok(SymMatrix::symmetrize(s / norm));
        }
    }
    Err(FlowError::DegenerateDraw {
        attempts: MAX_ANISOTROPY_ATTEMPTS,
    })
}

/// `a_k = a₀ e^{−β k}`.
pub fn anisotropy_strength(a0: f64, beta_decay: f64, k: usize) -> f64 {
    a0 * (-beta_decay * k as f64).exp()
}

/// Projective normalization map.
///
/// Frobenius mode divides by `‖q‖_F`; trace mode rescales to `|tr| = d`,
/// falling back to Frobenius when `|tr| < TRACE_FLOOR·‖q‖_F` (the trace of
/// an indefinite tensor can vanish).
pub fn normalize(q_t: &SymMatrix, mode: NormMode) -> Result<SymMatrix, FlowError> {
    let fro = q_t.frobenius_norm();
    if fro.is_nan() || fro < COLLAPSE_FLOOR {
        return Err(FlowError::ZeroTensor {
            frobenius_norm: fro,
        });
    }
    let scale = match mode {
        NormMode::Frobenius => 1.0 / fro,
        NormMode::Trace => {
            let tr = q_t.trace().abs();
            if tr >= TRACE_FLOOR * fro {
                q_t.dim() as f64 / tr
            } else {
                1.0 / fro
            }
        }
    };
    Ok(q_t.scaled(scale))
}

fn check_dim(context: &'static str, expected: usize, m: &SymMatrix) -> Result<(), FlowError> {
    if m.dim() != expected {
        return Err(FlowError::DimensionMismatch {
            context,
            expected,
            found: m.dim(),
        });
    }
    Ok(())
}

/// Pre-normalization update `q_t − ζ σ + a_k a`.
pub fn flow_increment(
    q_t: &SymMatrix,
    sigma: &SymMatrix,
    a: &SymMatrix,
    a_k: f64,
    zeta: f64,
) -> Result<SymMatrix, FlowError> {
    let d = q_t.dim();
    check_dim("flow_increment sigma", d, sigma)?;
    check_dim("flow_increment anisotropy", d, a)?;
    let m = q_t.matrix() - sigma.matrix() * zeta + a.matrix() * a_k;
    Ok(SymMatrix::symmetrize(m))
}

/// One normalized flow step.
pub fn flow_step(
    q_t: &SymMatrix,
    sigma: &SymMatrix,
    a: &SymMatrix,
    a_k: f64,
    zeta: f64,
    mode: NormMode,
) -> Result<SymMatrix, FlowError> {
    normalize(&flow_increment(q_t, sigma, a, a_k, zeta)?, mode)
}

/// Everything drawn and computed during one step, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub k: usize,
    pub sigma: SymMatrix,
    pub anisotropy: SymMatrix,
    pub a_k: f64,
    pub pre_normalization: SymMatrix,
    pub q_t: SymMatrix,
}

/// Sequential state machine for one trajectory.
#[derive(Debug, Clone)]
pub struct FlowState {
    cfg: FlowConfig,
    rng: StreamRng,
    q_t: SymMatrix,
    k: usize,
    quenched: Option<SymMatrix>,
}

impl FlowState {
    pub fn new(cfg: &FlowConfig, seed: StreamSeed) -> Result<Self, FlowError> {
        cfg.validate()?;
        let mut rng = seed.rng();
        let quenched = match cfg.disorder {
            Disorder::Quenched if cfg.d_tan >= 2 => Some(sample_anisotropy(cfg.d_tan, &mut rng)?),
            _ => None,
        };
        Ok(Self {
            q_t: cfg.initial_tangent(),
            cfg: cfg.clone(),
            rng,
            k: 0,
            quenched,
        })
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn tangent(&self) -> &SymMatrix {
        &self.q_t
    }

    pub fn step(&mut self) -> Result<StepDetail, FlowError> {
        let k = self.k + 1;
        let d = self.cfg.d_tan;
        let sigma = sample_sigma(&self.cfg.schur_model, d, &mut self.rng);
        let anisotropy = match (&self.quenched, d) {
            (Some(a), _) => a.clone(),
            (None, 1) => SymMatrix::zeros(1),
            (None, _) => sample_anisotropy(d, &mut self.rng)?,
        };
        let a_k = anisotropy_strength(self.cfg.a0, self.cfg.beta_decay, k);
        let pre = flow_increment(&self.q_t, &sigma, &anisotropy, a_k, self.cfg.zeta)?;
        let next = normalize(&pre, self.cfg.norm_mode)?;
        self.q_t = next.clone();
        self.k = k;
        Ok(StepDetail {
            k,
            sigma,
            anisotropy,
            a_k,
            pre_normalization: pre,
            q_t: next,
        })
    }
}

/// Per-step observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// Signature of the full tensor `diag(q_N, Q_T)`.
    pub signature: Signature,
    /// Isotropic component of `Q_T`.
    pub q: f64,
    /// `‖S‖_op` of the traceless part of `Q_T`.
    pub s_opnorm: f64,
    pub separation_holds: bool,
}

impl StepRecord {
    pub fn observe(cfg: &FlowConfig, k: usize, q_t: &SymMatrix) -> Self {
        let eig = q_t.eigenvalues();
        let sep = separation_from_spectrum(&eig);
        Self {
            k,
            signature: cfg.full_signature(&eig),
            q: sep.q,
            s_opnorm: sep.s_norm,
            separation_holds: sep.holds,
        }
    }

    /// Negative count of the tangential block (the normal direction is
    /// always positive).
    pub fn tangent_n_minus(&self) -> usize {
        self.signature.n_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    /// Step whose update produced a zero tensor.
    pub step: usize,
    pub frobenius_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: StreamSeed,
    /// Steps `0..=k_max` (fewer if the flow collapsed).
    pub steps: Vec<StepRecord>,
    pub first_passage: Option<usize>,
    pub censored: bool,
    /// Set when the flow collapsed; such a trajectory is invalid for
    /// ensemble statistics.
    pub collapse: Option<Collapse>,
}

impl TrajectoryRecord {
    pub fn is_valid(&self) -> bool {
        self.collapse.is_none()
    }

    pub fn final_step(&self) -> &StepRecord {
        self.steps.last().expect("record always holds step 0")
    }

    /// Serializes as one JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory records always serialize")
    }
}

/// Final-state outcome without the step log, for ensemble sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub final_n_minus: usize,
    pub first_passage: Option<usize>,
    pub collapsed: bool,
}

fn evolve(
    cfg: &FlowConfig,
    seed: StreamSeed,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<(StepRecord, Option<usize>, Option<Collapse>), FlowError> {
    let mut state = FlowState::new(cfg, seed)?;
    let target = cfg.target_n_minus;
    let mut last = StepRecord::observe(cfg, 0, state.tangent());
    on_step(&last);
    let mut first_passage = (last.tangent_n_minus() == target).then_some(0);
    for _ in 0..cfg.k_max {
        match state.step() {
            Ok(detail) => {
                last = StepRecord::observe(cfg, detail.k, &detail.q_t);
                on_step(&last);
                if first_passage.is_none() && last.tangent_n_minus() == target {
                    first_passage = Some(detail.k);
                }
            }
            Err(FlowError::ZeroTensor { frobenius_norm }) => {
                let collapse = Collapse {
                    step: state.step_index() + 1,
                    frobenius_norm,
                };
                return Ok((last, first_passage, Some(collapse)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((last, first_passage, None))
}

/// Evolves one trajectory for `k_max` steps, logging every step.
///
/// Errors only on invalid configuration; a collapsed flow is recorded in
/// [`TrajectoryRecord::collapse`].
pub fn run_trajectory(cfg: &FlowConfig, seed: StreamSeed) -> Result<TrajectoryRecord, FlowError> {
    let mut steps = Vec::with_capacity(cfg.k_max + 1);
    let (_, first_passage, collapse) = evolve(cfg, seed, |s| steps.push(*s))?;
    Ok(TrajectoryRecord {
        seed,
        steps,
        first_passage,
        censored: first_passage.is_none(),
        collapse,
    })
}

/// Same evolution as [`run_trajectory`] keeping only the final outcome.
pub fn summarize_trajectory(
    cfg: &FlowConfig,
    seed: StreamSeed,
) -> Result<TrajectorySummary, FlowError> {
    let (last, first_passage, collapse) = evolve(cfg, seed, |_| {})?;
    Ok(TrajectorySummary {
        final_n_minus: last.tangent_n_minus(),
        first_passage,
        collapsed: collapse.is_some(),
    })
}
