//! Ensemble statistics of the signature flow over `(a₀, ζ)` grids:
//! sector probabilities, censored first-passage times and phase boundaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{self, fmt_num, BoundaryCurve, ScalarField};
use crate::flow::{summarize_trajectory, FlowConfig, FlowError, TrajectoryRecord, TrajectorySummary};
use crate::rng::StreamSeed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("invalid grid spec field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("no valid trajectories")]
    NoValidRecords,
    #[error("grid cell (a0 = {a0}, zeta = {zeta}) has no valid trajectories")]
    EmptyCell { a0: f64, zeta: f64 },
    #[error("boundary extraction needs a grid of at least 2x2, got {n_a0}x{n_zeta}")]
    GridTooSmall { n_a0: usize, n_zeta: usize },
    #[error("contour level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Anything that reports a trajectory's final sector and first passage.
pub trait TrajectoryOutcome {
    fn is_valid(&self) -> bool;
    fn final_n_minus(&self) -> usize;
    fn first_passage(&self) -> Option<usize>;
}

impl TrajectoryOutcome for TrajectorySummary {
    fn is_valid(&self) -> bool {
        !self.collapsed
    }
    fn final_n_minus(&self) -> usize {
        self.final_n_minus
    }
    fn first_passage(&self) -> Option<usize> {
        self.first_passage
    }
}

impl TrajectoryOutcome for TrajectoryRecord {
    fn is_valid(&self) -> bool {
        TrajectoryRecord::is_valid(self)
    }
    fn final_n_minus(&self) -> usize {
        self.final_step().signature.n_minus
    }
    fn first_passage(&self) -> Option<usize> {
        self.first_passage
    }
}

/// Fraction of valid records whose final tangential block has `n_minus`
/// negative eigenvalues.
pub fn sector_probability<R: TrajectoryOutcome>(records: &[R], n_minus: usize) -> Result<f64, EnsembleError> {
    let valid: Vec<&R> = records.iter().filter(|r| r.is_valid()).collect();
    if valid.is_empty() {
        return Err(EnsembleError::NoValidRecords);
    }
    let hits = valid.iter().filter(|r| r.final_n_minus() == n_minus).count();
    Ok(hits as f64 / valid.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageStats {
    /// Mean `τ` over uncensored valid records; `None` if all are censored.
    pub mean: Option<f64>,
    /// Censored share of valid records (0 when there are none).
    pub censored_fraction: f64,
    pub n_valid: usize,
}

/// Mean first-passage time with censoring reported separately.
pub fn mean_first_passage<R: TrajectoryOutcome>(records: &[R]) -> FirstPassageStats {
    let mut n_valid = 0usize;
    let mut sum = 0u64;
    let mut hits = 0usize;
    for r in records.iter().filter(|r| r.is_valid()) {
        n_valid += 1;
        if let Some(t) = r.first_passage() {
            sum += t as u64;
            hits += 1;
        }
    }
    FirstPassageStats {
        mean: (hits > 0).then(|| sum as f64 / hits as f64),
        censored_fraction: if n_valid == 0 {
            0.0
        } else {
            (n_valid - hits) as f64 / n_valid as f64
        },
        n_valid,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Either an explicit list or `{"start", "stop", "count"}`.
    #[serde(deserialize_with = "deserialize_axis")]
    pub a0_values: Vec<f64>,
    #[serde(deserialize_with = "deserialize_axis")]
    pub zeta_values: Vec<f64>,
    pub n_traj: usize,
    /// `a0` and `zeta` are overridden per cell.
    pub base_config: FlowConfig,
    pub master_seed: u64,
}

/// Default window: 20×20 nodes over `a0 ∈ [0, 2]`, `zeta ∈ [0, 0.5]`,
/// 100 trajectories per node. The `(n₋ = 3)` crossover of the default flow
/// runs through the interior of this window.
impl Default for GridSpec {
    fn default() -> Self {
        Self {
            a0_values: linspace(0.0, 2.0, 20),
            zeta_values: linspace(0.0, 0.5, 20),
            n_traj: 100,
            base_config: FlowConfig::default(),
            master_seed: 0,
        }
    }
}

/// Grid axis: an explicit list or an inclusive `linspace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::List(v) => v.clone(),
            Axis::Range { start, stop, count } => linspace(*start, *stop, *count),
        }
    }
}

pub fn deserialize_axis<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    Ok(Axis::deserialize(d)?.values())
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (field, v) in [("a0_values", &self.a0_values), ("zeta_values", &self.zeta_values)] {
            if v.is_empty() {
                return Err(EnsembleError::InvalidSpec {
                    field,
                    reason: "must be non-empty".into(),
                });
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(EnsembleError::InvalidSpec {
                    field,
                    reason: "values must be finite and >= 0".into(),
                });
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(EnsembleError::InvalidSpec {
                    field,
                    reason: "must be strictly ascending".into(),
                });
            }
        }
        if self.n_traj < 1 {
            return Err(EnsembleError::InvalidSpec {
                field: "n_traj",
                reason: "must be >= 1".into(),
            });
        }
        let cells = self.a0_values.len() * self.zeta_values.len();
        if cells > u32::MAX as usize || self.n_traj > u32::MAX as usize {
            return Err(EnsembleError::InvalidSpec {
                field: "n_traj",
                reason: "grid exceeds 2^32 cells or trajectories".into(),
            });
        }
        self.base_config.validate()?;
        Ok(())
    }

    /// Row-major cell index, `a0` outer.
    pub fn cell_index(&self, ia: usize, iz: usize) -> usize {
        ia * self.zeta_values.len() + iz
    }

    pub fn cell_config(&self, ia: usize, iz: usize) -> FlowConfig {
        FlowConfig {
            a0: self.a0_values[ia],
            zeta: self.zeta_values[iz],
            ..self.base_config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub a0: f64,
    pub zeta: f64,
    /// `p_sector[n]` = P(final n₋ = n), over valid trajectories.
    pub p_sector: Vec<f64>,
    pub mean_fpt: Option<f64>,
    pub censored_fraction: f64,
    pub n_valid: usize,
    pub n_collapsed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub a0_values: Vec<f64>,
    pub zeta_values: Vec<f64>,
    pub d_tan: usize,
    pub target_n_minus: usize,
    pub n_traj: usize,
    pub master_seed: u64,
    /// Row-major, `a0` outer.
    pub cells: Vec<CellStats>,
}

impl GridResult {
    pub fn cell(&self, ia: usize, iz: usize) -> &CellStats {
        &self.cells[ia * self.zeta_values.len() + iz]
    }

    /// P(n₋ = sector) as a field over `(a0, zeta)`.
    pub fn probability_field(&self, sector: usize) -> ScalarField {
        ScalarField::new(
            self.a0_values.clone(),
            self.zeta_values.clone(),
            self.cells
                .iter()
                .map(|c| c.p_sector.get(sector).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    /// Mean first-passage time as a field; `NaN` where undefined.
    pub fn fpt_field(&self) -> ScalarField {
        ScalarField::new(
            self.a0_values.clone(),
            self.zeta_values.clone(),
            self.cells.iter().map(|c| c.mean_fpt.unwrap_or(f64::NAN)).collect(),
        )
    }

    /// One row per cell: `a0,zeta,P0..P<d_tan>,mean_fpt,censored_fraction`.
    /// An undefined `mean_fpt` is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a0,zeta");
        for n in 0..=self.d_tan {
            out.push_str(&format!(",P{n}"));
        }
        out.push_str(",mean_fpt,censored_fraction\n");
        for c in &self.cells {
            out.push_str(&fmt_num(c.a0));
            out.push(',');
            out.push_str(&fmt_num(c.zeta));
            for p in &c.p_sector {
                out.push(',');
                out.push_str(&fmt_num(*p));
            }
            out.push(',');
            if let Some(t) = c.mean_fpt {
                out.push_str(&fmt_num(t));
            }
            out.push(',');
            out.push_str(&fmt_num(c.censored_fraction));
            out.push('\n');
        }
        out
    }
}

fn aggregate(
    a0: f64,
    zeta: f64,
    d_tan: usize,
    outcomes: &[TrajectorySummary],
) -> Result<CellStats, EnsembleError> {
    let n_valid = outcomes.iter().filter(|o| o.is_valid()).count();
    if n_valid == 0 {
        return Err(EnsembleError::EmptyCell { a0, zeta });
    }
    let mut counts = vec![0usize; d_tan + 1];
    for o in outcomes.iter().filter(|o| o.is_valid()) {
        counts[o.final_n_minus] += 1;
    }
    let fpt = mean_first_passage(outcomes);
    Ok(CellStats {
        a0,
        zeta,
        p_sector: counts.iter().map(|&c| c as f64 / n_valid as f64).collect(),
        mean_fpt: fpt.mean,
        censored_fraction: fpt.censored_fraction,
        n_valid,
        n_collapsed: outcomes.len() - n_valid,
    })
}

/// Runs `n_traj` trajectories per grid cell on `workers` threads.
///
/// Trajectory `t` of cell `c` uses stream `(master_seed, c, t)`, and
/// aggregation walks trajectories in index order, so the result is
/// bit-identical for every worker count.
pub fn run_grid(spec: &GridSpec, workers: usize) -> Result<GridResult, EnsembleError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))?;
    let (na, nz, nt) = (spec.a0_values.len(), spec.zeta_values.len(), spec.n_traj);
    let jobs: Vec<(usize, usize, usize)> = (0..na)
        .flat_map(|ia| (0..nz).flat_map(move |iz| (0..nt).map(move |t| (ia, iz, t))))
        .collect();

    let outcomes: Vec<TrajectorySummary> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ia, iz, t)| {
                let cfg = spec.cell_config(ia, iz);
                let seed = StreamSeed::at(spec.master_seed, spec.cell_index(ia, iz) as u32, t as u32);
                summarize_trajectory(&cfg, seed)
            })
            .collect::<Result<_, FlowError>>()
    })?;

    let cells = outcomes
        .chunks(nt)
        .enumerate()
        .map(|(c, chunk)| {
            let (ia, iz) = (c / nz, c % nz);
            aggregate(spec.a0_values[ia], spec.zeta_values[iz], spec.base_config.d_tan, chunk)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(GridResult {
        a0_values: spec.a0_values.clone(),
        zeta_values: spec.zeta_values.clone(),
        d_tan: spec.base_config.d_tan,
        target_n_minus: spec.base_config.target_n_minus,
        n_traj: nt,
        master_seed: spec.master_seed,
        cells,
    })
}

/// Contour of `P(n₋ = sector)` at `level`, with `x = a0` and `y = zeta`.
///
/// An empty contour is a valid outcome and is flagged by
/// [`BoundaryCurve::empty`].
pub fn extract_boundary(grid: &GridResult, sector: usize, level: f64) -> Result<BoundaryCurve, EnsembleError> {
    let (na, nz) = (grid.a0_values.len(), grid.zeta_values.len());
    if na < 2 || nz < 2 {
        return Err(EnsembleError::GridTooSmall { n_a0: na, n_zeta: nz });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EnsembleError::InvalidLevel(level));
    }
    Ok(contour::extract(&grid.probability_field(sector), level))
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SymMatrix;

    fn summary(final_n_minus: usize, first_passage: Option<usize>) -> TrajectorySummary {
        TrajectorySummary {
            final_n_minus,
            first_passage,
            collapsed: false,
        }
    }

    #[test]
    fn sector_probability_examples() {
        let all3 = vec![summary(3, Some(1)); 10];
        assert_eq!(sector_probability(&all3, 3).unwrap(), 1.0);
        assert_eq!(sector_probability(&all3, 2).unwrap(), 0.0);

        let mut half: Vec<_> = (0..50).map(|_| summary(3, Some(2))).collect();
        half.extend((0..50).map(|_| summary(1, None)));
        assert_eq!(sector_probability(&half, 3).unwrap(), 0.5);
        let total: f64 = (0..=3).map(|n| sector_probability(&half, n).unwrap()).sum();
        assert!((total - 1.0).abs() <= 1e-12);

        let none: Vec<TrajectorySummary> = vec![];
        assert!(matches!(sector_probability(&none, 3), Err(EnsembleError::NoValidRecords)));
        let collapsed = vec![TrajectorySummary { collapsed: true, ..summary(0, None) }];
        assert!(sector_probability(&collapsed, 0).is_err());
    }

    #[test]
    fn first_passage_examples() {
        let s = mean_first_passage(&[summary(3, Some(2)), summary(3, Some(4))]);
        assert_eq!((s.mean, s.censored_fraction), (Some(3.0), 0.0));

        let s = mean_first_passage(&[summary(0, None), summary(1, None)]);
        assert_eq!((s.mean, s.censored_fraction), (None, 1.0));

        let mut recs = vec![summary(3, Some(1))];
        recs.extend(vec![summary(2, None); 3]);
        let s = mean_first_passage(&recs);
        assert_eq!((s.mean, s.censored_fraction), (Some(1.0), 0.75));
    }

    #[test]
    fn spec_validation() {
        let mut spec = GridSpec {
            a0_values: vec![0.0, 0.5],
            zeta_values: vec![0.1],
            n_traj: 2,
            base_config: FlowConfig { k_max: 5, ..FlowConfig::default() },
            master_seed: 1,
        };
        assert!(spec.validate().is_ok());
        spec.a0_values = vec![0.5, 0.5];
        assert!(spec.validate().is_err());
        spec.a0_values = vec![];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn frozen_cell_is_positive_and_censored() {
        let spec = GridSpec {
            a0_values: vec![0.0],
            zeta_values: vec![0.0],
            n_traj: 8,
            base_config: FlowConfig { k_max: 20, ..FlowConfig::default() },
            master_seed: 3,
        };
        let g = run_grid(&spec, 2).unwrap();
        let c = g.cell(0, 0);
        assert_eq!(c.p_sector[0], 1.0);
        assert_eq!(c.censored_fraction, 1.0);
        assert_eq!(c.mean_fpt, None);
    }

    #[test]
    fn start_in_target_has_zero_mean_passage() {
        let spec = GridSpec {
            a0_values: vec![0.3],
            zeta_values: vec![0.2],
            n_traj: 8,
            base_config: FlowConfig {
                k_max: 20,
                q_init: Some(SymMatrix::identity(3).scaled(-1.0)),
                ..FlowConfig::default()
            },
            master_seed: 3,
        };
        let g = run_grid(&spec, 1).unwrap();
        assert_eq!(g.cell(0, 0).mean_fpt, Some(0.0));
        assert_eq!(g.cell(0, 0).censored_fraction, 0.0);
    }

    #[test]
    fn boundary_argument_checks() {
        let spec = GridSpec {
            a0_values: vec![0.0],
            zeta_values: vec![0.0, 0.1],
            n_traj: 1,
            base_config: FlowConfig { k_max: 2, ..FlowConfig::default() },
            master_seed: 0,
        };
        let g = run_grid(&spec, 1).unwrap();
        assert!(matches!(extract_boundary(&g, 3, 0.5), Err(EnsembleError::GridTooSmall { .. })));
    }

    #[test]
    fn csv_header_and_rows() {
        let spec = GridSpec {
            a0_values: vec![0.0, 1.0],
            zeta_values: vec![0.0, 0.5],
            n_traj: 3,
            base_config: FlowConfig { k_max: 10, ..FlowConfig::default() },
            master_seed: 9,
        };
        let csv = run_grid(&spec, 1).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "a0,zeta,P0,P1,P2,P3,mean_fpt,censored_fraction");
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.0, 1.0, 5);
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn axis_accepts_list_or_range() {
        let spec: GridSpec =
            serde_json::from_str(r#"{"a0_values": [0.0, 1.0], "zeta_values": {"start": 0.0, "stop": 1.0, "count": 3}}"#)
                .unwrap();
        assert_eq!(spec.a0_values, vec![0.0, 1.0]);
        assert_eq!(spec.zeta_values, vec![0.0, 0.5, 1.0]);
        assert_eq!(spec.n_traj, 100);
        let d: GridSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(d, GridSpec::default());
        assert!(serde_json::from_str::<GridSpec>(r#"{"n_trajs": 3}"#).is_err());
    }
}
