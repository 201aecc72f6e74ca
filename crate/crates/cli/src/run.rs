//! Subcommand dispatch. Every command returns its artifacts in memory; they
//! are written only once the whole computation has succeeded.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;
use zeno_schur::contour::fmt_num;
use zeno_schur::ensemble::{extract_boundary, run_grid};
use zeno_schur::flow::run_trajectory;
use zeno_schur::minimal::{scan, MinimalModelSpec};
use zeno_schur::recon::reconstruct;
use zeno_schur::tensor::{default_signature_tol, separation_check, TensorError};
use zeno_schur::{schur_complement, signature, BlockQuadratic, StreamSeed, SymMatrix};

use crate::config::{ExperimentConfig, Format, MinimalScanPayload, Payload, SchurPayload};
use crate::error::CliError;

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn artifact(name: &str, text: String) -> Artifact {
    Artifact {
        name: name.to_string(),
        bytes: text.into_bytes(),
    }
}

fn json_artifact(name: &str, v: &impl Serialize) -> Artifact {
    let mut s = serde_json::to_string_pretty(v).expect("results always serialize");
    s.push('\n');
    artifact(name, s)
}

fn rows_to_dense(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::ConfigInvalid {
            field: field.into(),
            reason: "expected a non-empty rectangular array of rows".into(),
        });
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn matrix_csv(named: &[(&str, &SymMatrix)]) -> String {
    let mut out = String::from("i,j");
    for (name, _) in named {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let d = named[0].1.dim();
    for i in 0..d {
        for j in 0..d {
            out.push_str(&format!("{i},{j}"));
            for (_, m) in named {
                out.push(',');
                out.push_str(&fmt_num(m.get(i, j)));
            }
            out.push('\n');
        }
    }
    out
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    match &cfg.payload {
        Payload::Schur(p) => run_schur(p, cfg.format),
        Payload::Flow(flow) => {
            let rec = run_trajectory(flow, StreamSeed::new(cfg.seed))?;
            Ok(match cfg.format {
                Format::Json => vec![artifact("trajectory.jsonl", rec.to_json_line() + "\n")],
                Format::Csv => {
                    let mut out = String::from("k,n_plus,n_minus,n_zero,q,s_opnorm,separation_holds\n");
                    for s in &rec.steps {
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            s.k,
                            s.signature.n_plus,
                            s.signature.n_minus,
                            s.signature.n_zero,
                            fmt_num(s.q),
                            fmt_num(s.s_opnorm),
                            s.separation_holds
                        ));
                    }
                    let summary = format!(
                        "first_passage,censored,collapse_step\n{},{},{}\n",
                        rec.first_passage.map_or(String::new(), |k| k.to_string()),
                        rec.censored,
                        rec.collapse.map_or(String::new(), |c| c.step.to_string())
                    );
                    vec![artifact("trajectory.csv", out), artifact("trajectory_summary.csv", summary)]
                }
            })
        }
        Payload::Grid(spec) => {
            let grid = run_grid(spec, cfg.workers)?;
            let boundary = if spec.a0_values.len() >= 2 && spec.zeta_values.len() >= 2 {
                Some(extract_boundary(&grid, spec.base_config.target_n_minus, 0.5)?)
            } else {
                None
            };
            let mut out = vec![];
            match cfg.format {
                Format::Csv => {
                    out.push(artifact("grid.csv", grid.to_csv()));
                    if let Some(b) = &boundary {
                        out.push(artifact("boundary.csv", b.to_csv("a0", "zeta")));
                    }
                }
                Format::Json => {
                    out.push(json_artifact("grid.json", &grid));
                    if let Some(b) = &boundary {
                        out.push(json_artifact("boundary.json", b));
                    }
                }
            }
            Ok(out)
        }
        Payload::MinimalScan(p) => run_minimal_scan(p, cfg.format),
        Payload::Reconstruct(req) => {
            let rep = reconstruct(req, StreamSeed::new(cfg.seed))?;
            Ok(match cfg.format {
                Format::Json => vec![json_artifact("reconstruct.json", &rep)],
                Format::Csv => vec![
                    artifact(
                        "reconstruct.csv",
                        matrix_csv(&[
                            ("predicted", &rep.predicted_curvature),
                            ("estimated", &rep.g_eff),
                            ("gamma", &rep.gamma),
                        ]),
                    ),
                    artifact(
                        "reconstruct_summary.csv",
                        format!(
                            "curvature_error,einstein_residual,beta,dt,n_samples\n{},{},{},{},{}\n",
                            fmt_num(rep.curvature_error),
                            fmt_num(rep.einstein_residual),
                            fmt_num(rep.beta),
                            fmt_num(rep.dt),
                            rep.n_samples
                        ),
                    ),
                ],
            })
        }
    }
}

fn run_schur(p: &SchurPayload, format: Format) -> Result<Vec<Artifact>, CliError> {
    let blocks = match p {
        SchurPayload { a: Some(a), b: Some(b), c: Some(c), q: None, d_slow: None } => {
            BlockQuadratic::new(a.clone(), rows_to_dense("schur.b", b)?, c.clone())?
        }
        SchurPayload { a: None, b: None, c: None, q: Some(q), d_slow: Some(ds) } => BlockQuadratic::partition(q, *ds)?,
        _ => {
            return Err(CliError::ConfigInvalid {
                field: "schur".into(),
                reason: "give either {a, b, c} or {q, d_slow}".into(),
            })
        }
    };
    let q_eff = schur_complement(&blocks);
    let sig = signature(&q_eff, default_signature_tol::<f64>());
    Ok(match format {
        Format::Csv => vec![artifact("q_eff.csv", matrix_csv(&[("q_eff", &q_eff)]))],
        Format::Json => vec![json_artifact(
            "schur.json",
            &json!({
                "q_eff": q_eff,
                "signature": sig,
                "separation": separation_check(&q_eff),
                "slow_dim": blocks.slow_dim(),
                "fast_dim": blocks.fast_dim(),
            }),
        )],
    })
}

fn run_minimal_scan(p: &MinimalScanPayload, format: Format) -> Result<Vec<Artifact>, CliError> {
    let mut template = MinimalModelSpec::<f64>::default();
    if let Some(b0) = &p.b0 {
        template.b0 = rows_to_dense("minimal-scan.b0", b0)?;
    }
    template.a = p.a.clone();
    if let Some(a) = &template.a {
        if a.dim() != template.b0.nrows() {
            return Err(CliError::Module(
                TensorError::DimensionMismatch {
                    context: "minimal-scan slow block",
                    expected: format!("{0}x{0}", template.b0.nrows()),
                    found: format!("{0}x{0}", a.dim()),
                }
                .into(),
            ));
        }
    }
    let s = scan(&p.chi.values(), &p.g.values(), &template)?;
    Ok(match format {
        Format::Csv => vec![
            artifact("minimal_scan.csv", s.to_csv()),
            artifact("minimal_contour.csv", s.contour.to_csv("chi", "g")),
        ],
        Format::Json => vec![json_artifact("minimal_scan.json", &s)],
    })
}
