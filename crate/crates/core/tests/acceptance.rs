//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criterion 7 is listed in `KNOWN_FAILURES`: it is evaluated in full and
//! printed as FAIL, but does not turn the exit status red. Any other failure
//! (or an unexpected pass of a known failure) does.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use zeno_schur::contour::BoundaryCurve;
use zeno_schur::ensemble::{extract_boundary, linspace, run_grid, GridResult, GridSpec};
use zeno_schur::flow::{Disorder, FlowConfig, NormMode, SchurModel};
use zeno_schur::minimal::scan;
use zeno_schur::recon::{lyapunov_residual, reconstruct, solve_lyapunov, stationary_covariance, stationary_gaussian, ReconError};
use zeno_schur::reduction::{max_real_eigenvalue, Mobility};
use zeno_schur::tensor::{default_signature_tol, operator_norm, perturbation_preserves_signature};
use zeno_schur::{
    schur_complement, signature, BlockQuadratic, MinimalModelSpec64, ReconstructionRequest, StreamSeed, SymMatrix,
};

const KNOWN_FAILURES: &[u32] = &[7];
const GRID_SEED: u64 = 20_260_101;
const TARGET: usize = 3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_subtractivity() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let mut worst = f64::INFINITY;
    for i in 0..1000 {
        let (ds, df) = (1 + i % 6, 1 + (i / 6) % 6);
        let q = random_block(ds, df, &mut r);
        let diff = q.a() - &schur_complement(&q);
        worst = worst.min(diff.min_eigenvalue() / operator_norm(q.a()));
    }
    let el = t.elapsed();
    outcome(
        worst >= -1e-10 && el < Duration::from_secs(5),
        format!("min λ_min(A − Q_eff)/‖A‖ = {worst:.3e} over 1000 blocks, {:.2} s", secs(el)),
    )
}

fn c2_zero_coupling() -> Outcome {
    let mut r = rng(2);
    let mut exact = 0;
    for i in 0..100 {
        let (ds, df) = (1 + i % 6, 1 + (i / 6) % 6);
        let a = random_sym(ds, &mut r);
        let q = BlockQuadratic::new(a.clone(), DMatrix::zeros(ds, df), random_pd(df, 0.1, &mut r)).unwrap();
        let eff = schur_complement(&q);
        if eff.matrix().iter().zip(a.matrix().iter()).all(|(x, y)| x.to_bits() == y.to_bits()) {
            exact += 1;
        }
    }
    outcome(exact == 100, format!("{exact}/100 bit-identical"))
}

fn c3_negativity_onset() -> Outcome {
    let mut ok = true;
    let mut worst_crossing = 0.0f64;
    for c in [0.25, 1.0, 3.0, 10.0] {
        let b_star = f64::sqrt(c);
        for k in -10i32..=10 {
            let b = b_star * (1.0 + 0.01 * k as f64);
            let q = BlockQuadratic::new(
                SymMatrix::identity(1),
                DMatrix::from_element(1, 1, b),
                SymMatrix::from_diagonal(&[c]),
            )
            .unwrap();
            let q_eff = schur_complement(&q).get(0, 0);
            match k.signum() {
                0 => worst_crossing = worst_crossing.max(q_eff.abs()),
                -1 => ok &= q_eff > 0.0,
                _ => ok &= q_eff < 0.0,
            }
        }
    }
    outcome(
        ok && worst_crossing < 1e-12,
        format!("signs flip at b² = c on 4 ladders, max |q_eff| at crossing = {worst_crossing:.1e}"),
    )
}

fn c4_minimal_contour() -> Outcome {
    let t = Instant::now();
    let chi = linspace(0.0, 2.0, 50);
    let g = linspace(0.1, 2.0, 50);
    let s = scan(&chi, &g, &MinimalModelSpec64::default()).unwrap();
    let half = 0.5 * (chi[1] - chi[0]);
    let worst = s.contour.points().map(|(c, gg)| (c - gg.sqrt()).abs()).fold(0.0, f64::max);
    let el = t.elapsed();
    outcome(
        !s.contour.empty && worst <= half && el < Duration::from_secs(5),
        format!(
            "max |χ − √g| on contour = {worst:.2e} (half cell {half:.2e}), {} points, {:.2} s",
            s.contour.points().count(),
            secs(el)
        ),
    )
}

fn c5_weyl() -> Outcome {
    let t = Instant::now();
    let mut r = rng(5);
    let tol = default_signature_tol::<f64>();
    let mut changes = 0;
    let mut rejected = 0;
    for i in 0..1000 {
        let d = 1 + i % 6;
        let q_tan = random_pd(d, 0.05, &mut r).scaled(-1.0);
        let a = random_sym(d, &mut r);
        let frac: f64 = rand::Rng::random_range(&mut r, 0.0..1.0);
        let a = a.scaled(frac * (-q_tan.max_eigenvalue()) / operator_norm(&a));
        if !perturbation_preserves_signature(&q_tan, &a).unwrap() {
            rejected += 1;
            continue;
        }
        if signature(&(&q_tan + &a), tol).n_minus != signature(&q_tan, tol).n_minus {
            changes += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        changes == 0 && rejected == 0 && el < Duration::from_secs(5),
        format!("{changes} n₋ changes in 1000 bounded perturbations, {:.2} s", secs(el)),
    )
}

fn grid_spec(model: SchurModel, mode: NormMode, disorder: Disorder) -> GridSpec {
    GridSpec {
        base_config: FlowConfig {
            schur_model: model,
            norm_mode: mode,
            disorder,
            ..FlowConfig::default()
        },
        master_seed: GRID_SEED,
        ..GridSpec::default()
    }
}

fn timed_grid(spec: &GridSpec, workers: usize) -> (GridResult, Duration) {
    let t = Instant::now();
    let g = run_grid(spec, workers).unwrap();
    (g, t.elapsed())
}

fn c6_flow(grid: &GridResult, el: Duration) -> Outcome {
    let (na, nz) = (grid.a0_values.len(), grid.zeta_values.len());
    let deep = grid.cell(0, nz - 1);
    let shallow = grid.cell(na - 1, 0);
    let (p_deep, p_shallow) = (deep.p_sector[TARGET], shallow.p_sector[TARGET]);
    let b = extract_boundary(grid, TARGET, 0.5).unwrap();
    let near: Vec<f64> = b.near_nodes.iter().filter_map(|&(i, j)| grid.cell(i, j).mean_fpt).collect();
    let near_mean = (!near.is_empty()).then(|| near.iter().sum::<f64>() / near.len() as f64);
    let fpt_ok = matches!((near_mean, deep.mean_fpt), (Some(n), Some(d)) if n >= d);
    outcome(
        p_deep >= 0.9 && p_shallow <= 0.1 && !b.empty && b.is_connected() && fpt_ok && el < Duration::from_secs(60),
        format!(
            "P₃ corners {p_deep:.2}/{p_shallow:.2}, boundary components {}, ⟨τ⟩ near boundary {} vs corner {}, {:.1} s",
            b.components,
            near_mean.map_or("n/a".into(), |v| format!("{v:.2}")),
            deep.mean_fpt.map_or("n/a".into(), |v| format!("{v:.2}")),
            secs(el)
        ),
    )
}

/// Share of columns (a0 indices) in which both supports hold a common cell,
/// over the columns in which either has support.
fn column_overlap(a: &BoundaryCurve, b: &BoundaryCurve) -> f64 {
    let sa: BTreeSet<_> = a.support.iter().copied().collect();
    let sb: BTreeSet<_> = b.support.iter().copied().collect();
    let either: BTreeSet<usize> = sa.union(&sb).map(|c| c.0).collect();
    let both: BTreeSet<usize> = sa.intersection(&sb).map(|c| c.0).collect();
    if either.is_empty() {
        0.0
    } else {
        both.len() as f64 / either.len() as f64
    }
}

fn c7_disorder(annealed_frobenius: &GridResult, c6_time: Duration) -> Outcome {
    let t = Instant::now();
    let lognormal = SchurModel::default();
    let wishart = SchurModel::Wishart { rank: None };
    let panels = [
        ("Frobenius", Some(annealed_frobenius.clone()), lognormal, NormMode::Frobenius),
        ("trace", None, wishart, NormMode::Trace),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (name, annealed, model, mode) in panels {
        let annealed = annealed.unwrap_or_else(|| run_grid(&grid_spec(model, mode, Disorder::Annealed), 1).unwrap());
        let quenched = run_grid(&grid_spec(model, mode, Disorder::Quenched), 1).unwrap();
        let ba = extract_boundary(&annealed, TARGET, 0.5).unwrap();
        let bq = extract_boundary(&quenched, TARGET, 0.5).unwrap();
        let overlap = column_overlap(&ba, &bq);
        pass &= !ba.empty && !bq.empty && overlap >= 0.5;
        parts.push(format!("{name}: overlap {overlap:.2}"));
    }
    let el = t.elapsed();
    pass &= el < 4 * c6_time;
    outcome(pass, format!("{}, {:.1} s", parts.join(", "), secs(el)))
}

fn c8_lyapunov() -> Outcome {
    let t = Instant::now();
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let d = 1 + i % 6;
        let g = gauss(d, d, &mut r);
        // Shift so that every eigenvalue of M has real part ≥ 0.05.
        let min_re = -max_real_eigenvalue(&(-&g)).unwrap();
        let m = &g + DMatrix::identity(d, d) * (0.05 - min_re).max(0.0);
        let dm = random_pd(d, 0.05, &mut r);
        let gamma = solve_lyapunov(&m, &dm).unwrap();
        worst = worst.max(lyapunov_residual(&m, &gamma, &dm) / (2.0 * dm.frobenius_norm()));
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-10 && el < Duration::from_secs(10),
        format!("max relative residual {worst:.2e} over 1000 drifts, {:.2} s", secs(el)),
    )
}

fn c9_fdt() -> Outcome {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 5;
        let q = random_pd(d, 0.05, &mut r);
        let beta: f64 = rand::Rng::random_range(&mut r, 0.2..5.0);
        let s: f64 = rand::Rng::random_range(&mut r, 0.1..10.0);
        let mu = Mobility::scalar(d, s).unwrap();
        let m = q.matrix() * s;
        let gamma = stationary_covariance(&m, &mu.matrix().scaled(1.0 / beta)).unwrap();
        let inv = gamma.matrix().clone().try_inverse().unwrap();
        let target = q.scaled(beta);
        worst = worst.max(rel_fro(&inv, target.matrix()));
        worst = worst.max(stationary_gaussian(&mu, &q, beta).unwrap().closure_residual);
    }
    outcome(worst <= 1e-8, format!("max ‖Γ⁻¹ − βQ‖/‖βQ‖ = {worst:.2e} over 100 tensors"))
}

fn c10_reconstruction() -> Outcome {
    let t = Instant::now();
    let q = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
    let req = ReconstructionRequest::new(q);
    let rep = reconstruct(&req, StreamSeed::new(10)).unwrap();
    let el = t.elapsed();
    outcome(
        rep.curvature_error <= 0.05 && rep.n_samples == 100_000 && el < Duration::from_secs(30),
        format!(
            "relative curvature error {:.4} at {} samples, dt = {:.4}, {:.2} s",
            rep.curvature_error,
            rep.n_samples,
            rep.dt,
            secs(el)
        ),
    )
}

fn c11_determinism(reference: &GridResult) -> Outcome {
    let spec = grid_spec(SchurModel::default(), NormMode::Frobenius, Disorder::Annealed);
    let want = reference.to_csv();
    let want_b = extract_boundary(reference, TARGET, 0.5).unwrap().to_csv("a0", "zeta");
    let mut same = true;
    for workers in [3, 8] {
        let g = run_grid(&spec, workers).unwrap();
        same &= g.to_csv() == want;
        same &= extract_boundary(&g, TARGET, 0.5).unwrap().to_csv("a0", "zeta") == want_b;
    }
    outcome(same, format!("grid and boundary CSV identical for 1, 3 and 8 workers: {same}"))
}

fn c12_instability() -> Outcome {
    let mut r = rng(12);
    let mut signalled = 0;
    for i in 0..100 {
        let d = 1 + i % 4;
        let mut q = random_pd(d, 0.1, &mut r).into_matrix();
        q[(0, 0)] -= 3.0 * q.norm();
        let q = SymMatrix::new(q).unwrap();
        let mu = random_pd(d, 0.1, &mut r);
        let mut req = ReconstructionRequest::new(q.clone());
        req.mobility = Some(mu.clone());
        req.n_samples = 1_000;
        let pipeline = matches!(
            reconstruct(&req, StreamSeed::new(i as u64)),
            Err(ReconError::UnstableDrift { .. } | ReconError::ResponseNotPD { .. })
        );
        let closure = matches!(
            stationary_gaussian(&Mobility::new(mu).unwrap(), &q, 1.0),
            Err(ReconError::ResponseNotPD { .. })
        );
        if pipeline && closure {
            signalled += 1;
        }
    }
    outcome(signalled == 100, format!("{signalled}/100 indefinite tensors rejected"))
}

fn main() {
    let total = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "schur subtractivity", c1_subtractivity()),
        (2, "zero coupling identity", c2_zero_coupling()),
        (3, "negativity onset", c3_negativity_onset()),
        (4, "minimal model contour", c4_minimal_contour()),
        (5, "weyl stability", c5_weyl()),
    ];
    let spec = grid_spec(SchurModel::default(), NormMode::Frobenius, Disorder::Annealed);
    let (grid, c6_time) = timed_grid(&spec, 1);
    results.push((6, "flow phase structure", c6_flow(&grid, c6_time)));
    results.push((7, "annealed vs quenched", c7_disorder(&grid, c6_time)));
    results.push((8, "lyapunov residual", c8_lyapunov()));
    results.push((9, "fdt closure", c9_fdt()));
    results.push((10, "end-to-end reconstruction", c10_reconstruction()));
    results.push((11, "determinism", c11_determinism(&grid)));
    results.push((12, "instability signalling", c12_instability()));
    results.sort_by_key(|r| r.0);

    let mut unexpected = vec![];
    for (id, name, o) in &results {
        let known = KNOWN_FAILURES.contains(id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
            (true, true) => "PASS (unexpected)",
        };
        println!("criterion {id:>2} {tag:<17} {name}: {}", o.detail);
        if o.pass == known {
            unexpected.push(*id);
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} passed in {:.1} s", results.len(), secs(total.elapsed()));
    if !unexpected.is_empty() {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
