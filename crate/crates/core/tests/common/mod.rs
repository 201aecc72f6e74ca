#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zeno_schur::{BlockQuadratic, SymMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_sym(d: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = gauss(d, d, rng);
    SymMatrix::new((&g + g.transpose()) * 0.5).unwrap()
}

/// `G Gᵀ/d + floor·I`.
pub fn random_pd(d: usize, floor: f64, rng: &mut impl Rng) -> SymMatrix {
    let g = gauss(d, d, rng);
    let mut m = &g * g.transpose() / d as f64;
    for i in 0..d {
        m[(i, i)] += floor;
    }
    SymMatrix::new(m).unwrap()
}

pub fn random_block(ds: usize, df: usize, rng: &mut impl Rng) -> BlockQuadratic {
    let a = random_sym(ds, rng);
    let b = gauss(ds, df, rng);
    let c = random_pd(df, 0.1, rng);
    BlockQuadratic::new(a, b, c).unwrap()
}

/// `A − B C⁻¹ Bᵀ` through an LU solve, independent of the library's
/// eigen-based route.
pub fn direct_schur(q: &BlockQuadratic) -> DMatrix<f64> {
    let x = q.c().matrix().clone().lu().solve(&q.b().transpose()).unwrap();
    q.a().matrix() - q.b() * x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 * a.norm_squared().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

pub fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
