//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn face_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/face.pgm")
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn normalize_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// Largest absolute inner product between distinct unit columns.
pub fn coherence(d: &DMatrix<f64>) -> f64 {
    let g = d.transpose() * d;
    let mut best: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..i {
            best = best.max(g[(i, j)].abs());
        }
    }
    best
}

/// Least-squares fit of `y` on the listed columns; returns (coefficients, residual norm).
pub fn lstsq(d: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>) -> (DVector<f64>, f64) {
    let sub = d.select_columns(cols);
    let coef = sub.clone().svd(true, true).solve(y, 1e-14).unwrap();
    let r = (y - &sub * &coef).norm();
    (coef, r)
}

/// Textbook OMP: pick the atom most correlated with the residual, refit by
/// least squares on the whole support, repeat.
pub fn naive_omp(d: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> DVector<f64> {
    let mut support: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    let mut coef = DVector::zeros(0);
    while support.len() < k && residual.norm() >= 1e-12 {
        let mut best = None;
        for n in 0..d.ncols() {
            if support.contains(&n) {
                continue;
            }
            let c = d.column(n).dot(&residual).abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((n, c));
            }
        }
        let Some((n, c)) = best else { break };
        if c == 0.0 {
            break;
        }
        support.push(n);
        let (fit, _) = lstsq(d, &support, y);
        residual = y - d.select_columns(&support) * &fit;
        coef = fit;
    }
    let mut x = DVector::zeros(d.ncols());
    for (i, &n) in support.iter().enumerate() {
        x[n] = coef[i];
    }
    x
}

/// Every `k`-subset by residual norm: (best subset, best residual, runner-up residual).
pub fn exhaustive_best_support(d: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<usize>, f64, f64) {
    let n = d.ncols();
    let mut best = (Vec::new(), f64::INFINITY);
    let mut second = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (_, r) = lstsq(d, &[a, b, c], y);
                if r < best.1 {
                    second = best.1;
                    best = (vec![a, b, c], r);
                } else if r < second {
                    second = r;
                }
            }
        }
    }
    (best.0, best.1, second)
}

/// Centralized K-SVD with dense SVD atom updates. The sign of each new atom
/// is fixed by `d_ref`; atoms with no users are left alone.
pub fn centralized_ksvd(
    y: &DMatrix<f64>,
    init: &DMatrix<f64>,
    d_ref: &DVector<f64>,
    k: usize,
    iterations: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut d = init.clone();
    let mut x = DMatrix::zeros(d.ncols(), y.ncols());
    for _ in 0..iterations {
        for q in 0..y.ncols() {
            x.set_column(q, &naive_omp(&d, &y.column(q).into_owned(), k));
        }
        for n in 0..d.ncols() {
            let users: Vec<usize> = (0..y.ncols())
                .filter(|&q| x[(n, q)].abs() > 1e-12)
                .collect();
            if users.is_empty() {
                continue;
            }
            let full = y - &d * &x + d.column(n) * x.row(n);
            let e = full.select_columns(&users);
            let svd = e.clone().svd(true, false);
            let top = svd.singular_values.imax();
            let mut atom = svd.u.unwrap().column(top).into_owned();
            if d_ref.dot(&atom) < 0.0 {
                atom = -atom;
            }
            let row = atom.transpose() * &e;
            d.set_column(n, &atom);
            for (i, &q) in users.iter().enumerate() {
                x[(n, q)] = row[i];
            }
        }
    }
    (d, x)
}

/// `h` random PSD pieces `B Bᵀ` of an `m×m` sum.
pub fn random_psd_parts(rng: &mut ChaCha8Rng, m: usize, h: usize) -> Vec<DMatrix<f64>> {
    (0..h)
        .map(|_| {
            let cols = rng.random_range(1..=m);
            let b = gaussian_matrix(rng, m, cols);
            &b * b.transpose()
        })
        .collect()
}

/// Max-abs difference after flipping `b` onto `a`'s sign.
pub fn sign_aligned_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let plus = (a - b).amax();
    let minus = (a + b).amax();
    plus.min(minus)
}

/// Incoherent frame by alternating projection: clip large off-diagonal Gram
/// entries, project back to rank `m`, renormalize.
pub fn low_coherence_dictionary(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    let mut d = normalize_columns(gaussian_matrix(rng, m, n));
    let welch = (((n - m) as f64) / (m as f64 * (n - 1) as f64)).sqrt();
    for _ in 0..200 {
        let mut g = d.transpose() * &d;
        let target = welch.max(0.9 * coherence(&d));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g[(i, j)] = g[(i, j)].clamp(-target, target);
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut next = DMatrix::zeros(m, n);
        for (r, &i) in order.iter().take(m).enumerate() {
            let s = eig.eigenvalues[i].max(0.0).sqrt();
            next.row_mut(r)
                .copy_from(&(eig.eigenvectors.column(i).transpose() * s));
        }
        d = normalize_columns(next);
    }
    d
}
