//! Greedy sparse approximation: OMP, batch/simultaneous OMP and `Y ≈ DX`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imaging::{PatchLayout, PatchMatrix};

/// Residual norm below which pursuit stops early.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Tolerance on atom norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// An M×N matrix of unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    data: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps `data`, which must already have unit-norm columns.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "dictionary must be non-empty".into(),
            ));
        }
        for (n, col) in data.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidArgument(format!("atom {n} has norm {norm}")));
            }
        }
        Ok(Self { data })
    }

    /// Scales every column of `data` to unit norm.
    pub fn normalized(mut data: DMatrix<f64>) -> Result<Self> {
        for (n, mut col) in data.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "atom {n} cannot be normalized"
                )));
            }
            col /= norm;
        }
        Self::new(data)
    }

    pub fn dim_m(&self) -> usize {
        self.data.nrows()
    }

    pub fn atoms_n(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn atom(&self, n: usize) -> DVectorView<'_, f64> {
        self.data.column(n)
    }

    /// Replaces atom `n`; `atom` must have unit norm.
    pub(crate) fn set_atom(&mut self, n: usize, atom: &DVector<f64>) {
        debug_assert!((atom.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        self.data.set_column(n, atom);
    }
}

/// N×Q coefficient matrix with at most `sparsity_k` nonzeros per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodeMatrix {
    pub data: DMatrix<f64>,
    pub sparsity_k: usize,
    /// Layout of the signals that were coded, carried through to reconstruction.
    pub layout: Option<PatchLayout>,
}

impl SparseCodeMatrix {
    pub fn zeros(atoms_n: usize, count_q: usize, sparsity_k: usize) -> Self {
        Self {
            data: DMatrix::zeros(atoms_n, count_q),
            sparsity_k,
            layout: None,
        }
    }

    pub fn atoms_n(&self) -> usize {
        self.data.nrows()
    }

    pub fn count_q(&self) -> usize {
        self.data.ncols()
    }

    /// Largest number of nonzeros in any column.
    pub fn max_column_nnz(&self) -> usize {
        self.data
            .column_iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PursuitMode {
    /// Each column is coded independently (plain OMP per column).
    #[default]
    PerColumn,
    /// One support for the whole batch, chosen by summed correlation.
    SharedSupport,
}

/// Orthonormal basis of the selected atoms, grown one atom at a time.
struct IncrementalQr {
    m: usize,
    /// Column-major M×k orthonormal vectors.
    q: Vec<f64>,
    /// Upper-triangular factor stored by columns: `r[j]` holds column j.
    r: Vec<Vec<f64>>,
}

impl IncrementalQr {
    fn new(m: usize, capacity: usize) -> Self {
        Self {
            m,
            q: Vec::with_capacity(m * capacity),
            r: Vec::with_capacity(capacity),
        }
    }

    fn rank(&self) -> usize {
        self.r.len()
    }

    fn basis(&self, j: usize) -> &[f64] {
        &self.q[j * self.m..(j + 1) * self.m]
    }

    /// Gram-Schmidt with one re-orthogonalization pass. Returns false when
    /// the atom is numerically inside the current span.
    fn push(&mut self, atom: DVectorView<'_, f64>) -> bool {
        let k = self.rank();
        let mut v: Vec<f64> = atom.iter().copied().collect();
        let mut coeffs = vec![0.0; k + 1];
        for _ in 0..2 {
            for (j, c) in coeffs.iter_mut().enumerate().take(k) {
                let qj = &self.q[j * self.m..(j + 1) * self.m];
                let proj = dot(qj, &v);
                *c += proj;
                v.iter_mut().zip(qj).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-10 {
            return false;
        }
        coeffs[k] = norm;
        self.q.extend(v.iter().map(|x| x / norm));
        self.r.push(coeffs);
        true
    }

    /// Solves `R x = b` by back substitution.
    fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut x = b.to_vec();
        for i in (0..k).rev() {
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().take(k).skip(i + 1) {
                s -= self.r[j][i] * xj;
            }
            x[i] = s / self.r[i][i];
        }
        x
    }

    /// Projection coefficients `Qᵀy` and residual `y − QQᵀy`.
    fn project(&self, y: &[f64], proj: &mut Vec<f64>, residual: &mut [f64]) {
        proj.clear();
        residual.copy_from_slice(y);
        for j in 0..self.rank() {
            let qj = self.basis(j);
            let b = dot(qj, y);
            proj.push(b);
            residual
                .iter_mut()
                .zip(qj)
                .for_each(|(ri, qi)| *ri -= b * qi);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Index of the largest score among unselected atoms; lowest index wins ties.
fn argmax_unselected(
    scores: impl Iterator<Item = f64>,
    selected: &[usize],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (n, s) in scores.enumerate() {
        if selected.contains(&n) {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((n, s));
        }
    }
    best
}

fn check_sparsity(d: &Dictionary, k: usize) -> Result<()> {
    let limit = d.dim_m().min(d.atoms_n());
    if k > limit {
        return Err(Error::InvalidArgument(format!(
            "sparsity {k} exceeds min(M, N) = {limit}"
        )));
    }
    Ok(())
}

/// Result of one OMP run with its per-step residual norms.
#[derive(Debug, Clone)]
pub struct OmpOutcome {
    pub coefficients: DVector<f64>,
    /// Atom indices in selection order.
    pub support: Vec<usize>,
    /// `‖y‖` followed by the residual norm after each selection.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal matching pursuit for one signal, reporting its trajectory.
pub fn omp_traced(d: &Dictionary, y: DVectorView<'_, f64>, k: usize) -> Result<OmpOutcome> {
    if y.len() != d.dim_m() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} vs dictionary rows {}",
            y.len(),
            d.dim_m()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal contains NaN or infinity".into()));
    }
    check_sparsity(d, k)?;

    let m = d.dim_m();
    let y: Vec<f64> = y.iter().copied().collect();
    let mut qr = IncrementalQr::new(m, k);
    let mut support = Vec::with_capacity(k);
    let mut residual = y.clone();
    let mut proj = Vec::with_capacity(k);
    let mut residual_norms = vec![norm(&residual)];

    while support.len() < k && *residual_norms.last().unwrap() >= RESIDUAL_TOL {
        let corr = d
            .matrix()
            .column_iter()
            .map(|atom| dot(atom.as_slice(), &residual).abs());
        let Some((best, score)) = argmax_unselected(corr, &support) else {
            break;
        };
        if score == 0.0 || !qr.push(d.atom(best)) {
            break;
        }
        support.push(best);
        qr.project(&y, &mut proj, &mut residual);
        residual_norms.push(norm(&residual));
    }

    let mut coefficients = DVector::zeros(d.atoms_n());
    for (&n, c) in support.iter().zip(qr.solve_upper(&proj)) {
        coefficients[n] = c;
    }
    Ok(OmpOutcome {
        coefficients,
        support,
        residual_norms,
    })
}

/// Orthogonal matching pursuit: at most `k` atoms, least-squares refit
/// after every selection.
pub fn omp_single(d: &Dictionary, y: DVectorView<'_, f64>, k: usize) -> Result<DVector<f64>> {
    omp_traced(d, y, k).map(|o| o.coefficients)
}

/// Codes every column of `y` with [`PursuitMode`] `mode`.
pub fn somp_batch(
    d: &Dictionary,
    y: &PatchMatrix,
    k: usize,
    mode: PursuitMode,
) -> Result<SparseCodeMatrix> {
    somp_batch_with(d, y, k, mode, Execution::default())
}

/// [`somp_batch`] with an explicit execution mode.
pub fn somp_batch_with(
    d: &Dictionary,
    y: &PatchMatrix,
    k: usize,
    mode: PursuitMode,
    exec: Execution,
) -> Result<SparseCodeMatrix> {
    if y.dim_m() != d.dim_m() {
        return Err(Error::DimensionMismatch(format!(
            "signals have {} rows, dictionary {}",
            y.dim_m(),
            d.dim_m()
        )));
    }
    check_sparsity(d, k)?;
    if y.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "signal matrix contains NaN or infinity".into(),
        ));
    }
    let mut codes = SparseCodeMatrix::zeros(d.atoms_n(), y.count_q(), k);
    codes.layout = y.layout;
    match mode {
        PursuitMode::PerColumn => {
            let cols = exec.map(y.count_q(), |q| omp_single(d, y.data.column(q), k));
            for (q, col) in cols.into_iter().enumerate() {
                codes.data.set_column(q, &col?);
            }
        }
        PursuitMode::SharedSupport => shared_support(d, y, k, &mut codes),
    }
    Ok(codes)
}

fn shared_support(d: &Dictionary, y: &PatchMatrix, k: usize, codes: &mut SparseCodeMatrix) {
    let (m, q) = (y.dim_m(), y.count_q());
    let mut qr = IncrementalQr::new(m, k);
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual = y.data.clone();
    let mut proj = Vec::new();
    let mut scratch = vec![0.0; m];

    while support.len() < k && residual.norm() >= RESIDUAL_TOL {
        let scores = d.matrix().column_iter().map(|atom| {
            residual
                .column_iter()
                .map(|r| dot(atom.as_slice(), r.as_slice()).abs())
                .sum::<f64>()
        });
        let Some((best, score)) = argmax_unselected(scores, &support) else {
            break;
        };
        if score == 0.0 || !qr.push(d.atom(best)) {
            break;
        }
        support.push(best);
        for c in 0..q {
            qr.project(y.data.column(c).as_slice(), &mut proj, &mut scratch);
            residual.column_mut(c).copy_from_slice(&scratch);
        }
    }
    for c in 0..q {
        qr.project(y.data.column(c).as_slice(), &mut proj, &mut scratch);
        for (&n, v) in support.iter().zip(qr.solve_upper(&proj)) {
            codes.data[(n, c)] = v;
        }
    }
}

/// Returns `DX` as a patch matrix carrying the layout of the coded signals.
pub fn reconstruct(d: &Dictionary, x: &SparseCodeMatrix) -> Result<PatchMatrix> {
    if d.atoms_n() != x.atoms_n() {
        return Err(Error::DimensionMismatch(format!(
            "dictionary has {} atoms, codes {}",
            d.atoms_n(),
            x.atoms_n()
        )));
    }
    let mut out = DMatrix::zeros(d.dim_m(), x.count_q());
    for (mut col, code) in out.column_iter_mut().zip(x.data.column_iter()) {
        for (n, &c) in code.iter().enumerate() {
            if c != 0.0 {
                col.axpy(c, &d.atom(n), 1.0);
            }
        }
    }
    Ok(PatchMatrix {
        data: out,
        layout: x.layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_dictionary(m: usize, n: usize, seed: u64) -> Dictionary {
        let mut rng = stream_rng(seed, Stream::Synthetic);
        Dictionary::normalized(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn dictionary_validation() {
        assert!(Dictionary::new(DMatrix::from_element(2, 2, 1.0)).is_err());
        assert!(Dictionary::normalized(DMatrix::zeros(2, 2)).is_err());
        let d = Dictionary::normalized(DMatrix::from_element(3, 2, 2.0)).unwrap();
        assert!((d.atom(1).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_atom_signal() {
        let d = random_dictionary(8, 12, 1);
        let y = d.atom(3) * 2.0;
        let x = omp_single(&d, y.as_view(), 1).unwrap();
        assert!((x[3] - 2.0).abs() < 1e-12);
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn zero_signal_and_zero_k() {
        let d = random_dictionary(8, 12, 2);
        let zero = DVector::zeros(8);
        let out = omp_traced(&d, zero.as_view(), 3).unwrap();
        assert!(out.support.is_empty());
        assert!(out.coefficients.iter().all(|v| *v == 0.0));
        let y = d.atom(0).into_owned();
        assert!(omp_single(&d, y.as_view(), 0)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let d = random_dictionary(4, 6, 3);
        let y = DVector::from_vec(vec![1.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(
            omp_single(&d, y.as_view(), 1),
            Err(Error::NonFinite(_))
        ));
        let y = DVector::zeros(5);
        assert!(matches!(
            omp_single(&d, y.as_view(), 1),
            Err(Error::DimensionMismatch(_))
        ));
        let y = DVector::zeros(4);
        assert!(omp_single(&d, y.as_view(), 5).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        // two identical atoms: the first must be chosen
        let data = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let d = Dictionary::new(data).unwrap();
        let y = DVector::from_vec(vec![0.0, 3.0]);
        let out = omp_traced(&d, y.as_view(), 1).unwrap();
        assert_eq!(out.support, vec![1]);
    }

    #[test]
    fn residuals_are_monotone_and_support_unique() {
        let d = random_dictionary(10, 30, 4);
        let mut rng = stream_rng(5, Stream::Noise);
        for _ in 0..50 {
            let y = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let out = omp_traced(&d, y.as_view(), 6).unwrap();
            for w in out.residual_norms.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let mut s = out.support.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), out.support.len());
            let fit = &y - d.matrix() * &out.coefficients;
            assert!(fit.norm() <= y.norm() + 1e-12);
            assert!((fit.norm() - out.residual_norms.last().unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn per_column_batch_equals_single() {
        let d = random_dictionary(6, 15, 6);
        let mut rng = stream_rng(7, Stream::Noise);
        let y = PatchMatrix::new(DMatrix::from_fn(6, 40, |_, _| rng.sample(StandardNormal)));
        for exec in [Execution::Sequential, Execution::Parallel] {
            let x = somp_batch_with(&d, &y, 3, PursuitMode::PerColumn, exec).unwrap();
            for q in 0..40 {
                let single = omp_single(&d, y.data.column(q), 3).unwrap();
                assert_eq!(x.data.column(q), single.column(0));
            }
            assert!(x.max_column_nnz() <= 3);
        }
    }

    #[test]
    fn batch_of_one_agrees_across_modes() {
        let d = random_dictionary(6, 15, 8);
        let mut rng = stream_rng(9, Stream::Noise);
        let y = PatchMatrix::new(DMatrix::from_fn(6, 1, |_, _| rng.sample(StandardNormal)));
        let a = somp_batch(&d, &y, 3, PursuitMode::PerColumn).unwrap();
        let b = somp_batch(&d, &y, 3, PursuitMode::SharedSupport).unwrap();
        assert!((a.data - b.data).amax() < 1e-10);
    }

    #[test]
    fn one_hot_columns() {
        let d = random_dictionary(8, 20, 10);
        let mut data = DMatrix::zeros(8, 2);
        data.set_column(0, &d.atom(4));
        data.set_column(1, &(d.atom(11) * -1.5));
        let x = somp_batch(&d, &PatchMatrix::new(data), 1, PursuitMode::PerColumn).unwrap();
        assert!((x.data[(4, 0)] - 1.0).abs() < 1e-12);
        assert!((x.data[(11, 1)] + 1.5).abs() < 1e-12);
        assert_eq!(x.max_column_nnz(), 1);
    }

    #[test]
    fn reconstruct_examples() {
        let d = random_dictionary(5, 9, 11);
        let mut x = SparseCodeMatrix::zeros(9, 3, 1);
        assert!(reconstruct(&d, &x).unwrap().data.iter().all(|v| *v == 0.0));
        x.data[(7, 2)] = 0.25;
        let y = reconstruct(&d, &x).unwrap();
        assert!((y.data.column(2) - d.atom(7) * 0.25).amax() < 1e-15);
        assert!(reconstruct(&d, &SparseCodeMatrix::zeros(8, 1, 1)).is_err());
    }

    #[test]
    fn batch_dimension_mismatch() {
        let d = random_dictionary(5, 9, 12);
        let y = PatchMatrix::new(DMatrix::zeros(4, 3));
        assert!(matches!(
            somp_batch(&d, &y, 2, PursuitMode::PerColumn),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
