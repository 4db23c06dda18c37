//! Small linear-algebra toolkit: a compressed-row sparse matrix, conjugate
//! gradients for symmetric positive semidefinite systems, and symmetric
//! eigensolvers (dense, plus shift-invert subspace iteration for large
//! operators).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compressed sparse row matrix over `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()),
        )
    }

    /// Computes `selfᵀ x` without forming the transpose.
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * xr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(r, c, v)| (c, r, v)),
        )
    }

    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, triplets)
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.triplets().chain(other.triplets()),
        )
    }

    /// `diag(d) * self`
    pub fn scale_rows(&self, d: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                out.values[idx] *= d[r];
            }
        }
        out
    }

    /// `self * diag(d)`
    pub fn scale_cols(&self, d: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for (idx, c) in self.indices.iter().enumerate() {
            out.values[idx] *= d[*c];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Entrywise absolute value.
    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.abs());
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for `A x = b` with `A` symmetric positive
/// semidefinite and `b` in the range of `A`. `project`, when given, is
/// applied to every iterate direction to keep the Krylov space inside a
/// chosen complement (e.g. orthogonal to a known kernel).
pub fn conjugate_gradient(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut DVector<f64>)>,
) -> Result<CgSolution> {
    let n = b.len();
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x: DVector::zeros(n),
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    if let Some(p) = project {
        p(&mut r);
    }
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut best = (x.clone(), rr.sqrt() / bnorm);
    // The recursively updated residual drifts from b − Ax; on apparent
    // convergence check the true one and restart from x if they disagree.
    let mut restarts = 0;
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            let mut true_r = b - apply(&x);
            if let Some(proj) = project {
                proj(&mut true_r);
            }
            let true_rr = true_r.dot(&true_r);
            if true_rr.sqrt() <= 10.0 * tol * bnorm || restarts == 3 {
                return Ok(CgSolution {
                    x,
                    iterations: it,
                    relative_residual: true_rr.sqrt() / bnorm,
                });
            }
            restarts += 1;
            r = true_r;
            p = r.clone();
            rr = true_rr;
            continue;
        }
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if let Some(proj) = project {
            proj(&mut r);
        }
        let rr_new = r.dot(&r);
        if rr_new.sqrt() / bnorm < best.1 {
            best = (x.clone(), rr_new.sqrt() / bnorm);
        }
        let beta = rr_new / rr;
        p = &r + beta * &p;
        rr = rr_new;
    }
    // Recompute the true residual of the best iterate before judging it.
    let (x, _) = best;
    let true_res = (b - apply(&x)).norm() / bnorm;
    if true_res <= tol.max(1e-10) {
        Ok(CgSolution {
            x,
            iterations: max_iter,
            relative_residual: true_res,
        })
    } else {
        Err(Error::SolverFailure(format!(
            "conjugate gradients stalled at relative residual {true_res:e}"
        )))
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

pub fn dense_symmetric_eigen(a: &DMatrix<f64>) -> EigenPairs {
    let n = a.nrows();
    if n == 0 {
        return EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    // Symmetrize to scrub roundoff asymmetry before the solver sees it.
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenPairs { values, vectors }
}

/// Recomputes the `k = basis.ncols()` smallest eigenpairs of a symmetric
/// PSD matrix by block inverse iteration `(A + σI)⁻¹` seeded with `basis`,
/// followed by Rayleigh–Ritz. The dense QR solver can leave O(√ε)
/// admixtures of far-away eigenvectors in near-zero eigenvectors, and on
/// degenerate kernels it occasionally returns a vector that is not an
/// eigenvector at all. `extra` seeded random columns widen the block so
/// that every wanted direction is present in the start.
pub fn refine_low_subspace(
    a: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    shift: f64,
    steps: usize,
    extra: usize,
    seed: u64,
) -> Result<EigenPairs> {
    let k = basis.ncols();
    let n = a.nrows();
    if k == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: basis.clone(),
        });
    }
    let extra = extra.min(n - k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DMatrix::from_fn(n, k + extra, |_, _| rng.gen_range(-1.0..1.0));
    y.columns_mut(0, k).copy_from(basis);
    let shifted = a + DMatrix::identity(n, n) * shift;
    let chol = Cholesky::new(shifted)
        .ok_or_else(|| Error::EigensolverFailure("shifted matrix is not positive definite".into()))?;
    y = y.qr().q();
    for _ in 0..steps {
        y = chol.solve(&y);
        y = y.qr().q();
    }
    let ritz = dense_symmetric_eigen(&(y.transpose() * a * &y));
    Ok(EigenPairs {
        values: ritz.values[..k].to_vec(),
        vectors: y * ritz.vectors.columns(0, k),
    })
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
pub fn power_iteration_max(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    n: usize,
    iterations: usize,
    seed: u64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = apply(&v);
        estimate = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    estimate
}

#[derive(Clone, Debug)]
pub struct SubspaceOptions {
    /// Number of lowest eigenpairs wanted.
    pub nev: usize,
    /// Positive shift so that `A + shift·I` is definite.
    pub shift: f64,
    pub max_iterations: usize,
    /// Residual tolerance relative to `max(1, scale)`.
    pub tol: f64,
    pub scale: f64,
    pub seed: u64,
}

/// Lowest eigenpairs of a symmetric PSD operator by shift-invert subspace
/// iteration with Rayleigh–Ritz extraction. Handles repeated eigenvalues
/// (e.g. multi-dimensional kernels), which single-vector Lanczos cannot.
pub fn shift_invert_subspace(
    apply: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Sync),
    n: usize,
    opts: &SubspaceOptions,
) -> Result<EigenPairs> {
    use rayon::prelude::*;

    let nev = opts.nev.min(n);
    let block = (nev + nev / 2 + 4).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.gen_range(-1.0..1.0));
    x = orthonormalize(&x);
    let shifted = |v: &DVector<f64>| apply(v) + opts.shift * v;
    let scale = opts.scale.max(1.0);

    for _ in 0..opts.max_iterations {
        let cols: Vec<DVector<f64>> = (0..block)
            .into_par_iter()
            .map(|c| {
                let b = x.column(c).into_owned();
                conjugate_gradient(shifted, &b, 1e-13, 20 * n + 100, None).map(|s| s.x)
            })
            .collect::<Result<_>>()?;
        let y = orthonormalize(&DMatrix::from_columns(&cols));
        let ay_cols: Vec<DVector<f64>> = (0..y.ncols())
            .into_par_iter()
            .map(|c| apply(&y.column(c).into_owned()))
            .collect();
        let ay = DMatrix::from_columns(&ay_cols);
        let h = y.transpose() * &ay;
        let ritz = dense_symmetric_eigen(&h);
        x = &y * &ritz.vectors;
        let ax = &ay * &ritz.vectors;
        let converged = (0..nev).all(|i| {
            let r = ax.column(i) - ritz.values[i] * x.column(i);
            r.norm() <= opts.tol * scale
        });
        if converged {
            return Ok(EigenPairs {
                values: ritz.values[..nev].to_vec(),
                vectors: x.columns(0, nev).into_owned(),
            });
        }
    }
    Err(Error::EigensolverFailure(format!(
        "subspace iteration did not converge {nev} eigenpairs in {} sweeps",
        opts.max_iterations
    )))
}

/// Modified Gram–Schmidt (applied twice), dropping numerically dependent
/// columns.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(a.ncols());
    for c in 0..a.ncols() {
        let mut v = a.column(c).into_owned();
        let original = v.norm();
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-12 * original.max(f64::MIN_POSITIVE) {
            cols.push(v / norm);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(a.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with a relative tolerance on the largest singular value.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(&0.0) => 0,
        Some(&smax) => s.iter().filter(|&&v| v > rel_tol * smax).count(),
    }
}
