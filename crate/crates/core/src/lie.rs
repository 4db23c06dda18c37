//! Finite-dimensional compact semisimple Lie algebras given by structure
//! constants `[e_i, e_j] = Σ_k c[i][j][k] e_k`.
//!
//! Vectors are coefficient vectors in the raw structure-constant basis.
//! Inner products go through the negative Killing form `−B`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::dense_symmetric_eigen;

/// Tolerance for the antisymmetry and Jacobi checks, scaled by `max|c|²`.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct LieAlgebra {
    name: String,
    dim: usize,
    structure: Vec<f64>,
    killing: DMatrix<f64>,
    /// `−B`, the positive definite inner product on g.
    metric: DMatrix<f64>,
    /// `(−B)⁻¹`, the induced inner product on g*.
    dual_metric: DMatrix<f64>,
    onb: DMatrix<f64>,
}

impl fmt::Debug for LieAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LieAlgebra")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

/// An element of the dual space g*, paired with g by `⟨μ, X⟩ = Σ μ_i X_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector(pub DVector<f64>);

impl DualVector {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    /// The dual basis covector `e_i*`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self(v)
    }

    pub fn from_slice(coeffs: &[f64]) -> Self {
        Self(DVector::from_column_slice(coeffs))
    }

    pub fn pair(&self, x: &DVector<f64>) -> f64 {
        self.0.dot(x)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }
}

impl LieAlgebra {
    /// Validates structure constants given as a flat row-major `d×d×d`
    /// array (`c[i][j][k]` at `i*d*d + j*d + k`).
    pub fn from_structure_constants(name: impl Into<String>, structure: Vec<f64>) -> Result<Self> {
        let len = structure.len();
        let dim = (len as f64).cbrt().round() as usize;
        if dim == 0 || dim * dim * dim != len {
            return Err(Error::BadStructureShape { len });
        }
        if structure.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let cmax = structure.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = IDENTITY_TOL * cmax.max(1.0).powi(2);
        let at = |i: usize, j: usize, k: usize| structure[i * dim * dim + j * dim + k];

        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let residual = at(i, j, k) + at(j, i, k);
                    if residual.abs() > tol {
                        return Err(Error::NotAntisymmetric { i, j, k, residual });
                    }
                }
            }
        }

        let mut killing = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for k in 0..dim {
                    for l in 0..dim {
                        acc += at(i, k, l) * at(j, l, k);
                    }
                }
                killing[(i, j)] = acc;
            }
        }
        let mut alg = Self {
            name: name.into(),
            dim,
            structure,
            killing: DMatrix::zeros(dim, dim),
            metric: DMatrix::zeros(dim, dim),
            dual_metric: DMatrix::zeros(dim, dim),
            onb: DMatrix::zeros(dim, dim),
        };

        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let residual = alg.jacobi_residual(i, j, k);
                    if residual > tol {
                        return Err(Error::JacobiViolated { i, j, k, residual });
                    }
                }
            }
        }

        let metric = -&killing;
        let eig = dense_symmetric_eigen(&metric);
        let min = eig.values[0];
        let max = *eig.values.last().unwrap();
        if min <= 1e-10 * max.abs().max(1.0) {
            return Err(Error::KillingDegenerate {
                min_eigenvalue: min,
            });
        }
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            eig.values.iter().map(|v| 1.0 / v.sqrt()),
        ));
        let inv = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            eig.values.iter().map(|v| 1.0 / v),
        ));
        alg.onb = &eig.vectors * inv_sqrt;
        alg.dual_metric = &eig.vectors * inv * eig.vectors.transpose();
        alg.killing = killing;
        alg.metric = metric;
        Ok(alg)
    }

    /// so(3) with `c[i][j][k] = ε_ijk`.
    pub fn so3() -> Self {
        Self::from_structure_constants("so3", levi_civita_constants(1.0))
            .expect("so(3) is semisimple")
    }

    /// su(2) realized by real structure constants `c[i][j][k] = 2ε_ijk`.
    /// Its Killing form is `−8·I`, four times that of [`LieAlgebra::so3`].
    pub fn su2() -> Self {
        Self::from_structure_constants("su2", levi_civita_constants(2.0))
            .expect("su(2) is semisimple")
    }

    /// so(4) ≅ so(3) ⊕ so(3), basis `e_0..e_2` for the first summand and
    /// `e_3..e_5` for the second.
    pub fn so4() -> Self {
        let d = 6;
        let mut c = vec![0.0; d * d * d];
        let eps = levi_civita_constants(1.0);
        for block in [0usize, 3] {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[(i + block) * d * d + (j + block) * d + (k + block)] =
                            eps[i * 9 + j * 3 + k];
                    }
                }
            }
        }
        Self::from_structure_constants("so4", c).expect("so(4) is semisimple")
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "so3" => Ok(Self::so3()),
            "su2" => Ok(Self::su2()),
            "so4" => Ok(Self::so4()),
            other => Err(Error::UnknownAlgebra(other.to_string())),
        }
    }

    /// Parses the plain-text structure-constant format: whitespace
    /// separated numbers, `#` starts a comment. The first number is the
    /// dimension `d`, followed by `d³` values in row-major order
    /// `c[i][j][k]` (k fastest).
    pub fn parse_text(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let dim: usize = tokens
            .next()
            .ok_or_else(|| Error::AlgebraParse("missing dimension".into()))?
            .parse()
            .map_err(|e| Error::AlgebraParse(format!("dimension: {e}")))?;
        let values = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::AlgebraParse(format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim * dim * dim {
            return Err(Error::AlgebraParse(format!(
                "expected {} values for dimension {dim}, found {}",
                dim * dim * dim,
                values.len()
            )));
        }
        Self::from_structure_constants(name, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[i * self.dim * self.dim + j * self.dim + k]
    }

    pub fn structure_constants(&self) -> &[f64] {
        &self.structure
    }

    pub fn killing(&self) -> &DMatrix<f64> {
        &self.killing
    }

    /// Gram matrix of `⟨·,·⟩_g = −B` in the raw basis.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Gram matrix of the dual inner product on g*, `(−B)⁻¹`.
    pub fn dual_metric(&self) -> &DMatrix<f64> {
        &self.dual_metric
    }

    /// Columns are a `⟨·,·⟩_g`-orthonormal basis expressed in raw coordinates.
    pub fn orthonormal_basis(&self) -> &DMatrix<f64> {
        &self.onb
    }

    pub fn basis(&self, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v[i] = 1.0;
        v
    }

    pub fn bracket(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..d {
                    out[k] += xy * self.c(i, j, k);
                }
            }
        }
        out
    }

    /// Matrix of `ad_X = [X, ·]`.
    pub fn ad(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |k, j| (0..d).map(|i| x[i] * self.c(i, j, k)).sum())
    }

    /// `ad*_X μ`, with `⟨ad*_X μ, Y⟩ = −⟨μ, [X, Y]⟩`.
    pub fn coadjoint(&self, x: &DVector<f64>, mu: &DualVector) -> DualVector {
        DualVector(-(self.ad(x).transpose() * &mu.0))
    }

    pub fn killing_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.metric * y))
    }

    pub fn norm_sq(&self, x: &DVector<f64>) -> f64 {
        self.killing_inner(x, x)
    }

    pub fn dual_inner(&self, a: &DualVector, b: &DualVector) -> f64 {
        a.0.dot(&(&self.dual_metric * &b.0))
    }

    pub fn dual_norm_sq(&self, mu: &DualVector) -> f64 {
        self.dual_inner(mu, mu)
    }

    pub fn dual_norm(&self, mu: &DualVector) -> f64 {
        self.dual_norm_sq(mu).max(0.0).sqrt()
    }

    /// `‖[e_i,[e_j,e_k]] + [e_j,[e_k,e_i]] + [e_k,[e_i,e_j]]‖` (Euclidean).
    pub fn jacobi_residual(&self, i: usize, j: usize, k: usize) -> f64 {
        let (ei, ej, ek) = (self.basis(i), self.basis(j), self.basis(k));
        let sum = self.bracket(&ei, &self.bracket(&ej, &ek))
            + self.bracket(&ej, &self.bracket(&ek, &ei))
            + self.bracket(&ek, &self.bracket(&ei, &ej));
        sum.norm()
    }

    pub fn max_jacobi_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max(self.jacobi_residual(i, j, k));
                }
            }
        }
        worst
    }

    /// Largest `|⟨[Z,X],Y⟩ + ⟨X,[Z,Y]⟩|` over basis triples.
    pub fn max_ad_invariance_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for z in 0..d {
            for x in 0..d {
                for y in 0..d {
                    let (ez, ex, ey) = (self.basis(z), self.basis(x), self.basis(y));
                    let v = self.killing_inner(&self.bracket(&ez, &ex), &ey)
                        + self.killing_inner(&ex, &self.bracket(&ez, &ey));
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    /// Adjoint group element `Ad_{exp X} = exp(ad_X)`.
    pub fn group_adjoint(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.ad(x).exp()
    }

    /// Coadjoint group action `Ad*_{exp X} μ = μ ∘ Ad_{exp(−X)}`.
    pub fn group_coadjoint(&self, x: &DVector<f64>, mu: &DualVector) -> DualVector {
        DualVector(self.group_adjoint(&(-x)).transpose() * &mu.0)
    }
}

fn levi_civita_constants(scale: f64) -> Vec<f64> {
    let mut c = vec![0.0; 27];
    for (i, j, k, s) in [
        (0, 1, 2, 1.0),
        (1, 2, 0, 1.0),
        (2, 0, 1, 1.0),
        (1, 0, 2, -1.0),
        (2, 1, 0, -1.0),
        (0, 2, 1, -1.0),
    ] {
        c[i * 9 + j * 3 + k] = s * scale;
    }
    c
}
