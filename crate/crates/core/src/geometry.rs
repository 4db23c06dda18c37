//! Compatible-pair field data on the trivial bundle `Tⁿ × G`: a covector
//! field `λ`, connection coefficients `ω_a`, and everything derived from
//! them — curvature, the two weight functions, the modified-Cartan residual,
//! transversality diagnostics — plus a gradient-descent fitter for `λ`.
//!
//! Fields are plain functions of position, so they can be sampled at any
//! barycenter. All base derivatives are periodic central differences with
//! the mesh spacing as step.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{DualVector, LieAlgebra};
use crate::linalg::{orthonormalize, power_iteration_max, singular_values};
use crate::mesh::TorusMesh;

/// Below this g*-norm a covector counts as zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// A vector-valued function on the base, in basis coordinates of `g` or `g*`.
#[derive(Clone)]
pub struct VectorField(Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>);

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VectorField(..)")
    }
}

impl VectorField {
    pub fn new(f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(v: DVector<f64>) -> Self {
        Self::new(move |_| v.clone())
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(DVector::zeros(dim))
    }

    /// `profile(x) · v`.
    pub fn scalar_times(
        v: DVector<f64>,
        profile: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(move |x| profile(x) * &v)
    }

    pub fn table(table: GridTable) -> Self {
        Self::new(move |x| table.sample(x))
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.0)(x)
    }

    pub fn plus(&self, other: &VectorField) -> Self {
        let (a, b) = (self.clone(), other.clone());
        Self::new(move |x| a.eval(x) + b.eval(x))
    }

    /// Pointwise `A · f(x)` for a fixed matrix.
    pub fn transformed(&self, a: DMatrix<f64>) -> Self {
        let f = self.clone();
        Self::new(move |x| &a * f.eval(x))
    }
}

/// Vertex-indexed vector samples on a periodic grid, read back by
/// (bi)linear periodic interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    resolution: Vec<usize>,
    sides: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl GridTable {
    pub fn new(mesh: &TorusMesh, values: Vec<DVector<f64>>) -> Result<Self> {
        let expected = mesh.vertex_count();
        if values.len() != expected {
            return Err(Error::TableShape {
                expected,
                got: values.len(),
            });
        }
        let width = values.first().map_or(0, DVector::len);
        if values.iter().any(|v| v.len() != width) {
            return Err(Error::TableShape {
                expected: width,
                got: values
                    .iter()
                    .map(DVector::len)
                    .find(|&l| l != width)
                    .unwrap_or(0),
            });
        }
        Ok(Self {
            resolution: mesh.resolution().to_vec(),
            sides: mesh.sides().to_vec(),
            values,
        })
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn sample(&self, x: &[f64]) -> DVector<f64> {
        // Cell index and fractional offset along each axis, wrapped.
        let locate = |a: usize| {
            let n = self.resolution[a];
            let t = (x[a] / self.sides[a] * n as f64).rem_euclid(n as f64);
            let i = (t.floor() as usize).min(n - 1);
            (i, (i + 1) % n, t - i as f64)
        };
        let (i0, i1, s) = locate(0);
        if self.resolution.len() == 1 {
            return (1.0 - s) * &self.values[i0] + s * &self.values[i1];
        }
        let (j0, j1, t) = locate(1);
        let n1 = self.resolution[0];
        let at = |i: usize, j: usize| &self.values[i + n1 * j];
        (1.0 - s) * (1.0 - t) * at(i0, j0)
            + s * (1.0 - t) * at(i1, j0)
            + (1.0 - s) * t * at(i0, j1)
            + s * t * at(i1, j1)
    }
}

/// Which weight function feeds a mass matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// `w_λ = 1 + ‖λ‖²`.
    Constraint,
    /// `w_λ + ‖dλ + ad*_ω λ‖²`.
    ConstraintEnhanced,
    /// `κ_ω = 1 + ‖Ω‖² + ‖∇Ω‖²`.
    Curvature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartanResidual {
    pub per_vertex: DVector<f64>,
    /// `(Σ_v |cell_v| r_v²)^{1/2}`.
    pub global: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    /// Smallest singular value of `v ↦ (⟨λ, ω(v)⟩, ⟨ξ, dπ v⟩)`.
    pub margin: f64,
    /// Friedrichs-angle gap `‖u − v‖` between unit vectors of the
    /// constraint distribution and the vertical space, modulo their
    /// intersection.
    pub gap: f64,
}

/// The sampled pair `(λ, ω)` together with its derived vertex caches.
#[derive(Clone, Debug)]
pub struct PairField {
    mesh: Arc<TorusMesh>,
    alg: Arc<LieAlgebra>,
    lambda: VectorField,
    omega: Vec<VectorField>,
    spacing: Vec<f64>,
    lambda_vertices: Vec<DualVector>,
    curvature_faces: Vec<DVector<f64>>,
    w: DVector<f64>,
    w_enh: DVector<f64>,
    kappa: DVector<f64>,
}

impl PairField {
    /// Samples the fields and fills the vertex caches. `λ` must be nonzero
    /// at every barycenter of every cell dimension, since vertical blocks
    /// read it there.
    pub fn sample(
        mesh: Arc<TorusMesh>,
        alg: Arc<LieAlgebra>,
        lambda: VectorField,
        omega: Vec<VectorField>,
    ) -> Result<Self> {
        let n = mesh.dim();
        if omega.len() != n {
            return Err(Error::Config(format!(
                "ω needs {n} components, got {}",
                omega.len()
            )));
        }
        let d = alg.dim();
        let probe = vec![0.0; n];
        if lambda.eval(&probe).len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: lambda.eval(&probe).len(),
            });
        }
        if let Some(bad) = omega.iter().map(|o| o.eval(&probe).len()).find(|&l| l != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad,
            });
        }
        let spacing = mesh.spacing();
        let mut field = Self {
            mesh,
            alg,
            lambda,
            omega,
            spacing,
            lambda_vertices: Vec::new(),
            curvature_faces: Vec::new(),
            w: DVector::zeros(0),
            w_enh: DVector::zeros(0),
            kappa: DVector::zeros(0),
        };
        for k in 0..=n {
            let bad =
                field.mesh.barycenters(k).par_iter().find_first(|x| {
                    field.alg.dual_norm(&field.lambda_at(x)) < DEGENERACY_THRESHOLD
                });
            if let Some(x) = bad {
                return Err(Error::DegenerateLambda { point: x.clone() });
            }
        }
        let verts = field.mesh.barycenters(0);
        field.lambda_vertices = verts.iter().map(|x| field.lambda_at(x)).collect();
        let collect = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| {
            DVector::from_vec(verts.par_iter().map(|x| f(x)).collect())
        };
        field.w = collect(&|x| field.w_at(x));
        field.w_enh = collect(&|x| field.w_enh_at(x));
        field.kappa = collect(&|x| field.kappa_at(x));
        if n == 2 {
            field.curvature_faces = field
                .mesh
                .barycenters(2)
                .par_iter()
                .map(|x| field.omega_curvature(x))
                .collect();
        }
        Ok(field)
    }

    pub fn mesh(&self) -> &Arc<TorusMesh> {
        &self.mesh
    }

    pub fn algebra(&self) -> &Arc<LieAlgebra> {
        &self.alg
    }

    pub fn lambda_field(&self) -> &VectorField {
        &self.lambda
    }

    pub fn omega_fields(&self) -> &[VectorField] {
        &self.omega
    }

    pub fn lambda_at(&self, x: &[f64]) -> DualVector {
        DualVector(self.lambda.eval(x))
    }

    pub fn omega_at(&self, x: &[f64]) -> Vec<DVector<f64>> {
        self.omega.iter().map(|o| o.eval(x)).collect()
    }

    /// `λ` at every k-cell barycenter.
    pub fn lambda_samples(&self, k: usize) -> Vec<DualVector> {
        self.mesh
            .barycenters(k)
            .par_iter()
            .map(|x| self.lambda_at(x))
            .collect()
    }

    pub fn lambda_vertices(&self) -> &[DualVector] {
        &self.lambda_vertices
    }

    /// Central difference of `f` along axis `a` at `x`.
    fn partial(&self, a: usize, x: &[f64], f: impl Fn(&[f64]) -> DVector<f64>) -> DVector<f64> {
        let h = self.spacing[a];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[a] += h;
        xm[a] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    /// `Ω₁₂(x)`; callers guarantee `n = 2`.
    fn omega_curvature(&self, x: &[f64]) -> DVector<f64> {
        let d1w2 = self.partial(0, x, |y| self.omega[1].eval(y));
        let d2w1 = self.partial(1, x, |y| self.omega[0].eval(y));
        let w = self.omega_at(x);
        d1w2 - d2w1 + self.alg.bracket(&w[0], &w[1])
    }

    /// `Ω₁₂ = ∂₁ω₂ − ∂₂ω₁ + [ω₁, ω₂]` at an arbitrary point of `T²`.
    pub fn curvature_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        if self.mesh.dim() != 2 {
            return Err(Error::CurvatureNeedsSurface(self.mesh.dim()));
        }
        Ok(self.omega_curvature(x))
    }

    /// Curvature at every face barycenter.
    pub fn curvature(&self) -> Result<&[DVector<f64>]> {
        if self.mesh.dim() != 2 {
            return Err(Error::CurvatureNeedsSurface(self.mesh.dim()));
        }
        Ok(&self.curvature_faces)
    }

    pub fn w_at(&self, x: &[f64]) -> f64 {
        1.0 + self.alg.dual_norm_sq(&self.lambda_at(x))
    }

    /// Per-axis `∂_a λ + ad*_{ω_a} λ` at `x`.
    pub fn covariant_derivative_at(&self, x: &[f64]) -> Vec<DualVector> {
        let lam = self.lambda_at(x);
        let omega = self.omega_at(x);
        (0..self.mesh.dim())
            .map(|a| {
                let dl = self.partial(a, x, |y| self.lambda.eval(y));
                DualVector(dl + self.alg.coadjoint(&omega[a], &lam).0)
            })
            .collect()
    }

    pub fn cartan_residual_at(&self, x: &[f64]) -> f64 {
        self.covariant_derivative_at(x)
            .iter()
            .map(|r| self.alg.dual_norm_sq(r))
            .sum::<f64>()
            .sqrt()
    }

    pub fn w_enh_at(&self, x: &[f64]) -> f64 {
        self.w_at(x) + self.cartan_residual_at(x).powi(2)
    }

    pub fn kappa_at(&self, x: &[f64]) -> f64 {
        if self.mesh.dim() < 2 {
            return 1.0;
        }
        let omega = self.omega_curvature(x);
        let grad: f64 = (0..2)
            .map(|a| {
                self.alg
                    .norm_sq(&self.partial(a, x, |y| self.omega_curvature(y)))
            })
            .sum();
        1.0 + self.alg.norm_sq(&omega) + grad
    }

    pub fn weight_at(&self, kind: WeightKind, x: &[f64]) -> f64 {
        match kind {
            WeightKind::Constraint => self.w_at(x),
            WeightKind::ConstraintEnhanced => self.w_enh_at(x),
            WeightKind::Curvature => self.kappa_at(x),
        }
    }

    /// Weight at every k-cell barycenter.
    pub fn sample_weight(&self, kind: WeightKind, k: usize) -> Vec<f64> {
        if k == 0 {
            return self.weight(kind).iter().copied().collect();
        }
        self.mesh
            .barycenters(k)
            .par_iter()
            .map(|x| self.weight_at(kind, x))
            .collect()
    }

    pub fn weight(&self, kind: WeightKind) -> &DVector<f64> {
        match kind {
            WeightKind::Constraint => &self.w,
            WeightKind::ConstraintEnhanced => &self.w_enh,
            WeightKind::Curvature => &self.kappa,
        }
    }

    /// Vertex values of `w_λ`.
    pub fn weight_constraint(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn weight_constraint_enhanced(&self) -> &DVector<f64> {
        &self.w_enh
    }

    pub fn weight_curvature(&self) -> &DVector<f64> {
        &self.kappa
    }

    /// `sup ‖λ‖_{g*}` over vertices.
    pub fn constraint_strength(&self) -> f64 {
        self.lambda_vertices
            .iter()
            .map(|l| self.alg.dual_norm(l))
            .fold(0.0, f64::max)
    }

    pub fn cartan_residual(&self) -> CartanResidual {
        let verts = self.mesh.barycenters(0);
        let per_vertex = DVector::from_vec(
            verts
                .par_iter()
                .map(|x| self.cartan_residual_at(x))
                .collect(),
        );
        let area = self.mesh.hodge_star(0);
        let global = per_vertex
            .iter()
            .zip(area.iter())
            .map(|(r, a)| a * r * r)
            .sum::<f64>()
            .sqrt();
        CartanResidual { per_vertex, global }
    }

    /// Transversality diagnostics at `x` for the base covector `ξ`.
    pub fn transversality(&self, x: &[f64], xi: &[f64]) -> Result<Transversality> {
        let n = self.mesh.dim();
        if xi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: xi.len(),
            });
        }
        if xi.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroCovector);
        }
        let lam = self.lambda_at(x);
        let omega = self.omega_at(x);
        Ok(transversality_from(&self.alg, &lam, &omega, xi))
    }

    /// Minimum margin and gap over all vertices and the unit covectors
    /// along each axis and the diagonals.
    pub fn transversality_minimum(&self) -> Transversality {
        let n = self.mesh.dim();
        let mut covectors: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        if n == 2 {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            covectors.push(vec![s, s]);
            covectors.push(vec![s, -s]);
        }
        self.mesh
            .barycenters(0)
            .par_iter()
            .flat_map_iter(|x| {
                let lam = self.lambda_at(x);
                let omega = self.omega_at(x);
                covectors
                    .iter()
                    .map(move |xi| transversality_from(&self.alg, &lam, &omega, xi))
                    .collect::<Vec<_>>()
            })
            .reduce(
                || Transversality {
                    margin: f64::INFINITY,
                    gap: f64::INFINITY,
                },
                |a, b| Transversality {
                    margin: a.margin.min(b.margin),
                    gap: a.gap.min(b.gap),
                },
            )
    }
}

/// Builds the 2 × (n + d) matrix of `Φ_{p,ξ}` on `T_xM ⊕ g`, with `g`
/// in Killing-orthonormal coordinates, and reads off margin and gap.
pub fn transversality_from(
    alg: &LieAlgebra,
    lambda: &DualVector,
    omega: &[DVector<f64>],
    xi: &[f64],
) -> Transversality {
    let n = omega.len();
    let d = alg.dim();
    let g_part = alg.orthonormal_basis().transpose() * &lambda.0;
    let mut phi = DMatrix::zeros(2, n + d);
    for a in 0..n {
        phi[(0, a)] = lambda.pair(&omega[a]);
        phi[(1, a)] = xi[a];
    }
    for i in 0..d {
        phi[(0, n + i)] = g_part[i];
    }
    let sv = singular_values(&phi);
    let margin = sv.get(1).copied().unwrap_or(0.0);
    let gap = friedrichs_gap(&phi.row(0).transpose(), n, d);
    Transversality { margin, gap }
}

/// Gap between `D = ker(row)` and `V = 0 ⊕ R^d` measured by the
/// Friedrichs angle (principal angles equal to zero are discarded).
fn friedrichs_gap(row: &DVector<f64>, n: usize, d: usize) -> f64 {
    let total = n + d;
    if row.rows(n, d).norm() <= DEGENERACY_THRESHOLD {
        // V ⊂ D: the vertical space lies in the distribution.
        return 0.0;
    }
    let unit = row / row.norm();
    let complement = DMatrix::identity(total, total) - &unit * unit.transpose();
    let qd = orthonormalize(&complement);
    let qv = DMatrix::from_fn(total, d, |r, c| if r == n + c { 1.0 } else { 0.0 });
    let cosines = singular_values(&(qd.transpose() * qv));
    let cos = cosines
        .into_iter()
        .find(|&c| c < 1.0 - 1e-10)
        .unwrap_or(0.0);
    (2.0 - 2.0 * cos).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop when the relative objective decrease of an accepted step, or
    /// the gradient norm relative to its initial value, falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            max_iterations: 5000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Fitted covector at every vertex.
    pub lambda: Vec<DualVector>,
    /// Objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Global L² Cartan residual of the fitted vertex field.
    pub cartan_residual: f64,
    /// Largest g*-distance from a fitted covector to its target line.
    pub alignment_distance: f64,
}

impl FitResult {
    pub fn into_field(&self, mesh: &TorusMesh) -> Result<VectorField> {
        let table = GridTable::new(mesh, self.lambda.iter().map(|l| l.0.clone()).collect())?;
        Ok(VectorField::table(table))
    }
}

/// Discretized compatibility functional on the vertex grid,
/// `½ Σ_v |v| Σ_a ‖∂_a Λ + ad*_{ω_a} Λ‖² + α Σ_v |v| dist²(Λ_v, ℝ μ_v)`,
/// with `∂_a` the periodic central difference.
struct FitProblem<'a> {
    alg: &'a LieAlgebra,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    area: f64,
    /// `−ad(ω_a(x_v))ᵀ`, indexed `[v][a]`.
    coad: Vec<Vec<DMatrix<f64>>>,
    /// Target covectors, g*-normalized.
    mu: Vec<DVector<f64>>,
    alpha: f64,
    d: usize,
}

impl FitProblem<'_> {
    fn nv(&self) -> usize {
        self.resolution.iter().product()
    }

    fn shift(&self, v: usize, a: usize, forward: bool) -> usize {
        let n1 = self.resolution[0];
        let (i, j) = (v % n1, v / n1);
        let n = self.resolution[a];
        let step = |t: usize| {
            if forward {
                (t + 1) % n
            } else {
                (t + n - 1) % n
            }
        };
        if a == 0 {
            step(i) + n1 * j
        } else {
            i + n1 * step(j)
        }
    }

    fn block<'b>(&self, x: &'b DVector<f64>, v: usize) -> nalgebra::DVectorView<'b, f64> {
        x.rows(v * self.d, self.d)
    }

    fn residual(&self, x: &DVector<f64>, v: usize, a: usize) -> DVector<f64> {
        let h = self.spacing[a];
        let fwd = self.block(x, self.shift(v, a, true));
        let bwd = self.block(x, self.shift(v, a, false));
        (fwd - bwd) / (2.0 * h) + &self.coad[v][a] * self.block(x, v)
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let gstar = self.alg.dual_metric();
        (0..self.nv())
            .into_par_iter()
            .map(|v| {
                let mut acc = 0.0;
                for a in 0..self.resolution.len() {
                    let r = self.residual(x, v, a);
                    acc += 0.5 * r.dot(&(gstar * &r));
                }
                let lam = self.block(x, v).into_owned();
                acc + self.alpha * self.distance_sq(&lam, v)
            })
            .sum::<f64>()
            * self.area
    }

    fn distance_sq(&self, lam: &DVector<f64>, v: usize) -> f64 {
        let gstar = self.alg.dual_metric();
        let along = lam.dot(&(gstar * &self.mu[v]));
        let r = lam - along * &self.mu[v];
        r.dot(&(gstar * &r))
    }

    /// Gradient in coordinates; the objective is a homogeneous quadratic,
    /// so this is also the Hessian action.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let gstar = self.alg.dual_metric();
        let d = self.d;
        let mut g = DVector::zeros(x.len());
        for v in 0..self.nv() {
            for a in 0..self.resolution.len() {
                let s = gstar * self.residual(x, v, a) * self.area;
                let h2 = 2.0 * self.spacing[a];
                let (f, b) = (self.shift(v, a, true), self.shift(v, a, false));
                g.rows_mut(f * d, d).axpy(1.0 / h2, &s, 1.0);
                g.rows_mut(b * d, d).axpy(-1.0 / h2, &s, 1.0);
                let back = self.coad[v][a].transpose() * &s;
                g.rows_mut(v * d, d).axpy(1.0, &back, 1.0);
            }
            if self.alpha != 0.0 {
                let lam = self.block(x, v).into_owned();
                let gm = gstar * &self.mu[v];
                let proj = gstar * &lam - lam.dot(&gm) * gm;
                g.rows_mut(v * d, d)
                    .axpy(2.0 * self.alpha * self.area, &proj, 1.0);
            }
        }
        g
    }
}

/// Gradient descent on the discretized compatibility functional, starting
/// from `initial` (one covector per vertex). Steps start at `1/L` with `L`
/// a power-iteration estimate of the Hessian norm and are halved until the
/// objective does not increase.
pub fn fit_lambda(
    mesh: &TorusMesh,
    alg: &LieAlgebra,
    omega: &[VectorField],
    target: &VectorField,
    initial: &[DualVector],
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = mesh.dim();
    let d = alg.dim();
    if omega.len() != n {
        return Err(Error::Config(format!(
            "ω needs {n} components, got {}",
            omega.len()
        )));
    }
    if !(opts.alpha >= 0.0) {
        return Err(Error::Config(format!(
            "fit penalty α must be ≥ 0, got {}",
            opts.alpha
        )));
    }
    if initial.len() != mesh.vertex_count() {
        return Err(Error::TableShape {
            expected: mesh.vertex_count(),
            got: initial.len(),
        });
    }
    let verts = mesh.barycenters(0);
    let coad = verts
        .iter()
        .map(|x| {
            omega
                .iter()
                .map(|o| -alg.ad(&o.eval(x)).transpose())
                .collect()
        })
        .collect();
    let mu = verts
        .iter()
        .map(|x| {
            let m = DualVector(target.eval(x));
            let norm = alg.dual_norm(&m);
            if norm < DEGENERACY_THRESHOLD {
                Err(Error::ZeroCovector)
            } else {
                Ok(m.0 / norm)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = FitProblem {
        alg,
        resolution: mesh.resolution().to_vec(),
        spacing: mesh.spacing(),
        area: mesh.hodge_star(0)[0],
        coad,
        mu,
        alpha: opts.alpha,
        d,
    };
    let mut x = DVector::from_iterator(
        initial.len() * d,
        initial.iter().flat_map(|l| l.0.iter().copied()),
    );
    let mut f = problem.objective(&x);
    let mut trace = vec![f];
    let lipschitz =
        power_iteration_max(|v| problem.gradient(v), x.len(), 60, opts.seed).max(f64::MIN_POSITIVE);
    let base_step = 1.0 / lipschitz;
    let g0 = problem.gradient(&x).norm();

    let mut iterations = 0;
    // Objectives at rounding level of the data count as already minimal.
    let negligible = 1e-28 * (1.0 + x.norm_squared() * problem.area);
    let mut converged = f <= negligible || g0 == 0.0;
    while !converged {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                objective: f,
            });
        }
        let grad = problem.gradient(&x);
        if grad.norm() <= opts.tol * g0 {
            break;
        }
        let mut step = base_step;
        let (x_new, f_new) = loop {
            let candidate = &x - step * &grad;
            let fc = problem.objective(&candidate);
            if fc <= f {
                break (candidate, fc);
            }
            step *= 0.5;
            if step < base_step * 1e-12 {
                return Err(Error::StepCollapse {
                    iteration: iterations,
                    step,
                });
            }
        };
        iterations += 1;
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        trace.push(f);
        converged = f <= negligible || decrease <= opts.tol * trace[trace.len() - 2];
    }

    let lambda: Vec<DualVector> = (0..mesh.vertex_count())
        .map(|v| DualVector(x.rows(v * d, d).into_owned()))
        .collect();
    let cartan_residual = (0..mesh.vertex_count())
        .map(|v| {
            (0..n)
                .map(|a| {
                    let r = problem.residual(&x, v, a);
                    r.dot(&(alg.dual_metric() * &r))
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        .mul_add(problem.area, 0.0)
        .sqrt();
    let alignment_distance = (0..mesh.vertex_count())
        .map(|v| problem.distance_sq(&lambda[v].0, v).sqrt())
        .fold(0.0, f64::max);
    Ok(FitResult {
        lambda,
        trace,
        iterations,
        cartan_residual,
        alignment_distance,
    })
}
