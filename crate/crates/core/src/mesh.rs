//! Periodic structured grids on flat tori `T¹` and `T²` with lowest-order
//! discrete exterior calculus: signed incidence matrices as exterior
//! derivatives and diagonal (lumped) Hodge-star mass matrices.
//!
//! Cell numbering on `T²` with `N₁ × N₂` cells, `(i, j)` the lower-left
//! vertex:
//! - vertex `(i, j)` → `i + N₁ j`
//! - x-edge `(i, j) → (i+1, j)` → `i + N₁ j`
//! - y-edge `(i, j) → (i, j+1)` → `N₁N₂ + i + N₁ j`
//! - face with lower-left `(i, j)` → `i + N₁ j`, oriented counterclockwise.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub const MIN_RESOLUTION: usize = 3;

#[derive(Clone, Debug)]
pub struct TorusMesh {
    resolution: Vec<usize>,
    sides: Vec<f64>,
    /// `incidence[k]` maps k-cochains to (k+1)-cochains, entries in {−1, 0, 1}.
    incidence: Vec<Vec<Vec<(usize, i8)>>>,
    derivatives: Vec<CsrMatrix>,
    barycenters: Vec<Vec<Vec<f64>>>,
    stars: Vec<DVector<f64>>,
}

/// Geometry parameters as they appear in run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub dim: usize,
    pub resolution: Vec<usize>,
    /// Side lengths; `2π` on every axis when absent.
    pub side: Option<Vec<f64>>,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            resolution: vec![16, 16],
            side: None,
        }
    }
}

impl MeshSpec {
    pub fn build(&self) -> Result<TorusMesh> {
        let sides = self
            .side
            .clone()
            .unwrap_or_else(|| vec![2.0 * PI; self.dim]);
        TorusMesh::new(self.dim, &self.resolution, &sides)
    }
}

impl TorusMesh {
    pub fn new(dim: usize, resolution: &[usize], sides: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if resolution.len() != dim || sides.len() != dim {
            return Err(Error::Config(format!(
                "mesh of dimension {dim} needs {dim} resolutions and side lengths"
            )));
        }
        if let Some(&n) = resolution.iter().find(|&&n| n < MIN_RESOLUTION) {
            return Err(Error::ResolutionTooSmall(n));
        }
        if sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("side lengths must be positive".into()));
        }
        let mut mesh = Self {
            resolution: resolution.to_vec(),
            sides: sides.to_vec(),
            incidence: Vec::new(),
            derivatives: Vec::new(),
            barycenters: Vec::new(),
            stars: Vec::new(),
        };
        match dim {
            1 => mesh.build_circle(),
            _ => mesh.build_torus(),
        }
        mesh.derivatives = mesh
            .incidence
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                let ncols = mesh.cell_count(k);
                CsrMatrix::from_triplets(
                    rows.len(),
                    ncols,
                    rows.iter()
                        .enumerate()
                        .flat_map(|(r, row)| row.iter().map(move |&(c, s)| (r, c, s as f64))),
                )
            })
            .collect();
        Ok(mesh)
    }

    /// Uniform torus with side `2π` on every axis.
    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, &vec![n; dim], &vec![2.0 * PI; dim])
    }

    fn build_circle(&mut self) {
        let n = self.resolution[0];
        let h = self.sides[0] / n as f64;
        let d0 = (0..n).map(|e| vec![(e, -1), ((e + 1) % n, 1)]).collect();
        self.incidence = vec![d0];
        self.barycenters = vec![
            (0..n).map(|i| vec![i as f64 * h]).collect(),
            (0..n).map(|i| vec![(i as f64 + 0.5) * h]).collect(),
        ];
        self.stars = vec![
            DVector::from_element(n, h),
            DVector::from_element(n, 1.0 / h),
        ];
    }

    fn build_torus(&mut self) {
        let (n1, n2) = (self.resolution[0], self.resolution[1]);
        let (h1, h2) = (self.sides[0] / n1 as f64, self.sides[1] / n2 as f64);
        let v = |i: usize, j: usize| (i % n1) + n1 * (j % n2);
        let ex = |i: usize, j: usize| (i % n1) + n1 * (j % n2);
        let ey = |i: usize, j: usize| n1 * n2 + (i % n1) + n1 * (j % n2);
        let nv = n1 * n2;

        let mut d0 = vec![Vec::new(); 2 * nv];
        let mut d1 = vec![Vec::new(); nv];
        let mut bary_v = vec![Vec::new(); nv];
        let mut bary_e = vec![Vec::new(); 2 * nv];
        let mut bary_f = vec![Vec::new(); nv];
        for j in 0..n2 {
            for i in 0..n1 {
                let (x, y) = (i as f64 * h1, j as f64 * h2);
                bary_v[v(i, j)] = vec![x, y];
                bary_e[ex(i, j)] = vec![x + 0.5 * h1, y];
                bary_e[ey(i, j)] = vec![x, y + 0.5 * h2];
                bary_f[v(i, j)] = vec![x + 0.5 * h1, y + 0.5 * h2];
                d0[ex(i, j)] = vec![(v(i, j), -1), (v(i + 1, j), 1)];
                d0[ey(i, j)] = vec![(v(i, j), -1), (v(i, j + 1), 1)];
                d1[v(i, j)] = vec![
                    (ex(i, j), 1),
                    (ey(i + 1, j), 1),
                    (ex(i, j + 1), -1),
                    (ey(i, j), -1),
                ];
            }
        }
        self.incidence = vec![d0, d1];
        self.barycenters = vec![bary_v, bary_e, bary_f];
        let mut star1 = DVector::zeros(2 * nv);
        for idx in 0..nv {
            star1[idx] = h2 / h1;
            star1[nv + idx] = h1 / h2;
        }
        self.stars = vec![
            DVector::from_element(nv, h1 * h2),
            star1,
            DVector::from_element(nv, 1.0 / (h1 * h2)),
        ];
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.sides
            .iter()
            .zip(&self.resolution)
            .map(|(l, &n)| l / n as f64)
            .collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_count(&self, k: usize) -> usize {
        self.barycenters.get(k).map_or(0, Vec::len)
    }

    /// Barycenter coordinates of every k-cell.
    pub fn barycenters(&self, k: usize) -> &[Vec<f64>] {
        &self.barycenters[k]
    }

    /// Diagonal lumped Hodge star for k-cochains: dual-cell volume over
    /// primal-cell volume (`h₁h₂` for vertices, `h⊥/h∥` for edges,
    /// `1/(h₁h₂)` for faces on `T²`).
    pub fn hodge_star(&self, k: usize) -> &DVector<f64> {
        &self.stars[k]
    }

    /// Signed incidence rows of the k-th exterior derivative.
    pub fn incidence(&self, k: usize) -> Result<&[Vec<(usize, i8)>]> {
        self.incidence
            .get(k)
            .map(Vec::as_slice)
            .ok_or(Error::DegreeOutOfRange {
                degree: k,
                dim: self.dim(),
            })
    }

    /// `d_k` as a sparse matrix, `k < n`.
    pub fn derivative(&self, k: usize) -> Result<&CsrMatrix> {
        self.derivatives.get(k).ok_or(Error::DegreeOutOfRange {
            degree: k,
            dim: self.dim(),
        })
    }

    pub fn exterior_derivative(&self, u: &Cochain) -> Result<Cochain> {
        let d = self.derivative(u.degree)?;
        if u.values.len() != d.ncols() {
            return Err(Error::ShapeMismatch {
                degree: u.degree,
                expected: d.ncols(),
                got: u.values.len(),
            });
        }
        Ok(Cochain {
            degree: u.degree + 1,
            values: d.mul_vec(&u.values),
        })
    }

    /// `d_{k+1} d_k` computed in integer arithmetic; returns the largest
    /// absolute entry (zero on a valid mesh).
    pub fn dd_defect(&self) -> i64 {
        if self.dim() < 2 {
            return 0;
        }
        let (d0, d1) = (&self.incidence[0], &self.incidence[1]);
        let nv = self.cell_count(0);
        let mut worst = 0i64;
        for row in d1 {
            let mut acc = vec![0i64; nv];
            for &(e, s) in row {
                for &(v, t) in &d0[e] {
                    acc[v] += s as i64 * t as i64;
                }
            }
            worst = worst.max(acc.iter().map(|a| a.abs()).max().unwrap_or(0));
        }
        worst
    }

    /// Lumped mass matrix `diag(weight(bary_c) · ⋆_k[c])`.
    pub fn mass_matrix(&self, k: usize, weight: impl Fn(&[f64]) -> f64) -> Result<MassMatrix> {
        let samples: Vec<f64> = self.barycenters(k).iter().map(|x| weight(x)).collect();
        self.mass_matrix_from_samples(k, &samples)
    }

    pub fn mass_matrix_from_samples(&self, k: usize, weights: &[f64]) -> Result<MassMatrix> {
        if k > self.dim() {
            return Err(Error::DegreeOutOfRange {
                degree: k,
                dim: self.dim(),
            });
        }
        if weights.len() != self.cell_count(k) {
            return Err(Error::ShapeMismatch {
                degree: k,
                expected: self.cell_count(k),
                got: weights.len(),
            });
        }
        if let Some(&w) = weights.iter().find(|&&w| !(w > 0.0)) {
            return Err(Error::NonPositiveWeight(w));
        }
        let star = &self.stars[k];
        Ok(MassMatrix {
            degree: k,
            diagonal: DVector::from_iterator(
                weights.len(),
                weights.iter().zip(star.iter()).map(|(w, s)| w * s),
            ),
        })
    }

    /// Betti numbers of the torus, the expected harmonic dimensions of the
    /// unweighted de Rham complex.
    pub fn betti_reference(&self) -> Vec<usize> {
        match self.dim() {
            1 => vec![1, 1],
            _ => vec![1, 2, 1],
        }
    }

    pub fn zero_cochain(&self, k: usize) -> Cochain {
        Cochain {
            degree: k,
            values: DVector::zeros(self.cell_count(k)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub degree: usize,
    pub values: DVector<f64>,
}

impl Cochain {
    pub fn new(mesh: &TorusMesh, degree: usize, values: DVector<f64>) -> Result<Self> {
        let expected = mesh.cell_count(degree);
        if degree > mesh.dim() || values.len() != expected {
            return Err(Error::ShapeMismatch {
                degree,
                expected,
                got: values.len(),
            });
        }
        Ok(Self { degree, values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub degree: usize,
    pub diagonal: DVector<f64>,
}

impl MassMatrix {
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .zip(self.diagonal.iter())
            .map(|((x, y), m)| x * y * m)
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.diagonal.min()
    }
}
