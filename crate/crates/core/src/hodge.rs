//! The bigraded Spencer complex on a torus mesh and its Hodge theory.
//!
//! The space in bidegree `(k, j)` is `C^k(mesh) ⊗ Sym^j(g)`, stored
//! cell-major: entry `c · dim Sym^j + α`. The total-degree space `Sⁿ`
//! concatenates the blocks with `k + j = n` in order of increasing `k`.
//! `𝒟ⁿ = D_h + D_v` with `D_h = d_k ⊗ id` and `D_v = (−1)^k id ⊗ δ^λ`,
//! where `δ^λ` is evaluated at each k-cell barycenter and its output in
//! `Sym^{J+1}` is dropped.
//!
//! All mass matrices are diagonal, so `𝒟* = M⁻¹ 𝒟ᵀ M` is explicit and
//! every eigenproblem is symmetrized as `M^{-1/2} K M^{-1/2}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PairField, WeightKind};
use crate::lie::DualVector;
use crate::linalg::{
    conjugate_gradient, dense_symmetric_eigen, refine_low_subspace, power_iteration_max, shift_invert_subspace,
    CsrMatrix, SubspaceOptions,
};
use crate::spencer::{SpencerBasisMaps, SpencerMaps};
use crate::sym::{SymAlgebra, SymInner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    A,
    B,
    #[serde(rename = "mixed")]
    Mixed,
}

/// Which weight field enters the mass matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    /// Blend factor for `mixed`: weight `α w + (1 − α) κ`.
    pub alpha: f64,
    /// Use the localized constraint strength for the `A` part.
    pub enhanced: bool,
}

impl Metric {
    pub fn a() -> Self {
        Self {
            kind: MetricKind::A,
            alpha: 1.0,
            enhanced: false,
        }
    }

    pub fn b() -> Self {
        Self {
            kind: MetricKind::B,
            alpha: 0.0,
            enhanced: false,
        }
    }

    pub fn mixed(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "mixed-metric α must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            kind: MetricKind::Mixed,
            alpha,
            enhanced: false,
        })
    }

    pub fn tag(&self) -> String {
        let base = match self.kind {
            MetricKind::A => "A".to_string(),
            MetricKind::B => "B".to_string(),
            MetricKind::Mixed => format!("mixed({})", self.alpha),
        };
        if self.enhanced && self.kind != MetricKind::B {
            format!("{base}+enhanced")
        } else {
            base
        }
    }

    fn a_kind(&self) -> WeightKind {
        if self.enhanced {
            WeightKind::ConstraintEnhanced
        } else {
            WeightKind::Constraint
        }
    }

    /// Weight at every k-cell barycenter.
    pub fn weights(&self, field: &PairField, k: usize) -> Vec<f64> {
        match self.kind {
            MetricKind::A => field.sample_weight(self.a_kind(), k),
            MetricKind::B => field.sample_weight(WeightKind::Curvature, k),
            MetricKind::Mixed => {
                let a = field.sample_weight(self.a_kind(), k);
                let b = field.sample_weight(WeightKind::Curvature, k);
                a.iter()
                    .zip(&b)
                    .map(|(wa, wb)| self.alpha * wa + (1.0 - self.alpha) * wb)
                    .collect()
            }
        }
    }
}

/// One `(k, j)` summand inside a total-degree space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub k: usize,
    pub j: usize,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct SpencerAssembly {
    field: Arc<PairField>,
    sym: SymAlgebra,
    truncation: usize,
    inner: SymInner,
    metric: Metric,
    grams: Vec<DVector<f64>>,
    blocks: Vec<Vec<Block>>,
    /// `[k][j]`: `d_k ⊗ id` on `Sym^j`, for `k < n`.
    horizontal: Vec<Vec<CsrMatrix>>,
    /// `[k][j]`: `(−1)^k id ⊗ Δ_j`, zero for `j = J`.
    vertical: Vec<Vec<CsrMatrix>>,
    total: Vec<CsrMatrix>,
    masses: Vec<DVector<f64>>,
}

impl SpencerAssembly {
    pub fn assemble(
        field: Arc<PairField>,
        sym: SymAlgebra,
        truncation: usize,
        inner: SymInner,
        metric: Metric,
    ) -> Result<Self> {
        let mesh = field.mesh().clone();
        let alg = field.algebra().clone();
        if sym.d() != alg.dim() {
            return Err(Error::DimensionMismatch {
                expected: alg.dim(),
                got: sym.d(),
            });
        }
        if truncation > sym.cap() {
            return Err(Error::DegreeCapExceeded {
                requested: truncation,
                cap: sym.cap(),
            });
        }
        let dim = mesh.dim();
        let basis_maps = SpencerBasisMaps::build(&alg, &sym, truncation, inner)?;
        let sym_dims: Vec<usize> = (0..=truncation)
            .map(|j| sym.space(j).map(|s| s.dim()))
            .collect::<Result<_>>()?;
        let grams: Vec<DVector<f64>> = (0..=truncation)
            .map(|j| sym.space(j).map(|s| s.gram(inner)))
            .collect::<Result<_>>()?;

        let top = dim + truncation;
        let blocks: Vec<Vec<Block>> = (0..=top)
            .map(|n| {
                let mut offset = 0;
                (0..=dim.min(n))
                    .filter(|&k| n - k <= truncation)
                    .map(|k| {
                        let len = mesh.cell_count(k) * sym_dims[n - k];
                        let b = Block {
                            k,
                            j: n - k,
                            offset,
                            len,
                        };
                        offset += len;
                        b
                    })
                    .collect()
            })
            .collect();

        let horizontal: Vec<Vec<CsrMatrix>> = (0..dim)
            .map(|k| {
                let d = mesh.derivative(k)?;
                Ok(sym_dims.iter().map(|&s| kron_identity(d, s)).collect())
            })
            .collect::<Result<_>>()?;

        let vertical: Vec<Vec<CsrMatrix>> = (0..=dim)
            .map(|k| {
                let lambdas = field.lambda_samples(k);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                (0..=truncation)
                    .map(|j| {
                        let cells = lambdas.len();
                        if j == truncation {
                            let rows = if j < sym.cap() {
                                cells * sym.space(j + 1).map(|s| s.dim()).unwrap_or(0)
                            } else {
                                0
                            };
                            return CsrMatrix::zeros(rows, cells * sym_dims[j]);
                        }
                        cell_block_diagonal(&lambdas, sign, |lam| basis_maps.forward_at(j, lam))
                    })
                    .collect()
            })
            .collect();

        let mut asm = Self {
            field,
            sym,
            truncation,
            inner,
            metric,
            grams,
            blocks,
            horizontal,
            vertical,
            total: Vec::new(),
            masses: Vec::new(),
        };
        asm.total = (0..=top).map(|n| asm.build_total(n)).collect();
        asm.masses = asm.masses_for(&metric)?;
        Ok(asm)
    }

    fn build_total(&self, n: usize) -> CsrMatrix {
        let src = &self.blocks[n];
        let empty = Vec::new();
        let dst = self.blocks.get(n + 1).unwrap_or(&empty);
        let find = |k: usize, j: usize| dst.iter().find(|b| b.k == k && b.j == j);
        let mut triplets = Vec::new();
        for b in src {
            if let Some(t) = find(b.k + 1, b.j) {
                triplets.extend(
                    self.horizontal[b.k][b.j]
                        .triplets()
                        .map(|(r, c, v)| (t.offset + r, b.offset + c, v)),
                );
            }
            if let Some(t) = find(b.k, b.j + 1) {
                triplets.extend(
                    self.vertical[b.k][b.j]
                        .triplets()
                        .map(|(r, c, v)| (t.offset + r, b.offset + c, v)),
                );
            }
        }
        CsrMatrix::from_triplets(self.space_dim(n + 1), self.space_dim(n), triplets)
    }

    /// Diagonal mass matrices of every total degree under `metric`.
    pub fn masses_for(&self, metric: &Metric) -> Result<Vec<DVector<f64>>> {
        let mesh = self.field.mesh();
        let weights: Vec<Vec<f64>> = (0..=mesh.dim())
            .map(|k| metric.weights(&self.field, k))
            .collect();
        for w in weights.iter().flatten() {
            if !(*w > 0.0) {
                return Err(Error::NonPositiveWeight(*w));
            }
        }
        Ok(self
            .blocks
            .iter()
            .map(|blocks| {
                let mut m = DVector::zeros(blocks.iter().map(|b| b.len).sum());
                for b in blocks {
                    let star = mesh.hodge_star(b.k);
                    let gram = &self.grams[b.j];
                    let s = gram.len();
                    for c in 0..mesh.cell_count(b.k) {
                        let cell = weights[b.k][c] * star[c];
                        for a in 0..s {
                            m[b.offset + c * s + a] = cell * gram[a];
                        }
                    }
                }
                m
            })
            .collect())
    }

    pub fn field(&self) -> &Arc<PairField> {
        &self.field
    }

    pub fn sym(&self) -> &SymAlgebra {
        &self.sym
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn inner(&self) -> SymInner {
        self.inner
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Highest total degree `n + J`.
    pub fn top_degree(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self, n: usize) -> &[Block] {
        self.blocks.get(n).map_or(&[], Vec::as_slice)
    }

    pub fn space_dim(&self, n: usize) -> usize {
        self.blocks(n).iter().map(|b| b.len).sum()
    }

    pub fn horizontal(&self, k: usize, j: usize) -> &CsrMatrix {
        &self.horizontal[k][j]
    }

    pub fn vertical(&self, k: usize, j: usize) -> &CsrMatrix {
        &self.vertical[k][j]
    }

    /// `𝒟ⁿ : Sⁿ → Sⁿ⁺¹`.
    pub fn differential(&self, n: usize) -> &CsrMatrix {
        &self.total[n]
    }

    pub fn mass(&self, n: usize) -> &DVector<f64> {
        &self.masses[n]
    }

    pub fn inner_product(&self, n: usize, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.iter()
            .zip(v.iter())
            .zip(self.masses[n].iter())
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    pub fn norm(&self, n: usize, u: &DVector<f64>) -> f64 {
        self.inner_product(n, u, u).max(0.0).sqrt()
    }

    fn check_shape(&self, n: usize, u: &DVector<f64>) -> Result<()> {
        if n > self.top_degree() {
            return Err(Error::DegreeOutOfRange {
                degree: n,
                dim: self.top_degree(),
            });
        }
        let expected = self.space_dim(n);
        if u.len() != expected {
            return Err(Error::ShapeMismatch {
                degree: n,
                expected,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `𝒟ⁿ* = Mₙ⁻¹ (𝒟ⁿ)ᵀ Mₙ₊₁ : Sⁿ⁺¹ → Sⁿ`.
    pub fn adjoint(&self, n: usize) -> CsrMatrix {
        let inv = self.masses[n].map(|m| 1.0 / m);
        let next = self
            .masses
            .get(n + 1)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(0));
        self.total[n].transpose().scale_rows(&inv).scale_cols(&next)
    }

    pub fn apply_adjoint(&self, n: usize, v: &DVector<f64>) -> DVector<f64> {
        let mv = v.component_mul(&self.masses[n + 1]);
        self.total[n].tr_mul_vec(&mv).component_div(&self.masses[n])
    }

    /// Stiffness `Kₙ = 𝒟ⁿᵀ Mₙ₊₁ 𝒟ⁿ + Mₙ 𝒟ⁿ⁻¹ Mₙ₋₁⁻¹ 𝒟ⁿ⁻¹ᵀ Mₙ`, so that
    /// `Δⁿ = Mₙ⁻¹ Kₙ`.
    pub fn stiffness(&self, n: usize) -> CsrMatrix {
        let d = &self.total[n];
        let next = self
            .masses
            .get(n + 1)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(0));
        let mut k = d.transpose().scale_cols(&next).matmul(d);
        if n > 0 {
            let prev = &self.total[n - 1];
            let inv = self.masses[n - 1].map(|m| 1.0 / m);
            let left = prev.scale_rows(&self.masses[n]).scale_cols(&inv);
            let right = prev.transpose().scale_cols(&self.masses[n]);
            k = k.add(&left.matmul(&right));
        }
        k
    }

    /// `Δⁿ u`.
    pub fn laplacian_apply(&self, n: usize, u: &DVector<f64>) -> DVector<f64> {
        let mut out = if n < self.top_degree() {
            self.apply_adjoint(n, &self.total[n].mul_vec(u))
        } else {
            DVector::zeros(u.len())
        };
        if n > 0 {
            out += self.total[n - 1].mul_vec(&self.apply_adjoint(n - 1, u));
        }
        out
    }

    /// Largest entry of `𝒟ⁿ⁺¹ 𝒟ⁿ`, zero for a genuine complex.
    pub fn complex_defect(&self, n: usize) -> f64 {
        if n + 1 >= self.total.len() {
            return 0.0;
        }
        self.total[n + 1].matmul(&self.total[n]).max_abs()
    }

    /// Largest entry of `D_h D_v + D_v D_h` over all bidegrees.
    pub fn anticommutation_residual(&self) -> f64 {
        let dim = self.field.mesh().dim();
        let mut worst: f64 = 0.0;
        for k in 0..dim {
            for j in 0..self.truncation {
                let hv = self.horizontal[k][j + 1].matmul(&self.vertical[k][j]);
                let vh = self.vertical[k + 1][j].matmul(&self.horizontal[k][j]);
                worst = worst.max(hv.add(&vh).max_abs());
            }
        }
        worst
    }
}

/// `A ⊗ I_s` for cell-major storage.
fn kron_identity(a: &CsrMatrix, s: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(
        a.nrows() * s,
        a.ncols() * s,
        a.triplets()
            .flat_map(|(r, c, v)| (0..s).map(move |i| (r * s + i, c * s + i, v))),
    )
}

/// Block diagonal with one dense block per cell.
fn cell_block_diagonal(
    lambdas: &[DualVector],
    sign: f64,
    block: impl Fn(&DualVector) -> DMatrix<f64> + Sync,
) -> CsrMatrix {
    let blocks: Vec<DMatrix<f64>> = lambdas.par_iter().map(&block).collect();
    let (rows, cols) = blocks.first().map_or((0, 0), |b| (b.nrows(), b.ncols()));
    let triplets = blocks.iter().enumerate().flat_map(|(c, b)| {
        (0..rows).flat_map(move |r| {
            (0..cols).map(move |q| (c * rows + r, c * cols + q, sign * b[(r, q)]))
        })
    });
    CsrMatrix::from_triplets(lambdas.len() * rows, lambdas.len() * cols, triplets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSettings {
    /// Kernel tolerance: eigenvalues below `tol · max(1, λ_max)` are zero.
    pub tol: f64,
    /// Largest space dimension handled by the dense solver.
    pub dense_limit: usize,
    /// Eigenpairs requested from the iterative solver.
    pub num_eigenvalues: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dense_limit: 5000,
            num_eigenvalues: 12,
            max_iterations: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeSpectrum {
    pub degree: usize,
    /// `(k, j)` summands of this total degree.
    pub bidegrees: Vec<(usize, usize)>,
    pub space_dimension: usize,
    /// Ascending; the full spectrum for the dense solver, the lowest
    /// `num_eigenvalues` (or more) for the iterative one.
    pub eigenvalues: Vec<f64>,
    pub kernel_dimension: usize,
    pub zero_tolerance: f64,
    pub lambda_max: f64,
    pub solver: String,
    pub self_adjointness_residual: f64,
}

/// Harmonic space of one total degree: columns of `basis` are
/// mass-orthonormal harmonic cochains.
#[derive(Clone, Debug)]
pub struct HarmonicSpace {
    pub degree: usize,
    pub basis: DMatrix<f64>,
    pub spectrum: DegreeSpectrum,
}

impl HarmonicSpace {
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    /// `P_harm u` in the mass inner product.
    pub fn project(&self, mass: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        if self.basis.ncols() == 0 {
            return DVector::zeros(u.len());
        }
        let coeffs = self.basis.tr_mul(&u.component_mul(mass));
        &self.basis * coeffs
    }
}

/// Eigen-decomposition of `Δⁿ` and extraction of its kernel.
pub fn harmonic_space(
    asm: &SpencerAssembly,
    n: usize,
    settings: &EigenSettings,
) -> Result<HarmonicSpace> {
    let dim = asm.space_dim(n);
    let mass = asm.mass(n);
    let sqrt_m = mass.map(f64::sqrt);
    let inv_sqrt_m = sqrt_m.map(|s| 1.0 / s);
    let stiffness = asm.stiffness(n);
    let bidegrees = asm.blocks(n).iter().map(|b| (b.k, b.j)).collect();
    let self_adjointness_residual = self_adjointness(asm, n, settings.seed);

    if dim == 0 {
        return Ok(HarmonicSpace {
            degree: n,
            basis: DMatrix::zeros(0, 0),
            spectrum: DegreeSpectrum {
                degree: n,
                bidegrees,
                space_dimension: 0,
                eigenvalues: Vec::new(),
                kernel_dimension: 0,
                zero_tolerance: settings.tol,
                lambda_max: 0.0,
                solver: "none".into(),
                self_adjointness_residual,
            },
        });
    }

    let (values, vectors, lambda_max, solver) = if dim <= settings.dense_limit {
        let s = stiffness
            .scale_rows(&inv_sqrt_m)
            .scale_cols(&inv_sqrt_m)
            .to_dense();
        let mut eig = dense_symmetric_eigen(&s);
        let lmax = eig.values.last().copied().unwrap_or(0.0);
        let zeros = eig.values.iter().take_while(|&&v| v < settings.tol * lmax.max(1.0)).count();
        if zeros > 0 {
            let approx = eig.vectors.columns(0, zeros).into_owned();
            let extra = zeros.max(4);
            let refined = refine_low_subspace(&s, &approx, 1e-3 * lmax.max(1.0), 5, extra, settings.seed)?;
            eig.vectors.columns_mut(0, zeros).copy_from(&refined.vectors);
            eig.values[..zeros].copy_from_slice(&refined.values);
        }
        (eig.values, eig.vectors, lmax, "dense")
    } else {
        let apply = |y: &DVector<f64>| {
            stiffness
                .mul_vec(&y.component_mul(&inv_sqrt_m))
                .component_mul(&inv_sqrt_m)
        };
        let lmax = power_iteration_max(apply, dim, 200, settings.seed) * 1.01;
        let tol_abs = settings.tol * lmax.max(1.0);
        let mut nev = settings.num_eigenvalues.max(1);
        loop {
            let opts = SubspaceOptions {
                nev: nev.min(dim),
                shift: 1e-3 * lmax.max(1.0),
                max_iterations: settings.max_iterations,
                tol: settings.tol,
                scale: lmax,
                seed: settings.seed,
            };
            let eig = shift_invert_subspace(&apply, dim, &opts)?;
            let zeros = eig.values.iter().filter(|&&v| v < tol_abs).count();
            // A kernel filling the whole window may extend past it.
            if zeros < eig.values.len() || nev >= dim {
                break (eig.values, eig.vectors, lmax, "shift-invert");
            }
            nev *= 2;
        }
    };
    let zero_tolerance = settings.tol * lambda_max.max(1.0);
    let kernel: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] < zero_tolerance)
        .collect();
    let mut basis = DMatrix::zeros(dim, kernel.len());
    for (col, &i) in kernel.iter().enumerate() {
        basis.set_column(col, &vectors.column(i).component_mul(&inv_sqrt_m));
    }
    Ok(HarmonicSpace {
        degree: n,
        basis,
        spectrum: DegreeSpectrum {
            degree: n,
            bidegrees,
            space_dimension: dim,
            eigenvalues: values,
            kernel_dimension: kernel.len(),
            zero_tolerance,
            lambda_max,
            solver: solver.into(),
            self_adjointness_residual,
        },
    })
}

/// Worst `|⟨Δu,v⟩_M − ⟨u,Δv⟩_M| / (‖Δu‖‖v‖ + ‖u‖‖Δv‖)` over a few random pairs.
pub fn self_adjointness(asm: &SpencerAssembly, n: usize, seed: u64) -> f64 {
    let dim = asm.space_dim(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_0000 ^ n as u64);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let u = random_vector(&mut rng, dim);
        let v = random_vector(&mut rng, dim);
        let (lu, lv) = (asm.laplacian_apply(n, &u), asm.laplacian_apply(n, &v));
        let scale = asm.norm(n, &lu) * asm.norm(n, &v) + asm.norm(n, &u) * asm.norm(n, &lv);
        if scale > 0.0 {
            worst = worst
                .max((asm.inner_product(n, &lu, &v) - asm.inner_product(n, &u, &lv)).abs() / scale);
        }
    }
    worst
}

pub fn random_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))
}

#[derive(Clone, Debug)]
pub struct HodgeDecomposition {
    pub harmonic: DVector<f64>,
    /// `𝒟ⁿ⁻¹ a`.
    pub exact: DVector<f64>,
    /// `𝒟ⁿ* b`.
    pub coexact: DVector<f64>,
    pub potential: Option<DVector<f64>>,
    pub copotential: Option<DVector<f64>>,
    pub residuals: DecompositionResiduals,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResiduals {
    /// `‖u − (h + 𝒟a + 𝒟*b)‖ / ‖u‖`.
    pub reconstruction: f64,
    /// `|⟨·,·⟩| / ‖u‖²` for each pair.
    pub harmonic_exact: f64,
    pub harmonic_coexact: f64,
    pub exact_coexact: f64,
}

impl DecompositionResiduals {
    pub fn max_orthogonality(&self) -> f64 {
        self.harmonic_exact
            .max(self.harmonic_coexact)
            .max(self.exact_coexact)
    }
}

const SOLVE_TOL: f64 = 1e-12;

/// Whether `rhs = A x` is indistinguishable from rounding noise, judged
/// against the entrywise bound `‖ |A| |x| ‖`.
fn is_rounding_noise(rhs: &DVector<f64>, a: &CsrMatrix, x: &DVector<f64>, transpose: bool) -> bool {
    let abs_x = x.abs();
    let bound = if transpose {
        a.abs().tr_mul_vec(&abs_x)
    } else {
        a.abs().mul_vec(&abs_x)
    };
    rhs.norm() <= 1e-13 * bound.norm()
}

fn solve_budget(n: usize) -> usize {
    20 * n + 2000
}

/// `u = h + 𝒟ⁿ⁻¹a + 𝒟ⁿ*b`. The exact and coexact parts come from two
/// independent least-squares problems, so the reconstruction residual is a
/// genuine check of the decomposition.
pub fn hodge_decompose(
    asm: &SpencerAssembly,
    harmonic: &HarmonicSpace,
    u: &DVector<f64>,
) -> Result<HodgeDecomposition> {
    let n = harmonic.degree;
    asm.check_shape(n, u)?;
    let mass = asm.mass(n);
    let h = harmonic.project(mass, u);
    let r = u - &h;

    let (exact, potential) = if n > 0 {
        // min ‖r − G a‖_M  ⇔  Gᵀ M G a = Gᵀ M r.
        let g = asm.differential(n - 1);
        let mr = r.component_mul(mass);
        let rhs = g.tr_mul_vec(&mr);
        if is_rounding_noise(&rhs, g, &mr, true) {
            (DVector::zeros(u.len()), Some(DVector::zeros(rhs.len())))
        } else {
            let sol = conjugate_gradient(
                |a| g.tr_mul_vec(&g.mul_vec(a).component_mul(mass)),
                &rhs,
                SOLVE_TOL,
                solve_budget(rhs.len()),
                None,
            )?;
            (g.mul_vec(&sol.x), Some(sol.x))
        }
    } else {
        (DVector::zeros(u.len()), None)
    };

    let (coexact, copotential) = if n < asm.top_degree() && asm.space_dim(n + 1) > 0 {
        // 𝒟*b = M⁻¹𝒟ᵀc with c = M_{n+1} b; min ‖r − M⁻¹𝒟ᵀc‖_M ⇔ 𝒟M⁻¹𝒟ᵀc = 𝒟r.
        let d = asm.differential(n);
        let rhs = d.mul_vec(&r);
        if is_rounding_noise(&rhs, d, &r, false) {
            (DVector::zeros(u.len()), Some(DVector::zeros(rhs.len())))
        } else {
            let sol = conjugate_gradient(
                |c| d.mul_vec(&d.tr_mul_vec(c).component_div(mass)),
                &rhs,
                SOLVE_TOL,
                solve_budget(rhs.len()),
                None,
            )?;
            let coexact = d.tr_mul_vec(&sol.x).component_div(mass);
            (coexact, Some(sol.x.component_div(asm.mass(n + 1))))
        }
    } else {
        (DVector::zeros(u.len()), None)
    };

    let unorm2 = asm.inner_product(n, u, u).max(f64::MIN_POSITIVE);
    let rec = u - &h - &exact - &coexact;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| asm.inner_product(n, a, b).abs() / unorm2;
    let residuals = DecompositionResiduals {
        reconstruction: asm.norm(n, &rec) / unorm2.sqrt(),
        harmonic_exact: ip(&h, &exact),
        harmonic_coexact: ip(&h, &coexact),
        exact_coexact: ip(&exact, &coexact),
    };
    Ok(HodgeDecomposition {
        harmonic: h,
        exact,
        coexact,
        potential,
        copotential,
        residuals,
    })
}

#[derive(Clone, Debug)]
pub struct GreenSolution {
    pub value: DVector<f64>,
    /// `‖Δv − (u − P u)‖ / ‖u‖`.
    pub residual: f64,
}

/// `𝒢u`: the solution of `Δv = u − P_harm u` orthogonal to the harmonics.
pub fn green_apply(
    asm: &SpencerAssembly,
    harmonic: &HarmonicSpace,
    u: &DVector<f64>,
) -> Result<GreenSolution> {
    let n = harmonic.degree;
    asm.check_shape(n, u)?;
    let mass = asm.mass(n);
    let sqrt_m = mass.map(f64::sqrt);
    let target = u - harmonic.project(mass, u);
    // Symmetrized unknown y = M^{1/2} v and harmonic basis M^{1/2} B.
    let ybasis = DMatrix::from_fn(harmonic.basis.nrows(), harmonic.basis.ncols(), |r, c| {
        harmonic.basis[(r, c)] * sqrt_m[r]
    });
    let project = |y: &mut DVector<f64>| {
        if ybasis.ncols() > 0 {
            let coeffs = ybasis.tr_mul(y);
            *y -= &ybasis * coeffs;
        }
    };
    let apply = |y: &DVector<f64>| {
        asm.laplacian_apply(n, &y.component_div(&sqrt_m))
            .component_mul(&sqrt_m)
    };
    let rhs = target.component_mul(&sqrt_m);
    let sol = conjugate_gradient(
        apply,
        &rhs,
        SOLVE_TOL,
        solve_budget(rhs.len()),
        Some(&project),
    )?;
    let mut y = sol.x;
    project(&mut y);
    let value = y.component_div(&sqrt_m);
    let unorm = asm.norm(n, u).max(f64::MIN_POSITIVE);
    let residual = asm.norm(n, &(asm.laplacian_apply(n, &value) - &target)) / unorm;
    Ok(GreenSolution { value, residual })
}

/// Constants relating the `A` and `B` norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEquivalence {
    pub inf_w: f64,
    pub sup_w: f64,
    pub inf_kappa: f64,
    pub sup_kappa: f64,
    /// `inf w / sup κ`.
    pub c1: f64,
    /// `sup w / inf κ`.
    pub c2: f64,
    /// `inf κ / sup w`: lower bound of `‖u‖²_B / ‖u‖²_A`.
    pub b_over_a_lower: f64,
    /// `sup κ / inf w`: upper bound of `‖u‖²_B / ‖u‖²_A`.
    pub b_over_a_upper: f64,
}

impl MetricEquivalence {
    /// Extrema over every barycenter the mass matrices sample.
    pub fn from_field(field: &PairField, enhanced: bool) -> Self {
        let a = if enhanced {
            WeightKind::ConstraintEnhanced
        } else {
            WeightKind::Constraint
        };
        let extrema = |kind: WeightKind| {
            (0..=field.mesh().dim())
                .flat_map(|k| field.sample_weight(kind, k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (inf_w, sup_w) = extrema(a);
        let (inf_kappa, sup_kappa) = extrema(WeightKind::Curvature);
        Self {
            inf_w,
            sup_w,
            inf_kappa,
            sup_kappa,
            c1: inf_w / sup_kappa,
            c2: sup_w / inf_kappa,
            b_over_a_lower: inf_kappa / sup_w,
            b_over_a_upper: sup_kappa / inf_w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub samples: usize,
    /// Extremes of `‖u‖²_B / ‖u‖²_A` over the samples.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `b_over_a_lower ‖u‖²_A ≤ ‖u‖²_B ≤ b_over_a_upper ‖u‖²_A` held.
    pub holds: bool,
    /// `c1 ‖u‖²_B ≤ ‖u‖²_A ≤ c2 ‖u‖²_B` held.
    pub holds_with_c: bool,
}

/// Random-cochain check of the norm sandwich across all total degrees.
pub fn sandwich_check(
    asm: &SpencerAssembly,
    eq: &MetricEquivalence,
    samples: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let enhanced = asm.metric().enhanced;
    let ma = asm.masses_for(&Metric {
        enhanced,
        ..Metric::a()
    })?;
    let mb = asm.masses_for(&Metric::b())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = 1e-12;
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut holds, mut holds_with_c) = (true, true);
    let degrees: Vec<usize> = (0..=asm.top_degree())
        .filter(|&n| asm.space_dim(n) > 0)
        .collect();
    for s in 0..samples {
        let n = degrees[s % degrees.len()];
        let u = random_vector(&mut rng, asm.space_dim(n));
        let na: f64 = u.iter().zip(ma[n].iter()).map(|(x, m)| x * x * m).sum();
        let nb: f64 = u.iter().zip(mb[n].iter()).map(|(x, m)| x * x * m).sum();
        min_ratio = min_ratio.min(nb / na);
        max_ratio = max_ratio.max(nb / na);
        holds &= eq.b_over_a_lower * na <= nb * (1.0 + slack)
            && nb <= eq.b_over_a_upper * na * (1.0 + slack);
        holds_with_c &= eq.c1 * nb <= na * (1.0 + slack) && na <= eq.c2 * nb * (1.0 + slack);
    }
    Ok(SandwichReport {
        samples,
        min_ratio,
        max_ratio,
        holds,
        holds_with_c,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticConstants {
    pub c_a: f64,
    pub c_b: f64,
    pub gap_min: f64,
    /// First nonzero eigenvalue of the unit-weight 0-form Laplacian.
    pub lambda1_dd: f64,
    /// Minimum over vertices of the first nonzero eigenvalue of `Δ₁*Δ₁`.
    pub lambda1_delta: Option<f64>,
}

/// First nonzero eigenvalue of `⋆₀⁻¹ d₀ᵀ ⋆₁ d₀` on a uniform periodic grid:
/// the Fourier modes give `Σ_a (2/h_a)² sin²(π m_a / N_a)`.
pub fn first_nonzero_scalar_eigenvalue(mesh: &crate::mesh::TorusMesh) -> f64 {
    mesh.resolution()
        .iter()
        .zip(mesh.spacing())
        .map(|(&n, h)| (2.0 / h * (std::f64::consts::PI / n as f64).sin()).powi(2))
        .fold(f64::INFINITY, f64::min)
}

/// `C = inf(weight) · gap · min{λ₁(d*d), λ₁(Δ₁*Δ₁)}` for both metrics.
pub fn elliptic_constant_estimate(
    asm: &SpencerAssembly,
    eq: &MetricEquivalence,
) -> Result<EllipticConstants> {
    let field = asm.field();
    let alg = field.algebra();
    let gap_min = field.transversality_minimum().gap;
    let lambda1_dd = first_nonzero_scalar_eigenvalue(field.mesh());
    let sym = SymAlgebra::new(alg.dim(), 2)?;
    let basis = SpencerBasisMaps::build(alg, &sym, 2, asm.inner())?;
    let lambda1_delta = field
        .lambda_vertices()
        .par_iter()
        .map(|l| basis.at(&sym, l).first_nonzero_eigenvalue(1))
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, None) => x,
                (None, y) => y,
            },
        );
    let spectral = lambda1_delta.map_or(lambda1_dd, |v| v.min(lambda1_dd));
    Ok(EllipticConstants {
        c_a: eq.inf_w * gap_min * spectral,
        c_b: eq.inf_kappa * gap_min * spectral,
        gap_min,
        lambda1_dd,
        lambda1_delta,
    })
}

/// `‖Δ_{j+1}Δ_j‖` maximized over vertex samples of `λ`.
pub fn nilpotency_residuals(asm: &SpencerAssembly) -> Result<Vec<f64>> {
    let field = asm.field();
    if asm.truncation() < 2 {
        return Ok(Vec::new());
    }
    let residuals: Vec<Vec<f64>> = field
        .lambda_vertices()
        .par_iter()
        .map(|l| {
            SpencerMaps::build(field.algebra(), asm.sym(), l, asm.truncation(), asm.inner())
                .map(|m| m.nilpotency_residuals())
        })
        .collect::<Result<_>>()?;
    Ok((0..asm.truncation() - 1)
        .map(|j| residuals.iter().map(|r| r[j]).fold(0.0, f64::max))
        .collect())
}
