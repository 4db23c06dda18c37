//! The constraint-induced Spencer operator `δ^λ` on `Sym(g)`.
//!
//! On generators, `δ^λ(v)` is the symmetric bilinear form
//! `(w₁, w₂) ↦ ½(⟨λ,[w₁,[w₂,v]]⟩ + ⟨λ,[w₂,[w₁,v]]⟩)`. Higher degrees follow
//! the graded Leibniz rule `δ(s₁⊙s₂) = δ(s₁)⊙s₂ + (−1)^p s₁⊙δ(s₂)`, applied
//! to sorted monomials by peeling off the leading factor. Since `Sym(g)` is
//! commutative, this rule only closes consistently when the concatenation
//! `s₁ s₂` is already sorted; the sorted-monomial expansion is the
//! definition used throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{DualVector, LieAlgebra};
use crate::linalg::{dense_symmetric_eigen, singular_values};
use crate::sym::{SymAlgebra, SymInner, SymTensor};

/// Value of the generator rule on test vectors `(w₁, w₂)`.
pub fn generator_value(
    alg: &LieAlgebra,
    lambda: &DualVector,
    v: &DVector<f64>,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> f64 {
    let a = lambda.pair(&alg.bracket(w1, &alg.bracket(w2, v)));
    let b = lambda.pair(&alg.bracket(w2, &alg.bracket(w1, v)));
    0.5 * (a + b)
}

/// The equivalent expression `⟨λ,[w₂,[w₁,v]]⟩ + ½⟨λ,[[w₁,w₂],v]⟩`.
pub fn symbolic_value(
    alg: &LieAlgebra,
    lambda: &DualVector,
    v: &DVector<f64>,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
) -> f64 {
    lambda.pair(&alg.bracket(w2, &alg.bracket(w1, v)))
        + 0.5 * lambda.pair(&alg.bracket(&alg.bracket(w1, w2), v))
}

/// `δ^λ(v) ∈ Sym²(g)` in monomial coefficients: the diagonal coefficient
/// on `(a,a)` is the form value on `(e_a, e_a)`, the off-diagonal one on
/// `(a,b)` is twice the form value on `(e_a, e_b)`.
pub fn delta_on_generator(
    alg: &LieAlgebra,
    sym: &SymAlgebra,
    lambda: &DualVector,
    v: &DVector<f64>,
) -> Result<SymTensor> {
    let space = sym.space(2)?.clone();
    let coeffs = DVector::from_iterator(
        space.dim(),
        space.basis().iter().map(|alpha| {
            let (a, b) = (alpha[0], alpha[1]);
            let value = generator_value(alg, lambda, v, &alg.basis(a), &alg.basis(b));
            if a == b {
                value
            } else {
                2.0 * value
            }
        }),
    );
    Ok(SymTensor::new(space, coeffs))
}

/// Max |rule A − equivalent expression| over all basis triples.
pub fn check_symbolic_equivalence(alg: &LieAlgebra, lambda: &DualVector) -> f64 {
    let d = alg.dim();
    let mut worst = 0.0f64;
    for v in 0..d {
        for w1 in 0..d {
            for w2 in 0..d {
                let (ev, e1, e2) = (alg.basis(v), alg.basis(w1), alg.basis(w2));
                let diff = generator_value(alg, lambda, &ev, &e1, &e2)
                    - symbolic_value(alg, lambda, &ev, &e1, &e2);
                worst = worst.max(diff.abs());
            }
        }
    }
    worst
}

/// Matrices of `δ^λ: Sym^j → Sym^{j+1}` for `j = 0..J`, plus adjoints.
#[derive(Clone, Debug)]
pub struct SpencerMaps {
    lambda: DualVector,
    inner: SymInner,
    /// `forward[j]` has shape `dim Sym^{j+1} × dim Sym^j`.
    forward: Vec<DMatrix<f64>>,
    adjoint: Vec<DMatrix<f64>>,
    grams: Vec<DVector<f64>>,
}

impl SpencerMaps {
    /// Builds `Δ_0 … Δ_{J−1}`. Requires `sym.cap() ≥ J`.
    pub fn build(
        alg: &LieAlgebra,
        sym: &SymAlgebra,
        lambda: &DualVector,
        truncation: usize,
        inner: SymInner,
    ) -> Result<Self> {
        if lambda.dim() != alg.dim() {
            return Err(Error::DimensionMismatch {
                expected: alg.dim(),
                got: lambda.dim(),
            });
        }
        if truncation > sym.cap() {
            return Err(Error::DegreeCapExceeded {
                requested: truncation,
                cap: sym.cap(),
            });
        }
        let d = alg.dim();
        let mut forward: Vec<DMatrix<f64>> = Vec::with_capacity(truncation);
        // Images of generators, reused by every Leibniz step.
        let generator_images: Vec<SymTensor> = if truncation >= 2 {
            (0..d)
                .map(|i| delta_on_generator(alg, sym, lambda, &alg.basis(i)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        for j in 0..truncation {
            let src = sym.space(j)?;
            let dst = sym.space(j + 1)?;
            let mut m = DMatrix::zeros(dst.dim(), src.dim());
            if j >= 1 {
                for (col, alpha) in src.basis().iter().enumerate() {
                    let head = alpha[0];
                    let rest = &alpha[1..];
                    // δ(e_head ⊙ e_rest) = δ(e_head) ⊙ e_rest − e_head ⊙ δ(e_rest)
                    let rest_mono = sym.monomial(rest)?;
                    let mut image = sym.product(&generator_images[head], &rest_mono)?.coeffs;
                    if j >= 2 {
                        let rest_idx = sym.space(j - 1)?.index_of(rest).expect("rest in basis");
                        let delta_rest = SymTensor::new(
                            sym.space(j)?.clone(),
                            forward[j - 1].column(rest_idx).into_owned(),
                        );
                        image -= sym.product(&sym.monomial(&[head])?, &delta_rest)?.coeffs;
                    }
                    m.set_column(col, &image);
                }
            }
            forward.push(m);
        }
        Ok(Self::from_forward(lambda.clone(), sym, forward, inner))
    }

    fn from_forward(
        lambda: DualVector,
        sym: &SymAlgebra,
        forward: Vec<DMatrix<f64>>,
        inner: SymInner,
    ) -> Self {
        let grams: Vec<DVector<f64>> = (0..=forward.len())
            .map(|j| sym.space(j).expect("degree within cap").gram(inner))
            .collect();
        let adjoint = forward
            .iter()
            .enumerate()
            .map(|(j, m)| adjoint_matrix(m, &grams[j], &grams[j + 1]))
            .collect();
        Self {
            lambda,
            inner,
            forward,
            adjoint,
            grams,
        }
    }

    /// Linear combination `Σ c_i maps_i` of maps built for the same shape.
    pub(crate) fn combine(
        lambda: DualVector,
        sym: &SymAlgebra,
        parts: &[SpencerMaps],
        inner: SymInner,
    ) -> Self {
        let truncation = parts.first().map_or(0, |p| p.forward.len());
        let forward = (0..truncation)
            .map(|j| {
                let mut acc =
                    DMatrix::zeros(parts[0].forward[j].nrows(), parts[0].forward[j].ncols());
                for (i, p) in parts.iter().enumerate() {
                    if lambda.0[i] != 0.0 {
                        acc += &p.forward[j] * lambda.0[i];
                    }
                }
                acc
            })
            .collect();
        Self::from_forward(lambda, sym, forward, inner)
    }

    pub fn lambda(&self) -> &DualVector {
        &self.lambda
    }

    pub fn truncation(&self) -> usize {
        self.forward.len()
    }

    pub fn inner(&self) -> SymInner {
        self.inner
    }

    /// `Δ_j : Sym^j → Sym^{j+1}`.
    pub fn forward(&self, j: usize) -> &DMatrix<f64> {
        &self.forward[j]
    }

    /// `Δ*_j : Sym^{j+1} → Sym^j`.
    pub fn adjoint(&self, j: usize) -> &DMatrix<f64> {
        &self.adjoint[j]
    }

    pub fn gram(&self, j: usize) -> &DVector<f64> {
        &self.grams[j]
    }

    /// `‖Δ_{j+1} Δ_j‖` in the operator norm induced by the Sym inner
    /// products, for `j = 0..J−2`. Reported, not asserted: pointwise
    /// nilpotency does not hold for an arbitrary constant covector.
    pub fn nilpotency_residuals(&self) -> Vec<f64> {
        (0..self.forward.len().saturating_sub(1))
            .map(|j| {
                let composed = &self.forward[j + 1] * &self.forward[j];
                let left = self.grams[j + 2].map(f64::sqrt);
                let right = self.grams[j].map(|g| 1.0 / g.sqrt());
                let scaled =
                    DMatrix::from_diagonal(&left) * composed * DMatrix::from_diagonal(&right);
                singular_values(&scaled).first().copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// Smallest non-zero eigenvalue of `Δ*_j Δ_j`, or `None` if `Δ_j = 0`.
    pub fn first_nonzero_eigenvalue(&self, j: usize) -> Option<f64> {
        let m = &self.adjoint[j] * &self.forward[j];
        // Δ*Δ is self-adjoint in the Gram inner product; symmetrize with G^{1/2}.
        let s = self.grams[j].map(f64::sqrt);
        let si = self.grams[j].map(|g| 1.0 / g.sqrt());
        let sym = DMatrix::from_diagonal(&s) * m * DMatrix::from_diagonal(&si);
        let eig = dense_symmetric_eigen(&sym);
        let max = eig.values.last().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return None;
        }
        eig.values.into_iter().find(|&v| v > 1e-10 * max)
    }
}

/// `G_src⁻¹ Mᵀ G_dst` for diagonal Gram matrices.
pub fn adjoint_matrix(
    m: &DMatrix<f64>,
    gram_src: &DVector<f64>,
    gram_dst: &DVector<f64>,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.ncols(), m.nrows(), |r, c| {
        m[(c, r)] * gram_dst[c] / gram_src[r]
    })
}

/// Maps for each dual basis covector `e_i*`; by linearity in `λ` every
/// other field value is a linear combination of these.
#[derive(Clone, Debug)]
pub struct SpencerBasisMaps {
    parts: Vec<SpencerMaps>,
    inner: SymInner,
}

impl SpencerBasisMaps {
    pub fn build(
        alg: &LieAlgebra,
        sym: &SymAlgebra,
        truncation: usize,
        inner: SymInner,
    ) -> Result<Self> {
        let d = alg.dim();
        let parts = (0..d)
            .map(|i| SpencerMaps::build(alg, sym, &DualVector::basis(d, i), truncation, inner))
            .collect::<Result<_>>()?;
        Ok(Self { parts, inner })
    }

    pub fn at(&self, sym: &SymAlgebra, lambda: &DualVector) -> SpencerMaps {
        SpencerMaps::combine(lambda.clone(), sym, &self.parts, self.inner)
    }

    /// `Δ_j` at `λ` alone, skipping adjoints and Gram data.
    pub fn forward_at(&self, j: usize, lambda: &DualVector) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(
            self.parts[0].forward[j].nrows(),
            self.parts[0].forward[j].ncols(),
        );
        for (part, &c) in self.parts.iter().zip(lambda.0.iter()) {
            if c != 0.0 {
                acc += &part.forward[j] * c;
            }
        }
        acc
    }

    pub fn truncation(&self) -> usize {
        self.parts.first().map_or(0, |p| p.forward.len())
    }
}
