//! Symmetric tensor spaces `Sym^j(g)`.
//!
//! A tensor is stored by monomial coefficients over sorted multi-indices
//! `α = (i₁ ≤ … ≤ i_j)`, i.e. as a homogeneous polynomial in the basis
//! vectors. The symmetric product `⊙` is polynomial multiplication. When a
//! tensor is evaluated as a symmetric multilinear form, the polarization
//! convention applies: `s(x, …, x)` equals the polynomial at `x`, so an
//! off-diagonal quadratic monomial `e_a ⊙ e_b` evaluates to ½ on `(e_a, e_b)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE_CAP: usize = 4;

/// Which inner product to put on `Sym^j(g)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymInner {
    /// `⟨s,t⟩ = Σ_α s_α t_α`.
    #[default]
    Plain,
    /// Tensor-induced weights `Π m_i! / j!` per multi-index, where `m_i`
    /// are the multiplicities in `α`.
    Multiplicity,
}

/// Ordered monomial basis of `Sym^j` over a `d`-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct SymSpace {
    d: usize,
    degree: usize,
    basis: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl SymSpace {
    pub fn new(d: usize, degree: usize, cap: usize) -> Result<Self> {
        if degree > cap {
            return Err(Error::DegreeCapExceeded {
                requested: degree,
                cap,
            });
        }
        let mut basis = Vec::new();
        let mut current = Vec::with_capacity(degree);
        enumerate(d, degree, 0, &mut current, &mut basis);
        let index = basis
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        Ok(Self {
            d,
            degree,
            basis,
            index,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Multi-indices in lexicographic order.
    pub fn basis(&self) -> &[Vec<usize>] {
        &self.basis
    }

    pub fn index_of(&self, alpha: &[usize]) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    /// Diagonal Gram matrix of the chosen inner product in this basis.
    pub fn gram(&self, inner: SymInner) -> DVector<f64> {
        match inner {
            SymInner::Plain => DVector::from_element(self.dim(), 1.0),
            SymInner::Multiplicity => DVector::from_iterator(
                self.dim(),
                self.basis.iter().map(|a| 1.0 / multinomial(a) as f64),
            ),
        }
    }
}

fn enumerate(
    d: usize,
    remaining: usize,
    start: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for i in start..d {
        current.push(i);
        enumerate(d, remaining - 1, i, current, out);
        current.pop();
    }
}

/// `j! / Π m_i!` for a sorted multi-index.
pub fn multinomial(alpha: &[usize]) -> u64 {
    let factorial = |n: usize| (1..=n as u64).product::<u64>();
    let mut denom = 1u64;
    let mut run = 1usize;
    for w in alpha.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            denom *= factorial(run);
            run = 1;
        }
    }
    if !alpha.is_empty() {
        denom *= factorial(run);
    }
    factorial(alpha.len()) / denom
}

/// Merges two sorted multi-indices.
pub fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// All spaces `Sym^0 … Sym^cap` over one algebra dimension.
#[derive(Clone, Debug)]
pub struct SymAlgebra {
    spaces: Vec<Arc<SymSpace>>,
}

impl SymAlgebra {
    pub fn new(d: usize, cap: usize) -> Result<Self> {
        let spaces = (0..=cap)
            .map(|j| SymSpace::new(d, j, cap).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(Self { spaces })
    }

    pub fn cap(&self) -> usize {
        self.spaces.len() - 1
    }

    pub fn d(&self) -> usize {
        self.spaces[0].d()
    }

    pub fn space(&self, degree: usize) -> Result<&Arc<SymSpace>> {
        self.spaces.get(degree).ok_or(Error::DegreeCapExceeded {
            requested: degree,
            cap: self.cap(),
        })
    }

    pub fn unit(&self) -> SymTensor {
        SymTensor::new(self.spaces[0].clone(), DVector::from_element(1, 1.0))
    }

    pub fn zero(&self, degree: usize) -> Result<SymTensor> {
        let space = self.space(degree)?.clone();
        let n = space.dim();
        Ok(SymTensor::new(space, DVector::zeros(n)))
    }

    /// The degree-1 tensor with coefficients `v`.
    pub fn vector(&self, v: &DVector<f64>) -> Result<SymTensor> {
        let space = self.space(1)?.clone();
        if v.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: v.len(),
            });
        }
        Ok(SymTensor::new(space, v.clone()))
    }

    /// The monomial `e_{α₁} ⊙ … ⊙ e_{α_j}` (indices in any order).
    pub fn monomial(&self, alpha: &[usize]) -> Result<SymTensor> {
        let mut sorted = alpha.to_vec();
        sorted.sort_unstable();
        let mut t = self.zero(sorted.len())?;
        let idx = t.space.index_of(&sorted).ok_or(Error::DimensionMismatch {
            expected: self.d(),
            got: sorted.iter().max().map_or(0, |m| m + 1),
        })?;
        t.coeffs[idx] = 1.0;
        Ok(t)
    }

    pub fn product(&self, s: &SymTensor, t: &SymTensor) -> Result<SymTensor> {
        let target = self.space(s.degree() + t.degree())?.clone();
        let mut coeffs = DVector::zeros(target.dim());
        for (a, alpha) in s.space.basis().iter().enumerate() {
            let sa = s.coeffs[a];
            if sa == 0.0 {
                continue;
            }
            for (b, beta) in t.space.basis().iter().enumerate() {
                let tb = t.coeffs[b];
                if tb == 0.0 {
                    continue;
                }
                let merged = merge_sorted(alpha, beta);
                coeffs[target.index_of(&merged).expect("merged index in basis")] += sa * tb;
            }
        }
        Ok(SymTensor::new(target, coeffs))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor {
    space: Arc<SymSpace>,
    pub coeffs: DVector<f64>,
}

impl SymTensor {
    pub fn new(space: Arc<SymSpace>, coeffs: DVector<f64>) -> Self {
        assert_eq!(
            space.dim(),
            coeffs.len(),
            "coefficient vector does not match the space"
        );
        Self { space, coeffs }
    }

    pub fn space(&self) -> &Arc<SymSpace> {
        &self.space
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    pub fn coeff(&self, alpha: &[usize]) -> f64 {
        let mut sorted = alpha.to_vec();
        sorted.sort_unstable();
        self.space.index_of(&sorted).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn inner(&self, other: &SymTensor, kind: SymInner) -> Result<f64> {
        if self.degree() != other.degree() {
            return Err(Error::DegreeMismatch {
                left: self.degree(),
                right: other.degree(),
            });
        }
        let gram = self.space.gram(kind);
        Ok(self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .zip(gram.iter())
            .map(|((a, b), g)| a * b * g)
            .sum())
    }

    /// Evaluates the tensor as a symmetric multilinear form on `args`
    /// (one vector per degree), using polarization.
    pub fn evaluate(&self, args: &[DVector<f64>]) -> f64 {
        assert_eq!(args.len(), self.degree());
        let j = self.degree();
        if j == 0 {
            return self.coeffs[0];
        }
        let mut perm: Vec<usize> = (0..j).collect();
        let mut total = 0.0;
        let mut count = 0u64;
        // Average over all orderings of the argument slots.
        loop {
            for (idx, alpha) in self.space.basis().iter().enumerate() {
                let c = self.coeffs[idx];
                if c == 0.0 {
                    continue;
                }
                let prod: f64 = alpha
                    .iter()
                    .zip(perm.iter())
                    .map(|(&i, &slot)| args[slot][i])
                    .product();
                total += c * prod;
            }
            count += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        total / count as f64
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// Brute-force: count sorted tuples among all d^j tuples.
    fn brute_force_dim(d: usize, j: usize) -> usize {
        let total = d.pow(j as u32);
        (0..total)
            .filter(|&t| {
                let mut digits = Vec::with_capacity(j);
                let mut x = t;
                for _ in 0..j {
                    digits.push(x % d);
                    x /= d;
                }
                digits.windows(2).all(|w| w[0] <= w[1])
            })
            .count()
    }

    #[test]
    fn dimensions_match_stars_and_bars() {
        assert_eq!(SymSpace::new(3, 2, 4).unwrap().dim(), 6);
        assert_eq!(SymSpace::new(3, 0, 4).unwrap().dim(), 1);
        assert_eq!(SymSpace::new(2, 3, 4).unwrap().dim(), 4);
        let dims: Vec<usize> = (0..=4)
            .map(|j| SymSpace::new(3, j, 4).unwrap().dim())
            .collect();
        assert_eq!(dims, vec![1, 3, 6, 10, 15]);
        for j in 0..=4 {
            assert_eq!(dims[j], brute_force_dim(3, j));
            assert_eq!(dims[j], binomial(3 + j - 1, j));
        }
    }

    #[test]
    fn basis_is_sorted_and_unique() {
        let s = SymSpace::new(4, 3, 4).unwrap();
        assert!(s.basis().windows(2).all(|w| w[0] < w[1]));
        assert!(s.basis().iter().all(|a| a.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn degree_cap_is_enforced() {
        assert!(matches!(
            SymSpace::new(3, 5, 4),
            Err(Error::DegreeCapExceeded {
                requested: 5,
                cap: 4
            })
        ));
        let alg = SymAlgebra::new(3, 2).unwrap();
        let a = alg.monomial(&[0, 1]).unwrap();
        assert!(matches!(
            alg.product(&a, &a),
            Err(Error::DegreeCapExceeded { .. })
        ));
    }

    #[test]
    fn product_examples() {
        let alg = SymAlgebra::new(3, 4).unwrap();
        let e1 = alg.monomial(&[0]).unwrap();
        let e2 = alg.monomial(&[1]).unwrap();
        assert_eq!(
            alg.product(&e1, &e2).unwrap(),
            alg.product(&e2, &e1).unwrap()
        );
        let unit = alg.unit();
        let s = alg.monomial(&[0, 2, 2]).unwrap();
        assert_eq!(alg.product(&unit, &s).unwrap(), s);
        let e11 = alg.product(&e1, &e1).unwrap();
        let p = alg.product(&e11, &e2).unwrap();
        assert_eq!(p.coeff(&[0, 0, 1]), 1.0);
        assert_eq!(p.coeffs.iter().filter(|c| **c != 0.0).count(), 1);
    }

    /// Oracle for the product: expand both factors into full symmetric
    /// tensors on (R^d)^{⊗j}, take the symmetrized tensor product, then
    /// recollect monomial coefficients as Σ over ordered tuples sorting to α.
    fn full_tensor(t: &SymTensor) -> HashMap<Vec<usize>, f64> {
        let mut out = HashMap::new();
        for (idx, alpha) in t.space().basis().iter().enumerate() {
            let c = t.coeffs[idx];
            if c == 0.0 {
                continue;
            }
            let m = multinomial(alpha) as f64;
            let mut perm = alpha.clone();
            loop {
                *out.entry(perm.clone()).or_insert(0.0) += c / m;
                if !next_permutation(&mut perm) {
                    break;
                }
            }
        }
        out
    }

    fn symmetrized_product(
        a: &HashMap<Vec<usize>, f64>,
        b: &HashMap<Vec<usize>, f64>,
        degree: usize,
    ) -> HashMap<Vec<usize>, f64> {
        let mut tensor: HashMap<Vec<usize>, f64> = HashMap::new();
        for (ka, va) in a {
            for (kb, vb) in b {
                let mut key = ka.clone();
                key.extend_from_slice(kb);
                *tensor.entry(key).or_insert(0.0) += va * vb;
            }
        }
        let mut perm: Vec<usize> = (0..degree).collect();
        let mut count = 0.0;
        let mut sym: HashMap<Vec<usize>, f64> = HashMap::new();
        loop {
            for (k, v) in &tensor {
                let permuted: Vec<usize> = perm.iter().map(|&p| k[p]).collect();
                *sym.entry(permuted).or_insert(0.0) += v;
            }
            count += 1.0;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        sym.values_mut().for_each(|v| *v /= count);
        sym
    }

    fn recollect(full: &HashMap<Vec<usize>, f64>) -> HashMap<Vec<usize>, f64> {
        let mut out = HashMap::new();
        for (k, v) in full {
            let mut s = k.clone();
            s.sort_unstable();
            *out.entry(s).or_insert(0.0) += v;
        }
        out
    }

    #[test]
    fn product_matches_symmetrization_oracle() {
        let alg = SymAlgebra::new(3, 4).unwrap();
        let e11 = alg.monomial(&[0, 0]).unwrap();
        let e2 = alg.monomial(&[1]).unwrap();
        let oracle = recollect(&symmetrized_product(
            &full_tensor(&e11),
            &full_tensor(&e2),
            3,
        ));
        assert!((oracle[&vec![0, 0, 1]] - 1.0).abs() < 1e-14);

        let s = SymTensor::new(
            alg.space(2).unwrap().clone(),
            DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75]),
        );
        let t = SymTensor::new(
            alg.space(1).unwrap().clone(),
            DVector::from_vec(vec![1.0, 2.0, -3.0]),
        );
        let got = alg.product(&s, &t).unwrap();
        let oracle = recollect(&symmetrized_product(&full_tensor(&s), &full_tensor(&t), 3));
        for (alpha, v) in oracle {
            assert!((got.coeff(&alpha) - v).abs() < 1e-12, "{alpha:?}");
        }
    }

    #[test]
    fn inner_examples() {
        let alg = SymAlgebra::new(3, 4).unwrap();
        let e12 = alg.monomial(&[0, 1]).unwrap();
        let e11 = alg.monomial(&[0, 0]).unwrap();
        assert_eq!(e12.inner(&e12, SymInner::Plain).unwrap(), 1.0);
        assert_eq!(
            e12.inner(&alg.zero(2).unwrap(), SymInner::Plain).unwrap(),
            0.0
        );
        assert_eq!(e11.inner(&e12, SymInner::Plain).unwrap(), 0.0);
        assert!(matches!(
            e12.inner(&alg.unit(), SymInner::Plain),
            Err(Error::DegreeMismatch { left: 2, right: 0 })
        ));
        // Multiplicity weights: e1⊙e2 carries 1/2, e1⊙e1 carries 1.
        assert_eq!(e12.inner(&e12, SymInner::Multiplicity).unwrap(), 0.5);
        assert_eq!(e11.inner(&e11, SymInner::Multiplicity).unwrap(), 1.0);
    }

    #[test]
    fn evaluation_uses_polarization() {
        let alg = SymAlgebra::new(3, 4).unwrap();
        let e = |i: usize| {
            let mut v = DVector::zeros(3);
            v[i] = 1.0;
            v
        };
        let e12 = alg.monomial(&[0, 1]).unwrap();
        assert_eq!(e12.evaluate(&[e(0), e(1)]), 0.5);
        assert_eq!(e12.evaluate(&[e(0), e(0)]), 0.0);
        let e11 = alg.monomial(&[0, 0]).unwrap();
        assert_eq!(e11.evaluate(&[e(0), e(0)]), 1.0);
        // s(x,x) equals the polynomial at x.
        let x = DVector::from_vec(vec![0.3, -1.1, 2.0]);
        let s = SymTensor::new(
            alg.space(2).unwrap().clone(),
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        );
        let poly = 1.0 * x[0] * x[0]
            + 2.0 * x[0] * x[1]
            + 3.0 * x[0] * x[2]
            + 4.0 * x[1] * x[1]
            + 5.0 * x[1] * x[2]
            + 6.0 * x[2] * x[2];
        assert!((s.evaluate(&[x.clone(), x.clone()]) - poly).abs() < 1e-12);
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(multinomial(&[]), 1);
        assert_eq!(multinomial(&[0, 0, 1]), 3);
        assert_eq!(multinomial(&[0, 1, 2]), 6);
        assert_eq!(multinomial(&[2, 2, 2, 2]), 1);
    }

    fn tensor(alg: &SymAlgebra, degree: usize) -> impl Strategy<Value = SymTensor> {
        let space = alg.space(degree).unwrap().clone();
        proptest::collection::vec(-2.0..2.0f64, space.dim())
            .prop_map(move |v| SymTensor::new(space.clone(), DVector::from_vec(v)))
    }

    proptest! {
        #[test]
        fn product_is_degree_additive_and_associative(
            (a, b, c) in (0usize..=2, 0usize..=1, 0usize..=1).prop_flat_map(|(p, q, r)| {
                let alg = SymAlgebra::new(3, 4).unwrap();
                (tensor(&alg, p), tensor(&alg, q), tensor(&alg, r))
            })
        ) {
            let alg = SymAlgebra::new(3, 4).unwrap();
            let ab = alg.product(&a, &b).unwrap();
            prop_assert_eq!(ab.degree(), a.degree() + b.degree());
            let left = alg.product(&ab, &c).unwrap();
            let right = alg.product(&a, &alg.product(&b, &c).unwrap()).unwrap();
            prop_assert!((left.coeffs - right.coeffs).norm() < 1e-10);
            let ba = alg.product(&b, &a).unwrap();
            prop_assert!((ab.coeffs - ba.coeffs).norm() < 1e-12);
        }

        #[test]
        fn inner_is_positive_definite(s in tensor(&SymAlgebra::new(3, 4).unwrap(), 3)) {
            prop_assume!(s.coeffs.norm() > 1e-6);
            prop_assert!(s.inner(&s, SymInner::Plain).unwrap() > 0.0);
            prop_assert!(s.inner(&s, SymInner::Multiplicity).unwrap() > 0.0);
        }
    }
}
