//! Property-based checks of the structural invariants, one `proptest!`
//! block per layer.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spencer_core::hodge::{harmonic_space, random_vector, EigenSettings};
use spencer_core::lie::{DualVector, LieAlgebra};
use spencer_core::spencer::{check_symbolic_equivalence, generator_value, SpencerMaps};
use spencer_core::sym::{SymAlgebra, SymInner, SymTensor};
use spencer_core::{Metric, PairField, SpencerAssembly, TorusMesh, VectorField, WeightKind};

fn algebra(index: usize) -> LieAlgebra {
    match index {
        0 => LieAlgebra::so3(),
        1 => LieAlgebra::su2(),
        _ => LieAlgebra::so4(),
    }
}

fn coeffs(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, d)
}

/// A covector bounded away from zero, so fields built from it are
/// non-degenerate.
fn covector(d: usize) -> impl Strategy<Value = DualVector> {
    coeffs(d)
        .prop_filter("non-degenerate", |c| c.iter().map(|x| x * x).sum::<f64>() > 0.1)
        .prop_map(|c| DualVector::from_slice(&c))
}

fn vector(c: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn killing_form_is_ad_invariant(which in 0usize..3, z in coeffs(6), x in coeffs(6), y in coeffs(6)) {
        let alg = algebra(which);
        let d = alg.dim();
        let (z, x, y) = (vector(&z[..d]), vector(&x[..d]), vector(&y[..d]));
        let lhs = alg.killing_inner(&alg.bracket(&z, &x), &y) + alg.killing_inner(&x, &alg.bracket(&z, &y));
        prop_assert!(lhs.abs() <= 1e-10 * (1.0 + x.norm() * y.norm() * z.norm()));
    }

    #[test]
    fn coadjoint_is_negative_transpose(which in 0usize..3, x in coeffs(6), y in coeffs(6), mu in coeffs(6)) {
        let alg = algebra(which);
        let d = alg.dim();
        let (x, y, mu) = (vector(&x[..d]), vector(&y[..d]), DualVector::from_slice(&mu[..d]));
        let lhs = alg.coadjoint(&x, &mu).pair(&y);
        let rhs = -mu.pair(&alg.bracket(&x, &y));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn sym_inner_is_positive(degree in 0usize..=4, c in prop::collection::vec(-1.0..1.0f64, 15)) {
        let sym = SymAlgebra::new(3, 4).unwrap();
        let space = sym.space(degree).unwrap().clone();
        let v = DVector::from_row_slice(&c[..space.dim()]);
        prop_assume!(v.norm() > 1e-6);
        let s = SymTensor::new(space, v);
        for kind in [SymInner::Plain, SymInner::Multiplicity] {
            prop_assert!(s.inner(&s, kind).unwrap() > 0.0);
        }
    }

    #[test]
    fn generator_is_symmetric(which in 0usize..3, lambda in coeffs(6), v in coeffs(6), w1 in coeffs(6), w2 in coeffs(6)) {
        let alg = algebra(which);
        let d = alg.dim();
        let lambda = DualVector::from_slice(&lambda[..d]);
        let (v, w1, w2) = (vector(&v[..d]), vector(&w1[..d]), vector(&w2[..d]));
        prop_assert_eq!(
            generator_value(&alg, &lambda, &v, &w1, &w2),
            generator_value(&alg, &lambda, &v, &w2, &w1)
        );
    }

    #[test]
    fn symbolic_equivalence_for_random_lambda(which in 0usize..3, lambda in coeffs(6)) {
        let alg = algebra(which);
        let lambda = DualVector::from_slice(&lambda[..alg.dim()]);
        prop_assert!(check_symbolic_equivalence(&alg, &lambda) <= 1e-12);
    }

    #[test]
    fn leibniz_on_sorted_concatenations(
        lambda in coeffs(3),
        mut idx in prop::collection::vec(0usize..3, 2..=3),
        split in 1usize..3,
    ) {
        let alg = LieAlgebra::so3();
        let sym = SymAlgebra::new(3, 4).unwrap();
        let maps = SpencerMaps::build(&alg, &sym, &DualVector::from_slice(&lambda), 4, SymInner::Plain).unwrap();
        let delta = |t: &SymTensor| {
            let j = t.degree();
            SymTensor::new(sym.space(j + 1).unwrap().clone(), maps.forward(j) * &t.coeffs)
        };
        idx.sort_unstable();
        let p = split.min(idx.len() - 1);
        let (left, right) = idx.split_at(p);
        let (s1, s2) = (sym.monomial(left).unwrap(), sym.monomial(right).unwrap());
        let lhs = delta(&sym.product(&s1, &s2).unwrap()).coeffs;
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        let rhs = sym.product(&delta(&s1), &s2).unwrap().coeffs + sym.product(&s1, &delta(&s2)).unwrap().coeffs * sign;
        prop_assert!((lhs - rhs).norm() <= 1e-10);
    }

    #[test]
    fn spencer_adjoint_identity(lambda in coeffs(3), j in 0usize..3, seed in any::<u64>()) {
        let alg = LieAlgebra::so3();
        let sym = SymAlgebra::new(3, 4).unwrap();
        let maps = SpencerMaps::build(&alg, &sym, &DualVector::from_slice(&lambda), 3, SymInner::Multiplicity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, g_src, g_dst) = (maps.forward(j), maps.gram(j), maps.gram(j + 1));
        let u = random_vector(&mut rng, f.ncols());
        let v = random_vector(&mut rng, f.nrows());
        let lhs = (f * &u).component_mul(g_dst).dot(&v);
        let rhs = u.component_mul(g_src).dot(&(maps.adjoint(j) * &v));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exterior_derivative_squares_to_zero(n1 in 3usize..12, n2 in 3usize..12, l1 in 0.5..10.0f64, l2 in 0.5..10.0f64) {
        let mesh = TorusMesh::new(2, &[n1, n2], &[l1, l2]).unwrap();
        prop_assert_eq!(mesh.dd_defect(), 0);
    }

    #[test]
    fn masses_are_positive_and_linear_in_weight(n in 3usize..10, k in 0usize..3, c in 0.1..10.0f64, a in 0.0..0.9f64) {
        let mesh = TorusMesh::uniform(2, n).unwrap();
        let w = |x: &[f64]| 1.0 + a * x[0].sin() * x[1].cos();
        let base = mesh.mass_matrix(k, w).unwrap();
        let scaled = mesh.mass_matrix(k, |x| c * w(x)).unwrap();
        prop_assert!(base.min() > 0.0);
        for (s, b) in scaled.diagonal.iter().zip(base.diagonal.iter()) {
            prop_assert!((s - c * b).abs() <= 1e-12 * s.abs());
        }
    }

    #[test]
    fn graph_laplacian_has_constant_kernel(n1 in 3usize..9, n2 in 3usize..9) {
        let mesh = TorusMesh::new(2, &[n1, n2], &[1.0, 2.0]).unwrap();
        let d0 = mesh.derivative(0).unwrap().to_dense();
        let m1 = DMatrix::from_diagonal(mesh.hodge_star(1));
        let eig = (d0.transpose() * m1 * &d0).symmetric_eigenvalues();
        let max = eig.amax();
        prop_assert_eq!(eig.iter().filter(|&&v| v.abs() < 1e-8 * max).count(), 1);
    }
}

fn flat_field(alg: LieAlgebra, n: usize, lambda: DualVector, omega: Vec<DVector<f64>>) -> PairField {
    let mesh = Arc::new(TorusMesh::uniform(2, n).unwrap());
    let omega = omega.into_iter().map(VectorField::constant).collect();
    PairField::sample(mesh, Arc::new(alg), VectorField::constant(lambda.0.clone()), omega).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constraint_weight_is_coadjoint_invariant(lambda in covector(3), x in coeffs(3)) {
        let alg = LieAlgebra::so3();
        let moved = alg.group_coadjoint(&vector(&x), &lambda);
        let w = |l: &DualVector| 1.0 + alg.dual_norm_sq(l);
        prop_assert!((w(&lambda) - w(&moved)).abs() <= 1e-8);
    }

    #[test]
    fn curvature_weight_is_gauge_covariant(x in coeffs(3), o1 in coeffs(3), o2 in coeffs(3)) {
        let alg = LieAlgebra::so3();
        let g = alg.group_adjoint(&vector(&x));
        let lambda = DualVector::basis(3, 2);
        let base = flat_field(alg.clone(), 4, lambda.clone(), vec![vector(&o1), vector(&o2)]);
        let moved = flat_field(alg, 4, lambda, vec![&g * vector(&o1), &g * vector(&o2)]);
        let (k0, k1) = (base.weight_curvature(), moved.weight_curvature());
        prop_assert!((k0 - k1).amax() <= 1e-8 * k0.amax());
    }

    #[test]
    fn cartan_residual_is_homogeneous(lambda in covector(3), o1 in coeffs(3), c in -3.0..3.0f64) {
        prop_assume!(c.abs() > 0.05);
        let alg = LieAlgebra::so3();
        let omega = vec![vector(&o1), DVector::zeros(3)];
        let r1 = flat_field(alg.clone(), 5, lambda.clone(), omega.clone()).cartan_residual().global;
        let rc = flat_field(alg, 5, lambda.scaled(c), omega).cartan_residual().global;
        prop_assert!((rc - c.abs() * r1).abs() <= 1e-10 * (1.0 + rc));
    }

    #[test]
    fn assembled_adjoint_and_mixed_interpolation(lambda in covector(3), o1 in coeffs(3), j in 0usize..2, seed in any::<u64>()) {
        let field = Arc::new(flat_field(LieAlgebra::so3(), 4, lambda, vec![vector(&o1) * 0.3, DVector::zeros(3)]));
        let sym = SymAlgebra::new(3, 2).unwrap();
        let asm = SpencerAssembly::assemble(field, sym, j, SymInner::Plain, Metric::a()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 0..asm.top_degree() {
            let u = random_vector(&mut rng, asm.space_dim(n));
            let v = random_vector(&mut rng, asm.space_dim(n + 1));
            let lhs = asm.inner_product(n + 1, &asm.differential(n).mul_vec(&u), &v);
            let rhs = asm.inner_product(n, &u, &asm.apply_adjoint(n, &v));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * asm.norm(n, &u) * asm.norm(n + 1, &v));
        }
        let (ma, mb) = (asm.masses_for(&Metric::a()).unwrap(), asm.masses_for(&Metric::b()).unwrap());
        for alpha in [0.25, 0.5, 0.75] {
            let mm = asm.masses_for(&Metric::mixed(alpha).unwrap()).unwrap();
            for n in 0..=asm.top_degree() {
                let blend = &ma[n] * alpha + &mb[n] * (1.0 - alpha);
                prop_assert!((&mm[n] - blend).amax() <= 1e-12 * mm[n].amax());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn harmonic_dimension_is_metric_independent(lambda in covector(3), a in 0.0..0.8f64, j in 0usize..2) {
        // Non-constant λ so the A weight genuinely varies.
        let alg = Arc::new(LieAlgebra::so3());
        let mesh = Arc::new(TorusMesh::uniform(2, 4).unwrap());
        let base = lambda.0.clone();
        let lam = VectorField::new(move |x: &[f64]| &base * (1.0 + a * x[0].sin()));
        let field = Arc::new(PairField::sample(mesh, alg, lam, vec![VectorField::zero(3); 2]).unwrap());
        prop_assert!(field.weight(WeightKind::Constraint).amax() >= 1.0);
        let sym = SymAlgebra::new(3, 2).unwrap();
        let settings = EigenSettings::default();
        let dims = |metric: Metric| -> Vec<usize> {
            let asm = SpencerAssembly::assemble(field.clone(), sym.clone(), j, SymInner::Plain, metric).unwrap();
            (0..=asm.top_degree()).map(|n| harmonic_space(&asm, n, &settings).unwrap().dimension()).collect()
        };
        let reference = dims(Metric::a());
        prop_assert_eq!(&dims(Metric::b()), &reference);
        for alpha in [0.25, 0.5, 0.75] {
            prop_assert_eq!(&dims(Metric::mixed(alpha).unwrap()), &reference);
        }
    }
}
