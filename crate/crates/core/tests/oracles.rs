mod common;

use common::*;
use d4l::coding::{beta_vector, code, dict_task_gradient, kkt_residual, objective, Dictionary, ElasticNetParams};
use d4l::losses::{binary_logistic_grads, binary_logistic_loss, multinomial_grads, multinomial_loss, ClassifierParams, OneHot};
use d4l::topology::{build_cycle, build_grid, build_random, build_small_world};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn coder_matches_enumeration_for_wide_dictionaries() {
    // k > m: the support is not unique in general, but with zeta2 > 0 the
    // minimizer is.
    let mut rng = rng(1);
    let p = ElasticNetParams::new(0.1, 0.05).unwrap();
    for _ in 0..30 {
        let dict = random_dictionary(&mut rng, 5, 8);
        let x = random_unit_vector(&mut rng, 5);
        let got = code(&dict, &x, &p).unwrap();
        let want = sign_pattern_oracle(dict.atoms(), &x, &p);
        assert!((&got.alpha - &want).amax() < 1e-6);
    }
}

#[test]
fn code_is_locally_minimal() {
    let mut rng = rng(2);
    for _ in 0..50 {
        let dict = random_dictionary(&mut rng, 8, 6);
        let x = random_unit_vector(&mut rng, 8);
        let p = ElasticNetParams::new(rng.random_range(0.05..0.3), 0.0).unwrap();
        let a = code(&dict, &x, &p).unwrap().alpha;
        let f0 = objective(&dict, &x, &a, &p);
        for _ in 0..20 {
            let dir = DVector::from_fn(6, |_, _| rng.random_range(-1e-4..1e-4));
            assert!(objective(&dict, &x, &(&a + dir), &p) >= f0 - 1e-14);
        }
    }
}

#[test]
fn scaling_signal_and_l1_weight_scales_code() {
    let mut rng = rng(3);
    for _ in 0..50 {
        let dict = random_dictionary(&mut rng, 8, 6);
        let x = random_unit_vector(&mut rng, 8);
        let (z1, z2) = (rng.random_range(0.05..0.3), 0.05);
        let c = rng.random_range(0.2..5.0);
        let a = code(&dict, &x, &ElasticNetParams::new(z1, z2).unwrap()).unwrap().alpha;
        let b = code(&dict, &(&x * c), &ElasticNetParams::new(c * z1, z2).unwrap()).unwrap().alpha;
        assert!((&b - &a * c).amax() < 1e-8 * c.max(1.0));
    }
}

#[test]
fn large_l1_weight_gives_zero_code() {
    let mut rng = rng(4);
    let dict = random_dictionary(&mut rng, 8, 6);
    let x = random_unit_vector(&mut rng, 8);
    let thresh = (dict.atoms().transpose() * &x).amax();
    let c = code(&dict, &x, &ElasticNetParams::new(thresh * 1.001, 0.0).unwrap()).unwrap();
    assert!(c.active_set.is_empty());
    assert_eq!(c.alpha, DVector::zeros(6));
    let zero = code(&dict, &DVector::zeros(8), &ElasticNetParams::new(0.1, 0.0).unwrap()).unwrap();
    assert!(zero.active_set.is_empty());
}

#[test]
fn dictionary_gradient_matches_directional_derivatives() {
    let mut rng = rng(5);
    let p = ElasticNetParams::new(0.1, 0.05).unwrap();
    let w = ClassifierParams::pinned(random_matrix(&mut rng, 7, 4));
    let y = OneHot::new(1, 4).unwrap();
    let mut checked = 0;
    for _ in 0..20 {
        let dict = random_dictionary(&mut rng, 8, 6);
        let x = random_unit_vector(&mut rng, 8);
        let base = code(&dict, &x, &p).unwrap();
        if base.active_set.is_empty() {
            continue;
        }
        let g = multinomial_grads(&w, &base.alpha, &y, 0.0).unwrap();
        let beta = beta_vector(&dict, &base, &g.grad_alpha, &p).unwrap();
        let grad = dict_task_gradient(&dict, &x, &base, &beta.values).unwrap();
        for _ in 0..5 {
            let e = random_matrix(&mut rng, 8, 6);
            let h = 1e-6;
            let f = |s: f64| {
                let d = Dictionary::new(dict.atoms() + &e * s).unwrap();
                let a = code(&d, &x, &p).unwrap();
                (multinomial_loss(&w, &a.alpha, &y, 0.0).unwrap(), sign_pattern(&a.alpha))
            };
            let ((fp, sp), (fm, sm)) = (f(h), f(-h));
            if sp != sign_pattern(&base.alpha) || sm != sp {
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            let an = grad.dot(&e);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "fd {fd} vs analytic {an}");
            checked += 1;
        }
    }
    assert!(checked >= 50);
}

#[test]
fn beta_solves_active_set_system() {
    let mut rng = rng(6);
    let p = ElasticNetParams::new(0.1, 0.05).unwrap();
    let dict = random_dictionary(&mut rng, 8, 6);
    let x = random_unit_vector(&mut rng, 8);
    let c = code(&dict, &x, &p).unwrap();
    let g = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let beta = beta_vector(&dict, &c, &g, &p).unwrap().values;
    let z = &c.active_set;
    let dz = DMatrix::from_fn(8, z.len(), |r, j| dict.atoms()[(r, z[j])]);
    let lhs = dz.transpose() * &dz + DMatrix::identity(z.len(), z.len()) * p.zeta2;
    let bz = DVector::from_fn(z.len(), |i, _| beta[z[i]]);
    let gz = DVector::from_fn(z.len(), |i, _| g[z[i]]);
    assert!((lhs * bz - gz).amax() < 1e-10);
    for l in (0..6).filter(|l| !z.contains(l)) {
        assert_eq!(beta[l], 0.0);
    }
}

#[test]
fn multinomial_gradients_match_finite_differences() {
    let mut rng = rng(7);
    for _ in 0..20 {
        let (k, c) = (5, 4);
        let w = ClassifierParams::pinned(random_matrix(&mut rng, k + 1, c) * 3.0);
        let a = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
        let y = OneHot::new(rng.random_range(0..c), c).unwrap();
        let xi = 0.01;
        let g = multinomial_grads(&w, &a, &y, xi).unwrap();
        assert!((g.loss - multinomial_loss(&w, &a, &y, xi).unwrap()).abs() < 1e-14);
        // Only the free columns are variables; the last one stays zero.
        let free = w.weights().columns(0, c - 1).into_owned();
        let fd_w = fd_matrix_gradient(&free, 1e-6, |f| {
            let mut m = DMatrix::zeros(k + 1, c);
            m.columns_mut(0, c - 1).copy_from(f);
            multinomial_loss(&ClassifierParams::new(m).unwrap(), &a, &y, xi).unwrap()
        });
        let an_w = g.grad_w.columns(0, c - 1).into_owned();
        assert!(rel_err(&fd_w, &an_w) < 1e-6);
        let fd_a = fd_vector_gradient(&a, 1e-6, |v| multinomial_loss(&w, v, &y, xi).unwrap());
        assert!((fd_a - &g.grad_alpha).amax() < 1e-6);
    }
}

#[test]
fn two_class_multinomial_is_binary_logistic() {
    let mut rng = rng(8);
    for _ in 0..20 {
        let k = 4;
        let w0 = DVector::from_fn(k + 1, |_, _| rng.random_range(-2.0..2.0));
        let mut m = DMatrix::zeros(k + 1, 2);
        m.set_column(0, &w0);
        let w = ClassifierParams::new(m).unwrap();
        let a = DVector::from_fn(k, |_, _| rng.random_range(-2.0..2.0));
        for (class, y) in [(0usize, 1i8), (1, -1)] {
            let oh = OneHot::new(class, 2).unwrap();
            let multi = multinomial_grads(&w, &a, &oh, 0.0).unwrap();
            assert!((multi.loss - binary_logistic_loss(&w0, &a, y)).abs() < 1e-12);
            let (gw, ga) = binary_logistic_grads(&w0, &a, y);
            assert!((multi.grad_alpha - ga).amax() < 1e-12);
            assert!((multi.grad_w.column(0) - gw).amax() < 1e-12);
        }
    }
}

#[test]
fn block_incidence_matches_dense_kronecker() {
    let mut rng = rng(9);
    for topo in [build_cycle(5).unwrap(), build_grid(9).unwrap(), build_random(7, 0.4, 3).unwrap()] {
        let blocks: Vec<DMatrix<f64>> = (0..topo.n_nodes()).map(|_| random_matrix(&mut rng, 3, 2)).collect();
        let applied = stack(&topo.incidence_apply(&blocks).unwrap());
        let dense = dense_block_incidence(&topo, 3) * stack(&blocks);
        assert!((applied - dense).amax() < 1e-15);
        assert_eq!(dense_block_incidence(&topo, 1), topo.incidence_matrix());
    }
}

#[test]
fn spectral_bounds_bracket_incidence_norms() {
    let mut rng = rng(10);
    for topo in [build_cycle(6).unwrap(), build_small_world(10, 0.3, 4).unwrap(), build_random(8, 0.3, 5).unwrap()] {
        let (gamma, big) = topo.spectral_bounds(2).unwrap();
        let c = dense_block_incidence(&topo, 2);
        let n = topo.n_nodes();
        for _ in 0..100 {
            let mut x = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
            // Remove the consensus component, the null space of C.
            for b in 0..2 {
                let mean = (0..n).map(|i| x[2 * i + b]).sum::<f64>() / n as f64;
                for i in 0..n {
                    x[2 * i + b] -= mean;
                }
            }
            let cx = (&c * &x).norm();
            assert!(cx >= gamma * x.norm() * (1.0 - 1e-9), "{cx} < {gamma} |x|");
            assert!(cx <= big * x.norm() * (1.0 + 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_graphs_are_connected_and_symmetric(n in 2usize..30, rho in 0.05f64..1.0, seed in any::<u64>()) {
        let t = build_random(n, rho, seed).unwrap();
        prop_assert!(t.is_connected());
        prop_assert_eq!(t.n_nodes(), n);
        let degree_sum: usize = (0..n).map(|i| t.degree(i)).sum();
        prop_assert_eq!(degree_sum, t.n_edges());
        for (e, &(i, j)) in t.edges().iter().enumerate() {
            let r = t.reverse_edge(e);
            prop_assert_eq!(t.edges()[r], (j, i));
            prop_assert_eq!(t.reverse_edge(r), e);
        }
        prop_assert_eq!(build_random(n, rho, seed).unwrap(), t);
    }

    #[test]
    fn coder_satisfies_kkt(seed in any::<u64>(), z1 in 0.01f64..0.5, ridge in prop::bool::ANY) {
        let mut rng = rng(seed);
        let dict = random_dictionary(&mut rng, 8, 12);
        let x = random_unit_vector(&mut rng, 8);
        let p = ElasticNetParams::new(z1, if ridge { 0.1 } else { 0.0 }).unwrap();
        let c = code(&dict, &x, &p).unwrap();
        prop_assert!(kkt_residual(&dict, &x, &c, &p) <= 1e-8);
    }

    #[test]
    fn multinomial_loss_is_nonnegative(seed in any::<u64>(), class in 0usize..5) {
        let mut rng = rng(seed);
        let w = ClassifierParams::pinned(random_matrix(&mut rng, 4, 5) * 10.0);
        let a = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
        let l = multinomial_loss(&w, &a, &OneHot::new(class, 5).unwrap(), 0.0).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }
}
