mod common;

use common::{max_abs_diff, pure_qmat, qmat, qmat_of};
use lsqmm::qsvd::{nuclear_norm, prox_nuclear, qsvd, real_rep_singular_values, singular_values};
use lsqmm::{QMatrix, Quaternion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unitarity_error(u: &QMatrix) -> f64 {
    let g = u.conj_transpose().mat_mul(u).unwrap();
    max_abs_diff(&g, &QMatrix::identity(u.cols()))
}

fn check_qsvd(a: &QMatrix) -> Result<(), TestCaseError> {
    let d = qsvd(a).unwrap();
    let scale = a.fro_norm().max(1.0);
    prop_assert!(max_abs_diff(&d.reconstruct(), a) <= 1e-8 * scale);
    prop_assert!(unitarity_error(&d.u) <= 1e-8);
    prop_assert!(unitarity_error(&d.v) <= 1e-8);
    prop_assert_eq!(d.sigma.len(), a.rows().min(a.cols()));
    prop_assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
    prop_assert!(d.sigma.iter().all(|&s| s >= 0.0));

    let real = real_rep_singular_values(a).unwrap();
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    for (g, chunk) in real.chunks(4).enumerate().take(d.sigma.len()) {
        let spread = chunk.iter().cloned().fold(f64::MIN, f64::max) - chunk.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(spread <= 1e-8 * (1.0 + smax), "group {} spread {}", g, spread);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn qsvd_invariants(a in qmat(7)) {
        check_qsvd(&a)?;
    }

    #[test]
    fn qsvd_invariants_pure(a in pure_qmat(7)) {
        check_qsvd(&a)?;
    }

    #[test]
    fn nuclear_norm_is_quarter_of_real_rep(a in qmat(12)) {
        let real: f64 = real_rep_singular_values(&a).unwrap().iter().sum();
        let nuc = nuclear_norm(&a).unwrap();
        prop_assert!((real - 4.0 * nuc).abs() <= 1e-9 * real.max(1e-300));
    }

    #[test]
    fn nuclear_triangle_inequality(
        (a, b) in (1usize..6, 1usize..6).prop_flat_map(|(m, n)| (qmat_of(m, n), qmat_of(m, n)))
    ) {
        let lhs = nuclear_norm(&a.add(&b).unwrap()).unwrap();
        let rhs = nuclear_norm(&a).unwrap() + nuclear_norm(&b).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10));
    }

    #[test]
    fn prox_commutes_with_scaling(a in qmat(5), tau in 0.01f64..2.0, c in 0.1f64..5.0) {
        let lhs = prox_nuclear(&a.scale(c), c * tau).unwrap();
        let rhs = prox_nuclear(&a, tau).unwrap().scale(c);
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9 * (1.0 + c * a.fro_norm()));
    }

    #[test]
    fn prox_shrinks_singular_values(a in qmat(5), tau in 0.01f64..2.0) {
        let before = singular_values(&a).unwrap();
        let after = singular_values(&prox_nuclear(&a, tau).unwrap()).unwrap();
        for (s, t) in before.iter().zip(&after) {
            prop_assert!((t - (s - tau).max(0.0)).abs() <= 1e-9 * (1.0 + s));
        }
    }
}

fn prox_objective(x: &QMatrix, a: &QMatrix, tau: f64) -> f64 {
    0.5 * x.sub(a).unwrap().fro_norm_sqr() + tau * nuclear_norm(x).unwrap()
}

#[test]
fn prox_beats_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..4 {
        let (m, n) = (3 + case % 2, 4);
        let a = QMatrix::from_fn(m, n, |_, _| {
            Quaternion::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let tau = 0.3 + 0.2 * case as f64;
        let x = prox_nuclear(&a, tau).unwrap();
        let best = prox_objective(&x, &a, tau);
        assert!(best <= prox_objective(&a, &a, tau) + 1e-12);
        for _ in 0..250 {
            let mut d = QMatrix::from_fn(m, n, |_, _| {
                Quaternion::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            d = d.scale(1e-2 / d.fro_norm());
            let y = x.add(&d).unwrap();
            assert!(best <= prox_objective(&y, &a, tau) + 1e-12);
        }
    }
}

#[test]
fn prox_matches_scalar_shrinkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let q = Quaternion::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let tau: f64 = rng.random_range(0.01..3.0);
        let a = QMatrix::from_fn(1, 1, |_, _| q);
        let expect = q.scale((1.0 - tau / q.modulus()).max(0.0));
        let got = prox_nuclear(&a, tau).unwrap().get(0, 0);
        assert!((got - expect).modulus() <= 1e-10, "{q:?} {tau}: {got:?} vs {expect:?}");
    }
}

#[test]
fn degenerate_spectra() {
    // repeated singular values and rank deficiency
    for a in [
        QMatrix::identity(4).scale(2.0),
        QMatrix::zeros(3, 5),
        QMatrix::from_fn(4, 3, |r, c| Quaternion::new(1.0, r as f64, c as f64, 1.0)),
    ] {
        let d = qsvd(&a).unwrap();
        assert!(max_abs_diff(&d.reconstruct(), &a) <= 1e-8 * a.fro_norm().max(1.0));
        assert!(unitarity_error(&d.u) <= 1e-8);
        assert!(unitarity_error(&d.v) <= 1e-8);
    }
}
