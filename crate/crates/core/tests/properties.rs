use nhadiabatic::numkernel::{eig, mat_exp, mat_inverse, spectral_norm, ComplexMatrix, C64};
use nhadiabatic::propagator::groenwall_bound;
use nhadiabatic::spectral::{reduced_resolvent, EigenSystem};
use proptest::prelude::*;

fn matrix(n: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |e| {
        ComplexMatrix::from_fn(n, |i, j| {
            let (re, im) = e[i * n + j];
            C64::new(scale * re, scale * im)
        })
    })
}

fn any_matrix() -> impl Strategy<Value = ComplexMatrix> {
    (2usize..=6).prop_flat_map(|n| matrix(n, 1.0))
}

fn rel(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(1.0)
}

/// `H = V diag(λ) V⁻¹` with real, separated `λ` and well-conditioned `V`.
fn real_spectrum_hamiltonian() -> impl Strategy<Value = (ComplexMatrix, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|n| {
        (
            // ‖W‖_F < 0.6 keeps V = I + W within condition number 4.
            matrix(n, 0.4 / n as f64),
            prop::collection::vec(0.2..1.0f64, n),
            -2.0..2.0f64,
        )
            .prop_map(move |(w, steps, start)| {
                let v = &ComplexMatrix::identity(n) + &w;
                let mut lambdas = Vec::with_capacity(n);
                let mut x = start;
                for d in steps {
                    lambdas.push(x);
                    x += d;
                }
                let diag: Vec<C64> = lambdas.iter().map(|&l| C64::new(l, 0.0)).collect();
                let vinv = mat_inverse(&v).expect("‖W‖ < 1 keeps V invertible");
                let h = &(&v * &ComplexMatrix::from_diag(&diag)) * &vinv;
                (h, lambdas)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn inverse_of_inverse(a in any_matrix()) {
        let n = a.dim();
        let shifted = &a + &ComplexMatrix::identity(n).scale_real(n as f64 + 1.0);
        let inv = mat_inverse(&shifted).unwrap();
        prop_assert!(rel(&(&shifted * &inv), &ComplexMatrix::identity(n)) < 1e-12);
        prop_assert!(rel(&mat_inverse(&inv).unwrap(), &shifted) < 1e-12);
    }

    #[test]
    fn exponential_of_negation_is_inverse(a in any_matrix(), t in 0.0..3.0f64) {
        let n = a.dim();
        let a = a.scale_real(t);
        let prod = &mat_exp(&a).unwrap() * &mat_exp(&a.scale_real(-1.0)).unwrap();
        let growth = (2.0 * a.frobenius_norm()).exp();
        prop_assert!(rel(&prod, &ComplexMatrix::identity(n)) < 1e-13 * growth);
    }

    #[test]
    fn eigenpairs_have_small_residuals(a in any_matrix()) {
        if let Ok(d) = eig(&a) {
            let scale = a.frobenius_norm().max(1.0);
            for (i, &l) in d.eigenvalues.iter().enumerate() {
                let v = d.vector(i);
                let av = a.mul_vec(&v);
                let r: f64 = av
                    .iter()
                    .zip(&v)
                    .map(|(x, y)| (x - l * y).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                prop_assert!(r <= 1e-10 * scale, "residual {r}");
            }
            let trace: C64 = d.eigenvalues.iter().sum();
            prop_assert!((trace - a.trace()).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn hermitian_eigenvalues_are_real(a in any_matrix()) {
        let h = &a + &a.adjoint();
        let d = eig(&h);
        prop_assume!(d.is_ok());
        for l in &d.unwrap().eigenvalues {
            prop_assert!(l.im.abs() <= 1e-12 * h.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn spectral_norm_is_between_max_entry_and_frobenius(a in any_matrix()) {
        let s = spectral_norm(&a).unwrap();
        prop_assert!(s <= a.frobenius_norm() * (1.0 + 1e-12));
        prop_assert!(s >= a.max_abs() * (1.0 - 1e-12));
    }

    #[test]
    fn biorthogonal_resolutions((h, lambdas) in real_spectrum_hamiltonian()) {
        let es = EigenSystem::from_matrix(0.0, h.clone(), 1e-6).unwrap();
        prop_assert!(es.biorthogonality_residual() <= 1e-9);
        prop_assert!(es.identity_resolution_residual() <= 1e-9);
        prop_assert!(es.hamiltonian_resolution_residual() <= 1e-9);
        for (got, want) in es.lambdas.iter().zip(&lambdas) {
            prop_assert!((got.re - want).abs() <= 1e-9 * (1.0 + want.abs()));
            prop_assert!(got.im.abs() <= 1e-9);
        }
    }

    #[test]
    fn reduced_resolvent_identities((h, _) in real_spectrum_hamiltonian(), pick in 0usize..6) {
        let es = EigenSystem::from_matrix(0.0, h.clone(), 1e-6).unwrap();
        let n = es.dim();
        let j = pick % n;
        let s = reduced_resolvent(&es, j).unwrap();
        let p = es.projector(j);
        let shifted = h.shifted(es.lambdas[j]);
        let scale = s.frobenius_norm().max(1.0) * h.frobenius_norm().max(1.0);
        // S (H − λ_j) = (H − λ_j) S = I − P_j and S P_j = P_j S = 0.
        let complement = &ComplexMatrix::identity(n) - &p;
        prop_assert!((&(&s * &shifted) - &complement).frobenius_norm() <= 1e-9 * scale);
        prop_assert!((&(&shifted * &s) - &complement).frobenius_norm() <= 1e-9 * scale);
        prop_assert!((&s * &p).frobenius_norm() <= 1e-9 * scale);
        prop_assert!((&p * &s).frobenius_norm() <= 1e-9 * scale);
    }

    #[test]
    fn groenwall_bound_dominates_alpha_and_is_monotone_in_beta(
        alpha in prop::collection::vec(0.1..2.0f64, 33),
        beta in prop::collection::vec(0.0..3.0f64, 33),
        extra in 0.0..1.0f64,
    ) {
        let h = 1.0 / 32.0;
        let u = groenwall_bound(&alpha, &beta, h).unwrap();
        let bigger: Vec<f64> = beta.iter().map(|b| b + extra).collect();
        let w = groenwall_bound(&alpha, &bigger, h).unwrap();
        for k in 0..alpha.len() {
            prop_assert!(u[k] >= alpha[k] * (1.0 - 1e-14));
            prop_assert!(w[k] >= u[k] * (1.0 - 1e-14));
        }
    }
}
