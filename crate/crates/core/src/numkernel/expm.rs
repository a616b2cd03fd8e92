use super::{ComplexMatrix, KernelError};

/// Norm above which `mat_exp` refuses to run: exponentials this large are a
/// symptom of an oversized integrator step.
pub const DEFAULT_EXP_NORM_CAP: f64 = 1.0e3;

/// Scaled norm target before the Taylor kernel is applied.
const SCALED_NORM: f64 = 0.5;
const MAX_TAYLOR_DEGREE: usize = 24;

/// `e^A` by scaling and squaring with a truncated Taylor kernel.
pub fn mat_exp(a: &ComplexMatrix) -> Result<ComplexMatrix, KernelError> {
    mat_exp_with_cap(a, DEFAULT_EXP_NORM_CAP)
}

pub fn mat_exp_with_cap(a: &ComplexMatrix, cap: f64) -> Result<ComplexMatrix, KernelError> {
    if !a.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let norm = a.inf_norm();
    if norm > cap {
        return Err(KernelError::OverflowRisk { norm, cap });
    }
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale_real(0.5_f64.powi(squarings));
    let theta = norm * 0.5_f64.powi(squarings);

    // Smallest degree m with θ^(m+1)/(m+1)! below a quarter ulp.
    let mut degree = 1;
    let mut remainder = theta;
    while degree < MAX_TAYLOR_DEGREE {
        remainder *= theta / (degree as f64 + 1.0);
        if remainder <= 2.0_f64.powi(-55) {
            break;
        }
        degree += 1;
    }

    // Horner: I + A(I + A/2(I + A/3(...))).
    let n = a.dim();
    let eye = ComplexMatrix::identity(n);
    let mut acc = eye.clone();
    for k in (1..=degree).rev() {
        let term = (&scaled * &acc).scale_real(1.0 / k as f64);
        acc = &eye + &term;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{C64, I, ONE};
    use std::f64::consts::PI;

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(
            mat_exp(&ComplexMatrix::zeros(3)).unwrap(),
            ComplexMatrix::identity(3)
        );
    }

    #[test]
    fn diagonal_scalar_exponentials() {
        let a = ComplexMatrix::from_diag(&[I * PI, C64::new(0.0, 0.0)]);
        let e = mat_exp(&a).unwrap();
        let expected = ComplexMatrix::from_diag(&[-ONE, ONE]);
        assert!((&e - &expected).max_abs() < 1e-14);
    }

    #[test]
    fn skew_generator_gives_rotation() {
        for &theta in &[0.1, 1.0, 2.5, 7.0] {
            let a = ComplexMatrix::from_real_rows(&[vec![0.0, theta], vec![-theta, 0.0]])
                .unwrap();
            let e = mat_exp(&a).unwrap();
            let (s, c) = f64::sin_cos(theta);
            let expected =
                ComplexMatrix::from_real_rows(&[vec![c, s], vec![-s, c]]).unwrap();
            assert!(
                (&e - &expected).max_abs() < 1e-13,
                "theta={theta}: {:?}",
                e
            );
        }
    }

    #[test]
    fn nilpotent_exponential_is_exact_series() {
        let a = ComplexMatrix::from_real_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let e = mat_exp(&a).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[vec![1.0, 3.0], vec![0.0, 1.0]]).unwrap();
        assert!((&e - &expected).max_abs() < 1e-13);
    }

    #[test]
    fn oversized_argument_is_rejected() {
        let a = ComplexMatrix::from_diag(&[C64::new(2e3, 0.0)]);
        assert!(matches!(mat_exp(&a), Err(KernelError::OverflowRisk { .. })));
    }
}
