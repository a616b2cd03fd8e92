use super::{ComplexMatrix, KernelError};

const SQUARING_CAP: usize = 64;

/// A norm value together with whether the Frobenius fallback was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub frobenius_fallback: bool,
}

/// Largest singular value ‖A‖₂.
///
/// Power iteration on `AᴴA` started from the identity, accelerated by
/// repeated squaring: `P ← P²/‖P²‖_F` converges to (a multiple of) the
/// projector onto the dominant eigenspace of `AᴴA` even when the top singular
/// values are clustered. The value is then the Rayleigh quotient `‖Ax‖/‖x‖`
/// on the dominant column of `P`.
pub fn spectral_norm(a: &ComplexMatrix) -> Result<f64, KernelError> {
    if !a.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let scale = a.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if a.dim() == 1 {
        return Ok(a[(0, 0)].norm());
    }
    let unit = a.scale_real(1.0 / scale);
    let gram = &unit.adjoint() * &unit;
    let mut p = gram.scale_real(1.0 / gram.frobenius_norm());
    let mut converged = false;
    for _ in 0..SQUARING_CAP {
        let sq = &p * &p;
        let f = sq.frobenius_norm();
        if !(f.is_finite() && f > 0.0) {
            return Err(KernelError::NonConvergence {
                iterations: SQUARING_CAP,
            });
        }
        let next = sq.scale_real(1.0 / f);
        let delta = (&next - &p).frobenius_norm();
        p = next;
        if delta <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(KernelError::NonConvergence {
            iterations: SQUARING_CAP,
        });
    }
    let best_col = (0..p.dim())
        .max_by(|&x, &y| {
            let nx = super::vec_norm(&p.column(x));
            let ny = super::vec_norm(&p.column(y));
            nx.total_cmp(&ny)
        })
        .unwrap_or(0);
    let x = p.column(best_col);
    let ax = unit.mul_vec(&x);
    Ok(scale * super::vec_norm(&ax) / super::vec_norm(&x))
}

/// Spectral norm, or the Frobenius norm (an upper bound) flagged as fallback
/// when power iteration does not converge.
pub fn spectral_norm_or_frobenius(a: &ComplexMatrix) -> NormEstimate {
    match spectral_norm(a) {
        Ok(value) => NormEstimate {
            value,
            frobenius_fallback: false,
        },
        Err(_) => NormEstimate {
            value: a.frobenius_norm(),
            frobenius_fallback: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::C64;

    #[test]
    fn zero_matrix_has_zero_norm() {
        assert_eq!(spectral_norm(&ComplexMatrix::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_norm_is_max_abs() {
        let a = ComplexMatrix::from_diag(&[C64::new(1.0, 0.0), C64::new(-3.0, 0.0)]);
        assert!((spectral_norm(&a).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn nilpotent_norm() {
        // AᴴA = diag(0, 4) so σ_max = 2.
        let a = ComplexMatrix::from_real_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&a).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unitary_has_unit_norm() {
        let t = 0.37_f64;
        let a = ComplexMatrix::from_rows(&[
            vec![C64::new(t.cos(), 0.0), C64::new(0.0, t.sin())],
            vec![C64::new(0.0, t.sin()), C64::new(t.cos(), 0.0)],
        ])
        .unwrap();
        assert!((spectral_norm(&a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clustered_singular_values() {
        let a = ComplexMatrix::from_diag(&[
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0 - 1e-9),
            C64::new(0.3, 0.0),
        ]);
        assert!((spectral_norm(&a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_norm_matches_vector_norms() {
        let u = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)];
        let w = vec![C64::new(0.3, 0.0), C64::new(0.0, -1.0), C64::new(2.0, 0.5)];
        let a = ComplexMatrix::outer(&u, &w);
        let expected = crate::numkernel::vec_norm(&u) * crate::numkernel::vec_norm(&w);
        assert!((spectral_norm(&a).unwrap() - expected).abs() < 1e-12 * expected);
    }
}
