use super::{ComplexMatrix, KernelError, C64, ONE, ZERO};

const SINGULAR_PIVOT_RELATIVE: f64 = 1.0e-13;

struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
}

fn factor(a: &ComplexMatrix) -> Result<Lu, KernelError> {
    if !a.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let n = a.dim();
    let threshold = SINGULAR_PIVOT_RELATIVE * a.inf_norm();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let (pivot_row, magnitude) = (k..n)
            .map(|r| (r, lu[(r, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if magnitude <= threshold || magnitude == 0.0 {
            return Err(KernelError::SingularMatrix {
                pivot_index: k,
                magnitude,
            });
        }
        if pivot_row != k {
            perm.swap(k, pivot_row);
            for c in 0..n {
                let tmp = lu[(k, c)];
                lu[(k, c)] = lu[(pivot_row, c)];
                lu[(pivot_row, c)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for r in (k + 1)..n {
            let factor = lu[(r, k)] / pivot;
            lu[(r, k)] = factor;
            if factor == ZERO {
                continue;
            }
            for c in (k + 1)..n {
                let u = lu[(k, c)];
                lu[(r, c)] -= factor * u;
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve_in_place(&self, rhs: &[C64]) -> Vec<C64> {
        let n = self.lu.dim();
        let mut x: Vec<C64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in (r + 1)..n {
                acc -= self.lu[(r, c)] * x[c];
            }
            x[r] = acc / self.lu[(r, r)];
        }
        x
    }
}

/// Inverse via LU with partial pivoting.
///
/// Fails with `SingularMatrix` when a pivot falls below `1e-13·‖A‖∞`.
pub fn mat_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix, KernelError> {
    let lu = factor(a)?;
    let n = a.dim();
    let mut inv = ComplexMatrix::zeros(n);
    let mut e = vec![ZERO; n];
    for c in 0..n {
        e.iter_mut().for_each(|z| *z = ZERO);
        e[c] = ONE;
        let col = lu.solve_in_place(&e);
        inv.set_column(c, &col);
    }
    Ok(inv)
}

/// Solves `A x = b`.
pub fn solve(a: &ComplexMatrix, b: &[C64]) -> Result<Vec<C64>, KernelError> {
    if b.len() != a.dim() {
        return Err(KernelError::DimensionMismatch {
            expected: a.dim(),
            actual: b.len(),
        });
    }
    Ok(factor(a)?.solve_in_place(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn identity_inverse_is_identity() {
        let eye = ComplexMatrix::identity(3);
        assert_eq!(mat_inverse(&eye).unwrap(), eye);
    }

    #[test]
    fn diagonal_inverse_is_reciprocal() {
        let a = ComplexMatrix::from_diag(&[c(2.0), c(4.0)]);
        let inv = mat_inverse(&a).unwrap();
        assert_eq!(inv, ComplexMatrix::from_diag(&[c(0.5), c(0.25)]));
    }

    #[test]
    fn random_well_conditioned_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let a = ComplexMatrix::from_fn(n, |r, col| {
            let d = if r == col { 3.0 } else { 0.0 };
            C64::new(d + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let b = mat_inverse(&a).unwrap();
        let resid = (&(&a * &b) - &ComplexMatrix::identity(n)).frobenius_norm();
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            mat_inverse(&a),
            Err(KernelError::SingularMatrix { pivot_index: 1, .. })
        ));
    }

    #[test]
    fn solve_matches_inverse() {
        let a = ComplexMatrix::from_rows(&[
            vec![C64::new(1.0, 1.0), c(2.0)],
            vec![c(0.5), C64::new(0.0, -3.0)],
        ])
        .unwrap();
        let b = vec![c(1.0), C64::new(0.0, 1.0)];
        let x = solve(&a, &b).unwrap();
        let ax = a.mul_vec(&x);
        for (l, r) in ax.iter().zip(&b) {
            assert!((l - r).norm() < 1e-14);
        }
    }
}
