//! General complex eigendecomposition: Householder reduction to upper
//! Hessenberg form, Wilkinson-shifted QR sweeps (Givens rotations) to a
//! complex Schur form `A = Z T Zᴴ`, then eigenvectors of the triangular
//! factor by back-substitution.

use super::{vec_norm, ComplexMatrix, KernelError, C64, ONE, ZERO};

/// Default residual tolerance, relative to ‖A‖_F.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1.0e-10;
/// Eigenvalues closer than this (relative to ‖A‖_F) are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1.0e-10;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm right eigenvectors as columns, in eigenvalue order.
    pub right_vectors: ComplexMatrix,
    /// `max_i ‖A v_i − λ_i v_i‖₂`.
    pub residual: f64,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.right_vectors.column(i)
    }
}

pub fn eig(a: &ComplexMatrix) -> Result<EigenDecomposition, KernelError> {
    eig_with_tolerance(a, DEFAULT_RESIDUAL_TOL)
}

pub fn eig_with_tolerance(
    a: &ComplexMatrix,
    residual_tol: f64,
) -> Result<EigenDecomposition, KernelError> {
    if !a.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let n = a.dim();
    if n > super::MAX_DIM {
        return Err(KernelError::DimensionMismatch {
            expected: super::MAX_DIM,
            actual: n,
        });
    }
    let scale = a.frobenius_norm();
    if n == 1 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![a[(0, 0)]],
            right_vectors: ComplexMatrix::identity(1),
            residual: 0.0,
        });
    }

    let (mut t, mut z) = hessenberg(a);
    schur_qr(&mut t, &mut z, scale)?;

    let lambdas = t.diagonal();
    for i in 0..n {
        for k in (i + 1)..n {
            let gap = (lambdas[i] - lambdas[k]).norm();
            if gap < DEGENERACY_TOL * scale.max(f64::MIN_POSITIVE) {
                return Err(KernelError::DefectiveOrIllConditioned {
                    reason: format!(
                        "eigenvalues {} and {} are closer than {:.1e}·‖A‖ (gap {:.3e})",
                        lambdas[i], lambdas[k], DEGENERACY_TOL, gap
                    ),
                });
            }
        }
    }

    let tri_vectors = triangular_eigenvectors(&t, scale);
    let vectors = &z * &tri_vectors;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        lambdas[x]
            .re
            .total_cmp(&lambdas[y].re)
            .then(lambdas[x].im.total_cmp(&lambdas[y].im))
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut right_vectors = ComplexMatrix::zeros(n);
    let mut residual: f64 = 0.0;
    for (slot, &idx) in order.iter().enumerate() {
        let lambda = lambdas[idx];
        let v = normalize_phase(&vectors.column(idx));
        let av = a.mul_vec(&v);
        let r = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r);
        eigenvalues.push(lambda);
        right_vectors.set_column(slot, &v);
    }

    if residual > residual_tol * scale.max(f64::MIN_POSITIVE) {
        return Err(KernelError::DefectiveOrIllConditioned {
            reason: format!(
                "eigenvector residual {:.3e} exceeds {:.1e}·‖A‖",
                residual, residual_tol
            ),
        });
    }

    Ok(EigenDecomposition {
        eigenvalues,
        right_vectors,
        residual,
    })
}

/// Unit norm, largest-magnitude component real and positive.
fn normalize_phase(v: &[C64]) -> Vec<C64> {
    let norm = vec_norm(v);
    let pivot = v
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap_or(ONE);
    let phase = if pivot.norm() > 0.0 {
        pivot.conj() / pivot.norm()
    } else {
        ONE
    };
    v.iter().map(|z| z * phase / norm).collect()
}

/// Householder reduction `A = Q H Qᴴ`; returns `(H, Q)`.
fn hessenberg(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let mut h = a.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = ((k + 1)..n).map(|r| h[(r, k)]).collect();
        let tail: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let xnorm = vec_norm(&x);
        let phase = if x[0].norm() > 0.0 {
            x[0] / x[0].norm()
        } else {
            ONE
        };
        let mut u = x.clone();
        u[0] += phase * xnorm;
        let unorm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        // P = I − 2 u uᴴ / (uᴴu) acting on rows/cols k+1..n.
        let off = k + 1;
        for c in 0..n {
            let dot: C64 = (0..u.len()).map(|i| u[i].conj() * h[(off + i, c)]).sum();
            let f = dot * (2.0 / unorm2);
            for i in 0..u.len() {
                h[(off + i, c)] -= u[i] * f;
            }
        }
        for m in [&mut h, &mut q] {
            for r in 0..n {
                let dot: C64 = (0..u.len()).map(|i| m[(r, off + i)] * u[i]).sum();
                let f = dot * (2.0 / unorm2);
                for i in 0..u.len() {
                    m[(r, off + i)] -= f * u[i].conj();
                }
            }
        }
        for r in (k + 2)..n {
            h[(r, k)] = ZERO;
        }
    }
    (h, q)
}

/// Reduces upper Hessenberg `t` to upper triangular form in place,
/// accumulating rotations into `z`.
fn schur_qr(t: &mut ComplexMatrix, z: &mut ComplexMatrix, scale: f64) -> Result<(), KernelError> {
    let n = t.dim();
    let eps = f64::EPSILON;
    let small = eps * scale.max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter_since_deflation = 0usize;
    let mut total = 0usize;
    let cap = MAX_SWEEPS_PER_EIGENVALUE * n;

    while hi > 0 {
        // Find the top of the unreduced block ending at `hi`.
        let mut lo = hi;
        while lo > 0 {
            let sub = t[(lo, lo - 1)].norm();
            let diag = t[(lo, lo)].norm() + t[(lo - 1, lo - 1)].norm();
            if sub <= eps * diag || sub <= small {
                t[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter_since_deflation = 0;
            continue;
        }
        total += 1;
        iter_since_deflation += 1;
        if total > cap {
            return Err(KernelError::DefectiveOrIllConditioned {
                reason: format!("QR iteration did not converge in {cap} sweeps"),
            });
        }

        let shift = if iter_since_deflation % 11 == 10 {
            // Exceptional shift to break cycles.
            t[(hi, hi)] + C64::new(0.75 * t[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(
                t[(hi - 1, hi - 1)],
                t[(hi - 1, hi)],
                t[(hi, hi - 1)],
                t[(hi, hi)],
            )
        };
        qr_sweep(t, z, lo, hi, shift);
    }
    Ok(())
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mid = (a + d) * 0.5;
    let l1 = mid + disc;
    let l2 = mid - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// One explicit shifted QR step `T − μ = QR, T ← RQ + μ` on the block
/// `lo..=hi`, applied so that the full matrix stays a Schur-form similarity.
fn qr_sweep(t: &mut ComplexMatrix, z: &mut ComplexMatrix, lo: usize, hi: usize, shift: C64) {
    let n = t.dim();
    for i in lo..=hi {
        t[(i, i)] -= shift;
    }
    let mut rotations = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let a = t[(k, k)];
        let b = t[(k + 1, k)];
        let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (c, s) = if r == 0.0 { (ONE, ZERO) } else { (a / r, b / r) };
        // G = [[c̄, s̄], [−s, c]] on rows k, k+1.
        for col in k..n {
            let x = t[(k, col)];
            let y = t[(k + 1, col)];
            t[(k, col)] = c.conj() * x + s.conj() * y;
            t[(k + 1, col)] = -s * x + c * y;
        }
        t[(k + 1, k)] = ZERO;
        rotations.push((c, s));
    }
    for (offset, &(c, s)) in rotations.iter().enumerate() {
        let k = lo + offset;
        // Right-multiply columns k, k+1 by Gᴴ = [[c, −s̄], [s, c̄]].
        let row_end = (k + 2).min(hi + 1);
        for row in 0..row_end {
            let x = t[(row, k)];
            let y = t[(row, k + 1)];
            t[(row, k)] = x * c + y * s;
            t[(row, k + 1)] = -x * s.conj() + y * c.conj();
        }
        for row in 0..n {
            let x = z[(row, k)];
            let y = z[(row, k + 1)];
            z[(row, k)] = x * c + y * s;
            z[(row, k + 1)] = -x * s.conj() + y * c.conj();
        }
    }
    for i in lo..=hi {
        t[(i, i)] += shift;
    }
}

/// Columns `y_k` solving `(T − t_kk) y_k = 0` with `y_k[k] = 1`.
fn triangular_eigenvectors(t: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    let n = t.dim();
    let floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut y = ComplexMatrix::zeros(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for m in (i + 1)..=k {
                acc += t[(i, m)] * y[(m, k)];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < floor {
                denom = C64::new(floor, 0.0);
            }
            y[(i, k)] = -acc / denom;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::I;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn diagonal_matrix_gives_standard_basis() {
        let a = ComplexMatrix::from_diag(&[re(1.0), re(2.0), re(3.0)]);
        let d = eig(&a).unwrap();
        assert_eq!(d.eigenvalues, vec![re(1.0), re(2.0), re(3.0)]);
        assert_eq!(d.right_vectors, ComplexMatrix::identity(3));
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn pt_dimer_real_pair() {
        // λ² − (1 − γ²) = 0.
        let g = 0.5;
        let a = ComplexMatrix::from_rows(&[vec![I * g, ONE], vec![ONE, -I * g]]).unwrap();
        let d = eig(&a).unwrap();
        let e = (1.0_f64 - g * g).sqrt();
        assert!((d.eigenvalues[0] - re(-e)).norm() < 1e-14);
        assert!((d.eigenvalues[1] - re(e)).norm() < 1e-14);
        assert!((e - 0.866_025_403_784_438_6).abs() < 1e-15);
    }

    #[test]
    fn jordan_block_is_defective() {
        let a = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            eig(&a),
            Err(KernelError::DefectiveOrIllConditioned { .. })
        ));
    }

    #[test]
    fn sorted_by_real_then_imaginary() {
        let a = ComplexMatrix::from_diag(&[
            C64::new(1.0, 2.0),
            C64::new(-1.0, 0.0),
            C64::new(1.0, -2.0),
        ]);
        let d = eig(&a).unwrap();
        assert_eq!(
            d.eigenvalues,
            vec![C64::new(-1.0, 0.0), C64::new(1.0, -2.0), C64::new(1.0, 2.0)]
        );
    }

    #[test]
    fn random_dense_matrices_meet_residual_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=16 {
            for _ in 0..5 {
                let a = ComplexMatrix::from_fn(n, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let d = eig(&a).unwrap();
                assert!(d.residual <= 1e-10 * a.frobenius_norm());
                for i in 0..n {
                    assert!((vec_norm(&d.vector(i)) - 1.0).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn companion_matrix_roots() {
        // Roots 1, 2, 3, 4 of (x−1)(x−2)(x−3)(x−4) = x⁴ −10x³ +35x² −50x +24.
        let a = ComplexMatrix::from_real_rows(&[
            vec![10.0, -35.0, 50.0, -24.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let d = eig(&a).unwrap();
        for (k, lambda) in d.eigenvalues.iter().enumerate() {
            assert!((lambda - re(k as f64 + 1.0)).norm() < 1e-9, "{lambda}");
        }
    }
}
