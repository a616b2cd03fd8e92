//! Biorthogonal eigensystems along a path: dual basis, spectral
//! resolutions, the reduced resolvent, and eigenvector continuation in `s`
//! with finite-difference derivatives.

use crate::hampath::{min_pairwise_gap, HamiltonianPath, PathError};
use crate::numkernel::{
    eig, inner, mat_inverse, vec_norm, vec_scale, vec_sub, ComplexMatrix, KernelError, C64, ZERO,
};

/// Tolerance on `‖ΞᴴV − I‖_F` and `‖Σ v_i ξ_iᴴ − I‖_F`.
pub const BIORTHOGONALITY_TOL: f64 = 1.0e-10;
/// Relative tolerance on `‖Σ λ_i v_i ξ_iᴴ − H‖_F / ‖H‖_F`.
pub const RESOLUTION_TOL: f64 = 1.0e-10;
pub const DEFAULT_GAP_MIN_REL: f64 = 1.0e-6;
pub const MIN_PATH_GRID: usize = 16;
/// `‖v_j(1) − v_j(0)‖` below which a cyclic eigenpath counts as closed.
pub const CLOSED_GAUGE_TOL: f64 = 1.0e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("spectral gap {gap:.3e} below gap_min {gap_min:.3e} at s = {s}")]
    GapTooSmall { s: f64, gap: f64, gap_min: f64 },
    #[error(
        "label {label} ambiguous at s = {s}: best overlap {best:.4}, runner-up {second:.4}; refine the grid"
    )]
    MatchingAmbiguous {
        s: f64,
        label: usize,
        best: f64,
        second: f64,
    },
    #[error("{what} residual {residual:.3e} exceeds tolerance at s = {s}")]
    ResidualTooLarge {
        s: f64,
        what: &'static str,
        residual: f64,
    },
    #[error("label {label} out of range for dimension {dim}")]
    InvalidLabel { label: usize, dim: usize },
    #[error("eigenpath grid needs at least {min} intervals, got {got}")]
    GridTooCoarse { got: usize, min: usize },
    #[error("path is not flagged cyclic")]
    PathNotCyclic,
    #[error("eigenvector {label} does not return to itself around the loop (mismatch {mismatch:.3e})")]
    GaugeNotClosed { label: usize, mismatch: f64 },
}

/// `Ξ` with `Ξᴴ = V⁻¹`: column `i` is the dual vector `ξ_i`.
pub fn biorthogonal_dual(v: &ComplexMatrix) -> Result<ComplexMatrix, KernelError> {
    Ok(mat_inverse(v)?.adjoint())
}

/// Eigenvalues, right eigenvectors and their duals of `H(s)` at one `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub s: f64,
    /// Complex so that diagnostic runs outside the real-spectrum regime
    /// can still be represented; use [`EigenSystem::lambda`] for `Re λ_i`.
    pub lambdas: Vec<C64>,
    pub v: ComplexMatrix,
    pub xi: ComplexMatrix,
    pub h: ComplexMatrix,
    pub gap_min: f64,
}

impl EigenSystem {
    /// Eigendecomposes `h` and checks the resolution invariants.
    pub fn from_matrix(s: f64, h: ComplexMatrix, gap_min_rel: f64) -> Result<Self, SpectralError> {
        let gap_min = gap_min_rel * h.frobenius_norm();
        let d = match eig(&h) {
            Ok(d) => d,
            Err(KernelError::DefectiveOrIllConditioned { .. }) => {
                return Err(SpectralError::GapTooSmall {
                    s,
                    gap: 0.0,
                    gap_min,
                })
            }
            Err(e) => return Err(e.into()),
        };
        Self::from_parts(s, h, d.eigenvalues, d.right_vectors, gap_min)
    }

    /// Builds the dual and verifies every invariant.
    pub fn from_parts(
        s: f64,
        h: ComplexMatrix,
        lambdas: Vec<C64>,
        v: ComplexMatrix,
        gap_min: f64,
    ) -> Result<Self, SpectralError> {
        let gap = min_pairwise_gap(&lambdas);
        if h.dim() > 1 && gap < gap_min {
            return Err(SpectralError::GapTooSmall { s, gap, gap_min });
        }
        let xi = biorthogonal_dual(&v)?;
        let es = Self {
            s,
            lambdas,
            v,
            xi,
            h,
            gap_min,
        };
        es.check_invariants()?;
        Ok(es)
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// `Re λ_j`.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambdas[j].re
    }

    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.v.column(j)
    }

    pub fn dual(&self, j: usize) -> Vec<C64> {
        self.xi.column(j)
    }

    /// `P_j = v_j ξ_jᴴ`.
    pub fn projector(&self, j: usize) -> ComplexMatrix {
        ComplexMatrix::outer(&self.v.column(j), &self.xi.column(j))
    }

    pub fn biorthogonality_residual(&self) -> f64 {
        let n = self.dim();
        (&(&self.xi.adjoint() * &self.v) - &ComplexMatrix::identity(n)).frobenius_norm()
    }

    /// `‖Σ_i v_i ξ_iᴴ − I‖_F`.
    pub fn identity_resolution_residual(&self) -> f64 {
        let n = self.dim();
        let mut sum = ComplexMatrix::zeros(n);
        for i in 0..n {
            sum = &sum + &self.projector(i);
        }
        (&sum - &ComplexMatrix::identity(n)).frobenius_norm()
    }

    /// `‖Σ_i λ_i v_i ξ_iᴴ − H‖_F / ‖H‖_F`.
    pub fn hamiltonian_resolution_residual(&self) -> f64 {
        let n = self.dim();
        let mut sum = ComplexMatrix::zeros(n);
        for i in 0..n {
            sum = &sum + &self.projector(i).scale(self.lambdas[i]);
        }
        (&sum - &self.h).frobenius_norm() / self.h.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    pub fn check_invariants(&self) -> Result<(), SpectralError> {
        let checks = [
            ("biorthogonality", self.biorthogonality_residual(), BIORTHOGONALITY_TOL),
            ("identity resolution", self.identity_resolution_residual(), BIORTHOGONALITY_TOL),
            ("spectral resolution", self.hamiltonian_resolution_residual(), RESOLUTION_TOL),
        ];
        for (what, residual, tol) in checks {
            if !(residual <= tol) {
                return Err(SpectralError::ResidualTooLarge {
                    s: self.s,
                    what,
                    residual,
                });
            }
        }
        Ok(())
    }
}

/// `S = Σ_{i≠j} (λ_i − λ_j)⁻¹ v_i ξ_iᴴ` with the system's own `gap_min`.
pub fn reduced_resolvent(es: &EigenSystem, j: usize) -> Result<ComplexMatrix, SpectralError> {
    reduced_resolvent_with_gap(es, j, es.gap_min)
}

pub fn reduced_resolvent_with_gap(
    es: &EigenSystem,
    j: usize,
    gap_min: f64,
) -> Result<ComplexMatrix, SpectralError> {
    let n = es.dim();
    if j >= n {
        return Err(SpectralError::InvalidLabel { label: j, dim: n });
    }
    let mut s = ComplexMatrix::zeros(n);
    for i in (0..n).filter(|&i| i != j) {
        let diff = es.lambdas[i] - es.lambdas[j];
        if diff.norm() < gap_min {
            return Err(SpectralError::GapTooSmall {
                s: es.s,
                gap: diff.norm(),
                gap_min,
            });
        }
        s = &s + &es.projector(i).scale(diff.inv());
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub gap_min_rel: f64,
    /// Minimum separation between the best and runner-up overlap.
    pub match_margin: f64,
    /// Minimum accepted `|ξ_j(s_k)ᴴ v_j(s_{k+1})|`.
    pub min_overlap: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            gap_min_rel: DEFAULT_GAP_MIN_REL,
            match_margin: 0.1,
            min_overlap: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VdotSource {
    /// Finite differences; `truncation_error` is the Richardson estimate
    /// `max ‖D_h − D_{2h}‖ / 3` over nodes and labels.
    FiniteDifference { truncation_error: f64 },
    Analytic,
}

/// Eigensystems on a uniform grid with consistent labels and a continuous gauge.
#[derive(Debug, Clone)]
pub struct EigenPath {
    grid: Vec<f64>,
    systems: Vec<EigenSystem>,
    /// Per node, columns are `v̇_j(s_k)`.
    vdots: Option<Vec<ComplexMatrix>>,
    vdot_source: Option<VdotSource>,
    gauge_constant: f64,
    matching_quality: f64,
    cyclic: bool,
}

impl EigenPath {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn systems(&self) -> &[EigenSystem] {
        &self.systems
    }

    pub fn system(&self, k: usize) -> &EigenSystem {
        &self.systems[k]
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    pub fn dim(&self) -> usize {
        self.systems[0].dim()
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    /// `C` with `‖v_j(s_{k+1}) − v_j(s_k)‖ ≤ C·Δs` for all `j, k`.
    pub fn gauge_constant(&self) -> f64 {
        self.gauge_constant
    }

    /// `min_{j,k} |ξ_j(s_k)ᴴ v_j(s_{k+1})|`.
    pub fn matching_quality(&self) -> f64 {
        self.matching_quality
    }

    pub fn vdot_source(&self) -> Option<VdotSource> {
        self.vdot_source
    }

    pub fn vdots(&self) -> Option<&[ComplexMatrix]> {
        self.vdots.as_deref()
    }

    pub fn vdot(&self, k: usize, j: usize) -> Option<Vec<C64>> {
        self.vdots.as_ref().map(|d| d[k].column(j))
    }

    /// `ξ_j(s_k)ᴴ v̇_j(s_k)` at every node, once derivatives exist.
    pub fn connection(&self, j: usize) -> Option<Vec<C64>> {
        let vdots = self.vdots.as_ref()?;
        Some(
            self.systems
                .iter()
                .zip(vdots)
                .map(|(es, d)| inner(&es.dual(j), &d.column(j)))
                .collect(),
        )
    }

    /// Installs exact derivatives; they take precedence over finite differences.
    pub fn with_vdots(mut self, vdots: Vec<ComplexMatrix>) -> Self {
        assert_eq!(vdots.len(), self.grid.len(), "one derivative matrix per node");
        self.vdots = Some(vdots);
        self.vdot_source = Some(VdotSource::Analytic);
        self
    }

    fn from_systems(systems: Vec<EigenSystem>, cyclic: bool) -> Self {
        let grid = systems.iter().map(|e| e.s).collect();
        let mut ep = Self {
            grid,
            systems,
            vdots: None,
            vdot_source: None,
            gauge_constant: 0.0,
            matching_quality: 1.0,
            cyclic,
        };
        ep.refresh_metadata();
        ep
    }

    fn refresh_metadata(&mut self) {
        let n = self.dim();
        let mut c: f64 = 0.0;
        let mut q: f64 = f64::INFINITY;
        for w in self.systems.windows(2) {
            let ds = w[1].s - w[0].s;
            for j in 0..n {
                let vj0 = w[0].vector(j);
                let vj1 = w[1].vector(j);
                c = c.max(vec_norm(&vec_sub(&vj1, &vj0)) / ds);
                q = q.min(inner(&w[0].dual(j), &vj1).norm());
            }
        }
        self.gauge_constant = c;
        self.matching_quality = q;
    }

    /// Reruns label matching and phase alignment on the stored systems.
    pub fn rematch(&self, options: ContinuationOptions) -> Result<Self, SpectralError> {
        let mut systems = Vec::with_capacity(self.systems.len());
        systems.push(self.systems[0].clone());
        for next in &self.systems[1..] {
            let prev = systems.last().unwrap();
            systems.push(match_and_align(prev, next.clone(), options)?);
        }
        Ok(Self::from_systems(systems, self.cyclic))
    }

    /// Multiplies each `v_j(s)` by `exp(−s·log c_j)`, `c_j = ξ_j(0)ᴴ v_j(1)`,
    /// so that the continued basis closes on itself: `v_j(1) = v_j(0)`.
    /// Derivatives are dropped and must be recomputed.
    pub fn close_gauge(&self) -> Result<Self, SpectralError> {
        if !self.cyclic {
            return Err(SpectralError::PathNotCyclic);
        }
        let n = self.dim();
        let first = &self.systems[0];
        let last = self.systems.last().unwrap();
        let mut logs = Vec::with_capacity(n);
        for j in 0..n {
            let vj0 = first.vector(j);
            let vj1 = last.vector(j);
            let c = inner(&first.dual(j), &vj1);
            let mismatch = vec_norm(&vec_sub(&vj1, &vec_scale(&vj0, c)));
            if !(mismatch <= 1.0e-8) || c.norm() < 0.5 {
                return Err(SpectralError::GaugeNotClosed { label: j, mismatch });
            }
            logs.push(c.ln());
        }
        let mut systems = Vec::with_capacity(self.systems.len());
        for es in &self.systems {
            let mut v = es.v.clone();
            for (j, log_c) in logs.iter().enumerate() {
                let mu = (-log_c * es.s).exp();
                v.set_column(j, &vec_scale(&es.vector(j), mu));
            }
            systems.push(EigenSystem::from_parts(
                es.s,
                es.h.clone(),
                es.lambdas.clone(),
                v,
                es.gap_min,
            )?);
        }
        let out = Self::from_systems(systems, true);
        let (first, last) = (&out.systems[0], out.systems.last().unwrap());
        for j in 0..n {
            let mismatch = vec_norm(&vec_sub(&last.vector(j), &first.vector(j)));
            if !(mismatch <= CLOSED_GAUGE_TOL) {
                return Err(SpectralError::GaugeNotClosed { label: j, mismatch });
            }
        }
        Ok(out)
    }
}

fn match_and_align(
    prev: &EigenSystem,
    next: EigenSystem,
    options: ContinuationOptions,
) -> Result<EigenSystem, SpectralError> {
    let n = prev.dim();
    let mut assignment = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for j in 0..n {
        let xj = prev.dual(j);
        let mut overlaps: Vec<(f64, usize)> = (0..n)
            .map(|i| (inner(&xj, &next.vector(i)).norm(), i))
            .collect();
        overlaps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (best, i) = overlaps[0];
        let second = overlaps.get(1).map_or(0.0, |o| o.0);
        if best - second < options.match_margin || best < options.min_overlap || taken[i] {
            return Err(SpectralError::MatchingAmbiguous {
                s: next.s,
                label: j,
                best,
                second,
            });
        }
        taken[i] = true;
        assignment[j] = i;
    }

    let mut v = ComplexMatrix::zeros(n);
    let mut lambdas = vec![ZERO; n];
    for j in 0..n {
        let raw = next.vector(assignment[j]);
        // The unit-modulus factor minimizing ‖e^{iθ}w − v‖ makes vᴴw real positive.
        let overlap = inner(&prev.vector(j), &raw);
        let phase = if overlap.norm() > 0.0 {
            (overlap / overlap.norm()).conj()
        } else {
            C64::new(1.0, 0.0)
        };
        v.set_column(j, &vec_scale(&raw, phase));
        lambdas[j] = next.lambdas[assignment[j]];
    }
    EigenSystem::from_parts(next.s, next.h, lambdas, v, next.gap_min)
}

/// Eigendecomposes `H(s_k)` on `M + 1` uniform nodes and continues labels
/// and phases from `s = 0`.
pub fn continue_eigenpath(path: &HamiltonianPath, m: usize) -> Result<EigenPath, SpectralError> {
    continue_eigenpath_with(path, m, ContinuationOptions::default())
}

pub fn continue_eigenpath_with(
    path: &HamiltonianPath,
    m: usize,
    options: ContinuationOptions,
) -> Result<EigenPath, SpectralError> {
    if m < MIN_PATH_GRID {
        return Err(SpectralError::GridTooCoarse {
            got: m,
            min: MIN_PATH_GRID,
        });
    }
    let mut systems: Vec<EigenSystem> = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let s = k as f64 / m as f64;
        let es = EigenSystem::from_matrix(s, path.sample_checked(s)?, options.gap_min_rel)?;
        let es = match systems.last() {
            Some(prev) => match_and_align(prev, es, options)?,
            None => es,
        };
        systems.push(es);
    }
    Ok(EigenPath::from_systems(systems, path.is_cyclic()))
}

/// Fills `ep.vdots` by second-order finite differences unless analytic
/// derivatives are already installed. Closed cyclic eigenpaths use central
/// differences that wrap around the loop. Returns the Richardson estimate of
/// the truncation error (zero for analytic derivatives).
pub fn eigenpath_derivative(ep: &mut EigenPath) -> f64 {
    if let Some(VdotSource::Analytic) = ep.vdot_source {
        return 0.0;
    }
    let m = ep.intervals();
    let n = ep.dim();
    let h = ep.step();
    let cols: Vec<Vec<Vec<C64>>> = ep
        .systems
        .iter()
        .map(|es| (0..n).map(|j| es.vector(j)).collect())
        .collect();

    let periodic = ep.cyclic
        && (0..n).all(|j| {
            vec_norm(&vec_sub(&cols[m][j], &cols[0][j])) <= CLOSED_GAUGE_TOL
        });

    let fd = |k: usize, j: usize, stride: usize| -> Option<Vec<C64>> {
        let v = |i: usize| &cols[i][j];
        let hs = h * stride as f64;
        let combine = |terms: &[(f64, usize)], denom: f64| -> Vec<C64> {
            (0..n)
                .map(|r| terms.iter().map(|&(w, i)| v(i)[r] * w).sum::<C64>() / denom)
                .collect()
        };
        if k >= stride && k + stride <= m {
            Some(combine(&[(-1.0, k - stride), (1.0, k + stride)], 2.0 * hs))
        } else if periodic && 2 * stride <= m {
            // Node m coincides with node 0 on a closed loop.
            let back = (k + m - stride) % m;
            let ahead = (k + stride) % m;
            Some(combine(&[(-1.0, back), (1.0, ahead)], 2.0 * hs))
        } else if k == 0 && 2 * stride <= m {
            Some(combine(&[(-3.0, 0), (4.0, stride), (-1.0, 2 * stride)], 2.0 * hs))
        } else if k == m && 2 * stride <= m {
            Some(combine(&[(3.0, m), (-4.0, m - stride), (1.0, m - 2 * stride)], 2.0 * hs))
        } else {
            None
        }
    };

    let mut vdots = Vec::with_capacity(m + 1);
    let mut err: f64 = 0.0;
    for k in 0..=m {
        let mut d = ComplexMatrix::zeros(n);
        for j in 0..n {
            let v = &cols[k][j];
            let dh = unit_norm_projection(v, fd(k, j, 1).expect("grid has at least two intervals"));
            if let Some(d2h) = fd(k, j, 2).map(|d| unit_norm_projection(v, d)) {
                err = err.max(vec_norm(&vec_sub(&dh, &d2h)) / 3.0);
            }
            d.set_column(j, &dh);
        }
        vdots.push(d);
    }
    ep.vdots = Some(vdots);
    ep.vdot_source = Some(VdotSource::FiniteDifference {
        truncation_error: err,
    });
    err
}

/// Removes the component of `d` that would change `‖v‖`: a unit-norm gauge
/// has `Re(vᴴv̇) = 0` exactly, finite differences only to `O(h²)`.
fn unit_norm_projection(v: &[C64], d: Vec<C64>) -> Vec<C64> {
    let radial = inner(v, &d).re;
    d.iter().zip(v).map(|(di, vi)| di - vi * radial).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hampath::PathSpec;
    use crate::numkernel::ONE;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).frobenius_norm() <= tol
    }

    fn rotating_path() -> HamiltonianPath {
        HamiltonianPath::new(2, "rotating", |s: f64| {
            let (sn, cs) = s.sin_cos();
            // R(s)·diag(1, 2)·R(s)ᵀ with first column of R = (cos s, sin s)
            ComplexMatrix::from_real_rows(&[
                vec![cs * cs + 2.0 * sn * sn, -cs * sn],
                vec![-cs * sn, sn * sn + 2.0 * cs * cs],
            ])
            .unwrap()
        })
    }

    #[test]
    fn dual_of_identity_and_unitary() {
        let id = ComplexMatrix::identity(3);
        assert!(close(&biorthogonal_dual(&id).unwrap(), &id, 1e-15));
        let r = 0.5f64.sqrt();
        let u = ComplexMatrix::from_rows(&[vec![c(r), C64::new(0.0, r)], vec![C64::new(0.0, r), c(r)]])
            .unwrap();
        assert!(close(&biorthogonal_dual(&u).unwrap(), &u, 1e-14));
    }

    #[test]
    fn dual_of_shear() {
        let v = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let xi_h = biorthogonal_dual(&v).unwrap().adjoint();
        let expected = ComplexMatrix::from_real_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(close(&xi_h, &expected, 1e-15));
        assert!(close(&(&xi_h * &v), &ComplexMatrix::identity(2), 1e-15));
    }

    #[test]
    fn singular_basis_rejected() {
        let v = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            biorthogonal_dual(&v),
            Err(KernelError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn diagonal_resolvents() {
        let h = ComplexMatrix::from_diag(&[c(1.0), c(2.0)]);
        let es = EigenSystem::from_matrix(0.0, h, DEFAULT_GAP_MIN_REL).unwrap();
        let s0 = reduced_resolvent(&es, 0).unwrap();
        let s1 = reduced_resolvent(&es, 1).unwrap();
        assert!(close(&s0, &ComplexMatrix::from_diag(&[ZERO, ONE]), 1e-15));
        assert!(close(&s1, &ComplexMatrix::from_diag(&[c(-1.0), ZERO]), 1e-15));
        assert!(matches!(
            reduced_resolvent(&es, 2),
            Err(SpectralError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn pt_dimer_resolvent_identities() {
        let h = ComplexMatrix::from_rows(&[vec![C64::new(0.0, 0.5), ONE], vec![ONE, C64::new(0.0, -0.5)]])
            .unwrap();
        let es = EigenSystem::from_matrix(0.0, h.clone(), DEFAULT_GAP_MIN_REL).unwrap();
        let j = 1;
        assert!((es.lambda(j) - 0.75f64.sqrt()).abs() < 1e-14);
        let s = reduced_resolvent(&es, j).unwrap();
        let p = es.projector(j);
        let id = ComplexMatrix::identity(2);
        let lhs = &h.shifted(es.lambdas[j]) * &s;
        assert!(close(&lhs, &(&id - &p), 1e-9));
        assert!((&s * &p).frobenius_norm() < 1e-9);
        assert!((&p * &s).frobenius_norm() < 1e-9);
    }

    #[test]
    fn resolvent_refuses_small_gap() {
        let h = ComplexMatrix::from_diag(&[c(1.0), c(1.0 + 1e-4)]);
        let es = EigenSystem::from_matrix(0.0, h, 1e-9).unwrap();
        assert!(matches!(
            reduced_resolvent_with_gap(&es, 0, 1e-3),
            Err(SpectralError::GapTooSmall { .. })
        ));
    }

    #[test]
    fn hermitian_duals_match_vectors() {
        let path = PathSpec::hermitian2_default().build().unwrap();
        let es = EigenSystem::from_matrix(0.3, path.sample(0.3), DEFAULT_GAP_MIN_REL).unwrap();
        for j in 0..2 {
            assert!(vec_norm(&vec_sub(&es.dual(j), &es.vector(j))) < 1e-9);
        }
    }

    #[test]
    fn constant_path_gives_identical_systems() {
        let h = ComplexMatrix::from_diag(&[c(1.0), c(2.0)]);
        let mut ep = continue_eigenpath(&HamiltonianPath::constant(h), 16).unwrap();
        let first = ep.system(0).clone();
        for es in ep.systems() {
            assert_eq!(es.v, first.v);
            assert_eq!(es.lambdas, first.lambdas);
        }
        eigenpath_derivative(&mut ep);
        for d in ep.vdots().unwrap() {
            assert!(d.frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn grid_floor() {
        let p = HamiltonianPath::constant(ComplexMatrix::from_diag(&[c(1.0), c(2.0)]));
        assert!(matches!(
            continue_eigenpath(&p, 8),
            Err(SpectralError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn hermitian_rotating_labels_stable_under_refinement() {
        let path = PathSpec::hermitian2_default().build().unwrap();
        let a = continue_eigenpath(&path, 64).unwrap();
        let b = continue_eigenpath(&path, 128).unwrap();
        assert!(a.matching_quality() > 0.99);
        for k in 0..=64 {
            let (ea, eb) = (a.system(k), b.system(2 * k));
            for j in 0..2 {
                assert!((ea.lambdas[j] - eb.lambdas[j]).norm() < 1e-12);
                assert!(inner(&ea.vector(j), &eb.vector(j)).norm() > 0.999);
            }
        }
    }

    #[test]
    fn refinement_moves_vectors_little() {
        for spec in [
            PathSpec::hermitian2_default(),
            PathSpec::pt_dimer_default(),
            PathSpec::dressed_hermitian_default(),
        ] {
            let path = spec.build().unwrap();
            let a = continue_eigenpath(&path, 2048).unwrap();
            let b = continue_eigenpath(&path, 4096).unwrap();
            for k in 0..=2048 {
                for j in 0..2 {
                    let d = vec_norm(&vec_sub(&a.system(k).vector(j), &b.system(2 * k).vector(j)));
                    assert!(d <= 1e-6, "{} k={k} j={j} d={d:e}", spec.family_name());
                }
            }
        }
    }

    #[test]
    fn pt_ramp_stays_real() {
        let path = PathSpec::PtDimer {
            k: 1.0,
            gamma: crate::hampath::Profile::ramp(0.0, 0.5, crate::hampath::RampShape::Linear),
            phi: crate::hampath::Profile::constant(0.0),
            diagnostic: false,
        }
        .build()
        .unwrap();
        let ep = continue_eigenpath(&path, 64).unwrap();
        assert!(ep.matching_quality() > 0.95);
        for es in ep.systems() {
            let g = 0.5 * es.s;
            let w = (1.0 - g * g).sqrt();
            assert!((es.lambdas[0] - c(-w)).norm() < 1e-12);
            assert!((es.lambdas[1] - c(w)).norm() < 1e-12);
        }
    }

    #[test]
    fn rematch_is_idempotent() {
        let path = PathSpec::dressed_hermitian_default().build().unwrap();
        let ep = continue_eigenpath(&path, 64).unwrap();
        let again = ep.rematch(ContinuationOptions::default()).unwrap();
        for (a, b) in ep.systems().iter().zip(again.systems()) {
            assert_eq!(a.lambdas, b.lambdas);
            assert!(close(&a.v, &b.v, 1e-14));
        }
    }

    #[test]
    fn gauge_continuity_metadata() {
        let path = PathSpec::pt_dimer_default().build().unwrap();
        let ep = continue_eigenpath(&path, 128).unwrap();
        let c = ep.gauge_constant();
        assert!(c > 0.0 && c.is_finite());
        for w in ep.systems().windows(2) {
            for j in 0..2 {
                assert!(vec_norm(&vec_sub(&w[1].vector(j), &w[0].vector(j))) <= c * ep.step() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rotating_vector_derivative() {
        let path = rotating_path();
        let err_at = |m: usize| {
            let mut ep = continue_eigenpath(&path, m).unwrap();
            let est = eigenpath_derivative(&mut ep);
            let k = m / 2;
            let v0 = ep.system(k).vector(0);
            // Sign is fixed by the eigensolver at s = 0; compare up to it.
            let sign = if v0[0].re >= 0.0 { 1.0 } else { -1.0 };
            let exact = [c(-sign * 0.5f64.sin()), c(sign * 0.5f64.cos())];
            (vec_norm(&vec_sub(&ep.vdot(k, 0).unwrap(), &exact)), est)
        };
        let (e1, est1) = err_at(32);
        let (e2, _) = err_at(64);
        assert!(e1 < 1e-3);
        assert!(est1 > 0.0 && est1 < 1e-2);
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn analytic_vdots_take_precedence() {
        let path = rotating_path();
        let ep = continue_eigenpath(&path, 16).unwrap();
        let n = ep.grid().len();
        let mut ep = ep.with_vdots(vec![ComplexMatrix::identity(2); n]);
        assert_eq!(eigenpath_derivative(&mut ep), 0.0);
        assert_eq!(ep.vdots().unwrap()[3], ComplexMatrix::identity(2));
    }

    #[test]
    fn loop_gauge_closes() {
        let path = PathSpec::pt_loop_default().build().unwrap();
        let ep = continue_eigenpath(&path, 256).unwrap();
        let closed = ep.close_gauge().unwrap();
        let (a, b) = (closed.system(0), closed.systems().last().unwrap());
        for j in 0..2 {
            assert!(vec_norm(&vec_sub(&a.vector(j), &b.vector(j))) < 1e-10);
        }
        let open = continue_eigenpath(&PathSpec::pt_dimer_default().build().unwrap(), 32).unwrap();
        assert!(matches!(open.close_gauge(), Err(SpectralError::PathNotCyclic)));
    }
}
