//! Time-ordered evolution `i dU/ds = T H(s) U` together with an independently
//! integrated inverse, empirical norm monitoring, and Grönwall certificates
//! that bound `‖U_T‖` and `‖U_T⁻¹‖` uniformly in `T`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hampath::{HamiltonianPath, PathError};
use crate::numkernel::{
    mat_exp, mat_inverse, spectral_norm_or_frobenius, ComplexMatrix, KernelError, C64, I,
};
use crate::quadrature::{cumulative_simpson, cumulative_trapezoid};
use crate::spectral::{continue_eigenpath, eigenpath_derivative, EigenPath, SpectralError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagatorError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("T must be positive and finite, got {0}")]
    InvalidTimeScale(f64),
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error(
        "Richardson error estimate {estimate:.3e} exceeds tol {tol:.3e} after {steps} steps; reduce h or relax tol"
    )]
    ToleranceNotMet { estimate: f64, tol: f64, steps: usize },
    #[error("Grönwall β sample {index} is negative ({value})")]
    NegativeBeta { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorOptions {
    /// Number of output intervals; `U` is stored at `s_k = k/M`.
    pub output_intervals: usize,
    /// Largest admissible step in `s`.
    pub h_max: f64,
    /// Phase advanced per step: `h ≤ c_osc/(T·max‖H‖)`.
    pub c_osc: f64,
    /// How many times the step may be halved to meet `tol`.
    pub max_refinements: u32,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self {
            output_intervals: 256,
            h_max: 1.0e-2,
            c_osc: 0.1,
            max_refinements: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropagatorTrace {
    pub t: f64,
    pub grid: Vec<f64>,
    pub u: Vec<ComplexMatrix>,
    pub uinv: Vec<ComplexMatrix>,
    /// Steps taken by the accepted (finer) integration.
    pub step_count: usize,
    pub identity_residual: f64,
    /// Relative half-step Richardson estimate for the accepted solution.
    pub richardson_error: f64,
}

/// Integrates with the default options.
pub fn propagate(
    path: &HamiltonianPath,
    t: f64,
    tol: f64,
) -> Result<PropagatorTrace, PropagatorError> {
    propagate_with(path, t, tol, &PropagatorOptions::default())
}

pub fn propagate_with(
    path: &HamiltonianPath,
    t: f64,
    tol: f64,
    options: &PropagatorOptions,
) -> Result<PropagatorTrace, PropagatorError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(PropagatorError::InvalidTimeScale(t));
    }
    if options.output_intervals == 0 || !(options.h_max > 0.0) || !(options.c_osc > 0.0) {
        return Err(PropagatorError::InvalidOptions(format!("{options:?}")));
    }
    if !(tol > 0.0) {
        return Err(PropagatorError::InvalidOptions(format!("tol must be positive, got {tol}")));
    }
    let m = options.output_intervals;
    let grid: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();

    let mut h_norm: f64 = 0.0;
    for k in 0..=2 * m {
        h_norm = h_norm.max(path.sample_checked(k as f64 / (2 * m) as f64)?.frobenius_norm());
    }
    let h_target = options.h_max.min(options.c_osc / (t * h_norm.max(f64::MIN_POSITIVE)));
    let mut substeps = ((1.0 / m as f64) / h_target).ceil().max(1.0) as usize;

    let mut coarse = integrate(path, t, m, substeps)?;
    let mut estimate = f64::INFINITY;
    for _ in 0..=options.max_refinements {
        let fine = integrate(path, t, m, 2 * substeps)?;
        estimate = richardson_estimate(&coarse, &fine);
        substeps *= 2;
        coarse = fine;
        if estimate <= tol {
            let (u, uinv) = coarse;
            let mut trace = PropagatorTrace {
                t,
                grid,
                u,
                uinv,
                step_count: m * substeps,
                identity_residual: 0.0,
                richardson_error: estimate,
            };
            trace.identity_residual = invert_check(&trace);
            return Ok(trace);
        }
    }
    Err(PropagatorError::ToleranceNotMet {
        estimate,
        tol,
        steps: m * substeps,
    })
}

type Solution = (Vec<ComplexMatrix>, Vec<ComplexMatrix>);

fn integrate(
    path: &HamiltonianPath,
    t: f64,
    m: usize,
    substeps: usize,
) -> Result<Solution, PropagatorError> {
    let n = path.dim();
    let total = m * substeps;
    let h = 1.0 / total as f64;
    let mut u = ComplexMatrix::identity(n);
    let mut uinv = ComplexMatrix::identity(n);
    let mut us = Vec::with_capacity(m + 1);
    let mut uinvs = Vec::with_capacity(m + 1);
    us.push(u.clone());
    uinvs.push(uinv.clone());
    for step in 0..total {
        let mid = (step as f64 + 0.5) * h;
        let generator = path.sample_checked(mid)?.scale(-I * (t * h));
        u = &mat_exp(&generator)? * &u;
        uinv = &uinv * &mat_exp(&-&generator)?;
        if (step + 1) % substeps == 0 {
            us.push(u.clone());
            uinvs.push(uinv.clone());
        }
    }
    Ok((us, uinvs))
}

fn richardson_estimate(coarse: &Solution, fine: &Solution) -> f64 {
    let rel = |a: &ComplexMatrix, b: &ComplexMatrix| {
        (a - b).frobenius_norm() / (3.0 * b.frobenius_norm().max(1.0))
    };
    let forward = coarse.0.iter().zip(&fine.0).map(|(a, b)| rel(a, b));
    let inverse = coarse.1.iter().zip(&fine.1).map(|(a, b)| rel(a, b));
    forward.chain(inverse).fold(0.0, f64::max)
}

/// `max_k ‖U(s_k)·Uinv(s_k) − I‖_F`.
pub fn invert_check(trace: &PropagatorTrace) -> f64 {
    let n = trace.u[0].dim();
    let id = ComplexMatrix::identity(n);
    trace
        .u
        .iter()
        .zip(&trace.uinv)
        .map(|(u, ui)| (&(u * ui) - &id).frobenius_norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertReport {
    pub identity_residual: f64,
    /// `max ‖Uinv − U⁻¹‖_F / max(1, ‖U⁻¹‖_F)` over the spot nodes.
    pub spot_inverse_residual: f64,
    pub spot_nodes: Vec<usize>,
}

/// [`invert_check`] plus a comparison of `Uinv` against a direct LU inverse
/// of `U` on up to 8 seeded random nodes.
pub fn invert_check_detailed(
    trace: &PropagatorTrace,
    seed: u64,
) -> Result<InvertReport, PropagatorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = trace.u.len().min(8);
    let mut spot_nodes = sample(&mut rng, trace.u.len(), count).into_vec();
    spot_nodes.sort_unstable();
    let mut spot: f64 = 0.0;
    for &k in &spot_nodes {
        let direct = mat_inverse(&trace.u[k])?;
        let r = (&trace.uinv[k] - &direct).frobenius_norm() / direct.frobenius_norm().max(1.0);
        spot = spot.max(r);
    }
    Ok(InvertReport {
        identity_residual: invert_check(trace),
        spot_inverse_residual: spot,
        spot_nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub t: f64,
    pub sup_u: f64,
    pub sup_uinv: f64,
}

/// Empirical sup norms per `T`, with the certified bounds once attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub sup_u: f64,
    pub sup_uinv: f64,
    pub groenwall_bound_u: Option<f64>,
    pub groenwall_bound_uinv: Option<f64>,
    pub t_list: Vec<f64>,
    pub per_t: Vec<NormSample>,
    pub norm: String,
}

impl BoundCertificate {
    pub fn with_analytic(mut self, bound: &AnalyticBound) -> Self {
        self.groenwall_bound_u = Some(bound.bound_u);
        self.groenwall_bound_uinv = Some(bound.bound_uinv);
        self
    }

    /// `sup ≤ bound·(1 + 1e−6)` for both operators; `None` without bounds.
    pub fn dominated(&self) -> Option<bool> {
        let bu = self.groenwall_bound_u?;
        let bi = self.groenwall_bound_uinv?;
        Some(self.sup_u <= bu * (1.0 + 1e-6) && self.sup_uinv <= bi * (1.0 + 1e-6))
    }
}

fn spectral(a: &ComplexMatrix) -> f64 {
    spectral_norm_or_frobenius(a).value
}

/// `sup_s ‖U_T(s)‖₂` and `sup_s ‖U_T⁻¹(s)‖₂` on the output grid.
pub fn trace_sup_norms(trace: &PropagatorTrace) -> NormSample {
    NormSample {
        t: trace.t,
        sup_u: trace.u.iter().map(spectral).fold(0.0, f64::max),
        sup_uinv: trace.uinv.iter().map(spectral).fold(0.0, f64::max),
    }
}

pub fn bound_monitor(
    path: &HamiltonianPath,
    t_list: &[f64],
    tol: f64,
) -> Result<BoundCertificate, PropagatorError> {
    bound_monitor_with(path, t_list, tol, &PropagatorOptions::default())
}

/// Propagates every `T` concurrently and records the largest sup norms.
pub fn bound_monitor_with(
    path: &HamiltonianPath,
    t_list: &[f64],
    tol: f64,
    options: &PropagatorOptions,
) -> Result<BoundCertificate, PropagatorError> {
    Ok(monitor_with_checks(path, t_list, tol, options, None)?.0)
}

/// [`bound_monitor_with`] that also cross-checks each inverse trace on
/// seeded spot nodes when `seed` is given.
pub fn monitor_with_checks(
    path: &HamiltonianPath,
    t_list: &[f64],
    tol: f64,
    options: &PropagatorOptions,
    seed: Option<u64>,
) -> Result<(BoundCertificate, Vec<InvertReport>), PropagatorError> {
    type PerT = Result<(NormSample, Option<InvertReport>), PropagatorError>;
    let results: Vec<PerT> = std::thread::scope(|scope| {
        let handles: Vec<_> = t_list
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                scope.spawn(move || {
                    let trace = propagate_with(path, t, tol, options)?;
                    let report = seed
                        .map(|s| invert_check_detailed(&trace, s.wrapping_add(i as u64)))
                        .transpose()?;
                    Ok((trace_sup_norms(&trace), report))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("propagation thread panicked"))
            .collect()
    });
    let mut per_t = Vec::with_capacity(t_list.len());
    let mut reports = Vec::new();
    for r in results {
        let (sample, report) = r?;
        per_t.push(sample);
        reports.extend(report);
    }
    let cert = BoundCertificate {
        sup_u: per_t.iter().map(|p| p.sup_u).fold(0.0, f64::max),
        sup_uinv: per_t.iter().map(|p| p.sup_uinv).fold(0.0, f64::max),
        groenwall_bound_u: None,
        groenwall_bound_uinv: None,
        t_list: t_list.to_vec(),
        per_t,
        norm: "spectral".into(),
    };
    Ok((cert, reports))
}

/// Grönwall majorant `u(t) = α(t) + ∫ α β exp(∫_s^t β) ds` on a uniform grid
/// of spacing `h`.
///
/// `∫β` is accumulated by the trapezoidal rule; on each interval `β` is
/// replaced by its trapezoid mean and `α` by its linear interpolant, and the
/// exponential kernel is then integrated exactly. The result is exact for
/// constant `α` whenever the trapezoid sums of `β` are.
pub fn groenwall_bound(alpha: &[f64], beta: &[f64], h: f64) -> Result<Vec<f64>, PropagatorError> {
    if alpha.len() != beta.len() {
        return Err(PropagatorError::InvalidOptions(format!(
            "α has {} samples, β has {}",
            alpha.len(),
            beta.len()
        )));
    }
    if let Some((index, &value)) = beta.iter().enumerate().find(|(_, b)| !(**b >= 0.0)) {
        return Err(PropagatorError::NegativeBeta { index, value });
    }
    let big_b = cumulative_trapezoid(beta, h);
    let mut out = Vec::with_capacity(alpha.len());
    let mut carried = 0.0;
    for m in 0..alpha.len() {
        if m > 0 {
            let d = big_b[m] - big_b[m - 1];
            let (g1, g2) = kernel_weights(d);
            let piece = alpha[m - 1] * g1 + (alpha[m] - alpha[m - 1]) * g2;
            carried = d.exp() * (carried + piece);
        }
        out.push(alpha[m] + carried);
    }
    Ok(out)
}

/// `(∫₀^Δ e^{−x} dx, Δ⁻¹∫₀^Δ x e^{−x} dx)`.
fn kernel_weights(d: f64) -> (f64, f64) {
    let g1 = -(-d).exp_m1();
    let g2 = if d < 1e-4 {
        d * (0.5 - d * (1.0 / 3.0 - d / 8.0))
    } else {
        (g1 - d * (-d).exp()) / d
    };
    (g1, g2)
}

/// T-independent bounds on `‖U_T‖` and `‖U_T⁻¹‖` from the eigenpath alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBound {
    pub bound_u: f64,
    pub bound_uinv: f64,
    /// `∫₀¹ β_U` and `∫₀¹ β_Uinv`.
    pub beta_integral_u: f64,
    pub beta_integral_uinv: f64,
    pub alpha_u: f64,
    pub alpha_uinv: f64,
    pub grid_intervals: usize,
    /// Relative change of the bounds when the grid is halved.
    pub refinement_change: f64,
    pub norm: String,
}

/// Builds the eigenpath on `grid` intervals and evaluates the certificate.
pub fn bound_certificate(
    path: &HamiltonianPath,
    grid: usize,
) -> Result<AnalyticBound, PropagatorError> {
    let fine = certificate_on(path, grid)?;
    let coarse = certificate_on(path, grid / 2)?;
    let change = ((fine.bound_u - coarse.bound_u) / fine.bound_u)
        .abs()
        .max(((fine.bound_uinv - coarse.bound_uinv) / fine.bound_uinv).abs());
    Ok(AnalyticBound {
        refinement_change: change,
        ..fine
    })
}

fn certificate_on(path: &HamiltonianPath, grid: usize) -> Result<AnalyticBound, PropagatorError> {
    let mut ep = continue_eigenpath(path, grid)?;
    eigenpath_derivative(&mut ep);
    certificate_from_eigenpath(&ep)
}

/// `β_Uinv = ‖Ṽ⁻¹Ṽ′‖` with `ṽ_j = e^{−b_j} v_j` and `β_U = ‖V⁻¹V̇‖`; the
/// unitary dynamical phase conjugation drops out of both norms.
pub fn certificate_from_eigenpath(ep: &EigenPath) -> Result<AnalyticBound, PropagatorError> {
    let n = ep.dim();
    let h = ep.step();
    let vdots = ep.vdots().ok_or_else(|| {
        PropagatorError::InvalidOptions("eigenpath derivatives have not been computed".into())
    })?;
    let berry: Vec<Vec<C64>> = (0..n)
        .map(|j| cumulative_simpson(&ep.connection(j).expect("vdots present"), h))
        .collect();

    let nodes = ep.grid().len();
    let mut beta_u = Vec::with_capacity(nodes);
    let mut beta_uinv = Vec::with_capacity(nodes);
    let mut norm_v = Vec::with_capacity(nodes);
    let mut norm_vt_inv = Vec::with_capacity(nodes);
    for (k, es) in ep.systems().iter().enumerate() {
        // X = Ξᴴ V̇ = V⁻¹ V̇
        let x = &es.xi.adjoint() * &vdots[k];
        beta_u.push(spectral(&x));
        let weights: Vec<C64> = (0..n).map(|j| berry[j][k]).collect();
        let transported = ComplexMatrix::from_fn(n, |i, j| {
            if i == j {
                C64::new(0.0, 0.0)
            } else {
                (weights[i] - weights[j]).exp() * x[(i, j)]
            }
        });
        beta_uinv.push(spectral(&transported));
        norm_v.push(spectral(&es.v));
        let vt_inv = ComplexMatrix::from_fn(n, |i, j| weights[i].exp() * es.xi[(j, i)].conj());
        norm_vt_inv.push(spectral(&vt_inv));
    }
    let alpha_u = spectral(&ep.system(0).xi.adjoint());
    let alpha_uinv = spectral(&ep.system(0).v);
    let u_curve = groenwall_bound(&vec![alpha_u; nodes], &beta_u, h)?;
    let uinv_curve = groenwall_bound(&vec![alpha_uinv; nodes], &beta_uinv, h)?;
    let bound_u = u_curve.iter().zip(&norm_v).map(|(a, b)| a * b).fold(0.0, f64::max);
    let bound_uinv = uinv_curve
        .iter()
        .zip(&norm_vt_inv)
        .map(|(a, b)| a * b)
        .fold(0.0, f64::max);
    Ok(AnalyticBound {
        bound_u,
        bound_uinv,
        beta_integral_u: *cumulative_trapezoid(&beta_u, h).last().unwrap(),
        beta_integral_uinv: *cumulative_trapezoid(&beta_uinv, h).last().unwrap(),
        alpha_u,
        alpha_uinv,
        grid_intervals: ep.intervals(),
        refinement_change: 0.0,
        norm: "spectral".into(),
    })
}
