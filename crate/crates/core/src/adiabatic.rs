//! Dynamic and complex Berry phases along an eigenpath, the predicted
//! adiabatic state, measured adiabatic error against full propagation,
//! gauge-invariance checks and cyclic phase extraction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hampath::{
    min_pairwise_gap, validate_spectrum, HamiltonianPath, PathError, SpectrumCertificate,
    SpectrumThresholds,
};
use crate::numkernel::{inner, vec_norm, vec_scale, vec_sub, C64, I, ZERO};
use crate::propagator::{
    certificate_from_eigenpath, propagate_with, trace_sup_norms, AnalyticBound, PropagatorError,
    PropagatorOptions, PropagatorTrace,
};
use crate::quadrature::cumulative_simpson;
use crate::spectral::{
    continue_eigenpath_with, eigenpath_derivative, ContinuationOptions, EigenPath, SpectralError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdiabaticError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(
        "dynamic phase quadrature error {estimate:.3e} exceeds budget {budget:.3e}; densify the eigenpath grid"
    )]
    QuadratureTooCoarse { estimate: f64, budget: f64 },
    #[error("step overlap for label {label} at s = {s} is {overlap}, too far from 1 for the log branch")]
    BranchAmbiguity { label: usize, s: f64, overlap: C64 },
    #[error("eigenpath derivatives have not been computed")]
    MissingDerivatives,
    #[error("s = {0} is not a node of the eigenpath grid")]
    OffGrid(f64),
    #[error("label {label} out of range for dimension {dim}")]
    InvalidLabel { label: usize, dim: usize },
    #[error("gauge function vanishes: |μ({s})| = {modulus:.3e}")]
    MuVanishes { s: f64, modulus: f64 },
    #[error("gauge function has {got} samples, eigenpath has {expected} nodes")]
    GaugeSampleMismatch { got: usize, expected: usize },
    #[error("spectral hypotheses fail on this path: {0}")]
    HypothesesNotMet(String),
    #[error("need at least {min} time scales, got {got}")]
    TooFewTimeScales { got: usize, min: usize },
    #[error("path is not flagged cyclic")]
    PathNotCyclic,
    #[error("eigenvector {label} does not close around the loop (mismatch {mismatch:.3e})")]
    GaugeNotClosed { label: usize, mismatch: f64 },
}

fn check_label(ep: &EigenPath, j: usize) -> Result<(), AdiabaticError> {
    if j >= ep.dim() {
        return Err(AdiabaticError::InvalidLabel {
            label: j,
            dim: ep.dim(),
        });
    }
    Ok(())
}

/// Index of the grid node at `s` (within 1e-12).
pub fn node_index(ep: &EigenPath, s: f64) -> Result<usize, AdiabaticError> {
    let m = ep.intervals();
    let k = (s * m as f64).round();
    if !(0.0..=m as f64).contains(&k) || (k / m as f64 - s).abs() > 1e-12 {
        return Err(AdiabaticError::OffGrid(s));
    }
    Ok(k as usize)
}

/// Phases for one label on every node of an eigenpath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub j: usize,
    pub grid: Vec<f64>,
    /// `ν_j(s) = ∫₀ˢ Re λ_j`.
    pub dynamic_phase: Vec<f64>,
    /// `∫₀ˢ Im λ_j`, identically zero under the real-spectrum hypothesis.
    pub dynamic_phase_imag: Vec<f64>,
    /// `b_j(s) = ∫₀ˢ ξ_jᴴ v̇_j`; the Berry factor is `e^{−b_j}`.
    pub berry_integral: Vec<C64>,
    /// Symmetric log-overlap sum `Σ ½[log ξ_kᴴv_{k+1} − log ξ_{k+1}ᴴv_k]`.
    pub discrete_berry: Vec<C64>,
    /// Step-doubling estimate of the dynamic-phase quadrature error.
    pub dynamic_quadrature_error: f64,
}

impl PhaseRecord {
    /// `r_j = i·b_j`, so that `e^{−b_j} = e^{i r_j}`.
    pub fn berry_phase_r(&self, k: usize) -> C64 {
        I * self.berry_integral[k]
    }

    fn complex_dynamic(&self, k: usize) -> C64 {
        C64::new(self.dynamic_phase[k], self.dynamic_phase_imag[k])
    }
}

/// Builds the [`PhaseRecord`] for label `j`. `t_max` sets the quadrature
/// budget `0.01/t_max` for the dynamic phase; pass 0 to skip that check.
pub fn phase_record(ep: &EigenPath, j: usize, t_max: f64) -> Result<PhaseRecord, AdiabaticError> {
    check_label(ep, j)?;
    let h = ep.step();
    let lambdas: Vec<C64> = ep.systems().iter().map(|es| es.lambdas[j]).collect();
    let nu = cumulative_simpson(&lambdas, h);

    let coarse_samples: Vec<C64> = lambdas.iter().step_by(2).copied().collect();
    let coarse = cumulative_simpson(&coarse_samples, 2.0 * h);
    let estimate = coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (nu[2 * i] - c).norm() / 15.0)
        .fold(0.0, f64::max);
    if t_max > 0.0 && estimate > 0.01 / t_max {
        return Err(AdiabaticError::QuadratureTooCoarse {
            estimate,
            budget: 0.01 / t_max,
        });
    }

    let connection = ep.connection(j).ok_or(AdiabaticError::MissingDerivatives)?;
    let berry = cumulative_simpson(&connection, h);

    let mut discrete = Vec::with_capacity(lambdas.len());
    let mut acc = ZERO;
    discrete.push(acc);
    for (k, w) in ep.systems().windows(2).enumerate() {
        let forward = inner(&w[0].dual(j), &w[1].vector(j));
        let backward = inner(&w[1].dual(j), &w[0].vector(j));
        acc += symmetric_log_step(j, ep.grid()[k], forward, backward)?;
        discrete.push(acc);
    }

    Ok(PhaseRecord {
        j,
        grid: ep.grid().to_vec(),
        dynamic_phase: nu.iter().map(|z| z.re).collect(),
        dynamic_phase_imag: nu.iter().map(|z| z.im).collect(),
        berry_integral: berry,
        discrete_berry: discrete,
        dynamic_quadrature_error: estimate,
    })
}

/// `½[log ξ_kᴴv_{k+1} − log ξ_{k+1}ᴴv_k]`, refusing overlaps too far from 1
/// for the principal branch to be trusted.
fn symmetric_log_step(
    label: usize,
    s: f64,
    forward: C64,
    backward: C64,
) -> Result<C64, AdiabaticError> {
    for overlap in [forward, backward] {
        if (overlap - 1.0).norm() > 0.5 {
            return Err(AdiabaticError::BranchAmbiguity { label, s, overlap });
        }
    }
    Ok(0.5 * (forward.ln() - backward.ln()))
}

/// `ν_j(s) = ∫₀ˢ λ_j` on the eigenpath grid.
pub fn dynamic_phase(ep: &EigenPath, j: usize, s: f64, t_max: f64) -> Result<f64, AdiabaticError> {
    let k = node_index(ep, s)?;
    check_label(ep, j)?;
    let lambdas: Vec<C64> = ep.systems().iter().map(|es| es.lambdas[j]).collect();
    let h = ep.step();
    let nu = cumulative_simpson(&lambdas, h);
    let coarse: Vec<C64> = lambdas.iter().step_by(2).copied().collect();
    let coarse = cumulative_simpson(&coarse, 2.0 * h);
    let estimate = coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (nu[2 * i] - c).norm() / 15.0)
        .fold(0.0, f64::max);
    if t_max > 0.0 && estimate > 0.01 / t_max {
        return Err(AdiabaticError::QuadratureTooCoarse {
            estimate,
            budget: 0.01 / t_max,
        });
    }
    Ok(nu[k].re)
}

/// `b_j(s) = ∫₀ˢ ξ_jᴴ v̇_j`.
pub fn berry_phase(ep: &EigenPath, j: usize, s: f64) -> Result<C64, AdiabaticError> {
    let k = node_index(ep, s)?;
    Ok(phase_record(ep, j, 0.0)?.berry_integral[k])
}

/// `e^{−iTν_j(s)}·e^{−b_j(s)}·v_j(s)`.
pub fn predicted_state(
    ep: &EigenPath,
    phases: &PhaseRecord,
    t: f64,
    j: usize,
    s: f64,
) -> Result<Vec<C64>, AdiabaticError> {
    let k = node_index(ep, s)?;
    check_label(ep, j)?;
    let factor = (-I * t * phases.complex_dynamic(k) - phases.berry_integral[k]).exp();
    Ok(vec_scale(&ep.system(k).vector(j), factor))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    /// Intervals of the eigenpath grid.
    pub eig_grid: usize,
    pub validation_grid: usize,
    pub thresholds: SpectrumThresholds,
    /// Initial integrator tolerance; tightened per `T` until it is at most
    /// a tenth of the measured error.
    pub tol: f64,
    pub propagator: PropagatorOptions,
    pub gap_min_rel: f64,
}

impl StudyOptions {
    /// Finer eigenpath grid for closed loops, where the Berry factor is
    /// compared against the discrete log-overlap product.
    pub fn cyclic() -> Self {
        Self {
            eig_grid: 16384,
            ..Self::default()
        }
    }
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            eig_grid: 2048,
            validation_grid: 256,
            thresholds: SpectrumThresholds::default(),
            tol: 1.0e-6,
            propagator: PropagatorOptions::default(),
            gap_min_rel: crate::spectral::DEFAULT_GAP_MIN_REL,
        }
    }
}

/// Eigenpath with derivatives on `options.eig_grid` intervals.
pub fn prepared_eigenpath(
    path: &HamiltonianPath,
    options: &StudyOptions,
) -> Result<EigenPath, AdiabaticError> {
    let cont = ContinuationOptions {
        gap_min_rel: options.gap_min_rel,
        ..Default::default()
    };
    let mut ep = continue_eigenpath_with(path, options.eig_grid, cont)?;
    eigenpath_derivative(&mut ep);
    Ok(ep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub t: f64,
    pub epsilon: f64,
    pub sup_u: f64,
    pub sup_uinv: f64,
    pub integrator_tol: f64,
    pub richardson_error: f64,
    pub identity_residual: f64,
}

const MAX_TOL_TIGHTENINGS: usize = 3;

/// Measures `ε(T)` at node `s` against a propagation whose Richardson error
/// is at most a tenth of the measured `ε` (or of `tol`, whichever is larger
/// after three tightenings).
pub fn error_sample(
    path: &HamiltonianPath,
    ep: &EigenPath,
    phases: &PhaseRecord,
    t: f64,
    s: f64,
    tol: f64,
    propagator: &PropagatorOptions,
) -> Result<ErrorSample, AdiabaticError> {
    let j = phases.j;
    let k = node_index(ep, s)?;
    let predicted = predicted_state(ep, phases, t, j, s)?;
    let v0 = ep.system(0).vector(j);
    let options = PropagatorOptions {
        output_intervals: ep.intervals(),
        ..*propagator
    };
    let mut tol = tol;
    let mut last = None;
    for _ in 0..=MAX_TOL_TIGHTENINGS {
        let trace = propagate_with(path, t, tol, &options)?;
        let evolved = trace.u[k].mul_vec(&v0);
        let epsilon = vec_norm(&vec_sub(&evolved, &predicted));
        let done = trace.richardson_error <= 0.1 * epsilon;
        last = Some(sample_from(&trace, epsilon, tol));
        if done {
            break;
        }
        let next = 0.05 * epsilon;
        if !(next < tol) || next < 1e-13 {
            break;
        }
        tol = next;
    }
    Ok(last.expect("at least one propagation ran"))
}

fn sample_from(trace: &PropagatorTrace, epsilon: f64, tol: f64) -> ErrorSample {
    let norms = trace_sup_norms(trace);
    ErrorSample {
        t: trace.t,
        epsilon,
        sup_u: norms.sup_u,
        sup_uinv: norms.sup_uinv,
        integrator_tol: tol,
        richardson_error: trace.richardson_error,
        identity_residual: trace.identity_residual,
    }
}

/// `ε = ‖U_T(s)·v_j(0) − predicted_state‖₂` with default study options.
pub fn adiabatic_error(
    path: &HamiltonianPath,
    t: f64,
    j: usize,
    s: f64,
    tol: f64,
) -> Result<f64, AdiabaticError> {
    let options = StudyOptions::default();
    let ep = prepared_eigenpath(path, &options)?;
    let phases = phase_record(&ep, j, t)?;
    Ok(error_sample(path, &ep, &phases, t, s, tol, &options.propagator)?.epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub j: usize,
    pub s_eval: f64,
    pub t_list: Vec<f64>,
    pub samples: Vec<ErrorSample>,
    /// Least-squares slope of `log ε` against `log T`.
    pub fitted_exponent: Option<f64>,
    pub rate_measurable: bool,
    pub note: Option<String>,
    pub dynamic_phase: f64,
    pub berry_integral: C64,
    pub discrete_berry: C64,
    pub phases: PhaseRecord,
    pub spectrum: SpectrumCertificate,
    pub min_gap: f64,
    pub bound: Option<AnalyticBound>,
    pub diagnostic: bool,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<f64> {
        self.samples.iter().map(|e| e.epsilon).collect()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().chain(x).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const MIN_STUDY_POINTS: usize = 4;

pub fn convergence_study(
    path: &HamiltonianPath,
    j: usize,
    t_list: &[f64],
    s_eval: f64,
) -> Result<ConvergenceReport, AdiabaticError> {
    convergence_study_with(path, j, t_list, s_eval, &StudyOptions::default())
}

/// Measures `ε(T)` for every `T` concurrently and fits the rate.
///
/// Refuses paths that fail the spectral hypotheses unless they are flagged
/// diagnostic; diagnostic reports carry the failed certificate and no bound.
pub fn convergence_study_with(
    path: &HamiltonianPath,
    j: usize,
    t_list: &[f64],
    s_eval: f64,
    options: &StudyOptions,
) -> Result<ConvergenceReport, AdiabaticError> {
    if t_list.len() < MIN_STUDY_POINTS {
        return Err(AdiabaticError::TooFewTimeScales {
            got: t_list.len(),
            min: MIN_STUDY_POINTS,
        });
    }
    measure_errors(path, j, t_list, s_eval, options)
}

/// The measurement behind [`convergence_study_with`] for any number of time
/// scales; the exponent is only fitted when there are at least two.
pub fn measure_errors(
    path: &HamiltonianPath,
    j: usize,
    t_list: &[f64],
    s_eval: f64,
    options: &StudyOptions,
) -> Result<ConvergenceReport, AdiabaticError> {
    let spectrum = validate_spectrum(path, options.validation_grid, options.thresholds)?;
    if !spectrum.hypotheses_met && !path.is_diagnostic() {
        return Err(AdiabaticError::HypothesesNotMet(format!(
            "min_gap {:.3e}, max_imag {:.3e}{}",
            spectrum.min_gap,
            spectrum.max_imag,
            spectrum
                .failure
                .as_ref()
                .map(|f| format!(", {f}"))
                .unwrap_or_default()
        )));
    }
    let ep = prepared_eigenpath(path, options)?;
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let phases = phase_record(&ep, j, t_max)?;
    let k = node_index(&ep, s_eval)?;

    let results: Vec<Result<ErrorSample, AdiabaticError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = t_list
            .iter()
            .map(|&t| {
                let (ep, phases) = (&ep, &phases);
                scope.spawn(move || {
                    error_sample(path, ep, phases, t, s_eval, options.tol, &options.propagator)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("error sampling thread panicked"))
            .collect()
    });
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let errors: Vec<f64> = samples.iter().map(|e| e.epsilon).collect();
    let floor = samples
        .iter()
        .map(|e| 10.0 * e.richardson_error.max(1e-13))
        .fold(0.0, f64::max);
    let rate_measurable = errors.iter().all(|&e| e > floor);
    let note = (!rate_measurable).then(|| {
        format!("rate not measurable: errors reach the integrator noise floor {floor:.1e}")
    });
    let min_gap = ep
        .systems()
        .iter()
        .map(|es| min_pairwise_gap(&es.lambdas))
        .fold(f64::INFINITY, f64::min);
    let bound = if spectrum.hypotheses_met {
        Some(certificate_from_eigenpath(&ep)?)
    } else {
        None
    };

    Ok(ConvergenceReport {
        j,
        s_eval,
        t_list: t_list.to_vec(),
        fitted_exponent: fit_loglog(t_list, &errors),
        rate_measurable,
        note,
        samples,
        dynamic_phase: phases.dynamic_phase[k],
        berry_integral: phases.berry_integral[k],
        discrete_berry: phases.discrete_berry[k],
        phases,
        spectrum,
        min_gap,
        bound,
        diagnostic: path.is_diagnostic(),
    })
}

/// A nonvanishing scalar gauge `μ(s)`.
#[derive(Clone)]
pub enum GaugeFunction {
    /// Closed form with its derivative.
    Analytic {
        value: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
        derivative: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    },
    /// Values on the eigenpath nodes; derivatives by finite differences.
    Sampled(Vec<C64>),
}

impl GaugeFunction {
    pub fn analytic(
        value: impl Fn(f64) -> C64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        Self::Analytic {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    fn on_grid(&self, grid: &[f64]) -> Result<(Vec<C64>, Vec<C64>), AdiabaticError> {
        match self {
            Self::Analytic { value, derivative } => Ok((
                grid.iter().map(|&s| value(s)).collect(),
                grid.iter().map(|&s| derivative(s)).collect(),
            )),
            Self::Sampled(values) => {
                if values.len() != grid.len() || grid.len() < 3 {
                    return Err(AdiabaticError::GaugeSampleMismatch {
                        got: values.len(),
                        expected: grid.len(),
                    });
                }
                let m = grid.len() - 1;
                let h = 1.0 / m as f64;
                let d = (0..=m)
                    .map(|k| {
                        if k == 0 {
                            (values[2] * -1.0 + values[1] * 4.0 - values[0] * 3.0) / (2.0 * h)
                        } else if k == m {
                            (values[m] * 3.0 - values[m - 1] * 4.0 + values[m - 2]) / (2.0 * h)
                        } else {
                            (values[k + 1] - values[k - 1]) / (2.0 * h)
                        }
                    })
                    .collect();
                Ok((values.clone(), d))
            }
        }
    }
}

/// Predicts the evolved state of `v_j(0)` twice, once in the frame
/// `(v_j, ξ_j)` and once in `(ψ_j, φ_j) = (μv_j, ξ_j/μ̄)`, and returns
/// the norm of the difference at `s`.
pub fn gauge_invariance_check(
    ep: &EigenPath,
    j: usize,
    mu: &GaugeFunction,
    t: f64,
    s: f64,
) -> Result<f64, AdiabaticError> {
    check_label(ep, j)?;
    let k_eval = node_index(ep, s)?;
    let vdots = ep.vdots().ok_or(AdiabaticError::MissingDerivatives)?;
    let (mu_values, mu_dots) = mu.on_grid(ep.grid())?;
    for (&s, m) in ep.grid().iter().zip(&mu_values) {
        if !(m.norm() >= 1e-12) {
            return Err(AdiabaticError::MuVanishes {
                s,
                modulus: m.norm(),
            });
        }
    }
    let phases = phase_record(ep, j, 0.0)?;
    let via_v = predicted_state(ep, &phases, t, j, s)?;

    // φᴴψ̇ with ψ̇ = μ̇v + μv̇ and φ = ξ/μ̄.
    let integrand: Vec<C64> = ep
        .systems()
        .iter()
        .enumerate()
        .map(|(k, es)| {
            let (m, md) = (mu_values[k], mu_dots[k]);
            let v = es.vector(j);
            let psi_dot: Vec<C64> = v
                .iter()
                .zip(vdots[k].column(j))
                .map(|(vi, di)| md * vi + m * di)
                .collect();
            let phi = vec_scale(&es.dual(j), m.conj().inv());
            inner(&phi, &psi_dot)
        })
        .collect();
    let b_psi = cumulative_simpson(&integrand, ep.step());
    let psi = vec_scale(&ep.system(k_eval).vector(j), mu_values[k_eval]);
    let dyn_factor = (-I * t * C64::new(
        phases.dynamic_phase[k_eval],
        phases.dynamic_phase_imag[k_eval],
    ))
    .exp();
    // The initial vector v_j(0) equals ψ_j(0)/μ(0).
    let factor = dyn_factor * (-b_psi[k_eval]).exp() / mu_values[0];
    let via_psi = vec_scale(&psi, factor);
    Ok(vec_norm(&vec_sub(&via_psi, &via_v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicPhase {
    pub t: f64,
    pub j: usize,
    /// `ξ_j(0)ᴴ U_T(1) v_j(0)`.
    pub total: C64,
    pub dynamic_factor: C64,
    pub berry_factor: C64,
    /// `e^{−b}` from the discrete log-overlap sum around the loop.
    pub discrete_berry_factor: C64,
    /// `total / dynamic_factor`.
    pub berry_from_total: C64,
    /// `|total − dynamic_factor·berry_factor|`.
    pub residual: f64,
}

/// Closes the gauge of a cyclic eigenpath and prepares its derivatives.
pub fn closed_loop_eigenpath(
    path: &HamiltonianPath,
    options: &StudyOptions,
) -> Result<EigenPath, AdiabaticError> {
    if !path.is_cyclic() {
        return Err(AdiabaticError::PathNotCyclic);
    }
    let cont = ContinuationOptions {
        gap_min_rel: options.gap_min_rel,
        ..Default::default()
    };
    let ep = continue_eigenpath_with(path, options.eig_grid, cont)?;
    let mut closed = ep.close_gauge().map_err(|e| match e {
        SpectralError::GaugeNotClosed { label, mismatch } => {
            AdiabaticError::GaugeNotClosed { label, mismatch }
        }
        SpectralError::PathNotCyclic => AdiabaticError::PathNotCyclic,
        other => other.into(),
    })?;
    eigenpath_derivative(&mut closed);
    Ok(closed)
}

pub fn cyclic_phase_extract(
    path: &HamiltonianPath,
    j: usize,
    t: f64,
) -> Result<CyclicPhase, AdiabaticError> {
    let options = StudyOptions::cyclic();
    let ep = closed_loop_eigenpath(path, &options)?;
    cyclic_phase_on(path, &ep, j, t, options.tol, &options.propagator)
}

/// Splits `f = ξ_j(0)ᴴ U_T(1) v_j(0)` into dynamic and Berry factors on a
/// closed eigenpath.
pub fn cyclic_phase_on(
    path: &HamiltonianPath,
    ep: &EigenPath,
    j: usize,
    t: f64,
    tol: f64,
    propagator: &PropagatorOptions,
) -> Result<CyclicPhase, AdiabaticError> {
    check_label(ep, j)?;
    let phases = phase_record(ep, j, t)?;
    let last = ep.intervals();
    let dynamic_factor = (-I * t * phases.complex_dynamic(last)).exp();
    let berry_factor = (-phases.berry_integral[last]).exp();
    let discrete_berry_factor = (-phases.discrete_berry[last]).exp();

    let options = PropagatorOptions {
        output_intervals: 16,
        ..*propagator
    };
    let es0 = ep.system(0);
    let mut tol = tol;
    let mut out;
    let mut tightenings = 0;
    loop {
        let trace = propagate_with(path, t, tol, &options)?;
        let u1 = trace.u.last().expect("trace has nodes");
        let total = inner(&es0.dual(j), &u1.mul_vec(&es0.vector(j)));
        let residual = (total - dynamic_factor * berry_factor).norm();
        out = CyclicPhase {
            t,
            j,
            total,
            dynamic_factor,
            berry_factor,
            discrete_berry_factor,
            berry_from_total: total / dynamic_factor,
            residual,
        };
        let next = 0.05 * residual;
        if trace.richardson_error <= 0.1 * residual
            || tightenings == MAX_TOL_TIGHTENINGS
            || !(next < tol)
            || next < 1e-13
        {
            break;
        }
        tol = next;
        tightenings += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hampath::{PathSpec, Profile, RampShape};
    use crate::numkernel::ComplexMatrix;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn small_options() -> StudyOptions {
        StudyOptions {
            eig_grid: 512,
            ..Default::default()
        }
    }

    fn diag_path(d: [f64; 2]) -> HamiltonianPath {
        HamiltonianPath::constant(ComplexMatrix::from_diag(&[c(d[0]), c(d[1])]))
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
        if (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive_simpson(f, a, m, tol / 2.0) + adaptive_simpson(f, m, b, tol / 2.0)
        }
    }

    #[test]
    fn dynamic_phase_elementary() {
        let mut ep = prepared_eigenpath(&diag_path([2.0, 3.0]), &small_options()).unwrap();
        assert!((dynamic_phase(&ep, 0, 0.5, 100.0).unwrap() - 1.0).abs() < 1e-14);
        let ramp = HamiltonianPath::new(2, "ramp", |s| {
            ComplexMatrix::from_diag(&[c(s), c(2.0 + s)])
        });
        ep = prepared_eigenpath(&ramp, &small_options()).unwrap();
        assert!((dynamic_phase(&ep, 0, 1.0, 100.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(
            dynamic_phase(&ep, 0, 0.3337, 100.0),
            Err(AdiabaticError::OffGrid(_))
        ));
    }

    #[test]
    fn dynamic_phase_matches_independent_quadrature() {
        let path = PathSpec::PtDimer {
            k: 1.0,
            gamma: Profile::ramp(0.0, 0.5, RampShape::Smoothstep),
            phi: Profile::ramp(0.0, 1.0, RampShape::Quadratic),
            diagnostic: false,
        }
        .build()
        .unwrap();
        let ep = prepared_eigenpath(&path, &StudyOptions::default()).unwrap();
        let gamma = |s: f64| 0.5 * s * s * (3.0 - 2.0 * s);
        let exact = adaptive_simpson(&|s| (1.0 - gamma(s).powi(2)).sqrt(), 0.0, 1.0, 1e-14);
        let nu = dynamic_phase(&ep, 1, 1.0, 800.0).unwrap();
        assert!((nu - exact).abs() < 1e-10, "{nu} vs {exact}");
    }

    #[test]
    fn coarse_grid_fails_phase_budget() {
        let path = HamiltonianPath::new(2, "wiggle", |s: f64| {
            ComplexMatrix::from_diag(&[c((40.0 * s).sin()), c(3.0)])
        });
        let ep = prepared_eigenpath(&path, &StudyOptions { eig_grid: 16, ..Default::default() }).unwrap();
        assert!(matches!(
            dynamic_phase(&ep, 0, 1.0, 1e4),
            Err(AdiabaticError::QuadratureTooCoarse { .. })
        ));
    }

    #[test]
    fn berry_vanishes_on_constant_path() {
        let ep = prepared_eigenpath(&diag_path([1.0, 2.0]), &small_options()).unwrap();
        assert!(berry_phase(&ep, 0, 1.0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn hermitian_berry_is_imaginary() {
        for spec in [PathSpec::hermitian2_default(), PathSpec::hermitian_loop_default()] {
            let ep = prepared_eigenpath(&spec.build().unwrap(), &small_options()).unwrap();
            let rec = phase_record(&ep, 0, 0.0).unwrap();
            for b in &rec.berry_integral {
                assert!(b.re.abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn branch_guard() {
        let small = C64::new(0.999, 0.01);
        assert!(symmetric_log_step(0, 0.0, small, small.conj()).is_ok());
        assert!(matches!(
            symmetric_log_step(1, 0.5, C64::new(-0.9, 0.1), small),
            Err(AdiabaticError::BranchAmbiguity { label: 1, .. })
        ));
    }

    #[test]
    fn predicted_state_at_origin_and_for_constant_h() {
        let path = diag_path([1.0, 2.5]);
        let ep = prepared_eigenpath(&path, &small_options()).unwrap();
        let rec = phase_record(&ep, 1, 50.0).unwrap();
        assert_eq!(predicted_state(&ep, &rec, 50.0, 1, 0.0).unwrap(), ep.system(0).vector(1));
        let p = predicted_state(&ep, &rec, 50.0, 1, 0.5).unwrap();
        let expected = vec_scale(&ep.system(0).vector(1), (-I * 50.0 * 2.5 * 0.5).exp());
        assert!(vec_norm(&vec_sub(&p, &expected)) < 1e-12);
    }

    #[test]
    fn constant_h_error_is_at_noise_level() {
        let h = ComplexMatrix::from_rows(&[vec![c(1.0), c(0.6)], vec![c(0.0), c(-1.0)]]).unwrap();
        let tol = 1e-9;
        let eps = adiabatic_error(&HamiltonianPath::constant(h), 30.0, 0, 1.0, tol).unwrap();
        assert!(eps <= 10.0 * tol);
    }

    #[test]
    fn hermitian_error_halves_when_t_doubles() {
        let path = PathSpec::hermitian2_default().build().unwrap();
        let e100 = adiabatic_error(&path, 100.0, 0, 1.0, 1e-6).unwrap();
        let e200 = adiabatic_error(&path, 200.0, 0, 1.0, 1e-6).unwrap();
        let ratio = e200 / e100;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn pt_dimer_error_decays() {
        let path = PathSpec::pt_dimer_default().build().unwrap();
        let e100 = adiabatic_error(&path, 100.0, 0, 1.0, 1e-6).unwrap();
        let e800 = adiabatic_error(&path, 800.0, 0, 1.0, 1e-6).unwrap();
        assert!(e800 < e100 / 6.0, "{e100} {e800}");
    }

    #[test]
    fn constant_path_rate_not_measurable() {
        let report = convergence_study_with(
            &diag_path([1.0, 2.0]),
            0,
            &[10.0, 20.0, 40.0, 80.0],
            1.0,
            &small_options(),
        )
        .unwrap();
        assert!(!report.rate_measurable);
        assert!(report.note.as_deref().unwrap().contains("not measurable"));
    }

    #[test]
    fn study_needs_four_points() {
        let path = PathSpec::hermitian2_default().build().unwrap();
        assert!(matches!(
            convergence_study(&path, 0, &[10.0, 20.0, 40.0], 1.0),
            Err(AdiabaticError::TooFewTimeScales { .. })
        ));
    }

    #[test]
    fn broken_path_refused_unless_diagnostic() {
        let mut spec = PathSpec::pt_dimer_with_gamma(1.5, true);
        let path = spec.build().unwrap();
        let report =
            convergence_study_with(&path, 0, &[4.0, 8.0, 16.0, 32.0], 1.0, &small_options()).unwrap();
        assert!(!report.spectrum.hypotheses_met);
        assert!(report.fitted_exponent.unwrap() >= 0.0);
        assert!(report.bound.is_none());
        if let PathSpec::PtDimer { diagnostic, .. } = &mut spec {
            *diagnostic = false;
        }
        // Without the flag the family constructor itself refuses γ ≥ k.
        assert!(spec.build().is_err());
        let forced = path.clone().with_diagnostic(false);
        assert!(matches!(
            convergence_study_with(&forced, 0, &[4.0, 8.0, 16.0, 32.0], 1.0, &small_options()),
            Err(AdiabaticError::HypothesesNotMet(_))
        ));
    }

    #[test]
    fn gauge_identity_and_phase_rotation() {
        let path = PathSpec::hermitian2_default().build().unwrap();
        let ep = prepared_eigenpath(&path, &StudyOptions::default()).unwrap();
        let one = GaugeFunction::analytic(|_| c(1.0), |_| c(0.0));
        assert!(gauge_invariance_check(&ep, 0, &one, 100.0, 1.0).unwrap() < 1e-14);
        let tau = 2.0 * std::f64::consts::PI;
        let rot = GaugeFunction::analytic(move |s| (I * tau * s).exp(), move |s| I * tau * (I * tau * s).exp());
        assert!(gauge_invariance_check(&ep, 0, &rot, 100.0, 1.0).unwrap() <= 1e-8);
    }

    #[test]
    fn gauge_real_rescaling_on_pt_dimer() {
        let path = PathSpec::pt_dimer_default().build().unwrap();
        let ep = prepared_eigenpath(&path, &StudyOptions::default()).unwrap();
        let mu = GaugeFunction::analytic(|s| c(1.0 + 0.5 * s), |_| c(0.5));
        for j in 0..2 {
            assert!(gauge_invariance_check(&ep, j, &mu, 200.0, 1.0).unwrap() <= 1e-8);
        }
        let zero = GaugeFunction::analytic(|s| c(s - 0.5), |_| c(1.0));
        assert!(matches!(
            gauge_invariance_check(&ep, 0, &zero, 1.0, 1.0),
            Err(AdiabaticError::MuVanishes { .. })
        ));
    }

    #[test]
    fn sampled_gauge_agrees_with_analytic() {
        let path = PathSpec::dressed_hermitian_default().build().unwrap();
        let ep = prepared_eigenpath(&path, &StudyOptions::default()).unwrap();
        let samples = ep.grid().iter().map(|&s| C64::new(1.0 + 0.3 * s, 0.2 * s)).collect();
        let d = gauge_invariance_check(&ep, 1, &GaugeFunction::Sampled(samples), 50.0, 1.0).unwrap();
        assert!(d <= 1e-8, "{d:e}");
    }

    #[test]
    fn constant_loop_has_trivial_berry_factor() {
        let h = ComplexMatrix::from_rows(&[vec![c(1.0), c(0.3)], vec![c(0.0), c(-1.0)]]).unwrap();
        let path = HamiltonianPath::constant(h).into_cyclic().unwrap();
        let out = cyclic_phase_extract(&path, 0, 20.0).unwrap();
        assert!((out.berry_factor - 1.0).norm() < 1e-12);
        assert!(out.residual < 1e-8);
        let open = PathSpec::hermitian2_default().build().unwrap();
        assert!(matches!(
            cyclic_phase_extract(&open, 0, 20.0),
            Err(AdiabaticError::PathNotCyclic)
        ));
    }

    #[test]
    fn hermitian_loop_berry_factor() {
        let path = PathSpec::hermitian_loop_default().build().unwrap();
        let out = cyclic_phase_extract(&path, 0, 100.0).unwrap();
        assert!((out.berry_factor.norm() - 1.0).abs() < 1e-6);
        assert!(out.berry_factor.arg().abs() > 1e-3);
        assert!((out.berry_factor - out.discrete_berry_factor).norm() < 1e-6);
        // Solid angle of a cone with opening θ = 1: the factor is e^{±iπ(1 − cos θ)}.
        let expected = std::f64::consts::PI * (1.0 - 1f64.cos());
        let phase = out.berry_factor.arg().abs();
        let dist = (phase - expected).abs().min((phase - (2.0 * std::f64::consts::PI - expected)).abs());
        assert!(dist < 1e-6, "{phase} vs {expected}");
    }

    #[test]
    fn pt_loop_berry_modulus() {
        let path = PathSpec::pt_loop_default().build().unwrap();
        let ep = closed_loop_eigenpath(&path, &StudyOptions::cyclic()).unwrap();
        // ξᴴv̇ = iφ̇/2 + φ̇γ/(2λ) for this family, with φ̇ = 2π.
        let lambda = 0.75f64.sqrt();
        for (j, l) in [(0, -lambda), (1, lambda)] {
            let b = berry_phase(&ep, j, 1.0).unwrap();
            let expected_re = std::f64::consts::PI * 0.5 / l;
            assert!((b.re - expected_re).abs() < 1e-6, "j={j} {b}");
            let out = cyclic_phase_on(&path, &ep, j, 50.0, 1e-6, &PropagatorOptions::default()).unwrap();
            let modulus = (-expected_re).exp();
            assert!((out.berry_factor.norm() - modulus).abs() < 1e-6 * modulus);
        }
    }
}
