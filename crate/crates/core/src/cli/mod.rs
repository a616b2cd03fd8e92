//! TOML-configured experiment runner behind the `nhadiabatic` binary.

pub mod config;
pub mod report;

use std::time::Instant;

pub use config::{ExperimentConfig, JobKind, OutputFormat, SCHEMA_VERSION};
pub use report::{emit_report, Check, Payload, ReportEnvelope, Verdict, CSV_HEADER};

use crate::adiabatic::{
    closed_loop_eigenpath, cyclic_phase_on, fit_loglog, measure_errors, node_index, phase_record,
    prepared_eigenpath, ConvergenceReport, CyclicPhase, StudyOptions,
};
use crate::hampath::{validate_spectrum, HamiltonianPath, SpectrumThresholds};
use crate::propagator::{bound_certificate, monitor_with_checks};
use report::{BoundPayload, PhasePayload, StageTiming};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MODULE_ERROR: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_VERIFICATION_FAILED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("cannot read config {path}: {message}")]
    ConfigUnreadable { path: String, message: String },
    #[error("{stage} failed: {message}")]
    Module { stage: &'static str, message: String },
    #[error("cannot write report: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigInvalid { .. } | Self::ConfigUnreadable { .. } => EXIT_CONFIG_ERROR,
            Self::Module { .. } | Self::Output(_) => EXIT_MODULE_ERROR,
        }
    }
}

/// Exit status for a finished run.
pub fn exit_code(result: &Result<ReportEnvelope, CliError>) -> i32 {
    match result {
        Ok(env) if env.verdict.passed => EXIT_OK,
        Ok(_) => EXIT_VERIFICATION_FAILED,
        Err(e) => e.exit_code(),
    }
}

fn module<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Module {
        stage,
        message: e.to_string(),
    }
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

impl ExperimentConfig {
    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            eig_grid: self.grids.eigenpath,
            validation_grid: self.grids.validation,
            thresholds: SpectrumThresholds {
                imag_rel: self.tolerances.imag_rel,
                gap_rel: self.tolerances.gap_rel,
            },
            tol: self.tolerances.integrator,
            propagator: self.integrator,
            gap_min_rel: self.tolerances.gap_min_rel,
        }
    }
}

/// Parameters that only violate the real-spectrum requirement still build,
/// so that the spectrum check reports the failure as a hypothesis failure.
fn build_path(config: &ExperimentConfig, job: JobKind) -> Result<HamiltonianPath, CliError> {
    let invalid = |e: crate::hampath::PathError| CliError::ConfigInvalid {
        field: "path".into(),
        message: e.to_string(),
    };
    if job == JobKind::Diagnostic {
        return Ok(config.path.diagnostic_variant().build().map_err(invalid)?.with_diagnostic(true));
    }
    match config.path.build() {
        Ok(path) => Ok(path),
        Err(e) => match config.path.diagnostic_variant().build() {
            Ok(path) => Ok(path.with_diagnostic(false)),
            Err(_) => Err(invalid(e)),
        },
    }
}

/// Validates `config`, runs `job` and assembles the report.
///
/// A path that fails the spectral hypotheses outside diagnostic mode yields
/// a report with a failed verdict rather than an error.
pub fn run_experiment(config: &ExperimentConfig, job: JobKind) -> Result<ReportEnvelope, CliError> {
    config.validate(job)?;
    let mut timer = Timer(Vec::new());
    let path = timer.run("hampath", || build_path(config, job))?;
    if config.label >= path.dim() {
        return Err(CliError::ConfigInvalid {
            field: "label".into(),
            message: format!("label {} out of range for dimension {}", config.label, path.dim()),
        });
    }
    let options = config.study_options();
    let spectrum = timer
        .run("spectrum", || {
            validate_spectrum(&path, options.validation_grid, options.thresholds)
        })
        .map_err(module("spectrum validation"))?;

    let mut verdict = Verdict::default();
    let hypotheses_detail = format!(
        "min gap {:.3e}, max |Im λ| {:.3e}",
        spectrum.min_gap, spectrum.max_imag
    );
    let payload = if !spectrum.hypotheses_met && !path.is_diagnostic() {
        verdict.push("spectral_hypotheses", false, true, hypotheses_detail.clone());
        Payload::Refused {
            reason: format!("spectral hypotheses not met: {hypotheses_detail}"),
        }
    } else {
        verdict.push(
            "spectral_hypotheses",
            spectrum.hypotheses_met,
            job != JobKind::Diagnostic,
            hypotheses_detail,
        );
        match job {
            JobKind::Verify | JobKind::Diagnostic | JobKind::Sweep => {
                let report = timer
                    .run("adiabatic", || {
                        measure_errors(&path, config.label, &config.t_list, config.s_eval, &options)
                    })
                    .map_err(module("adiabatic study"))?;
                convergence_checks(job, config, &report, &mut verdict);
                Payload::Convergence(report)
            }
            JobKind::Phase => {
                Payload::Phase(run_phase(config, &path, &options, &mut timer, &mut verdict)?)
            }
            JobKind::Bound => {
                let (mut certificate, inverse_checks) = timer
                    .run("propagator", || {
                        monitor_with_checks(
                            &path,
                            &config.t_list,
                            options.tol,
                            &options.propagator,
                            Some(config.seed),
                        )
                    })
                    .map_err(module("propagator"))?;
                let analytic = if spectrum.hypotheses_met {
                    let b = timer
                        .run("certificate", || bound_certificate(&path, config.grids.bound))
                        .map_err(module("bound certificate"))?;
                    certificate = certificate.with_analytic(&b);
                    Some(b)
                } else {
                    None
                };
                bound_checks(&certificate, analytic.as_ref(), &inverse_checks, &mut verdict);
                Payload::Bound(BoundPayload {
                    certificate,
                    analytic,
                    inverse_checks,
                })
            }
        }
    };

    Ok(ReportEnvelope {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        job,
        config: config.clone(),
        // Anything run outside the hypotheses is labeled diagnostic.
        diagnostic: path.is_diagnostic() || !spectrum.hypotheses_met,
        spectrum,
        payload,
        verdict: verdict.finish(),
        timings: timer.0,
    })
}

fn convergence_checks(
    job: JobKind,
    config: &ExperimentConfig,
    report: &ConvergenceReport,
    verdict: &mut Verdict,
) {
    let asserting = job == JobKind::Verify;
    if job == JobKind::Sweep {
        return;
    }
    verdict.push(
        "rate_measurable",
        report.rate_measurable,
        asserting,
        report.note.clone().unwrap_or_else(|| "errors above the integrator floor".into()),
    );
    let band = config.tolerances.rate_band;
    let (rate_ok, detail) = match report.fitted_exponent {
        Some(p) => ((p + 1.0).abs() <= band, format!("fitted exponent {p:.4}, accepted −1 ± {band}")),
        None => (false, "no exponent could be fitted".into()),
    };
    verdict.push("adiabatic_rate", rate_ok, asserting, detail);
    if let Some(bound) = &report.bound {
        let sup_u = report.samples.iter().map(|s| s.sup_u).fold(0.0, f64::max);
        let sup_uinv = report.samples.iter().map(|s| s.sup_uinv).fold(0.0, f64::max);
        let ok = sup_u <= bound.bound_u * (1.0 + 1e-6) && sup_uinv <= bound.bound_uinv * (1.0 + 1e-6);
        verdict.push(
            "propagator_bound",
            ok,
            asserting,
            format!(
                "sup‖U‖ {sup_u:.6} ≤ {:.6}, sup‖U⁻¹‖ {sup_uinv:.6} ≤ {:.6}",
                bound.bound_u, bound.bound_uinv
            ),
        );
    }
}

fn bound_checks(
    certificate: &crate::propagator::BoundCertificate,
    analytic: Option<&crate::propagator::AnalyticBound>,
    inverse_checks: &[crate::propagator::InvertReport],
    verdict: &mut Verdict,
) {
    let detail = match analytic {
        Some(b) => format!(
            "sup‖U‖ {:.6} vs {:.6}, sup‖U⁻¹‖ {:.6} vs {:.6}, grid refinement change {:.2e}",
            certificate.sup_u, b.bound_u, certificate.sup_uinv, b.bound_uinv, b.refinement_change
        ),
        None => "no certificate without the spectral hypotheses".into(),
    };
    verdict.push("dominated", certificate.dominated() == Some(true), true, detail);
    let identity = inverse_checks.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
    let spot = inverse_checks.iter().map(|r| r.spot_inverse_residual).fold(0.0, f64::max);
    verdict.push(
        "inverse_consistency",
        identity.is_finite() && spot.is_finite(),
        false,
        format!("max ‖U·Uinv − I‖ {identity:.2e}, max spot inverse mismatch {spot:.2e}"),
    );
}

fn run_phase(
    config: &ExperimentConfig,
    path: &HamiltonianPath,
    options: &StudyOptions,
    timer: &mut Timer,
    verdict: &mut Verdict,
) -> Result<PhasePayload, CliError> {
    let t_max = config.t_list.last().copied().unwrap_or(0.0);
    let j = config.label;
    let closed_loop = path.is_cyclic();
    let ep = if closed_loop {
        let cyclic_options = StudyOptions {
            eig_grid: config.grids.cyclic_eigenpath,
            ..*options
        };
        timer.run("spectral", || closed_loop_eigenpath(path, &cyclic_options))
    } else {
        timer.run("spectral", || prepared_eigenpath(path, options))
    }
    .map_err(module("eigenpath continuation"))?;
    let k = node_index(&ep, config.s_eval).map_err(|e| CliError::ConfigInvalid {
        field: "s_eval".into(),
        message: e.to_string(),
    })?;
    let record = timer
        .run("phases", || phase_record(&ep, j, t_max))
        .map_err(module("phase extraction"))?;

    let mut cyclic = Vec::new();
    if closed_loop {
        let results: Vec<_> = timer.run("cyclic", || {
            std::thread::scope(|scope| {
                let handles: Vec<_> = config
                    .t_list
                    .iter()
                    .map(|&t| {
                        let ep = &ep;
                        scope.spawn(move || {
                            cyclic_phase_on(path, ep, j, t, options.tol, &options.propagator)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("cyclic phase thread panicked"))
                    .collect()
            })
        });
        cyclic = results
            .into_iter()
            .collect::<Result<Vec<CyclicPhase>, _>>()
            .map_err(module("cyclic phase extraction"))?;
    }

    let cyclic_exponent = if cyclic.len() >= 2 {
        let t: Vec<f64> = cyclic.iter().map(|c| c.t).collect();
        let r: Vec<f64> = cyclic.iter().map(|c| c.residual).collect();
        fit_loglog(&t, &r)
    } else {
        None
    };
    if closed_loop {
        let last = ep.intervals();
        let berry = (-record.berry_integral[last]).exp();
        let discrete = (-record.discrete_berry[last]).exp();
        let diff = (berry - discrete).norm();
        let tol = config.tolerances.berry_agreement;
        verdict.push(
            "berry_agreement",
            diff <= tol,
            true,
            format!("|e^(−b) − discrete| = {diff:.3e}, accepted {tol:.1e}"),
        );
        if let Some(p) = cyclic_exponent {
            let max = config.tolerances.cyclic_exponent_max;
            verdict.push(
                "cyclic_rate",
                p <= max,
                true,
                format!("fitted residual exponent {p:.4}, accepted ≤ {max}"),
            );
        }
    }

    Ok(PhasePayload {
        j,
        s_eval: config.s_eval,
        eigenpath_intervals: ep.intervals(),
        dynamic_phase: record.dynamic_phase[k],
        dynamic_phase_imag: record.dynamic_phase_imag[k],
        berry_integral: record.berry_integral[k],
        discrete_berry: record.discrete_berry[k],
        dynamic_quadrature_error: record.dynamic_quadrature_error,
        closed_loop,
        cyclic,
        cyclic_exponent,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigUnreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ExperimentConfig::from_toml(&text)
}
