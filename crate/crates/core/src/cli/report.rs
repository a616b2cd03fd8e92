use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adiabatic::{ConvergenceReport, CyclicPhase};
use crate::hampath::SpectrumCertificate;
use crate::numkernel::C64;
use crate::propagator::{AnalyticBound, BoundCertificate, InvertReport};

use super::config::{ExperimentConfig, JobKind, OutputFormat};
use super::CliError;

pub const CSV_HEADER: &str = "T,epsilon,sup_U,sup_Uinv,re_berry,im_berry,dyn_phase";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePayload {
    pub j: usize,
    pub s_eval: f64,
    pub eigenpath_intervals: usize,
    /// `ν_j(s_eval)`
    pub dynamic_phase: f64,
    pub dynamic_phase_imag: f64,
    /// `b_j(s_eval)`; the Berry factor is `e^{−b_j}`.
    pub berry_integral: C64,
    pub discrete_berry: C64,
    pub dynamic_quadrature_error: f64,
    /// Whether the eigenpath gauge was closed around a loop.
    pub closed_loop: bool,
    pub cyclic: Vec<CyclicPhase>,
    /// Fitted slope of the cyclic residual against `T`.
    pub cyclic_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPayload {
    pub certificate: BoundCertificate,
    pub analytic: Option<AnalyticBound>,
    pub inverse_checks: Vec<InvertReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Convergence(ConvergenceReport),
    Phase(PhasePayload),
    Bound(BoundPayload),
    /// Nothing was measured because the spectral hypotheses failed.
    Refused { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Informational checks never fail the verdict.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn push(&mut self, name: &str, passed: bool, required: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            required,
            detail,
        });
    }

    pub fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed || !c.required);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything one run produced, with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub job: JobKind,
    pub config: ExperimentConfig,
    pub spectrum: SpectrumCertificate,
    pub diagnostic: bool,
    pub payload: Payload,
    pub verdict: Verdict,
    pub timings: Vec<StageTiming>,
}

type Row = [Option<f64>; 7];

impl ReportEnvelope {
    /// One row per time scale, in the order of [`CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<Row> {
        match &self.payload {
            Payload::Convergence(r) => r
                .samples
                .iter()
                .map(|e| {
                    [
                        Some(e.t),
                        Some(e.epsilon),
                        Some(e.sup_u),
                        Some(e.sup_uinv),
                        Some(r.berry_integral.re),
                        Some(r.berry_integral.im),
                        Some(r.dynamic_phase),
                    ]
                })
                .collect(),
            Payload::Phase(p) => p
                .cyclic
                .iter()
                .map(|c| {
                    [
                        Some(c.t),
                        Some(c.residual),
                        None,
                        None,
                        Some(p.berry_integral.re),
                        Some(p.berry_integral.im),
                        Some(p.dynamic_phase),
                    ]
                })
                .collect(),
            Payload::Bound(b) => b
                .certificate
                .per_t
                .iter()
                .map(|n| [Some(n.t), None, Some(n.sup_u), Some(n.sup_uinv), None, None, None])
                .collect(),
            Payload::Refused { .. } => Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            let fields: Vec<String> = row
                .iter()
                .map(|v| v.map(|x| format!("{x:.16e}")).unwrap_or_default())
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn emit_report(
    envelope: &ReportEnvelope,
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Json => {
            let mut s = envelope.to_json();
            s.push('\n');
            s
        }
        OutputFormat::Csv => envelope.to_csv(),
    };
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Output(e.to_string()))
}
