use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::hampath::{PathSpec, MIN_VALIDATION_GRID};
use crate::propagator::PropagatorOptions;
use crate::spectral::MIN_PATH_GRID;

use super::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// Convergence study with the rate, hypothesis and bound assertions.
    Verify,
    /// Error table over `t_list`, no assertions.
    Sweep,
    /// Dynamic and Berry phases; cyclic splitting on closed loops.
    Phase,
    /// Empirical sup norms against the Grönwall certificate.
    Bound,
    /// Convergence study run on purpose outside the hypotheses.
    Diagnostic,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Sweep => "sweep",
            Self::Phase => "phase",
            Self::Bound => "bound",
            Self::Diagnostic => "diagnostic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Eigenpath intervals for open paths.
    pub eigenpath: usize,
    /// Eigenpath intervals for closed loops in phase jobs.
    pub cyclic_eigenpath: usize,
    /// Nodes of the spectrum validation scan.
    pub validation: usize,
    /// Eigenpath intervals for the Grönwall certificate.
    pub bound: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            eigenpath: 2048,
            cyclic_eigenpath: 16384,
            validation: 256,
            bound: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Initial integrator tolerance (tightened per T as needed).
    pub integrator: f64,
    pub imag_rel: f64,
    pub gap_rel: f64,
    pub gap_min_rel: f64,
    /// Accepted distance of the fitted exponent from −1.
    pub rate_band: f64,
    /// Largest accepted fitted exponent for cyclic residuals.
    pub cyclic_exponent_max: f64,
    /// Accepted distance between the integrated and discrete Berry factors.
    pub berry_agreement: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            integrator: 1.0e-6,
            imag_rel: 1.0e-9,
            gap_rel: 1.0e-6,
            gap_min_rel: 1.0e-6,
            rate_band: 0.15,
            cyclic_exponent_max: -0.8,
            berry_agreement: 1.0e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    /// Destination file; standard output when absent.
    pub path: Option<PathBuf>,
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Usually given by the subcommand instead.
    #[serde(default)]
    pub job: Option<JobKind>,
    pub path: PathSpec,
    #[serde(default)]
    pub t_list: Vec<f64>,
    #[serde(default)]
    pub label: usize,
    #[serde(default = "default_s_eval")]
    pub s_eval: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub integrator: PropagatorOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_s_eval() -> f64 {
    1.0
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|span| {
                    let line = text[..span.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            invalid(&field, e.message().to_string())
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// The job to run: the subcommand when given, else the file's `job`.
    pub fn resolve_job(&self, requested: Option<JobKind>) -> Result<JobKind, CliError> {
        requested
            .or(self.job)
            .ok_or_else(|| invalid("job", "no job given in the file or on the command line"))
    }

    pub fn validate(&self, job: JobKind) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if let Some(t) = self.t_list.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(invalid("t_list", format!("time scales must be positive and finite, got {t}")));
        }
        if self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("t_list", "time scales must be strictly increasing"));
        }
        let min_points = match job {
            JobKind::Verify | JobKind::Diagnostic => crate::adiabatic::MIN_STUDY_POINTS,
            JobKind::Bound => 1,
            JobKind::Sweep | JobKind::Phase => 0,
        };
        if self.t_list.len() < min_points {
            return Err(invalid(
                "t_list",
                format!("{} needs at least {min_points} time scales", job.name()),
            ));
        }
        let tol = &self.tolerances;
        for (name, value) in [
            ("tolerances.integrator", tol.integrator),
            ("tolerances.imag_rel", tol.imag_rel),
            ("tolerances.gap_rel", tol.gap_rel),
            ("tolerances.gap_min_rel", tol.gap_min_rel),
            ("tolerances.rate_band", tol.rate_band),
            ("tolerances.berry_agreement", tol.berry_agreement),
            ("integrator.h_max", self.integrator.h_max),
            ("integrator.c_osc", self.integrator.c_osc),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }
        if !tol.cyclic_exponent_max.is_finite() {
            return Err(invalid("tolerances.cyclic_exponent_max", "must be finite"));
        }
        let grids = &self.grids;
        for (name, value, min) in [
            ("grids.eigenpath", grids.eigenpath, MIN_PATH_GRID),
            ("grids.cyclic_eigenpath", grids.cyclic_eigenpath, MIN_PATH_GRID),
            ("grids.bound", grids.bound, 2 * MIN_PATH_GRID),
            ("grids.validation", grids.validation, MIN_VALIDATION_GRID),
            ("integrator.output_intervals", self.integrator.output_intervals, 1),
        ] {
            if value < min {
                return Err(invalid(name, format!("must be at least {min}, got {value}")));
            }
        }
        let on_grid = |m: usize| {
            let k = (self.s_eval * m as f64).round();
            (0.0..=1.0).contains(&self.s_eval) && (k / m as f64 - self.s_eval).abs() <= 1e-12
        };
        if !on_grid(grids.eigenpath) {
            return Err(invalid(
                "s_eval",
                format!("{} is not a node of the {}-interval eigenpath grid", self.s_eval, grids.eigenpath),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
t_list = [50.0, 100.0, 200.0, 400.0]

[path]
family = "pt_dimer"
k = 1.0
gamma = { kind = "constant", value = 0.5 }
phi = { kind = "ramp", from = 0.0, to = 1.5, shape = "quadratic" }
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.path, PathSpec::pt_dimer_default());
        assert_eq!(c.s_eval, 1.0);
        assert_eq!(c.grids, GridConfig::default());
        c.validate(JobKind::Verify).unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn field_level_errors() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.t_list = vec![-1.0, 10.0];
        let err = c.validate(JobKind::Sweep).unwrap_err();
        assert!(matches!(&err, CliError::ConfigInvalid { field, .. } if field == "t_list"));

        c.t_list = vec![10.0, 5.0];
        assert!(c.validate(JobKind::Sweep).is_err());

        c.t_list = vec![10.0, 20.0];
        assert!(c.validate(JobKind::Verify).is_err());
        assert!(c.validate(JobKind::Sweep).is_ok());

        c.tolerances.integrator = 0.0;
        let err = c.validate(JobKind::Sweep).unwrap_err();
        assert!(matches!(&err, CliError::ConfigInvalid { field, .. } if field == "tolerances.integrator"));

        c.tolerances.integrator = 1e-6;
        c.grids.eigenpath = 8;
        assert!(c.validate(JobKind::Sweep).is_err());

        c.grids.eigenpath = 2048;
        c.s_eval = 0.3;
        let err = c.validate(JobKind::Sweep).unwrap_err();
        assert!(matches!(&err, CliError::ConfigInvalid { field, .. } if field == "s_eval"));
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let text = MINIMAL.replace("t_list", "t_lsit");
        assert!(matches!(
            ExperimentConfig::from_toml(&text),
            Err(CliError::ConfigInvalid { .. })
        ));
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.schema_version = 2;
        assert!(c.validate(JobKind::Sweep).is_err());
    }

    #[test]
    fn job_resolution() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert!(c.resolve_job(None).is_err());
        assert_eq!(c.resolve_job(Some(JobKind::Bound)).unwrap(), JobKind::Bound);
    }
}
