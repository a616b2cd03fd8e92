//! Smooth Hamiltonian paths `s ∈ [0,1] ↦ H(s)`, the built-in families, and
//! the check that a path has a real, non-degenerate spectrum everywhere.

mod families;
mod profile;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numkernel::{eig, ComplexMatrix, KernelError};

pub use families::{make_builtin_path, LoopBase, PathSpec};
pub use profile::{CompiledProfile, CubicSpline, Profile, RampShape};

pub type MatrixFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

/// Relative closure tolerance `‖H(1) − H(0)‖ ≤ tol·‖H(0)‖` for cyclic paths.
pub const CYCLIC_CLOSURE_TOL: f64 = 1.0e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("invalid path parameters: {0}")]
    InvalidParams(String),
    #[error("path is flagged cyclic but ‖H(1) − H(0)‖/‖H(0)‖ = {mismatch:.3e}")]
    NotCyclic { mismatch: f64 },
    #[error("H({s}) is not a finite {dim}x{dim} matrix")]
    BadSample { s: f64, dim: usize },
}

/// An immutable descriptor of `H(s)` on `[0, 1]`.
#[derive(Clone)]
pub struct HamiltonianPath {
    dim: usize,
    sample: MatrixFn,
    derivative: Option<MatrixFn>,
    cyclic: bool,
    diagnostic: bool,
    family_tag: String,
}

impl HamiltonianPath {
    pub fn new(
        dim: usize,
        family_tag: impl Into<String>,
        sample: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            sample: Arc::new(sample),
            derivative: None,
            cyclic: false,
            diagnostic: false,
            family_tag: family_tag.into(),
        }
    }

    /// `H(s) = h` for every `s`.
    pub fn constant(h: ComplexMatrix) -> Self {
        let dim = h.dim();
        let zero = ComplexMatrix::zeros(dim);
        Self::new(dim, "constant", move |_| h.clone()).with_derivative(move |_| zero.clone())
    }

    pub fn with_derivative(
        mut self,
        derivative: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    /// Marks the path cyclic after checking `H(1) ≈ H(0)`.
    pub fn into_cyclic(mut self) -> Result<Self, PathError> {
        let h0 = self.sample(0.0);
        let h1 = self.sample(1.0);
        let mismatch = (&h1 - &h0).frobenius_norm() / h0.frobenius_norm().max(f64::MIN_POSITIVE);
        if mismatch > CYCLIC_CLOSURE_TOL {
            return Err(PathError::NotCyclic { mismatch });
        }
        self.cyclic = true;
        Ok(self)
    }

    pub fn with_diagnostic(mut self, diagnostic: bool) -> Self {
        self.diagnostic = diagnostic;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    /// Whether the path was built outside the theorem's hypotheses on purpose.
    pub fn is_diagnostic(&self) -> bool {
        self.diagnostic
    }

    pub fn family_tag(&self) -> &str {
        &self.family_tag
    }

    pub fn sample(&self, s: f64) -> ComplexMatrix {
        (self.sample)(s)
    }

    pub fn sample_checked(&self, s: f64) -> Result<ComplexMatrix, PathError> {
        let h = self.sample(s);
        if h.dim() != self.dim || !h.is_finite() {
            return Err(PathError::BadSample { s, dim: self.dim });
        }
        Ok(h)
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn derivative(&self, s: f64) -> Option<ComplexMatrix> {
        self.derivative.as_ref().map(|d| d(s))
    }
}

impl fmt::Debug for HamiltonianPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianPath")
            .field("dim", &self.dim)
            .field("family_tag", &self.family_tag)
            .field("cyclic", &self.cyclic)
            .field("diagnostic", &self.diagnostic)
            .field("has_derivative", &self.derivative.is_some())
            .finish()
    }
}

/// Numerical stand-ins for "real" and "non-degenerate".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumThresholds {
    /// Eigenvalues count as real when `|Im λ| ≤ imag_rel·‖H‖`.
    pub imag_rel: f64,
    /// Minimum admissible gap, relative to ‖H‖.
    pub gap_rel: f64,
}

impl Default for SpectrumThresholds {
    fn default() -> Self {
        Self {
            imag_rel: 1.0e-9,
            gap_rel: 1.0e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCertificate {
    pub min_gap: f64,
    pub max_imag: f64,
    /// `max_s ‖H(s)‖_F` over the validation grid.
    pub max_norm: f64,
    pub grid_size: usize,
    pub hypotheses_met: bool,
    pub thresholds: SpectrumThresholds,
    /// First eigensolver failure on the grid, if any.
    pub failure: Option<String>,
}

pub const MIN_VALIDATION_GRID: usize = 32;

/// Eigendecomposes `H(s_k)` on `grid_size + 1` uniform nodes.
///
/// Never fails on a broken hypothesis; the outcome is encoded in the
/// certificate so diagnostic runs can continue deliberately.
pub fn validate_spectrum(
    path: &HamiltonianPath,
    grid_size: usize,
    thresholds: SpectrumThresholds,
) -> Result<SpectrumCertificate, PathError> {
    if grid_size < MIN_VALIDATION_GRID {
        return Err(PathError::InvalidParams(format!(
            "validation grid must have at least {MIN_VALIDATION_GRID} intervals"
        )));
    }
    let mut min_gap = f64::INFINITY;
    let mut max_imag: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    let mut reality_ok = true;
    let mut gap_ok = true;
    let mut failure = None;

    for k in 0..=grid_size {
        let s = k as f64 / grid_size as f64;
        let h = path.sample_checked(s)?;
        let norm = h.frobenius_norm();
        max_norm = max_norm.max(norm);
        match eig(&h) {
            Ok(d) => {
                let lambdas = &d.eigenvalues;
                let imag = lambdas.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
                max_imag = max_imag.max(imag);
                if imag > thresholds.imag_rel * norm {
                    reality_ok = false;
                }
                let gap = min_pairwise_gap(lambdas);
                min_gap = min_gap.min(gap);
                if gap < thresholds.gap_rel * norm {
                    gap_ok = false;
                }
            }
            Err(KernelError::DefectiveOrIllConditioned { reason }) => {
                gap_ok = false;
                min_gap = 0.0;
                failure.get_or_insert(format!("s = {s}: {reason}"));
            }
            Err(e) => {
                gap_ok = false;
                failure.get_or_insert(format!("s = {s}: {e}"));
            }
        }
    }
    if path.dim() == 1 {
        min_gap = f64::INFINITY;
    }
    Ok(SpectrumCertificate {
        min_gap,
        max_imag,
        max_norm,
        grid_size,
        hypotheses_met: reality_ok && gap_ok,
        thresholds,
        failure,
    })
}

pub fn min_pairwise_gap(lambdas: &[num_complex::Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..lambdas.len() {
        for j in (i + 1)..lambdas.len() {
            gap = gap.min((lambdas[i] - lambdas[j]).norm());
        }
    }
    gap
}
