use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::profile::{CompiledProfile, CubicSpline, Profile, RampShape};
use super::{HamiltonianPath, PathError};
use crate::numkernel::{ComplexMatrix, C64, I};

/// Declarative description of a Hamiltonian path, as read from config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PathSpec {
    /// `H = B·(cos θ σ_z + sin θ (cos φ σ_x + sin φ σ_y))`; eigenvalues `±B`.
    Hermitian2 { b: f64, theta: Profile, phi: Profile },
    /// `H = [[iγ, k e^{−iφ}], [k e^{iφ}, −iγ]]`; eigenvalues `±√(k² − γ²)`.
    PtDimer {
        k: f64,
        gamma: Profile,
        phi: Profile,
        #[serde(default)]
        diagnostic: bool,
    },
    /// `H = V⁻¹ H₂ V` with `H₂` a `hermitian2` Hamiltonian and
    /// `V = [[1, w e^{iχ}], [0, e^{σ}]]` (always invertible, not unitary).
    DressedHermitian {
        b: f64,
        theta: Profile,
        phi: Profile,
        shear: Profile,
        shear_phase: f64,
        log_scale: Profile,
    },
    /// A closed loop: the azimuth `φ` winds `winding` times around the circle.
    CyclicLoop {
        base: LoopBase,
        #[serde(default = "default_winding")]
        winding: i32,
    },
    /// `H(s)` given at knots; each entry is spline-interpolated.
    Table {
        s: Vec<f64>,
        /// `matrices[knot][row][col] = [re, im]`
        matrices: Vec<Vec<Vec<[f64; 2]>>>,
        #[serde(default)]
        cyclic: bool,
    },
}

fn default_winding() -> i32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopBase {
    Hermitian2 {
        b: f64,
        theta: f64,
    },
    PtDimer {
        k: f64,
        gamma: f64,
        #[serde(default)]
        diagnostic: bool,
    },
    /// Dressing amplitudes oscillate once around the loop.
    DressedHermitian {
        b: f64,
        theta: f64,
        shear: f64,
        shear_phase: f64,
        log_scale: f64,
    },
}

impl PathSpec {
    pub fn hermitian2_default() -> Self {
        Self::Hermitian2 {
            b: 1.0,
            theta: Profile::ramp(0.4, 1.3, RampShape::Quadratic),
            phi: Profile::ramp(0.0, 1.2, RampShape::Quadratic),
        }
    }

    pub fn pt_dimer_default() -> Self {
        Self::pt_dimer_with_gamma(0.5, false)
    }

    /// Constant `γ`, coupling phase ramped from 0 to 1.5.
    pub fn pt_dimer_with_gamma(gamma: f64, diagnostic: bool) -> Self {
        Self::PtDimer {
            k: 1.0,
            gamma: Profile::constant(gamma),
            phi: Profile::ramp(0.0, 1.5, RampShape::Quadratic),
            diagnostic,
        }
    }

    pub fn dressed_hermitian_default() -> Self {
        Self::DressedHermitian {
            b: 1.0,
            theta: Profile::ramp(0.4, 1.3, RampShape::Quadratic),
            phi: Profile::ramp(0.0, 1.2, RampShape::Quadratic),
            shear: Profile::ramp(0.0, 0.6, RampShape::Quadratic),
            shear_phase: 0.7,
            log_scale: Profile::ramp(0.0, 0.4, RampShape::Quadratic),
        }
    }

    pub fn hermitian_loop_default() -> Self {
        Self::CyclicLoop {
            base: LoopBase::Hermitian2 { b: 1.0, theta: 1.0 },
            winding: 1,
        }
    }

    pub fn pt_loop_default() -> Self {
        Self::CyclicLoop {
            base: LoopBase::PtDimer {
                k: 1.0,
                gamma: 0.5,
                diagnostic: false,
            },
            winding: 1,
        }
    }

    pub fn dressed_loop_default() -> Self {
        Self::CyclicLoop {
            base: LoopBase::DressedHermitian {
                b: 1.0,
                theta: 1.0,
                shear: 0.4,
                shear_phase: 0.7,
                log_scale: 0.3,
            },
            winding: 1,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Hermitian2 { .. } => "hermitian2",
            Self::PtDimer { .. } => "pt_dimer",
            Self::DressedHermitian { .. } => "dressed_hermitian",
            Self::CyclicLoop { .. } => "cyclic_loop",
            Self::Table { .. } => "table",
        }
    }

    pub fn build(&self) -> Result<HamiltonianPath, PathError> {
        make_builtin_path(self)
    }

    /// The same path with the parameter check for a real spectrum lifted.
    pub fn diagnostic_variant(&self) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            Self::PtDimer { diagnostic, .. }
            | Self::CyclicLoop {
                base: LoopBase::PtDimer { diagnostic, .. },
                ..
            } => *diagnostic = true,
            _ => {}
        }
        spec
    }
}

/// Builds a path from its declarative description, validating parameters.
pub fn make_builtin_path(spec: &PathSpec) -> Result<HamiltonianPath, PathError> {
    match spec {
        PathSpec::Hermitian2 { b, theta, phi } => {
            hermitian2(*b, theta.compile()?, phi.compile()?, "hermitian2")
        }
        PathSpec::PtDimer {
            k,
            gamma,
            phi,
            diagnostic,
        } => pt_dimer(*k, gamma.compile()?, phi.compile()?, *diagnostic, "pt_dimer"),
        PathSpec::DressedHermitian {
            b,
            theta,
            phi,
            shear,
            shear_phase,
            log_scale,
        } => dressed_hermitian(
            *b,
            theta.compile()?,
            phi.compile()?,
            shear.compile()?,
            *shear_phase,
            log_scale.compile()?,
            "dressed_hermitian",
        ),
        PathSpec::CyclicLoop { base, winding } => cyclic_loop(base, *winding),
        PathSpec::Table {
            s,
            matrices,
            cyclic,
        } => table(s, matrices, *cyclic),
    }
}

fn cyclic_loop(base: &LoopBase, winding: i32) -> Result<HamiltonianPath, PathError> {
    if winding == 0 {
        return Err(PathError::InvalidParams("loop winding must be nonzero".into()));
    }
    let phi = CompiledProfile::Ramp {
        from: 0.0,
        to: 2.0 * PI * winding as f64,
        shape: RampShape::Linear,
    };
    let path = match base {
        LoopBase::Hermitian2 { b, theta } => {
            hermitian2(*b, CompiledProfile::Constant(*theta), phi, "cyclic_loop:hermitian2")?
        }
        LoopBase::PtDimer {
            k,
            gamma,
            diagnostic,
        } => pt_dimer(
            *k,
            CompiledProfile::Constant(*gamma),
            phi,
            *diagnostic,
            "cyclic_loop:pt_dimer",
        )?,
        LoopBase::DressedHermitian {
            b,
            theta,
            shear,
            shear_phase,
            log_scale,
        } => {
            let wobble = |amplitude: f64| CompiledProfile::Periodic {
                mean: 0.0,
                amplitude,
                cycles: 1.0,
            };
            dressed_hermitian(
                *b,
                CompiledProfile::Constant(*theta),
                phi,
                wobble(*shear),
                *shear_phase,
                wobble(*log_scale),
                "cyclic_loop:dressed_hermitian",
            )?
        }
    };
    path.into_cyclic()
}

fn check_positive(x: f64, name: &str) -> Result<(), PathError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(PathError::InvalidParams(format!("{name} must be positive and finite, got {x}")))
    }
}

fn hermitian2_matrix(b: f64, theta: f64, phi: f64) -> ComplexMatrix {
    let (st, ct) = theta.sin_cos();
    let e = C64::from_polar(1.0, phi);
    let mut h = ComplexMatrix::zeros(2);
    h[(0, 0)] = C64::new(b * ct, 0.0);
    h[(1, 1)] = C64::new(-b * ct, 0.0);
    h[(0, 1)] = e.conj() * (b * st);
    h[(1, 0)] = e * (b * st);
    h
}

fn hermitian2_derivative(b: f64, theta: f64, dtheta: f64, phi: f64, dphi: f64) -> ComplexMatrix {
    let (st, ct) = theta.sin_cos();
    let e = C64::from_polar(1.0, phi);
    let mut d = ComplexMatrix::zeros(2);
    d[(0, 0)] = C64::new(-b * st * dtheta, 0.0);
    d[(1, 1)] = C64::new(b * st * dtheta, 0.0);
    d[(0, 1)] = e.conj() * C64::new(b * ct * dtheta, -b * st * dphi);
    d[(1, 0)] = e * C64::new(b * ct * dtheta, b * st * dphi);
    d
}

fn hermitian2(
    b: f64,
    theta: CompiledProfile,
    phi: CompiledProfile,
    tag: &str,
) -> Result<HamiltonianPath, PathError> {
    check_positive(b, "b")?;
    let (theta2, phi2) = (theta.clone(), phi.clone());
    Ok(HamiltonianPath::new(2, tag, move |s| {
        hermitian2_matrix(b, theta.value(s), phi.value(s))
    })
    .with_derivative(move |s| {
        hermitian2_derivative(b, theta2.value(s), theta2.derivative(s), phi2.value(s), phi2.derivative(s))
    }))
}

fn pt_dimer(
    k: f64,
    gamma: CompiledProfile,
    phi: CompiledProfile,
    diagnostic: bool,
    tag: &str,
) -> Result<HamiltonianPath, PathError> {
    check_positive(k, "k")?;
    let sup_gamma = gamma.sup_abs();
    if sup_gamma >= k && !diagnostic {
        return Err(PathError::InvalidParams(format!(
            "pt_dimer needs sup |γ| < k for a real spectrum (sup |γ| = {sup_gamma}, k = {k}); \
             set diagnostic = true to run in the broken phase deliberately"
        )));
    }
    let (gamma2, phi2) = (gamma.clone(), phi.clone());
    let path = HamiltonianPath::new(2, tag, move |s| {
        let g = gamma.value(s);
        let e = C64::from_polar(1.0, phi.value(s));
        let mut h = ComplexMatrix::zeros(2);
        h[(0, 0)] = I * g;
        h[(1, 1)] = -I * g;
        h[(0, 1)] = e.conj() * k;
        h[(1, 0)] = e * k;
        h
    })
    .with_derivative(move |s| {
        let dg = gamma2.derivative(s);
        let dphi = phi2.derivative(s);
        let e = C64::from_polar(1.0, phi2.value(s));
        let mut d = ComplexMatrix::zeros(2);
        d[(0, 0)] = I * dg;
        d[(1, 1)] = -I * dg;
        d[(0, 1)] = -I * e.conj() * (k * dphi);
        d[(1, 0)] = I * e * (k * dphi);
        d
    })
    .with_diagnostic(diagnostic);
    Ok(path)
}

struct Dressing {
    shear: CompiledProfile,
    rotation: C64,
    log_scale: CompiledProfile,
}

impl Dressing {
    fn v(&self, s: f64) -> ComplexMatrix {
        let mut v = ComplexMatrix::identity(2);
        v[(0, 1)] = self.rotation * self.shear.value(s);
        v[(1, 1)] = C64::new(self.log_scale.value(s).exp(), 0.0);
        v
    }

    fn v_inverse(&self, s: f64) -> ComplexMatrix {
        let inv_scale = (-self.log_scale.value(s)).exp();
        let mut v = ComplexMatrix::identity(2);
        v[(0, 1)] = -self.rotation * (self.shear.value(s) * inv_scale);
        v[(1, 1)] = C64::new(inv_scale, 0.0);
        v
    }

    fn v_dot(&self, s: f64) -> ComplexMatrix {
        let mut d = ComplexMatrix::zeros(2);
        d[(0, 1)] = self.rotation * self.shear.derivative(s);
        d[(1, 1)] = C64::new(self.log_scale.derivative(s) * self.log_scale.value(s).exp(), 0.0);
        d
    }
}

fn dressed_hermitian(
    b: f64,
    theta: CompiledProfile,
    phi: CompiledProfile,
    shear: CompiledProfile,
    shear_phase: f64,
    log_scale: CompiledProfile,
    tag: &str,
) -> Result<HamiltonianPath, PathError> {
    check_positive(b, "b")?;
    if !shear_phase.is_finite() {
        return Err(PathError::InvalidParams("shear_phase must be finite".into()));
    }
    let dressing = std::sync::Arc::new(Dressing {
        shear,
        rotation: C64::from_polar(1.0, shear_phase),
        log_scale,
    });
    let d2 = dressing.clone();
    let (theta2, phi2) = (theta.clone(), phi.clone());
    Ok(HamiltonianPath::new(2, tag, move |s| {
        let h2 = hermitian2_matrix(b, theta.value(s), phi.value(s));
        &(&dressing.v_inverse(s) * &h2) * &dressing.v(s)
    })
    .with_derivative(move |s| {
        // Ḣ = V⁻¹Ḣ₂V + [H, V⁻¹V̇]
        let vinv = d2.v_inverse(s);
        let v = d2.v(s);
        let h2 = hermitian2_matrix(b, theta2.value(s), phi2.value(s));
        let h2dot = hermitian2_derivative(
            b,
            theta2.value(s),
            theta2.derivative(s),
            phi2.value(s),
            phi2.derivative(s),
        );
        let h = &(&vinv * &h2) * &v;
        let gen = &vinv * &d2.v_dot(s);
        let conj = &(&vinv * &h2dot) * &v;
        let comm = &(&h * &gen) - &(&gen * &h);
        &conj + &comm
    }))
}

fn table(
    knots: &[f64],
    matrices: &[Vec<Vec<[f64; 2]>>],
    cyclic: bool,
) -> Result<HamiltonianPath, PathError> {
    if matrices.len() != knots.len() || matrices.is_empty() {
        return Err(PathError::InvalidParams(
            "table needs one matrix per knot".into(),
        ));
    }
    let dim = matrices[0].len();
    if dim == 0 || dim > crate::numkernel::MAX_DIM {
        return Err(PathError::InvalidParams(format!("table dimension {dim} out of range")));
    }
    if matrices
        .iter()
        .any(|m| m.len() != dim || m.iter().any(|row| row.len() != dim))
    {
        return Err(PathError::InvalidParams("table matrices must all be square and equal size".into()));
    }
    let mut splines = Vec::with_capacity(dim * dim * 2);
    for r in 0..dim {
        for c in 0..dim {
            for part in 0..2 {
                let values: Vec<f64> = matrices.iter().map(|m| m[r][c][part]).collect();
                splines.push(CubicSpline::new(knots.to_vec(), values)?);
            }
        }
    }
    let splines = std::sync::Arc::new(splines);
    let s2 = splines.clone();
    let entry = move |sp: &[CubicSpline], s: f64, deriv: bool| {
        ComplexMatrix::from_fn(dim, |r, c| {
            let base = 2 * (r * dim + c);
            if deriv {
                C64::new(sp[base].derivative(s), sp[base + 1].derivative(s))
            } else {
                C64::new(sp[base].value(s), sp[base + 1].value(s))
            }
        })
    };
    let path = HamiltonianPath::new(dim, "table", move |s| entry(&splines, s, false))
        .with_derivative(move |s| entry(&s2, s, true));
    if cyclic {
        path.into_cyclic()
    } else {
        Ok(path)
    }
}
