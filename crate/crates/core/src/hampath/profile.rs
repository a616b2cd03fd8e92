use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PathError;

/// Shape of a monotone ramp `p: [0,1] → [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    /// `p(s) = s`
    Linear,
    /// `p(s) = s²`: starts at rest, arrives with nonzero speed.
    #[default]
    Quadratic,
    /// `p(s) = 3s² − 2s³`: at rest at both ends.
    Smoothstep,
}

impl RampShape {
    fn value(self, s: f64) -> f64 {
        match self {
            Self::Linear => s,
            Self::Quadratic => s * s,
            Self::Smoothstep => s * s * (3.0 - 2.0 * s),
        }
    }

    fn derivative(self, s: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Quadratic => 2.0 * s,
            Self::Smoothstep => 6.0 * s * (1.0 - s),
        }
    }
}

/// A scalar control profile `s ↦ x(s)` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    Ramp {
        from: f64,
        to: f64,
        #[serde(default)]
        shape: RampShape,
    },
    /// `mean + amplitude·sin(2π·cycles·s)`
    Periodic {
        mean: f64,
        amplitude: f64,
        cycles: f64,
    },
    /// Sampled values joined by a natural cubic spline.
    Table { s: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn ramp(from: f64, to: f64, shape: RampShape) -> Self {
        Self::Ramp { from, to, shape }
    }

    pub fn compile(&self) -> Result<CompiledProfile, PathError> {
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(PathError::InvalidParams(format!("profile {what} must be finite")))
            }
        };
        match self {
            Self::Constant { value } => {
                finite(*value, "value")?;
                Ok(CompiledProfile::Constant(*value))
            }
            Self::Ramp { from, to, shape } => {
                finite(*from, "from")?;
                finite(*to, "to")?;
                Ok(CompiledProfile::Ramp {
                    from: *from,
                    to: *to,
                    shape: *shape,
                })
            }
            Self::Periodic {
                mean,
                amplitude,
                cycles,
            } => {
                finite(*mean, "mean")?;
                finite(*amplitude, "amplitude")?;
                finite(*cycles, "cycles")?;
                Ok(CompiledProfile::Periodic {
                    mean: *mean,
                    amplitude: *amplitude,
                    cycles: *cycles,
                })
            }
            Self::Table { s, values } => Ok(CompiledProfile::Spline(CubicSpline::new(
                s.clone(),
                values.clone(),
            )?)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum CompiledProfile {
    Constant(f64),
    Ramp { from: f64, to: f64, shape: RampShape },
    Periodic { mean: f64, amplitude: f64, cycles: f64 },
    Spline(CubicSpline),
}

impl CompiledProfile {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::Ramp { from, to, shape } => from + (to - from) * shape.value(s),
            Self::Periodic {
                mean,
                amplitude,
                cycles,
            } => mean + amplitude * (2.0 * PI * cycles * s).sin(),
            Self::Spline(sp) => sp.value(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Ramp { from, to, shape } => (to - from) * shape.derivative(s),
            Self::Periodic {
                amplitude, cycles, ..
            } => amplitude * 2.0 * PI * cycles * (2.0 * PI * cycles * s).cos(),
            Self::Spline(sp) => sp.derivative(s),
        }
    }

    /// `max |x(s)|` sampled on a fine grid including both endpoints.
    pub fn sup_abs(&self) -> f64 {
        const PROBES: usize = 4096;
        (0..=PROBES)
            .map(|k| self.value(k as f64 / PROBES as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Natural cubic spline through `(s_i, y_i)`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(PathError::InvalidParams(format!(
                "spline table needs ≥ 2 knots and matching values (got {} knots, {} values)",
                n,
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(PathError::InvalidParams("spline table has non-finite entries".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PathError::InvalidParams(
                "spline knots must be strictly increasing".into(),
            ));
        }
        if knots[0] > 0.0 || knots[n - 1] < 1.0 {
            return Err(PathError::InvalidParams("spline knots must cover [0, 1]".into()));
        }

        // Tridiagonal solve for second derivatives, natural end conditions.
        let mut second = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 1..n - 1 {
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] =
                    6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            }
            for i in 1..m {
                let lower = knots[i + 1] - knots[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            second[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self {
            knots,
            values,
            second,
        })
    }

    fn interval(&self, s: f64) -> usize {
        let n = self.knots.len();
        match self.knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        let i = self.interval(s);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let i = self.interval(s);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            + ((1.0 - 3.0 * a * a) * self.second[i] + (3.0 * b * b - 1.0) * self.second[i + 1])
                * h
                / 6.0
    }
}
