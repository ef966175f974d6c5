//! Regression functions with known closed forms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth functions on `[0, 1]` with analytic derivatives and antiderivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Smooth1D {
    /// `a2 x² + a1 x + a0`.
    Quadratic { a2: f64, a1: f64, a0: f64 },
    /// `amplitude · sin(2π · frequency · x)`.
    Sine { amplitude: f64, frequency: f64 },
}

impl Smooth1D {
    pub fn constant(c: f64) -> Self {
        Smooth1D::Quadratic {
            a2: 0.0,
            a1: 0.0,
            a0: c,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Smooth1D::Quadratic { a2, a1, a0 } => (a2 * x + a1) * x + a0,
            Smooth1D::Sine {
                amplitude,
                frequency,
            } => amplitude * (2.0 * PI * frequency * x).sin(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Smooth1D::Quadratic { a2, a1, .. } => 2.0 * a2 * x + a1,
            Smooth1D::Sine {
                amplitude,
                frequency,
            } => {
                let w = 2.0 * PI * frequency;
                amplitude * w * (w * x).cos()
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Smooth1D::Quadratic { a2, .. } => 2.0 * a2,
            Smooth1D::Sine {
                amplitude,
                frequency,
            } => {
                let w = 2.0 * PI * frequency;
                -amplitude * w * w * (w * x).sin()
            }
        }
    }

    pub fn antiderivative(&self, x: f64) -> f64 {
        match *self {
            Smooth1D::Quadratic { a2, a1, a0 } => ((a2 / 3.0 * x + a1 / 2.0) * x + a0) * x,
            Smooth1D::Sine {
                amplitude,
                frequency,
            } => {
                if frequency == 0.0 {
                    return 0.0;
                }
                let w = 2.0 * PI * frequency;
                -amplitude * (w * x).cos() / w
            }
        }
    }

    /// Mean of the function over `[lo, hi]`; the point value when `lo == hi`.
    pub fn interval_average(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return self.value(lo);
        }
        if let Smooth1D::Quadratic { a2, a1, a0 } = *self {
            // Centered form avoids cancellation on narrow cells.
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            return a2 * (mid * mid + half * half / 3.0) + a1 * mid + a0;
        }
        (self.antiderivative(hi) - self.antiderivative(lo)) / (hi - lo)
    }
}

/// A regression function `m : [0,1]^p → ℝ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionFunction {
    /// Friedman1 scaled by 1/10; coordinates past the fifth are ignored.
    Friedman1Scaled {
        p: usize,
    },
    Smooth1D(Smooth1D),
}

impl RegressionFunction {
    pub fn friedman1(p: usize) -> Result<Self> {
        if p < 5 {
            return Err(Error::Dimension(format!("Friedman1 needs p >= 5, got {p}")));
        }
        Ok(RegressionFunction::Friedman1Scaled { p })
    }

    pub fn dimension(&self) -> usize {
        match self {
            RegressionFunction::Friedman1Scaled { p } => *p,
            RegressionFunction::Smooth1D(_) => 1,
        }
    }

    /// Unchecked evaluation for hot loops. `x` must have [`Self::dimension`]
    /// coordinates.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            RegressionFunction::Friedman1Scaled { .. } => friedman1_value(x),
            RegressionFunction::Smooth1D(f) => f.value(x[0]),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dimension())?;
        Ok(self.value(x))
    }

    pub fn as_smooth_1d(&self) -> Option<&Smooth1D> {
        match self {
            RegressionFunction::Smooth1D(f) => Some(f),
            _ => None,
        }
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        self.as_smooth_1d().map(|f| f.derivative(x))
    }

    pub fn second_derivative(&self, x: f64) -> Option<f64> {
        self.as_smooth_1d().map(|f| f.second_derivative(x))
    }
}

pub(crate) fn check_point(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::Dimension(format!(
            "point has {} coordinates, expected {p}",
            x.len()
        )));
    }
    if let Some((d, v)) = x
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Domain(format!(
            "coordinate {d} = {v} outside [0, 1]"
        )));
    }
    Ok(())
}

#[inline]
fn friedman1_value(x: &[f64]) -> f64 {
    let t = x[2] - 0.5;
    0.1 * (10.0 * (PI * x[0] * x[1]).sin() + 20.0 * t * t + 10.0 * x[3] + 5.0 * x[4])
}

/// `(1/10)[10 sin(π x₁x₂) + 20(x₃ − ½)² + 10x₄ + 5x₅]` for `x ∈ [0,1]^p`, `p ≥ 5`.
pub fn eval_friedman1(x: &[f64], p: usize) -> Result<f64> {
    if p < 5 {
        return Err(Error::Dimension(format!("Friedman1 needs p >= 5, got {p}")));
    }
    check_point(x, p)?;
    Ok(friedman1_value(x))
}
