//! Least-squares fits of error curves against the leaf count `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ols;

/// `value ≈ C / k^r`, fitted in log₂–log₂ scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub r: f64,
    pub rss: f64,
    pub points: usize,
}

/// `scale · value ≈ slope · k + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
    pub points: usize,
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(k, v)| !k.is_finite() || !v.is_finite()) {
        return Err(Error::Numerical("non-finite point in fit".into()));
    }
    let k0 = points[0].0;
    if points.iter().all(|(k, _)| *k == k0) {
        return Err(Error::Parameter("fit needs at least two distinct k".into()));
    }
    Ok(())
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    check_points(points)?;
    if let Some((k, v)) = points.iter().find(|(k, v)| *k <= 0.0 || *v <= 0.0) {
        return Err(Error::Domain(format!(
            "power-law fit needs positive k and value, got ({k}, {v})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(k, _)| k.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.log2()).collect();
    let (slope, intercept, rss) = ols(&xs, &ys);
    Ok(PowerLawFit {
        c: intercept.exp2(),
        r: -slope,
        rss,
        points: points.len(),
    })
}

/// Fits `scale · value` on `k`; with `scale = n₂/σ²` the slope is the
/// coefficient of `σ²k/n₂`.
pub fn fit_linear_in_k(points: &[(f64, f64)], scale: f64) -> Result<LinearFit> {
    check_points(points)?;
    let xs: Vec<f64> = points.iter().map(|(k, _)| *k).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| scale * v).collect();
    let (slope, intercept, rss) = ols(&xs, &ys);
    Ok(LinearFit {
        slope,
        intercept,
        rss,
        points: points.len(),
    })
}
