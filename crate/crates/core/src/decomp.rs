//! Approximation error `A`, middle term `Δ` and estimation error `E` of
//! hold-out trees and forests, integrated over uniform test points.
//!
//! Replicate `r` always uses `seeds.child(r)`, replicates run in parallel and
//! are reduced in index order, so every estimate is a pure function of its
//! inputs and the seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::CartParams;
use crate::data::{gen_dataset, Dataset};
use crate::error::{Error, Result};
use crate::function::RegressionFunction;
use crate::horf::{grow_grouped_partitions, HoldOutForest, IdealForest, WeightScratch};
use crate::seed::{Purpose, SeedSpec};
use crate::stats::{mean_estimate, Estimate};

/// Tag of the child seed used for fresh `D2` draws inside a replicate.
const LABEL_SAMPLE_TAG: u64 = 0x4432;

/// Partition parameters and number of trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub params: CartParams,
    pub trees: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub approx: Estimate,
    pub delta: Option<Estimate>,
    pub estimation: Estimate,
    pub replicates: usize,
    pub test_points: usize,
    pub k: usize,
    pub trees: usize,
}

/// End-to-end risk next to its three terms, all from the same replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldOutRiskCheck {
    pub risk: Estimate,
    pub approx: Estimate,
    pub delta: Estimate,
    pub estimation: Estimate,
    /// `A + Δ + E` per replicate, averaged.
    pub sum: Estimate,
}

/// `count` uniform points of `[0,1]^p`, row-major.
pub fn uniform_points(p: usize, count: usize, seeds: SeedSpec) -> Vec<f64> {
    let mut rng = seeds.stream(Purpose::TestPoints, 0);
    (0..p * count).map(|_| rng.random::<f64>()).collect()
}

fn check_points(points: &[f64], p: usize) -> Result<usize> {
    if p == 0 || points.is_empty() || !points.len().is_multiple_of(p) {
        return Err(Error::Dimension(format!(
            "{} coordinates is not a set of points in dimension {p}",
            points.len()
        )));
    }
    Ok(points.len() / p)
}

fn check_replicates(replicates: usize) -> Result<()> {
    if replicates < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 replicates, got {replicates}"
        )));
    }
    Ok(())
}

fn check_function(f: &RegressionFunction, p: usize) -> Result<()> {
    if f.dimension() != p {
        return Err(Error::Dimension(format!(
            "function has p = {}, data has p = {p}",
            f.dimension()
        )));
    }
    Ok(())
}

fn per_replicate<T: Send>(
    replicates: usize,
    seeds: SeedSpec,
    job: impl Fn(SeedSpec) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| job(seeds.child(r as u64)))
        .collect()
}

fn finite(e: Estimate, what: &str) -> Result<Estimate> {
    if e.value.is_finite() && !e.se.is_nan() {
        Ok(e)
    } else {
        Err(Error::Numerical(format!(
            "{what} estimate is not finite: {} ± {}",
            e.value, e.se
        )))
    }
}

/// Anything that yields `Σ_i W_i(x)²`.
pub trait WeightSource {
    fn mean_sum_sq_weights(&self, points: &[f64], p: usize) -> f64;
}

impl WeightSource for HoldOutForest<'_> {
    fn mean_sum_sq_weights(&self, points: &[f64], p: usize) -> f64 {
        let mut scratch = WeightScratch::default();
        let total: f64 = points
            .chunks_exact(p)
            .map(|x| self.sum_sq_weights(x, &mut scratch))
            .sum();
        total / (points.len() / p) as f64
    }
}

/// Equal weights `1/n` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct UniformWeights(pub usize);

impl WeightSource for UniformWeights {
    fn mean_sum_sq_weights(&self, _points: &[f64], _p: usize) -> f64 {
        1.0 / self.0 as f64
    }
}

/// `E = σ² · E[Σ_i W_i(x)²]`, averaged over points and replicates.
/// `make` builds the weight source of one replicate from its seed.
pub fn estimate_estimation_error<S, F>(
    make: F,
    sigma2: f64,
    points: &[f64],
    p: usize,
    replicates: usize,
    seeds: SeedSpec,
) -> Result<Estimate>
where
    S: WeightSource,
    F: Fn(SeedSpec) -> Result<S> + Sync,
{
    check_points(points, p)?;
    check_replicates(replicates)?;
    let values = per_replicate(replicates, seeds, |s| {
        Ok(make(s)?.mean_sum_sq_weights(points, p))
    })?;
    finite(mean_estimate(&values).scaled(sigma2), "estimation error")
}

fn ideal_for(
    d1: &Dataset,
    cond: &Condition,
    f: &RegressionFunction,
    seeds: SeedSpec,
) -> Result<IdealForest> {
    let (parts, _) = grow_grouped_partitions(d1, &cond.params, cond.trees, seeds)?;
    IdealForest::new(parts.iter().map(|(t, w)| (t, *w)), f)
}

/// `A = E[(m̄*(x) − m(x))²]` where `m̄*` is the ideal forest built from
/// fresh partitions on the fixed `d1`.
pub fn estimate_approx_error(
    cond: &Condition,
    d1: &Dataset,
    f: &RegressionFunction,
    replicates: usize,
    points: &[f64],
    seeds: SeedSpec,
) -> Result<Estimate> {
    let p = d1.p();
    check_function(f, p)?;
    check_points(points, p)?;
    check_replicates(replicates)?;
    let targets: Vec<f64> = points.chunks_exact(p).map(|x| f.value(x)).collect();
    let values = per_replicate(replicates, seeds, |s| {
        let ideal = ideal_for(d1, cond, f, s)?;
        Ok(points
            .chunks_exact(p)
            .zip(&targets)
            .map(|(x, m)| (ideal.predict(x) - m).powi(2))
            .sum::<f64>()
            / targets.len() as f64)
    })?;
    finite(mean_estimate(&values), "approximation error")
}

/// Where the label sample comes from when estimating `Δ`.
#[derive(Debug, Clone, Copy)]
pub enum DeltaDesign<'a> {
    /// Fresh uniform design of this size in every replicate.
    Random { n2: usize },
    /// Design held fixed; `m̄*` is then the conditional mean `m*` itself.
    Fixed(&'a Dataset),
}

/// `Δ = E[(m*(x) − m̄*(x))²]` with `m*(x) = Σ_i W_i m(X_i)` and `m̄*` the
/// ideal forest of the same partitions.
pub fn estimate_delta(
    cond: &Condition,
    d1: &Dataset,
    f: &RegressionFunction,
    design: DeltaDesign<'_>,
    replicates: usize,
    points: &[f64],
    seeds: SeedSpec,
) -> Result<Estimate> {
    let p = d1.p();
    check_function(f, p)?;
    let count = check_points(points, p)?;
    check_replicates(replicates)?;
    let values = per_replicate(replicates, seeds, |s| {
        let total: f64 = match design {
            DeltaDesign::Random { n2 } => {
                let d2 = gen_dataset(f, n2, 0.0, s.child(LABEL_SAMPLE_TAG))?;
                let forest = HoldOutForest::grow(d1, &d2, cond.params, cond.trees, s)?;
                let ideal = forest.ideal(f)?;
                // Noise-free labels, so the prediction is m*.
                points
                    .chunks_exact(p)
                    .map(|x| (forest.predict(x) - ideal.predict(x)).powi(2))
                    .sum()
            }
            DeltaDesign::Fixed(d2) => {
                let forest = HoldOutForest::grow(d1, d2, cond.params, cond.trees, s)?;
                let m = d2.regression_values();
                points
                    .chunks_exact(p)
                    .map(|x| {
                        let conditional = forest.predict_with(&m, x);
                        (conditional - forest.predict_with(&m, x)).powi(2)
                    })
                    .sum()
            }
        };
        Ok(total / count as f64)
    })?;
    finite(mean_estimate(&values), "middle term")
}

/// `A` and `E` of one condition on the study split, from the same forests.
#[allow(clippy::too_many_arguments)]
pub fn estimate_holdout(
    cond: &Condition,
    d1: &Dataset,
    d2: &Dataset,
    f: &RegressionFunction,
    sigma2: f64,
    points: &[f64],
    replicates: usize,
    seeds: SeedSpec,
) -> Result<RiskDecomposition> {
    let p = d1.p();
    check_function(f, p)?;
    let count = check_points(points, p)?;
    check_replicates(replicates)?;
    let targets: Vec<f64> = points.chunks_exact(p).map(|x| f.value(x)).collect();
    let per = per_replicate(replicates, seeds, |s| {
        let forest = HoldOutForest::grow(d1, d2, cond.params, cond.trees, s)?;
        let ideal = forest.ideal(f)?;
        let approx = points
            .chunks_exact(p)
            .zip(&targets)
            .map(|(x, m)| (ideal.predict(x) - m).powi(2))
            .sum::<f64>()
            / count as f64;
        Ok((approx, forest.mean_sum_sq_weights(points, p)))
    })?;
    let (a, w): (Vec<f64>, Vec<f64>) = per.into_iter().unzip();
    Ok(RiskDecomposition {
        approx: finite(mean_estimate(&a), "approximation error")?,
        delta: None,
        estimation: finite(mean_estimate(&w).scaled(sigma2), "estimation error")?,
        replicates,
        test_points: count,
        k: cond.params.max_leaves,
        trees: cond.trees,
    })
}

/// Risk `E[(m_n(x) − m(x))²]` over fresh partitions and a fresh noisy `D2`
/// of size `n2`, together with `A`, `Δ` and `E` from the same replicates.
#[allow(clippy::too_many_arguments)]
pub fn holdout_risk_check(
    cond: &Condition,
    d1: &Dataset,
    f: &RegressionFunction,
    n2: usize,
    sigma2: f64,
    points: &[f64],
    replicates: usize,
    seeds: SeedSpec,
) -> Result<HoldOutRiskCheck> {
    let p = d1.p();
    check_function(f, p)?;
    let count = check_points(points, p)? as f64;
    check_replicates(replicates)?;
    let targets: Vec<f64> = points.chunks_exact(p).map(|x| f.value(x)).collect();
    let per = per_replicate(replicates, seeds, |s| {
        let d2 = gen_dataset(f, n2, sigma2, s.child(LABEL_SAMPLE_TAG))?;
        let forest = HoldOutForest::grow(d1, &d2, cond.params, cond.trees, s)?;
        let ideal = forest.ideal(f)?;
        let m2 = d2.regression_values();
        let mut scratch = WeightScratch::default();
        let mut acc = [0.0; 4];
        for (x, m) in points.chunks_exact(p).zip(&targets) {
            let bar = ideal.predict(x);
            let star = forest.predict_with(&m2, x);
            acc[0] += (forest.predict(x) - m).powi(2);
            acc[1] += (bar - m).powi(2);
            acc[2] += (star - bar).powi(2);
            acc[3] += sigma2 * forest.sum_sq_weights(x, &mut scratch);
        }
        Ok(acc.map(|v| v / count))
    })?;
    let column = |i: usize| mean_estimate(&per.iter().map(|v| v[i]).collect::<Vec<_>>());
    let sum = mean_estimate(&per.iter().map(|v| v[1] + v[2] + v[3]).collect::<Vec<_>>());
    Ok(HoldOutRiskCheck {
        risk: column(0),
        approx: column(1),
        delta: column(2),
        estimation: column(3),
        sum,
    })
}
