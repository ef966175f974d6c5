//! One-dimensional toy purely random forest.
//!
//! Each tree partitions `[0,1]` into a regular grid of step `1/k` shifted by
//! an offset `T` (uniform, or `0` when partitions are not randomized), and
//! labels the cell of `x` with the mean response of its subsample points in
//! that cell. The forest averages `M` such trees.
//!
//! The Monte-Carlo engine only ever touches the observations that fall in
//! the cell of `x`: data are sorted once per replicate, so a cell is an index
//! range, and the subsample restricted to that range is drawn directly
//! (hypergeometric count, then a uniform subset). This is exact in law and
//! keeps `M = 1024` forests over `n = 32768` points cheap.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{gen_dataset, Dataset};
use crate::error::{Error, Result};
use crate::function::{RegressionFunction, Smooth1D};
use crate::seed::{Purpose, SeedSpec};
use crate::stats::{mean_estimate, squared_mean_estimate, Estimate};

/// Regular partition of `[0,1]` with step `1/k` shifted by `T`:
/// `[0,(1−T)/k), [(1−T)/k,(2−T)/k), …, [(k−T)/k, 1]`, empty cells dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPartition {
    k: usize,
    offset: f64,
    boundaries: Vec<f64>,
}

pub fn build_toy_partition(k: usize, offset: f64) -> Result<ToyPartition> {
    if k < 2 {
        return Err(Error::Parameter(format!(
            "granularity k = {k} must be >= 2"
        )));
    }
    if !(0.0..=1.0).contains(&offset) {
        return Err(Error::Parameter(format!("offset {offset} outside [0, 1]")));
    }
    let kf = k as f64;
    let mut boundaries = Vec::with_capacity(k + 2);
    boundaries.push(0.0);
    for i in 1..=k {
        let b = (i as f64 - offset) / kf;
        if b > *boundaries.last().unwrap() && b < 1.0 {
            boundaries.push(b);
        }
    }
    boundaries.push(1.0);
    Ok(ToyPartition {
        k,
        offset,
        boundaries,
    })
}

impl ToyPartition {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn cell_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Index of the cell holding `x`; `x = 1` belongs to the last cell.
    pub fn cell_index(&self, x: f64) -> usize {
        let i = self.boundaries.partition_point(|&b| b <= x);
        i.clamp(1, self.cell_count()) - 1
    }

    pub fn cell(&self, x: f64) -> (f64, f64) {
        let i = self.cell_index(x);
        (self.boundaries[i], self.boundaries[i + 1])
    }
}

/// Cell of `x` for step `1/k` and offset `t`, without building the partition.
#[inline]
fn cell_of(x: f64, k: usize, t: f64) -> (f64, f64) {
    let kf = k as f64;
    let mut i = ((x * kf + t).floor()).min(kf);
    // Rounding in `x·k + t` can disagree with the boundary formula.
    if i > 0.0 && x < (i - t) / kf {
        i -= 1.0;
    } else if x >= (i + 1.0 - t) / kf && (i + 1.0 - t) / kf < 1.0 {
        i += 1.0;
    }
    let lo = ((i - t) / kf).max(0.0);
    if lo >= 1.0 {
        // x = 1 lands past the last cell.
        return (((i - 1.0 - t) / kf).max(0.0), 1.0);
    }
    (lo, ((i + 1.0 - t) / kf).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestSize {
    Finite(usize),
    Infinite,
}

impl ForestSize {
    /// Number of trees actually grown; `Infinite` uses `max(1024, 8k)`.
    pub fn trees_for(self, k: usize) -> usize {
        match self {
            ForestSize::Finite(m) => m,
            ForestSize::Infinite => (8 * k).max(1024),
        }
    }
}

/// How each tree picks the observations that label its cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSampling {
    /// Every observation (`a = n`).
    Full,
    /// Uniform subsample of size `a` without replacement.
    Subsample(usize),
    /// `a` draws with replacement. No closed form is claimed for this mode.
    Bootstrap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyForestSpec {
    pub trees: ForestSize,
    pub k: usize,
    pub n: usize,
    pub labels: LabelSampling,
    pub randomize_partitions: bool,
}

impl ToyForestSpec {
    pub fn subsample_size(&self) -> usize {
        match self.labels {
            LabelSampling::Full => self.n,
            LabelSampling::Subsample(a) | LabelSampling::Bootstrap(a) => a,
        }
    }

    pub fn randomizes_labels(&self) -> bool {
        !matches!(self.labels, LabelSampling::Full) && self.subsample_size() < self.n
            || matches!(self.labels, LabelSampling::Bootstrap(_))
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.subsample_size();
        if !(2 <= self.k && self.k <= a && a <= self.n) {
            return Err(Error::Config(format!(
                "toy forest needs 2 <= k <= a <= n, got k = {}, a = {a}, n = {}",
                self.k, self.n
            )));
        }
        if self.trees == ForestSize::Finite(0) {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        Ok(())
    }

    /// True when `a` is below the `20·k·ln n` floor under which cell counts
    /// are not reliably close to `a/k`.
    pub fn subsample_is_small(&self) -> bool {
        (self.subsample_size() as f64) < 20.0 * self.k as f64 * (self.n as f64).ln()
    }
}

/// Approximation-error prediction. The closed forms only cover single trees,
/// fixed partitions and the infinite randomized forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ApproxPrediction {
    Value(f64),
    NotCovered {
        trees: usize,
        single_tree: f64,
        infinite_forest: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormRisk {
    pub approx: ApproxPrediction,
    pub estimation: f64,
}

impl ClosedFormRisk {
    pub fn approx_value(&self) -> Result<f64> {
        match self.approx {
            ApproxPrediction::Value(v) => Ok(v),
            ApproxPrediction::NotCovered { trees, .. } => Err(Error::NotCovered(format!(
                "approximation error of a finite randomized forest with M = {trees}"
            ))),
        }
    }
}

/// Leading-order risk at `x` from the derivatives of `m` at `x`.
///
/// Approximation: `m′²/(12k²)` for a single tree or fixed partitions,
/// `m″²/(144k⁴)` for the infinite randomized forest. Estimation:
/// `σ²(k/a)[1/M + (1−1/M)·2a/(3n)]` with randomized partitions and
/// `σ²[k/(aM) + (1−1/M)k/n]` with fixed ones.
pub fn toy_closed_form_risk(
    spec: &ToyForestSpec,
    noise_variance: f64,
    first_derivative: f64,
    second_derivative: f64,
) -> Result<ClosedFormRisk> {
    spec.validate()?;
    let k = spec.k as f64;
    let a = spec.subsample_size() as f64;
    let n = spec.n as f64;
    let inv_m = match spec.trees {
        ForestSize::Finite(m) => 1.0 / m as f64,
        ForestSize::Infinite => 0.0,
    };
    let single_tree = first_derivative.powi(2) / 12.0 / (k * k);
    let infinite_forest = second_derivative.powi(2) / 144.0 / k.powi(4);
    let approx = match (spec.randomize_partitions, spec.trees) {
        (false, _) | (true, ForestSize::Finite(1)) => ApproxPrediction::Value(single_tree),
        (true, ForestSize::Infinite) => ApproxPrediction::Value(infinite_forest),
        (true, ForestSize::Finite(m)) => ApproxPrediction::NotCovered {
            trees: m,
            single_tree,
            infinite_forest,
        },
    };
    let estimation = if spec.randomize_partitions {
        noise_variance * (k / a) * (inv_m + (1.0 - inv_m) * 2.0 * a / (3.0 * n))
    } else {
        noise_variance * (k / (a) * inv_m + (1.0 - inv_m) * k / n)
    };
    Ok(ClosedFormRisk { approx, estimation })
}

/// One data set sorted by `x`, with prefix sums for range means.
struct SortedSample {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    prefix_y: Vec<f64>,
    prefix_m: Vec<f64>,
}

impl SortedSample {
    fn new(d: &Dataset) -> Self {
        let mut pairs: Vec<(f64, f64)> = d
            .design()
            .iter()
            .copied()
            .zip(d.responses().iter().copied())
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let f = d.function();
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let m: Vec<f64> = x.iter().map(|v| f.value(std::slice::from_ref(v))).collect();
        let prefix = |v: &[f64]| {
            let mut out = Vec::with_capacity(v.len() + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for e in v {
                acc += e;
                out.push(acc);
            }
            out
        };
        let prefix_y = prefix(&y);
        let prefix_m = prefix(&m);
        Self {
            x,
            y,
            m,
            prefix_y,
            prefix_m,
        }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let s = self.x.partition_point(|&v| v < lo);
        let e = if hi >= 1.0 {
            self.len()
        } else {
            self.x.partition_point(|&v| v < hi)
        };
        (s, e)
    }
}

/// Forest weights over the sorted sample plus per-tree summaries.
struct ForestWeights {
    weights: Vec<f64>,
    /// `Σ_j Σ_i C_ij² / N_j²`, the same-tree part of `M²·Σ_i W_i²`.
    self_pairs: f64,
    trees: Vec<TreeSummary>,
}

#[derive(Debug, Clone, Copy)]
struct TreeSummary {
    /// Tree prediction at `x`.
    prediction: f64,
    /// Same weights applied to `m(X_i)`.
    conditional_mean: f64,
    /// Expectation of `conditional_mean` over the design given the tree's Θ.
    ideal: f64,
    /// Labelled observations in the cell of `x`.
    cell_count: usize,
}

fn sample_forest(
    spec: &ToyForestSpec,
    f: &Smooth1D,
    sample: &SortedSample,
    x: f64,
    trees: usize,
    rng: &mut ChaCha8Rng,
) -> ForestWeights {
    let n = sample.len();
    let a = spec.subsample_size();
    let share = 1.0 / trees as f64;
    let mut ranges = vec![0.0; n + 1];
    let mut points = vec![0.0; n];
    let mut self_pairs = 0.0;
    let mut summaries = Vec::with_capacity(trees);
    let total_integral = f.antiderivative(1.0) - f.antiderivative(0.0);
    let mut picked: Vec<usize> = Vec::new();

    for _ in 0..trees {
        let t = if spec.randomize_partitions {
            rng.random::<f64>()
        } else {
            0.0
        };
        let (lo, hi) = cell_of(x, spec.k, t);
        let (s, e) = sample.range(lo, hi);
        let c = e - s;
        let width = hi - lo;
        let cell_avg = f.interval_average(lo, hi);
        let comp_avg = if width < 1.0 {
            (total_integral - width * cell_avg) / (1.0 - width)
        } else {
            cell_avg
        };

        // Labelled count in the cell, and the chance it is empty given Θ.
        let (count, empty_prob) = match spec.labels {
            LabelSampling::Full => (c, (1.0 - width).powi(n as i32)),
            LabelSampling::Subsample(a) => {
                let h = Hypergeometric::new(n as u64, c as u64, a as u64)
                    .expect("valid hypergeometric parameters")
                    .sample(rng) as usize;
                (h, (1.0 - width).powi(a as i32))
            }
            LabelSampling::Bootstrap(a) => {
                let h = Binomial::new(a as u64, c as f64 / n as f64)
                    .expect("valid binomial parameters")
                    .sample(rng) as usize;
                // Θ fixes the distinct resampled indices; use their expected
                // number, n(1 − (1 − 1/n)^a).
                let distinct = n as f64 * (1.0 - (1.0 - 1.0 / n as f64).powi(a as i32));
                (h, (1.0 - width).powf(distinct))
            }
        };
        let ideal = (1.0 - empty_prob) * cell_avg + empty_prob * comp_avg;

        let (prediction, conditional_mean) =
            if count > 0 && matches!(spec.labels, LabelSampling::Full) {
                let w = share / c as f64;
                ranges[s] += w;
                ranges[e] -= w;
                self_pairs += 1.0 / c as f64;
                (
                    (sample.prefix_y[e] - sample.prefix_y[s]) / c as f64,
                    (sample.prefix_m[e] - sample.prefix_m[s]) / c as f64,
                )
            } else if count == 0 && matches!(spec.labels, LabelSampling::Full) {
                // Empty cell: the whole sample labels the tree.
                let w = share / n as f64;
                ranges[0] += w;
                ranges[n] -= w;
                self_pairs += 1.0 / n as f64;
                (sample.prefix_y[n] / n as f64, sample.prefix_m[n] / n as f64)
            } else {
                picked.clear();
                let labelled = if count > 0 { count } else { a };
                match (spec.labels, count > 0) {
                    (LabelSampling::Subsample(_), true) => {
                        picked.extend(
                            rand::seq::index::sample(rng, c, count)
                                .into_iter()
                                .map(|i| s + i),
                        );
                    }
                    (LabelSampling::Subsample(_), false) => {
                        picked.extend(
                            rand::seq::index::sample(rng, n - c, a)
                                .into_iter()
                                .map(|i| if i < s { i } else { i + c }),
                        );
                    }
                    (LabelSampling::Bootstrap(_), true) => {
                        picked.extend((0..count).map(|_| s + rng.random_range(0..c)));
                    }
                    (LabelSampling::Bootstrap(_), false) => {
                        picked.extend((0..a).map(|_| {
                            let i = rng.random_range(0..n - c);
                            if i < s {
                                i
                            } else {
                                i + c
                            }
                        }));
                    }
                    (LabelSampling::Full, _) => unreachable!(),
                }
                let w = share / labelled as f64;
                let (mut sy, mut sm) = (0.0, 0.0);
                for &i in &picked {
                    points[i] += w;
                    sy += sample.y[i];
                    sm += sample.m[i];
                }
                self_pairs += multiplicity_square_sum(&mut picked) / (labelled * labelled) as f64;
                (sy / labelled as f64, sm / labelled as f64)
            };
        summaries.push(TreeSummary {
            prediction,
            conditional_mean,
            ideal,
            cell_count: count,
        });
    }

    let mut acc = 0.0;
    let weights = (0..n)
        .map(|i| {
            acc += ranges[i];
            acc + points[i]
        })
        .collect();
    ForestWeights {
        weights,
        self_pairs,
        trees: summaries,
    }
}

/// `Σ_i C_i²` for a list of drawn indices with repeats.
fn multiplicity_square_sum(picked: &mut [usize]) -> f64 {
    picked.sort_unstable();
    let mut total = 0usize;
    let mut run = 0usize;
    for i in 0..picked.len() {
        run += 1;
        if i + 1 == picked.len() || picked[i + 1] != picked[i] {
            total += run * run;
            run = 0;
        }
    }
    total as f64
}

fn smooth(d_fn: &RegressionFunction) -> Result<&Smooth1D> {
    d_fn.as_smooth_1d().ok_or_else(|| {
        Error::Unsupported("toy forests need a one-dimensional regression function".into())
    })
}

/// Toy forest prediction at `x` for the given data. Tree `j` draws its
/// offset and subsample from `seeds`.
pub fn toy_forest_predict(
    spec: &ToyForestSpec,
    d: &Dataset,
    x: f64,
    seeds: SeedSpec,
) -> Result<f64> {
    let trees = match spec.trees {
        ForestSize::Finite(m) => m,
        ForestSize::Infinite => {
            return Err(Error::Parameter(
                "prediction needs a finite number of trees".into(),
            ))
        }
    };
    let spec = ToyForestSpec { n: d.n(), ..*spec };
    spec.validate()?;
    if d.p() != 1 {
        return Err(Error::Dimension(format!(
            "toy forest needs 1-D data, got p = {}",
            d.p()
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let f = smooth(d.function())?;
    let sample = SortedSample::new(d);
    let mut rng = seeds.stream(Purpose::Partition, 0);
    let fw = sample_forest(&spec, f, &sample, x, trees, &mut rng);
    Ok(fw.weights.iter().zip(&sample.y).map(|(w, y)| w * y).sum())
}

/// Per-replicate quantities of the toy Monte-Carlo study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyReplicate {
    pub target: f64,
    pub prediction: f64,
    pub conditional_mean: f64,
    pub ideal: f64,
    pub sum_sq_weights: f64,
    pub weight_sum: f64,
    /// Same-tree part of `M²·Σ W_i²`.
    pub self_pairs: f64,
    /// Labelled observations in the cell of `x` for the first tree.
    pub first_cell_count: usize,
    pub mean_tree_risk: f64,
    /// Sums over trees of `ideal_j − m(x)`, `m*_j − ideal_j`, `pred_j − m(x)`
    /// and `pred_j − m*_j`, with their sums of squares, for pair statistics.
    pub approx_sum: f64,
    pub delta_sum: f64,
    pub delta_sq: f64,
    pub risk_sum: f64,
    pub risk_sq: f64,
    pub noise_sum: f64,
    pub noise_sq: f64,
}

pub fn toy_mc_replicates(
    spec: &ToyForestSpec,
    f: &RegressionFunction,
    noise_variance: f64,
    x: f64,
    replicates: usize,
    seeds: SeedSpec,
) -> Result<Vec<ToyReplicate>> {
    spec.validate()?;
    let smooth_fn = *smooth(f)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let trees = spec.trees.trees_for(spec.k);
    let target = smooth_fn.value(x);
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seeds.child(r as u64);
            let d = gen_dataset(f, spec.n, noise_variance, rep_seed)?;
            let sample = SortedSample::new(&d);
            let mut rng = rep_seed.stream(Purpose::Partition, 0);
            let fw = sample_forest(spec, &smooth_fn, &sample, x, trees, &mut rng);
            let mut prediction = 0.0;
            let mut conditional_mean = 0.0;
            let mut sum_sq_weights = 0.0;
            let mut weight_sum = 0.0;
            for ((w, y), m) in fw.weights.iter().zip(&sample.y).zip(&sample.m) {
                prediction += w * y;
                conditional_mean += w * m;
                sum_sq_weights += w * w;
                weight_sum += w;
            }
            let mut rep = ToyReplicate {
                target,
                prediction,
                conditional_mean,
                ideal: 0.0,
                sum_sq_weights,
                weight_sum,
                self_pairs: fw.self_pairs,
                first_cell_count: fw.trees[0].cell_count,
                mean_tree_risk: 0.0,
                approx_sum: 0.0,
                delta_sum: 0.0,
                delta_sq: 0.0,
                risk_sum: 0.0,
                risk_sq: 0.0,
                noise_sum: 0.0,
                noise_sq: 0.0,
            };
            for t in &fw.trees {
                let g = t.ideal - target;
                let dl = t.conditional_mean - t.ideal;
                let rk = t.prediction - target;
                let ns = t.prediction - t.conditional_mean;
                rep.approx_sum += g;
                rep.delta_sum += dl;
                rep.delta_sq += dl * dl;
                rep.risk_sum += rk;
                rep.risk_sq += rk * rk;
                rep.noise_sum += ns;
                rep.noise_sq += ns * ns;
            }
            let mf = trees as f64;
            rep.ideal = target + rep.approx_sum / mf;
            rep.mean_tree_risk = rep.risk_sq / mf;
            Ok(rep)
        })
        .collect()
}

/// Monte-Carlo risk decomposition at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRiskEstimate {
    pub risk: Estimate,
    pub approx: Estimate,
    pub delta: Estimate,
    /// `σ²·E[Σ W_i²]`.
    pub estimation: Estimate,
    /// `E[(m_{M,n}(x) − m*(x))²]` computed directly.
    pub estimation_direct: Estimate,
    pub mean_tree_risk: Estimate,
    pub replicates: usize,
    pub trees: usize,
    /// `x` lies outside `[1/k, 1 − 1/k]`.
    pub boundary_warning: bool,
    /// `a < 20·k·ln n`.
    pub small_subsample_warning: bool,
}

/// Estimates the three terms of the risk decomposition at `x` over
/// `replicates` independent draws of data and forest.
///
/// For a finite forest each term is the plain replicate mean. For
/// [`ForestSize::Infinite`] the `M`-tree proxy is used to estimate the
/// infinite-forest limits without the `1/M` bias: the approximation error is
/// the jackknifed square of the pooled mean of `ideal_j − m(x)`, and the
/// other terms average products over pairs of distinct trees of a replicate.
pub fn toy_mc_risk(
    spec: &ToyForestSpec,
    f: &RegressionFunction,
    noise_variance: f64,
    x: f64,
    replicates: usize,
    seeds: SeedSpec,
) -> Result<ToyRiskEstimate> {
    if replicates < 2 {
        return Err(Error::Parameter("need at least two replicates".into()));
    }
    let reps = toy_mc_replicates(spec, f, noise_variance, x, replicates, seeds)?;
    let trees = spec.trees.trees_for(spec.k);
    let col = |g: &dyn Fn(&ToyReplicate) -> f64| -> Estimate {
        mean_estimate(&reps.iter().map(g).collect::<Vec<_>>())
    };
    let mean_tree_risk = col(&|r| r.mean_tree_risk);
    let (risk, approx, delta, estimation, estimation_direct) = match spec.trees {
        ForestSize::Finite(_) => (
            col(&|r| (r.prediction - r.target).powi(2)),
            col(&|r| (r.ideal - r.target).powi(2)),
            col(&|r| (r.conditional_mean - r.ideal).powi(2)),
            col(&|r| noise_variance * r.sum_sq_weights),
            col(&|r| (r.prediction - r.conditional_mean).powi(2)),
        ),
        ForestSize::Infinite => {
            let m = trees as f64;
            let pairs = m * (m - 1.0);
            let sums: Vec<f64> = reps.iter().map(|r| r.approx_sum).collect();
            (
                col(&|r| (r.risk_sum * r.risk_sum - r.risk_sq) / pairs),
                squared_mean_estimate(&sums, trees),
                col(&|r| (r.delta_sum * r.delta_sum - r.delta_sq) / pairs),
                col(&|r| noise_variance * (m * m * r.sum_sq_weights - r.self_pairs) / pairs),
                col(&|r| (r.noise_sum * r.noise_sum - r.noise_sq) / pairs),
            )
        }
    };
    let kinv = 1.0 / spec.k as f64;
    Ok(ToyRiskEstimate {
        risk,
        approx,
        delta,
        estimation,
        estimation_direct,
        mean_tree_risk,
        replicates,
        trees,
        boundary_warning: !(kinv..=1.0 - kinv).contains(&x),
        small_subsample_warning: spec.subsample_is_small(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> RegressionFunction {
        RegressionFunction::Smooth1D(Smooth1D::Quadratic {
            a2: 1.0,
            a1: 1.0,
            a0: 0.0,
        })
    }

    fn spec(
        trees: ForestSize,
        k: usize,
        n: usize,
        labels: LabelSampling,
        rand: bool,
    ) -> ToyForestSpec {
        ToyForestSpec {
            trees,
            k,
            n,
            labels,
            randomize_partitions: rand,
        }
    }

    #[test]
    fn partition_boundaries() {
        assert_eq!(
            build_toy_partition(4, 0.0).unwrap().boundaries(),
            &[0.0, 0.25, 0.5, 0.75, 1.0]
        );
        let p = build_toy_partition(2, 0.5).unwrap();
        assert_eq!(p.boundaries(), &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(p.cell(0.5), (0.25, 0.75));
        assert_eq!(p.cell(1.0), (0.75, 1.0));
        assert_eq!(build_toy_partition(3, 1.0).unwrap().cell_count(), 3);
        assert!(build_toy_partition(1, 0.2).is_err());
    }

    #[test]
    fn fast_cell_lookup_matches_partition() {
        for k in [2, 3, 7, 16] {
            for t in [0.0, 0.13, 0.5, 0.99, 1.0] {
                let p = build_toy_partition(k, t).unwrap();
                for i in 0..=200 {
                    let x = i as f64 / 200.0;
                    assert_eq!(cell_of(x, k, t), p.cell(x), "k={k} t={t} x={x}");
                }
            }
        }
    }

    #[test]
    fn partition_tiles_unit_interval() {
        for t in [0.0, 0.3, 0.77] {
            let p = build_toy_partition(5, t).unwrap();
            let b = p.boundaries();
            assert!(b.windows(2).all(|w| w[0] < w[1]));
            let interior = b
                .windows(2)
                .filter(|w| ((w[1] - w[0]) - 0.2).abs() < 1e-12)
                .count();
            assert!(interior >= 4);
            assert_eq!(b.windows(2).map(|w| w[1] - w[0]).sum::<f64>(), 1.0);
        }
    }

    fn fixture(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::from_parts(xs.to_vec(), ys.to_vec(), 1, 0.0, quad()).unwrap()
    }

    #[test]
    fn single_tree_cell_average() {
        let d = fixture(&[0.1, 0.2, 0.6, 0.7], &[1.0, 3.0, 10.0, 20.0]);
        let s = spec(ForestSize::Finite(1), 2, 4, LabelSampling::Full, false);
        assert_eq!(
            toy_forest_predict(&s, &d, 0.3, SeedSpec::new(1)).unwrap(),
            2.0
        );
    }

    #[test]
    fn identical_trees_match_single_tree() {
        let d = gen_dataset(&quad(), 300, 0.5, SeedSpec::new(4)).unwrap();
        let one = spec(ForestSize::Finite(1), 8, 300, LabelSampling::Full, false);
        let five = ToyForestSpec {
            trees: ForestSize::Finite(5),
            ..one
        };
        let a = toy_forest_predict(&one, &d, 0.43, SeedSpec::new(1)).unwrap();
        let b = toy_forest_predict(&five, &d, 0.43, SeedSpec::new(2)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_falls_back_to_sample_mean() {
        let d = fixture(&[0.6, 0.7], &[10.0, 20.0]);
        let s = spec(ForestSize::Finite(1), 2, 2, LabelSampling::Full, false);
        assert_eq!(
            toy_forest_predict(&s, &d, 0.3, SeedSpec::new(1)).unwrap(),
            15.0
        );
        let sub = spec(
            ForestSize::Finite(3),
            2,
            2,
            LabelSampling::Subsample(2),
            true,
        );
        let v = toy_forest_predict(
            &sub,
            &fixture(&[0.0, 0.01], &[4.0, 6.0]),
            0.9,
            SeedSpec::new(1),
        );
        assert!((v.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_table() {
        let (s2, d1, d2) = (1.0, 2.0, 2.0);
        let (c1, c2) = (1.0 / 3.0, 1.0 / 36.0);
        let inf = spec(ForestSize::Infinite, 16, 32768, LabelSampling::Full, true);
        let r = toy_closed_form_risk(&inf, s2, d1, d2).unwrap();
        assert!((r.approx_value().unwrap() - c2 / 16f64.powi(4)).abs() < 1e-18);
        assert!((r.estimation - 2.0 * 16.0 / (3.0 * 32768.0)).abs() < 1e-15);
        assert!((r.estimation - 3.26e-4).abs() < 1e-6);

        for rand in [false, true] {
            let one = spec(
                ForestSize::Finite(1),
                8,
                4000,
                LabelSampling::Subsample(1000),
                rand,
            );
            let r = toy_closed_form_risk(&one, s2, d1, d2).unwrap();
            assert!((r.approx_value().unwrap() - c1 / 64.0).abs() < 1e-15);
            assert!((r.estimation - 8.0 / 1000.0).abs() < 1e-15);
        }

        let fixed_inf = spec(
            ForestSize::Infinite,
            8,
            4000,
            LabelSampling::Subsample(1000),
            false,
        );
        assert!(
            (toy_closed_form_risk(&fixed_inf, s2, d1, d2)
                .unwrap()
                .estimation
                - 8.0 / 4000.0)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn closed_form_finite_m_interpolates() {
        let n = 4096.0;
        let at = |m| {
            let s = spec(m, 8, 4096, LabelSampling::Full, true);
            toy_closed_form_risk(&s, 1.0, 1.0, 1.0).unwrap()
        };
        assert!((at(ForestSize::Finite(1)).estimation - 8.0 / n).abs() < 1e-15);
        let m10 = at(ForestSize::Finite(10)).estimation;
        assert!((m10 - (8.0 / n) * (0.1 + 2.0 / 3.0 * 0.9)).abs() < 1e-15);
        let big = at(ForestSize::Finite(1 << 30)).estimation;
        assert!((big - 2.0 * 8.0 / (3.0 * n)).abs() < 1e-12);
        let r = at(ForestSize::Finite(10));
        assert!(matches!(r.approx_value(), Err(Error::NotCovered(_))));
    }

    /// Brute-force oracle for the finite-M estimation formula: Monte-Carlo of
    /// `Σ_i W̃_i²` with the weights `(k/a)(1/M)Σ_j 1{i∈I_j}1{X_i∈A_j}` obtained
    /// by replacing each cell count with its mean `a/k`, with explicit
    /// subsamples and offsets.
    #[test]
    fn finite_m_second_moment_oracle() {
        use crate::resample::{draw_resample, ResampleMode};
        let (n, a, k, m, x) = (64usize, 32usize, 4usize, 3usize, 0.5);
        let reps = 100_000;
        let mut rng = SeedSpec::new(11).stream(Purpose::Oracle, 0);
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut w = vec![0.0; n];
            for _ in 0..m {
                let t: f64 = rng.random();
                let part = build_toy_partition(k, t).unwrap();
                let cell = part.cell_index(x);
                let sub = draw_resample(n, ResampleMode::WithoutReplacement, a, &mut rng).unwrap();
                for i in 0..n {
                    if sub.counts()[i] == 1 && part.cell_index(xs[i]) == cell {
                        w[i] += k as f64 / a as f64 / m as f64;
                    }
                }
            }
            vals.push(w.iter().map(|v| v * v).sum::<f64>());
        }
        let e = mean_estimate(&vals);
        let s = spec(
            ForestSize::Finite(m),
            k,
            n,
            LabelSampling::Subsample(a),
            true,
        );
        let closed = toy_closed_form_risk(&s, 1.0, 0.0, 0.0).unwrap().estimation;
        assert!(
            e.within(closed, 3.0),
            "oracle {e:?} vs closed form {closed}"
        );
    }

    #[test]
    fn weights_are_normalized() {
        for labels in [
            LabelSampling::Full,
            LabelSampling::Subsample(500),
            LabelSampling::Bootstrap(700),
        ] {
            let s = spec(ForestSize::Finite(7), 10, 1000, labels, true);
            let reps = toy_mc_replicates(&s, &quad(), 1.0, 0.5, 20, SeedSpec::new(3)).unwrap();
            for r in reps {
                assert!(
                    (r.weight_sum - 1.0).abs() < 1e-12,
                    "{labels:?}: {}",
                    r.weight_sum
                );
            }
        }
    }

    #[test]
    fn constant_function_noise_free_has_zero_risk() {
        let f = RegressionFunction::Smooth1D(Smooth1D::constant(2.5));
        let s = spec(
            ForestSize::Finite(4),
            8,
            800,
            LabelSampling::Subsample(400),
            true,
        );
        let e = toy_mc_risk(&s, &f, 0.0, 0.5, 10, SeedSpec::new(5)).unwrap();
        for v in [e.risk, e.approx, e.delta, e.estimation] {
            assert!(v.value.abs() < 1e-25, "{v:?}");
        }
    }

    #[test]
    fn replicates_are_deterministic() {
        let s = spec(
            ForestSize::Finite(3),
            8,
            500,
            LabelSampling::Subsample(250),
            true,
        );
        let a = toy_mc_replicates(&s, &quad(), 1.0, 0.5, 8, SeedSpec::new(9)).unwrap();
        let b = toy_mc_replicates(&s, &quad(), 1.0, 0.5, 8, SeedSpec::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_tree_estimation_error() {
        let s = spec(ForestSize::Finite(1), 10, 10_000, LabelSampling::Full, true);
        let e = toy_mc_risk(&s, &quad(), 1.0, 0.5, 2000, SeedSpec::new(21)).unwrap();
        assert!(e.estimation.within(1e-3, 3.0), "{:?}", e.estimation);
        assert!(!e.boundary_warning);
    }

    #[test]
    fn boundary_point_is_flagged() {
        let s = spec(ForestSize::Finite(1), 10, 1000, LabelSampling::Full, true);
        let e = toy_mc_risk(&s, &quad(), 1.0, 0.05, 4, SeedSpec::new(2)).unwrap();
        assert!(e.boundary_warning);
    }

    #[test]
    fn estimation_routes_agree() {
        // Weight-sum route against the direct squared noise of the forest.
        let s = spec(
            ForestSize::Finite(8),
            8,
            2000,
            LabelSampling::Subsample(1000),
            true,
        );
        let e = toy_mc_risk(&s, &quad(), 1.0, 0.5, 3000, SeedSpec::new(8)).unwrap();
        let z = (e.estimation.value - e.estimation_direct.value).abs()
            / e.estimation.combined_se(&e.estimation_direct);
        assert!(z < 3.0, "{:?} vs {:?}", e.estimation, e.estimation_direct);
    }

    #[test]
    fn decomposition_is_consistent() {
        for trees in [
            ForestSize::Finite(1),
            ForestSize::Finite(16),
            ForestSize::Infinite,
        ] {
            let s = spec(trees, 8, 2048, LabelSampling::Subsample(1024), true);
            let e = toy_mc_risk(&s, &quad(), 0.5, 0.5, 1500, SeedSpec::new(31)).unwrap();
            let sum = e.approx.value + e.delta.value + e.estimation.value;
            let se = (e.approx.se.powi(2)
                + e.delta.se.powi(2)
                + e.estimation.se.powi(2)
                + e.risk.se.powi(2))
            .sqrt();
            assert!(
                (sum - e.risk.value).abs() < 3.0 * se,
                "{trees:?}: {sum} vs {:?}",
                e.risk
            );
        }
    }

    #[test]
    fn small_subsample_is_flagged() {
        let s = spec(
            ForestSize::Finite(1),
            16,
            32768,
            LabelSampling::Subsample(1000),
            true,
        );
        assert!(s.subsample_is_small());
        let s = spec(ForestSize::Finite(1), 16, 32768, LabelSampling::Full, true);
        assert!(!s.subsample_is_small());
    }

    #[test]
    fn invalid_specs() {
        assert!(
            spec(ForestSize::Finite(1), 1, 10, LabelSampling::Full, true)
                .validate()
                .is_err()
        );
        assert!(spec(
            ForestSize::Finite(1),
            8,
            10,
            LabelSampling::Subsample(4),
            true
        )
        .validate()
        .is_err());
        assert!(
            spec(ForestSize::Finite(0), 2, 10, LabelSampling::Full, true)
                .validate()
                .is_err()
        );
        assert!(spec(
            ForestSize::Finite(1),
            2,
            10,
            LabelSampling::Subsample(11),
            true
        )
        .validate()
        .is_err());
    }
}
