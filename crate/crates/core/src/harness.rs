//! Study configuration and drivers for the toy and hold-out experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cart::CartParams;
use crate::data::{gen_dataset, split_holdout};
use crate::decomp::{estimate_holdout, uniform_points, Condition};
use crate::error::{Error, Result};
use crate::fit::{fit_linear_in_k, fit_power_law, LinearFit, PowerLawFit};
use crate::function::{RegressionFunction, Smooth1D};
use crate::seed::SeedSpec;
use crate::stats::Estimate;
use crate::toy::{
    toy_closed_form_risk, toy_mc_risk, ApproxPrediction, ForestSize, LabelSampling, ToyForestSpec,
};

pub const DEFAULT_SEED: u64 = 20160901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    pub toy: ToyConfig,
    pub holdout: HoldOutConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            out_dir: "results".into(),
            toy: ToyConfig::default(),
            holdout: HoldOutConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn seeds(&self) -> SeedSpec {
        SeedSpec::new(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub function: Smooth1D,
    pub x: f64,
    pub n: usize,
    /// Subsample size `a`; `None` uses every observation.
    pub subsample: Option<usize>,
    pub noise_variance: f64,
    pub k_grid: Vec<usize>,
    pub replicates: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            function: Smooth1D::Quadratic {
                a2: 1.0,
                a1: 1.0,
                a0: 0.0,
            },
            x: 0.5,
            n: 32768,
            subsample: None,
            noise_variance: 1.0,
            k_grid: vec![8, 16, 32],
            replicates: 2000,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.k_grid)?;
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::Config(format!("x = {} outside [0, 1]", self.x)));
        }
        if self.replicates < 2 {
            return Err(Error::Config(
                "toy study needs at least 2 replicates".into(),
            ));
        }
        check_noise(self.noise_variance)?;
        for &k in &self.k_grid {
            self.spec(ToyRegime::FixedTree, k).validate()?;
        }
        Ok(())
    }

    fn spec(&self, regime: ToyRegime, k: usize) -> ToyForestSpec {
        let labels = match self.subsample {
            Some(a) if a != self.n => LabelSampling::Subsample(a),
            _ => LabelSampling::Full,
        };
        ToyForestSpec {
            trees: if regime.is_forest() {
                ForestSize::Infinite
            } else {
                ForestSize::Finite(1)
            },
            k,
            n: self.n,
            labels,
            randomize_partitions: regime.randomized(),
        }
    }
}

/// How many trees a hold-out forest has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestRule {
    EqualsK,
    Fixed(usize),
}

impl ForestRule {
    pub fn trees_for(self, k: usize) -> usize {
        match self {
            ForestRule::EqualsK => k,
            ForestRule::Fixed(m) => m,
        }
    }
}

/// Randomization of the partitions: bootstrap resampling of `D1` and the
/// number of coordinates tried per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub bootstrap: bool,
    pub mtry: usize,
}

impl ConditionSpec {
    /// No bootstrap / bootstrap crossed with `mtry ∈ {p, max(1, ⌊p/3⌋)}`.
    pub fn defaults(p: usize) -> Vec<Self> {
        let low = (p / 3).max(1);
        vec![
            Self {
                bootstrap: false,
                mtry: p,
            },
            Self {
                bootstrap: false,
                mtry: low,
            },
            Self {
                bootstrap: true,
                mtry: p,
            },
            Self {
                bootstrap: true,
                mtry: low,
            },
        ]
    }

    pub fn describe(&self) -> String {
        format!(
            "{}, mtry={}",
            if self.bootstrap {
                "Bootstrap"
            } else {
                "No bootstrap"
            },
            self.mtry
        )
    }

    /// At least one source of randomness in the partitions.
    pub fn is_randomized(&self, p: usize) -> bool {
        self.bootstrap || self.mtry < p
    }
}

impl fmt::Display for ConditionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-mtry{}",
            if self.bootstrap {
                "bootstrap"
            } else {
                "no-bootstrap"
            },
            self.mtry
        )
    }
}

impl FromStr for ConditionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized condition label {s:?}"));
        let (head, mtry) = s.rsplit_once("-mtry").ok_or_else(bad)?;
        let bootstrap = match head {
            "bootstrap" => true,
            "no-bootstrap" => false,
            _ => return Err(bad()),
        };
        Ok(Self {
            bootstrap,
            mtry: mtry.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldOutConfig {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub noise_variance: f64,
    pub k_grid: Vec<usize>,
    /// Empty means the four default conditions for `p`.
    pub conditions: Vec<ConditionSpec>,
    pub forest_size: ForestRule,
    pub tree_replicates: usize,
    pub forest_replicates: usize,
    pub test_points: usize,
    pub nodesize: usize,
}

impl Default for HoldOutConfig {
    fn default() -> Self {
        Self {
            p: 5,
            n1: 1280,
            n2: 25600,
            noise_variance: 1.0 / 16.0,
            k_grid: vec![32, 64, 128, 256],
            conditions: Vec::new(),
            forest_size: ForestRule::EqualsK,
            tree_replicates: 500,
            forest_replicates: 10,
            test_points: 1000,
            nodesize: 1,
        }
    }
}

impl HoldOutConfig {
    pub fn resolved_conditions(&self) -> Vec<ConditionSpec> {
        if self.conditions.is_empty() {
            ConditionSpec::defaults(self.p)
        } else {
            self.conditions.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.k_grid)?;
        check_noise(self.noise_variance)?;
        if self.p < 5 {
            return Err(Error::Config(format!(
                "p = {} but the regression function needs p >= 5",
                self.p
            )));
        }
        if self.n1 == 0 || self.n2 == 0 || self.test_points == 0 {
            return Err(Error::Config(
                "n1, n2 and test_points must be positive".into(),
            ));
        }
        if self.tree_replicates < 2 || self.forest_replicates < 2 {
            return Err(Error::Config("replicate counts must be at least 2".into()));
        }
        if self.forest_size == ForestRule::Fixed(0) {
            return Err(Error::Config("forests need at least one tree".into()));
        }
        if self.nodesize == 0 {
            return Err(Error::Config("nodesize must be at least 1".into()));
        }
        for c in self.resolved_conditions() {
            if c.mtry == 0 || c.mtry > self.p {
                return Err(Error::Config(format!(
                    "mtry = {} outside [1, {}]",
                    c.mtry, self.p
                )));
            }
        }
        Ok(())
    }
}

fn check_grid(k: &[usize]) -> Result<()> {
    if k.is_empty() {
        return Err(Error::Config("k grid is empty".into()));
    }
    if k[0] < 2 || k.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "k grid {k:?} must be strictly increasing and start at >= 2"
        )));
    }
    Ok(())
}

fn check_noise(s2: f64) -> Result<()> {
    if !(s2.is_finite() && s2 >= 0.0) {
        return Err(Error::Config(format!(
            "noise variance {s2} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// The four toy regimes: fixed or randomized partitions, single tree or
/// infinite forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyRegime {
    FixedTree,
    FixedForest,
    RandomTree,
    RandomForest,
}

impl ToyRegime {
    pub const ALL: [ToyRegime; 4] = [
        ToyRegime::FixedTree,
        ToyRegime::FixedForest,
        ToyRegime::RandomTree,
        ToyRegime::RandomForest,
    ];

    pub fn randomized(self) -> bool {
        matches!(self, ToyRegime::RandomTree | ToyRegime::RandomForest)
    }

    pub fn is_forest(self) -> bool {
        matches!(self, ToyRegime::FixedForest | ToyRegime::RandomForest)
    }

    pub fn label(self) -> &'static str {
        match self {
            ToyRegime::FixedTree => "fixed-tree",
            ToyRegime::FixedForest => "fixed-forest",
            ToyRegime::RandomTree => "random-tree",
            ToyRegime::RandomForest => "random-forest",
        }
    }
}

impl FromStr for ToyRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyRegime::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown toy regime {s:?}")))
    }
}

/// One `(regime, k)` line of the toy study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub regime: ToyRegime,
    pub k: usize,
    pub n: usize,
    pub a: usize,
    pub trees: usize,
    pub noise_variance: f64,
    pub approx_closed: f64,
    pub estimation_closed: f64,
    pub approx: Estimate,
    pub estimation: Estimate,
    pub delta: Estimate,
    pub risk: Estimate,
    /// Closed form within 3 SE of the Monte-Carlo value.
    pub approx_agrees: bool,
    pub estimation_agrees: bool,
    pub boundary_warning: bool,
    pub small_subsample_warning: bool,
}

pub fn run_toy_study(cfg: &ToyConfig, seeds: SeedSpec) -> Result<Vec<ToyRow>> {
    cfg.validate()?;
    let f = RegressionFunction::Smooth1D(cfg.function);
    let (d1, d2) = (
        cfg.function.derivative(cfg.x),
        cfg.function.second_derivative(cfg.x),
    );
    let mut rows = Vec::with_capacity(4 * cfg.k_grid.len());
    for (ri, regime) in ToyRegime::ALL.into_iter().enumerate() {
        for &k in &cfg.k_grid {
            let spec = cfg.spec(regime, k);
            let at = || format!("toy regime {}, k = {k}", regime.label());
            let closed = toy_closed_form_risk(&spec, cfg.noise_variance, d1, d2)
                .map_err(|e| e.context(at()))?;
            let approx_closed = match closed.approx {
                ApproxPrediction::Value(v) => v,
                ApproxPrediction::NotCovered { single_tree, .. } => single_tree,
            };
            let mc = toy_mc_risk(
                &spec,
                &f,
                cfg.noise_variance,
                cfg.x,
                cfg.replicates,
                seeds.child(ri as u64).child(k as u64),
            )
            .map_err(|e| e.context(at()))?;
            rows.push(ToyRow {
                regime,
                k,
                n: cfg.n,
                a: spec.subsample_size(),
                trees: mc.trees,
                noise_variance: cfg.noise_variance,
                approx_closed,
                estimation_closed: closed.estimation,
                approx: mc.approx,
                estimation: mc.estimation,
                delta: mc.delta,
                risk: mc.risk,
                approx_agrees: mc.approx.within(approx_closed, 3.0),
                estimation_agrees: mc.estimation.within(closed.estimation, 3.0),
                boundary_warning: mc.boundary_warning,
                small_subsample_warning: mc.small_subsample_warning,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Tree,
    Forest,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Tree => "tree",
            EstimatorKind::Forest => "forest",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(EstimatorKind::Tree),
            "forest" => Ok(EstimatorKind::Forest),
            _ => Err(Error::Config(format!("unknown estimator kind {s:?}"))),
        }
    }
}

/// Raw estimates at one `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: usize,
    pub approx: Estimate,
    pub estimation: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition: ConditionSpec,
    pub kind: EstimatorKind,
    pub n2: usize,
    pub noise_variance: f64,
    pub estimates: Vec<KEstimate>,
    pub approx_fit: PowerLawFit,
    pub estimation_fit: LinearFit,
}

impl ResultRow {
    /// Fits both curves to the raw estimates.
    pub fn from_estimates(
        condition: ConditionSpec,
        kind: EstimatorKind,
        n2: usize,
        noise_variance: f64,
        estimates: Vec<KEstimate>,
    ) -> Result<Self> {
        let approx: Vec<(f64, f64)> = estimates
            .iter()
            .map(|e| (e.k as f64, e.approx.value))
            .collect();
        let estimation: Vec<(f64, f64)> = estimates
            .iter()
            .map(|e| (e.k as f64, e.estimation.value))
            .collect();
        let approx_fit = fit_power_law(&approx)?;
        let estimation_fit = fit_linear_in_k(&estimation, n2 as f64 / noise_variance)?;
        Ok(Self {
            condition,
            kind,
            n2,
            noise_variance,
            estimates,
            approx_fit,
            estimation_fit,
        })
    }
}

/// Runs every condition × {tree, forest} × k on one data set split once.
pub fn run_horf_study(cfg: &HoldOutConfig, seeds: SeedSpec) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let f = RegressionFunction::friedman1(cfg.p)?;
    let data = gen_dataset(&f, cfg.n1 + cfg.n2, cfg.noise_variance, seeds.child(0xDA7A))?;
    let (d1, d2) = split_holdout(&data, cfg.n1, cfg.n2)?;
    let points = uniform_points(cfg.p, cfg.test_points, seeds.child(0x7E57));
    let mut rows = Vec::new();
    for (ci, cond) in cfg.resolved_conditions().into_iter().enumerate() {
        for kind in [EstimatorKind::Tree, EstimatorKind::Forest] {
            let mut estimates = Vec::with_capacity(cfg.k_grid.len());
            for &k in &cfg.k_grid {
                let (trees, replicates) = match kind {
                    EstimatorKind::Tree => (1, cfg.tree_replicates),
                    EstimatorKind::Forest => (cfg.forest_size.trees_for(k), cfg.forest_replicates),
                };
                let params = CartParams {
                    mtry: cond.mtry,
                    bootstrap_partitions: cond.bootstrap,
                    max_leaves: k,
                    nodesize: cfg.nodesize,
                    resample_size: None,
                };
                let s = seeds
                    .child(ci as u64 + 1)
                    .child(kind as u64)
                    .child(k as u64);
                let d = estimate_holdout(
                    &Condition { params, trees },
                    &d1,
                    &d2,
                    &f,
                    cfg.noise_variance,
                    &points,
                    replicates,
                    s,
                )
                .map_err(|e| e.context(format!("condition {cond}, {}, k = {k}", kind.label())))?;
                estimates.push(KEstimate {
                    k,
                    approx: d.approx,
                    estimation: d.estimation,
                });
            }
            let row = ResultRow::from_estimates(cond, kind, cfg.n2, cfg.noise_variance, estimates)
                .map_err(|e| e.context(format!("fitting condition {cond}, {}", kind.label())))?;
            rows.push(row);
        }
    }
    Ok(rows)
}
