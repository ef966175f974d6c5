//! Hold-out random forests: partitions grown on `D1`, labels averaged from
//! `D2`. Weights never depend on the responses of either sample.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cart::{box_average_m, build_cart_partition, CartParams, TreePartition};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::function::RegressionFunction;
use crate::resample::{draw_resample, ResampleMode};
use crate::seed::{Purpose, SeedSpec};

/// Optional resampling of `D2` per tree. Off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelResampling {
    #[default]
    Off,
    On {
        mode: ResampleMode,
        size: usize,
    },
}

/// A distinct partition and its share of the forest.
pub type WeightedPartition = (TreePartition, f64);

/// Partition `j` uses stream `(Partition, j)` of `seeds`. Identical partitions
/// are merged, each carrying weight `multiplicity / M`.
pub fn grow_grouped_partitions(
    d1: &Dataset,
    params: &CartParams,
    trees: usize,
    seeds: SeedSpec,
) -> Result<(Vec<WeightedPartition>, Vec<usize>)> {
    if trees == 0 {
        return Err(Error::Parameter("forest needs at least one tree".into()));
    }
    let built: Vec<TreePartition> = (0..trees)
        .into_par_iter()
        .map(|j| build_cart_partition(d1, params, &mut seeds.stream(Purpose::Partition, j as u64)))
        .collect::<Result<_>>()?;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<(TreePartition, usize)> = Vec::new();
    let mut tree_group = Vec::with_capacity(trees);
    for t in built {
        let key = t.structure_key();
        let g = *index.entry(key).or_insert_with(|| {
            groups.push((t.clone(), 0));
            groups.len() - 1
        });
        groups[g].1 += 1;
        tree_group.push(g);
    }
    let m = trees as f64;
    Ok((
        groups.into_iter().map(|(t, c)| (t, c as f64 / m)).collect(),
        tree_group,
    ))
}

/// `D2` members of every leaf, stored contiguously.
#[derive(Debug, Clone)]
struct LeafLabels {
    offsets: Vec<usize>,
    members: Vec<u32>,
    /// Resampling counts aligned with `members`; `None` means all ones.
    counts: Option<Vec<u32>>,
    totals: Vec<u32>,
    means: Vec<f64>,
}

impl LeafLabels {
    fn new(t: &TreePartition, d2: &Dataset, counts: Option<&[u32]>) -> Self {
        let k = t.leaf_count();
        let leaf_of: Vec<usize> = d2.rows().map(|x| t.locate(x)).collect();
        let mut offsets = vec![0usize; k + 1];
        for (i, &l) in leaf_of.iter().enumerate() {
            if counts.is_none_or(|c| c[i] > 0) {
                offsets[l + 1] += 1;
            }
        }
        for l in 0..k {
            offsets[l + 1] += offsets[l];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; offsets[k]];
        let mut kept_counts = counts.map(|_| vec![0u32; offsets[k]]);
        for (i, &l) in leaf_of.iter().enumerate() {
            if let Some(c) = counts {
                if c[i] == 0 {
                    continue;
                }
                kept_counts.as_mut().unwrap()[fill[l]] = c[i];
            }
            members[fill[l]] = i as u32;
            fill[l] += 1;
        }
        let mut labels = Self {
            offsets,
            members,
            counts: kept_counts,
            totals: vec![0; k],
            means: vec![0.0; k],
        };
        for l in 0..k {
            labels.totals[l] = labels.entries(l).map(|(_, c)| c).sum();
        }
        let y = d2.responses();
        let global = y.iter().sum::<f64>() / y.len() as f64;
        labels.means = (0..k)
            .map(|l| labels.leaf_mean(l, y).unwrap_or(global))
            .collect();
        labels
    }

    fn entries(&self, leaf: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.offsets[leaf]..self.offsets[leaf + 1];
        let counts = self.counts.as_ref();
        r.map(move |e| (self.members[e] as usize, counts.map_or(1, |c| c[e])))
    }

    fn leaf_mean(&self, leaf: usize, values: &[f64]) -> Option<f64> {
        let total = self.totals[leaf];
        (total > 0).then(|| {
            self.entries(leaf)
                .map(|(i, c)| c as f64 * values[i])
                .sum::<f64>()
                / total as f64
        })
    }
}

#[derive(Debug, Clone)]
struct TreeGroup {
    partition: TreePartition,
    weight: f64,
    labels: LeafLabels,
}

#[derive(Debug, Clone)]
pub struct HoldOutForest<'a> {
    d2: &'a Dataset,
    params: CartParams,
    trees: usize,
    groups: Vec<TreeGroup>,
    tree_group: Vec<usize>,
    global_mean: f64,
}

impl<'a> HoldOutForest<'a> {
    /// `M` trees grown on `d1`, labelled by `d2`.
    pub fn grow(
        d1: &Dataset,
        d2: &'a Dataset,
        params: CartParams,
        trees: usize,
        seeds: SeedSpec,
    ) -> Result<Self> {
        Self::grow_with(d1, d2, params, trees, LabelResampling::Off, seeds)
    }

    pub fn grow_with(
        d1: &Dataset,
        d2: &'a Dataset,
        params: CartParams,
        trees: usize,
        labels: LabelResampling,
        seeds: SeedSpec,
    ) -> Result<Self> {
        if d2.is_empty() {
            return Err(Error::EmptyData);
        }
        if d1.p() != d2.p() {
            return Err(Error::Dimension(format!(
                "D1 has p = {}, D2 has p = {}",
                d1.p(),
                d2.p()
            )));
        }
        let global_mean = d2.responses().iter().sum::<f64>() / d2.n() as f64;
        let (groups, tree_group) = match labels {
            LabelResampling::Off => {
                let (parts, tree_group) = grow_grouped_partitions(d1, &params, trees, seeds)?;
                let groups = parts
                    .into_par_iter()
                    .map(|(partition, weight)| {
                        let labels = LeafLabels::new(&partition, d2, None);
                        TreeGroup {
                            partition,
                            weight,
                            labels,
                        }
                    })
                    .collect();
                (groups, tree_group)
            }
            LabelResampling::On { mode, size } => {
                // Every tree has its own labels, so nothing is merged.
                let groups = (0..trees)
                    .into_par_iter()
                    .map(|j| {
                        let partition = build_cart_partition(
                            d1,
                            &params,
                            &mut seeds.stream(Purpose::Partition, j as u64),
                        )?;
                        let r = draw_resample(
                            d2.n(),
                            mode,
                            size,
                            &mut seeds.stream(Purpose::Labels, j as u64),
                        )?;
                        let labels = LeafLabels::new(&partition, d2, Some(r.counts()));
                        Ok(TreeGroup {
                            partition,
                            weight: 1.0 / trees as f64,
                            labels,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (groups, (0..trees).collect())
            }
        };
        if groups.is_empty() {
            return Err(Error::Parameter("forest needs at least one tree".into()));
        }
        Ok(Self {
            d2,
            params,
            trees,
            groups,
            tree_group,
            global_mean,
        })
    }

    pub fn params(&self) -> &CartParams {
        &self.params
    }

    pub fn tree_count(&self) -> usize {
        self.trees
    }

    pub fn distinct_partitions(&self) -> usize {
        self.groups.len()
    }

    pub fn label_sample(&self) -> &Dataset {
        self.d2
    }

    /// Mean over trees of the `D2` label average in the cell of `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| g.weight * g.labels.means[g.partition.locate(x)])
            .sum()
    }

    /// Prediction of tree `j` alone.
    pub fn tree_predict(&self, j: usize, x: &[f64]) -> f64 {
        let g = &self.groups[self.tree_group[j]];
        g.labels.means[g.partition.locate(x)]
    }

    /// Forest prediction with `values` in place of the `D2` responses, e.g.
    /// `m(X_i)` for the conditional mean `m*`.
    pub fn predict_with(&self, values: &[f64], x: &[f64]) -> f64 {
        let global = values.iter().sum::<f64>() / values.len() as f64;
        self.groups
            .iter()
            .map(|g| {
                g.weight
                    * g.labels
                        .leaf_mean(g.partition.locate(x), values)
                        .unwrap_or(global)
            })
            .sum()
    }

    /// Weight of every `D2` point at `x`.
    pub fn weights(&self, x: &[f64]) -> Vec<f64> {
        let n2 = self.d2.n();
        let mut w = vec![0.0; n2];
        for g in &self.groups {
            let leaf = g.partition.locate(x);
            let total = g.labels.totals[leaf];
            if total == 0 {
                let u = g.weight / n2 as f64;
                w.iter_mut().for_each(|v| *v += u);
            } else {
                let scale = g.weight / total as f64;
                for (i, c) in g.labels.entries(leaf) {
                    w[i] += scale * c as f64;
                }
            }
        }
        w
    }

    /// `Σ_i W_i(x)²` without materializing the zero weights.
    pub fn sum_sq_weights(&self, x: &[f64], scratch: &mut WeightScratch) -> f64 {
        let n2 = self.d2.n();
        scratch.reset(n2);
        let mut uniform = 0.0;
        for g in &self.groups {
            let leaf = g.partition.locate(x);
            let total = g.labels.totals[leaf];
            if total == 0 {
                uniform += g.weight / n2 as f64;
                continue;
            }
            let scale = g.weight / total as f64;
            for (i, c) in g.labels.entries(leaf) {
                if scratch.acc[i] == 0.0 {
                    scratch.touched.push(i as u32);
                }
                scratch.acc[i] += scale * c as f64;
            }
        }
        let touched: f64 = scratch
            .touched
            .iter()
            .map(|&i| (scratch.acc[i as usize] + uniform).powi(2))
            .sum();
        touched + (n2 - scratch.touched.len()) as f64 * uniform * uniform
    }

    /// Ideal forest: every leaf value replaced by the average of `f` over the
    /// leaf box.
    pub fn ideal(&self, f: &RegressionFunction) -> Result<IdealForest> {
        IdealForest::new(self.groups.iter().map(|g| (&g.partition, g.weight)), f)
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }
}

pub fn horf_predict(f: &HoldOutForest<'_>, x: &[f64]) -> f64 {
    f.predict(x)
}

pub fn compute_weights(f: &HoldOutForest<'_>, x: &[f64]) -> Vec<f64> {
    f.weights(x)
}

/// Reusable dense accumulator for [`HoldOutForest::sum_sq_weights`].
#[derive(Debug, Default, Clone)]
pub struct WeightScratch {
    acc: Vec<f64>,
    touched: Vec<u32>,
}

impl WeightScratch {
    fn reset(&mut self, n: usize) {
        if self.acc.len() != n {
            self.acc = vec![0.0; n];
            self.touched.clear();
        }
        for &i in &self.touched {
            self.acc[i as usize] = 0.0;
        }
        self.touched.clear();
    }
}

/// Weighted partitions with the box average of `m` on every leaf.
#[derive(Debug, Clone)]
pub struct IdealForest {
    parts: Vec<(TreePartition, f64, Vec<f64>)>,
}

impl IdealForest {
    pub fn new<'t>(
        parts: impl IntoIterator<Item = (&'t TreePartition, f64)>,
        f: &RegressionFunction,
    ) -> Result<Self> {
        let parts = parts
            .into_iter()
            .map(|(t, w)| {
                let values = t
                    .leaves()
                    .iter()
                    .map(|l| box_average_m(&l.bounds, f))
                    .collect::<Result<Vec<_>>>()?;
                Ok((t.clone(), w, values))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { parts })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|(t, w, v)| w * v[t.locate(x)]).sum()
    }
}
