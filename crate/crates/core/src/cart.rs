//! Axis-aligned binary partitions of `[0,1]^p` grown CART-style.
//!
//! Growth is best-first: every open leaf carries its best admissible split
//! (largest decrease of within-leaf squared error over a fresh random subset
//! of `mtry` coordinates), and the leaf with the largest decrease is split
//! until `max_leaves` is reached or nothing is admissible. Thresholds are
//! midpoints between consecutive distinct values; ties go to the lowest
//! coordinate, then the smallest threshold, then the oldest leaf.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::function::RegressionFunction;
use crate::quadrature::GaussLegendre;
use crate::resample::{draw_resample, ResampleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartParams {
    /// Coordinates drawn at each node.
    pub mtry: usize,
    /// Grow each tree on a bootstrap resample of the data.
    pub bootstrap_partitions: bool,
    /// Leaf budget (`maxnodes`).
    pub max_leaves: usize,
    /// Minimum number of growth points per leaf.
    pub nodesize: usize,
    /// Bootstrap resample size; `None` means the data size.
    pub resample_size: Option<usize>,
}

impl CartParams {
    pub fn new(mtry: usize, bootstrap_partitions: bool, max_leaves: usize) -> Self {
        Self {
            mtry,
            bootstrap_partitions,
            max_leaves,
            nodesize: 1,
            resample_size: None,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::Parameter(format!(
                "mtry = {} outside [1, {p}]",
                self.mtry
            )));
        }
        if self.max_leaves == 0 {
            return Err(Error::Parameter("max_leaves must be >= 1".into()));
        }
        if self.nodesize == 0 {
            return Err(Error::Parameter("nodesize must be >= 1".into()));
        }
        if self.resample_size == Some(0) {
            return Err(Error::Parameter("resample size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[coord] < threshold` goes left, the rest goes right.
    Split {
        coord: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    /// Per-coordinate `[lo, hi)`, closed at 1.
    pub bounds: Vec<(f64, f64)>,
    /// Growth-sample indices into the data set, repeated per bootstrap copy.
    pub members: Vec<usize>,
}

impl Leaf {
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|(&(lo, hi), &v)| v >= lo && (v < hi || (hi == 1.0 && v == 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreePartition {
    p: usize,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
}

impl TreePartition {
    pub fn dimension(&self) -> usize {
        self.p
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf holding `x`; a point on a threshold goes right.
    #[inline]
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    coord,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[coord] < threshold { left } else { right };
                }
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    /// Same splits, irrespective of growth members.
    pub fn same_partition(&self, other: &TreePartition) -> bool {
        self.nodes == other.nodes
    }

    /// Hash key of the split structure.
    pub(crate) fn structure_key(&self) -> Vec<u64> {
        let mut key = Vec::with_capacity(self.nodes.len() * 2);
        for n in &self.nodes {
            match *n {
                Node::Split {
                    coord,
                    threshold,
                    left,
                    right,
                } => {
                    key.push(coord as u64);
                    key.push(threshold.to_bits());
                    key.push(((left as u64) << 32) | right as u64);
                }
                Node::Leaf { leaf } => key.push(u64::MAX - leaf as u64),
            }
        }
        key
    }

    /// Nested JSON dump: splits with coordinate and threshold, leaves with
    /// their box and growth-point count.
    pub fn to_json(&self) -> Value {
        self.node_json(0)
    }

    fn node_json(&self, i: usize) -> Value {
        match self.nodes[i] {
            Node::Split {
                coord,
                threshold,
                left,
                right,
            } => json!({
                "coord": coord,
                "threshold": threshold,
                "left": self.node_json(left),
                "right": self.node_json(right),
            }),
            Node::Leaf { leaf } => {
                let l = &self.leaves[leaf];
                json!({
                    "leaf": leaf,
                    "box": l.bounds.iter().map(|(lo, hi)| [lo, hi]).collect::<Vec<_>>(),
                    "points": l.members.len(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    coord: usize,
    threshold: f64,
    decrease: f64,
}

struct OpenLeaf {
    node: usize,
    bounds: Vec<(f64, f64)>,
    members: Vec<usize>,
    best: Option<SplitChoice>,
}

struct Grower<'a, R: Rng + ?Sized> {
    d: &'a Dataset,
    params: &'a CartParams,
    rng: &'a mut R,
    scratch: Vec<(f64, f64)>,
}

impl<R: Rng + ?Sized> Grower<'_, R> {
    fn best_split(&mut self, members: &[usize]) -> Option<SplitChoice> {
        let p = self.d.p();
        let mut coords = rand::seq::index::sample(self.rng, p, self.params.mtry).into_vec();
        coords.sort_unstable();
        let nodesize = self.params.nodesize;
        let n = members.len();
        if n < 2 * nodesize {
            return None;
        }
        let y = self.d.responses();
        let mean = members.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let sse: f64 = members.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return None;
        }
        let tol = 1e-12 * sse;
        let design = self.d.design();
        let mut best: Option<SplitChoice> = None;
        for coord in coords {
            self.scratch.clear();
            self.scratch.extend(
                members
                    .iter()
                    .map(|&i| (design[i * p + coord], y[i] - mean)),
            );
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.scratch[i].1;
                let (v, next) = (self.scratch[i].0, self.scratch[i + 1].0);
                let (nl, nr) = (i + 1, n - i - 1);
                if v == next || nl < nodesize || nr < nodesize {
                    continue;
                }
                // Centered responses: the right sum is −left_sum.
                let decrease = left_sum * left_sum * n as f64 / (nl * nr) as f64;
                if decrease > tol && best.is_none_or(|b| decrease > b.decrease) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold <= v {
                        threshold = next;
                    }
                    best = Some(SplitChoice {
                        coord,
                        threshold,
                        decrease,
                    });
                }
            }
        }
        best
    }
}

/// Grows one partition on `d1` (or on a bootstrap resample of it).
pub fn build_cart_partition<R: Rng + ?Sized>(
    d1: &Dataset,
    params: &CartParams,
    rng: &mut R,
) -> Result<TreePartition> {
    if d1.is_empty() {
        return Err(Error::EmptyData);
    }
    let p = d1.p();
    params.validate(p)?;
    let members: Vec<usize> = if params.bootstrap_partitions {
        let a = params.resample_size.unwrap_or(d1.n());
        draw_resample(d1.n(), ResampleMode::Bootstrap, a, rng)?.indices()
    } else {
        (0..d1.n()).collect()
    };

    let mut grower = Grower {
        d: d1,
        params,
        rng,
        scratch: Vec::with_capacity(members.len()),
    };
    let mut nodes = vec![Node::Leaf { leaf: 0 }];
    let best = grower.best_split(&members);
    let mut open = vec![OpenLeaf {
        node: 0,
        bounds: vec![(0.0, 1.0); p],
        members,
        best,
    }];

    while open.len() < params.max_leaves {
        let Some((chosen, _)) = open
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|b| (i, b.decrease)))
            .fold(None, |acc: Option<(usize, f64)>, (i, dec)| match acc {
                Some((_, best)) if best >= dec => acc,
                _ => Some((i, dec)),
            })
        else {
            break;
        };
        let split = open[chosen].best.expect("chosen leaf has a split");
        let parent = &open[chosen];
        let design = d1.design();
        let (left_members, right_members): (Vec<usize>, Vec<usize>) = parent
            .members
            .iter()
            .partition(|&&i| design[i * p + split.coord] < split.threshold);
        let mut left_bounds = parent.bounds.clone();
        let mut right_bounds = parent.bounds.clone();
        left_bounds[split.coord].1 = split.threshold;
        right_bounds[split.coord].0 = split.threshold;

        let parent_node = parent.node;
        let (left_node, right_node) = (nodes.len(), nodes.len() + 1);
        nodes[parent_node] = Node::Split {
            coord: split.coord,
            threshold: split.threshold,
            left: left_node,
            right: right_node,
        };
        let right_index = open.len();
        nodes.push(Node::Leaf { leaf: chosen });
        nodes.push(Node::Leaf { leaf: right_index });

        let left_best = grower.best_split(&left_members);
        let right_best = grower.best_split(&right_members);
        open[chosen] = OpenLeaf {
            node: left_node,
            bounds: left_bounds,
            members: left_members,
            best: left_best,
        };
        open.push(OpenLeaf {
            node: right_node,
            bounds: right_bounds,
            members: right_members,
            best: right_best,
        });
    }

    // Number leaves left to right.
    let mut order = Vec::with_capacity(open.len());
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        match nodes[i] {
            Node::Split { left, right, .. } => {
                stack.push(right);
                stack.push(left);
            }
            Node::Leaf { leaf } => order.push(leaf),
        }
    }
    let mut remap = vec![0; open.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    for n in nodes.iter_mut() {
        if let Node::Leaf { leaf } = n {
            *leaf = remap[*leaf];
        }
    }
    let mut slots: Vec<Option<OpenLeaf>> = open.into_iter().map(Some).collect();
    let leaves = order
        .iter()
        .map(|&old| {
            let l = slots[old].take().expect("each leaf visited once");
            Leaf {
                bounds: l.bounds,
                members: l.members,
            }
        })
        .collect();
    Ok(TreePartition { p, nodes, leaves })
}

/// Leaf of `t` holding `x`.
pub fn locate_cell(t: &TreePartition, x: &[f64]) -> usize {
    t.locate(x)
}

/// Order of the tensor Gauss–Legendre rule for `sin(π x₁x₂)`. On any
/// sub-rectangle of the unit square the absolute error is below 1e-8 (in
/// practice below 1e-14).
pub const SINE_QUADRATURE_ORDER: usize = 8;

fn sine_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(SINE_QUADRATURE_ORDER))
}

/// Average of `m` over an axis-aligned box.
///
/// For the scaled Friedman1 function the `(x₃ − ½)²`, `x₄` and `x₅` terms
/// use closed forms and `sin(π x₁x₂)` uses a tensor Gauss–Legendre rule.
pub fn box_average_m(bounds: &[(f64, f64)], f: &RegressionFunction) -> Result<f64> {
    if bounds.len() != f.dimension() {
        return Err(Error::Dimension(format!(
            "box has {} coordinates, function has {}",
            bounds.len(),
            f.dimension()
        )));
    }
    if let Some((coord, &(lo, hi))) = bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, hi))| hi.partial_cmp(lo) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::DegenerateBox { coord, lo, hi });
    }
    Ok(match f {
        RegressionFunction::Smooth1D(s) => s.interval_average(bounds[0].0, bounds[0].1),
        RegressionFunction::Friedman1Scaled { .. } => {
            let (a1, b1) = bounds[0];
            let (a2, b2) = bounds[1];
            let sine = sine_rule().integrate_rect((a1, b1), (a2, b2), |u, v| {
                (std::f64::consts::PI * u * v).sin()
            }) / ((b1 - a1) * (b2 - a2));
            let (a3, b3) = bounds[2];
            let square = ((b3 - 0.5).powi(3) - (a3 - 0.5).powi(3)) / (3.0 * (b3 - a3));
            let mid4 = 0.5 * (bounds[3].0 + bounds[3].1);
            let mid5 = 0.5 * (bounds[4].0 + bounds[4].1);
            0.1 * (10.0 * sine + 20.0 * square + 10.0 * mid4 + 5.0 * mid5)
        }
    })
}
