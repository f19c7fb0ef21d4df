//! Greedy CART regression trees.
//!
//! Trees grow level by level: every leaf above the target depth is split at
//! the axis-aligned threshold that maximizes the empirical impurity decrease
//!
//! ```text
//! Δ̂(A, j, b) = (1/n) [ Σ_{I_A} (y − ȳ_A)² − Σ_{I_L} (y − ȳ_L)² − Σ_{I_R} (y − ȳ_R)² ]
//! ```
//!
//! where `n` is the size of the whole training set, `A_L = A ∩ {v_j ≤ b}` and
//! `A_R = A ∩ {v_j > b}`.

use std::collections::VecDeque;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_point, Dataset, ProductDistribution, SignalFunction};
use crate::population::cell_moments;
use crate::rng::LabRng;

/// Axis-aligned cell `∏ [ℓ_j, u_j]` inside `[0,1]^p`, with per-side
/// open/closed flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_closed: Vec<bool>,
    upper_closed: Vec<bool>,
}

impl Rectangle {
    /// Closed box `∏ [lower_j, upper_j]`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let p = lower.len();
        Self::with_flags(lower, upper, vec![true; p], vec![true; p])
    }

    pub fn with_flags(
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_closed: Vec<bool>,
        upper_closed: Vec<bool>,
    ) -> Result<Self> {
        let p = lower.len();
        if p == 0 || upper.len() != p || lower_closed.len() != p || upper_closed.len() != p {
            return Err(Error::Argument("rectangle bounds must have matching positive length".into()));
        }
        for j in 0..p {
            let (l, u) = (lower[j], upper[j]);
            if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&u) || l > u {
                return Err(Error::Argument(format!(
                    "side {j} = [{l}, {u}] is not a sub-interval of [0,1]"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            lower_closed,
            upper_closed,
        })
    }

    pub fn unit(p: usize) -> Self {
        Self::new(vec![0.0; p], vec![1.0; p]).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        (0..self.dim()).all(|j| {
            let t = u[j];
            let above = if self.lower_closed[j] {
                t >= self.lower[j]
            } else {
                t > self.lower[j]
            };
            let below = if self.upper_closed[j] {
                t <= self.upper[j]
            } else {
                t < self.upper[j]
            };
            above && below
        })
    }

    /// `(A ∩ {v_j ≤ b}, A ∩ {v_j > b})`.
    pub fn split(&self, j: usize, b: f64) -> (Rectangle, Rectangle) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[j] = b.clamp(self.lower[j], self.upper[j]);
        left.upper_closed[j] = true;
        right.lower[j] = b.clamp(self.lower[j], self.upper[j]);
        right.lower_closed[j] = false;
        (left, right)
    }
}

/// Size of a child: a sample count for empirical splits, a probability
/// mass for population splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChildWeight {
    Count(usize),
    Mass(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChildSummary {
    pub weight: ChildWeight,
    pub mean: f64,
}

/// A candidate split `(j, b)` with its impurity decrease.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStatistics {
    /// 0-based feature index.
    pub feature: usize,
    pub threshold: f64,
    pub delta: f64,
    pub left: ChildSummary,
    pub right: ChildSummary,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Two-pass mean: the second pass removes the rounding of the first.
pub fn accurate_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = compensated_sum(values.iter().copied()) / n;
    m + compensated_sum(values.iter().map(|v| v - m)) / n
}

fn sum_sq_dev(values: &[f64], mean: f64) -> f64 {
    compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)))
}

fn indices_in(data: &Dataset, cell: &Rectangle) -> Vec<usize> {
    (0..data.n()).filter(|&i| cell.contains(data.row(i))).collect()
}

fn check_dims(data: &Dataset, cell: &Rectangle) -> Result<()> {
    if cell.dim() != data.p() {
        return Err(Error::Configuration(format!(
            "cell has dimension {} but data has {}",
            cell.dim(),
            data.p()
        )));
    }
    Ok(())
}

/// Δ̂ for the samples `indices` split on `(j, b)`, by the three-term formula.
fn split_statistics_for(data: &Dataset, indices: &[usize], j: usize, b: f64) -> Result<SplitStatistics> {
    if indices.is_empty() {
        return Err(Error::EmptyCell);
    }
    let ys: Vec<f64> = indices.iter().map(|&i| data.response(i)).collect();
    let (left, right): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| data.feature(i, j) <= b);
    if left.is_empty() || right.is_empty() {
        return Err(Error::SplitInfeasible {
            feature: j,
            threshold: b,
        });
    }
    let yl: Vec<f64> = left.iter().map(|&i| data.response(i)).collect();
    let yr: Vec<f64> = right.iter().map(|&i| data.response(i)).collect();
    let (m, ml, mr) = (accurate_mean(&ys), accurate_mean(&yl), accurate_mean(&yr));
    let n = data.n() as f64;
    let raw = (sum_sq_dev(&ys, m) - sum_sq_dev(&yl, ml) - sum_sq_dev(&yr, mr)) / n;
    debug_assert!(raw >= -1e-12 * (1.0 + sum_sq_dev(&ys, m) / n), "negative Δ̂ {raw}");
    Ok(SplitStatistics {
        feature: j,
        threshold: b,
        delta: raw.max(0.0),
        left: ChildSummary {
            weight: ChildWeight::Count(left.len()),
            mean: ml,
        },
        right: ChildSummary {
            weight: ChildWeight::Count(right.len()),
            mean: mr,
        },
    })
}

/// Δ̂(A, j, b) together with child counts and means.
pub fn empirical_impurity_decrease(
    data: &Dataset,
    cell: &Rectangle,
    j: usize,
    b: f64,
) -> Result<SplitStatistics> {
    check_dims(data, cell)?;
    if j >= data.p() {
        return Err(Error::Argument(format!("feature {j} out of range for p={}", data.p())));
    }
    split_statistics_for(data, &indices_in(data, cell), j, b)
}

/// `(Δ̂_L, Δ̂_R)` with `Δ̂_L = |I_L|/n · (ȳ_L − ȳ_A)²`.
pub fn empirical_decrease_parts(data: &Dataset, cell: &Rectangle, j: usize, b: f64) -> Result<(f64, f64)> {
    let s = empirical_impurity_decrease(data, cell, j, b)?;
    let idx = indices_in(data, cell);
    let ys: Vec<f64> = idx.iter().map(|&i| data.response(i)).collect();
    let m = accurate_mean(&ys);
    let n = data.n() as f64;
    let part = |c: &ChildSummary| match c.weight {
        ChildWeight::Count(k) => k as f64 / n * (c.mean - m) * (c.mean - m),
        ChildWeight::Mass(_) => unreachable!("empirical split"),
    };
    Ok((part(&s.left), part(&s.right)))
}

/// Midpoint of a gap between consecutive distinct values, kept strictly
/// below `hi` so that `hi` routes right.
pub(crate) fn gap_midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + 0.5 * (hi - lo);
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best split for one feature by a sort and prefix-sum sweep. Returns
/// `(Δ̂, threshold)`.
fn sweep_feature(data: &Dataset, indices: &[usize], centered: &[f64], j: usize) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| data.feature(indices[a], j).total_cmp(&data.feature(indices[b], j)));
    let total = compensated_sum(centered.iter().copied());
    let m = indices.len();
    let n = data.n() as f64;
    let mut best: Option<(f64, f64)> = None;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for k in 0..m - 1 {
        let v = centered[order[k]];
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        let lo = data.feature(indices[order[k]], j);
        let hi = data.feature(indices[order[k + 1]], j);
        if !(lo < hi) {
            continue;
        }
        let sl = sum + comp;
        let sr = total - sl;
        let nl = (k + 1) as f64;
        let nr = (m - k - 1) as f64;
        let delta = (sl * sl / nl + sr * sr / nr) / n;
        let better = match best {
            None => true,
            Some((d, _)) => delta > d + tie_margin(d),
        };
        if better {
            best = Some((delta, gap_midpoint(lo, hi)));
        }
    }
    best
}

/// Values within this margin of each other count as ties.
fn tie_margin(d: f64) -> f64 {
    1e-12 * d.abs().max(1e-300)
}

fn best_split_for_indices(data: &Dataset, indices: &[usize]) -> Option<SplitStatistics> {
    if indices.len() < 2 {
        return None;
    }
    let ys: Vec<f64> = indices.iter().map(|&i| data.response(i)).collect();
    let mean = accurate_mean(&ys);
    let centered: Vec<f64> = ys.iter().map(|y| y - mean).collect();
    let per_feature: Vec<Option<(f64, f64)>> = if indices.len() >= 4096 && data.p() > 1 {
        (0..data.p())
            .into_par_iter()
            .map(|j| sweep_feature(data, indices, &centered, j))
            .collect()
    } else {
        (0..data.p())
            .map(|j| sweep_feature(data, indices, &centered, j))
            .collect()
    };
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, cand) in per_feature.into_iter().enumerate() {
        if let Some((d, b)) = cand {
            let better = match best {
                None => true,
                Some((_, bd, _)) => d > bd + tie_margin(bd),
            };
            if better {
                best = Some((j, d, b));
            }
        }
    }
    let (j, _, b) = best?;
    split_statistics_for(data, indices, j, b).ok()
}

/// Exact maximizer of Δ̂ over all features and all midpoint thresholds.
/// `None` when the cell holds fewer than two distinct points.
pub fn best_empirical_split(data: &Dataset, cell: &Rectangle) -> Result<Option<SplitStatistics>> {
    check_dims(data, cell)?;
    let idx = indices_in(data, cell);
    if idx.is_empty() {
        return Err(Error::EmptyCell);
    }
    Ok(best_split_for_indices(data, &idx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub rectangle: Rectangle,
    pub split: Option<SplitStatistics>,
    pub children: Option<(usize, usize)>,
    pub prediction: f64,
    pub n_samples: usize,
    /// Training rows routed here at fit time; empty for trees loaded from JSON.
    pub samples: Vec<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// A fitted depth-`d` binary axis-aligned regression tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    p: usize,
    depth: usize,
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Routes `u` (left iff `u_j ≤ b`) without the domain check.
    pub fn leaf_for(&self, u: &[f64]) -> &TreeNode {
        let mut node = &self.nodes[0];
        while let (Some((l, r)), Some(s)) = (node.children, node.split.as_ref()) {
            node = if u[s.feature] <= s.threshold {
                &self.nodes[l]
            } else {
                &self.nodes[r]
            };
        }
        node
    }

    /// Residual sum of squares on the training data.
    pub fn training_sse(&self, data: &Dataset) -> f64 {
        compensated_sum((0..data.n()).map(|i| {
            let r = data.response(i) - self.leaf_for(data.row(i)).prediction;
            r * r
        }))
    }

    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            p: self.p,
            depth: self.depth,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    depth: n.depth,
                    feature: n.split.map(|s| s.feature + 1),
                    threshold: n.split.map(|s| s.threshold),
                    prediction: n.prediction,
                    left: n.children.map(|c| c.0),
                    right: n.children.map(|c| c.1),
                    n_samples: n.n_samples,
                })
                .collect(),
        }
    }

    /// Rebuilds a tree from its JSON form; rectangles are recomputed from the
    /// split rules.
    pub fn from_json(json: &TreeJson) -> Result<Self> {
        let bad = |m: String| Error::Configuration(format!("invalid tree: {m}"));
        if json.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        for (k, n) in json.nodes.iter().enumerate() {
            if n.id != k {
                return Err(bad(format!("node {k} has id {}", n.id)));
            }
        }
        let mut rects: Vec<Option<Rectangle>> = vec![None; json.nodes.len()];
        rects[0] = Some(Rectangle::unit(json.p));
        let mut nodes = Vec::with_capacity(json.nodes.len());
        for n in &json.nodes {
            let rect = rects[n.id]
                .clone()
                .ok_or_else(|| bad(format!("node {} unreachable from the root", n.id)))?;
            let (split, children) = match (n.feature, n.threshold, n.left, n.right) {
                (Some(f), Some(b), Some(l), Some(r)) => {
                    if f == 0 || f > json.p || l <= n.id || r <= n.id || l >= rects.len() || r >= rects.len() {
                        return Err(bad(format!("node {} has invalid split or children", n.id)));
                    }
                    let (rl, rr) = rect.split(f - 1, b);
                    rects[l] = Some(rl);
                    rects[r] = Some(rr);
                    let summary = |id: usize| ChildSummary {
                        weight: ChildWeight::Count(json.nodes[id].n_samples),
                        mean: json.nodes[id].prediction,
                    };
                    (
                        Some(SplitStatistics {
                            feature: f - 1,
                            threshold: b,
                            delta: f64::NAN,
                            left: summary(l),
                            right: summary(r),
                        }),
                        Some((l, r)),
                    )
                }
                (None, None, None, None) => (None, None),
                _ => return Err(bad(format!("node {} is partially specified", n.id))),
            };
            nodes.push(TreeNode {
                id: n.id,
                depth: n.depth,
                rectangle: rect,
                split,
                children,
                prediction: n.prediction,
                n_samples: n.n_samples,
                samples: Vec::new(),
            });
        }
        Ok(Self {
            p: json.p,
            depth: json.depth,
            nodes,
        })
    }
}

/// Serialized tree. `feature` is 1-based, matching CSV column `x{feature}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub p: usize,
    pub depth: usize,
    pub nodes: Vec<NodeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub depth: usize,
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub prediction: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub n_samples: usize,
}

/// Grows a CART tree breadth-first to depth `d`.
///
/// Leaves with fewer than two samples or no two distinct points are frozen.
/// Ties in Δ̂ go to the smallest feature, then the smallest threshold.
pub fn fit_cart(data: &Dataset, depth: usize) -> RegressionTree {
    let p = data.p();
    let all: Vec<usize> = (0..data.n()).collect();
    let root_mean = accurate_mean(data.responses());
    let mut nodes = vec![TreeNode {
        id: 0,
        depth: 0,
        rectangle: Rectangle::unit(p),
        split: None,
        children: None,
        prediction: root_mean,
        n_samples: all.len(),
        samples: all,
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if nodes[id].depth >= depth {
            continue;
        }
        let Some(split) = best_split_for_indices(data, &nodes[id].samples) else {
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = nodes[id]
            .samples
            .iter()
            .partition(|&&i| data.feature(i, split.feature) <= split.threshold);
        let (rl, rr) = nodes[id].rectangle.split(split.feature, split.threshold);
        let child_depth = nodes[id].depth + 1;
        let l = nodes.len();
        let r = l + 1;
        for (k, rect, idx, summary) in [(l, rl, left_idx, split.left), (r, rr, right_idx, split.right)] {
            nodes.push(TreeNode {
                id: k,
                depth: child_depth,
                rectangle: rect,
                split: None,
                children: None,
                prediction: summary.mean,
                n_samples: idx.len(),
                samples: idx,
            });
            queue.push_back(k);
        }
        nodes[id].split = Some(split);
        nodes[id].children = Some((l, r));
    }
    RegressionTree { p, depth, nodes }
}

/// `f̂(u)`; left iff `u_j ≤ b`.
pub fn predict(tree: &RegressionTree, u: &[f64]) -> Result<f64> {
    check_point(u, tree.dim())?;
    Ok(tree.leaf_for(u).prediction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum L2Mode {
    /// Leaf-wise population moments; additive signals only.
    ExactAdditive,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Error {
    pub value: f64,
    /// Zero in exact mode.
    pub std_error: f64,
}

/// `‖f̂ − f*‖²_{L²(μ)}`.
///
/// Exact mode sums `P(X∈A) · [Var(f*|A) + (E(f*|A) − prediction)²]` over
/// leaves; Monte-Carlo mode averages `(f̂(X) − f*(X))²` over fresh draws.
pub fn l2_error(
    tree: &RegressionTree,
    f: &SignalFunction,
    dist: &ProductDistribution,
    mode: L2Mode,
) -> Result<L2Error> {
    if f.dim() != tree.dim() || dist.dim() != tree.dim() {
        return Err(Error::Configuration("tree, signal and distribution dimensions differ".into()));
    }
    match mode {
        L2Mode::ExactAdditive => {
            if !f.is_additive() {
                return Err(Error::Configuration(
                    "exact-additive error mode needs an additive signal".into(),
                ));
            }
            let mut terms = Vec::new();
            for leaf in tree.leaves() {
                let m = match cell_moments(f, dist, &leaf.rectangle) {
                    Ok(m) => m,
                    Err(Error::DegenerateCell) => continue,
                    Err(e) => return Err(e),
                };
                let bias = m.mean - leaf.prediction;
                terms.push(m.mass * (m.variance + bias * bias));
            }
            Ok(L2Error {
                value: compensated_sum(terms),
                std_error: 0.0,
            })
        }
        L2Mode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::Argument("Monte-Carlo mode needs at least 2 draws".into()));
            }
            let mut rng = LabRng::seed_from_u64(seed);
            let sq: Vec<f64> = (0..samples)
                .map(|_| {
                    let x = dist.sample_point(&mut rng);
                    let r = tree.leaf_for(&x).prediction - f.value(&x);
                    r * r
                })
                .collect();
            let mean = accurate_mean(&sq);
            let var = sum_sq_dev(&sq, mean) / (samples - 1) as f64;
            Ok(L2Error {
                value: mean,
                std_error: (var / samples as f64).sqrt(),
            })
        }
    }
}
