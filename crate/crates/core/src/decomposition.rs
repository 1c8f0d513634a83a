//! Greedy K-D tree domain decomposition.
//!
//! Starting from the whole cloud, each iteration picks the leaf with the
//! largest `|D| * KL(D)`, cuts it with a hyperplane orthogonal to its longest
//! box axis, and keeps the threshold (out of `n_max` equidistant interior
//! candidates) with the largest KL gain. The loop stops once the requested
//! number of leaves exists or no leaf can be split any more.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{BoundingBox, PointCloud};
use crate::error::{Error, Result};
use crate::histogram::{kl_of_rows, SubsetKl};

/// Number of equidistant threshold candidates tried per split.
pub const DEFAULT_N_MAX: usize = 5;

/// Candidate evaluation switches to the thread pool above this leaf size.
const PARALLEL_GAIN_MIN_POINTS: usize = 16_384;

/// A hyperplane `x[axis] = threshold` with its KL gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub axis: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Reference to a child in the split tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// An executed split. `left` holds the points with `x[axis] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub axis: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: Child,
    pub right: Child,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub point_ids: Vec<usize>,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub unsplittable: bool,
    /// Grid node counts per axis, once allocated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
}

/// Result of a decomposition: leaves in order, plus the split tree.
///
/// `nodes[0]` is the root split when any split happened; with no splits the
/// single leaf is the root. Nodes appear in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub dims: usize,
    /// Number of leaves that was asked for.
    pub requested: usize,
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<Leaf>,
}

impl Partition {
    /// Single-leaf partition of `cloud`.
    pub fn identity(cloud: &PointCloud) -> Result<Self> {
        let bbox = crate::cloud::bounding_box(cloud)?;
        Ok(Self {
            dims: cloud.dims(),
            requested: 1,
            nodes: Vec::new(),
            leaves: vec![Leaf {
                point_ids: cloud.ids().to_vec(),
                bbox,
                unsplittable: false,
                grid: None,
            }],
        })
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.leaves.iter().map(|l| l.point_ids.len()).sum()
    }

    /// True when fewer leaves than requested could be produced.
    pub fn terminated_early(&self) -> bool {
        self.leaves.len() < self.requested
    }

    /// Rows of `cloud` owned by each leaf, found through point ids.
    ///
    /// Every point of `cloud` must belong to some leaf; leaf points absent
    /// from `cloud` are skipped.
    pub fn leaf_rows(&self, cloud: &PointCloud) -> Result<Vec<Vec<usize>>> {
        let index = cloud.id_index();
        let mut owner = vec![usize::MAX; cloud.len()];
        let mut rows = vec![Vec::new(); self.leaves.len()];
        for (k, leaf) in self.leaves.iter().enumerate() {
            for &id in &leaf.point_ids {
                if let Some(r) = index.row(id) {
                    owner[r] = k;
                    rows[k].push(r);
                }
            }
        }
        if let Some(r) = owner.iter().position(|&k| k == usize::MAX) {
            return Err(Error::UncoveredPoint { id: cloud.ids()[r] });
        }
        Ok(rows)
    }

    /// Rows of `cloud` per leaf, found by descending the split tree.
    pub fn leaf_rows_by_location(&self, cloud: &PointCloud) -> Result<Vec<Vec<usize>>> {
        if cloud.dims() != self.dims {
            return Err(Error::ShapeMismatch(format!(
                "cloud is {}-dimensional, partition is {}-dimensional",
                cloud.dims(),
                self.dims
            )));
        }
        let mut rows = vec![Vec::new(); self.leaves.len()];
        for r in 0..cloud.len() {
            rows[self.locate(cloud.point(r))].push(r);
        }
        Ok(rows)
    }

    /// Checks that the split tree is well formed: node 0 is the root, every
    /// other node and every leaf is referenced exactly once, and all boxes
    /// match `dims`.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(msg));
        if self.dims == 0 {
            return bad("partition has zero dimensions".into());
        }
        if self.leaves.is_empty() || self.nodes.len() + 1 != self.leaves.len() {
            return bad(format!(
                "{} split nodes for {} leaves",
                self.nodes.len(),
                self.leaves.len()
            ));
        }
        let mut node_refs = vec![0usize; self.nodes.len()];
        let mut leaf_refs = vec![0usize; self.leaves.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.axis >= self.dims || !node.threshold.is_finite() {
                return bad(format!("node {i} splits axis {} at {}", node.axis, node.threshold));
            }
            for child in [node.left, node.right] {
                match child {
                    Child::Node(j) if j < self.nodes.len() && j != 0 => node_refs[j] += 1,
                    Child::Leaf(k) if k < self.leaves.len() => leaf_refs[k] += 1,
                    _ => return bad(format!("node {i} has an invalid child {child:?}")),
                }
            }
        }
        let leaves_ok = self.nodes.is_empty() || leaf_refs.iter().all(|&r| r == 1);
        if node_refs.iter().skip(1).any(|&r| r != 1) || !leaves_ok {
            return bad("split tree is not a tree".into());
        }
        for (k, leaf) in self.leaves.iter().enumerate() {
            if leaf.bbox.dims() != self.dims {
                return bad(format!(
                    "leaf {k} box has {} axes, expected {}",
                    leaf.bbox.dims(),
                    self.dims
                ));
            }
            if let Some(g) = &leaf.grid {
                if g.len() != self.dims {
                    return bad(format!("leaf {k} grid has {} axes, expected {}", g.len(), self.dims));
                }
            }
        }
        Ok(())
    }

    /// Leaf whose region contains `point`, by tree descent.
    pub fn locate(&self, point: &[f64]) -> usize {
        let mut child = match self.nodes.first() {
            Some(_) => Child::Node(0),
            None => Child::Leaf(0),
        };
        loop {
            match child {
                Child::Leaf(k) => return k,
                Child::Node(i) => {
                    let node = &self.nodes[i];
                    child = if point[node.axis] <= node.threshold {
                        node.left
                    } else {
                        node.right
                    };
                }
            }
        }
    }

    /// Sub-clouds of `cloud`, one per leaf, in leaf order.
    pub fn subclouds(&self, cloud: &PointCloud) -> Result<Vec<PointCloud>> {
        Ok(self.leaf_rows(cloud)?.iter().map(|rows| cloud.select(rows)).collect())
    }

    /// Ids of every point under `child`.
    pub fn ids_under(&self, child: Child) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![child];
        while let Some(c) = stack.pop() {
            match c {
                Child::Leaf(k) => out.extend_from_slice(&self.leaves[k].point_ids),
                Child::Node(i) => {
                    stack.push(self.nodes[i].right);
                    stack.push(self.nodes[i].left);
                }
            }
        }
        out
    }

    /// Checks that leaves cover distinct ids of `cloud` and that every split
    /// separates its two subtrees.
    pub fn validate(&self, cloud: &PointCloud) -> Result<()> {
        self.check_structure()?;
        let mut seen = std::collections::HashSet::new();
        for leaf in &self.leaves {
            for &id in &leaf.point_ids {
                if !seen.insert(id) {
                    return Err(Error::Format(format!("point id {id} appears in two leaves")));
                }
            }
        }
        if seen.len() != cloud.len() || cloud.ids().iter().any(|id| !seen.contains(id)) {
            return Err(Error::Format("leaves do not cover the cloud".into()));
        }
        let index = cloud.id_index();
        for node in &self.nodes {
            for (side, child) in [(true, node.left), (false, node.right)] {
                for id in self.ids_under(child) {
                    let row = index.row(id).ok_or(Error::UncoveredPoint { id })?;
                    let x = cloud.point(row)[node.axis];
                    if (x <= node.threshold) != side {
                        return Err(Error::Format(format!(
                            "point {id} on the wrong side of x[{}] = {}",
                            node.axis, node.threshold
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn thresholds_for_box(bbox: &BoundingBox, axis: usize, n_max: usize) -> Result<Vec<f64>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if axis >= bbox.dims() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    if bbox.is_degenerate_axis(axis) {
        return Err(Error::ZeroExtentAxis { axis });
    }
    let (lo, hi) = (bbox.lo[axis], bbox.hi[axis]);
    Ok((1..=n_max)
        .map(|i| lo + i as f64 * (hi - lo) / (n_max + 1) as f64)
        .collect())
}

/// The `n_max` equidistant interior thresholds on `axis` of the cloud's box.
pub fn candidate_thresholds(cloud: &PointCloud, axis: usize, n_max: usize) -> Result<Vec<f64>> {
    let bbox = crate::cloud::bounding_box(cloud)?;
    thresholds_for_box(&bbox, axis, n_max)
}

struct Evaluated {
    candidate: SplitCandidate,
    left: SubsetKl,
    right: SubsetKl,
}

/// Gain of cutting `rows` at `x[axis] = threshold`; `None` if a side is empty.
fn evaluate(cloud: &PointCloud, rows: &[usize], parent: &SubsetKl, axis: usize, threshold: f64) -> Option<Evaluated> {
    let left = rows.iter().copied().filter(|&r| cloud.point(r)[axis] <= threshold);
    let right = rows.iter().copied().filter(|&r| cloud.point(r)[axis] > threshold);
    let left = kl_of_rows(cloud, left)?;
    let right = kl_of_rows(cloud, right)?;
    let n = parent.len as f64;
    let gain = parent.kl - left.len as f64 / n * left.kl - right.len as f64 / n * right.kl;
    Some(Evaluated {
        candidate: SplitCandidate { axis, threshold, gain },
        left,
        right,
    })
}

fn best_of_rows(cloud: &PointCloud, rows: &[usize], parent: &SubsetKl, n_max: usize) -> Option<Evaluated> {
    if rows.len() < 2 || parent.bbox.is_degenerate() {
        return None;
    }
    let axis = parent.bbox.largest_axis();
    let thresholds = thresholds_for_box(&parent.bbox, axis, n_max).ok()?;
    let evaluated: Vec<Option<Evaluated>> = if rows.len() >= PARALLEL_GAIN_MIN_POINTS {
        thresholds
            .par_iter()
            .map(|&b| evaluate(cloud, rows, parent, axis, b))
            .collect()
    } else {
        thresholds
            .iter()
            .map(|&b| evaluate(cloud, rows, parent, axis, b))
            .collect()
    };
    // thresholds ascend, so keeping the first maximum breaks ties toward the
    // smallest threshold
    let mut best: Option<Evaluated> = None;
    for e in evaluated.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| e.candidate.gain > b.candidate.gain) {
            best = Some(e);
        }
    }
    best
}

/// KL gain of splitting `cloud` at `x[axis] = threshold`.
///
/// Each term uses the KL of that (sub)cloud over its own tight box with its
/// own derived bin spec.
pub fn split_gain(cloud: &PointCloud, axis: usize, threshold: f64) -> Result<f64> {
    if axis >= cloud.dims() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    let rows: Vec<usize> = (0..cloud.len()).collect();
    let parent = kl_of_rows(cloud, rows.iter().copied()).ok_or(Error::EmptyCloud)?;
    evaluate(cloud, &rows, &parent, axis, threshold)
        .map(|e| e.candidate.gain)
        .ok_or(Error::DegenerateSplit { axis, threshold })
}

/// Best hyperplane on the longest box axis, or `None` when the cloud cannot
/// be split (fewer than two points, a point-like box, or no candidate with
/// two non-empty sides).
pub fn best_split(cloud: &PointCloud, n_max: usize) -> Result<Option<SplitCandidate>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let rows: Vec<usize> = (0..cloud.len()).collect();
    let Some(parent) = kl_of_rows(cloud, rows.iter().copied()) else {
        return Ok(None);
    };
    Ok(best_of_rows(cloud, &rows, &parent, n_max).map(|e| e.candidate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

struct WorkLeaf {
    rows: Vec<usize>,
    stats: SubsetKl,
    unsplittable: bool,
    parent: Option<(usize, Side)>,
}

impl WorkLeaf {
    fn priority(&self) -> f64 {
        self.stats.len as f64 * self.stats.kl
    }
}

/// One executed split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStep {
    /// Index of the leaf that was split, before the split.
    pub leaf: usize,
    /// Number of points in that leaf.
    pub size: usize,
    pub candidate: SplitCandidate,
}

/// Outcome of a single [`Decomposer::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Split(SplitStep),
    /// The selected leaf admits no valid split and is retired.
    Unsplittable {
        leaf: usize,
    },
    /// Every leaf is unsplittable.
    Exhausted,
}

/// Step-wise driver of the greedy decomposition.
///
/// A split replaces leaf `k` by its `<=` side at index `k` and inserts the
/// `>` side at `k + 1`.
pub struct Decomposer<'a> {
    cloud: &'a PointCloud,
    n_max: usize,
    leaves: Vec<WorkLeaf>,
    nodes: Vec<SplitNode>,
    history: Vec<SplitStep>,
}

impl<'a> Decomposer<'a> {
    pub fn new(cloud: &'a PointCloud, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be at least 1".into()));
        }
        let rows: Vec<usize> = (0..cloud.len()).collect();
        let stats = kl_of_rows(cloud, rows.iter().copied()).ok_or(Error::EmptyCloud)?;
        Ok(Self {
            cloud,
            n_max,
            leaves: vec![WorkLeaf {
                rows,
                stats,
                unsplittable: false,
                parent: None,
            }],
            nodes: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn history(&self) -> &[SplitStep] {
        &self.history
    }

    /// Leaf that the next step would work on: largest `|D| * KL(D)` among
    /// splittable leaves, lowest index on ties.
    pub fn selected_leaf(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, leaf) in self.leaves.iter().enumerate() {
            if leaf.unsplittable {
                continue;
            }
            let p = leaf.priority();
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((k, p));
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn step(&mut self) -> Step {
        let Some(k) = self.selected_leaf() else {
            return Step::Exhausted;
        };
        let leaf = &self.leaves[k];
        let Some(best) = best_of_rows(self.cloud, &leaf.rows, &leaf.stats, self.n_max) else {
            self.leaves[k].unsplittable = true;
            return Step::Unsplittable { leaf: k };
        };
        let SplitCandidate { axis, threshold, .. } = best.candidate;
        let leaf = self.leaves.remove(k);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            leaf.rows.iter().partition(|&&r| self.cloud.point(r)[axis] <= threshold);

        let node = self.nodes.len();
        if let Some((p, side)) = leaf.parent {
            match side {
                Side::Left => self.nodes[p].left = Child::Node(node),
                Side::Right => self.nodes[p].right = Child::Node(node),
            }
        }
        self.nodes.push(SplitNode {
            axis,
            threshold,
            gain: best.candidate.gain,
            left: Child::Leaf(usize::MAX),
            right: Child::Leaf(usize::MAX),
        });
        let step = SplitStep {
            leaf: k,
            size: leaf.rows.len(),
            candidate: best.candidate,
        };
        self.leaves.insert(
            k,
            WorkLeaf {
                rows: right_rows,
                stats: best.right,
                unsplittable: false,
                parent: Some((node, Side::Right)),
            },
        );
        self.leaves.insert(
            k,
            WorkLeaf {
                rows: left_rows,
                stats: best.left,
                unsplittable: false,
                parent: Some((node, Side::Left)),
            },
        );
        self.history.push(step);
        Step::Split(step)
    }

    /// The current leaves and tree as a [`Partition`].
    pub fn snapshot(&self, requested: usize) -> Partition {
        let mut nodes = self.nodes.clone();
        let leaves = self
            .leaves
            .iter()
            .enumerate()
            .map(|(k, leaf)| {
                if let Some((p, side)) = leaf.parent {
                    match side {
                        Side::Left => nodes[p].left = Child::Leaf(k),
                        Side::Right => nodes[p].right = Child::Leaf(k),
                    }
                }
                Leaf {
                    point_ids: leaf.rows.iter().map(|&r| self.cloud.ids()[r]).collect(),
                    bbox: leaf.stats.bbox.clone(),
                    unsplittable: leaf.unsplittable,
                    grid: None,
                }
            })
            .collect();
        Partition {
            dims: self.cloud.dims(),
            requested,
            nodes,
            leaves,
        }
    }
}

/// Splits `cloud` into at most `n` leaves.
///
/// Stops early, without error, when every leaf is unsplittable; the returned
/// partition then reports [`Partition::terminated_early`].
pub fn decompose(cloud: &PointCloud, n: usize, n_max: usize) -> Result<Partition> {
    decompose_traced(cloud, n, n_max).map(|(p, _)| p)
}

/// Like [`decompose`], also returning the executed splits in order.
pub fn decompose_traced(cloud: &PointCloud, n: usize, n_max: usize) -> Result<(Partition, Vec<SplitStep>)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 || n > cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} leaves for a cloud of {} points",
            cloud.len()
        )));
    }
    let mut dec = Decomposer::new(cloud, n_max)?;
    while dec.leaf_count() < n {
        if dec.step() == Step::Exhausted {
            break;
        }
    }
    let partition = dec.snapshot(n);
    Ok((partition, dec.history))
}

/// Point-weighted mean KL of the leaves: `sum_i |D_i| / |D| * KL(D_i)`.
pub fn objective(cloud: &PointCloud, partition: &Partition) -> Result<f64> {
    let rows = partition.leaf_rows(cloud)?;
    let total: usize = rows.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::EmptyCloud);
    }
    Ok(rows
        .iter()
        .filter_map(|r| kl_of_rows(cloud, r.iter().copied()))
        .map(|s| s.len as f64 / total as f64 * s.kl)
        .sum())
}
