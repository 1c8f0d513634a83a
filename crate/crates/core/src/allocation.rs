//! Grid shapes for the leaves of a partition.

use serde::{Deserialize, Serialize};

use crate::cloud::BoundingBox;
use crate::decomposition::Partition;
use crate::error::{Error, Result};

/// Node counts of a uniform grid spanning `bbox`.
///
/// Non-degenerate axes carry at least two nodes; degenerate axes carry
/// exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub dims: Vec<usize>,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl GridShape {
    pub fn new(dims: Vec<usize>, bbox: BoundingBox) -> Result<Self> {
        if dims.len() != bbox.dims() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} axes, box has {}",
                dims.len(),
                bbox.dims()
            )));
        }
        for (i, &n) in dims.iter().enumerate() {
            let ok = if bbox.is_degenerate_axis(i) { n == 1 } else { n >= 2 };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "axis {i} of extent {} cannot carry {n} nodes",
                    bbox.scale(i)
                )));
            }
        }
        Ok(Self { dims, bbox })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Coordinate of node `j` on `axis`. Nodes include both box faces.
    #[inline]
    pub fn node_coord(&self, axis: usize, j: usize) -> f64 {
        let n = self.dims[axis];
        if n == 1 {
            self.bbox.lo[axis]
        } else if j == n - 1 {
            self.bbox.hi[axis]
        } else {
            self.bbox.lo[axis] + j as f64 * self.bbox.scale(axis) / (n - 1) as f64
        }
    }

    /// Spacing between neighbouring nodes on `axis`, 0 on degenerate axes.
    pub fn spacing(&self, axis: usize) -> f64 {
        let n = self.dims[axis];
        if n == 1 {
            0.0
        } else {
            self.bbox.scale(axis) / (n - 1) as f64
        }
    }

    /// Coordinates of the node with flat index `flat` (axis 0 slowest).
    pub fn node_position(&self, mut flat: usize, out: &mut [f64]) {
        for axis in (0..self.ndim()).rev() {
            let n = self.dims[axis];
            out[axis] = self.node_coord(axis, flat % n);
            flat /= n;
        }
    }
}

/// Uniform grid shapes for every leaf of `partition`.
///
/// The total node budget is `S = round(ratio * m)`. Leaf `k` targets
/// `s_k = S * |D_k| / m` nodes, distributed over its non-degenerate axes in
/// proportion to the box extents; every such axis keeps at least two nodes.
/// Rounding is to nearest, ties to even.
pub fn allocate_shapes(partition: &Partition, oversampling_ratio: f64) -> Result<Vec<GridShape>> {
    if !(oversampling_ratio > 0.0) || !oversampling_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "oversampling ratio must be positive, got {oversampling_ratio}"
        )));
    }
    let m = partition.point_count();
    if m == 0 {
        return Err(Error::EmptyCloud);
    }
    let budget = (oversampling_ratio * m as f64).round_ties_even();
    partition
        .leaves
        .iter()
        .map(|leaf| {
            let target = budget * leaf.point_ids.len() as f64 / m as f64;
            GridShape::new(shape_for_box(target, &leaf.bbox), leaf.bbox.clone())
        })
        .collect()
}

fn shape_for_box(target: f64, bbox: &BoundingBox) -> Vec<usize> {
    let axes = bbox.non_degenerate_axes();
    let Some(g) = bbox.geometric_mean_scale() else {
        return vec![1; bbox.dims()];
    };
    let root = target.powf(1.0 / axes.len() as f64);
    (0..bbox.dims())
        .map(|i| {
            if bbox.is_degenerate_axis(i) {
                1
            } else {
                ((root * bbox.scale(i) / g).round_ties_even() as usize).max(2)
            }
        })
        .collect()
}

/// Writes the shapes into the partition's leaves.
pub fn annotate(partition: &mut Partition, shapes: &[GridShape]) -> Result<()> {
    if shapes.len() != partition.leaves.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} shapes for {} leaves",
            shapes.len(),
            partition.leaves.len()
        )));
    }
    for (leaf, shape) in partition.leaves.iter_mut().zip(shapes) {
        leaf.grid = Some(shape.dims.clone());
    }
    Ok(())
}

/// Shapes previously stored with [`annotate`].
pub fn stored_shapes(partition: &Partition) -> Result<Vec<GridShape>> {
    partition
        .leaves
        .iter()
        .enumerate()
        .map(|(k, leaf)| {
            let dims = leaf
                .grid
                .clone()
                .ok_or_else(|| Error::Format(format!("leaf {k} has no grid shape; allocate first")))?;
            GridShape::new(dims, leaf.bbox.clone())
        })
        .collect()
}
