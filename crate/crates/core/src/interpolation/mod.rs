//! Moving values between point clouds and uniform grids.
//!
//! Forward interpolation ([`scatter_to_grid`]) uses k-nearest-neighbour
//! inverse-distance weighting. Backward interpolation ([`grid_to_points`]) is
//! multilinear, hence linear in the grid values.

mod knn;

use ndarray::Array2;
use rayon::prelude::*;

use crate::allocation::GridShape;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

pub use knn::KnnIndex;

/// Neighbours used per grid node by [`scatter_to_grid`].
pub const IDW_NEIGHBORS: usize = 8;

/// Relative distance below which a node copies its nearest point's value.
pub const EXACT_MATCH_REL: f64 = 1e-12;

/// Relative tolerance for points or queries outside a grid box.
pub const BOX_TOLERANCE_REL: f64 = 1e-9;

/// Default KDE bandwidth and grid resolution for shape featurization.
pub const KDE_BANDWIDTH: f64 = 0.05;
pub const KDE_GRID_NODES: usize = 32;

/// Values on a uniform grid, `node_count x channels`, node-major with axis 0
/// slowest and channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainGrid {
    pub shape: GridShape,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl SubdomainGrid {
    pub fn new(shape: GridShape, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.node_count() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes x {channels} channels",
                values.len(),
                shape.node_count()
            )));
        }
        Ok(Self {
            shape,
            channels,
            values,
        })
    }

    pub fn zeros(shape: GridShape, channels: usize) -> Self {
        let n = shape.node_count() * channels;
        Self {
            shape,
            channels,
            values: vec![0.0; n],
        }
    }

    /// Grid sampling `f` at every node.
    pub fn from_fn<F>(shape: GridShape, channels: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]),
    {
        let mut values = vec![0.0; shape.node_count() * channels];
        let mut pos = vec![0.0; shape.ndim()];
        for (node, out) in values.chunks_mut(channels.max(1)).enumerate() {
            shape.node_position(node, &mut pos);
            f(&pos, out);
        }
        Self {
            shape,
            channels,
            values,
        }
    }

    pub fn node_values(&self, node: usize) -> &[f64] {
        &self.values[node * self.channels..(node + 1) * self.channels]
    }
}

/// Inverse-distance-weighted (power 2) average of the `min(8, m)` nearest
/// points at every grid node. A node closer than `1e-12 * diam(box)` to its
/// nearest point copies that point's value.
///
/// Points must lie in `shape.bbox` up to a relative tolerance of `1e-9`.
pub fn scatter_to_grid(cloud: &PointCloud, shape: &GridShape) -> Result<SubdomainGrid> {
    let values = cloud.values().ok_or(Error::MissingValues)?;
    let channels = values.ncols();
    if channels == 0 {
        return Err(Error::MissingValues);
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    check_dims(cloud.dims(), shape)?;
    let slack = shape.bbox.slack(BOX_TOLERANCE_REL);
    if let Some(r) = (0..cloud.len()).find(|&r| !shape.bbox.contains(cloud.point(r), slack)) {
        return Err(Error::OutsideBox { id: cloud.ids()[r] });
    }
    let values = values.as_slice().expect("standard layout");
    let index = KnnIndex::build(cloud);
    let k = IDW_NEIGHBORS.min(cloud.len());
    let exact = EXACT_MATCH_REL * shape.bbox.diameter();
    let exact2 = exact * exact;

    let mut out = vec![0.0; shape.node_count() * channels];
    out.par_chunks_mut(channels).enumerate().for_each_init(
        || vec![0.0; shape.ndim()],
        |pos, (node, slot)| {
            shape.node_position(node, pos);
            let nbrs = index.nearest(pos, k);
            let (d2, nearest) = nbrs[0];
            if d2 <= exact2 {
                slot.copy_from_slice(&values[nearest * channels..(nearest + 1) * channels]);
                return;
            }
            // weighted mean written as an offset from the nearest value,
            // so constant fields come back bit for bit
            let base = &values[nearest * channels..(nearest + 1) * channels];
            let mut wsum = 0.0;
            for &(d2, r) in &nbrs {
                let w = 1.0 / d2;
                wsum += w;
                let v = &values[r * channels..(r + 1) * channels];
                for ((o, v), b) in slot.iter_mut().zip(v).zip(base) {
                    *o += w * (v - b);
                }
            }
            for (o, b) in slot.iter_mut().zip(base) {
                *o = b + *o / wsum;
            }
        },
    );
    SubdomainGrid::new(shape.clone(), channels, out)
}

fn check_dims(dims: usize, shape: &GridShape) -> Result<()> {
    if dims != shape.ndim() {
        return Err(Error::ShapeMismatch(format!(
            "{dims}-dimensional points against a {}-dimensional grid",
            shape.ndim()
        )));
    }
    Ok(())
}

/// Enclosing cell of a (clamped) query: per-axis lower node index and
/// fractional offset, over axes with at least two nodes.
struct Stencil {
    axes: Vec<(usize, usize, f64)>,
    base: usize,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn stencil(shape: &GridShape, strides: &[usize], q: &[f64]) -> Stencil {
    let mut axes = Vec::with_capacity(shape.ndim());
    let mut base = 0;
    for (i, &n) in shape.dims.iter().enumerate() {
        if n < 2 {
            continue;
        }
        let lo = shape.bbox.lo[i];
        let hi = shape.bbox.hi[i];
        let x = q[i].clamp(lo, hi);
        let t = (x - lo) / (hi - lo) * (n - 1) as f64;
        let j = (t.floor() as usize).min(n - 2);
        base += j * strides[i];
        axes.push((i, strides[i], t - j as f64));
    }
    Stencil { axes, base }
}

/// Visits the `2^d'` corners of a stencil with their multilinear weights.
fn for_each_corner(st: &Stencil, mut f: impl FnMut(usize, f64)) {
    let corners = 1usize << st.axes.len();
    for mask in 0..corners {
        let mut w = 1.0;
        let mut node = st.base;
        for (bit, &(_, stride, frac)) in st.axes.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                w *= frac;
                node += stride;
            } else {
                w *= 1.0 - frac;
            }
        }
        f(node, w);
    }
}

/// Multilinear interpolation of `grid` at every point of `queries`.
///
/// Queries outside the box are clamped to its faces. Returns an
/// `m x channels` matrix.
pub fn grid_to_points(grid: &SubdomainGrid, queries: &PointCloud) -> Result<Array2<f64>> {
    check_dims(queries.dims(), &grid.shape)?;
    let c = grid.channels;
    let st = strides(&grid.shape.dims);
    let mut out = Array2::zeros((queries.len(), c));
    let flat = out.as_slice_mut().expect("standard layout");
    flat.par_chunks_mut(c.max(1))
        .enumerate()
        .for_each_init(Vec::new, |corners, (r, slot)| {
            let s = stencil(&grid.shape, &st, queries.point(r));
            for (ch, o) in slot.iter_mut().enumerate() {
                *o = nested_lerp(grid, &s, ch, corners);
            }
        });
    Ok(out)
}

/// Multilinear value of one channel as nested `a + t * (b - a)` along each
/// stencil axis. Same weights as [`for_each_corner`], but a constant grid
/// yields its constant exactly.
fn nested_lerp(grid: &SubdomainGrid, st: &Stencil, channel: usize, corners: &mut Vec<f64>) -> f64 {
    corners.clear();
    for mask in 0..1usize << st.axes.len() {
        let node = st
            .axes
            .iter()
            .enumerate()
            .filter(|&(bit, _)| mask >> bit & 1 == 1)
            .fold(st.base, |n, (_, &(_, stride, _))| n + stride);
        corners.push(grid.values[node * grid.channels + channel]);
    }
    for &(_, _, frac) in &st.axes {
        let half = corners.len() / 2;
        for i in 0..half {
            let (a, b) = (corners[2 * i], corners[2 * i + 1]);
            corners[i] = a + frac * (b - a);
        }
        corners.truncate(half);
    }
    corners[0]
}

/// Upper bound on the spectral norm of the backward map from grid values to
/// the query points: `sqrt(max column sum * max row sum)` of its
/// non-negative weight matrix. Row sums are 1.
pub fn backward_norm_bound(shape: &GridShape, queries: &PointCloud) -> Result<f64> {
    check_dims(queries.dims(), shape)?;
    let st = strides(&shape.dims);
    let mut column = vec![0.0; shape.node_count()];
    for r in 0..queries.len() {
        let s = stencil(shape, &st, queries.point(r));
        for_each_corner(&s, |node, w| column[node] += w);
    }
    let max_col = column.iter().copied().fold(0.0, f64::max);
    Ok(max_col.sqrt())
}

/// Mean over samples of `sqrt(sum (u - u_hat)^2 / sum u^2)`, with sums over
/// all points and channels of a sample.
pub fn l2_relative_error(truth: &[Array2<f64>], pred: &[Array2<f64>]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference samples, {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut total = 0.0;
    for (j, (u, p)) in truth.iter().zip(pred).enumerate() {
        if u.dim() != p.dim() {
            return Err(Error::ShapeMismatch(format!(
                "sample {j}: reference {:?}, prediction {:?}",
                u.dim(),
                p.dim()
            )));
        }
        let norm: f64 = u.iter().map(|v| v * v).sum();
        if norm == 0.0 {
            return Err(Error::ZeroNormReference { sample: j });
        }
        let resid: f64 = u.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
        total += (resid / norm).sqrt();
    }
    Ok(total / truth.len() as f64)
}

/// Gaussian kernel density estimate of the cloud evaluated at every node of
/// `shape`, as a single-channel grid.
pub fn gaussian_kde_grid(cloud: &PointCloud, bandwidth: f64, shape: &GridShape) -> Result<SubdomainGrid> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    check_dims(cloud.dims(), shape)?;
    let d = cloud.dims() as f64;
    let norm = (2.0 * std::f64::consts::PI * bandwidth * bandwidth).powf(d / 2.0);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let m = cloud.len() as f64;
    let mut values = vec![0.0; shape.node_count()];
    values.par_iter_mut().enumerate().for_each_init(
        || vec![0.0; shape.ndim()],
        |pos, (node, out)| {
            shape.node_position(node, pos);
            let s: f64 = (0..cloud.len())
                .map(|r| {
                    let d2: f64 = cloud
                        .point(r)
                        .iter()
                        .zip(pos.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (-d2 * inv).exp()
                })
                .sum();
            *out = s / m / norm;
        },
    );
    SubdomainGrid::new(shape.clone(), 1, values)
}
