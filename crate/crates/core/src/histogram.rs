//! Histogram density estimation and KL divergence to the uniform
//! distribution on a cloud's bounding box.

use crate::cloud::{bounding_box_of_rows, BoundingBox, PointCloud};
use crate::error::{Error, Result};

/// Number of histogram cells along each axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSpec {
    bins: Vec<usize>,
}

impl BinSpec {
    pub fn new(bins: Vec<usize>) -> Result<Self> {
        if bins.is_empty() || bins.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "bin counts must be positive, got {bins:?}"
            )));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Total number of cells, saturating at `usize::MAX`.
    pub fn cells(&self) -> usize {
        self.bins.iter().fold(1usize, |acc, &n| acc.saturating_mul(n))
    }
}

/// Point counts per cell, flattened row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub spec: BinSpec,
    pub counts: Vec<u64>,
    pub total: usize,
}

/// Bin counts for a cloud of `m` points spanning `bbox`.
///
/// Axis `i` gets `max(1, floor(m^(1/d) * L_i / g))` cells, where `g` is the
/// geometric mean of the non-degenerate extents. Degenerate axes get one
/// cell. The largest count (lowest axis on ties) is then decremented until
/// the product no longer exceeds `m`.
pub(crate) fn bin_spec_for_box(m: usize, bbox: &BoundingBox) -> BinSpec {
    let d = bbox.dims();
    let Some(g) = bbox.geometric_mean_scale() else {
        return BinSpec { bins: vec![1; d] };
    };
    let root = (m as f64).powf(1.0 / d as f64);
    let mut bins: Vec<usize> = (0..d)
        .map(|i| {
            if bbox.is_degenerate_axis(i) {
                return 1;
            }
            // Relative nudge so that exact products such as 4 * 4 / 2 are not
            // floored to 7 after rounding in the geometric mean.
            let raw = (root * bbox.scale(i) / g * (1.0 + 1e-10)).floor();
            if raw >= m as f64 {
                m.max(1)
            } else {
                (raw as usize).max(1)
            }
        })
        .collect();
    shrink_to_cap(&mut bins, m.max(1));
    BinSpec { bins }
}

/// Decrements the largest entry (lowest index on ties) until the product is
/// at most `cap`. Runs where one entry is strictly largest are taken in a
/// single jump.
fn shrink_to_cap(bins: &mut [usize], cap: usize) {
    let cap = cap as u128;
    let product = |b: &[usize]| b.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128));
    loop {
        let total = product(bins);
        if total <= cap {
            return;
        }
        let mut top = 0;
        for i in 1..bins.len() {
            if bins[i] > bins[top] {
                top = i;
            }
        }
        let second = bins
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, &n)| n)
            .max()
            .unwrap_or(0);
        let others = bins
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .fold(1u128, |acc, (_, &n)| acc.saturating_mul(n as u128));
        let fit = (cap / others) as usize;
        let target = fit.max(second).max(1);
        if target < bins[top] {
            bins[top] = target;
        } else {
            bins[top] -= 1;
        }
    }
}

/// Bin counts for `cloud`, derived from its size and tight bounding box.
pub fn bin_spec_for(cloud: &PointCloud) -> Result<BinSpec> {
    let bbox = crate::cloud::bounding_box(cloud)?;
    Ok(bin_spec_for_box(cloud.len(), &bbox))
}

/// Flat cell index of `point` in the histogram of `bbox` under `spec`.
#[inline]
fn cell_index(point: &[f64], bbox: &BoundingBox, bins: &[usize]) -> usize {
    let mut flat = 0usize;
    for (i, &n) in bins.iter().enumerate() {
        let scale = bbox.scale(i);
        let idx = if n == 1 || scale == 0.0 {
            0
        } else {
            let t = (n as f64 * (point[i] - bbox.lo[i]) / scale).floor();
            if t <= 0.0 {
                0
            } else {
                (t as usize).min(n - 1)
            }
        };
        flat = flat * n + idx;
    }
    flat
}

fn counts_of_rows<I>(cloud: &PointCloud, rows: I, bbox: &BoundingBox, spec: &BinSpec) -> Vec<u64>
where
    I: Iterator<Item = usize>,
{
    let mut counts = vec![0u64; spec.cells()];
    for r in rows {
        counts[cell_index(cloud.point(r), bbox, &spec.bins)] += 1;
    }
    counts
}

fn kl_of_counts(counts: &[u64], total: usize) -> f64 {
    let cells = counts.len() as f64;
    let m = total as f64;
    let kl: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / m;
            p * (p * cells).ln()
        })
        .sum();
    kl.clamp(0.0, cells.ln())
}

/// Histogram of `cloud` over its tight bounding box.
pub fn histogram(cloud: &PointCloud, spec: &BinSpec) -> Result<Histogram> {
    let bbox = crate::cloud::bounding_box(cloud)?;
    check_spec(cloud, spec)?;
    Ok(Histogram {
        spec: spec.clone(),
        counts: counts_of_rows(cloud, 0..cloud.len(), &bbox, spec),
        total: cloud.len(),
    })
}

fn check_spec(cloud: &PointCloud, spec: &BinSpec) -> Result<()> {
    if spec.bins.len() != cloud.dims() {
        return Err(Error::ShapeMismatch(format!(
            "bin spec has {} axes, cloud has {}",
            spec.bins.len(),
            cloud.dims()
        )));
    }
    Ok(())
}

/// KL divergence between the histogram of `cloud` and the uniform
/// distribution over the same cells, with `0 ln 0 = 0`.
///
/// The result lies in `[0, ln(cells)]`.
pub fn kl_to_uniform(cloud: &PointCloud, spec: &BinSpec) -> Result<f64> {
    let h = histogram(cloud, spec)?;
    Ok(kl_of_counts(&h.counts, h.total))
}

/// KL statistics of a subset of rows, each evaluated on the subset's own
/// tight box and derived bin spec.
#[derive(Debug, Clone)]
pub(crate) struct SubsetKl {
    pub kl: f64,
    pub len: usize,
    pub bbox: BoundingBox,
}

pub(crate) fn kl_of_rows<I>(cloud: &PointCloud, rows: I) -> Option<SubsetKl>
where
    I: Iterator<Item = usize> + Clone,
{
    let bbox = bounding_box_of_rows(cloud, rows.clone())?;
    let len = rows.clone().count();
    let spec = bin_spec_for_box(len, &bbox);
    let counts = counts_of_rows(cloud, rows, &bbox, &spec);
    Some(SubsetKl {
        kl: kl_of_counts(&counts, len),
        len,
        bbox,
    })
}
