//! Point clouds and axis-aligned bounding boxes.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An unordered set of `m` points in `d` dimensions, optionally carrying `C`
/// channel values per point.
///
/// Every point has a stable integer id. Clouds read from disk use the
/// manifest order as id; sub-clouds produced by splitting keep the ids of the
/// cloud they came from, so a partition can always be mapped back.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
    values: Option<Array2<f64>>,
    ids: Vec<usize>,
}

impl PointCloud {
    /// Builds a cloud from an `m x d` coordinate matrix. Ids are `0..m`.
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(Error::InvalidArgument("point dimension must be positive".into()));
        }
        if coords.nrows() == 0 {
            return Err(Error::EmptyCloud);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coordinates must be finite".into()));
        }
        let ids = (0..coords.nrows()).collect();
        Ok(Self {
            coords: coords.as_standard_layout().into_owned(),
            values: None,
            ids,
        })
    }

    /// Builds a cloud from row-major flat coordinates.
    pub fn from_flat(dims: usize, coords: Vec<f64>) -> Result<Self> {
        if dims == 0 || !coords.len().is_multiple_of(dims) {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form rows of length {dims}",
                coords.len()
            )));
        }
        let m = coords.len() / dims;
        let coords = Array2::from_shape_vec((m, dims), coords).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(coords)
    }

    /// Attaches an `m x C` matrix of channel values.
    pub fn with_values(mut self, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "values have {} rows, cloud has {} points",
                values.nrows(),
                self.len()
            )));
        }
        self.values = Some(values.as_standard_layout().into_owned());
        Ok(self)
    }

    /// Replaces the point ids. Ids must be unique.
    pub fn with_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} points",
                ids.len(),
                self.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidArgument(format!("duplicate point id {dup}")));
        }
        self.ids = ids;
        Ok(self)
    }

    /// Drops the channel values.
    pub fn without_values(mut self) -> Self {
        self.values = None;
        self
    }

    pub fn dims(&self) -> usize {
        self.coords.ncols()
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// Number of value channels, 0 when the cloud carries no values.
    pub fn channels(&self) -> usize {
        self.values.as_ref().map_or(0, |v| v.ncols())
    }

    pub fn coords(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }

    pub fn values(&self) -> Option<&Array2<f64>> {
        self.values.as_ref()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Coordinates of the point in row `row`.
    #[inline]
    pub fn point(&self, row: usize) -> &[f64] {
        let d = self.dims();
        &self.coords.as_slice().expect("standard layout")[row * d..(row + 1) * d]
    }

    /// Row-major flat view of all coordinates.
    pub fn flat_coords(&self) -> &[f64] {
        self.coords.as_slice().expect("standard layout")
    }

    /// Sub-cloud made of the given rows, in the given order. Ids and values
    /// follow the rows. The result may be empty.
    pub fn select(&self, rows: &[usize]) -> PointCloud {
        PointCloud {
            coords: self.coords.select(Axis(0), rows),
            values: self.values.as_ref().map(|v| v.select(Axis(0), rows)),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }

    /// Concatenates clouds of equal dimension and channel count. Ids must be
    /// unique across the inputs.
    pub fn union(clouds: &[PointCloud]) -> Result<PointCloud> {
        let ids: Vec<usize> = clouds.iter().flat_map(|c| c.ids.iter().copied()).collect();
        Self::concat(clouds)?.with_ids(ids)
    }

    /// Concatenates clouds and renumbers ids `0..total`. Used to build one
    /// decomposition for a family of mildly varying geometries.
    pub fn stack(clouds: &[PointCloud]) -> Result<PointCloud> {
        Self::concat(clouds)
    }

    fn concat(clouds: &[PointCloud]) -> Result<PointCloud> {
        let first = clouds.first().ok_or(Error::EmptyCloud)?;
        let d = first.dims();
        let c = first.channels();
        let has_values = first.values.is_some();
        for cloud in clouds {
            if cloud.dims() != d || cloud.channels() != c || cloud.values.is_some() != has_values {
                return Err(Error::ShapeMismatch(
                    "clouds differ in dimension or channel count".into(),
                ));
            }
        }
        let views: Vec<_> = clouds.iter().map(|c| c.coords.view()).collect();
        let coords = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let mut out = PointCloud::new(coords)?;
        if has_values {
            let views: Vec<_> = clouds
                .iter()
                .map(|c| c.values.as_ref().expect("checked").view())
                .collect();
            let values = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            out = out.with_values(values)?;
        }
        Ok(out)
    }

    /// Lookup from point id to row index.
    pub fn id_index(&self) -> IdIndex {
        if self.ids.iter().enumerate().all(|(r, &id)| r == id) {
            IdIndex::Identity(self.ids.len())
        } else {
            IdIndex::Map(self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect())
        }
    }
}

/// Maps point ids to rows of a cloud.
#[derive(Debug, Clone)]
pub enum IdIndex {
    /// Ids are exactly `0..len` in row order.
    Identity(usize),
    Map(std::collections::HashMap<usize, usize>),
}

impl IdIndex {
    pub fn row(&self, id: usize) -> Option<usize> {
        match self {
            IdIndex::Identity(len) => (id < *len).then_some(id),
            IdIndex::Map(map) => map.get(&id).copied(),
        }
    }
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
///
/// `lo[i] == hi[i]` is allowed and marks a degenerate axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "box corners have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidArgument("box requires finite lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// Extent `hi - lo` along `axis`.
    #[inline]
    pub fn scale(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn is_degenerate_axis(&self, axis: usize) -> bool {
        self.hi[axis] == self.lo[axis]
    }

    /// True when every axis has zero extent.
    pub fn is_degenerate(&self) -> bool {
        (0..self.dims()).all(|i| self.is_degenerate_axis(i))
    }

    pub fn non_degenerate_axes(&self) -> Vec<usize> {
        (0..self.dims()).filter(|&i| !self.is_degenerate_axis(i)).collect()
    }

    /// Axis of largest extent, lowest index on ties.
    pub fn largest_axis(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dims() {
            if self.scale(i) > self.scale(best) {
                best = i;
            }
        }
        best
    }

    /// Geometric mean of the non-degenerate extents, `None` for a point box.
    pub fn geometric_mean_scale(&self) -> Option<f64> {
        let axes = self.non_degenerate_axes();
        if axes.is_empty() {
            return None;
        }
        let log_sum: f64 = axes.iter().map(|&i| self.scale(i).ln()).sum();
        Some((log_sum / axes.len() as f64).exp())
    }

    /// Euclidean length of the diagonal.
    pub fn diameter(&self) -> f64 {
        (0..self.dims()).map(|i| self.scale(i).powi(2)).sum::<f64>().sqrt()
    }

    /// Absolute slack used when testing membership with relative tolerance
    /// `rel`. Falls back to coordinate magnitude for degenerate boxes.
    pub fn slack(&self, rel: f64) -> f64 {
        let magnitude = self
            .lo
            .iter()
            .chain(&self.hi)
            .fold(self.diameter(), |acc, v| acc.max(v.abs()));
        rel * magnitude.max(f64::MIN_POSITIVE)
    }

    pub fn contains(&self, point: &[f64], slack: f64) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(i, &x)| x >= self.lo[i] - slack && x <= self.hi[i] + slack)
    }

    /// True when `other` lies inside `self`, coordinate-wise.
    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        (0..self.dims()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }
}

/// Tight bounding box of the given rows of `cloud`, `None` for no rows.
pub(crate) fn bounding_box_of_rows<I>(cloud: &PointCloud, rows: I) -> Option<BoundingBox>
where
    I: IntoIterator<Item = usize>,
{
    let d = cloud.dims();
    let mut rows = rows.into_iter();
    let first = rows.next()?;
    let mut lo = cloud.point(first).to_vec();
    let mut hi = lo.clone();
    for r in rows {
        for (i, &x) in cloud.point(r).iter().enumerate().take(d) {
            if x < lo[i] {
                lo[i] = x;
            }
            if x > hi[i] {
                hi[i] = x;
            }
        }
    }
    Some(BoundingBox { lo, hi })
}

/// Smallest axis-aligned box containing every point of `cloud`.
pub fn bounding_box(cloud: &PointCloud) -> Result<BoundingBox> {
    bounding_box_of_rows(cloud, 0..cloud.len()).ok_or(Error::EmptyCloud)
}

/// Splits `cloud` by the hyperplane `x[axis] = threshold`.
///
/// The first cloud holds the points with `x[axis] <= threshold`, the second
/// those with `x[axis] > threshold`. Either side may be empty.
pub fn split_cloud(cloud: &PointCloud, axis: usize, threshold: f64) -> Result<(PointCloud, PointCloud)> {
    if axis >= cloud.dims() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for {}-dimensional cloud",
            cloud.dims()
        )));
    }
    let (left, right): (Vec<usize>, Vec<usize>) = (0..cloud.len()).partition(|&r| cloud.point(r)[axis] <= threshold);
    Ok((cloud.select(&left), cloud.select(&right)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        let d = rows[0].len();
        PointCloud::from_flat(d, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn box_of_two_points() {
        let b = bounding_box(&cloud(&[&[0.0, 0.0], &[1.0, 2.0]])).unwrap();
        assert_eq!(b.lo, vec![0.0, 0.0]);
        assert_eq!(b.hi, vec![1.0, 2.0]);
    }

    #[test]
    fn box_of_single_point_is_degenerate() {
        let b = bounding_box(&cloud(&[&[3.0, 3.0, 3.0]])).unwrap();
        assert_eq!(b.lo, b.hi);
        assert!(b.is_degenerate());
        assert_eq!(b.lo, vec![3.0; 3]);
    }

    #[test]
    fn box_takes_coordinate_extrema() {
        let b = bounding_box(&cloud(&[&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5]])).unwrap();
        assert_eq!(b.lo, vec![0.0, 0.0]);
        assert_eq!(b.hi, vec![1.0, 1.0]);
    }

    #[test]
    fn empty_cloud_has_no_box() {
        let c = cloud(&[&[1.0]]);
        let (empty, _) = split_cloud(&c, 0, 0.0).unwrap();
        let err = bounding_box(&empty).unwrap_err();
        assert_eq!(err.to_string(), "empty point cloud");
    }

    #[test]
    fn split_1d() {
        let c = cloud(&[&[0.0], &[0.4], &[0.6], &[1.0]]);
        let (l, r) = split_cloud(&c, 0, 0.5).unwrap();
        assert_eq!(l.flat_coords(), &[0.0, 0.4]);
        assert_eq!(r.flat_coords(), &[0.6, 1.0]);
        assert_eq!(l.ids(), &[0, 1]);
        assert_eq!(r.ids(), &[2, 3]);
    }

    #[test]
    fn split_below_all_points() {
        let c = cloud(&[&[0.0], &[1.0]]);
        let (l, r) = split_cloud(&c, 0, -1.0).unwrap();
        assert!(l.is_empty());
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn split_tie_goes_left() {
        let c = cloud(&[&[0.5]]);
        let (l, r) = split_cloud(&c, 0, 0.5).unwrap();
        assert_eq!(l.len(), 1);
        assert!(r.is_empty());
    }

    #[test]
    fn split_rejects_bad_axis() {
        let c = cloud(&[&[0.5, 0.1]]);
        assert!(split_cloud(&c, 2, 0.0).is_err());
    }

    #[test]
    fn ids_must_be_unique() {
        let c = cloud(&[&[0.0], &[1.0]]);
        assert!(c.clone().with_ids(vec![4, 4]).is_err());
        assert_eq!(c.with_ids(vec![9, 4]).unwrap().ids(), &[9, 4]);
    }

    #[test]
    fn values_must_match_rows() {
        let c = cloud(&[&[0.0], &[1.0]]);
        assert!(c.clone().with_values(array![[1.0]]).is_err());
        let c = c.with_values(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(c.channels(), 2);
        let (l, r) = split_cloud(&c, 0, 0.5).unwrap();
        assert_eq!(l.values().unwrap(), &array![[1.0, 2.0]]);
        assert_eq!(r.values().unwrap(), &array![[3.0, 4.0]]);
    }

    #[test]
    fn union_keeps_ids_and_stack_renumbers() {
        let a = cloud(&[&[0.0], &[1.0]]);
        let b = cloud(&[&[2.0]]).with_ids(vec![7]).unwrap();
        let u = PointCloud::union(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(u.ids(), &[0, 1, 7]);
        assert!(PointCloud::union(&[a.clone(), a.clone()]).is_err());
        let s = PointCloud::stack(&[a.clone(), a]).unwrap();
        assert_eq!(s.ids(), &[0, 1, 2, 3]);
    }

    #[test]
    fn largest_axis_prefers_lowest_index_on_ties() {
        let b = BoundingBox::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(b.largest_axis(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_cloud() -> impl Strategy<Value = PointCloud> {
            (1usize..=3).prop_flat_map(|d| {
                prop::collection::vec(-10.0f64..10.0, d..=d * 60).prop_map(move |mut v| {
                    v.truncate(v.len() / d * d);
                    PointCloud::from_flat(d, v).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn split_is_a_partition(c in arb_cloud(), t in -12.0f64..12.0, axis_seed in 0usize..3) {
                let axis = axis_seed % c.dims();
                let (l, r) = split_cloud(&c, axis, t).unwrap();
                prop_assert_eq!(l.len() + r.len(), c.len());
                let mut ids: Vec<usize> = l.ids().iter().chain(r.ids()).copied().collect();
                ids.sort_unstable();
                prop_assert_eq!(ids, (0..c.len()).collect::<Vec<_>>());
                let parent = bounding_box(&c).unwrap();
                for side in [&l, &r] {
                    if let Ok(b) = bounding_box(side) {
                        prop_assert!(parent.contains_box(&b));
                    }
                }
            }

            #[test]
            fn split_is_deterministic(c in arb_cloud(), t in -12.0f64..12.0) {
                let a = split_cloud(&c, 0, t).unwrap();
                let b = split_cloud(&c, 0, t).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
