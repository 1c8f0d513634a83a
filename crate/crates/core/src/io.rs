//! On-disk formats.
//!
//! Clouds, grids and aligned batches are a small JSON manifest next to a raw
//! file of little-endian `f64` values with the same stem and a `.bin`
//! extension. Partitions are a single JSON document.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignedBatch;
use crate::allocation::GridShape;
use crate::cloud::{BoundingBox, PointCloud};
use crate::decomposition::Partition;
use crate::error::{Error, Result};
use crate::interpolation::SubdomainGrid;

pub const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudManifest {
    pub dims: usize,
    pub count: usize,
    pub channels: usize,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub shape: Vec<usize>,
    pub channels: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub samples: usize,
    pub leaves: usize,
    pub channels: usize,
    pub shape: Vec<usize>,
    pub dtype: String,
}

/// An exported stack of aligned batches as read back from disk, ordered
/// sample, leaf, channel, row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTensor {
    pub manifest: BatchManifest,
    pub data: Vec<f64>,
}

impl AlignedTensor {
    pub fn sample(&self, j: usize) -> &[f64] {
        let n = self.manifest.leaves * self.manifest.channels * self.manifest.shape.iter().product::<usize>();
        &self.data[j * n..(j + 1) * n]
    }
}

/// Raw-value file belonging to a manifest.
pub fn binary_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn check_manifest_path(path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        return Err(Error::InvalidArgument(format!(
            "{} is a raw value file; pass the JSON manifest",
            path.display()
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_f64s<'a>(path: &Path, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {} values",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn check_dtype(path: &Path, dtype: &str) -> Result<()> {
    if dtype != DTYPE {
        return Err(Error::Format(format!(
            "{}: unsupported dtype {dtype:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes a cloud as coordinates then channel values per point. Point ids
/// are not stored: on reading, ids are the row order.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    check_manifest_path(path)?;
    let (d, c) = (cloud.dims(), cloud.channels());
    let mut row = Vec::with_capacity(cloud.len() * (d + c));
    for r in 0..cloud.len() {
        row.extend_from_slice(cloud.point(r));
        if let Some(v) = cloud.values() {
            row.extend(v.row(r).iter());
        }
    }
    write_f64s(&binary_path(path), &row)?;
    write_json(
        path,
        &CloudManifest {
            dims: d,
            count: cloud.len(),
            channels: c,
            dtype: DTYPE.into(),
        },
    )
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    check_manifest_path(path)?;
    let m: CloudManifest = read_json(path)?;
    check_dtype(path, &m.dtype)?;
    if m.dims == 0 {
        return Err(Error::Format(format!("{}: zero dimensions", path.display())));
    }
    let width = m.dims + m.channels;
    let raw = read_f64s(&binary_path(path), m.count * width)?;
    let mut coords = Vec::with_capacity(m.count * m.dims);
    let mut values = Vec::with_capacity(m.count * m.channels);
    for row in raw.chunks_exact(width) {
        coords.extend_from_slice(&row[..m.dims]);
        values.extend_from_slice(&row[m.dims..]);
    }
    let cloud = PointCloud::from_flat(m.dims, coords)?;
    if m.channels == 0 {
        return Ok(cloud);
    }
    let values = Array2::from_shape_vec((m.count, m.channels), values).map_err(|e| Error::Format(e.to_string()))?;
    cloud.with_values(values)
}

pub fn write_grid(path: &Path, grid: &SubdomainGrid) -> Result<()> {
    check_manifest_path(path)?;
    write_f64s(&binary_path(path), &grid.values)?;
    write_json(
        path,
        &GridManifest {
            shape: grid.shape.dims.clone(),
            channels: grid.channels,
            bbox: grid.shape.bbox.clone(),
            dtype: DTYPE.into(),
        },
    )
}

pub fn read_grid(path: &Path) -> Result<SubdomainGrid> {
    check_manifest_path(path)?;
    let m: GridManifest = read_json(path)?;
    check_dtype(path, &m.dtype)?;
    let shape = GridShape::new(m.shape, m.bbox)?;
    let values = read_f64s(&binary_path(path), shape.node_count() * m.channels)?;
    SubdomainGrid::new(shape, m.channels, values)
}

pub fn write_partition(path: &Path, partition: &Partition) -> Result<()> {
    write_json(path, partition)
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    let p: Partition = read_json(path)?;
    p.check_structure()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(p)
}

/// Writes aligned batches of several samples as one tensor. All batches
/// must agree on leaves, channels and shape.
pub fn write_aligned(path: &Path, batches: &[AlignedBatch]) -> Result<BatchManifest> {
    check_manifest_path(path)?;
    let first = batches
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples to export".into()))?;
    for (j, b) in batches.iter().enumerate() {
        if b.leaves() != first.leaves() || b.channels != first.channels || b.shape != first.shape {
            return Err(Error::ShapeMismatch(format!(
                "sample {j} differs in layout from sample 0"
            )));
        }
    }
    write_f64s(&binary_path(path), batches.iter().flat_map(|b| &b.data))?;
    let manifest = BatchManifest {
        samples: batches.len(),
        leaves: first.leaves(),
        channels: first.channels,
        shape: first.shape.clone(),
        dtype: DTYPE.into(),
    };
    write_json(path, &manifest)?;
    Ok(manifest)
}

pub fn read_aligned(path: &Path) -> Result<AlignedTensor> {
    check_manifest_path(path)?;
    let m: BatchManifest = read_json(path)?;
    check_dtype(path, &m.dtype)?;
    let n = m.samples * m.leaves * m.channels * m.shape.iter().product::<usize>();
    let data = read_f64s(&binary_path(path), n)?;
    Ok(AlignedTensor { manifest: m, data })
}
