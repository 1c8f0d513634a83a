//! Benchmark harness: round-trip interpolation error against the grid
//! budget, and decomposition time against cloud size.
//!
//! CSV schemas (header row included):
//!
//! - round trip: `ratio,method,error,seconds` with `method` one of
//!   `global` (a single grid over the whole cloud) or `subdomain`
//! - scaling: `m,dims,leaves,seconds`
//!
//! `seconds` is the median wall time of the repeats on a monotonic clock.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::allocation::allocate_shapes;
use crate::cloud::PointCloud;
use crate::decomposition::{decompose, Partition, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::interpolation::{grid_to_points, l2_relative_error, scatter_to_grid};
use crate::synth::five_cluster_mixture;

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripRow {
    pub ratio: f64,
    pub method: String,
    pub error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: usize,
    pub dims: usize,
    pub leaves: usize,
    pub seconds: f64,
}

/// Values of `cloud` after forward then backward interpolation through the
/// leaf grids of `partition` at the given oversampling ratio, in row order.
pub fn roundtrip_values(cloud: &PointCloud, partition: &Partition, ratio: f64) -> Result<Array2<f64>> {
    let c = cloud.channels();
    if c == 0 {
        return Err(Error::MissingValues);
    }
    let shapes = allocate_shapes(partition, ratio)?;
    let rows = partition.leaf_rows(cloud)?;
    let mut out = Array2::zeros((cloud.len(), c));
    for (leaf_rows, shape) in rows.iter().zip(&shapes) {
        let sub = cloud.select(leaf_rows);
        let grid = scatter_to_grid(&sub, shape)?;
        let back = grid_to_points(&grid, &sub)?;
        for (i, &r) in leaf_rows.iter().enumerate() {
            out.row_mut(r).assign(&back.row(i));
        }
    }
    Ok(out)
}

/// Relative L2 round-trip error of one cloud.
pub fn roundtrip_error(cloud: &PointCloud, partition: &Partition, ratio: f64) -> Result<f64> {
    let pred = roundtrip_values(cloud, partition, ratio)?;
    let truth = cloud.values().ok_or(Error::MissingValues)?.clone();
    l2_relative_error(&[truth], &[pred])
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        last = Some(f()?);
        times.push(t.elapsed().as_secs_f64());
    }
    Ok((last.expect("at least one repeat"), median(times)))
}

/// Round-trip error of a single global grid and of the `n`-leaf
/// decomposition at every ratio. The decomposition is computed once and is
/// not part of the timing.
pub fn bench_roundtrip(cloud: &PointCloud, n: usize, ratios: &[f64], repeats: usize) -> Result<Vec<RoundtripRow>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let global = Partition::identity(cloud)?;
    let sub = decompose(cloud, n, DEFAULT_N_MAX)?;
    let mut rows = Vec::with_capacity(2 * ratios.len());
    for &ratio in ratios {
        for (method, p) in [("global", &global), ("subdomain", &sub)] {
            let (error, seconds) = timed(repeats, || roundtrip_error(cloud, p, ratio))?;
            rows.push(RoundtripRow {
                ratio,
                method: method.into(),
                error,
                seconds,
            });
        }
    }
    Ok(rows)
}

/// Times `decompose(cloud, n)` on seeded five-cluster clouds of each size,
/// on a single worker thread.
pub fn bench_decompose_scaling(
    d: usize,
    n: usize,
    sizes: &[usize],
    seed: u64,
    repeats: usize,
) -> Result<Vec<ScalingRow>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("sizes must be ascending".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    sizes
        .iter()
        .map(|&m| {
            let cloud = five_cluster_mixture(seed, d, m, 0.1)?;
            let (p, seconds) = pool.install(|| timed(repeats, || decompose(&cloud, n, DEFAULT_N_MAX)))?;
            Ok(ScalingRow {
                m,
                dims: d,
                leaves: p.len(),
                seconds,
            })
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_roundtrip_csv<R: std::io::Read>(input: R) -> Result<Vec<RoundtripRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn read_scaling_csv<R: std::io::Read>(input: R) -> Result<Vec<ScalingRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
