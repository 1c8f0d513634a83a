//! Point clouds to aligned grids, through a grid operator, and back.
//!
//! [`run_pipeline`] scatters a sample's input values onto the leaf grids,
//! aligns them, applies a [`GridOperator`], resizes the result back to the
//! leaf shapes and interpolates it at the target points. Its
//! [`ErrorReport`] splits the total error into the operator part measured on
//! grids and the interpolation part measured at points.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_with, unalign, AlignedBatch, ResizeMethod};
use crate::allocation::{allocate_shapes, annotate, stored_shapes, GridShape};
use crate::cloud::PointCloud;
use crate::decomposition::Partition;
use crate::error::{Error, Result};
use crate::interpolation::{backward_norm_bound, grid_to_points, l2_relative_error, scatter_to_grid, SubdomainGrid};
use crate::io::{write_aligned, write_partition, BatchManifest};

/// A transform between aligned batches. The output must keep the common
/// shape and leaf count; the channel count may change.
pub trait GridOperator: Send + Sync {
    fn name(&self) -> &str;
    fn is_linear(&self) -> bool;
    fn apply(&self, batch: &AlignedBatch) -> Result<AlignedBatch>;
}

pub struct Identity;

impl GridOperator for Identity {
    fn name(&self) -> &str {
        "identity"
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, batch: &AlignedBatch) -> Result<AlignedBatch> {
        Ok(batch.clone())
    }
}

pub struct Zero;

impl GridOperator for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, batch: &AlignedBatch) -> Result<AlignedBatch> {
        batch.with_data(batch.channels, vec![0.0; batch.data.len()])
    }
}

/// Keeps the Fourier modes with `|k| <= N/8` on every axis of length `N`,
/// the lowest quarter of the spectrum, of every leaf and channel.
pub struct SpectralLowPass;

impl GridOperator for SpectralLowPass {
    fn name(&self) -> &str {
        "low_pass"
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, batch: &AlignedBatch) -> Result<AlignedBatch> {
        let n = batch.grid_len();
        let shape = &batch.shape;
        let data: Vec<f64> = batch
            .data
            .par_chunks(n.max(1))
            .flat_map_iter(|block| low_pass(block, shape))
            .collect();
        batch.with_data(batch.channels, data)
    }
}

fn low_pass(block: &[f64], shape: &[usize]) -> Vec<f64> {
    let mut x: Vec<Complex64> = block.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    for (axis, &n) in shape.iter().enumerate() {
        let inner: usize = shape[axis + 1..].iter().product();
        let outer = x.len() / (n * inner);
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let cut = n / 8;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                for j in 0..n {
                    line[j] = x[at(j)];
                }
                fwd.process(&mut line);
                for (j, c) in line.iter_mut().enumerate() {
                    if j.min(n - j) > cut {
                        *c = Complex64::new(0.0, 0.0);
                    }
                }
                inv.process(&mut line);
                for j in 0..n {
                    x[at(j)] = line[j] / n as f64;
                }
            }
        }
    }
    x.iter().map(|c| c.re).collect()
}

/// How the points of a cloud are matched to leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// By point id; the partition must list every id of the cloud.
    #[default]
    ById,
    /// By descending the split tree with each point's coordinates. Used when
    /// the partition was computed on stacked geometries.
    ByLocation,
}

/// A partition with its leaf grid shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub partition: Partition,
    pub shapes: Vec<GridShape>,
    pub assignment: Assignment,
}

impl Discretization {
    /// Allocates grids at `ratio` and stores them in the partition.
    pub fn allocate(mut partition: Partition, ratio: f64, assignment: Assignment) -> Result<Self> {
        let shapes = allocate_shapes(&partition, ratio)?;
        annotate(&mut partition, &shapes)?;
        Ok(Self {
            partition,
            shapes,
            assignment,
        })
    }

    /// Uses the grid shapes already stored in the partition.
    pub fn from_stored(partition: Partition, assignment: Assignment) -> Result<Self> {
        let shapes = stored_shapes(&partition)?;
        Ok(Self {
            partition,
            shapes,
            assignment,
        })
    }

    pub fn leaf_rows(&self, cloud: &PointCloud) -> Result<Vec<Vec<usize>>> {
        if cloud.dims() != self.partition.dims {
            return Err(Error::ShapeMismatch(format!(
                "{}-dimensional cloud against a {}-dimensional partition",
                cloud.dims(),
                self.partition.dims
            )));
        }
        match self.assignment {
            Assignment::ById => self.partition.leaf_rows(cloud),
            Assignment::ByLocation => self.partition.leaf_rows_by_location(cloud),
        }
    }

    /// Forward interpolation of `cloud` onto every leaf grid.
    pub fn scatter(&self, cloud: &PointCloud) -> Result<Vec<SubdomainGrid>> {
        let rows = self.leaf_rows(cloud)?;
        rows.iter()
            .zip(&self.shapes)
            .enumerate()
            .map(|(k, (rows, shape))| {
                if rows.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "leaf {k} holds none of the cloud's points"
                    )));
                }
                scatter_to_grid(&cloud.select(rows), shape)
            })
            .collect()
    }

    /// Backward interpolation of leaf grids at the points of `cloud`, each
    /// point reading the grid of its own leaf.
    pub fn gather(&self, grids: &[SubdomainGrid], cloud: &PointCloud) -> Result<Array2<f64>> {
        if grids.len() != self.shapes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} grids for {} leaves",
                grids.len(),
                self.shapes.len()
            )));
        }
        let rows = self.leaf_rows(cloud)?;
        let c = grids.first().map_or(0, |g| g.channels);
        let mut out = Array2::zeros((cloud.len(), c));
        for (rows, grid) in rows.iter().zip(grids) {
            if rows.is_empty() {
                continue;
            }
            let vals = grid_to_points(grid, &cloud.select(rows))?;
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(r).assign(&vals.row(i));
            }
        }
        Ok(out)
    }

    /// Upper bound on the norm of the backward map at the points of `cloud`.
    /// The map is block diagonal over leaves, so this is the largest leaf
    /// bound.
    pub fn backward_norm_bound(&self, cloud: &PointCloud) -> Result<f64> {
        let rows = self.leaf_rows(cloud)?;
        let mut bound = 0.0f64;
        for (rows, shape) in rows.iter().zip(&self.shapes) {
            if !rows.is_empty() {
                bound = bound.max(backward_norm_bound(shape, &cloud.select(rows))?);
            }
        }
        Ok(bound)
    }
}

/// Error decomposition of one pipeline run. Norms are Euclidean over all
/// points (or grid nodes) and channels; every term is divided by the norm of
/// the reference it is compared to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `|phi(G(a)) - u| / |u|` at the target points.
    pub total: f64,
    /// `|G(a) - U| / |U|` on the leaf grids, `U` being the forward
    /// interpolation of the targets.
    pub operator_term: f64,
    /// `|phi(G(a)) - phi(U)| / |u|`, the operator error seen at the points.
    pub operator_induced: f64,
    /// `|phi(U) - u| / |u|`, the round-trip interpolation error.
    pub interp_term: f64,
    /// Upper bound on the norm of the backward map `phi`.
    pub phi_norm_bound: f64,
    /// `(phi_norm_bound * |G(a) - U| + |phi(U) - u| - |phi(G(a)) - u|) / |u|`,
    /// non-negative when the error bound holds.
    pub bound_slack: f64,
    /// `operator_induced + interp_term - total`, non-negative by the
    /// triangle inequality.
    pub triangle_slack: f64,
}

fn norm<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs one sample through forward interpolation, alignment, `op` and
/// backward interpolation. Returns the predicted values at the points of
/// `truth` (in its row order) and the error report against its values.
pub fn run_pipeline(
    sample: &PointCloud,
    truth: &PointCloud,
    disc: &Discretization,
    op: &dyn GridOperator,
    method: ResizeMethod,
) -> Result<(Array2<f64>, ErrorReport)> {
    let u = truth.values().ok_or(Error::MissingValues)?;
    if sample.values().is_none() {
        return Err(Error::MissingValues);
    }
    let batch = align_with(&disc.scatter(sample)?, method)?;
    let out = op.apply(&batch)?;
    if out.shape != batch.shape || out.leaves() != batch.leaves() {
        return Err(Error::ShapeMismatch(format!(
            "operator {} changed the batch from {} x {:?} to {} x {:?}",
            op.name(),
            batch.leaves(),
            batch.shape,
            out.leaves(),
            out.shape
        )));
    }
    if out.channels != truth.channels() {
        return Err(Error::ShapeMismatch(format!(
            "operator {} yields {} channels, targets carry {}",
            op.name(),
            out.channels,
            truth.channels()
        )));
    }
    let predicted_grids = unalign(&out, method)?;
    let pred = disc.gather(&predicted_grids, truth)?;

    let ref_grids = disc.scatter(truth)?;
    let phi_ref = disc.gather(&ref_grids, truth)?;
    let u_norm = norm(u.iter());
    if u_norm == 0.0 {
        return Err(Error::ZeroNormReference { sample: 0 });
    }
    let grid_err = diff_norm(
        predicted_grids.iter().flat_map(|g| &g.values),
        ref_grids.iter().flat_map(|g| &g.values),
    );
    let grid_ref = norm(ref_grids.iter().flat_map(|g| &g.values));
    let total_abs = diff_norm(pred.iter(), u.iter());
    let interp_abs = diff_norm(phi_ref.iter(), u.iter());
    let induced_abs = diff_norm(pred.iter(), phi_ref.iter());
    let phi_norm = disc.backward_norm_bound(truth)?;

    let total = l2_relative_error(std::slice::from_ref(u), std::slice::from_ref(&pred))?;
    let interp_term = interp_abs / u_norm;
    let operator_induced = induced_abs / u_norm;
    let report = ErrorReport {
        total,
        operator_term: if grid_ref > 0.0 { grid_err / grid_ref } else { grid_err },
        operator_induced,
        interp_term,
        phi_norm_bound: phi_norm,
        bound_slack: (phi_norm * grid_err + interp_abs - total_abs) / u_norm,
        triangle_slack: operator_induced + interp_term - total_abs / u_norm,
    };
    Ok((pred, report))
}

/// Input and target clouds of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub input: PointCloud,
    pub target: PointCloud,
}

/// Aligned input and target batches for every sample, in sample order.
/// Targets use `target_disc` when given, otherwise the input
/// discretization.
pub fn build_dataset(
    samples: &[SamplePair],
    disc: &Discretization,
    target_disc: Option<&Discretization>,
    method: ResizeMethod,
) -> Result<(Vec<AlignedBatch>, Vec<AlignedBatch>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let tdisc = target_disc.unwrap_or(disc);
    let pairs = samples
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let tag = |e: Error| match e {
                Error::InvalidArgument(msg) => Error::InvalidArgument(format!("sample {j}: {msg}")),
                other => other,
            };
            if s.input.values().is_none() || s.target.values().is_none() {
                return Err(Error::MissingValues);
            }
            let a = align_with(&disc.scatter(&s.input).map_err(tag)?, method)?;
            let u = align_with(&tdisc.scatter(&s.target).map_err(tag)?, method)?;
            Ok((a, u))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Files written by [`export_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub inputs: BatchManifest,
    pub targets: BatchManifest,
    pub independent_targets: bool,
}

pub const PARTITION_FILE: &str = "partition.json";
pub const TARGET_PARTITION_FILE: &str = "target_partition.json";
pub const INPUTS_FILE: &str = "inputs.json";
pub const TARGETS_FILE: &str = "targets.json";

/// Builds the dataset and writes `partition.json` (with grid shapes),
/// `inputs.json`/`.bin`, `targets.json`/`.bin` and, for independent target
/// discretizations, `target_partition.json` into `dir`.
pub fn export_dataset(
    dir: &Path,
    samples: &[SamplePair],
    disc: &Discretization,
    target_disc: Option<&Discretization>,
    method: ResizeMethod,
) -> Result<ExportSummary> {
    let (inputs, targets) = build_dataset(samples, disc, target_disc, method)?;
    std::fs::create_dir_all(dir)?;
    write_partition(&dir.join(PARTITION_FILE), &disc.partition)?;
    if let Some(t) = target_disc {
        write_partition(&dir.join(TARGET_PARTITION_FILE), &t.partition)?;
    }
    Ok(ExportSummary {
        inputs: write_aligned(&dir.join(INPUTS_FILE), &inputs)?,
        targets: write_aligned(&dir.join(TARGETS_FILE), &targets)?,
        independent_targets: target_disc.is_some(),
    })
}
