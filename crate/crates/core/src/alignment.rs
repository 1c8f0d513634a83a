//! Resizing leaf grids to a common shape so they can be stacked.
//!
//! The spectral resize treats every grid line as one period of a periodic
//! signal: the line's DFT is truncated or zero-padded, keeping the lowest
//! `ceil(N/2)` non-negative and `floor(N/2)` negative frequencies of the
//! smaller size, then transformed back with a `1/N_in` scale so the mean is
//! preserved.
//!
//! When the smaller size `n` is even, its Nyquist bin `n/2` has two images in
//! the larger spectrum. Upsizing copies the input Nyquist coefficient into
//! both with weight `1/sqrt(2)`; downsizing combines them as `(u + v)/sqrt(2)`.
//! The two maps are adjoint, upsize followed by downsize is the identity and
//! downsizing never increases the mean square.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::allocation::GridShape;
use crate::error::{Error, Result};
use crate::interpolation::SubdomainGrid;

/// How grids are brought to a new shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMethod {
    /// Fourier truncation / zero-padding.
    #[default]
    Spectral,
    /// Linear resampling along each axis between the box faces.
    Multilinear,
}

/// Grids of one sample resized to a common shape and stacked.
///
/// `data` is ordered leaf, then channel, then row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedBatch {
    pub shape: Vec<usize>,
    pub channels: usize,
    pub data: Vec<f64>,
    /// Original shape of every leaf grid, in leaf order.
    pub provenance: Vec<GridShape>,
}

impl AlignedBatch {
    pub fn leaves(&self) -> usize {
        self.provenance.len()
    }

    pub fn grid_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn channel(&self, leaf: usize, channel: usize) -> &[f64] {
        let n = self.grid_len();
        let start = (leaf * self.channels + channel) * n;
        &self.data[start..start + n]
    }

    /// Same provenance and shape, new channel count and values.
    pub fn with_data(&self, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.leaves() * channels * self.grid_len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} leaves x {channels} channels x {:?}",
                data.len(),
                self.leaves(),
                self.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            channels,
            data,
            provenance: self.provenance.clone(),
        })
    }
}

/// Resizes one channel-major tensor (`channels` blocks of a row-major grid)
/// axis by axis.
pub fn resize_tensor(
    data: &[f64],
    dims: &[usize],
    channels: usize,
    new_dims: &[usize],
    method: ResizeMethod,
) -> Result<Vec<f64>> {
    if dims.len() != new_dims.len() {
        return Err(Error::ShapeMismatch(format!("cannot resize {dims:?} to {new_dims:?}")));
    }
    if new_dims.contains(&0) || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "empty grid axis in {dims:?} -> {new_dims:?}"
        )));
    }
    if data.len() != channels * dims.iter().product::<usize>() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {channels} channels of {dims:?}",
            data.len()
        )));
    }
    let mut cur = data.to_vec();
    let mut shape = dims.to_vec();
    for axis in 0..dims.len() {
        if shape[axis] != new_dims[axis] {
            let resizer = LineResizer::new(shape[axis], new_dims[axis], method);
            // channels act as an extra slowest axis
            let outer = channels * shape[..axis].iter().product::<usize>();
            let inner: usize = shape[axis + 1..].iter().product();
            cur = resize_axis(&cur, outer, shape[axis], inner, &resizer);
            shape[axis] = new_dims[axis];
        }
    }
    Ok(cur)
}

fn resize_axis(data: &[f64], outer: usize, n_in: usize, inner: usize, resizer: &LineResizer) -> Vec<f64> {
    let n_out = resizer.n_out;
    let lines: Vec<Vec<f64>> = (0..outer * inner)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n_in),
            |line, idx| {
                let (o, i) = (idx / inner, idx % inner);
                line.clear();
                line.extend((0..n_in).map(|j| data[(o * n_in + j) * inner + i]));
                resizer.resize(line)
            },
        )
        .collect();
    let mut out = vec![0.0; outer * n_out * inner];
    for (idx, line) in lines.iter().enumerate() {
        let (o, i) = (idx / inner, idx % inner);
        for (j, v) in line.iter().enumerate() {
            out[(o * n_out + j) * inner + i] = *v;
        }
    }
    out
}

/// Forward and inverse plans.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

struct LineResizer {
    n_in: usize,
    n_out: usize,
    method: ResizeMethod,
    fft: Option<FftPair>,
}

impl LineResizer {
    fn new(n_in: usize, n_out: usize, method: ResizeMethod) -> Self {
        let fft = (method == ResizeMethod::Spectral).then(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n_in), planner.plan_fft_inverse(n_out))
        });
        Self {
            n_in,
            n_out,
            method,
            fft,
        }
    }

    fn resize(&self, line: &[f64]) -> Vec<f64> {
        if self.n_in == self.n_out {
            return line.to_vec();
        }
        if line.iter().all(|&v| v == line[0]) {
            return vec![line[0]; self.n_out];
        }
        if self.n_out == 1 {
            return vec![line.iter().sum::<f64>() / self.n_in as f64];
        }
        match self.method {
            ResizeMethod::Spectral => self.spectral(line),
            ResizeMethod::Multilinear => self.linear(line),
        }
    }

    fn spectral(&self, line: &[f64]) -> Vec<f64> {
        let (forward, inverse) = self.fft.as_ref().expect("planned for spectral resize");
        let (n_in, n_out) = (self.n_in, self.n_out);
        let mut x: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        forward.process(&mut x);

        let n = n_in.min(n_out);
        let pos = n.div_ceil(2);
        let neg = n / 2;
        let mut y = vec![Complex64::new(0.0, 0.0); n_out];
        y[..pos].copy_from_slice(&x[..pos]);
        for k in 1..=neg {
            y[n_out - k] = x[n_in - k];
        }
        if n % 2 == 0 {
            let h = n / 2;
            if n_in < n_out {
                let v = x[h] * FRAC_1_SQRT_2;
                y[h] = v;
                y[n_out - h] = v;
            } else {
                y[h] = (x[h] + x[n_in - h]) * FRAC_1_SQRT_2;
            }
        }
        inverse.process(&mut y);
        let scale = 1.0 / n_in as f64;
        y.iter().map(|c| c.re * scale).collect()
    }

    fn linear(&self, line: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.n_in, self.n_out);
        if n_in == 1 {
            return vec![line[0]; n_out];
        }
        (0..n_out)
            .map(|j| {
                let t = j as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                let i = (t.floor() as usize).min(n_in - 2);
                let f = t - i as f64;
                line[i] * (1.0 - f) + line[i + 1] * f
            })
            .collect()
    }
}

/// Spectral resize of a grid to `new_dims` over the same box.
pub fn fft_resize(grid: &SubdomainGrid, new_dims: &[usize]) -> Result<SubdomainGrid> {
    resize_grid(grid, new_dims, ResizeMethod::Spectral)
}

/// Resize of a grid to `new_dims` over the same box. Degenerate axes must
/// stay at one node.
pub fn resize_grid(grid: &SubdomainGrid, new_dims: &[usize], method: ResizeMethod) -> Result<SubdomainGrid> {
    let shape = GridShape::new(new_dims.to_vec(), grid.shape.bbox.clone())?;
    let c = grid.channels;
    let planar = to_channel_major(&grid.values, c);
    let resized = resize_tensor(&planar, &grid.shape.dims, c, new_dims, method)?;
    SubdomainGrid::new(shape, c, to_node_major(&resized, c))
}

fn to_channel_major(values: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return values.to_vec();
    }
    let nodes = values.len() / channels;
    let mut out = vec![0.0; values.len()];
    for (node, vals) in values.chunks(channels).enumerate() {
        for (c, v) in vals.iter().enumerate() {
            out[c * nodes + node] = *v;
        }
    }
    out
}

fn to_node_major(values: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return values.to_vec();
    }
    let nodes = values.len() / channels;
    let mut out = vec![0.0; values.len()];
    for c in 0..channels {
        for node in 0..nodes {
            out[node * channels + c] = values[c * nodes + node];
        }
    }
    out
}

/// Per-axis maximum of the grid shapes.
pub fn common_shape<'a>(shapes: impl IntoIterator<Item = &'a GridShape>) -> Result<Vec<usize>> {
    let mut it = shapes.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidArgument("no grids to align".into()))?;
    let mut dims = first.dims.clone();
    for s in it {
        if s.ndim() != dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "grids of {} and {} axes",
                dims.len(),
                s.ndim()
            )));
        }
        for (d, &n) in dims.iter_mut().zip(&s.dims) {
            *d = (*d).max(n);
        }
    }
    Ok(dims)
}

/// Resizes every grid spectrally to the per-axis maximum shape and stacks
/// them in order.
pub fn align(grids: &[SubdomainGrid]) -> Result<AlignedBatch> {
    align_with(grids, ResizeMethod::Spectral)
}

/// [`align`] with a chosen resize method. Leaves with a degenerate axis are
/// broadcast along it.
pub fn align_with(grids: &[SubdomainGrid], method: ResizeMethod) -> Result<AlignedBatch> {
    let shape = common_shape(grids.iter().map(|g| &g.shape))?;
    let channels = grids[0].channels;
    if let Some(g) = grids.iter().find(|g| g.channels != channels) {
        return Err(Error::ShapeMismatch(format!(
            "grids carry {} and {} channels",
            channels, g.channels
        )));
    }
    let blocks = grids
        .par_iter()
        .map(|g| {
            resize_tensor(
                &to_channel_major(&g.values, channels),
                &g.shape.dims,
                channels,
                &shape,
                method,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AlignedBatch {
        shape,
        channels,
        data: blocks.concat(),
        provenance: grids.iter().map(|g| g.shape.clone()).collect(),
    })
}

/// Resizes every leaf of the batch back to its original shape.
pub fn unalign(batch: &AlignedBatch, method: ResizeMethod) -> Result<Vec<SubdomainGrid>> {
    let c = batch.channels;
    let block = c * batch.grid_len();
    if batch.data.len() != block * batch.leaves() {
        return Err(Error::ShapeMismatch(format!(
            "batch holds {} values, expected {}",
            batch.data.len(),
            block * batch.leaves()
        )));
    }
    batch
        .provenance
        .par_iter()
        .enumerate()
        .map(|(k, shape)| {
            let data = &batch.data[k * block..(k + 1) * block];
            let resized = resize_tensor(data, &batch.shape, c, &shape.dims, method)?;
            SubdomainGrid::new(shape.clone(), c, to_node_major(&resized, c))
        })
        .collect()
}
