//! Decomposition of highly non-uniform point clouds into per-subdomain
//! uniform grids.
//!
//! The data path is:
//!
//! 1. [`decomposition::decompose`] greedily splits a [`PointCloud`] with
//!    axis-aligned hyperplanes, picking at each step the leaf with the largest
//!    point-weighted KL divergence to the uniform distribution over its
//!    bounding box ([`histogram::kl_to_uniform`]).
//! 2. [`allocation::allocate_shapes`] gives every leaf a uniform grid whose
//!    node count is proportional to its point count and whose aspect ratio
//!    follows its bounding box.
//! 3. [`interpolation::scatter_to_grid`] moves point values onto the leaf
//!    grids, [`alignment::align`] resizes them spectrally to a common shape,
//!    and [`interpolation::grid_to_points`] brings grid values back.
//! 4. [`pipeline`] composes those steps around a pluggable grid operator and
//!    reports how the total error splits into operator and interpolation
//!    parts; [`io`] defines the on-disk formats.

pub mod alignment;
pub mod allocation;
pub mod bench;
pub mod cloud;
pub mod decomposition;
pub mod error;
pub mod histogram;
pub mod interpolation;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use alignment::{align, fft_resize, AlignedBatch, ResizeMethod};
pub use allocation::{allocate_shapes, GridShape};
pub use interpolation::{grid_to_points, l2_relative_error, scatter_to_grid, SubdomainGrid};

pub use cloud::{bounding_box, split_cloud, BoundingBox, PointCloud};
pub use decomposition::{decompose, objective, Partition, SplitCandidate};
pub use error::{Error, Result};
pub use histogram::{bin_spec_for, histogram, kl_to_uniform, BinSpec, Histogram};

/// Version of the on-disk formats written by [`io`].
pub const FORMAT_VERSION: u32 = 1;
