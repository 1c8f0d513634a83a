//! Seeded synthetic clouds and fields for tests and benchmarks.

use std::f64::consts::PI;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Tolerance on the mixture weights summing to one.
const WEIGHT_TOL: f64 = 1e-9;

/// An isotropic Gaussian component of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub weight: f64,
}

impl FromStr for Cluster {
    type Err = Error;

    /// Parses `c1,c2,...:sigma:weight`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cluster {s:?} is not of the form c1,c2,..:sigma:weight"));
        let mut parts = s.trim().split(':');
        let (Some(c), Some(sigma), Some(weight), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let center = c
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        Ok(Self {
            center,
            sigma: sigma.trim().parse().map_err(|_| bad())?,
            weight: weight.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Parses a `;`-separated list of clusters. An empty string is no clusters.
pub fn parse_clusters(s: &str) -> Result<Vec<Cluster>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

fn check_mixture(d: usize, clusters: &[Cluster], background: f64) -> Result<()> {
    let invalid = |msg: String| Err(Error::InvalidArgument(msg));
    if d == 0 {
        return invalid("dimension must be at least 1".into());
    }
    if !(0.0..=1.0).contains(&background) {
        return invalid(format!("background fraction {background} outside [0, 1]"));
    }
    let mut total = background;
    for (i, c) in clusters.iter().enumerate() {
        if c.center.len() != d {
            return invalid(format!("cluster {i} has a {}-dimensional center", c.center.len()));
        }
        if c.center.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return invalid(format!("cluster {i} center lies outside the unit box"));
        }
        if !(c.sigma > 0.0) || !c.sigma.is_finite() {
            return invalid(format!("cluster {i} has sigma {}", c.sigma));
        }
        if !(c.weight >= 0.0) {
            return invalid(format!("cluster {i} has weight {}", c.weight));
        }
        total += c.weight;
    }
    if (total - 1.0).abs() > WEIGHT_TOL {
        return invalid(format!("weights and background sum to {total}, not 1"));
    }
    Ok(())
}

/// `m` points in the unit box: each is uniform background with probability
/// `background`, otherwise drawn from a cluster chosen by weight. Cluster
/// draws falling outside the box are redrawn.
pub fn gen_gaussian_mixture(
    seed: u64,
    d: usize,
    m: usize,
    clusters: &[Cluster],
    background: f64,
) -> Result<PointCloud> {
    check_mixture(d, clusters, background)?;
    if m == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(m * d);
    let mut p = vec![0.0; d];
    for _ in 0..m {
        let mut u: f64 = rng.random::<f64>() - background;
        let chosen = if u < 0.0 {
            None
        } else {
            // rounding leftovers go to the last cluster
            clusters
                .iter()
                .position(|c| {
                    u -= c.weight;
                    u < 0.0
                })
                .or(clusters.len().checked_sub(1))
        };
        match chosen {
            None => p.iter_mut().for_each(|x| *x = rng.random()),
            Some(k) => {
                let c = &clusters[k];
                loop {
                    for (x, &mu) in p.iter_mut().zip(&c.center) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x = mu + c.sigma * z;
                    }
                    if p.iter().all(|x| (0.0..=1.0).contains(x)) {
                        break;
                    }
                }
            }
        }
        coords.extend_from_slice(&p);
    }
    PointCloud::from_flat(d, coords)
}

/// Smooth field plus a sharp Gaussian bump: a few random-phase sinusoids of
/// low wave number, and `bump_amp * exp(-|x - c|^2 / (2 w^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    pub waves: Vec<Wave>,
    pub bump_center: Vec<f64>,
    pub bump_width: f64,
    pub bump_amp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub k: Vec<f64>,
    pub phase: f64,
    pub amp: f64,
}

impl SyntheticField {
    pub fn random(seed: u64, d: usize, bump_center: Vec<f64>, bump_width: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
        let waves = (0..3)
            .map(|_| Wave {
                k: (0..d).map(|_| 2.0 * PI * rng.random_range(0..=2) as f64).collect(),
                phase: rng.random_range(0.0..2.0 * PI),
                amp: rng.random_range(0.5..1.5),
            })
            .collect();
        Self {
            waves,
            bump_center,
            bump_width,
            bump_amp: 3.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let smooth: f64 = self
            .waves
            .iter()
            .map(|w| w.amp * (w.k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + w.phase).sin())
            .sum();
        let r2: f64 = self.bump_center.iter().zip(x).map(|(c, x)| (c - x) * (c - x)).sum();
        smooth + self.bump_amp * (-r2 / (2.0 * self.bump_width * self.bump_width)).exp()
    }

    /// `cloud` with this field as its single channel.
    pub fn attach(&self, cloud: PointCloud) -> Result<PointCloud> {
        let v = Array2::from_shape_fn((cloud.len(), 1), |(r, _)| self.eval(cloud.point(r)));
        cloud.with_values(v)
    }
}

/// Points, dense central cluster width and background share of the
/// reference non-uniform cloud.
pub const DENSE_CENTRE_POINTS: usize = 4096;
pub const DENSE_CENTRE_SIGMA: f64 = 0.04;
pub const DENSE_CENTRE_BACKGROUND: f64 = 0.3;

/// The reference non-uniform 2D cloud (dense cluster at the centre of the
/// unit square over a uniform background) carrying a smooth-plus-bump field
/// whose bump sits on the cluster.
pub fn dense_centre_sample(seed: u64) -> Result<PointCloud> {
    let cluster = Cluster {
        center: vec![0.5, 0.5],
        sigma: DENSE_CENTRE_SIGMA,
        weight: 1.0 - DENSE_CENTRE_BACKGROUND,
    };
    let cloud = gen_gaussian_mixture(seed, 2, DENSE_CENTRE_POINTS, &[cluster], DENSE_CENTRE_BACKGROUND)?;
    SyntheticField::random(seed, 2, vec![0.5, 0.5], DENSE_CENTRE_SIGMA / 2.0).attach(cloud)
}

/// Five equally weighted clusters with seeded, well-separated centres in
/// `[0.1, 0.9]^d` and widths in `[0.01, 0.03]`, leaving a `background`
/// share for the uniform part.
pub fn five_cluster_layout(seed: u64, d: usize, background: f64) -> Result<Vec<Cluster>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let min_sep = if d == 1 { 0.15 } else { 0.25 };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(5);
    let mut attempts = 0;
    while centers.len() < 5 {
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
        attempts += 1;
        // give up on separation rather than loop forever
        let far = |o: &Vec<f64>| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sep * min_sep;
        if attempts > 10_000 || centers.iter().all(far) {
            centers.push(c);
        }
    }
    Ok(centers
        .into_iter()
        .map(|center| Cluster {
            center,
            sigma: rng.random_range(0.01..0.03),
            weight: (1.0 - background) / 5.0,
        })
        .collect())
}

/// Samples `m` points from [`five_cluster_layout`].
pub fn five_cluster_mixture(seed: u64, d: usize, m: usize, background: f64) -> Result<PointCloud> {
    gen_gaussian_mixture(seed, d, m, &five_cluster_layout(seed, d, background)?, background)
}
