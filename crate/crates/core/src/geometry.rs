//! Finite metric measure spaces, balls, and doubling diagnostics.
//!
//! A space is a finite point set with a metric evaluator (closed form for
//! structured grids, cached matrix for clouds) and a strictly positive
//! per-point measure weight. Integrals everywhere in this crate are
//! mu-weighted sums over the point set.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub type PointId = usize;

/// Distance evaluator. Grids use the closed form; irregular clouds up to
/// 8192 points cache the dense matrix.
#[derive(Debug, Clone)]
pub enum Metric {
    Euclidean,
    Periodic { period: Vec<f64> },
    Cached { dist: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    coords: Vec<Vec<f64>>,
    dim: usize,
    metric: Metric,
    mu: Vec<f64>,
    total_mass: f64,
    diameter: f64,
    min_positive_dist: f64,
}

/// Open ball `{y : d(center, y) < radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: PointId,
    pub radius: f64,
    pub members: Vec<PointId>,
}

/// On-disk point-cloud format.
#[derive(Debug, Serialize, Deserialize)]
pub struct PointCloudFile {
    pub dim: usize,
    pub coords: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
}

impl MetricMeasureSpace {
    pub fn new(coords: Vec<Vec<f64>>, mu: Vec<f64>, metric: Metric) -> Result<Self> {
        if coords.is_empty() {
            return Err(CoreError::InvalidArgument("empty point set".into()));
        }
        let dim = coords[0].len();
        if coords.iter().any(|c| c.len() != dim) {
            return Err(CoreError::InvalidArgument(
                "inconsistent coordinate dimensions".into(),
            ));
        }
        if mu.len() != coords.len() {
            return Err(CoreError::InvalidArgument(
                "mu length does not match point count".into(),
            ));
        }
        if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(CoreError::InvalidArgument(
                "all measure weights must be strictly positive and finite".into(),
            ));
        }
        if let Metric::Periodic { period } = &metric {
            if period.len() != dim {
                return Err(CoreError::InvalidArgument(
                    "period length must match dimension".into(),
                ));
            }
        }
        if let Metric::Cached { dist } = &metric {
            if dist.len() != coords.len() * coords.len() {
                return Err(CoreError::InvalidArgument(
                    "cached distance matrix has wrong size".into(),
                ));
            }
        }
        let total_mass = mu.iter().sum();
        let mut space = MetricMeasureSpace {
            coords,
            dim,
            metric,
            mu,
            total_mass,
            diameter: 0.0,
            min_positive_dist: f64::INFINITY,
        };
        let n = space.len();
        let mut diam: f64 = 0.0;
        let mut minpos = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = space.dist(i, j);
                diam = diam.max(d);
                if d > 0.0 {
                    minpos = minpos.min(d);
                }
            }
        }
        space.diameter = diam;
        space.min_positive_dist = if minpos.is_finite() { minpos } else { 0.0 };
        Ok(space)
    }

    /// Cloud with an explicit dense distance matrix.
    pub fn from_distance_matrix(dist: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        let coords = (0..n).map(|_| vec![]).collect::<Vec<_>>();
        let mut s = Self::new(coords, mu, Metric::Cached { dist })?;
        s.dim = 0;
        Ok(s)
    }

    /// Uniform 1D grid of `n` points with spacing `h`; periodic wrap-around
    /// metric when `periodic` is set. Per-point mass is `h`.
    pub fn grid_1d(n: usize, h: f64, periodic: bool) -> Result<Self> {
        if n == 0 || h <= 0.0 {
            return Err(CoreError::InvalidArgument("grid_1d needs n>0, h>0".into()));
        }
        let coords = (0..n).map(|i| vec![i as f64 * h]).collect();
        let mu = vec![h; n];
        let metric = if periodic {
            Metric::Periodic {
                period: vec![n as f64 * h],
            }
        } else {
            Metric::Euclidean
        };
        Self::new(coords, mu, metric)
    }

    /// Uniform 2D grid, row-major point ids. Per-point mass is `h^2`.
    pub fn grid_2d(nx: usize, ny: usize, h: f64, periodic: bool) -> Result<Self> {
        if nx == 0 || ny == 0 || h <= 0.0 {
            return Err(CoreError::InvalidArgument("grid_2d needs n>0, h>0".into()));
        }
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push(vec![i as f64 * h, j as f64 * h]);
            }
        }
        let mu = vec![h * h; nx * ny];
        let metric = if periodic {
            Metric::Periodic {
                period: vec![nx as f64 * h, ny as f64 * h],
            }
        } else {
            Metric::Euclidean
        };
        Self::new(coords, mu, metric)
    }

    /// Seeded uniform random cloud on `[0,1]^dim` with unit mass per point.
    pub fn random_cloud(n: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let coords = (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self::new(coords, vec![1.0; n], Metric::Euclidean)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self, i: PointId) -> &[f64] {
        &self.coords[i]
    }

    pub fn mu(&self, i: PointId) -> f64 {
        self.mu[i]
    }

    pub fn mu_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest positive pairwise distance (0 on a single-point space).
    pub fn min_positive_dist(&self) -> f64 {
        self.min_positive_dist
    }

    pub fn dist(&self, i: PointId, j: PointId) -> f64 {
        match &self.metric {
            Metric::Euclidean => self.coords[i]
                .iter()
                .zip(&self.coords[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Metric::Periodic { period } => self.coords[i]
                .iter()
                .zip(&self.coords[j])
                .zip(period)
                .map(|((a, b), p)| {
                    let mut d = (a - b).abs() % p;
                    if d > p / 2.0 {
                        d = p - d;
                    }
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Metric::Cached { dist } => dist[i * self.coords.len() + j],
        }
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// mu-mass of a point-id set.
    pub fn measure_of(&self, ids: &[PointId]) -> f64 {
        ids.iter().map(|&i| self.mu[i]).sum()
    }

    /// Open ball around `center`. Errors on an unknown point id.
    pub fn ball(&self, center: PointId, r: f64) -> Result<Ball> {
        if center >= self.len() {
            return Err(CoreError::InvalidArgument(format!(
                "unknown point id {center}"
            )));
        }
        if !(r > 0.0) {
            return Err(CoreError::InvalidArgument("ball radius must be > 0".into()));
        }
        let members = (0..self.len())
            .filter(|&y| self.dist(center, y) < r)
            .collect();
        Ok(Ball {
            center,
            radius: r,
            members,
        })
    }

    /// mu(B(center, r)) without materializing the member list.
    pub fn ball_mass(&self, center: PointId, r: f64) -> f64 {
        (0..self.len())
            .filter(|&y| self.dist(center, y) < r)
            .map(|y| self.mu[y])
            .sum()
    }

    /// Least-squares fit of `log mu(B(x, lambda r)) - log mu(B(x, r))`
    /// against `log lambda`, returned as `(C, n)` with the offset folded
    /// into C so that the fitted bound holds on every sample.
    pub fn doubling_estimate(&self, lambda: f64, sample: &[(PointId, f64)]) -> Result<(f64, f64)> {
        if sample.is_empty() {
            return Err(CoreError::InvalidArgument("empty ball sample".into()));
        }
        if lambda < 1.0 {
            return Err(CoreError::InvalidArgument("lambda must be >= 1".into()));
        }
        let mut ys = Vec::with_capacity(sample.len());
        for &(x, r) in sample {
            let m_small = self.ball_mass(x, r);
            let m_big = self.ball_mass(x, lambda * r);
            if m_small <= 0.0 || m_big <= 0.0 {
                return Err(CoreError::DegenerateSample(format!(
                    "empty ball at point {x}, r {r}"
                )));
            }
            ys.push((m_big / m_small).ln());
        }
        let logl = lambda.ln();
        if logl == 0.0 {
            return Ok((1.0, 0.0));
        }
        // Through-origin least squares with identical abscissae reduces to
        // the mean; the offset is the sup residual so the bound is exact on
        // the sample.
        let n_hat = ys.iter().sum::<f64>() / (ys.len() as f64 * logl);
        let c_hat = ys
            .iter()
            .map(|y| y - n_hat * logl)
            .fold(f64::NEG_INFINITY, f64::max)
            .exp();
        Ok((c_hat, n_hat))
    }

    /// Max over seeded random triples of `d(x,z) - d(x,y) - d(y,z)`.
    /// Nonpositive (up to float noise) for a true metric.
    pub fn triangle_audit(&self, num_triples: usize, seed: u64) -> Result<f64> {
        if num_triples == 0 {
            return Err(CoreError::InvalidArgument("num_triples must be >= 1".into()));
        }
        let n = self.len();
        if n < 3 {
            return Ok(0.0);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..num_triples {
            let x = rng.random_range(0..n);
            let y = rng.random_range(0..n);
            let z = rng.random_range(0..n);
            let v = self.dist(x, z) - self.dist(x, y) - self.dist(y, z);
            worst = worst.max(v);
        }
        Ok(worst)
    }

    pub fn to_file(&self) -> PointCloudFile {
        let (metric, period) = match &self.metric {
            Metric::Euclidean => ("euclidean".to_string(), None),
            Metric::Periodic { period } => ("periodic".to_string(), Some(period.clone())),
            Metric::Cached { .. } => ("cached".to_string(), None),
        };
        PointCloudFile {
            dim: self.dim,
            coords: self.coords.clone(),
            mu: self.mu.clone(),
            metric,
            period,
        }
    }

    pub fn from_file(f: &PointCloudFile) -> Result<Self> {
        let metric = match f.metric.as_str() {
            "euclidean" => Metric::Euclidean,
            "periodic" => Metric::Periodic {
                period: f
                    .period
                    .clone()
                    .ok_or_else(|| CoreError::InvalidArgument("periodic metric needs period".into()))?,
            },
            other => {
                return Err(CoreError::InvalidArgument(format!(
                    "unsupported metric kind {other:?}"
                )))
            }
        };
        Self::new(f.coords.clone(), f.mu.clone(), metric)
    }
}
