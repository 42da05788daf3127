//! Monte Carlo checks of the martingale characterisation.
//!
//! A group path is a martingale for the connection with function `α` exactly
//! when its compensated logarithm `L(X) + ½∫α(dL, dL)` is a local martingale
//! in the algebra. Here "martingale" is rendered as zero mean increments over
//! each time bucket, tested across an ensemble of independent replicas.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::Matrix;
use crate::calculus::{mc_increments, quadratic_integral_of};
use crate::connections::{ConnectionFunction, MetricSpec};
use crate::error::{Error, Result};
use crate::explog::{ito_logarithm, AlgebraConnection};
use crate::groups::{same_group, GroupKind};
use crate::paths::{derive_seed, AlgebraPath, Ensemble, GroupPath, Sampled, TimeGrid};

pub const MIN_REPLICAS: usize = 100;
/// Cells with `|z|` below this count as consistent with zero drift.
pub const Z_BAND: f64 = 4.0;
/// Default fraction of cells allowed outside the band.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

pub fn compensator(x: &GroupPath, alpha: &ConnectionFunction) -> Result<AlgebraPath> {
    ito_logarithm(x, alpha, &AlgebraConnection::flat(x.group()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub group: GroupKind,
    pub connection: String,
    pub replicas: usize,
    pub buckets: usize,
    pub dim: usize,
    /// Row-major `buckets × dim` tables.
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub z: Vec<f64>,
    pub z_band: f64,
    pub significance: f64,
    pub pass_fraction: f64,
    pub max_abs_z: f64,
    pub passed: bool,
}

impl DriftReport {
    pub fn z_at(&self, bucket: usize, component: usize) -> f64 {
        self.z[bucket * self.dim + component]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_buckets(grid: TimeGrid, buckets: usize) -> Result<usize> {
    if buckets == 0 || !grid.steps().is_multiple_of(buckets) {
        return Err(Error::InvalidArgument(format!(
            "{buckets} buckets do not divide {} steps",
            grid.steps()
        )));
    }
    Ok(grid.steps() / buckets)
}

fn check_significance(significance: f64) -> Result<()> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    Ok(())
}

/// Increments of `path` over consecutive buckets, row-major `buckets × dim`.
pub fn bucket_increments(path: &AlgebraPath, buckets: usize) -> Result<Vec<f64>> {
    let width = check_buckets(path.grid(), buckets)?;
    let n = path.dim();
    let mut out = Vec::with_capacity(buckets * n);
    for b in 0..buckets {
        let (s0, s1) = (path.state(b * width), path.state((b + 1) * width));
        out.extend(s0.iter().zip(s1).map(|(a, c)| c - a));
    }
    Ok(out)
}

/// Builds the report from per-replica bucket increments, reduced in replica order.
pub fn drift_report(
    group: GroupKind,
    connection: &str,
    buckets: usize,
    per_replica: &[Vec<f64>],
    significance: f64,
) -> Result<DriftReport> {
    check_significance(significance)?;
    let replicas = per_replica.len();
    if replicas < MIN_REPLICAS {
        return Err(Error::Power {
            found: replicas,
            required: MIN_REPLICAS,
        });
    }
    let dim = group.spec().algebra_dim();
    let cells = buckets * dim;
    if let Some(bad) = per_replica.iter().find(|r| r.len() != cells) {
        return Err(Error::Dimension(format!(
            "expected {cells} bucket cells, got {}",
            bad.len()
        )));
    }
    let r = replicas as f64;
    let mut sums = vec![Neumaier::default(); cells];
    for row in per_replica {
        sums.iter_mut().zip(row).for_each(|(s, x)| s.add(*x));
    }
    let mean: Vec<f64> = sums.iter().map(|s| s.total() / r).collect();
    let mut sq = vec![Neumaier::default(); cells];
    for row in per_replica {
        for c in 0..cells {
            sq[c].add((row[c] - mean[c]).powi(2));
        }
    }
    let std_error: Vec<f64> = sq
        .iter()
        .map(|s| (s.total() / (r - 1.0) / r).sqrt())
        .collect();
    let z: Vec<f64> = mean
        .iter()
        .zip(&std_error)
        .map(|(m, se)| {
            if *se > 0.0 {
                m / se
            } else if *m == 0.0 {
                0.0
            } else {
                m.signum() * f64::INFINITY
            }
        })
        .collect();
    let inside = z.iter().filter(|v| v.abs() < Z_BAND).count();
    let pass_fraction = inside as f64 / cells as f64;
    let max_abs_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(DriftReport {
        group,
        connection: connection.to_string(),
        replicas,
        buckets,
        dim,
        mean,
        std_error,
        z,
        z_band: Z_BAND,
        significance,
        pass_fraction,
        max_abs_z,
        passed: pass_fraction >= 1.0 - significance,
    })
}

pub fn drift_test(
    ensemble: &Ensemble<AlgebraPath>,
    buckets: usize,
    significance: f64,
) -> Result<DriftReport> {
    let first = ensemble
        .paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let group = first.group();
    let per_replica = ensemble
        .paths
        .par_iter()
        .map(|p| {
            same_group(group, p.group())?;
            first.grid().check_same(&p.grid())?;
            bucket_increments(p, buckets)
        })
        .collect::<Result<Vec<_>>>()?;
    drift_report(group, "flat", buckets, &per_replica, significance)
}

pub fn martingale_verdict(
    ensemble: &Ensemble<GroupPath>,
    alpha: &ConnectionFunction,
    buckets: usize,
    significance: f64,
) -> Result<DriftReport> {
    let first = ensemble
        .paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let group = first.group();
    same_group(group, alpha.group())?;
    let per_replica = ensemble
        .paths
        .par_iter()
        .map(|x| {
            first.grid().check_same(&x.grid())?;
            bucket_increments(&compensator(x, alpha)?, buckets)
        })
        .collect::<Result<Vec<_>>>()?;
    drift_report(group, alpha.label(), buckets, &per_replica, significance)
}

/// `martingale_verdict` without holding the ensemble in memory.
///
/// Replica `r` is `make(derive_seed(base_seed, r, 0), r)`, exactly as in
/// [`Ensemble::generate`], so both routes give identical reports.
pub fn martingale_verdict_streaming<F>(
    group: GroupKind,
    alpha: &ConnectionFunction,
    replicas: usize,
    base_seed: u64,
    buckets: usize,
    significance: f64,
    make: F,
) -> Result<DriftReport>
where
    F: Fn(u64, usize) -> Result<GroupPath> + Sync,
{
    same_group(group, alpha.group())?;
    if replicas < MIN_REPLICAS {
        return Err(Error::Power {
            found: replicas,
            required: MIN_REPLICAS,
        });
    }
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let x = make(derive_seed(base_seed, r as u64, 0), r)?;
            same_group(group, x.group())?;
            bucket_increments(&compensator(&x, alpha)?, buckets)
        })
        .collect::<Result<Vec<_>>>()?;
    drift_report(group, alpha.label(), buckets, &per_replica, significance)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QvLinearityReport {
    pub group: GroupKind,
    pub replicas: usize,
    pub dim: usize,
    pub horizon: f64,
    /// Mean over replicas of `terminal / (dim · horizon)`.
    pub mean_ratio: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const QV_TOLERANCE: f64 = 0.05;

/// Checks `∫ g(dL, dL) ≈ n·t` for paths driven by the metric's Brownian motion.
pub fn qv_linearity_check(
    ensemble: &Ensemble<GroupPath>,
    metric: &MetricSpec,
) -> Result<QvLinearityReport> {
    let first = ensemble
        .paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let group = first.group();
    same_group(group, metric.group)?;
    let n = group.spec().algebra_dim();
    if let Some(cov) = &ensemble.covariance {
        let expected = metric.gram.inverse()?;
        let product = cov.try_mul(&metric.gram)?;
        let defect = (&product - &Matrix::identity(n)).max_abs();
        if defect > 1e-9 {
            return Err(Error::Precondition(format!(
                "driver covariance is not the inverse Gram matrix (‖ΣG − I‖ = {defect:.3e}, expected Σ = {:?})",
                expected.as_slice()
            )));
        }
    }
    let horizon = first.grid().horizon();
    let ratios = ensemble
        .paths
        .par_iter()
        .map(|x| {
            same_group(group, x.group())?;
            let q = quadratic_integral_of(&metric.gram, &mc_increments(x)?);
            Ok(q.last().copied().unwrap_or(0.0) / (n as f64 * x.grid().horizon()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let r = ratios.len() as f64;
    let mut acc = Neumaier::default();
    ratios.iter().for_each(|x| acc.add(*x));
    let mean_ratio = acc.total() / r;
    let var = if ratios.len() > 1 {
        ratios.iter().map(|x| (x - mean_ratio).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    Ok(QvLinearityReport {
        group,
        replicas: ratios.len(),
        dim: n,
        horizon,
        mean_ratio,
        std_error: (var / r).sqrt(),
        tolerance: QV_TOLERANCE,
        passed: (mean_ratio - 1.0).abs() < QV_TOLERANCE,
    })
}
