//! Sampled paths on a uniform time grid, seeded Brownian drivers, and realized
//! quadratic covariation.
//!
//! # Seeding
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `derive_seed(base_seed, replica, stream)`, a SplitMix64 hash of the three
//! inputs. Replica `r` therefore draws the same numbers no matter which worker
//! produces it or in which order, and independent drivers of one replica use
//! different `stream` tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::algebra::Matrix;
use crate::error::{Error, Result};
use crate::groups::{same_group, Coords, GroupKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs a positive horizon and at least one step (T = {horizon}, steps = {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step `dt` covering `[0, horizon]`; `horizon / dt` must be an integer.
    pub fn with_dt(horizon: f64, dt: f64) -> Result<Self> {
        let ratio = horizon / dt;
        let steps = ratio.round();
        if !(dt > 0.0) || steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} does not divide the horizon {horizon}"
            )));
        }
        Self::new(horizon, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(T = {}, steps = {}) vs (T = {}, steps = {})",
                self.horizon, self.steps, other.horizon, other.steps
            )));
        }
        Ok(())
    }
}

/// Anything sampled on a grid as a vector of real coordinates per grid point.
pub trait Sampled {
    fn grid(&self) -> TimeGrid;
    /// Number of real coordinates per grid point.
    fn width(&self) -> usize;
    fn state(&self, k: usize) -> &[f64];
}

/// A discretised 𝔤-valued semimartingale, stored as states (not increments).
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraPath {
    group: GroupKind,
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl AlgebraPath {
    pub fn from_values(group: GroupKind, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let dim = group.spec().algebra_dim();
        if values.len() != (grid.steps + 1) * dim {
            return Err(Error::Dimension(format!(
                "{group} path on {} steps needs {} values, got {}",
                grid.steps,
                (grid.steps + 1) * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("algebra path values".into()));
        }
        Ok(Self {
            group,
            grid,
            dim,
            values,
        })
    }

    pub fn zero(group: GroupKind, grid: TimeGrid) -> Self {
        let dim = group.spec().algebra_dim();
        Self {
            group,
            grid,
            dim,
            values: vec![0.0; (grid.steps + 1) * dim],
        }
    }

    /// Path starting at 0 whose `k`-th increment is `increments[k]`.
    pub fn from_increments<I>(group: GroupKind, grid: TimeGrid, increments: I) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: AsRef<[f64]>,
    {
        let dim = group.spec().algebra_dim();
        let mut values = Vec::with_capacity((grid.steps + 1) * dim);
        values.extend(std::iter::repeat_n(0.0, dim));
        let mut count = 0;
        for inc in increments {
            let inc = inc.as_ref();
            if inc.len() != dim {
                return Err(Error::Dimension(format!(
                    "increment of length {}, expected {dim}",
                    inc.len()
                )));
            }
            let base = values.len() - dim;
            for i in 0..dim {
                let next = values[base + i] + inc[i];
                values.push(next);
            }
            count += 1;
        }
        if count != grid.steps {
            return Err(Error::Dimension(format!(
                "{count} increments for {} steps",
                grid.steps
            )));
        }
        Self::from_values(group, grid, values)
    }

    pub fn group(&self) -> GroupKind {
        self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.grid.steps)
    }

    pub fn increment(&self, k: usize) -> Coords {
        let (a, b) = (self.state(k), self.state(k + 1));
        b.iter().zip(a).map(|(y, x)| y - x).collect()
    }

    pub fn increments(&self) -> impl Iterator<Item = Coords> + '_ {
        (0..self.grid.steps).map(|k| self.increment(k))
    }

    pub fn add(&self, other: &AlgebraPath) -> Result<AlgebraPath> {
        same_group(self.group, other.group)?;
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
            ..self.clone()
        })
    }

    pub fn scale(&self, s: f64) -> AlgebraPath {
        Self {
            values: self.values.iter().map(|a| a * s).collect(),
            ..self.clone()
        }
    }

    /// Keeps every `factor`-th state, giving the same path on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<AlgebraPath> {
        if factor == 0 || !self.grid.steps.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by {factor}",
                self.grid.steps
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps / factor)?;
        let values = (0..=grid.steps)
            .flat_map(|k| self.state(k * factor).iter().copied())
            .collect();
        Ok(Self {
            grid,
            values,
            ..self.clone()
        })
    }

    /// Euclidean distance between the terminal values of two paths.
    pub fn terminal_distance(&self, other: &AlgebraPath) -> Result<f64> {
        same_group(self.group, other.group)?;
        self.grid.check_same(&other.grid)?;
        Ok(self
            .terminal()
            .iter()
            .zip(other.terminal())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl Sampled for AlgebraPath {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn width(&self) -> usize {
        self.dim
    }

    fn state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// A discretised G-valued semimartingale.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPath {
    group: GroupKind,
    grid: TimeGrid,
    values: Vec<Matrix>,
}

impl GroupPath {
    /// Checks shapes only; membership is the integrators' responsibility.
    pub fn from_values(group: GroupKind, grid: TimeGrid, values: Vec<Matrix>) -> Result<Self> {
        let d = group.spec().matrix_dim();
        if values.len() != grid.steps + 1 {
            return Err(Error::Dimension(format!(
                "group path on {} steps needs {} states, got {}",
                grid.steps,
                grid.steps + 1,
                values.len()
            )));
        }
        if values.iter().any(|m| m.rows() != d || m.cols() != d) {
            return Err(Error::Dimension(format!("{group} states must be {d}x{d}")));
        }
        Ok(Self {
            group,
            grid,
            values,
        })
    }

    pub fn constant(group: GroupKind, grid: TimeGrid, g: Matrix) -> Result<Self> {
        Self::from_values(group, grid, vec![g; grid.steps + 1])
    }

    pub fn group(&self) -> GroupKind {
        self.group
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &Matrix {
        &self.values[k]
    }

    pub fn terminal(&self) -> &Matrix {
        &self.values[self.grid.steps]
    }

    pub fn max_membership_defect(&self) -> Result<f64> {
        let spec = self.group.spec();
        self.values
            .iter()
            .try_fold(0.0f64, |m, g| Ok(m.max(spec.membership_defect(g)?)))
    }

    /// Pointwise inverse path.
    pub fn inverse(&self) -> Result<GroupPath> {
        let values = self
            .values
            .iter()
            .map(|g| g.inverse())
            .collect::<Result<_>>()?;
        Ok(Self {
            values,
            ..self.clone()
        })
    }
}

impl Sampled for GroupPath {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn width(&self) -> usize {
        let d = self.group.spec().matrix_dim();
        d * d
    }

    fn state(&self, k: usize) -> &[f64] {
        self.values[k].as_slice()
    }
}

/// Independently seeded replicas of one experiment.
#[derive(Debug, Clone)]
pub struct Ensemble<P> {
    pub base_seed: u64,
    pub paths: Vec<P>,
    /// Covariance of the Brownian driver that produced the paths, when known.
    pub covariance: Option<Matrix>,
}

impl<P: Send> Ensemble<P> {
    /// Builds `replicas` paths, replica `r` from `make(derive_seed(base_seed, r, 0), r)`.
    /// Runs on the current rayon pool; output order is replica order.
    pub fn generate<F>(replicas: usize, base_seed: u64, make: F) -> Result<Self>
    where
        F: Fn(u64, usize) -> Result<P> + Sync,
    {
        if replicas == 0 {
            return Err(Error::InvalidArgument(
                "an ensemble needs at least one replica".into(),
            ));
        }
        let paths = (0..replicas)
            .into_par_iter()
            .map(|r| make(derive_seed(base_seed, r as u64, 0), r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base_seed,
            paths,
            covariance: None,
        })
    }

    pub fn with_covariance(mut self, covariance: Matrix) -> Self {
        self.covariance = Some(covariance);
        self
    }

    pub fn replicas(&self) -> usize {
        self.paths.len()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` in replica `replica`.
pub fn derive_seed(base_seed: u64, replica: u64, stream: u64) -> u64 {
    splitmix64(
        splitmix64(splitmix64(base_seed) ^ replica) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03),
    )
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brownian motion in the algebra with covariance `covariance` per unit time.
pub fn brownian_driver(
    group: GroupKind,
    grid: TimeGrid,
    seed: u64,
    covariance: &Matrix,
) -> Result<AlgebraPath> {
    let n = group.spec().algebra_dim();
    if covariance.rows() != n || covariance.cols() != n {
        return Err(Error::Dimension(format!(
            "{group} driver covariance must be {n}x{n}"
        )));
    }
    let chol = covariance.cholesky()?;
    gaussian_path(group, grid, seed, &vec![0.0; n], &chol)
}

/// `ΔM_k = b·dt + D·ΔW_k` with `ΔW_k ~ N(0, dt·I)`.
pub fn drift_diffusion_driver(
    group: GroupKind,
    grid: TimeGrid,
    seed: u64,
    drift: &[f64],
    diffusion: &Matrix,
) -> Result<AlgebraPath> {
    let n = group.spec().algebra_dim();
    if drift.len() != n || diffusion.rows() != n || diffusion.cols() != n {
        return Err(Error::Dimension(format!(
            "{group} drift must have length {n} and diffusion be {n}x{n}"
        )));
    }
    if drift.iter().any(|b| !b.is_finite()) || !diffusion.is_finite() {
        return Err(Error::NonFinite("drift or diffusion".into()));
    }
    gaussian_path(group, grid, seed, drift, diffusion)
}

fn gaussian_path(
    group: GroupKind,
    grid: TimeGrid,
    seed: u64,
    drift: &[f64],
    factor: &Matrix,
) -> Result<AlgebraPath> {
    let n = drift.len();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut rng = rng_from_seed(seed);
    let f = factor.as_slice();
    let deterministic = f.iter().all(|x| *x == 0.0);
    let mut values = Vec::with_capacity((grid.steps + 1) * n);
    values.extend(std::iter::repeat_n(0.0, n));
    let mut z: SmallVec<[f64; 6]> = SmallVec::from_elem(0.0, n);
    for _ in 0..grid.steps {
        if !deterministic {
            z.iter_mut()
                .for_each(|zi| *zi = StandardNormal.sample(&mut rng));
        }
        let base = values.len() - n;
        for i in 0..n {
            let noise: f64 = f[i * n..(i + 1) * n]
                .iter()
                .zip(&z)
                .map(|(a, b)| a * b)
                .sum();
            let next = values[base + i] + drift[i] * dt + noise * sqrt_dt;
            values.push(next);
        }
    }
    AlgebraPath::from_values(group, grid, values)
}

/// Running realized covariation `Σ_{m<k} ΔP^i_m ΔQ^j_m`, for each grid point `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariation {
    pub grid: TimeGrid,
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
}

impl Covariation {
    pub fn at(&self, k: usize) -> &[f64] {
        let w = self.rows * self.cols;
        &self.values[k * w..(k + 1) * w]
    }

    pub fn terminal(&self) -> &[f64] {
        self.at(self.grid.steps)
    }

    pub fn entry(&self, k: usize, i: usize, j: usize) -> f64 {
        self.at(k)[i * self.cols + j]
    }
}

pub fn quadratic_covariation(p: &impl Sampled, q: &impl Sampled) -> Result<Covariation> {
    let grid = p.grid();
    grid.check_same(&q.grid())?;
    let (rows, cols) = (p.width(), q.width());
    let w = rows * cols;
    let mut values = vec![0.0; (grid.steps + 1) * w];
    for k in 0..grid.steps {
        let (p0, p1, q0, q1) = (p.state(k), p.state(k + 1), q.state(k), q.state(k + 1));
        for i in 0..rows {
            let dp = p1[i] - p0[i];
            for j in 0..cols {
                let dq = q1[j] - q0[j];
                values[(k + 1) * w + i * cols + j] = values[k * w + i * cols + j] + dp * dq;
            }
        }
    }
    Ok(Covariation {
        grid,
        rows,
        cols,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullQvResult {
    pub passed: bool,
    pub significance: f64,
    /// Two-sided critical value after a Bonferroni split over all entries.
    pub critical_z: f64,
    pub max_abs_z: f64,
    /// Row-major terminal z-scores, `rows × cols`.
    pub z: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

/// Tests whether every terminal cross-covariation entry is compatible with zero.
///
/// Under independence `[P^i, Q^j]_T = Σ ΔP^i ΔQ^j` is a sum of uncorrelated
/// mean-zero terms; its variance is estimated by `Σ (ΔP^i ΔQ^j)²`. Entries
/// are tested two-sided with the significance split evenly across all
/// `rows × cols` entries, so `significance` bounds the family-wise rejection
/// rate for truly independent paths. Entries where both the sum and its
/// variance estimate vanish (constant coordinates) count as zero.
pub fn null_qv_check(
    p: &impl Sampled,
    q: &impl Sampled,
    significance: f64,
) -> Result<NullQvResult> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    let grid = p.grid();
    grid.check_same(&q.grid())?;
    let (rows, cols) = (p.width(), q.width());
    let mut sum = vec![0.0; rows * cols];
    let mut sum_sq = vec![0.0; rows * cols];
    for k in 0..grid.steps {
        let (p0, p1, q0, q1) = (p.state(k), p.state(k + 1), q.state(k), q.state(k + 1));
        for i in 0..rows {
            let dp = p1[i] - p0[i];
            for j in 0..cols {
                let x = dp * (q1[j] - q0[j]);
                sum[i * cols + j] += x;
                sum_sq[i * cols + j] += x * x;
            }
        }
    }
    let tail = significance / (2.0 * (rows * cols) as f64);
    let critical_z = normal_quantile(1.0 - tail);
    let z: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, v)| if *v > 0.0 { s / v.sqrt() } else { 0.0 })
        .collect();
    let max_abs_z = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(NullQvResult {
        passed: max_abs_z < critical_z,
        significance,
        critical_z,
        max_abs_z,
        z,
        rows,
        cols,
    })
}

/// Replica statistics of a terminal error at one step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRung {
    pub dt: f64,
    pub mean: f64,
    pub max: f64,
    pub std_error: f64,
}

impl LadderRung {
    pub fn from_samples(dt: f64, samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            dt,
            mean,
            max: samples.iter().copied().fold(0.0, f64::max),
            std_error: (var / n).sqrt(),
        }
    }
}

/// Finest grid of a dt ladder and the coarsening factor of each rung.
pub fn ladder_grid(dts: &[f64], horizon: f64) -> Result<(TimeGrid, Vec<usize>)> {
    if dts.is_empty() {
        return Err(Error::InvalidArgument("empty dt ladder".into()));
    }
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let grid = TimeGrid::with_dt(horizon, finest)?;
    let factors = dts
        .iter()
        .map(|&dt| {
            let f = (dt / finest).round();
            if f < 1.0 || (f * finest - dt).abs() > 1e-9 * dt || grid.steps % f as usize != 0 {
                Err(Error::GridMismatch(format!(
                    "dt {dt} is not a multiple of the finest dt {finest}"
                )))
            } else {
                Ok(f as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, factors))
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
