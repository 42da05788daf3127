//! Stochastic Campbell–Hausdorff identities, checked pathwise on shared noise.
//!
//! For algebra martingales `M`, `N` with null cross-variation and a connection
//! with `α(A,A) = 0`:
//!
//! ```text
//! e(M_t + N_t) = e(∫₀ᵗ Ad(e(N_s)) dM_s) · e(N_t)
//! L(X_t Y_t)   = ∫₀ᵗ Ad(Y_s⁻¹) dL(X_s) + L(Y_t)
//! ```
//!
//! Both sides are simulated from the same increments and compared state by state.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{frobenius_dist, mat_exp, mat_log, Matrix};
use crate::connections::ConnectionFunction;
use crate::error::{Error, Result};
use crate::explog::{ito_exponential, ito_logarithm, AlgebraConnection};
use crate::groups::{same_group, Coords, GroupKind};
use crate::paths::{
    brownian_driver, derive_seed, ladder_grid, null_qv_check, AlgebraPath, GroupPath, LadderRung,
    Sampled, TimeGrid,
};

/// Where `Ad(Y)` is evaluated inside each step of an Ad-integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdRule {
    /// `Y_k`, the Itô reading.
    #[default]
    LeftPoint,
    /// `Y_k · exp(½ log(Y_k⁻¹ Y_{k+1}))`, the geodesic midpoint of the step.
    Midpoint,
}

impl std::fmt::Display for AdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdRule::LeftPoint => "leftpoint",
            AdRule::Midpoint => "midpoint",
        })
    }
}

impl std::str::FromStr for AdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leftpoint" | "left" | "ito" => Ok(AdRule::LeftPoint),
            "midpoint" | "mid" => Ok(AdRule::Midpoint),
            other => Err(Error::InvalidArgument(format!("unknown Ad rule '{other}'"))),
        }
    }
}

fn evaluation_points(y: &GroupPath, rule: AdRule) -> Result<Vec<Matrix>> {
    let steps = y.grid().steps();
    match rule {
        AdRule::LeftPoint => Ok(y.values()[..steps].to_vec()),
        AdRule::Midpoint => (0..steps)
            .map(|k| {
                let step = &y.at(k).inverse()? * y.at(k + 1);
                let half = mat_exp(&mat_log(&step)?.scale(0.5))?;
                Ok(y.at(k) * &half)
            })
            .collect(),
    }
}

/// `Σ_k Ad(g_k) ΔM_k` where `g_k` is `Y` (or `Y⁻¹` when `invert`) at the rule's point.
fn ad_sum(y: &GroupPath, increments: &[Coords], rule: AdRule, invert: bool) -> Result<AlgebraPath> {
    let spec = y.group().spec();
    let points = evaluation_points(y, rule)?;
    let steps = points
        .iter()
        .zip(increments)
        .map(|(g, d)| {
            let g_inv = g.inverse()?;
            if invert {
                spec.adjoint_with_inverse(&g_inv, g, d)
            } else {
                spec.adjoint_with_inverse(g, &g_inv, d)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    AlgebraPath::from_increments(y.group(), y.grid(), steps)
}

fn check_pair(group: GroupKind, a: TimeGrid, other_group: GroupKind, b: TimeGrid) -> Result<()> {
    same_group(group, other_group)?;
    a.check_same(&b)
}

pub fn ad_integral(y: &GroupPath, m: &AlgebraPath) -> Result<AlgebraPath> {
    ad_integral_with(y, m, AdRule::LeftPoint)
}

pub fn ad_integral_with(y: &GroupPath, m: &AlgebraPath, rule: AdRule) -> Result<AlgebraPath> {
    check_pair(y.group(), y.grid(), m.group(), m.grid())?;
    let inc: Vec<Coords> = m.increments().collect();
    ad_sum(y, &inc, rule, false)
}

pub fn product_path(x: &GroupPath, y: &GroupPath) -> Result<GroupPath> {
    check_pair(x.group(), x.grid(), y.group(), y.grid())?;
    let values = x
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| a * b)
        .collect();
    GroupPath::from_values(x.group(), x.grid(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChOptions {
    pub rule: AdRule,
    /// When false, hypothesis violations are ignored (negative controls).
    pub enforce_hypotheses: bool,
    /// Family-wise significance of the null quadratic variation precondition.
    pub qv_significance: f64,
}

impl Default for ChOptions {
    fn default() -> Self {
        Self {
            rule: AdRule::LeftPoint,
            enforce_hypotheses: true,
            qv_significance: 1e-6,
        }
    }
}

const ALPHA_SYMMETRIC_TOL: f64 = 1e-12;

fn check_hypotheses(
    alpha: &ConnectionFunction,
    p: &impl Sampled,
    q: &impl Sampled,
    opts: &ChOptions,
) -> Result<()> {
    if !opts.enforce_hypotheses {
        return Ok(());
    }
    let defect = alpha.symmetric_defect();
    if defect > ALPHA_SYMMETRIC_TOL {
        return Err(Error::Precondition(format!(
            "α(A,A) = 0 fails for connection '{}' (symmetric part {defect:.3e})",
            alpha.label()
        )));
    }
    let qv = null_qv_check(p, q, opts.qv_significance)?;
    if !qv.passed {
        return Err(Error::Precondition(format!(
            "null quadratic variation fails (max |z| {:.2} ≥ {:.2})",
            qv.max_abs_z, qv.critical_z
        )));
    }
    Ok(())
}

/// Per-state distance between `e(M+N)` and `e(∫Ad(e(N))dM)·e(N)`.
pub fn ch_residual(
    m: &AlgebraPath,
    n: &AlgebraPath,
    alpha: &ConnectionFunction,
    opts: &ChOptions,
) -> Result<Vec<f64>> {
    check_pair(m.group(), m.grid(), n.group(), n.grid())?;
    same_group(m.group(), alpha.group())?;
    check_hypotheses(alpha, m, n, opts)?;
    let flat = AlgebraConnection::flat(m.group());
    let lhs = ito_exponential(&m.add(n)?, alpha, &flat)?;
    let y = ito_exponential(n, alpha, &flat)?;
    let a = ad_integral_with(&y, m, opts.rule)?;
    let w = ito_exponential(&a, alpha, &flat)?;
    lhs.values()
        .iter()
        .zip(w.values().iter().zip(y.values()))
        .map(|(l, (w, y))| frobenius_dist(l, &(w * y)))
        .collect()
}

/// Per-state coordinate distance between `L(X·Y)` and `∫Ad(Y⁻¹)dL(X) + L(Y)`.
pub fn log_product_residual(
    x: &GroupPath,
    y: &GroupPath,
    alpha: &ConnectionFunction,
    opts: &ChOptions,
) -> Result<Vec<f64>> {
    check_pair(x.group(), x.grid(), y.group(), y.grid())?;
    same_group(x.group(), alpha.group())?;
    check_hypotheses(alpha, x, y, opts)?;
    let flat = AlgebraConnection::flat(x.group());
    let lhs = ito_logarithm(&product_path(x, y)?, alpha, &flat)?;
    let lx = ito_logarithm(x, alpha, &flat)?;
    let lx_inc: Vec<Coords> = lx.increments().collect();
    let rhs = ad_sum(y, &lx_inc, opts.rule, true)?.add(&ito_logarithm(y, alpha, &flat)?)?;
    Ok((0..=x.grid().steps())
        .map(|k| {
            lhs.state(k)
                .iter()
                .zip(rhs.state(k))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CHReport {
    pub group: GroupKind,
    pub connection: String,
    pub rule: AdRule,
    pub replicas: usize,
    pub base_seed: u64,
    pub horizon: f64,
    pub dts: Vec<f64>,
    pub ch: Vec<LadderRung>,
    pub log_product: Vec<LadderRung>,
}

impl CHReport {
    /// True when each rung's mean is below the previous one, allowing one standard error.
    pub fn monotone(rungs: &[LadderRung]) -> bool {
        rungs
            .windows(2)
            .all(|w| w[1].mean <= w[0].mean + w[1].std_error)
    }
}

/// Runs both identities over a dt ladder on horizon `horizon`.
///
/// Replica `r` draws `M` and `N` as unit Brownian motions at the finest step
/// from streams 0 and 1 of `derive_seed(base_seed, r, ·)`; coarser rungs reuse
/// the same paths subsampled, so rungs differ only by discretisation.
pub fn ch_ladder(
    group: GroupKind,
    alpha: &ConnectionFunction,
    dts: &[f64],
    horizon: f64,
    replicas: usize,
    base_seed: u64,
    opts: &ChOptions,
) -> Result<CHReport> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    let (grid, factors) = ladder_grid(dts, horizon)?;
    let n = group.spec().algebra_dim();
    let cov = Matrix::identity(n);
    let flat = AlgebraConnection::flat(group);
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let m = brownian_driver(group, grid, derive_seed(base_seed, r as u64, 0), &cov)?;
            let nn = brownian_driver(group, grid, derive_seed(base_seed, r as u64, 1), &cov)?;
            factors
                .iter()
                .map(|&f| {
                    let (mc, nc) = (m.coarsen(f)?, nn.coarsen(f)?);
                    let ch = *ch_residual(&mc, &nc, alpha, opts)?.last().unwrap();
                    let x = ito_exponential(&mc, alpha, &flat)?;
                    let y = ito_exponential(&nc, alpha, &flat)?;
                    let lp = *log_product_residual(&x, &y, alpha, opts)?.last().unwrap();
                    Ok((ch, lp))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rungs = |pick: fn(&(f64, f64)) -> f64| -> Vec<LadderRung> {
        (0..dts.len())
            .map(|i| {
                LadderRung::from_samples(
                    dts[i],
                    &per_replica.iter().map(|r| pick(&r[i])).collect::<Vec<_>>(),
                )
            })
            .collect()
    };
    let ch = rungs(|p| p.0);
    let log_product = rungs(|p| p.1);
    Ok(CHReport {
        group,
        connection: alpha.label().to_string(),
        rule: opts.rule,
        replicas,
        base_seed,
        horizon,
        dts: dts.to_vec(),
        ch,
        log_product,
    })
}

/// Left-trivialised increments of `X·Y` minus those predicted by the product rule; used in tests.
#[cfg(test)]
fn product_increment_gap(x: &GroupPath, y: &GroupPath) -> Result<f64> {
    use crate::calculus::mc_increments;
    let xy = mc_increments(&product_path(x, y)?)?;
    let (ix, iy) = (mc_increments(x)?, mc_increments(y)?);
    let spec = x.group().spec();
    let mut worst = 0.0f64;
    for k in 0..xy.steps.len() {
        let pred = spec.adjoint(&y.at(k).inverse()?, &ix.steps[k])?;
        for i in 0..pred.len() {
            worst = worst.max((xy.steps[k][i] - pred[i] - iy.steps[k][i]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::{alpha_biinvariant, alpha_levi_civita, MetricSpec};
    use crate::explog::strat_exponential;
    use crate::groups::AlgebraVector;
    use approx::assert_abs_diff_eq;

    fn bm(group: GroupKind, steps: usize, seed: u64) -> AlgebraPath {
        let n = group.spec().algebra_dim();
        brownian_driver(
            group,
            TimeGrid::new(1.0, steps).unwrap(),
            seed,
            &Matrix::identity(n),
        )
        .unwrap()
    }

    fn line(group: GroupKind, a: &[f64], grid: TimeGrid) -> AlgebraPath {
        let values = (0..=grid.steps())
            .flat_map(|k| a.iter().map(move |x| x * grid.time(k)))
            .collect();
        AlgebraPath::from_values(group, grid, values).unwrap()
    }

    #[test]
    fn ad_integral_examples() {
        let g = GroupKind::Se3;
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let m = bm(g, 50, 1);
        let id = GroupPath::constant(g, grid, g.spec().identity()).unwrap();
        let same = ad_integral(&id, &m).unwrap();
        for (a, b) in same.values().iter().zip(m.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
        let a = [0.1, 0.2, -0.3, 1.0, 0.0, 2.0];
        let h = mat_exp(
            &AlgebraVector::new(g, &[0.5, -0.4, 0.3, 1.0, 2.0, -1.0])
                .unwrap()
                .to_matrix(),
        )
        .unwrap();
        let yc = GroupPath::constant(g, grid, h.clone()).unwrap();
        let out = ad_integral(&yc, &line(g, &a, grid)).unwrap();
        let want = g.spec().adjoint(&h, &a).unwrap();
        for (x, y) in out.terminal().iter().zip(&want) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
        let y = strat_exponential(&bm(g, 50, 2)).unwrap();
        let m2 = bm(g, 50, 3);
        let (i1, i2) = (ad_integral(&y, &m).unwrap(), ad_integral(&y, &m2).unwrap());
        let i12 = ad_integral(&y, &m.scale(2.0).add(&m2).unwrap()).unwrap();
        for k in 0..i12.values().len() {
            assert_abs_diff_eq!(
                i12.values()[k],
                2.0 * i1.values()[k] + i2.values()[k],
                epsilon = 1e-12
            );
        }
        let short = bm(g, 25, 1);
        assert!(ad_integral(&y, &short).is_err());
    }

    #[test]
    fn zero_n_gives_zero_residual() {
        let g = GroupKind::So3;
        let m = bm(g, 200, 4);
        let zero = AlgebraPath::zero(g, m.grid());
        for rule in [AdRule::LeftPoint, AdRule::Midpoint] {
            let opts = ChOptions {
                rule,
                ..Default::default()
            };
            let r = ch_residual(&m, &zero, &alpha_biinvariant(g), &opts).unwrap();
            assert!(r.iter().all(|v| *v == 0.0), "{rule}");
        }
    }

    #[test]
    fn commuting_lines_give_small_residual() {
        let g = GroupKind::So3;
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let m = line(g, &[0.3, 0.6, -0.9], grid);
        let n = line(g, &[-0.1, -0.2, 0.3], grid);
        let opts = ChOptions {
            enforce_hypotheses: false,
            ..Default::default()
        };
        let r = ch_residual(&m, &n, &alpha_biinvariant(g), &opts).unwrap();
        assert!(r.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn log_product_trivial_cases() {
        let g = GroupKind::So3;
        let alpha = alpha_biinvariant(g);
        let x = strat_exponential(&bm(g, 200, 5)).unwrap();
        let id = GroupPath::constant(g, x.grid(), g.spec().identity()).unwrap();
        let opts = ChOptions::default();
        assert!(log_product_residual(&x, &id, &alpha, &opts)
            .unwrap()
            .iter()
            .all(|v| *v < 1e-13));
        assert!(log_product_residual(&id, &x, &alpha, &opts)
            .unwrap()
            .iter()
            .all(|v| *v < 1e-13));
    }

    #[test]
    fn hypotheses_are_enforced() {
        let g = GroupKind::Se3;
        let m = bm(g, 200, 6);
        let n = bm(g, 200, 7);
        let lc = alpha_levi_civita(&MetricSpec::standard(g, 1.0).unwrap()).unwrap();
        let err = ch_residual(&m, &n, &lc, &ChOptions::default()).unwrap_err();
        assert!(
            matches!(&err, Error::Precondition(msg) if msg.contains("α(A,A)")),
            "{err}"
        );
        let relaxed = ChOptions {
            enforce_hypotheses: false,
            ..Default::default()
        };
        assert!(ch_residual(&m, &n, &lc, &relaxed).is_ok());
        // M against itself has full quadratic variation.
        let so3 = GroupKind::So3;
        let p = bm(so3, 2000, 8);
        let err = ch_residual(&p, &p, &alpha_biinvariant(so3), &ChOptions::default()).unwrap_err();
        assert!(
            matches!(&err, Error::Precondition(msg) if msg.contains("null quadratic")),
            "{err}"
        );
    }

    #[test]
    fn product_path_examples() {
        let g = GroupKind::Se3;
        let x = strat_exponential(&bm(g, 300, 9)).unwrap();
        let id = GroupPath::constant(g, x.grid(), g.spec().identity()).unwrap();
        assert_eq!(product_path(&x, &id).unwrap(), x);
        let e = product_path(&x, &x.inverse().unwrap()).unwrap();
        assert!(e
            .values()
            .iter()
            .all(|m| frobenius_dist(m, &g.spec().identity()).unwrap() < 1e-12));
        let y = strat_exponential(&bm(g, 300, 10)).unwrap();
        assert!(
            product_path(&x, &y)
                .unwrap()
                .max_membership_defect()
                .unwrap()
                < 1e-6
        );
    }

    #[test]
    fn product_rule_is_exact_at_one_step_level() {
        let g = GroupKind::So3;
        let x = strat_exponential(&bm(g, 100, 11)).unwrap();
        let y = strat_exponential(&bm(g, 100, 12)).unwrap();
        // Per step the left-point rule misses only the second-order bracket term.
        assert!(product_increment_gap(&x, &y).unwrap() < 0.05);
    }

    #[test]
    fn ladder_is_deterministic_and_shrinks() {
        let g = GroupKind::So3;
        let alpha = alpha_biinvariant(g);
        let dts = [4e-3, 2e-3, 1e-3];
        for rule in [AdRule::LeftPoint, AdRule::Midpoint] {
            let opts = ChOptions {
                rule,
                ..Default::default()
            };
            let a = ch_ladder(g, &alpha, &dts, 1.0, 16, 3, &opts).unwrap();
            let b = ch_ladder(g, &alpha, &dts, 1.0, 16, 3, &opts).unwrap();
            assert_eq!(a, b);
            assert!(a.ch[2].mean < a.ch[0].mean, "{rule}: {:?}", a.ch);
            assert!(
                a.log_product[2].mean < a.log_product[0].mean,
                "{rule}: {:?}",
                a.log_product
            );
        }
        assert!(ch_ladder(g, &alpha, &[3e-3, 2e-3], 1.0, 4, 0, &ChOptions::default()).is_err());
    }
}
