//! Stochastic exponentials and logarithms between algebra paths and group paths.
//!
//! All four operators inject or extract one increment per grid step through
//! the matrix exponential and logarithm, so every state of a produced group
//! path is an exact group element up to roundoff:
//!
//! * Stratonovich exponential: `X_{k+1} = X_k · exp(ΔL_k)`.
//! * Stratonovich logarithm: `L_t = Σ log(X_k⁻¹ X_{k+1})`.
//! * Itô exponential: `X_{k+1} = X_k · exp(ΔM_k + ½Γ(ΔM_k,ΔM_k) − ½α(ΔM_k,ΔM_k))`.
//! * Itô logarithm: `M_t = Σ ΔL_k + ½α(ΔL_k,ΔL_k) − ½Γ(ΔL_k,ΔL_k)`.
//!
//! `α` is the connection function of the left-invariant connection on the
//! group and `Γ` the (constant) Christoffel table of the connection on the
//! algebra, flat by default. The quadratic variation of one step is
//! approximated by `ΔM ΔMᵀ`.

use rayon::prelude::*;
use serde::Serialize;
use smallvec::SmallVec;

use crate::algebra::{mat_exp, Matrix};
use crate::calculus::mc_increments;
use crate::connections::ConnectionFunction;
use crate::error::{Error, Result};
use crate::groups::{same_group, Coords, GroupKind, MEMBERSHIP_TOL};
use crate::paths::{
    brownian_driver, derive_seed, ladder_grid, AlgebraPath, GroupPath, LadderRung, Sampled,
    TimeGrid,
};

/// A connection on the algebra with constant Christoffel symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraConnection {
    group: GroupKind,
    // christoffels[(i·n + j)·n + k] = Γ^k_ij
    christoffels: Vec<f64>,
    flat: bool,
}

impl AlgebraConnection {
    pub fn flat(group: GroupKind) -> Self {
        let n = group.spec().algebra_dim();
        Self {
            group,
            christoffels: vec![0.0; n * n * n],
            flat: true,
        }
    }

    /// Constant Christoffel table; must be symmetric in the lower indices.
    pub fn new(group: GroupKind, christoffels: Vec<f64>) -> Result<Self> {
        let n = group.spec().algebra_dim();
        if christoffels.len() != n * n * n {
            return Err(Error::Dimension(format!(
                "{group} Christoffel table needs {} entries",
                n * n * n
            )));
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (a, b) = (
                        christoffels[(i * n + j) * n + k],
                        christoffels[(j * n + i) * n + k],
                    );
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::InvalidArgument(format!(
                            "Christoffel symbols must be symmetric (Γ^{k}_{i}{j} = {a}, Γ^{k}_{j}{i} = {b})"
                        )));
                    }
                }
            }
        }
        let flat = christoffels.iter().all(|c| *c == 0.0);
        Ok(Self {
            group,
            christoffels,
            flat,
        })
    }

    pub fn group(&self) -> GroupKind {
        self.group
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn quadratic(&self, a: &[f64]) -> Coords {
        let n = a.len();
        let mut out: Coords = SmallVec::from_elem(0.0, n);
        for i in 0..n {
            for j in 0..n {
                let w = a[i] * a[j];
                let row = &self.christoffels[(i * n + j) * n..(i * n + j + 1) * n];
                out.iter_mut().zip(row).for_each(|(o, c)| *o += w * c);
            }
        }
        out
    }
}

/// Right-multiplies exponentials of `steps` onto the identity, checking membership each step.
pub(crate) fn develop<I>(group: GroupKind, grid: TimeGrid, steps: I) -> Result<GroupPath>
where
    I: IntoIterator<Item = Coords>,
{
    let spec = group.spec();
    let mut x = spec.identity();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    values.push(x.clone());
    for (k, y) in steps.into_iter().enumerate() {
        let inc = mat_exp(&spec.to_matrix_unchecked(&y))?;
        x = &x * &inc;
        let defect = spec.membership_defect(&x)?;
        if !(defect < MEMBERSHIP_TOL) {
            return Err(Error::IntegratorDrift {
                group,
                step: k + 1,
                defect,
            });
        }
        values.push(x.clone());
    }
    GroupPath::from_values(group, grid, values)
}

pub fn strat_exponential(l: &AlgebraPath) -> Result<GroupPath> {
    develop(l.group(), l.grid(), l.increments())
}

pub fn strat_logarithm(x: &GroupPath) -> Result<AlgebraPath> {
    let inc = mc_increments(x)?;
    AlgebraPath::from_increments(x.group(), x.grid(), &inc.steps)
}

fn check_connections(
    group: GroupKind,
    alpha: &ConnectionFunction,
    conn: &AlgebraConnection,
) -> Result<()> {
    same_group(group, alpha.group())?;
    same_group(group, conn.group())
}

pub fn ito_exponential(
    m: &AlgebraPath,
    alpha: &ConnectionFunction,
    conn: &AlgebraConnection,
) -> Result<GroupPath> {
    check_connections(m.group(), alpha, conn)?;
    let steps = m.increments().map(|mut d| {
        let q = alpha.quadratic(&d);
        let gamma = (!conn.is_flat()).then(|| conn.quadratic(&d));
        for i in 0..d.len() {
            if let Some(g) = &gamma {
                d[i] += 0.5 * g[i];
            }
            d[i] -= 0.5 * q[i];
        }
        d
    });
    develop(m.group(), m.grid(), steps)
}

pub fn ito_logarithm(
    x: &GroupPath,
    alpha: &ConnectionFunction,
    conn: &AlgebraConnection,
) -> Result<AlgebraPath> {
    check_connections(x.group(), alpha, conn)?;
    let inc = mc_increments(x)?;
    let steps = inc.steps.into_iter().map(|mut d| {
        let q = alpha.quadratic(&d);
        let gamma = (!conn.is_flat()).then(|| conn.quadratic(&d));
        for i in 0..d.len() {
            d[i] += 0.5 * q[i];
            if let Some(g) = &gamma {
                d[i] -= 0.5 * g[i];
            }
        }
        d
    });
    AlgebraPath::from_increments(x.group(), x.grid(), steps)
}

/// Left translation `ξ·X_k` of every state.
pub fn translate_initial(xi: &Matrix, x: &GroupPath) -> Result<GroupPath> {
    let spec = x.group().spec();
    spec.check_member(xi)?;
    let values = x.values().iter().map(|g| xi * g).collect();
    GroupPath::from_values(x.group(), x.grid(), values)
}

/// Terminal round-trip errors `‖L(e(M)) − M‖` over a dt ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub group: GroupKind,
    pub connection: String,
    pub replicas: usize,
    pub base_seed: u64,
    pub horizon: f64,
    pub rungs: Vec<LadderRung>,
    /// `errors[rung][replica]`.
    pub errors: Vec<Vec<f64>>,
}

/// Replica `r` is a unit Brownian motion at the finest dt seeded by
/// `derive_seed(base_seed, r, 0)`; coarser rungs subsample the same path.
pub fn round_trip_ladder(
    group: GroupKind,
    alpha: &ConnectionFunction,
    dts: &[f64],
    horizon: f64,
    replicas: usize,
    base_seed: u64,
) -> Result<RoundTripReport> {
    same_group(group, alpha.group())?;
    if replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    let (grid, factors) = ladder_grid(dts, horizon)?;
    let cov = Matrix::identity(group.spec().algebra_dim());
    let flat = AlgebraConnection::flat(group);
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let fine = brownian_driver(group, grid, derive_seed(base_seed, r as u64, 0), &cov)?;
            factors
                .iter()
                .map(|&f| {
                    let m = fine.coarsen(f)?;
                    let back = ito_logarithm(&ito_exponential(&m, alpha, &flat)?, alpha, &flat)?;
                    back.terminal_distance(&m)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<Vec<f64>> = (0..dts.len())
        .map(|i| per_replica.iter().map(|r| r[i]).collect())
        .collect();
    let rungs = dts
        .iter()
        .zip(&errors)
        .map(|(&dt, e)| LadderRung::from_samples(dt, e))
        .collect();
    Ok(RoundTripReport {
        group,
        connection: alpha.label().to_string(),
        replicas,
        base_seed,
        horizon,
        rungs,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::frobenius_dist;
    use crate::connections::{alpha_biinvariant, alpha_levi_civita, MetricSpec};
    use crate::groups::AlgebraVector;
    use crate::paths::{brownian_driver, derive_seed};
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

    fn lc(group: GroupKind) -> ConnectionFunction {
        alpha_levi_civita(&MetricSpec::standard(group, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_driver_gives_identity() {
        for g in GroupKind::ALL {
            let grid = TimeGrid::new(1.0, 10).unwrap();
            let zero = AlgebraPath::zero(g, grid);
            let x = ito_exponential(&zero, &lc(g), &AlgebraConnection::flat(g)).unwrap();
            assert!(x.values().iter().all(|m| *m == g.spec().identity()));
            assert_eq!(strat_exponential(&zero).unwrap(), x);
            assert_eq!(strat_logarithm(&x).unwrap(), zero);
        }
    }

    #[test]
    fn line_develops_into_one_parameter_subgroup() {
        let g = GroupKind::Se3;
        let a = [0.4, -0.2, 0.7, 1.0, -0.5, 2.0];
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let x = strat_exponential(&line(g, &a, grid)).unwrap();
        let am = AlgebraVector::new(g, &a).unwrap().to_matrix();
        for k in 0..=50 {
            let exact = mat_exp(&am.scale(grid.time(k))).unwrap();
            assert!(frobenius_dist(x.at(k), &exact).unwrap() < 1e-12);
        }
        let back = strat_logarithm(&x).unwrap();
        for (got, want) in back.terminal().iter().zip(&a) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-12);
        }
    }

    #[test]
    fn strat_logarithm_inverts_strat_exponential() {
        for g in GroupKind::ALL {
            let m = bm(g, 500, 3);
            let back = strat_logarithm(&strat_exponential(&m).unwrap()).unwrap();
            for k in 0..=500 {
                for (a, b) in back.state(k).iter().zip(m.state(k)) {
                    assert!((a - b).abs() < 1e-12, "{g} step {k}");
                }
            }
        }
    }

    #[test]
    fn biinvariant_ito_operators_match_stratonovich_bitwise() {
        let g = GroupKind::So3;
        let alpha = alpha_biinvariant(g);
        let flat = AlgebraConnection::flat(g);
        let m = bm(g, 400, 17);
        let x = ito_exponential(&m, &alpha, &flat).unwrap();
        assert_eq!(x, strat_exponential(&m).unwrap());
        assert_eq!(
            ito_logarithm(&x, &alpha, &flat).unwrap(),
            strat_logarithm(&x).unwrap()
        );
    }

    #[test]
    fn ito_round_trip_converges() {
        let g = GroupKind::Se3;
        let alpha = lc(g);
        let flat = AlgebraConnection::flat(g);
        let fine = bm(g, 1000, 23);
        let errs: Vec<f64> = [4, 2, 1]
            .iter()
            .map(|&f| {
                let m = fine.coarsen(f).unwrap();
                let back =
                    ito_logarithm(&ito_exponential(&m, &alpha, &flat).unwrap(), &alpha, &flat)
                        .unwrap();
                back.terminal_distance(&m).unwrap()
            })
            .collect();
        assert!(errs[2] < 0.05, "{errs:?}");
    }

    #[test]
    fn compensator_identity_is_exact() {
        let g = GroupKind::Se2;
        let alpha = lc(g);
        let flat = AlgebraConnection::flat(g);
        let x = strat_exponential(&bm(g, 300, 5)).unwrap();
        let ito = ito_logarithm(&x, &alpha, &flat).unwrap();
        let strat = strat_logarithm(&x).unwrap();
        let inc = mc_increments(&x).unwrap();
        let mut acc = vec![0.0; 3];
        for (k, d) in inc.steps.iter().enumerate() {
            let q = alpha.quadratic(d);
            acc.iter_mut().zip(&q).for_each(|(a, b)| *a += 0.5 * b);
            for i in 0..3 {
                assert!((ito.state(k + 1)[i] - strat.state(k + 1)[i] - acc[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn smooth_path_logarithm_correction_is_order_dt() {
        let g = GroupKind::Se3;
        let alpha = lc(g);
        let flat = AlgebraConnection::flat(g);
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let aa = alpha.quadratic(&a);
        let norm_aa = aa.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm_aa > 0.5);
        for steps in [10, 100, 1000] {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let am = AlgebraVector::new(g, &a).unwrap().to_matrix();
            let values = (0..=steps)
                .map(|k| mat_exp(&am.scale(grid.time(k))).unwrap())
                .collect();
            let x = GroupPath::from_values(g, grid, values).unwrap();
            let log = ito_logarithm(&x, &alpha, &flat).unwrap();
            let dev = log
                .terminal()
                .iter()
                .zip(&a)
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                dev < grid.dt() * grid.horizon() * norm_aa * 2.0,
                "steps {steps}: {dev}"
            );
        }
    }

    #[test]
    fn translation_is_invisible_to_the_logarithm() {
        let g = GroupKind::Se3;
        let alpha = lc(g);
        let flat = AlgebraConnection::flat(g);
        let x = ito_exponential(&bm(g, 200, 9), &alpha, &flat).unwrap();
        assert_eq!(translate_initial(&g.spec().identity(), &x).unwrap(), x);
        let xi = mat_exp(
            &AlgebraVector::new(g, &[0.9, -0.3, 0.5, 2.0, -1.0, 0.4])
                .unwrap()
                .to_matrix(),
        )
        .unwrap();
        let moved = translate_initial(&xi, &x).unwrap();
        assert!(moved.max_membership_defect().unwrap() < 1e-10);
        let (a, b) = (
            ito_logarithm(&x, &alpha, &flat).unwrap(),
            ito_logarithm(&moved, &alpha, &flat).unwrap(),
        );
        for k in 0..=200 {
            for (p, q) in a.state(k).iter().zip(b.state(k)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        let bad = Matrix::identity(4).scale(2.0);
        assert!(matches!(
            translate_initial(&bad, &x),
            Err(Error::Membership { .. })
        ));
    }

    #[test]
    fn christoffel_hook_round_trips() {
        let g = GroupKind::So3;
        let mut table = vec![0.0; 27];
        let at = |i: usize, j: usize, k: usize| (i * 3 + j) * 3 + k;
        // Γ^2_01 = Γ^2_10 = 0.3
        table[at(0, 1, 2)] = 0.3;
        table[at(1, 0, 2)] = 0.3;
        let conn = AlgebraConnection::new(g, table.clone()).unwrap();
        assert!(!conn.is_flat());
        table[at(1, 0, 2)] = 0.0;
        assert!(AlgebraConnection::new(g, table).is_err());
        let alpha = alpha_biinvariant(g);
        let m = bm(g, 1000, 31);
        let back =
            ito_logarithm(&ito_exponential(&m, &alpha, &conn).unwrap(), &alpha, &conn).unwrap();
        assert!(back.terminal_distance(&m).unwrap() < 0.01);
    }

    #[test]
    fn mixed_groups_are_rejected() {
        let m = bm(GroupKind::So3, 10, 1);
        let alpha = lc(GroupKind::Se3);
        assert!(matches!(
            ito_exponential(&m, &alpha, &AlgebraConnection::flat(GroupKind::So3)),
            Err(Error::GroupMismatch { .. })
        ));
    }

    #[test]
    fn huge_increments_report_range_errors() {
        // Steps of rotation angle ≈ π put the increment on the edge of the principal log.
        let g = GroupKind::So3;
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let m = line(g, &[0.0, 0.0, 2.0 * std::f64::consts::PI], grid);
        let x = strat_exponential(&m).unwrap();
        let err = strat_logarithm(&x).unwrap_err();
        assert!(matches!(err, Error::Range(_)), "{err:?}");
    }

    #[test]
    fn round_trip_ladder_is_deterministic_and_shrinks() {
        let g = GroupKind::Se3;
        let alpha = lc(g);
        let a = round_trip_ladder(g, &alpha, &[4e-3, 2e-3, 1e-3], 1.0, 8, 42).unwrap();
        assert_eq!(
            a,
            round_trip_ladder(g, &alpha, &[4e-3, 2e-3, 1e-3], 1.0, 8, 42).unwrap()
        );
        assert_eq!(a.errors.len(), 3);
        assert_eq!(a.errors[0].len(), 8);
        assert!(a.rungs[2].mean < a.rungs[0].mean, "{:?}", a.rungs);
        assert!(
            round_trip_ladder(g, &alpha_biinvariant(GroupKind::So3), &[1e-3], 1.0, 8, 42).is_err()
        );
    }

    #[test]
    fn reverse_round_trip_converges() {
        let g = GroupKind::Se3;
        let alpha = lc(g);
        let flat = AlgebraConnection::flat(g);
        let x = strat_exponential(&bm(g, 1000, derive_seed(4, 0, 0))).unwrap();
        let m = ito_logarithm(&x, &alpha, &flat).unwrap();
        let again = ito_exponential(&m, &alpha, &flat).unwrap();
        let err = frobenius_dist(again.terminal(), x.terminal()).unwrap();
        assert!(err < 0.05, "{err}");
    }
}
