//! Left-invariant connections, stored as bilinear connection functions on the algebra.
//!
//! A left-invariant connection on `G` is determined by `α(A, B) = (∇_A B)(e)`.
//! For a left-invariant metric the Levi-Civita connection is
//! `α(A, B) = ½[A, B] + U(A, B)` where the symmetric `U` solves
//! `2⟨U(A,B), C⟩ = ⟨A, [C,B]⟩ + ⟨[C,A], B⟩` for every `C`.

use serde::Serialize;
use smallvec::SmallVec;

use crate::algebra::{solve_linear, Matrix};
use crate::error::{Error, Result};
use crate::groups::{same_group, AlgebraVector, Coords, GroupKind};

/// A left-invariant inner product on an algebra, given by its Gram matrix in the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub group: GroupKind,
    pub gram: Matrix,
    pub lambda: f64,
}

impl MetricSpec {
    pub fn new(group: GroupKind, gram: Matrix, lambda: f64) -> Result<Self> {
        let n = group.spec().algebra_dim();
        if gram.rows() != n || gram.cols() != n {
            return Err(Error::Dimension(format!(
                "{group} Gram matrix must be {n}x{n}, got {}x{}",
                gram.rows(),
                gram.cols()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Metric(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        gram.cholesky()?;
        Ok(Self {
            group,
            gram,
            lambda,
        })
    }

    /// The λ-family of inner products attached to each catalog group.
    ///
    /// so(3) uses `−½ tr(AB)`, which is the identity in the rotation basis and
    /// does not depend on λ. The others weight the non-leading directions by λ².
    pub fn standard(group: GroupKind, lambda: f64) -> Result<Self> {
        let l2 = lambda * lambda;
        let diag: Vec<f64> = match group {
            GroupKind::So3 => vec![1.0; 3],
            GroupKind::Se3 => vec![1.0, 1.0, 1.0, l2, l2, l2],
            GroupKind::Se2 | GroupKind::E11 | GroupKind::N3 | GroupKind::Sl2r => vec![1.0, l2, l2],
        };
        Self::new(group, Matrix::diagonal(&diag), lambda)
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let g = self.gram.as_slice();
        (0..n)
            .map(|i| a[i] * (0..n).map(|j| g[i * n + j] * b[j]).sum::<f64>())
            .sum()
    }
}

/// A bilinear map `α: 𝔤 × 𝔤 → 𝔤` stored as a dense table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionFunction {
    group: GroupKind,
    // coeffs[(i·n + j)·n + k] is the e_k coefficient of α(e_i, e_j).
    coeffs: Vec<f64>,
    // sym[(i·n + j)·n + k] for i ≤ j holds α^k_ij + α^k_ji (or α^k_ii on the diagonal).
    sym: Vec<f64>,
    label: String,
}

impl ConnectionFunction {
    pub fn from_coeffs(
        group: GroupKind,
        coeffs: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let n = group.spec().algebra_dim();
        if coeffs.len() != n * n * n {
            return Err(Error::Dimension(format!(
                "{group} connection table needs {} entries, got {}",
                n * n * n,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("connection coefficients".into()));
        }
        let mut sym = vec![0.0; n * n * n];
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    sym[(i * n + j) * n + k] = if i == j {
                        coeffs[(i * n + i) * n + k]
                    } else {
                        coeffs[(i * n + j) * n + k] + coeffs[(j * n + i) * n + k]
                    };
                }
            }
        }
        Ok(Self {
            group,
            coeffs,
            sym,
            label: label.into(),
        })
    }

    pub fn group(&self) -> GroupKind {
        self.group
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.coeffs[(i * n + j) * n + k]
    }

    pub fn dim(&self) -> usize {
        self.group.spec().algebra_dim()
    }

    /// `α(a, b)` on raw coordinates.
    pub fn apply(&self, a: &[f64], b: &[f64]) -> Coords {
        let n = self.dim();
        let mut out: Coords = SmallVec::from_elem(0.0, n);
        for i in 0..n {
            for j in 0..n {
                let w = a[i] * b[j];
                if w == 0.0 {
                    continue;
                }
                let row = &self.coeffs[(i * n + j) * n..(i * n + j + 1) * n];
                out.iter_mut().zip(row).for_each(|(o, c)| *o += w * c);
            }
        }
        out
    }

    /// `α(a, a)`, contracted through the symmetric part only.
    ///
    /// When the symmetric part is identically zero (bi-invariant case) the
    /// result is exactly zero, not merely roundoff-small.
    pub fn quadratic(&self, a: &[f64]) -> Coords {
        let n = self.dim();
        let mut out: Coords = SmallVec::from_elem(0.0, n);
        for i in 0..n {
            for j in i..n {
                let w = a[i] * a[j];
                let row = &self.sym[(i * n + j) * n..(i * n + j + 1) * n];
                out.iter_mut().zip(row).for_each(|(o, c)| *o += w * c);
            }
        }
        out
    }

    /// Largest entry of the symmetric part; zero iff `α(A, A) = 0` for all `A`.
    pub fn symmetric_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    let s = 0.5 * (self.coeff(i, j, k) + self.coeff(j, i, k));
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }

    /// `(i, j) ↦ Σ_k η_k α^k_{ij}`: the bilinear form `η∘α` as an n×n table.
    pub fn contract(&self, covector: &[f64]) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| covector[k] * self.coeff(i, j, k)).sum()
        })
    }
}

pub fn eval_alpha(
    alpha: &ConnectionFunction,
    a: &AlgebraVector,
    b: &AlgebraVector,
) -> Result<AlgebraVector> {
    same_group(alpha.group, a.group)?;
    same_group(alpha.group, b.group)?;
    Ok(AlgebraVector {
        group: alpha.group,
        coords: alpha.apply(&a.coords, &b.coords),
    })
}

/// The symmetric bilinear `U` of the Levi-Civita connection of `metric`.
pub fn u_from_metric(metric: &MetricSpec) -> Result<ConnectionFunction> {
    let spec = metric.group.spec();
    let n = spec.algebra_dim();
    let g = metric.gram.as_slice();
    let c = |i: usize, j: usize, k: usize| spec.structure_constant(i, j, k);
    let mut coeffs = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            // rhs_k = ½(⟨e_i, [e_k, e_j]⟩ + ⟨[e_k, e_i], e_j⟩)
            let rhs: Vec<f64> = (0..n)
                .map(|k| {
                    let first: f64 = (0..n).map(|m| c(k, j, m) * g[i * n + m]).sum();
                    let second: f64 = (0..n).map(|m| c(k, i, m) * g[m * n + j]).sum();
                    0.5 * (first + second)
                })
                .collect();
            let u = solve_linear(&metric.gram, &rhs)
                .map_err(|e| Error::Metric(format!("Gram system is singular: {e}")))?;
            coeffs[(i * n + j) * n..(i * n + j + 1) * n].copy_from_slice(&u);
        }
    }
    ConnectionFunction::from_coeffs(metric.group, coeffs, format!("U λ={}", metric.lambda))
}

pub fn alpha_levi_civita(metric: &MetricSpec) -> Result<ConnectionFunction> {
    let u = u_from_metric(metric)?;
    let structure = metric.group.spec().structure_constants();
    let coeffs = u
        .coeffs
        .iter()
        .zip(structure)
        .map(|(u, c)| 0.5 * c + u)
        .collect();
    ConnectionFunction::from_coeffs(
        metric.group,
        coeffs,
        format!("levi-civita λ={}", metric.lambda),
    )
}

/// `α(A, B) = ½[A, B]`, the Levi-Civita connection of a bi-invariant metric.
pub fn alpha_biinvariant(group: GroupKind) -> ConnectionFunction {
    let coeffs = group
        .spec()
        .structure_constants()
        .iter()
        .map(|c| 0.5 * c)
        .collect();
    ConnectionFunction::from_coeffs(group, coeffs, "bi-invariant")
        .expect("structure constant table has the right shape")
}

/// Which published display of `U(L, L)` to encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormSource {
    /// The expression given for `U(L(X_t), L(X_t))` itself.
    UDisplay,
    /// The integrand of the martingale criterion that follows it.
    MartingaleDisplay,
}

/// The published quadratic form `L ↦ U(L, L)` for a catalog group, coordinates
/// bound positionally to the declared basis.
fn closed_form_quadratic(
    group: GroupKind,
    lambda: f64,
    source: ClosedFormSource,
    l: &[f64],
) -> Result<Vec<f64>> {
    let l2 = lambda * lambda;
    Ok(match group {
        GroupKind::Se3 => {
            let (x, y) = (&l[..3], &l[3..]);
            vec![
                0.0,
                0.0,
                0.0,
                x[1] * y[2] - x[2] * y[1],
                x[2] * y[0] - x[0] * y[2],
                x[0] * y[1] - x[1] * y[0],
            ]
        }
        // a·H(a₁e₁ + a₂e₂), H acting on the translation part as rotation by 90°.
        GroupKind::Se2 => {
            let (a, a1, a2) = (l[0], l[1], l[2]);
            vec![0.0, -a * a2, a * a1]
        }
        // ‖a₁e₁ + a₂e₂‖²λ²H − a·H(a₁e₁ + a₂e₂) with ‖·‖² = a₁² − a₂².
        GroupKind::E11 => {
            let (a, a1, a2) = (l[0], l[1], l[2]);
            vec![(a1 * a1 - a2 * a2) * l2, -a * a1, a * a2]
        }
        GroupKind::N3 => {
            let (a, b, c) = (l[0], l[1], l[2]);
            let x_sign = match source {
                ClosedFormSource::UDisplay => 1.0,
                ClosedFormSource::MartingaleDisplay => -1.0,
            };
            vec![x_sign * l2 * b * c, l2 * a * c, 0.0]
        }
        GroupKind::Sl2r => {
            let (a, b, c) = (l[0], l[1], l[2]);
            vec![
                2.0 / l2 * (b * b - c * c),
                -2.0 * a * b + a * c * lambda,
                -a * b * lambda + 2.0 * a * c,
            ]
        }
        GroupKind::So3 => {
            return Err(Error::Unsupported(
                "no closed-form U is published for so3 (its metric is bi-invariant, U = 0)".into(),
            ))
        }
    })
}

/// Polarises a quadratic form `Q` into the symmetric bilinear table
/// `U(e_i, e_j) = ½(Q(e_i + e_j) − Q(e_i) − Q(e_j))`.
fn polarise(
    group: GroupKind,
    q: impl Fn(&[f64]) -> Result<Vec<f64>>,
    label: String,
) -> Result<ConnectionFunction> {
    let n = group.spec().algebra_dim();
    let e = |i: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    let mut coeffs = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            let entry: Vec<f64> = if i == j {
                q(&e(i))?
            } else {
                let mut sum = e(i);
                sum[j] = 1.0;
                let (qs, qi, qj) = (q(&sum)?, q(&e(i))?, q(&e(j))?);
                (0..n).map(|k| 0.5 * (qs[k] - qi[k] - qj[k])).collect()
            };
            coeffs[(i * n + j) * n..(i * n + j + 1) * n].copy_from_slice(&entry);
        }
    }
    ConnectionFunction::from_coeffs(group, coeffs, label)
}

/// The published closed-form `U` for a catalog group, as a symmetric table.
pub fn closed_form_u(group: GroupKind, lambda: f64) -> Result<ConnectionFunction> {
    closed_form_u_from(group, lambda, ClosedFormSource::UDisplay)
}

pub fn closed_form_u_from(
    group: GroupKind,
    lambda: f64,
    source: ClosedFormSource,
) -> Result<ConnectionFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Metric(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    closed_form_quadratic(
        group,
        lambda,
        source,
        &vec![0.0; group.spec().algebra_dim()],
    )?;
    polarise(
        group,
        |l| closed_form_quadratic(group, lambda, source, l),
        format!("closed-form U λ={lambda}"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub oracle: f64,
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRegression {
    pub group: GroupKind,
    pub lambda: f64,
    pub source: ClosedFormSource,
    pub max_abs_delta: f64,
    pub agrees: bool,
    pub discrepancies: Vec<Discrepancy>,
    /// Known notational issue in the published formula, if any.
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub tolerance: f64,
    pub rows: Vec<GroupRegression>,
}

impl RegressionReport {
    pub fn row(
        &self,
        group: GroupKind,
        lambda: f64,
        source: ClosedFormSource,
    ) -> Option<&GroupRegression> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.lambda == lambda && r.source == source)
    }
}

pub const REGRESSION_TOL: f64 = 1e-10;

fn known_note(group: GroupKind, source: ClosedFormSource) -> Option<&'static str> {
    match (group, source) {
        (GroupKind::N3, ClosedFormSource::UDisplay) => Some(
            "U display gives +λ²bcX while the martingale display gives −λ²bcX; coordinates bound to the declared basis {X,Y,Z}",
        ),
        (GroupKind::N3, ClosedFormSource::MartingaleDisplay) => {
            Some("martingale display of U; its X sign differs from the U display")
        }
        (GroupKind::E11, _) => Some(
            "‖a₁e₁+a₂e₂‖² is written as the pseudo-norm a₁²−a₂² although ⟨·,·⟩_λ is positive definite",
        ),
        (GroupKind::Sl2r, _) => Some("coordinates bound to the declared basis {H,E+,E-}"),
        _ => None,
    }
}

/// Compares one oracle table against one closed-form table entry by entry.
pub fn compare_tables(
    oracle: &ConnectionFunction,
    closed: &ConnectionFunction,
    lambda: f64,
    source: ClosedFormSource,
) -> Result<GroupRegression> {
    same_group(oracle.group, closed.group)?;
    let n = oracle.dim();
    let mut discrepancies = Vec::new();
    let mut max_abs_delta: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let (o, c) = (oracle.coeff(i, j, k), closed.coeff(i, j, k));
                let delta = (o - c).abs();
                max_abs_delta = max_abs_delta.max(delta);
                if delta > REGRESSION_TOL {
                    discrepancies.push(Discrepancy {
                        i,
                        j,
                        k,
                        oracle: o,
                        closed_form: c,
                    });
                }
            }
        }
    }
    Ok(GroupRegression {
        group: oracle.group,
        lambda,
        source,
        max_abs_delta,
        agrees: discrepancies.is_empty(),
        discrepancies,
        note: known_note(oracle.group, source),
    })
}

/// Runs the metric oracle against every published closed form over `lambdas`.
/// Disagreements are recorded, never corrected.
pub fn regress_closed_forms(lambdas: &[f64]) -> Result<RegressionReport> {
    regress_closed_forms_with(lambdas, closed_form_u_from)
}

/// As [`regress_closed_forms`] with a substitute closed-form provider.
pub fn regress_closed_forms_with(
    lambdas: &[f64],
    closed_form: impl Fn(GroupKind, f64, ClosedFormSource) -> Result<ConnectionFunction>,
) -> Result<RegressionReport> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for group in [
            GroupKind::Se3,
            GroupKind::Se2,
            GroupKind::E11,
            GroupKind::N3,
            GroupKind::Sl2r,
        ] {
            let oracle = u_from_metric(&MetricSpec::standard(group, lambda)?)?;
            let mut sources = vec![ClosedFormSource::UDisplay];
            if group == GroupKind::N3 {
                sources.push(ClosedFormSource::MartingaleDisplay);
            }
            for source in sources {
                let closed = closed_form(group, lambda, source)?;
                rows.push(compare_tables(&oracle, &closed, lambda, source)?);
            }
        }
    }
    Ok(RegressionReport {
        tolerance: REGRESSION_TOL,
        rows,
    })
}
