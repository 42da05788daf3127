//! Stochastic line integrals of left-invariant 1-forms, in left-trivialised coordinates.
//!
//! A group path is reduced to its Maurer–Cartan increments
//! `ΔL_k = log(X_k⁻¹ X_{k+1})`; the Stratonovich integral of `η∘ω` is then
//! `Σ η(ΔL_k)` and the Itô integral adds `½ Σ η(α(ΔL_k, ΔL_k))`.

use crate::algebra::{mat_log, Matrix};
use crate::connections::ConnectionFunction;
use crate::error::{Error, Result};
use crate::groups::{same_group, Coords, GroupKind};
use crate::paths::{GroupPath, Sampled, TimeGrid};

/// Per-step left-trivialised increments of a group path.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub group: GroupKind,
    pub grid: TimeGrid,
    pub steps: Vec<Coords>,
}

pub fn mc_increments(x: &GroupPath) -> Result<Increments> {
    let spec = x.group().spec();
    let grid = x.grid();
    let mut steps = Vec::with_capacity(grid.steps());
    let mut inv = x.at(0).inverse()?;
    for k in 0..grid.steps() {
        let next = x.at(k + 1);
        let step = &inv * next;
        let log = mat_log(&step).map_err(|e| match e {
            Error::Range(msg) => Error::Range(format!("increment {k}: {msg}")),
            other => other,
        })?;
        steps.push(spec.project(&log)?);
        if k + 1 < grid.steps() {
            inv = next.inverse()?;
        }
    }
    Ok(Increments {
        group: x.group(),
        grid,
        steps,
    })
}

/// A left-invariant 1-form `η∘ω`, given by the covector `η` on the algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftInvariantOneForm {
    pub group: GroupKind,
    pub covector: Vec<f64>,
}

impl LeftInvariantOneForm {
    pub fn new(group: GroupKind, covector: Vec<f64>) -> Result<Self> {
        let n = group.spec().algebra_dim();
        if covector.len() != n {
            return Err(Error::Dimension(format!(
                "{group} 1-forms have {n} components"
            )));
        }
        if covector.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("1-form covector".into()));
        }
        Ok(Self { group, covector })
    }

    pub fn apply(&self, a: &[f64]) -> f64 {
        self.covector.iter().zip(a).map(|(e, x)| e * x).sum()
    }
}

fn running_sum(terms: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for t in terms {
        acc += t;
        out.push(acc);
    }
    out
}

pub fn strat_integral(eta: &LeftInvariantOneForm, x: &GroupPath) -> Result<Vec<f64>> {
    same_group(eta.group, x.group())?;
    Ok(strat_integral_of(eta, &mc_increments(x)?))
}

pub fn strat_integral_of(eta: &LeftInvariantOneForm, inc: &Increments) -> Vec<f64> {
    running_sum(inc.steps.iter().map(|d| eta.apply(d)))
}

pub fn ito_integral(
    eta: &LeftInvariantOneForm,
    x: &GroupPath,
    alpha: &ConnectionFunction,
) -> Result<Vec<f64>> {
    same_group(eta.group, x.group())?;
    same_group(eta.group, alpha.group())?;
    Ok(ito_integral_of(eta, &mc_increments(x)?, alpha))
}

pub fn ito_integral_of(
    eta: &LeftInvariantOneForm,
    inc: &Increments,
    alpha: &ConnectionFunction,
) -> Vec<f64> {
    running_sum(inc.steps.iter().map(|d| {
        let q = alpha.quadratic(d);
        let corrected: Coords = d.iter().zip(&q).map(|(a, b)| a + 0.5 * b).collect();
        eta.apply(&corrected)
    }))
}

/// `Σ b(ΔL_k, ΔL_k)` for a bilinear form `b` given as an n×n table.
pub fn quadratic_integral(b: &Matrix, x: &GroupPath) -> Result<Vec<f64>> {
    let n = x.group().spec().algebra_dim();
    if b.rows() != n || b.cols() != n {
        return Err(Error::Dimension(format!(
            "{} bilinear forms are {n}x{n}",
            x.group()
        )));
    }
    Ok(quadratic_integral_of(b, &mc_increments(x)?))
}

pub fn quadratic_integral_of(b: &Matrix, inc: &Increments) -> Vec<f64> {
    let n = b.rows();
    let t = b.as_slice();
    running_sum(inc.steps.iter().map(|d| {
        (0..n)
            .map(|i| d[i] * (0..n).map(|j| t[i * n + j] * d[j]).sum::<f64>())
            .sum()
    }))
}
