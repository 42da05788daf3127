//! Catalog of matrix Lie groups and their algebras.
//!
//! Each group is stored through its defining matrix embedding: SO(3) as 3×3
//! rotations, SE(2) and E(1,1) as 3×3 homogeneous matrices, SE(3) as 4×4
//! homogeneous matrices, N³ as 3×3 unipotent matrices and SL(2,ℝ) as 2×2
//! matrices. Algebra elements are carried as coordinates in a fixed basis and
//! converted to matrices on demand.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::algebra::{Matrix, Tolerance};
use crate::error::{Error, Result};

/// Coordinates of an algebra element in its group's basis.
pub type Coords = SmallVec<[f64; 6]>;

/// Largest defect at which a matrix is still accepted as a group member.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    So3,
    Se2,
    Se3,
    E11,
    N3,
    Sl2r,
}

impl GroupKind {
    pub const ALL: [GroupKind; 6] = [
        GroupKind::So3,
        GroupKind::Se2,
        GroupKind::Se3,
        GroupKind::E11,
        GroupKind::N3,
        GroupKind::Sl2r,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::So3 => "so3",
            GroupKind::Se2 => "se2",
            GroupKind::Se3 => "se3",
            GroupKind::E11 => "e11",
            GroupKind::N3 => "n3",
            GroupKind::Sl2r => "sl2r",
        }
    }

    pub fn spec(self) -> &'static GroupSpec {
        &CATALOG[self as usize]
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        GroupKind::ALL
            .into_iter()
            .find(|g| g.name() == lower)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown group '{s}' (expected one of so3, se2, se3, e11, n3, sl2r)"
                ))
            })
    }
}

static CATALOG: LazyLock<Vec<GroupSpec>> = LazyLock::new(|| {
    GroupKind::ALL
        .into_iter()
        .map(|kind| {
            let (dim, basis, names) = catalog_basis(kind);
            GroupSpec::with_basis(kind, dim, basis, names)
                .unwrap_or_else(|e| panic!("catalog basis for {kind} is invalid: {e}"))
        })
        .collect()
});

fn unit(dim: usize, entries: &[(usize, usize, f64)]) -> Matrix {
    let mut m = Matrix::zeros(dim, dim);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
    }
    m
}

fn catalog_basis(kind: GroupKind) -> (usize, Vec<Matrix>, &'static [&'static str]) {
    // Rotation generators about the x, y and z axes.
    let rot = |d: usize| {
        vec![
            unit(d, &[(1, 2, -1.0), (2, 1, 1.0)]),
            unit(d, &[(0, 2, 1.0), (2, 0, -1.0)]),
            unit(d, &[(0, 1, -1.0), (1, 0, 1.0)]),
        ]
    };
    match kind {
        GroupKind::So3 => (3, rot(3), &["E1", "E2", "E3"]),
        GroupKind::Se3 => {
            let mut b = rot(4);
            b.extend((0..3).map(|i| unit(4, &[(i, 3, 1.0)])));
            (4, b, &["E1", "E2", "E3", "e1", "e2", "e3"])
        }
        GroupKind::Se2 => (
            3,
            vec![
                unit(3, &[(0, 1, -1.0), (1, 0, 1.0)]),
                unit(3, &[(0, 2, 1.0)]),
                unit(3, &[(1, 2, 1.0)]),
            ],
            &["H", "e1", "e2"],
        ),
        // The (3,3) slot of the algebra is 0, the affine convention.
        GroupKind::E11 => (
            3,
            vec![
                unit(3, &[(0, 0, 1.0), (1, 1, -1.0)]),
                unit(3, &[(0, 2, 1.0)]),
                unit(3, &[(1, 2, 1.0)]),
            ],
            &["H", "e1", "e2"],
        ),
        GroupKind::N3 => (
            3,
            vec![
                unit(3, &[(0, 1, 1.0)]),
                unit(3, &[(1, 2, 1.0)]),
                unit(3, &[(0, 2, 1.0)]),
            ],
            &["X", "Y", "Z"],
        ),
        GroupKind::Sl2r => (
            2,
            vec![
                unit(2, &[(0, 0, 1.0), (1, 1, -1.0)]),
                unit(2, &[(0, 1, 1.0)]),
                unit(2, &[(1, 0, 1.0)]),
            ],
            &["H", "E+", "E-"],
        ),
    }
}

/// A matrix Lie group with its algebra basis and tabulated structure constants.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    kind: GroupKind,
    matrix_dim: usize,
    basis: Vec<Matrix>,
    basis_names: &'static [&'static str],
    // Least-squares projector (BᵀB)⁻¹Bᵀ onto the vectorised basis, n × d².
    projector: Matrix,
    // c[(i·n + j)·n + k] is the e_k coefficient of [e_i, e_j].
    structure: Vec<f64>,
    tol: Tolerance,
}

impl GroupSpec {
    pub(crate) fn with_basis(
        kind: GroupKind,
        matrix_dim: usize,
        basis: Vec<Matrix>,
        basis_names: &'static [&'static str],
    ) -> Result<Self> {
        let n = basis.len();
        let d2 = matrix_dim * matrix_dim;
        if n == 0
            || basis
                .iter()
                .any(|b| b.rows() != matrix_dim || b.cols() != matrix_dim)
        {
            return Err(Error::Dimension(format!(
                "basis of {kind} must hold {matrix_dim}x{matrix_dim} matrices"
            )));
        }
        let vectorised = Matrix::from_fn(d2, n, |r, c| basis[c].as_slice()[r]);
        let gram = &vectorised.transpose() * &vectorised;
        let projector = &gram
            .inverse()
            .map_err(|_| Error::Singular(format!("basis of {kind} is linearly dependent")))?
            * &vectorised.transpose();

        let mut spec = Self {
            kind,
            matrix_dim,
            basis,
            basis_names,
            projector,
            structure: vec![0.0; n * n * n],
            tol: Tolerance::default(),
        };
        // Only i < j is projected; the rest follows by exact antisymmetry so
        // that symmetric contractions of the table vanish bit-for-bit.
        for i in 0..n {
            for j in i + 1..n {
                let comm = commutator(&spec.basis[i], &spec.basis[j]);
                let c = spec.project(&comm).map_err(|e| match e {
                    Error::NotInAlgebra { residual, .. } => Error::Closure {
                        group: kind,
                        residual,
                    },
                    other => other,
                })?;
                for k in 0..n {
                    spec.structure[(i * n + j) * n + k] = c[k];
                    spec.structure[(j * n + i) * n + k] = -c[k];
                }
            }
        }
        Ok(spec)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn matrix_dim(&self) -> usize {
        self.matrix_dim
    }

    pub fn algebra_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn basis_names(&self) -> &'static [&'static str] {
        self.basis_names
    }

    pub fn identity(&self) -> Matrix {
        Matrix::identity(self.matrix_dim)
    }

    /// `c^k_{ij}` with `[e_i, e_j] = Σ_k c^k_{ij} e_k`, indexed `[(i·n + j)·n + k]`.
    pub fn structure_constants(&self) -> &[f64] {
        &self.structure
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.algebra_dim();
        self.structure[(i * n + j) * n + k]
    }

    pub fn to_matrix(&self, coords: &[f64]) -> Result<Matrix> {
        if coords.len() != self.algebra_dim() {
            return Err(Error::Dimension(format!(
                "{} has algebra dimension {}, got {} coordinates",
                self.kind,
                self.algebra_dim(),
                coords.len()
            )));
        }
        Ok(self.to_matrix_unchecked(coords))
    }

    pub(crate) fn to_matrix_unchecked(&self, coords: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.matrix_dim, self.matrix_dim);
        for (c, b) in coords.iter().zip(&self.basis) {
            if *c == 0.0 {
                continue;
            }
            for (dst, src) in m.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *dst += c * src;
            }
        }
        m
    }

    /// Least-squares coordinates of `m`; errors if `m` is not in the span of the basis.
    pub fn project(&self, m: &Matrix) -> Result<Coords> {
        if m.rows() != self.matrix_dim || m.cols() != self.matrix_dim {
            return Err(Error::Dimension(format!(
                "{} algebra elements are {}x{}, got {}x{}",
                self.kind,
                self.matrix_dim,
                self.matrix_dim,
                m.rows(),
                m.cols()
            )));
        }
        let n = self.algebra_dim();
        let d2 = self.matrix_dim * self.matrix_dim;
        let p = self.projector.as_slice();
        let v = m.as_slice();
        let coords: Coords = (0..n)
            .map(|i| {
                p[i * d2..(i + 1) * d2]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let back = self.to_matrix_unchecked(&coords);
        let residual = back
            .as_slice()
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !(residual <= self.tol.bound(m.norm_fro())) {
            return Err(Error::NotInAlgebra {
                group: self.kind,
                residual,
            });
        }
        Ok(coords)
    }

    /// Bracket through the tabulated structure constants.
    pub fn bracket_coords(&self, a: &[f64], b: &[f64]) -> Coords {
        let n = self.algebra_dim();
        let mut out: Coords = SmallVec::from_elem(0.0, n);
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let w = a[i] * b[j];
                if w == 0.0 {
                    continue;
                }
                let row = &self.structure[(i * n + j) * n..(i * n + j + 1) * n];
                for (o, c) in out.iter_mut().zip(row) {
                    *o += w * c;
                }
            }
        }
        out
    }

    /// Bracket as the projected matrix commutator `AB − BA`.
    pub fn bracket_via_matrices(&self, a: &[f64], b: &[f64]) -> Result<Coords> {
        let comm = commutator(&self.to_matrix(a)?, &self.to_matrix(b)?);
        self.project(&comm).map_err(|e| match e {
            Error::NotInAlgebra { residual, .. } => Error::Closure {
                group: self.kind,
                residual,
            },
            other => other,
        })
    }

    pub fn membership_defect(&self, g: &Matrix) -> Result<f64> {
        let d = self.matrix_dim;
        if g.rows() != d || g.cols() != d {
            return Err(Error::Dimension(format!(
                "{} elements are {d}x{d}, got {}x{}",
                self.kind,
                g.rows(),
                g.cols()
            )));
        }
        if !g.is_finite() {
            return Ok(f64::INFINITY);
        }
        let defect = match self.kind {
            GroupKind::So3 => rotation_defect(g, 3),
            GroupKind::Se3 => rotation_defect(g, 3) + affine_row_defect(g),
            GroupKind::Se2 => rotation_defect(g, 2) + affine_row_defect(g),
            GroupKind::E11 => {
                g[(0, 1)].abs()
                    + g[(1, 0)].abs()
                    + (g[(0, 0)] * g[(1, 1)] - 1.0).abs()
                    + (-g[(0, 0)]).max(0.0)
                    + (-g[(1, 1)]).max(0.0)
                    + affine_row_defect(g)
            }
            GroupKind::N3 => {
                (0..3).map(|i| (g[(i, i)] - 1.0).abs()).sum::<f64>()
                    + g[(1, 0)].abs()
                    + g[(2, 0)].abs()
                    + g[(2, 1)].abs()
            }
            GroupKind::Sl2r => (g.determinant()? - 1.0).abs(),
        };
        Ok(defect)
    }

    pub fn check_member(&self, g: &Matrix) -> Result<()> {
        let defect = self.membership_defect(g)?;
        if !(defect <= MEMBERSHIP_TOL) {
            return Err(Error::Membership {
                group: self.kind,
                defect,
            });
        }
        Ok(())
    }

    /// Coordinates of `g·A·g⁻¹`.
    pub fn adjoint(&self, g: &Matrix, a: &[f64]) -> Result<Coords> {
        self.check_member(g)?;
        let g_inv = g.inverse()?;
        self.adjoint_with_inverse(g, &g_inv, a)
    }

    pub(crate) fn adjoint_with_inverse(
        &self,
        g: &Matrix,
        g_inv: &Matrix,
        a: &[f64],
    ) -> Result<Coords> {
        let conj = &(g * &self.to_matrix(a)?) * g_inv;
        self.project(&conj).map_err(|e| match e {
            Error::NotInAlgebra { residual, .. } => Error::Closure {
                group: self.kind,
                residual,
            },
            other => other,
        })
    }
}

fn commutator(a: &Matrix, b: &Matrix) -> Matrix {
    &(a * b) - &(b * a)
}

fn rotation_defect(g: &Matrix, k: usize) -> f64 {
    let r = Matrix::from_fn(k, k, |i, j| g[(i, j)]);
    let gram = &r.transpose() * &r;
    let ortho = (&gram - &Matrix::identity(k)).norm_fro();
    ortho + (r.determinant().unwrap_or(f64::NAN) - 1.0).abs()
}

// Last row of a homogeneous matrix must be (0, …, 0, 1).
fn affine_row_defect(g: &Matrix) -> f64 {
    let d = g.rows();
    (0..d - 1).map(|j| g[(d - 1, j)].abs()).sum::<f64>() + (g[(d - 1, d - 1)] - 1.0).abs()
}

/// An element of a catalog algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraVector {
    pub group: GroupKind,
    pub coords: Coords,
}

impl AlgebraVector {
    pub fn new(group: GroupKind, coords: &[f64]) -> Result<Self> {
        let n = group.spec().algebra_dim();
        if coords.len() != n {
            return Err(Error::Dimension(format!(
                "{group} has algebra dimension {n}, got {} coordinates",
                coords.len()
            )));
        }
        Ok(Self {
            group,
            coords: SmallVec::from_slice(coords),
        })
    }

    pub fn zero(group: GroupKind) -> Self {
        Self {
            group,
            coords: SmallVec::from_elem(0.0, group.spec().algebra_dim()),
        }
    }

    /// The `i`-th basis element.
    pub fn basis(group: GroupKind, i: usize) -> Self {
        let mut v = Self::zero(group);
        v.coords[i] = 1.0;
        v
    }

    pub fn from_matrix(group: GroupKind, m: &Matrix) -> Result<Self> {
        Ok(Self {
            group,
            coords: group.spec().project(m)?,
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        self.group.spec().to_matrix_unchecked(&self.coords)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            group: self.group,
            coords: self.coords.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &AlgebraVector) -> Result<Self> {
        same_group(self.group, other.group)?;
        Ok(Self {
            group: self.group,
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub(crate) fn same_group(expected: GroupKind, found: GroupKind) -> Result<()> {
    if expected != found {
        return Err(Error::GroupMismatch { expected, found });
    }
    Ok(())
}

/// Lie bracket, computed as the projected matrix commutator.
pub fn bracket(a: &AlgebraVector, b: &AlgebraVector) -> Result<AlgebraVector> {
    same_group(a.group, b.group)?;
    Ok(AlgebraVector {
        group: a.group,
        coords: a.group.spec().bracket_via_matrices(&a.coords, &b.coords)?,
    })
}

pub fn structure_constants(group: GroupKind) -> &'static [f64] {
    group.spec().structure_constants()
}

/// Adjoint action `Ad(g)A = g·A·g⁻¹`.
pub fn ad(g: &Matrix, a: &AlgebraVector) -> Result<AlgebraVector> {
    Ok(AlgebraVector {
        group: a.group,
        coords: a.group.spec().adjoint(g, &a.coords)?,
    })
}

pub fn membership_defect(group: GroupKind, g: &Matrix) -> Result<f64> {
    group.spec().membership_defect(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{frobenius_dist, mat_exp};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(group: GroupKind, c: &[f64]) -> AlgebraVector {
        AlgebraVector::new(group, c).unwrap()
    }

    fn assert_coords(got: &AlgebraVector, expected: &[f64]) {
        for (g, e) in got.coords.iter().zip(expected) {
            assert_abs_diff_eq!(*g, *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn parses_names_case_insensitively() {
        assert_eq!("SE3".parse::<GroupKind>().unwrap(), GroupKind::Se3);
        assert_eq!("Sl2R".parse::<GroupKind>().unwrap(), GroupKind::Sl2r);
        assert!("so4".parse::<GroupKind>().is_err());
    }

    #[test]
    fn so3_brackets_are_cyclic() {
        let g = GroupKind::So3;
        let e = |i| AlgebraVector::basis(g, i);
        assert_coords(&bracket(&e(0), &e(1)).unwrap(), &[0.0, 0.0, 1.0]);
        assert_coords(&bracket(&e(1), &e(2)).unwrap(), &[1.0, 0.0, 0.0]);
        assert_coords(&bracket(&e(2), &e(0)).unwrap(), &[0.0, 1.0, 0.0]);
        let a = v(g, &[0.3, -1.2, 0.8]);
        assert_eq!(bracket(&a, &a).unwrap().norm(), 0.0);
    }

    #[test]
    fn sl2r_brackets() {
        let g = GroupKind::Sl2r;
        let e = |i| AlgebraVector::basis(g, i);
        assert_coords(&bracket(&e(0), &e(1)).unwrap(), &[0.0, 2.0, 0.0]);
        assert_coords(&bracket(&e(0), &e(2)).unwrap(), &[0.0, 0.0, -2.0]);
        assert_coords(&bracket(&e(1), &e(2)).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn three_dimensional_structure_constants() {
        let n3 = GroupKind::N3.spec();
        // [X, Y] = Z is the only nonzero bracket.
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let expected = match (i, j, k) {
                        (0, 1, 2) => 1.0,
                        (1, 0, 2) => -1.0,
                        _ => 0.0,
                    };
                    assert_eq!(n3.structure_constant(i, j, k), expected, "n3 c^{k}_{i}{j}");
                }
            }
        }
        let se2 = GroupKind::Se2.spec();
        assert_eq!(se2.structure_constant(0, 1, 2), 1.0);
        assert_eq!(se2.structure_constant(0, 2, 1), -1.0);
        assert!((0..3).all(|k| se2.structure_constant(1, 2, k) == 0.0));
        let e11 = GroupKind::E11.spec();
        assert_eq!(e11.structure_constant(0, 1, 1), 1.0);
        assert_eq!(e11.structure_constant(0, 2, 2), -1.0);
        assert!((0..3).all(|k| e11.structure_constant(1, 2, k) == 0.0));
    }

    #[test]
    fn structure_constants_match_bracket_exactly() {
        for g in GroupKind::ALL {
            let spec = g.spec();
            let n = spec.algebra_dim();
            for i in 0..n {
                for j in 0..n {
                    let via_matrix =
                        bracket(&AlgebraVector::basis(g, i), &AlgebraVector::basis(g, j)).unwrap();
                    for k in 0..n {
                        let diff = (via_matrix.coords[k] - spec.structure_constant(i, j, k)).abs();
                        assert!(diff < 1e-12, "{g} ({i},{j},{k})");
                    }
                }
            }
        }
    }

    #[test]
    fn bracket_rejects_mixed_groups() {
        let a = AlgebraVector::basis(GroupKind::So3, 0);
        let b = AlgebraVector::basis(GroupKind::Se2, 0);
        assert!(matches!(bracket(&a, &b), Err(Error::GroupMismatch { .. })));
    }

    #[test]
    fn corrupted_basis_fails_closure() {
        // Two so(3) generators alone do not close under the bracket.
        let full = GroupKind::So3.spec().basis().to_vec();
        let err = GroupSpec::with_basis(GroupKind::So3, 3, full[..2].to_vec(), &["E1", "E2"])
            .unwrap_err();
        assert!(matches!(err, Error::Closure { .. }));
        let dependent = vec![full[0].clone(), full[0].scale(2.0), full[2].clone()];
        assert!(matches!(
            GroupSpec::with_basis(GroupKind::So3, 3, dependent, &["a", "b", "c"]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn matrix_round_trips() {
        for g in GroupKind::ALL {
            let z = AlgebraVector::zero(g);
            assert_eq!(z.to_matrix().max_abs(), 0.0);
            let n = g.spec().algebra_dim();
            let a = v(g, &[0.7, -1.3, 2.1, 0.4, -0.9, 1.6][..n]);
            let back = AlgebraVector::from_matrix(g, &a.to_matrix()).unwrap();
            for (x, y) in back.coords.iter().zip(&a.coords) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_part_is_not_in_algebra() {
        for g in [GroupKind::So3, GroupKind::Se3, GroupKind::Se2] {
            let mut m = AlgebraVector::basis(g, 0).to_matrix();
            m[(0, 1)] += 0.5;
            m[(1, 0)] += 0.5;
            assert!(matches!(
                AlgebraVector::from_matrix(g, &m),
                Err(Error::NotInAlgebra { .. })
            ));
        }
    }

    #[test]
    fn membership_examples() {
        for g in GroupKind::ALL {
            assert_eq!(membership_defect(g, &g.spec().identity()).unwrap(), 0.0);
        }
        let two = Matrix::identity(2).scale(2.0);
        assert_eq!(membership_defect(GroupKind::Sl2r, &two).unwrap(), 3.0);
        assert!(matches!(
            membership_defect(GroupKind::Se3, &Matrix::identity(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn ad_identity_and_rotation() {
        let g = GroupKind::So3;
        let a = v(g, &[0.2, 0.5, -0.4]);
        assert_coords(&ad(&Matrix::identity(3), &a).unwrap(), &a.coords);
        let theta: f64 = 0.7;
        let rot = mat_exp(&AlgebraVector::basis(g, 2).scale(theta).to_matrix()).unwrap();
        let (s, c) = theta.sin_cos();
        assert_coords(
            &ad(&rot, &AlgebraVector::basis(g, 0)).unwrap(),
            &[c, s, 0.0],
        );
        assert_coords(
            &ad(&rot, &AlgebraVector::basis(g, 1)).unwrap(),
            &[-s, c, 0.0],
        );
        assert_coords(
            &ad(&rot, &AlgebraVector::basis(g, 2)).unwrap(),
            &[0.0, 0.0, 1.0],
        );
    }

    #[test]
    fn ad_rejects_non_members() {
        let a = AlgebraVector::basis(GroupKind::So3, 0);
        assert!(matches!(
            ad(&Matrix::identity(3).scale(2.0), &a),
            Err(Error::Membership { .. })
        ));
    }

    fn group_and_coords() -> impl Strategy<Value = (GroupKind, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (0usize..6).prop_flat_map(|gi| {
            let g = GroupKind::ALL[gi];
            let n = g.spec().algebra_dim();
            let c = || prop::collection::vec(-1.0f64..1.0, n);
            (Just(g), c(), c(), c())
        })
    }

    proptest! {
        #[test]
        fn jacobi_identity((g, a, b, c) in group_and_coords()) {
            let (a, b, c) = (v(g, &a), v(g, &b), v(g, &c));
            let t1 = bracket(&a, &bracket(&b, &c).unwrap()).unwrap();
            let t2 = bracket(&b, &bracket(&c, &a).unwrap()).unwrap();
            let t3 = bracket(&c, &bracket(&a, &b).unwrap()).unwrap();
            let sum = t1.add(&t2).unwrap().add(&t3).unwrap();
            prop_assert!(sum.norm() < 1e-10);
        }

        #[test]
        fn exp_lands_in_group((g, a, _b, _c) in group_and_coords()) {
            let x = mat_exp(&v(g, &a).to_matrix()).unwrap();
            prop_assert!(membership_defect(g, &x).unwrap() < 1e-10);
        }

        #[test]
        fn ad_inverse_and_homomorphism((g, a, b, c) in group_and_coords()) {
            let g1 = mat_exp(&v(g, &a).scale(0.5).to_matrix()).unwrap();
            let g2 = mat_exp(&v(g, &b).scale(0.5).to_matrix()).unwrap();
            let x = v(g, &c);
            let back = ad(&g1.inverse().unwrap(), &ad(&g1, &x).unwrap()).unwrap();
            prop_assert!(back.add(&x.scale(-1.0)).unwrap().norm() < 1e-10);
            let composed = ad(&g1, &ad(&g2, &x).unwrap()).unwrap();
            let product = ad(&(&g1 * &g2), &x).unwrap();
            prop_assert!(composed.add(&product.scale(-1.0)).unwrap().norm() < 1e-10);
        }

        #[test]
        fn ad_derivative_is_bracket((g, a, b, _c) in group_and_coords()) {
            let (a, b) = (v(g, &a), v(g, &b));
            let h = 1e-5;
            let plus = ad(&mat_exp(&a.scale(h).to_matrix()).unwrap(), &b).unwrap();
            let minus = ad(&mat_exp(&a.scale(-h).to_matrix()).unwrap(), &b).unwrap();
            let fd = plus.add(&minus.scale(-1.0)).unwrap().scale(0.5 / h);
            let exact = bracket(&a, &b).unwrap();
            prop_assert!(fd.add(&exact.scale(-1.0)).unwrap().norm() < 1e-6);
        }
    }

    #[test]
    fn exp_of_element_is_member_by_frobenius() {
        // Sanity: exp of an SE(3) element has the affine last row exactly.
        let a = v(GroupKind::Se3, &[0.1, 0.2, 0.3, 1.0, 2.0, 3.0]);
        let x = mat_exp(&a.to_matrix()).unwrap();
        let mut row = Matrix::zeros(1, 4);
        row[(0, 3)] = 1.0;
        let last = Matrix::from_fn(1, 4, |_, j| x[(3, j)]);
        assert!(frobenius_dist(&last, &row).unwrap() < 1e-15);
    }
}
