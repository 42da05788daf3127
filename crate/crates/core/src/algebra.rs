//! Dense small-matrix arithmetic.
//!
//! Everything here works on row-major matrices of at most a few dozen entries
//! (group embeddings are at most 4×4, Gram systems at most 6×6). Storage is
//! inline up to 4×4 so the integrators' inner loops never touch the heap.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use smallvec::SmallVec;

use crate::error::{Error, Result};

type Storage = SmallVec<[f64; 16]>;

/// Absolute/relative tolerance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Result<Self> {
        let ok = abs_tol >= 0.0 && rel_tol >= 0.0 && (abs_tol > 0.0 || rel_tol > 0.0);
        if !ok || !abs_tol.is_finite() || !rel_tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tolerance needs non-negative finite parts, one strictly positive (abs {abs_tol}, rel {rel_tol})"
            )));
        }
        Ok(Self { abs_tol, rel_tol })
    }

    /// Bound for an error measured against a quantity of size `scale`.
    pub fn bound(&self, scale: f64) -> f64 {
        self.abs_tol + self.rel_tol * scale.abs()
    }

    pub fn close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.bound(a.abs().max(b.abs()))
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Storage,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: SmallVec::from_elem(0.0, rows * cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != entries.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: SmallVec::from_slice(entries),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Storage::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn add_identity(&mut self) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += 1.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn try_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Matrix) -> Matrix {
        let (n, m, p) = (self.rows, self.cols, rhs.cols);
        let (a, b) = (self.data.as_slice(), rhs.data.as_slice());
        let mut out = Matrix::zeros(n, p);
        let dst = out.data.as_mut_slice();
        if n == m && m == p && (2..=4).contains(&n) {
            match n {
                2 => mul_square::<2>(a, b, dst),
                3 => mul_square::<3>(a, b, dst),
                _ => mul_square::<4>(a, b, dst),
            }
            return out;
        }
        for i in 0..n {
            let arow = &a[i * m..(i + 1) * m];
            let drow = &mut dst[i * p..(i + 1) * p];
            for (k, &aik) in arow.iter().enumerate() {
                for (d, r) in drow.iter_mut().zip(&b[k * p..(k + 1) * p]) {
                    *d += aik * r;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "cannot apply {}x{} matrix to a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "shapes {}x{} and {}x{} differ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn check_square(&self, what: &str) -> Result<()> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "{what} needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn determinant(&self) -> Result<f64> {
        self.check_square("determinant")?;
        match self.rows {
            1 => Ok(self.data[0]),
            2 => Ok(self.data[0] * self.data[3] - self.data[1] * self.data[2]),
            3 => {
                let a = &self.data;
                Ok(
                    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                        + a[2] * (a[3] * a[7] - a[4] * a[6]),
                )
            }
            _ => Ok(match Lu::factor(self) {
                Ok(lu) => lu.determinant(),
                Err(_) => 0.0,
            }),
        }
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.check_square("inverse")?;
        let n = self.rows;
        let lu = Lu::factor(self)?;
        let mut out = Matrix::zeros(n, n);
        let mut col: Storage = SmallVec::from_elem(0.0, n);
        for j in 0..n {
            col.iter_mut()
                .enumerate()
                .for_each(|(i, c)| *c = if i == j { 1.0 } else { 0.0 });
            lu.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    /// Lower-triangular `L` with `L·Lᵀ = self`; fails unless symmetric positive definite.
    pub fn cholesky(&self) -> Result<Matrix> {
        self.check_square("cholesky")?;
        let n = self.rows;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Metric(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 1e-14 * scale || !d.is_finite() {
                return Err(Error::Metric(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:>12.6e}", self[(i, j)]))
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    /// Panics on incompatible shapes; use [`Matrix::try_mul`] for a checked product.
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "incompatible shapes in matrix product");
        self.mul_unchecked(rhs)
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "shape mismatch in matrix sum"
        );
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&Matrix> for Matrix {
    fn add_assign(&mut self, rhs: &Matrix) {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "shape mismatch in matrix sum"
        );
        self.data
            .iter_mut()
            .zip(&rhs.data)
            .for_each(|(a, b)| *a += b);
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "shape mismatch in matrix difference"
        );
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&rhs.data)
            .for_each(|(a, b)| *a -= b);
        out
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

#[inline(always)]
fn mul_square<const N: usize>(a: &[f64], b: &[f64], dst: &mut [f64]) {
    let mut bb = [[0.0; N]; N];
    for (k, row) in bb.iter_mut().enumerate() {
        row.copy_from_slice(&b[k * N..(k + 1) * N]);
    }
    for i in 0..N {
        let mut row = [0.0; N];
        for (k, bk) in bb.iter().enumerate() {
            let aik = a[i * N + k];
            for j in 0..N {
                row[j] += aik * bk[j];
            }
        }
        dst[i * N..(i + 1) * N].copy_from_slice(&row);
    }
}

/// LU factorisation with partial pivoting.
struct Lu {
    n: usize,
    lu: Storage,
    perm: SmallVec<[usize; 4]>,
    sign: f64,
}

impl Lu {
    // Pivots below this fraction of the largest entry count as singular.
    const RCOND_FLOOR: f64 = 1e-13;

    fn factor(a: &Matrix) -> Result<Lu> {
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: SmallVec<[usize; 4]> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.max_abs();
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Singular(format!(
                "{n}x{n} matrix is zero or non-finite"
            )));
        }
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmax <= Self::RCOND_FLOOR * scale {
                return Err(Error::Singular(format!(
                    "pivot {k} is {pmax:e} against scale {scale:e}"
                )));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(Lu { n, lu, perm, sign })
    }

    fn determinant(&self) -> f64 {
        (0..self.n)
            .map(|i| self.lu[i * self.n + i])
            .product::<f64>()
            * self.sign
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let permuted: Storage = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        for i in 0..n {
            for k in 0..i {
                b[i] -= self.lu[i * n + k] * b[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                b[i] -= self.lu[i * n + k] * b[k];
            }
            b[i] /= self.lu[i * n + i];
        }
    }
}

/// Solves `A·x = b`.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    a.check_square("solve_linear")?;
    if b.len() != a.rows {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.rows
        )));
    }
    let lu = Lu::factor(a)?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("solution is not finite".into()));
    }
    Ok(x)
}

pub fn frobenius_dist(a: &Matrix, b: &Matrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

// Taylor terms are summed after scaling the argument into this 1-norm ball.
const EXP_SCALE_TARGET: f64 = 0.5;
const EXP_MAX_TERMS: usize = 40;

/// Matrix exponential by scaling and squaring over a truncated Taylor series.
pub fn mat_exp(a: &Matrix) -> Result<Matrix> {
    a.check_square("mat_exp")?;
    if !a.is_finite() {
        return Err(Error::NonFinite("mat_exp argument".into()));
    }
    let n = a.rows;
    let norm = a.norm_1();
    let squarings = if norm > EXP_SCALE_TARGET {
        (norm / EXP_SCALE_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let b = if squarings > 0 {
        a.scale(0.5f64.powi(squarings))
    } else {
        a.clone()
    };

    let bn = b.norm_1();
    if bn == 0.0 {
        return Ok(Matrix::identity(n));
    }
    // Smallest K with ‖b‖^(K+1)/(K+1)! below half an ulp; the tail is at most twice that term.
    let mut terms = 1;
    let mut bound = bn;
    while terms < EXP_MAX_TERMS && 2.0 * bound * bn / (terms + 1) as f64 > 0.5 * f64::EPSILON {
        terms += 1;
        bound *= bn / terms as f64;
    }
    // Horner: S = I + b(I + b/2(I + b/3(...)))
    let mut sum = Matrix::identity(n);
    for k in (1..=terms).rev() {
        sum = &b * &sum;
        sum.data.iter_mut().for_each(|x| *x /= k as f64);
        sum.add_identity();
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    if !sum.is_finite() {
        return Err(Error::NonFinite("mat_exp overflowed".into()));
    }
    Ok(sum)
}

// Square roots are taken until ‖M − I‖₁ drops below this.
const LOG_SQRT_TARGET: f64 = 0.5;
const LOG_MAX_SQRTS: usize = 30;
const LOG_MAX_TERMS: usize = 60;
const DB_MAX_ITERS: usize = 100;

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// After `s` Denman–Beavers square roots bring `M` near the identity, the
/// logarithm is summed as `2·atanh(Z)` with `Z = (M − I)(M + I)⁻¹` and scaled
/// back by `2^s`.
pub fn mat_log(m: &Matrix) -> Result<Matrix> {
    m.check_square("mat_log")?;
    if !m.is_finite() {
        return Err(Error::NonFinite("mat_log argument".into()));
    }
    let n = m.rows;
    let det = m.determinant()?;
    if det.abs() <= 1e-14 * m.max_abs().powi(n as i32) || det == 0.0 {
        return Err(Error::Singular(format!(
            "mat_log argument has determinant {det:e}"
        )));
    }
    let eye = Matrix::identity(n);
    let mut x = m.clone();
    let mut roots = 0usize;
    while (&x - &eye).norm_1() > LOG_SQRT_TARGET {
        if roots == LOG_MAX_SQRTS {
            return Err(Error::Range(format!(
                "‖M − I‖₁ = {:.3e} after {roots} square roots",
                (&x - &eye).norm_1()
            )));
        }
        x = sqrt_denman_beavers(&x)?;
        roots += 1;
    }

    let z = &(&x - &eye) * &(&x + &eye).inverse().map_err(range_from_singular)?;
    let zn = z.norm_1();
    let z2 = &z * &z;
    // Smallest K whose first omitted term z^(2K+1)/(2K+1) is below half an ulp of ‖Z‖.
    let mut terms = 0;
    let mut power = 1.0;
    while terms < LOG_MAX_TERMS
        && power * zn * zn / (1.0 - (zn * zn).min(0.5))
            > 0.25 * f64::EPSILON * (2 * terms + 3) as f64
    {
        terms += 1;
        power *= zn * zn;
    }
    // Horner in Z²: Z(I + Z²/3 + Z⁴/5 + ...)
    let mut q = Matrix::identity(n).scale(1.0 / (2 * terms + 1) as f64);
    for k in (0..terms).rev() {
        q = &z2 * &q;
        let inv = 1.0 / (2 * k + 1) as f64;
        for i in 0..n {
            q.data[i * n + i] += inv;
        }
    }
    let sum = &z * &q;
    let out = sum.scale(2.0 * (1u64 << roots) as f64);
    if !out.is_finite() {
        return Err(Error::Range("logarithm is not finite".into()));
    }
    Ok(out)
}

fn range_from_singular(e: Error) -> Error {
    match e {
        Error::Singular(msg) => {
            Error::Range(format!("spectrum touches the negative real axis: {msg}"))
        }
        other => other,
    }
}

fn sqrt_denman_beavers(a: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    let mut y = a.clone();
    let mut z = Matrix::identity(n);
    for _ in 0..DB_MAX_ITERS {
        let y_inv = y.inverse().map_err(range_from_singular)?;
        let z_inv = z.inverse().map_err(range_from_singular)?;
        let y_next = (&y + &z_inv).scale(0.5);
        let z_next = (&z + &y_inv).scale(0.5);
        let change = (&y_next - &y).norm_1();
        y = y_next;
        z = z_next;
        if !y.is_finite() {
            break;
        }
        if change <= 1e-15 * y.norm_1() {
            return Ok(y);
        }
    }
    Err(Error::Range(
        "Denman–Beavers square root did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn heisenberg(x: f64, y: f64, z: f64) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, x, z, 0.0, 0.0, y, 0.0, 0.0, 0.0]).unwrap()
    }

    fn rodrigues_z(theta: f64) -> Matrix {
        let (s, c) = theta.sin_cos();
        Matrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn random_matrix(n: usize, scale: f64, seed: &[f64]) -> Matrix {
        Matrix::from_fn(n, n, |i, j| scale * seed[(i * n + j) % seed.len()])
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(mat_exp(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn exp_of_nilpotent_terminates() {
        let a = heisenberg(0.3, -0.7, 0.2);
        let expected = &(&Matrix::identity(3) + &a) + &(&a * &a).scale(0.5);
        assert!(frobenius_dist(&mat_exp(&a).unwrap(), &expected).unwrap() < 1e-15);
        // Large enough to force squarings.
        let a = heisenberg(2.0, 3.0, -1.0);
        let expected = &(&Matrix::identity(3) + &a) + &(&a * &a).scale(0.5);
        assert!(frobenius_dist(&mat_exp(&a).unwrap(), &expected).unwrap() < 1e-13);
    }

    #[test]
    fn exp_of_rotation_generator_matches_rodrigues() {
        let e3 =
            Matrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        for theta in [0.1, 1.0, 2.5, -3.0, 7.0] {
            let got = mat_exp(&e3.scale(theta)).unwrap();
            assert!(
                frobenius_dist(&got, &rodrigues_z(theta)).unwrap() < 1e-13,
                "theta {theta}"
            );
        }
    }

    #[test]
    fn exp_rejects_non_square() {
        assert!(matches!(
            mat_exp(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = mat_log(&Matrix::identity(3)).unwrap();
        assert_eq!(l.max_abs(), 0.0);
    }

    #[test]
    fn log_of_unipotent_terminates() {
        let n = heisenberg(0.4, -0.2, 0.9);
        let m = &Matrix::identity(3) + &n;
        let expected = &n - &(&n * &n).scale(0.5);
        assert!(frobenius_dist(&mat_log(&m).unwrap(), &expected).unwrap() < 1e-14);
    }

    #[test]
    fn log_of_large_rotation_needs_square_roots() {
        let got = mat_log(&rodrigues_z(2.0)).unwrap();
        assert_abs_diff_eq!(got[(1, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got[(0, 1)], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn log_errors() {
        let singular = Matrix::diagonal(&[1.0, 0.0]);
        assert!(matches!(mat_log(&singular), Err(Error::Singular(_))));
        let minus_identity = Matrix::diagonal(&[-1.0, -1.0]);
        assert!(matches!(mat_log(&minus_identity), Err(Error::Range(_))));
    }

    #[test]
    fn solve_examples() {
        assert_eq!(
            solve_linear(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let x = solve_linear(&Matrix::diagonal(&[2.0, 4.0]), &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        let singular = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(
            solve_linear(&singular, &[1.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn solve_random_six_by_six() {
        // Diagonally dominant so it is well conditioned.
        let seed = [0.3, -0.8, 0.5, 0.1, -0.2, 0.9, 0.7, -0.4];
        let mut a = random_matrix(6, 1.0, &seed);
        for i in 0..6 {
            a[(i, i)] += 6.0;
        }
        let b = [1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let x = solve_linear(&a, &b).unwrap();
        let ax = a.mul_vec(&x).unwrap();
        let resid: f64 = ax
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-10);
    }

    #[test]
    fn frobenius_examples() {
        let a = heisenberg(1.0, 2.0, 3.0);
        assert_eq!(frobenius_dist(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(
            frobenius_dist(&Matrix::identity(2), &Matrix::zeros(2, 2)).unwrap(),
            2f64.sqrt()
        );
        assert!(matches!(
            frobenius_dist(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(m.cholesky(), Err(Error::Metric(_))));
        let spd = Matrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = spd.cholesky().unwrap();
        assert!(frobenius_dist(&(&l * &l.transpose()), &spd).unwrap() < 1e-14);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 0.0).is_err());
        assert!(Tolerance::new(-1.0, 1.0).is_err());
        let t = Tolerance::default();
        assert_eq!((t.abs_tol, t.rel_tol), (1e-12, 1e-9));
    }

    fn small_matrix(n: usize, radius: f64) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let m = Matrix::from_row_slice(n, n, &v).unwrap();
            let norm = m.norm_fro().max(1e-300);
            m.scale(radius / norm.max(radius))
        })
    }

    proptest! {
        #[test]
        fn exp_of_negation_is_inverse(a in small_matrix(4, 1.0)) {
            let p = &mat_exp(&a).unwrap() * &mat_exp(&-&a).unwrap();
            prop_assert!(frobenius_dist(&p, &Matrix::identity(4)).unwrap() < 1e-10);
        }

        #[test]
        fn log_inverts_exp_on_small_ball(a in small_matrix(4, 0.5)) {
            let back = mat_log(&mat_exp(&a).unwrap()).unwrap();
            prop_assert!(frobenius_dist(&back, &a).unwrap() < 1e-10);
        }

        #[test]
        fn determinant_of_exp_is_exp_of_trace(a in small_matrix(3, 2.0)) {
            let d = mat_exp(&a).unwrap().determinant().unwrap();
            prop_assert!((d - a.trace().exp()).abs() < 1e-8 * d.abs().max(1.0));
        }

        #[test]
        fn frobenius_is_symmetric(a in small_matrix(3, 5.0), b in small_matrix(3, 5.0)) {
            prop_assert_eq!(frobenius_dist(&a, &b).unwrap(), frobenius_dist(&b, &a).unwrap());
        }
    }
}
