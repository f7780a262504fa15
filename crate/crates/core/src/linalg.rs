//! Dense linear algebra kernel.
//!
//! Every routine is generic over a [`ComplexField`] scalar, so the same code
//! serves real (`f32`/`f64`) Gram matrices and complex impedance or Helmholtz
//! blocks. Factorizations are immutable once built and can be shared between
//! threads for concurrent solves.
//!
//! Eigen- and singular-value problems in weighted norms are reduced to
//! standard Hermitian problems through Cholesky factors of the weights and then
//! handed to nalgebra's dense Hermitian eigensolver and SVD.

use nalgebra::{ComplexField, DMatrix, DVector, RealField};
use num_traits::Zero;
use thiserror::Error;

/// Relative pivot threshold below which an LU factorization is declared singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-14;

/// Relative tolerance on `‖M − Mᴴ‖_max / ‖M‖_max` for Hermitian inputs.
pub const HERMITIAN_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("singular pivot at elimination step {step} (|pivot| = {magnitude:e}, row scale {row_scale:e})")]
    SingularPivot {
        step: usize,
        magnitude: f64,
        row_scale: f64,
    },
    #[error("matrix is not positive definite: pivot {index} has value {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dense eigen/singular value iteration did not converge")]
    NoConvergence,
}

pub(crate) fn real_to_f64<T: RealField>(x: T) -> f64 {
    nalgebra::try_convert::<T, f64>(x).unwrap_or(f64::NAN)
}

fn real_from_f64<T: RealField>(x: f64) -> T {
    nalgebra::convert::<f64, T>(x)
}

/// Largest entry modulus.
pub fn max_abs<S: ComplexField>(m: &DMatrix<S>) -> S::RealField {
    m.iter()
        .map(|z| z.clone().modulus())
        .fold(S::RealField::zero(), |a, b| if b > a { b } else { a })
}

/// `‖M − Mᴴ‖_max / ‖M‖_max` (zero for the zero matrix).
pub fn hermitian_defect<S: ComplexField>(m: &DMatrix<S>) -> S::RealField {
    let scale = max_abs(m);
    if scale == S::RealField::zero() {
        return scale;
    }
    let mut worst = S::RealField::zero();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let d = (m[(i, j)].clone() - m[(j, i)].clone().conjugate()).modulus();
            if d > worst {
                worst = d;
            }
        }
    }
    worst / scale
}

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part<S: ComplexField>(m: &DMatrix<S>) -> DMatrix<S> {
    let half: S = nalgebra::convert(0.5);
    (m + m.adjoint()) * half
}

fn check_square<S: ComplexField>(m: &DMatrix<S>) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.clone().is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(m.nrows())
}

fn check_hermitian<S: ComplexField>(m: &DMatrix<S>) -> Result<(), LinalgError> {
    let defect = real_to_f64(hermitian_defect(m));
    if !(defect <= HERMITIAN_RTOL) {
        return Err(LinalgError::NotHermitian { asymmetry: defect });
    }
    Ok(())
}

/// Anything that can solve `source · x = b`.
pub trait Factorization<S: ComplexField> {
    fn dim(&self) -> usize;
    fn solve(&self, b: &DVector<S>) -> Result<DVector<S>, LinalgError>;
}

/// Solves `source · x = b` with a prebuilt factorization.
pub fn solve_linear<S: ComplexField, F: Factorization<S> + ?Sized>(
    fact: &F,
    b: &DVector<S>,
) -> Result<DVector<S>, LinalgError> {
    fact.solve(b)
}

/// LU factorization with partial (row) pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu<S: ComplexField> {
    factors: DMatrix<S>,
    // perm[k] = original row sitting at position k
    perm: Vec<usize>,
}

impl<S: ComplexField> Lu<S> {
    pub fn new(source: DMatrix<S>) -> Result<Self, LinalgError> {
        let n = check_square(&source)?;
        let mut a = source;
        let row_scale: Vec<S::RealField> = (0..n)
            .map(|i| {
                a.row(i)
                    .iter()
                    .map(|z| z.clone().modulus())
                    .fold(S::RealField::zero(), |x, y| if y > x { y } else { x })
            })
            .collect();
        let rtol: S::RealField = real_from_f64(SINGULAR_PIVOT_RTOL);
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].clone().modulus();
            for i in k + 1..n {
                let v = a[(i, k)].clone().modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            let scale = row_scale[perm[p]].clone();
            if best == S::RealField::zero() || best < rtol.clone() * scale.clone() {
                return Err(LinalgError::SingularPivot {
                    step: k,
                    magnitude: real_to_f64(best),
                    row_scale: real_to_f64(scale),
                });
            }
            if p != k {
                a.swap_rows(k, p);
                perm.swap(k, p);
            }
            let pivot = a[(k, k)].clone();
            for i in k + 1..n {
                a[(i, k)] = a[(i, k)].clone() / pivot.clone();
            }
            // column-major friendly rank-one update
            let (head, tail) = a.as_mut_slice().split_at_mut((k + 1) * n);
            let lcol = &head[k * n..(k + 1) * n];
            for col in tail.chunks_exact_mut(n) {
                let akj = col[k].clone();
                if akj == S::zero() {
                    continue;
                }
                for i in k + 1..n {
                    col[i] -= lcol[i].clone() * akj.clone();
                }
            }
        }
        Ok(Self { factors: a, perm })
    }

    pub fn solve_in_place(&self, b: &mut DVector<S>) -> Result<(), LinalgError> {
        let n = self.factors.nrows();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p].clone()).collect();
        let f = self.factors.as_slice();
        for k in 0..n {
            let xk = x[k].clone();
            if xk == S::zero() {
                continue;
            }
            let col = &f[k * n..(k + 1) * n];
            for i in k + 1..n {
                x[i] -= col[i].clone() * xk.clone();
            }
        }
        for k in (0..n).rev() {
            let col = &f[k * n..(k + 1) * n];
            x[k] = x[k].clone() / col[k].clone();
            let xk = x[k].clone();
            for i in 0..k {
                x[i] -= col[i].clone() * xk.clone();
            }
        }
        for (dst, src) in b.iter_mut().zip(x) {
            *dst = src;
        }
        Ok(())
    }

    pub fn solve_matrix(&self, b: &DMatrix<S>) -> Result<DMatrix<S>, LinalgError> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            let mut v = DVector::from_iterator(col.len(), col.iter().cloned());
            self.solve_in_place(&mut v)?;
            col.copy_from(&v);
        }
        Ok(out)
    }

    /// Dense inverse (used for matrix-identity checks at desk scale).
    pub fn inverse(&self) -> Result<DMatrix<S>, LinalgError> {
        let n = self.dim();
        self.solve_matrix(&DMatrix::identity(n, n))
    }
}

impl<S: ComplexField> Factorization<S> for Lu<S> {
    fn dim(&self) -> usize {
        self.factors.nrows()
    }

    fn solve(&self, b: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        let mut x = b.clone();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

/// Cholesky factorization `A = L·Lᴴ` of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<S: ComplexField> {
    lower: DMatrix<S>,
}

impl<S: ComplexField> Cholesky<S> {
    /// Only the lower triangle of `source` is read; Hermitian symmetry is the
    /// caller's responsibility (see [`Cholesky::new_checked`]).
    pub fn new(source: &DMatrix<S>) -> Result<Self, LinalgError> {
        let n = check_square(source)?;
        let mut l = DMatrix::<S>::zeros(n, n);
        for j in 0..n {
            let mut d = source[(j, j)].clone().real();
            for k in 0..j {
                d -= l[(j, k)].clone().modulus_squared();
            }
            if !(d > S::RealField::zero()) {
                return Err(LinalgError::NotPositiveDefinite {
                    index: j,
                    value: real_to_f64(d),
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = S::from_real(ljj.clone());
            let mut col: Vec<S> = (j + 1..n).map(|i| source[(i, j)].clone()).collect();
            for k in 0..j {
                let ljk = l[(j, k)].clone().conjugate();
                if ljk == S::zero() {
                    continue;
                }
                for (off, i) in (j + 1..n).enumerate() {
                    col[off] -= l[(i, k)].clone() * ljk.clone();
                }
            }
            for (off, i) in (j + 1..n).enumerate() {
                l[(i, j)] = col[off].clone().unscale(ljj.clone());
            }
        }
        Ok(Self { lower: l })
    }

    /// Like [`Cholesky::new`] but rejects inputs that are not Hermitian.
    pub fn new_checked(source: &DMatrix<S>) -> Result<Self, LinalgError> {
        check_square(source)?;
        check_hermitian(source)?;
        Self::new(source)
    }

    /// Wraps an existing lower-triangular factor with a positive real diagonal.
    pub fn from_lower(lower: DMatrix<S>) -> Self {
        Self { lower }
    }

    pub fn lower(&self) -> &DMatrix<S> {
        &self.lower
    }

    /// `L · Lᴴ`.
    pub fn reconstruct(&self) -> DMatrix<S> {
        &self.lower * self.lower.adjoint()
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.lower.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.lower.nrows(),
                found: len,
            });
        }
        Ok(())
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        self.check_len(b.len())?;
        let n = b.len();
        let mut x = b.clone();
        let l = self.lower.as_slice();
        for k in 0..n {
            let col = &l[k * n..(k + 1) * n];
            x[k] = x[k].clone() / col[k].clone();
            let xk = x[k].clone();
            for i in k + 1..n {
                x[i] -= col[i].clone() * xk.clone();
            }
        }
        Ok(x)
    }

    /// `L⁻ᴴ b`.
    pub fn solve_lower_adjoint(&self, b: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        self.check_len(b.len())?;
        let n = b.len();
        let mut x = b.clone();
        let l = self.lower.as_slice();
        for k in (0..n).rev() {
            let col = &l[k * n..(k + 1) * n];
            let mut acc = x[k].clone();
            for i in k + 1..n {
                acc -= col[i].clone().conjugate() * x[i].clone();
            }
            x[k] = acc / col[k].clone().conjugate();
        }
        Ok(x)
    }

    /// `L x`.
    pub fn mul_lower(&self, x: &DVector<S>) -> DVector<S> {
        &self.lower * x
    }

    /// `Lᴴ x`.
    pub fn mul_lower_adjoint(&self, x: &DVector<S>) -> DVector<S> {
        self.lower.ad_mul(x)
    }

    /// `xᴴ A x` (real, non-negative).
    pub fn quadratic_form(&self, x: &DVector<S>) -> S::RealField {
        self.mul_lower_adjoint(x).norm_squared()
    }

    /// `xᴴ A⁻¹ x` (real, non-negative).
    pub fn inverse_quadratic_form(&self, x: &DVector<S>) -> Result<S::RealField, LinalgError> {
        Ok(self.solve_lower(x)?.norm_squared())
    }

    pub fn inverse(&self) -> Result<DMatrix<S>, LinalgError> {
        let n = self.lower.nrows();
        let mut out = DMatrix::<S>::identity(n, n);
        for mut col in out.column_iter_mut() {
            let v = DVector::from_iterator(n, col.iter().cloned());
            col.copy_from(&self.solve(&v)?);
        }
        Ok(out)
    }
}

impl<S: ComplexField> Factorization<S> for Cholesky<S> {
    fn dim(&self) -> usize {
        self.lower.nrows()
    }

    fn solve(&self, b: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        let y = self.solve_lower(b)?;
        self.solve_lower_adjoint(&y)
    }
}

/// `L⁻¹ M` column by column.
fn lower_solve_matrix<S: ComplexField>(chol: &Cholesky<S>, m: &DMatrix<S>) -> Result<DMatrix<S>, LinalgError> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let v = DVector::from_iterator(col.len(), col.iter().cloned());
        col.copy_from(&chol.solve_lower(&v)?);
    }
    Ok(out)
}

/// Dense matrix of a linear map given by its action on vectors of length `n`.
pub fn densify<S: ComplexField>(n: usize, apply: impl Fn(&DVector<S>) -> DVector<S>) -> DMatrix<S> {
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = DVector::<S>::zeros(n);
        e[j] = S::one();
        cols.push(apply(&e));
    }
    if cols.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Eigenpairs of the Hermitian-definite pencil `M x = λ N x`, ascending.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen<S: ComplexField> {
    pub values: Vec<S::RealField>,
    /// Columns are `N`-orthonormal eigenvectors matching `values`.
    pub vectors: DMatrix<S>,
}

pub fn generalized_eigen<S: ComplexField>(m: &DMatrix<S>, n: &DMatrix<S>) -> Result<GeneralizedEigen<S>, LinalgError> {
    let dim = check_square(m)?;
    if n.nrows() != dim {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: n.nrows(),
        });
    }
    check_hermitian(m)?;
    let chol = Cholesky::new_checked(n)?;
    // C = L⁻¹ M L⁻ᴴ = L⁻¹ (L⁻¹ M)ᴴ since M = Mᴴ
    let x = lower_solve_matrix(&chol, m)?;
    let c = hermitian_part(&lower_solve_matrix(&chol, &x.adjoint())?);
    let eps: S::RealField = real_from_f64(1e-15);
    let eig = nalgebra::SymmetricEigen::try_new(c, eps, 0).ok_or(LinalgError::NoConvergence)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .clone()
            .partial_cmp(&eig.eigenvalues[b].clone())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].clone()).collect();
    let mut vectors = DMatrix::<S>::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(src).into_owned();
        vectors.set_column(dst, &chol.solve_lower_adjoint(&y)?);
    }
    Ok(GeneralizedEigen { values, vectors })
}

/// Smallest and largest `λ` with `Ker(M − λN) ≠ {0}`.
pub fn extremal_generalized_eig<S: ComplexField>(
    m: &DMatrix<S>,
    n: &DMatrix<S>,
) -> Result<(S::RealField, S::RealField), LinalgError> {
    let dim = check_square(m)?;
    if n.nrows() != dim || n.ncols() != dim {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: n.nrows(),
        });
    }
    check_hermitian(m)?;
    let chol = Cholesky::new_checked(n)?;
    let x = lower_solve_matrix(&chol, m)?;
    let c = hermitian_part(&lower_solve_matrix(&chol, &x.adjoint())?);
    let eps: S::RealField = real_from_f64(1e-15);
    let eig = nalgebra::SymmetricEigen::try_new(c, eps, 0).ok_or(LinalgError::NoConvergence)?;
    let vals = eig.eigenvalues;
    let lo = vals
        .iter()
        .cloned()
        .fold(None, |acc: Option<S::RealField>, v| match acc {
            Some(a) if a <= v => Some(a),
            _ => Some(v),
        });
    let hi = vals
        .iter()
        .cloned()
        .fold(None, |acc: Option<S::RealField>, v| match acc {
            Some(a) if a >= v => Some(a),
            _ => Some(v),
        });
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(LinalgError::DimensionMismatch { expected: 1, found: 0 }),
    }
}

/// The norm a matrix is measured in: `‖x‖² = xᴴ G x` for a Gram matrix `G = L Lᴴ`,
/// or `‖x‖² = xᴴ G⁻¹ x` for the dual norm.
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a, S: ComplexField> {
    Gram(&'a Cholesky<S>),
    InverseGram(&'a Cholesky<S>),
}

impl<S: ComplexField> Metric<'_, S> {
    fn dim(&self) -> usize {
        match self {
            Metric::Gram(c) | Metric::InverseGram(c) => c.dim(),
        }
    }

    /// Isometry into the Euclidean space: `‖x‖ = |W x|₂`.
    fn whiten(&self, x: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        match self {
            Metric::Gram(c) => Ok(c.mul_lower_adjoint(x)),
            Metric::InverseGram(c) => c.solve_lower(x),
        }
    }

    /// Inverse of [`Metric::whiten`].
    fn unwhiten(&self, y: &DVector<S>) -> Result<DVector<S>, LinalgError> {
        match self {
            Metric::Gram(c) => c.solve_lower_adjoint(y),
            Metric::InverseGram(c) => Ok(c.mul_lower(y)),
        }
    }

    pub fn norm(&self, x: &DVector<S>) -> Result<S::RealField, LinalgError> {
        Ok(self.whiten(x)?.norm())
    }
}

/// Singular values (descending) of `K` viewed as a map from `(ℂⁿ, input)` to `(ℂᵐ, output)`,
/// i.e. of `W_out · K · W_in⁻¹`.
pub fn weighted_singular_values<S: ComplexField>(
    k: &DMatrix<S>,
    output: Metric<'_, S>,
    input: Metric<'_, S>,
) -> Result<Vec<S::RealField>, LinalgError> {
    if output.dim() != k.nrows() {
        return Err(LinalgError::DimensionMismatch {
            expected: k.nrows(),
            found: output.dim(),
        });
    }
    if input.dim() != k.ncols() {
        return Err(LinalgError::DimensionMismatch {
            expected: k.ncols(),
            found: input.dim(),
        });
    }
    let (m, n) = k.shape();
    let mut transformed = DMatrix::<S>::zeros(m, n);
    for j in 0..n {
        let mut e = DVector::<S>::zeros(n);
        e[j] = S::one();
        let x = input.unwhiten(&e)?;
        let y = output.whiten(&(k * x))?;
        transformed.set_column(j, &y);
    }
    if transformed.iter().any(|z| !z.clone().is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let eps: S::RealField = real_from_f64(1e-15);
    let svd = nalgebra::SVD::try_new(transformed, false, false, eps, 0).ok_or(LinalgError::NoConvergence)?;
    let mut values: Vec<S::RealField> = svd.singular_values.iter().cloned().collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if m < n {
        // rank deficient: infimum over the kernel is zero
        values.push(S::RealField::zero());
    }
    Ok(values)
}

/// `min_{x≠0} ‖Kx‖_{G_out} / ‖x‖_{G_in}`.
pub fn min_singular_in_norms<S: ComplexField>(
    k: &DMatrix<S>,
    g_out: &DMatrix<S>,
    g_in: &DMatrix<S>,
) -> Result<S::RealField, LinalgError> {
    let out = Cholesky::new_checked(g_out)?;
    let inp = Cholesky::new_checked(g_in)?;
    let values = weighted_singular_values(k, Metric::Gram(&out), Metric::Gram(&inp))?;
    Ok(values.last().cloned().unwrap_or_else(S::RealField::zero))
}

/// `max_{x≠0} ‖Kx‖_{G_out} / ‖x‖_{G_in}`.
pub fn max_singular_in_norms<S: ComplexField>(
    k: &DMatrix<S>,
    g_out: &DMatrix<S>,
    g_in: &DMatrix<S>,
) -> Result<S::RealField, LinalgError> {
    let out = Cholesky::new_checked(g_out)?;
    let inp = Cholesky::new_checked(g_in)?;
    let values = weighted_singular_values(k, Metric::Gram(&out), Metric::Gram(&inp))?;
    Ok(values.first().cloned().unwrap_or_else(S::RealField::zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
        let a = random_matrix(rng, n);
        &a * a.adjoint() + DMatrix::identity(n, n) * c(n as f64 * 0.1, 0.0)
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let lu = Lu::new(DMatrix::<Complex64>::identity(4, 4)).unwrap();
        let b = DVector::from_vec(vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(7.0, -1.0)]);
        assert_eq!(solve_linear(&lu, &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0_f64, 3.0]));
        let lu = Lu::new(m.clone()).unwrap();
        let x = lu.solve(&DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, 1.0]));
        let ch = Cholesky::new(&m).unwrap();
        let x = ch.solve(&DVector::from_vec(vec![2.0, 3.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_complex_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 20) + DMatrix::identity(20, 20) * c(4.0, 0.0);
        let lu = Lu::new(a.clone()).unwrap();
        for _ in 0..10 {
            let b = DVector::from_fn(20, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let x = lu.solve(&b).unwrap();
            assert!((&a * &x - &b).norm() <= 1e-10 * b.norm());
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0_f64, 2.0, 2.0, 4.0]);
        match Lu::new(m) {
            Err(LinalgError::SingularPivot { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let lu = Lu::new(DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!(matches!(
            lu.solve(&DVector::zeros(2)),
            Err(LinalgError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn cholesky_reports_offending_pivot() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0_f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -2.0]);
        assert!(matches!(
            Cholesky::new(&m),
            Err(LinalgError::NotPositiveDefinite { index: 2, .. })
        ));
    }

    #[test]
    fn cholesky_reconstructs_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 5, 17] {
            let a = random_hpd(&mut rng, n);
            let ch = Cholesky::new_checked(&a).unwrap();
            let err = max_abs(&(ch.reconstruct() - &a));
            assert!(err <= 1e-12 * max_abs(&a), "n={n} err={err}");
            let b = DVector::from_fn(n, |i, _| c(i as f64, 1.0));
            assert!((&a * ch.solve(&b).unwrap() - &b).norm() <= 1e-10 * b.norm());
        }
    }

    #[test]
    fn extremal_eig_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = random_hpd(&mut rng, 6);
        let (lo, hi) = extremal_generalized_eig(&n, &n).unwrap();
        assert!((lo - 1.0).abs() < 1e-10 && (hi - 1.0).abs() < 1e-10);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0_f64, 4.0]));
        let (lo, hi) = extremal_generalized_eig(&m, &DMatrix::identity(2, 2)).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 4.0).abs() < 1e-14);
    }

    #[test]
    fn generalized_eigenpairs_have_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 12);
        let m = hermitian_part(&a);
        let n = random_hpd(&mut rng, 12);
        let eig = generalized_eigen(&m, &n).unwrap();
        for (k, lambda) in eig.values.iter().enumerate() {
            let x = eig.vectors.column(k).into_owned();
            let nx = &n * &x;
            let r = &m * &x - &nx * c(*lambda, 0.0);
            assert!(r.norm() <= 1e-8 * nx.norm());
        }
        let (lo, hi) = extremal_generalized_eig(&m, &n).unwrap();
        assert!((lo - eig.values[0]).abs() < 1e-10);
        assert!((hi - eig.values[11]).abs() < 1e-10);
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0_f64, 2.0, 0.0, 1.0]);
        assert!(matches!(
            extremal_generalized_eig(&m, &DMatrix::identity(2, 2)),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn min_singular_trivial_cases() {
        let id = DMatrix::<Complex64>::identity(3, 3);
        assert!((min_singular_in_norms(&id, &id, &id).unwrap() - 1.0).abs() < 1e-14);
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0_f64, 5.0]));
        let i2 = DMatrix::identity(2, 2);
        assert!((min_singular_in_norms(&k, &i2, &i2).unwrap() - 3.0).abs() < 1e-14);
        assert!((max_singular_in_norms(&k, &i2, &i2).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_singular_values_match_rayleigh_sampling() {
        // brute-force check: min over random directions never undercuts the computed minimum
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = random_matrix(&mut rng, 5) + DMatrix::identity(5, 5) * c(2.0, 0.0);
        let go = random_hpd(&mut rng, 5);
        let gi = random_hpd(&mut rng, 5);
        let smin = min_singular_in_norms(&k, &go, &gi).unwrap();
        let smax = max_singular_in_norms(&k, &go, &gi).unwrap();
        for _ in 0..2000 {
            let x = DVector::from_fn(5, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let kx = &k * &x;
            let num = kx.dotc(&(&go * &kx)).re.sqrt();
            let den = x.dotc(&(&gi * &x)).re.sqrt();
            let q = num / den;
            assert!(q >= smin * (1.0 - 1e-10) && q <= smax * (1.0 + 1e-10));
        }
    }

    proptest::proptest! {
        #[test]
        fn identity_has_unit_singular_value_in_any_metric(seed in 0u64..1000, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_hpd(&mut rng, n);
            let id = DMatrix::<Complex64>::identity(n, n);
            let s = min_singular_in_norms(&id, &g, &g).unwrap();
            proptest::prop_assert!((s - 1.0).abs() <= 1e-10);
        }
    }
}
