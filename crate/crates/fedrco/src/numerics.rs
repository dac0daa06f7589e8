//! Dense linear algebra kernel: the `Matrix` type, symmetric damped inversion,
//! spectral rank estimation, and the brute-force Kronecker machinery used as an
//! independent oracle by the test suites.
//!
//! Everything here operates on 64-bit floats. All public operations either
//! return finite values or an error; NaN is never a silent result.

use crate::error::{Error, Result};

/// Relative tolerance below which an input must be symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default relative eigenvalue cutoff for rank estimation.
pub const RANK_TOL: f64 = 1e-8;

/// Dense row-major 2-D array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row: Vec<String> = (0..self.cols.min(8))
                .map(|c| format!("{:10.4e}", self[(r, c)]))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "data length must equal rows*cols");
        Matrix { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// `self += s * other`. Panics on shape mismatch (internal use).
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// `self * other`, i-k-j loop order over row-major storage.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_transpose(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                out[(i, j)] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Symmetric part `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square());
        let mut s = self.clone();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let v = 0.5 * (self[(r, c)] + self[(c, r)]);
                s[(r, c)] = v;
                s[(c, r)] = v;
            }
        }
        s
    }

    /// Largest off-diagonal asymmetry relative to the matrix scale.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(1.0);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst / scale
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

fn check_square(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NonSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    check_square(m)?;
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 || !s.is_finite() {
                    return Err(Error::FactorizationFailure { pivot: i });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// `(M + ρI)^{-1}` for symmetric PSD `M` via Cholesky of the damped matrix.
///
/// The input is symmetrized before factorization; the result is symmetrized
/// after, so round-off asymmetry from EMA accumulation never propagates.
pub fn damped_symmetric_inverse(m: &Matrix, rho: f64) -> Result<Matrix> {
    check_square(m)?;
    assert!(rho > 0.0, "damping must be positive");
    let asym = m.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::AsymmetricInput { max_asym: asym });
    }
    let n = m.rows;
    let mut damped = m.symmetrized();
    for i in 0..n {
        damped[(i, i)] += rho;
    }
    let l = cholesky(&damped)?;

    // Solve L Y = I, then Lᵀ X = Y, column by column.
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        for i in 0..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    let inv = inv.symmetrized();
    if !inv.is_finite() {
        return Err(Error::FactorizationFailure { pivot: n });
    }
    Ok(inv)
}

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi
/// rotations. Returns `(values, vectors)` sorted by descending eigenvalue;
/// column `j` of `vectors` is the eigenvector for `values[j]`.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_square(m)?;
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(p, i)] = a[(i, p)];
                        a[(i, q)] = s * aip + c * aiq;
                        a[(q, i)] = a[(i, q)];
                    }
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok((values, vectors))
}

/// Number of eigenvalues exceeding `tol * λ_max` for a symmetric PSD matrix.
pub fn spectral_rank(m: &Matrix, tol: f64) -> Result<usize> {
    check_square(m)?;
    assert!(tol > 0.0, "rank tolerance must be positive");
    let (values, _) = symmetric_eigen(m)?;
    let lambda_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Ok(0);
    }
    Ok(values.iter().filter(|&&l| l > tol * lambda_max).count())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            if s == 0.0 {
                continue;
            }
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = s * b[(br, bc)];
                }
            }
        }
    }
    out
}

/// Column-stacking vec operator: stacks the columns of `m` top to bottom.
pub fn vec_columns(m: &Matrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.rows * m.cols);
    for c in 0..m.cols {
        for r in 0..m.rows {
            v.push(m[(r, c)]);
        }
    }
    v
}

/// Inverse of [`vec_columns`] for a `rows x cols` target.
pub fn unvec_columns(v: &[f64], rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols);
    let mut m = Matrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = v[c * rows + r];
        }
    }
    m
}

/// Solve `A x = b` by LU with partial pivoting. Deliberately a different
/// algorithm from the Cholesky path so the two can serve as independent
/// cross-checks.
pub fn solve_dense(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    check_square(a)?;
    let n = a.rows;
    assert_eq!(b.len(), n);
    let mut lu = a.clone();
    let mut x: Vec<f64> = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[(col, col)].abs();
        for r in (col + 1)..n {
            let v = lu[(r, col)].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::FactorizationFailure { pivot: col });
        }
        if pivot != col {
            for c in 0..n {
                let tmp = lu[(col, c)];
                lu[(col, c)] = lu[(pivot, c)];
                lu[(pivot, c)] = tmp;
            }
            perm.swap(col, pivot);
            x.swap(col, pivot);
        }
        for r in (col + 1)..n {
            let f = lu[(r, col)] / lu[(col, col)];
            lu[(r, col)] = f;
            for c in (col + 1)..n {
                let v = f * lu[(col, c)];
                lu[(r, c)] -= v;
            }
            x[r] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for c in (i + 1)..n {
            s -= lu[(i, c)] * x[c];
        }
        x[i] = s / lu[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut impl Rng) -> Matrix {
        // AᵀA is PSD for any A.
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.transpose().matmul(&a)
    }

    #[test]
    fn damped_inverse_of_zero_matrix_is_scaled_identity() {
        let m = Matrix::zeros(2, 2);
        let inv = damped_symmetric_inverse(&m, 0.5).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expect = if r == c { 2.0 } else { 0.0 };
                assert!((inv[(r, c)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn damped_inverse_of_identity() {
        let inv = damped_symmetric_inverse(&Matrix::identity(3), 1.0).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 0.5 } else { 0.0 };
                assert!((inv[(r, c)] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn damped_inverse_matches_adjugate_formula() {
        // 2x2 adjugate oracle: [[2,1],[1,2]]^{-1} = (1/3)[[2,-1],[-1,2]].
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let inv = damped_symmetric_inverse(&m, 1e-12).unwrap();
        let expect = [[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!(
                    (inv[(r, c)] - expect[r][c]).abs() < 1e-9,
                    "entry ({r},{c}) = {}",
                    inv[(r, c)]
                );
            }
        }
    }

    #[test]
    fn damped_inverse_times_damped_matrix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..8);
            let m = random_psd(n, &mut rng);
            let rho = 10f64.powf(rng.random_range(-6.0..1.0));
            let inv = damped_symmetric_inverse(&m, rho).unwrap();
            let mut damped = m.symmetrized();
            for i in 0..n {
                damped[(i, i)] += rho;
            }
            let prod = inv.matmul(&damped);
            let resid = prod.sub(&Matrix::identity(n)).frobenius_norm();
            let rel = resid / Matrix::identity(n).frobenius_norm();
            assert!(rel < 1e-8, "relative residual {rel} at n={n}, rho={rho}");
            assert!(inv.is_finite());
        }
    }

    #[test]
    fn damped_inverse_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            damped_symmetric_inverse(&m, 1.0),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn damped_inverse_rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(
            damped_symmetric_inverse(&m, 1.0),
            Err(Error::AsymmetricInput { .. })
        ));
    }

    #[test]
    fn factorization_failure_on_negative_definite_input() {
        // Bug sentinel: impossible for PSD input with rho > 0, reachable here.
        let m = Matrix::identity(2).scale(-2.0);
        assert!(matches!(
            damped_symmetric_inverse(&m, 1.0),
            Err(Error::FactorizationFailure { .. })
        ));
    }

    #[test]
    fn spectral_rank_of_identity() {
        assert_eq!(spectral_rank(&Matrix::identity(4), 1e-8).unwrap(), 4);
    }

    #[test]
    fn spectral_rank_of_zero_matrix_is_zero() {
        assert_eq!(spectral_rank(&Matrix::zeros(3, 3), 1e-8).unwrap(), 0);
    }

    #[test]
    fn spectral_rank_of_outer_product_is_one() {
        let g = Matrix::column(&[1.0, -2.0, 3.0, 0.5]);
        let m = g.matmul(&g.transpose());
        assert_eq!(spectral_rank(&m, 1e-8).unwrap(), 1);
    }

    /// Independent rank oracle: Gaussian elimination with full pivoting.
    fn elimination_rank(m: &Matrix, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = (a.rows(), a.cols());
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut rank = 0;
        for _ in 0..rows.min(cols) {
            let mut best = (0usize, 0usize, 0.0f64);
            for r in rank..rows {
                for c in rank..cols {
                    if a[(r, c)].abs() > best.2 {
                        best = (r, c, a[(r, c)].abs());
                    }
                }
            }
            if best.2 <= tol * scale {
                break;
            }
            let (pr, pc, _) = best;
            for c in 0..cols {
                let tmp = a[(rank, c)];
                a[(rank, c)] = a[(pr, c)];
                a[(pr, c)] = tmp;
            }
            for r in 0..rows {
                let tmp = a[(r, rank)];
                a[(r, rank)] = a[(r, pc)];
                a[(r, pc)] = tmp;
            }
            for r in (rank + 1)..rows {
                let f = a[(r, rank)] / a[(rank, rank)];
                for c in rank..cols {
                    let v = f * a[(rank, c)];
                    a[(r, c)] -= v;
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn rank_of_three_outer_products_in_dim_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 10;
        let mut m = Matrix::zeros(d, d);
        for _ in 0..3 {
            let g = Matrix::from_fn(d, 1, |_, _| rng.random_range(-1.0..1.0));
            let outer = g.matmul(&g.transpose());
            m.add_scaled(&outer, 1.0);
        }
        assert_eq!(spectral_rank(&m, 1e-8).unwrap(), 3);
        assert_eq!(elimination_rank(&m, 1e-8), 3);
    }

    #[test]
    fn rank_of_b_outer_products_equals_b_over_many_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = 10;
        for _ in 0..100 {
            let b = rng.random_range(1..d);
            let mut m = Matrix::zeros(d, d);
            for _ in 0..b {
                let g = Matrix::from_fn(d, 1, |_, _| rand_distr::StandardNormal.sample(&mut rng));
                let outer = g.matmul(&g.transpose());
                m.add_scaled(&outer, 1.0 / b as f64);
            }
            assert_eq!(spectral_rank(&m, 1e-8).unwrap(), b);
        }
    }

    #[test]
    fn eigen_recovers_diagonal_spectrum() {
        let m = Matrix::from_rows(&[
            vec![4.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        assert!((values[0] - 4.0).abs() < 1e-12);
        assert!((values[1] - 2.0).abs() < 1e-12);
        assert!((values[2] - 1.0).abs() < 1e-12);
        // Vectors reconstruct: M = V diag(values) Vᵀ.
        let mut recon = Matrix::zeros(3, 3);
        for j in 0..3 {
            for r in 0..3 {
                for c in 0..3 {
                    recon[(r, c)] += values[j] * vectors[(r, j)] * vectors[(c, j)];
                }
            }
        }
        assert!(recon.sub(&m).frobenius_norm() < 1e-10);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..9);
            let m = random_psd(n, &mut rng);
            let (values, vectors) = symmetric_eigen(&m).unwrap();
            let mut recon = Matrix::zeros(n, n);
            for j in 0..n {
                for r in 0..n {
                    for c in 0..n {
                        recon[(r, c)] += values[j] * vectors[(r, j)] * vectors[(c, j)];
                    }
                }
            }
            let rel = recon.sub(&m).frobenius_norm() / m.frobenius_norm().max(1e-30);
            assert!(rel < 1e-10, "reconstruction error {rel}");
        }
    }

    #[test]
    fn lu_solve_agrees_with_cholesky_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..7);
            let m = random_psd(n, &mut rng);
            let rho = 0.1;
            let inv = damped_symmetric_inverse(&m, rho).unwrap();
            let mut damped = m.symmetrized();
            for i in 0..n {
                damped[(i, i)] += rho;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_dense(&damped, &b).unwrap();
            let via_inv = inv.matmul(&Matrix::column(&b));
            for i in 0..n {
                assert!((x[i] - via_inv[(i, 0)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kron_and_vec_satisfy_the_mixed_product_identity() {
        // (A ⊗ B) vec(X) == vec(B X Aᵀ) with column-stacking vec.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Matrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = Matrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let lhs = kron(&a, &b).matmul(&Matrix::column(&vec_columns(&x)));
        let rhs = vec_columns(&b.matmul(&x).matmul(&a.transpose()));
        for i in 0..6 {
            assert!((lhs[(i, 0)] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unvec_inverts_vec() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let v = vec_columns(&m);
        assert_eq!(v, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(unvec_columns(&v, 2, 3), m);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn damped_inverse_times_damped_matrix_is_identity_for_any_psd(
            values in prop::collection::vec(-2.0..2.0f64, 9),
            rho in 1e-6..10.0f64,
        ) {
            let a = Matrix::from_vec(3, 3, values);
            let m = a.transpose().matmul(&a);
            let inv = damped_symmetric_inverse(&m, rho).unwrap();
            let mut damped = m.symmetrized();
            for i in 0..3 {
                damped[(i, i)] += rho;
            }
            let resid = inv.matmul(&damped).sub(&Matrix::identity(3)).frobenius_norm()
                / Matrix::identity(3).frobenius_norm();
            prop_assert!(resid < 1e-8, "residual {resid}");
            prop_assert!(inv.is_finite());
        }

        #[test]
        fn eigenvalues_of_psd_matrices_are_nonnegative_and_finite(
            values in prop::collection::vec(-2.0..2.0f64, 16),
        ) {
            let a = Matrix::from_vec(4, 4, values);
            let m = a.transpose().matmul(&a);
            let (eigs, _) = symmetric_eigen(&m).unwrap();
            for &l in &eigs {
                prop_assert!(l.is_finite());
                prop_assert!(l >= -1e-9 * m.max_abs().max(1.0));
            }
        }
    }
}
