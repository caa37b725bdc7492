//! Dense vector and matrix primitives used by the pursuit and classification code.
//!
//! Vectors are plain `&[f64]` / `Vec<f64>`. [`Mat`] stores its entries in
//! column-major order so that dictionary atoms are contiguous slices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular-value cutoff: singular values below
/// `RANK_TOLERANCE * sigma_max` are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Norms below this are treated as an exact zero vector.
pub const ZERO_NORM: f64 = 1e-12;

/// Pivoted-QR diagonal ratio below which the fast path hands over to the SVD.
/// Looser than [`RANK_TOLERANCE`] since `|R_jj|` only brackets the singular values.
const QR_CONFIDENT_RATIO: f64 = 1e-8;

/// Dense real matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps column-major data. Entries must be finite.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Mat::from_col_major",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Mat::from_col_major",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices, mostly handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = vec![0.0; n_rows * n_cols];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    op: "Mat::from_rows",
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                data[j * n_rows + i] = v;
            }
        }
        Self::from_col_major(n_rows, n_cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    op: "Mat::from_columns",
                    expected: rows,
                    found: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::from_col_major(rows, columns.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let rows = self.rows.max(1);
        self.data.chunks_exact(rows).take(self.cols)
    }

    /// Column-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sub-matrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Mat {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "Mat::mul_vec",
                expected: self.cols,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        for (col, &xj) in self.columns().zip(x) {
            if xj != 0.0 {
                axpy(xj, col, &mut out);
            }
        }
        Ok(out)
    }

    /// `self^T * r`: the inner product of every column with `r`.
    pub fn tr_mul_vec(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "Mat::tr_mul_vec",
                expected: self.rows,
                found: r.len(),
            });
        }
        Ok(self.columns().map(|c| dot(c, r)).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Scales `v` to unit l2 norm. Vectors with norm below [`ZERO_NORM`] come
/// back unchanged.
pub fn normalize_l2(v: &[f64]) -> Vec<f64> {
    let n = norm_l2(v);
    if n < ZERO_NORM {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// `||y - B x||_2`
pub fn residual_norm(b: &Mat, x: &[f64], y: &[f64]) -> Result<f64> {
    if y.len() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "residual_norm",
            expected: b.rows(),
            found: y.len(),
        });
    }
    let fit = b.mul_vec(x)?;
    Ok(y.iter()
        .zip(&fit)
        .map(|(a, f)| (a - f) * (a - f))
        .sum::<f64>()
        .sqrt())
}

/// Minimum-norm least-squares solution of `B x ~ y`.
///
/// Uses Householder QR with column pivoting. When the pivoted factor shows
/// the columns are (numerically) dependent, falls back to an SVD
/// pseudo-inverse with the [`RANK_TOLERANCE`] cutoff.
pub fn least_squares(b: &Mat, y: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (b.rows(), b.cols());
    if n == 0 {
        return Err(Error::InvalidArgument(
            "least_squares: matrix has no columns".into(),
        ));
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            op: "least_squares",
            expected: m,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "least_squares" });
    }
    if n <= m {
        if let Some(x) = pivoted_qr_solve(b, y) {
            return Ok(x);
        }
    }
    Ok(svd_solve(b, y))
}

/// Returns `None` if the matrix is not confidently of full column rank.
fn pivoted_qr_solve(b: &Mat, y: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (b.rows(), b.cols());
    let mut a = b.data.clone();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0f64; n];
    let mut v = vec![0.0; m];

    for j in 0..n {
        // pivot: remaining column with the largest trailing norm
        let trailing = |c: usize, a: &[f64]| -> f64 {
            a[c * m + j..(c + 1) * m].iter().map(|x| x * x).sum()
        };
        let mut best = j;
        let mut best_norm = trailing(j, &a);
        for c in j + 1..n {
            let nc = trailing(c, &a);
            if nc > best_norm {
                best = c;
                best_norm = nc;
            }
        }
        if best != j {
            for i in 0..m {
                a.swap(j * m + i, best * m + i);
            }
            perm.swap(j, best);
        }

        let norm = best_norm.sqrt();
        if norm == 0.0 || (j > 0 && norm <= QR_CONFIDENT_RATIO * diag[0].abs()) {
            return None;
        }
        let x0 = a[j * m + j];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let len = m - j;
        v[..len].copy_from_slice(&a[j * m + j..(j + 1) * m]);
        v[0] -= alpha;
        let vv: f64 = v[..len].iter().map(|t| t * t).sum();
        diag[j] = alpha;
        a[j * m + j] = alpha;
        for t in &mut a[j * m + j + 1..(j + 1) * m] {
            *t = 0.0;
        }
        if vv == 0.0 {
            continue;
        }
        for c in j + 1..n {
            let col = &mut a[c * m + j..(c + 1) * m];
            let s = 2.0 * dot(&v[..len], col) / vv;
            axpy(-s, &v[..len], col);
        }
        let tail = &mut qty[j..];
        let s = 2.0 * dot(&v[..len], tail) / vv;
        axpy(-s, &v[..len], tail);
    }

    // R z = (Q^T y)[..n]
    let mut z = vec![0.0; n];
    for j in (0..n).rev() {
        let mut acc = qty[j];
        for c in j + 1..n {
            acc -= a[c * m + j] * z[c];
        }
        z[j] = acc / diag[j];
    }
    let mut x = vec![0.0; n];
    for (j, &p) in perm.iter().enumerate() {
        x[p] = z[j];
    }
    Some(x)
}

fn svd_solve(b: &Mat, y: &[f64]) -> Vec<f64> {
    let (m, n) = (b.rows(), b.cols());
    let svd = DMatrix::from_column_slice(m, n, &b.data).svd(true, true);
    let (u, vt) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(vt)) => (u, vt),
        _ => unreachable!("svd computed with both factors"),
    };
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    if sigma_max == 0.0 {
        return x;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= RANK_TOLERANCE * sigma_max {
            continue;
        }
        let uy: f64 = (0..m).map(|i| u[(i, k)] * y[i]).sum();
        let w = uy / s;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += w * vt[(k, j)];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Mat::from_col_major(rows, cols, data).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_l2(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalize_l2(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize_l2(&[1.0; 4]), vec![0.5; 4]);
    }

    #[test]
    fn least_squares_identity() {
        let x = least_squares(&Mat::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn least_squares_mean_of_two() {
        let b = Mat::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let x = least_squares(&b, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_planted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_mat(&mut rng, 5, 3);
        let planted = [0.7, -1.3, 2.1];
        let y = b.mul_vec(&planted).unwrap();
        let x = least_squares(&b, &y).unwrap();
        for (a, e) in x.iter().zip(planted) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn least_squares_rank_deficient_is_min_norm() {
        // two identical columns: min-norm solution splits the weight evenly
        let b = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        let x = least_squares(&b, &[2.0, 0.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);

        let zero = Mat::zeros(3, 2);
        assert_eq!(least_squares(&zero, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn least_squares_wide_matrix() {
        // underdetermined: min-norm solution of x0 + x1 = 2 is (1, 1)
        let b = Mat::from_rows(&[&[1.0, 1.0]]).unwrap();
        let x = least_squares(&b, &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_errors() {
        let b = Mat::identity(3);
        assert!(matches!(
            least_squares(&b, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(least_squares(&Mat::zeros(3, 0), &[1.0, 2.0, 3.0]).is_err());
        assert!(matches!(
            residual_norm(&b, &[1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Mat::from_col_major(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn residual_norm_examples() {
        let i2 = Mat::identity(2);
        assert_eq!(residual_norm(&i2, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(residual_norm(&i2, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn residual_norm_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_mat(&mut rng, 6, 3);
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = least_squares(&b, &y).unwrap();
        // independent route: explicit double loop over entries
        let mut acc = 0.0;
        for i in 0..6 {
            let mut fit = 0.0;
            for j in 0..3 {
                fit += b.get(i, j) * x[j];
            }
            acc += (y[i] - fit).powi(2);
        }
        let got = residual_norm(&b, &x, &y).unwrap();
        assert!((got - acc.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalized_has_unit_norm_and_is_idempotent(
            v in prop::collection::vec(-1e3f64..1e3, 1..40)
        ) {
            let n = normalize_l2(&v);
            if norm_l2(&v) >= ZERO_NORM {
                prop_assert!((norm_l2(&n) - 1.0).abs() <= 1e-9);
            }
            let nn = normalize_l2(&n);
            for (a, b) in n.iter().zip(&nn) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn residual_orthogonal_to_columns(seed in 0u64..10_000, rows in 3usize..12, extra in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = rows.saturating_sub(extra).max(1);
            let b = random_mat(&mut rng, rows, cols);
            let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = least_squares(&b, &y).unwrap();
            let fit = b.mul_vec(&x).unwrap();
            let r: Vec<f64> = y.iter().zip(&fit).map(|(a, f)| a - f).collect();
            for c in b.columns() {
                prop_assert!(dot(c, &r).abs() <= 1e-8);
            }
        }

        #[test]
        fn square_solve_is_exact(seed in 0u64..10_000, n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = random_mat(&mut rng, n, n);
            // diagonal boost keeps the draw well conditioned
            for i in 0..n {
                b.col_mut(i)[i] += n as f64;
            }
            let planted: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y = b.mul_vec(&planted).unwrap();
            let x = least_squares(&b, &y).unwrap();
            let scale = norm_l2(&planted).max(1.0);
            for (a, e) in x.iter().zip(&planted) {
                prop_assert!((a - e).abs() / scale <= 1e-8);
            }
        }
    }
}
