use std::fmt;

use super::RngStream;
use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
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

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_vec"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Single-row matrix holding `values`.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Sub-matrix of the first `rows` rows and `cols` columns.
    pub fn top_left(&self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self.get(i, j))
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_fn(self.rows, end - start, |i, j| self.get(i, start + j))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        matmul(self, rhs)
    }

    /// `selfᵀ · rhs` without materialising the transpose.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::dim(
                "t_matmul",
                format!("{} rows on the right", self.rows),
                format!("{} rows", rhs.rows),
            ));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ` without materialising the transpose.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::dim(
                "matmul_t",
                format!("{} columns on the right", self.cols),
                format!("{} columns", rhs.cols),
            ));
        }
        Ok(Matrix::from_fn(self.rows, rhs.rows, |i, j| {
            dot(self.row(i), rhs.row(j))
        }))
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        self.map(|x| alpha * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Scales row `i` by `factors[i]`, i.e. `diag(factors) · self`.
    pub fn scale_rows(&self, factors: &[f64]) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| factors[i] * self.get(i, j))
    }

    /// Scales column `j` by `factors[j]`, i.e. `self · diag(factors)`.
    pub fn scale_cols(&self, factors: &[f64]) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * factors[j])
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Solves `self · X = rhs` by LU factorisation with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.rows;
        if self.cols != n {
            return Err(Error::dim("solve", "square matrix", format!("{}x{}", n, self.cols)));
        }
        if rhs.rows != n {
            return Err(Error::dim("solve", format!("{n} right-hand rows"), rhs.rows));
        }
        let (lu, perm) = self.lu()?;
        let mut x = Matrix::zeros(n, rhs.cols);
        for c in 0..rhs.cols {
            let mut y: Vec<f64> = perm.iter().map(|&p| rhs.get(p, c)).collect();
            for i in 0..n {
                let s = dot(&lu.row(i)[..i], &y[..i]);
                y[i] -= s;
            }
            for i in (0..n).rev() {
                let s = dot(&lu.row(i)[i + 1..], &y[i + 1..]);
                y[i] = (y[i] - s) / lu.get(i, i);
            }
            x.set_column(c, &y);
        }
        if !x.is_finite() {
            return Err(Error::Singular("solve"));
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve(&Matrix::identity(self.rows))
    }

    pub fn determinant(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::dim(
                "determinant",
                "square matrix",
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        let (lu, perm) = match self.lu() {
            Ok(f) => f,
            Err(Error::Singular(_)) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        let mut det: f64 = (0..self.rows).map(|i| lu.get(i, i)).product();
        // permutation parity
        let mut seen = vec![false; perm.len()];
        for start in 0..perm.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        Ok(det)
    }

    /// Packed LU (unit lower, upper) plus the row permutation.
    fn lu(&self) -> Result<(Matrix, Vec<usize>)> {
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (pivot_row, pivot) = (k..n)
                .map(|i| (i, a.get(i, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * 1e-14 {
                return Err(Error::Singular("lu"));
            }
            if pivot_row != k {
                for j in 0..n {
                    a.data.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let d = a.get(k, k);
            for i in k + 1..n {
                let f = a.get(i, k) / d;
                a.set(i, k, f);
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = a.get(i, j) - f * a.get(k, j);
                        a.set(i, j, v);
                    }
                }
            }
        }
        Ok((a, perm))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dim(
            "matmul",
            format!("left columns == right rows ({}x{} * ?)", a.rows, a.cols),
            format!("{}x{}", b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Euclidean norm of every column.
pub fn column_norms(w: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; w.cols];
    for i in 0..w.rows {
        for (s, &x) in sums.iter_mut().zip(w.row(i)) {
            *s += x * x;
        }
    }
    sums.into_iter().map(f64::sqrt).collect()
}

pub fn frobenius_norm(w: &Matrix) -> f64 {
    w.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Matrix with entries i.i.d. uniform in `[-scale, scale]`, drawn row-major.
pub fn random_matrix(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
    debug_assert!(scale > 0.0);
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(scale))
}

/// `n × n` 0/1 pattern with ones on the `d` diagonals either side of the main one.
pub fn banded_mask(n: usize, d: usize) -> Result<Matrix> {
    if n == 0 || d >= n {
        return Err(Error::invalid(format!(
            "banded_mask needs n >= 1 and d < n (got n={n}, d={d})"
        )));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) <= d {
            1.0
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &b).unwrap(), b);
    }

    #[test]
    fn hand_expanded_product() {
        let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let b = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let expected = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), expected);
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = RngStream::new(5);
        let a = random_matrix(&mut rng, 7, 5, 1.0);
        let b = random_matrix(&mut rng, 5, 3, 1.0);
        let fast = matmul(&a, &b).unwrap();
        assert!(fast.max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
        assert!(a.t_matmul(&random_matrix(&mut rng, 7, 2, 1.0)).is_ok());
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = RngStream::new(6);
        let a = random_matrix(&mut rng, 6, 4, 1.0);
        let b = random_matrix(&mut rng, 6, 3, 1.0);
        let c = random_matrix(&mut rng, 5, 4, 1.0);
        let atb = naive_matmul(&a.transpose(), &b);
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&atb) <= 1e-12);
        let act = naive_matmul(&a, &c.transpose());
        assert!(a.matmul_t(&c).unwrap().max_abs_diff(&act) <= 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "matmul", .. }));
        assert!(Matrix::zeros(2, 2).add(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn column_norm_examples() {
        let w = Matrix::from_rows(&[&[3.0, 0.0], &[4.0, 1.0]]);
        assert_eq!(column_norms(&w), vec![5.0, 1.0]);
        assert_eq!(column_norms(&Matrix::identity(3)), vec![1.0; 3]);
        let z = Matrix::from_rows(&[&[3.0, 0.0], &[4.0, 0.0]]);
        assert_eq!(column_norms(&z), vec![5.0, 0.0]);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::from_rows(&[&[3.0, 4.0]])), 5.0);
        assert_eq!(frobenius_norm(&Matrix::zeros(4, 4)), 0.0);
        let mut rng = RngStream::new(8);
        let w = random_matrix(&mut rng, 6, 6, 1.0);
        let mut acc = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                acc += w.get(i, j) * w.get(i, j);
            }
        }
        assert!((frobenius_norm(&w) - acc.sqrt()).abs() <= 1e-14);
    }

    #[test]
    fn random_matrix_determinism_and_range() {
        let a = random_matrix(&mut RngStream::new(1), 4, 4, 0.01);
        let b = random_matrix(&mut RngStream::new(1), 4, 4, 0.01);
        assert_eq!(a, b);
        assert!(a.max_abs() <= 0.01);
        let x = random_matrix(&mut RngStream::new(42), 20, 20, 1.0);
        let y = random_matrix(&mut RngStream::new(43), 20, 20, 1.0);
        assert!(x.as_slice().iter().zip(y.as_slice()).any(|(p, q)| p != q));
    }

    #[test]
    fn banded_mask_examples() {
        assert_eq!(banded_mask(3, 0).unwrap(), Matrix::identity(3));
        let tri = Matrix::from_rows(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0], &[0.0, 1.0, 1.0]]);
        assert_eq!(banded_mask(3, 1).unwrap(), tri);
        assert!(banded_mask(5, 4).unwrap().as_slice().iter().all(|&x| x == 1.0));
        assert!(banded_mask(3, 3).is_err());
    }

    #[test]
    fn solve_and_determinant() {
        let a = Matrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let b = Matrix::from_rows(&[&[1.0], &[2.0], &[3.0]]);
        let x = a.solve(&b).unwrap();
        assert!(matmul(&a, &x).unwrap().max_abs_diff(&b) <= 1e-12);
        // 0*(1) - 2*(1 - 0) + 1*(0 - 3) = -5
        assert!((a.determinant().unwrap() + 5.0).abs() <= 1e-12);
        let singular = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(singular.solve(&Matrix::identity(2)), Err(Error::Singular(_))));
        assert_eq!(singular.determinant().unwrap(), 0.0);
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }
}
