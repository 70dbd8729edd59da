//! Dense row-major matrices and Householder QR least squares.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `X beta`.
    pub fn mul_vec(&self, beta: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| dot(self.row(i), beta)).collect()
    }

    /// `X^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o = *o + x * vi;
            }
        }
        out
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Minimises `|row_scale * (X beta) - rhs|` over `beta`, where row `i` of the
/// system is `row_scale[i] * X[i]`. Returns `None` when the scaled design is
/// numerically rank deficient.
pub fn weighted_least_squares<T: Real>(x: &Matrix<T>, row_scale: Option<&[T]>, rhs: &[T]) -> Option<Vec<T>> {
    let (m, p) = (x.rows(), x.cols());
    if m < p || p == 0 {
        return None;
    }
    // Column-major working copy.
    let mut a = vec![T::zero(); m * p];
    for i in 0..m {
        let s = row_scale.map_or(T::one(), |w| w[i]);
        for j in 0..p {
            a[j * m + i] = s * x.get(i, j);
        }
    }
    let mut b = rhs.to_vec();
    let mut diag = vec![T::zero(); p];

    for j in 0..p {
        let col = j * m;
        let norm = a[col + j..col + m]
            .iter()
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt();
        if norm == T::zero() {
            return None;
        }
        let alpha = if a[col + j] > T::zero() { -norm } else { norm };
        // v = x - alpha e1, stored in place.
        a[col + j] = a[col + j] - alpha;
        let vnorm2: T = a[col + j..col + m].iter().map(|&v| v * v).sum();
        if vnorm2 > T::zero() {
            for c in j + 1..p {
                let cc = c * m;
                let proj: T = (j..m).map(|i| a[col + i] * a[cc + i]).sum();
                let f = (proj + proj) / vnorm2;
                for i in j..m {
                    a[cc + i] = a[cc + i] - f * a[col + i];
                }
            }
            let proj: T = (j..m).map(|i| a[col + i] * b[i]).sum();
            let f = (proj + proj) / vnorm2;
            for i in j..m {
                b[i] = b[i] - f * a[col + i];
            }
        }
        diag[j] = alpha;
    }

    let scale = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = scale * T::epsilon().sqrt();
    if diag.iter().any(|d| d.abs() <= tol) {
        return None;
    }

    // Back substitution against R (upper triangle of `a`, diagonal in `diag`).
    let mut beta = vec![T::zero(); p];
    for j in (0..p).rev() {
        let mut s = b[j];
        for c in j + 1..p {
            s = s - a[c * m + j] * beta[c];
        }
        beta[j] = s / diag[j];
    }
    Some(beta)
}
