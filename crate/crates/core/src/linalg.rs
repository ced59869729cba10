//! Small dense linear algebra: just enough for regression fits with a
//! handful of columns and for factoring simulator correlation matrices.

use crate::scalar::{lit, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
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

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Aᵀ v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    /// `Aᵀ diag(w) A`; `w = None` means unit weights.
    pub fn gram(&self, w: Option<&[T]>) -> Matrix<T> {
        let q = self.cols;
        let mut g = Matrix::zeros(q, q);
        for i in 0..self.rows {
            let r = self.row(i);
            let wi = w.map_or(T::one(), |w| w[i]);
            for a in 0..q {
                let ra = r[a] * wi;
                for b in a..q {
                    g.data[a * q + b] = g.data[a * q + b] + ra * r[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                g.data[a * q + b] = g.data[b * q + a];
            }
        }
        g
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Failure of a factorisation, carrying the offending pivot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient {
    pub column: usize,
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`; a pivot not exceeding `rank_tolerance * a_jj` reports its column.
    pub fn new(a: &Matrix<T>) -> Result<Self, RankDeficient> {
        let n = a.rows();
        assert_eq!(n, a.cols());
        let tol = T::rank_tolerance();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > tol * a[(j, j)].abs()) || !d.is_finite() {
                return Err(RankDeficient { column: j });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let l = &self.lower;
        let n = l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.lower.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Factor `L` with `L Lᵀ = a` for a symmetric positive *semi*-definite `a`.
///
/// Zero pivots (within `tol`) produce zero columns, so exactly collinear
/// correlation structures such as a shared latent noise are allowed.
/// Returns the failing column when `a` has a negative pivot.
pub fn cholesky_psd<T: Real>(a: &Matrix<T>, tol: T) -> Result<Matrix<T>, RankDeficient> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d < -tol || !d.is_finite() {
            return Err(RankDeficient { column: j });
        }
        if d <= tol {
            // the rest of this column must then be (numerically) zero too
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                if s.abs() > tol.sqrt().max(lit(1e-6)) {
                    return Err(RankDeficient { column: j });
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Thin Householder QR of a tall matrix, used for least squares.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    /// Householder vectors below the diagonal, `R` on and above it.
    packed: Matrix<T>,
    /// Householder scalars.
    tau: Vec<T>,
}

impl<T: Real> Qr<T> {
    /// Factors `a` (n × q, n ≥ q). Reports the first column whose diagonal of
    /// `R` is negligible relative to that column's norm.
    pub fn new(a: &Matrix<T>) -> Result<Self, RankDeficient> {
        let (n, q) = (a.rows(), a.cols());
        assert!(n >= q);
        let tol = T::rank_tolerance();
        let col_norms: Vec<T> = (0..q).map(|j| norm2(&a.column(j))).collect();
        let mut m = a.clone();
        let mut tau = vec![T::zero(); q];
        for j in 0..q {
            let mut alpha = T::zero();
            for i in j..n {
                alpha = alpha + m[(i, j)] * m[(i, j)];
            }
            let mut alpha = alpha.sqrt();
            if !(alpha > tol * col_norms[j]) || col_norms[j] == T::zero() {
                return Err(RankDeficient { column: j });
            }
            if m[(j, j)] > T::zero() {
                alpha = -alpha;
            }
            // v = x - alpha e1, stored in place with v_j = x_j - alpha
            let vj = m[(j, j)] - alpha;
            m[(j, j)] = vj;
            let mut vnorm2 = T::zero();
            for i in j..n {
                vnorm2 = vnorm2 + m[(i, j)] * m[(i, j)];
            }
            let t = lit::<T>(2.0) / vnorm2;
            for c in j + 1..q {
                let mut s = T::zero();
                for i in j..n {
                    s = s + m[(i, j)] * m[(i, c)];
                }
                let s = s * t;
                for i in j..n {
                    m[(i, c)] = m[(i, c)] - s * m[(i, j)];
                }
            }
            // normalise the reflector so v_j = 1, keep alpha as R_jj
            for i in j + 1..n {
                m[(i, j)] = m[(i, j)] / vj;
            }
            tau[j] = t * vj * vj;
            m[(j, j)] = alpha;
        }
        Ok(Self { packed: m, tau })
    }

    /// Applies `Qᵀ` to `b` (length n).
    pub fn qt_mul(&self, b: &[T]) -> Vec<T> {
        let (n, q) = (self.packed.rows(), self.packed.cols());
        let mut y = b.to_vec();
        for j in 0..q {
            let mut s = y[j];
            for i in j + 1..n {
                s = s + self.packed[(i, j)] * y[i];
            }
            let s = s * self.tau[j];
            y[j] = y[j] - s;
            for i in j + 1..n {
                y[i] = y[i] - s * self.packed[(i, j)];
            }
        }
        y
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve_least_squares(&self, b: &[T]) -> Vec<T> {
        let q = self.packed.cols();
        let y = self.qt_mul(b);
        let mut x = y[..q].to_vec();
        for i in (0..q).rev() {
            let mut s = x[i];
            for k in i + 1..q {
                s = s - self.packed[(i, k)] * x[k];
            }
            x[i] = s / self.packed[(i, i)];
        }
        x
    }

    /// `(AᵀA)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn gram_inverse(&self) -> Matrix<T> {
        let q = self.packed.cols();
        // invert upper-triangular R
        let mut rinv = Matrix::zeros(q, q);
        for j in 0..q {
            rinv[(j, j)] = T::one() / self.packed[(j, j)];
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in i + 1..=j {
                    s = s + self.packed[(i, k)] * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.packed[(i, i)];
            }
        }
        let mut out = Matrix::zeros(q, q);
        for a in 0..q {
            for b in 0..q {
                let mut s = T::zero();
                for k in a.max(b)..q {
                    s = s + rinv[(a, k)] * rinv[(b, k)];
                }
                out[(a, b)] = s;
            }
        }
        out
    }
}
