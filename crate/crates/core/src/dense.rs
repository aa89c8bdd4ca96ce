//! Small dense complex matrices and partial-pivoting LU.
//!
//! Sizes here are desk scale (a few hundred rows at most), so everything is a
//! plain row-major `Vec`.

use std::ops::{Index, IndexMut};

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenseError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is numerically singular (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::default(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn<F>(rows: usize, cols: usize, mut f: F) -> Self
    where F: FnMut(usize, usize) -> C64
    {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize { self.rows }

    pub fn cols(&self) -> usize { self.cols }

    pub fn is_square(&self) -> bool { self.rows == self.cols }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, DenseError> {
        if self.cols != rhs.rows {
            return Err(DenseError::DimensionMismatch(self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == C64::default() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, r) in orow.iter_mut().zip(rrow) {
                    *o += aik * r;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>, DenseError> {
        if self.cols != v.len() {
            return Err(DenseError::DimensionMismatch(self.cols, v.len()));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, DenseError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, DenseError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    fn zip_with<F: Fn(C64, C64) -> C64>(&self, rhs: &Self, f: F) -> Result<Self, DenseError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(DenseError::DimensionMismatch(self.data.len(), rhs.data.len()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self - shift * I`.
    pub fn shifted(&self, shift: C64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] -= shift;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation over the square window `lo..=hi` (rows and
    /// columns).
    pub fn max_abs_diff_window(&self, rhs: &Self, lo: usize, hi: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in lo..=hi.min(self.rows - 1) {
            for j in lo..=hi.min(self.cols - 1) {
                worst = worst.max((self[(i, j)] - rhs[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn lu(&self) -> Result<Lu, DenseError> {
        Lu::factor(self)
    }

    pub fn inverse(&self) -> Result<Self, DenseError> {
        let lu = self.lu()?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![C64::default(); n];
        for j in 0..n {
            e.iter_mut().for_each(|z| *z = C64::default());
            e[j] = C64::new(1.0, 0.0);
            let col = lu.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `P A = L U` with unit lower `L`, stored packed.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    packed: DenseMatrix,
    perm: Vec<usize>,
    min_pivot: f64,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, DenseError> {
        if !a.is_square() {
            return Err(DenseError::DimensionMismatch(a.rows, a.cols));
        }
        let n = a.rows;
        let mut m = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, m[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 {
                return Err(DenseError::Singular { col: k, pivot: 0.0 });
            }
            min_pivot = min_pivot.min(pmax);
            if p != k {
                for j in 0..n {
                    let tmp = m[(k, j)];
                    m[(k, j)] = m[(p, j)];
                    m[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = m[(k, k)];
            for i in k + 1..n {
                let l = m[(i, k)] / pivot;
                if l == C64::default() {
                    continue;
                }
                m[(i, k)] = l;
                for j in k + 1..n {
                    let ukj = m[(k, j)];
                    m[(i, j)] -= l * ukj;
                }
            }
        }
        Ok(Self { n, packed: m, perm, min_pivot })
    }

    /// Smallest pivot modulus met during elimination.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Solve `A x = rhs`.
    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, DenseError> {
        if rhs.len() != self.n {
            return Err(DenseError::DimensionMismatch(self.n, rhs.len()));
        }
        let n = self.n;
        let m = &self.packed;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= m[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= m[(i, j)] * x[j];
            }
            x[i] = s / m[(i, i)];
        }
        Ok(x)
    }

    /// Solve `A^H x = rhs`.
    pub fn solve_adjoint(&self, rhs: &[C64]) -> Result<Vec<C64>, DenseError> {
        if rhs.len() != self.n {
            return Err(DenseError::DimensionMismatch(self.n, rhs.len()));
        }
        let n = self.n;
        let m = &self.packed;
        // A^H = U^H L^H P, so solve U^H t = rhs, L^H u = t, x = P^T u.
        let mut t = rhs.to_vec();
        for i in 0..n {
            let mut s = t[i];
            for j in 0..i {
                s -= m[(j, i)].conj() * t[j];
            }
            t[i] = s / m[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut s = t[i];
            for j in i + 1..n {
                s -= m[(j, i)].conj() * t[j];
            }
            t[i] = s;
        }
        let mut x = vec![C64::default(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = t[k];
        }
        Ok(x)
    }
}
