//! h-banded operators described by three coefficient sequences.
//!
//! The mixed matrix element convention is
//!
//! ```text
//! M[n][m] = <psi_n, H phi_m> = b_n δ(n, m+h) + a_n δ(n, m) + b'_n δ(n, m-h)
//! ```
//!
//! so `b` sits on the `h`-th subdiagonal and `b'` on the `h`-th
//! superdiagonal. Coefficients at negative indices are zero and `b_j` is
//! forced to zero for `j < h`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    dense::{DenseError, DenseMatrix},
    seq::{wire, ComplexSeq},
};

/// Default tolerance for structural-zero tests.
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Default tolerance for round-trip identities (`R R^-1 = I` and the like).
pub const ROUND_TRIP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("band offset must be at least 1, got {0}")]
    InvalidOffset(usize),
    #[error("dimension {dim} too small for band offset {h} (need at least {})", h + 1)]
    DimensionTooSmall { dim: usize, h: usize },
    #[error("operation supports only h = 1, got h = {0}")]
    UnsupportedBand(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Riesz map check failed: |R R^-1 - I|_max = {0:e}")]
    RieszNotInverse(f64),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

/// The three sequences `(a, b, b')` plus the band offset `h`.
#[derive(Clone, Debug)]
pub struct BandSpec {
    h: usize,
    a: ComplexSeq,
    b: ComplexSeq,
    bp: ComplexSeq,
}

impl BandSpec {
    pub fn new(h: usize, a: ComplexSeq, b: ComplexSeq, bp: ComplexSeq) -> Result<Self, BandError> {
        if h == 0 {
            return Err(BandError::InvalidOffset(h));
        }
        Ok(Self { h, a, b: b.masked_below(h), bp })
    }

    /// Diagonal band `a_n`, no off-band coupling.
    pub fn diagonal(a: ComplexSeq) -> Self {
        Self { h: 1, a, b: ComplexSeq::zero(), bp: ComplexSeq::zero() }
    }

    pub fn h(&self) -> usize { self.h }

    pub fn a_seq(&self) -> &ComplexSeq { &self.a }

    pub fn b_seq(&self) -> &ComplexSeq { &self.b }

    pub fn bp_seq(&self) -> &ComplexSeq { &self.bp }

    #[inline]
    pub fn a(&self, n: usize) -> C64 { self.a.at(n) }

    /// Lower coefficient `b_n` (zero for `n < h`).
    #[inline]
    pub fn b(&self, n: usize) -> C64 { self.b.at(n) }

    /// Upper coefficient `b'_n`.
    #[inline]
    pub fn bp(&self, n: usize) -> C64 { self.bp.at(n) }

    pub fn matrix_element(&self, n: usize, m: usize) -> C64 {
        let h = self.h;
        if n == m {
            self.a(n)
        } else if n == m + h {
            self.b(n)
        } else if m == n + h {
            self.bp(n)
        } else {
            C64::default()
        }
    }

    /// Dense `N x N` realization. `h >= N` is rejected.
    pub fn truncate(&self, dim: usize) -> Result<TruncatedMatrix, BandError> {
        if dim < self.h + 1 {
            return Err(BandError::DimensionTooSmall { dim, h: self.h });
        }
        let m = DenseMatrix::from_fn(dim, dim, |n, k| self.matrix_element(n, k));
        Ok(TruncatedMatrix::from_band_matrix(m, self.h))
    }

    /// Band of a constant diagonal shift `self + shift * I`.
    pub fn plus_identity(&self, shift: C64) -> Self {
        Self {
            h: self.h,
            a: self.a.map(move |_, z| z + shift),
            b: self.b.clone(),
            bp: self.bp.clone(),
        }
    }

    pub fn to_json(&self, n_terms: usize) -> BandJson {
        BandJson {
            h: self.h,
            a: self.a.take(n_terms),
            b: self.b.take(n_terms),
            bp: self.bp.take(n_terms),
            n_terms,
        }
    }
}

/// Wire form of a [`BandSpec`] restricted to its first `n_terms` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandJson {
    pub h: usize,
    #[serde(with = "wire::complex_vec")]
    pub a: Vec<C64>,
    #[serde(with = "wire::complex_vec")]
    pub b: Vec<C64>,
    #[serde(with = "wire::complex_vec")]
    pub bp: Vec<C64>,
    pub n_terms: usize,
}

impl BandJson {
    /// Tabulated band, zero beyond the stored entries.
    pub fn into_band(self) -> Result<BandSpec, BandError> {
        BandSpec::new(
            self.h,
            ComplexSeq::from_values(self.a),
            ComplexSeq::from_values(self.b),
            ComplexSeq::from_values(self.bp),
        )
    }
}

/// Dense truncation plus the index window untouched by the cut.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedMatrix {
    pub matrix: DenseMatrix,
    pub interior_lo: usize,
    pub interior_hi: usize,
}

impl TruncatedMatrix {
    fn from_band_matrix(matrix: DenseMatrix, h: usize) -> Self {
        let dim = matrix.rows();
        Self { matrix, interior_lo: 0, interior_hi: dim - h - 1 }
    }

    /// Wrap an arbitrary square matrix; the last `h` indices are treated as
    /// boundary-affected.
    pub fn with_boundary(matrix: DenseMatrix, h: usize) -> Result<Self, BandError> {
        if !matrix.is_square() {
            return Err(BandError::DimensionMismatch { expected: matrix.rows(), got: matrix.cols() });
        }
        if matrix.rows() < h + 1 {
            return Err(BandError::DimensionTooSmall { dim: matrix.rows(), h });
        }
        Ok(Self::from_band_matrix(matrix, h))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Coefficients of `H v` in the `phi` family, together with the first index
/// whose value depends on entries past the cut.
#[derive(Clone, Debug, PartialEq)]
pub struct BandAction {
    pub values: Vec<C64>,
    pub boundary_from: usize,
}

impl BandAction {
    pub fn is_boundary(&self, l: usize) -> bool {
        l >= self.boundary_from
    }
}

/// `out_l = b_l x_{l-h} + a_l x_l + b'_l x_{l+h}`, out-of-range entries zero.
pub fn apply_band(spec: &BandSpec, coeffs: &[C64], dim: usize) -> Result<BandAction, BandError> {
    let h = spec.h();
    if dim < h + 1 {
        return Err(BandError::DimensionTooSmall { dim, h });
    }
    if coeffs.len() != dim {
        return Err(BandError::DimensionMismatch { expected: dim, got: coeffs.len() });
    }
    let values = (0..dim)
        .map(|l| {
            let mut s = spec.a(l) * coeffs[l];
            if l >= h {
                s += spec.b(l) * coeffs[l - h];
            }
            if l + h < dim {
                s += spec.bp(l) * coeffs[l + h];
            }
            s
        })
        .collect();
    Ok(BandAction { values, boundary_from: dim - h })
}

/// Band of `H^dagger` acting on the `psi` family.
///
/// In matrix form this is the conjugate transpose: the new lower sequence is
/// `conj(b'_{n-h})` and the new upper sequence is `conj(b_{n+h})`.
pub fn adjoint_band(spec: &BandSpec) -> BandSpec {
    let h = spec.h();
    let a = spec.a_seq().map(|_, z| z.conj());
    let bp_old = spec.bp_seq().clone();
    let b_old = spec.b_seq().clone();
    let lower = ComplexSeq::new(move |n| if n >= h { bp_old.at(n - h).conj() } else { C64::default() });
    let upper = ComplexSeq::new(move |n| b_old.at(n + h).conj());
    BandSpec { h, a, b: lower, bp: upper }
}

/// Smallest `h` such that every entry off the diagonal and the `±h` bands is
/// at most `tol`. A diagonal matrix reports `h = 1`.
pub fn classify_h_tridiagonal(m: &TruncatedMatrix, tol: f64) -> Option<usize> {
    let dim = m.dim();
    let mat = &m.matrix;
    let mut offsets = vec![false; dim];
    for i in 0..dim {
        for j in 0..dim {
            if i != j && mat[(i, j)].norm() > tol {
                offsets[i.abs_diff(j)] = true;
            }
        }
    }
    let used: Vec<usize> = (1..dim).filter(|&d| offsets[d]).collect();
    match used.as_slice() {
        [] => Some(1),
        [h] => Some(*h),
        _ => None,
    }
}

/// Invertible change of basis with its inverse stored alongside.
#[derive(Clone, Debug)]
pub struct RieszMap {
    r: DenseMatrix,
    rinv: DenseMatrix,
}

impl RieszMap {
    pub fn new(r: DenseMatrix) -> Result<Self, BandError> {
        let rinv = r.inverse()?;
        Self::from_parts(r, rinv)
    }

    pub fn from_parts(r: DenseMatrix, rinv: DenseMatrix) -> Result<Self, BandError> {
        let err = r
            .matmul(&rinv)?
            .sub(&DenseMatrix::identity(r.rows()))?
            .max_abs();
        if err > ROUND_TRIP_TOL {
            return Err(BandError::RieszNotInverse(err));
        }
        Ok(Self { r, rinv })
    }

    pub fn diagonal(d: &[C64]) -> Result<Self, BandError> {
        let inv: Vec<C64> = d.iter().map(|z| z.inv()).collect();
        Self::from_parts(DenseMatrix::from_diagonal(d), DenseMatrix::from_diagonal(&inv))
    }

    pub fn dim(&self) -> usize { self.r.rows() }

    pub fn r(&self) -> &DenseMatrix { &self.r }

    pub fn rinv(&self) -> &DenseMatrix { &self.rinv }

    pub fn inverse_map(&self) -> Self {
        Self { r: self.rinv.clone(), rinv: self.r.clone() }
    }
}

/// `R^-1 M R`. The interior window of `m` is kept; for a non-banded `R` it
/// carries no guarantee.
pub fn riesz_conjugate(m: &TruncatedMatrix, r: &RieszMap) -> Result<TruncatedMatrix, BandError> {
    if m.dim() != r.dim() {
        return Err(BandError::DimensionMismatch { expected: m.dim(), got: r.dim() });
    }
    let out = r.rinv().matmul(&m.matrix)?.matmul(r.r())?;
    Ok(TruncatedMatrix { matrix: out, interior_lo: m.interior_lo, interior_hi: m.interior_hi })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub n_max: usize,
    pub diagonal_real: bool,
    pub off_band_conjugate: bool,
    /// `max |a_n - conj(a_n)|`, i.e. twice the largest imaginary part.
    pub max_diagonal_asymmetry: f64,
    pub max_off_band_mismatch: f64,
    /// Formally self-adjoint on the span of the tested basis vectors.
    pub self_adjoint: bool,
}

/// Checks `a_n ∈ R` and `b_m = conj(b'_{m-1})` for all indices `<= n_max`.
///
/// Both measures are entries of `M - M^dagger` for the truncation of size
/// `n_max + 1`, so the verdict agrees with `||M - M^dagger||_max <= tol`.
pub fn symmetry_check(spec: &BandSpec, n_max: usize) -> Result<SymmetryReport, BandError> {
    symmetry_check_tol(spec, n_max, STRUCTURAL_TOL)
}

pub fn symmetry_check_tol(spec: &BandSpec, n_max: usize, tol: f64) -> Result<SymmetryReport, BandError> {
    if spec.h() != 1 {
        return Err(BandError::UnsupportedBand(spec.h()));
    }
    let max_diagonal_asymmetry = (0..=n_max).map(|n| 2.0 * spec.a(n).im.abs()).fold(0.0, f64::max);
    // m = 0 holds trivially: b_0 = b'_{-1} = 0.
    let max_off_band_mismatch = (1..=n_max)
        .map(|m| (spec.b(m) - spec.bp(m - 1).conj()).norm())
        .fold(0.0, f64::max);
    let diagonal_real = max_diagonal_asymmetry <= tol;
    let off_band_conjugate = max_off_band_mismatch <= tol;
    Ok(SymmetryReport {
        n_max,
        diagonal_real,
        off_band_conjugate,
        max_diagonal_asymmetry,
        max_off_band_mismatch,
        self_adjoint: diagonal_real && off_band_conjugate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn oscillator(alpha: C64, beta: C64) -> BandSpec {
        BandSpec::new(
            1,
            ComplexSeq::new(move |n| n as f64 + alpha * beta),
            ComplexSeq::new(move |n| alpha * (n as f64).sqrt()),
            ComplexSeq::new(move |n| beta * ((n + 1) as f64).sqrt()),
        )
        .unwrap()
    }

    #[test]
    fn matrix_element_pattern() {
        let s = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        assert!((s.matrix_element(2, 1) - c(2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(s.matrix_element(0, 5), C64::default());
        assert_eq!(s.matrix_element(1, 1), c(2.0, 0.0));
        assert_eq!(s.matrix_element(0, 1), c(1.0, 0.0));
    }

    #[test]
    fn lower_band_masked_below_h() {
        let s = BandSpec::new(
            2,
            ComplexSeq::zero(),
            ComplexSeq::constant(c(1.0, 0.0)),
            ComplexSeq::zero(),
        )
        .unwrap();
        assert_eq!(s.b(0), C64::default());
        assert_eq!(s.b(1), C64::default());
        assert_eq!(s.b(2), c(1.0, 0.0));
    }

    #[test]
    fn zero_offset_rejected() {
        let z = ComplexSeq::zero();
        assert_eq!(
            BandSpec::new(0, z.clone(), z.clone(), z).unwrap_err(),
            BandError::InvalidOffset(0)
        );
    }

    #[test]
    fn truncation_rejects_h_at_least_dim() {
        let z = ComplexSeq::zero();
        let s = BandSpec::new(3, z.clone(), z.clone(), z).unwrap();
        assert!(matches!(s.truncate(3), Err(BandError::DimensionTooSmall { dim: 3, h: 3 })));
        let t = s.truncate(8).unwrap();
        assert_eq!((t.interior_lo, t.interior_hi), (0, 4));
    }

    #[test]
    fn apply_unit_vector() {
        let s = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let e0 = vec![c(1.0, 0.0), C64::default(), C64::default(), C64::default()];
        let out = apply_band(&s, &e0, 4).unwrap();
        assert_eq!(out.values, vec![c(1.0, 0.0), c(1.0, 0.0), C64::default(), C64::default()]);
        assert!(out.is_boundary(3));
        assert!(!out.is_boundary(2));
    }

    #[test]
    fn apply_diagonal_is_elementwise() {
        let s = BandSpec::diagonal(ComplexSeq::new(|n| c(n as f64, 0.5)));
        let x: Vec<C64> = (0..5).map(|k| c(1.0 + k as f64, -1.0)).collect();
        let out = apply_band(&s, &x, 5).unwrap();
        for (l, v) in out.values.iter().enumerate() {
            assert_eq!(*v, s.a(l) * x[l]);
        }
    }

    #[test]
    fn apply_checks_dimensions() {
        let s = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        assert!(matches!(apply_band(&s, &[c(1.0, 0.0)], 1), Err(BandError::DimensionTooSmall { .. })));
        assert!(matches!(
            apply_band(&s, &[c(1.0, 0.0); 3], 4),
            Err(BandError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn adjoint_of_oscillator_swaps_parameters() {
        let (al, be) = (c(0.7, 0.2), c(0.3, -0.1));
        let adj = adjoint_band(&oscillator(al, be));
        let expect = oscillator(be.conj(), al.conj());
        for n in 0..20 {
            assert!((adj.a(n) - expect.a(n)).norm() < 1e-15);
            assert!((adj.b(n) - expect.b(n)).norm() < 1e-15);
            assert!((adj.bp(n) - expect.bp(n)).norm() < 1e-15);
        }
    }

    #[test]
    fn classify_identity_and_band() {
        let id = TruncatedMatrix::with_boundary(DenseMatrix::identity(5), 1).unwrap();
        assert_eq!(classify_h_tridiagonal(&id, 1e-12), Some(1));
        let m = oscillator(c(1.0, 0.0), c(1.0, 0.0)).truncate(30).unwrap();
        assert_eq!(classify_h_tridiagonal(&m, 1e-12), Some(1));
        let full = TruncatedMatrix::with_boundary(DenseMatrix::from_fn(4, 4, |_, _| c(1.0, 0.0)), 1).unwrap();
        assert_eq!(classify_h_tridiagonal(&full, 1e-12), None);
    }

    #[test]
    fn riesz_identity_is_noop() {
        let m = oscillator(c(1.0, 0.0), c(2.0, 0.0)).truncate(6).unwrap();
        let r = RieszMap::new(DenseMatrix::identity(6)).unwrap();
        assert_eq!(riesz_conjugate(&m, &r).unwrap().matrix, m.matrix);
        let r5 = RieszMap::new(DenseMatrix::identity(5)).unwrap();
        assert!(matches!(riesz_conjugate(&m, &r5), Err(BandError::DimensionMismatch { .. })));
    }

    #[test]
    fn riesz_rejects_bad_inverse() {
        let r = DenseMatrix::identity(3);
        let bad = DenseMatrix::identity(3).scale(c(2.0, 0.0));
        assert!(matches!(RieszMap::from_parts(r, bad), Err(BandError::RieszNotInverse(_))));
    }

    #[test]
    fn symmetry_examples() {
        let sa = symmetry_check(&oscillator(c(0.5, 0.0), c(0.5, 0.0)), 30).unwrap();
        assert!(sa.self_adjoint);
        let nsa = symmetry_check(&oscillator(c(1.0, 0.0), c(2.0, 0.0)), 30).unwrap();
        assert!(!nsa.self_adjoint);
        assert!(nsa.diagonal_real);
        let diag = BandSpec::diagonal(ComplexSeq::new(|n| c(n as f64, 0.0)));
        assert!(symmetry_check(&diag, 10).unwrap().self_adjoint);
        let h2 = BandSpec::new(2, ComplexSeq::zero(), ComplexSeq::zero(), ComplexSeq::zero()).unwrap();
        assert_eq!(symmetry_check(&h2, 3).unwrap_err(), BandError::UnsupportedBand(2));
    }

    #[test]
    fn json_round_trip_keeps_prefix() {
        let s = oscillator(c(0.7, 0.2), c(0.3, -0.1));
        let js = serde_json::to_string(&s.to_json(6)).unwrap();
        let back: BandJson = serde_json::from_str(&js).unwrap();
        let band = back.into_band().unwrap();
        for n in 0..6 {
            assert_eq!(band.a(n), s.a(n));
            assert_eq!(band.bp(n), s.bp(n));
        }
        assert_eq!(band.a(6), C64::default());
    }
}
