//! Dense cross-checks: eigenvalues of truncations, residuals of
//! recurrence-built vectors, inverse iteration and Gram matrices.

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::{
    band::TruncatedMatrix,
    dense::{DenseError, DenseMatrix},
    recurrence::EigenPacket,
    seq::wire,
};

pub const MAX_DIM: usize = 512;
/// Relative departure from normality above which a truncation is flagged.
pub const NORMALITY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("matrix of dimension {0} exceeds the dense limit {MAX_DIM}")]
    TooLarge(usize),
    #[error("QR iteration did not deflate within {0} iterations")]
    NoConvergence(usize),
    #[error("shifted system is singular at shift {0} even after perturbation")]
    SingularShift(C64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Dense(#[from] DenseError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    #[serde(with = "wire::complex_vec")]
    pub eigenvalues: Vec<C64>,
    /// `||M M^dagger - M^dagger M||_F / ||M||_F^2`
    pub departure_from_normality: f64,
    pub condition_note: Option<String>,
}

impl SpectrumEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for z in &self.eigenvalues {
            out.push_str(&format!("{:?},{:?}\n", z.re, z.im));
        }
        out
    }
}

/// Householder reduction to upper Hessenberg form (eigenvalues only, the
/// transformation is not kept).
fn hessenberg(a: &mut DenseMatrix) {
    let n = a.rows();
    for k in 0..n.saturating_sub(2) {
        let norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let mut v: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] += phase * norm;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vnorm);
        // A <- (I - 2 v v^H) A
        for j in k..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * a[(k + 1 + t, j)]).sum();
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] -= 2.0 * vi * dot;
            }
        }
        // A <- A (I - 2 v v^H)
        for i in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vi)| a[(i, k + 1 + t)] * vi).sum();
            for (t, vi) in v.iter().enumerate() {
                a[(i, k + 1 + t)] -= 2.0 * dot * vi.conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = C64::default();
        }
    }
}

/// Eigenvalue of the 2x2 block `[[a, b], [c, d]]` closer to `d`.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let (l1, l2) = (mean + disc, mean - disc);
    if (l1 - d).norm() <= (l2 - d).norm() { l1 } else { l2 }
}

/// All eigenvalues of a square matrix by Hessenberg reduction and
/// single-shift complex QR with Wilkinson shifts.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<C64>, OracleError> {
    let n = m.rows();
    if !m.is_square() {
        return Err(OracleError::LengthMismatch(m.rows(), m.cols()));
    }
    if n > MAX_DIM {
        return Err(OracleError::TooLarge(n));
    }
    let mut h = m.clone();
    hessenberg(&mut h);
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    let mut eig = vec![C64::default(); n];
    let budget = 50 * n.max(1);
    let (mut total, mut stalled) = (0usize, 0usize);
    let mut hi = n;
    while hi > 0 {
        let top = hi - 1;
        let mut l = top;
        while l > 0 {
            let s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let s = if s == 0.0 { scale } else { s };
            if h[(l, l - 1)].norm() <= f64::EPSILON * s {
                h[(l, l - 1)] = C64::default();
                break;
            }
            l -= 1;
        }
        if l == top {
            eig[top] = h[(top, top)];
            hi -= 1;
            stalled = 0;
            continue;
        }
        total += 1;
        stalled += 1;
        if total > budget {
            return Err(OracleError::NoConvergence(budget));
        }
        let mu = if stalled % 10 == 0 {
            let below = if top >= 2 { h[(top - 1, top - 2)].re.abs() } else { 0.0 };
            h[(top, top)] + C64::new(h[(top, top - 1)].re.abs() + below, 0.0)
        } else {
            wilkinson_shift(h[(top - 1, top - 1)], h[(top - 1, top)], h[(top, top - 1)], h[(top, top)])
        };
        for k in l..=top {
            h[(k, k)] -= mu;
        }
        let mut rots = Vec::with_capacity(top - l);
        for k in l..top {
            let (x, y) = (h[(k, k)], h[(k + 1, k)]);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 { (C64::new(1.0, 0.0), C64::default()) } else { (x / r, y / r) };
            for j in k..=top {
                let (u, w) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = c.conj() * u + s.conj() * w;
                h[(k + 1, j)] = -s * u + c * w;
            }
            rots.push((c, s));
        }
        for (t, &(c, s)) in rots.iter().enumerate() {
            let k = l + t;
            for i in l..=(k + 2).min(top) {
                let (u, w) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = u * c + w * s;
                h[(i, k + 1)] = -u * s.conj() + w * c.conj();
            }
        }
        for k in l..=top {
            h[(k, k)] += mu;
        }
    }
    Ok(eig)
}

pub fn departure_from_normality(m: &DenseMatrix) -> f64 {
    let f = m.frobenius();
    if f == 0.0 {
        return 0.0;
    }
    let md = m.adjoint();
    let comm = m.matmul(&md).unwrap().sub(&md.matmul(m).unwrap()).unwrap();
    comm.frobenius() / (f * f)
}

/// Eigenvalues of a truncation, sorted by real then imaginary part.
pub fn dense_eigenvalues(m: &TruncatedMatrix) -> Result<SpectrumEstimate, OracleError> {
    let mut ev = eigenvalues(&m.matrix)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let dep = departure_from_normality(&m.matrix);
    let condition_note = (dep > NORMALITY_THRESHOLD).then(|| {
        format!("non-normal truncation (departure {dep:.3e}); eigenvalues may be poor proxies for the operator")
    });
    Ok(SpectrumEstimate { eigenvalues: ev, departure_from_normality: dep, condition_note })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub interior_residual: f64,
    pub tail_mass: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Residual of `c0 p` against `M - E` (against `M^dagger - conj(E)` for
/// left packets) on the interior window.
pub fn residual_check(m: &TruncatedMatrix, e: C64, packet: &EigenPacket, tol: f64) -> Result<ResidualReport, OracleError> {
    let n = m.dim();
    if packet.len() != n {
        return Err(OracleError::LengthMismatch(n, packet.len()));
    }
    let v = packet.coefficients();
    let op = if packet.side().is_left() { m.matrix.adjoint().shifted(e.conj()) } else { m.matrix.shifted(e) };
    let r = op.matvec(&v)?;
    let sup = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let interior_residual = (m.interior_lo..=m.interior_hi).map(|l| r[l].norm()).fold(0.0, f64::max) / sup.max(1.0);
    let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let tail: f64 = v[m.interior_hi + 1..].iter().map(|z| z.norm_sqr()).sum();
    let tail_mass = if total > 0.0 { tail / total } else { 0.0 };
    Ok(ResidualReport { interior_residual, tail_mass, tol, pass: interior_residual <= tol && tail_mass <= tol })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseIteration {
    /// Right vector, sup-norm 1 with its largest entry real positive.
    pub vector: Vec<C64>,
    /// Left vector (of `M^dagger`), same normalization.
    pub left: Vec<C64>,
    /// `(w^H M v) / (w^H v)`
    pub eigenvalue: C64,
    pub shift: C64,
}

/// Inverse iteration at a fixed shift, carrying right and left vectors.
pub fn inverse_iteration(m: &TruncatedMatrix, e_guess: C64, iters: usize) -> Result<InverseIteration, OracleError> {
    let a = &m.matrix;
    let n = a.rows();
    let floor = 1e-14 * a.max_abs().max(1.0);
    let factor = |shift: C64| a.shifted(shift).lu().ok().filter(|lu| lu.min_pivot() > floor);
    let mut shift = e_guess;
    let lu = match factor(shift) {
        Some(lu) => lu,
        None => {
            shift = e_guess + C64::new(1e-9, 1e-9) * e_guess.norm().max(1.0);
            factor(shift).ok_or(OracleError::SingularShift(e_guess))?
        }
    };
    let mut v: Vec<C64> = (0..n).map(|k| C64::new(1.0, 0.0) / (1.0 + 0.01 * k as f64)).collect();
    let mut w = v.clone();
    for _ in 0..iters.max(1) {
        v = align_phase(&lu.solve(&v)?);
        w = align_phase(&lu.solve_adjoint(&w)?);
    }
    let mv = a.matvec(&v)?;
    let num: C64 = w.iter().zip(&mv).map(|(x, y)| x.conj() * y).sum();
    let den: C64 = w.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
    Ok(InverseIteration { vector: v, left: w, eigenvalue: num / den, shift })
}

/// Rotate and scale so the largest-modulus entry becomes exactly 1.
pub fn align_phase(v: &[C64]) -> Vec<C64> {
    let pivot = v.iter().copied().fold(C64::default(), |best, z| if z.norm() > best.norm() { z } else { best });
    if pivot.norm() == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|z| z / pivot).collect()
}

/// Largest deviation between two vectors on `window` after scaling both so
/// that their largest entry is 1 and fitting the remaining complex scale by
/// least squares.
pub fn compare_up_to_scale(a: &[C64], b: &[C64], window: std::ops::Range<usize>) -> f64 {
    let (a, b) = (align_phase(a), align_phase(b));
    let bb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    let t: C64 = if bb == 0.0 { C64::new(1.0, 0.0) } else { b.iter().zip(&a).map(|(x, y)| x.conj() * y).sum::<C64>() / bb };
    window.map(|k| (a[k] - t * b[k]).norm()).fold(0.0, f64::max)
}

/// `max |G - I|` with `G[n][m] = sum_k conj(right_n[k]) left_m[k]`.
pub fn gram_check(rights: &[Vec<C64>], lefts: &[Vec<C64>]) -> Result<f64, OracleError> {
    let len = rights.first().map_or(0, Vec::len);
    for v in rights.iter().chain(lefts) {
        if v.len() != len {
            return Err(OracleError::LengthMismatch(len, v.len()));
        }
    }
    let mut worst = 0.0f64;
    for (i, r) in rights.iter().enumerate() {
        for (j, l) in lefts.iter().enumerate() {
            let g: C64 = r.iter().zip(l).map(|(x, y)| x.conj() * y).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).norm());
        }
    }
    Ok(worst)
}
