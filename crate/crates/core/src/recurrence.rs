//! Eigenvector coefficients from the h-step three-term recurrences.
//!
//! For an eigenvalue `E` of `H` the right coefficients satisfy, row by row,
//!
//! ```text
//! b_l p_{l-h} + (a_l - E) p_l + b'_l p_{l+h} = 0
//! ```
//!
//! and the left coefficients (eigenvector of `H^dagger` at `conj(E)`) satisfy
//! the same relation for `conj(q)` with `b_l -> b'_{l-h}`, `b'_l -> b_{l+h}`.
//! Both are solved by one chain routine, so a band with `b_l = b'_{l-h}` gives
//! `q = conj(p)` bit for bit.
//!
//! Two schemes are offered. [`Scheme::Forward`] runs the relation upward from
//! the seed; it is exact arithmetic-wise but the wanted solution is the
//! *minimal* one, so rounding errors are amplified by the dominant solution
//! (relative errors of 1e30 by index 40 are typical for the shifted
//! oscillator). [`Scheme::Matched`] (the default) additionally runs the
//! relation downward from the truncation edge and splices both at the row
//! where they agree best, i.e. where the spliced vector leaves the smallest
//! residual; each half then only covers the range where it is stable.

use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{band::BandSpec, dense::DenseMatrix, seq::wire};

/// `|b'_l|` (or `|b_{l+h}|` on the left) at or below this is a zero pivot.
pub const PIVOT_FLOOR: f64 = 1e-300;
/// Forward-scheme growth guard.
pub const GROWTH_LIMIT: f64 = 1e150;
/// Pairings below this modulus cannot be normalized.
pub const DEGENERATE_PAIRING: f64 = 1e-14;

const RESCALE_AT: f64 = 1e100;
const DECOUPLED_ROW_TOL: f64 = 1e-12;
/// The downward pass may start at most this many times further out than `N`.
const MAX_EXTENSION: usize = 16;
/// Relative change of the leading coefficients at which extension stops.
const SETTLED: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecurrenceError {
    #[error("truncation length {n} is below h + 1 = {}", h + 1)]
    DimensionTooSmall { n: usize, h: usize },
    #[error("seed index {seed} is outside 0..{n}")]
    SeedOutOfRange { seed: usize, n: usize },
    #[error("zero pivot at row {index} (|pivot| = {modulus:e}); the band is reducible there")]
    ZeroPivot { index: usize, modulus: f64 },
    #[error("coefficient {index} reached modulus {modulus:e}; E is likely not an eigenvalue")]
    Growth { index: usize, modulus: f64 },
    #[error("pairing modulus {0:e} is too small to normalize")]
    DegeneratePairing(f64),
    #[error("packet lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "H")]
    H,
    #[serde(rename = "H_dagger")]
    HDagger,
    #[serde(rename = "H_susy")]
    Susy,
    #[serde(rename = "H_susy_dagger")]
    SusyDagger,
}

impl Side {
    /// Left sides (eigenvectors of an adjoint) run the conjugated relation.
    pub fn is_left(self) -> bool {
        matches!(self, Side::HDagger | Side::SusyDagger)
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::H => "H",
            Side::HDagger => "H_dagger",
            Side::Susy => "H_susy",
            Side::SusyDagger => "H_susy_dagger",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Forward,
    #[default]
    Matched,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RecurrenceOptions {
    pub scheme: Scheme,
    /// Index `s` with `p_s = 1`; entries below it on its residue chain, and
    /// all entries on other residue chains, are zero.
    pub seed: usize,
}

impl RecurrenceOptions {
    pub fn seeded(seed: usize) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Normalized coefficient sequence of one eigenvector.
///
/// Full coefficients are `c0 * p[l]`. For left sides `E` is still the
/// eigenvalue of `H` (the vector belongs to `conj(E)` of the adjoint).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPacket {
    #[serde(rename = "E", with = "wire::complex")]
    e: C64,
    side: Side,
    #[serde(with = "wire::complex")]
    c0: C64,
    #[serde(with = "wire::complex_vec")]
    p: Vec<C64>,
    #[serde(rename = "N")]
    n: usize,
    seed: usize,
}

impl EigenPacket {
    pub fn e(&self) -> C64 { self.e }

    pub fn side(&self) -> Side { self.side }

    pub fn c0(&self) -> C64 { self.c0 }

    pub fn p(&self) -> &[C64] { &self.p }

    pub fn len(&self) -> usize { self.n }

    pub fn is_empty(&self) -> bool { self.n == 0 }

    pub fn seed(&self) -> usize { self.seed }

    pub fn with_c0(mut self, c0: C64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn coefficients(&self) -> Vec<C64> {
        self.p.iter().map(|z| self.c0 * z).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecurrenceDiagnostics {
    /// Scheme that produced the packet; `Matched` falls back to `Forward`
    /// when the downward relation hits a zero divisor.
    pub scheme: Scheme,
    /// Row where the upward and downward solutions were joined.
    pub junction: Option<usize>,
    /// Relative residual of the junction row (of the last row for the
    /// forward scheme). Small only when `E` is an eigenvalue.
    pub junction_residual: f64,
    pub peak_modulus: f64,
    /// Length the downward pass started from; larger than `N` when the
    /// truncation edge was moved out to let the leading coefficients settle.
    pub extent: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceOutcome {
    pub packet: EigenPacket,
    pub diagnostics: RecurrenceDiagnostics,
}

/// Solution values with a per-entry exponent: entry `k` stands for
/// `v[k] * RESCALE_AT^e[k]`, so growth never pushes earlier entries into
/// subnormals.
struct Scaled {
    v: Vec<C64>,
    e: Vec<i32>,
}

impl Scaled {
    fn new(n: usize) -> Self {
        Self { v: vec![C64::default(); n], e: vec![0; n] }
    }

    /// Store `value` at `k`, computed in the scale of the live entry `prev`;
    /// both are rescaled together once `value` gets large.
    fn push_live(&mut self, k: usize, value: C64, prev: usize) {
        self.v[k] = value;
        self.e[k] = self.e[prev];
        if value.norm() > RESCALE_AT {
            for i in [k, prev] {
                self.v[i] /= RESCALE_AT;
                self.e[i] += 1;
            }
        }
    }

    /// Entry `k` expressed in the scale of entry `base`.
    fn at(&self, k: usize, base: usize) -> C64 {
        self.v[k] * RESCALE_AT.powi(self.e[k] - self.e[base])
    }
}

struct Chain<'a> {
    h: usize,
    e: C64,
    diag: &'a dyn Fn(usize) -> C64,
    lower: &'a dyn Fn(usize) -> C64,
    upper: &'a dyn Fn(usize) -> C64,
}

impl Chain<'_> {
    /// `(residual, scale)` of row `l` for a vector `x` (zero beyond its end).
    fn row(&self, x: &[C64], l: usize) -> (C64, f64) {
        let at = |k: Option<usize>| k.and_then(|k| x.get(k)).copied().unwrap_or_default();
        let lo = (self.lower)(l) * at(l.checked_sub(self.h));
        let mid = ((self.diag)(l) - self.e) * x[l];
        let up = (self.upper)(l) * at(Some(l + self.h));
        (lo + mid + up, lo.norm() + mid.norm() + up.norm())
    }

    /// Upward from `x[s] = 1` to index `top` (inclusive).
    fn forward(&self, x: &mut [C64], s: usize, top: usize) -> Result<(), RecurrenceError> {
        let h = self.h;
        x[s] = C64::new(1.0, 0.0);
        let mut l = s;
        while l + h <= top {
            let prev = if l >= s + h { x[l - h] } else { C64::default() };
            let head = x[l] * (self.e - (self.diag)(l));
            let tail = prev * (self.lower)(l);
            let num = head - tail;
            let up = (self.upper)(l);
            let next = if up.norm() > PIVOT_FLOOR {
                num / up
            } else {
                // Row l no longer reaches l + h. It must already hold; the
                // next entry then comes from row l + h when that row is
                // itself cut off above, and is set to zero otherwise.
                let scale = head.norm() + tail.norm();
                if num.norm() > DECOUPLED_ROW_TOL * scale {
                    return Err(RecurrenceError::ZeroPivot { index: l, modulus: up.norm() });
                }
                let gap = self.e - (self.diag)(l + h);
                if (self.upper)(l + h).norm() <= PIVOT_FLOOR && gap.norm() > PIVOT_FLOOR {
                    (self.lower)(l + h) * x[l] / gap
                } else {
                    C64::default()
                }
            };
            if next.norm() > GROWTH_LIMIT || !next.is_finite() {
                return Err(RecurrenceError::Growth { index: l + h, modulus: next.norm() });
            }
            x[l + h] = next;
            l += h;
        }
        Ok(())
    }

    /// Upward pass used only to locate the junction: rescaled instead of
    /// guarded, and stopped (remaining entries zero) at the first zero pivot.
    fn forward_probe(&self, n: usize, s: usize, top: usize) -> Scaled {
        let h = self.h;
        let mut x = Scaled::new(n);
        x.v[s] = C64::new(1.0, 0.0);
        let mut l = s;
        while l + h <= top {
            let prev = if l >= s + h { x.v[l - h] } else { C64::default() };
            let up = (self.upper)(l);
            if up.norm() <= PIVOT_FLOOR {
                break;
            }
            let next = (x.v[l] * (self.e - (self.diag)(l)) - prev * (self.lower)(l)) / up;
            if !next.is_finite() {
                break;
            }
            x.push_live(l + h, next, l);
            l += h;
        }
        x
    }

    /// Downward from `y[top] = 1`, `y[top + h] = 0` to `s`. `None` if some
    /// `lower` divisor vanishes.
    fn backward(&self, n: usize, s: usize, top: usize) -> Option<Scaled> {
        let h = self.h;
        let mut y = Scaled::new(n);
        y.v[top] = C64::new(1.0, 0.0);
        let mut l = top;
        while l >= s + h {
            let lo = (self.lower)(l);
            if lo.norm() <= PIVOT_FLOOR {
                return None;
            }
            let above = if l + h <= top { y.v[l + h] } else { C64::default() };
            let v = (y.v[l] * (self.e - (self.diag)(l)) - above * (self.upper)(l)) / lo;
            if !v.is_finite() {
                return None;
            }
            y.push_live(l - h, v, l);
            l -= h;
        }
        Some(y)
    }

    /// Row where splicing the upward solution (below and at it) onto the
    /// downward solution `y` (above it) leaves the smallest relative residual.
    fn junction(&self, n: usize, s: usize, top: usize, y: &Scaled) -> Option<usize> {
        let h = self.h;
        let x = self.forward_probe(n, s, top);
        let mut best: Option<(usize, f64)> = None;
        for m in (s..=top).step_by(h) {
            if x.v[m].norm() == 0.0 || y.v[m].norm() == 0.0 {
                continue;
            }
            let below = if m >= s + h { x.at(m - h, m) } else { C64::default() };
            let above = if m + h <= top { y.at(m + h, m) * (x.v[m] / y.v[m]) } else { C64::default() };
            let terms = [(self.lower)(m) * below, ((self.diag)(m) - self.e) * x.v[m], (self.upper)(m) * above];
            let scale: f64 = terms.iter().map(|t| t.norm()).sum();
            let r = (terms[0] + terms[1] + terms[2]).norm() / if scale > 0.0 { scale } else { 1.0 };
            if r.is_finite() && best.is_none_or(|b| r < b.1) {
                best = Some((m, r));
            }
        }
        best.map(|b| b.0)
    }

    /// A downward pass started at the truncation edge imposes a spurious zero
    /// just beyond it. The band itself continues, so the start is moved out
    /// (doubling) until the first `n` coefficients stop changing.
    fn solve_settled(&self, n: usize, s: usize, scheme: Scheme) -> Result<(Vec<C64>, RecurrenceDiagnostics), RecurrenceError> {
        let (mut x, mut d) = self.solve(n, s, scheme)?;
        let mut ext = n;
        while d.scheme == Scheme::Matched && ext < MAX_EXTENSION * n {
            ext *= 2;
            let Ok((mut y, dy)) = self.solve(ext, s, scheme) else { break };
            if dy.scheme != Scheme::Matched {
                break;
            }
            y.truncate(n);
            let peak = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let change = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            x = y;
            d = RecurrenceDiagnostics { peak_modulus: peak, extent: ext, ..dy };
            if change <= SETTLED * peak {
                break;
            }
        }
        Ok((x, d))
    }

    fn solve(&self, n: usize, s: usize, scheme: Scheme) -> Result<(Vec<C64>, RecurrenceDiagnostics), RecurrenceError> {
        let h = self.h;
        let top = s + (n - 1 - s) / h * h;
        let chain = || (s..=top).step_by(h);
        let peak = |x: &[C64]| chain().map(|k| x[k].norm()).fold(0.0, f64::max);
        let relative = |(r, scale): (C64, f64)| if scale > 0.0 { r.norm() / scale } else { r.norm() };

        let backward = match scheme {
            Scheme::Matched => self.backward(n, s, top).and_then(|y| Some((self.junction(n, s, top, &y)?, y))),
            Scheme::Forward => None,
        };
        let mut x = vec![C64::default(); n];
        let Some((m, y)) = backward else {
            self.forward(&mut x, s, top)?;
            let diagnostics = RecurrenceDiagnostics {
                scheme: Scheme::Forward,
                junction: None,
                junction_residual: relative(self.row(&x, top)),
                peak_modulus: peak(&x),
                extent: n,
            };
            return Ok((x, diagnostics));
        };

        self.forward(&mut x, s, m)?;
        if x[m].norm() == 0.0 || y.v[m].norm() == 0.0 {
            let mut x = vec![C64::default(); n];
            self.forward(&mut x, s, top)?;
            let diagnostics = RecurrenceDiagnostics {
                scheme: Scheme::Forward,
                junction: None,
                junction_residual: relative(self.row(&x, top)),
                peak_modulus: peak(&x),
                extent: n,
            };
            return Ok((x, diagnostics));
        }
        let ratio = x[m] / y.v[m];
        let mut k = m + h;
        while k <= top {
            x[k] = y.at(k, m) * ratio;
            k += h;
        }
        let diagnostics = RecurrenceDiagnostics {
            scheme: Scheme::Matched,
            junction: Some(m),
            junction_residual: relative(self.row(&x, m)),
            peak_modulus: peak(&x),
            extent: n,
        };
        Ok((x, diagnostics))
    }
}

/// Run the recurrence for one side of `band` at eigenvalue `e` of the
/// (non-adjoint) operator, truncated to `n` coefficients.
pub fn run_recurrence(
    band: &BandSpec,
    e: C64,
    n: usize,
    side: Side,
    opts: &RecurrenceOptions,
) -> Result<RecurrenceOutcome, RecurrenceError> {
    let h = band.h();
    if n < h + 1 {
        return Err(RecurrenceError::DimensionTooSmall { n, h });
    }
    if opts.seed >= n {
        return Err(RecurrenceError::SeedOutOfRange { seed: opts.seed, n });
    }
    let diag = |l: usize| band.a(l);
    let (x, diagnostics) = if side.is_left() {
        let lower = |l: usize| if l >= h { band.bp(l - h) } else { C64::default() };
        let upper = |l: usize| band.b(l + h);
        let chain = Chain { h, e, diag: &diag, lower: &lower, upper: &upper };
        let (x, d) = chain.solve_settled(n, opts.seed, opts.scheme)?;
        (x.into_iter().map(|z| z.conj()).collect(), d)
    } else {
        let lower = |l: usize| band.b(l);
        let upper = |l: usize| band.bp(l);
        let chain = Chain { h, e, diag: &diag, lower: &lower, upper: &upper };
        chain.solve_settled(n, opts.seed, opts.scheme)?
    };
    let packet = EigenPacket { e, side, c0: C64::new(1.0, 0.0), p: x, n, seed: opts.seed };
    Ok(RecurrenceOutcome { packet, diagnostics })
}

/// Right eigenvector coefficients of `H` (default options).
pub fn run_recurrence_right(band: &BandSpec, e: C64, n: usize) -> Result<EigenPacket, RecurrenceError> {
    run_recurrence(band, e, n, Side::H, &RecurrenceOptions::default()).map(|o| o.packet)
}

/// Eigenvector coefficients of `H^dagger` at `conj(e)` (default options).
pub fn run_recurrence_left(band: &BandSpec, e: C64, n: usize) -> Result<EigenPacket, RecurrenceError> {
    run_recurrence(band, e, n, Side::HDagger, &RecurrenceOptions::default()).map(|o| o.packet)
}

/// Same contract on a SUSY band; `left` selects `H_susy^dagger`.
pub fn run_recurrence_susy(susy: &BandSpec, ecal: C64, n: usize, left: bool) -> Result<EigenPacket, RecurrenceError> {
    let side = if left { Side::SusyDagger } else { Side::Susy };
    run_recurrence(susy, ecal, n, side, &RecurrenceOptions::default()).map(|o| o.packet)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizationRecord {
    /// `sum_k conj(c_k) d_k` after normalization.
    #[serde(with = "wire::complex")]
    pub pairing: C64,
    /// The same sum with both scales set to 1.
    #[serde(with = "wire::complex")]
    pub unit_pairing: C64,
    pub scale_choice: String,
    pub rescaled: bool,
    /// Terms actually summed; fewer than `N` once the terms are negligible.
    pub terms_used: usize,
    pub tail_estimate: f64,
}

/// Full truncated pairing of unit-scale sequences, the number of terms that
/// matter (the rest are below `1e-16` of the sum) and a tail estimate: the
/// discarded mass, or the last term when every term matters.
fn truncated_pairing(p: &[C64], q: &[C64]) -> (C64, usize, f64) {
    let terms: Vec<C64> = p.iter().zip(q).map(|(a, b)| a.conj() * b).collect();
    let sum: C64 = terms.iter().sum();
    let cut = 1e-16 * sum.norm();
    let used = terms.iter().rposition(|t| t.norm() >= cut).map_or(0, |k| k + 1);
    let tail = if used < terms.len() {
        terms[used..].iter().map(|t| t.norm()).sum()
    } else {
        terms.last().map_or(0.0, |t| t.norm())
    };
    (sum, used, tail)
}

/// Scale a right/left pair so that `sum_k conj(c0_r p_k) c0_l q_k = 1`, with
/// `c0_l` real and positive (which fixes `|c0_l| = |c0_r|`).
pub fn normalize_pair(
    right: &EigenPacket,
    left: &EigenPacket,
    tol: f64,
) -> Result<(EigenPacket, EigenPacket, NormalizationRecord), RecurrenceError> {
    if right.n != left.n {
        return Err(RecurrenceError::LengthMismatch(right.n, left.n));
    }
    let (s, terms_used, tail_estimate) = truncated_pairing(&right.p, &left.p);
    if s.norm() < DEGENERATE_PAIRING {
        return Err(RecurrenceError::DegeneratePairing(s.norm()));
    }
    let current = right.c0.conj() * left.c0 * s;
    let gauge_ok = left.c0.im == 0.0 && left.c0.re > 0.0;
    if gauge_ok && (current - 1.0).norm() <= tol {
        let record = NormalizationRecord {
            pairing: current,
            unit_pairing: s,
            scale_choice: "unchanged (already normalized, c0_left real positive)".into(),
            rescaled: false,
            terms_used,
            tail_estimate,
        };
        return Ok((right.clone(), left.clone(), record));
    }
    let c0_l = C64::new(s.norm().sqrt().recip(), 0.0);
    let c0_r = (s.conj() * c0_l).inv();
    let (r, l) = (right.clone().with_c0(c0_r), left.clone().with_c0(c0_l));
    let record = NormalizationRecord {
        pairing: c0_r.conj() * c0_l * s,
        unit_pairing: s,
        scale_choice: "c0_left = |S|^(-1/2) real positive, c0_right = 1/(conj(S) c0_left)".into(),
        rescaled: true,
        terms_used,
        tail_estimate,
    };
    Ok((r, l, record))
}

/// `G[n][m] = sum_k conj(c_k^(n)) d_k^(m)` over the full truncation.
pub fn biorthogonality_matrix(rights: &[EigenPacket], lefts: &[EigenPacket]) -> Result<DenseMatrix, RecurrenceError> {
    let n = rights.first().or(lefts.first()).map_or(0, |p| p.n);
    for p in rights.iter().chain(lefts) {
        if p.n != n {
            return Err(RecurrenceError::LengthMismatch(n, p.n));
        }
    }
    let rc: Vec<Vec<C64>> = rights.iter().map(EigenPacket::coefficients).collect();
    let lc: Vec<Vec<C64>> = lefts.iter().map(EigenPacket::coefficients).collect();
    Ok(DenseMatrix::from_fn(rc.len(), lc.len(), |i, j| {
        rc[i].iter().zip(&lc[j]).map(|(c, d)| c.conj() * d).sum()
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionSums {
    /// `S[k][l] = sum_{n < n_cut} conj(c_k^(n)) d_l^(n)`.
    pub sums: DenseMatrix,
    pub n_cut: usize,
    /// Largest `|conj(c_k^(n)) d_l^(n)|` contributed by the last level.
    pub last_term: f64,
    pub max_deviation: f64,
}

/// Partial sums over the level index for fixed basis indices `k, l < k_max`.
pub fn resolution_sums(rights: &[EigenPacket], lefts: &[EigenPacket], k_max: usize) -> Result<ResolutionSums, RecurrenceError> {
    if rights.len() != lefts.len() {
        return Err(RecurrenceError::LengthMismatch(rights.len(), lefts.len()));
    }
    let rc: Vec<Vec<C64>> = rights.iter().map(EigenPacket::coefficients).collect();
    let lc: Vec<Vec<C64>> = lefts.iter().map(EigenPacket::coefficients).collect();
    for v in rc.iter().chain(&lc) {
        if v.len() < k_max {
            return Err(RecurrenceError::LengthMismatch(k_max, v.len()));
        }
    }
    let sums = DenseMatrix::from_fn(k_max, k_max, |k, l| {
        rc.iter().zip(&lc).map(|(c, d)| c[k].conj() * d[l]).sum()
    });
    let last_term = match (rc.last(), lc.last()) {
        (Some(c), Some(d)) => (0..k_max)
            .flat_map(|k| (0..k_max).map(move |l| (c[k].conj() * d[l]).norm()))
            .fold(0.0, f64::max),
        _ => 0.0,
    };
    let max_deviation = sums.sub(&DenseMatrix::identity(k_max)).map(|m| m.max_abs()).unwrap_or(f64::NAN);
    Ok(ResolutionSums { sums, n_cut: rights.len(), last_term, max_deviation })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::seq::ComplexSeq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn oscillator(al: C64, be: C64) -> BandSpec {
        BandSpec::new(
            1,
            ComplexSeq::new(move |n| n as f64 + al * be),
            ComplexSeq::new(move |n| al * (n as f64).sqrt()),
            ComplexSeq::new(move |n| be * ((n + 1) as f64).sqrt()),
        )
        .unwrap()
    }

    fn squeezed(tanh_r: f64, theta: f64) -> BandSpec {
        let r = tanh_r.atanh();
        let (ch, sh) = (r.cosh(), r.sinh());
        let lam = C64::from_polar(ch * sh, -theta);
        BandSpec::new(
            2,
            ComplexSeq::new(move |n| c(n as f64 * (2.0 * r).cosh() + sh * sh, 0.0)),
            ComplexSeq::new(move |n| lam.conj() * ((n * n.saturating_sub(1)) as f64).sqrt()),
            ComplexSeq::new(move |n| lam * (((n + 1) * (n + 2)) as f64).sqrt()),
        )
        .unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn oscillator_ground_and_first_level() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let p = run_recurrence_right(&band, C64::default(), 30).unwrap();
        assert_eq!(p.p()[0], c(1.0, 0.0));
        assert!(close(p.p()[1], c(-1.0, 0.0), 1e-13));
        assert!(close(p.p()[2], c(0.5f64.sqrt(), 0.0), 1e-13));
        assert!(close(p.p()[3], c(-(1.0f64 / 6.0).sqrt(), 0.0), 1e-13));

        let p1 = run_recurrence_right(&band, c(1.0, 0.0), 30).unwrap();
        assert!(p1.p()[1].norm() < 1e-13);
        assert!(close(p1.p()[2], c(-(0.5f64).sqrt(), 0.0), 1e-12));
    }

    #[test]
    fn left_oscillator_uses_conjugate_beta() {
        let (al, be) = (c(0.7, 0.2), c(0.3, -0.1));
        let q = run_recurrence_left(&oscillator(al, be), C64::default(), 40).unwrap();
        let mut fact = 1.0;
        for k in 0..20 {
            if k > 0 {
                fact *= k as f64;
            }
            let expect = (-be.conj()).powu(k as u32) / fact.sqrt();
            assert!(close(q.p()[k], expect, 1e-12), "k={k}");
        }
    }

    #[test]
    fn squeezed_vacuum_values() {
        let band = squeezed(0.5, 0.0);
        let p = run_recurrence_right(&band, C64::default(), 120).unwrap();
        assert!(close(p.p()[2], c(-0.25 * 2f64.sqrt(), 0.0), 1e-13));
        assert!(close(p.p()[4], c(0.0625 * 24f64.sqrt() / 2.0, 0.0), 1e-13));
        for k in (1..40).step_by(2) {
            assert_eq!(p.p()[k], C64::default());
        }
    }

    #[test]
    fn slow_tails_move_the_edge_out() {
        // tanh r = 0.76: entries near index 60 are still ~1e-4 of the peak
        let band = squeezed(1f64.tanh(), 0.3);
        let opts = RecurrenceOptions::default();
        let short = run_recurrence(&band, C64::default(), 60, Side::H, &opts).unwrap();
        let long = run_recurrence(&band, C64::default(), 600, Side::H, &opts).unwrap();
        assert!(short.diagnostics.extent > 60);
        for k in 0..60 {
            assert!((short.packet.p()[k] - long.packet.p()[k]).norm() <= 1e-13, "k={k}");
        }
    }

    #[test]
    fn high_levels_satisfy_the_first_row() {
        let band = oscillator(c(0.5, 0.0), c(0.5, 0.0));
        for level in [10usize, 30, 59] {
            let e = c(level as f64, 0.0);
            let out = run_recurrence(&band, e, 200, Side::H, &RecurrenceOptions::default()).unwrap();
            let p = out.packet.p();
            let row0 = (band.a(0) - e) * p[0] + band.bp(0) * p[1];
            let scale = ((band.a(0) - e) * p[0]).norm() + (band.bp(0) * p[1]).norm();
            assert!(row0.norm() <= 1e-12 * scale, "level {level}");
            assert!(out.diagnostics.junction_residual <= 1e-12, "level {level}: {:?}", out.diagnostics);
        }
    }

    #[test]
    fn forward_scheme_is_unstable_on_coherent_state() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let opts = RecurrenceOptions::default().with_scheme(Scheme::Forward);
        let out = run_recurrence(&band, C64::default(), 41, Side::H, &opts).unwrap();
        let mut fact = 1.0f64;
        (1..=40).for_each(|k| fact *= k as f64);
        let exact = 1.0 / fact.sqrt();
        let rel = (out.packet.p()[40] - exact).norm() / exact;
        assert!(rel > 1.0, "forward recursion unexpectedly accurate: {rel:e}");
        let matched = run_recurrence_right(&band, C64::default(), 120).unwrap();
        assert!(close(matched.p()[40], c(exact, 0.0), 1e-12));
    }

    #[test]
    fn growth_guard_trips_off_spectrum() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let opts = RecurrenceOptions::default().with_scheme(Scheme::Forward);
        let err = run_recurrence(&band, c(0.5, 0.0), 400, Side::H, &opts).unwrap_err();
        assert!(matches!(err, RecurrenceError::Growth { .. }));
    }

    #[test]
    fn junction_residual_flags_non_eigenvalues() {
        let band = oscillator(c(0.5, 0.0), c(0.5, 0.0));
        let on = run_recurrence(&band, c(2.0, 0.0), 80, Side::H, &RecurrenceOptions::default()).unwrap();
        let off = run_recurrence(&band, c(2.5, 0.0), 80, Side::H, &RecurrenceOptions::default()).unwrap();
        assert!(on.diagnostics.junction_residual < 1e-12);
        assert!(off.diagnostics.junction_residual > 1e-3);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let bp = ComplexSeq::new(|n| if n == 2 { C64::default() } else { c(1.0, 0.0) });
        let band = BandSpec::new(1, ComplexSeq::constant(c(0.3, 0.0)), ComplexSeq::constant(c(1.0, 0.0)), bp).unwrap();
        let opts = RecurrenceOptions::default().with_scheme(Scheme::Forward);
        let err = run_recurrence(&band, C64::default(), 8, Side::H, &opts).unwrap_err();
        assert!(matches!(err, RecurrenceError::ZeroPivot { index: 2, .. }));
    }

    #[test]
    fn diagonal_band_gives_basis_vector() {
        let band = BandSpec::diagonal(ComplexSeq::new(|n| c(n as f64, 0.0)));
        let out = run_recurrence(&band, c(3.0, 0.0), 10, Side::Susy, &RecurrenceOptions::seeded(3)).unwrap();
        let expect: Vec<C64> = (0..10).map(|k| if k == 3 { c(1.0, 0.0) } else { C64::default() }).collect();
        assert_eq!(out.packet.p(), &expect[..]);
    }

    #[test]
    fn triangular_band_continues_below_the_cut() {
        // beta = 0: H is lower bidiagonal and the level-2 vector starts at 2.
        let al = c(0.8, 0.0);
        let band = oscillator(al, C64::default());
        let out = run_recurrence(&band, c(2.0, 0.0), 30, Side::H, &RecurrenceOptions::seeded(2)).unwrap();
        let x = out.packet.coefficients();
        let m = band.truncate(30).unwrap().matrix;
        let r = m.shifted(c(2.0, 0.0)).matvec(&x).unwrap();
        assert!(r[..29].iter().all(|z| z.norm() < 1e-13));
        assert!(x[3].norm() > 0.1);
    }

    #[test]
    fn short_truncation_is_rejected() {
        let band = squeezed(0.5, 0.0);
        assert_eq!(
            run_recurrence_right(&band, C64::default(), 2).unwrap_err(),
            RecurrenceError::DimensionTooSmall { n: 2, h: 2 }
        );
    }

    #[test]
    fn normalize_coherent_pair() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let r = run_recurrence_right(&band, C64::default(), 60).unwrap();
        let l = run_recurrence_left(&band, C64::default(), 60).unwrap();
        let (r, l, rec) = normalize_pair(&r, &l, 1e-12).unwrap();
        assert!((rec.unit_pairing - std::f64::consts::E).norm() < 1e-13);
        assert!((rec.pairing - 1.0).norm() < 1e-14);
        assert_eq!(l.c0().im, 0.0);
        assert!(l.c0().re > 0.0);
        // conj(c0_r) c0_l = exp(-conj(alpha beta))
        assert!((r.c0().conj() * l.c0() - (-1.0f64).exp()).norm() < 1e-14);
        assert!(rec.terms_used < 60);
        let g = biorthogonality_matrix(&[r], &[l]).unwrap();
        assert!((g[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn normalized_pair_is_left_alone() {
        let band = squeezed(0.5, 0.0);
        let c0 = c((-0.5 * 0.5f64.atanh().cosh().ln()).exp(), 0.0);
        let r = run_recurrence_right(&band, C64::default(), 200).unwrap().with_c0(c0);
        let l = run_recurrence_left(&band, C64::default(), 200).unwrap().with_c0(c0);
        let (r2, l2, rec) = normalize_pair(&r, &l, 1e-10).unwrap();
        assert!(!rec.rescaled);
        assert_eq!((r2.c0(), l2.c0()), (c0, c0));
    }

    #[test]
    fn orthogonal_pair_is_degenerate() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let r = run_recurrence_right(&band, C64::default(), 200).unwrap();
        let l = run_recurrence_left(&band, c(1.0, 0.0), 200).unwrap();
        assert!(matches!(normalize_pair(&r, &l, 1e-12), Err(RecurrenceError::DegeneratePairing(_))));
    }

    #[test]
    fn packet_json_shape() {
        let band = oscillator(c(1.0, 0.0), c(1.0, 0.0));
        let opts = RecurrenceOptions::default().with_scheme(Scheme::Forward);
        let p = run_recurrence(&band, C64::default(), 3, Side::H, &opts).unwrap().packet;
        let js = serde_json::to_string(&p).unwrap();
        assert!(js.starts_with(r#"{"E":[0.0,0.0],"side":"H","c0":[1.0,0.0],"p":[[1.0,0.0],[-1.0,0.0],"#));
        let back: EigenPacket = serde_json::from_str(&js).unwrap();
        assert_eq!(back, p);
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(re, im)| C64::new(re, im))
    }

    fn arb_band(h: usize, len: usize) -> impl Strategy<Value = BandSpec> {
        (
            prop::collection::vec(arb_c64(), len),
            prop::collection::vec(arb_c64(), len),
            prop::collection::vec(arb_c64().prop_filter("nonzero pivot", |z| z.norm() > 0.3), len),
        )
            .prop_map(move |(a, b, bp)| {
                BandSpec::new(h, ComplexSeq::from_values(a), ComplexSeq::from_values(b), ComplexSeq::from_values(bp))
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn forward_rows_hold(band in (1usize..=2).prop_flat_map(|h| arb_band(h, 16)), e in arb_c64()) {
            let n = 12;
            let opts = RecurrenceOptions::default().with_scheme(Scheme::Forward);
            let out = run_recurrence(&band, e, n, Side::H, &opts).unwrap();
            let x = out.packet.coefficients();
            let h = band.h();
            for l in h..n - h {
                let r = band.b(l) * x[l - h] + (band.a(l) - e) * x[l] + band.bp(l) * x[l + h];
                let scale = (band.b(l) * x[l - h]).norm() + ((band.a(l) - e) * x[l]).norm()
                    + (band.bp(l) * x[l + h]).norm();
                prop_assert!(r.norm() <= 1e-12 * scale.max(1e-300));
            }
        }

        #[test]
        fn symmetric_band_left_is_conjugate(
            a in prop::collection::vec(-3.0f64..3.0, 40),
            off in prop::collection::vec(0.2f64..2.0, 40),
            e in -3.0f64..3.0,
        ) {
            let band = BandSpec::new(
                1,
                ComplexSeq::from_values(a.iter().map(|&x| C64::new(x, 0.0)).collect()),
                ComplexSeq::from_values(std::iter::once(0.0).chain(off.iter().copied()).map(|x| C64::new(x, 0.0)).collect()),
                ComplexSeq::from_values(off.iter().map(|&x| C64::new(x, 0.0)).collect()),
            ).unwrap();
            for scheme in [Scheme::Forward, Scheme::Matched] {
                let opts = RecurrenceOptions::default().with_scheme(scheme);
                let (Ok(r), Ok(l)) = (
                    run_recurrence(&band, C64::new(e, 0.0), 32, Side::H, &opts),
                    run_recurrence(&band, C64::new(e, 0.0), 32, Side::HDagger, &opts),
                ) else { continue };
                for (p, q) in r.packet.p().iter().zip(l.packet.p()) {
                    prop_assert_eq!(q.re.to_bits(), p.re.to_bits());
                    prop_assert_eq!(q.im.to_bits(), (-p.im).to_bits());
                }
            }
        }

        #[test]
        fn normalization_gauge(al in arb_c64(), be in arb_c64()) {
            prop_assume!((al * be).norm() < 3.0);
            let band = oscillator(al * 0.5, be * 0.5);
            let r = run_recurrence_right(&band, C64::default(), 80).unwrap();
            let l = run_recurrence_left(&band, C64::default(), 80).unwrap();
            let (r, l, rec) = normalize_pair(&r, &l, 1e-12).unwrap();
            prop_assert!((rec.pairing - 1.0).norm() < 1e-12);
            prop_assert!(l.c0().im == 0.0 && l.c0().re > 0.0);
            prop_assert!((r.c0().norm() - l.c0().norm()).abs() < 1e-12 * l.c0().norm());
        }
    }
}
