//! Factorizations `H = Y^dagger X` of banded operators and their SUSY partners.
//!
//! The factors act on the two biorthogonal families as
//!
//! ```text
//! X phi_n = c_n phi_n + d_n phi_{n-h}
//! Y psi_n = c'_n psi_n + d'_n psi_{n-h}
//! ```
//!
//! with `d_j = d'_j = 0` for `j < h`. Everything here works on coefficient
//! sequences; dense truncations of `X` and `Y^dagger` are provided so that the
//! formulas can be checked against plain matrix products.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    band::{BandSpec, STRUCTURAL_TOL},
    dense::DenseMatrix,
    seq::{wire, ComplexSeq},
};

/// Divisors below this modulus are treated as structural zeros.
pub const ZERO_DIVISOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("band offset must be at least 1")]
    InvalidOffset,
    #[error("gauge breakdown at index {index}: divisor {which} has modulus {modulus:e}")]
    GaugeBreakdown { index: usize, which: &'static str, modulus: f64 },
    #[error("rescaling needs c_n = 0, but |c_{index}| = {modulus:e}")]
    RequiresLadderForm { index: usize, modulus: f64 },
    #[error("zero divisor: {which}_{index} vanishes")]
    ZeroDivisor { index: usize, which: &'static str },
    #[error("operation supports only h = 1, got h = {0}")]
    UnsupportedBand(usize),
    #[error("degenerate combination: |alpha delta - beta gamma| = {0:e}")]
    DegenerateCombination(f64),
    #[error("factors are not pseudo-bosonic for this mix (max residual {0:e})")]
    NotPseudoBosonic(f64),
}

#[derive(Clone, Debug)]
pub struct FactorizationSpec {
    h: usize,
    c: ComplexSeq,
    cp: ComplexSeq,
    d: ComplexSeq,
    dp: ComplexSeq,
}

impl FactorizationSpec {
    /// `d` and `d'` are masked to zero below `h`.
    pub fn new(
        h: usize,
        c: ComplexSeq,
        cp: ComplexSeq,
        d: ComplexSeq,
        dp: ComplexSeq,
    ) -> Result<Self, FactorError> {
        if h == 0 {
            return Err(FactorError::InvalidOffset);
        }
        Ok(Self { h, c, cp, d: d.masked_below(h), dp: dp.masked_below(h) })
    }

    pub fn h(&self) -> usize { self.h }

    #[inline]
    pub fn c(&self, n: usize) -> C64 { self.c.at(n) }

    #[inline]
    pub fn cp(&self, n: usize) -> C64 { self.cp.at(n) }

    #[inline]
    pub fn d(&self, n: usize) -> C64 { self.d.at(n) }

    #[inline]
    pub fn dp(&self, n: usize) -> C64 { self.dp.at(n) }

    pub fn c_seq(&self) -> &ComplexSeq { &self.c }

    /// Dense truncation of `X` in the `phi` family.
    pub fn x_matrix(&self, dim: usize) -> DenseMatrix {
        let h = self.h;
        DenseMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                self.c(j)
            } else if i + h == j {
                self.d(j)
            } else {
                C64::default()
            }
        })
    }

    /// Dense truncation of `Y^dagger` in the `phi` family.
    pub fn y_dagger_matrix(&self, dim: usize) -> DenseMatrix {
        let h = self.h;
        DenseMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                self.cp(j).conj()
            } else if i == j + h {
                self.dp(i).conj()
            } else {
                C64::default()
            }
        })
    }

    pub fn to_json(&self, n_terms: usize) -> FactorizationJson {
        FactorizationJson {
            h: self.h,
            c: self.c.take(n_terms),
            cp: self.cp.take(n_terms),
            d: self.d.take(n_terms),
            dp: self.dp.take(n_terms),
            n_terms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationJson {
    pub h: usize,
    #[serde(with = "wire::complex_vec")]
    pub c: Vec<C64>,
    #[serde(with = "wire::complex_vec")]
    pub cp: Vec<C64>,
    #[serde(with = "wire::complex_vec")]
    pub d: Vec<C64>,
    #[serde(with = "wire::complex_vec")]
    pub dp: Vec<C64>,
    pub n_terms: usize,
}

impl FactorizationJson {
    pub fn into_spec(self) -> Result<FactorizationSpec, FactorError> {
        FactorizationSpec::new(
            self.h,
            ComplexSeq::from_values(self.c),
            ComplexSeq::from_values(self.cp),
            ComplexSeq::from_values(self.d),
            ComplexSeq::from_values(self.dp),
        )
    }
}

fn lower_band(h: usize, f: impl Fn(usize) -> C64 + Send + Sync + 'static) -> ComplexSeq {
    ComplexSeq::new(move |n| if n >= h { f(n) } else { C64::default() })
}

/// Band of `H = Y^dagger X`.
pub fn compose_band(f: &FactorizationSpec) -> BandSpec {
    let h = f.h;
    let (fa, fb, fbp) = (f.clone(), f.clone(), f.clone());
    let a = ComplexSeq::new(move |n| fa.c(n) * fa.cp(n).conj() + fa.d(n) * fa.dp(n).conj());
    let b = lower_band(h, move |n| fb.c(n - h) * fb.dp(n).conj());
    let bp = ComplexSeq::new(move |n| fbp.d(n + h) * fbp.cp(n).conj());
    BandSpec::new(h, a, b, bp).expect("h >= 1 by construction")
}

/// Band of the SUSY partner `H_susy = X Y^dagger`.
pub fn susy_band(f: &FactorizationSpec) -> BandSpec {
    let h = f.h;
    let (fa, fb, fbp) = (f.clone(), f.clone(), f.clone());
    let a = ComplexSeq::new(move |n| {
        fa.c(n) * fa.cp(n).conj() + fa.d(n + h) * fa.dp(n + h).conj()
    });
    let b = lower_band(h, move |n| fb.c(n) * fb.dp(n).conj());
    let bp = ComplexSeq::new(move |n| fbp.d(n + h) * fbp.cp(n + h).conj());
    BandSpec::new(h, a, b, bp).expect("h >= 1 by construction")
}

/// Band of `[X, Y^dagger]`.
pub fn commutator_band(f: &FactorizationSpec) -> BandSpec {
    let h = f.h;
    let (fa, fb, fbp) = (f.clone(), f.clone(), f.clone());
    let a = ComplexSeq::new(move |n| {
        fa.d(n + h) * fa.dp(n + h).conj() - fa.d(n) * fa.dp(n).conj()
    });
    let b = lower_band(h, move |n| fb.dp(n).conj() * (fb.c(n) - fb.c(n - h)));
    let bp = ComplexSeq::new(move |n| {
        fbp.d(n + h) * (fbp.cp(n + h).conj() - fbp.cp(n).conj())
    });
    BandSpec::new(h, a, b, bp).expect("h >= 1 by construction")
}

/// Recover `(c', d, d')` from a band once `c` is fixed.
///
/// Runs the defining relations forward in `n`:
///
/// ```text
/// a_n      = c_n conj(c'_n) + d_n conj(d'_n)
/// b_{n+h}  = c_n conj(d'_{n+h})
/// b'_n     = d_{n+h} conj(c'_n)
/// ```
///
/// `c'` is returned on `0..=n_max`, `d` and `d'` on `0..=n_max + h`; all
/// three are zero-extended past that.
pub fn solve_factorization(
    band: &BandSpec,
    gauge_c: &ComplexSeq,
    n_max: usize,
) -> Result<FactorizationSpec, FactorError> {
    let h = band.h();
    let mut cp = vec![C64::default(); n_max + 1];
    let mut d = vec![C64::default(); n_max + h + 1];
    let mut dp = vec![C64::default(); n_max + h + 1];
    for n in 0..=n_max {
        let cn = gauge_c.at(n);
        if cn.norm() < ZERO_DIVISOR {
            return Err(FactorError::GaugeBreakdown { index: n, which: "c", modulus: cn.norm() });
        }
        cp[n] = ((band.a(n) - d[n] * dp[n].conj()) / cn).conj();
        dp[n + h] = (band.b(n + h) / cn).conj();
        let cpc = cp[n].conj();
        if cpc.norm() < ZERO_DIVISOR {
            return Err(FactorError::GaugeBreakdown { index: n, which: "c'", modulus: cpc.norm() });
        }
        d[n + h] = band.bp(n) / cpc;
    }
    FactorizationSpec::new(
        h,
        gauge_c.clone(),
        ComplexSeq::from_values(cp),
        ComplexSeq::from_values(d),
        ComplexSeq::from_values(dp),
    )
}

/// [`solve_factorization`] in the unit gauge `c_n = 1`.
pub fn solve_factorization_unit_gauge(band: &BandSpec, n_max: usize) -> Result<FactorizationSpec, FactorError> {
    solve_factorization(band, &ComplexSeq::constant(C64::new(1.0, 0.0)), n_max)
}

/// Rescaling that turns a ladder-form `X` into the canonical lowering action.
#[derive(Clone, Debug, PartialEq)]
pub struct Rescaling {
    /// `sqrt(n!) / d_n!`
    pub scale_phi: Vec<C64>,
    /// `sqrt(n!) / d'_n!`
    pub scale_psi: Vec<C64>,
    /// `<phi_hat_n, psi_hat_n> = n! / (conj(d_n!) d'_n!)`
    pub pairing: Vec<C64>,
    pub log_space: bool,
}

/// Orders of magnitude spanned by `|d_n|` beyond which products are
/// accumulated in log space.
const LOG_SPACE_SPAN: f64 = 12.0;

pub fn rescale_factorization(f: &FactorizationSpec, n_max: usize) -> Result<Rescaling, FactorError> {
    if f.h != 1 {
        return Err(FactorError::UnsupportedBand(f.h));
    }
    for n in 0..=n_max {
        let m = f.c(n).norm();
        if m > STRUCTURAL_TOL {
            return Err(FactorError::RequiresLadderForm { index: n, modulus: m });
        }
    }
    let mut moduli = Vec::with_capacity(2 * n_max);
    for n in 1..=n_max {
        for (which, z) in [("d", f.d(n)), ("d'", f.dp(n))] {
            if z.norm() < ZERO_DIVISOR {
                return Err(FactorError::ZeroDivisor { index: n, which });
            }
            moduli.push(z.norm().log10());
        }
    }
    let span = moduli.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    let log_space = span.is_finite() && span > LOG_SPACE_SPAN;

    let one = C64::new(1.0, 0.0);
    let mut scale_phi = vec![one];
    let mut scale_psi = vec![one];
    if log_space {
        let (mut lphi, mut lpsi, mut aphi, mut apsi, mut lfact) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for n in 1..=n_max {
            lfact += (n as f64).ln();
            lphi += f.d(n).norm().ln();
            lpsi += f.dp(n).norm().ln();
            aphi += f.d(n).arg();
            apsi += f.dp(n).arg();
            scale_phi.push(C64::from_polar((0.5 * lfact - lphi).exp(), -aphi));
            scale_psi.push(C64::from_polar((0.5 * lfact - lpsi).exp(), -apsi));
        }
    } else {
        for n in 1..=n_max {
            let root = (n as f64).sqrt();
            scale_phi.push(scale_phi[n - 1] * root / f.d(n));
            scale_psi.push(scale_psi[n - 1] * root / f.dp(n));
        }
    }
    let pairing = scale_phi.iter().zip(&scale_psi).map(|(p, q)| p.conj() * q).collect();
    Ok(Rescaling { scale_phi, scale_psi, pairing, log_space })
}

/// Mixing coefficients for `C = alpha X + beta Y^dagger`,
/// `D = gamma X + delta Y^dagger`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CombinationCoeffs {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
}

impl CombinationCoeffs {
    pub fn new(alpha: C64, beta: C64, gamma: C64, delta: C64) -> Result<Self, FactorError> {
        let det = alpha * delta - beta * gamma;
        if det.norm() <= ZERO_DIVISOR {
            return Err(FactorError::DegenerateCombination(det.norm()));
        }
        Ok(Self { alpha, beta, gamma, delta })
    }

    pub fn det(&self) -> C64 {
        self.alpha * self.delta - self.beta * self.gamma
    }

    pub fn c_matrix(&self, f: &FactorizationSpec, dim: usize) -> DenseMatrix {
        f.x_matrix(dim).scale(self.alpha).add(&f.y_dagger_matrix(dim).scale(self.beta)).unwrap()
    }

    pub fn d_matrix(&self, f: &FactorizationSpec, dim: usize) -> DenseMatrix {
        f.x_matrix(dim).scale(self.gamma).add(&f.y_dagger_matrix(dim).scale(self.delta)).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudoBosonReport {
    pub n_max: usize,
    pub c_constant_residual: f64,
    pub cp_constant_residual: f64,
    pub product_residual: f64,
    pub max_residual: f64,
    /// `[C, D] phi_n = phi_n` on the tested span.
    pub holds: bool,
}

pub fn check_pseudoboson_combination(
    f: &FactorizationSpec,
    mix: &CombinationCoeffs,
    n_max: usize,
) -> Result<PseudoBosonReport, FactorError> {
    if f.h != 1 {
        return Err(FactorError::UnsupportedBand(f.h));
    }
    let det = mix.det();
    let (c0, cp0) = (f.c(0), f.cp(0));
    let mut rc = 0.0f64;
    let mut rcp = 0.0f64;
    let mut rprod = 0.0f64;
    for n in 0..=n_max {
        if n > 0 {
            rc = rc.max((f.c(n) - c0).norm());
            rcp = rcp.max((f.cp(n) - cp0).norm());
        }
        let target = C64::new(n as f64, 0.0) / det;
        rprod = rprod.max((f.d(n) * f.dp(n).conj() - target).norm());
    }
    let max_residual = rc.max(rcp).max(rprod);
    Ok(PseudoBosonReport {
        n_max,
        c_constant_residual: rc,
        cp_constant_residual: rcp,
        product_residual: rprod,
        max_residual,
        holds: max_residual <= STRUCTURAL_TOL,
    })
}

/// `H = k_cc C^2 + k_dd D^2 + k_cd C D + k_id 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticForm {
    pub mix: CombinationCoeffs,
    pub cc: C64,
    pub dd: C64,
    pub cd: C64,
    pub id: C64,
}

impl QuadraticForm {
    /// Dense evaluation from truncated `C` and `D`; exact on the interior
    /// window only.
    pub fn assemble(&self, f: &FactorizationSpec, dim: usize) -> DenseMatrix {
        let c = self.mix.c_matrix(f, dim);
        let d = self.mix.d_matrix(f, dim);
        let cc = c.matmul(&c).unwrap().scale(self.cc);
        let dd = d.matmul(&d).unwrap().scale(self.dd);
        let cd = c.matmul(&d).unwrap().scale(self.cd);
        let id = DenseMatrix::identity(dim).scale(self.id);
        cc.add(&dd).unwrap().add(&cd).unwrap().add(&id).unwrap()
    }
}

/// Express `H = Y^dagger X` through the pseudo-bosonic pair `(C, D)`.
pub fn compose_quadratic(
    f: &FactorizationSpec,
    mix: &CombinationCoeffs,
    n_max: usize,
) -> Result<QuadraticForm, FactorError> {
    let report = check_pseudoboson_combination(f, mix, n_max)?;
    if !report.holds {
        return Err(FactorError::NotPseudoBosonic(report.max_residual));
    }
    let CombinationCoeffs { alpha, beta, gamma, delta } = *mix;
    let det2 = mix.det() * mix.det();
    Ok(QuadraticForm {
        mix: *mix,
        cc: -(delta * gamma) / det2,
        dd: -(alpha * beta) / det2,
        cd: (alpha * delta + beta * gamma) / det2,
        id: -(alpha * delta) / det2,
    })
}
