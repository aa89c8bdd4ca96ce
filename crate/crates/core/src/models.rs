//! Concrete models: shifted oscillator, shifted square well, squeezed
//! oscillator (h = 2) and the double translation of the oscillator.
//!
//! Each descriptor bundles the band, a factorization, the SUSY partner band,
//! the known spectrum (if any) and closed-form reference coefficients.

use std::{collections::BTreeMap, fmt, str::FromStr};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{binomial, ln_factorial};
use thiserror::Error;

use crate::{
    band::{BandJson, BandSpec},
    factorization::{compose_band, susy_band, FactorizationJson, FactorizationSpec},
    recurrence::{
        normalize_pair, run_recurrence, EigenPacket, NormalizationRecord, RecurrenceDiagnostics, RecurrenceError,
        RecurrenceOptions, Side,
    },
    seq::{wire, ComplexSeq},
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model '{0}' (valid: shifted_oscillator, shifted_square_well, squeezed, double_translation)")]
    UnknownModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model {0} has no known spectrum")]
    NoSpectrum(ModelName),
    #[error(transparent)]
    Recurrence(#[from] RecurrenceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    ShiftedOscillator,
    ShiftedSquareWell,
    Squeezed,
    DoubleTranslation,
}

impl ModelName {
    pub const ALL: [ModelName; 4] =
        [Self::ShiftedOscillator, Self::ShiftedSquareWell, Self::Squeezed, Self::DoubleTranslation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ShiftedOscillator => "shifted_oscillator",
            Self::ShiftedSquareWell => "shifted_square_well",
            Self::Squeezed => "squeezed",
            Self::DoubleTranslation => "double_translation",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| ModelError::UnknownModel(s.to_owned()))
    }
}

/// A model parameter as it appears in JSON: a bare number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Real(f64),
    Complex([f64; 2]),
}

impl ParamValue {
    pub fn as_complex(self) -> C64 {
        match self {
            Self::Real(x) => C64::new(x, 0.0),
            Self::Complex(p) => wire::from_pair(p),
        }
    }

    pub fn as_real(self) -> Option<f64> {
        match self {
            Self::Real(x) => Some(x),
            Self::Complex([re, im]) if im == 0.0 => Some(re),
            Self::Complex(_) => None,
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Closed-form eigenvector coefficients, unnormalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    /// `H = (a^dagger + beta)(a + alpha)`
    Oscillator { alpha: C64, beta: C64 },
    /// Vacuum only.
    Squeezed { r: f64, theta: f64 },
}

impl Reference {
    /// Coefficients of the `n`-th eigenvector of `H`.
    pub fn phi(&self, n: usize, len: usize) -> Option<Vec<C64>> {
        match *self {
            Self::Oscillator { alpha, beta } => Some(oscillator_level(alpha, beta, n, len)),
            Self::Squeezed { r, theta } => (n == 0).then(|| squeezed_vacuum(r, theta, len)),
        }
    }

    /// Coefficients of the `n`-th eigenvector of `H^dagger`.
    pub fn eta(&self, n: usize, len: usize) -> Option<Vec<C64>> {
        match *self {
            Self::Oscillator { alpha, beta } => Some(oscillator_level(beta.conj(), alpha.conj(), n, len)),
            // The squeezed band is Hermitian.
            Self::Squeezed { .. } => self.phi(n, len),
        }
    }

    /// Scale that makes the reference pair biorthonormal, when known in
    /// closed form (same value on both sides).
    pub fn normalization(&self, n: usize) -> Option<f64> {
        match *self {
            Self::Squeezed { r, .. } if n == 0 => Some((-0.5 * r.cosh().ln()).exp()),
            _ => None,
        }
    }
}

/// `(-alpha)^k / sqrt(k!)`.
pub fn coherent_coefficient(alpha: C64, k: usize) -> C64 {
    if k == 0 {
        return C64::new(1.0, 0.0);
    }
    if alpha == C64::default() {
        return C64::default();
    }
    // modulus and phase separately so that large k cannot overflow
    let modulus = (k as f64 * alpha.norm().ln() - 0.5 * ln_factorial(k as u64)).exp();
    C64::from_polar(modulus, k as f64 * (-alpha).arg())
}

/// Coefficients of `(a^dagger + beta)^n / sqrt(n!)` applied to the coherent
/// state of `a + alpha`:
///
/// ```text
/// c_k = n!^(-1/2) sum_{i <= min(n,k)} C(n,i) beta^(n-i) (-alpha)^(k-i) sqrt(k!) / (k-i)!
/// ```
pub fn oscillator_level(alpha: C64, beta: C64, n: usize, len: usize) -> Vec<C64> {
    let inv_root_nfact = (-0.5 * ln_factorial(n as u64)).exp();
    (0..len)
        .map(|k| {
            let mut sum = C64::default();
            for i in 0..=n.min(k) {
                let weight = binomial(n as u64, i as u64)
                    * (0.5 * ln_factorial(k as u64) - ln_factorial((k - i) as u64)).exp();
                sum += beta.powu((n - i) as u32) * (-alpha).powu((k - i) as u32) * weight;
            }
            sum * inv_root_nfact
        })
        .collect()
}

/// Bi-squeezed vacuum: `p_{2k} = (-e^{i theta} tanh r / 2)^k sqrt((2k)!) / k!`,
/// odd entries zero.
pub fn squeezed_vacuum(r: f64, theta: f64, len: usize) -> Vec<C64> {
    let z = -C64::from_polar(r.tanh() / 2.0, theta);
    (0..len)
        .map(|l| {
            if l % 2 == 1 {
                return C64::default();
            }
            let k = l / 2;
            if k == 0 {
                return C64::new(1.0, 0.0);
            }
            if z.norm() == 0.0 {
                return C64::default();
            }
            let lm = k as f64 * z.norm().ln() + 0.5 * ln_factorial(l as u64) - ln_factorial(k as u64);
            C64::from_polar(lm.exp(), k as f64 * z.arg())
        })
        .collect()
}

/// Bi-squeezed vacuum from the two-term relation of its lowering factor,
/// `p_{k+2} = -e^{i theta} tanh r sqrt((k+1)/(k+2)) p_k`.
pub fn squeezed_two_term(r: f64, theta: f64, len: usize) -> Vec<C64> {
    let z = -C64::from_polar(r.tanh(), theta);
    let mut p = vec![C64::default(); len];
    if len > 0 {
        p[0] = C64::new(1.0, 0.0);
    }
    for k in 0..len.saturating_sub(2) {
        p[k + 2] = z * ((k + 1) as f64 / (k + 2) as f64).sqrt() * p[k];
    }
    p
}

#[derive(Clone, Debug)]
pub struct ModelDescriptor {
    pub name: ModelName,
    pub params: Params,
    pub band: BandSpec,
    pub factors: FactorizationSpec,
    pub susy: BandSpec,
    /// `E_n` when known in closed form.
    pub spectrum: Option<ComplexSeq>,
    /// Eigenvalues of the SUSY partner, `E_n + 1` where it is `H + 1`.
    pub susy_spectrum: Option<ComplexSeq>,
    /// Spectrum of the unshifted operator, recorded as metadata only.
    pub base_spectrum: Option<ComplexSeq>,
    pub reference: Option<Reference>,
    /// Indices where `compose_band(factors)` differs from `band`.
    pub factor_mismatch: Vec<usize>,
    pub derived_from: Option<String>,
    pub notes: Vec<String>,
    oscillator: Option<(C64, C64)>,
    squeeze: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub level: usize,
    pub right: EigenPacket,
    pub left: EigenPacket,
    pub record: NormalizationRecord,
    pub right_diagnostics: RecurrenceDiagnostics,
    pub left_diagnostics: RecurrenceDiagnostics,
}

fn integers() -> ComplexSeq {
    ComplexSeq::labeled("n", |n| C64::new(n as f64, 0.0))
}

fn integers_plus_one() -> ComplexSeq {
    ComplexSeq::labeled("n+1", |n| C64::new(n as f64 + 1.0, 0.0))
}

fn root(n: usize) -> f64 {
    (n as f64).sqrt()
}

pub fn shifted_oscillator(alpha: C64, beta: C64) -> ModelDescriptor {
    let band = BandSpec::new(
        1,
        ComplexSeq::new(move |n| C64::new(n as f64, 0.0) + alpha * beta),
        ComplexSeq::new(move |n| alpha * root(n)),
        ComplexSeq::new(move |n| beta * root(n + 1)),
    )
    .expect("h = 1");
    let factors = FactorizationSpec::new(
        1,
        ComplexSeq::constant(alpha),
        ComplexSeq::constant(beta.conj()),
        ComplexSeq::labeled("sqrt(n)", |n| C64::new(root(n), 0.0)),
        ComplexSeq::labeled("sqrt(n)", |n| C64::new(root(n), 0.0)),
    )
    .expect("h = 1");
    let susy = susy_band(&factors);
    let mut notes = Vec::new();
    if alpha == beta.conj() {
        notes.push("alpha = conj(beta): H is self-adjoint".to_owned());
    }
    ModelDescriptor {
        name: ModelName::ShiftedOscillator,
        params: Params::from([
            ("alpha".to_owned(), ParamValue::Complex(wire::to_pair(alpha))),
            ("beta".to_owned(), ParamValue::Complex(wire::to_pair(beta))),
        ]),
        band,
        factors,
        susy,
        spectrum: Some(integers()),
        susy_spectrum: Some(integers_plus_one()),
        base_spectrum: None,
        reference: Some(Reference::Oscillator { alpha, beta }),
        factor_mismatch: Vec::new(),
        derived_from: None,
        notes,
        oscillator: Some((alpha, beta)),
        squeeze: None,
    }
}

pub fn shifted_square_well(alpha: C64, beta: C64) -> ModelDescriptor {
    let band = BandSpec::new(
        1,
        ComplexSeq::new(move |n| C64::new((n * n) as f64, 0.0) + alpha * beta),
        ComplexSeq::new(move |n| beta * n as f64),
        ComplexSeq::new(move |n| alpha * (n + 1) as f64),
    )
    .expect("h = 1");
    let factors = FactorizationSpec::new(
        1,
        ComplexSeq::constant(beta),
        ComplexSeq::constant(alpha.conj()),
        ComplexSeq::labeled("n", |n| C64::new(n as f64, 0.0)),
        ComplexSeq::labeled("n", |n| C64::new(n as f64, 0.0)),
    )
    .expect("h = 1");
    let susy = susy_band(&factors);
    ModelDescriptor {
        name: ModelName::ShiftedSquareWell,
        params: Params::from([
            ("alpha".to_owned(), ParamValue::Complex(wire::to_pair(alpha))),
            ("beta".to_owned(), ParamValue::Complex(wire::to_pair(beta))),
        ]),
        band,
        factors,
        susy,
        spectrum: None,
        susy_spectrum: None,
        base_spectrum: Some(ComplexSeq::labeled("(n+1)^2", |n| C64::new(((n + 1) * (n + 1)) as f64, 0.0))),
        reference: None,
        factor_mismatch: Vec::new(),
        derived_from: None,
        notes: vec![
            "index-space band only; position-space functions are not modelled".to_owned(),
            "eigenvalues of the shifted operator are not known in closed form".to_owned(),
        ],
        oscillator: None,
        squeeze: None,
    }
}

/// Squeezed oscillator with `h = 2`; requires `r >= 0`.
pub fn squeezed(r: f64, theta: f64) -> Result<ModelDescriptor, ModelError> {
    if !(r >= 0.0) || !r.is_finite() || !theta.is_finite() {
        return Err(ModelError::InvalidParameter(format!("squeezing r must be finite and >= 0, got {r}")));
    }
    let (ch, sh) = (r.cosh(), r.sinh());
    let lambda = C64::from_polar(ch * sh, -theta);
    let mu = (2.0 * r).cosh();
    let band = BandSpec::new(
        2,
        ComplexSeq::new(move |n| C64::new(n as f64 * mu + sh * sh, 0.0)),
        ComplexSeq::new(move |n| lambda.conj() * ((n * n.saturating_sub(1)) as f64).sqrt()),
        ComplexSeq::new(move |n| lambda * (((n + 1) * (n + 2)) as f64).sqrt()),
    )
    .expect("h = 2");
    let c = ComplexSeq::new(move |n| C64::new(root(n + 1) * sh, 0.0));
    let d = ComplexSeq::new(move |n| C64::from_polar(root(n) * ch, -theta));
    let factors = FactorizationSpec::new(2, c.clone(), c, d.clone(), d).expect("h = 2");
    let susy = band.plus_identity(C64::new(1.0, 0.0));
    let factor_mismatch = mismatch_indices(&compose_band(&factors), &band, 64);
    Ok(ModelDescriptor {
        name: ModelName::Squeezed,
        params: Params::from([
            ("r".to_owned(), ParamValue::Real(r)),
            ("theta".to_owned(), ParamValue::Real(theta)),
        ]),
        band,
        factors,
        susy,
        spectrum: Some(integers()),
        susy_spectrum: Some(integers_plus_one()),
        base_spectrum: None,
        reference: Some(Reference::Squeezed { r, theta }),
        factor_mismatch,
        derived_from: None,
        notes: vec![
            "d_1 is forced to zero (h = 2), so the factor product misses cosh^2 r in a_1".to_owned(),
            "SUSY band is the pseudo-bosonic partner A B = H + 1".to_owned(),
        ],
        oscillator: None,
        squeeze: Some(r),
    })
}

/// The oscillator shifted twice, which is the oscillator at
/// `(alpha + gamma, beta + delta)`.
pub fn double_translation(alpha: C64, beta: C64, gamma: C64, delta: C64) -> ModelDescriptor {
    let mut m = shifted_oscillator(alpha + gamma, beta + delta);
    m.name = ModelName::DoubleTranslation;
    m.params = Params::from([
        ("alpha".to_owned(), ParamValue::Complex(wire::to_pair(alpha))),
        ("beta".to_owned(), ParamValue::Complex(wire::to_pair(beta))),
        ("gamma".to_owned(), ParamValue::Complex(wire::to_pair(gamma))),
        ("delta".to_owned(), ParamValue::Complex(wire::to_pair(delta))),
    ]);
    m.derived_from = Some("shifted oscillator with (alpha, beta) replaced by (alpha + gamma, beta + delta)".to_owned());
    if alpha + gamma == C64::default() && beta + delta == C64::default() {
        m.notes.push("translations cancel: unshifted, self-adjoint oscillator".to_owned());
    }
    m
}

fn mismatch_indices(x: &BandSpec, y: &BandSpec, upto: usize) -> Vec<usize> {
    let tol = crate::band::STRUCTURAL_TOL;
    (0..=upto)
        .filter(|&n| {
            let close = |a: C64, b: C64| (a - b).norm() <= tol * (1.0 + b.norm());
            !(close(x.a(n), y.a(n)) && close(x.b(n), y.b(n)) && close(x.bp(n), y.bp(n)))
        })
        .collect()
}

fn complex_param(params: &Params, key: &str, default: C64) -> C64 {
    params.get(key).map_or(default, |v| v.as_complex())
}

fn real_param(params: &Params, key: &str, default: f64) -> Result<f64, ModelError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_real().ok_or_else(|| ModelError::InvalidParameter(format!("{key} must be real"))),
    }
}

/// Build a model by name. Missing parameters default to zero.
pub fn build_model(name: &str, params: &Params) -> Result<ModelDescriptor, ModelError> {
    let zero = C64::default();
    let model: ModelName = name.parse()?;
    let allowed: &[&str] = match model {
        ModelName::ShiftedOscillator | ModelName::ShiftedSquareWell => &["alpha", "beta"],
        ModelName::Squeezed => &["r", "theta"],
        ModelName::DoubleTranslation => &["alpha", "beta", "gamma", "delta"],
    };
    if let Some(extra) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(ModelError::InvalidParameter(format!("{model} takes no parameter '{extra}'")));
    }
    let p = |k| complex_param(params, k, zero);
    Ok(match model {
        ModelName::ShiftedOscillator => shifted_oscillator(p("alpha"), p("beta")),
        ModelName::ShiftedSquareWell => shifted_square_well(p("alpha"), p("beta")),
        ModelName::Squeezed => squeezed(real_param(params, "r", 0.0)?, real_param(params, "theta", 0.0)?)?,
        ModelName::DoubleTranslation => double_translation(p("alpha"), p("beta"), p("gamma"), p("delta")),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceFlags {
    pub phi: bool,
    pub eta: bool,
    pub excited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelDescription {
    pub name: ModelName,
    pub params: Params,
    pub h: usize,
    pub band: BandJson,
    pub factors: FactorizationJson,
    pub susy_band: BandJson,
    pub spectrum_available: bool,
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_complex_vec")]
    pub spectrum: Option<Vec<C64>>,
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_complex_vec")]
    pub base_spectrum: Option<Vec<C64>>,
    pub reference: ReferenceFlags,
    pub factor_mismatch: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<String>,
    pub notes: Vec<String>,
}

mod opt_complex_vec {
    use num_complex::Complex64 as C64;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &Option<Vec<C64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => crate::seq::wire::complex_vec::serialize(v, s),
            None => s.serialize_none(),
        }
    }
}

impl ModelDescriptor {
    pub fn h(&self) -> usize {
        self.band.h()
    }

    pub fn energy(&self, level: usize) -> Option<C64> {
        self.spectrum.as_ref().map(|s| s.at(level))
    }

    pub fn susy_energy(&self, level: usize) -> Option<C64> {
        self.susy_spectrum.as_ref().map(|s| s.at(level))
    }

    /// Index at which the level-`n` vector on `side` is seeded with 1.
    ///
    /// Triangular bands (a vanishing shift parameter) have eigenvectors
    /// starting at index `n`; the squeezed levels live on the parity chain
    /// of `n`.
    pub fn seed_for_level(&self, level: usize, side: Side) -> usize {
        if let Some((alpha, beta)) = self.oscillator {
            let cut = if side.is_left() { alpha } else { beta };
            return if cut == C64::default() { level } else { 0 };
        }
        match self.squeeze {
            Some(r) if r == 0.0 => level,
            Some(_) => level % 2,
            None => 0,
        }
    }

    /// Recurrence run for one level and side (`H`, `H^dagger` or their SUSY
    /// partners) at the known eigenvalue.
    pub fn eigenvector(
        &self,
        level: usize,
        n: usize,
        side: Side,
        opts: &RecurrenceOptions,
    ) -> Result<(EigenPacket, RecurrenceDiagnostics), ModelError> {
        let (band, e) = match side {
            Side::H | Side::HDagger => (&self.band, self.energy(level)),
            Side::Susy | Side::SusyDagger => (&self.susy, self.susy_energy(level)),
        };
        let e = e.ok_or(ModelError::NoSpectrum(self.name))?;
        let opts = RecurrenceOptions { seed: self.seed_for_level(level, side), ..*opts };
        let out = run_recurrence(band, e, n, side, &opts)?;
        Ok((out.packet, out.diagnostics))
    }

    /// Biorthonormalized right/left pair for one level.
    pub fn eigenpair(&self, level: usize, n: usize, tol: f64) -> Result<EigenPair, ModelError> {
        let opts = RecurrenceOptions::default();
        let (r, rd) = self.eigenvector(level, n, Side::H, &opts)?;
        let (l, ld) = self.eigenvector(level, n, Side::HDagger, &opts)?;
        let (right, left, record) = normalize_pair(&r, &l, tol)?;
        Ok(EigenPair { level, right, left, record, right_diagnostics: rd, left_diagnostics: ld })
    }

    pub fn describe(&self, n_terms: usize) -> ModelDescription {
        let reference = match self.reference {
            Some(Reference::Oscillator { .. }) => ReferenceFlags { phi: true, eta: true, excited: true },
            Some(Reference::Squeezed { .. }) => ReferenceFlags { phi: true, eta: true, excited: false },
            None => ReferenceFlags { phi: false, eta: false, excited: false },
        };
        ModelDescription {
            name: self.name,
            params: self.params.clone(),
            h: self.h(),
            band: self.band.to_json(n_terms),
            factors: self.factors.to_json(n_terms),
            susy_band: self.susy.to_json(n_terms),
            spectrum_available: self.spectrum.is_some(),
            spectrum: self.spectrum.as_ref().map(|s| s.take(n_terms)),
            base_spectrum: self.base_spectrum.as_ref().map(|s| s.take(n_terms)),
            reference,
            factor_mismatch: self.factor_mismatch.clone(),
            derived_from: self.derived_from.clone(),
            notes: self.notes.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::{run_recurrence_left, run_recurrence_right};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn oscillator_band_values() {
        let m = shifted_oscillator(c(1.0, 0.0), c(1.0, 0.0));
        assert_eq!(m.band.a_seq().take(3), vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(m.band.b(0), C64::default());
        assert_eq!(m.band.b(2), c(2f64.sqrt(), 0.0));
        assert_eq!(m.band.bp(2), c(3f64.sqrt(), 0.0));
        let m = shifted_oscillator(c(0.7, 0.2), c(0.3, -0.1));
        assert!((m.band.a(0) - c(0.23, -0.01)).norm() < 1e-15);
    }

    #[test]
    fn unshifted_oscillator_is_diagonal_with_basis_vectors() {
        let m = shifted_oscillator(C64::default(), C64::default());
        for n in 0..5 {
            let phi = m.reference.unwrap().phi(n, 8).unwrap();
            for (k, z) in phi.iter().enumerate() {
                let expect = if k == n { 1.0 } else { 0.0 };
                assert!((z - expect).norm() < 1e-14);
            }
            let (p, _) = m.eigenvector(n, 8, Side::H, &RecurrenceOptions::default()).unwrap();
            assert_eq!(p.seed(), n);
            assert_eq!(p.p()[n], c(1.0, 0.0));
            assert_eq!(p.p().iter().filter(|z| z.norm() != 0.0).count(), 1);
        }
    }

    #[test]
    fn square_well_values() {
        let m = shifted_square_well(c(1.0, 0.0), c(2.0, 0.0));
        assert_eq!(m.band.a_seq().take(4), vec![c(2.0, 0.0), c(3.0, 0.0), c(6.0, 0.0), c(11.0, 0.0)]);
        assert_eq!(m.band.b(1), c(2.0, 0.0));
        assert_eq!(m.band.bp(2), c(3.0, 0.0));
        assert_eq!(m.susy.a_seq().take(3), vec![c(3.0, 0.0), c(6.0, 0.0), c(11.0, 0.0)]);
        assert!(m.spectrum.is_none());
        assert!(matches!(
            m.eigenvector(0, 10, Side::H, &RecurrenceOptions::default()),
            Err(ModelError::NoSpectrum(ModelName::ShiftedSquareWell))
        ));
        let m = shifted_square_well(c(0.0, 1.0), c(0.0, -1.0));
        assert_eq!(m.band.a(3), c(10.0, 0.0));
        assert_eq!(m.band.b(3), c(0.0, -3.0));
    }

    #[test]
    fn square_well_susy_diagonal_is_exact() {
        let (al, be) = (c(0.3, -0.7), c(-1.1, 0.4));
        let m = shifted_square_well(al, be);
        for n in 0..64 {
            let expect = C64::new(((n + 1) * (n + 1)) as f64, 0.0) + al * be;
            assert_eq!(m.susy.a(n), expect);
            assert_eq!(m.susy.b(n), m.band.b(n));
            assert_eq!(m.susy.bp(n), m.band.bp(n));
        }
    }

    #[test]
    fn squeezed_values() {
        let r = 0.5f64.atanh();
        let m = squeezed(r, 0.0).unwrap();
        assert!(((2.0 * r).cosh() - 5.0 / 3.0).abs() < 1e-14);
        assert!((m.band.a(1) - c(2.0, 0.0)).norm() < 1e-14);
        let m = squeezed(r, std::f64::consts::FRAC_PI_2).unwrap();
        let expect = c(0.0, -r.sinh() * r.cosh()) * 2f64.sqrt();
        assert!((m.band.bp(0) - expect).norm() < 1e-15);
        assert!(matches!(squeezed(-0.1, 0.0), Err(ModelError::InvalidParameter(_))));
    }

    #[test]
    fn unsqueezed_is_diagonal_with_basis_vacuum() {
        let m = squeezed(0.0, 0.3).unwrap();
        for n in 0..10 {
            assert_eq!(m.band.a(n), c(n as f64, 0.0));
            assert_eq!(m.band.bp(n), C64::default());
        }
        let (p, _) = m.eigenvector(0, 12, Side::H, &RecurrenceOptions::default()).unwrap();
        let mut e0 = vec![C64::default(); 12];
        e0[0] = c(1.0, 0.0);
        assert_eq!(p.p(), &e0[..]);
    }

    #[test]
    fn factors_reproduce_bands() {
        let models = [
            shifted_oscillator(c(0.7, 0.2), c(0.3, -0.1)),
            shifted_square_well(c(1.0, 0.5), c(-0.4, 0.2)),
            squeezed(0.4, 1.1).unwrap(),
            double_translation(c(0.2, 0.1), c(0.5, 0.0), c(-0.3, 0.0), c(0.1, 0.2)),
        ];
        for m in &models {
            let composed = compose_band(&m.factors);
            for n in 0..=64 {
                if m.factor_mismatch.contains(&n) {
                    continue;
                }
                let scale = 1.0 + m.band.a(n).norm();
                assert!((composed.a(n) - m.band.a(n)).norm() <= 1e-12 * scale, "{} a_{n}", m.name);
                assert!((composed.b(n) - m.band.b(n)).norm() <= 1e-12 * scale, "{} b_{n}", m.name);
                assert!((composed.bp(n) - m.band.bp(n)).norm() <= 1e-12 * scale, "{} b'_{n}", m.name);
            }
        }
        assert_eq!(models[2].factor_mismatch, vec![1]);
        let r = 0.4f64;
        let short = m_a1(&models[2]) - compose_band(&models[2].factors).a(1);
        assert!((short - r.cosh().powi(2)).norm() < 1e-14);
    }

    fn m_a1(m: &ModelDescriptor) -> C64 {
        m.band.a(1)
    }

    #[test]
    fn double_translation_examples() {
        let one = c(1.0, 0.0);
        let m = double_translation(one, one, -one, -one);
        for n in 0..10 {
            assert_eq!(m.band.a(n), c(n as f64, 0.0));
            assert_eq!(m.band.b(n), C64::default());
        }
        assert!(m.derived_from.is_some());
        let m = double_translation(one, C64::default(), C64::default(), one);
        let o = shifted_oscillator(one, one);
        for n in 0..10 {
            assert_eq!((m.band.a(n), m.band.b(n), m.band.bp(n)), (o.band.a(n), o.band.b(n), o.band.bp(n)));
        }
    }

    #[test]
    fn closed_forms_agree() {
        let (r, theta) = (0.6f64, 0.9f64);
        let a = squeezed_vacuum(r, theta, 41);
        let b = squeezed_two_term(r, theta, 41);
        for k in 0..41 {
            if k % 2 == 1 {
                assert_eq!(a[k], C64::default());
                assert_eq!(b[k], C64::default());
            } else {
                assert!(rel(b[k], a[k]) < 1e-13);
            }
        }
        // level 0 of the oscillator reference is the coherent state
        let (al, be) = (c(0.7, 0.2), c(0.3, -0.1));
        let phi = oscillator_level(al, be, 0, 30);
        for k in 0..30 {
            assert!(rel(phi[k], coherent_coefficient(al, k)) < 1e-13);
        }
    }

    #[test]
    fn excited_reference_matches_recurrence() {
        let (al, be) = (c(0.7, 0.2), c(0.3, -0.1));
        let m = shifted_oscillator(al, be);
        for n in 0..=4 {
            let phi = m.reference.unwrap().phi(n, 41).unwrap();
            let p = run_recurrence_right(&m.band, c(n as f64, 0.0), 120).unwrap();
            for k in 0..=40 {
                assert!(rel(p.p()[k] * phi[0], phi[k]) < 1e-10, "n={n} k={k}");
            }
            let eta = m.reference.unwrap().eta(n, 41).unwrap();
            let q = run_recurrence_left(&m.band, c(n as f64, 0.0), 120).unwrap();
            for k in 0..=40 {
                assert!(rel(q.p()[k] * eta[0], eta[k]) < 1e-10, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        let params: Params = serde_json::from_str(r#"{"alpha":[1,0],"beta":0.5}"#).unwrap();
        let m = build_model("shifted_oscillator", &params).unwrap();
        assert_eq!(m.band.bp(0), c(0.5, 0.0));
        assert!(matches!(build_model("nope", &params), Err(ModelError::UnknownModel(_))));
        assert!(matches!(build_model("squeezed", &params), Err(ModelError::InvalidParameter(_))));
        let sq: Params = serde_json::from_str(r#"{"r":[0.2,0.1]}"#).unwrap();
        assert!(matches!(build_model("squeezed", &sq), Err(ModelError::InvalidParameter(_))));
    }

    #[test]
    fn describe_lists_band_and_flags() {
        let d = shifted_oscillator(c(1.0, 0.0), c(1.0, 0.0)).describe(8);
        let js = serde_json::to_value(&d).unwrap();
        assert_eq!(js["name"], "shifted_oscillator");
        assert_eq!(js["band"]["a"][7], serde_json::json!([8.0, 0.0]));
        assert_eq!(js["spectrum_available"], true);
        assert!(js.get("base_spectrum").is_none());
        let w = shifted_square_well(c(1.0, 0.0), c(2.0, 0.0)).describe(4);
        assert_eq!(serde_json::to_value(&w).unwrap()["spectrum_available"], false);
    }

    #[test]
    fn seeds_follow_triangular_structure() {
        let m = shifted_oscillator(c(0.5, 0.0), C64::default());
        assert_eq!(m.seed_for_level(3, Side::H), 3);
        assert_eq!(m.seed_for_level(3, Side::HDagger), 0);
        let s = squeezed(0.3, 0.0).unwrap();
        assert_eq!(s.seed_for_level(3, Side::H), 1);
        assert_eq!(s.seed_for_level(4, Side::HDagger), 0);
    }
}
