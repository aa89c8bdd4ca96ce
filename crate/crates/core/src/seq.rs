//! Lazily evaluated complex coefficient sequences.

use std::{fmt, sync::Arc};

use num_complex::Complex64 as C64;

type Evaluator = dyn Fn(usize) -> C64 + Send + Sync;

/// A total function from a basis index to a complex coefficient.
///
/// Sequences are cheap to clone (the evaluator is shared) and are never
/// materialized unless a caller asks for a finite prefix with [`Self::take`].
#[derive(Clone)]
pub struct ComplexSeq {
    eval: Arc<Evaluator>,
    label: Option<String>,
}

impl ComplexSeq {
    pub fn new<F>(f: F) -> Self
    where F: Fn(usize) -> C64 + Send + Sync + 'static
    {
        Self { eval: Arc::new(f), label: None }
    }

    pub fn labeled<F>(label: impl Into<String>, f: F) -> Self
    where F: Fn(usize) -> C64 + Send + Sync + 'static
    {
        Self { eval: Arc::new(f), label: Some(label.into()) }
    }

    pub fn zero() -> Self {
        Self::labeled("0", |_| C64::new(0.0, 0.0))
    }

    pub fn constant(z: C64) -> Self {
        Self::labeled(format!("{}{:+}i", z.re, z.im), move |_| z)
    }

    /// A finite table, extended by zero beyond its end.
    pub fn from_values(values: Vec<C64>) -> Self {
        let label = format!("tabulated[{}]", values.len());
        Self::labeled(label, move |n| values.get(n).copied().unwrap_or_default())
    }

    /// Same as `self` but forced to zero on indices `< lo`.
    pub fn masked_below(&self, lo: usize) -> Self {
        if lo == 0 {
            return self.clone();
        }
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |n| if n < lo { C64::default() } else { inner(n) }),
            label: self.label.clone(),
        }
    }

    #[inline]
    pub fn at(&self, n: usize) -> C64 {
        (self.eval)(n)
    }

    /// Value at a possibly negative index; negative indices are zero.
    #[inline]
    pub fn at_signed(&self, n: i64) -> C64 {
        if n < 0 { C64::default() } else { self.at(n as usize) }
    }

    pub fn take(&self, len: usize) -> Vec<C64> {
        (0..len).map(|n| self.at(n)).collect()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn map<F>(&self, f: F) -> Self
    where F: Fn(usize, C64) -> C64 + Send + Sync + 'static
    {
        let inner = self.eval.clone();
        Self { eval: Arc::new(move |n| f(n, inner(n))), label: None }
    }
}

impl fmt::Debug for ComplexSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<C64> = self.take(4);
        f.debug_struct("ComplexSeq")
            .field("label", &self.label)
            .field("head", &head)
            .finish()
    }
}

/// Serde adapters for the `[re, im]` wire format used by every file
/// produced by this crate.
pub mod wire {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_pair(z: C64) -> [f64; 2] {
        [z.re, z.im]
    }

    pub fn from_pair(p: [f64; 2]) -> C64 {
        C64::new(p[0], p[1])
    }

    pub mod complex {
        use super::*;

        pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
            to_pair(*z).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
            <[f64; 2]>::deserialize(d).map(from_pair)
        }
    }

    pub mod complex_vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
            let pairs: Vec<[f64; 2]> = v.iter().map(|z| to_pair(*z)).collect();
            pairs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
            let pairs = Vec::<[f64; 2]>::deserialize(d)?;
            Ok(pairs.into_iter().map(from_pair).collect())
        }
    }
}
