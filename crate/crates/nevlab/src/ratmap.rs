//! Rational maps `z ↦ a0 + a1·z + Σ c/(z−p)^k` with `k ∈ {1, 2}`.
//!
//! This is the common carrier for needles, hedgehog and tree maps and the
//! snake map. Evaluation and differentiation are closed form; poles are kept
//! in construction order so callers can audit which block contributed what.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Complex = Complex64;

/// Relative guard radius around poles: `|z−p| < GUARD·(1+|p|)` is refused.
pub const DEFAULT_GUARD: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("evaluation point {z} lies within the guard radius of pole {pole}")]
    PoleProximity { z: Complex, pole: Complex },
    #[error("pole {pole} lies in the closed unit disc")]
    InvalidPole { pole: Complex },
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleTerm {
    pub coeff: Complex,
    pub pole: Complex,
    pub order: u8,
}

impl PoleTerm {
    pub fn new(coeff: Complex, pole: Complex, order: u8) -> Result<Self, MapError> {
        if order != 1 && order != 2 {
            return Err(MapError::InvalidTerm(format!("order {order} not in {{1,2}}")));
        }
        if !finite(coeff) || !finite(pole) {
            return Err(MapError::InvalidTerm("non-finite coefficient or pole".into()));
        }
        if coeff == Complex::new(0.0, 0.0) {
            return Err(MapError::InvalidTerm("zero coefficient".into()));
        }
        Ok(Self { coeff, pole, order })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalMap {
    pub affine0: Complex,
    pub affine1: Complex,
    pub terms: Vec<PoleTerm>,
    guard: f64,
}

fn finite(z: Complex) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// `1/d` without the intermediate `|d|²` (which overflows for `|d| > 1e154`).
pub fn recip(d: Complex) -> Complex {
    if d.re.abs() >= d.im.abs() {
        let r = d.im / d.re;
        let den = d.re + d.im * r;
        Complex::new(1.0 / den, -r / den)
    } else {
        let r = d.re / d.im;
        let den = d.re * r + d.im;
        Complex::new(r / den, -1.0 / den)
    }
}

impl Default for RationalMap {
    fn default() -> Self {
        Self::affine(Complex::new(0.0, 0.0), Complex::new(0.0, 0.0))
    }
}

impl RationalMap {
    pub fn affine(affine0: Complex, affine1: Complex) -> Self {
        Self { affine0, affine1, terms: Vec::new(), guard: DEFAULT_GUARD }
    }

    pub fn identity() -> Self {
        Self::affine(Complex::new(0.0, 0.0), Complex::new(1.0, 0.0))
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn push(&mut self, coeff: Complex, pole: Complex, order: u8) -> Result<(), MapError> {
        self.terms.push(PoleTerm::new(coeff, pole, order)?);
        Ok(())
    }

    /// Number of poles counted with order (terms are not merged here).
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.order as usize).sum()
    }

    /// Degree after merging equal poles: each distinct pole counts with its
    /// maximal order.
    pub fn distinct_degree(&self) -> usize {
        let mut seen: Vec<(Complex, u8)> = Vec::new();
        for t in &self.terms {
            match seen.iter_mut().find(|(p, _)| *p == t.pole) {
                Some((_, k)) => *k = (*k).max(t.order),
                None => seen.push((t.pole, t.order)),
            }
        }
        seen.iter().map(|&(_, k)| k as usize).sum()
    }

    fn check_guard(&self, z: Complex) -> Result<(), MapError> {
        for t in &self.terms {
            if (z - t.pole).norm() < self.guard * (1.0 + t.pole.norm()) {
                return Err(MapError::PoleProximity { z, pole: t.pole });
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: Complex) -> Result<Complex, MapError> {
        self.check_guard(z)?;
        let mut acc = self.affine0 + self.affine1 * z;
        for t in &self.terms {
            let r = recip(z - t.pole);
            acc += match t.order {
                1 => t.coeff * r,
                _ => t.coeff * r * r,
            };
        }
        Ok(acc)
    }

    pub fn deriv(&self, z: Complex) -> Result<Complex, MapError> {
        self.check_guard(z)?;
        let mut acc = self.affine1;
        for t in &self.terms {
            let r = recip(z - t.pole);
            acc -= match t.order {
                1 => t.coeff * r * r,
                _ => 2.0 * t.coeff * r * r * r,
            };
        }
        Ok(acc)
    }

    /// Value and derivative in one pass.
    pub fn eval_with_deriv(&self, z: Complex) -> Result<(Complex, Complex), MapError> {
        self.check_guard(z)?;
        let mut v = self.affine0 + self.affine1 * z;
        let mut dv = self.affine1;
        for t in &self.terms {
            let r = recip(z - t.pole);
            if t.order == 1 {
                v += t.coeff * r;
                dv -= t.coeff * r * r;
            } else {
                let r2 = r * r;
                v += t.coeff * r2;
                dv -= 2.0 * t.coeff * r2 * r;
            }
        }
        Ok((v, dv))
    }

    /// Term-wise concatenation: the result evaluates to `self + other`.
    pub fn concat(&self, other: &RationalMap) -> RationalMap {
        let mut out = self.clone();
        out.affine0 += other.affine0;
        out.affine1 += other.affine1;
        out.terms.extend_from_slice(&other.terms);
        out
    }

    /// Add `s·other` in place, returning the index range of the new terms.
    pub fn add_scaled(&mut self, other: &RationalMap, s: Complex) -> std::ops::Range<usize> {
        let start = self.terms.len();
        self.affine0 += s * other.affine0;
        self.affine1 += s * other.affine1;
        for t in &other.terms {
            self.terms.push(PoleTerm { coeff: s * t.coeff, ..*t });
        }
        start..self.terms.len()
    }

    pub fn scaled(&self, s: Complex) -> RationalMap {
        let mut out = RationalMap::default().with_guard(self.guard);
        out.add_scaled(self, s);
        out
    }

    /// Merge terms sharing pole and order (coefficients are summed).
    pub fn normalize(&self) -> RationalMap {
        let mut out = RationalMap::affine(self.affine0, self.affine1).with_guard(self.guard);
        for t in &self.terms {
            match out.terms.iter_mut().find(|u| u.pole == t.pole && u.order == t.order) {
                Some(u) => u.coeff += t.coeff,
                None => out.terms.push(*t),
            }
        }
        out.terms.retain(|t| t.coeff != Complex::new(0.0, 0.0));
        out
    }

    /// The map `z ↦ self(z·e^{−iθ} − 1)`.
    ///
    /// A pole `p` moves to `(p+1)e^{iθ}`; an order-k coefficient picks up
    /// `e^{ikθ}` from `(z e^{−iθ} − 1 − p)^k = e^{−ikθ}(z − q)^k`.
    pub fn precompose_rotation_shift(&self, theta: f64) -> Result<RationalMap, MapError> {
        let rot = Complex::from_polar(1.0, theta);
        let mut out = RationalMap::affine(self.affine0 - self.affine1, self.affine1 * rot.conj())
            .with_guard(self.guard);
        for t in &self.terms {
            let q = (t.pole + 1.0) * rot;
            if q.norm() <= 1.0 {
                return Err(MapError::InvalidPole { pole: q });
            }
            let c = if t.order == 1 { t.coeff * rot } else { t.coeff * rot * rot };
            out.terms.push(PoleTerm { coeff: c, pole: q, order: t.order });
        }
        Ok(out)
    }

    /// Σ over distinct poles of `|p| − 1`.
    pub fn blaschke_deficit(&self) -> Result<f64, MapError> {
        let mut seen: Vec<Complex> = Vec::new();
        let mut sum = 0.0;
        for t in &self.terms {
            if t.pole.norm() <= 1.0 {
                return Err(MapError::InvalidPole { pole: t.pole });
            }
            if !seen.contains(&t.pole) {
                seen.push(t.pole);
                sum += t.pole.norm() - 1.0;
            }
        }
        Ok(sum)
    }

    pub fn min_pole_modulus(&self) -> Option<f64> {
        self.terms.iter().map(|t| t.pole.norm()).min_by(|a, b| a.total_cmp(b))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Wire::from(self)).expect("finite map serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&Wire::from(self)).expect("finite map serializes")
    }

    pub fn from_json(s: &str) -> Result<RationalMap, MapError> {
        let w: Wire = serde_json::from_str(s).map_err(|e| MapError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        w.into_map()
    }
}

impl Serialize for RationalMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Wire::deserialize(d)?.into_map().map_err(serde::de::Error::custom)
    }
}

// On-disk layout: field order is affine, terms; each term coeff, pole, order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    affine: [[f64; 2]; 2],
    terms: Vec<WireTerm>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTerm {
    coeff: [f64; 2],
    pole: [f64; 2],
    order: u8,
}

fn pair(z: Complex) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(p: [f64; 2]) -> Complex {
    Complex::new(p[0], p[1])
}

impl From<&RationalMap> for Wire {
    fn from(m: &RationalMap) -> Self {
        Wire {
            affine: [pair(m.affine0), pair(m.affine1)],
            terms: m
                .terms
                .iter()
                .map(|t| WireTerm { coeff: pair(t.coeff), pole: pair(t.pole), order: t.order })
                .collect(),
        }
    }
}

impl Wire {
    fn into_map(self) -> Result<RationalMap, MapError> {
        let mut m = RationalMap::affine(unpair(self.affine[0]), unpair(self.affine[1]));
        for t in self.terms {
            m.push(unpair(t.coeff), unpair(t.pole), t.order)?;
        }
        Ok(m)
    }
}
