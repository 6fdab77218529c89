//! Truncated formal power-series arithmetic over complex coefficients.
//!
//! Two carriers are provided: [`TruncatedSeries`], a trivariate series in
//! `(x, y1, y2)` with separate truncation bounds in the `x`-degree and the
//! total `y`-degree, and [`UniSeries`], a dense univariate series used for
//! coefficient recursions (series in `x`, in the resonant monomial
//! `v = y1*y2`, or in the Borel variable `t`).
//!
//! All operations are exact on retained monomials: the coefficient of any
//! monomial within the truncation bounds equals the mathematically exact
//! value given exact inputs.

use num_complex::Complex;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Scalar width hook: swap this alias (and rebuild) for a wider float type.
pub type Scalar = f64;
/// Complex coefficient type used throughout the crate.
pub type C = Complex<Scalar>;

/// Shorthand for a real-valued complex constant.
pub fn cr(re: Scalar) -> C {
    C::new(re, 0.0)
}

/// Shorthand for a general complex constant.
pub fn cc(re: Scalar, im: Scalar) -> C {
    C::new(re, im)
}

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("substituted map has a nonzero constant term; truncation grading would break")]
    NonzeroConstantTerm,
    #[error("series is not a unit (vanishing constant term)")]
    NotAUnit,
    #[error("series is not divisible by x^{0}")]
    NotDivisible(u32),
}

/// Exponent triple `(k0, k1, k2)` for the monomial `x^k0 y1^k1 y2^k2`.
pub type Exponent = (u32, u32, u32);

/// Trivariate truncated formal power series in `(x, y1, y2)`.
///
/// Invariants: every stored exponent satisfies `k0 <= trunc_x` and
/// `k1 + k2 <= trunc_y`; exact zeros are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    terms: BTreeMap<Exponent, C>,
    trunc_x: u32,
    trunc_y: u32,
}

impl TruncatedSeries {
    pub fn zero(trunc_x: u32, trunc_y: u32) -> Self {
        TruncatedSeries { terms: BTreeMap::new(), trunc_x, trunc_y }
    }

    pub fn constant(c: C, trunc_x: u32, trunc_y: u32) -> Self {
        let mut s = Self::zero(trunc_x, trunc_y);
        s.add_term((0, 0, 0), c);
        s
    }

    pub fn monomial(k: Exponent, c: C, trunc_x: u32, trunc_y: u32) -> Self {
        let mut s = Self::zero(trunc_x, trunc_y);
        s.add_term(k, c);
        s
    }

    pub fn var_x(trunc_x: u32, trunc_y: u32) -> Self {
        Self::monomial((1, 0, 0), cr(1.0), trunc_x, trunc_y)
    }

    pub fn var_y1(trunc_x: u32, trunc_y: u32) -> Self {
        Self::monomial((0, 1, 0), cr(1.0), trunc_x, trunc_y)
    }

    pub fn var_y2(trunc_x: u32, trunc_y: u32) -> Self {
        Self::monomial((0, 0, 1), cr(1.0), trunc_x, trunc_y)
    }

    pub fn trunc_x(&self) -> u32 {
        self.trunc_x
    }

    pub fn trunc_y(&self) -> u32 {
        self.trunc_y
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &C)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn in_bounds(&self, k: Exponent) -> bool {
        k.0 <= self.trunc_x && k.1 + k.2 <= self.trunc_y
    }

    pub fn coeff(&self, k: Exponent) -> C {
        self.terms.get(&k).copied().unwrap_or_else(|| cr(0.0))
    }

    /// Adds `c` to the coefficient of `k`, dropping out-of-bounds terms.
    pub fn add_term(&mut self, k: Exponent, c: C) {
        if !self.in_bounds(k) || c == cr(0.0) {
            return;
        }
        let entry = self.terms.entry(k).or_insert_with(|| cr(0.0));
        *entry += c;
        if *entry == cr(0.0) {
            self.terms.remove(&k);
        }
    }

    pub fn set_coeff(&mut self, k: Exponent, c: C) {
        if !self.in_bounds(k) {
            return;
        }
        if c == cr(0.0) {
            self.terms.remove(&k);
        } else {
            self.terms.insert(k, c);
        }
    }

    /// Removes coefficients of magnitude below `eps`.
    pub fn prune(&mut self, eps: Scalar) {
        self.terms.retain(|_, c| c.norm() >= eps);
    }

    /// Restricts the truncation bounds, dropping newly out-of-range terms.
    pub fn truncate_to(&self, trunc_x: u32, trunc_y: u32) -> Self {
        let mut out = Self::zero(trunc_x, trunc_y);
        for (&k, &c) in &self.terms {
            out.add_term(k, c);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.trunc_x.min(other.trunc_x), self.trunc_y.min(other.trunc_y));
        for (&k, &c) in &self.terms {
            out.add_term(k, c);
        }
        for (&k, &c) in &other.terms {
            out.add_term(k, c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, c: C) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        if c == cr(0.0) {
            return out;
        }
        for (&k, &v) in &self.terms {
            out.add_term(k, v * c);
        }
        out
    }

    /// Cauchy product truncated to the min of each bound.
    pub fn mul(&self, other: &Self) -> Self {
        let tx = self.trunc_x.min(other.trunc_x);
        let ty = self.trunc_y.min(other.trunc_y);
        // Dense accumulator: exponents are small, so a flat array beats map
        // insertions by a wide margin in the jet recursions.
        let sx = (tx + 1) as usize;
        let sy = (ty + 1) as usize;
        let mut acc = vec![cr(0.0); sx * sy * sy];
        for (&ka, &ca) in &self.terms {
            if ka.0 > tx || ka.1 + ka.2 > ty {
                continue;
            }
            for (&kb, &cb) in &other.terms {
                let (k0, k1, k2) = (ka.0 + kb.0, ka.1 + kb.1, ka.2 + kb.2);
                if k0 > tx || k1 + k2 > ty {
                    continue;
                }
                acc[(k0 as usize * sy + k1 as usize) * sy + k2 as usize] += ca * cb;
            }
        }
        let mut out = Self::zero(tx, ty);
        for (idx, c) in acc.into_iter().enumerate() {
            if c != cr(0.0) {
                let k2 = idx % sy;
                let k1 = (idx / sy) % sy;
                let k0 = idx / (sy * sy);
                out.terms.insert((k0 as u32, k1 as u32, k2 as u32), c);
            }
        }
        out
    }

    /// Re-hosts the terms under new truncation bounds. Enlarging the box is
    /// only meaningful when the series is exact there (e.g. y-only series
    /// being embedded into a wider x-range).
    pub fn with_bounds(&self, trunc_x: u32, trunc_y: u32) -> Self {
        let mut out = Self::zero(trunc_x, trunc_y);
        for (&k, &c) in &self.terms {
            out.add_term(k, c);
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::constant(cr(1.0), self.trunc_x, self.trunc_y);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Multiplies by `x^k`.
    pub fn mul_xpow(&self, k: u32) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(k0, k1, k2), &c) in &self.terms {
            out.add_term((k0 + k, k1, k2), c);
        }
        out
    }

    /// Divides by `x^k`; errors if any retained term has x-degree below `k`.
    ///
    /// Terms with magnitude below `tol` are treated as zero (jet recursions
    /// produce exact divisibility only up to roundoff).
    pub fn div_xpow(&self, k: u32, tol: Scalar) -> Result<Self, SeriesError> {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k0 < k {
                if c.norm() > tol {
                    return Err(SeriesError::NotDivisible(k));
                }
                continue;
            }
            out.add_term((k0 - k, k1, k2), c);
        }
        Ok(out)
    }

    pub fn dx(&self) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k0 > 0 {
                out.add_term((k0 - 1, k1, k2), c * cr(k0 as Scalar));
            }
        }
        out
    }

    pub fn dy1(&self) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k1 > 0 {
                out.add_term((k0, k1 - 1, k2), c * cr(k1 as Scalar));
            }
        }
        out
    }

    pub fn dy2(&self) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k2 > 0 {
                out.add_term((k0, k1, k2 - 1), c * cr(k2 as Scalar));
            }
        }
        out
    }

    /// Substitutes `y1 <- phi1`, `y2 <- phi2` (keeping `x`), where both
    /// substituted series must vanish at the origin.
    ///
    /// When both substituted series have y-order >= 1 (components in the
    /// `(y1, y2)` ideal), every retained coefficient of the result is exact.
    /// If they carry pure-x translation parts, coefficients are exact on
    /// total degree <= trunc_y; the corner of the truncation box would need
    /// source terms beyond the y-bound.
    pub fn compose_fibered(&self, phi1: &Self, phi2: &Self) -> Result<Self, SeriesError> {
        if phi1.coeff((0, 0, 0)) != cr(0.0) || phi2.coeff((0, 0, 0)) != cr(0.0) {
            return Err(SeriesError::NonzeroConstantTerm);
        }
        let tx = self.trunc_x.min(phi1.trunc_x).min(phi2.trunc_x);
        let ty = self.trunc_y.min(phi1.trunc_y).min(phi2.trunc_y);
        let one = Self::constant(cr(1.0), tx, ty);
        // Power tables up to the largest exponent actually used; phi^n has
        // total order >= n, so exponents above trunc_y never appear anyway.
        let nmax = self
            .terms
            .keys()
            .map(|k| k.1.max(k.2))
            .max()
            .unwrap_or(0)
            .min(self.trunc_y) as usize;
        let mut pow1 = Vec::with_capacity(nmax + 1);
        let mut pow2 = Vec::with_capacity(nmax + 1);
        pow1.push(one.clone());
        pow2.push(one);
        for n in 1..=nmax {
            pow1.push(pow1[n - 1].mul(phi1));
            pow2.push(pow2[n - 1].mul(phi2));
        }
        // Group source terms by (k1, k2): one dense product per exponent
        // pair, multiplied by the pair's x-profile.
        let mut out = Self::zero(tx, ty);
        let mut terms_iter = self.terms.iter().peekable();
        let mut by_pair: std::collections::BTreeMap<(u32, u32), Self> = Default::default();
        while let Some((&(k0, k1, k2), &c)) = terms_iter.next() {
            by_pair
                .entry((k1, k2))
                .or_insert_with(|| Self::zero(tx, ty))
                .add_term((k0, 0, 0), c);
            let _ = terms_iter.peek();
        }
        for ((k1, k2), xprofile) in by_pair {
            if (k1 as usize) > nmax || (k2 as usize) > nmax {
                continue;
            }
            let prod = pow1[k1 as usize].mul(&pow2[k2 as usize]).mul(&xprofile);
            out = out.add(&prod);
        }
        Ok(out)
    }

    /// Exponential of a series vanishing at the origin.
    pub fn exp_series(&self) -> Result<Self, SeriesError> {
        if self.coeff((0, 0, 0)) != cr(0.0) {
            return Err(SeriesError::NonzeroConstantTerm);
        }
        let mut out = Self::constant(cr(1.0), self.trunc_x, self.trunc_y);
        let mut term = Self::constant(cr(1.0), self.trunc_x, self.trunc_y);
        let nmax = self.trunc_x + self.trunc_y;
        for n in 1..=nmax.max(1) {
            term = term.mul(self).scale(cr(1.0 / n as Scalar));
            if term.is_zero() {
                break;
            }
            out = out.add(&term);
        }
        Ok(out)
    }

    /// Multiplicative inverse of a unit.
    pub fn inverse_unit(&self) -> Result<Self, SeriesError> {
        let c0 = self.coeff((0, 0, 0));
        if c0 == cr(0.0) {
            return Err(SeriesError::NotAUnit);
        }
        // 1/(c0 (1 + h)) = (1/c0) sum (-h)^n with h = self/c0 - 1.
        let h = self.scale(cr(1.0) / c0).sub(&Self::constant(cr(1.0), self.trunc_x, self.trunc_y));
        let mut out = Self::constant(cr(1.0), self.trunc_x, self.trunc_y);
        let mut term = Self::constant(cr(1.0), self.trunc_x, self.trunc_y);
        let nmax = self.trunc_x + self.trunc_y;
        for _ in 1..=nmax.max(1) {
            term = term.mul(&h).neg();
            if term.is_zero() {
                break;
            }
            out = out.add(&term);
        }
        Ok(out.scale(cr(1.0) / c0))
    }

    /// Splits into (resonant, nonresonant): monomials with `k1 == k2` and the rest.
    pub fn split_resonant(&self) -> (Self, Self) {
        let mut res = Self::zero(self.trunc_x, self.trunc_y);
        let mut nonres = Self::zero(self.trunc_x, self.trunc_y);
        for (&k, &c) in &self.terms {
            if k.1 == k.2 {
                res.add_term(k, c);
            } else {
                nonres.add_term(k, c);
            }
        }
        (res, nonres)
    }

    /// The sub-series of terms with x-degree exactly `k0`, with `x^k0` removed.
    pub fn x_slice(&self, k0: u32) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&(j0, j1, j2), &c) in &self.terms {
            if j0 == k0 {
                out.add_term((0, j1, j2), c);
            }
        }
        out
    }

    /// The sub-series of terms with total y-degree exactly `d`.
    pub fn y_degree_slice(&self, d: u32) -> Self {
        let mut out = Self::zero(self.trunc_x, self.trunc_y);
        for (&k, &c) in &self.terms {
            if k.1 + k.2 == d {
                out.add_term(k, c);
            }
        }
        out
    }

    /// Coefficient profile in `x` of the monomial `y1^n1 y2^n2`.
    pub fn x_profile(&self, n1: u32, n2: u32) -> UniSeries {
        let mut u = UniSeries::zero(self.trunc_x as usize);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k1 == n1 && k2 == n2 {
                u.set(k0 as usize, c);
            }
        }
        u
    }

    /// Resonant profile at `x = 0`: the map `v^k -> coeff((0,k,k))` as a
    /// univariate series in `v = y1 y2`.
    pub fn resonant_profile_x0(&self) -> UniSeries {
        let mut u = UniSeries::zero((self.trunc_y / 2) as usize);
        for (&(k0, k1, k2), &c) in &self.terms {
            if k0 == 0 && k1 == k2 {
                u.set(k1 as usize, c);
            }
        }
        u
    }

    /// Embeds a univariate series in `x`.
    pub fn from_x_series(u: &UniSeries, trunc_x: u32, trunc_y: u32) -> Self {
        let mut s = Self::zero(trunc_x, trunc_y);
        for (k, c) in u.coeffs().iter().enumerate() {
            s.add_term((k as u32, 0, 0), *c);
        }
        s
    }

    /// Embeds a univariate series in `v = y1 y2`.
    pub fn from_v_series(u: &UniSeries, trunc_x: u32, trunc_y: u32) -> Self {
        let mut s = Self::zero(trunc_x, trunc_y);
        for (k, c) in u.coeffs().iter().enumerate() {
            s.add_term((0, k as u32, k as u32), *c);
        }
        s
    }

    /// Numeric evaluation at a point.
    pub fn eval(&self, x: C, y1: C, y2: C) -> C {
        let mut acc = cr(0.0);
        for (&(k0, k1, k2), &c) in &self.terms {
            acc += c * x.powu(k0) * y1.powu(k1) * y2.powu(k2);
        }
        acc
    }

    /// Largest coefficient magnitude.
    pub fn max_coeff_norm(&self) -> Scalar {
        self.terms.values().map(|c| c.norm()).fold(0.0, Scalar::max)
    }

    /// Largest coefficient-magnitude difference against `other` on the
    /// intersection of the truncation domains.
    pub fn max_diff(&self, other: &Self) -> Scalar {
        let tx = self.trunc_x.min(other.trunc_x);
        let ty = self.trunc_y.min(other.trunc_y);
        let mut m: Scalar = 0.0;
        for (&k, &c) in &self.terms {
            if k.0 <= tx && k.1 + k.2 <= ty {
                m = m.max((c - other.coeff(k)).norm());
            }
        }
        for (&k, &c) in &other.terms {
            if k.0 <= tx && k.1 + k.2 <= ty {
                m = m.max((self.coeff(k) - c).norm());
            }
        }
        m
    }

    /// Like [`Self::max_diff`] but restricted to total degree `<= dmax`.
    ///
    /// Compositions involving maps with pure-x translation parts are exact
    /// only on this region (out-of-box y-degrees would be needed for the
    /// corner coefficients), so comparisons of such results use this helper.
    pub fn max_diff_total_degree(&self, other: &Self, dmax: u32) -> Scalar {
        let mut m: Scalar = 0.0;
        for (&k, &c) in &self.terms {
            if k.0 + k.1 + k.2 <= dmax {
                m = m.max((c - other.coeff(k)).norm());
            }
        }
        for (&k, &c) in &other.terms {
            if k.0 + k.1 + k.2 <= dmax {
                m = m.max((self.coeff(k) - c).norm());
            }
        }
        m
    }

    /// Minimal total degree of a nonzero term (`None` for the zero series).
    pub fn total_order(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.0 + k.1 + k.2).min()
    }

    /// Minimal y-degree of a nonzero term (`None` for the zero series).
    pub fn y_order(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.1 + k.2).min()
    }

    /// Serializes to the interchange JSON format: terms sorted
    /// lexicographically by exponent triple.
    pub fn to_json(&self) -> serde_json::Value {
        let terms: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(&(k0, k1, k2), c)| {
                serde_json::json!({ "k": [k0, k1, k2], "re": c.re, "im": c.im })
            })
            .collect();
        serde_json::json!({ "trunc_x": self.trunc_x, "trunc_y": self.trunc_y, "terms": terms })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Self> {
        let tx = v.get("trunc_x")?.as_u64()? as u32;
        let ty = v.get("trunc_y")?.as_u64()? as u32;
        let mut s = Self::zero(tx, ty);
        for t in v.get("terms")?.as_array()? {
            let k = t.get("k")?.as_array()?;
            let k0 = k.first()?.as_u64()? as u32;
            let k1 = k.get(1)?.as_u64()? as u32;
            let k2 = k.get(2)?.as_u64()? as u32;
            let re = t.get("re")?.as_f64()?;
            let im = t.get("im")?.as_f64()?;
            s.add_term((k0, k1, k2), cc(re, im));
        }
        Some(s)
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(k0, k1, k2), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)", c.re, c.im)?;
            if k0 > 0 {
                write!(f, "*x^{k0}")?;
            }
            if k1 > 0 {
                write!(f, "*y1^{k1}")?;
            }
            if k2 > 0 {
                write!(f, "*y2^{k2}")?;
            }
        }
        Ok(())
    }
}

/// Dense univariate truncated series (in `x`, `v = y1 y2`, or the Borel
/// variable `t`, depending on context).
#[derive(Debug, Clone, PartialEq)]
pub struct UniSeries {
    coeffs: Vec<C>,
    trunc: usize,
}

impl UniSeries {
    pub fn zero(trunc: usize) -> Self {
        UniSeries { coeffs: vec![cr(0.0); trunc + 1], trunc }
    }

    pub fn constant(c: C, trunc: usize) -> Self {
        let mut u = Self::zero(trunc);
        u.coeffs[0] = c;
        u
    }

    pub fn from_coeffs(coeffs: Vec<C>, trunc: usize) -> Self {
        let mut u = Self::zero(trunc);
        for (k, c) in coeffs.into_iter().enumerate().take(trunc + 1) {
            u.coeffs[k] = c;
        }
        u
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn get(&self, k: usize) -> C {
        self.coeffs.get(k).copied().unwrap_or_else(|| cr(0.0))
    }

    pub fn set(&mut self, k: usize, c: C) {
        if k <= self.trunc {
            self.coeffs[k] = c;
        }
    }

    pub fn is_zero_within(&self, tol: Scalar) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }

    pub fn add(&self, other: &Self) -> Self {
        let trunc = self.trunc.min(other.trunc);
        let mut out = Self::zero(trunc);
        for k in 0..=trunc {
            out.coeffs[k] = self.get(k) + other.get(k);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let trunc = self.trunc.min(other.trunc);
        let mut out = Self::zero(trunc);
        for k in 0..=trunc {
            out.coeffs[k] = self.get(k) - other.get(k);
        }
        out
    }

    pub fn scale(&self, c: C) -> Self {
        let mut out = self.clone();
        for v in &mut out.coeffs {
            *v *= c;
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let trunc = self.trunc.min(other.trunc);
        let mut out = Self::zero(trunc);
        for i in 0..=trunc.min(self.trunc) {
            if self.get(i) == cr(0.0) {
                continue;
            }
            for j in 0..=(trunc - i).min(other.trunc) {
                out.coeffs[i + j] += self.get(i) * other.get(j);
            }
        }
        out
    }

    /// Derivative with respect to the series variable.
    pub fn derivative(&self) -> Self {
        let mut out = Self::zero(self.trunc);
        for k in 1..=self.trunc {
            out.coeffs[k - 1] = self.get(k) * cr(k as Scalar);
        }
        out
    }

    /// Multiplicative inverse of a unit.
    pub fn inverse_unit(&self) -> Result<Self, SeriesError> {
        let c0 = self.get(0);
        if c0 == cr(0.0) {
            return Err(SeriesError::NotAUnit);
        }
        let mut out = Self::zero(self.trunc);
        out.coeffs[0] = cr(1.0) / c0;
        for k in 1..=self.trunc {
            let mut acc = cr(0.0);
            for j in 0..k {
                acc += out.get(j) * self.get(k - j);
            }
            out.coeffs[k] = -acc / c0;
        }
        Ok(out)
    }

    /// Exponential of a series with zero constant term.
    pub fn exp(&self) -> Result<Self, SeriesError> {
        if self.get(0) != cr(0.0) {
            return Err(SeriesError::NonzeroConstantTerm);
        }
        // e' = s' e, so (k+1) e_{k+1} = sum_{j} (j+1) s_{j+1} e_{k-j}.
        let mut out = Self::zero(self.trunc);
        out.coeffs[0] = cr(1.0);
        for k in 0..self.trunc {
            let mut acc = cr(0.0);
            for j in 0..=k {
                acc += cr((j + 1) as Scalar) * self.get(j + 1) * out.get(k - j);
            }
            out.coeffs[k + 1] = acc / cr((k + 1) as Scalar);
        }
        Ok(out)
    }

    /// Horner evaluation.
    pub fn eval(&self, z: C) -> C {
        let mut acc = cr(0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn max_coeff_norm(&self) -> Scalar {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, Scalar::max)
    }

    pub fn max_diff(&self, other: &Self) -> Scalar {
        let trunc = self.trunc.min(other.trunc);
        (0..=trunc).map(|k| (self.get(k) - other.get(k)).norm()).fold(0.0, Scalar::max)
    }
}
