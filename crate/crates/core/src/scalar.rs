//! Scalars of the coefficient field at finite working precision.
//!
//! The field is the completed perfection of the Laurent series field
//! `F_p((t))`: elements are finitely supported digit expansions
//! `sum d_e * t^e` with digits `d_e` in `[1, p)` and exponents `e` rational
//! numbers whose denominators are powers of `p`.  A [`Precision`] fixes the
//! prime `p`, the deepest admissible exponent denominator `p^imax`, the
//! truncation threshold `tprec` (digits at exponents `>= tprec` are
//! discarded), and the series support bound `xdeg` used one level up.
//!
//! Arithmetic is carry-free because the residue field is `F_p`; every
//! operation is exact on the stored finite expansions and then truncates at
//! `tprec`.  Consumers must treat "zero at precision" as possibly nonzero:
//! truncation is documented here rather than tracked per element.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

/// An exponent: a rational number whose denominator is a power of `p`.
///
/// `Exp` itself does not know `p`; lattice membership is checked against a
/// [`Precision`] wherever it matters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exp(Ratio<i64>);

impl Exp {
    pub fn new(numer: i64, denom: i64) -> Exp {
        assert!(denom != 0, "exponent denominator must be nonzero");
        Exp(Ratio::new(numer, denom))
    }

    pub fn from_int(n: i64) -> Exp {
        Exp(Ratio::from_integer(n))
    }

    pub fn zero() -> Exp {
        Exp(Ratio::zero())
    }

    pub fn one() -> Exp {
        Exp(Ratio::from_integer(1))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Exp {
        Exp(self.0.abs())
    }

    pub fn floor(&self) -> i64 {
        self.0.floor().to_integer()
    }

    pub fn ceil(&self) -> i64 {
        self.0.ceil().to_integer()
    }

    /// Exact rational division; `rhs` must be nonzero.
    pub fn div(&self, rhs: Exp) -> Exp {
        assert!(!rhs.is_zero(), "division of exponents by zero");
        Exp(self.0 / rhs.0)
    }

    /// Multiplies by an integer power of `p`: positive `i` scales up,
    /// negative `i` divides (possibly deepening the denominator).
    pub fn scale_p(&self, p: u32, i: i32) -> Exp {
        let f = (p as i64).pow(i.unsigned_abs());
        if i >= 0 {
            Exp(self.0 * Ratio::from_integer(f))
        } else {
            Exp(self.0 / Ratio::from_integer(f))
        }
    }

    /// The `j` with `denom = p^j`, or `None` when the denominator is not a
    /// power of `p`.
    pub fn lattice_depth(&self, p: u32) -> Option<u32> {
        let mut d = self.denom();
        let mut j = 0u32;
        while d > 1 {
            if d % p as i64 != 0 {
                return None;
            }
            d /= p as i64;
            j += 1;
        }
        Some(j)
    }
}

impl std::ops::Add for Exp {
    type Output = Exp;
    fn add(self, rhs: Exp) -> Exp {
        Exp(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Exp {
    type Output = Exp;
    fn sub(self, rhs: Exp) -> Exp {
        Exp(self.0 - rhs.0)
    }
}

impl std::ops::Neg for Exp {
    type Output = Exp;
    fn neg(self) -> Exp {
        Exp(-self.0)
    }
}

impl std::ops::Mul for Exp {
    type Output = Exp;
    fn mul(self, rhs: Exp) -> Exp {
        Exp(self.0 * rhs.0)
    }
}

impl std::ops::Mul<i64> for Exp {
    type Output = Exp;
    fn mul(self, rhs: i64) -> Exp {
        Exp(self.0 * Ratio::from_integer(rhs))
    }
}

impl fmt::Display for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Working-precision parameters shared by every value in a computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Precision {
    p: u32,
    imax: u32,
    tprec: Exp,
    xdeg: Exp,
}

fn is_small_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl Precision {
    pub fn new(p: u32, imax: u32, tprec: Exp, xdeg: Exp) -> Result<Precision> {
        if !is_small_prime(p) {
            return Err(Error::InvalidPrecision(format!("p = {p} is not prime")));
        }
        if !tprec.is_positive() {
            return Err(Error::InvalidPrecision("tprec must be positive".into()));
        }
        if !xdeg.is_positive() {
            return Err(Error::InvalidPrecision("xdeg must be positive".into()));
        }
        if (p as i64).checked_pow(imax).is_none() {
            return Err(Error::InvalidPrecision("p^imax overflows".into()));
        }
        Ok(Precision { p, imax, tprec, xdeg })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn imax(&self) -> u32 {
        self.imax
    }

    pub fn tprec(&self) -> Exp {
        self.tprec
    }

    pub fn xdeg(&self) -> Exp {
        self.xdeg
    }

    /// p^imax as an integer.
    pub fn lattice_denominator(&self) -> i64 {
        (self.p as i64).pow(self.imax)
    }

    /// Whether `e` lies in the admissible exponent lattice
    /// `(1/p^imax) * Z`.
    pub fn admits(&self, e: Exp) -> bool {
        matches!(e.lattice_depth(self.p), Some(j) if j <= self.imax)
    }

    /// The largest integer degree reachable by rescaling a windowed series
    /// to integer exponents: `xdeg * p^imax`.
    pub fn rescaled_degree_bound(&self) -> Exp {
        self.xdeg * self.lattice_denominator()
    }
}

/// t-adic valuation of a scalar; `Infinite` is the valuation of zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Valuation {
    Finite(Exp),
    Infinite,
}

impl Valuation {
    pub fn finite(&self) -> Option<Exp> {
        match self {
            Valuation::Finite(e) => Some(*e),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Valuation::Infinite)
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Valuation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use Valuation::*;
        match (self, other) {
            (Infinite, Infinite) => std::cmp::Ordering::Equal,
            (Infinite, Finite(_)) => std::cmp::Ordering::Greater,
            (Finite(_), Infinite) => std::cmp::Ordering::Less,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(e) => write!(f, "{e}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

/// An absolute value `p^e` (or zero); the multiplicative mirror of
/// [`Valuation`] with `|a| = p^(-val a)`.  Used both for scalars and as the
/// Gauss norm of series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    Zero,
    /// The value `p^e` for the carried exponent `e`.
    PowerOfP(Exp),
}

impl Norm {
    pub fn one() -> Norm {
        Norm::PowerOfP(Exp::zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Norm::PowerOfP(e) if e.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Norm::Zero)
    }

    /// The exponent `e` with value `p^e`, if nonzero.
    pub fn exponent(&self) -> Option<Exp> {
        match self {
            Norm::Zero => None,
            Norm::PowerOfP(e) => Some(*e),
        }
    }

    pub fn mul(&self, rhs: &Norm) -> Norm {
        match (self, rhs) {
            (Norm::PowerOfP(a), Norm::PowerOfP(b)) => Norm::PowerOfP(*a + *b),
            _ => Norm::Zero,
        }
    }
}

impl PartialOrd for Norm {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Norm {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use Norm::*;
        match (self, other) {
            (Zero, Zero) => std::cmp::Ordering::Equal,
            (Zero, PowerOfP(_)) => std::cmp::Ordering::Less,
            (PowerOfP(_), Zero) => std::cmp::Ordering::Greater,
            (PowerOfP(a), PowerOfP(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Zero => write!(f, "0"),
            Norm::PowerOfP(e) => write!(f, "p^({e})"),
        }
    }
}

/// Image of an integral scalar in the residue field `F_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResidueElem {
    value: u32,
    p: u32,
}

impl ResidueElem {
    pub fn new(value: u32, p: u32) -> ResidueElem {
        ResidueElem { value: value % p, p }
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }
}

impl fmt::Display for ResidueElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// `base^exp mod p` for digit arithmetic.
fn mod_pow(mut base: u64, mut exp: u32, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

fn digit_inv(d: u32, p: u32) -> u32 {
    // p is prime, so d^(p-2) inverts d.
    mod_pow(d as u64, p - 2, p as u64) as u32
}

type DigitMap = BTreeMap<Exp, u32>;

fn map_add_assign(acc: &mut DigitMap, rhs: &DigitMap, p: u32) {
    for (&e, &d) in rhs {
        let slot = acc.entry(e).or_insert(0);
        *slot = (*slot + d) % p;
        if *slot == 0 {
            acc.remove(&e);
        }
    }
}

/// Exact product of two digit maps, dropping exponents `>= bound`.
fn map_mul(a: &DigitMap, b: &DigitMap, p: u32, bound: Exp) -> DigitMap {
    let mut out = DigitMap::new();
    for (&ea, &da) in a {
        for (&eb, &db) in b {
            let e = ea + eb;
            if e >= bound {
                // b is sorted, so every later eb overshoots as well.
                break;
            }
            let d = (da as u64 * db as u64 % p as u64) as u32;
            let slot = out.entry(e).or_insert(0);
            *slot = (*slot + d) % p;
            if *slot == 0 {
                out.remove(&e);
            }
        }
    }
    out
}

fn map_one() -> DigitMap {
    let mut m = DigitMap::new();
    m.insert(Exp::zero(), 1);
    m
}

fn map_is_one(m: &DigitMap) -> bool {
    m.len() == 1 && m.get(&Exp::zero()) == Some(&1)
}

/// Digits of the exact inverse at exponents `< bound`.  The geometric
/// series terminates because the relative tail gains valuation at least
/// `1/p^imax` per round.
fn map_inv(m: &DigitMap, p: u32, bound: Exp) -> Result<DigitMap> {
    let (&val, &lead) = m.iter().next().ok_or(Error::DivisionByZero)?;
    let cinv = digit_inv(lead, p);
    // m = lead * t^val * (1 + u); invert the unit part below `bound + val`
    // so the final shift by -val lands below `bound`.
    let sbound = bound + val;
    let mut neg_u = DigitMap::new();
    for (&e, &d) in m.iter().skip(1) {
        let shifted = e - val;
        if shifted < sbound {
            let q = (d as u64 * cinv as u64 % p as u64) as u32;
            neg_u.insert(shifted, p - q);
        }
    }
    let mut acc = map_one();
    let mut pw = map_one();
    while !neg_u.is_empty() {
        pw = map_mul(&pw, &neg_u, p, sbound);
        if pw.is_empty() {
            break;
        }
        map_add_assign(&mut acc, &pw, p);
    }
    let mut out = DigitMap::new();
    for (&e, &d) in &acc {
        let exp = e - val;
        if exp < bound {
            out.insert(exp, (d as u64 * cinv as u64 % p as u64) as u32);
        }
    }
    Ok(out)
}

/// `base^k` by binary exponentiation, truncated below `bound`.
fn map_pow(base: &DigitMap, k: u64, p: u32, bound: Exp) -> DigitMap {
    let mut acc = map_one();
    let mut sq = base.clone();
    let mut n = k;
    while n > 0 {
        if n & 1 == 1 {
            acc = map_mul(&acc, &sq, p, bound);
        }
        n >>= 1;
        if n > 0 {
            sq = map_mul(&sq, &sq, p, bound);
        }
    }
    acc
}

/// Exact `p^j`-th root: digits fixed, exponents divided by `p^j`.
fn map_root(m: &DigitMap, p: u32, j: u32, imax: u32) -> Result<DigitMap> {
    if j == 0 {
        return Ok(m.clone());
    }
    let mut out = DigitMap::new();
    for (&e, &d) in m {
        let exp = e.scale_p(p, -(j as i32));
        match exp.lattice_depth(p) {
            Some(depth) if depth <= imax => {}
            _ => return Err(Error::LatticeOverflow),
        }
        out.insert(exp, d);
    }
    Ok(out)
}

/// A scalar of the coefficient field: a finite digit expansion in `t`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scalar {
    digits: DigitMap,
    prec: Precision,
}

impl Scalar {
    fn from_map(prec: Precision, mut digits: DigitMap) -> Scalar {
        digits.retain(|e, d| *d % prec.p != 0 && *e < prec.tprec);
        for d in digits.values_mut() {
            *d %= prec.p;
        }
        Scalar { digits, prec }
    }

    pub fn zero(prec: Precision) -> Scalar {
        Scalar { digits: DigitMap::new(), prec }
    }

    pub fn one(prec: Precision) -> Scalar {
        Scalar::from_digit(prec, 1)
    }

    /// The constant with residue digit `d mod p`.
    pub fn from_digit(prec: Precision, d: u32) -> Scalar {
        let mut m = DigitMap::new();
        m.insert(Exp::zero(), d);
        Scalar::from_map(prec, m)
    }

    /// `d * t^e`; the exponent must lie in the precision lattice.
    pub fn monomial(prec: Precision, d: u32, e: Exp) -> Result<Scalar> {
        if !prec.admits(e) {
            return Err(Error::LatticeOverflow);
        }
        let mut m = DigitMap::new();
        m.insert(e, d);
        Ok(Scalar::from_map(prec, m))
    }

    /// `t^e`.
    pub fn t_pow(prec: Precision, e: Exp) -> Result<Scalar> {
        Scalar::monomial(prec, 1, e)
    }

    /// Builds from `(numer, denom, digit)` exponent/digit triples.
    pub fn from_terms(prec: Precision, terms: &[(i64, i64, u32)]) -> Result<Scalar> {
        let mut m = DigitMap::new();
        for &(n, d, digit) in terms {
            if d == 0 {
                return Err(Error::Parse("exponent denominator is zero".into()));
            }
            let e = Exp::new(n, d);
            if !prec.admits(e) {
                return Err(Error::LatticeOverflow);
            }
            let slot = m.entry(e).or_insert(0);
            *slot = (*slot + digit) % prec.p;
        }
        Ok(Scalar::from_map(prec, m))
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.digits.len() == 1 && self.digits.get(&Exp::zero()) == Some(&1)
    }

    /// Digit at exponent `e` (zero when absent).
    pub fn digit(&self, e: Exp) -> u32 {
        self.digits.get(&e).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Exp, u32)> + '_ {
        self.digits.iter().map(|(&e, &d)| (e, d))
    }

    pub fn term_count(&self) -> usize {
        self.digits.len()
    }

    fn check_prec(&self, rhs: &Scalar) -> Result<()> {
        if self.prec != rhs.prec {
            return Err(Error::PrecisionMismatch);
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Scalar) -> Result<Scalar> {
        self.check_prec(rhs)?;
        let mut m = self.digits.clone();
        map_add_assign(&mut m, &rhs.digits, self.prec.p);
        Ok(Scalar { digits: m, prec: self.prec })
    }

    pub fn neg(&self) -> Scalar {
        let p = self.prec.p;
        let digits = self.digits.iter().map(|(&e, &d)| (e, p - d)).collect();
        Scalar { digits, prec: self.prec }
    }

    pub fn sub(&self, rhs: &Scalar) -> Result<Scalar> {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Scalar) -> Result<Scalar> {
        self.check_prec(rhs)?;
        let m = map_mul(&self.digits, &rhs.digits, self.prec.p, self.prec.tprec);
        Ok(Scalar { digits: m, prec: self.prec })
    }

    /// Multiplies by the monomial `d * t^e` without lattice re-checks;
    /// exponents leaving the lattice cannot arise since both factors are in
    /// lattice. Truncates at `tprec`.
    pub fn mul_monomial(&self, d: u32, e: Exp) -> Scalar {
        let p = self.prec.p;
        let d = d % p;
        if d == 0 {
            return Scalar::zero(self.prec);
        }
        let mut m = DigitMap::new();
        for (&ea, &da) in &self.digits {
            let exp = ea + e;
            if exp < self.prec.tprec {
                m.insert(exp, (da as u64 * d as u64 % p as u64) as u32);
            }
        }
        Scalar { digits: m, prec: self.prec }
    }

    pub fn valuation(&self) -> Valuation {
        match self.digits.keys().next() {
            Some(&e) => Valuation::Finite(e),
            None => Valuation::Infinite,
        }
    }

    /// `|a| = p^(-val a)`.
    pub fn abs(&self) -> Norm {
        match self.valuation() {
            Valuation::Finite(v) => Norm::PowerOfP(-v),
            Valuation::Infinite => Norm::Zero,
        }
    }

    /// Multiplicative inverse: the truncation at `tprec` of the exact
    /// inverse of the stored representative.
    ///
    /// `self * inv(self)` is exactly 1 after truncation whenever
    /// `val(self) >= 0`; for negative valuation the product can differ from
    /// 1 by terms of valuation `>= tprec + val(self)` (no scalar truncated
    /// at `tprec` does better).  Ratio tests that must be exact for
    /// arbitrary valuations go through [`product_of_powers`], which carries
    /// extended internal precision.
    pub fn inv(&self) -> Result<Scalar> {
        let m = map_inv(&self.digits, self.prec.p, self.prec.tprec)?;
        Ok(Scalar::from_map(self.prec, m))
    }

    pub fn div(&self, rhs: &Scalar) -> Result<Scalar> {
        self.mul(&rhs.inv()?)
    }

    /// Rescales every `t`-exponent by `p^i`.  Positive `i` is the `i`-fold
    /// Frobenius power (exact in characteristic `p`: digits are fixed by
    /// `d -> d^p`), negative `i` extracts `p^|i|`-th roots and fails with
    /// `LatticeOverflow` when a denominator would exceed `p^imax`.
    pub fn rescale_t(&self, i: i32) -> Result<Scalar> {
        if i == 0 {
            return Ok(self.clone());
        }
        let mut m = DigitMap::new();
        for (&e, &d) in &self.digits {
            let exp = e.scale_p(self.prec.p, i);
            if i < 0 && !self.prec.admits(exp) {
                return Err(Error::LatticeOverflow);
            }
            if exp < self.prec.tprec {
                m.insert(exp, d);
            }
        }
        Ok(Scalar { digits: m, prec: self.prec })
    }

    /// The unique `p`-th root (Frobenius is bijective): digits unchanged,
    /// exponents divided by `p`.
    pub fn pth_root(&self) -> Result<Scalar> {
        self.rescale_t(-1)
    }

    /// The Frobenius power `self^p`.
    pub fn frobenius(&self) -> Scalar {
        self.rescale_t(1).expect("forward rescale cannot overflow the lattice")
    }

    /// Integer power via binary exponentiation; negative powers invert.
    pub fn pow_i64(&self, k: i64) -> Result<Scalar> {
        if k == 0 {
            return Ok(Scalar::one(self.prec));
        }
        let base = if k < 0 { self.inv()? } else { self.clone() };
        let mut acc = Scalar::one(self.prec);
        let mut sq = base;
        let mut n = k.unsigned_abs();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&sq)?;
            }
            n >>= 1;
            if n > 0 {
                sq = sq.mul(&sq)?;
            }
        }
        Ok(acc)
    }

    /// Fractional power `self^(k/p^j)`: `j` root extractions followed by an
    /// integer power.  Exact in characteristic `p`.
    pub fn pow_exp(&self, e: Exp) -> Result<Scalar> {
        let j = e
            .lattice_depth(self.prec.p)
            .ok_or(Error::LatticeOverflow)?;
        let rooted = self.rescale_t(-(j as i32))?;
        rooted.pow_i64(e.numer())
    }

    /// Reduction to the residue field: the digit at exponent 0.  Requires
    /// valuation >= 0.
    pub fn reduce(&self) -> Result<ResidueElem> {
        if let Valuation::Finite(v) = self.valuation() {
            if v.is_negative() {
                return Err(Error::NotIntegral);
            }
        }
        Ok(ResidueElem::new(self.digit(Exp::zero()), self.prec.p))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .digits
            .iter()
            .map(|(e, d)| format!("{d}*t^({e})"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The product `f_1^{e_1} * ... * f_n^{e_n}`, exact modulo `t^tprec`.
///
/// Each exponent must have a `p`-power denominator (fractional powers are
/// taken by exact root extraction; `LatticeOverflow` when a base cannot be
/// rooted deeply enough).  Unlike chains of `mul`/`inv`/`pow_exp` — whose
/// intermediate truncations can lose low terms when valuations are negative
/// — this carries enough internal working precision that the result is the
/// true product of the representatives truncated at `tprec`, for arbitrary
/// valuations.  A zero base with positive exponent gives zero; with
/// negative exponent, `DivisionByZero` (zero exponents are skipped).
pub fn product_of_powers(prec: Precision, factors: &[(&Scalar, Exp)]) -> Result<Scalar> {
    let p = prec.p();
    let mut slack = Exp::zero();
    let mut active: Vec<(&Scalar, Exp)> = Vec::new();
    for &(f, e) in factors {
        if f.precision() != prec {
            return Err(Error::PrecisionMismatch);
        }
        if e.is_zero() {
            continue;
        }
        match f.valuation() {
            Valuation::Infinite => {
                if e.is_positive() {
                    return Ok(Scalar::zero(prec));
                }
                return Err(Error::DivisionByZero);
            }
            Valuation::Finite(v) => slack = slack + (e * v).abs(),
        }
        active.push((f, e));
    }
    // Generous working bound: every intermediate valuation excursion is
    // within `slack` of zero, and numerator, denominator and inversion each
    // consume at most one excursion.
    let bound = prec.tprec() + slack * 3 + Exp::one();
    let mut num = map_one();
    let mut den = map_one();
    for (f, e) in active {
        let j = e.lattice_depth(p).ok_or(Error::LatticeOverflow)?;
        let rooted = map_root(&f.digits, p, j, prec.imax())?;
        let pw = map_pow(&rooted, e.numer().unsigned_abs(), p, bound);
        if e.is_positive() {
            num = map_mul(&num, &pw, p, bound);
        } else {
            den = map_mul(&den, &pw, p, bound);
        }
    }
    let res = if map_is_one(&den) {
        num
    } else {
        let dinv = map_inv(&den, p, bound)?;
        map_mul(&num, &dinv, p, bound)
    };
    Ok(Scalar::from_map(prec, res))
}

/// Decides whether `a/b` is an exact lattice power of `q`.
///
/// `q` must satisfy `0 < |q| < 1` at working precision (`BadModulus`
/// otherwise) and `a`, `b` must be nonzero.  The only possible exponent is
/// forced by valuations, `m = val(a/b) / val(q)`; the function returns
/// `Some(m)` when `m` lies in the lattice and `(a/b) * q^(-m)` is exactly 1
/// after truncation, and `None` otherwise.
pub fn q_power_class(a: &Scalar, b: &Scalar, q: &Scalar) -> Result<Option<Exp>> {
    q_power_class_within(a, b, q, &Norm::Zero)
}

/// Tolerant variant of [`q_power_class`]: accepts when the relative
/// residual `(a/b) * q^(-m) - 1` has norm at most `tol`.  With
/// `tol = Norm::Zero` this is the exact test.
pub fn q_power_class_within(
    a: &Scalar,
    b: &Scalar,
    q: &Scalar,
    tol: &Norm,
) -> Result<Option<Exp>> {
    if a.precision() != b.precision() || a.precision() != q.precision() {
        return Err(Error::PrecisionMismatch);
    }
    let prec = q.precision();
    let qval = match q.valuation() {
        Valuation::Finite(v) if v.is_positive() && v < prec.tprec() => v,
        _ => return Err(Error::BadModulus),
    };
    let (va, vb) = match (a.valuation(), b.valuation()) {
        (Valuation::Finite(va), Valuation::Finite(vb)) => (va, vb),
        _ => return Err(Error::DivisionByZero),
    };
    let m = (va - vb).div(qval);
    if !prec.admits(m) {
        return Ok(None);
    }
    let ratio = match product_of_powers(prec, &[(a, Exp::one()), (b, -Exp::one()), (q, -m)]) {
        Ok(r) => r,
        // The forced power exists in the exponent lattice but q itself
        // cannot be rooted deep enough to realize it: not equivalent at
        // this precision.
        Err(Error::LatticeOverflow) => return Ok(None),
        Err(e) => return Err(e),
    };
    let residual = ratio.sub(&Scalar::one(prec))?;
    if residual.abs() <= *tol {
        Ok(Some(m))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prec(p: u32, imax: u32, tprec: i64, xdeg: i64) -> Precision {
        Precision::new(p, imax, Exp::from_int(tprec), Exp::from_int(xdeg)).unwrap()
    }

    fn e(n: i64, d: i64) -> Exp {
        Exp::new(n, d)
    }

    #[test]
    fn canonical_form_drops_zero_digits_and_truncates() {
        let pr = prec(2, 2, 4, 8);
        // 2 == 0 mod 2, exponent 5 >= tprec.
        let a = Scalar::from_terms(pr, &[(0, 1, 2), (5, 1, 1), (1, 2, 1)]).unwrap();
        assert_eq!(a.term_count(), 1);
        assert_eq!(a.digit(e(1, 2)), 1);
        assert_eq!(format!("{a}"), "1*t^(1/2)");
    }

    #[test]
    fn addition_is_carry_free_char_p() {
        let pr = prec(2, 2, 16, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap();
        let sum = a.add(&a).unwrap();
        assert!(sum.is_zero(), "x + x = 0 in characteristic 2");

        let pr3 = prec(3, 1, 16, 8);
        let b = Scalar::from_terms(pr3, &[(0, 1, 2)]).unwrap();
        let c = Scalar::from_terms(pr3, &[(0, 1, 2)]).unwrap();
        assert_eq!(b.add(&c).unwrap().digit(Exp::zero()), 1); // 2+2=4=1 mod 3
    }

    #[test]
    fn valuation_of_product_adds() {
        let pr = prec(2, 2, 16, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap(); // 1+t
        let b = Scalar::t_pow(pr, e(3, 4)).unwrap();
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab.valuation(), Valuation::Finite(e(3, 4)));
        assert_eq!(a.valuation(), Valuation::Finite(Exp::zero()));
        assert!(Scalar::zero(pr).valuation().is_infinite());
    }

    #[test]
    fn inverse_of_one_plus_t_is_geometric_series() {
        // Checked by multiplying back: (1+t)(1+t+t^2+t^3) = 1 + t^4 = 1 at
        // tprec 4.
        let pr = prec(2, 2, 4, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap();
        let inv = a.inv().unwrap();
        let expected =
            Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1), (2, 1, 1), (3, 1, 1)]).unwrap();
        assert_eq!(inv, expected);
        assert!(a.mul(&inv).unwrap().is_one());
    }

    #[test]
    fn inverse_handles_positive_valuation_and_odd_p() {
        let pr = prec(3, 1, 6, 8);
        // a = 2 t (1 + t^{1/3}); val 1, so the inverse (val -1) multiplies
        // back to exactly 1 at precision.
        let a = Scalar::from_terms(pr, &[(1, 1, 2), (4, 3, 2)]).unwrap();
        let inv = a.inv().unwrap();
        assert!(a.mul(&inv).unwrap().is_one());
        assert_eq!(inv.valuation(), Valuation::Finite(e(-1, 1)));

        assert_eq!(Scalar::zero(pr).inv(), Err(Error::DivisionByZero));
    }

    #[test]
    fn inverse_below_valuation_ring_is_best_possible() {
        let pot = |x| Valuation::Finite(Exp::from_int(x));
        let pr = prec(3, 1, 6, 8);
        // val(a) = -1: the truncated inverse leaves a residual of valuation
        // >= tprec + val(a) = 5, and no truncated scalar can do better.
        let a = Scalar::from_terms(pr, &[(-1, 1, 2), (-2, 3, 2)]).unwrap();
        let inv = a.inv().unwrap();
        let residual = a.mul(&inv).unwrap().sub(&Scalar::one(pr)).unwrap();
        assert!(residual.valuation() >= pot(5), "residual: {residual}");
        // The exact ratio a/a is still decidable: product_of_powers carries
        // enough internal precision.
        let r = product_of_powers(pr, &[(&a, Exp::one()), (&a, -Exp::one())]).unwrap();
        assert!(r.is_one());
    }

    #[test]
    fn product_of_powers_is_exact_for_mixed_valuations() {
        let pr = prec(2, 2, 8, 8);
        let a = Scalar::from_terms(pr, &[(-2, 1, 1), (-3, 2, 1), (0, 1, 1)]).unwrap();
        let b = Scalar::from_terms(pr, &[(1, 1, 1), (3, 2, 1)]).unwrap();
        // a^2 b^{-3} a^{-2} b^3 = 1 exactly in a single call, even though
        // the valuations swing by 7 either way and chained truncated
        // mul/inv would drift below tprec.
        let prod = product_of_powers(
            pr,
            &[
                (&a, Exp::from_int(2)),
                (&b, Exp::from_int(-3)),
                (&a, Exp::from_int(-2)),
                (&b, Exp::from_int(3)),
            ],
        )
        .unwrap();
        assert!(prod.is_one(), "got {prod}");
        // Fractional power: (a^2)^(1/2) = a via exact rooting.
        let sq = product_of_powers(pr, &[(&a, Exp::from_int(2))]).unwrap();
        let back = product_of_powers(pr, &[(&sq, e(1, 2))]).unwrap();
        assert_eq!(back, a);
        // Zero base rules.
        let z = Scalar::zero(pr);
        assert!(product_of_powers(pr, &[(&z, Exp::one())]).unwrap().is_zero());
        assert_eq!(
            product_of_powers(pr, &[(&z, -Exp::one())]),
            Err(Error::DivisionByZero)
        );
        assert!(product_of_powers(pr, &[(&z, Exp::zero())]).unwrap().is_one());
    }

    #[test]
    fn division_agrees_with_multiplication_by_inverse() {
        let pr = prec(5, 2, 8, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 3), (1, 5, 4), (2, 1, 1)]).unwrap();
        let b = Scalar::from_terms(pr, &[(0, 1, 2), (1, 1, 4)]).unwrap();
        let q = a.div(&b).unwrap();
        assert_eq!(q.mul(&b).unwrap(), a);
    }

    #[test]
    fn pth_root_divides_exponents_and_respects_lattice_bound() {
        let pr = prec(2, 1, 16, 8);
        let a = Scalar::t_pow(pr, e(1, 1)).unwrap();
        let r = a.pth_root().unwrap();
        assert_eq!(r, Scalar::t_pow(pr, e(1, 2)).unwrap());
        // t^{1/2} would need denominator 4 > p^imax = 2.
        assert_eq!(r.pth_root(), Err(Error::LatticeOverflow));
    }

    #[test]
    fn frobenius_round_trip_is_identity() {
        let pr = prec(3, 2, 16, 8);
        // Depth-2 exponents are fine under frobenius-then-root...
        let a = Scalar::from_terms(pr, &[(0, 1, 2), (1, 3, 1), (4, 9, 2), (2, 1, 1)]).unwrap();
        assert_eq!(a.frobenius().pth_root().unwrap(), a);
        // ...but rooting first needs depth <= imax - 1.
        let shallow = Scalar::from_terms(pr, &[(0, 1, 2), (1, 3, 1), (2, 1, 1)]).unwrap();
        assert_eq!(shallow.pth_root().unwrap().frobenius(), shallow);
        assert_eq!(a.pth_root(), Err(Error::LatticeOverflow));
        // (x*y)^(1/p) = x^(1/p) * y^(1/p): roots are multiplicative.
        let b = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 2)]).unwrap();
        let lhs = shallow.mul(&b).unwrap().pth_root().unwrap();
        let rhs = shallow
            .pth_root()
            .unwrap()
            .mul(&b.pth_root().unwrap())
            .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn fractional_powers_compose() {
        let pr = prec(2, 2, 12, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap(); // 1+t
        // a^(3/4) then ^(4/3)... 4/3 is not in the lattice; check instead
        // (a^(1/4))^4 == a and a^(-2) * a^2 == 1.
        let root = a.pow_exp(e(1, 4)).unwrap();
        assert_eq!(root.pow_i64(4).unwrap(), a);
        let m2 = a.pow_i64(-2).unwrap();
        assert!(m2.mul(&a.pow_i64(2).unwrap()).unwrap().is_one());
    }

    #[test]
    fn reduction_to_residue_field() {
        let pr = prec(2, 2, 16, 8);
        let a = Scalar::from_terms(pr, &[(0, 1, 3), (1, 1, 1)]).unwrap(); // 3 = 1 mod 2
        assert_eq!(a.reduce().unwrap().value(), 1);
        let b = Scalar::t_pow(pr, e(1, 2)).unwrap();
        assert_eq!(b.reduce().unwrap().value(), 0);
        let c = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        assert_eq!(c.reduce(), Err(Error::NotIntegral));
    }

    #[test]
    fn q_power_class_detects_exact_powers() {
        let pr = prec(2, 2, 16, 8);
        let q = Scalar::t_pow(pr, Exp::one()).unwrap();
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (2, 1, 1)]).unwrap(); // 1 + t^2
        for m in [e(0, 1), e(3, 1), e(-2, 1), e(1, 2), e(-3, 4)] {
            let b = a.mul(&q.pow_exp(m).unwrap()).unwrap();
            assert_eq!(q_power_class(&b, &a, &q).unwrap(), Some(m), "m = {m}");
        }
        // 1 + t is not a power of t (forced candidate m = 0 fails).
        let c = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap();
        let one = Scalar::one(pr);
        assert_eq!(q_power_class(&c, &one, &q).unwrap(), None);
    }

    #[test]
    fn q_power_class_rejects_bad_moduli() {
        let pr = prec(2, 2, 16, 8);
        let one = Scalar::one(pr);
        let a = Scalar::t_pow(pr, Exp::one()).unwrap();
        // |q| = 1
        let unit = Scalar::from_terms(pr, &[(0, 1, 1), (1, 1, 1)]).unwrap();
        assert_eq!(q_power_class(&a, &one, &unit), Err(Error::BadModulus));
        // q = 0
        let z = Scalar::zero(pr);
        assert_eq!(q_power_class(&a, &one, &z), Err(Error::BadModulus));
        // |q| > 1
        let big = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        assert_eq!(q_power_class(&a, &one, &big), Err(Error::BadModulus));
    }

    #[test]
    fn q_power_class_tolerant_snap() {
        let pr = prec(2, 2, 16, 8);
        let q = Scalar::t_pow(pr, Exp::one()).unwrap();
        let one = Scalar::one(pr);
        // a = 1 + t^5: within norm p^-5 of the class of 1.
        let a = Scalar::from_terms(pr, &[(0, 1, 1), (5, 1, 1)]).unwrap();
        assert_eq!(q_power_class(&a, &one, &q).unwrap(), None);
        let tol = Norm::PowerOfP(e(-5, 1));
        assert_eq!(q_power_class_within(&a, &one, &q, &tol).unwrap(), Some(Exp::zero()));
        let tight = Norm::PowerOfP(e(-6, 1));
        assert_eq!(q_power_class_within(&a, &one, &q, &tight).unwrap(), None);
    }

    #[test]
    fn ultrametric_inequality_on_samples() {
        let pr = prec(3, 2, 12, 8);
        let samples = [
            Scalar::from_terms(pr, &[(0, 1, 1), (1, 3, 2)]).unwrap(),
            Scalar::from_terms(pr, &[(2, 9, 1)]).unwrap(),
            Scalar::from_terms(pr, &[(-1, 1, 2), (0, 1, 1)]).unwrap(),
            Scalar::zero(pr),
        ];
        for a in &samples {
            for b in &samples {
                let s = a.add(b).unwrap();
                assert!(
                    s.abs() <= a.abs().max(b.abs()),
                    "|a+b| <= max(|a|,|b|) failed for {a} and {b}"
                );
            }
        }
    }

    #[test]
    fn norm_is_multiplicative() {
        let pr = prec(5, 1, 10, 8);
        let a = Scalar::from_terms(pr, &[(1, 5, 2), (1, 1, 3)]).unwrap();
        let b = Scalar::from_terms(pr, &[(0, 1, 4), (2, 5, 1)]).unwrap();
        assert_eq!(a.mul(&b).unwrap().abs(), a.abs().mul(&b.abs()));
    }

    #[test]
    fn precision_mismatch_is_reported() {
        let a = Scalar::one(prec(2, 2, 16, 8));
        let b = Scalar::one(prec(2, 2, 8, 8));
        assert_eq!(a.add(&b), Err(Error::PrecisionMismatch));
    }

    #[test]
    fn precision_validation() {
        assert!(Precision::new(4, 1, Exp::from_int(4), Exp::from_int(4)).is_err());
        assert!(Precision::new(2, 1, Exp::from_int(0), Exp::from_int(4)).is_err());
        let pr = prec(2, 2, 16, 8);
        assert!(pr.admits(e(3, 4)));
        assert!(!pr.admits(e(1, 8)));
        assert!(!pr.admits(e(1, 3)));
    }
}
