//! Windowed sparse series over the scalar field: the Tate algebra with
//! `p`-power-divisible exponents and its annulus variants.
//!
//! A [`PerfSeries`] stores finitely many `X`-exponent/coefficient pairs
//! together with a *window* `[lo, hi]` declaring the admissible exponent
//! range of the ambient ring: `lo = 0` for the disk algebra, `lo < 0` for
//! annuli.  Addition widens to the union of windows (lossless); products
//! intersect windows and silently drop out-of-window exponents, recording
//! the loss in a sticky `truncated` flag so tests can audit it.
//!
//! On top of the ring structure sit the Gauss norm, reduction to the
//! residue ring `k[X^(1/p^j)]`, the unit criterion, exponent rescaling
//! `X^(1/p^i) -> X`, Weierstrass preparation at finite precision, and the
//! order of vanishing along a monic polynomial — all exact modulo `t^tprec`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::scalar::{product_of_powers, Exp, Norm, Precision, Scalar, Valuation};

/// Admissible `X`-exponent range `[lo, hi]` of an annulus/disk ring.
///
/// Bounds are hard-capped at `xdeg * p^imax` in absolute value: the nominal
/// working bound is `xdeg`, but rescaled series (integer-exponent images of
/// fractional-exponent series) legitimately reach `xdeg * p^imax`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    lo: Exp,
    hi: Exp,
}

impl Window {
    pub fn new(prec: Precision, lo: Exp, hi: Exp) -> Result<Window> {
        if lo > hi {
            return Err(Error::WindowMismatch);
        }
        let cap = prec.rescaled_degree_bound();
        if hi > cap || -lo > cap {
            return Err(Error::WindowOverflow);
        }
        Ok(Window { lo, hi })
    }

    /// The disk window `[0, xdeg]`.
    pub fn disk(prec: Precision) -> Window {
        Window { lo: Exp::zero(), hi: prec.xdeg() }
    }

    /// The widest window `[-xdeg, xdeg]`.
    pub fn full(prec: Precision) -> Window {
        Window { lo: -prec.xdeg(), hi: prec.xdeg() }
    }

    pub fn lo(&self) -> Exp {
        self.lo
    }

    pub fn hi(&self) -> Exp {
        self.hi
    }

    pub fn contains(&self, e: Exp) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Smallest window containing both (requires overlap).
    pub fn union(&self, other: &Window) -> Result<Window> {
        if !self.overlaps(other) {
            return Err(Error::WindowMismatch);
        }
        Ok(Window { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) })
    }

    /// Common window (requires overlap).
    pub fn intersect(&self, other: &Window) -> Result<Window> {
        if !self.overlaps(other) {
            return Err(Error::WindowMismatch);
        }
        Ok(Window { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) })
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

type CoeffMap = BTreeMap<Exp, Scalar>;

/// A finitely supported series `sum a_n X^n` with `n` in the precision
/// lattice and coefficients exact modulo `t^tprec`.
///
/// Equality compares precision and coefficients; the window is a container
/// property and the `truncated` audit flag is excluded.
#[derive(Clone)]
pub struct PerfSeries {
    coeffs: CoeffMap,
    window: Window,
    prec: Precision,
    truncated: bool,
}

impl PartialEq for PerfSeries {
    fn eq(&self, other: &Self) -> bool {
        self.prec == other.prec && self.coeffs == other.coeffs
    }
}

impl Eq for PerfSeries {}

impl PerfSeries {
    fn normalized(prec: Precision, window: Window, mut coeffs: CoeffMap, truncated: bool) -> PerfSeries {
        coeffs.retain(|_, c| !c.is_zero());
        PerfSeries { coeffs, window, prec, truncated }
    }

    pub fn zero(prec: Precision, window: Window) -> PerfSeries {
        PerfSeries { coeffs: CoeffMap::new(), window, prec, truncated: false }
    }

    pub fn from_terms(prec: Precision, window: Window, terms: &[(Exp, Scalar)]) -> Result<PerfSeries> {
        let mut coeffs = CoeffMap::new();
        for (e, c) in terms {
            if c.precision() != prec {
                return Err(Error::PrecisionMismatch);
            }
            if !prec.admits(*e) {
                return Err(Error::LatticeOverflow);
            }
            if !window.contains(*e) {
                return Err(Error::WindowMismatch);
            }
            let entry = coeffs.entry(*e).or_insert_with(|| Scalar::zero(prec));
            *entry = entry.add(c)?;
        }
        Ok(PerfSeries::normalized(prec, window, coeffs, false))
    }

    /// The constant series `c` (window must contain 0).
    pub fn constant(prec: Precision, window: Window, c: Scalar) -> Result<PerfSeries> {
        PerfSeries::from_terms(prec, window, &[(Exp::zero(), c)])
    }

    pub fn one(prec: Precision, window: Window) -> Result<PerfSeries> {
        PerfSeries::constant(prec, window, Scalar::one(prec))
    }

    /// The monomial `c * X^e`.
    pub fn monomial(prec: Precision, window: Window, e: Exp, c: Scalar) -> Result<PerfSeries> {
        PerfSeries::from_terms(prec, window, &[(e, c)])
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Whether an operation silently dropped out-of-window content while
    /// producing this value (sticky across further operations).
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, e: Exp) -> Scalar {
        self.coeffs.get(&e).cloned().unwrap_or_else(|| Scalar::zero(self.prec))
    }

    pub fn terms(&self) -> impl Iterator<Item = (Exp, &Scalar)> + '_ {
        self.coeffs.iter().map(|(&e, c)| (e, c))
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    /// Smallest exponent in the support.
    pub fn trailing_exp(&self) -> Option<Exp> {
        self.coeffs.keys().next().copied()
    }

    /// Largest exponent in the support.
    pub fn leading_exp(&self) -> Option<Exp> {
        self.coeffs.keys().next_back().copied()
    }

    /// Rebinds the window (support must fit).
    pub fn with_window(&self, window: Window) -> Result<PerfSeries> {
        for e in self.coeffs.keys() {
            if !window.contains(*e) {
                return Err(Error::WindowMismatch);
            }
        }
        Ok(PerfSeries { coeffs: self.coeffs.clone(), window, prec: self.prec, truncated: self.truncated })
    }

    fn check_prec(&self, rhs: &PerfSeries) -> Result<()> {
        if self.prec != rhs.prec {
            return Err(Error::PrecisionMismatch);
        }
        Ok(())
    }

    /// Sum on the union window: lossless, so boundary terms of residual
    /// assemblies survive.  Windows must overlap.
    pub fn add(&self, rhs: &PerfSeries) -> Result<PerfSeries> {
        self.check_prec(rhs)?;
        if !self.window.overlaps(&rhs.window) {
            return Err(Error::WindowMismatch);
        }
        let window = Window {
            lo: self.window.lo.min(rhs.window.lo),
            hi: self.window.hi.max(rhs.window.hi),
        };
        let mut coeffs = self.coeffs.clone();
        for (&e, c) in &rhs.coeffs {
            let entry = coeffs.entry(e).or_insert_with(|| Scalar::zero(self.prec));
            *entry = entry.add(c)?;
        }
        Ok(PerfSeries::normalized(self.prec, window, coeffs, self.truncated || rhs.truncated))
    }

    pub fn neg(&self) -> PerfSeries {
        let coeffs = self.coeffs.iter().map(|(&e, c)| (e, c.neg())).collect();
        PerfSeries { coeffs, window: self.window, prec: self.prec, truncated: self.truncated }
    }

    pub fn sub(&self, rhs: &PerfSeries) -> Result<PerfSeries> {
        self.add(&rhs.neg())
    }

    /// Product on the intersection window.  Out-of-window terms of the
    /// exact product are dropped and recorded in the `truncated` flag.
    pub fn mul(&self, rhs: &PerfSeries) -> Result<PerfSeries> {
        self.check_prec(rhs)?;
        let window = self.window.intersect(&rhs.window)?;
        let mut inside = CoeffMap::new();
        let mut outside = CoeffMap::new();
        for (&ea, ca) in &self.coeffs {
            for (&eb, cb) in &rhs.coeffs {
                let e = ea + eb;
                let target = if window.contains(e) { &mut inside } else { &mut outside };
                let entry = target.entry(e).or_insert_with(|| Scalar::zero(self.prec));
                *entry = entry.add(&ca.mul(cb)?)?;
            }
        }
        let dropped = outside.values().any(|c| !c.is_zero());
        Ok(PerfSeries::normalized(
            self.prec,
            window,
            inside,
            self.truncated || rhs.truncated || dropped,
        ))
    }

    pub fn scalar_mul(&self, c: &Scalar) -> Result<PerfSeries> {
        if c.precision() != self.prec {
            return Err(Error::PrecisionMismatch);
        }
        let mut coeffs = CoeffMap::new();
        for (&e, a) in &self.coeffs {
            coeffs.insert(e, a.mul(c)?);
        }
        Ok(PerfSeries::normalized(self.prec, self.window, coeffs, self.truncated))
    }

    /// Multiplies by `X^e`, shifting support and window together; the
    /// shifted window is clamped to the hard cap, and rogue support is a
    /// `WindowOverflow`.
    pub fn shift_x(&self, e: Exp) -> Result<PerfSeries> {
        if !self.prec.admits(e) {
            return Err(Error::LatticeOverflow);
        }
        let cap = self.prec.rescaled_degree_bound();
        let lo = (self.window.lo + e).max(-cap);
        let hi = (self.window.hi + e).min(cap);
        if lo > hi {
            return Err(Error::WindowOverflow);
        }
        let window = Window { lo, hi };
        let mut coeffs = CoeffMap::new();
        for (&n, c) in &self.coeffs {
            let shifted = n + e;
            if !window.contains(shifted) {
                return Err(Error::WindowOverflow);
            }
            coeffs.insert(shifted, c.clone());
        }
        Ok(PerfSeries { coeffs, window, prec: self.prec, truncated: self.truncated })
    }

    /// Substitutes `X -> c * X`: coefficient `a_n` becomes `a_n * c^n`,
    /// computed exactly per term (fractional powers of `c` by exact
    /// rooting).
    pub fn scale_arg(&self, c: &Scalar) -> Result<PerfSeries> {
        self.scale_arg_pow(c, Exp::one())
    }

    /// Substitutes `X -> c^k * X` exactly per term, without ever storing a
    /// truncated inverse of `c`: coefficient `a_n` becomes `a_n * c^(k*n)`.
    /// `k = -1` is the substitution `X -> X/c`.
    pub fn scale_arg_pow(&self, c: &Scalar, k: Exp) -> Result<PerfSeries> {
        if c.precision() != self.prec {
            return Err(Error::PrecisionMismatch);
        }
        let mut coeffs = CoeffMap::new();
        for (&n, a) in &self.coeffs {
            let scaled = product_of_powers(self.prec, &[(a, Exp::one()), (c, k * n)])?;
            coeffs.insert(n, scaled);
        }
        Ok(PerfSeries::normalized(self.prec, self.window, coeffs, self.truncated))
    }

    /// Evaluates at the scalar point `x`, exactly per term.
    pub fn eval(&self, x: &Scalar) -> Result<Scalar> {
        if x.precision() != self.prec {
            return Err(Error::PrecisionMismatch);
        }
        let mut acc = Scalar::zero(self.prec);
        for (&n, a) in &self.coeffs {
            let term = product_of_powers(self.prec, &[(a, Exp::one()), (x, n)])?;
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// The Gauss norm: the maximum coefficient absolute value.
    pub fn gauss_norm(&self) -> Norm {
        self.coeffs.values().map(|c| c.abs()).max().unwrap_or(Norm::Zero)
    }

    /// Coefficientwise reduction to the residue ring; requires Gauss norm
    /// at most 1.
    pub fn reduce(&self) -> Result<ResiduePoly> {
        let mut coeffs = BTreeMap::new();
        for (&e, c) in &self.coeffs {
            let r = c.reduce()?;
            if !r.is_zero() {
                coeffs.insert(e, r.value());
            }
        }
        Ok(ResiduePoly { coeffs, p: self.prec.p() })
    }

    /// The unit criterion: a norm-1 series is a unit iff its reduction is a
    /// nonzero constant.
    pub fn is_unit(&self) -> Result<bool> {
        if !self.gauss_norm().is_one() {
            return Err(Error::NotNormalized);
        }
        Ok(self.reduce()?.is_nonzero_constant())
    }

    /// The top exponent of the reduction of a norm-1 series.
    pub fn distinguished_order(&self) -> Result<Exp> {
        if !self.gauss_norm().is_one() {
            return Err(Error::NotNormalized);
        }
        let red = self.reduce()?;
        red.top_exponent().ok_or(Error::ZeroReduction)
    }

    /// Rescales exponents by `p^i` (the substitution `X^(1/p^i) -> X` for
    /// positive `i`, its inverse for negative `i`).  A ring isomorphism
    /// onto its image; coefficients are untouched.
    pub fn rescale(&self, i: i32) -> Result<PerfSeries> {
        if i == 0 {
            return Ok(self.clone());
        }
        let p = self.prec.p();
        let cap = self.prec.rescaled_degree_bound();
        let lo = self.window.lo.scale_p(p, i);
        let hi = self.window.hi.scale_p(p, i);
        if hi > cap || -lo > cap {
            return Err(Error::WindowOverflow);
        }
        let window = Window { lo, hi };
        let mut coeffs = CoeffMap::new();
        for (&e, c) in &self.coeffs {
            let scaled = e.scale_p(p, i);
            if i < 0 && !self.prec.admits(scaled) {
                return Err(Error::LatticeOverflow);
            }
            coeffs.insert(scaled, c.clone());
        }
        Ok(PerfSeries { coeffs, window, prec: self.prec, truncated: self.truncated })
    }

    /// The exact `p`-th root: coefficient roots plus exponent division.
    pub fn pth_root(&self) -> Result<PerfSeries> {
        let p = self.prec.p();
        let window = Window {
            lo: self.window.lo.scale_p(p, -1),
            hi: self.window.hi.scale_p(p, -1),
        };
        let mut coeffs = CoeffMap::new();
        for (&e, c) in &self.coeffs {
            let scaled = e.scale_p(p, -1);
            if !self.prec.admits(scaled) {
                return Err(Error::LatticeOverflow);
            }
            coeffs.insert(scaled, c.pth_root()?);
        }
        Ok(PerfSeries { coeffs, window, prec: self.prec, truncated: self.truncated })
    }

    /// The Frobenius power `self^p`: coefficient Frobenius plus exponent
    /// multiplication.
    pub fn frobenius(&self) -> Result<PerfSeries> {
        let p = self.prec.p();
        let cap = self.prec.rescaled_degree_bound();
        let lo = self.window.lo.scale_p(p, 1);
        let hi = self.window.hi.scale_p(p, 1);
        if hi > cap || -lo > cap {
            return Err(Error::WindowOverflow);
        }
        let window = Window { lo, hi };
        let mut coeffs = CoeffMap::new();
        for (&e, c) in &self.coeffs {
            coeffs.insert(e.scale_p(p, 1), c.frobenius());
        }
        Ok(PerfSeries::normalized(self.prec, window, coeffs, self.truncated))
    }
}

impl fmt::Display for PerfSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(e, c)| {
                if c.term_count() > 1 {
                    format!("({c})*X^({e})")
                } else {
                    format!("{c}*X^({e})")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Debug for PerfSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Image of an integral series in `k[X, X^(1/p), ...]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResiduePoly {
    coeffs: BTreeMap<Exp, u32>,
    p: u32,
}

impl ResiduePoly {
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_nonzero_constant(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs.contains_key(&Exp::zero())
    }

    pub fn coeff(&self, e: Exp) -> u32 {
        self.coeffs.get(&e).copied().unwrap_or(0)
    }

    pub fn top_exponent(&self) -> Option<Exp> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Exp, u32)> + '_ {
        self.coeffs.iter().map(|(&e, &d)| (e, d))
    }
}

impl fmt::Display for ResiduePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.coeffs.iter().map(|(e, d)| format!("{d}*X^({e})")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Result of Weierstrass preparation: `input = unit * monic` modulo
/// `t^tprec` on the input window, with `monic` a monic polynomial whose
/// degree is the distinguished order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedForm {
    pub unit: PerfSeries,
    pub monic: PerfSeries,
    pub order: Exp,
}

/// Integer-degree polynomials with scalar coefficients: the raw workspace
/// of preparation and exact division, free of window truncation.
type IntPoly = BTreeMap<i64, Scalar>;

fn ipoly_insert_add(m: &mut IntPoly, deg: i64, c: &Scalar) -> Result<()> {
    match m.get(&deg) {
        Some(prev) => {
            let s = prev.add(c)?;
            if s.is_zero() {
                m.remove(&deg);
            } else {
                m.insert(deg, s);
            }
        }
        None => {
            if !c.is_zero() {
                m.insert(deg, c.clone());
            }
        }
    }
    Ok(())
}

fn ipoly_mul(a: &IntPoly, b: &IntPoly) -> Result<IntPoly> {
    let mut out = IntPoly::new();
    for (&da, ca) in a {
        for (&db, cb) in b {
            ipoly_insert_add(&mut out, da + db, &ca.mul(cb)?)?;
        }
    }
    Ok(out)
}

/// Divides `cur` by the degree-`s` polynomial `a` with invertible top
/// coefficient (`top_inv` its exact inverse): `cur = q*a + r`, `deg r < s`.
/// Exact modulo `t^tprec` because all coefficients are integral and the top
/// coefficient is a valuation-0 unit.
fn ipoly_divmod(cur: &IntPoly, a: &IntPoly, s: i64, top_inv: &Scalar) -> Result<(IntPoly, IntPoly)> {
    let mut q = IntPoly::new();
    let mut r = cur.clone();
    while let Some((&deg, _)) = r.iter().next_back() {
        if deg < s {
            break;
        }
        let c = r[&deg].mul(top_inv)?;
        let shift = deg - s;
        ipoly_insert_add(&mut q, shift, &c)?;
        for (&j, aj) in a {
            let term = c.mul(aj)?.neg();
            ipoly_insert_add(&mut r, shift + j, &term)?;
        }
        // The leading term cancels exactly: c * a_s = r[deg].
        debug_assert!(!r.contains_key(&deg));
    }
    Ok((q, r))
}

fn series_to_ipoly(f: &PerfSeries) -> IntPoly {
    f.terms()
        .map(|(e, c)| {
            debug_assert!(e.is_integer());
            (e.numer(), c.clone())
        })
        .collect()
}

fn ipoly_to_series(prec: Precision, window: Window, m: &IntPoly, truncated: bool) -> PerfSeries {
    let coeffs = m.iter().map(|(&d, c)| (Exp::from_int(d), c.clone())).collect();
    PerfSeries::normalized(prec, window, coeffs, truncated)
}

/// Weierstrass preparation of a Gauss-norm-1 series with non-negative
/// support: `g = unit * monic` with `monic` monic of degree
/// `distinguished_order(g)`, exact modulo `t^tprec` on the window.
pub fn weierstrass_prepare(g: &PerfSeries) -> Result<PreparedForm> {
    let never = AtomicBool::new(false);
    weierstrass_prepare_cancellable(g, &never)
}

/// [`weierstrass_prepare`] with a cooperative cancellation flag, checked
/// once per division round.
pub fn weierstrass_prepare_cancellable(g: &PerfSeries, cancel: &AtomicBool) -> Result<PreparedForm> {
    let prec = g.precision();
    if !g.gauss_norm().is_one() {
        return Err(Error::NotNormalized);
    }
    if let Some(lo) = g.trailing_exp() {
        if lo.is_negative() {
            return Err(Error::NegativeSupport);
        }
    }
    let s = g.distinguished_order()?;
    let out_window = Window::new(prec, Exp::zero(), prec.xdeg())?;

    if s.is_zero() {
        // Unit case: nothing to divide.
        return Ok(PreparedForm {
            unit: g.clone(),
            monic: PerfSeries::one(prec, out_window)?,
            order: s,
        });
    }

    // Rescale to integer exponents.
    let p = prec.p();
    let mut i: u32 = 0;
    for (e, _) in g.terms() {
        i = i.max(e.lattice_depth(p).expect("canonical exponents are in lattice"));
    }
    let big = g.rescale(i as i32)?;
    let cap_deg = {
        let b = prec.rescaled_degree_bound();
        debug_assert!(b.is_integer() || b.numer() >= 0);
        b.floor()
    };
    let s_int = (s.scale_p(p, i as i32)).numer();
    debug_assert!(s.scale_p(p, i as i32).is_integer());

    let gm = series_to_ipoly(&big);
    // Split at the distinguished degree: a carries the top unit
    // coefficient, b := a - g is strictly smaller than 1 in Gauss norm.
    let mut a = IntPoly::new();
    let mut b = IntPoly::new();
    for (&d, c) in &gm {
        if d <= s_int {
            a.insert(d, c.clone());
        } else {
            b.insert(d, c.neg());
        }
    }
    let top = a.get(&s_int).cloned().ok_or(Error::ZeroReduction)?;
    debug_assert!(top.abs().is_one());
    let top_inv = top.inv()?;

    let max_rounds = (prec.tprec() * 64).ceil().max(4) as usize;

    // Iterate x^s = q_k * a + r_k, cur <- q_k * b: the correction shrinks
    // by at least p^(-1/p^imax) per round, so `cur` dies at precision.
    let mut cur = IntPoly::new();
    cur.insert(s_int, Scalar::one(prec));
    let mut q_total = IntPoly::new();
    let mut r_total = IntPoly::new();
    let mut rounds = 0usize;
    while !cur.is_empty() {
        if cancel.load(Ordering::Relaxed) {
            return Err(Error::Cancelled);
        }
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::NonTermination);
        }
        let (qk, rk) = ipoly_divmod(&cur, &a, s_int, &top_inv)?;
        for (&d, c) in &qk {
            ipoly_insert_add(&mut q_total, d, c)?;
        }
        for (&d, c) in &rk {
            ipoly_insert_add(&mut r_total, d, c)?;
        }
        cur = ipoly_mul(&qk, &b)?;
    }

    // x^s = q*g + r at precision, so monic = x^s - r and unit = q^{-1}.
    let mut h_int = IntPoly::new();
    h_int.insert(s_int, Scalar::one(prec));
    for (&d, c) in &r_total {
        ipoly_insert_add(&mut h_int, d, &c.neg())?;
    }

    let (u_int, u_truncated) = ipoly_inv_unit(&q_total, cap_deg, prec, max_rounds, cancel)?;

    let rescaled_window = Window::new(prec, Exp::zero(), prec.rescaled_degree_bound())?;
    let h = ipoly_to_series(prec, rescaled_window, &h_int, false).rescale(-(i as i32))?;
    let u_wide = ipoly_to_series(prec, rescaled_window, &u_int, u_truncated).rescale(-(i as i32))?;

    // Clamp the unit to the nominal window; dropped tail terms only affect
    // exponents beyond the window of any product with the monic part.
    let mut u_coeffs = CoeffMap::new();
    let mut clipped = u_truncated;
    for (e, c) in u_wide.terms() {
        if e <= prec.xdeg() {
            u_coeffs.insert(e, c.clone());
        } else {
            clipped = true;
        }
    }
    let unit = PerfSeries::normalized(prec, out_window, u_coeffs, clipped);
    let monic = h.with_window(out_window).unwrap_or(h);

    Ok(PreparedForm { unit, monic, order: s })
}

/// Inverts a unit integer polynomial (valuation-0 constant term, all other
/// coefficients of positive valuation) as a power series, keeping degrees
/// `<= cap`.  Returns the truncation flag (true when the inverse has a tail
/// beyond the cap or the series is genuinely infinite).
fn ipoly_inv_unit(
    q: &IntPoly,
    cap: i64,
    prec: Precision,
    max_rounds: usize,
    cancel: &AtomicBool,
) -> Result<(IntPoly, bool)> {
    let q0 = q.get(&0).cloned().ok_or(Error::DivisionByZero)?;
    let q0_inv = q0.inv()?;
    // m := q/q0 - 1 has positive-valuation coefficients and positive degrees.
    let mut neg_m = IntPoly::new();
    for (&d, c) in q {
        if d == 0 {
            continue;
        }
        if d <= cap {
            neg_m.insert(d, c.mul(&q0_inv)?.neg());
        }
    }
    if neg_m.is_empty() {
        let mut out = IntPoly::new();
        out.insert(0, q0_inv);
        return Ok((out, false));
    }
    let mut acc = IntPoly::new();
    acc.insert(0, Scalar::one(prec));
    let mut pw = acc.clone();
    let mut rounds = 0usize;
    loop {
        if cancel.load(Ordering::Relaxed) {
            return Err(Error::Cancelled);
        }
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::NonTermination);
        }
        let mut next = ipoly_mul(&pw, &neg_m)?;
        next.retain(|&d, _| d <= cap);
        if next.is_empty() {
            break;
        }
        for (&d, c) in &next {
            ipoly_insert_add(&mut acc, d, c)?;
        }
        pw = next;
    }
    let mut out = IntPoly::new();
    for (&d, c) in &acc {
        out.insert(d, c.mul(&q0_inv)?);
    }
    Ok((out, true))
}

/// Order of vanishing of a nonzero series along a monic integer-exponent
/// polynomial `phi` with nonzero constant term: the largest `c/p^i` such
/// that `phi^(c/p^i)` divides the series, found by exact division counting
/// after rescaling.
///
/// `phi` must be monic with integral (valuation >= 0) coefficients, integer
/// exponents, and a nonzero constant coefficient; anything else is
/// `UnsupportedPoint`.
pub fn ord_along(g: &PerfSeries, phi: &PerfSeries) -> Result<Exp> {
    let prec = g.precision();
    if phi.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    if g.is_zero() {
        return Err(Error::DivisionByZero);
    }
    validate_divisor_poly(phi)?;

    // Normalize away the annulus shift and the scalar content so that the
    // Gauss norm is exactly 1; neither changes orders at nonzero points.
    let mut work = g.clone();
    if let Some(lo) = work.trailing_exp() {
        if lo.is_negative() {
            work = work.shift_x(-lo)?;
        }
    }
    let minval = work
        .terms()
        .map(|(_, c)| c.valuation())
        .min()
        .and_then(|v| v.finite())
        .expect("nonzero series has finite minimum valuation");
    let unit_scale = Scalar::t_pow(prec, -minval)?;
    work = work.scalar_mul(&unit_scale)?;

    let prepared = weierstrass_prepare(&work)?;
    if prepared.order.is_zero() {
        return Ok(Exp::zero());
    }
    let h = prepared.monic;

    let p = prec.p();
    let mut i: u32 = 0;
    for (e, _) in h.terms() {
        i = i.max(e.lattice_depth(p).expect("canonical exponents are in lattice"));
    }
    let big = h.rescale(i as i32)?;

    // phi(Y^(p^i)) = d(Y)^(p^i) where d has the p^i-th roots of phi's
    // coefficients; fractional orders are division counts by d over p^i.
    let mut d = IntPoly::new();
    for (e, c) in phi.terms() {
        d.insert(e.numer(), c.rescale_t(-(i as i32))?);
    }
    let s_d = *d.keys().next_back().expect("phi is nonzero");
    let top_inv = d[&s_d].inv()?;

    let mut count: i64 = 0;
    let mut curm = series_to_ipoly(&big);
    loop {
        let (q, r) = ipoly_divmod(&curm, &d, s_d, &top_inv)?;
        if !r.is_empty() || q.is_empty() {
            break;
        }
        count += 1;
        curm = q;
    }
    Ok(Exp::new(count, 1).scale_p(p, -(i as i32)))
}

fn validate_divisor_poly(phi: &PerfSeries) -> Result<()> {
    let top = match phi.leading_exp() {
        Some(e) if e.is_integer() && e.is_positive() => e,
        _ => return Err(Error::UnsupportedPoint),
    };
    if !phi.coeff(top).is_one() {
        return Err(Error::UnsupportedPoint);
    }
    if phi.coeff(Exp::zero()).is_zero() {
        return Err(Error::UnsupportedPoint);
    }
    for (e, c) in phi.terms() {
        if !e.is_integer() || e.is_negative() {
            return Err(Error::UnsupportedPoint);
        }
        if matches!(c.valuation(), Valuation::Finite(v) if v.is_negative()) {
            return Err(Error::UnsupportedPoint);
        }
    }
    Ok(())
}

/// A quotient of two series; the denominator is nonzero.  Equality is
/// cross-multiplication at precision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalFn {
    num: PerfSeries,
    den: PerfSeries,
}

impl RationalFn {
    pub fn new(num: PerfSeries, den: PerfSeries) -> Result<RationalFn> {
        if num.precision() != den.precision() {
            return Err(Error::PrecisionMismatch);
        }
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(RationalFn { num, den })
    }

    pub fn from_series(f: PerfSeries) -> RationalFn {
        let prec = f.precision();
        let den = PerfSeries::one(prec, Window::full(prec)).expect("full window contains 0");
        RationalFn { num: f, den }
    }

    pub fn num(&self) -> &PerfSeries {
        &self.num
    }

    pub fn den(&self) -> &PerfSeries {
        &self.den
    }

    pub fn precision(&self) -> Precision {
        self.num.precision()
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn mul(&self, rhs: &RationalFn) -> Result<RationalFn> {
        RationalFn::new(self.num.mul(&rhs.num)?, self.den.mul(&rhs.den)?)
    }

    pub fn inv(&self) -> Result<RationalFn> {
        RationalFn::new(self.den.clone(), self.num.clone())
    }

    pub fn scale_arg(&self, c: &Scalar) -> Result<RationalFn> {
        RationalFn::new(self.num.scale_arg(c)?, self.den.scale_arg(c)?)
    }

    /// Equality at precision by cross-multiplication.
    pub fn eq_at_precision(&self, rhs: &RationalFn) -> Result<bool> {
        let lhs = self.num.mul(&rhs.den)?;
        let r = rhs.num.mul(&self.den)?;
        Ok(lhs.sub(&r)?.gauss_norm().is_zero())
    }
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
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

    fn sc(pr: Precision, terms: &[(i64, i64, u32)]) -> Scalar {
        Scalar::from_terms(pr, terms).unwrap()
    }

    fn poly(pr: Precision, window: Window, terms: &[(i64, i64, Scalar)]) -> PerfSeries {
        let pairs: Vec<(Exp, Scalar)> = terms.iter().map(|(n, d, c)| (e(*n, *d), c.clone())).collect();
        PerfSeries::from_terms(pr, window, &pairs).unwrap()
    }

    #[test]
    fn product_of_binomials_odd_p() {
        let pr = prec(3, 1, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let f = poly(pr, w, &[(0, 1, one.clone()), (1, 1, one.clone())]); // 1 + X
        let g = poly(pr, w, &[(0, 1, one.clone()), (1, 1, one.neg())]); // 1 - X
        let prod = f.mul(&g).unwrap();
        let expected = poly(pr, w, &[(0, 1, one.clone()), (2, 1, one.neg())]);
        assert_eq!(prod, expected);
        assert!(!prod.truncated());
    }

    #[test]
    fn char_two_square_of_half_power() {
        let pr = prec(2, 2, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let f = poly(pr, w, &[(0, 1, one.clone()), (1, 2, one.clone())]); // 1 + X^(1/2)
        let sq = f.mul(&f).unwrap();
        let expected = poly(pr, w, &[(0, 1, one.clone()), (1, 1, one)]);
        assert_eq!(sq, expected, "(1 + X^(1/2))^2 = 1 + X in characteristic 2");
    }

    #[test]
    fn annulus_product_collapses_to_one() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::full(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let tinv = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        let f = PerfSeries::monomial(pr, w, Exp::one(), t).unwrap(); // tX
        let g = PerfSeries::monomial(pr, w, e(-1, 1), tinv).unwrap(); // t^{-1} X^{-1}
        let prod = f.mul(&g).unwrap();
        assert_eq!(prod, PerfSeries::one(pr, w).unwrap());
    }

    #[test]
    fn gauss_norm_examples() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::full(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let t2 = Scalar::t_pow(pr, e(2, 1)).unwrap();
        let tinv = Scalar::t_pow(pr, e(-1, 1)).unwrap();

        let f = poly(pr, w, &[(0, 1, one), (1, 1, t.clone())]); // 1 + tX
        assert!(f.gauss_norm().is_one());
        let g = poly(pr, w, &[(1, 1, t), (0, 1, t2)]); // tX + t^2
        assert_eq!(g.gauss_norm(), Norm::PowerOfP(e(-1, 1)));
        let h = poly(pr, w, &[(1, 1, tinv)]); // t^{-1} X
        assert_eq!(h.gauss_norm(), Norm::PowerOfP(e(1, 1)));
        assert_eq!(PerfSeries::zero(pr, w).gauss_norm(), Norm::Zero);
    }

    #[test]
    fn reduction_examples() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::full(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();

        let f = poly(pr, w, &[(3, 1, t.clone()), (1, 2, one.clone())]); // tX^3 + X^{1/2}
        let red = f.reduce().unwrap();
        assert_eq!(red.top_exponent(), Some(e(1, 2)));
        assert_eq!(red.coeff(e(1, 2)), 1);
        assert_eq!(red.coeff(e(3, 1)), 0);

        let g = poly(pr, w, &[(0, 1, one.add(&t).unwrap()), (1, 1, one.clone())]); // (1+t) + X
        let redg = g.reduce().unwrap();
        assert_eq!(redg.coeff(Exp::zero()), 1);
        assert_eq!(redg.coeff(Exp::one()), 1);

        let tinv = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        let h = poly(pr, w, &[(1, 1, tinv)]);
        assert_eq!(h.reduce(), Err(Error::NotIntegral));
    }

    #[test]
    fn unit_criterion() {
        let pr = prec(3, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let two = Scalar::from_digit(pr, 2);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();

        let f = poly(pr, w, &[(0, 1, one.clone()), (1, 1, t.clone())]); // 1 + tX
        assert!(f.is_unit().unwrap());
        let g = poly(pr, w, &[(1, 3, one.clone()), (0, 1, t.clone())]); // X^{1/3} + t
        assert!(!g.is_unit().unwrap());
        let h = poly(pr, w, &[(0, 1, two), (1, 1, one)]); // 2 + X
        assert!(!h.is_unit().unwrap());
        let small = poly(pr, w, &[(0, 1, t)]);
        assert_eq!(small.is_unit(), Err(Error::NotNormalized));
    }

    #[test]
    fn distinguished_order_examples() {
        let pr = prec(2, 1, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();

        let f = poly(pr, w, &[(3, 1, t.clone()), (1, 2, one.clone())]);
        assert_eq!(f.distinguished_order().unwrap(), e(1, 2));
        let g = poly(pr, w, &[(0, 1, one.clone()), (1, 1, one.clone()), (5, 1, t)]);
        assert_eq!(g.distinguished_order().unwrap(), Exp::one());
        let c = poly(pr, w, &[(0, 1, Scalar::from_digit(pr, 3))]); // 3 = 1 mod 2
        assert_eq!(c.distinguished_order().unwrap(), Exp::zero());
    }

    #[test]
    fn rescale_matches_worked_degree_example() {
        let pr = prec(2, 2, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let f = poly(pr, w, &[(5, 1, one.clone()), (1, 4, one)]); // X^5 + X^{1/4}
        let up = f.rescale(2).unwrap();
        assert_eq!(up.leading_exp(), Some(e(20, 1)));
        assert_eq!(up.trailing_exp(), Some(Exp::one()));
        assert_eq!(up.rescale(-2).unwrap(), f);
        assert_eq!(f.rescale(0).unwrap(), f);
    }

    #[test]
    fn rescale_is_ring_homomorphism() {
        let pr = prec(2, 2, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let f = poly(pr, w, &[(0, 1, one.clone()), (1, 2, t.clone())]);
        let g = poly(pr, w, &[(1, 4, one.clone()), (1, 1, one)]);
        let lhs = f.mul(&g).unwrap().rescale(2).unwrap();
        let rhs = f.rescale(2).unwrap().mul(&g.rescale(2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        let lhs2 = f.add(&g).unwrap().rescale(2).unwrap();
        let rhs2 = f.rescale(2).unwrap().add(&g.rescale(2).unwrap()).unwrap();
        assert_eq!(lhs2, rhs2);
    }

    #[test]
    fn rescale_window_overflow() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        // X^4 rescaled by p^2 = 4 would need degree 16 > xdeg * p^imax = 8.
        let f = poly(pr, w, &[(4, 1, one.clone())]);
        assert_eq!(f.rescale(2), Err(Error::WindowOverflow));
        // Deep roots exceed the lattice going down: 3/4 needs denominator 4.
        let g = poly(pr, w, &[(3, 1, one)]);
        assert_eq!(g.rescale(-2), Err(Error::LatticeOverflow));
    }

    #[test]
    fn mul_records_out_of_window_truncation() {
        let pr = prec(2, 1, 8, 2);
        let w = Window::disk(pr); // [0, 2]
        let one = Scalar::one(pr);
        let f = poly(pr, w, &[(2, 1, one.clone())]); // X^2
        let prod = f.mul(&f).unwrap(); // X^4 falls outside [0, 2]
        assert!(prod.is_zero());
        assert!(prod.truncated());
        // The flag is sticky through further arithmetic.
        let g = poly(pr, w, &[(0, 1, one)]);
        assert!(prod.add(&g).unwrap().truncated());
    }

    #[test]
    fn add_uses_union_window_and_disjoint_windows_fail() {
        let pr = prec(2, 1, 8, 8);
        let wa = Window::new(pr, e(0, 1), e(2, 1)).unwrap();
        let wb = Window::new(pr, e(2, 1), e(5, 1)).unwrap();
        let one = Scalar::one(pr);
        let f = poly(pr, wa, &[(1, 1, one.clone())]);
        let g = poly(pr, wb, &[(4, 1, one.clone())]);
        let sum = f.add(&g).unwrap();
        assert_eq!(sum.window().lo(), e(0, 1));
        assert_eq!(sum.window().hi(), e(5, 1));
        assert_eq!(sum.coeff(e(4, 1)), one);

        let wc = Window::new(pr, e(6, 1), e(8, 1)).unwrap();
        let h = poly(pr, wc, &[(7, 1, one)]);
        assert_eq!(f.add(&h).unwrap_err(), Error::WindowMismatch);
        assert_eq!(f.mul(&h).unwrap_err(), Error::WindowMismatch);
    }

    #[test]
    fn pth_root_and_frobenius_round_trip() {
        let pr = prec(2, 2, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t2 = Scalar::t_pow(pr, e(2, 1)).unwrap();
        let f = poly(pr, w, &[(2, 1, t2), (0, 1, one)]); // 1 + t^2 X^2
        let r = f.pth_root().unwrap();
        // sqrt(1 + t^2 X^2) = 1 + t X in characteristic 2.
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let expected = poly(pr, w, &[(1, 1, t), (0, 1, Scalar::one(pr))]);
        assert_eq!(r, expected);
        assert_eq!(r.frobenius().unwrap(), f);
        assert_eq!(r.mul(&r).unwrap(), f);
    }

    #[test]
    fn scale_arg_is_exact_substitution() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::full(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let tinv = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        let f = PerfSeries::monomial(pr, w, Exp::one(), t).unwrap(); // tX
        let g = f.scale_arg(&tinv).unwrap(); // X -> t^{-1} X gives X
        assert_eq!(g, PerfSeries::monomial(pr, w, Exp::one(), Scalar::one(pr)).unwrap());
        // Fractional exponent: X^{1/2} -> (t^{-1})^{1/2} X^{1/2} = t^{-1/2} X^{1/2}.
        let h = PerfSeries::monomial(pr, w, e(1, 2), Scalar::one(pr)).unwrap();
        let hs = h.scale_arg(&tinv).unwrap();
        assert_eq!(hs.coeff(e(1, 2)), Scalar::t_pow(pr, e(-1, 2)).unwrap());
    }

    #[test]
    fn eval_sums_exact_terms() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let f = poly(pr, w, &[(0, 1, one.clone()), (1, 1, one.clone()), (2, 1, one)]);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        // f(t) = 1 + t + t^2
        let v = f.eval(&t).unwrap();
        assert_eq!(v, sc(pr, &[(0, 1, 1), (1, 1, 1), (2, 1, 1)]));
    }

    #[test]
    fn prepare_already_monic_fractional_binomial() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        // X^{1/2} - t = X^{1/2} + t in characteristic 2.
        let g = poly(pr, w, &[(1, 2, one), (0, 1, t)]);
        let pf = weierstrass_prepare(&g).unwrap();
        assert_eq!(pf.order, e(1, 2));
        assert_eq!(pf.monic, g);
        assert!(pf.unit.is_unit().unwrap());
        let back = pf.unit.mul(&pf.monic).unwrap();
        assert!(back.sub(&g).unwrap().gauss_norm().is_zero());
    }

    #[test]
    fn prepare_factors_unit_times_linear() {
        let pr = prec(2, 0, 16, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        // g = (1 + tX)(X - t); multiply-back is the oracle.
        let u_true = poly(pr, w, &[(0, 1, one.clone()), (1, 1, t.clone())]);
        let lin = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]);
        let g = u_true.mul(&lin).unwrap();
        let pf = weierstrass_prepare(&g).unwrap();
        assert_eq!(pf.order, Exp::one());
        assert_eq!(pf.monic, lin, "monic part is X + t (= X - t mod 2)");
        assert!(pf.unit.is_unit().unwrap());
        let back = pf.unit.mul(&pf.monic).unwrap();
        assert!(back.sub(&g).unwrap().gauss_norm().is_zero());
        // The unit is an infinite power series truncated to the window.
        assert!(pf.unit.truncated());
    }

    #[test]
    fn prepare_unit_input_returns_trivial_monic() {
        let pr = prec(3, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let g = poly(pr, w, &[(0, 1, one.clone()), (2, 1, t)]);
        let pf = weierstrass_prepare(&g).unwrap();
        assert_eq!(pf.order, Exp::zero());
        assert_eq!(pf.unit, g);
        assert!(pf.monic.is_unit().unwrap());
    }

    #[test]
    fn prepare_worked_rescaling_case() {
        // X^5 + X^{1/4}: distinguished order 5, degree 20 after rescaling.
        let pr = prec(2, 2, 8, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let g = poly(pr, w, &[(5, 1, one.clone()), (1, 4, one)]);
        let pf = weierstrass_prepare(&g).unwrap();
        assert_eq!(pf.order, e(5, 1));
        assert_eq!(pf.monic, g, "already monic: unit is 1");
        assert_eq!(
            pf.monic.rescale(2).unwrap().leading_exp(),
            Some(e(20, 1)),
            "degree 5*p^2 = 20 in the rescaled variable"
        );
        let back = pf.unit.mul(&pf.monic).unwrap();
        assert!(back.sub(&g).unwrap().gauss_norm().is_zero());
    }

    #[test]
    fn prepare_rejects_unnormalized_and_negative_support() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::full(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let small = poly(pr, w, &[(1, 1, t)]);
        assert_eq!(weierstrass_prepare(&small).unwrap_err(), Error::NotNormalized);
        let one = Scalar::one(pr);
        let ann = poly(pr, w, &[(-1, 1, one.clone()), (0, 1, one)]);
        assert_eq!(weierstrass_prepare(&ann).unwrap_err(), Error::NegativeSupport);
    }

    #[test]
    fn prepare_monic_part_ignores_unit_cofactors() {
        // Uniqueness at precision: multiplying by a unit leaves the monic
        // part unchanged.
        let pr = prec(2, 0, 12, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let g = poly(
            pr,
            w,
            &[(0, 1, t.clone()), (1, 1, one.clone()), (3, 1, t.clone())],
        );
        let v = poly(pr, w, &[(0, 1, one.clone()), (2, 1, t.clone())]);
        let gv = g.mul(&v).unwrap();
        let h1 = weierstrass_prepare(&g).unwrap().monic;
        let h2 = weierstrass_prepare(&gv).unwrap().monic;
        assert_eq!(h1, h2);
    }

    #[test]
    fn prepare_cancellation_flag_aborts() {
        let pr = prec(2, 0, 16, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let g = poly(pr, w, &[(0, 1, t.clone()), (1, 1, one), (3, 1, t)]);
        let cancelled = AtomicBool::new(true);
        assert_eq!(
            weierstrass_prepare_cancellable(&g, &cancelled).unwrap_err(),
            Error::Cancelled
        );
    }

    #[test]
    fn ord_along_counts_exact_divisions() {
        let pr = prec(2, 1, 12, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let t2 = Scalar::t_pow(pr, e(2, 1)).unwrap();
        let phi = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]); // X + t

        // (X - t)^2 = X^2 + t^2 in characteristic 2: order 2.
        let num = poly(pr, w, &[(2, 1, one.clone()), (0, 1, t2.clone())]);
        assert_eq!(ord_along(&num, &phi).unwrap(), e(2, 1));
        // X + t^2: order 0 along X + t.
        let den = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t2)]);
        assert_eq!(ord_along(&den, &phi).unwrap(), Exp::zero());
        // X - t at the point 1 (phi = X + 1): no vanishing.
        let phi1 = poly(pr, w, &[(1, 1, one.clone()), (0, 1, one.clone())]);
        let lin = poly(pr, w, &[(1, 1, one), (0, 1, t)]);
        assert_eq!(ord_along(&lin, &phi1).unwrap(), Exp::zero());
    }

    #[test]
    fn ord_along_fractional_multiplicity() {
        let pr = prec(2, 1, 12, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let thalf = Scalar::t_pow(pr, e(1, 2)).unwrap();
        // (X + t)^{1/2} = X^{1/2} + t^{1/2}: order 1/2 along X + t.
        let g = poly(pr, w, &[(1, 2, one.clone()), (0, 1, thalf)]);
        let phi = poly(pr, w, &[(1, 1, one), (0, 1, t)]);
        assert_eq!(ord_along(&g, &phi).unwrap(), e(1, 2));
    }

    #[test]
    fn ord_along_is_additive_on_products() {
        let pr = prec(2, 0, 16, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let phi = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]);
        let f = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]); // X + t
        let g = poly(pr, w, &[(0, 1, one.clone()), (1, 1, t.clone())]); // 1 + tX (unit)
        let h = poly(pr, w, &[(1, 1, one), (0, 1, t.mul(&t).unwrap())]); // X + t^2
        let prod = f.mul(&f).unwrap().mul(&g).unwrap().mul(&h).unwrap();
        let o = ord_along(&prod, &phi).unwrap();
        let sum = ord_along(&f, &phi).unwrap() * 2 + ord_along(&g, &phi).unwrap() + ord_along(&h, &phi).unwrap();
        assert_eq!(o, sum);
        assert_eq!(o, e(2, 1));
    }

    #[test]
    fn ord_along_rejects_bad_polynomials() {
        let pr = prec(2, 1, 8, 4);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let g = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]);
        // Nonzero constant term required (points avoid the origin).
        let x = poly(pr, w, &[(1, 1, one.clone())]);
        assert_eq!(ord_along(&g, &x).unwrap_err(), Error::UnsupportedPoint);
        // Monic required.
        let two_x = poly(pr, w, &[(1, 1, t.clone()), (0, 1, one.clone())]);
        assert_eq!(ord_along(&g, &two_x).unwrap_err(), Error::UnsupportedPoint);
        // Integer exponents required.
        let frac = poly(pr, w, &[(1, 2, one.clone()), (0, 1, one)]);
        assert_eq!(ord_along(&g, &frac).unwrap_err(), Error::UnsupportedPoint);
    }

    #[test]
    fn rational_fn_cross_multiplication_equality() {
        let pr = prec(2, 0, 12, 8);
        let w = Window::disk(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let a = poly(pr, w, &[(1, 1, one.clone()), (0, 1, t.clone())]);
        let b = poly(pr, w, &[(0, 1, one.clone()), (1, 1, t)]);
        let f = RationalFn::new(a.clone(), b.clone()).unwrap();
        // (a*b)/(b*b) equals a/b by cross-multiplication.
        let g = RationalFn::new(a.mul(&b).unwrap(), b.mul(&b).unwrap()).unwrap();
        assert!(f.eq_at_precision(&g).unwrap());
        let h = RationalFn::new(b.clone(), a).unwrap();
        assert!(!f.eq_at_precision(&h).unwrap());
        assert_eq!(
            RationalFn::new(b.clone(), PerfSeries::zero(pr, w)).unwrap_err(),
            Error::DivisionByZero
        );
        let _ = RationalFn::from_series(b);
    }

    #[test]
    fn gauss_norm_is_multiplicative_on_samples() {
        let pr = prec(3, 1, 10, 6);
        let w = Window::full(pr);
        let one = Scalar::one(pr);
        let t = Scalar::t_pow(pr, Exp::one()).unwrap();
        let tinv = Scalar::t_pow(pr, e(-1, 1)).unwrap();
        let two = Scalar::from_digit(pr, 2);
        let samples = [
            poly(pr, w, &[(0, 1, one.clone()), (1, 1, t.clone())]),
            poly(pr, w, &[(-1, 1, tinv), (1, 3, two)]),
            poly(pr, w, &[(2, 1, t.clone()), (0, 1, t)]),
        ];
        for f in &samples {
            for g in &samples {
                let prod = f.mul(g).unwrap();
                if prod.truncated() {
                    continue;
                }
                assert_eq!(prod.gauss_norm(), f.gauss_norm().mul(&g.gauss_norm()));
            }
        }
    }
}
