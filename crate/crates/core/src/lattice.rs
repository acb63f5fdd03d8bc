//! Points on the quotient curve, divisors with fractional multiplicities,
//! truncated theta products, and the degree / class / dimension formulas
//! built on them.
//!
//! A point of the punctured disk modulo multiplication by `q` is recorded
//! through one representative: its absolute-value exponent, its degree over
//! the base field, its inseparability degree, and the norm of the
//! representative down to the base field.  Rational points carry their value
//! directly (the value *is* the norm) plus an optional vanishing polynomial
//! used for order computations.  Non-rational points participate in the
//! degree and class formulas through their recorded data alone; series-level
//! constructions that would need their coordinates reject them.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{
    product_of_powers, q_power_class, q_power_class_within, Exp, Norm, Precision, Scalar,
    Valuation,
};
use crate::series::{ord_along, PerfSeries, RationalFn, Window};

/// How many auxiliary unit candidates `1 + t^k` are tried before the
/// deterministic point pool gives up.
const POOL_CAP: i64 = 48;

/// Checks that `q` is a usable period: finite positive valuation below the
/// working t-precision.  Returns `val(q)`.
fn modulus_valuation(q: &Scalar) -> Result<Exp> {
    match q.valuation() {
        Valuation::Finite(v) if v.is_positive() && v < q.precision().tprec() => Ok(v),
        _ => Err(Error::BadModulus),
    }
}

/// The largest exponent appearing in a nonzero scalar.
fn top_exponent(a: &Scalar) -> Exp {
    a.terms().last().map(|(e, _)| e).unwrap_or_else(Exp::zero)
}

/// A closed point of the quotient curve, described by one representative.
///
/// Two specifications are considered the same point when every recorded
/// datum except the optional vanishing polynomial agrees; the polynomial is
/// auxiliary evaluation data, not part of the identity.
#[derive(Clone, Debug)]
pub struct PointSpec {
    label: String,
    absval_exp: Exp,
    deg_over_k: u32,
    insep_deg: u32,
    norm: Scalar,
    min_poly: Option<PerfSeries>,
}

impl PointSpec {
    /// A rational point with coordinate `value`; the norm is the value
    /// itself.  When the value lies in the closed unit disk a vanishing
    /// polynomial `X - value` is attached automatically.
    pub fn rational(label: impl Into<String>, value: Scalar) -> Result<PointSpec> {
        let prec = value.precision();
        let val = match value.valuation() {
            Valuation::Finite(v) => v,
            Valuation::Infinite => return Err(Error::UnsupportedPoint),
        };
        let min_poly = if !val.is_negative() {
            Some(PerfSeries::from_terms(
                prec,
                Window::disk(prec),
                &[
                    (Exp::one(), Scalar::one(prec)),
                    (Exp::zero(), value.neg()),
                ],
            )?)
        } else {
            None
        };
        Ok(PointSpec {
            label: label.into(),
            absval_exp: val,
            deg_over_k: 1,
            insep_deg: 1,
            norm: value,
            min_poly,
        })
    }

    /// A point given by its field-theoretic data.  Consistency demanded:
    /// `deg_over_k >= 1`, the inseparability degree is a power of `p`
    /// dividing `deg_over_k`, and `val(norm) = deg_over_k * absval_exp`.
    pub fn from_data(
        label: impl Into<String>,
        absval_exp: Exp,
        deg_over_k: u32,
        insep_deg: u32,
        norm: Scalar,
        min_poly: Option<PerfSeries>,
    ) -> Result<PointSpec> {
        let prec = norm.precision();
        if deg_over_k == 0 || insep_deg == 0 || deg_over_k % insep_deg != 0 {
            return Err(Error::UnsupportedPoint);
        }
        let mut e = insep_deg;
        while e > 1 {
            if e % prec.p() != 0 {
                return Err(Error::UnsupportedPoint);
            }
            e /= prec.p();
        }
        match norm.valuation() {
            Valuation::Finite(v) if v == absval_exp * deg_over_k as i64 => {}
            _ => return Err(Error::UnsupportedPoint),
        }
        Ok(PointSpec {
            label: label.into(),
            absval_exp,
            deg_over_k,
            insep_deg,
            norm,
            min_poly,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `-log_p` of the representative's absolute value.
    pub fn absval_exp(&self) -> Exp {
        self.absval_exp
    }

    pub fn deg_over_k(&self) -> u32 {
        self.deg_over_k
    }

    pub fn insep_deg(&self) -> u32 {
        self.insep_deg
    }

    /// Norm of the representative down to the base field; equals the
    /// coordinate for rational points.
    pub fn norm(&self) -> &Scalar {
        &self.norm
    }

    pub fn min_poly(&self) -> Option<&PerfSeries> {
        self.min_poly.as_ref()
    }

    pub fn is_rational(&self) -> bool {
        self.deg_over_k == 1
    }

    /// The coordinate of a rational point.
    pub fn value(&self) -> Option<&Scalar> {
        if self.is_rational() {
            Some(&self.norm)
        } else {
            None
        }
    }

    fn identity_key(&self) -> (&str, Exp, u32, u32, &Scalar) {
        (
            self.label.as_str(),
            self.absval_exp,
            self.deg_over_k,
            self.insep_deg,
            &self.norm,
        )
    }
}

impl PartialEq for PointSpec {
    fn eq(&self, other: &Self) -> bool {
        self.identity_key() == other.identity_key()
    }
}

impl Eq for PointSpec {}

impl PartialOrd for PointSpec {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PointSpec {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.identity_key().cmp(&other.identity_key())
    }
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.label)
    }
}

/// A divisor: finitely many points with multiplicities in the exponent
/// lattice `(1/p^imax) * Z`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divisor {
    points: BTreeMap<PointSpec, Exp>,
    prec: Precision,
}

impl Divisor {
    pub fn empty(prec: Precision) -> Divisor {
        Divisor { points: BTreeMap::new(), prec }
    }

    pub fn from_parts(prec: Precision, parts: Vec<(PointSpec, Exp)>) -> Result<Divisor> {
        let mut d = Divisor::empty(prec);
        for (pt, m) in parts {
            if pt.norm().precision() != prec {
                return Err(Error::PrecisionMismatch);
            }
            if !prec.admits(m) {
                return Err(Error::LatticeOverflow);
            }
            let entry = d.points.entry(pt).or_insert_with(Exp::zero);
            *entry = *entry + m;
        }
        d.points.retain(|_, m| !m.is_zero());
        Ok(d)
    }

    pub fn single(prec: Precision, pt: PointSpec, mult: Exp) -> Result<Divisor> {
        Divisor::from_parts(prec, vec![(pt, mult)])
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn support_len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> impl Iterator<Item = (&PointSpec, Exp)> + '_ {
        self.points.iter().map(|(pt, m)| (pt, *m))
    }

    pub fn mult_at(&self, pt: &PointSpec) -> Exp {
        self.points.get(pt).copied().unwrap_or_else(Exp::zero)
    }

    pub fn add(&self, rhs: &Divisor) -> Result<Divisor> {
        if self.prec != rhs.prec {
            return Err(Error::PrecisionMismatch);
        }
        let mut points = self.points.clone();
        for (pt, m) in &rhs.points {
            let entry = points.entry(pt.clone()).or_insert_with(Exp::zero);
            *entry = *entry + *m;
        }
        points.retain(|_, m| !m.is_zero());
        Ok(Divisor { points, prec: self.prec })
    }

    pub fn neg(&self) -> Divisor {
        let points = self.points.iter().map(|(pt, m)| (pt.clone(), -*m)).collect();
        Divisor { points, prec: self.prec }
    }

    pub fn sub(&self, rhs: &Divisor) -> Result<Divisor> {
        self.add(&rhs.neg())
    }

    /// Scales every multiplicity by `k`; fails when a scaled multiplicity
    /// leaves the exponent lattice.
    pub fn scale(&self, k: Exp) -> Result<Divisor> {
        let mut points = BTreeMap::new();
        for (pt, m) in &self.points {
            let scaled = *m * k;
            if !self.prec.admits(scaled) {
                return Err(Error::LatticeOverflow);
            }
            if !scaled.is_zero() {
                points.insert(pt.clone(), scaled);
            }
        }
        Ok(Divisor { points, prec: self.prec })
    }

    /// Degree weighted by residue-field degree: `sum deg_over_k * mult`.
    pub fn deg_q(&self) -> Exp {
        let mut d = Exp::zero();
        for (pt, m) in &self.points {
            d = d + *m * pt.deg_over_k() as i64;
        }
        d
    }

    /// The largest lattice depth among the multiplicities: the smallest `j`
    /// with every multiplicity in `(1/p^j) * Z`.
    pub fn denom_depth(&self) -> u32 {
        self.points
            .values()
            .filter_map(|m| m.lattice_depth(self.prec.p()))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Divisor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.points.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .points
            .iter()
            .map(|(pt, m)| format!("({m})*{pt}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// A divisor on the quotient curve: a divisor whose support is normalized
/// into the fundamental annulus `0 <= absval_exp < val(q)`, together with
/// the period `q`.
#[derive(Clone, Debug)]
pub struct PeriodicDivisor {
    fundamental: Divisor,
    q: Scalar,
}

impl PeriodicDivisor {
    pub fn new(fundamental: Divisor, q: Scalar) -> Result<PeriodicDivisor> {
        if fundamental.precision() != q.precision() {
            return Err(Error::PrecisionMismatch);
        }
        let vq = modulus_valuation(&q)?;
        for (pt, _) in fundamental.points() {
            if pt.absval_exp().is_negative() || !(pt.absval_exp() < vq) {
                return Err(Error::UnsupportedPoint);
            }
        }
        Ok(PeriodicDivisor { fundamental, q })
    }

    pub fn fundamental(&self) -> &Divisor {
        &self.fundamental
    }

    pub fn modulus(&self) -> &Scalar {
        &self.q
    }

    pub fn precision(&self) -> Precision {
        self.fundamental.precision()
    }

    pub fn deg_q(&self) -> Exp {
        self.fundamental.deg_q()
    }

    pub fn denom_depth(&self) -> u32 {
        self.fundamental.denom_depth()
    }

    pub fn add(&self, rhs: &PeriodicDivisor) -> Result<PeriodicDivisor> {
        if self.q != rhs.q {
            return Err(Error::BadModulus);
        }
        PeriodicDivisor::new(self.fundamental.add(&rhs.fundamental)?, self.q.clone())
    }

    pub fn neg(&self) -> PeriodicDivisor {
        PeriodicDivisor { fundamental: self.fundamental.neg(), q: self.q.clone() }
    }

    pub fn scale(&self, k: Exp) -> Result<PeriodicDivisor> {
        Ok(PeriodicDivisor { fundamental: self.fundamental.scale(k)?, q: self.q.clone() })
    }
}

/// A class of the quotient group `K^x / q^(lattice powers)`, stored through
/// a representative normalized to have valuation in `[0, val(q))` (or
/// valuation zero when the exact lattice power of `q` exists).
#[derive(Clone, Debug)]
pub struct JacobiClass {
    rep: Scalar,
    q: Scalar,
}

impl JacobiClass {
    pub fn new(rep: Scalar, q: Scalar) -> Result<JacobiClass> {
        if rep.precision() != q.precision() {
            return Err(Error::PrecisionMismatch);
        }
        let vq = modulus_valuation(&q)?;
        let prec = rep.precision();
        let v = match rep.valuation() {
            Valuation::Finite(v) => v,
            Valuation::Infinite => return Err(Error::DivisionByZero),
        };
        let exact_m = v.div(vq);
        let rep = if prec.admits(exact_m) {
            match product_of_powers(prec, &[(&rep, Exp::one()), (&q, -exact_m)]) {
                Ok(r) => r,
                Err(Error::LatticeOverflow) => {
                    let m0 = Exp::from_int(exact_m.floor());
                    product_of_powers(prec, &[(&rep, Exp::one()), (&q, -m0)])?
                }
                Err(e) => return Err(e),
            }
        } else {
            let m0 = Exp::from_int(exact_m.floor());
            product_of_powers(prec, &[(&rep, Exp::one()), (&q, -m0)])?
        };
        Ok(JacobiClass { rep, q })
    }

    pub fn one(prec: Precision, q: Scalar) -> Result<JacobiClass> {
        JacobiClass::new(Scalar::one(prec), q)
    }

    pub fn rep(&self) -> &Scalar {
        &self.rep
    }

    pub fn modulus(&self) -> &Scalar {
        &self.q
    }

    /// Whether the class is the identity: the representative is an exact
    /// lattice power of `q` at working precision.
    pub fn is_one(&self) -> Result<bool> {
        let one = Scalar::one(self.rep.precision());
        Ok(q_power_class(&self.rep, &one, &self.q)?.is_some())
    }

    pub fn equivalent(&self, other: &JacobiClass) -> Result<bool> {
        if self.q != other.q {
            return Err(Error::BadModulus);
        }
        Ok(q_power_class(&self.rep, &other.rep, &self.q)?.is_some())
    }

    /// Class equality up to a Gauss-norm tolerance on the residual.
    pub fn equivalent_within(&self, other: &JacobiClass, tol: &Norm) -> Result<bool> {
        if self.q != other.q {
            return Err(Error::BadModulus);
        }
        Ok(q_power_class_within(&self.rep, &other.rep, &self.q, tol)?.is_some())
    }
}

impl fmt::Display for JacobiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.rep)
    }
}

/// Image of a divisor in the class group: the product of `norm^mult` over
/// the support, computed exactly in one multi-factor power product.
pub fn jacobi_image(d: &PeriodicDivisor) -> Result<JacobiClass> {
    let prec = d.precision();
    let factors: Vec<(&Scalar, Exp)> =
        d.fundamental().points().map(|(pt, m)| (pt.norm(), m)).collect();
    let rep = product_of_powers(prec, &factors)?;
    JacobiClass::new(rep, d.modulus().clone())
}

/// The two-sided principality test: degree zero and trivial class image.
pub fn abel_jacobi_check(d: &PeriodicDivisor) -> Result<bool> {
    if !d.deg_q().is_zero() {
        return Ok(false);
    }
    jacobi_image(d)?.is_one()
}

/// Builds the unit `1 + t^k` of the auxiliary point pool.
fn pool_unit(prec: Precision, k: i64) -> Result<Scalar> {
    Scalar::from_terms(prec, &[(0, 1, 1), (k, 1, 1)])
}

/// True when every listed value lies in a distinct `q`-power class and none
/// of them falls in the class of `avoid`.
fn classes_distinct(values: &[&Scalar], avoid: Option<&Scalar>, q: &Scalar) -> Result<bool> {
    for (i, a) in values.iter().enumerate() {
        for b in values.iter().skip(i + 1) {
            if q_power_class(a, b, q)?.is_some() {
                return Ok(false);
            }
        }
        if let Some(b) = avoid {
            if q_power_class(a, b, q)?.is_some() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A degree-zero divisor with trivial class image whose multiplicity at the
/// given point is exactly `1/p^i`, built from a deterministic pool of
/// auxiliary rational points.
///
/// For a rational point `a` the divisor is
/// `(1/p^i) * ([a] + [u*v] - [a*u] - [v])` with pool units `u = 1 + t^k`,
/// `v = 1 + t^l`; the pool exponents are pre-checked so that every product
/// is exactly representable below the t-precision, which makes the class
/// image the exact identity.
///
/// For a non-rational point of degree `D` the auxiliary points are a pool
/// unit `u` with multiplicity `(p^i*(1+s) - D)/p^i`, the root point
/// `tau = q^(1/p)` with multiplicity `-s` (where `s = max(0, ceil(D/p^i) - 1)`
/// absorbs the excess degree), and the balancing value
/// `v = norm^(1/p^i) * u^(...) * tau^s` with multiplicity `-1`, normalized
/// into the fundamental annulus.  The class image is then a lattice power of
/// `q`, hence exactly trivial.
///
/// An optional `avoid` point is kept out of the support (as a `q`-power
/// class); when no pool choice satisfies every constraint the construction
/// reports `PoolExhausted`.
pub fn principal_divisor_at(
    alpha: &PointSpec,
    i: u32,
    q: &Scalar,
    avoid: Option<&PointSpec>,
) -> Result<PeriodicDivisor> {
    let prec = alpha.norm().precision();
    if q.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    if i > prec.imax() {
        return Err(Error::LatticeOverflow);
    }
    let vq = modulus_valuation(q)?;
    if alpha.absval_exp().is_negative() || !(alpha.absval_exp() < vq) {
        return Err(Error::UnsupportedPoint);
    }
    let m = Exp::one().scale_p(prec.p(), -(i as i32));
    if let Some(b) = avoid {
        if b == alpha {
            return Err(Error::PoolExhausted);
        }
    }
    let avoid_value = avoid.and_then(|b| b.value());
    if let (Some(a), Some(b)) = (alpha.value(), avoid_value) {
        if q_power_class(a, b, q)?.is_some() {
            return Err(Error::PoolExhausted);
        }
    }

    if let Some(a) = alpha.value() {
        // Rational case: all four products must stay exactly representable.
        let top_a = top_exponent(a);
        for k in 1..=POOL_CAP {
            if !(top_a + Exp::from_int(k) < prec.tprec()) {
                break;
            }
            let u = pool_unit(prec, k)?;
            let au = a.mul(&u)?;
            for l in 1..=POOL_CAP {
                if l == k || !(Exp::from_int(k + l) < prec.tprec()) {
                    continue;
                }
                let v = pool_unit(prec, l)?;
                let uv = u.mul(&v)?;
                if !classes_distinct(&[a, &uv, &au, &v], avoid_value, q)? {
                    continue;
                }
                let parts = vec![
                    (alpha.clone(), m),
                    (PointSpec::rational(format!("u{k}v{l}"), uv)?, m),
                    (
                        PointSpec::rational(format!("{}*u{k}", alpha.label()), au)?,
                        -m,
                    ),
                    (PointSpec::rational(format!("v{l}"), v)?, -m),
                ];
                let d = Divisor::from_parts(prec, parts)?;
                return PeriodicDivisor::new(d, q.clone());
            }
        }
        return Err(Error::PoolExhausted);
    }

    // Non-rational case.
    let deg = alpha.deg_over_k() as i64;
    let pi = (prec.p() as i64).pow(i);
    let s = (Exp::new(deg, pi) - Exp::one()).ceil().max(0);
    let u_mult = Exp::from_int(1 + s) - Exp::new(deg, pi);
    debug_assert!(!u_mult.is_negative() && prec.admits(u_mult));
    let tau = if s > 0 { Some(q.pth_root()?) } else { None };
    let n_top = top_exponent(alpha.norm()).scale_p(prec.p(), -(i as i32));
    let q_top = top_exponent(q);
    for k in 1..=POOL_CAP {
        // Exact-representability bound for the balancing product.
        let v_top = n_top + u_mult * k + q_top.scale_p(prec.p(), -1) * s;
        if !(v_top < prec.tprec()) {
            break;
        }
        let u = pool_unit(prec, k)?;
        let mut factors: Vec<(&Scalar, Exp)> = vec![(alpha.norm(), m), (&u, u_mult)];
        if let Some(tau) = &tau {
            factors.push((tau, Exp::from_int(s)));
        }
        let v_raw = product_of_powers(prec, &factors)?;
        let v_val = v_raw.valuation().finite().ok_or(Error::DivisionByZero)?;
        let shift = Exp::from_int(v_val.div(vq).floor());
        let v = product_of_powers(prec, &[(&v_raw, Exp::one()), (q, -shift)])?;
        let mut check: Vec<&Scalar> = vec![&u, &v];
        if let Some(tau) = &tau {
            check.push(tau);
        }
        if !classes_distinct(&check, avoid_value, q)? {
            continue;
        }
        let mut parts = vec![(alpha.clone(), m)];
        if !u_mult.is_zero() {
            parts.push((PointSpec::rational(format!("u{k}"), u)?, u_mult));
        }
        if let Some(tau) = tau.clone() {
            parts.push((PointSpec::rational("tau", tau)?, -Exp::from_int(s)));
        }
        parts.push((PointSpec::rational(format!("v{k}"), v)?, -Exp::one()));
        let d = Divisor::from_parts(prec, parts)?;
        debug_assert!(d.deg_q().is_zero());
        return PeriodicDivisor::new(d, q.clone());
    }
    Err(Error::PoolExhausted)
}

/// A truncated theta function together with its ideal transformation data.
#[derive(Clone, Debug)]
pub struct ThetaData {
    /// The truncated product as a quotient of windowed series; absent when
    /// the construction only carries transformation data.
    pub series: Option<RationalFn>,
    /// Degree of the transformation law the full product satisfies.
    pub degree: Exp,
    /// Multiplicator of the transformation law (class representative).
    pub multiplicator: Scalar,
    /// Truncation parameter: lattice sites `|n| <= trunc` enter the product.
    pub trunc: i64,
}

/// The fundamental truncated theta product
/// `prod_(0 <= n <= T) (1 - q^n / X) * prod_(0 < n <= T) (1 - q^n X)`.
///
/// The full product transforms with degree 1 and multiplicator 1 under
/// `X -> q X`; the truncation satisfies the same law up to a residual whose
/// Gauss norm shrinks like `|q|^T`.
pub fn theta_fundamental(q: &Scalar, trunc: i64, prec: Precision) -> Result<ThetaData> {
    if q.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    modulus_valuation(q)?;
    if trunc < 0 {
        return Err(Error::InvalidPrecision("theta truncation must be >= 0".into()));
    }
    let window = Window::new(prec, Exp::from_int(-(trunc + 1)), Exp::from_int(trunc + 1))?;
    let mut prod = PerfSeries::one(prec, window)?;
    for n in 0..=trunc {
        let c = q.pow_i64(n)?;
        let factor = PerfSeries::from_terms(
            prec,
            window,
            &[(Exp::zero(), Scalar::one(prec)), (Exp::from_int(-1), c.neg())],
        )?;
        prod = prod.mul(&factor)?;
    }
    for n in 1..=trunc {
        let c = q.pow_i64(n)?;
        let factor = PerfSeries::from_terms(
            prec,
            window,
            &[(Exp::zero(), Scalar::one(prec)), (Exp::one(), c.neg())],
        )?;
        prod = prod.mul(&factor)?;
    }
    let den = PerfSeries::one(prec, window)?;
    Ok(ThetaData {
        series: Some(RationalFn::new(prod, den)?),
        degree: Exp::one(),
        multiplicator: Scalar::one(prec),
        trunc,
    })
}

/// Theta attached to a point: for a rational point with coordinate `a` this
/// is the fundamental product evaluated at `X / a` (computed exactly per
/// coefficient), transforming with degree 1 and multiplicator `a`.  For a
/// non-rational point only the transformation data `(deg_over_k, norm)` is
/// returned.
pub fn theta_at_point(
    pt: &PointSpec,
    q: &Scalar,
    trunc: i64,
    prec: Precision,
) -> Result<ThetaData> {
    if pt.norm().precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    match pt.value() {
        Some(a) => {
            let base = theta_fundamental(q, trunc, prec)?;
            let series = base
                .series
                .as_ref()
                .expect("fundamental theta always carries a series")
                .num()
                .scale_arg_pow(a, Exp::from_int(-1))?;
            let den = PerfSeries::one(prec, series.window())?;
            Ok(ThetaData {
                series: Some(RationalFn::new(series, den)?),
                degree: Exp::one(),
                multiplicator: a.clone(),
                trunc,
            })
        }
        None => {
            modulus_valuation(q)?;
            Ok(ThetaData {
                series: None,
                degree: Exp::from_int(pt.deg_over_k() as i64),
                multiplicator: pt.norm().clone(),
                trunc,
            })
        }
    }
}

/// Theta attached to a divisor: the product over the support of the
/// point-thetas raised to the multiplicities, with fractional powers taken
/// as exact factor-wise roots.  The series is assembled only when every
/// point is rational; the transformation data `(deg_q, class image)` is
/// always present.
pub fn theta_of_divisor(d: &PeriodicDivisor, trunc: i64, prec: Precision) -> Result<ThetaData> {
    if d.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    if trunc < 0 {
        return Err(Error::InvalidPrecision("theta truncation must be >= 0".into()));
    }
    let q = d.modulus();
    let degree = d.deg_q();
    let class = jacobi_image(d)?;
    let all_rational = d.fundamental().points().all(|(pt, _)| pt.is_rational());
    if !all_rational {
        return Ok(ThetaData {
            series: None,
            degree,
            multiplicator: class.rep().clone(),
            trunc,
        });
    }

    let mut extent = Exp::zero();
    for (_, m) in d.fundamental().points() {
        extent = extent + m.abs() * (trunc + 1);
    }
    let window = Window::new(prec, -extent, extent)?;
    let mut num = PerfSeries::one(prec, window)?;
    let mut den = PerfSeries::one(prec, window)?;
    for (pt, m) in d.fundamental().points() {
        let a = pt.value().expect("all points rational here");
        let depth = m
            .lattice_depth(prec.p())
            .ok_or(Error::LatticeOverflow)?;
        let pj = (prec.p() as i64).pow(depth);
        let k = m.numer();
        debug_assert_eq!(m.denom(), pj);
        let step = Exp::new(1, pj);
        let mut rooted = PerfSeries::one(prec, window)?;
        for n in 0..=trunc {
            let c = product_of_powers(prec, &[(q, Exp::new(n, pj)), (a, step)])?;
            let factor = PerfSeries::from_terms(
                prec,
                window,
                &[(Exp::zero(), Scalar::one(prec)), (-step, c.neg())],
            )?;
            rooted = rooted.mul(&factor)?;
        }
        for n in 1..=trunc {
            let c = product_of_powers(prec, &[(q, Exp::new(n, pj)), (a, -step)])?;
            let factor = PerfSeries::from_terms(
                prec,
                window,
                &[(Exp::zero(), Scalar::one(prec)), (step, c.neg())],
            )?;
            rooted = rooted.mul(&factor)?;
        }
        for _ in 0..k.unsigned_abs() {
            if k > 0 {
                num = num.mul(&rooted)?;
            } else {
                den = den.mul(&rooted)?;
            }
        }
    }
    Ok(ThetaData {
        series: Some(RationalFn::new(num, den)?),
        degree,
        multiplicator: class.rep().clone(),
        trunc,
    })
}

/// Finds the coefficient pivot of a nonzero series: the smallest exponent
/// among the coefficients of maximal Gauss norm.
fn norm_pivot(f: &PerfSeries) -> Option<(Exp, Scalar)> {
    let mut best: Option<(Exp, Scalar, Norm)> = None;
    for (e, c) in f.terms() {
        let n = c.abs();
        match &best {
            Some((_, _, bn)) if &n <= bn => {}
            _ => best = Some((e, c.clone(), n)),
        }
    }
    best.map(|(e, c, _)| (e, c))
}

/// Reads off the transformation law of a (truncated) theta quotient under
/// `X -> X / q`: returns the degree `d` and multiplicator `a` with
/// `f(X/q) = (-X)^d * f(X) / a`, verified coefficientwise up to the given
/// Gauss-norm tolerance, and snapped to the first matching representative of
/// the dictionary (classes modulo lattice powers of `q`).
pub fn extract_degree_multiplicator_within(
    f: &RationalFn,
    q: &Scalar,
    tol: &Norm,
    dict: &[Scalar],
) -> Result<(Exp, Scalar)> {
    let prec = f.precision();
    if q.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    modulus_valuation(q)?;
    if f.is_zero() {
        return Err(Error::NotTheta);
    }
    let minus = Exp::from_int(-1);
    let a_side = f.num().scale_arg_pow(q, minus)?.mul(f.den())?;
    let b_side = f.num().mul(&f.den().scale_arg_pow(q, minus)?)?;
    let (pa, ca) = norm_pivot(&a_side).ok_or(Error::NotTheta)?;
    let (pb, cb) = norm_pivot(&b_side).ok_or(Error::NotTheta)?;
    let d = pa - pb;
    let ratio = product_of_powers(prec, &[(&ca, Exp::one()), (&cb, Exp::from_int(-1))])?;
    let residual = a_side.sub(&b_side.shift_x(d)?.scalar_mul(&ratio)?)?;
    if !(residual.gauss_norm() <= *tol) {
        return Err(Error::NotTheta);
    }
    // f(X/q) = (-X)^d f(X)/a  =>  pivot ratio = (-1)^d / a.
    let mut mult = product_of_powers(prec, &[(&ratio, Exp::from_int(-1))])?;
    if prec.p() != 2 && d.numer() % 2 != 0 {
        mult = mult.mul(&Scalar::from_digit(prec, prec.p() - 1))?;
    }
    for rep in dict {
        if q_power_class_within(&mult, rep, q, tol)?.is_some() {
            return Ok((d, rep.clone()));
        }
    }
    Ok((d, mult))
}

/// Exact transformation-law extraction with the identity as the only
/// dictionary entry.
pub fn extract_degree_multiplicator(f: &RationalFn, q: &Scalar) -> Result<(Exp, Scalar)> {
    let one = Scalar::one(f.precision());
    extract_degree_multiplicator_within(f, q, &Norm::Zero, &[one])
}

/// Dimension of the space of level-`i` sections attached to a divisor with
/// multiplicity denominators at most `p^i`: `p^i * deg` for positive degree,
/// the principality indicator for degree zero, and `0` for negative degree.
pub fn riemann_roch_dimension(d: &PeriodicDivisor, i: u32) -> Result<u64> {
    let prec = d.precision();
    if i > prec.imax() {
        return Err(Error::LatticeOverflow);
    }
    if d.denom_depth() > i {
        return Err(Error::DenominatorMismatch);
    }
    let deg = d.deg_q();
    if deg.is_positive() {
        let scaled = deg.scale_p(prec.p(), i as i32);
        debug_assert!(scaled.is_integer());
        Ok(scaled.numer() as u64)
    } else if deg.is_zero() {
        Ok(if abel_jacobi_check(d)? { 1 } else { 0 })
    } else {
        Ok(0)
    }
}

/// A rational function with the given divisor on the disk: the product over
/// the support of two-term factors `(1 - a/X)` (unit-disk rational points),
/// `(1 - inv(a) X)` (outside points, best effort at working precision), or
/// `min_poly(X) / X^deg` (non-rational points carrying a vanishing
/// polynomial), raised to the multiplicities with exact factor-wise roots.
pub fn function_of_divisor(d: &Divisor) -> Result<RationalFn> {
    let prec = d.precision();
    let mut extent = Exp::zero();
    for (pt, m) in d.points() {
        extent = extent + m.abs() * pt.deg_over_k() as i64;
    }
    let window = Window::new(prec, -extent, extent)?;
    let mut num = PerfSeries::one(prec, window)?;
    let mut den = PerfSeries::one(prec, window)?;
    for (pt, m) in d.points() {
        let depth = m.lattice_depth(prec.p()).ok_or(Error::LatticeOverflow)?;
        let pj = (prec.p() as i64).pow(depth);
        let k = m.numer();
        debug_assert_eq!(m.denom(), pj);
        let step = Exp::new(1, pj);
        let base = match pt.value() {
            Some(a) if !pt.absval_exp().is_negative() => {
                let root = a.pow_exp(step)?;
                PerfSeries::from_terms(
                    prec,
                    window,
                    &[(Exp::zero(), Scalar::one(prec)), (-step, root.neg())],
                )?
            }
            Some(a) => {
                let root = a.inv()?.pow_exp(step)?;
                PerfSeries::from_terms(
                    prec,
                    window,
                    &[(Exp::zero(), Scalar::one(prec)), (step, root.neg())],
                )?
            }
            None => {
                let phi = pt.min_poly().ok_or(Error::UnsupportedPoint)?;
                let mut rooted = phi.with_window(window)?;
                for _ in 0..depth {
                    rooted = rooted.pth_root()?;
                }
                rooted.shift_x(Exp::new(-(pt.deg_over_k() as i64), pj))?
            }
        };
        for _ in 0..k.unsigned_abs() {
            if k > 0 {
                num = num.mul(&base)?;
            } else {
                den = den.mul(&base)?;
            }
        }
    }
    RationalFn::new(num, den)
}

/// Order of vanishing of a rational function at a point, through the point's
/// vanishing polynomial; the zero function has infinite order.
pub fn ord_at(f: &RationalFn, pt: &PointSpec) -> Result<Valuation> {
    if f.is_zero() {
        return Ok(Valuation::Infinite);
    }
    let phi = pt.min_poly().ok_or(Error::UnsupportedPoint)?;
    let num_ord = ord_along(f.num(), phi)?;
    let den_ord = ord_along(f.den(), phi)?;
    Ok(Valuation::Finite(num_ord - den_ord))
}

/// Divisor of a rational function restricted to a candidate support list.
pub fn divisor_of(f: &RationalFn, candidates: &[PointSpec]) -> Result<Divisor> {
    if f.is_zero() {
        return Err(Error::DivisionByZero);
    }
    let prec = f.precision();
    let mut parts = Vec::new();
    for pt in candidates {
        match ord_at(f, pt)? {
            Valuation::Finite(v) if !v.is_zero() => parts.push((pt.clone(), v)),
            _ => {}
        }
    }
    Divisor::from_parts(prec, parts)
}
