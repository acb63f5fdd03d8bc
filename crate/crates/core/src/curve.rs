//! The annulus cover of the quotient curve, its two-term Čech complex and
//! cohomology, line-bundle Euler characteristics, the fractional-exponent
//! curve family, and the convergence diagnostic for the fractional
//! Weierstrass-type series.
//!
//! The curve is covered by two annuli whose intersection is a pair of
//! circles.  Every ring of the cover carries a normalized monomial family in
//! which all restriction and gluing maps act with unit or explicit q-power
//! factors, so the boundary map decomposes into small exponent-indexed
//! blocks and its kernel and cokernel dimensions are exact at any finite
//! truncation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{abel_jacobi_check, jacobi_image, JacobiClass, PeriodicDivisor};
use crate::scalar::{product_of_powers, Exp, Norm, Precision, Scalar, Valuation};

/// The five pieces of the standard cover: two annuli, their two boundary
/// circles, and the outer circle that is glued onto the inner one.
///
/// With `|q| < 1` the pieces are: `U0` is the annulus `|q| <= |X| <=
/// |q|^(-1)`, `U1` the annulus `|q|^2 <= |X| <= |q|`, `U01Plus` the circle
/// `|X| = |q|`, `U01Minus` the circle `|X| = |q|^2`, and `U0Plus` the circle
/// `|X| = |q|^(-1)`, identified with `U01Minus` by `X -> X / q^3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnulusId {
    U0,
    U1,
    U01Plus,
    U01Minus,
    U0Plus,
}

/// An element of one cover ring in its normalized monomial family.
///
/// `main` and `aux` hold the two one-sided families of an annulus:
/// for `U0` the coefficients on `(qX)^n` (n > 0) and on `(q/X)^n` (n >= 0,
/// constant included); for `U1` the coefficients on `(X/q)^n` (n >= 0,
/// constant included) and on `(q^2/X)^n` (n > 0).  The circles carry a
/// single two-sided family in `main`: `(X/q)^n` on `U01Plus`, `(X/q^2)^n`
/// on `U01Minus`, `(qX)^n` on `U0Plus`; `aux` stays empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CechElement {
    annulus: AnnulusId,
    prec: Precision,
    main: BTreeMap<Exp, Scalar>,
    aux: BTreeMap<Exp, Scalar>,
}

fn check_support(
    prec: Precision,
    coeffs: &BTreeMap<Exp, Scalar>,
    lo_open: bool,
    two_sided: bool,
) -> Result<()> {
    for (&n, c) in coeffs {
        if c.precision() != prec {
            return Err(Error::PrecisionMismatch);
        }
        if !prec.admits(n) {
            return Err(Error::LatticeOverflow);
        }
        if n.abs() > prec.xdeg() {
            return Err(Error::WindowOverflow);
        }
        if !two_sided {
            if n.is_negative() || (lo_open && n.is_zero()) {
                return Err(Error::WindowOverflow);
            }
        }
    }
    Ok(())
}

impl CechElement {
    /// Builds an element after validating each family's exponent shape.
    pub fn new(
        annulus: AnnulusId,
        prec: Precision,
        main: BTreeMap<Exp, Scalar>,
        aux: BTreeMap<Exp, Scalar>,
    ) -> Result<CechElement> {
        match annulus {
            AnnulusId::U0 => {
                check_support(prec, &main, true, false)?;
                check_support(prec, &aux, false, false)?;
            }
            AnnulusId::U1 => {
                check_support(prec, &main, false, false)?;
                check_support(prec, &aux, true, false)?;
            }
            _ => {
                check_support(prec, &main, false, true)?;
                if !aux.is_empty() {
                    return Err(Error::WindowOverflow);
                }
            }
        }
        let mut el = CechElement { annulus, prec, main, aux };
        el.main.retain(|_, c| !c.is_zero());
        el.aux.retain(|_, c| !c.is_zero());
        Ok(el)
    }

    pub fn zero(annulus: AnnulusId, prec: Precision) -> CechElement {
        CechElement { annulus, prec, main: BTreeMap::new(), aux: BTreeMap::new() }
    }

    pub fn annulus(&self) -> AnnulusId {
        self.annulus
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn is_zero(&self) -> bool {
        self.main.is_empty() && self.aux.is_empty()
    }

    pub fn main_coeff(&self, n: Exp) -> Scalar {
        self.main.get(&n).cloned().unwrap_or_else(|| Scalar::zero(self.prec))
    }

    pub fn aux_coeff(&self, n: Exp) -> Scalar {
        self.aux.get(&n).cloned().unwrap_or_else(|| Scalar::zero(self.prec))
    }

    pub fn main_coeffs(&self) -> impl Iterator<Item = (Exp, &Scalar)> + '_ {
        self.main.iter().map(|(&n, c)| (n, c))
    }

    pub fn aux_coeffs(&self) -> impl Iterator<Item = (Exp, &Scalar)> + '_ {
        self.aux.iter().map(|(&n, c)| (n, c))
    }

    pub fn add(&self, rhs: &CechElement) -> Result<CechElement> {
        if self.annulus != rhs.annulus || self.prec != rhs.prec {
            return Err(Error::PrecisionMismatch);
        }
        let mut out = self.clone();
        for (&n, c) in &rhs.main {
            let entry = out.main.entry(n).or_insert_with(|| Scalar::zero(self.prec));
            *entry = entry.add(c)?;
        }
        for (&n, c) in &rhs.aux {
            let entry = out.aux.entry(n).or_insert_with(|| Scalar::zero(self.prec));
            *entry = entry.add(c)?;
        }
        out.main.retain(|_, c| !c.is_zero());
        out.aux.retain(|_, c| !c.is_zero());
        Ok(out)
    }
}

/// Which boundary map the complex carries.
#[derive(Clone, Debug, PartialEq)]
pub enum CechVariant {
    /// The untwisted complex: kernel and cokernel are one-dimensional.
    Plain,
    /// The second ring is first multiplied by `X^n - 1`, which makes the
    /// boundary map surjective.
    UnitShifted(Exp),
}

/// An immutable description of the truncated complex.
#[derive(Clone, Debug)]
pub struct CechComplexData {
    q: Scalar,
    prec: Precision,
    variant: CechVariant,
}

impl CechComplexData {
    pub fn new(q: Scalar, prec: Precision, variant: CechVariant) -> Result<CechComplexData> {
        if q.precision() != prec {
            return Err(Error::PrecisionMismatch);
        }
        match q.valuation() {
            Valuation::Finite(v) if v.is_positive() && v < prec.tprec() => {}
            _ => return Err(Error::BadModulus),
        }
        if let CechVariant::UnitShifted(n0) = &variant {
            if n0.is_zero() || !prec.admits(*n0) || n0.abs() > prec.xdeg() {
                return Err(Error::InvalidPrecision(
                    "unit-shift exponent must be a nonzero lattice exponent within the degree bound"
                        .into(),
                ));
            }
        }
        Ok(CechComplexData { q, prec, variant })
    }

    pub fn modulus(&self) -> &Scalar {
        &self.q
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn variant(&self) -> &CechVariant {
        &self.variant
    }
}

fn q_pow(prec: Precision, q: &Scalar, e: Exp) -> Result<Scalar> {
    product_of_powers(prec, &[(q, e)])
}

/// The gluing of the outer circle onto the inner one by `X -> X / q^3`:
/// the coefficient on `(qX)^n` becomes the coefficient on `(X/q^2)^n`
/// unchanged, since `qX -> X/q^2`.
pub fn glue_to_u01minus(x: &CechElement) -> Result<CechElement> {
    if x.annulus != AnnulusId::U0Plus {
        return Err(Error::UnsupportedPoint);
    }
    CechElement::new(AnnulusId::U01Minus, x.prec, x.main.clone(), BTreeMap::new())
}

/// Multiplies an element of the second annulus ring by `X^n0 - 1`,
/// re-expressed in the ring's own normalized families.  Products whose
/// exponent leaves the truncation range `|n| <= xdeg` are dropped.
pub fn multiply_u1(f1: &CechElement, n0: Exp, q: &Scalar) -> Result<CechElement> {
    if f1.annulus != AnnulusId::U1 {
        return Err(Error::UnsupportedPoint);
    }
    let prec = f1.prec;
    if n0.is_zero() || !prec.admits(n0) {
        return Err(Error::InvalidPrecision("shift exponent must be nonzero lattice".into()));
    }
    let mut main: BTreeMap<Exp, Scalar> = BTreeMap::new();
    let mut aux: BTreeMap<Exp, Scalar> = BTreeMap::new();
    let push = |dst: &mut BTreeMap<Exp, Scalar>, n: Exp, c: Scalar| -> Result<()> {
        if n.abs() > prec.xdeg() {
            return Ok(()); // truncated away
        }
        let entry = dst.entry(n).or_insert_with(|| Scalar::zero(prec));
        *entry = entry.add(&c)?;
        Ok(())
    };
    // The identity part contributes -1 in place.
    for (n, c) in &f1.main {
        push(&mut main, *n, c.neg())?;
    }
    for (n, c) in &f1.aux {
        push(&mut aux, *n, c.neg())?;
    }
    // The X^n0 part: c_n (X/q)^n * X^n0 sits at raw exponent n + n0;
    // d_n (q^2/X)^n * X^n0 at raw exponent n0 - n.  Raw exponent m >= 0
    // re-normalizes into the (X/q)-family with factor q^m over the raw
    // coefficient, m < 0 into the (q^2/X)-family with factor q^(-2m).
    for (n, c) in &f1.main {
        let m = *n + n0;
        // raw coefficient is c * q^(-n); the target factor follows.
        if !m.is_negative() {
            let factor = q_pow(prec, q, m - *n)?;
            push(&mut main, m, c.mul(&factor)?)?;
        } else {
            let factor = q_pow(prec, q, -*n - m - m)?;
            push(&mut aux, -m, c.mul(&factor)?)?;
        }
    }
    for (n, c) in &f1.aux {
        let m = n0 - *n;
        // raw coefficient is c * q^(2n).
        if !m.is_negative() {
            let factor = q_pow(prec, q, *n + *n + m)?;
            push(&mut main, m, c.mul(&factor)?)?;
        } else {
            let factor = q_pow(prec, q, *n + *n - m - m)?;
            push(&mut aux, -m, c.mul(&factor)?)?;
        }
    }
    CechElement::new(AnnulusId::U1, prec, main, aux)
}

/// The boundary map of the two-term complex: restriction differences on the
/// two intersection circles.
///
/// Each one-sided family restricts to the boundary circle where its
/// monomials are normalized: `(q/X)^n` and `(X/q)^n` meet on the inner
/// common circle, `(qX)^n` (through the gluing) and `(q^2/X)^n` on the
/// outer one.  Both rings' constants are carried to the inner circle's
/// constant slot, so the outer constant has no source and cannot be lifted.
/// Under the unit-shifted variant the second argument is first multiplied
/// by `X^n0 - 1` and the constant of the product is absorbed into the
/// other one-sided family, re-routing it to the outer circle; this is what
/// makes the shifted map surjective.
pub fn boundary_d(
    f0: &CechElement,
    f1: &CechElement,
    complex: &CechComplexData,
) -> Result<(CechElement, CechElement)> {
    if f0.annulus != AnnulusId::U0 || f1.annulus != AnnulusId::U1 {
        return Err(Error::UnsupportedPoint);
    }
    if f0.prec != complex.prec || f1.prec != complex.prec {
        return Err(Error::PrecisionMismatch);
    }
    let prec = complex.prec;
    let (f1, constant_to_outer) = match &complex.variant {
        CechVariant::Plain => (f1.clone(), false),
        CechVariant::UnitShifted(n0) => (multiply_u1(f1, *n0, &complex.q)?, true),
    };
    let mut e: BTreeMap<Exp, Scalar> = BTreeMap::new();
    let mut f: BTreeMap<Exp, Scalar> = BTreeMap::new();
    let push = |dst: &mut BTreeMap<Exp, Scalar>, n: Exp, c: Scalar| -> Result<()> {
        let entry = dst.entry(n).or_insert_with(|| Scalar::zero(prec));
        *entry = entry.add(&c)?;
        Ok(())
    };
    // First ring: b_n (q/X)^n = (X/q)^(-n) restricts to the inner circle
    // (the constant included); a_n (qX)^n glues to (X/q^2)^n on the outer
    // one.
    for (n, c) in &f0.aux {
        push(&mut e, -*n, c.clone())?;
    }
    for (n, c) in &f0.main {
        push(&mut f, *n, c.clone())?;
    }
    // Second ring (subtracted): c_n (X/q)^n restricts in place on the
    // inner circle and d_n (q^2/X)^n = (X/q^2)^(-n) on the outer one.  In
    // the shifted variant the product's constant slot is bookkept with the
    // d-family and lands on the outer circle.
    for (n, c) in &f1.main {
        if n.is_zero() && constant_to_outer {
            push(&mut f, Exp::zero(), c.neg())?;
        } else {
            push(&mut e, *n, c.neg())?;
        }
    }
    for (n, c) in &f1.aux {
        push(&mut f, -*n, c.neg())?;
    }
    Ok((
        CechElement::new(AnnulusId::U01Plus, prec, e, BTreeMap::new())?,
        CechElement::new(AnnulusId::U01Minus, prec, f, BTreeMap::new())?,
    ))
}

/// Exact kernel and cokernel dimensions of the boundary map, with the
/// number of independent exponent blocks it decomposed into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CohomologyReport {
    pub h0: u64,
    pub h1: u64,
    pub block_count: u64,
}

/// Identifier of one source basis vector of the complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SourceSlot {
    A(i64),
    B(i64),
    C(i64),
    D(i64),
}

/// Computes the cohomology of the truncated complex by pushing every basis
/// vector through `boundary_d`, splitting the resulting matrix into
/// connected exponent blocks, and running exact Gaussian elimination with
/// max-norm pivoting inside each block (pivots are then units of the
/// valuation ring, so every division is exact).
pub fn cech_cohomology(complex: &CechComplexData) -> Result<CohomologyReport> {
    let prec = complex.prec;
    let denom = prec.lattice_denominator();
    let m_idx = (prec.xdeg() * denom).numer(); // xdeg in scaled integer units
    let scale = |n: Exp| -> i64 { (n * denom).numer() };
    let unscale = |k: i64| -> Exp { Exp::new(k, denom) };

    // Enumerate source slots.
    let mut slots: Vec<SourceSlot> = Vec::new();
    for k in 1..=m_idx {
        slots.push(SourceSlot::A(k));
        slots.push(SourceSlot::D(k));
    }
    for k in 0..=m_idx {
        slots.push(SourceSlot::B(k));
        slots.push(SourceSlot::C(k));
    }

    // Push each basis vector through the boundary map; record its column.
    // Target rows are keyed (0, n) for the inner circle, (1, n) outer.
    let mut columns: Vec<Vec<((u8, i64), Scalar)>> = Vec::with_capacity(slots.len());
    let one = Scalar::one(prec);
    for slot in &slots {
        let mut f0 = CechElement::zero(AnnulusId::U0, prec);
        let mut f1 = CechElement::zero(AnnulusId::U1, prec);
        match slot {
            SourceSlot::A(k) => {
                f0.main.insert(unscale(*k), one.clone());
            }
            SourceSlot::B(k) => {
                f0.aux.insert(unscale(*k), one.clone());
            }
            SourceSlot::C(k) => {
                f1.main.insert(unscale(*k), one.clone());
            }
            SourceSlot::D(k) => {
                f1.aux.insert(unscale(*k), one.clone());
            }
        }
        let (e, f) = boundary_d(&f0, &f1, complex)?;
        let mut col = Vec::new();
        for (n, c) in e.main_coeffs() {
            col.push(((0u8, scale(n)), c.clone()));
        }
        for (n, c) in f.main_coeffs() {
            col.push(((1u8, scale(n)), c.clone()));
        }
        columns.push(col);
    }

    // Union-find over columns joined through shared target rows.
    let mut parent: Vec<usize> = (0..columns.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut row_owner: BTreeMap<(u8, i64), usize> = BTreeMap::new();
    for (ci, col) in columns.iter().enumerate() {
        for (row, _) in col {
            if let Some(&prev) = row_owner.get(row) {
                let a = find(&mut parent, prev);
                let b = find(&mut parent, ci);
                if a != b {
                    parent[a] = b;
                }
            } else {
                row_owner.insert(*row, ci);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ci in 0..columns.len() {
        let root = find(&mut parent, ci);
        groups.entry(root).or_default().push(ci);
    }

    let mut h0 = 0u64;
    let mut rank_total = 0u64;
    let mut rows_total = 0u64;
    let mut block_count = 0u64;
    for (_, cols) in groups {
        block_count += 1;
        // Collect the rows of this block.
        let mut rows: Vec<(u8, i64)> = Vec::new();
        for &ci in &cols {
            for (row, _) in &columns[ci] {
                if !rows.contains(row) {
                    rows.push(*row);
                }
            }
        }
        rows.sort_unstable();
        rows_total += rows.len() as u64;
        let row_index: BTreeMap<(u8, i64), usize> =
            rows.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        // Dense block matrix, rows x cols.
        let zero = Scalar::zero(prec);
        let mut mat: Vec<Vec<Scalar>> = vec![vec![zero.clone(); cols.len()]; rows.len()];
        for (cj, &ci) in cols.iter().enumerate() {
            for (row, c) in &columns[ci] {
                let ri = row_index[row];
                mat[ri][cj] = mat[ri][cj].add(c)?;
            }
        }
        // Gaussian elimination with max-norm pivoting.
        let mut rank = 0usize;
        let mut used = vec![false; rows.len()];
        for cj in 0..cols.len() {
            let mut pivot: Option<(usize, Norm)> = None;
            for ri in 0..rows.len() {
                if used[ri] || mat[ri][cj].is_zero() {
                    continue;
                }
                let norm = mat[ri][cj].abs();
                match &pivot {
                    Some((_, pn)) if &norm <= pn => {}
                    _ => pivot = Some((ri, norm)),
                }
            }
            let Some((pi, _)) = pivot else { continue };
            used[pi] = true;
            rank += 1;
            let pinv = mat[pi][cj].inv()?;
            for ri in 0..rows.len() {
                if ri == pi || mat[ri][cj].is_zero() {
                    continue;
                }
                let factor = mat[ri][cj].mul(&pinv)?;
                for ck in cj..cols.len() {
                    if mat[pi][ck].is_zero() {
                        continue;
                    }
                    let sub = factor.mul(&mat[pi][ck])?;
                    mat[ri][ck] = mat[ri][ck].sub(&sub)?;
                }
            }
        }
        rank_total += rank as u64;
        h0 += (cols.len() - rank) as u64;
    }

    // Untouched target rows are cokernel directions too, so the cokernel
    // dimension is measured against the full target space.
    let total_rows = 2 * (2 * m_idx as u64 + 1);
    debug_assert!(rows_total <= total_rows);
    let h1 = total_rows - rank_total;
    Ok(CohomologyReport { h0, h1, block_count })
}

/// Cohomology dimensions and Euler characteristic of the line bundle of a
/// divisor, at section level `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EulerData {
    pub h0: u64,
    pub h1: u64,
    pub chi: i64,
    pub skyscraper_dim: u64,
}

/// Euler data for an effective (or empty) divisor: positive degree gives
/// `(deg * p^i, 0)` with the skyscraper quotient of the same dimension; the
/// zero divisor gives `(1, 1, 0, 0)`.  Divisors with a negative part and
/// non-positive degree are not reduced to an effective representative here
/// and are rejected.
pub fn line_bundle_euler(d: &PeriodicDivisor, i: u32) -> Result<EulerData> {
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
        let n = scaled.numer() as u64;
        Ok(EulerData { h0: n, h1: 0, chi: n as i64, skyscraper_dim: n })
    } else if d.fundamental().is_empty() {
        Ok(EulerData { h0: 1, h1: 1, chi: 0, skyscraper_dim: 0 })
    } else {
        Err(Error::UnsupportedDivisor)
    }
}

/// One row of the fractional-exponent curve family: the seven-term equation
/// with all exponents divided by `p^level`.
#[derive(Clone, Debug)]
pub struct CurveEquation {
    level: u32,
    lambdas: Vec<Scalar>,
    monomials: Vec<(Exp, Exp, Scalar)>,
}

impl CurveEquation {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn lambdas(&self) -> &[Scalar] {
        &self.lambdas
    }

    /// The seven terms as `(X-exponent, Y-exponent, coefficient)`.
    pub fn monomials(&self) -> &[(Exp, Exp, Scalar)] {
        &self.monomials
    }
}

/// The row-`level` equation of the family: exponents of
/// `Y^2 + l1 X^3 + l2 X Y + l3 X^2 + l4 Y + l5 X + l6` divided by
/// `p^level`, with the same coefficients in every row.
pub fn elliptic_family(
    level: u32,
    lambdas: &[Scalar; 6],
    prec: Precision,
) -> Result<CurveEquation> {
    if lambdas[0].is_zero() {
        return Err(Error::BadLambda);
    }
    if level > prec.imax() {
        return Err(Error::LatticeOverflow);
    }
    for l in lambdas {
        if l.precision() != prec {
            return Err(Error::PrecisionMismatch);
        }
    }
    let s = |k: i64| Exp::from_int(k).scale_p(prec.p(), -(level as i32));
    let monomials = vec![
        (Exp::zero(), s(2), Scalar::one(prec)),
        (s(3), Exp::zero(), lambdas[0].clone()),
        (s(1), s(1), lambdas[1].clone()),
        (s(2), Exp::zero(), lambdas[2].clone()),
        (Exp::zero(), s(1), lambdas[3].clone()),
        (s(1), Exp::zero(), lambdas[4].clone()),
        (Exp::zero(), Exp::zero(), lambdas[5].clone()),
    ];
    Ok(CurveEquation { level, lambdas: lambdas.to_vec(), monomials })
}

/// Substitutes `X -> X^(p^level)`, `Y -> Y^(p^level)` into a row equation
/// and checks term-by-term equality with row zero.
pub fn verify_family_substitution(eq: &CurveEquation) -> Result<bool> {
    let prec = eq.lambdas[0].precision();
    let lambdas: [Scalar; 6] = eq
        .lambdas
        .clone()
        .try_into()
        .map_err(|_| Error::BadLambda)?;
    let row0 = elliptic_family(0, &lambdas, prec)?;
    if eq.monomials.len() != row0.monomials.len() {
        return Ok(false);
    }
    for ((xe, ye, c), (xe0, ye0, c0)) in eq.monomials.iter().zip(row0.monomials.iter()) {
        let xs = xe.scale_p(prec.p(), eq.level as i32);
        let ys = ye.scale_p(prec.p(), eq.level as i32);
        if xs != *xe0 || ys != *ye0 || c != c0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The exactness probe at the divisor stage of the sequence
/// units -> functions -> divisors -> (degree, curve point): reports the
/// degree, the class image, and the principality verdict, so callers can
/// assert `principal  <=>  (degree, class) = (0, identity)` from both sides.
pub fn exact_sequence_check(d: &PeriodicDivisor) -> Result<(Exp, JacobiClass, bool)> {
    let deg = d.deg_q();
    let class = jacobi_image(d)?;
    let principal = abel_jacobi_check(d)?;
    Ok((deg, class, principal))
}

/// Which lattice slice the series diagnostic sums over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WpMode {
    /// Integer sites only: the series converges.
    IntegersOnly,
    /// All sites with denominator up to `p^j`: the fractional tail keeps
    /// unit-scale terms and the series diverges.
    DenominatorsUpTo(u32),
}

/// Gauss norms of one summed term of the series and its derivative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WpTerm {
    pub n: Exp,
    pub norm: Norm,
    pub norm_deriv: Norm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WpVerdict {
    Converges,
    Diverges,
}

/// Term-by-term report of the fractional Weierstrass-type series at a
/// sample point.
#[derive(Clone, Debug)]
pub struct WpReport {
    pub mode: WpMode,
    pub trunc: Exp,
    pub terms: Vec<WpTerm>,
    pub sum: Scalar,
    pub sum_deriv: Scalar,
    pub verdict: WpVerdict,
    pub periodicity_residual: Option<Norm>,
}

fn wp_sites(mode: WpMode, trunc: Exp, prec: Precision) -> Result<Vec<Exp>> {
    let j = match mode {
        WpMode::IntegersOnly => 0,
        WpMode::DenominatorsUpTo(j) => {
            if j > prec.imax() {
                return Err(Error::LatticeOverflow);
            }
            j
        }
    };
    let denom = (prec.p() as i64).pow(j);
    let bound = (trunc * denom).floor();
    let mut sites: Vec<Exp> = Vec::new();
    for k in -bound..=bound {
        sites.push(Exp::new(k, denom));
    }
    // Enumerate by increasing |n|, positive sign first.
    sites.sort_by(|a, b| {
        (a.abs(), b.is_positive())
            .partial_cmp(&(b.abs(), a.is_positive()))
            .unwrap()
    });
    Ok(sites)
}

fn wp_partial_sum(
    x0: &Scalar,
    q: &Scalar,
    sites: &[Exp],
    prec: Precision,
) -> Result<(Vec<WpTerm>, Scalar, Scalar)> {
    let tprec = prec.tprec();
    let mut terms = Vec::with_capacity(sites.len());
    let mut sum = Scalar::zero(prec);
    let mut sum_deriv = Scalar::zero(prec);
    for &n in sites {
        let u = product_of_powers(prec, &[(q, n), (x0, Exp::one())])?;
        let denom = Scalar::one(prec).sub(&u)?;
        match denom.valuation() {
            Valuation::Infinite => return Err(Error::PoleTooClose),
            Valuation::Finite(v) => {
                // The cubed denominator of the derivative term must keep
                // some t-precision.
                if v.is_positive() && !(v * 3 < tprec) {
                    return Err(Error::PoleTooClose);
                }
            }
        }
        let term = product_of_powers(
            prec,
            &[(&u, Exp::one()), (&denom, Exp::from_int(-2))],
        )?;
        let term_deriv = product_of_powers(
            prec,
            &[(&u, Exp::from_int(2)), (&denom, Exp::from_int(-3))],
        )?;
        terms.push(WpTerm { n, norm: term.abs(), norm_deriv: term_deriv.abs() });
        sum = sum.add(&term)?;
        sum_deriv = sum_deriv.add(&term_deriv)?;
    }
    Ok((terms, sum, sum_deriv))
}

/// Sums the series and its derivative over the chosen lattice slice at the
/// unit-norm sample point `x0`, reporting term norms, partial sums, a
/// convergence verdict, and (on the integer slice) the periodicity
/// residual between the sums at `x0` and at `x0 / q`.
///
/// Verdict rule: the series diverges when at least two summed sites `n != 0`
/// keep term norm above `|q|`; on the integer slice the term norm at site
/// `n` is `|q|^|n|`, so no site qualifies, while every fractional site
/// `|n| < 1` does.  This is the finite-truncation surrogate for "term norms
/// eventually decrease to zero along the enumeration".
pub fn wp_diagnostic(
    x0: &Scalar,
    q: &Scalar,
    mode: WpMode,
    trunc: Exp,
) -> Result<WpReport> {
    let prec = x0.precision();
    if q.precision() != prec {
        return Err(Error::PrecisionMismatch);
    }
    match q.valuation() {
        Valuation::Finite(v) if v.is_positive() && v < prec.tprec() => {}
        _ => return Err(Error::BadModulus),
    }
    if x0.valuation() != Valuation::Finite(Exp::zero()) {
        return Err(Error::UnsupportedPoint);
    }
    if !trunc.is_positive() {
        return Err(Error::InvalidPrecision("site bound must be positive".into()));
    }
    let vq = q.valuation().finite().expect("checked above");
    let sites = wp_sites(mode, trunc, prec)?;
    let (terms, sum, sum_deriv) = wp_partial_sum(x0, q, &sites, prec)?;

    let q_norm = Norm::PowerOfP(-vq);
    let heavy = terms
        .iter()
        .filter(|t| !t.n.is_zero() && t.norm > q_norm)
        .count();
    let verdict = if heavy >= 2 { WpVerdict::Diverges } else { WpVerdict::Converges };

    let periodicity_residual = match mode {
        WpMode::IntegersOnly => {
            let x_shift = product_of_powers(prec, &[(x0, Exp::one()), (q, Exp::from_int(-1))])?;
            let (_, shifted_sum, _) = wp_partial_sum(&x_shift, q, &sites, prec)?;
            Some(shifted_sum.sub(&sum)?.abs())
        }
        WpMode::DenominatorsUpTo(_) => None,
    };

    Ok(WpReport { mode, trunc, terms, sum, sum_deriv, verdict, periodicity_residual })
}
