//! Deterministic seeded generators for property suites and test vectors.
//!
//! Every draw comes from a counter-based stream cipher seeded explicitly,
//! so identical seeds reproduce identical values across runs and
//! platforms.  The generators respect the budgets the exact kernel needs:
//! lattice depths leave room for the extra roots a consumer will take,
//! and supports stay far enough below the truncation order that products
//! built from the values are exactly representable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{Divisor, PeriodicDivisor, PointSpec};
use crate::scalar::{product_of_powers, Exp, Precision, Scalar, Valuation};
use crate::series::{PerfSeries, Window};

/// A deterministic generator over one precision block.
pub struct Gen {
    rng: ChaCha8Rng,
    prec: Precision,
}

fn ipow(base: i64, exp: u32) -> i64 {
    base.pow(exp)
}

impl Gen {
    pub fn new(prec: Precision, seed: u64) -> Gen {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed), prec }
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// A digit in `[1, p)`.
    fn digit(&mut self) -> u32 {
        self.rng.gen_range(1..self.prec.p())
    }

    /// A lattice exponent `k / p^d` with `d <= max_depth`, lying in
    /// `[lo, hi]`.
    fn lattice_exp(&mut self, max_depth: u32, lo: Exp, hi: Exp) -> Exp {
        let depth = self.rng.gen_range(0..=max_depth);
        let denom = ipow(self.prec.p() as i64, depth);
        let lo_k = (lo * denom).ceil();
        let hi_k = (hi * denom).floor();
        if lo_k >= hi_k {
            return Exp::new(lo_k, denom);
        }
        Exp::new(self.rng.gen_range(lo_k..=hi_k), denom)
    }

    /// A scalar with valuation >= 0, up to `max_terms` terms, support below
    /// `top`, and lattice depth at most `max_depth`.
    pub fn ring_scalar(&mut self, max_terms: usize, top: Exp, max_depth: u32) -> Scalar {
        let count = self.rng.gen_range(1..=max_terms.max(1));
        let mut out = Scalar::zero(self.prec);
        for _ in 0..count {
            let e = self.lattice_exp(max_depth, Exp::zero(), top - Exp::one());
            out = out
                .add(&Scalar::from_digit(self.prec, self.digit()).mul_monomial(1, e))
                .expect("same precision");
        }
        if out.is_zero() {
            Scalar::from_digit(self.prec, 1)
        } else {
            out
        }
    }

    /// A unit of the valuation ring: digit at exponent 0 plus a sparse
    /// positive tail below `top`, depth at most `max_depth`.
    pub fn unit_scalar(&mut self, max_terms: usize, top: Exp, max_depth: u32) -> Scalar {
        let mut out = Scalar::from_digit(self.prec, self.digit());
        let extras = self.rng.gen_range(0..max_terms.max(1));
        let step = Exp::one().scale_p(self.prec.p(), -(max_depth as i32));
        for _ in 0..extras {
            let e = self.lattice_exp(max_depth, step, top - Exp::one());
            if e.is_positive() && e < top {
                out = out
                    .add(&Scalar::from_digit(self.prec, self.digit()).mul_monomial(1, e))
                    .expect("same precision");
            }
        }
        out
    }

    /// A nonzero scalar whose valuation may sit anywhere in
    /// `[-val_range, val_range]` (still a unit times a monomial), for
    /// exercising valuation and norm laws.
    pub fn scalar_with_valuation(&mut self, val_range: i64, max_depth: u32) -> Scalar {
        let unit_top = self.prec.tprec().div(Exp::from_int(2));
        let u = self.unit_scalar(3, unit_top, max_depth);
        let v = self.lattice_exp(
            max_depth,
            Exp::from_int(-val_range),
            Exp::from_int(val_range),
        );
        u.mul_monomial(1, v)
    }

    /// A norm-1 series on the disk window whose residue reduction has top
    /// exponent exactly `order`: unit coefficient there, valuation-ring
    /// coefficients below, positive-valuation coefficients above.
    pub fn distinguished_series(&mut self, max_order: i64) -> (PerfSeries, Exp) {
        let prec = self.prec;
        let window = Window::disk(prec);
        let order_cap = max_order.min(prec.xdeg().numer());
        let order = self.lattice_exp(prec.imax(), Exp::zero(), Exp::from_int(order_cap));
        let coeff_top = prec.tprec().div(Exp::from_int(2));
        let mut terms: Vec<(Exp, Scalar)> = Vec::new();
        terms.push((order, self.unit_scalar(2, coeff_top, prec.imax())));
        let below = self.rng.gen_range(0..=3usize);
        for _ in 0..below {
            let e = self.lattice_exp(prec.imax(), Exp::zero(), order);
            if e < order {
                terms.push((e, self.ring_scalar(2, coeff_top, prec.imax())));
            }
        }
        if order < prec.xdeg() && self.rng.gen_bool(0.5) {
            let e = self.lattice_exp(prec.imax(), order + Exp::one(), prec.xdeg());
            if e > order {
                let deep = self
                    .ring_scalar(2, coeff_top, prec.imax())
                    .mul_monomial(1, Exp::one());
                terms.push((e, deep));
            }
        }
        let mut g = PerfSeries::zero(prec, window);
        for (e, c) in terms {
            let term = PerfSeries::from_terms(prec, window, &[(e, c)]).expect("in window");
            g = g.add(&term).expect("same window");
        }
        (g, order)
    }

    /// A rational point in the fundamental annulus `0 <= val < val(q)`,
    /// with lattice depth at most `max_depth` and support top below
    /// `tprec / 4` so that products of a few such values stay exactly
    /// representable.
    pub fn fundamental_point(
        &mut self,
        label: impl Into<String>,
        q: &Scalar,
        max_depth: u32,
    ) -> Result<PointSpec> {
        let vq = match q.valuation() {
            Valuation::Finite(v) if v.is_positive() => v,
            _ => return Err(Error::BadModulus),
        };
        let top = self.prec.tprec().div(Exp::from_int(4));
        let depth_v = self.rng.gen_range(0..=max_depth);
        let denom = ipow(self.prec.p() as i64, depth_v);
        let hi_k = (vq * denom).floor() - 1;
        let v = if hi_k <= 0 {
            Exp::zero()
        } else {
            Exp::new(self.rng.gen_range(0..=hi_k), denom)
        };
        let mut unit = self.unit_scalar(3, top, max_depth);
        if v.is_zero() && unit.is_one() {
            // Keep the point away from the identity so that divisors built
            // on distinct labels are also supported on distinct values.
            let r = self.lattice_exp(max_depth, Exp::one(), top * 2);
            unit = unit.add(&Scalar::t_pow(self.prec, r).expect("positive lattice exponent"))
                .expect("same precision");
        }
        PointSpec::rational(label, unit.mul_monomial(1, v))
    }

    /// A small divisor of rational points with sparse fractional
    /// multiplicities; value depth plus multiplicity depth stays within
    /// `imax` so class images root exactly.
    pub fn small_divisor(&mut self, q: &Scalar) -> Result<PeriodicDivisor> {
        let prec = self.prec;
        let count = self.rng.gen_range(1..=3usize);
        let mut parts: Vec<(PointSpec, Exp)> = Vec::new();
        for k in 0..count {
            let depth_point = self.rng.gen_range(0..=prec.imax() / 2);
            let pt = self.fundamental_point(format!("g{k}"), q, depth_point)?;
            let depth_mult = self.rng.gen_range(0..=(prec.imax() - depth_point));
            let denom = ipow(prec.p() as i64, depth_mult);
            let mut numer = self.rng.gen_range(-2 * denom..=2 * denom);
            if numer == 0 {
                numer = 1;
            }
            parts.push((pt, Exp::new(numer, denom)));
        }
        PeriodicDivisor::new(Divisor::from_parts(prec, parts)?, q.clone())
    }

    /// The divisor of a matched theta quotient
    /// `[alpha] + [beta] - [gamma] - [e]` with `gamma = alpha*beta*q^(-k)`
    /// shifted into the fundamental annulus: principal by construction.
    /// Requires a monomial modulus so the shift is exact.
    pub fn matched_quotient(&mut self, q: &Scalar) -> Result<PeriodicDivisor> {
        self.theta_quotient(q, false)
    }

    /// Like [`Gen::matched_quotient`] but with the third value perturbed by
    /// a unit that is not a power of `q`, so the divisor has degree zero
    /// and a nontrivial class.
    pub fn unmatched_quotient(&mut self, q: &Scalar) -> Result<PeriodicDivisor> {
        self.theta_quotient(q, true)
    }

    fn theta_quotient(&mut self, q: &Scalar, perturb: bool) -> Result<PeriodicDivisor> {
        let prec = self.prec;
        if q.term_count() != 1 {
            return Err(Error::BadModulus);
        }
        let vq = match q.valuation() {
            Valuation::Finite(v) if v.is_positive() => v,
            _ => return Err(Error::BadModulus),
        };
        let depth = self.rng.gen_range(0..=prec.imax().saturating_sub(1));
        let alpha = self.fundamental_point("alpha", q, depth)?;
        let beta = self.fundamental_point("beta", q, depth)?;
        let shift = (alpha.absval_exp() + beta.absval_exp()).div(vq).floor();
        let mut gamma_val = product_of_powers(
            prec,
            &[
                (alpha.norm(), Exp::one()),
                (beta.norm(), Exp::one()),
                (q, Exp::from_int(-shift)),
            ],
        )?;
        if perturb {
            let r = self.lattice_exp(depth, Exp::one(), self.prec.tprec().div(Exp::from_int(4)));
            let bump = Scalar::one(prec)
                .add(&Scalar::from_digit(prec, 1).mul_monomial(1, r))?;
            gamma_val = gamma_val.mul(&bump)?;
        }
        let gamma = PointSpec::rational("gamma", gamma_val)?;
        let e = PointSpec::rational("e", Scalar::one(prec))?;
        let d = Divisor::from_parts(
            prec,
            vec![
                (alpha, Exp::one()),
                (beta, Exp::one()),
                (gamma, Exp::from_int(-1)),
                (e, Exp::from_int(-1)),
            ],
        )?;
        let d = if prec.imax() > depth + 1 && self.rng.gen_bool(0.3) {
            d.scale(Exp::new(1, prec.p() as i64))?
        } else {
            d
        };
        PeriodicDivisor::new(d, q.clone())
    }

    /// A sparse series on the disk window with valuation-ring
    /// coefficients, for ring-law and rescaling properties.
    pub fn sparse_series(&mut self, max_terms: usize, max_depth: u32) -> PerfSeries {
        self.bounded_series(max_terms, max_depth, self.prec.xdeg())
    }

    /// Like [`Gen::sparse_series`] but with support capped at `hi`, so
    /// that products of a few draws keep their full support inside the
    /// disk window (and Gauss norms stay exactly multiplicative).
    pub fn bounded_series(&mut self, max_terms: usize, max_depth: u32, hi: Exp) -> PerfSeries {
        let prec = self.prec;
        let window = Window::disk(prec);
        let coeff_top = prec.tprec().div(Exp::from_int(2));
        let count = self.rng.gen_range(1..=max_terms.max(1));
        let mut g = PerfSeries::zero(prec, window);
        for _ in 0..count {
            let e = self.lattice_exp(max_depth, Exp::zero(), hi);
            let c = self.ring_scalar(2, coeff_top, max_depth);
            let term = PerfSeries::from_terms(prec, window, &[(e, c)]).expect("in window");
            g = g.add(&term).expect("same window");
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{abel_jacobi_check, jacobi_image};

    fn prec() -> Precision {
        Precision::new(2, 2, Exp::from_int(16), Exp::from_int(8)).unwrap()
    }

    #[test]
    fn generator_is_deterministic() {
        let pr = prec();
        let q = Scalar::t_pow(pr, Exp::one()).unwrap();
        let mut g1 = Gen::new(pr, 42);
        let mut g2 = Gen::new(pr, 42);
        for _ in 0..10 {
            assert_eq!(g1.ring_scalar(3, Exp::from_int(8), 2), g2.ring_scalar(3, Exp::from_int(8), 2));
        }
        assert_eq!(
            g1.matched_quotient(&q).unwrap().fundamental(),
            g2.matched_quotient(&q).unwrap().fundamental()
        );
        // A different seed diverges.
        let mut g3 = Gen::new(pr, 43);
        let a: Vec<Scalar> = (0..5).map(|_| g1.ring_scalar(3, Exp::from_int(8), 2)).collect();
        let b: Vec<Scalar> = (0..5).map(|_| g3.ring_scalar(3, Exp::from_int(8), 2)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn units_and_ring_scalars_have_the_right_valuations() {
        let pr = prec();
        let mut g = Gen::new(pr, 7);
        for _ in 0..50 {
            let u = g.unit_scalar(3, Exp::from_int(8), 2);
            assert_eq!(u.valuation(), Valuation::Finite(Exp::zero()));
            let r = g.ring_scalar(3, Exp::from_int(8), 2);
            match r.valuation() {
                Valuation::Finite(v) => assert!(!v.is_negative()),
                Valuation::Infinite => panic!("ring scalar must be nonzero"),
            }
        }
    }

    #[test]
    fn distinguished_series_have_the_promised_order() {
        let pr = prec();
        let mut g = Gen::new(pr, 11);
        for _ in 0..30 {
            let (f, order) = g.distinguished_series(6);
            assert_eq!(f.gauss_norm(), crate::scalar::Norm::one());
            assert_eq!(f.distinguished_order().unwrap(), order);
            assert!(order <= Exp::from_int(6));
        }
    }

    #[test]
    fn fundamental_points_sit_in_the_annulus() {
        let pr = prec();
        let q = Scalar::t_pow(pr, Exp::one()).unwrap();
        let mut g = Gen::new(pr, 13);
        for k in 0..30 {
            let pt = g.fundamental_point(format!("x{k}"), &q, 1).unwrap();
            assert!(!pt.absval_exp().is_negative());
            assert!(pt.absval_exp() < Exp::one());
            for (e, _) in pt.norm().terms() {
                assert!(e.lattice_depth(2).unwrap() <= 1, "depth of {e} exceeds budget");
            }
        }
    }

    #[test]
    fn matched_quotients_are_principal_and_unmatched_are_not() {
        let pr = prec();
        let q = Scalar::t_pow(pr, Exp::one()).unwrap();
        let mut g = Gen::new(pr, 17);
        for _ in 0..10 {
            let d = g.matched_quotient(&q).unwrap();
            assert!(d.deg_q().is_zero());
            assert!(abel_jacobi_check(&d).unwrap());
            let u = g.unmatched_quotient(&q).unwrap();
            assert!(u.deg_q().is_zero());
            assert!(!abel_jacobi_check(&u).unwrap());
            assert!(!jacobi_image(&u).unwrap().is_one().unwrap());
        }
    }
}
