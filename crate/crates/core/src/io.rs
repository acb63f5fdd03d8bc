//! Exact machine encodings and text parsers.
//!
//! Every value is encoded without floating point: exponents are reduced
//! rational strings `a/b` (or bare `a` when the denominator is 1), scalars
//! are lists of `[exponent-numerator, exponent-denominator, digit]` triples,
//! series are lists of `[x-exp-num, x-exp-den, scalar-form]` with an
//! explicit window, and divisor files are lists of point records.  Each
//! emitted form re-parses to an equal value, so structured output is
//! diff-stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Divisor, PeriodicDivisor, PointSpec};
use crate::scalar::{Exp, Norm, Precision, Scalar};
use crate::series::{PerfSeries, Window};

/// Renders an exponent as `a/b`, or `a` when the denominator is 1.
pub fn exp_to_string(e: Exp) -> String {
    if e.denom() == 1 {
        format!("{}", e.numer())
    } else {
        format!("{}/{}", e.numer(), e.denom())
    }
}

/// Parses `a` or `a/b` into an exponent.
pub fn parse_exp(s: &str) -> Result<Exp> {
    let s = s.trim();
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let numer: i64 = n
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator in {s:?}")))?;
    let denom: i64 = d
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator in {s:?}")))?;
    if denom == 0 {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Exp::new(numer, denom))
}

/// A norm as the exponent of its power of p, or `None` for the zero norm.
pub fn norm_to_form(n: &Norm) -> Option<String> {
    match n {
        Norm::Zero => None,
        Norm::PowerOfP(e) => Some(exp_to_string(*e)),
    }
}

/// The machine form of a scalar: `[exp-numer, exp-denom, digit]` triples in
/// increasing exponent order.
pub type ScalarForm = Vec<(i64, i64, u32)>;

pub fn scalar_to_form(a: &Scalar) -> ScalarForm {
    a.terms().map(|(e, d)| (e.numer(), e.denom(), d)).collect()
}

pub fn scalar_from_form(prec: Precision, form: &ScalarForm) -> Result<Scalar> {
    Scalar::from_terms(prec, form)
}

/// Renders a scalar as `c*t^(a/b)` terms joined by ` + `, or `0`.
pub fn scalar_to_text(a: &Scalar) -> String {
    if a.is_zero() {
        return "0".to_string();
    }
    let terms: Vec<String> = a
        .terms()
        .map(|(e, d)| format!("{}*t^({})", d, exp_to_string(e)))
        .collect();
    terms.join(" + ")
}

/// Parses the scalar text form.  Accepted term shapes: `c*t^(a/b)`,
/// `c*t^(a)`, the shorthands `t^(a/b)`, `t`, and a bare digit `c`; the
/// whole literal `0` is the zero scalar.
pub fn parse_scalar_text(prec: Precision, s: &str) -> Result<Scalar> {
    let s = s.trim();
    if s == "0" {
        return Ok(Scalar::zero(prec));
    }
    let mut terms: Vec<(i64, i64, u32)> = Vec::new();
    for raw in s.split('+') {
        let term = raw.trim();
        if term.is_empty() {
            return Err(Error::Parse(format!("empty term in scalar {s:?}")));
        }
        let (digit_part, exp_part) = match term.split_once("*t^(") {
            Some((d, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("unclosed exponent in {term:?}")))?;
                (d.trim(), Some(inner))
            }
            None if term == "t" => ("1", Some("1")),
            None => match term.strip_prefix("t^(") {
                Some(rest) => {
                    let inner = rest
                        .strip_suffix(')')
                        .ok_or_else(|| Error::Parse(format!("unclosed exponent in {term:?}")))?;
                    ("1", Some(inner))
                }
                None => (term, None),
            },
        };
        let digit: u32 = digit_part
            .parse()
            .map_err(|_| Error::Parse(format!("bad digit in term {term:?}")))?;
        let e = match exp_part {
            Some(inner) => parse_exp(inner)?,
            None => Exp::zero(),
        };
        terms.push((e.numer(), e.denom(), digit));
    }
    Scalar::from_terms(prec, &terms)
}

/// The machine form of a windowed series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesForm {
    pub window: (String, String),
    pub terms: Vec<(i64, i64, ScalarForm)>,
}

pub fn series_to_form(f: &PerfSeries) -> SeriesForm {
    SeriesForm {
        window: (
            exp_to_string(f.window().lo()),
            exp_to_string(f.window().hi()),
        ),
        terms: f
            .terms()
            .map(|(e, c)| (e.numer(), e.denom(), scalar_to_form(c)))
            .collect(),
    }
}

pub fn series_from_form(prec: Precision, form: &SeriesForm) -> Result<PerfSeries> {
    let lo = parse_exp(&form.window.0)?;
    let hi = parse_exp(&form.window.1)?;
    let window = Window::new(prec, lo, hi)?;
    let mut terms: Vec<(Exp, Scalar)> = Vec::new();
    for (n, d, coeff) in &form.terms {
        if *d == 0 {
            return Err(Error::Parse("zero exponent denominator".into()));
        }
        terms.push((Exp::new(*n, *d), scalar_from_form(prec, coeff)?));
    }
    PerfSeries::from_terms(prec, window, &terms)
}

/// Renders a series as `(<scalar>)*X^(a/b)` terms joined by ` + `, or `0`.
pub fn series_to_text(f: &PerfSeries) -> String {
    if f.is_zero() {
        return "0".to_string();
    }
    let terms: Vec<String> = f
        .terms()
        .map(|(e, c)| format!("({})*X^({})", scalar_to_text(c), exp_to_string(e)))
        .collect();
    terms.join(" + ")
}

/// Parses the series text form onto the disk window `[0, xdeg]`.  Accepted
/// term shapes: `(<scalar>)*X^(a/b)` and the shorthand `X^(a/b)` for a
/// coefficient of 1; the literal `0` is the zero series.
pub fn parse_series_text(prec: Precision, s: &str) -> Result<PerfSeries> {
    let s = s.trim();
    let window = Window::disk(prec);
    if s == "0" {
        return Ok(PerfSeries::zero(prec, window));
    }
    // Split on '+' at parenthesis depth zero only: scalar coefficients
    // contain '+' themselves.
    let mut pieces: Vec<String> = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Parse(format!("unbalanced parens in {s:?}")))?;
                cur.push(ch);
            }
            '+' if depth == 0 => {
                pieces.push(std::mem::take(&mut cur));
            }
            _ => cur.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced parens in {s:?}")));
    }
    pieces.push(cur);
    let mut terms: Vec<(Exp, Scalar)> = Vec::new();
    for raw in pieces {
        let term = raw.trim();
        if term.is_empty() {
            return Err(Error::Parse(format!("empty term in series {s:?}")));
        }
        let (coeff, e) = if let Some(rest) = term.strip_prefix("X^(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::Parse(format!("unclosed exponent in {term:?}")))?;
            (Scalar::one(prec), parse_exp(inner)?)
        } else if let Some(rest) = term.strip_prefix('(') {
            let (scalar_text, tail) = rest
                .rsplit_once(")*X^(")
                .ok_or_else(|| Error::Parse(format!("bad series term {term:?}")))?;
            let inner = tail
                .strip_suffix(')')
                .ok_or_else(|| Error::Parse(format!("unclosed exponent in {term:?}")))?;
            (parse_scalar_text(prec, scalar_text)?, parse_exp(inner)?)
        } else {
            return Err(Error::Parse(format!("bad series term {term:?}")));
        };
        terms.push((e, coeff));
    }
    PerfSeries::from_terms(prec, window, &terms)
}

/// One point record of a divisor file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: String,
    pub absval: String,
    pub deg_over_k: u32,
    pub insep_deg: u32,
    pub norm: ScalarForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_poly: Option<SeriesForm>,
    pub mult: String,
}

/// The divisor file: point records plus an optional modulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<ScalarForm>,
    pub points: Vec<PointRecord>,
}

pub fn point_to_record(pt: &PointSpec, mult: Exp) -> PointRecord {
    PointRecord {
        label: pt.label().to_string(),
        absval: exp_to_string(pt.absval_exp()),
        deg_over_k: pt.deg_over_k(),
        insep_deg: pt.insep_deg(),
        norm: scalar_to_form(pt.norm()),
        min_poly: pt.min_poly().map(series_to_form),
        mult: exp_to_string(mult),
    }
}

pub fn point_from_record(prec: Precision, rec: &PointRecord) -> Result<(PointSpec, Exp)> {
    let norm = scalar_from_form(prec, &rec.norm)?;
    let min_poly = match &rec.min_poly {
        Some(form) => Some(series_from_form(prec, form)?),
        None => None,
    };
    let pt = PointSpec::from_data(
        rec.label.clone(),
        parse_exp(&rec.absval)?,
        rec.deg_over_k,
        rec.insep_deg,
        norm,
        min_poly,
    )?;
    Ok((pt, parse_exp(&rec.mult)?))
}

pub fn divisor_to_file(d: &PeriodicDivisor) -> DivisorFile {
    DivisorFile {
        q: Some(scalar_to_form(d.modulus())),
        points: d
            .fundamental()
            .points()
            .map(|(pt, m)| point_to_record(pt, m))
            .collect(),
    }
}

/// Reads a divisor file; the file's own modulus wins over `default_q`.
pub fn divisor_from_file(
    prec: Precision,
    file: &DivisorFile,
    default_q: &Scalar,
) -> Result<PeriodicDivisor> {
    let q = match &file.q {
        Some(form) => scalar_from_form(prec, form)?,
        None => default_q.clone(),
    };
    let mut parts: Vec<(PointSpec, Exp)> = Vec::new();
    for rec in &file.points {
        parts.push(point_from_record(prec, rec)?);
    }
    PeriodicDivisor::new(Divisor::from_parts(prec, parts)?, q)
}

/// The serialized cohomology report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CechReportForm {
    pub p: u32,
    pub imax: u32,
    pub xdeg: String,
    pub q: String,
    pub variant: String,
    pub h0: u64,
    pub h1: u64,
    pub block_count: u64,
}

/// One term row of the serialized convergence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WpTermForm {
    pub n: String,
    pub norm_exp: Option<String>,
    pub deriv_norm_exp: Option<String>,
}

/// The serialized convergence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WpReportForm {
    pub mode: String,
    pub t: String,
    pub terms: Vec<WpTermForm>,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodicity_residual: Option<Option<String>>,
}
