//! Error type shared by every kernel operation.
//!
//! Operations are total functions on their documented domains; everything
//! outside the domain is reported through [`Error`] rather than panics, so
//! callers (and the CLI) can map failures to stable exit codes.

use thiserror::Error;

/// Every failure mode of the kernel.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Operands were built under different `Precision` parameters.
    #[error("precision parameters differ between operands")]
    PrecisionMismatch,

    /// Division by a scalar or series that is zero at working precision.
    #[error("division by zero at working precision")]
    DivisionByZero,

    /// An exponent denominator would exceed the p^imax lattice bound.
    #[error("exponent denominator exceeds the p^imax lattice bound")]
    LatticeOverflow,

    /// A scalar with negative valuation was passed where an integral
    /// element (valuation >= 0) is required.
    #[error("scalar has negative valuation")]
    NotIntegral,

    /// The period candidate q does not satisfy 0 < |q| < 1 at working
    /// precision.
    #[error("modulus must satisfy 0 < |q| < 1 at working precision")]
    BadModulus,

    /// Two series windows have empty intersection.
    #[error("series windows do not overlap")]
    WindowMismatch,

    /// A window bound left the representable exponent range.
    #[error("window bound exceeds the representable exponent range")]
    WindowOverflow,

    /// A series with support below exponent zero was passed to an
    /// operation defined only on the closed unit disk ring.
    #[error("series support extends below exponent zero")]
    NegativeSupport,

    /// Gauss norm is not exactly 1 where a normalized series is required.
    #[error("gauss norm is not 1; normalize the series first")]
    NotNormalized,

    /// The residue reduction vanished where a nonzero reduction is needed.
    #[error("residue reduction is zero")]
    ZeroReduction,

    /// Weierstrass division failed to converge within the safety cap.
    #[error("weierstrass iteration exceeded the safety cap")]
    NonTermination,

    /// A cooperative cancellation token was triggered mid-computation.
    #[error("operation cancelled")]
    Cancelled,

    /// The point does not carry the data (e.g. a minimal polynomial)
    /// needed by the requested operation.
    #[error("point does not carry the data required by this operation")]
    UnsupportedPoint,

    /// The quotient f(X/q)/f(X) is not a monomial at working precision.
    #[error("quotient is not a monomial at working precision")]
    NotTheta,

    /// The deterministic auxiliary-point pool ran out of candidates.
    #[error("auxiliary point pool exhausted")]
    PoolExhausted,

    /// A divisor multiplicity has denominator larger than the requested
    /// p^i level.
    #[error("multiplicity denominator exceeds the requested p^i level")]
    DenominatorMismatch,

    /// The divisor is outside the domain of the cohomology formulas
    /// (neither zero nor of positive degree).
    #[error("divisor is not supported by this operation")]
    UnsupportedDivisor,

    /// The leading family coefficient lambda_1 vanished.
    #[error("leading coefficient lambda_1 must be nonzero")]
    BadLambda,

    /// A sum was requested too close to a pole of the summand.
    #[error("evaluation point too close to a pole")]
    PoleTooClose,

    /// Malformed textual or machine-form input.
    #[error("parse error: {0}")]
    Parse(String),

    /// Precision parameters that do not describe a valid working context.
    #[error("invalid precision: {0}")]
    InvalidPrecision(String),
}

pub type Result<T> = std::result::Result<T, Error>;
