use std::fmt;

use crate::padic::Rational;

/// Byte offsets into DSL source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SourceSpan { start, end }
    }

    pub fn point(at: usize) -> Self {
        SourceSpan { start: at, end: at }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("syntax error at {span}: {message}")]
    Syntax { message: String, span: SourceSpan },
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("{op}: zero input")]
    ZeroInput { op: &'static str },
    #[error("valuation of zero in v-factor")]
    ValuationOfZero,
    #[error("depth {depth} below the Hensel-sufficient bound {required}")]
    InsufficientDepth { depth: u32, required: u32 },
    #[error("n-th power test disagrees between precision {low} and {high}")]
    HenselSelfCheck { low: u32, high: u32 },
    #[error("value not determined at the available precision: {0}")]
    Undetermined(String),
    #[error("bound function evaluates to zero on the base point")]
    ZeroBound,
    #[error("infinite measure: fiber is unbounded")]
    InfiniteMeasure,
    #[error("divergent sum: {0}")]
    Divergent(String),
    #[error("Hensel condition fails: v(f) = {vf}, v(f') = {vdf}")]
    HenselConditionFails { vf: String, vdf: String },
    #[error("precision exhausted at N = {0}; raise the precision")]
    PrecisionExhausted(u32),
    #[error("f identically zero")]
    ZeroPolynomial,
    #[error("not integrable: {0}")]
    NotIntegrable(String),
    #[error("residues not fixed: {0}")]
    ResiduesNotFixed(String),
    #[error("partition check failed: {0}")]
    PartitionCheckFailed(String),
    #[error("unbounded domain: {0}")]
    UnboundedDomain(String),
    #[error("did not stabilize: boundary mass {mass} at N = {n}")]
    DidNotStabilize { mass: Rational, n: u32 },
    #[error("unsupported range: {0}")]
    UnsupportedRange(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
