use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("value {value} is outside the policy {what} [{lo}, {hi}]")]
    PolicyDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` is constant")]
    ConstantColumn(String),

    #[error("median pairwise distance is zero (all rows identical)")]
    DegenerateBandwidth,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("singular system in {context} (condition estimate {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("norm-ball multiplier search failed: bracket [{lo:.3e}, {hi:.3e}], residual {residual:.3e}")]
    RootBracket { lo: f64, hi: f64, residual: f64 },

    #[error("estimating equations did not converge: residual norm {residual:.3e}")]
    NoConvergence { residual: f64 },

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every grid configuration failed: {}", .0.join("; "))]
    GridExhausted(Vec<String>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::RootBracket { .. }
            | Error::NoConvergence { .. }
            | Error::ZeroDenominator(_)
            | Error::GridExhausted(_)
            | Error::NonFinite(_)
            | Error::DegenerateBandwidth => true,
            Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// A copy for reporting one failure in several places. I/O and CSV
    /// errors are carried over as text.
    pub fn replicate(&self) -> Error {
        match self {
            Error::InvalidPolicy(s) => Error::InvalidPolicy(s.clone()),
            Error::PolicyDomain { what, value, lo, hi } => Error::PolicyDomain { what, value: *value, lo: *lo, hi: *hi },
            Error::Dimension { expected, found } => Error::Dimension { expected: *expected, found: *found },
            Error::InvalidArgument(s) => Error::InvalidArgument(s.clone()),
            Error::ConstantColumn(s) => Error::ConstantColumn(s.clone()),
            Error::DegenerateBandwidth => Error::DegenerateBandwidth,
            Error::Schema(s) => Error::Schema(s.clone()),
            Error::Singular { context, condition } => Error::Singular { context: context.clone(), condition: *condition },
            Error::RootBracket { lo, hi, residual } => Error::RootBracket { lo: *lo, hi: *hi, residual: *residual },
            Error::NoConvergence { residual } => Error::NoConvergence { residual: *residual },
            Error::ZeroDenominator(s) => Error::ZeroDenominator(s),
            Error::Fold { fold, source } => Error::Fold { fold: *fold, source: Box::new(source.replicate()) },
            Error::GridExhausted(v) => Error::GridExhausted(v.clone()),
            Error::NonFinite(s) => Error::NonFinite(s.clone()),
            Error::Csv(e) => Error::Schema(e.to_string()),
            Error::Io(e) => Error::Schema(e.to_string()),
        }
    }
}
