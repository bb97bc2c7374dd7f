use std::fmt;

use thiserror::Error;

/// A single broken standing assumption on [`crate::model::MarketParams`]
/// or [`crate::model::PhysicalSnapshot`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(&'static str),
    BetaNotPositive(f64),
    ShortInterestNegative(f64),
    MuNotPositive(f64),
    MuExceedsAlpha { mu: f64, alpha: f64 },
    AdvNotPositive(f64),
    ImpactNotPositive(f64),
    PriceNotPositive(f64),
    SharesShortNegative(f64),
    MarginBelowMaintenance { margin: f64, required: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(field) => write!(f, "{field} is not a finite number"),
            Violation::BetaNotPositive(v) => write!(f, "beta must be > 0 (got {v})"),
            Violation::ShortInterestNegative(v) => write!(f, "s must be >= 0 (got {v})"),
            Violation::MuNotPositive(v) => write!(f, "mu must be > 0 (got {v})"),
            Violation::MuExceedsAlpha { mu, alpha } => {
                write!(f, "mu must not exceed alpha (mu={mu}, alpha={alpha})")
            }
            Violation::AdvNotPositive(v) => write!(f, "ADV must be > 0 (got {v})"),
            Violation::ImpactNotPositive(v) => write!(f, "impact b must be > 0 (got {v})"),
            Violation::PriceNotPositive(v) => write!(f, "pre-event price must be > 0 (got {v})"),
            Violation::SharesShortNegative(v) => write!(f, "shares short must be >= 0 (got {v})"),
            Violation::MarginBelowMaintenance { margin, required } => write!(
                f,
                "margin account {margin} is below the maintenance requirement {required}"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<Violation>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("call branch has no real equilibrium (discriminant {discriminant})")]
    NoCallEquilibrium { discriminant: f64 },

    #[error("no bracketing sign change found on [{lo}, {hi}]")]
    NoSolution { lo: f64, hi: f64 },

    #[error("bisection did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by the solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::Domain(_)
                | Error::Format(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
