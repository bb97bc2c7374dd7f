//! Domain types, the linear inverse demand function and margin-call mechanics.
//!
//! All model quantities live in the ADV-proportional unit system: share
//! quantities are fractions of average daily volume and prices are
//! normalized so the pre-event price is 1. [`PhysicalSnapshot`] holds raw
//! market data and is converted at the boundary.
//!
//! The initial margin rate (Regulation T sets 50%) only determines how the
//! margin account was funded when the position was opened. The model starts
//! from the account surplus ratio `alpha = (M - S) / S` observed at the event
//! start and does not track how the account got there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Normalized model parameters.
///
/// `alpha` is stored and the margin account `m = (1 + alpha) s` is always
/// derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Price impact per unit of ADV purchased.
    pub beta: f64,
    /// Short interest ratio (days to cover).
    pub s: f64,
    /// Margin-account surplus ratio.
    pub alpha: f64,
    /// Maintenance margin ratio.
    pub mu: f64,
}

impl MarketParams {
    pub fn new(beta: f64, s: f64, alpha: f64, mu: f64) -> Result<Self> {
        let params = MarketParams { beta, s, alpha, mu };
        params.ensure_valid()?;
        Ok(params)
    }

    /// Margin account in ADV units at the initial price.
    pub fn m(&self) -> f64 {
        (1.0 + self.alpha) * self.s
    }

    /// Price at which the maintenance margin starts to bind, `(1+alpha)/(1+mu)`.
    pub fn call_trigger_price(&self) -> f64 {
        (1.0 + self.alpha) / (1.0 + self.mu)
    }

    /// Every violated standing assumption; empty when the parameters are usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, v) in [
            ("beta", self.beta),
            ("s", self.s),
            ("alpha", self.alpha),
            ("mu", self.mu),
        ] {
            if !v.is_finite() {
                out.push(Violation::NonFinite(name));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.beta <= 0.0 {
            out.push(Violation::BetaNotPositive(self.beta));
        }
        if self.s < 0.0 {
            out.push(Violation::ShortInterestNegative(self.s));
        }
        if self.mu <= 0.0 {
            out.push(Violation::MuNotPositive(self.mu));
        }
        if self.mu > self.alpha {
            out.push(Violation::MuExceedsAlpha {
                mu: self.mu,
                alpha: self.alpha,
            });
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            debug_assert!((1.0 + self.mu) * self.s <= self.m());
            Ok(())
        } else {
            Err(Error::InvalidParams(violations))
        }
    }
}

/// How the margin account of a snapshot is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginSpec {
    /// Account balance `M` in shares-at-initial-price units.
    Account(f64),
    /// Surplus ratio `alpha` given directly.
    Ratio(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub ticker: String,
    pub date: String,
    pub shares_outstanding: Option<f64>,
    pub float_shares: Option<f64>,
}

/// Raw market data for one name in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSnapshot {
    /// Shares sold short, `S`.
    pub shares_short: f64,
    pub margin: MarginSpec,
    /// Average daily volume `V` in shares per day.
    pub adv: f64,
    /// Normalized price change per share purchased, `b = beta / V`.
    pub impact: f64,
    /// Dollar price before the event; the model's unit price.
    pub pre_event_price: f64,
    /// Maintenance margin ratio.
    pub mu: f64,
    pub meta: SnapshotMeta,
}

impl PhysicalSnapshot {
    /// Margin account `M` in physical units.
    pub fn margin_account(&self) -> f64 {
        match self.margin {
            MarginSpec::Account(m) => m,
            MarginSpec::Ratio(alpha) => (1.0 + alpha) * self.shares_short,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let margin_value = match self.margin {
            MarginSpec::Account(v) | MarginSpec::Ratio(v) => v,
        };
        for (name, v) in [
            ("shares_short", self.shares_short),
            ("margin", margin_value),
            ("adv", self.adv),
            ("impact", self.impact),
            ("pre_event_price", self.pre_event_price),
            ("mu", self.mu),
        ] {
            if !v.is_finite() {
                out.push(Violation::NonFinite(name));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.shares_short < 0.0 {
            out.push(Violation::SharesShortNegative(self.shares_short));
        }
        if self.adv <= 0.0 {
            out.push(Violation::AdvNotPositive(self.adv));
        }
        if self.impact <= 0.0 {
            out.push(Violation::ImpactNotPositive(self.impact));
        }
        if self.pre_event_price <= 0.0 {
            out.push(Violation::PriceNotPositive(self.pre_event_price));
        }
        if self.mu <= 0.0 {
            out.push(Violation::MuNotPositive(self.mu));
        }
        match self.margin {
            MarginSpec::Account(m) => {
                let required = (1.0 + self.mu) * self.shares_short;
                if m < required {
                    out.push(Violation::MarginBelowMaintenance {
                        margin: m,
                        required,
                    });
                }
            }
            MarginSpec::Ratio(alpha) => {
                if self.mu > alpha {
                    out.push(Violation::MuExceedsAlpha { mu: self.mu, alpha });
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(violations))
        }
    }
}

/// Which side of the margin-call kink a clearing price sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    NoCall,
    Call,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::NoCall => "no_call",
            Branch::Call => "call",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_call" => Ok(Branch::NoCall),
            "call" => Ok(Branch::Call),
            other => Err(Error::Format(format!("unknown branch `{other}`"))),
        }
    }
}

/// A clearing price together with the margin-call state it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingOutcome {
    /// Normalized price (pre-event price is 1).
    pub price: f64,
    pub branch: Branch,
    /// Shares bought back by the short seller, in ADV units.
    pub shares_repurchased: f64,
    pub margin_called: bool,
    /// `|p - Phi(p)|` against the clearing equation.
    pub residual: f64,
}

/// Thresholds and the one-sided limits of the realized price at `c_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeReport {
    pub c_star: f64,
    pub s_star: f64,
    pub delta: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub continuous: bool,
}

/// Normalized price after `x` ADV units are purchased: `1 + beta x`.
pub fn inverse_demand(x: f64, params: &MarketParams) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "purchased quantity must be >= 0 (got {x})"
        )));
    }
    Ok(1.0 + params.beta * x)
}

/// Minimal shares (ADV units) the short seller must buy back at price `p`
/// to restore the maintenance margin.
pub fn shares_to_return(p: f64, params: &MarketParams) -> Result<f64> {
    check_price(p)?;
    Ok(gamma(p, params))
}

/// Cash (ADV-value units) that would restore the maintenance margin at `p`.
pub fn cash_topup(p: f64, params: &MarketParams) -> Result<f64> {
    check_price(p)?;
    Ok(((1.0 + params.mu) * params.s * p - params.m()).max(0.0))
}

/// Right-hand side of the clearing equation,
/// `Phi(p) = f(c/p + [s - m/((1+mu)p)]^+)`.
pub fn clearing_map(p: f64, c: f64, params: &MarketParams) -> Result<f64> {
    check_price(p)?;
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("capital must be >= 0 (got {c})")));
    }
    Ok(1.0 + params.beta * (c / p + gamma(p, params)))
}

// s * [1 - k/p]^+ is algebraically [s - m/((1+mu)p)]^+ but returns an exact
// zero at p = k when alpha = mu.
pub(crate) fn gamma(p: f64, params: &MarketParams) -> f64 {
    params.s * (1.0 - params.call_trigger_price() / p).max(0.0)
}

fn check_price(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "price must be positive and finite (got {p})"
        )))
    }
}

/// Converts a snapshot into the ADV-proportional system.
pub fn to_adv_units(snapshot: &PhysicalSnapshot) -> Result<MarketParams> {
    snapshot.ensure_valid()?;
    let s = snapshot.shares_short / snapshot.adv;
    let beta = snapshot.impact * snapshot.adv;
    let alpha = match snapshot.margin {
        MarginSpec::Ratio(alpha) => alpha,
        MarginSpec::Account(_) if snapshot.shares_short == 0.0 => {
            return Err(Error::Domain(
                "margin account given with zero shares short; alpha is undefined".into(),
            ))
        }
        MarginSpec::Account(m) => m / snapshot.shares_short - 1.0,
    };
    MarketParams::new(beta, s, alpha, snapshot.mu)
}

/// Expresses `params` in physical units for an asset with ADV `adv` and
/// pre-event dollar price `p0`.
pub fn to_physical_units(params: &MarketParams, adv: f64, p0: f64) -> Result<PhysicalSnapshot> {
    params.ensure_valid()?;
    if !(adv > 0.0 && adv.is_finite()) {
        return Err(Error::Domain(format!("ADV must be positive (got {adv})")));
    }
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(Error::Domain(format!(
            "pre-event price must be positive (got {p0})"
        )));
    }
    let shares_short = params.s * adv;
    // With nothing short the account balance carries no information about alpha.
    let margin = if shares_short > 0.0 {
        MarginSpec::Account((1.0 + params.alpha) * shares_short)
    } else {
        MarginSpec::Ratio(params.alpha)
    };
    Ok(PhysicalSnapshot {
        shares_short,
        margin,
        adv,
        impact: params.beta / adv,
        pre_event_price: p0,
        mu: params.mu,
        meta: SnapshotMeta::default(),
    })
}

/// Dollar value of a normalized price.
pub fn to_dollars(normalized_price: f64, p0: f64) -> f64 {
    normalized_price * p0
}
