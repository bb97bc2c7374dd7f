//! Closed-form realized clearing prices, the margin-call capital threshold
//! `c*`, the squeeze threshold `s*` and the squeeze size `delta`.
//!
//! The realized price follows a fictitious margin call: solve assuming no
//! call, keep that price if the maintenance margin still holds, otherwise
//! solve the call-branch quadratic. Both branches reduce to quadratics in
//! `p` whose positive (upper) root is taken.
//!
//! At `c == c*` the no-call branch is selected, so `c -> p*(c)` is
//! left-continuous at the threshold.

use crate::error::{Error, Result};
use crate::model::{
    clearing_map, gamma, Branch, ClearingOutcome, MarketParams, PhysicalSnapshot, SqueezeReport,
};

/// External capital purchases as a fraction of ADV value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CapitalScenario(f64);

impl CapitalScenario {
    pub fn new(c: f64) -> Result<Self> {
        if c >= 0.0 && c.is_finite() {
            Ok(CapitalScenario(c))
        } else {
            Err(Error::Domain(format!(
                "capital must be finite and >= 0 (got {c})"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `(1 - mu + 2 alpha) / (1 + mu)`: the square root of `1 + 4 beta c*`,
/// and `beta s*`.
pub fn squeeze_level(params: &MarketParams) -> f64 {
    (1.0 - params.mu + 2.0 * params.alpha) / (1.0 + params.mu)
}

/// Unique positive solution of `p = 1 + beta c / p`.
pub fn no_call_price(c: f64, params: &MarketParams) -> Result<f64> {
    let c = CapitalScenario::new(c)?.value();
    params.ensure_valid()?;
    Ok(0.5 * (1.0 + (1.0 + 4.0 * params.beta * c).sqrt()))
}

/// Discriminant of the call-branch quadratic
/// `p^2 - (1 + beta s) p - beta (c - m/(1+mu)) = 0`.
pub fn call_discriminant(c: f64, params: &MarketParams) -> f64 {
    let a = 1.0 + params.beta * params.s;
    a * a + 4.0 * params.beta * (c - params.m() / (1.0 + params.mu))
}

/// Upper root of the call-branch quadratic.
///
/// Defined whenever the discriminant is nonnegative, including `c <= c*`
/// where it is an equilibrium that the realized selection does not pick.
pub fn call_price(c: f64, params: &MarketParams) -> Result<f64> {
    let c = CapitalScenario::new(c)?.value();
    params.ensure_valid()?;
    let a = 1.0 + params.beta * params.s;
    let mut disc = call_discriminant(c, params);
    if disc < 0.0 {
        // At c* the discriminant is a perfect square and may round just below zero.
        let scale = a * a + 4.0 * params.beta * (c + params.m() / (1.0 + params.mu));
        if disc >= -8.0 * f64::EPSILON * scale {
            disc = 0.0;
        } else {
            return Err(Error::NoCallEquilibrium { discriminant: disc });
        }
    }
    Ok(0.5 * (a + disc.sqrt()))
}

/// Largest capital purchase that triggers no margin call. Independent of `s`.
pub fn capital_threshold(params: &MarketParams) -> Result<f64> {
    params.ensure_valid()?;
    let k = params.call_trigger_price();
    Ok(k * (params.alpha - params.mu) / (1.0 + params.mu) / params.beta)
}

/// Short interest ratio above which the realized price jumps at `c*`.
pub fn squeeze_threshold(params: &MarketParams) -> Result<f64> {
    params.ensure_valid()?;
    Ok(squeeze_level(params) / params.beta)
}

/// Size of the jump in the realized price at `c*`,
/// `[beta s - (1 - mu + 2 alpha)/(1 + mu)]^+`.
pub fn squeeze_size(params: &MarketParams) -> Result<f64> {
    params.ensure_valid()?;
    Ok((params.beta * params.s - squeeze_level(params)).max(0.0))
}

/// The realized clearing price for external purchases `c`.
pub fn realized_clearing_price(c: f64, params: &MarketParams) -> Result<ClearingOutcome> {
    let c = CapitalScenario::new(c)?.value();
    let c_star = capital_threshold(params)?;
    let (price, branch, shares) = if params.s == 0.0 || c <= c_star {
        (no_call_price(c, params)?, Branch::NoCall, 0.0)
    } else {
        let p = call_price(c, params)?;
        (p, Branch::Call, gamma(p, params))
    };
    let residual = (price - clearing_map(price, c, params)?).abs();
    Ok(ClearingOutcome {
        price,
        branch,
        shares_repurchased: shares,
        margin_called: branch == Branch::Call,
        residual,
    })
}

/// One-sided limits of the realized price at `c*` and the resulting jump.
pub fn squeeze_limits(params: &MarketParams) -> Result<SqueezeReport> {
    let c_star = capital_threshold(params)?;
    let s_star = squeeze_threshold(params)?;
    let delta = squeeze_size(params)?;
    let p_left = no_call_price(c_star, params)?;
    let p_right = if params.s == 0.0 {
        p_left
    } else {
        call_price(c_star, params)?
    };
    Ok(SqueezeReport {
        c_star,
        s_star,
        delta,
        p_left,
        p_right,
        continuous: delta == 0.0,
    })
}

/// Capital threshold in physical units (shares at the initial price).
pub fn capital_threshold_physical(snapshot: &PhysicalSnapshot) -> Result<f64> {
    snapshot.ensure_valid()?;
    let (b, s_sh, mu) = (snapshot.impact, snapshot.shares_short, snapshot.mu);
    let covered = snapshot.margin_account() / (1.0 + mu);
    if s_sh == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(
        covered * ((snapshot.margin_account() - (1.0 + mu) * s_sh) / ((1.0 + mu) * s_sh))
            / (b * s_sh),
    )
}

/// Realized clearing price computed directly in physical units from
/// external capital `capital` (currency at the initial price).
///
/// `shares_repurchased` is reported in ADV units so the outcome compares
/// directly with [`realized_clearing_price`].
pub fn realized_clearing_price_physical(
    capital: f64,
    snapshot: &PhysicalSnapshot,
) -> Result<ClearingOutcome> {
    let capital = CapitalScenario::new(capital)?.value();
    let threshold = capital_threshold_physical(snapshot)?;
    let (b, s_sh, mu) = (snapshot.impact, snapshot.shares_short, snapshot.mu);
    let covered = snapshot.margin_account() / (1.0 + mu);
    let gamma_phys = |p: f64| (s_sh - covered / p).max(0.0);

    let (price, branch) = if s_sh == 0.0 || capital <= threshold {
        (
            0.5 * (1.0 + (1.0 + 4.0 * b * capital).sqrt()),
            Branch::NoCall,
        )
    } else {
        let a = 1.0 + b * s_sh;
        let disc = a * a + 4.0 * b * (capital - covered);
        if disc < 0.0 {
            return Err(Error::NoCallEquilibrium { discriminant: disc });
        }
        (0.5 * (a + disc.sqrt()), Branch::Call)
    };
    let shares = match branch {
        Branch::NoCall => 0.0,
        Branch::Call => gamma_phys(price),
    };
    let phi = 1.0 + b * (capital / price + gamma_phys(price));
    Ok(ClearingOutcome {
        price,
        branch,
        shares_repurchased: shares / snapshot.adv,
        margin_called: branch == Branch::Call,
        residual: (price - phi).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarginSpec, SnapshotMeta};

    // Expected values below were produced by 300-step bisection at 30 digits
    // on the branch fixed-point equations, independently of these formulas.
    const C_STAR_GME: f64 = 0.064_349_112_426_035_5;

    fn params(beta: f64, s: f64) -> MarketParams {
        MarketParams::new(beta, s, 0.45, 0.30).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn no_call_price_values() {
        let p = params(2.0, 10.2);
        assert_eq!(no_call_price(0.0, &p).unwrap(), 1.0);
        assert!(close(
            no_call_price(0.06, &p).unwrap(),
            1.108_276_253_029_822,
            1e-14
        ));
        assert!(close(
            no_call_price(C_STAR_GME, &p).unwrap(),
            1.115_384_615_384_615_4,
            1e-14
        ));
        assert!(no_call_price(-0.1, &p).is_err());
    }

    #[test]
    fn call_price_values() {
        let p = params(2.0, 10.2);
        assert!(close(
            call_price(C_STAR_GME, &p).unwrap(),
            20.284_615_384_615_385,
            1e-13
        ));
        assert!(close(
            call_price(0.0, &p).unwrap(),
            20.277_899_239_716_08,
            1e-13
        ));
        assert!(close(
            call_price(0.10, &p).unwrap(),
            20.288_334_258_157_35,
            1e-13
        ));
        let flat = params(2.0, 0.0);
        for c in [0.0, 0.3, 4.0] {
            assert!(close(
                call_price(c, &flat).unwrap(),
                no_call_price(c, &flat).unwrap(),
                1e-15
            ));
        }
    }

    #[test]
    fn call_price_rejects_negative_discriminant() {
        // s just below 2 m/((1+mu)) region: beta s small relative to the buyback
        let p = MarketParams::new(1.0, 2.0, 3.0, 0.3).unwrap();
        assert!(call_discriminant(0.0, &p) < 0.0);
        assert!(matches!(
            call_price(0.0, &p),
            Err(Error::NoCallEquilibrium { .. })
        ));
    }

    #[test]
    fn capital_threshold_values() {
        let p = params(2.0, 10.2);
        assert!(close(capital_threshold(&p).unwrap(), C_STAR_GME, 1e-15));
        let eq = MarketParams::new(2.0, 5.0, 0.3, 0.3).unwrap();
        assert_eq!(capital_threshold(&eq).unwrap(), 0.0);
        assert_eq!(
            capital_threshold(&params(2.0, 1.0)).unwrap(),
            capital_threshold(&params(2.0, 100.0)).unwrap()
        );
    }

    #[test]
    fn capital_threshold_is_largest_no_call_capital() {
        // bisection on c for the point where the no-call price hits the trigger
        let p = params(2.0, 10.2);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma(no_call_price(mid, &p).unwrap(), &p) == 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(close(lo, capital_threshold(&p).unwrap(), 1e-12));
    }

    #[test]
    fn realized_price_examples() {
        let p = params(2.0, 10.2);
        let out = realized_clearing_price(0.0, &p).unwrap();
        assert_eq!(out.price, 1.0);
        assert_eq!(out.branch, Branch::NoCall);
        assert_eq!(out.shares_repurchased, 0.0);

        let out = realized_clearing_price(0.10, &p).unwrap();
        assert_eq!(out.branch, Branch::Call);
        assert!(out.margin_called && out.shares_repurchased > 0.0);
        assert!(close(out.price, 20.288_334_258_157_35, 1e-13));
        assert!(out.residual <= 1e-10);

        let small = params(2.0, 0.5);
        let out = realized_clearing_price(0.10, &small).unwrap();
        assert_eq!(out.branch, Branch::Call);
        assert!(close(out.price, 1.290_887_236_941_37, 1e-13));
        let report = squeeze_limits(&small).unwrap();
        assert!(report.continuous);
        assert!(close(report.p_left, report.p_right, 1e-14));
    }

    #[test]
    fn threshold_selects_no_call() {
        let p = params(2.0, 10.2);
        let c_star = capital_threshold(&p).unwrap();
        let at = realized_clearing_price(c_star, &p).unwrap();
        assert_eq!(at.branch, Branch::NoCall);
        let above = realized_clearing_price(c_star * (1.0 + 1e-12), &p).unwrap();
        assert_eq!(above.branch, Branch::Call);
    }

    #[test]
    fn squeeze_thresholds() {
        assert!(close(
            squeeze_threshold(&params(2.0, 1.0)).unwrap(),
            0.615_384_615_384_615,
            1e-14
        ));
        assert!(close(
            squeeze_threshold(&params(1.0, 1.0)).unwrap(),
            1.230_769_230_769_230_8,
            1e-14
        ));
        assert_eq!(
            squeeze_threshold(&params(4.0, 1.0)).unwrap() * 2.0,
            squeeze_threshold(&params(2.0, 1.0)).unwrap()
        );
    }

    #[test]
    fn squeeze_sizes() {
        assert!((squeeze_size(&params(2.0, 10.2)).unwrap() - 19.169).abs() < 1e-3);
        assert!((squeeze_size(&params(2.0, 4.175)).unwrap() - 7.119).abs() < 1e-3);
        let s_star = squeeze_threshold(&params(2.0, 1.0)).unwrap();
        assert_eq!(squeeze_size(&params(2.0, s_star)).unwrap(), 0.0);
        assert_eq!(squeeze_size(&params(2.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn squeeze_limits_gme() {
        let r = squeeze_limits(&params(2.0, 10.2)).unwrap();
        assert!((r.p_left - 1.11538).abs() < 1e-5);
        assert!((r.p_right - 20.28462).abs() < 1e-5);
        assert!((r.delta - 19.16923).abs() < 1e-5);
        assert!(close(r.p_right - r.p_left, r.delta, 1e-13));
        assert!(!r.continuous);
        let flat = squeeze_limits(&params(2.0, 0.0)).unwrap();
        assert_eq!(flat.delta, 0.0);
        assert!(flat.continuous);
    }

    #[test]
    fn physical_pipeline_matches_gme() {
        let snap = PhysicalSnapshot {
            shares_short: 68.13e6,
            margin: MarginSpec::Account(1.45 * 68.13e6),
            adv: 6.68e6,
            impact: 2.0 / 6.68e6,
            pre_event_price: 17.0,
            mu: 0.3,
            meta: SnapshotMeta::default(),
        };
        let params = crate::model::to_adv_units(&snap).unwrap();
        let threshold = capital_threshold_physical(&snap).unwrap();
        assert!(close(
            threshold / snap.adv,
            capital_threshold(&params).unwrap(),
            1e-13
        ));
        for c in [0.0, 0.03, 0.1, 2.0] {
            let phys = realized_clearing_price_physical(c * snap.adv, &snap).unwrap();
            let adv = realized_clearing_price(c, &params).unwrap();
            assert_eq!(phys.branch, adv.branch);
            assert!(close(phys.price, adv.price, 1e-13));
            assert!(close(
                phys.shares_repurchased,
                adv.shares_repurchased,
                1e-12
            ));
        }
    }
}
