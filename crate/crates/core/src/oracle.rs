//! Numerical solution of the clearing equation by bracketing bisection.
//!
//! Nothing here uses the quadratic formula: every price is a root of a
//! residual function found by sign-change scanning and bisection, so these
//! routines serve as an independent check on [`crate::analytic`].

use serde::{Deserialize, Serialize};

use crate::analytic::CapitalScenario;
use crate::error::{Error, Result};
use crate::model::{clearing_map, gamma, Branch, ClearingOutcome, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target residual for bisection.
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Number of grid points for sign-change scans.
    pub scan_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-12,
            max_iter: 200,
            scan_points: 4096,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.max_iter < 1 || self.scan_points < 2 {
            return Err(Error::Domain(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }
}

/// All fixed points of the clearing equation on `[1, 1 + beta (c + s)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    /// Strictly ascending.
    pub prices: Vec<f64>,
    pub realized_index: usize,
}

impl EquilibriumSet {
    pub fn realized(&self) -> f64 {
        self.prices[self.realized_index]
    }
}

/// `g(p) = p - Phi(p)`; zero exactly at clearing prices.
pub fn clearing_residual(p: f64, c: f64, params: &MarketParams) -> Result<f64> {
    Ok(p - clearing_map(p, c, params)?)
}

/// Bisection on a bracket where `f(lo)` and `f(hi)` differ in sign (or one
/// is zero). Runs until the bracket collapses to adjacent floats, the
/// residual is exactly zero, or `max_iter` is hit.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, config: &SolverConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoSolution { lo, hi });
    }
    let mut best = if f_lo.abs() <= f_hi.abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for _ in 0..config.max_iter {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            return Ok(best.0);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if best.1.abs() <= config.abs_tol {
        Ok(best.0)
    } else {
        Err(Error::NotConverged {
            iterations: config.max_iter,
            residual: best.1.abs(),
        })
    }
}

/// Geometric grid of `n` points from `lo` to `hi` (both > 0), endpoints exact.
fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    let mut grid: Vec<f64> = (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    grid
}

/// Every root of `f` on a geometric scan of `[lo, hi]`, ascending, with
/// roots closer than `10 abs_tol` merged.
fn scan_roots<F>(f: F, lo: f64, hi: f64, config: &SolverConfig) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    if lo == hi {
        return Ok(if f(lo) == 0.0 { vec![lo] } else { Vec::new() });
    }
    let grid = geometric_grid(lo, hi, config.scan_points);
    let values: Vec<f64> = grid.iter().map(|&p| f(p)).collect();
    let mut roots: Vec<f64> = Vec::new();
    let push = |root: f64, roots: &mut Vec<f64>| {
        if roots
            .last()
            .is_none_or(|&last| root - last > 10.0 * config.abs_tol)
        {
            roots.push(root);
        }
    };
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            push(grid[i], &mut roots);
        } else if i + 1 < grid.len()
            && values[i + 1] != 0.0
            && values[i].signum() != values[i + 1].signum()
        {
            let root = bisect(&f, grid[i], grid[i + 1], config)?;
            push(root, &mut roots);
        }
    }
    Ok(roots)
}

fn branch_residual(p: f64, c: f64, params: &MarketParams, branch: Branch) -> f64 {
    match branch {
        Branch::NoCall => p - (1.0 + params.beta * c / p),
        // p = 1 + beta s + beta (c - m/(1+mu)) / p
        Branch::Call => {
            let covered = params.m() / (1.0 + params.mu);
            p - (1.0 + params.beta * params.s + params.beta * (c - covered) / p)
        }
    }
}

/// Solves the fixed-point equation of one branch, ignoring whether the
/// margin condition is consistent with the result.
///
/// The no-call bracket is `[1, 1 + beta (c + s)]`. The call bracket starts
/// at the trigger price `m/((1+mu)s)`. When the bracket endpoints do not
/// change sign, the bracket is scanned and the highest root is returned.
pub fn solve_branch(
    c: f64,
    params: &MarketParams,
    branch: Branch,
    config: &SolverConfig,
) -> Result<f64> {
    let c = CapitalScenario::new(c)?.value();
    params.ensure_valid()?;
    config.validate()?;
    let hi = 1.0 + params.beta * (c + params.s);
    let lo = match branch {
        Branch::NoCall => 1.0,
        Branch::Call if params.s == 0.0 => 1.0,
        Branch::Call => params.call_trigger_price().max(1.0).min(hi),
    };
    let f = |p: f64| branch_residual(p, c, params, branch);
    match bisect(f, lo, hi, config) {
        Err(Error::NoSolution { .. }) => scan_roots(f, lo, hi, config)?
            .last()
            .copied()
            .ok_or(Error::NoSolution { lo, hi }),
        other => other,
    }
}

/// Runs the fictitious margin call numerically: solve without a call, test
/// the maintenance margin, re-solve on the call branch if it fails.
pub fn fictitious_margin_call_solve(
    c: f64,
    params: &MarketParams,
    config: &SolverConfig,
) -> Result<ClearingOutcome> {
    let p = solve_branch(c, params, Branch::NoCall, config)?;
    let (price, branch) = if (1.0 + params.mu) * params.s * p <= params.m() {
        (p, Branch::NoCall)
    } else {
        (solve_branch(c, params, Branch::Call, config)?, Branch::Call)
    };
    let shares = match branch {
        Branch::NoCall => 0.0,
        Branch::Call => gamma(price, params),
    };
    Ok(ClearingOutcome {
        price,
        branch,
        shares_repurchased: shares,
        margin_called: branch == Branch::Call,
        residual: clearing_residual(price, c, params)?.abs(),
    })
}

/// Finds every clearing price on `[1, 1 + beta (c + s)]`.
///
/// The smallest one is the realized price: below the no-call price the
/// residual has no root, and for `c > c*` only the call price survives.
pub fn enumerate_equilibria(
    c: f64,
    params: &MarketParams,
    config: &SolverConfig,
) -> Result<EquilibriumSet> {
    let c = CapitalScenario::new(c)?.value();
    params.ensure_valid()?;
    config.validate()?;
    let hi = 1.0 + params.beta * (c + params.s);
    let f = |p: f64| p - (1.0 + params.beta * (c / p + gamma(p, params)));
    let prices = scan_roots(f, 1.0, hi, config)?;
    if prices.is_empty() {
        return Err(Error::NoSolution { lo: 1.0, hi });
    }
    Ok(EquilibriumSet {
        prices,
        realized_index: 0,
    })
}
