//! Capital sweeps, snapshot ingestion, case-study reports and output
//! serialization.
//!
//! CSV output uses a fixed column order, LF line endings and numbers
//! rendered with 12 significant digits. JSON output carries the same
//! values as native numbers rounded to 12 significant digits.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{realized_clearing_price, squeeze_limits};
use crate::error::{Error, Result};
use crate::model::{
    to_adv_units, Branch, ClearingOutcome, MarginSpec, MarketParams, PhysicalSnapshot,
    SnapshotMeta, SqueezeReport,
};
use crate::oracle::EquilibriumSet;

/// Significant digits used for every emitted number.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with [`SIG_DIGITS`] significant digits, trailing zeros trimmed.
///
/// Plain decimal notation is used for decimal exponents in `[-6, 15]`,
/// scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..=15).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig(x).parse().expect("fmt_sig output parses")
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Format(format!("unknown output format `{other}`"))),
        }
    }
}

/// Anything that can be written as a fixed-column CSV table or JSON.
pub trait Emit {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
    fn to_json(&self) -> Value;
}

pub fn emit<T: Emit + ?Sized>(item: &T, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            writer.write_record(item.csv_header())?;
            for row in item.csv_rows() {
                writer.write_record(&row)?;
            }
            writer.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(&item.to_json())?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

fn num(x: f64) -> Value {
    json!(round_sig(x))
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepGrid {
    Uniform,
    /// Uniform grid plus `c* - eps`, `c*` and `c* + eps`.
    UniformPlusThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub c_min: f64,
    pub c_max: f64,
    pub n_points: usize,
    pub grid: SweepGrid,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min.is_finite() && self.c_max.is_finite()) {
            return Err(Error::Domain("sweep range must be finite".into()));
        }
        if !(0.0 <= self.c_min && self.c_min < self.c_max) {
            return Err(Error::Domain(format!(
                "sweep range must satisfy 0 <= c_min < c_max (got [{}, {}])",
                self.c_min, self.c_max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::Domain(format!(
                "sweep needs at least 2 points (got {})",
                self.n_points
            )));
        }
        Ok(())
    }

    /// Capital values of the grid, ascending and without duplicates.
    pub fn points(&self, c_star: f64) -> Vec<f64> {
        let n = self.n_points;
        let span = self.c_max - self.c_min;
        let mut points: Vec<f64> = (0..n)
            .map(|i| self.c_min + span * i as f64 / (n - 1) as f64)
            .collect();
        points[n - 1] = self.c_max;
        if self.grid == SweepGrid::UniformPlusThreshold {
            let eps = threshold_epsilon(c_star);
            for c in [c_star - eps, c_star, c_star + eps] {
                if (self.c_min..=self.c_max).contains(&c) {
                    points.push(c);
                }
            }
            points.sort_by(f64::total_cmp);
            points.dedup();
        }
        points
    }
}

/// Offset of the extra grid points around the capital threshold.
pub fn threshold_epsilon(c_star: f64) -> f64 {
    1e-8 * c_star.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub price: f64,
    pub branch: Branch,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discontinuity {
    pub c_star: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub discontinuity: Option<Discontinuity>,
}

impl SweepTable {
    /// Largest price increase between adjacent rows.
    pub fn max_adjacent_gap(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].price - w[0].price)
            .fold(0.0, f64::max)
    }

    /// Price increase from the last row at or below `c_star` to the next row.
    pub fn gap_at(&self, c_star: f64) -> Option<f64> {
        let idx = self.rows.iter().rposition(|r| r.c <= c_star)?;
        let next = self.rows.get(idx + 1)?;
        Some(next.price - self.rows[idx].price)
    }
}

/// Realized clearing prices over a capital grid.
pub fn sweep(spec: &SweepSpec, params: &MarketParams) -> Result<SweepTable> {
    spec.validate()?;
    let report = squeeze_limits(params)?;
    let rows = spec
        .points(report.c_star)
        .into_iter()
        .map(|c| {
            let out = realized_clearing_price(c, params)?;
            Ok(SweepRow {
                c,
                price: out.price,
                branch: out.branch,
                gamma: out.shares_repurchased,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let straddles = (spec.c_min..=spec.c_max).contains(&report.c_star);
    let discontinuity = (straddles && report.delta > 0.0).then_some(Discontinuity {
        c_star: report.c_star,
        delta: report.delta,
    });
    Ok(SweepTable {
        rows,
        discontinuity,
    })
}

impl Emit for SweepTable {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["c", "price", "branch", "gamma"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt_sig(r.c),
                    fmt_sig(r.price),
                    r.branch.to_string(),
                    fmt_sig(r.gamma),
                ]
            })
            .collect()
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "c": num(r.c),
                    "price": num(r.price),
                    "branch": r.branch,
                    "gamma": num(r.gamma),
                })
            })
            .collect();
        let discontinuity = self
            .discontinuity
            .map(|d| json!({ "c_star": num(d.c_star), "delta": num(d.delta) }));
        json!({ "rows": rows, "discontinuity": discontinuity })
    }
}

// ---------------------------------------------------------------------------
// Snapshot ingestion

pub const REQUIRED_COLUMNS: [&str; 5] =
    ["ticker", "date", "short_shares", "adv_shares", "price_usd"];
pub const SNAPSHOT_COLUMNS: [&str; 10] = [
    "ticker",
    "date",
    "short_shares",
    "adv_shares",
    "price_usd",
    "alpha",
    "mu",
    "beta",
    "shares_outstanding",
    "float_shares",
];

/// Values used when a snapshot row leaves `alpha`, `mu` or `beta` blank or
/// the column is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotDefaults {
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
}

impl Default for SnapshotDefaults {
    fn default() -> Self {
        SnapshotDefaults {
            alpha: 0.45,
            mu: 0.30,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotBatch {
    pub snapshots: Vec<PhysicalSnapshot>,
    pub rejected: Vec<RowError>,
}

/// Reads snapshot rows from CSV. Bad rows are collected in
/// [`SnapshotBatch::rejected`]; only a malformed header fails the whole load.
pub fn load_snapshot<R: Read>(source: R, defaults: &SnapshotDefaults) -> Result<SnapshotBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_ascii_lowercase(), i))
        .collect();
    let missing: Vec<&str> = REQUIRED_COLUMNS
        .iter()
        .copied()
        .filter(|c| !index.contains_key(*c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Format(format!(
            "snapshot header is missing required column(s): {}",
            missing.join(", ")
        )));
    }

    let mut batch = SnapshotBatch::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let parsed = record
            .map_err(|e| e.to_string())
            .and_then(|rec| parse_row(&rec, &index, defaults));
        match parsed {
            Ok(snap) => batch.snapshots.push(snap),
            Err(reason) => batch.rejected.push(RowError { row, reason }),
        }
    }
    Ok(batch)
}

fn parse_row(
    rec: &csv::StringRecord,
    index: &HashMap<String, usize>,
    defaults: &SnapshotDefaults,
) -> std::result::Result<PhysicalSnapshot, String> {
    let cell = |name: &str| index.get(name).and_then(|&i| rec.get(i)).unwrap_or("");
    let number = |name: &str| -> std::result::Result<Option<f64>, String> {
        let raw = cell(name);
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<f64>()
            .map(Some)
            .map_err(|_| format!("column `{name}`: cannot parse `{raw}` as a number"))
    };
    let required = |name: &str| -> std::result::Result<f64, String> {
        number(name)?.ok_or_else(|| format!("column `{name}` is empty"))
    };

    let shares_short = required("short_shares")?;
    let adv = required("adv_shares")?;
    let price = required("price_usd")?;
    let alpha = number("alpha")?.unwrap_or(defaults.alpha);
    let mu = number("mu")?.unwrap_or(defaults.mu);
    let beta = number("beta")?.unwrap_or(defaults.beta);

    let snap = PhysicalSnapshot {
        shares_short,
        margin: MarginSpec::Ratio(alpha),
        adv,
        impact: beta / adv,
        pre_event_price: price,
        mu,
        meta: SnapshotMeta {
            ticker: cell("ticker").to_string(),
            date: cell("date").to_string(),
            shares_outstanding: number("shares_outstanding")?,
            float_shares: number("float_shares")?,
        },
    };
    let mut violations = snap.validate();
    if !(beta > 0.0) {
        // impact = beta / adv hides the sign when adv is also bad
        violations.retain(|v| !matches!(v, crate::error::Violation::ImpactNotPositive(_)));
        violations.insert(0, crate::error::Violation::BetaNotPositive(beta));
    }
    if violations.is_empty() {
        Ok(snap)
    } else {
        Err(violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; "))
    }
}

/// Snapshots in the ingestion CSV schema, so `load_snapshot(emit(..))`
/// reproduces them to 12 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotTable(pub Vec<PhysicalSnapshot>);

fn snapshot_alpha(snap: &PhysicalSnapshot) -> f64 {
    match snap.margin {
        MarginSpec::Ratio(alpha) => alpha,
        MarginSpec::Account(m) if snap.shares_short > 0.0 => m / snap.shares_short - 1.0,
        MarginSpec::Account(_) => f64::NAN,
    }
}

impl Emit for SnapshotTable {
    fn csv_header(&self) -> Vec<&'static str> {
        SNAPSHOT_COLUMNS.to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
        self.0
            .iter()
            .map(|s| {
                vec![
                    s.meta.ticker.clone(),
                    s.meta.date.clone(),
                    fmt_sig(s.shares_short),
                    fmt_sig(s.adv),
                    fmt_sig(s.pre_event_price),
                    fmt_sig(snapshot_alpha(s)),
                    fmt_sig(s.mu),
                    fmt_sig(s.impact * s.adv),
                    opt(s.meta.shares_outstanding),
                    opt(s.meta.float_shares),
                ]
            })
            .collect()
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .0
            .iter()
            .map(|s| {
                json!({
                    "ticker": s.meta.ticker,
                    "date": s.meta.date,
                    "short_shares": num(s.shares_short),
                    "adv_shares": num(s.adv),
                    "price_usd": num(s.pre_event_price),
                    "alpha": num(snapshot_alpha(s)),
                    "mu": num(s.mu),
                    "beta": num(s.impact * s.adv),
                    "shares_outstanding": s.meta.shares_outstanding.map(num),
                    "float_shares": s.meta.float_shares.map(num),
                })
            })
            .collect();
        Value::Array(rows)
    }
}

// ---------------------------------------------------------------------------
// Case studies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub ticker: String,
    pub date: String,
    pub s: f64,
    pub s_star: f64,
    pub c_star: f64,
    pub delta: f64,
    pub p_left: f64,
    pub p_right: f64,
    /// Dollar price before the event (normalized price 1).
    pub pre_price_usd: f64,
    /// Dollar price just below the capital threshold.
    pub threshold_price_usd: f64,
    /// Dollar price just above the capital threshold, `p0 (p_left + delta)`.
    pub post_price_usd: f64,
    pub squeeze: bool,
}

pub fn case_study(snapshot: &PhysicalSnapshot) -> Result<CaseStudyReport> {
    let params = to_adv_units(snapshot)?;
    let limits = squeeze_limits(&params)?;
    let p0 = snapshot.pre_event_price;
    Ok(CaseStudyReport {
        ticker: snapshot.meta.ticker.clone(),
        date: snapshot.meta.date.clone(),
        s: params.s,
        s_star: limits.s_star,
        c_star: limits.c_star,
        delta: limits.delta,
        p_left: limits.p_left,
        p_right: limits.p_right,
        pre_price_usd: p0,
        threshold_price_usd: p0 * limits.p_left,
        post_price_usd: p0 * (limits.p_left + limits.delta),
        squeeze: limits.delta > 0.0,
    })
}

const REPORT_COLUMNS: [&str; 12] = [
    "ticker",
    "date",
    "s",
    "s_star",
    "c_star",
    "delta",
    "p_left",
    "p_right",
    "pre_price_usd",
    "threshold_price_usd",
    "post_price_usd",
    "squeeze",
];

impl Emit for [CaseStudyReport] {
    fn csv_header(&self) -> Vec<&'static str> {
        REPORT_COLUMNS.to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| {
                vec![
                    r.ticker.clone(),
                    r.date.clone(),
                    fmt_sig(r.s),
                    fmt_sig(r.s_star),
                    fmt_sig(r.c_star),
                    fmt_sig(r.delta),
                    fmt_sig(r.p_left),
                    fmt_sig(r.p_right),
                    fmt_sig(r.pre_price_usd),
                    fmt_sig(r.threshold_price_usd),
                    fmt_sig(r.post_price_usd),
                    r.squeeze.to_string(),
                ]
            })
            .collect()
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.iter()
                .map(|r| {
                    json!({
                        "ticker": r.ticker,
                        "date": r.date,
                        "s": num(r.s),
                        "s_star": num(r.s_star),
                        "c_star": num(r.c_star),
                        "delta": num(r.delta),
                        "p_left": num(r.p_left),
                        "p_right": num(r.p_right),
                        "pre_price_usd": num(r.pre_price_usd),
                        "threshold_price_usd": num(r.threshold_price_usd),
                        "post_price_usd": num(r.post_price_usd),
                        "squeeze": r.squeeze,
                    })
                })
                .collect(),
        )
    }
}

/// Parses the JSON produced by emitting a list of case-study reports.
pub fn parse_reports_json(bytes: &[u8]) -> Result<Vec<CaseStudyReport>> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn parse_sweep_json(bytes: &[u8]) -> Result<SweepTable> {
    Ok(serde_json::from_slice(bytes)?)
}

// ---------------------------------------------------------------------------
// Single-result outputs used by the CLI

/// A clearing outcome at capital `c`, optionally with a numerical cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearingRecord {
    pub c: f64,
    pub outcome: ClearingOutcome,
    pub oracle: Option<ClearingOutcome>,
}

impl ClearingRecord {
    pub fn oracle_rel_diff(&self) -> Option<f64> {
        self.oracle
            .map(|o| (o.price - self.outcome.price).abs() / self.outcome.price.abs())
    }
}

impl Emit for ClearingRecord {
    fn csv_header(&self) -> Vec<&'static str> {
        let mut h = vec!["c", "price", "branch", "gamma", "margin_called", "residual"];
        if self.oracle.is_some() {
            h.extend(["oracle_price", "oracle_branch", "rel_diff"]);
        }
        h
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let o = &self.outcome;
        let mut row = vec![
            fmt_sig(self.c),
            fmt_sig(o.price),
            o.branch.to_string(),
            fmt_sig(o.shares_repurchased),
            o.margin_called.to_string(),
            fmt_sig(o.residual),
        ];
        if let (Some(oracle), Some(diff)) = (self.oracle, self.oracle_rel_diff()) {
            row.extend([
                fmt_sig(oracle.price),
                oracle.branch.to_string(),
                fmt_sig(diff),
            ]);
        }
        vec![row]
    }

    fn to_json(&self) -> Value {
        let o = &self.outcome;
        let mut v = json!({
            "c": num(self.c),
            "price": num(o.price),
            "branch": o.branch,
            "gamma": num(o.shares_repurchased),
            "margin_called": o.margin_called,
            "residual": num(o.residual),
        });
        if let (Some(oracle), Some(diff)) = (self.oracle, self.oracle_rel_diff()) {
            v["oracle_price"] = num(oracle.price);
            v["oracle_branch"] = json!(oracle.branch);
            v["rel_diff"] = num(diff);
        }
        v
    }
}

/// Thresholds for a parameter set; the squeeze fields need `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRecord {
    pub c_star: f64,
    pub s_star: f64,
    pub squeeze: Option<(f64, SqueezeReport)>,
}

impl Emit for ThresholdRecord {
    fn csv_header(&self) -> Vec<&'static str> {
        let mut h = vec!["c_star", "s_star"];
        if self.squeeze.is_some() {
            h.extend(["s", "delta", "p_left", "p_right", "continuous"]);
        }
        h
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut row = vec![fmt_sig(self.c_star), fmt_sig(self.s_star)];
        if let Some((s, r)) = self.squeeze {
            row.extend([
                fmt_sig(s),
                fmt_sig(r.delta),
                fmt_sig(r.p_left),
                fmt_sig(r.p_right),
                r.continuous.to_string(),
            ]);
        }
        vec![row]
    }

    fn to_json(&self) -> Value {
        let mut v = json!({ "c_star": num(self.c_star), "s_star": num(self.s_star) });
        if let Some((s, r)) = self.squeeze {
            v["s"] = num(s);
            v["delta"] = num(r.delta);
            v["p_left"] = num(r.p_left);
            v["p_right"] = num(r.p_right);
            v["continuous"] = json!(r.continuous);
        }
        v
    }
}

/// Equilibria at capital `c` with their residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRecord {
    pub c: f64,
    pub set: EquilibriumSet,
    pub residuals: Vec<f64>,
}

impl Emit for EquilibriumRecord {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["index", "price", "residual", "realized"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.set
            .prices
            .iter()
            .zip(&self.residuals)
            .enumerate()
            .map(|(i, (p, r))| {
                vec![
                    i.to_string(),
                    fmt_sig(*p),
                    fmt_sig(*r),
                    (i == self.set.realized_index).to_string(),
                ]
            })
            .collect()
    }

    fn to_json(&self) -> Value {
        json!({
            "c": num(self.c),
            "prices": self.set.prices.iter().map(|&p| num(p)).collect::<Vec<_>>(),
            "residuals": self.residuals.iter().map(|&r| num(r)).collect::<Vec<_>>(),
            "realized_index": self.set.realized_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::squeeze_size;

    fn gme_params() -> MarketParams {
        MarketParams::new(2.0, 10.2, 0.45, 0.30).unwrap()
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(19.169_230_769_230_77), "19.1692307692");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.0643491124260355), "0.064349112426");
        assert_eq!(fmt_sig(68.13e6), "68130000");
        assert_eq!(fmt_sig(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig(123456789012345678.0), "1.23456789012e17");
        assert_eq!(fmt_sig(999999999999.6), "1000000000000");
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
    }

    #[test]
    fn sweep_below_threshold_is_continuous() {
        let params = MarketParams::new(2.0, 0.5, 0.45, 0.30).unwrap();
        let spec = SweepSpec {
            c_min: 0.0,
            c_max: 0.2,
            n_points: 201,
            grid: SweepGrid::Uniform,
        };
        let table = sweep(&spec, &params).unwrap();
        assert!(table.discontinuity.is_none());
        assert_eq!(table.rows.len(), 201);
        let coarse = table.max_adjacent_gap();
        let fine = sweep(
            &SweepSpec {
                n_points: 2001,
                ..spec
            },
            &params,
        )
        .unwrap()
        .max_adjacent_gap();
        assert!(fine < coarse / 5.0);
        for row in &table.rows {
            let out = realized_clearing_price(row.c, &params).unwrap();
            assert_eq!(row.price, out.price);
        }
    }

    #[test]
    fn sweep_gme_annotated() {
        let spec = SweepSpec {
            c_min: 0.0,
            c_max: 0.2,
            n_points: 101,
            grid: SweepGrid::UniformPlusThreshold,
        };
        let table = sweep(&spec, &gme_params()).unwrap();
        let d = table.discontinuity.unwrap();
        assert!((d.c_star - 0.064349).abs() < 1e-6);
        assert!((d.delta - 19.169).abs() < 1e-3);
        assert_eq!(table.rows.len(), 104);
        let gap = table.gap_at(d.c_star).unwrap();
        assert!((gap - squeeze_size(&gme_params()).unwrap()).abs() < 1e-6);
        assert!(table
            .rows
            .windows(2)
            .all(|w| w[0].c < w[1].c && w[0].price <= w[1].price));
    }

    #[test]
    fn sweep_degenerate_and_invalid() {
        let spec = SweepSpec {
            c_min: 1.0 - 1e-9,
            c_max: 1.0,
            n_points: 2,
            grid: SweepGrid::Uniform,
        };
        let table = sweep(&spec, &gme_params()).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows[0].price <= table.rows[1].price);
        for bad in [
            SweepSpec {
                c_min: 0.2,
                c_max: 0.1,
                ..spec
            },
            SweepSpec {
                c_min: -0.1,
                c_max: 0.1,
                ..spec
            },
            SweepSpec {
                n_points: 1,
                ..spec
            },
        ] {
            assert!(matches!(sweep(&bad, &gme_params()), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn empty_sweep_csv_is_header_only() {
        let table = SweepTable {
            rows: vec![],
            discontinuity: None,
        };
        assert_eq!(
            emit(&table, Format::Csv).unwrap(),
            b"c,price,branch,gamma\n"
        );
    }

    #[test]
    fn sweep_json_round_trip() {
        let spec = SweepSpec {
            c_min: 0.0,
            c_max: 0.2,
            n_points: 5,
            grid: SweepGrid::UniformPlusThreshold,
        };
        let table = sweep(&spec, &gme_params()).unwrap();
        let bytes = emit(&table, Format::Json).unwrap();
        let back = parse_sweep_json(&bytes).unwrap();
        assert_eq!(back.rows.len(), table.rows.len());
        assert_eq!(emit(&back, Format::Json).unwrap(), bytes);
        for (a, b) in back.rows.iter().zip(&table.rows) {
            assert_eq!(a.price, round_sig(b.price));
            assert_eq!(a.branch, b.branch);
        }
    }

    const SNAPSHOT_CSV: &str = "\
ticker,date,short_shares,adv_shares,price_usd,alpha,mu,beta,shares_outstanding,float_shares
GME,2020-12-15,68.13e6,6.68e6,17.00,0.45,0.30,2,69.75e6,46.89e6
AMC,2021-01-15,44.67e6,10.70e6,2.33,,,,287.28e6,114.94e6
";

    #[test]
    fn load_case_study_rows() {
        let batch = load_snapshot(SNAPSHOT_CSV.as_bytes(), &SnapshotDefaults::default()).unwrap();
        assert!(batch.rejected.is_empty());
        assert_eq!(batch.snapshots.len(), 2);
        let gme = to_adv_units(&batch.snapshots[0]).unwrap();
        assert!((gme.s - 10.2).abs() < 1e-3);
        let amc = to_adv_units(&batch.snapshots[1]).unwrap();
        assert!((amc.s - 4.17).abs() < 1e-2);
        assert_eq!(amc.alpha, 0.45);
        assert_eq!(batch.snapshots[1].meta.float_shares, Some(114.94e6));
    }

    #[test]
    fn load_reports_bad_rows_and_keeps_good_ones() {
        let csv = "ticker,date,short_shares,adv_shares,price_usd,mu\n\
                   A,d,1e6,1e6,10,0.3\n\
                   B,d,abc,1e6,10,0.3\n\
                   C,d,1e6,0,10,0.3\n\
                   D,d,1e6,1e6,10,0.9\n\
                   E,d,1e6,1e6\n";
        let batch = load_snapshot(csv.as_bytes(), &SnapshotDefaults::default()).unwrap();
        assert_eq!(batch.snapshots.len(), 1);
        let rows: Vec<usize> = batch.rejected.iter().map(|e| e.row).collect();
        assert_eq!(rows, vec![2, 3, 4, 5]);
        assert!(batch.rejected[0].reason.contains("short_shares"));
        assert!(batch.rejected[2]
            .reason
            .contains("mu must not exceed alpha"));
    }

    #[test]
    fn load_header_errors() {
        let err = load_snapshot(
            "ticker,date,short_shares\n".as_bytes(),
            &SnapshotDefaults::default(),
        );
        match err {
            Err(Error::Format(msg)) => {
                assert!(msg.contains("adv_shares") && msg.contains("price_usd"))
            }
            other => panic!("expected format error, got {other:?}"),
        }
        let empty = load_snapshot(
            "ticker,date,short_shares,adv_shares,price_usd,alpha,mu,beta\n".as_bytes(),
            &SnapshotDefaults::default(),
        )
        .unwrap();
        assert!(empty.snapshots.is_empty() && empty.rejected.is_empty());
    }

    #[test]
    fn case_studies() {
        let batch = load_snapshot(SNAPSHOT_CSV.as_bytes(), &SnapshotDefaults::default()).unwrap();
        let gme = case_study(&batch.snapshots[0]).unwrap();
        assert!((gme.delta - 19.17).abs() < 0.01);
        assert!(gme.post_price_usd > 340.0);
        assert!((gme.post_price_usd - 344.8).abs() < 0.05);
        assert!(gme.squeeze);
        let amc = case_study(&batch.snapshots[1]).unwrap();
        assert!((amc.delta - 7.12).abs() < 0.01);
        assert!(amc.post_price_usd > 18.90);

        let mut flat = batch.snapshots[0].clone();
        flat.shares_short = 0.0;
        let r = case_study(&flat).unwrap();
        assert!(!r.squeeze);
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.post_price_usd, r.threshold_price_usd);
    }

    #[test]
    fn report_csv_and_json() {
        let batch = load_snapshot(SNAPSHOT_CSV.as_bytes(), &SnapshotDefaults::default()).unwrap();
        let reports: Vec<CaseStudyReport> = batch
            .snapshots
            .iter()
            .map(|s| case_study(s).unwrap())
            .collect();
        let csv = String::from_utf8(emit(reports.as_slice(), Format::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("ticker,date,s,s_star,c_star,delta"));
        assert!(lines[1].starts_with("GME,2020-12-15,10.1991017964,"));
        assert!(lines[1].contains(",19.167434362,"));
        assert!(!csv.contains('\r'));

        let json = emit(reports.as_slice(), Format::Json).unwrap();
        let back = parse_reports_json(&json).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].delta, round_sig(reports[0].delta));
        assert_eq!(emit(back.as_slice(), Format::Json).unwrap(), json);
    }

    #[test]
    fn snapshot_emit_round_trip() {
        let batch = load_snapshot(SNAPSHOT_CSV.as_bytes(), &SnapshotDefaults::default()).unwrap();
        let bytes = emit(&SnapshotTable(batch.snapshots.clone()), Format::Csv).unwrap();
        let again = load_snapshot(bytes.as_slice(), &SnapshotDefaults::default()).unwrap();
        assert_eq!(again.snapshots.len(), 2);
        for (a, b) in again.snapshots.iter().zip(&batch.snapshots) {
            assert_eq!(a.meta, b.meta);
            assert!((a.impact - b.impact).abs() <= 1e-11 * b.impact);
            assert_eq!(a.shares_short, b.shares_short);
        }
    }
}
