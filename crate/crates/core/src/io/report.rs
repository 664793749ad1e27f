use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{field_f64, field_str, field_timestamp, fmt_f64, fmt_timestamp, read_csv, write_text};
use crate::backtest::{summarize, BacktestReport, Summary};
use crate::error::{Error, Result};
use crate::settlement::ImpactMode;
use crate::strategy::Direction;

pub const LEDGER_HEADER: [&str; 23] = [
    "alpha_tilde",
    "mode",
    "hour_utc",
    "bid_mwh",
    "delta_mwh",
    "direction",
    "clamped",
    "infeasible",
    "expected_da_eur_mwh",
    "expected_bal_eur_mwh",
    "da_price_eur_mwh",
    "da_revenue_eur",
    "total_profit_eur",
    "period_utc",
    "production_mwh",
    "obligation_mwh",
    "historical_si_mw",
    "projected_si_mw",
    "balancing_price_eur_mwh",
    "balancing_payoff_eur",
    "raw_price_eur_mwh",
    "scarcity",
    "zero_imbalance",
];

pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lower_eur_mw", "bin_upper_eur_mw", "count"];

/// One balancing period of one strategy's ledger, as stored in `ledger.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRecord {
    pub alpha_tilde: f64,
    pub mode: ImpactMode,
    pub hour: DateTime<Utc>,
    pub bid_mwh: f64,
    pub delta_mwh: f64,
    pub direction: Direction,
    pub clamped: bool,
    pub infeasible: bool,
    pub expected_da_eur_mwh: f64,
    pub expected_bal_eur_mwh: f64,
    pub da_price_eur_mwh: f64,
    pub da_revenue_eur: f64,
    pub total_profit_eur: f64,
    pub period: DateTime<Utc>,
    pub production_mwh: f64,
    pub obligation_mwh: f64,
    pub historical_si_mw: f64,
    pub projected_si_mw: f64,
    pub balancing_price_eur_mwh: f64,
    pub balancing_payoff_eur: f64,
    pub raw_price_eur_mwh: Option<f64>,
    pub scarcity: bool,
    pub zero_imbalance: bool,
}

impl LedgerRecord {
    /// Flattens a report into `ledger.csv` rows, strategy by strategy.
    pub fn from_report(report: &BacktestReport) -> Vec<LedgerRecord> {
        let mut out = Vec::new();
        for s in &report.series {
            for row in &s.ledger {
                let e = &row.entry;
                for q in &e.quarters {
                    out.push(LedgerRecord {
                        alpha_tilde: row.alpha_tilde,
                        mode: e.mode,
                        hour: e.hour.start(),
                        bid_mwh: e.bid_mwh,
                        delta_mwh: row.decision.delta_mwh,
                        direction: row.decision.direction,
                        clamped: row.decision.clamped,
                        infeasible: row.infeasible,
                        expected_da_eur_mwh: row.expectation.da_eur_mwh,
                        expected_bal_eur_mwh: row.expectation.bal_eur_mwh,
                        da_price_eur_mwh: e.da_price_eur_mwh,
                        da_revenue_eur: e.da_revenue_eur,
                        total_profit_eur: e.total_profit_eur,
                        period: q.quarter.start(),
                        production_mwh: q.production_mwh,
                        obligation_mwh: q.obligation_mwh,
                        historical_si_mw: q.historical_si_mw,
                        projected_si_mw: q.projected_si_mw,
                        balancing_price_eur_mwh: q.balancing_price_eur_mwh,
                        balancing_payoff_eur: q.balancing_payoff_eur,
                        raw_price_eur_mwh: q.raw_price_eur_mwh,
                        scarcity: q.scarcity,
                        zero_imbalance: q.zero_imbalance,
                    });
                }
            }
        }
        out
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn alpha_tag(alpha_tilde: f64) -> String {
    format!("{alpha_tilde}")
}

pub fn histogram_file_name(alpha_tilde: f64, mode: ImpactMode) -> String {
    format!("histogram_{}_{}.csv", alpha_tag(alpha_tilde), mode.as_str())
}

/// Writes `cumulative.csv`, one `histogram_<alpha>_<mode>.csv` per strategy,
/// `ledger.csv` and `summary.json` into `out_dir`.
pub fn write_report(
    report: &BacktestReport,
    out_dir: impl AsRef<Path>,
    config_echo: Option<serde_json::Value>,
) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tables = summarize(report, config_echo);

    let mut cumulative = String::from("timestamp_utc");
    for (label, _) in &tables.cumulative {
        cumulative.push(',');
        cumulative.push_str(label);
    }
    cumulative.push('\n');
    for (i, t) in tables.timestamps.iter().enumerate() {
        cumulative.push_str(&fmt_timestamp(*t));
        for (_, values) in &tables.cumulative {
            cumulative.push(',');
            cumulative.push_str(&fmt_f64(values[i]));
        }
        cumulative.push('\n');
    }
    write_text(&out_dir.join("cumulative.csv"), &cumulative)?;

    for h in &tables.histograms {
        let mut text = HISTOGRAM_HEADER.join(",");
        text.push('\n');
        for (i, count) in h.histogram.counts.iter().enumerate() {
            let _ = writeln!(
                text,
                "{},{},{}",
                fmt_f64(h.histogram.edges[i]),
                fmt_f64(h.histogram.edges[i + 1]),
                count
            );
        }
        write_text(&out_dir.join(histogram_file_name(h.alpha_tilde, h.mode)), &text)?;
    }

    let mut ledger = LEDGER_HEADER.join(",");
    ledger.push('\n');
    for r in LedgerRecord::from_report(report) {
        let _ = writeln!(
            ledger,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            alpha_tag(r.alpha_tilde),
            r.mode.as_str(),
            fmt_timestamp(r.hour),
            fmt_f64(r.bid_mwh),
            fmt_f64(r.delta_mwh),
            r.direction.as_str(),
            flag(r.clamped),
            flag(r.infeasible),
            fmt_f64(r.expected_da_eur_mwh),
            fmt_f64(r.expected_bal_eur_mwh),
            fmt_f64(r.da_price_eur_mwh),
            fmt_f64(r.da_revenue_eur),
            fmt_f64(r.total_profit_eur),
            fmt_timestamp(r.period),
            fmt_f64(r.production_mwh),
            fmt_f64(r.obligation_mwh),
            fmt_f64(r.historical_si_mw),
            fmt_f64(r.projected_si_mw),
            fmt_f64(r.balancing_price_eur_mwh),
            fmt_f64(r.balancing_payoff_eur),
            r.raw_price_eur_mwh.map(fmt_f64).unwrap_or_default(),
            flag(r.scarcity),
            flag(r.zero_imbalance),
        );
    }
    write_text(&out_dir.join("ledger.csv"), &ledger)?;

    let mut json = serde_json::to_string_pretty(&tables.summary)
        .map_err(|e| Error::Data(format!("cannot serialise summary: {e}")))?;
    json.push('\n');
    write_text(&out_dir.join("summary.json"), &json)?;
    Ok(())
}

fn parse_flag(rec: &csv::StringRecord, column: usize, make: &dyn Fn(usize, String) -> Error) -> Result<bool> {
    match field_str(rec, column, make)? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(make(column, format!("expected 0 or 1, got {other:?}"))),
    }
}

pub fn read_ledger(path: impl AsRef<Path>) -> Result<Vec<LedgerRecord>> {
    let mut rows = Vec::new();
    read_csv(path.as_ref(), &LEDGER_HEADER, |rec, make| {
        let f = |c: usize| field_f64(rec, c, make);
        let mode: ImpactMode = field_str(rec, 1, make)?
            .parse()
            .map_err(|e: Error| make(1, e.to_string()))?;
        let direction: Direction = field_str(rec, 5, make)?
            .parse()
            .map_err(|e: Error| make(5, e.to_string()))?;
        let raw = match field_str(rec, 20, make)? {
            "" => None,
            _ => Some(f(20)?),
        };
        rows.push(LedgerRecord {
            alpha_tilde: f(0)?,
            mode,
            hour: field_timestamp(rec, 2, make)?,
            bid_mwh: f(3)?,
            delta_mwh: f(4)?,
            direction,
            clamped: parse_flag(rec, 6, make)?,
            infeasible: parse_flag(rec, 7, make)?,
            expected_da_eur_mwh: f(8)?,
            expected_bal_eur_mwh: f(9)?,
            da_price_eur_mwh: f(10)?,
            da_revenue_eur: f(11)?,
            total_profit_eur: f(12)?,
            period: field_timestamp(rec, 13, make)?,
            production_mwh: f(14)?,
            obligation_mwh: f(15)?,
            historical_si_mw: f(16)?,
            projected_si_mw: f(17)?,
            balancing_price_eur_mwh: f(18)?,
            balancing_payoff_eur: f(19)?,
            raw_price_eur_mwh: raw,
            scarcity: parse_flag(rec, 21, make)?,
            zero_imbalance: parse_flag(rec, 22, make)?,
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line() as u64,
        column: e.column(),
        message: e.to_string(),
    })
}

/// `(label, values)` columns of `cumulative.csv`.
pub type CumulativeColumns = Vec<(String, Vec<f64>)>;

/// Reads `cumulative.csv` back into its timestamps and columns.
pub fn read_cumulative(path: impl AsRef<Path>) -> Result<(Vec<DateTime<Utc>>, CumulativeColumns)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let headers = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    read_csv(path, &headers.iter().collect::<Vec<_>>(), |rec, make| {
        timestamps.push(field_timestamp(rec, 0, make)?);
        for (i, col) in columns.iter_mut().enumerate() {
            col.push(field_f64(rec, i + 1, make)?);
        }
        Ok(())
    })?;
    Ok((timestamps, labels.into_iter().zip(columns).collect()))
}
