//! Risk-certificate sweeps over a dataset: every hour is bid with each
//! normalised certificate and settled in each impact mode, then reduced into
//! cumulative profit series and profit distributions.
//!
//! Profits in the series and distributions are per-hour profits divided by
//! the installed capacity (EUR/MW per hour).

pub mod stats;
pub mod synthetic;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DatasetBundle, GapEntry, HourRecord};
use crate::market_model::{resample_mean, ContractWindow, MarketResolution};
use crate::merit_order::{build_curve, clearing_price, MeritOrderCurve};
use crate::settlement::{settle_hour, HourInputs, HourLedgerEntry, ImpactMode};
use crate::strategy::{compute_optimal_bid, normalized_delta, BidDecision, PriceExpectation};

use stats::{freedman_diaconis_edges, quantile, Histogram};

pub const DEFAULT_ALPHA_TILDES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha_tildes: Vec<f64>,
    pub beta_mw: f64,
    pub resolution: MarketResolution,
    pub modes: Vec<ImpactMode>,
    /// Inclusive start, exclusive end; `None` means the whole dataset.
    pub horizon: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Worker threads for hour settlement. Results do not depend on it.
    #[serde(skip, default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    1
}

impl SweepConfig {
    pub fn new(beta_mw: f64, resolution: MarketResolution) -> Self {
        Self {
            alpha_tildes: DEFAULT_ALPHA_TILDES.to_vec(),
            beta_mw,
            resolution,
            modes: ImpactMode::ALL.to_vec(),
            horizon: None,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_tildes.is_empty() {
            return Err(Error::Config("alpha_tildes must not be empty".into()));
        }
        if let Some(a) = self.alpha_tildes.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha_tilde {a} outside [0, 1]")));
        }
        if self.alpha_tildes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("alpha_tildes must be strictly increasing".into()));
        }
        if !(self.beta_mw.is_finite() && self.beta_mw > 0.0) {
            return Err(Error::Config(format!("beta_mw must be positive, got {}", self.beta_mw)));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one impact mode is required".into()));
        }
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        if modes.len() != self.modes.len() {
            return Err(Error::Config("impact modes must be distinct".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where bid decisions get their price expectations from.
pub trait PriceExpectationSource: Sync {
    /// `baseline_prices` are the quarter prices cleared at the historical
    /// imbalance.
    fn expectation(&self, record: &HourRecord, baseline_prices: &[f64]) -> Result<PriceExpectation>;
}

/// Uses the realized day-ahead price and the hourly mean of the recomputed
/// balancing prices, an upper bound on what any forecast could achieve.
#[derive(Debug, Clone, Copy, Default)]
pub struct RealizedPrices;

impl PriceExpectationSource for RealizedPrices {
    fn expectation(&self, record: &HourRecord, baseline_prices: &[f64]) -> Result<PriceExpectation> {
        let bal = resample_mean(baseline_prices, baseline_prices.len())?;
        Ok(PriceExpectation::new(record.da_price_eur_mwh, bal))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub alpha_tilde: f64,
    pub decision: BidDecision,
    pub expectation: PriceExpectation,
    pub infeasible: bool,
    pub entry: HourLedgerEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub infeasible_hours: usize,
    pub clamped_hours: usize,
    pub scarcity_quarters: usize,
    pub zero_imbalance_quarters: usize,
    pub sign_flip_hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub histogram: Histogram,
    pub mean_eur_mw: f64,
    pub std_dev_eur_mw: f64,
    pub q05_eur_mw: f64,
    pub q95_eur_mw: f64,
}

/// Results of one (certificate, mode) strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySeries {
    pub alpha_tilde: f64,
    pub mode: ImpactMode,
    pub ledger: Vec<LedgerRow>,
    pub cumulative_eur_mw: Vec<f64>,
    pub distribution: DistributionSummary,
    pub counters: Counters,
}

impl StrategySeries {
    pub fn hourly_profit_eur_mw(&self, beta_mw: f64) -> Vec<f64> {
        self.ledger.iter().map(|r| r.entry.total_profit_eur / beta_mw).collect()
    }

    pub fn total_profit_eur(&self) -> f64 {
        self.ledger.iter().map(|r| r.entry.total_profit_eur).sum()
    }

    pub fn total_profit_eur_mw(&self) -> f64 {
        self.cumulative_eur_mw.last().copied().unwrap_or(0.0)
    }
}

/// Statistics of the dataset itself, independent of any strategy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub quarters: usize,
    pub median_abs_si_mw: f64,
    /// Share of periods with |imbalance| <= 100 MW.
    pub share_abs_si_within_100_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: SweepConfig,
    pub hours: Vec<ContractWindow>,
    pub gaps: Vec<GapEntry>,
    pub dataset: DatasetStats,
    pub series: Vec<StrategySeries>,
}

impl BacktestReport {
    pub fn series(&self, alpha_tilde: f64, mode: ImpactMode) -> Option<&StrategySeries> {
        self.series
            .iter()
            .find(|s| s.alpha_tilde == alpha_tilde && s.mode == mode)
    }
}

/// Sweep with realized prices as expectations.
pub fn run_sweep(config: &SweepConfig, dataset: &DatasetBundle) -> Result<BacktestReport> {
    run_sweep_with(config, dataset, &RealizedPrices)
}

pub fn run_sweep_with(
    config: &SweepConfig,
    dataset: &DatasetBundle,
    prices: &dyn PriceExpectationSource,
) -> Result<BacktestReport> {
    config.validate()?;
    let data_res = dataset.resolution()?;
    if data_res != config.resolution {
        return Err(Error::Resolution(format!(
            "dataset is {}/{} min but the sweep is configured for {}/{} min",
            data_res.day_ahead_minutes(),
            data_res.balancing_minutes(),
            config.resolution.day_ahead_minutes(),
            config.resolution.balancing_minutes()
        )));
    }
    let (mut hours, mut gaps) = dataset.hour_records()?;
    if let Some((from, to)) = config.horizon {
        hours.retain(|h| h.hour.start() >= from && h.hour.start() < to);
        gaps.retain(|g| g.hour >= from && g.hour < to);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_hour: Vec<Vec<LedgerRow>> = pool.install(|| {
        hours
            .par_iter()
            .map(|h| evaluate_hour(config, h, prices))
            .collect::<Result<Vec<_>>>()
    })?;

    let dataset_stats = dataset_stats(&hours);
    let series = assemble(config, per_hour);
    Ok(BacktestReport {
        config: config.clone(),
        hours: hours.iter().map(|h| h.hour).collect(),
        gaps,
        dataset: dataset_stats,
        series,
    })
}

/// Rows for one hour in (certificate, mode) order.
fn evaluate_hour(
    config: &SweepConfig,
    record: &HourRecord,
    prices: &dyn PriceExpectationSource,
) -> Result<Vec<LedgerRow>> {
    let res = &config.resolution;
    let curves = record
        .quarters
        .iter()
        .map(|q| build_curve(&q.bids, q.window))
        .collect::<Result<Vec<MeritOrderCurve>>>()?;
    let baseline: Vec<f64> = record
        .quarters
        .iter()
        .zip(&curves)
        .map(|(q, c)| clearing_price(c, q.si_mw).price_eur_mwh)
        .collect();
    let expectation = prices.expectation(record, &baseline)?;
    let production = record.production();
    let si = record.system_imbalance();
    let raw = record.raw_prices();

    let mut rows = Vec::with_capacity(config.alpha_tildes.len() * config.modes.len());
    for &alpha_tilde in &config.alpha_tildes {
        let delta = normalized_delta(alpha_tilde, &record.forecast, config.beta_mw, res)?;
        let decision = compute_optimal_bid(&expectation, &record.forecast, delta, config.beta_mw, res)
            .map_err(|e| Error::Data(format!("hour {}: {e}", record.hour.start().to_rfc3339())))?;
        let inputs = HourInputs {
            hour: record.hour,
            bid_mwh: decision.bid_mwh,
            da_price_eur_mwh: record.da_price_eur_mwh,
            production_mwh: &production,
            system_imbalance_mw: &si,
            curves: &curves,
            raw_prices_eur_mwh: raw.as_deref(),
        };
        for &mode in &config.modes {
            rows.push(LedgerRow {
                alpha_tilde,
                decision,
                expectation,
                infeasible: false,
                entry: settle_hour(&inputs, mode, res)?,
            });
        }
    }
    Ok(rows)
}

fn assemble(config: &SweepConfig, per_hour: Vec<Vec<LedgerRow>>) -> Vec<StrategySeries> {
    let n_modes = config.modes.len();
    let n_series = config.alpha_tildes.len() * n_modes;
    let mut ledgers: Vec<Vec<LedgerRow>> = (0..n_series).map(|_| Vec::with_capacity(per_hour.len())).collect();
    for rows in per_hour {
        for (i, row) in rows.into_iter().enumerate() {
            ledgers[i].push(row);
        }
    }

    let profits: Vec<Vec<f64>> = ledgers
        .iter()
        .map(|l| l.iter().map(|r| r.entry.total_profit_eur / config.beta_mw).collect())
        .collect();

    let mut series = Vec::with_capacity(n_series);
    for (a_idx, &alpha_tilde) in config.alpha_tildes.iter().enumerate() {
        let block = a_idx * n_modes..(a_idx + 1) * n_modes;
        let pooled: Vec<f64> = profits[block.clone()].iter().flatten().copied().collect();
        let edges = freedman_diaconis_edges(&pooled);
        for i in block {
            let ledger = std::mem::take(&mut ledgers[i]);
            let hourly = &profits[i];
            let cumulative_eur_mw = hourly
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let distribution = DistributionSummary {
                histogram: Histogram::with_edges(&edges, hourly),
                mean_eur_mw: stats::mean(hourly),
                std_dev_eur_mw: stats::std_dev(hourly),
                q05_eur_mw: quantile(hourly, 0.05),
                q95_eur_mw: quantile(hourly, 0.95),
            };
            let counters = counters(&ledger);
            series.push(StrategySeries {
                alpha_tilde,
                mode: config.modes[i % n_modes],
                ledger,
                cumulative_eur_mw,
                distribution,
                counters,
            });
        }
    }
    series
}

fn counters(ledger: &[LedgerRow]) -> Counters {
    let mut c = Counters::default();
    for row in ledger {
        c.infeasible_hours += usize::from(row.infeasible);
        c.clamped_hours += usize::from(row.decision.clamped);
        c.scarcity_quarters += row.entry.scarcity_quarters();
        c.zero_imbalance_quarters += row.entry.zero_imbalance_quarters();
        c.sign_flip_hours += usize::from(row.entry.has_sign_flip());
    }
    c
}

fn dataset_stats(hours: &[HourRecord]) -> DatasetStats {
    let abs_si: Vec<f64> = hours
        .iter()
        .flat_map(|h| h.quarters.iter().map(|q| q.si_mw.abs()))
        .collect();
    if abs_si.is_empty() {
        return DatasetStats::default();
    }
    let within = abs_si.iter().filter(|v| **v <= 100.0).count();
    DatasetStats {
        quarters: abs_si.len(),
        median_abs_si_mw: quantile(&abs_si, 0.5),
        share_abs_si_within_100_mw: within as f64 / abs_si.len() as f64,
    }
}

/// Tables derived from a report, ready to be written out.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTables {
    pub timestamps: Vec<DateTime<Utc>>,
    /// `(label, cumulative EUR/MW)` per strategy, in report order.
    pub cumulative: Vec<(String, Vec<f64>)>,
    pub histograms: Vec<HistogramTable>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    pub alpha_tilde: f64,
    pub mode: ImpactMode,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub alpha_tilde: f64,
    pub mode: ImpactMode,
    pub total_profit_eur: f64,
    pub total_profit_eur_mw: f64,
    pub mean_eur_mw: f64,
    pub std_dev_eur_mw: f64,
    pub q05_eur_mw: f64,
    pub q95_eur_mw: f64,
    pub counters: Counters,
}

/// Content of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Effective run configuration, echoed for reproducibility.
    pub config: serde_json::Value,
    pub hours: usize,
    pub skipped_hours: usize,
    pub gaps: Vec<GapEntry>,
    pub dataset: DatasetStats,
    pub strategies: Vec<StrategySummary>,
}

/// Column label used for a strategy in `cumulative.csv`.
pub fn series_label(alpha_tilde: f64, mode: ImpactMode) -> String {
    format!("alpha_{}_{}_eur_mw", alpha_tilde, mode.as_str())
}

pub fn summarize(report: &BacktestReport, config_echo: Option<serde_json::Value>) -> SummaryTables {
    let config = config_echo.unwrap_or_else(|| serde_json::to_value(&report.config).unwrap_or(serde_json::Value::Null));
    SummaryTables {
        timestamps: report.hours.iter().map(|h| h.start()).collect(),
        cumulative: report
            .series
            .iter()
            .map(|s| (series_label(s.alpha_tilde, s.mode), s.cumulative_eur_mw.clone()))
            .collect(),
        histograms: report
            .series
            .iter()
            .map(|s| HistogramTable {
                alpha_tilde: s.alpha_tilde,
                mode: s.mode,
                histogram: s.distribution.histogram.clone(),
            })
            .collect(),
        summary: Summary {
            config,
            hours: report.hours.len(),
            skipped_hours: report.gaps.len(),
            gaps: report.gaps.clone(),
            dataset: report.dataset.clone(),
            strategies: report
                .series
                .iter()
                .map(|s| StrategySummary {
                    alpha_tilde: s.alpha_tilde,
                    mode: s.mode,
                    total_profit_eur: s.total_profit_eur(),
                    total_profit_eur_mw: s.total_profit_eur_mw(),
                    mean_eur_mw: s.distribution.mean_eur_mw,
                    std_dev_eur_mw: s.distribution.std_dev_eur_mw,
                    q05_eur_mw: s.distribution.q05_eur_mw,
                    q95_eur_mw: s.distribution.q95_eur_mw,
                    counters: s.counters.clone(),
                })
                .collect(),
        },
    }
}
