use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{field_f64, field_str, field_timestamp, fmt_f64, fmt_timestamp, read_csv, write_text};
use crate::error::{Error, Result};
use crate::market_model::{is_aligned, sub_windows, ContractWindow, MarketResolution};
use crate::merit_order::{ActivationDirection, BalancingEnergyBid, Product};
use crate::strategy::ForecastMoments;

pub const FORECASTS_HEADER: [&str; 3] = ["timestamp_utc", "mean_mwh", "variance_mwh2"];
pub const PRICE_HEADER: [&str; 2] = ["timestamp_utc", "price_eur_mwh"];
pub const PRODUCTION_HEADER: [&str; 2] = ["timestamp_utc", "energy_mwh"];
pub const IMBALANCE_HEADER: [&str; 2] = ["timestamp_utc", "si_mw"];
pub const BIDS_HEADER: [&str; 5] = ["timestamp_utc", "product", "direction", "volume_mw", "price_eur_mwh"];

/// `metadata.toml` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub beta_mw: f64,
    pub day_ahead_minutes: u32,
    pub balancing_minutes: u32,
    /// Only `"UTC"` is accepted.
    pub timezone: String,
}

impl BundleMetadata {
    pub fn resolution(&self) -> Result<MarketResolution> {
        MarketResolution::new(self.day_ahead_minutes, self.balancing_minutes)
    }
}

/// File locations of a dataset. `from_dir` uses the standard names.
#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub metadata: PathBuf,
    pub forecasts: PathBuf,
    pub da_prices: PathBuf,
    pub production: PathBuf,
    pub system_imbalance: PathBuf,
    pub balancing_bids: PathBuf,
    /// Exchange-published balancing prices; optional, audit only.
    pub balancing_prices: Option<PathBuf>,
}

impl BundlePaths {
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let published = dir.join("balancing_prices.csv");
        Self {
            metadata: dir.join("metadata.toml"),
            forecasts: dir.join("forecasts.csv"),
            da_prices: dir.join("da_prices.csv"),
            production: dir.join("production.csv"),
            system_imbalance: dir.join("system_imbalance.csv"),
            balancing_bids: dir.join("balancing_bids.csv"),
            balancing_prices: published.exists().then_some(published),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadConfig {
    /// Reject the bundle unless its resolutions match.
    pub expected_resolution: Option<MarketResolution>,
    /// Capacity used for validation instead of the metadata value.
    pub beta_mw_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub metadata: BundleMetadata,
    pub forecasts: BTreeMap<DateTime<Utc>, ForecastMoments>,
    pub da_prices: BTreeMap<DateTime<Utc>, f64>,
    pub production: BTreeMap<DateTime<Utc>, f64>,
    pub system_imbalance: BTreeMap<DateTime<Utc>, f64>,
    pub balancing_bids: BTreeMap<DateTime<Utc>, Vec<BalancingEnergyBid>>,
    pub balancing_prices: Option<BTreeMap<DateTime<Utc>, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub hour: DateTime<Utc>,
    /// `series@timestamp` for each missing value.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAnomaly {
    pub file: String,
    pub timestamp: DateTime<Utc>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub hourly_rows: usize,
    pub quarterly_rows: usize,
    pub complete_hours: usize,
    pub gaps: Vec<GapEntry>,
    /// Identical rows in the bids file (kept; two identical offers are legal).
    pub duplicate_bid_rows: usize,
    pub unit_anomalies: Vec<UnitAnomaly>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuarterRecord {
    pub window: ContractWindow,
    pub production_mwh: f64,
    pub si_mw: f64,
    pub bids: Vec<BalancingEnergyBid>,
    pub raw_price_eur_mwh: Option<f64>,
}

/// All realized data for one day-ahead window.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub hour: ContractWindow,
    pub forecast: ForecastMoments,
    pub da_price_eur_mwh: f64,
    pub quarters: Vec<QuarterRecord>,
}

impl HourRecord {
    pub fn production(&self) -> Vec<f64> {
        self.quarters.iter().map(|q| q.production_mwh).collect()
    }

    pub fn system_imbalance(&self) -> Vec<f64> {
        self.quarters.iter().map(|q| q.si_mw).collect()
    }

    pub fn raw_prices(&self) -> Option<Vec<f64>> {
        self.quarters.iter().map(|q| q.raw_price_eur_mwh).collect()
    }
}

impl DatasetBundle {
    pub fn resolution(&self) -> Result<MarketResolution> {
        self.metadata.resolution()
    }

    /// Hours from the first to the last timestamp seen in any series.
    fn horizon(&self, res: &MarketResolution) -> Vec<DateTime<Utc>> {
        let da = i64::from(res.day_ahead_minutes()) * 60;
        let floor = |t: &DateTime<Utc>| t.timestamp() - t.timestamp().rem_euclid(da);
        let hourly = self.forecasts.keys().chain(self.da_prices.keys());
        let quarterly = self
            .production
            .keys()
            .chain(self.system_imbalance.keys())
            .chain(self.balancing_bids.keys());
        let all: Vec<i64> = hourly.chain(quarterly).map(floor).collect();
        let (Some(&lo), Some(&hi)) = (all.iter().min(), all.iter().max()) else {
            return Vec::new();
        };
        (0..=(hi - lo) / da)
            .filter_map(|k| DateTime::from_timestamp(lo + k * da, 0))
            .collect()
    }

    /// Assembles complete hours and lists the incomplete ones.
    pub fn hour_records(&self) -> Result<(Vec<HourRecord>, Vec<GapEntry>)> {
        let res = self.resolution()?;
        let mut hours = Vec::new();
        let mut gaps = Vec::new();
        for start in self.horizon(&res) {
            let hour = ContractWindow::new(start, res.day_ahead_minutes())?;
            let mut missing = Vec::new();
            let forecast = self.forecasts.get(&start).copied();
            let da = self.da_prices.get(&start).copied();
            if forecast.is_none() {
                missing.push(format!("forecasts@{}", fmt_timestamp(start)));
            }
            if da.is_none() {
                missing.push(format!("da_prices@{}", fmt_timestamp(start)));
            }
            let mut quarters = Vec::with_capacity(res.periods_per_contract());
            for window in sub_windows(&hour, &res)? {
                let t = window.start();
                let production = self.production.get(&t).copied();
                let si = self.system_imbalance.get(&t).copied();
                let bids = self.balancing_bids.get(&t);
                for (name, present) in [
                    ("production", production.is_some()),
                    ("system_imbalance", si.is_some()),
                    ("balancing_bids", bids.is_some()),
                ] {
                    if !present {
                        missing.push(format!("{name}@{}", fmt_timestamp(t)));
                    }
                }
                if let (Some(production_mwh), Some(si_mw), Some(bids)) = (production, si, bids) {
                    quarters.push(QuarterRecord {
                        window,
                        production_mwh,
                        si_mw,
                        bids: bids.clone(),
                        raw_price_eur_mwh: self.balancing_prices.as_ref().and_then(|p| p.get(&t).copied()),
                    });
                }
            }
            match (forecast, da, missing.is_empty()) {
                (Some(forecast), Some(da_price_eur_mwh), true) => hours.push(HourRecord {
                    hour,
                    forecast,
                    da_price_eur_mwh,
                    quarters,
                }),
                _ => gaps.push(GapEntry { hour: start, missing }),
            }
        }
        Ok((hours, gaps))
    }
}

fn check_series<T>(file: &Path, rows: &[(DateTime<Utc>, T)], resolution_minutes: u32, unique: bool) -> Result<()> {
    let misaligned: Vec<DateTime<Utc>> = rows
        .iter()
        .map(|(t, _)| *t)
        .filter(|t| !is_aligned(*t, resolution_minutes))
        .collect();
    if !misaligned.is_empty() {
        return Err(Error::MisalignedSeries {
            file: file.display().to_string(),
            resolution_minutes,
            timestamps: misaligned,
        });
    }
    if unique {
        let mut seen = std::collections::BTreeSet::new();
        for (t, _) in rows {
            if !seen.insert(*t) {
                return Err(Error::DuplicateTimestamp {
                    file: file.display().to_string(),
                    timestamp: *t,
                });
            }
        }
    }
    Ok(())
}

fn read_scalar_series(path: &Path, header: &[&str]) -> Result<Vec<(DateTime<Utc>, f64)>> {
    let mut rows = Vec::new();
    read_csv(path, header, |rec, make| {
        rows.push((field_timestamp(rec, 0, make)?, field_f64(rec, 1, make)?));
        Ok(())
    })?;
    Ok(rows)
}

fn read_bid_rows(path: &Path) -> Result<Vec<(DateTime<Utc>, BalancingEnergyBid)>> {
    let mut bids = Vec::new();
    read_csv(path, &BIDS_HEADER, |rec, make| {
        let t = field_timestamp(rec, 0, make)?;
        let product: Product = field_str(rec, 1, make)?
            .parse()
            .map_err(|e: Error| make(1, e.to_string()))?;
        let direction: ActivationDirection = field_str(rec, 2, make)?
            .parse()
            .map_err(|e: Error| make(2, e.to_string()))?;
        let volume = field_f64(rec, 3, make)?;
        if volume <= 0.0 {
            return Err(make(3, format!("volume_mw must be positive, got {volume}")));
        }
        let price = field_f64(rec, 4, make)?;
        bids.push((t, BalancingEnergyBid::new(product, direction, volume, price)));
        Ok(())
    })?;
    Ok(bids)
}

fn read_forecast_rows(path: &Path, cap_mwh: Option<f64>) -> Result<Vec<(DateTime<Utc>, ForecastMoments)>> {
    let mut rows = Vec::new();
    read_csv(path, &FORECASTS_HEADER, |rec, make| {
        let t = field_timestamp(rec, 0, make)?;
        let mean = field_f64(rec, 1, make)?;
        let variance = field_f64(rec, 2, make)?;
        if variance < 0.0 {
            return Err(make(2, format!("variance must be non-negative, got {variance}")));
        }
        if mean < 0.0 {
            return Err(make(1, format!("mean must be non-negative, got {mean}")));
        }
        if let Some(cap) = cap_mwh.filter(|cap| mean > *cap) {
            return Err(make(1, format!("mean {mean} MWh exceeds contract capacity {cap} MWh")));
        }
        rows.push((t, ForecastMoments::new(mean, variance)));
        Ok(())
    })?;
    Ok(rows)
}

/// Reads a standalone forecasts file (`timestamp_utc,mean_mwh,variance_mwh2`).
pub fn read_forecasts(
    path: impl AsRef<Path>,
    resolution_minutes: u32,
) -> Result<BTreeMap<DateTime<Utc>, ForecastMoments>> {
    let path = path.as_ref();
    let rows = read_forecast_rows(path, None)?;
    check_series(path, &rows, resolution_minutes, true)?;
    Ok(rows.into_iter().collect())
}

/// Reads a standalone price file (`timestamp_utc,price_eur_mwh`).
pub fn read_prices(path: impl AsRef<Path>, resolution_minutes: u32) -> Result<BTreeMap<DateTime<Utc>, f64>> {
    let path = path.as_ref();
    let rows = read_scalar_series(path, &PRICE_HEADER)?;
    check_series(path, &rows, resolution_minutes, true)?;
    Ok(rows.into_iter().collect())
}

/// Reads a balancing-bids file and groups the offers by period.
pub fn read_bids(
    path: impl AsRef<Path>,
    resolution_minutes: u32,
) -> Result<BTreeMap<DateTime<Utc>, Vec<BalancingEnergyBid>>> {
    let path = path.as_ref();
    let rows = read_bid_rows(path)?;
    check_series(path, &rows, resolution_minutes, false)?;
    let mut grouped: BTreeMap<DateTime<Utc>, Vec<BalancingEnergyBid>> = BTreeMap::new();
    for (t, bid) in rows {
        grouped.entry(t).or_default().push(bid);
    }
    Ok(grouped)
}

fn read_metadata(path: &Path) -> Result<BundleMetadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: BundleMetadata = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if meta.timezone != "UTC" {
        return Err(Error::Config(format!(
            "{}: timezone must be \"UTC\", got {:?}",
            path.display(),
            meta.timezone
        )));
    }
    if !(meta.beta_mw.is_finite() && meta.beta_mw > 0.0) {
        return Err(Error::Config(format!(
            "{}: beta_mw must be positive, got {}",
            path.display(),
            meta.beta_mw
        )));
    }
    meta.resolution()?;
    Ok(meta)
}

/// Loads and validates a dataset directory.
pub fn load_bundle(paths: &BundlePaths, config: &LoadConfig) -> Result<(DatasetBundle, ValidationReport)> {
    let metadata = read_metadata(&paths.metadata)?;
    let res = metadata.resolution()?;
    if let Some(expected) = config.expected_resolution {
        if expected != res {
            return Err(Error::Resolution(format!(
                "dataset resolution {}/{} min does not match configured {}/{} min",
                res.day_ahead_minutes(),
                res.balancing_minutes(),
                expected.day_ahead_minutes(),
                expected.balancing_minutes()
            )));
        }
    }
    let beta_mw = config.beta_mw_override.unwrap_or(metadata.beta_mw);
    let cap_hour = res.contract_capacity_mwh(beta_mw);
    let cap_quarter = res.period_capacity_mwh(beta_mw);
    let mut report = ValidationReport::default();

    let forecasts = read_forecast_rows(&paths.forecasts, Some(cap_hour))?;
    check_series(&paths.forecasts, &forecasts, res.day_ahead_minutes(), true)?;

    let da_prices = read_scalar_series(&paths.da_prices, &PRICE_HEADER)?;
    check_series(&paths.da_prices, &da_prices, res.day_ahead_minutes(), true)?;

    let production = read_scalar_series(&paths.production, &PRODUCTION_HEADER)?;
    check_series(&paths.production, &production, res.balancing_minutes(), true)?;
    for (t, e) in &production {
        if *e < 0.0 {
            return Err(Error::Data(format!(
                "{}: negative production {e} MWh at {}",
                paths.production.display(),
                fmt_timestamp(*t)
            )));
        }
        if *e > cap_quarter * (1.0 + 1e-9) {
            report.unit_anomalies.push(UnitAnomaly {
                file: paths.production.display().to_string(),
                timestamp: *t,
                message: format!("production {e} MWh exceeds period capacity {cap_quarter} MWh"),
            });
        }
    }

    let system_imbalance = read_scalar_series(&paths.system_imbalance, &IMBALANCE_HEADER)?;
    check_series(
        &paths.system_imbalance,
        &system_imbalance,
        res.balancing_minutes(),
        true,
    )?;

    let bids = read_bid_rows(&paths.balancing_bids)?;
    check_series(&paths.balancing_bids, &bids, res.balancing_minutes(), false)?;

    let balancing_prices = match &paths.balancing_prices {
        Some(path) => {
            let rows = read_scalar_series(path, &PRICE_HEADER)?;
            check_series(path, &rows, res.balancing_minutes(), true)?;
            Some(rows.into_iter().collect())
        }
        None => None,
    };

    let mut grouped: BTreeMap<DateTime<Utc>, Vec<BalancingEnergyBid>> = BTreeMap::new();
    for (t, bid) in bids {
        let list = grouped.entry(t).or_default();
        if list.contains(&bid) {
            report.duplicate_bid_rows += 1;
        }
        list.push(bid);
    }

    report.hourly_rows = forecasts.len();
    report.quarterly_rows = production.len();

    let bundle = DatasetBundle {
        metadata,
        forecasts: forecasts.into_iter().collect(),
        da_prices: da_prices.into_iter().collect(),
        production: production.into_iter().collect(),
        system_imbalance: system_imbalance.into_iter().collect(),
        balancing_bids: grouped,
        balancing_prices,
    };
    let (hours, gaps) = bundle.hour_records()?;
    report.complete_hours = hours.len();
    report.gaps = gaps;
    Ok((bundle, report))
}

fn scalar_csv(header: &[&str], rows: &BTreeMap<DateTime<Utc>, f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (t, v) in rows {
        let _ = writeln!(out, "{},{}", fmt_timestamp(*t), fmt_f64(*v));
    }
    out
}

/// Writes a bundle with the standard file names.
pub fn write_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = toml::to_string(&bundle.metadata).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&dir.join("metadata.toml"), &meta)?;

    let mut forecasts = FORECASTS_HEADER.join(",");
    forecasts.push('\n');
    for (t, f) in &bundle.forecasts {
        let _ = writeln!(
            forecasts,
            "{},{},{}",
            fmt_timestamp(*t),
            fmt_f64(f.mean_mwh),
            fmt_f64(f.variance_mwh2)
        );
    }
    write_text(&dir.join("forecasts.csv"), &forecasts)?;
    write_text(
        &dir.join("da_prices.csv"),
        &scalar_csv(&PRICE_HEADER, &bundle.da_prices),
    )?;
    write_text(
        &dir.join("production.csv"),
        &scalar_csv(&PRODUCTION_HEADER, &bundle.production),
    )?;
    write_text(
        &dir.join("system_imbalance.csv"),
        &scalar_csv(&IMBALANCE_HEADER, &bundle.system_imbalance),
    )?;

    let mut bids = BIDS_HEADER.join(",");
    bids.push('\n');
    for (t, list) in &bundle.balancing_bids {
        for b in list {
            let _ = writeln!(
                bids,
                "{},{},{},{},{}",
                fmt_timestamp(*t),
                b.product.as_str(),
                b.direction.as_str(),
                fmt_f64(b.volume_mw),
                fmt_f64(b.price_eur_mwh)
            );
        }
    }
    write_text(&dir.join("balancing_bids.csv"), &bids)?;

    if let Some(prices) = &bundle.balancing_prices {
        write_text(&dir.join("balancing_prices.csv"), &scalar_csv(&PRICE_HEADER, prices))?;
    }
    Ok(())
}
