//! Command-line front end: argument definitions and command handlers.
//!
//! Exit codes: 0 on success, 1 on internal or environment failures, 2 on
//! invalid input.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use crate::backtest::synthetic::{generate_synthetic, Preset, SyntheticScenario};
use crate::backtest::{run_sweep, SweepConfig};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{
    fmt_f64, fmt_timestamp, load_bundle, read_bids, read_forecasts, read_prices, write_bundle, write_report,
    BundlePaths, LoadConfig,
};
use crate::market_model::{ContractWindow, MarketResolution};
use crate::merit_order::{build_curve, clearing_price};
use crate::settlement::ImpactMode;
use crate::strategy::{compute_optimal_bid, resolve_delta, PriceExpectation, RiskCertificate};

pub const DATA_DIR_ENV: &str = "WINDBID_DATA_DIR";

pub const BID_HEADER: [&str; 6] = [
    "timestamp_utc",
    "bid_mwh",
    "direction",
    "delta_mwh",
    "clamped",
    "infeasible",
];
pub const PRICE_OUTPUT_HEADER: [&str; 5] = ["timestamp_utc", "si_mw", "price_eur_mwh", "scarcity", "zero_imbalance"];

#[derive(Debug, Parser)]
#[command(
    name = "windbid",
    version,
    about = "Risk-constrained day-ahead bidding for wind producers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one bid per day-ahead window from forecasts and price expectations.
    Bid(BidArgs),
    /// Run the strategy sweep over a dataset and write the report files.
    Backtest(BacktestArgs),
    /// Clear a balancing-bid stack at a given system imbalance.
    Price(PriceArgs),
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct BidArgs {
    /// Forecast moments, `timestamp_utc,mean_mwh,variance_mwh2`.
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Expected day-ahead prices, `timestamp_utc,price_eur_mwh`.
    #[arg(long)]
    pub da_expectation: PathBuf,
    /// Expected balancing prices per day-ahead window, `timestamp_utc,price_eur_mwh`.
    #[arg(long)]
    pub bal_expectation: PathBuf,
    /// Normalised risk certificate in [0, 1].
    #[arg(long, conflicts_with = "alpha_mwh2", required_unless_present = "alpha_mwh2")]
    pub alpha_tilde: Option<f64>,
    /// Absolute risk certificate on the expected squared open position.
    #[arg(long)]
    pub alpha_mwh2: Option<f64>,
    /// Installed capacity.
    #[arg(long)]
    pub beta_mw: f64,
    #[arg(long, default_value_t = 60)]
    pub day_ahead_minutes: u32,
    #[arg(long, default_value_t = 15)]
    pub balancing_minutes: u32,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Dataset directory.
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    /// Run configuration (TOML key-value file).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub beta_mw: Option<f64>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub alpha_tildes: Option<Vec<f64>>,
    /// Comma-separated subset of `no_impact,price_impact`.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<ImpactMode>>,
    #[arg(long, value_parser = parse_time)]
    pub horizon_start: Option<DateTime<Utc>>,
    #[arg(long, value_parser = parse_time)]
    pub horizon_end: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Balancing bids, `timestamp_utc,product,direction,volume_mw,price_eur_mwh`.
    #[arg(long)]
    pub bids_file: PathBuf,
    /// System imbalance in MW; negative means shortage.
    #[arg(long, allow_hyphen_values = true)]
    pub si: f64,
    /// Only clear this period.
    #[arg(long, value_parser = parse_time)]
    pub timestamp: Option<DateTime<Utc>>,
    #[arg(long, default_value_t = 15)]
    pub balancing_minutes: u32,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// `small`, `large` or `stress`.
    #[arg(long)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub hours: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    crate::io::parse_timestamp(s)
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        e if e.is_input_error() => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bid(args) => cmd_bid(&args),
        Command::Backtest(args) => cmd_backtest(&args),
        Command::Price(args) => cmd_price(&args),
        Command::Generate(args) => cmd_generate(&args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => crate::io::write_text(path, text),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Output of the `bid` command.
#[derive(Debug, Clone, PartialEq)]
pub struct BidTable {
    pub csv: String,
    /// Windows whose certificate was below the forecast variance.
    pub infeasible: Vec<DateTime<Utc>>,
}

/// Builds the bid table. Every window between the first and last timestamp
/// seen in any input must be present in all three inputs.
pub fn bid_table(args: &BidArgs) -> Result<BidTable> {
    let res = MarketResolution::new(args.day_ahead_minutes, args.balancing_minutes)?;
    let da_minutes = res.day_ahead_minutes();
    let forecasts = read_forecasts(&args.forecasts, da_minutes)?;
    let da = read_prices(&args.da_expectation, da_minutes)?;
    let bal = read_prices(&args.bal_expectation, da_minutes)?;
    let cert = match (args.alpha_tilde, args.alpha_mwh2) {
        (Some(alpha_tilde), _) => RiskCertificate::Normalised { alpha_tilde },
        (None, Some(alpha_mwh2)) => RiskCertificate::Absolute { alpha_mwh2 },
        (None, None) => return Err(Error::Config("one of --alpha-tilde or --alpha-mwh2 is required".into())),
    };

    let seen: BTreeSet<DateTime<Utc>> = forecasts.keys().chain(da.keys()).chain(bal.keys()).copied().collect();
    let (Some(&first), Some(&last)) = (seen.first(), seen.last()) else {
        return Err(Error::Data("no forecast or price rows".into()));
    };

    let mut out = BID_HEADER.join(",");
    out.push('\n');
    let mut infeasible = Vec::new();
    let mut window = ContractWindow::new(first, da_minutes)?;
    while window.start() <= last {
        let t = window.start();
        let missing: Vec<&str> = [
            ("forecasts", forecasts.contains_key(&t)),
            ("da_expectation", da.contains_key(&t)),
            ("bal_expectation", bal.contains_key(&t)),
        ]
        .into_iter()
        .filter(|(_, present)| !present)
        .map(|(name, _)| name)
        .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "missing hour {}: no {} row",
                fmt_timestamp(t),
                missing.join(", ")
            )));
        }
        let f = forecasts[&t];
        let p = PriceExpectation::new(da[&t], bal[&t]);
        let delta = resolve_delta(cert, &f, args.beta_mw, &res)?;
        let decision = compute_optimal_bid(&p, &f, delta.delta_mwh, args.beta_mw, &res)
            .map_err(|e| Error::Data(format!("{}: {e}", fmt_timestamp(t))))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_timestamp(t),
            fmt_f64(decision.bid_mwh),
            decision.direction.as_str(),
            fmt_f64(decision.delta_mwh),
            flag(decision.clamped),
            flag(delta.infeasible)
        );
        if delta.infeasible {
            infeasible.push(t);
        }
        window = window.next();
    }
    Ok(BidTable { csv: out, infeasible })
}

fn cmd_bid(args: &BidArgs) -> Result<()> {
    let table = bid_table(args)?;
    for t in &table.infeasible {
        eprintln!(
            "warning: {}: certificate below forecast variance, bidding the point forecast",
            fmt_timestamp(*t)
        );
    }
    emit(args.out.as_deref(), &table.csv)
}

/// Effective configuration of a backtest: file values, then flags.
pub fn backtest_config(args: &BacktestArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        beta_mw: args.beta_mw,
        alpha_tildes: args.alpha_tildes.clone(),
        modes: args.modes.clone(),
        horizon_start: args.horizon_start,
        horizon_end: args.horizon_end,
        data_dir: args.data_dir.as_ref().map(|p| p.display().to_string()),
        parallelism: args.parallelism,
        ..RunConfig::default()
    };
    Ok(file.merged(flags))
}

/// Config echoed into `summary.json`. Output location and thread count are
/// left out so that reports do not depend on them.
fn config_echo(run: &RunConfig, sweep: &SweepConfig) -> Result<serde_json::Value> {
    let mut value = serde_json::to_value(sweep).map_err(|e| Error::Config(e.to_string()))?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "data_dir".into(),
            serde_json::to_value(&run.data_dir).unwrap_or_default(),
        );
        map.insert("seed".into(), serde_json::to_value(run.seed).unwrap_or_default());
    }
    Ok(value)
}

fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    let run = backtest_config(args)?;
    let data_dir = run
        .data_dir
        .clone()
        .ok_or_else(|| Error::Config(format!("no data directory: pass --data-dir or set {DATA_DIR_ENV}")))?;
    let paths = BundlePaths::from_dir(&data_dir);
    let (bundle, validation) = load_bundle(
        &paths,
        &LoadConfig {
            expected_resolution: None,
            beta_mw_override: run.beta_mw,
        },
    )?;
    let sweep = run.resolve(&bundle.metadata)?;
    let report = run_sweep(&sweep, &bundle)?;
    if report.hours.is_empty() {
        return Err(Error::Data(format!(
            "empty horizon: no complete hours in {data_dir} ({} incomplete)",
            report.gaps.len()
        )));
    }
    for a in &validation.unit_anomalies {
        eprintln!("warning: {}: {} at {}", a.file, a.message, fmt_timestamp(a.timestamp));
    }
    write_report(&report, &args.out_dir, Some(config_echo(&run, &sweep)?))?;
    eprintln!(
        "{} hours settled, {} skipped; report in {}",
        report.hours.len(),
        report.gaps.len(),
        args.out_dir.display()
    );
    Ok(())
}

/// Clears every period in the bids file (or just `--timestamp`) at `--si`.
pub fn price_table(args: &PriceArgs) -> Result<String> {
    if !args.si.is_finite() {
        return Err(Error::Domain(format!("--si must be finite, got {}", args.si)));
    }
    let bids = read_bids(&args.bids_file, args.balancing_minutes)?;
    let selected: Vec<_> = match args.timestamp {
        Some(t) => {
            let list = bids
                .get(&t)
                .ok_or_else(|| Error::Data(format!("no bids for {}", fmt_timestamp(t))))?;
            vec![(t, list)]
        }
        None => bids.iter().map(|(t, l)| (*t, l)).collect(),
    };
    if selected.is_empty() {
        return Err(Error::Data("bids file has no rows".into()));
    }
    let mut out = PRICE_OUTPUT_HEADER.join(",");
    out.push('\n');
    for (t, list) in selected {
        let curve = build_curve(list, ContractWindow::new(t, args.balancing_minutes)?)?;
        let c = clearing_price(&curve, args.si);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_timestamp(t),
            fmt_f64(args.si),
            fmt_f64(c.price_eur_mwh),
            flag(c.scarcity),
            flag(c.zero_imbalance)
        );
    }
    Ok(out)
}

fn cmd_price(args: &PriceArgs) -> Result<()> {
    let table = price_table(args)?;
    emit(None, &table)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    if args.hours == 0 {
        return Err(Error::Config("--hours must be at least 1".into()));
    }
    let scenario = SyntheticScenario::preset(args.preset, args.seed, args.hours);
    let bundle = generate_synthetic(&scenario)?;
    write_bundle(&bundle, &args.out_dir)
}
