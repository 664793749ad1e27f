//! Ex-post settlement of one day-ahead contract across its balancing periods,
//! with or without the producer's own open position moving the system
//! imbalance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_model::{sub_windows, ContractWindow, MarketResolution};
use crate::merit_order::{clearing_price, MeritOrderCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactMode {
    /// Balancing prices cleared at the historical system imbalance.
    NoImpact,
    /// Balancing prices cleared at the imbalance shifted by the producer's position.
    PriceImpact,
}

impl ImpactMode {
    pub const ALL: [ImpactMode; 2] = [ImpactMode::NoImpact, ImpactMode::PriceImpact];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImpactMode::NoImpact => "no_impact",
            ImpactMode::PriceImpact => "price_impact",
        }
    }
}

impl std::str::FromStr for ImpactMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_impact" => Ok(ImpactMode::NoImpact),
            "price_impact" => Ok(ImpactMode::PriceImpact),
            other => Err(Error::Data(format!("unknown impact mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ImpactMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterOutcome {
    pub quarter: ContractWindow,
    pub production_mwh: f64,
    pub obligation_mwh: f64,
    pub historical_si_mw: f64,
    pub projected_si_mw: f64,
    pub balancing_price_eur_mwh: f64,
    pub balancing_payoff_eur: f64,
    /// Exchange-published price for the period, kept for audit only.
    pub raw_price_eur_mwh: Option<f64>,
    pub scarcity: bool,
    pub zero_imbalance: bool,
}

impl QuarterOutcome {
    pub fn open_position_mwh(&self) -> f64 {
        self.production_mwh - self.obligation_mwh
    }

    /// The projected imbalance points the other way than the historical one.
    pub fn sign_flipped(&self) -> bool {
        sign(self.projected_si_mw) != sign(self.historical_si_mw)
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourLedgerEntry {
    pub hour: ContractWindow,
    pub bid_mwh: f64,
    pub da_price_eur_mwh: f64,
    pub da_revenue_eur: f64,
    pub quarters: Vec<QuarterOutcome>,
    pub total_profit_eur: f64,
    pub mode: ImpactMode,
}

impl HourLedgerEntry {
    pub fn balancing_payoff_eur(&self) -> f64 {
        self.quarters.iter().map(|q| q.balancing_payoff_eur).sum()
    }

    pub fn scarcity_quarters(&self) -> usize {
        self.quarters.iter().filter(|q| q.scarcity).count()
    }

    pub fn zero_imbalance_quarters(&self) -> usize {
        self.quarters.iter().filter(|q| q.zero_imbalance).count()
    }

    pub fn has_sign_flip(&self) -> bool {
        self.quarters.iter().any(QuarterOutcome::sign_flipped)
    }
}

/// Splits a day-ahead bid into equal balancing obligations.
pub fn split_obligation(bid_mwh: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1, "a contract has at least one balancing period");
    vec![bid_mwh / n as f64; n]
}

/// Compensated (Neumaier) sum of per-period obligations.
pub fn total_obligation(parts: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &x in parts {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// System imbalance after adding the producer's open position (MWh over one
/// balancing period, converted to MW).
pub fn project_system_imbalance(historical_si_mw: f64, open_position_mwh: f64, balancing_minutes: u32) -> f64 {
    let factor = 60.0 / f64::from(balancing_minutes);
    historical_si_mw + factor * open_position_mwh
}

/// Realized inputs for one day-ahead window.
#[derive(Debug, Clone, Copy)]
pub struct HourInputs<'a> {
    pub hour: ContractWindow,
    pub bid_mwh: f64,
    pub da_price_eur_mwh: f64,
    pub production_mwh: &'a [f64],
    pub system_imbalance_mw: &'a [f64],
    pub curves: &'a [MeritOrderCurve],
    pub raw_prices_eur_mwh: Option<&'a [f64]>,
}

pub fn settle_hour(inputs: &HourInputs<'_>, mode: ImpactMode, res: &MarketResolution) -> Result<HourLedgerEntry> {
    let n = res.periods_per_contract();
    let hour = inputs.hour;
    let lens = [
        ("production", inputs.production_mwh.len()),
        ("system imbalance", inputs.system_imbalance_mw.len()),
        ("merit-order curves", inputs.curves.len()),
    ];
    for (name, len) in lens {
        if len != n {
            return Err(Error::Data(format!(
                "hour {}: expected {n} {name} periods, got {len}",
                hour.start().to_rfc3339()
            )));
        }
    }
    if let Some(raw) = inputs.raw_prices_eur_mwh {
        if raw.len() != n {
            return Err(Error::Data(format!(
                "hour {}: expected {n} raw balancing prices, got {}",
                hour.start().to_rfc3339(),
                raw.len()
            )));
        }
    }

    let windows = sub_windows(&hour, res)?;
    let obligations = split_obligation(inputs.bid_mwh, n);
    let da_revenue_eur = inputs.da_price_eur_mwh * inputs.bid_mwh;

    let mut quarters = Vec::with_capacity(n);
    let mut total_profit_eur = da_revenue_eur;
    for i in 0..n {
        let production_mwh = inputs.production_mwh[i];
        let obligation_mwh = obligations[i];
        let historical_si_mw = inputs.system_imbalance_mw[i];
        let open = production_mwh - obligation_mwh;
        let projected_si_mw = project_system_imbalance(historical_si_mw, open, res.balancing_minutes());
        let clearing_si = match mode {
            ImpactMode::NoImpact => historical_si_mw,
            ImpactMode::PriceImpact => projected_si_mw,
        };
        let cleared = clearing_price(&inputs.curves[i], clearing_si);
        let balancing_payoff_eur = cleared.price_eur_mwh * open;
        total_profit_eur += balancing_payoff_eur;
        quarters.push(QuarterOutcome {
            quarter: windows[i],
            production_mwh,
            obligation_mwh,
            historical_si_mw,
            projected_si_mw,
            balancing_price_eur_mwh: cleared.price_eur_mwh,
            balancing_payoff_eur,
            raw_price_eur_mwh: inputs.raw_prices_eur_mwh.map(|r| r[i]),
            scarcity: cleared.scarcity,
            zero_imbalance: cleared.zero_imbalance,
        });
    }

    Ok(HourLedgerEntry {
        hour,
        bid_mwh: inputs.bid_mwh,
        da_price_eur_mwh: inputs.da_price_eur_mwh,
        da_revenue_eur,
        quarters,
        total_profit_eur,
        mode,
    })
}
