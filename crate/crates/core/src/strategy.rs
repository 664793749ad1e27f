//! Risk-constrained day-ahead bidding under a one-price balancing scheme.
//!
//! The expected profit of a bid `y` is linear in `y` with slope
//! `E[da] - E[bal]`, so without a risk limit the optimum is all-or-nothing.
//! Bounding the expected squared open position by `alpha` turns into the
//! interval `mean ± sqrt(alpha - variance)` around the point forecast, and the
//! optimal bid sits on whichever edge of that interval the price spread
//! favours, clipped to `[0, capacity]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_model::MarketResolution;

/// Conditional mean and variance of the energy produced in one contract window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastMoments {
    pub mean_mwh: f64,
    pub variance_mwh2: f64,
}

impl ForecastMoments {
    pub fn new(mean_mwh: f64, variance_mwh2: f64) -> Self {
        Self {
            mean_mwh,
            variance_mwh2,
        }
    }

    /// Checks the moments against the energy deliverable at `cap_mwh`.
    pub fn validate(&self, cap_mwh: f64) -> Result<()> {
        if !self.mean_mwh.is_finite() || !self.variance_mwh2.is_finite() {
            return Err(Error::Data(format!(
                "non-finite forecast moments (mean {}, variance {})",
                self.mean_mwh, self.variance_mwh2
            )));
        }
        if self.variance_mwh2 < 0.0 {
            return Err(Error::Data(format!(
                "negative forecast variance {}",
                self.variance_mwh2
            )));
        }
        if self.mean_mwh < 0.0 || self.mean_mwh > cap_mwh {
            return Err(Error::Data(format!(
                "forecast mean {} MWh outside [0, {}]",
                self.mean_mwh, cap_mwh
            )));
        }
        Ok(())
    }
}

/// Expected day-ahead and balancing prices for one contract window, the
/// balancing price already averaged to the day-ahead resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceExpectation {
    pub da_eur_mwh: f64,
    pub bal_eur_mwh: f64,
}

impl PriceExpectation {
    pub fn new(da_eur_mwh: f64, bal_eur_mwh: f64) -> Self {
        Self {
            da_eur_mwh,
            bal_eur_mwh,
        }
    }

    pub fn spread(&self) -> f64 {
        self.da_eur_mwh - self.bal_eur_mwh
    }

    /// Strict inequality; a price tie goes to the long branch.
    pub fn favours_short(&self) -> bool {
        self.da_eur_mwh > self.bal_eur_mwh
    }

    fn validate(&self) -> Result<()> {
        if self.da_eur_mwh.is_finite() && self.bal_eur_mwh.is_finite() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "non-finite price expectation (da {}, bal {})",
                self.da_eur_mwh, self.bal_eur_mwh
            )))
        }
    }
}

/// Upper bound on the expected squared open position, either absolute or
/// normalised between point-forecast (0) and all-or-nothing (1) bidding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCertificate {
    Absolute { alpha_mwh2: f64 },
    Normalised { alpha_tilde: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Bid above the forecast: short in the balancing market.
    Short,
    /// Bid below the forecast: long in the balancing market.
    Long,
    Neutral,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Short => "short",
            Direction::Long => "long",
            Direction::Neutral => "neutral",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Direction::Short),
            "long" => Ok(Direction::Long),
            "neutral" => Ok(Direction::Neutral),
            other => Err(Error::Data(format!("unknown direction {other:?}"))),
        }
    }
}

/// Allowed deviation from the point forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaOutcome {
    pub delta_mwh: f64,
    /// The certificate was below the forecast variance; the deviation was
    /// clamped to zero.
    pub infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidDecision {
    pub bid_mwh: f64,
    pub direction: Direction,
    pub delta_mwh: f64,
    pub clamped: bool,
}

/// `sqrt(alpha - variance)`, or zero with the infeasible flag when
/// `alpha < variance`.
pub fn delta_from_alpha(alpha_mwh2: f64, f: &ForecastMoments) -> Result<DeltaOutcome> {
    if !(alpha_mwh2.is_finite() && alpha_mwh2 >= 0.0) {
        return Err(Error::Domain(format!(
            "risk certificate must be a finite non-negative number, got {alpha_mwh2}"
        )));
    }
    let slack = alpha_mwh2 - f.variance_mwh2;
    if slack < 0.0 {
        return Ok(DeltaOutcome {
            delta_mwh: 0.0,
            infeasible: true,
        });
    }
    Ok(DeltaOutcome {
        delta_mwh: slack.sqrt(),
        infeasible: false,
    })
}

/// Deviation for a normalised certificate: `alpha_tilde` times the largest
/// deviation either branch can use, `max(cap - mean, mean)`.
pub fn normalized_delta(alpha_tilde: f64, f: &ForecastMoments, beta_mw: f64, res: &MarketResolution) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha_tilde) {
        return Err(Error::Domain(format!(
            "normalised risk certificate must lie in [0, 1], got {alpha_tilde}"
        )));
    }
    let cap_mwh = res.contract_capacity_mwh(beta_mw);
    let envelope = (cap_mwh - f.mean_mwh).max(f.mean_mwh);
    Ok(alpha_tilde * envelope)
}

/// Resolves either certificate form into a deviation.
pub fn resolve_delta(
    cert: RiskCertificate,
    f: &ForecastMoments,
    beta_mw: f64,
    res: &MarketResolution,
) -> Result<DeltaOutcome> {
    match cert {
        RiskCertificate::Absolute { alpha_mwh2 } => delta_from_alpha(alpha_mwh2, f),
        RiskCertificate::Normalised { alpha_tilde } => Ok(DeltaOutcome {
            delta_mwh: normalized_delta(alpha_tilde, f, beta_mw, res)?,
            infeasible: false,
        }),
    }
}

/// The optimal bid for a given deviation budget.
pub fn compute_optimal_bid(
    p: &PriceExpectation,
    f: &ForecastMoments,
    delta_mwh: f64,
    beta_mw: f64,
    res: &MarketResolution,
) -> Result<BidDecision> {
    p.validate()?;
    if !(beta_mw.is_finite() && beta_mw >= 0.0) {
        return Err(Error::Domain(format!(
            "installed capacity must be non-negative, got {beta_mw}"
        )));
    }
    let cap_mwh = res.contract_capacity_mwh(beta_mw);
    f.validate(cap_mwh)?;
    if !(delta_mwh.is_finite() && delta_mwh >= 0.0) {
        return Err(Error::Domain(format!(
            "deviation must be a finite non-negative number, got {delta_mwh}"
        )));
    }

    // Bounds are compared against the headroom rather than against
    // `mean ± delta` so that a deviation equal to the headroom lands on the
    // bound exactly.
    let (bid_mwh, clamped, direction) = if p.favours_short() {
        let headroom = cap_mwh - f.mean_mwh;
        if delta_mwh >= headroom {
            (cap_mwh, delta_mwh > headroom, Direction::Short)
        } else {
            (f.mean_mwh + delta_mwh, false, Direction::Short)
        }
    } else if delta_mwh >= f.mean_mwh {
        (0.0, delta_mwh > f.mean_mwh, Direction::Long)
    } else {
        (f.mean_mwh - delta_mwh, false, Direction::Long)
    };

    let direction = if delta_mwh == 0.0 {
        Direction::Neutral
    } else {
        direction
    };

    Ok(BidDecision {
        bid_mwh,
        direction,
        delta_mwh,
        clamped,
    })
}

/// Grid-search solution of the bidding problem, used to check the analytical
/// rule. Maximises `(E[da] - E[bal]) * y` over `y in {0, step, .., cap}`
/// subject to `(y - mean)^2 + variance <= alpha`; ties go to the feasible point
/// closest to the mean, and an empty feasible set returns the clamped mean.
pub fn brute_force_bid(
    p: &PriceExpectation,
    f: &ForecastMoments,
    alpha_mwh2: f64,
    beta_mw: f64,
    res: &MarketResolution,
    grid_step_mwh: f64,
) -> f64 {
    assert!(grid_step_mwh > 0.0, "grid step must be positive");
    let cap_mwh = res.contract_capacity_mwh(beta_mw);
    let spread = p.da_eur_mwh - p.bal_eur_mwh;
    let steps = (cap_mwh / grid_step_mwh).floor() as u64;

    let mut best: Option<(f64, f64)> = None;
    let mut consider = |y: f64| {
        let dev = y - f.mean_mwh;
        if dev * dev + f.variance_mwh2 > alpha_mwh2 {
            return;
        }
        let objective = spread * y;
        best = match best {
            None => Some((y, objective)),
            Some((by, bo)) => {
                if objective > bo || (objective == bo && dev.abs() < (by - f.mean_mwh).abs()) {
                    Some((y, objective))
                } else {
                    Some((by, bo))
                }
            }
        };
    };
    for k in 0..=steps {
        consider(k as f64 * grid_step_mwh);
    }
    if steps as f64 * grid_step_mwh < cap_mwh {
        consider(cap_mwh);
    }

    match best {
        Some((y, _)) => y,
        None => f.mean_mwh.clamp(0.0, cap_mwh),
    }
}
