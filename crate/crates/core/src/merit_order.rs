//! Merit-order curves for one settlement period and the one-price imbalance
//! price they clear at.
//!
//! Activation order dominates price: every aFRR segment comes before every
//! mFRR segment. Within a product, incremental bids are taken cheapest first
//! and decremental bids highest price first.

use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_model::ContractWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Product {
    #[serde(rename = "aFRR")]
    Afrr,
    #[serde(rename = "mFRR")]
    Mfrr,
}

impl Product {
    pub fn as_str(&self) -> &'static str {
        match self {
            Product::Afrr => "aFRR",
            Product::Mfrr => "mFRR",
        }
    }
}

impl FromStr for Product {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aFRR" => Ok(Product::Afrr),
            "mFRR" => Ok(Product::Mfrr),
            other => Err(Error::Data(format!("unknown balancing product {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationDirection {
    /// Upward regulation, activated when the system is short.
    Incremental,
    /// Downward regulation, activated when the system is long.
    Decremental,
}

impl ActivationDirection {
    /// Name used in the bids file.
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivationDirection::Incremental => "up",
            ActivationDirection::Decremental => "down",
        }
    }
}

impl FromStr for ActivationDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(ActivationDirection::Incremental),
            "down" => Ok(ActivationDirection::Decremental),
            other => Err(Error::Data(format!("unknown bid direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancingEnergyBid {
    pub product: Product,
    pub direction: ActivationDirection,
    pub volume_mw: f64,
    pub price_eur_mwh: f64,
}

impl BalancingEnergyBid {
    pub fn new(product: Product, direction: ActivationDirection, volume_mw: f64, price_eur_mwh: f64) -> Self {
        Self {
            product,
            direction,
            volume_mw,
            price_eur_mwh,
        }
    }

    pub fn up(product: Product, volume_mw: f64, price_eur_mwh: f64) -> Self {
        Self::new(product, ActivationDirection::Incremental, volume_mw, price_eur_mwh)
    }

    pub fn down(product: Product, volume_mw: f64, price_eur_mwh: f64) -> Self {
        Self::new(product, ActivationDirection::Decremental, volume_mw, price_eur_mwh)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume_mw.is_finite() && self.volume_mw > 0.0) {
            return Err(Error::Data(format!(
                "balancing bid volume must be positive, got {} MW",
                self.volume_mw
            )));
        }
        if !self.price_eur_mwh.is_finite() {
            return Err(Error::Data(format!(
                "balancing bid price must be finite, got {}",
                self.price_eur_mwh
            )));
        }
        Ok(())
    }
}

/// One step of a merit-order stack. `cumulative_volume_mw` is the volume
/// activated once this segment is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub product: Product,
    pub cumulative_volume_mw: f64,
    pub price_eur_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritOrderCurve {
    pub quarter: ContractWindow,
    pub up_stack: Vec<Segment>,
    pub down_stack: Vec<Segment>,
}

/// Result of clearing a curve against a system imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clearing {
    pub price_eur_mwh: f64,
    /// Required volume exceeded the offered volume (or the needed stack was empty).
    pub scarcity: bool,
    pub zero_imbalance: bool,
}

impl MeritOrderCurve {
    pub fn up_volume_mw(&self) -> f64 {
        self.up_stack.last().map_or(0.0, |s| s.cumulative_volume_mw)
    }

    pub fn down_volume_mw(&self) -> f64 {
        self.down_stack.last().map_or(0.0, |s| s.cumulative_volume_mw)
    }
}

/// Builds the activation stacks for one settlement period.
pub fn build_curve(bids: &[BalancingEnergyBid], quarter: ContractWindow) -> Result<MeritOrderCurve> {
    for bid in bids {
        bid.validate()?;
    }
    let pick = |dir: ActivationDirection| -> Vec<BalancingEnergyBid> {
        bids.iter().copied().filter(|b| b.direction == dir).collect()
    };
    Ok(MeritOrderCurve {
        quarter,
        up_stack: stack(pick(ActivationDirection::Incremental), |a, b| a.total_cmp(&b)),
        down_stack: stack(pick(ActivationDirection::Decremental), |a, b| b.total_cmp(&a)),
    })
}

fn stack(mut bids: Vec<BalancingEnergyBid>, price_order: impl Fn(f64, f64) -> Ordering) -> Vec<Segment> {
    // Volume is the final key so that summation order, and hence the merged
    // floating-point volumes, depend only on the bid multiset.
    bids.sort_by(|a, b| {
        a.product
            .cmp(&b.product)
            .then_with(|| price_order(a.price_eur_mwh, b.price_eur_mwh))
            .then_with(|| a.volume_mw.total_cmp(&b.volume_mw))
    });

    let mut segments: Vec<Segment> = Vec::new();
    let mut cumulative = 0.0;
    for bid in bids {
        cumulative += bid.volume_mw;
        match segments.last_mut() {
            Some(last) if last.product == bid.product && last.price_eur_mwh == bid.price_eur_mwh => {
                last.cumulative_volume_mw = cumulative;
            }
            _ => segments.push(Segment {
                product: bid.product,
                cumulative_volume_mw: cumulative,
                price_eur_mwh: bid.price_eur_mwh,
            }),
        }
    }
    segments
}

/// Imbalance price for system imbalance `system_imbalance_mw` (negative when
/// the system is short). The required volume is `-system_imbalance_mw`; the
/// price is that of the segment covering it, a boundary volume clearing at the
/// segment that ends there.
pub fn clearing_price(curve: &MeritOrderCurve, system_imbalance_mw: f64) -> Clearing {
    let required = -system_imbalance_mw;
    if required == 0.0 {
        let price = curve
            .up_stack
            .first()
            .or(curve.down_stack.first())
            .map_or(0.0, |s| s.price_eur_mwh);
        return Clearing {
            price_eur_mwh: price,
            scarcity: false,
            zero_imbalance: true,
        };
    }

    let (stack, other) = if required > 0.0 {
        (&curve.up_stack, &curve.down_stack)
    } else {
        (&curve.down_stack, &curve.up_stack)
    };
    let volume = required.abs();

    match stack.iter().find(|s| s.cumulative_volume_mw >= volume) {
        Some(seg) => Clearing {
            price_eur_mwh: seg.price_eur_mwh,
            scarcity: false,
            zero_imbalance: false,
        },
        None => {
            let price = stack.last().or(other.first()).map_or(0.0, |s| s.price_eur_mwh);
            Clearing {
                price_eur_mwh: price,
                scarcity: true,
                zero_imbalance: false,
            }
        }
    }
}
