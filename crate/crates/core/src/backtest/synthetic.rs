//! Seeded synthetic datasets: wind production with forecast moments, day-ahead
//! prices, system imbalance and balancing bid ladders.
//!
//! Presets differ mainly in installed capacity relative to the imbalance
//! scale. With a small producer the own position barely moves the imbalance;
//! with a large one, all-or-nothing positions regularly flip its sign.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{BundleMetadata, DatasetBundle};
use crate::market_model::{sub_windows, ContractWindow, MarketResolution};
use crate::merit_order::{build_curve, clearing_price, BalancingEnergyBid, Product};
use crate::strategy::ForecastMoments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceProcess {
    pub mean_eur_mwh: f64,
    pub volatility_eur_mwh: f64,
    /// Hour-to-hour AR(1) coefficient.
    pub persistence: f64,
    /// Amplitude of the daily cycle.
    pub daily_amplitude_eur_mwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastErrorParams {
    /// Mean forecast error as a fraction of contract capacity.
    pub bias: f64,
    /// Error standard deviation scale as a fraction of contract capacity.
    pub dispersion: f64,
    /// AR(1) coefficient of the latent capacity-factor process.
    pub capacity_factor_persistence: f64,
    pub capacity_factor_volatility: f64,
    /// Relative spread of production between the periods of one hour.
    pub quarter_jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceParams {
    pub mean_mw: f64,
    pub volatility_mw: f64,
    pub persistence: f64,
    pub period_noise_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    pub afrr_bids: usize,
    pub afrr_bid_mw: f64,
    pub mfrr_bids: usize,
    pub mfrr_bid_mw: f64,
    /// Distance of the first up (down) bid above (below) the day-ahead price.
    pub offset_eur_mwh: f64,
    pub afrr_slope_eur_mwh_per_mw: f64,
    pub mfrr_premium_eur_mwh: f64,
    pub mfrr_slope_eur_mwh_per_mw: f64,
    pub price_noise_eur_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub hours: usize,
    pub start: DateTime<Utc>,
    pub beta_mw: f64,
    pub day_ahead_minutes: u32,
    pub balancing_minutes: u32,
    pub da_price: PriceProcess,
    pub forecast: ForecastErrorParams,
    pub imbalance: ImbalanceParams,
    pub ladder: LadderParams,
    /// Split hourly production evenly over the balancing periods.
    pub uniform_periods: bool,
    /// Also emit published balancing prices (cleared at the historical imbalance).
    pub publish_balancing_prices: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SmallProducer,
    LargeProducer,
    /// Shallow ladders: scarcity happens.
    Stress,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" | "small_producer" | "small-producer" => Ok(Preset::SmallProducer),
            "large" | "large_producer" | "large-producer" => Ok(Preset::LargeProducer),
            "stress" => Ok(Preset::Stress),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected small, large or stress)"
            ))),
        }
    }
}

impl SyntheticScenario {
    pub fn preset(preset: Preset, seed: u64, hours: usize) -> Self {
        let base = Self::base(seed, hours);
        match preset {
            Preset::SmallProducer => Self { beta_mw: 0.5, ..base },
            Preset::LargeProducer => base,
            Preset::Stress => Self {
                ladder: LadderParams {
                    afrr_bids: 4,
                    mfrr_bids: 3,
                    ..base.ladder
                },
                ..base
            },
        }
    }

    fn base(seed: u64, hours: usize) -> Self {
        Self {
            seed,
            hours,
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            beta_mw: 400.0,
            day_ahead_minutes: 60,
            balancing_minutes: 15,
            da_price: PriceProcess {
                mean_eur_mwh: 75.0,
                volatility_eur_mwh: 25.0,
                persistence: 0.9,
                daily_amplitude_eur_mwh: 15.0,
            },
            forecast: ForecastErrorParams {
                bias: 0.0,
                dispersion: 0.15,
                capacity_factor_persistence: 0.97,
                capacity_factor_volatility: 1.5,
                quarter_jitter: 0.05,
            },
            imbalance: ImbalanceParams {
                mean_mw: 0.0,
                volatility_mw: 150.0,
                persistence: 0.7,
                period_noise_mw: 40.0,
            },
            ladder: LadderParams {
                afrr_bids: 10,
                afrr_bid_mw: 25.0,
                mfrr_bids: 12,
                mfrr_bid_mw: 80.0,
                offset_eur_mwh: 10.0,
                afrr_slope_eur_mwh_per_mw: 0.25,
                mfrr_premium_eur_mwh: 20.0,
                mfrr_slope_eur_mwh_per_mw: 0.15,
                price_noise_eur_mwh: 3.0,
            },
            uniform_periods: false,
            publish_balancing_prices: true,
        }
    }

    pub fn resolution(&self) -> Result<MarketResolution> {
        MarketResolution::new(self.day_ahead_minutes, self.balancing_minutes)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("synthetic scenario: {what}")));
        if !(self.beta_mw.is_finite() && self.beta_mw > 0.0) {
            return bad("beta_mw must be positive");
        }
        for (name, phi) in [
            ("price persistence", self.da_price.persistence),
            ("capacity factor persistence", self.forecast.capacity_factor_persistence),
            ("imbalance persistence", self.imbalance.persistence),
        ] {
            if !(0.0..1.0).contains(&phi) {
                return bad(&format!("{name} must lie in [0, 1)"));
            }
        }
        if self.forecast.dispersion < 0.0 || self.forecast.quarter_jitter < 0.0 {
            return bad("dispersion and jitter must be non-negative");
        }
        if self.ladder.afrr_bid_mw <= 0.0 || self.ladder.mfrr_bid_mw <= 0.0 {
            return bad("ladder bid volumes must be positive");
        }
        if self.ladder.afrr_bids + self.ladder.mfrr_bids == 0 {
            return bad("ladders need at least one bid per direction");
        }
        if !is_aligned_start(self.start, self.day_ahead_minutes) {
            return bad("start must be aligned to the day-ahead resolution");
        }
        self.resolution().map(|_| ())
    }
}

fn is_aligned_start(t: DateTime<Utc>, minutes: u32) -> bool {
    crate::market_model::is_aligned(t, minutes)
}

struct Ar1 {
    state: f64,
    phi: f64,
    sigma: f64,
}

impl Ar1 {
    fn new(phi: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self {
            state: sigma * z,
            phi,
            sigma,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.state = self.phi * self.state + self.sigma * (1.0 - self.phi * self.phi).sqrt() * z;
        self.state
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates a complete dataset. Identical scenarios give identical bundles.
pub fn generate_synthetic(scenario: &SyntheticScenario) -> Result<DatasetBundle> {
    scenario.validate()?;
    let res = scenario.resolution()?;
    let n = res.periods_per_contract();
    let cap_hour = res.contract_capacity_mwh(scenario.beta_mw);
    let cap_period = res.period_capacity_mwh(scenario.beta_mw);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let p = scenario.da_price;
    let fc = scenario.forecast;
    let im = scenario.imbalance;
    let mut price = Ar1::new(p.persistence, p.volatility_eur_mwh, &mut rng);
    let mut wind = Ar1::new(fc.capacity_factor_persistence, fc.capacity_factor_volatility, &mut rng);
    let mut imbalance = Ar1::new(im.persistence, im.volatility_mw, &mut rng);

    let mut bundle = DatasetBundle {
        metadata: BundleMetadata {
            beta_mw: scenario.beta_mw,
            day_ahead_minutes: scenario.day_ahead_minutes,
            balancing_minutes: scenario.balancing_minutes,
            timezone: "UTC".into(),
        },
        forecasts: BTreeMap::new(),
        da_prices: BTreeMap::new(),
        production: BTreeMap::new(),
        system_imbalance: BTreeMap::new(),
        balancing_bids: BTreeMap::new(),
        balancing_prices: scenario.publish_balancing_prices.then(BTreeMap::new),
    };

    let step = Duration::minutes(i64::from(scenario.day_ahead_minutes));
    for h in 0..scenario.hours {
        let start = scenario.start + step * h as i32;
        let hour = ContractWindow::new(start, scenario.day_ahead_minutes)?;

        let phase = (f64::from(start.hour()) - 8.0) / 24.0 * std::f64::consts::TAU;
        let da = p.mean_eur_mwh + p.daily_amplitude_eur_mwh * phase.sin() + price.step(&mut rng);

        let cf = logistic(wind.step(&mut rng));
        let mean = cap_hour * cf;
        let sd = fc.dispersion * cap_hour * ((cf * (1.0 - cf)).sqrt() + 0.05);
        let z: f64 = rng.sample(StandardNormal);
        let realized = (mean + fc.bias * cap_hour + sd * z).clamp(0.0, cap_hour);

        bundle.forecasts.insert(start, ForecastMoments::new(mean, sd * sd));
        bundle.da_prices.insert(start, da);

        let level = imbalance.step(&mut rng);
        let periods = split_production(realized, n, cap_period, scenario, &mut rng);
        for (window, energy) in sub_windows(&hour, &res)?.into_iter().zip(periods) {
            let t = window.start();
            let noise: f64 = rng.sample(StandardNormal);
            let si = im.mean_mw + level + im.period_noise_mw * noise;
            let bids = ladder(da, &scenario.ladder, &mut rng);
            if let Some(published) = bundle.balancing_prices.as_mut() {
                let curve = build_curve(&bids, window)?;
                published.insert(t, clearing_price(&curve, si).price_eur_mwh);
            }
            bundle.production.insert(t, energy);
            bundle.system_imbalance.insert(t, si);
            bundle.balancing_bids.insert(t, bids);
        }
    }
    Ok(bundle)
}

fn split_production(
    realized: f64,
    n: usize,
    cap_period: f64,
    scenario: &SyntheticScenario,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    if scenario.uniform_periods || n == 1 {
        return vec![(realized / n as f64).min(cap_period); n];
    }
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (1.0 + scenario.forecast.quarter_jitter * z).max(0.05)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (realized * w / total).min(cap_period)).collect()
}

/// Incremental bids climb away from the day-ahead price, decremental bids
/// fall away from it; mFRR sits behind aFRR with a premium.
fn ladder(da: f64, params: &LadderParams, rng: &mut ChaCha8Rng) -> Vec<BalancingEnergyBid> {
    let mut bids = Vec::with_capacity(2 * (params.afrr_bids + params.mfrr_bids));
    for sign in [1.0, -1.0] {
        let mut cumulative = 0.0;
        let mut add = |product: Product, count: usize, size: f64, base: f64, slope: f64, rng: &mut ChaCha8Rng| {
            let mut depth = 0.0;
            for _ in 0..count {
                let volume = size * rng.random_range(0.5..1.5);
                let noise = params.price_noise_eur_mwh * rng.random_range(0.0..1.0);
                let markup = base + slope * (depth + volume / 2.0) + noise;
                depth += volume;
                let price = da + sign * markup;
                bids.push(if sign > 0.0 {
                    BalancingEnergyBid::up(product, volume, price)
                } else {
                    BalancingEnergyBid::down(product, volume, price)
                });
            }
            depth
        };
        cumulative += add(
            Product::Afrr,
            params.afrr_bids,
            params.afrr_bid_mw,
            params.offset_eur_mwh,
            params.afrr_slope_eur_mwh_per_mw,
            rng,
        );
        let mfrr_base =
            params.offset_eur_mwh + params.afrr_slope_eur_mwh_per_mw * cumulative + params.mfrr_premium_eur_mwh;
        add(
            Product::Mfrr,
            params.mfrr_bids,
            params.mfrr_bid_mw,
            mfrr_base,
            params.mfrr_slope_eur_mwh_per_mw,
            rng,
        );
    }
    bids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bundle() {
        let s = SyntheticScenario::preset(Preset::LargeProducer, 1, 48);
        assert_eq!(generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
        let other = SyntheticScenario::preset(Preset::LargeProducer, 2, 48);
        assert_ne!(generate_synthetic(&s).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn generated_values_respect_bundle_invariants() {
        for preset in [Preset::SmallProducer, Preset::LargeProducer, Preset::Stress] {
            let s = SyntheticScenario::preset(preset, 7, 200);
            let b = generate_synthetic(&s).unwrap();
            let res = s.resolution().unwrap();
            assert_eq!(b.forecasts.len(), 200);
            assert_eq!(b.production.len(), 800);
            for f in b.forecasts.values() {
                f.validate(res.contract_capacity_mwh(s.beta_mw)).unwrap();
            }
            let cap_q = res.period_capacity_mwh(s.beta_mw);
            assert!(b.production.values().all(|e| (0.0..=cap_q).contains(e)));
            assert!(b.balancing_bids.values().flatten().all(|bid| bid.validate().is_ok()));
            let (hours, gaps) = b.hour_records().unwrap();
            assert_eq!(hours.len(), 200);
            assert!(gaps.is_empty());
        }
    }

    #[test]
    fn uniform_split_is_exact() {
        let mut s = SyntheticScenario::preset(Preset::LargeProducer, 3, 24);
        s.uniform_periods = true;
        let b = generate_synthetic(&s).unwrap();
        for q in b.production.values().collect::<Vec<_>>().chunks(4) {
            assert!(q.iter().all(|v| *v == q[0]));
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = SyntheticScenario::preset(Preset::LargeProducer, 3, 24);
        s.imbalance.persistence = 1.0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = SyntheticScenario::preset(Preset::LargeProducer, 3, 24);
        s.balancing_minutes = 25;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn preset_names_parse() {
        assert_eq!("small".parse::<Preset>().unwrap(), Preset::SmallProducer);
        assert_eq!("large-producer".parse::<Preset>().unwrap(), Preset::LargeProducer);
        assert!("huge".parse::<Preset>().is_err());
    }
}
