//! Stage-game quantities of the two-market double auction in the large-population
//! limit: trading prices, validity and matching probabilities, score moments and
//! expected payoffs as functions of the class aggregates.
//!
//! Orders are priced with zero intelligence: bids are `N(mu_b, sigma_b^2)`, asks are
//! `N(mu_a, sigma_a^2)`. A market with bias `theta` clears at
//! `theta * <bid> + (1 - theta) * <ask>`, so `theta = 1` prices at the mean bid
//! (seller friendly) and `theta = 0` at the mean ask (buyer friendly).

use crate::error::{Error, Result};
use crate::gaussian;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Order side. Asks sell one unit, bids buy one unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Ask => "ask",
            Side::Bid => "bid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Market {
    One,
    Two,
}

impl Market {
    pub const BOTH: [Market; 2] = [Market::One, Market::Two];

    pub fn index(self) -> usize {
        match self {
            Market::One => 0,
            Market::Two => 1,
        }
    }

    pub fn other(self) -> Market {
        match self {
            Market::One => Market::Two,
            Market::Two => Market::One,
        }
    }
}

/// Trader class; classes differ only in their probability of buying.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::One, Class::Two];

    pub fn index(self) -> usize {
        match self {
            Class::One => 0,
            Class::Two => 1,
        }
    }

    pub fn other(self) -> Class {
        match self {
            Class::One => Class::Two,
            Class::Two => Class::One,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

fn default_mu_b() -> f64 {
    GameParams::DEFAULT_MU_B
}
fn default_mu_a() -> f64 {
    GameParams::DEFAULT_MU_A
}
fn default_sigma() -> f64 {
    1.0
}

/// Full specification of the stage game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub theta_1: f64,
    pub theta_2: f64,
    #[serde(default = "default_mu_b")]
    pub mu_b: f64,
    #[serde(default = "default_mu_a")]
    pub mu_a: f64,
    #[serde(default = "default_sigma")]
    pub sigma_b: f64,
    #[serde(default = "default_sigma")]
    pub sigma_a: f64,
    pub pb_1: f64,
    pub pb_2: f64,
}

impl GameParams {
    /// Only `mu_b - mu_a` matters; a unit gap reproduces the published symmetric
    /// equilibrium at `theta_1 = 0.3`, `pb = 0.2`.
    pub const DEFAULT_MU_B: f64 = 10.0;
    pub const DEFAULT_MU_A: f64 = 9.0;

    /// Symmetric setup `theta_2 = 1 - theta_1`, `pb_2 = 1 - pb_1` with default prices.
    pub fn symmetric(theta_1: f64, pb_1: f64) -> Self {
        GameParams {
            theta_1,
            theta_2: 1.0 - theta_1,
            mu_b: Self::DEFAULT_MU_B,
            mu_a: Self::DEFAULT_MU_A,
            sigma_b: 1.0,
            sigma_a: 1.0,
            pb_1,
            pb_2: 1.0 - pb_1,
        }
    }

    pub fn with_prices(mut self, mu_b: f64, mu_a: f64) -> Self {
        self.mu_b = mu_b;
        self.mu_a = mu_a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("theta_1", self.theta_1)?;
        unit("theta_2", self.theta_2)?;
        unit("pb_1", self.pb_1)?;
        unit("pb_2", self.pb_2)?;
        if !(self.sigma_b > 0.0 && self.sigma_a > 0.0) {
            return Err(Error::InvalidConfig("price standard deviations must be positive".into()));
        }
        if !(self.mu_b.is_finite() && self.mu_a.is_finite()) {
            return Err(Error::InvalidConfig("mean prices must be finite".into()));
        }
        Ok(())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.theta_1 + self.theta_2 - 1.0).abs() <= tol
            && (self.pb_1 + self.pb_2 - 1.0).abs() <= tol
            && (self.sigma_a - self.sigma_b).abs() <= tol
    }

    pub fn theta(&self, m: Market) -> f64 {
        match m {
            Market::One => self.theta_1,
            Market::Two => self.theta_2,
        }
    }

    pub fn pb(&self, c: Class) -> f64 {
        match c {
            Class::One => self.pb_1,
            Class::Two => self.pb_2,
        }
    }

    /// Mean-field trading price of market `m`.
    pub fn price(&self, m: Market) -> f64 {
        trading_price(self.theta(m), self.mu_b, self.mu_a)
    }
}

/// Class-average probabilities of choosing market 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub pbar_1: f64,
    pub pbar_2: f64,
}

impl Aggregates {
    pub fn new(pbar_1: f64, pbar_2: f64) -> Result<Self> {
        for v in [pbar_1, pbar_2] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("aggregate {v} outside [0, 1]")));
            }
        }
        Ok(Aggregates { pbar_1, pbar_2 })
    }

    /// Point on the anti-diagonal `pbar_2 = 1 - pbar_1`.
    pub fn symmetric(pbar_1: f64) -> Self {
        Aggregates { pbar_1, pbar_2: 1.0 - pbar_1 }
    }

    pub fn get(&self, c: Class) -> f64 {
        match c {
            Class::One => self.pbar_1,
            Class::Two => self.pbar_2,
        }
    }

    /// Image under the simultaneous class and market swap of the symmetric setup.
    pub fn mirrored(&self) -> Self {
        Aggregates { pbar_1: 1.0 - self.pbar_2, pbar_2: 1.0 - self.pbar_1 }
    }
}

/// Buyer-to-seller ratio at one market.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketCondition {
    /// No orders of either kind reach the market.
    Empty,
    /// Buyers per seller; `+inf` when only buyers are present.
    Ratio(f64),
}

impl MarketCondition {
    pub fn ratio(self) -> Option<f64> {
        match self {
            MarketCondition::Empty => None,
            MarketCondition::Ratio(f) => Some(f),
        }
    }

    pub fn is_empty(self) -> bool {
        matches!(self, MarketCondition::Empty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConditions {
    pub f_1: MarketCondition,
    pub f_2: MarketCondition,
}

impl MarketConditions {
    pub fn get(&self, m: Market) -> MarketCondition {
        match m {
            Market::One => self.f_1,
            Market::Two => self.f_2,
        }
    }
}

/// Expected payoff and expected squared payoff per market for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PayoffTable {
    pub p_1: f64,
    pub p_2: f64,
    pub q_1: f64,
    pub q_2: f64,
}

impl PayoffTable {
    pub fn p(&self, m: Market) -> f64 {
        match m {
            Market::One => self.p_1,
            Market::Two => self.p_2,
        }
    }

    pub fn q(&self, m: Market) -> f64 {
        match m {
            Market::One => self.q_1,
            Market::Two => self.q_2,
        }
    }

    pub fn gap(&self) -> f64 {
        self.p_1 - self.p_2
    }

    /// Same table with the market labels exchanged.
    pub fn swapped(&self) -> Self {
        PayoffTable { p_1: self.p_2, p_2: self.p_1, q_1: self.q_2, q_2: self.q_1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMoments {
    pub mean: f64,
    pub mean_square: f64,
}

/// Clearing price for a market with bias `theta`.
pub fn trading_price(theta: f64, mean_bid: f64, mean_ask: f64) -> f64 {
    theta * mean_bid + (1.0 - theta) * mean_ask
}

/// Standardized distance below the price for an ask, above it for a bid.
fn standardized_margin(side: Side, pi: f64, params: &GameParams) -> f64 {
    match side {
        Side::Ask => (pi - params.mu_a) / params.sigma_a,
        Side::Bid => (params.mu_b - pi) / params.sigma_b,
    }
}

/// Probability that an order of `side` lies on the right side of `pi`.
pub fn validity_prob(side: Side, pi: f64, params: &GameParams) -> f64 {
    gaussian::cdf(standardized_margin(side, pi, params))
}

/// Probability that a valid order gets paired, given `f` buyers per seller.
pub fn matching_prob(side: Side, f: f64, v_a: f64, v_b: f64) -> Result<f64> {
    match side {
        Side::Ask => Ok(if f.is_infinite() { 1.0 } else { (f * v_b / v_a).min(1.0) }),
        Side::Bid => {
            if f == 0.0 {
                Err(Error::EmptySide)
            } else {
                Ok((v_a / (f * v_b)).min(1.0))
            }
        }
    }
}

/// Mean and mean square of `|order price - pi|` for a valid order.
pub fn score_moments(side: Side, pi: f64, params: &GameParams) -> Result<ScoreMoments> {
    let c = standardized_margin(side, pi, params);
    let sigma = match side {
        Side::Ask => params.sigma_a,
        Side::Bid => params.sigma_b,
    };
    let (prob, m1, m2) = gaussian::below_moments(c);
    if prob < gaussian::MIN_TAIL_PROB {
        return Err(Error::VanishingValidity { side: side.name(), z: c });
    }
    Ok(ScoreMoments { mean: sigma * m1, mean_square: sigma * sigma * m2 })
}

/// Aggregate-independent statistics of one market.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketQuote {
    pub price: f64,
    pub v_a: f64,
    pub v_b: f64,
    pub ask: ScoreMoments,
    pub bid: ScoreMoments,
}

impl MarketQuote {
    pub fn new(m: Market, params: &GameParams) -> Result<Self> {
        let price = params.price(m);
        Ok(MarketQuote {
            price,
            v_a: validity_prob(Side::Ask, price, params),
            v_b: validity_prob(Side::Bid, price, params),
            ask: score_moments(Side::Ask, price, params)?,
            bid: score_moments(Side::Bid, price, params)?,
        })
    }

    pub fn validity(&self, side: Side) -> f64 {
        match side {
            Side::Ask => self.v_a,
            Side::Bid => self.v_b,
        }
    }

    pub fn moments(&self, side: Side) -> ScoreMoments {
        match side {
            Side::Ask => self.ask,
            Side::Bid => self.bid,
        }
    }

    /// `(P, Q)` for one order. Empty markets pay nothing; a lone buyer facing only
    /// sellers is always matched (the `f -> 0+` limit).
    pub fn order_payoff(&self, side: Side, condition: MarketCondition) -> (f64, f64) {
        let Some(f) = condition.ratio() else {
            return (0.0, 0.0);
        };
        let matching = match (side, f == 0.0) {
            (Side::Bid, true) => 1.0,
            _ => matching_prob(side, f, self.v_a, self.v_b).expect("f > 0 for bids"),
        };
        let v = self.validity(side);
        let s = self.moments(side);
        (v * matching * s.mean, v * matching * s.mean_square)
    }
}

/// Expected payoff of a single order; see [`MarketQuote::order_payoff`].
pub fn order_payoff(
    side: Side,
    m: Market,
    condition: MarketCondition,
    params: &GameParams,
) -> Result<(f64, f64)> {
    Ok(MarketQuote::new(m, params)?.order_payoff(side, condition))
}

pub fn buyer_seller_ratios(aggr: Aggregates, params: &GameParams) -> MarketConditions {
    let ratio = |q1: f64, q2: f64| {
        let buyers = params.pb_1 * q1 + params.pb_2 * q2;
        let sellers = (1.0 - params.pb_1) * q1 + (1.0 - params.pb_2) * q2;
        if buyers == 0.0 && sellers == 0.0 {
            MarketCondition::Empty
        } else if sellers == 0.0 {
            MarketCondition::Ratio(f64::INFINITY)
        } else {
            MarketCondition::Ratio(buyers / sellers)
        }
    };
    MarketConditions {
        f_1: ratio(aggr.pbar_1, aggr.pbar_2),
        f_2: ratio(1.0 - aggr.pbar_1, 1.0 - aggr.pbar_2),
    }
}

/// Payoffs of a class averaged over its buy/sell preference.
pub fn class_payoffs(c: Class, conditions: &MarketConditions, params: &GameParams) -> Result<PayoffTable> {
    let quotes = [MarketQuote::new(Market::One, params)?, MarketQuote::new(Market::Two, params)?];
    Ok(class_table(params.pb(c), conditions, &quotes))
}

fn class_table(pb: f64, conditions: &MarketConditions, quotes: &[MarketQuote; 2]) -> PayoffTable {
    let per_market = |m: Market| {
        let cond = conditions.get(m);
        let (pb_p, pb_q) = quotes[m.index()].order_payoff(Side::Bid, cond);
        let (pa_p, pa_q) = quotes[m.index()].order_payoff(Side::Ask, cond);
        (pb * pb_p + (1.0 - pb) * pa_p, pb * pb_q + (1.0 - pb) * pa_q)
    };
    let (p_1, q_1) = per_market(Market::One);
    let (p_2, q_2) = per_market(Market::Two);
    PayoffTable { p_1, p_2, q_1, q_2 }
}

/// Expected payoff of the mixed strategy "market 1 with probability `p`".
pub fn mixed_payoff(p: f64, table: &PayoffTable) -> f64 {
    p * table.p_1 + (1.0 - p) * table.p_2
}

/// Stage game with the aggregate-independent market statistics precomputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameModel {
    pub params: GameParams,
    pub quotes: [MarketQuote; 2],
}

impl GameModel {
    pub fn new(params: GameParams) -> Result<Self> {
        params.validate()?;
        let quotes = [MarketQuote::new(Market::One, &params)?, MarketQuote::new(Market::Two, &params)?];
        Ok(GameModel { params, quotes })
    }

    pub fn quote(&self, m: Market) -> &MarketQuote {
        &self.quotes[m.index()]
    }

    pub fn conditions(&self, aggr: Aggregates) -> MarketConditions {
        buyer_seller_ratios(aggr, &self.params)
    }

    pub fn payoffs(&self, c: Class, aggr: Aggregates) -> PayoffTable {
        class_table(self.params.pb(c), &self.conditions(aggr), &self.quotes)
    }

    /// `P_1 - P_2` for class `c`.
    pub fn payoff_gap(&self, c: Class, aggr: Aggregates) -> f64 {
        self.payoffs(c, aggr).gap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GameParams {
        GameParams::symmetric(0.3, 0.2)
    }

    #[test]
    fn trading_price_is_affine_in_bias() {
        assert!((trading_price(0.3, 10.0, 8.0) - 8.6).abs() < 1e-12);
        assert_eq!(trading_price(0.5, 10.0, 8.0), 9.0);
        assert_eq!(trading_price(1.0, 10.0, 8.0), 10.0);
        assert_eq!(trading_price(0.0, 10.0, 8.0), 8.0);
    }

    #[test]
    fn validity_at_the_median_is_one_half() {
        let p = params();
        assert!((validity_prob(Side::Ask, p.mu_a, &p) - 0.5).abs() < 1e-15);
        assert!((validity_prob(Side::Bid, p.mu_b, &p) - 0.5).abs() < 1e-15);
        assert!((validity_prob(Side::Ask, p.mu_a + 1.0, &p) - 0.841_345).abs() < 1e-6);
    }

    #[test]
    fn matching_examples() {
        assert_eq!(matching_prob(Side::Ask, 1.0, 0.4, 0.4).unwrap(), 1.0);
        assert!((matching_prob(Side::Ask, 0.25, 0.4, 0.4).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(matching_prob(Side::Bid, 0.25, 0.4, 0.4).unwrap(), 1.0);
        // f * V_b / V_a = 2
        assert!((matching_prob(Side::Bid, 2.0, 0.3, 0.3).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(matching_prob(Side::Bid, 0.0, 0.3, 0.3), Err(Error::EmptySide)));
        assert_eq!(matching_prob(Side::Ask, 0.0, 0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn score_moments_half_normal() {
        let p = params();
        let s = score_moments(Side::Ask, p.mu_a, &p).unwrap();
        assert!((s.mean - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((s.mean_square - 1.0).abs() < 1e-12);
        let far = score_moments(Side::Ask, p.mu_a - 40.0, &p);
        assert!(matches!(far, Err(Error::VanishingValidity { .. })));
    }

    #[test]
    fn ratios_examples() {
        let p = params();
        let c = buyer_seller_ratios(Aggregates::new(1.0, 0.0).unwrap(), &p);
        assert!((c.f_1.ratio().unwrap() - 0.25).abs() < 1e-15);
        assert!((c.f_2.ratio().unwrap() - 4.0).abs() < 1e-15);
        let c = buyer_seller_ratios(Aggregates::symmetric(0.5), &p);
        assert!((c.f_1.ratio().unwrap() - 1.0).abs() < 1e-15);
        assert!((c.f_2.ratio().unwrap() - 1.0).abs() < 1e-15);
        let c = buyer_seller_ratios(Aggregates::new(1.0, 1.0).unwrap(), &p);
        assert!(c.f_2.is_empty());
        assert!(!c.f_1.is_empty());
    }

    #[test]
    fn empty_market_pays_nothing() {
        let p = params();
        for side in [Side::Ask, Side::Bid] {
            assert_eq!(order_payoff(side, Market::Two, MarketCondition::Empty, &p).unwrap(), (0.0, 0.0));
        }
        let t = GameModel::new(p).unwrap().payoffs(Class::One, Aggregates::new(1.0, 1.0).unwrap());
        assert_eq!(t.p_2, 0.0);
        assert!(t.p_1 > 0.0);
    }

    #[test]
    fn balanced_market_matches_everyone() {
        let p = params();
        let q = MarketQuote::new(Market::One, &p).unwrap();
        let f = q.v_a / q.v_b;
        let (pa, _) = q.order_payoff(Side::Ask, MarketCondition::Ratio(f));
        let (pb, _) = q.order_payoff(Side::Bid, MarketCondition::Ratio(f));
        assert!((pa - q.v_a * q.ask.mean).abs() < 1e-14);
        assert!((pb - q.v_b * q.bid.mean).abs() < 1e-14);
    }

    #[test]
    fn class_payoffs_interpolate_sides() {
        let mut p = params();
        let aggr = Aggregates::symmetric(0.4);
        let cond = buyer_seller_ratios(aggr, &p);
        let bid = |m| order_payoff(Side::Bid, m, cond.get(m), &p).unwrap().0;
        let ask = |m| order_payoff(Side::Ask, m, cond.get(m), &p).unwrap().0;
        let (b1, a1, b2, a2) = (bid(Market::One), ask(Market::One), bid(Market::Two), ask(Market::Two));
        for (pb, e1, e2) in [(1.0, b1, b2), (0.0, a1, a2), (0.5, 0.5 * (a1 + b1), 0.5 * (a2 + b2))] {
            p.pb_1 = pb;
            let t = class_payoffs(Class::One, &cond, &p).unwrap();
            assert!((t.p_1 - e1).abs() < 1e-14 && (t.p_2 - e2).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_payoff_endpoints() {
        let t = PayoffTable { p_1: 1.3, p_2: 0.4, q_1: 2.0, q_2: 1.0 };
        assert_eq!(mixed_payoff(1.0, &t), 1.3);
        assert_eq!(mixed_payoff(0.0, &t), 0.4);
        assert!((mixed_payoff(0.5, &t) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn params_json_roundtrip_and_defaults() {
        let json = r#"{"theta_1":0.3,"theta_2":0.7,"pb_1":0.2,"pb_2":0.8}"#;
        let p: GameParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, params());
        let back: GameParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<GameParams>(r#"{"theta_1":0.3,"theta_2":0.7,"pb_1":0.2,"pb_2":0.8,"x":1}"#).is_err());
        assert!(p.is_symmetric(1e-12));
        assert!(GameParams { theta_1: 1.5, ..p }.validate().is_err());
    }
}
