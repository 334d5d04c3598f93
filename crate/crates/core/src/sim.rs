//! Finite-population simulation of learning traders in the two double auctions.
//!
//! Every round each agent picks a market by softmax on its attraction difference,
//! decides to buy or sell with its class preference and draws a limit price. Each
//! market then clears at the weighted mean of the bids and asks it received, pairs
//! valid orders at random and pays `|order price - clearing price|` to the matched
//! ones. Attractions are updated with the realized score.

use crate::error::{Error, Result};
use crate::fp::{self, AttractionState, LearningParams, PeakRole, SingleAgent};
use crate::linalg::{Mat2, Vec2};
use crate::market::{self, Aggregates, Class, GameModel, GameParams, Market, MarketCondition, Side};
use crate::stats::{self, Histogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn default_stride() -> u64 {
    1
}

fn default_bins() -> usize {
    stats::DEFAULT_BINS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Total number of agents, split equally between the classes.
    pub n_agents: usize,
    pub params: GameParams,
    pub learning: LearningParams,
    pub n_rounds: u64,
    #[serde(default)]
    pub seed: u64,
    /// Rescaled times `t = r * round` at which attraction histograms are taken.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Starting attractions of every agent, per class.
    #[serde(default)]
    pub initial: [AttractionState; 2],
    /// Record every `trace_stride`-th round.
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for SimConfig {
    /// Large population with full discounting and sharp choice.
    fn default() -> Self {
        SimConfig::new(20_000, GameParams::symmetric(0.3, 0.2), LearningParams { r: 0.01, alpha: 1.0, beta: 10.0 }, 50_000, 0)
    }
}

impl SimConfig {
    pub fn new(n_agents: usize, params: GameParams, learning: LearningParams, n_rounds: u64, seed: u64) -> Self {
        SimConfig {
            n_agents,
            params,
            learning,
            n_rounds,
            seed,
            snapshot_times: Vec::new(),
            initial: Default::default(),
            trace_stride: 1,
            bins: stats::DEFAULT_BINS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 || self.n_agents % 2 != 0 {
            return Err(Error::InvalidConfig(format!("n_agents = {} must be even and positive", self.n_agents)));
        }
        if self.n_rounds == 0 || self.trace_stride == 0 {
            return Err(Error::InvalidConfig("n_rounds and trace_stride must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::InvalidConfig("bins must be at least 2".into()));
        }
        self.params.validate()?;
        self.learning.validate()?;
        let t_end = self.t_end();
        if let Some(t) = self.snapshot_times.iter().find(|&&t| !(0.0..=t_end + 1e-12).contains(&t)) {
            return Err(Error::InvalidConfig(format!("snapshot time {t} outside [0, {t_end}]")));
        }
        if self.initial.iter().any(|a| !a.a_1.is_finite() || !a.a_2.is_finite()) {
            return Err(Error::InvalidConfig("initial attractions must be finite".into()));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.learning.r * self.n_rounds as f64
    }

    /// Round index whose end state represents rescaled time `t`.
    pub fn round_at(&self, t: f64) -> u64 {
        if self.learning.r == 0.0 {
            return 0;
        }
        ((t / self.learning.r).round() as u64).min(self.n_rounds)
    }
}

#[derive(Clone, Copy, Debug)]
struct Order {
    p1: f64,
    market: Market,
    side: Side,
    price: f64,
}

/// Agents, their random streams and per-round scratch space.
#[derive(Clone, Debug)]
pub struct Population {
    classes: Vec<Class>,
    attractions: Vec<AttractionState>,
    rngs: Vec<ChaCha8Rng>,
    market_rngs: [ChaCha8Rng; 2],
    orders: Vec<Order>,
    scores: Vec<f64>,
}

impl Population {
    /// Agents `0..n/2` form class 1, the rest class 2. Each agent and each market
    /// owns a ChaCha stream of the master seed, so draws do not depend on the
    /// order in which agents are processed.
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_agents;
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(id);
            rng
        };
        let classes: Vec<Class> = (0..n).map(|i| if i < n / 2 { Class::One } else { Class::Two }).collect();
        Ok(Population {
            attractions: classes.iter().map(|c| config.initial[c.index()]).collect(),
            classes,
            rngs: (0..n as u64).map(stream).collect(),
            market_rngs: [stream(n as u64), stream(n as u64 + 1)],
            orders: Vec::with_capacity(n),
            scores: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn attractions(&self) -> &[AttractionState] {
        &self.attractions
    }

    pub fn class_of(&self, agent: usize) -> Class {
        self.classes[agent]
    }

    /// `A_1 - A_2` of every agent in class `c`.
    pub fn deltas(&self, c: Class) -> Vec<f64> {
        self.classes.iter().zip(&self.attractions).filter(|(k, _)| **k == c).map(|(_, a)| a.delta()).collect()
    }

    pub fn histogram(&self, c: Class, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
        Histogram::new(&self.deltas(c), bins, range)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    /// Realized fraction of each class that went to market 1.
    pub pbar: [f64; 2],
    /// Class average of the market-1 choice probability before the draw.
    pub expected_pbar: [f64; 2],
    /// Clearing prices; `None` when a market lacked bids or asks.
    pub price: [Option<f64>; 2],
    /// Matched pairs per market.
    pub matched: [usize; 2],
    pub valid_bids: [usize; 2],
    pub valid_asks: [usize; 2],
}

/// One round of trading followed by the attraction update.
pub fn run_round(pop: &mut Population, params: &GameParams, learning: &LearningParams) -> RoundStats {
    let beta = learning.beta;
    let n = pop.len();

    pop.orders.clear();
    pop.attractions
        .par_iter()
        .zip(pop.rngs.par_iter_mut())
        .zip(pop.classes.par_iter())
        .map(|((a, rng), &c)| {
            let p1 = fp::softmax_choice(a.delta(), beta);
            let market = if rng.random::<f64>() < p1 { Market::One } else { Market::Two };
            let (side, mu, sigma) = if rng.random::<f64>() < params.pb(c) {
                (Side::Bid, params.mu_b, params.sigma_b)
            } else {
                (Side::Ask, params.mu_a, params.sigma_a)
            };
            let z: f64 = rng.sample(StandardNormal);
            Order { p1, market, side, price: mu + sigma * z }
        })
        .collect_into_vec(&mut pop.orders);

    let mut stats = RoundStats { pbar: [0.0; 2], expected_pbar: [0.0; 2], price: [None; 2], matched: [0; 2], valid_bids: [0; 2], valid_asks: [0; 2] };
    let mut class_counts = [0usize; 2];
    for (o, c) in pop.orders.iter().zip(&pop.classes) {
        class_counts[c.index()] += 1;
        stats.expected_pbar[c.index()] += o.p1;
        if o.market == Market::One {
            stats.pbar[c.index()] += 1.0;
        }
    }
    for k in 0..2 {
        stats.pbar[k] /= class_counts[k].max(1) as f64;
        stats.expected_pbar[k] /= class_counts[k].max(1) as f64;
    }

    pop.scores.iter_mut().for_each(|s| *s = 0.0);
    let mut bids = Vec::new();
    let mut asks = Vec::new();
    for m in Market::BOTH {
        bids.clear();
        asks.clear();
        let (mut bid_sum, mut ask_sum) = (0.0, 0.0);
        for (i, o) in pop.orders.iter().enumerate().filter(|(_, o)| o.market == m) {
            match o.side {
                Side::Bid => {
                    bids.push(i);
                    bid_sum += o.price;
                }
                Side::Ask => {
                    asks.push(i);
                    ask_sum += o.price;
                }
            }
        }
        // Without both sides no price forms and nobody trades.
        if bids.is_empty() || asks.is_empty() {
            continue;
        }
        let pi = market::trading_price(params.theta(m), bid_sum / bids.len() as f64, ask_sum / asks.len() as f64);
        stats.price[m.index()] = Some(pi);
        bids.retain(|&i| pop.orders[i].price >= pi);
        asks.retain(|&i| pop.orders[i].price <= pi);
        stats.valid_bids[m.index()] = bids.len();
        stats.valid_asks[m.index()] = asks.len();
        let k = bids.len().min(asks.len());
        stats.matched[m.index()] = k;
        // Random pairing: the scarcer side trades in full, a uniform subset of the
        // other side is drawn by a partial shuffle.
        let rng = &mut pop.market_rngs[m.index()];
        let longer = if bids.len() > asks.len() { &mut bids } else { &mut asks };
        for j in 0..k {
            let pick = rng.random_range(j..longer.len());
            longer.swap(j, pick);
        }
        for &i in bids[..k].iter().chain(&asks[..k]) {
            pop.scores[i] = (pop.orders[i].price - pi).abs();
        }
    }
    debug_assert_eq!(pop.orders.len(), n);

    let (r, keep) = (learning.r, 1.0 - learning.alpha * learning.r);
    pop.attractions.par_iter_mut().zip(pop.orders.par_iter()).zip(pop.scores.par_iter()).for_each(|((a, o), &s)| {
        match o.market {
            Market::One => {
                a.a_1 = (1.0 - r) * a.a_1 + r * s;
                a.a_2 *= keep;
            }
            Market::Two => {
                a.a_2 = (1.0 - r) * a.a_2 + r * s;
                a.a_1 *= keep;
            }
        }
    });
    stats
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub round: u64,
    pub pbar_1: f64,
    pub pbar_2: f64,
    pub expected_pbar_1: f64,
    pub expected_pbar_2: f64,
    pub pi_1: Option<f64>,
    pub pi_2: Option<f64>,
    pub matched_1: usize,
    pub matched_2: usize,
}

impl TraceRow {
    fn new(round: u64, r: f64, s: &RoundStats) -> Self {
        TraceRow {
            t: r * round as f64,
            round,
            pbar_1: s.pbar[0],
            pbar_2: s.pbar[1],
            expected_pbar_1: s.expected_pbar[0],
            expected_pbar_2: s.expected_pbar[1],
            pi_1: s.price[0],
            pi_2: s.price[1],
            matched_1: s.matched[0],
            matched_2: s.matched[1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub round: u64,
    pub class: Class,
    pub histogram: Histogram,
    /// Raw `A_1 - A_2` values of the class.
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot>,
}

impl SimTrace {
    pub fn snapshot(&self, t: f64, c: Class) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .filter(|s| s.class == c)
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Step-by-step driver over a configured population.
pub struct Simulation {
    pub config: SimConfig,
    pub population: Population,
    pub round: u64,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let population = Population::new(&config)?;
        Ok(Simulation { config, population, round: 0 })
    }

    pub fn step(&mut self) -> RoundStats {
        self.round += 1;
        run_round(&mut self.population, &self.config.params, &self.config.learning)
    }

    pub fn t(&self) -> f64 {
        self.config.learning.r * self.round as f64
    }

    fn snapshots_now(&self) -> Result<Vec<Snapshot>> {
        let mut out = Vec::new();
        for c in Class::BOTH {
            let deltas = self.population.deltas(c);
            out.push(Snapshot {
                t: self.t(),
                round: self.round,
                class: c,
                histogram: Histogram::new(&deltas, self.config.bins, None)?,
                deltas,
            });
        }
        Ok(out)
    }
}

/// Runs the configured number of rounds and records the trace and snapshots.
pub fn simulate(config: &SimConfig) -> Result<SimTrace> {
    let mut sim = Simulation::new(config.clone())?;
    let mut due: Vec<u64> = config.snapshot_times.iter().map(|&t| config.round_at(t)).collect();
    due.sort_unstable();
    due.dedup();
    let mut due = due.into_iter().peekable();
    let mut trace = SimTrace { rows: Vec::new(), snapshots: Vec::new() };
    while due.next_if_eq(&0).is_some() {
        trace.snapshots.extend(sim.snapshots_now()?);
    }
    for _ in 0..config.n_rounds {
        let s = sim.step();
        if sim.round % config.trace_stride == 0 || sim.round == config.n_rounds {
            trace.rows.push(TraceRow::new(sim.round, config.learning.r, &s));
        }
        while due.next_if_eq(&sim.round).is_some() {
            trace.snapshots.extend(sim.snapshots_now()?);
        }
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeTime {
    pub n_agents: usize,
    pub seed: u64,
    pub center: f64,
    pub band: f64,
    /// First rescaled time at which the realized class-1 aggregate left the band,
    /// or the end of the run if it never did.
    pub t_exit: f64,
    pub censored: bool,
}

/// First exit of the realized `pbar_1` from `[center - band, center + band]`.
pub fn escape_time(config: &SimConfig, center: f64, band: f64) -> Result<EscapeTime> {
    if !(band >= 0.0) {
        return Err(Error::InvalidConfig("band must be nonnegative".into()));
    }
    let mut sim = Simulation::new(config.clone())?;
    let mut out = EscapeTime { n_agents: config.n_agents, seed: config.seed, center, band, t_exit: config.t_end(), censored: true };
    for _ in 0..config.n_rounds {
        let s = sim.step();
        if (s.pbar[0] - center).abs() > band || band == 0.0 {
            out.t_exit = sim.t();
            out.censored = false;
            break;
        }
    }
    Ok(out)
}

/// Escape times for several population sizes and seeds (`seeds` runs per size,
/// seeds `config.seed + k`).
pub fn escape_time_scan(config: &SimConfig, sizes: &[usize], seeds: u64, center: f64, band: f64) -> Result<Vec<EscapeTime>> {
    let mut out = Vec::with_capacity(sizes.len() * seeds as usize);
    for &n in sizes {
        for k in 0..seeds {
            let cfg = SimConfig { n_agents: n, seed: config.seed.wrapping_add(k), ..config.clone() };
            out.push(escape_time(&cfg, center, band)?);
        }
    }
    Ok(out)
}

/// Median exit time per population size; censored runs count at their cap.
pub fn median_exit_times(times: &[EscapeTime]) -> Vec<(usize, f64, usize)> {
    let mut sizes: Vec<usize> = times.iter().map(|e| e.n_agents).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let mut v: Vec<f64> = times.iter().filter(|e| e.n_agents == n).map(|e| e.t_exit).collect();
            v.sort_by(f64::total_cmp);
            let censored = times.iter().filter(|e| e.n_agents == n && e.censored).count();
            let m = v.len();
            let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
            (n, median, censored)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStart {
    pub initial: [AttractionState; 2],
    /// Class-1 market-1 share the mixed state sustains.
    pub pbar_1: f64,
}

fn central_choice(model: &GameModel, learning: LearningParams, x: f64) -> Result<Option<(f64, AttractionState)>> {
    let agent = SingleAgent::new(model, Class::One, Aggregates::symmetric(x), learning);
    let set = agent.fixed_points()?;
    let p = match set.stable_with_role(PeakRole::Central) {
        Some(p) => p,
        None if set.stable_count() == 1 => set.stable().next().ok_or(Error::NoFixedPoint)?,
        None => return Ok(None),
    };
    Ok(Some((p.choice_prob(learning.beta), p.state)))
}

/// Homogeneous mixed state of a symmetric market: every agent sits on its central
/// fixed point and the aggregates it produces are the ones it responds to (class 2
/// mirrored). Past the critical memory loss this state is only metastable, which
/// is what escape-time runs probe.
pub fn mixed_state_start(model: &GameModel, learning: LearningParams) -> Result<MixedStart> {
    if !model.params.is_symmetric(1e-12) {
        return Err(Error::InvalidConfig("mixed start needs the symmetric setup".into()));
    }
    let nash = crate::nash::symmetric_equilibrium(model, 256).ok_or(Error::NoFixedPoint)?;
    let x0 = nash.aggregates.pbar_1;
    let gap = |x: f64| -> Result<Option<f64>> { Ok(central_choice(model, learning, x)?.map(|(p, _)| p - x)) };
    // Walk from the Nash share in the direction the gap points, staying where a
    // central peak exists, until the sign flips; then bisect.
    let g0 = gap(x0)?.ok_or(Error::NoFixedPoint)?;
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let (mut a, mut b) = (x0, x0);
    let mut found = g0 == 0.0;
    for k in (1..=400).take_while(|_| !found) {
        let cand = (x0 + dir * 0.0025 * k as f64).clamp(1e-9, 1.0 - 1e-9);
        match gap(cand)? {
            Some(g) if (g > 0.0) != (g0 > 0.0) || g == 0.0 => {
                b = cand;
                found = true;
                break;
            }
            Some(_) => a = cand,
            None => break,
        }
    }
    if !found {
        return Err(Error::NoFixedPoint);
    }
    while (b - a).abs() > 1e-12 {
        let mid = 0.5 * (a + b);
        match gap(mid)? {
            Some(g) if (g > 0.0) == (g0 > 0.0) && g != 0.0 => a = mid,
            Some(_) => b = mid,
            None => return Err(Error::NoFixedPoint),
        }
    }
    let x = 0.5 * (a + b);
    let (_, state) = central_choice(model, learning, x)?.ok_or(Error::NoFixedPoint)?;
    Ok(MixedStart { initial: [state, AttractionState::new(state.a_2, state.a_1)], pbar_1: x })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub samples: u64,
    /// `E[dA] / r`.
    pub drift: Vec2,
    /// `E[dA dA^T] / r^2`.
    pub second_moment: Mat2,
    pub drift_se: Vec2,
    pub second_moment_se: Mat2,
}

/// Monte-Carlo one-round jump moments of a single agent facing markets frozen at
/// `aggr`: clearing prices at their ensemble values and matching with the
/// large-population probabilities.
pub fn sample_jump_moments(
    model: &GameModel,
    c: Class,
    aggr: Aggregates,
    learning: LearningParams,
    state: AttractionState,
    n_samples: u64,
    seed: u64,
) -> Result<MomentEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("need at least 2 samples".into()));
    }
    let params = &model.params;
    let conds = model.conditions(aggr);
    let p1 = fp::softmax_choice(state.delta(), learning.beta);
    let pb = params.pb(c);
    let match_prob = |m: Market, side: Side| -> f64 {
        let q = model.quote(m);
        match conds.get(m) {
            MarketCondition::Empty => 0.0,
            MarketCondition::Ratio(f) if side == Side::Bid && f == 0.0 => 1.0,
            MarketCondition::Ratio(f) => market::matching_prob(side, f, q.v_a, q.v_b).unwrap_or(0.0),
        }
    };
    let probs = [
        [match_prob(Market::One, Side::Ask), match_prob(Market::One, Side::Bid)],
        [match_prob(Market::Two, Side::Ask), match_prob(Market::Two, Side::Bid)],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = [0.0; 2];
    let mut sum_sq = [[0.0; 2]; 2];
    let mut sum_4 = [[0.0; 2]; 2];
    let a = state.to_array();
    for _ in 0..n_samples {
        let m = if rng.random::<f64>() < p1 { Market::One } else { Market::Two };
        let side = if rng.random::<f64>() < pb { Side::Bid } else { Side::Ask };
        let z: f64 = rng.sample(StandardNormal);
        let pi = model.quote(m).price;
        let price = match side {
            Side::Bid => params.mu_b + params.sigma_b * z,
            Side::Ask => params.mu_a + params.sigma_a * z,
        };
        let valid = match side {
            Side::Bid => price >= pi,
            Side::Ask => price <= pi,
        };
        let si = match side {
            Side::Ask => 0,
            Side::Bid => 1,
        };
        let matched = valid && rng.random::<f64>() < probs[m.index()][si];
        let score = if matched { (price - pi).abs() } else { 0.0 };
        let k = m.index();
        let mut d = [-learning.alpha * a[0], -learning.alpha * a[1]];
        d[k] = score - a[k];
        for i in 0..2 {
            sum[i] += d[i];
            for j in 0..2 {
                let p = d[i] * d[j];
                sum_sq[i][j] += p;
                sum_4[i][j] += p * p;
            }
        }
    }
    let n = n_samples as f64;
    let drift = [sum[0] / n, sum[1] / n];
    let mut second = [[0.0; 2]; 2];
    let mut second_se = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            second[i][j] = sum_sq[i][j] / n;
            second_se[i][j] = ((sum_4[i][j] / n - second[i][j].powi(2)).max(0.0) / n).sqrt();
        }
    }
    let drift_se = [
        ((second[0][0] - drift[0].powi(2)).max(0.0) / n).sqrt(),
        ((second[1][1] - drift[1].powi(2)).max(0.0) / n).sqrt(),
    ];
    Ok(MomentEstimate { samples: n_samples, drift, second_moment: second, drift_se, second_moment_se: second_se })
}
