//! Single-agent Fokker-Planck picture of experience-weighted attraction learning.
//!
//! With the aggregates frozen, one trader's attractions perform a Markov jump
//! process whose first two jump moments give a drift and a diffusion matrix.
//! Stable zeros of the drift are the peaks of the long-memory steady state.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Vec2};
use crate::market::{Aggregates, Class, GameModel, PayoffTable};
use crate::ode::{self, OdeOptions};
use serde::{Deserialize, Serialize};

/// Points in the dense scan of the scalar fixed-point equation.
pub const DELTA_SCAN_POINTS: usize = 4096;
/// Eigenvalue real parts above `-STABILITY_TOL` count as unstable.
pub const STABILITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningParams {
    /// Inverse memory: weight of the newest score.
    pub r: f64,
    /// Discount applied to the attraction of the market not chosen.
    pub alpha: f64,
    /// Intensity of choice.
    pub beta: f64,
}

impl LearningParams {
    pub fn new(r: f64, alpha: f64, beta: f64) -> Result<Self> {
        let l = LearningParams { r, alpha, beta };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::InvalidConfig(format!("r = {} must lie in [0, 1]", self.r)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha = {} must lie in [0, 1]", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta = {} must be finite and nonnegative", self.beta)));
        }
        Ok(())
    }

    /// Half-distance `a = -ln(alpha) / beta` between the two choice ramps of the
    /// fixed-point equation; infinite at `alpha = 0`.
    pub fn log_scale(&self) -> f64 {
        -self.alpha.ln() / self.beta
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        LearningParams { alpha, ..self }
    }
}

/// Overflow-safe logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of choosing market 1 given `delta = A_1 - A_2`.
pub fn softmax_choice(delta: f64, beta: f64) -> f64 {
    logistic(beta * delta)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttractionState {
    pub a_1: f64,
    pub a_2: f64,
}

impl AttractionState {
    pub fn new(a_1: f64, a_2: f64) -> Self {
        AttractionState { a_1, a_2 }
    }

    pub fn delta(&self) -> f64 {
        self.a_1 - self.a_2
    }

    pub fn to_array(self) -> Vec2 {
        [self.a_1, self.a_2]
    }

    pub fn from_array(a: Vec2) -> Self {
        AttractionState { a_1: a[0], a_2: a[1] }
    }
}

/// One trader facing frozen aggregates: the payoff table and learning rule are all
/// that matter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleAgent {
    pub table: PayoffTable,
    pub learning: LearningParams,
}

struct Weights {
    s: f64,
    sbar: f64,
    k: f64,
}

impl SingleAgent {
    pub fn new(model: &GameModel, c: Class, aggr: Aggregates, learning: LearningParams) -> Self {
        SingleAgent { table: model.payoffs(c, aggr), learning }
    }

    fn weights(&self, a: Vec2) -> Weights {
        let x = self.learning.beta * (a[0] - a[1]);
        let s = logistic(x);
        let sbar = logistic(-x);
        Weights { s, sbar, k: self.learning.beta * s * sbar }
    }

    /// Expected attraction change per unit rescaled time.
    pub fn drift(&self, a: Vec2) -> Vec2 {
        let Weights { s, sbar, .. } = self.weights(a);
        let (p, al) = (&self.table, self.learning.alpha);
        [(p.p_1 - a[0]) * s - al * a[0] * sbar, (p.p_2 - a[1]) * sbar - al * a[1] * s]
    }

    /// `jacobian[i][j] = d drift_i / d A_j`.
    pub fn jacobian(&self, a: Vec2) -> Mat2 {
        let Weights { s, sbar, k } = self.weights(a);
        let (p, al) = (&self.table, self.learning.alpha);
        let u1 = p.p_1 - a[0] + al * a[0];
        let u2 = p.p_2 - a[1] + al * a[1];
        [[-s - al * sbar + u1 * k, -u1 * k], [-u2 * k, -sbar - al * s + u2 * k]]
    }

    /// Second jump moment per unit time, scaled so that the noise is `sqrt(r)` times
    /// its square root.
    pub fn diffusion(&self, a: Vec2) -> Mat2 {
        let Weights { s, sbar, .. } = self.weights(a);
        let (p, al) = (&self.table, self.learning.alpha);
        let v1 = p.q_1 - 2.0 * a[0] * p.p_1 + a[0] * a[0];
        let v2 = p.q_2 - 2.0 * a[1] * p.p_2 + a[1] * a[1];
        let d11 = v1 * s + al * al * a[0] * a[0] * sbar;
        let d22 = v2 * sbar + al * al * a[1] * a[1] * s;
        let d12 = -al * (p.p_1 * a[1] * s + p.p_2 * a[0] * sbar - a[0] * a[1]);
        [[d11, d12], [d12, d22]]
    }

    /// `[d Sigma / d A_1, d Sigma / d A_2]`.
    pub fn diffusion_gradient(&self, a: Vec2) -> [Mat2; 2] {
        let Weights { s, sbar, k } = self.weights(a);
        let (p, al) = (&self.table, self.learning.alpha);
        let al2 = al * al;
        let v1 = p.q_1 - 2.0 * a[0] * p.p_1 + a[0] * a[0];
        let v2 = p.q_2 - 2.0 * a[1] * p.p_2 + a[1] * a[1];
        let w1 = v1 - al2 * a[0] * a[0];
        let w2 = v2 - al2 * a[1] * a[1];

        let d11_1 = (2.0 * a[0] - 2.0 * p.p_1) * s + w1 * k + 2.0 * al2 * a[0] * sbar;
        let d11_2 = -w1 * k;
        let d22_2 = (2.0 * a[1] - 2.0 * p.p_2) * sbar + w2 * k + 2.0 * al2 * a[1] * s;
        let d22_1 = -w2 * k;
        let d12_1 = -al * (p.p_1 * a[1] * k + p.p_2 * sbar - p.p_2 * a[0] * k - a[1]);
        let d12_2 = -al * (p.p_1 * s - p.p_1 * a[1] * k + p.p_2 * a[0] * k - a[0]);
        [[[d11_1, d12_1], [d12_1, d22_1]], [[d11_2, d12_2], [d12_2, d22_2]]]
    }

    /// Attractions of the drift zero with attraction difference `delta`.
    pub fn state_at(&self, delta: f64) -> AttractionState {
        attractions_at(self.table.p_1, self.table.p_2, self.learning, delta)
    }

    pub fn fixed_points(&self) -> Result<FixedPointSet> {
        let deltas = fixed_point_deltas(self.table.p_1, self.table.p_2, &self.learning);
        if deltas.is_empty() {
            return Err(Error::NoFixedPoint);
        }
        let a = self.learning.log_scale();
        let mut points: Vec<FixedPoint> = deltas
            .into_iter()
            .map(|delta| {
                let state = self.state_at(delta);
                let jacobian = self.jacobian(state.to_array());
                let stable = linalg::max_eigen_real(&jacobian) < -STABILITY_TOL;
                let peak_covariance = if stable {
                    let sigma = self.diffusion(state.to_array());
                    let q = [
                        [self.learning.r * sigma[0][0], self.learning.r * sigma[0][1]],
                        [self.learning.r * sigma[1][0], self.learning.r * sigma[1][1]],
                    ];
                    linalg::lyapunov(&jacobian, &q)
                } else {
                    None
                };
                FixedPoint {
                    state,
                    delta,
                    stability: if stable { Stability::Stable } else { Stability::Unstable },
                    role: role_of(delta, a),
                    jacobian,
                    peak_covariance,
                }
            })
            .collect();
        settle_roles(&mut points);
        Ok(FixedPointSet { points })
    }
}

fn attractions_at(p_1: f64, p_2: f64, learning: LearningParams, delta: f64) -> AttractionState {
    if learning.alpha == 0.0 {
        return AttractionState::new(p_1, p_2);
    }
    let (b, ln_alpha) = (learning.beta, learning.alpha.ln());
    AttractionState::new(p_1 * logistic(b * delta - ln_alpha), p_2 * logistic(-b * delta - ln_alpha))
}

fn role_of(delta: f64, a: f64) -> PeakRole {
    if delta < -a {
        PeakRole::Left
    } else if delta > a {
        PeakRole::Right
    } else {
        PeakRole::Central
    }
}

// With ramps of finite width the plateau rule can put two stable points on the
// same side; the inner one is then the central peak.
fn settle_roles(points: &mut [FixedPoint]) {
    let stable: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_stable()).collect();
    if stable.len() == 3 {
        for (i, role) in stable.iter().zip([PeakRole::Left, PeakRole::Central, PeakRole::Right]) {
            points[*i].role = role;
        }
    } else if stable.len() == 2 && points[stable[0]].role == points[stable[1]].role {
        match points[stable[0]].role {
            PeakRole::Right => points[stable[0]].role = PeakRole::Central,
            PeakRole::Left => points[stable[1]].role = PeakRole::Central,
            PeakRole::Central => {
                points[stable[0]].role = PeakRole::Left;
                points[stable[1]].role = PeakRole::Right;
            }
        }
    }
}

/// Roots in `delta` of the scalar fixed-point equation
/// `delta = P_1 L(beta (delta + a)) - P_2 L(beta (a - delta))`, ascending.
pub fn fixed_point_deltas(p_1: f64, p_2: f64, learning: &LearningParams) -> Vec<f64> {
    if learning.alpha == 0.0 {
        return vec![p_1 - p_2];
    }
    let (b, ln_alpha) = (learning.beta, learning.alpha.ln());
    let g = |d: f64| p_1 * logistic(b * d - ln_alpha) - p_2 * logistic(-b * d - ln_alpha) - d;
    let dg = |d: f64| {
        let s1 = logistic(b * d - ln_alpha);
        let s2 = logistic(-b * d - ln_alpha);
        b * (p_1 * s1 * (1.0 - s1) + p_2 * s2 * (1.0 - s2)) - 1.0
    };
    let (lo, hi) = (-p_2 - 1.0, p_1 + 1.0);
    let n = DELTA_SCAN_POINTS;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();

    // Extrema of g split the range into monotone pieces with at most one root each.
    let mut knots = vec![lo];
    let mut prev = dg(lo);
    for w in xs.windows(2) {
        let next = dg(w[1]);
        if (prev > 0.0) != (next > 0.0) {
            knots.push(bisect_root(dg, w[0], w[1], prev, 1e-14));
        }
        prev = next;
    }
    knots.push(hi);

    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (g0, g1) = (g(w[0]), g(w[1]));
        if g0 == 0.0 {
            if roots.last().is_none_or(|&r: &f64| r != w[0]) {
                roots.push(w[0]);
            }
        } else if (g0 > 0.0) != (g1 > 0.0) && g1 != 0.0 {
            roots.push(bisect_root(g, w[0], w[1], g0, 1e-14));
        }
    }
    roots
}

/// Number of drift zeros; odd by construction.
pub fn fixed_point_count(p_1: f64, p_2: f64, learning: &LearningParams) -> usize {
    fixed_point_deltas(p_1, p_2, learning).len()
}

pub(crate) fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

/// Position of a fixed point relative to the two choice ramps: `Left` plays
/// market 2, `Right` plays market 1, `Central` mixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakRole {
    Left,
    Central,
    Right,
}

impl PeakRole {
    pub fn name(self) -> &'static str {
        match self {
            PeakRole::Left => "left",
            PeakRole::Central => "central",
            PeakRole::Right => "right",
        }
    }

    /// Role after exchanging the two markets.
    pub fn mirrored(self) -> Self {
        match self {
            PeakRole::Left => PeakRole::Right,
            PeakRole::Central => PeakRole::Central,
            PeakRole::Right => PeakRole::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: AttractionState,
    pub delta: f64,
    pub stability: Stability,
    pub role: PeakRole,
    pub jacobian: Mat2,
    /// Stationary covariance of the linearized noisy dynamics (stable points only).
    pub peak_covariance: Option<Mat2>,
}

impl FixedPoint {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }

    pub fn choice_prob(&self, beta: f64) -> f64 {
        softmax_choice(self.delta, beta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    /// Ascending in `delta`.
    pub points: Vec<FixedPoint>,
}

impl FixedPointSet {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn stable(&self) -> impl Iterator<Item = &FixedPoint> {
        self.points.iter().filter(|p| p.is_stable())
    }

    pub fn stable_count(&self) -> usize {
        self.stable().count()
    }

    pub fn stable_with_role(&self, role: PeakRole) -> Option<&FixedPoint> {
        self.stable().find(|p| p.role == role)
    }

    /// The unstable point separating two stable ones.
    pub fn saddle_between(&self, a: &FixedPoint, b: &FixedPoint) -> Option<&FixedPoint> {
        let (lo, hi) = if a.delta < b.delta { (a.delta, b.delta) } else { (b.delta, a.delta) };
        self.points.iter().filter(|p| !p.is_stable() && p.delta > lo && p.delta < hi).min_by(|x, y| {
            let mid = 0.5 * (lo + hi);
            (x.delta - mid).abs().total_cmp(&(y.delta - mid).abs())
        })
    }

    /// Stable points must alternate with unstable ones along `delta`.
    pub fn alternates(&self) -> bool {
        self.points.windows(2).all(|w| w[0].is_stable() != w[1].is_stable())
            && self.points.first().is_some_and(|p| p.is_stable())
    }
}

/// Class aggregates implied by weighted peaks `(delta, weight)` per class in the
/// narrow-peak limit.
pub fn aggregates_from_peaks(class_1: &[(f64, f64)], class_2: &[(f64, f64)], beta: f64) -> Result<Aggregates> {
    let mean = |peaks: &[(f64, f64)]| -> Result<f64> {
        let total: f64 = peaks.iter().map(|p| p.1).sum();
        if peaks.iter().any(|p| p.1 < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("peak weights must be nonnegative and sum to 1 (sum {total})")));
        }
        Ok(peaks.iter().map(|&(d, w)| w * softmax_choice(d, beta)).sum::<f64>().clamp(0.0, 1.0))
    };
    Ok(Aggregates { pbar_1: mean(class_1)?, pbar_2: mean(class_2)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogeneousKind {
    HomogeneousMixed,
    /// No equal-payoff point on the anti-diagonal: the state drifts to a pure
    /// corner as choice sharpens.
    HomogeneousPureLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentState {
    pub aggregates: Aggregates,
    pub fixed_points: [FixedPointSet; 2],
    pub kind: HomogeneousKind,
}

impl SelfConsistentState {
    /// The unique stable attraction pair of each class.
    pub fn attractions(&self) -> [AttractionState; 2] {
        let pick = |s: &FixedPointSet| s.stable().next().map(|p| p.state).unwrap_or_default();
        [pick(&self.fixed_points[0]), pick(&self.fixed_points[1])]
    }
}

/// Aggregate a homogeneous class would produce at the given aggregates: the choice
/// probability of its single stable fixed point.
pub fn homogeneous_response(model: &GameModel, c: Class, aggr: Aggregates, learning: LearningParams) -> Result<f64> {
    let agent = SingleAgent::new(model, c, aggr, learning);
    let set = agent.fixed_points()?;
    let mut stable = set.stable();
    match (stable.next(), stable.next()) {
        (Some(p), None) => Ok(p.choice_prob(learning.beta)),
        _ => Err(Error::NotHomogeneous { pbar: aggr.get(c), stable: set.stable_count() }),
    }
}

/// Roots of `x -> f(x) - x` on `[0, 1]` for a map into `(0, 1)`.
fn diagonal_crossings(f: impl Fn(f64) -> Result<f64>, n: usize) -> Result<Vec<f64>> {
    let h = |x: f64| f(x).map(|v| v - x);
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let vs: Result<Vec<f64>> = xs.iter().map(|&x| h(x)).collect();
    let vs = vs?;
    let mut out = Vec::new();
    for k in 0..n {
        if vs[k] == 0.0 {
            out.push(xs[k]);
        } else if (vs[k] > 0.0) != (vs[k + 1] > 0.0) && vs[k + 1] != 0.0 {
            let (mut lo, mut hi, mut f_lo) = (xs[k], xs[k + 1], vs[k]);
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                let f_mid = h(mid)?;
                if (f_mid > 0.0) == (f_lo > 0.0) {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    Ok(out)
}

fn has_anti_diagonal_equal_payoff(model: &GameModel) -> bool {
    let n = 512;
    let gaps: Vec<f64> = (0..=n)
        .map(|i| {
            let x = (i as f64 / n as f64).clamp(1e-9, 1.0 - 1e-9);
            model.payoff_gap(Class::One, Aggregates::symmetric(x))
        })
        .collect();
    gaps.windows(2).any(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
}

/// Aggregates reproduced by homogeneous classes. `symmetric` restricts the search
/// to the anti-diagonal `pbar_2 = 1 - pbar_1` (requires the symmetric setup) and
/// returns every crossing; the full two-dimensional mode returns one solution
/// found by nested bisection.
pub fn homogeneous_self_consistent(
    model: &GameModel,
    learning: LearningParams,
    symmetric: bool,
) -> Result<Vec<SelfConsistentState>> {
    learning.validate()?;
    let kind = if has_anti_diagonal_equal_payoff(model) {
        HomogeneousKind::HomogeneousMixed
    } else {
        HomogeneousKind::HomogeneousPureLimit
    };
    let solutions: Vec<Aggregates> = if symmetric {
        if !model.params.is_symmetric(1e-12) {
            return Err(Error::InvalidConfig("symmetric mode needs theta_2 = 1 - theta_1 and pb_2 = 1 - pb_1".into()));
        }
        diagonal_crossings(|x| homogeneous_response(model, Class::One, Aggregates::symmetric(x), learning), 200)?
            .into_iter()
            .map(Aggregates::symmetric)
            .collect()
    } else {
        let class_two = |x: f64| -> Result<f64> {
            let ys = diagonal_crossings(
                |y| homogeneous_response(model, Class::Two, Aggregates { pbar_1: x, pbar_2: y }, learning),
                64,
            )?;
            ys.first().copied().ok_or(Error::NoSignChange { what: "class-2 self-consistency", lo: 0.0, hi: 1.0 })
        };
        let xs = diagonal_crossings(
            |x| homogeneous_response(model, Class::One, Aggregates { pbar_1: x, pbar_2: class_two(x)? }, learning),
            64,
        )?;
        let x = *xs.first().ok_or(Error::NoSignChange { what: "class-1 self-consistency", lo: 0.0, hi: 1.0 })?;
        vec![Aggregates { pbar_1: x, pbar_2: class_two(x)? }]
    };
    solutions
        .into_iter()
        .map(|aggregates| {
            let sets = [
                SingleAgent::new(model, Class::One, aggregates, learning).fixed_points()?,
                SingleAgent::new(model, Class::Two, aggregates, learning).fixed_points()?,
            ];
            Ok(SelfConsistentState { aggregates, fixed_points: sets, kind })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    pub t: f64,
    pub attractions: [AttractionState; 2],
    pub aggregates: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrajectory {
    pub samples: Vec<PopulationSample>,
    /// Drift norm at the end fell below the tolerance.
    pub converged: bool,
}

/// Deterministic long-memory dynamics of two homogeneous classes, each agent
/// following the drift while the aggregates track the current choice probabilities.
pub fn homogeneous_population_dynamics(
    model: &GameModel,
    learning: LearningParams,
    initial: [AttractionState; 2],
    t_end: f64,
    tolerance: f64,
    n_samples: usize,
) -> Result<PopulationTrajectory> {
    if !(t_end > 0.0) || n_samples < 2 {
        return Err(Error::InvalidConfig("t_end must be positive and n_samples >= 2".into()));
    }
    let beta = learning.beta;
    let aggregates_of = |y: &[f64]| Aggregates {
        pbar_1: softmax_choice(y[0] - y[1], beta),
        pbar_2: softmax_choice(y[2] - y[3], beta),
    };
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let aggr = aggregates_of(y);
        for (c, off) in [(Class::One, 0), (Class::Two, 2)] {
            let agent = SingleAgent::new(model, c, aggr, learning);
            let mu = agent.drift([y[off], y[off + 1]]);
            dy[off] = mu[0];
            dy[off + 1] = mu[1];
        }
    };
    let times: Vec<f64> = (0..n_samples).map(|i| t_end * i as f64 / (n_samples - 1) as f64).collect();
    let y0 = [initial[0].a_1, initial[0].a_2, initial[1].a_1, initial[1].a_2];
    let ys = ode::integrate(|_, y, dy| rhs(y, dy), 0.0, &y0, &times, OdeOptions::with_tolerance(tolerance))?;
    let samples: Vec<PopulationSample> = times
        .iter()
        .zip(&ys)
        .map(|(&t, y)| PopulationSample {
            t,
            attractions: [AttractionState::new(y[0], y[1]), AttractionState::new(y[2], y[3])],
            aggregates: aggregates_of(y),
        })
        .collect();
    let last = ys.last().expect("n_samples >= 2");
    let mut dy = [0.0; 4];
    rhs(last, &mut dy);
    let converged = dy.iter().map(|v| v * v).sum::<f64>().sqrt() <= tolerance;
    Ok(PopulationTrajectory { samples, converged })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaThresholds {
    /// One fixed point below, three above.
    pub alpha_1to3: f64,
    /// Three below, five above; absent if five are never reached.
    pub alpha_3to5: Option<f64>,
    /// Five below, three above (the central pair annihilates).
    pub alpha_back_to_3: Option<f64>,
}

/// Values of `alpha` where the number of drift zeros changes, for fixed payoffs.
pub fn threshold_alphas_fixed_point_count(table: &PayoffTable, beta: f64) -> Result<AlphaThresholds> {
    let learning = LearningParams { r: 1.0, alpha: 1.0, beta };
    learning.validate()?;
    let count = |ln_alpha: f64| fixed_point_count(table.p_1, table.p_2, &learning.with_alpha(ln_alpha.exp()));
    let lo = -beta * (table.p_1 + table.p_2 + 1.0) - 5.0;
    let n = 2000;
    let grid: Vec<f64> = (0..=n).map(|i| lo * (1.0 - i as f64 / n as f64)).collect();
    let counts: Vec<usize> = grid.iter().map(|&x| count(x)).collect();

    let refine = |k: usize, pred: &dyn Fn(usize) -> bool| -> f64 {
        let (mut a, mut b) = (grid[k - 1], grid[k]);
        while b - a > 1e-12 * (1.0 + a.abs()) {
            let mid = 0.5 * (a + b);
            if pred(count(mid)) {
                b = mid;
            } else {
                a = mid;
            }
        }
        (0.5 * (a + b)).exp()
    };
    let first = |from: usize, pred: &dyn Fn(usize) -> bool| (from.max(1)..=n).find(|&k| pred(counts[k]) && !pred(counts[k - 1]));

    let up3 = |c: usize| c >= 3;
    let k13 = first(1, &up3).ok_or(Error::MissingTransition { target: 3 })?;
    let alpha_1to3 = refine(k13, &up3);
    let up5 = |c: usize| c >= 5;
    let (alpha_3to5, alpha_back_to_3) = match first(k13, &up5) {
        Some(k35) => {
            let down = |c: usize| c < 5;
            let back = first(k35, &down).map(|k| refine(k, &down));
            (Some(refine(k35, &up5)), back)
        }
        None => (None, None),
    };
    Ok(AlphaThresholds { alpha_1to3, alpha_3to5, alpha_back_to_3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::GameParams;
    use proptest::prelude::*;

    fn agent(alpha: f64, beta: f64) -> SingleAgent {
        let model = GameModel::new(GameParams::symmetric(0.3, 0.2)).unwrap();
        SingleAgent::new(&model, Class::One, Aggregates::symmetric(0.42), LearningParams { r: 0.01, alpha, beta })
    }

    #[test]
    fn softmax_identities() {
        assert_eq!(softmax_choice(0.0, 3.0), 0.5);
        assert_eq!(softmax_choice(1e6, 10.0), 1.0);
        assert_eq!(softmax_choice(-1e6, 10.0), 0.0);
        for x in [-3.0, -0.1, 0.7, 40.0] {
            assert!((softmax_choice(x, 2.0) + softmax_choice(-x, 2.0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_vanishes_at_payoffs_without_discount() {
        let ag = agent(0.0, 5.0);
        let mu = ag.drift([ag.table.p_1, ag.table.p_2]);
        assert_eq!(mu, [0.0, 0.0]);
        let d = ag.diffusion([0.1, 0.3]);
        assert_eq!(d[0][1], 0.0);
    }

    #[test]
    fn diffusion_saturated_choice() {
        let ag = agent(0.5, 1e4);
        let a = [0.4, 0.1];
        let d = ag.diffusion(a);
        let t = ag.table;
        assert!((d[0][0] - (t.q_1 - 2.0 * a[0] * t.p_1 + a[0] * a[0])).abs() < 1e-12);
    }

    fn fd_jacobian(ag: &SingleAgent, a: Vec2) -> Mat2 {
        let h = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for col in 0..2 {
            let (mut up, mut dn) = (a, a);
            up[col] += h;
            dn[col] -= h;
            let (fu, fd) = (ag.drift(up), ag.drift(dn));
            for row in 0..2 {
                j[row][col] = (fu[row] - fd[row]) / (2.0 * h);
            }
        }
        j
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(a1 in 0.0..0.6f64, a2 in 0.0..0.6f64, alpha in 0.0..1.0f64, beta in 1.0..20.0f64) {
            let ag = agent(alpha, beta);
            let j = ag.jacobian([a1, a2]);
            let fd = fd_jacobian(&ag, [a1, a2]);
            let scale = j.iter().flatten().fold(1e-3f64, |m, v| m.max(v.abs()));
            for r in 0..2 { for c in 0..2 {
                prop_assert!((j[r][c] - fd[r][c]).abs() <= 1e-6 * scale, "{:?} vs {:?}", j, fd);
            }}
        }

        #[test]
        fn diffusion_gradient_matches_finite_differences(a1 in 0.0..0.6f64, a2 in 0.0..0.6f64, alpha in 0.0..1.0f64, beta in 1.0..20.0f64) {
            let ag = agent(alpha, beta);
            let g = ag.diffusion_gradient([a1, a2]);
            let h = 1e-6;
            for i in 0..2 {
                let (mut up, mut dn) = ([a1, a2], [a1, a2]);
                up[i] += h;
                dn[i] -= h;
                let (su, sd) = (ag.diffusion(up), ag.diffusion(dn));
                for r in 0..2 { for c in 0..2 {
                    let fd = (su[r][c] - sd[r][c]) / (2.0 * h);
                    prop_assert!((g[i][r][c] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
                }}
            }
        }

        #[test]
        fn diffusion_is_positive_semidefinite(a1 in -0.2..0.8f64, a2 in -0.2..0.8f64, alpha in 0.0..1.0f64, beta in 0.5..30.0f64) {
            let d = agent(alpha, beta).diffusion([a1, a2]);
            prop_assert!(linalg::sym_eigenvalues(&d)[0] >= -1e-12);
        }

        #[test]
        fn fixed_points_alternate(alpha in 1e-4..1.0f64, beta in 1.0..40.0f64) {
            let set = agent(alpha, beta).fixed_points().unwrap();
            prop_assert!(set.count() % 2 == 1 && set.count() <= 5);
            prop_assert!(set.alternates());
            for p in set.stable() {
                let c = p.peak_covariance.unwrap();
                prop_assert!(linalg::sym_eigenvalues(&c)[0] > 0.0);
            }
        }
    }

    #[test]
    fn fixed_points_are_drift_zeros_with_lyapunov_covariance() {
        let ag = agent(0.07, 1.0 / 0.11);
        let set = ag.fixed_points().unwrap();
        assert_eq!(set.count(), 5);
        for p in &set.points {
            let mu = ag.drift(p.state.to_array());
            assert!(mu[0].abs() < 1e-12 && mu[1].abs() < 1e-12, "{mu:?}");
            if let Some(c) = p.peak_covariance {
                let j = p.jacobian;
                let s = ag.diffusion(p.state.to_array());
                for r in 0..2 {
                    for q in 0..2 {
                        let jc: f64 = (0..2).map(|k| j[r][k] * c[k][q]).sum();
                        let cjt: f64 = (0..2).map(|k| c[r][k] * j[q][k]).sum();
                        assert!((jc + cjt + ag.learning.r * s[r][q]).abs() < 1e-10);
                    }
                }
            }
        }
        let roles: Vec<PeakRole> = set.stable().map(|p| p.role).collect();
        assert_eq!(roles, vec![PeakRole::Left, PeakRole::Central, PeakRole::Right]);
    }

    #[test]
    fn equal_payoffs_at_unit_discount_have_zero_root() {
        let l = LearningParams { r: 0.1, alpha: 1.0, beta: 5.0 };
        assert!(fixed_point_deltas(0.3, 0.3, &l).iter().any(|d| d.abs() < 1e-12));
    }

    #[test]
    fn scan_resolution_is_converged() {
        // Doubling the resolution would not add roots: the scan resolves extrema.
        let l = LearningParams { r: 0.1, alpha: 0.07, beta: 1.0 / 0.11 };
        let d = fixed_point_deltas(0.35, 0.33, &l);
        let fine: Vec<f64> = {
            let g = |x: f64| 0.35 * logistic(l.beta * x - l.alpha.ln()) - 0.33 * logistic(-l.beta * x - l.alpha.ln()) - x;
            let xs: Vec<f64> = (0..=200_000).map(|i| -1.33 + 2.68 * i as f64 / 200_000.0).collect();
            xs.windows(2).filter(|w| (g(w[0]) > 0.0) != (g(w[1]) > 0.0)).map(|w| w[0]).collect()
        };
        assert_eq!(d.len(), fine.len());
    }

    #[test]
    fn peaks_to_aggregates() {
        let a = aggregates_from_peaks(&[(0.2, 1.0)], &[(-0.3, 0.5), (0.3, 0.5)], 4.0).unwrap();
        assert!((a.pbar_1 - softmax_choice(0.2, 4.0)).abs() < 1e-15);
        assert!((a.pbar_2 - 0.5).abs() < 1e-15);
        assert!(aggregates_from_peaks(&[(0.2, 0.7)], &[(0.0, 1.0)], 4.0).is_err());
    }

    #[test]
    fn homogeneous_dynamics_rests_at_self_consistent_state() {
        let model = GameModel::new(GameParams::symmetric(0.3, 0.2)).unwrap();
        let l = LearningParams { r: 0.01, alpha: 0.0, beta: 10.0 };
        let sols = homogeneous_self_consistent(&model, l, true).unwrap();
        assert_eq!(sols.len(), 1);
        let s = &sols[0];
        assert_eq!(s.kind, HomogeneousKind::HomogeneousMixed);
        let init = s.attractions();
        for (c, a) in Class::BOTH.iter().zip(init) {
            let mu = SingleAgent::new(&model, *c, s.aggregates, l).drift(a.to_array());
            assert!(mu[0].hypot(mu[1]) < 1e-8);
        }
        let traj = homogeneous_population_dynamics(&model, l, init, 5.0, 1e-9, 11).unwrap();
        let end = traj.samples.last().unwrap();
        assert!((end.aggregates.pbar_1 - s.aggregates.pbar_1).abs() < 1e-7);
        assert!(traj.converged);
    }

    #[test]
    fn two_dimensional_mode_finds_symmetric_solution() {
        let model = GameModel::new(GameParams::symmetric(0.3, 0.2)).unwrap();
        let l = LearningParams { r: 0.01, alpha: 0.0, beta: 10.0 };
        let sym = homogeneous_self_consistent(&model, l, true).unwrap();
        let full = homogeneous_self_consistent(&model, l, false).unwrap();
        assert!((sym[0].aggregates.pbar_1 - full[0].aggregates.pbar_1).abs() < 1e-8);
        assert!((full[0].aggregates.pbar_2 - (1.0 - full[0].aggregates.pbar_1)).abs() < 1e-8);
    }

    #[test]
    fn thresholds_bracket_count_changes() {
        let t = PayoffTable { p_1: 0.6, p_2: 0.5, q_1: 0.5, q_2: 0.4 };
        let beta = 30.0;
        let th = threshold_alphas_fixed_point_count(&t, beta).unwrap();
        let l = LearningParams { r: 1.0, alpha: 1.0, beta };
        assert_eq!(fixed_point_count(t.p_1, t.p_2, &l.with_alpha(th.alpha_1to3 * 0.999)), 1);
        assert_eq!(fixed_point_count(t.p_1, t.p_2, &l.with_alpha(th.alpha_1to3 * 1.001)), 3);
        let a35 = th.alpha_3to5.unwrap();
        assert!(th.alpha_1to3 < a35);
        let back = th.alpha_back_to_3.unwrap();
        assert!(a35 < back);
        assert_eq!(fixed_point_count(t.p_1, t.p_2, &l.with_alpha(0.5 * (a35 + back))), 5);
    }
}
