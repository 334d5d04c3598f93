//! Nash equilibria of the infinite-player market choice game.
//!
//! A class can only mix between markets where its two payoffs are equal, so
//! interior equilibria sit where the equal-payoff curves of both classes cross.
//! On the edges and corners of the aggregate square the indifference of one or
//! both classes is replaced by a payoff ordering that points at the boundary.

use crate::error::Result;
use crate::market::{Aggregates, Class, GameModel, GameParams, Market, MarketQuote};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Bisection tolerance on aggregate coordinates.
pub const ROOT_TOL: f64 = 1e-10;
/// Crossings closer than this to an edge are treated as boundary contacts.
pub const INTERIOR_MARGIN: f64 = 1e-6;
pub const DEFAULT_GRID_N: usize = 512;

// Residuals are evaluated slightly inside the square: the exact corners carry
// the empty-market discontinuity and are handled separately.
const EDGE_INSET: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    PotentiallyHeterogeneous,
    PartiallyPotentiallyHeterogeneous,
    HomogeneousPureSameMarket,
    HomogeneousPureSplit,
}

impl EquilibriumKind {
    pub fn name(self) -> &'static str {
        match self {
            EquilibriumKind::PotentiallyHeterogeneous => "potentially_heterogeneous",
            EquilibriumKind::PartiallyPotentiallyHeterogeneous => "partially_potentially_heterogeneous",
            EquilibriumKind::HomogeneousPureSameMarket => "homogeneous_pure_same_market",
            EquilibriumKind::HomogeneousPureSplit => "homogeneous_pure_split",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub aggregates: Aggregates,
    pub kind: EquilibriumKind,
    pub payoff_gap_1: f64,
    pub payoff_gap_2: f64,
}

/// One connected piece of an equal-payoff curve as a list of `(pbar_1, pbar_2)`.
pub type Polyline = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualPayoffCurve {
    pub class: Class,
    pub pieces: Vec<Polyline>,
    /// The residual vanishes on every grid node (markets indistinguishable).
    pub degenerate: bool,
}

/// `P_1 - P_2` for class `c` at the given aggregates.
pub fn equal_payoff_residual(c: Class, aggr: Aggregates, params: &GameParams) -> Result<f64> {
    Ok(GameModel::new(*params)?.payoff_gap(c, aggr))
}

fn clamp_inside(x: f64) -> f64 {
    x.clamp(EDGE_INSET, 1.0 - EDGE_INSET)
}

fn residual_at(model: &GameModel, c: Class, x: f64, y: f64) -> f64 {
    model.payoff_gap(c, Aggregates { pbar_1: clamp_inside(x), pbar_2: clamp_inside(y) })
}

/// Bisection for a sign change of `f` on `[lo, hi]`, given the values at the ends.
fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> f64 {
    if f_lo == 0.0 {
        return lo;
    }
    while hi - lo > tol {
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

fn positive(v: f64) -> bool {
    v >= 0.0
}

/// Traces the zero set of the class residual with marching squares on a
/// `grid_n x grid_n` cell grid; edge crossings are refined by bisection.
pub fn equal_payoff_curve(model: &GameModel, c: Class, grid_n: usize) -> EqualPayoffCurve {
    let n = grid_n.max(16);
    let h = 1.0 / n as f64;
    let node = |i: usize| i as f64 * h;
    let values: Vec<Vec<f64>> = (0..=n)
        .map(|i| (0..=n).map(|j| residual_at(model, c, node(i), node(j))).collect())
        .collect();
    let scale = model_scale(model);
    let degenerate = values.iter().flatten().all(|v| v.abs() <= 1e-13 * scale);
    if degenerate {
        return EqualPayoffCurve { class: c, pieces: Vec::new(), degenerate };
    }

    // Edge keys: (0, i, j) is the edge from node (i, j) to (i + 1, j),
    // (1, i, j) the edge from (i, j) to (i, j + 1).
    let mut crossings: HashMap<(u8, usize, usize), [f64; 2]> = HashMap::new();
    let mut crossing = |key: (u8, usize, usize)| -> Option<[f64; 2]> {
        let (dir, i, j) = key;
        let (v0, v1) = if dir == 0 { (values[i][j], values[i + 1][j]) } else { (values[i][j], values[i][j + 1]) };
        if positive(v0) == positive(v1) {
            return None;
        }
        Some(*crossings.entry(key).or_insert_with(|| {
            if dir == 0 {
                let y = node(j);
                let x = bisect(|x| residual_at(model, c, x, y), node(i), node(i + 1), v0, ROOT_TOL);
                [clamp_inside(x), clamp_inside(y)]
            } else {
                let x = node(i);
                let y = bisect(|y| residual_at(model, c, x, y), node(j), node(j + 1), v0, ROOT_TOL);
                [clamp_inside(x), clamp_inside(y)]
            }
        }))
    };

    let mut segments: Vec<((u8, usize, usize), (u8, usize, usize), [f64; 2], [f64; 2])> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            // Counter-clockwise: bottom, right, top, left.
            let edges = [(0u8, i, j), (1u8, i + 1, j), (0u8, i, j + 1), (1u8, i, j)];
            let hits: Vec<((u8, usize, usize), [f64; 2])> =
                edges.iter().filter_map(|&e| crossing(e).map(|p| (e, p))).collect();
            match hits.len() {
                2 => segments.push((hits[0].0, hits[1].0, hits[0].1, hits[1].1)),
                4 => {
                    // Saddle cell: the sign at the centre decides the pairing.
                    let centre = residual_at(model, c, node(i) + 0.5 * h, node(j) + 0.5 * h);
                    let corner = positive(values[i][j]);
                    let (a, b, cc, d) = (hits[0], hits[1], hits[2], hits[3]);
                    if positive(centre) == corner {
                        segments.push((a.0, b.0, a.1, b.1));
                        segments.push((cc.0, d.0, cc.1, d.1));
                    } else {
                        segments.push((a.0, d.0, a.1, d.1));
                        segments.push((b.0, cc.0, b.1, cc.1));
                    }
                }
                _ => {}
            }
        }
    }
    EqualPayoffCurve { class: c, pieces: chain_segments(&segments), degenerate }
}

type EdgeKey = (u8, usize, usize);

fn chain_segments(segments: &[(EdgeKey, EdgeKey, [f64; 2], [f64; 2])]) -> Vec<Polyline> {
    let mut by_edge: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (k, s) in segments.iter().enumerate() {
        by_edge.entry(s.0).or_default().push(k);
        by_edge.entry(s.1).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut pieces = Vec::new();
    let next_from = |edge: EdgeKey, used: &[bool]| -> Option<usize> {
        by_edge.get(&edge).and_then(|v| v.iter().copied().find(|&k| !used[k]))
    };
    // Prefer starting at open ends so open curves come out in one piece.
    let mut order: Vec<usize> = (0..segments.len())
        .filter(|&k| by_edge[&segments[k].0].len() == 1 || by_edge[&segments[k].1].len() == 1)
        .collect();
    order.extend(0..segments.len());
    for start in order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let s = &segments[start];
        let (mut tail, mut head) = if by_edge[&s.1].len() == 1 { (s.1, s.0) } else { (s.0, s.1) };
        let mut line = if tail == s.0 { vec![s.2, s.3] } else { vec![s.3, s.2] };
        // Extend forward from `head`, then backward from `tail`.
        for forward in [true, false] {
            loop {
                let at = if forward { head } else { tail };
                let Some(k) = next_from(at, &used) else { break };
                used[k] = true;
                let seg = &segments[k];
                let (other, point) = if seg.0 == at { (seg.1, seg.3) } else { (seg.0, seg.2) };
                if forward {
                    line.push(point);
                    head = other;
                } else {
                    line.insert(0, point);
                    tail = other;
                }
            }
        }
        pieces.push(line);
    }
    pieces
}

fn model_scale(model: &GameModel) -> f64 {
    model
        .quotes
        .iter()
        .map(|q: &MarketQuote| q.v_a * q.ask.mean + q.v_b * q.bid.mean)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
}

fn point(model: &GameModel, aggr: Aggregates, kind: EquilibriumKind) -> EquilibriumPoint {
    let t1 = model.payoffs(Class::One, aggr);
    let t2 = model.payoffs(Class::Two, aggr);
    EquilibriumPoint { aggregates: aggr, kind, payoff_gap_1: t1.gap(), payoff_gap_2: t2.gap() }
}

/// Locates where the class-2 residual changes sign along a class-1 polyline and
/// refines the crossing with a nested bisection that keeps the point on the
/// class-1 curve.
fn curve_crossings(model: &GameModel, curve: &EqualPayoffCurve, other: Class, h: f64) -> Vec<[f64; 2]> {
    let c = curve.class;
    let mut found: Vec<[f64; 2]> = Vec::new();
    for line in &curve.pieces {
        for w in line.windows(2) {
            let (p, q) = (w[0], w[1]);
            let r_p = residual_at(model, other, p[0], p[1]);
            let r_q = residual_at(model, other, q[0], q[1]);
            if positive(r_p) == positive(r_q) {
                continue;
            }
            let d = [q[0] - p[0], q[1] - p[1]];
            let len = d[0].hypot(d[1]);
            if len == 0.0 {
                continue;
            }
            let normal = [-d[1] / len, d[0] / len];
            let project = |t: f64| -> Option<[f64; 2]> {
                let base = [p[0] + t * d[0], p[1] + t * d[1]];
                let at = |s: f64| [base[0] + s * normal[0], base[1] + s * normal[1]];
                let f = |s: f64| {
                    let x = at(s);
                    residual_at(model, c, x[0], x[1])
                };
                let mut reach = 2.0 * h;
                for _ in 0..4 {
                    let (lo, hi) = (-reach, reach);
                    let (f_lo, f_hi) = (f(lo), f(hi));
                    if positive(f_lo) != positive(f_hi) {
                        return Some(at(bisect(f, lo, hi, f_lo, 1e-14)));
                    }
                    reach *= 2.0;
                }
                None
            };
            let g = |t: f64| project(t).map(|x| residual_at(model, other, x[0], x[1]));
            let (Some(g0), Some(g1)) = (g(0.0), g(1.0)) else { continue };
            if positive(g0) == positive(g1) {
                continue;
            }
            let (mut lo, mut hi, mut g_lo) = (0.0, 1.0, g0);
            let mut ok = true;
            while (hi - lo) * len > 1e-14 {
                let mid = 0.5 * (lo + hi);
                let Some(g_mid) = g(mid) else {
                    ok = false;
                    break;
                };
                if positive(g_mid) == positive(g_lo) {
                    lo = mid;
                    g_lo = g_mid;
                } else {
                    hi = mid;
                }
            }
            if !ok {
                continue;
            }
            if let Some(x) = project(0.5 * (lo + hi)) {
                if !found.iter().any(|y| (y[0] - x[0]).hypot(y[1] - x[1]) < 1e-7) {
                    found.push(x);
                }
            }
        }
    }
    found
}

/// Roots of `f` on `(0, 1)` from a uniform scan refined by bisection.
fn scan_roots(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n).map(|i| clamp_inside(i as f64 / n as f64)).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        if positive(vs[k]) != positive(vs[k + 1]) {
            roots.push(bisect(&f, xs[k], xs[k + 1], vs[k], ROOT_TOL));
        }
    }
    roots
}

/// All equilibria: interior crossings, edge points with one indifferent class
/// and one pure class, and the admissible corners.
pub fn find_equilibria(model: &GameModel, grid_n: usize) -> Vec<EquilibriumPoint> {
    let n = grid_n.max(16);
    let mut out = Vec::new();

    let curve_1 = equal_payoff_curve(model, Class::One, n);
    let curve_2 = equal_payoff_curve(model, Class::Two, n);
    if curve_1.degenerate && curve_2.degenerate {
        // Every point is an equal-payoff point for both classes; report the centre.
        out.push(point(model, Aggregates::symmetric(0.5), EquilibriumKind::PotentiallyHeterogeneous));
    } else {
        let inside = |x: f64| (INTERIOR_MARGIN..=1.0 - INTERIOR_MARGIN).contains(&x);
        for x in curve_crossings(model, &curve_1, Class::Two, 1.0 / n as f64) {
            if inside(x[0]) && inside(x[1]) {
                let aggr = Aggregates { pbar_1: x[0], pbar_2: x[1] };
                out.push(point(model, aggr, EquilibriumKind::PotentiallyHeterogeneous));
            }
        }
    }

    // Class 1 indifferent, class 2 pure on the pbar_2 = 0 or 1 edge.
    for edge in [0.0, 1.0] {
        for x in scan_roots(|x| model.payoff_gap(Class::One, Aggregates { pbar_1: x, pbar_2: edge }), n) {
            let aggr = Aggregates { pbar_1: x, pbar_2: edge };
            let gap_2 = model.payoff_gap(Class::Two, aggr);
            if (edge == 1.0 && gap_2 >= 0.0) || (edge == 0.0 && gap_2 <= 0.0) {
                out.push(point(model, aggr, EquilibriumKind::PartiallyPotentiallyHeterogeneous));
            }
        }
        for y in scan_roots(|y| model.payoff_gap(Class::Two, Aggregates { pbar_1: edge, pbar_2: y }), n) {
            let aggr = Aggregates { pbar_1: edge, pbar_2: y };
            let gap_1 = model.payoff_gap(Class::One, aggr);
            if (edge == 1.0 && gap_1 >= 0.0) || (edge == 0.0 && gap_1 <= 0.0) {
                out.push(point(model, aggr, EquilibriumKind::PartiallyPotentiallyHeterogeneous));
            }
        }
    }

    for (x, y) in [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)] {
        let aggr = Aggregates { pbar_1: x, pbar_2: y };
        let p = point(model, aggr, EquilibriumKind::HomogeneousPureSameMarket);
        if x == y {
            out.push(p);
            continue;
        }
        let agrees = |gap: f64, corner: f64| if corner == 1.0 { gap >= 0.0 } else { gap <= 0.0 };
        if agrees(p.payoff_gap_1, x) && agrees(p.payoff_gap_2, y) {
            out.push(EquilibriumPoint { kind: EquilibriumKind::HomogeneousPureSplit, ..p });
        }
    }
    out
}

/// Which of the two split corners a boundary root belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCorner {
    /// Class 1 in market 1, class 2 in market 2.
    OneTwo,
    /// Class 1 in market 2, class 2 in market 1.
    TwoOne,
}

/// Which side is rationed at the market that class 1 occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    Sellers,
    Buyers,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRoot {
    pub pb: f64,
    pub corner: SplitCorner,
    pub saturation: Saturation,
}

/// Closed-form coefficients of the split-corner stability condition.
///
/// In the symmetric setup the market occupied by class 1 (bias `theta`) and the
/// other market are mirror images, so the condition on class 1 also covers class 2.
/// With `f = pb / (1 - pb)` buyers per seller at the occupied market the
/// condition reads `c2 pb^2 + c1 pb + c0 >= 0` on the applicable saturation branch.
#[derive(Clone, Copy, Debug, PartialEq)]
struct SplitQuadratic {
    own: MarketQuote,
    away: MarketQuote,
}

impl SplitQuadratic {
    fn new(theta_own: f64, params: &GameParams) -> Result<Self> {
        let p = GameParams { theta_1: theta_own, theta_2: 1.0 - theta_own, ..*params };
        Ok(SplitQuadratic { own: MarketQuote::new(Market::One, &p)?, away: MarketQuote::new(Market::Two, &p)? })
    }

    fn saturation(&self, pb: f64) -> Saturation {
        let f = pb / (1.0 - pb);
        if f * self.own.v_b <= self.own.v_a {
            Saturation::Sellers
        } else {
            Saturation::Buyers
        }
    }

    fn coefficients(&self, branch: Saturation) -> [f64; 3] {
        let (o, w) = (&self.own, &self.away);
        match branch {
            Saturation::Sellers => {
                let x = o.v_b * (o.bid.mean + o.ask.mean);
                [
                    -(w.v_a * w.ask.mean),
                    x + 2.0 * w.v_a * w.ask.mean,
                    -x - w.v_a * w.ask.mean - w.v_a * w.bid.mean,
                ]
            }
            Saturation::Buyers => {
                let x = o.v_a * (o.bid.mean + o.ask.mean);
                [
                    -(w.v_b * w.ask.mean),
                    x + 2.0 * w.v_b * w.ask.mean,
                    -x - w.v_b * w.bid.mean - w.v_b * w.ask.mean,
                ]
            }
        }
    }

    fn value(&self, pb: f64) -> f64 {
        let [c0, c1, c2] = self.coefficients(self.saturation(pb));
        c0 + pb * (c1 + pb * c2)
    }

    fn roots(&self, corner: SplitCorner) -> Vec<BoundaryRoot> {
        let mut out = Vec::new();
        for branch in [Saturation::Sellers, Saturation::Buyers] {
            let [c0, c1, c2] = self.coefficients(branch);
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 || c2 == 0.0 {
                continue;
            }
            // Cancellation-free pair of roots.
            let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
            for pb in [q / c2, c0 / q] {
                if (0.0..1.0).contains(&pb) && self.saturation(pb) == branch {
                    out.push(BoundaryRoot { pb, corner, saturation: branch });
                }
            }
        }
        out
    }
}

/// Values of `pb_1` on `[0, 1)` where a pure split equilibrium appears or
/// disappears, for the symmetric setup at bias `theta_1`.
pub fn phase_boundary_roots(theta_1: f64, params: &GameParams) -> Result<Vec<BoundaryRoot>> {
    let mut roots = SplitQuadratic::new(theta_1, params)?.roots(SplitCorner::OneTwo);
    roots.extend(SplitQuadratic::new(1.0 - theta_1, params)?.roots(SplitCorner::TwoOne));
    roots.sort_by(|a, b| a.pb.total_cmp(&b.pb));
    Ok(roots)
}

/// Closed-form test for a pure split equilibrium in the symmetric setup.
pub fn split_exists_analytic(theta_1: f64, pb_1: f64, params: &GameParams) -> Result<bool> {
    Ok(SplitQuadratic::new(theta_1, params)?.value(pb_1) >= 0.0
        || SplitQuadratic::new(1.0 - theta_1, params)?.value(pb_1) >= 0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRegion {
    pub has_pot_heterogeneous: bool,
    pub has_pure_split: bool,
    pub partially_het_count: usize,
}

impl PhaseRegion {
    pub fn from_equilibria(points: &[EquilibriumPoint]) -> Self {
        let count = |k| points.iter().filter(|p| p.kind == k).count();
        PhaseRegion {
            has_pot_heterogeneous: count(EquilibriumKind::PotentiallyHeterogeneous) > 0,
            has_pure_split: count(EquilibriumKind::HomogeneousPureSplit) > 0,
            partially_het_count: count(EquilibriumKind::PartiallyPotentiallyHeterogeneous),
        }
    }

    pub fn exclusive(&self) -> bool {
        !(self.has_pot_heterogeneous && self.has_pure_split)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub theta_1: f64,
    pub pb: f64,
    pub region: PhaseRegion,
    /// Split existence from the closed-form boundary condition.
    pub analytic_split: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub n_theta: usize,
    pub n_pb: usize,
    /// Row-major in `theta_1`, i.e. `cells[i * n_pb + j]`.
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, i: usize, j: usize) -> &PhaseCell {
        &self.cells[i * self.n_pb + j]
    }

    /// Cells whose direct and closed-form split labels differ.
    pub fn disagreements(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_theta {
            for j in 0..self.n_pb {
                let c = self.cell(i, j);
                if c.region.has_pure_split != c.analytic_split {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// True if the closed-form label changes within one cell of `(i, j)`.
    pub fn near_boundary(&self, i: usize, j: usize) -> bool {
        let here = self.cell(i, j).analytic_split;
        let lo = |k: usize| k.saturating_sub(1);
        (lo(i)..=(i + 1).min(self.n_theta - 1))
            .any(|a| (lo(j)..=(j + 1).min(self.n_pb - 1)).any(|b| self.cell(a, b).analytic_split != here))
    }
}

/// Symmetric-setup phase diagram over cell centres of `theta_1` in `[0, 1]` and
/// `pb` in `[0, 0.5]`.
pub fn phase_diagram(base: &GameParams, n_theta: usize, n_pb: usize, grid_n: usize) -> Result<PhaseDiagram> {
    let cells: Result<Vec<PhaseCell>> = (0..n_theta * n_pb)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_pb, k % n_pb);
            let theta_1 = (i as f64 + 0.5) / n_theta as f64;
            let pb = 0.5 * (j as f64 + 0.5) / n_pb as f64;
            let params = GameParams { theta_1, theta_2: 1.0 - theta_1, pb_1: pb, pb_2: 1.0 - pb, ..*base };
            let model = GameModel::new(params)?;
            let region = PhaseRegion::from_equilibria(&find_equilibria(&model, grid_n));
            Ok(PhaseCell { theta_1, pb, region, analytic_split: split_exists_analytic(theta_1, pb, base)? })
        })
        .collect();
    Ok(PhaseDiagram { n_theta, n_pb, cells: cells? })
}

/// The interior equilibrium on the anti-diagonal, if the symmetric setup has one.
pub fn symmetric_equilibrium(model: &GameModel, grid_n: usize) -> Option<EquilibriumPoint> {
    find_equilibria(model, grid_n)
        .into_iter()
        .filter(|p| p.kind == EquilibriumKind::PotentiallyHeterogeneous)
        .min_by(|a, b| {
            let off = |p: &EquilibriumPoint| (p.aggregates.pbar_1 + p.aggregates.pbar_2 - 1.0).abs();
            off(a).total_cmp(&off(b))
        })
}
