//! Minimal-action selection between competing peaks of the learning dynamics.
//!
//! In the long-memory limit the weight a peak receives is governed by the
//! Onsager-Machlup action of the cheapest escape path over the separating saddle.
//! Paths are discretized on a uniform time grid with the midpoint rule and
//! minimized with L-BFGS using the exact gradient of the discrete action.

use crate::error::{Error, Result};
use crate::fp::{self, AttractionState, FixedPoint, FixedPointSet, LearningParams, PeakRole, SingleAgent};
use crate::linalg::{self, Mat2, Vec2};
use crate::market::{Aggregates, Class, GameModel};
use crate::nash;
use crate::ode::{self, OdeOptions};
use serde::{Deserialize, Serialize};

/// Ridge added to the noise covariance, relative to its trace.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// A minimizer stalled at working precision counts as converged below this gradient.
const STALL_GRAD_TOL: f64 = 1e-5;
/// Iteration cap of the Newton stage that follows a stalled quasi-Newton run.
const NEWTON_ITER: usize = 100;
/// Tolerance on minimal-action equalities.
pub const ACTION_TOL: f64 = 1e-4;

/// Drift, diffusion and their derivatives for a two-dimensional diffusion.
pub trait Dynamics {
    fn drift(&self, x: Vec2) -> Vec2;
    fn jacobian(&self, x: Vec2) -> Mat2;
    fn diffusion(&self, x: Vec2) -> Mat2;
    fn diffusion_gradient(&self, x: Vec2) -> [Mat2; 2];
}

impl Dynamics for SingleAgent {
    fn drift(&self, x: Vec2) -> Vec2 {
        SingleAgent::drift(self, x)
    }
    fn jacobian(&self, x: Vec2) -> Mat2 {
        SingleAgent::jacobian(self, x)
    }
    fn diffusion(&self, x: Vec2) -> Mat2 {
        SingleAgent::diffusion(self, x)
    }
    fn diffusion_gradient(&self, x: Vec2) -> [Mat2; 2] {
        SingleAgent::diffusion_gradient(self, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionOptions {
    pub n_steps: usize,
    pub t_span: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions { n_steps: 10, t_span: 10.0, max_iter: 10_000, grad_tol: 1e-10 }
    }
}

impl ActionOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 || !(self.t_span > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("path needs n_steps >= 2, t_span > 0, max_iter > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub times: Vec<f64>,
    pub states: Vec<AttractionState>,
    pub action: f64,
    /// The covariance ridge was significant somewhere along the path.
    pub regularized: bool,
}

struct Segment {
    mid: Vec2,
    residual: Vec2,
    inv: Mat2,
    regularized: bool,
}

fn segment<D: Dynamics>(d: &D, a: Vec2, b: Vec2, dt: f64) -> Result<Segment> {
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let mu = d.drift(mid);
    let residual = [(b[0] - a[0]) / dt - mu[0], (b[1] - a[1]) / dt - mu[1]];
    let (sigma, regularized) = regularize(d.diffusion(mid));
    let inv = linalg::inverse(&sigma).ok_or(Error::IllConditioned)?;
    Ok(Segment { mid, residual, inv, regularized })
}

fn regularize(sigma: Mat2) -> (Mat2, bool) {
    let tr = linalg::trace(&sigma);
    let eps = SIGMA_FLOOR * tr;
    let low = linalg::sym_eigenvalues(&sigma)[0] < eps;
    ([[sigma[0][0] + eps, sigma[0][1]], [sigma[1][0], sigma[1][1] + eps]], low)
}

/// Midpoint-rule action of a path sampled every `dt`; also reports whether the
/// covariance floor was active.
pub fn path_action<D: Dynamics>(d: &D, states: &[Vec2], dt: f64) -> Result<(f64, bool)> {
    let mut total = 0.0;
    let mut flagged = false;
    for w in states.windows(2) {
        let s = segment(d, w[0], w[1], dt)?;
        total += 0.5 * linalg::quad_form(&s.inv, s.residual, s.residual) * dt;
        flagged |= s.regularized;
    }
    Ok((total, flagged))
}

/// Action and its gradient with respect to every state on the path.
pub fn path_action_gradient<D: Dynamics>(d: &D, states: &[Vec2], dt: f64) -> Result<(f64, Vec<Vec2>)> {
    let mut total = 0.0;
    let mut grad = vec![[0.0; 2]; states.len()];
    for (k, w) in states.windows(2).enumerate() {
        let s = segment(d, w[0], w[1], dt)?;
        let g = linalg::mat_vec(&s.inv, s.residual);
        total += 0.5 * (g[0] * s.residual[0] + g[1] * s.residual[1]) * dt;
        let jt_g = linalg::mat_vec(&linalg::transpose(&d.jacobian(s.mid)), g);
        let dsig = d.diffusion_gradient(s.mid);
        for i in 0..2 {
            let ridge = SIGMA_FLOOR * linalg::trace(&dsig[i]);
            let ds = [[dsig[i][0][0] + ridge, dsig[i][0][1]], [dsig[i][1][0], dsig[i][1][1] + ridge]];
            let mid_term = -0.5 * dt * jt_g[i] - 0.25 * dt * linalg::quad_form(&ds, g, g);
            grad[k][i] += -g[i] + mid_term;
            grad[k + 1][i] += g[i] + mid_term;
        }
    }
    Ok((total, grad))
}

fn pack(states: &[Vec2]) -> Vec<f64> {
    states[1..states.len() - 1].iter().flat_map(|s| s.iter().copied()).collect()
}

fn unpack(x: &[f64], from: Vec2, to: Vec2) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(x.len() / 2 + 2);
    out.push(from);
    out.extend(x.chunks(2).map(|c| [c[0], c[1]]));
    out.push(to);
    out
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    converged: bool,
    iterations: usize,
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs(mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>, x0: Vec<f64>, max_iter: usize, grad_tol: f64) -> Result<Minimum> {
    const MEMORY: usize = 12;
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut stalls = 0;
    for it in 0..max_iter {
        if inf_norm(&g) <= grad_tol {
            return Ok(Minimum { x, f, converged: true, iterations: it });
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(&g).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            if let Ok((ft, gt)) = fg(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No descent possible at working precision.
            return Ok(Minimum { x, f, converged: inf_norm(&g) <= STALL_GRAD_TOL, iterations: it });
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        stalls = if f - f_new <= 1e-16 * f.abs().max(1e-300) { stalls + 1 } else { 0 };
        x = x_new;
        f = f_new;
        g = g_new;
        if stalls >= 20 {
            return Ok(Minimum { x, f, converged: inf_norm(&g) <= STALL_GRAD_TOL, iterations: it });
        }
    }
    Ok(Minimum { x, f, converged: false, iterations: max_iter })
}

/// Damped Newton iteration on a finite-difference Hessian of the exact gradient.
/// Used to finish off paths where the quasi-Newton memory cannot capture the
/// stiffness of fine time grids.
fn newton_polish(mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>, x0: Vec<f64>, max_iter: usize, grad_tol: f64) -> Result<Minimum> {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut damping = 1e-8;
    for it in 0..max_iter {
        if inf_norm(&g) <= grad_tol {
            return Ok(Minimum { x, f, converged: true, iterations: it });
        }
        let mut hess = vec![0.0; n * n];
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let gp = fg(&xp)?.1;
            xp[j] -= 2.0 * h;
            let gm = fg(&xp)?.1;
            for i in 0..n {
                hess[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (hess[i * n + j] + hess[j * n + i]);
                hess[i * n + j] = v;
                hess[j * n + i] = v;
            }
        }
        let scale = (0..n).map(|i| hess[i * n + i].abs()).sum::<f64>() / n as f64;
        let mut moved = false;
        for _ in 0..40 {
            let mut m = hess.clone();
            for i in 0..n {
                m[i * n + i] += damping * scale.max(1e-300);
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            if let Some(step) = cholesky_solve(&mut m, n, rhs) {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                if let Ok((ft, gt)) = fg(&trial) {
                    if ft.is_finite() && (ft < f || (ft <= f && inf_norm(&gt) < inf_norm(&g))) {
                        x = trial;
                        f = ft;
                        g = gt;
                        damping = (damping / 10.0).max(1e-12);
                        moved = true;
                        break;
                    }
                }
            }
            damping *= 10.0;
        }
        if !moved {
            return Ok(Minimum { x, f, converged: inf_norm(&g) <= STALL_GRAD_TOL, iterations: it });
        }
    }
    Ok(Minimum { x, f, converged: inf_norm(&g) <= grad_tol, iterations: max_iter })
}

/// Solves `m x = b` for symmetric positive definite `m` stored row-major.
fn cholesky_solve(m: &mut [f64], n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in j + 1..n {
            let mut v = m[i * n + j];
            for k in 0..j {
                v -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= m[i * n + k] * b[k];
        }
        b[i] /= m[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= m[k * n + i] * b[k];
        }
        b[i] /= m[i * n + i];
    }
    Some(b)
}

fn straight_line(from: Vec2, to: Vec2, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
        })
        .collect()
}

/// Time-reversed relaxation from just below `to` down to `from`, resampled on the
/// path grid. Exact for gradient-like dynamics, and a good start otherwise.
fn reversed_relaxation<D: Dynamics>(d: &D, from: Vec2, to: Vec2, n: usize, t_span: f64) -> Option<Vec<Vec2>> {
    let start = [to[0] + 1e-3 * (from[0] - to[0]), to[1] + 1e-3 * (from[1] - to[1])];
    let times: Vec<f64> = (0..=n).map(|k| t_span * k as f64 / n as f64).collect();
    let ys = ode::integrate(
        |_, y, dy| {
            let mu = d.drift([y[0], y[1]]);
            dy[0] = mu[0];
            dy[1] = mu[1];
        },
        0.0,
        &start,
        &times,
        OdeOptions::default(),
    )
    .ok()?;
    let mut path: Vec<Vec2> = ys.iter().rev().map(|y| [y[0], y[1]]).collect();
    path[0] = from;
    path[n] = to;
    Some(path)
}

/// Minimal action over paths pinned at `from` and `to` on the given time grid.
pub fn minimize_path<D: Dynamics>(d: &D, from: Vec2, to: Vec2, opts: &ActionOptions) -> Result<DiscretePath> {
    opts.validate()?;
    let n = opts.n_steps;
    let dt = opts.t_span / n as f64;
    let fg = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let states = unpack(x, from, to);
        let (f, g) = path_action_gradient(d, &states, dt)?;
        Ok((f, g[1..n].iter().flat_map(|v| v.iter().copied()).collect()))
    };
    let run = |init: Vec<Vec2>| -> Result<Minimum> {
        let first = lbfgs(fg, pack(&init), opts.max_iter, opts.grad_tol)?;
        if first.converged {
            return Ok(first);
        }
        let polished = newton_polish(fg, first.x.clone(), NEWTON_ITER, opts.grad_tol)?;
        Ok(if polished.f <= first.f { polished } else { first })
    };
    let mut best = run(straight_line(from, to, n))?;
    if !best.converged {
        if let Some(init) = reversed_relaxation(d, from, to, n, opts.t_span) {
            let retry = run(init)?;
            if retry.converged || retry.f < best.f {
                best = retry;
            }
        }
    }
    if !best.converged {
        return Err(Error::OptimizerFailure { best: best.f, iterations: best.iterations });
    }
    let states = unpack(&best.x, from, to);
    let (action, regularized) = path_action(d, &states, dt)?;
    Ok(DiscretePath {
        times: (0..=n).map(|k| k as f64 * dt).collect(),
        states: states.into_iter().map(AttractionState::from_array).collect(),
        action,
        regularized,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from_point: FixedPoint,
    pub to_point: FixedPoint,
    pub saddle: FixedPoint,
    /// Minimal activation action; relaxation from the saddle is free.
    pub min_action: f64,
    pub path: DiscretePath,
}

/// Cheapest escape from the stable point `from` towards `to` through the saddle
/// separating them.
pub fn minimize_action(
    agent: &SingleAgent,
    set: &FixedPointSet,
    from: &FixedPoint,
    to: &FixedPoint,
    opts: &ActionOptions,
) -> Result<TransitionSpec> {
    if !from.is_stable() || !to.is_stable() {
        return Err(Error::InvalidConfig("transition endpoints must be stable fixed points".into()));
    }
    let saddle = *set
        .saddle_between(from, to)
        .ok_or_else(|| Error::MissingPeak(format!("saddle between {} and {}", from.role.name(), to.role.name())))?;
    let path = minimize_path(agent, from.state.to_array(), saddle.state.to_array(), opts)?;
    Ok(TransitionSpec { from_point: *from, to_point: *to, saddle, min_action: path.action, path })
}

/// `S(a -> b) - S(b -> a)`; positive when `a` is the more persistent peak.
pub fn action_difference(
    agent: &SingleAgent,
    set: &FixedPointSet,
    a: &FixedPoint,
    b: &FixedPoint,
    opts: &ActionOptions,
) -> Result<f64> {
    Ok(minimize_action(agent, set, a, b, opts)?.min_action - minimize_action(agent, set, b, a, opts)?.min_action)
}

/// Stable peaks of one class with their relative quasi-potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakLandscape {
    pub fixed_points: FixedPointSet,
    /// One entry per stable point, ascending in `delta`; the smallest dominates.
    pub potentials: Vec<(PeakRole, f64)>,
}

impl PeakLandscape {
    pub fn new(agent: &SingleAgent, opts: &ActionOptions) -> Result<Self> {
        let set = agent.fixed_points()?;
        let stable: Vec<FixedPoint> = set.stable().copied().collect();
        let mut potentials = Vec::with_capacity(stable.len());
        let mut w = 0.0;
        for (k, p) in stable.iter().enumerate() {
            if k > 0 {
                w += action_difference(agent, &set, &stable[k - 1], p, opts)?;
            }
            potentials.push((p.role, w));
        }
        Ok(PeakLandscape { fixed_points: set, potentials })
    }

    pub fn dominant(&self) -> PeakRole {
        self.potentials.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0).expect("at least one stable point")
    }

    pub fn potential(&self, role: PeakRole) -> Option<f64> {
        self.potentials.iter().find(|p| p.0 == role).map(|p| p.1)
    }

    pub fn peak(&self, role: PeakRole) -> Option<&FixedPoint> {
        self.fixed_points.stable_with_role(role)
    }
}

fn symmetric_agent(model: &GameModel, learning: LearningParams, x: f64) -> SingleAgent {
    SingleAgent::new(model, Class::One, Aggregates::symmetric(x), learning)
}

fn require_symmetric(model: &GameModel) -> Result<()> {
    if model.params.is_symmetric(1e-12) {
        Ok(())
    } else {
        Err(Error::InvalidConfig("steady-state selection needs the symmetric setup".into()))
    }
}

/// Potential difference `W(a) - W(b)` of two class-1 peaks at symmetric aggregates `x`.
fn role_gap(model: &GameModel, learning: LearningParams, x: f64, a: PeakRole, b: PeakRole, opts: &ActionOptions) -> Result<f64> {
    let land = PeakLandscape::new(&symmetric_agent(model, learning, x), opts)?;
    match (land.potential(a), land.potential(b)) {
        (Some(wa), Some(wb)) => Ok(wa - wb),
        _ => Err(Error::MissingPeak(format!("{}/{} at pbar_1 = {x}", a.name(), b.name()))),
    }
}

/// Symmetric aggregates where peaks `a` and `b` of class 1 are equally persistent.
pub fn coexistence_aggregate(
    model: &GameModel,
    learning: LearningParams,
    roles: (PeakRole, PeakRole),
    bracket: (f64, f64),
    tol: f64,
    opts: &ActionOptions,
) -> Result<Aggregates> {
    require_symmetric(model)?;
    let (a, b) = roles;
    let f = |x: f64| role_gap(model, learning, x, a, b, opts);
    let (mut lo, mut hi) = bracket;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(Aggregates::symmetric(lo));
    }
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::NoSignChange { what: "peak action difference", lo, hi });
    }
    let lo_positive = f_lo > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Aggregates::symmetric(0.5 * (lo + hi)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildePoint {
    pub pbar_1: f64,
    pub tilde_p: f64,
    pub dominant: PeakRole,
    pub n_stable: usize,
}

/// A jump of the dominant peak between neighbouring grid points, refined to the
/// coexistence aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub pbar_1: f64,
    pub below: PeakRole,
    pub above: PeakRole,
    pub tilde_below: f64,
    pub tilde_above: f64,
}

impl SwitchPoint {
    /// The jump in the aggregate response straddles the diagonal.
    pub fn straddles(&self) -> bool {
        let (lo, hi) = if self.tilde_below < self.tilde_above {
            (self.tilde_below, self.tilde_above)
        } else {
            (self.tilde_above, self.tilde_below)
        };
        lo <= self.pbar_1 && self.pbar_1 <= hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeCurve {
    pub points: Vec<TildePoint>,
    pub switches: Vec<SwitchPoint>,
}

fn tilde_point(model: &GameModel, learning: LearningParams, x: f64, opts: &ActionOptions) -> Result<(TildePoint, PeakLandscape)> {
    let land = PeakLandscape::new(&symmetric_agent(model, learning, x), opts)?;
    let dom = land.dominant();
    let delta = land.peak(dom).expect("dominant peak exists").delta;
    let point = TildePoint {
        pbar_1: x,
        tilde_p: fp::softmax_choice(delta, learning.beta),
        dominant: dom,
        n_stable: land.fixed_points.stable_count(),
    };
    Ok((point, land))
}

/// Cells narrower than this are not refined further.
const MIN_CELL_WIDTH: f64 = 1e-4;

fn role_mask(land: &PeakLandscape) -> u8 {
    land.potentials.iter().fold(0, |m, p| {
        m | match p.0 {
            PeakRole::Left => 1,
            PeakRole::Central => 2,
            PeakRole::Right => 4,
        }
    })
}

/// Aggregate response `p~(pbar_1)` of class 1 along the anti-diagonal, taken from the
/// action-dominant peak, with the switches between peaks located by bisection.
/// Cells where the set of stable peaks or the dominant peak changes are refined
/// so that short-lived peaks are not stepped over.
pub fn tilde_p_curve(model: &GameModel, learning: LearningParams, grid: &[f64], opts: &ActionOptions) -> Result<TildeCurve> {
    require_symmetric(model)?;
    let node = |x: f64| -> Result<(TildePoint, u8)> {
        let (p, land) = tilde_point(model, learning, x, opts)?;
        Ok((p, role_mask(&land)))
    };
    let mut coarse = Vec::with_capacity(grid.len());
    for &x in grid {
        coarse.push(node(x)?);
    }
    let mut nodes = Vec::with_capacity(coarse.len());
    for w in coarse.windows(2) {
        nodes.push(w[0]);
        let mut stack = vec![(w[0], w[1])];
        let mut inner = Vec::new();
        while let Some((a, b)) = stack.pop() {
            if (a.0.dominant == b.0.dominant && a.1 == b.1) || b.0.pbar_1 - a.0.pbar_1 < MIN_CELL_WIDTH {
                continue;
            }
            let mid = node(0.5 * (a.0.pbar_1 + b.0.pbar_1))?;
            inner.push(mid);
            stack.push((a, mid));
            stack.push((mid, b));
        }
        inner.sort_by(|a, b| a.0.pbar_1.total_cmp(&b.0.pbar_1));
        nodes.extend(inner);
    }
    nodes.extend(coarse.last().copied());
    let points: Vec<TildePoint> = nodes.iter().map(|n| n.0).collect();

    let mut switches = Vec::new();
    for w in points.windows(2) {
        if w[0].dominant == w[1].dominant {
            continue;
        }
        let roles = (w[0].dominant, w[1].dominant);
        let root = match coexistence_aggregate(model, learning, roles, (w[0].pbar_1, w[1].pbar_1), 1e-7, opts) {
            Ok(a) => a.pbar_1,
            // A peak vanished inside the cell instead: the switch is a saddle-node.
            Err(Error::MissingPeak(_)) | Err(Error::NoSignChange { .. }) => continue,
            Err(e) => return Err(e),
        };
        let land = PeakLandscape::new(&symmetric_agent(model, learning, root), opts)?;
        let (Some(pa), Some(pb)) = (land.peak(roles.0), land.peak(roles.1)) else { continue };
        // The pair must be the most persistent peaks at the switch.
        let level = 0.5 * (land.potential(roles.0).unwrap_or(0.0) + land.potential(roles.1).unwrap_or(0.0));
        if land.potentials.iter().any(|p| p.0 != roles.0 && p.0 != roles.1 && p.1 < level - ACTION_TOL) {
            continue;
        }
        switches.push(SwitchPoint {
            pbar_1: root,
            below: roles.0,
            above: roles.1,
            tilde_below: pa.choice_prob(learning.beta),
            tilde_above: pb.choice_prob(learning.beta),
        });
    }
    Ok(TildeCurve { points, switches })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyStateKind {
    HomogeneousMixed,
    HeterogeneousMixed,
    HeterogeneousPure,
    ThreePeak,
}

impl SteadyStateKind {
    pub fn name(self) -> &'static str {
        match self {
            SteadyStateKind::HomogeneousMixed => "homogeneous_mixed",
            SteadyStateKind::HeterogeneousMixed => "heterogeneous_mixed",
            SteadyStateKind::HeterogeneousPure => "heterogeneous_pure",
            SteadyStateKind::ThreePeak => "three_peak",
        }
    }

    pub fn is_heterogeneous(self) -> bool {
        !matches!(self, SteadyStateKind::HomogeneousMixed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPeak {
    pub role: PeakRole,
    pub delta: f64,
    pub state: AttractionState,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSolution {
    pub aggregates: Aggregates,
    pub kind: SteadyStateKind,
    /// Class-1 peaks; class 2 holds the market-mirrored copies.
    pub peaks: [Vec<WeightedPeak>; 2],
    /// For three coexisting peaks the weights are only fixed up to a line segment;
    /// these are its two end points (class-1 weights, ordered as `peaks[0]`).
    pub weight_family: Option<[Vec<f64>; 2]>,
    /// `|S(a -> b) - S(b -> a)|` between the coexisting peaks.
    pub action_gap: f64,
    /// The mixing peak survives at the solved aggregates.
    pub central_present: bool,
    /// The covariance ridge was active on some minimal path.
    pub regularized: bool,
    /// Relative quasi-potentials of the class-1 stable peaks at the solution.
    pub potentials: Vec<(PeakRole, f64)>,
}

impl SteadyStateSolution {
    /// `W(central) - max(W(left), W(right))` when all three peaks exist: negative
    /// while the mixing peak is among the selected ones, positive once only the
    /// pure peaks are.
    pub fn central_excess(&self) -> Option<f64> {
        let w = |role| self.potentials.iter().find(|p| p.0 == role).map(|p| p.1);
        Some(w(PeakRole::Central)? - w(PeakRole::Left)?.max(w(PeakRole::Right)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyStateOptions {
    pub grid_points: usize,
    pub coexistence_tol: f64,
    pub action: ActionOptions,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions { grid_points: 81, coexistence_tol: 1e-7, action: ActionOptions::default() }
    }
}

fn mirror(p: &WeightedPeak) -> WeightedPeak {
    WeightedPeak {
        role: p.role.mirrored(),
        delta: -p.delta,
        state: AttractionState::new(p.state.a_2, p.state.a_1),
        weight: p.weight,
    }
}

fn weighted(p: &FixedPoint, weight: f64) -> WeightedPeak {
    WeightedPeak { role: p.role, delta: p.delta, state: p.state, weight }
}

fn homogeneous_solution(model: &GameModel, learning: LearningParams, x: f64, opts: &ActionOptions) -> Result<SteadyStateSolution> {
    let (_, land) = tilde_point(model, learning, x, opts)?;
    let dom = land.peak(land.dominant()).expect("dominant peak exists");
    let peak = weighted(dom, 1.0);
    Ok(SteadyStateSolution {
        aggregates: Aggregates::symmetric(x),
        kind: SteadyStateKind::HomogeneousMixed,
        peaks: [vec![peak], vec![mirror(&peak)]],
        weight_family: None,
        action_gap: 0.0,
        central_present: land.peak(PeakRole::Central).is_some(),
        regularized: false,
        potentials: land.potentials.clone(),
    })
}

fn switch_solution(model: &GameModel, learning: LearningParams, sw: &SwitchPoint, opts: &ActionOptions) -> Result<SteadyStateSolution> {
    let x = sw.pbar_1;
    let agent = symmetric_agent(model, learning, x);
    let land = PeakLandscape::new(&agent, opts)?;
    let (pa, pb) = match (land.peak(sw.below), land.peak(sw.above)) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::MissingPeak(format!("switch pair at pbar_1 = {x}"))),
    };
    let (ta, tb) = (pa.choice_prob(learning.beta), pb.choice_prob(learning.beta));
    let omega = if (ta - tb).abs() < 1e-300 { 0.5 } else { (x - tb) / (ta - tb) };
    if !(-1e-9..=1.0 + 1e-9).contains(&omega) {
        return Err(Error::InconsistentSwitch { weight: omega });
    }
    let omega = omega.clamp(0.0, 1.0);
    let wa = land.potential(sw.below).expect("present");
    let wb = land.potential(sw.above).expect("present");
    let set = &land.fixed_points;
    let regularized = minimize_action(&agent, set, &pa, &pb, opts)?.path.regularized
        || minimize_action(&agent, set, &pb, &pa, opts)?.path.regularized;

    let third = land.potentials.iter().find(|p| p.0 != sw.below && p.0 != sw.above).copied();
    let pair_level = 0.5 * (wa + wb);
    let (kind, peaks, family) = match third {
        Some((role, w)) if (w - pair_level).abs() <= ACTION_TOL => {
            // Three equally persistent peaks: weights form a segment.
            let mut all: Vec<FixedPoint> = land.fixed_points.stable().copied().collect();
            all.sort_by(|a, b| a.delta.total_cmp(&b.delta));
            let t: Vec<f64> = all.iter().map(|p| p.choice_prob(learning.beta)).collect();
            let family = three_peak_family(&t, x);
            let mid: Vec<f64> = (0..3).map(|k| 0.5 * (family[0][k] + family[1][k])).collect();
            let peaks: Vec<WeightedPeak> = all.iter().zip(&mid).map(|(p, &w)| weighted(p, w)).collect();
            let _ = role;
            (SteadyStateKind::ThreePeak, peaks, Some(family))
        }
        _ => {
            let kind = if sw.below == PeakRole::Central || sw.above == PeakRole::Central {
                SteadyStateKind::HeterogeneousMixed
            } else {
                SteadyStateKind::HeterogeneousPure
            };
            let mut peaks = vec![weighted(&pa, omega), weighted(&pb, 1.0 - omega)];
            peaks.sort_by(|a, b| a.delta.total_cmp(&b.delta));
            (kind, peaks, None)
        }
    };
    let mirrored = peaks.iter().map(mirror).rev().collect();
    Ok(SteadyStateSolution {
        aggregates: Aggregates::symmetric(x),
        kind,
        peaks: [peaks, mirrored],
        weight_family: family,
        action_gap: (wa - wb).abs(),
        central_present: land.peak(PeakRole::Central).is_some(),
        regularized,
        potentials: land.potentials.clone(),
    })
}

/// End points of `{w >= 0 : sum w = 1, sum w t = x}` for three response values `t`.
fn three_peak_family(t: &[f64], x: f64) -> [Vec<f64>; 2] {
    // Vertices of the constraint polygon lie on edges of the simplex.
    let mut verts: Vec<Vec<f64>> = Vec::new();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (t[i] - t[j]).abs() < 1e-300 {
            continue;
        }
        let wi = (x - t[j]) / (t[i] - t[j]);
        if (-1e-12..=1.0 + 1e-12).contains(&wi) {
            let mut w = vec![0.0; 3];
            w[i] = wi.clamp(0.0, 1.0);
            w[j] = 1.0 - w[i];
            verts.push(w);
        }
    }
    verts.sort_by(|a, b| a[1].total_cmp(&b[1]));
    let first = verts.first().cloned().unwrap_or_else(|| vec![0.0, 1.0, 0.0]);
    let last = verts.last().cloned().unwrap_or_else(|| vec![0.0, 1.0, 0.0]);
    [first, last]
}

/// Symmetric steady state selected by minimal actions. Among several
/// self-consistent candidates the one closest to the symmetric Nash equilibrium
/// is returned.
pub fn solve_steady_state(model: &GameModel, learning: LearningParams, opts: &SteadyStateOptions) -> Result<SteadyStateSolution> {
    Ok(solve_steady_state_with_curve(model, learning, opts)?.0)
}

/// As [`solve_steady_state`], also returning the response curve it was read from.
pub fn solve_steady_state_with_curve(
    model: &GameModel,
    learning: LearningParams,
    opts: &SteadyStateOptions,
) -> Result<(SteadyStateSolution, TildeCurve)> {
    require_symmetric(model)?;
    learning.validate()?;
    opts.action.validate()?;
    let n = opts.grid_points.max(8);
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let curve = tilde_p_curve(model, learning, &grid, &opts.action)?;

    let mut candidates: Vec<SteadyStateSolution> = Vec::new();
    for sw in curve.switches.iter().filter(|s| s.straddles()) {
        candidates.push(switch_solution(model, learning, sw, &opts.action)?);
    }
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.dominant != b.dominant {
            continue;
        }
        let (fa, fb) = (a.tilde_p - a.pbar_1, b.tilde_p - b.pbar_1);
        if (fa > 0.0) == (fb > 0.0) {
            continue;
        }
        let role = a.dominant;
        let g = |x: f64| -> Result<Option<f64>> {
            let (p, _) = tilde_point(model, learning, x, &opts.action)?;
            Ok((p.dominant == role).then_some(p.tilde_p - x))
        };
        let (mut lo, mut hi) = (a.pbar_1, b.pbar_1);
        let mut smooth = true;
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            match g(mid)? {
                Some(v) if (v > 0.0) == (fa > 0.0) => lo = mid,
                Some(_) => hi = mid,
                None => {
                    // The dominant peak changes inside the cell: handled as a switch.
                    smooth = false;
                    break;
                }
            }
        }
        if smooth {
            candidates.push(homogeneous_solution(model, learning, 0.5 * (lo + hi), &opts.action)?);
        }
    }

    let nash_x = nash::symmetric_equilibrium(model, 256).map(|p| p.aggregates.pbar_1).unwrap_or(0.5);
    let best = candidates
        .into_iter()
        .min_by(|a, b| (a.aggregates.pbar_1 - nash_x).abs().total_cmp(&(b.aggregates.pbar_1 - nash_x).abs()))
        .ok_or(Error::NoSignChange { what: "steady-state response", lo: 0.0, hi: 1.0 })?;
    Ok((best, curve))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalAlphas {
    pub beta: f64,
    /// Onset of heterogeneity.
    pub alpha_c: f64,
    /// The mixing subpopulation gives way to two pure ones.
    pub alpha_c_prime: f64,
    /// The mixing fixed point disappears at the solved aggregates.
    pub alpha_c_dprime: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalOptions {
    pub scan_points: usize,
    /// Relative bisection tolerance in alpha.
    pub alpha_tol: f64,
    pub steady: SteadyStateOptions,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions { scan_points: 24, alpha_tol: 1e-5, steady: SteadyStateOptions::default() }
    }
}

/// Characteristic discount values at intensity `beta` for the symmetric setup.
pub fn critical_alphas(model: &GameModel, beta: f64, r: f64, opts: &CriticalOptions) -> Result<CriticalAlphas> {
    require_symmetric(model)?;
    let base = LearningParams::new(r, 1.0, beta)?;
    let nash_point = nash::symmetric_equilibrium(model, 256).ok_or(Error::EmptyWedge { beta })?;
    let table = model.payoffs(Class::One, nash_point.aggregates);
    let lo = fp::threshold_alphas_fixed_point_count(&table, beta)
        .map(|t| 0.5 * t.alpha_1to3)
        .unwrap_or(1e-6)
        .max(1e-12);

    let solve = |alpha: f64| -> Result<Option<SteadyStateSolution>> {
        match solve_steady_state(model, base.with_alpha(alpha), &opts.steady) {
            Ok(s) => Ok(Some(s)),
            Err(Error::OptimizerFailure { .. }) | Err(Error::NoSignChange { .. }) | Err(Error::InconsistentSwitch { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let het = |s: &Option<SteadyStateSolution>| s.as_ref().is_some_and(|s| s.kind.is_heterogeneous());
    let pure = |s: &Option<SteadyStateSolution>| s.as_ref().is_some_and(|s| s.central_excess().map_or(s.kind == SteadyStateKind::HeterogeneousPure, |g| g > 0.0));
    let central_gone = |s: &Option<SteadyStateSolution>| s.as_ref().is_some_and(|s| !s.central_present);

    let n = opts.scan_points.max(4);
    let alphas: Vec<f64> = (0..n).map(|i| (lo.ln() * (1.0 - i as f64 / (n - 1) as f64)).exp()).collect();
    let mut scan = Vec::with_capacity(n);
    for &a in &alphas {
        scan.push(solve(a)?);
    }
    let threshold = |pred: &dyn Fn(&Option<SteadyStateSolution>) -> bool, after: f64| -> Result<Option<f64>> {
        let Some(i) = (1..n).find(|&i| alphas[i] > after && pred(&scan[i]) && !pred(&scan[i - 1])) else {
            return Ok(None);
        };
        let (mut a, mut b) = (alphas[i - 1].max(after).ln(), alphas[i].ln());
        while b - a > opts.alpha_tol {
            let mid = 0.5 * (a + b);
            if pred(&solve(mid.exp())?) {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok(Some((0.5 * (a + b)).exp()))
    };

    let alpha_c = threshold(&het, 0.0)?.ok_or(Error::EmptyWedge { beta })?;
    let alpha_c_prime = threshold(&pure, 0.0)?.ok_or(Error::EmptyWedge { beta })?;
    // Above alpha_c' the solved aggregates sit at the outer-peak coexistence; follow
    // the central fixed point there until it annihilates.
    let alpha_c_dprime = threshold(&central_gone, alpha_c_prime)?;
    Ok(CriticalAlphas { beta, alpha_c, alpha_c_prime, alpha_c_dprime })
}
