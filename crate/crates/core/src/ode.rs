//! Adaptive Dormand-Prince 5(4) integrator with cubic Hermite sampling.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step relative to `max(1, |t|)` before giving up as stiff.
    pub min_step: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-8, atol: 1e-10, min_step: 1e-12 }
    }
}

impl OdeOptions {
    pub fn with_tolerance(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol * 1e-2, ..Default::default() }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to the last of `sample_times` and returns
/// the state at every sample time (ascending, all `>= t0`).
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], sample_times: &[f64], opts: OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(sample_times.len());
    let Some(&t_end) = sample_times.last() else {
        return Ok(out);
    };
    let mut next = 0;
    while next < sample_times.len() && sample_times[next] <= t0 {
        out.push(y0.to_vec());
        next += 1;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], opts, t_end - t0);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    while next < sample_times.len() {
        let floor = opts.min_step * t.abs().max(1.0);
        if h < floor {
            return Err(Error::Stiff { t, h });
        }
        h = h.min(t_end - t);
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            let (_, rest) = k.split_at_mut(s);
            f(t + C[s] * h, &stage, &mut rest[0]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let err = (0..n)
            .map(|i| {
                let e = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                (e / scale).powi(2)
            })
            .sum::<f64>()
            / n.max(1) as f64;
        let err = err.sqrt();
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let t_new = t + h;
            while next < sample_times.len() && sample_times[next] <= t_new {
                let s = ((sample_times[next] - t) / h).clamp(0.0, 1.0);
                out.push(hermite(&y, &k[0], &y_new, &k[6], h, s));
                next += 1;
            }
            t = t_new;
            y.copy_from_slice(&y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(out)
}

fn initial_step(y: &[f64], dy: &[f64], opts: OdeOptions, span: f64) -> f64 {
    let norm = |v: &[f64]| {
        (v.iter().zip(y).map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2)).sum::<f64>()
            / v.len().max(1) as f64)
            .sqrt()
    };
    let (d0, d1) = (norm(y), norm(dy));
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span.abs().max(f64::MIN_POSITIVE))
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let ys = integrate(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], &times, OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-7, "{t}");
        }
    }

    #[test]
    fn harmonic_oscillator_conserves_energy() {
        let times = [0.0, 3.0, 20.0];
        let ys = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &times,
            OdeOptions::with_tolerance(1e-10),
        )
        .unwrap();
        assert!((ys[2][0] - 20f64.cos()).abs() < 1e-7);
        assert!((ys[1][1] + 3f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn blow_up_is_reported_as_stiff() {
        let r = integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], &[2.0], OdeOptions::default());
        assert!(matches!(r, Err(Error::Stiff { .. })));
    }
}
