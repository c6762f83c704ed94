//! Sign-change scans of collision conditions.

use super::roots::{brent, BRENT_TOL};
use super::{Method, SsmResult};

/// `|g|` below this counts as touching.
pub const TOUCH_TOL: f64 = 1e-12;

/// Scans `g` on `[0, horizon]` at `coarse_step` for sign changes (or samples with
/// `|g| < 1e-12`) and refines each bracket with Brent.
pub fn bracket_scan<F: Fn(f64) -> f64>(g: F, horizon: f64, coarse_step: f64) -> SsmResult {
    let roots = sign_change_roots(&g, 0.0, horizon, coarse_step);
    SsmResult::new(roots, Method::Analytic, horizon)
}

/// Every sign change of `g` on `[start, end]`, refined.
pub fn sign_change_roots<F: Fn(f64) -> f64>(g: &F, start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "scan step must be positive");
    let mut roots = Vec::new();
    let mut g_prev = g(start);
    let mut t_prev = start;
    if g_prev.abs() < TOUCH_TOL {
        roots.push(start);
    }
    let steps = ((end - start) / step).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let t = (start + k as f64 * step).min(end);
        let gt = g(t);
        if gt.abs() < TOUCH_TOL {
            if g_prev.abs() >= TOUCH_TOL {
                roots.push(t);
            }
        } else if g_prev.abs() >= TOUCH_TOL && g_prev.signum() != gt.signum() {
            roots.push(brent(g, t_prev, t, g_prev, gt, BRENT_TOL));
        }
        t_prev = t;
        g_prev = gt;
    }
    roots
}

/// First time a clearance `g` (positive = apart) reaches zero on `[start, end]`.
/// Returns `start` when `g(start) ≤ 0`.
pub fn first_contact<F: Fn(f64) -> f64>(g: &F, start: f64, end: f64, step: f64) -> Option<f64> {
    assert!(step > 0.0, "scan step must be positive");
    let mut g_prev = g(start);
    if g_prev <= TOUCH_TOL {
        return Some(start);
    }
    let mut t_prev = start;
    let steps = ((end - start) / step).ceil().max(1.0) as usize;
    for k in 1..=steps {
        let t = (start + k as f64 * step).min(end);
        let gt = g(t);
        if gt <= TOUCH_TOL {
            return Some(if gt.abs() <= TOUCH_TOL {
                t
            } else {
                brent(g, t_prev, t, g_prev, gt, BRENT_TOL)
            });
        }
        t_prev = t;
        g_prev = gt;
    }
    None
}

/// Earliest entry of sampled clearance values into the unsafe region, with
/// linear interpolation inside the step. `values[k]` belongs to `t = k·h`.
pub fn sampled_first_crossing(values: &[f64], h: f64) -> Option<f64> {
    let first = *values.first()?;
    if first <= 0.0 {
        return Some(0.0);
    }
    values.windows(2).enumerate().find_map(|(k, w)| {
        if w[1] <= 0.0 {
            let frac = w[0] / (w[0] - w[1]);
            Some((k as f64 + frac) * h)
        } else {
            None
        }
    })
}
