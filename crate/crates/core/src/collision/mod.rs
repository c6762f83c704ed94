//! Collision conditions and earliest collision times.
//!
//! Every condition is expressed as a clearance `g(t)` that is positive while
//! the parties are apart; `t_c*` is the first time it reaches zero.

pub mod roots;
pub mod scan;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{solve_lti, AnalyticTrajectory, ControlSignal, LtiSystem};
use crate::models::VehicleGeometry;
use crate::trajectory::{freeze_after_stop, stopping_time};

pub use roots::{brent, polynomial_roots, real_roots};
pub use scan::{bracket_scan, first_contact, sampled_first_crossing, sign_change_roots};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("trajectory segment is not polynomial")]
    NotPolynomial,
    #[error("trajectories do not share a segment start ({0} vs {1})")]
    SegmentMismatch(f64, f64),
    #[error("invalid input {name} = {value}")]
    Input { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    NumericScan,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::NumericScan => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmResult {
    /// Sorted non-negative collision times within the horizon.
    pub roots: Vec<f64>,
    pub t_c_star: Option<f64>,
    pub method: Method,
    pub horizon: f64,
    pub delta_v: Option<(f64, f64)>,
}

impl SsmResult {
    pub fn new(mut roots: Vec<f64>, method: Method, horizon: f64) -> Self {
        roots.retain(|t| *t >= 0.0 && *t <= horizon);
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let t_c_star = roots.first().copied();
        Self {
            roots,
            t_c_star,
            method,
            horizon,
            delta_v: None,
        }
    }

    pub fn none(method: Method, horizon: f64) -> Self {
        Self::new(Vec::new(), method, horizon)
    }

    pub fn with_delta_v(mut self, delta_v: Option<(f64, f64)>) -> Self {
        self.delta_v = delta_v;
        self
    }
}

/// One-dimensional time-to-collision with constant speeds.
///
/// `length` is subtracted from the position difference to give the bumper gap.
pub fn ttc(p_lead: f64, p_follow: f64, v_lead: f64, v_follow: f64, length: f64) -> SsmResult {
    let gap = p_lead - p_follow - length;
    let closing = v_follow - v_lead;
    let roots = if gap <= 0.0 {
        vec![0.0]
    } else if closing > 0.0 {
        vec![gap / closing]
    } else {
        Vec::new()
    };
    SsmResult::new(roots, Method::Analytic, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcriFlag {
    Safe,
    Dangerous,
}

/// Stopping-distance comparison: `Δp = S − v_f·t_d − v_f²/(2d) + v_l²/(2d)`,
/// dangerous iff `Δp ≤ 0`. `S` is the bumper gap.
pub fn rcri_flag(v_lead: f64, v_follow: f64, gap: f64, d_m: f64, t_d: f64) -> (RcriFlag, f64) {
    let dp =
        gap - v_follow * t_d - v_follow * v_follow / (2.0 * d_m) + v_lead * v_lead / (2.0 * d_m);
    let flag = if dp <= 0.0 {
        RcriFlag::Dangerous
    } else {
        RcriFlag::Safe
    };
    (flag, dp)
}

fn double_integrator() -> LtiSystem {
    LtiSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DVector::zeros(2),
    )
    .expect("static system")
}

/// Braking trajectories `[p, v]` of the leader (brakes at once from `p = gap`)
/// and the follower (brakes after `t_d` from `p = 0`), both held once stopped.
pub fn rcri_trajectories(
    v_lead: f64,
    v_follow: f64,
    gap: f64,
    d_m: f64,
    t_d: f64,
    horizon: f64,
) -> Result<(AnalyticTrajectory, AnalyticTrajectory), CollisionError> {
    if !(d_m > 0.0) {
        return Err(CollisionError::Input {
            name: "d_m",
            value: d_m,
        });
    }
    if !(t_d >= 0.0) {
        return Err(CollisionError::Input {
            name: "t_d",
            value: t_d,
        });
    }
    if !(horizon > 0.0) {
        return Err(CollisionError::Input {
            name: "horizon",
            value: horizon,
        });
    }
    let sys = double_integrator();
    let brake = DVector::from_element(1, -d_m);
    let lead_u = ControlSignal::constant(brake.clone());
    let follow_u = if t_d > 0.0 {
        ControlSignal::from_switches(vec![0.0, t_d], vec![DVector::zeros(1), brake])
            .expect("valid schedule")
    } else {
        lead_u.clone()
    };
    let build = |x0: DVector<f64>, u: &ControlSignal| {
        let traj = solve_lti(&sys, &x0, u, horizon).expect("valid double integrator");
        let stop = stopping_time(&traj, 1, horizon.max(x0[1] / d_m + t_d + 1.0));
        freeze_after_stop(&traj, stop, Some(1))
    };
    let lead = build(DVector::from_vec(vec![gap, v_lead]), &lead_u);
    let follow = build(DVector::from_vec(vec![0.0, v_follow]), &follow_u);
    Ok((lead, follow))
}

/// `q(s) = p(s + delta)` for ascending coefficients.
pub fn shift_polynomial(p: &[f64], delta: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    let n = q.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            q[j] += delta * q[j + 1];
        }
    }
    q
}

fn poly_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Polynomial of component `i` on the piece starting at `t`, in the local variable `t' − t`.
fn local_polynomial(traj: &AnalyticTrajectory, i: usize, t: f64) -> Option<Vec<f64>> {
    let k = traj
        .segments()
        .partition_point(|s| s.end <= t)
        .min(traj.segments().len() - 1);
    let p = traj.polynomial(k, i)?;
    Some(shift_polynomial(&p, t - traj.segments()[k].start))
}

/// Earliest time the gap between two piecewise-polynomial positions reaches zero,
/// solved exactly piece by piece.
fn piecewise_polynomial_contact(
    lead: &AnalyticTrajectory,
    follow: &AnalyticTrajectory,
    horizon: f64,
) -> Vec<f64> {
    let mut cuts: Vec<f64> = vec![0.0, horizon];
    for traj in [lead, follow] {
        cuts.extend(
            traj.segments()
                .iter()
                .map(|s| s.start)
                .filter(|t| *t > 0.0 && *t < horizon),
        );
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (Some(pl), Some(pf)) = (local_polynomial(lead, 0, a), local_polynomial(follow, 0, a))
        else {
            continue;
        };
        let gap = poly_sub(&pl, &pf);
        let g_start = poly_eval(&gap, 0.0);
        if g_start <= 0.0 {
            roots.push(a);
            continue;
        }
        for r in real_roots(&gap) {
            if r >= 0.0 && r <= b - a {
                roots.push(a + r);
            }
        }
    }
    roots
}

/// Earliest collision when the leader brakes at `d_m` immediately and the
/// follower brakes at `d_m` after the delay `t_d`.
pub fn rcri_time_to_collision(
    v_lead: f64,
    v_follow: f64,
    gap: f64,
    d_m: f64,
    t_d: f64,
    horizon: f64,
) -> Result<SsmResult, CollisionError> {
    let (lead, follow) = rcri_trajectories(v_lead, v_follow, gap, d_m, t_d, horizon)?;
    let roots = piecewise_polynomial_contact(&lead, &follow, horizon);
    let first = roots.iter().copied().fold(f64::INFINITY, f64::min);
    let roots = if first.is_finite() {
        vec![first]
    } else {
        Vec::new()
    };
    Ok(SsmResult::new(roots, Method::Analytic, horizon))
}

/// `(Δx)² + (Δy)² − (r_i + r_j)²` on the first segment of two polynomial
/// trajectories whose components 0 and 1 are `x` and `y`.
pub fn circle_gap_polynomial(
    traj_i: &AnalyticTrajectory,
    traj_j: &AnalyticTrajectory,
    r_i: f64,
    r_j: f64,
) -> Result<Vec<f64>, CollisionError> {
    let (si, sj) = (traj_i.segments()[0].start, traj_j.segments()[0].start);
    if si != sj {
        return Err(CollisionError::SegmentMismatch(si, sj));
    }
    let comp =
        |traj: &AnalyticTrajectory, k| traj.polynomial(0, k).ok_or(CollisionError::NotPolynomial);
    let dx = poly_sub(&comp(traj_i, 0)?, &comp(traj_j, 0)?);
    let dy = poly_sub(&comp(traj_i, 1)?, &comp(traj_j, 1)?);
    let dy2: Vec<f64> = poly_mul(&dy, &dy).iter().map(|v| -v).collect();
    let mut g = poly_sub(&poly_mul(&dx, &dx), &dy2);
    let rr = r_i + r_j;
    g[0] -= rr * rr;
    while g.len() > 1 && *g.last().unwrap() == 0.0 {
        g.pop();
    }
    Ok(g)
}

/// Second party of a circle-overlap condition.
#[derive(Debug, Clone, Copy)]
pub enum CircleTarget<'a> {
    Trajectory(&'a AnalyticTrajectory),
    Point(f64, f64),
}

/// All roots of `|p_i − p_j|² − r²` on `[0, horizon]` when every piece of the
/// trajectories is polynomial in `x` (component 0) and `y` (component 1).
/// Returns `None` if some piece is not polynomial. `0` is included when the
/// circles already overlap.
pub fn piecewise_circle_roots(
    traj: &AnalyticTrajectory,
    other: CircleTarget<'_>,
    r_sum: f64,
    horizon: f64,
) -> Option<Vec<f64>> {
    let mut cuts: Vec<f64> = vec![0.0, horizon];
    let mut trajs = vec![traj];
    if let CircleTarget::Trajectory(t) = other {
        trajs.push(t);
    }
    for t in &trajs {
        cuts.extend(
            t.segments()
                .iter()
                .map(|s| s.start)
                .filter(|s| *s > 0.0 && *s < horizon),
        );
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (xi, yi) = (local_polynomial(traj, 0, a)?, local_polynomial(traj, 1, a)?);
        let (xj, yj) = match other {
            CircleTarget::Trajectory(t) => (local_polynomial(t, 0, a)?, local_polynomial(t, 1, a)?),
            CircleTarget::Point(x, y) => (vec![x], vec![y]),
        };
        let dx = poly_sub(&xi, &xj);
        let dy = poly_sub(&yi, &yj);
        let dy2: Vec<f64> = poly_mul(&dy, &dy).iter().map(|v| -v).collect();
        let mut g = poly_sub(&poly_mul(&dx, &dx), &dy2);
        g[0] -= r_sum * r_sum;
        if a == 0.0 && g[0] <= 0.0 {
            roots.push(0.0);
        }
        for r in real_roots(&g) {
            if r >= 0.0 && r <= b - a {
                roots.push(a + r);
            }
        }
    }
    Some(roots)
}

/// Earliest non-negative time at which a circle-gap polynomial reaches zero within `horizon`.
pub fn polynomial_contact(g: &[f64], horizon: f64) -> SsmResult {
    if poly_eval(g, 0.0) <= 0.0 {
        return SsmResult::new(vec![0.0], Method::Analytic, horizon);
    }
    let roots: Vec<f64> = real_roots(g).into_iter().filter(|r| *r >= 0.0).collect();
    SsmResult::new(roots, Method::Analytic, horizon)
}

/// Road boundary: `Upper` is the left edge at `+w/2`, `Lower` the right edge at `−w/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySide {
    Upper,
    Lower,
}

impl BoundarySide {
    /// `1` for the upper edge, `2` for the lower.
    pub fn index(&self) -> u8 {
        match self {
            BoundarySide::Upper => 1,
            BoundarySide::Lower => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(BoundarySide::Upper),
            2 => Some(BoundarySide::Lower),
            _ => None,
        }
    }
}

/// Signed boundary condition: `e + r − w/2` for the upper edge (negative while
/// inside), `e − r + w/2` for the lower edge (positive while inside).
pub fn boundary_gap<'a, F: Fn(f64) -> f64 + 'a>(
    e_cg: F,
    r: f64,
    w: f64,
    side: BoundarySide,
) -> impl Fn(f64) -> f64 + 'a {
    move |t| match side {
        BoundarySide::Upper => e_cg(t) + r - w / 2.0,
        BoundarySide::Lower => e_cg(t) - r + w / 2.0,
    }
}

/// Boundary clearance oriented so that positive means inside the road.
pub fn boundary_clearance(e_cg: f64, r: f64, w: f64, side: BoundarySide) -> f64 {
    match side {
        BoundarySide::Upper => w / 2.0 - r - e_cg,
        BoundarySide::Lower => e_cg - r + w / 2.0,
    }
}

/// Centers of the bounding circles for a pose `(x, y, θ)`.
pub fn circle_centers(x: f64, y: f64, theta: f64, geom: &VehicleGeometry) -> Vec<(f64, f64, f64)> {
    let (s, c) = theta.sin_cos();
    geom.circles
        .iter()
        .map(|k| (x + k.offset * c, y + k.offset * s, k.radius))
        .collect()
}

/// Minimum over circle pairs of `distance − (r_i + r_j)`.
pub fn vehicle_clearance(
    pose_i: (f64, f64, f64),
    gi: &VehicleGeometry,
    pose_j: (f64, f64, f64),
    gj: &VehicleGeometry,
) -> f64 {
    let ci = circle_centers(pose_i.0, pose_i.1, pose_i.2, gi);
    let cj = circle_centers(pose_j.0, pose_j.1, pose_j.2, gj);
    let mut best = f64::INFINITY;
    for a in &ci {
        for b in &cj {
            best = best.min((a.0 - b.0).hypot(a.1 - b.1) - (a.2 + b.2));
        }
    }
    best
}

pub fn obstacle_clearance(
    pose: (f64, f64, f64),
    geom: &VehicleGeometry,
    center: (f64, f64),
    radius: f64,
) -> f64 {
    circle_centers(pose.0, pose.1, pose.2, geom)
        .iter()
        .map(|c| (c.0 - center.0).hypot(c.1 - center.1) - (c.2 + radius))
        .fold(f64::INFINITY, f64::min)
}

/// Boundary clearance of a multi-circle body in path coordinates; circle
/// lateral offsets are `e + offset·sin θ_e`.
pub fn path_boundary_clearance(
    e_cg: f64,
    theta_e: f64,
    geom: &VehicleGeometry,
    w: f64,
    side: BoundarySide,
) -> f64 {
    geom.circles
        .iter()
        .map(|c| boundary_clearance(e_cg + c.offset * theta_e.sin(), c.radius, w, side))
        .fold(f64::INFINITY, f64::min)
}

/// Earliest crossing in clearances sampled at `t = k·h`; roots are all
/// entries into the unsafe region, interpolated linearly.
pub fn numeric_collision_scan(clearances: &[f64], h: f64) -> SsmResult {
    let horizon = h * clearances.len().saturating_sub(1) as f64;
    let mut roots = Vec::new();
    if let Some(&first) = clearances.first() {
        if first <= 0.0 {
            roots.push(0.0);
        }
    }
    for (k, w) in clearances.windows(2).enumerate() {
        if w[0] > 0.0 && w[1] <= 0.0 {
            roots.push((k as f64 + w[0] / (w[0] - w[1])) * h);
        }
    }
    SsmResult::new(roots, Method::NumericScan, horizon)
}

/// Momentum-weighted velocity changes `(Δv_i, Δv_j)` of a perfectly plastic impact.
pub fn delta_v(m_i: f64, m_j: f64, v_i: f64, v_j: f64) -> (f64, f64) {
    if m_j.is_infinite() {
        return (v_j - v_i, 0.0);
    }
    if m_i.is_infinite() {
        return (0.0, v_i - v_j);
    }
    let impulse = m_i * m_j / (m_i + m_j) * (v_j - v_i);
    (impulse / m_i, -impulse / m_j)
}

/// Planar variant returning the magnitudes of the velocity-change vectors.
pub fn delta_v_planar(m_i: f64, m_j: f64, v_i: (f64, f64), v_j: (f64, f64)) -> (f64, f64) {
    let (xi, xj) = delta_v(m_i, m_j, v_i.0, v_j.0);
    let (yi, yj) = delta_v(m_i, m_j, v_i.1, v_j.1);
    (xi.hypot(yi), xj.hypot(yj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Term;

    #[test]
    fn ttc_examples() {
        assert_eq!(ttc(10.0, 0.0, 0.0, 5.0, 5.0).t_c_star, Some(1.0));
        assert_eq!(ttc(10.0, 0.0, 5.0, 5.0, 5.0).t_c_star, None);
        assert_eq!(ttc(4.0, 0.0, 5.0, 1.0, 5.0).t_c_star, Some(0.0));
        // 20 m apart, 2.6 m of circles, 1 m/s closing
        let r = ttc(20.0, 0.0, 5.0, 6.0, 2.6).t_c_star.unwrap();
        assert!((r - 17.4).abs() < 1e-12);
    }

    #[test]
    fn rcri_flag_examples() {
        let (f, dp) = rcri_flag(20.0, 20.0, 10.0, 5.0, 1.0);
        assert_eq!((f, dp), (RcriFlag::Dangerous, -10.0));
        let (f, dp) = rcri_flag(15.0, 15.0, 3.0, 4.0, 0.0);
        assert_eq!((f, dp), (RcriFlag::Safe, 3.0));
        let (f, dp) = rcri_flag(12.0, 0.0, 3.0, 4.0, 0.7);
        assert_eq!(f, RcriFlag::Safe);
        assert_eq!(dp, 3.0 + 144.0 / 8.0);
    }

    #[test]
    fn rcri_time_examples() {
        let r = rcri_time_to_collision(20.0, 20.0, 10.0, 5.0, 1.0, 20.0).unwrap();
        assert!((r.t_c_star.unwrap() - 2.5).abs() < 1e-12);
        let safe = rcri_time_to_collision(20.0, 10.0, 10.0, 5.0, 0.5, 20.0).unwrap();
        assert!(safe.t_c_star.is_none());
    }

    #[test]
    fn rcri_lead_stopped_case() {
        // lead stops at t = 2 after 10 m, at p = 60; follower 30t − 2.5t² reaches 60 at t = 6 − √12
        let r = rcri_time_to_collision(10.0, 30.0, 50.0, 5.0, 0.0, 20.0).unwrap();
        let expect = 6.0 - 12f64.sqrt();
        assert!((r.t_c_star.unwrap() - expect).abs() < 1e-12);
        assert!(r.t_c_star.unwrap() > 2.0);
    }

    #[test]
    fn shift_matches_direct_evaluation() {
        let p = [1.0, -2.0, 0.5, 3.0];
        let q = shift_polynomial(&p, 0.7);
        for s in [0.0, 0.3, -1.2] {
            assert!((poly_eval(&q, s) - poly_eval(&p, s + 0.7)).abs() < 1e-12);
        }
    }

    fn line(x0: f64, vx: f64, y0: f64) -> AnalyticTrajectory {
        AnalyticTrajectory::from_terms(
            vec![
                vec![Term::real(x0, 0, 0.0), Term::real(vx, 1, 0.0)],
                vec![Term::real(y0, 0, 0.0)],
            ],
            10.0,
        )
    }

    #[test]
    fn circle_gap_examples() {
        let g =
            circle_gap_polynomial(&line(0.0, 0.0, 0.0), &line(5.0, 0.0, 0.0), 1.0, 1.5).unwrap();
        assert_eq!(g, vec![25.0 - 6.25]);
        let g =
            circle_gap_polynomial(&line(0.0, 5.0, 0.0), &line(10.0, 0.0, 0.0), 1.0, 1.0).unwrap();
        let r = polynomial_contact(&g, 10.0);
        assert!((r.t_c_star.unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn circle_gap_uses_difference_of_y() {
        let g =
            circle_gap_polynomial(&line(0.0, 0.0, 3.0), &line(0.0, 0.0, 3.0), 1.0, 1.0).unwrap();
        assert_eq!(g, vec![-4.0]);
    }

    #[test]
    fn boundary_examples() {
        let g = boundary_gap(|_| 0.0, 1.3, 6.0, BoundarySide::Upper);
        assert!((g(0.0) + 1.7).abs() < 1e-15);
        let g = boundary_gap(|_| 1.7, 1.3, 6.0, BoundarySide::Upper);
        assert!(g(1.0).abs() < 1e-15);
        assert!((boundary_clearance(0.0, 1.3, 6.0, BoundarySide::Lower) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn delta_v_examples() {
        assert_eq!(delta_v(1000.0, 1000.0, 10.0, 0.0), (-5.0, 5.0));
        let (a, b) = delta_v(1000.0, f64::INFINITY, 10.0, 0.0);
        assert_eq!((a, b), (-10.0, 0.0));
        let (a, b) = delta_v(1000.0, 1e15, 10.0, 0.0);
        assert!((a + 10.0).abs() < 1e-9 && b.abs() < 1e-9);
    }

    #[test]
    fn numeric_scan_interpolates() {
        let r = numeric_collision_scan(&[2.0, 1.0, -1.0, 0.5, -0.5], 0.1);
        assert_eq!(r.method, Method::NumericScan);
        assert!((r.t_c_star.unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(r.roots.len(), 2);
    }
}
