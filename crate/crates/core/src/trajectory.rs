//! Trajectory prediction: explicit Runge-Kutta integration, the closed-form
//! longitudinal velocity, and the stop-and-hold rule for braking vehicles.

use nalgebra::DVector;
use thiserror::Error;

use crate::collision::scan::first_contact;
use crate::lti::{AnalyticTrajectory, ControlSignal, Segment, SegmentForm, Term};
use crate::models::LongitudinalParams;

/// Below this speed the longitudinal linearization rate is treated as zero.
pub const DEGENERATE_SPEED: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step must be positive and N at least 1 (h = {h}, N = {n})")]
    Grid { h: f64, n: usize },
    #[error("tableau is inconsistent: {0}")]
    Tableau(String),
    #[error("control undefined at t = {0}")]
    Control(f64),
    #[error("non-finite state at step {index}")]
    NonFinite { index: usize },
    #[error("right-hand side failed at step {index}: {message}")]
    Rhs { index: usize, message: String },
}

/// Explicit Runge-Kutta coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    order: u32,
}

impl ButcherTableau {
    /// `a[i]` holds the `i` coefficients of stage `i` (strictly lower-triangular).
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        order: u32,
    ) -> Result<Self, IntegrationError> {
        let s = b.len();
        if s == 0 || a.len() != s || c.len() != s {
            return Err(IntegrationError::Tableau("stage counts differ".into()));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != i {
                return Err(IntegrationError::Tableau(format!(
                    "row {i} must have {i} entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - c[i]).abs() > 1e-15 {
                return Err(IntegrationError::Tableau(format!(
                    "c[{i}] != sum of a[{i}]"
                )));
            }
        }
        if (b.iter().sum::<f64>() - 1.0).abs() > 1e-15 {
            return Err(IntegrationError::Tableau("weights must sum to 1".into()));
        }
        Ok(Self { a, b, c, order })
    }

    pub fn classic_rk4() -> Self {
        Self {
            a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
            order: 4,
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    fn step<F>(
        &self,
        rhs: &F,
        x: &DVector<f64>,
        u: &DVector<f64>,
        dt: f64,
    ) -> Result<DVector<f64>, String>
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, String>,
    {
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(self.stages());
        for i in 0..self.stages() {
            let mut xi = x.clone();
            for (j, aij) in self.a[i].iter().enumerate() {
                if *aij != 0.0 {
                    xi += &k[j] * (dt * aij);
                }
            }
            k.push(rhs(&xi, u)?);
        }
        let mut out = x.clone();
        for (ki, bi) in k.iter().zip(&self.b) {
            out += ki * (dt * bi);
        }
        Ok(out)
    }
}

/// States on the uniform grid `t = l·h`, `l = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub h: f64,
    pub states: Vec<DVector<f64>>,
}

impl SampledTrajectory {
    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 * self.h
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Linear interpolation between grid states (clamped to the grid).
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let pos = (t / self.h).clamp(0.0, self.steps() as f64);
        let l = (pos.floor() as usize).min(self.steps().saturating_sub(1));
        let frac = pos - l as f64;
        if self.steps() == 0 {
            return self.states[0].clone();
        }
        &self.states[l] * (1.0 - frac) + &self.states[l + 1] * frac
    }
}

/// Integration settings beyond the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOptions {
    pub tableau: ButcherTableau,
    /// Speed component kept non-negative: once it reaches zero under a
    /// decelerating input the whole state is held.
    pub forward_only: Option<usize>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            tableau: ButcherTableau::classic_rk4(),
            forward_only: None,
        }
    }
}

/// Classic RK4 on the grid `l·h`, `l = 0..=N`, splitting steps at control switches.
pub fn rk4_integrate<F, E>(
    rhs: F,
    x0: &DVector<f64>,
    u: &ControlSignal,
    h: f64,
    n: usize,
) -> Result<SampledTrajectory, IntegrationError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, E>,
    E: std::fmt::Display,
{
    integrate(rhs, x0, u, h, n, &IntegrationOptions::default())
}

pub fn integrate<F, E>(
    rhs: F,
    x0: &DVector<f64>,
    u: &ControlSignal,
    h: f64,
    n: usize,
    options: &IntegrationOptions,
) -> Result<SampledTrajectory, IntegrationError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, E>,
    E: std::fmt::Display,
{
    if !(h > 0.0 && h.is_finite()) || n == 0 {
        return Err(IntegrationError::Grid { h, n });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite { index: 0 });
    }
    let f = |x: &DVector<f64>, uu: &DVector<f64>| -> Result<DVector<f64>, String> {
        let d = rhs(x, uu).map_err(|e| e.to_string())?;
        match options.forward_only {
            Some(k) if x[k] <= 0.0 && d[k] <= 0.0 => Ok(DVector::zeros(x.len())),
            _ => Ok(d),
        }
    };
    let switches = u.switch_times();
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut x = x0.clone();
    for l in 0..n {
        let t0 = l as f64 * h;
        let t1 = (l + 1) as f64 * h;
        let mut cuts = vec![t0];
        let eps = 1e-12 * h.max(t1.abs());
        cuts.extend(
            switches
                .iter()
                .copied()
                .filter(|&s| s > t0 + eps && s < t1 - eps),
        );
        cuts.push(t1);
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let uk = u.value_at(mid).ok_or(IntegrationError::Control(mid))?;
            x = options
                .tableau
                .step(&f, &x, uk, w[1] - w[0])
                .map_err(|message| IntegrationError::Rhs { index: l, message })?;
            if let Some(k) = options.forward_only {
                if x[k] < 0.0 {
                    x[k] = 0.0;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { index: l + 1 });
        }
        states.push(x.clone());
    }
    Ok(SampledTrajectory { h, states })
}

/// Linearized longitudinal speed under constant torque and grade:
/// `v(t) = e^{−kt}·v0 + (1 − e^{−kt})·K/k` with `k = ρC_dS·v0/m`.
///
/// For `v0 ≤ 1e-6` the rate vanishes and `v(t) = v0 + K·t`. When `k·horizon` is
/// below 1e-6 but nonzero the second-order Taylor expansion in `k` is used to
/// avoid cancelling `K/k` terms.
pub fn longitudinal_velocity_closed_form(
    v0: f64,
    torque: f64,
    grade: f64,
    params: &LongitudinalParams,
    horizon: f64,
) -> AnalyticTrajectory {
    let k = params.drag_per_mass() * v0;
    let big_k = torque / (params.m * params.r_whl) + 0.5 * params.drag_per_mass() * v0 * v0
        - params.f_roll * params.g * grade.cos()
        - params.g * grade.sin();
    let terms = if v0 <= DEGENERATE_SPEED {
        vec![Term::real(v0, 0, 0.0), Term::real(big_k, 1, 0.0)]
    } else if k * horizon < 1e-6 {
        let slope = big_k - k * v0;
        vec![
            Term::real(v0, 0, 0.0),
            Term::real(slope, 1, 0.0),
            Term::real(-0.5 * k * slope, 2, 0.0),
        ]
    } else {
        vec![
            Term::real(v0 - big_k / k, 0, -k),
            Term::real(big_k / k, 0, 0.0),
        ]
    };
    AnalyticTrajectory::from_terms(vec![terms], horizon)
}

/// First `t ∈ [0, horizon]` at which component `index` reaches zero.
///
/// Affine segments are solved directly; others are scanned at `min(0.01, span/100)`
/// and refined with Brent.
pub fn stopping_time(traj: &AnalyticTrajectory, index: usize, horizon: f64) -> Option<f64> {
    let v0 = traj.component(index, 0.0);
    if v0 <= 0.0 && traj.derivative(0.0)[index] <= 0.0 {
        return Some(0.0);
    }
    for (k, seg) in traj.segments().iter().enumerate() {
        let start = seg.start.max(0.0);
        let last = k + 1 == traj.segments().len();
        let end = if last { horizon } else { seg.end.min(horizon) };
        if end <= start {
            continue;
        }
        if let Some(p) = traj.polynomial(k, index).filter(|p| p.len() <= 2) {
            let (c0, c1) = (p[0], p.get(1).copied().unwrap_or(0.0));
            if c0 <= 0.0 && c1 <= 0.0 && start > 0.0 {
                return Some(start);
            }
            if c1 < 0.0 {
                let t = seg.start - c0 / c1;
                if t >= start && t <= end {
                    return Some(t);
                }
            }
            continue;
        }
        let step = (0.01f64).min((end - start) / 100.0).max(1e-9);
        let g = |t: f64| traj.component(index, t);
        let begin = if start == 0.0 && v0 <= 0.0 {
            1e-9
        } else {
            start
        };
        if let Some(t) = first_contact(&g, begin, end, step) {
            return Some(t);
        }
    }
    None
}

/// Holds the state reached at `t_stop` from then on, with the speed component
/// (if given) set to zero.
pub fn freeze_after_stop(
    traj: &AnalyticTrajectory,
    t_stop: Option<f64>,
    speed_index: Option<usize>,
) -> AnalyticTrajectory {
    let Some(t_stop) = t_stop else {
        return traj.clone();
    };
    let mut held = traj.eval(t_stop);
    if let Some(k) = speed_index {
        held[k] = 0.0;
    }
    let end = traj.end().max(t_stop);
    let mut out = traj.truncated(t_stop);
    if t_stop <= traj.start() {
        return AnalyticTrajectory::constant(&held, t_stop, end);
    }
    let comps = held.iter().map(|&v| vec![Term::real(v, 0, 0.0)]).collect();
    out.push(Segment {
        start: t_stop,
        end,
        form: SegmentForm::Terms(comps),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{solve_lti, LtiSystem};
    use crate::models::Model;
    use nalgebra::DMatrix;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn double_integrator() -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn classic_tableau_invariants() {
        let t = ButcherTableau::classic_rk4();
        // 1/6 + 1/3 + 1/3 + 1/6 rounds to one ulp below 1
        assert!((t.b().iter().sum::<f64>() - 1.0).abs() <= f64::EPSILON);
        for (row, c) in t.a().iter().zip(t.c()) {
            assert_eq!(row.iter().sum::<f64>(), *c);
        }
        assert!(ButcherTableau::new(vec![vec![]], vec![0.5], vec![0.0], 1).is_err());
    }

    #[test]
    fn constant_deceleration_is_exact() {
        let rhs =
            |_: &DVector<f64>, u: &DVector<f64>| -> Result<DVector<f64>, String> { Ok(u.clone()) };
        let traj = rk4_integrate(
            rhs,
            &v(&[20.0]),
            &ControlSignal::constant(v(&[-5.0])),
            0.001,
            4000,
        )
        .unwrap();
        assert!(traj.last()[0].abs() < 1e-11);
    }

    #[test]
    fn straight_bicycle() {
        let m = Model::Bicycle { wheelbase: 2.0 };
        let traj = rk4_integrate(
            |x, u| m.rhs(x, u),
            &v(&[0.0, 0.0, 0.0, 7.0]),
            &ControlSignal::constant(v(&[0.0, 0.0])),
            0.01,
            300,
        )
        .unwrap();
        assert!((traj.last()[0] - 21.0).abs() < 1e-12);
        assert!((traj.interpolate(1.005)[0] - 7.035).abs() < 1e-12);
    }

    #[test]
    fn switch_inside_a_step_is_honored() {
        let rhs =
            |_: &DVector<f64>, u: &DVector<f64>| -> Result<DVector<f64>, String> { Ok(u.clone()) };
        let u = ControlSignal::from_switches(vec![0.0, 0.15], vec![v(&[1.0]), v(&[-1.0])]).unwrap();
        let traj = rk4_integrate(rhs, &v(&[0.0]), &u, 0.1, 3).unwrap();
        assert!((traj.last()[0] - (0.15 - 0.15)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_state_aborts() {
        let rhs = |x: &DVector<f64>, _: &DVector<f64>| -> Result<DVector<f64>, String> {
            Ok(x.map(|v| v * v))
        };
        let err = rk4_integrate(
            rhs,
            &v(&[1.0]),
            &ControlSignal::constant(v(&[0.0])),
            0.5,
            100,
        )
        .unwrap_err();
        assert!(matches!(err, IntegrationError::NonFinite { .. }));
    }

    #[test]
    fn forward_only_holds_at_zero_speed() {
        let m = Model::Bicycle { wheelbase: 2.0 };
        let opts = IntegrationOptions {
            forward_only: Some(3),
            ..Default::default()
        };
        let traj = integrate(
            |x, u| m.rhs(x, u),
            &v(&[0.0, 0.0, 0.0, 20.0]),
            &ControlSignal::constant(v(&[0.0, -5.0])),
            0.01,
            600,
            &opts,
        )
        .unwrap();
        let last = traj.last();
        assert_eq!(last[3], 0.0);
        assert!((last[0] - 40.0).abs() < 1e-9);
    }

    fn table2() -> LongitudinalParams {
        LongitudinalParams::new(1500.0, 1.2, 0.25, 2.0, 0.25, 0.015).unwrap()
    }

    #[test]
    fn longitudinal_equilibrium_is_constant() {
        let p = table2();
        let t_eq = p.equilibrium_torque(9.0, 0.1);
        let traj = longitudinal_velocity_closed_form(9.0, t_eq, 0.1, &p, 10.0);
        for t in [0.0, 3.0, 10.0] {
            assert!((traj.component(0, t) - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn longitudinal_closed_form_tracks_rk4() {
        // on the grade where 2000 N·m is a gentle push; on the flat the speed
        // quadruples and the drag linearization drifts by metres per second
        let p = table2();
        let grade = std::f64::consts::FRAC_PI_6;
        let closed = longitudinal_velocity_closed_form(9.0, 2000.0, grade, &p, 6.0);
        let m = Model::Longitudinal(p);
        let rk = rk4_integrate(
            |x, u| m.rhs(x, u),
            &v(&[9.0]),
            &ControlSignal::constant(v(&[2000.0, grade])),
            0.001,
            6000,
        )
        .unwrap();
        assert!((closed.component(0, 6.0) - rk.last()[0]).abs() < 0.02);
    }

    #[test]
    fn longitudinal_drag_free_limit() {
        let mut p = table2();
        p.c_d = 1e-12;
        let traj = longitudinal_velocity_closed_form(5.0, 1000.0, 0.0, &p, 10.0);
        let expect = 5.0 + (1000.0 / 375.0 - 0.015 * 9.81) * 4.0;
        assert!((traj.component(0, 4.0) - expect).abs() < 1e-6);
        let degenerate = longitudinal_velocity_closed_form(0.0, 1000.0, 0.0, &table2(), 10.0);
        assert!(
            (degenerate.component(0, 4.0) - (1000.0 / 375.0 - 0.015 * 9.81) * 4.0).abs() < 1e-12
        );
    }

    #[test]
    fn stopping_time_examples() {
        let lin = AnalyticTrajectory::from_terms(
            vec![vec![Term::real(20.0, 0, 0.0), Term::real(-5.0, 1, 0.0)]],
            10.0,
        );
        assert_eq!(stopping_time(&lin, 0, 10.0), Some(4.0));
        let constant = AnalyticTrajectory::constant(&v(&[5.0]), 0.0, 10.0);
        assert_eq!(stopping_time(&constant, 0, 10.0), None);

        let sys = double_integrator();
        let u = ControlSignal::from_switches(vec![0.0, 1.0], vec![v(&[0.0]), v(&[-5.0])]).unwrap();
        let traj = solve_lti(&sys, &v(&[0.0, 9.0]), &u, 10.0).unwrap();
        let t = stopping_time(&traj, 1, 10.0).unwrap();
        assert!((t - 2.8).abs() < 1e-12);
    }

    #[test]
    fn stopping_time_on_exponential_speed() {
        let p = table2();
        let traj = longitudinal_velocity_closed_form(5.0, 0.0, 0.0, &p, 60.0);
        let t = stopping_time(&traj, 0, 60.0).unwrap();
        assert!(traj.component(0, t).abs() < 1e-9);
        assert!(traj.component(0, t - 0.01) > 0.0);
    }

    #[test]
    fn freeze_examples() {
        let sys = double_integrator();
        let braking = solve_lti(
            &sys,
            &v(&[0.0, 20.0]),
            &ControlSignal::constant(v(&[-5.0])),
            10.0,
        )
        .unwrap();
        let t_stop = stopping_time(&braking, 1, 10.0);
        let frozen = freeze_after_stop(&braking, t_stop, Some(1));
        for t in [4.0, 6.0, 10.0, 12.0] {
            let x = frozen.eval(t);
            assert!((x[0] - 40.0).abs() < 1e-12 && x[1] == 0.0, "t = {t}: {x}");
        }
        assert!((frozen.component(0, 2.0) - 30.0).abs() < 1e-12);

        let cruising = solve_lti(
            &sys,
            &v(&[0.0, 20.0]),
            &ControlSignal::constant(v(&[0.0])),
            10.0,
        )
        .unwrap();
        assert_eq!(freeze_after_stop(&cruising, None, Some(1)), cruising);

        let u = ControlSignal::from_switches(vec![0.0, 1.0], vec![v(&[0.0]), v(&[-5.0])]).unwrap();
        let delayed = solve_lti(&sys, &v(&[0.0, 20.0]), &u, 10.0).unwrap();
        let frozen = freeze_after_stop(&delayed, stopping_time(&delayed, 1, 10.0), Some(1));
        assert!((frozen.component(0, 7.0) - 60.0).abs() < 1e-12);
    }
}
