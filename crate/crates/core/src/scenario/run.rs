//! Rolling-horizon evaluation of scenario queries.

use std::cell::{OnceCell, RefCell};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use super::{Axis, QueryKind, QuerySpec, Scenario, ScenarioError, VehicleSpec};
use crate::collision::{
    boundary_clearance, circle_centers, delta_v, delta_v_planar, numeric_collision_scan,
    obstacle_clearance, piecewise_circle_roots, rcri_time_to_collision, rcri_trajectories,
    sign_change_roots, ttc, vehicle_clearance, CircleTarget, Method, SsmResult,
};
use crate::frenet::{boundary_polylines, cartesian_to_path, path_to_cartesian, RoadGeometry};
use crate::lti::{convolve_exponential_input, solve_lti, AnalyticTrajectory, ControlSignal, Term};
use crate::models::{LinearForm, Model};
use crate::trajectory::{
    freeze_after_stop, integrate, longitudinal_velocity_closed_form, stopping_time,
    IntegrationOptions, SampledTrajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Analytic,
    Numeric,
    Both,
}

impl RunMethod {
    pub fn wants_analytic(&self) -> bool {
        matches!(self, RunMethod::Analytic | RunMethod::Both)
    }

    pub fn wants_numeric(&self) -> bool {
        matches!(self, RunMethod::Numeric | RunMethod::Both)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMethod::Analytic => "analytic",
            RunMethod::Numeric => "numeric",
            RunMethod::Both => "both",
        }
    }
}

impl FromStr for RunMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(RunMethod::Analytic),
            "numeric" => Ok(RunMethod::Numeric),
            "both" => Ok(RunMethod::Both),
            other => Err(format!(
                "unknown method '{other}' (expected analytic, numeric or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub analytic: Option<SsmResult>,
    pub numeric: Option<SsmResult>,
    /// `|t_c*(analytic) − t_c*(numeric)|` when both exist.
    pub e_tc_star: Option<f64>,
}

impl QueryOutcome {
    /// Analytic `t_c*` when computed, otherwise the numeric one.
    pub fn best_t_c_star(&self) -> Option<f64> {
        match &self.analytic {
            Some(r) => r.t_c_star,
            None => self.numeric.as_ref().and_then(|r| r.t_c_star),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub t_r: f64,
    pub outcomes: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotCircle {
    pub owner: String,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRisk {
    pub query_id: String,
    pub kind: &'static str,
    /// Element at risk: obstacle id, `upper`/`lower` boundary, or the other vehicle.
    pub target: String,
    pub t_c_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t_r: f64,
    pub horizon: f64,
    pub vehicles: Vec<SnapshotCircle>,
    pub obstacles: Vec<SnapshotCircle>,
    pub upper_boundary: Vec<(f64, f64)>,
    pub lower_boundary: Vec<(f64, f64)>,
    /// Queries with a collision inside the horizon.
    pub risks: Vec<SnapshotRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub method: RunMethod,
    pub horizon: f64,
    pub evaluations: Vec<Evaluation>,
    pub snapshots: Vec<Snapshot>,
}

impl RunRecord {
    pub fn evaluation_at(&self, t_r: f64) -> Option<&Evaluation> {
        self.evaluations.iter().find(|e| (e.t_r - t_r).abs() < 1e-9)
    }

    /// Outcome of query `id` at every evaluation time.
    pub fn series<'a>(&'a self, id: &'a str) -> impl Iterator<Item = (f64, &'a QueryOutcome)> + 'a {
        self.evaluations.iter().filter_map(move |e| {
            e.outcomes
                .iter()
                .find(|o| o.query_id == id)
                .map(|o| (e.t_r, o))
        })
    }
}

fn kind_label(kind: &QueryKind) -> &'static str {
    match kind {
        QueryKind::VehicleVehicle { .. } => "vehicle_vehicle",
        QueryKind::VehicleObstacle { .. } => "vehicle_obstacle",
        QueryKind::VehicleBoundary { .. } => "vehicle_boundary",
        QueryKind::Ttc1d { .. } => "ttc_1d",
        QueryKind::Rcri { .. } => "rcri",
    }
}

/// Planar pose `(x, y, θ)` of a state; one-dimensional vehicles sit on the x axis.
fn pose(
    v: &VehicleSpec,
    x: &DVector<f64>,
    road: Option<&RoadGeometry>,
) -> Result<(f64, f64, f64), String> {
    match v.model {
        Model::ConstantVelocity | Model::DoubleIntegrator | Model::Longitudinal(_) => {
            Ok((x[0], 0.0, 0.0))
        }
        Model::Bicycle { .. } | Model::Planar { .. } | Model::BicycleDynamic { .. } => {
            Ok((x[0], x[1], x[2]))
        }
        Model::LateralPath { .. } | Model::PathDynamic { .. } => {
            let road = road.ok_or("path model without road")?;
            path_to_cartesian(x[0], x[1], x[2], road).map_err(|e| e.to_string())
        }
    }
}

/// `(e_cg, θ_e)` of a state.
fn lateral(v: &VehicleSpec, x: &DVector<f64>, road: &RoadGeometry) -> Result<(f64, f64), String> {
    if v.uses_path_coordinates() {
        return Ok((x[1], x[2]));
    }
    let (px, py, th) = pose(v, x, Some(road))?;
    let (_, e, te) = cartesian_to_path(px, py, th, road).map_err(|e| e.to_string())?;
    Ok((e, te))
}

/// Scalar speed of a state under control `u`.
fn speed(v: &VehicleSpec, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    match v.model.speed_index() {
        Some(k) => x[k],
        None => match v.model {
            Model::ConstantVelocity => u[0],
            _ => u[1],
        },
    }
}

fn planar_velocity(
    v: &VehicleSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    road: Option<&RoadGeometry>,
) -> Result<(f64, f64), String> {
    let (_, _, th) = pose(v, x, road)?;
    let s = speed(v, x, u);
    Ok((s * th.cos(), s * th.sin()))
}

/// Position and rate of change along a one-dimensional axis.
fn axis_kinematics(
    v: &VehicleSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    axis: Axis,
) -> Result<(f64, f64), String> {
    let d = v.model.rhs(x, u).map_err(|e| e.to_string())?;
    let k = match axis {
        Axis::Longitudinal => 0,
        Axis::Lateral => 1,
    };
    if v.is_one_dimensional() {
        return Ok(if k == 0 { (x[0], d[0]) } else { (0.0, 0.0) });
    }
    Ok((x[k], d[k]))
}

fn analytic_prediction(
    v: &VehicleSpec,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    horizon: f64,
) -> Result<AnalyticTrajectory, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let traj = match v.model {
        Model::BicycleDynamic { wheelbase, params } | Model::PathDynamic { wheelbase, params } => {
            let (delta, torque, grade) = (u0[0], u0[1], u0[2]);
            let v0 = x0[3];
            let speed = longitudinal_velocity_closed_form(v0, torque, grade, &params, horizon);
            let v_terms = speed.segments()[0].terms().expect("closed form")[0].clone();
            let pose0 = x0.rows(0, 3).into_owned();
            let (kin, u_lin, inputs) = match v.model {
                Model::BicycleDynamic { .. } => (
                    Model::Planar { wheelbase },
                    DVector::from_vec(vec![delta, v0]),
                    vec![vec![Term::real(delta, 0, 0.0)], v_terms.clone()],
                ),
                _ => {
                    let kappa = u0[3];
                    (
                        Model::LateralPath { wheelbase },
                        DVector::from_vec(vec![delta, v0, kappa]),
                        vec![
                            vec![Term::real(delta, 0, 0.0)],
                            v_terms.clone(),
                            vec![Term::real(kappa, 0, 0.0)],
                        ],
                    )
                }
            };
            let sys = kin
                .linearize(&pose0, &u_lin, LinearForm::Full)
                .map_err(|e| err(&e))?;
            convolve_exponential_input(&sys, &pose0, &inputs, horizon)
                .map_err(|e| err(&e))?
                .with_component(v_terms)
        }
        _ => {
            let sys = v
                .model
                .linearize(x0, u0, LinearForm::Full)
                .map_err(|e| err(&e))?;
            solve_lti(&sys, x0, &ControlSignal::constant(u0.clone()), horizon)
                .map_err(|e| err(&e))?
        }
    };
    Ok(match v.model.speed_index() {
        Some(k) => {
            let stop = stopping_time(&traj, k, horizon);
            freeze_after_stop(&traj, stop, Some(k))
        }
        None => traj,
    })
}

fn numeric_prediction(
    v: &VehicleSpec,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    h: f64,
    n: usize,
) -> Result<SampledTrajectory, String> {
    let options = IntegrationOptions {
        forward_only: v.model.speed_index(),
        ..IntegrationOptions::default()
    };
    let model = v.model;
    integrate(
        |x: &DVector<f64>, u: &DVector<f64>| model.rhs(x, u),
        x0,
        &ControlSignal::constant(u0.clone()),
        h,
        n,
        &options,
    )
    .map_err(|e| e.to_string())
}

/// World state at one evaluation time with lazily built predictions.
struct Frame<'a> {
    scenario: &'a Scenario,
    states: &'a [DVector<f64>],
    controls: Vec<DVector<f64>>,
    analytic: Vec<OnceCell<Result<AnalyticTrajectory, String>>>,
    numeric: Vec<OnceCell<Result<SampledTrajectory, String>>>,
}

impl<'a> Frame<'a> {
    fn new(
        scenario: &'a Scenario,
        t_r: f64,
        states: &'a [DVector<f64>],
    ) -> Result<Self, ScenarioError> {
        let controls = scenario
            .vehicles
            .iter()
            .map(|v| {
                v.schedule
                    .value_at(t_r)
                    .cloned()
                    .ok_or_else(|| ScenarioError::Numeric {
                        t_r,
                        query: v.id.clone(),
                        message: "control schedule does not cover T_r".into(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = scenario.vehicles.len();
        Ok(Self {
            scenario,
            states,
            controls,
            analytic: (0..n).map(|_| OnceCell::new()).collect(),
            numeric: (0..n).map(|_| OnceCell::new()).collect(),
        })
    }

    fn analytic(&self, i: usize) -> Result<&AnalyticTrajectory, String> {
        let v = &self.scenario.vehicles[i];
        self.analytic[i]
            .get_or_init(|| {
                analytic_prediction(
                    v,
                    &self.states[i],
                    &self.controls[i],
                    self.scenario.sim.horizon,
                )
            })
            .as_ref()
            .map_err(|e| format!("vehicle {}: {e}", v.id))
    }

    fn numeric(&self, i: usize) -> Result<&SampledTrajectory, String> {
        let v = &self.scenario.vehicles[i];
        let sim = &self.scenario.sim;
        let n = (sim.numeric_horizon() / sim.oracle_h).round().max(1.0) as usize;
        self.numeric[i]
            .get_or_init(|| {
                numeric_prediction(v, &self.states[i], &self.controls[i], sim.oracle_h, n)
            })
            .as_ref()
            .map_err(|e| format!("vehicle {}: {e}", v.id))
    }
}

/// Safe-positive clearance of a geometric query given each vehicle's state.
fn clearance(
    scenario: &Scenario,
    kind: &QueryKind,
    state: &dyn Fn(usize) -> DVector<f64>,
) -> Result<f64, String> {
    let road = scenario.road.as_ref();
    let vs = &scenario.vehicles;
    match *kind {
        QueryKind::VehicleVehicle { a, b } => Ok(vehicle_clearance(
            pose(&vs[a], &state(a), road)?,
            &vs[a].geometry,
            pose(&vs[b], &state(b), road)?,
            &vs[b].geometry,
        )),
        QueryKind::VehicleObstacle { vehicle, obstacle } => {
            let o = &scenario.obstacles[obstacle];
            Ok(obstacle_clearance(
                pose(&vs[vehicle], &state(vehicle), road)?,
                &vs[vehicle].geometry,
                o.center,
                o.radius,
            ))
        }
        QueryKind::VehicleBoundary { vehicle, side } => {
            let road = road.ok_or("boundary query without road")?;
            let (e, te) = lateral(&vs[vehicle], &state(vehicle), road)?;
            Ok(vs[vehicle]
                .geometry
                .circles
                .iter()
                .map(|c| boundary_clearance(e + c.offset * te.sin(), c.radius, road.width, side))
                .fold(f64::INFINITY, f64::min))
        }
        QueryKind::Ttc1d { .. } | QueryKind::Rcri { .. } => {
            unreachable!("one-dimensional queries have no clearance")
        }
    }
}

/// Trajectories whose components 0 and 1 are Cartesian `x`, `y` polynomials
/// when the vehicle is a single circle on its reference point.
fn polynomial_capable(v: &VehicleSpec) -> bool {
    matches!(v.model, Model::Bicycle { .. } | Model::Planar { .. })
        && v.geometry.circles.len() == 1
        && v.geometry.circles[0].offset == 0.0
}

fn analytic_geometric(frame: &Frame, kind: &QueryKind) -> Result<SsmResult, String> {
    let scenario = frame.scenario;
    let sim = &scenario.sim;
    let vs = &scenario.vehicles;
    let horizon = sim.horizon;
    let closed = match *kind {
        QueryKind::VehicleVehicle { a, b }
            if polynomial_capable(&vs[a]) && polynomial_capable(&vs[b]) =>
        {
            let r = vs[a].geometry.circles[0].radius + vs[b].geometry.circles[0].radius;
            piecewise_circle_roots(
                frame.analytic(a)?,
                CircleTarget::Trajectory(frame.analytic(b)?),
                r,
                horizon,
            )
        }
        QueryKind::VehicleObstacle { vehicle, obstacle } if polynomial_capable(&vs[vehicle]) => {
            let o = &scenario.obstacles[obstacle];
            let r = vs[vehicle].geometry.circles[0].radius + o.radius;
            piecewise_circle_roots(
                frame.analytic(vehicle)?,
                CircleTarget::Point(o.center.0, o.center.1),
                r,
                horizon,
            )
        }
        _ => None,
    };
    if let Some(roots) = closed {
        return Ok(SsmResult::new(roots, Method::Analytic, horizon));
    }
    let involved = involved(kind);
    let trajs = involved
        .iter()
        .map(|&i| frame.analytic(i).map(|t| (i, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let failure: RefCell<Option<String>> = RefCell::new(None);
    let g = |t: f64| {
        let st = |i: usize| {
            trajs
                .iter()
                .find(|(k, _)| *k == i)
                .expect("involved vehicle")
                .1
                .eval(t)
        };
        match clearance(scenario, kind, &st) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut roots = sign_change_roots(&g, 0.0, horizon, sim.scan_step);
    if g(0.0) <= 0.0 {
        roots.push(0.0);
    }
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(SsmResult::new(roots, Method::Analytic, horizon))
}

fn involved(kind: &QueryKind) -> Vec<usize> {
    match *kind {
        QueryKind::VehicleVehicle { a, b }
        | QueryKind::Ttc1d { a, b, .. }
        | QueryKind::Rcri { a, b, .. } => vec![a, b],
        QueryKind::VehicleObstacle { vehicle, .. } | QueryKind::VehicleBoundary { vehicle, .. } => {
            vec![vehicle]
        }
    }
}

fn numeric_geometric(frame: &Frame, kind: &QueryKind) -> Result<SsmResult, String> {
    let involved = involved(kind);
    let trajs = involved
        .iter()
        .map(|&i| frame.numeric(i).map(|t| (i, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let steps = trajs[0].1.steps();
    let mut values = Vec::with_capacity(steps + 1);
    for l in 0..=steps {
        let st = |i: usize| {
            trajs
                .iter()
                .find(|(k, _)| *k == i)
                .expect("involved vehicle")
                .1
                .states[l]
                .clone()
        };
        values.push(clearance(frame.scenario, kind, &st)?);
    }
    Ok(numeric_collision_scan(&values, frame.scenario.sim.oracle_h))
}

/// Planar DeltaV at `t_c*` for vehicle-vehicle and vehicle-obstacle queries.
fn planar_delta_v(
    frame: &Frame,
    kind: &QueryKind,
    t_c: f64,
    state: &dyn Fn(usize, f64) -> Result<DVector<f64>, String>,
) -> Result<Option<(f64, f64)>, String> {
    let vs = &frame.scenario.vehicles;
    let road = frame.scenario.road.as_ref();
    let vel = |i: usize| -> Result<(f64, f64), String> {
        planar_velocity(&vs[i], &state(i, t_c)?, &frame.controls[i], road)
    };
    match *kind {
        QueryKind::VehicleVehicle { a, b } => match (vs[a].geometry.mass, vs[b].geometry.mass) {
            (Some(ma), Some(mb)) => Ok(Some(delta_v_planar(ma, mb, vel(a)?, vel(b)?))),
            _ => Ok(None),
        },
        QueryKind::VehicleObstacle { vehicle, .. } => match vs[vehicle].geometry.mass {
            Some(m) => Ok(Some(delta_v_planar(
                m,
                f64::INFINITY,
                vel(vehicle)?,
                (0.0, 0.0),
            ))),
            None => Ok(None),
        },
        _ => Ok(None),
    }
}

/// Leader first: the vehicle further along the axis.
fn ordered(
    frame: &Frame,
    a: usize,
    b: usize,
    axis: Axis,
) -> Result<((f64, f64), (f64, f64), usize, usize), String> {
    let vs = &frame.scenario.vehicles;
    let ka = axis_kinematics(&vs[a], &frame.states[a], &frame.controls[a], axis)?;
    let kb = axis_kinematics(&vs[b], &frame.states[b], &frame.controls[b], axis)?;
    Ok(if ka.0 >= kb.0 {
        (ka, kb, a, b)
    } else {
        (kb, ka, b, a)
    })
}

fn one_dimensional(frame: &Frame, kind: &QueryKind) -> Result<SsmResult, String> {
    let horizon = frame.scenario.sim.horizon;
    let vs = &frame.scenario.vehicles;
    match *kind {
        QueryKind::Ttc1d { a, b, axis, length } => {
            let ((pl, vl), (pf, vf), _, _) = ordered(frame, a, b, axis)?;
            let r = ttc(pl, pf, vl, vf, length);
            Ok(SsmResult::new(r.roots, Method::Analytic, horizon))
        }
        QueryKind::Rcri {
            a,
            b,
            d_m,
            t_d,
            length,
        } => {
            let ((pl, vl), (pf, vf), lead, follow) = ordered(frame, a, b, Axis::Longitudinal)?;
            let (vl, vf) = (vl.max(0.0), vf.max(0.0));
            let gap = pl - pf - length;
            let r = rcri_time_to_collision(vl, vf, gap, d_m, t_d, horizon)
                .map_err(|e| e.to_string())?;
            let dv = match (r.t_c_star, vs[lead].geometry.mass, vs[follow].geometry.mass) {
                (Some(t), Some(ml), Some(mf)) => {
                    let (lt, ft) = rcri_trajectories(vl, vf, gap, d_m, t_d, horizon)
                        .map_err(|e| e.to_string())?;
                    let (dl, df) = delta_v(ml, mf, lt.component(1, t), ft.component(1, t));
                    Some(if lead == a { (dl, df) } else { (df, dl) })
                }
                _ => None,
            };
            Ok(r.with_delta_v(dv))
        }
        _ => unreachable!("geometric queries handled elsewhere"),
    }
}

fn evaluate(
    frame: &Frame,
    query: &QuerySpec,
    method: RunMethod,
    t_r: f64,
) -> Result<QueryOutcome, ScenarioError> {
    let annotate = |message: String| ScenarioError::Numeric {
        t_r,
        query: query.id.clone(),
        message,
    };
    let geometric = !matches!(query.kind, QueryKind::Ttc1d { .. } | QueryKind::Rcri { .. });
    let mut analytic = None;
    let mut numeric = None;
    if method.wants_analytic() || !geometric {
        let r = if geometric {
            let r = analytic_geometric(frame, &query.kind).map_err(annotate)?;
            let dv = match r.t_c_star {
                Some(t) => planar_delta_v(frame, &query.kind, t, &|i, t| {
                    frame.analytic(i).map(|tr| tr.eval(t))
                })
                .map_err(annotate)?,
                None => None,
            };
            r.with_delta_v(dv)
        } else {
            one_dimensional(frame, &query.kind).map_err(annotate)?
        };
        analytic = Some(r);
    }
    if method.wants_numeric() && geometric {
        let r = numeric_geometric(frame, &query.kind).map_err(annotate)?;
        let dv = match r.t_c_star {
            Some(t) => planar_delta_v(frame, &query.kind, t, &|i, t| {
                frame.numeric(i).map(|tr| tr.interpolate(t))
            })
            .map_err(annotate)?,
            None => None,
        };
        numeric = Some(r.with_delta_v(dv));
    }
    let e_tc_star = match (&analytic, &numeric) {
        (Some(a), Some(n)) => match (a.t_c_star, n.t_c_star) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        },
        _ => None,
    };
    Ok(QueryOutcome {
        query_id: query.id.clone(),
        analytic,
        numeric,
        e_tc_star,
    })
}

/// Earliest collision of one query from the world state `states` at `t_r`.
///
/// Closed forms are used where available (TTC, RCRI, polynomial circle gaps),
/// otherwise the analytic trajectories are scanned. The numeric route is RK4
/// on the nonlinear models with the control frozen at its `t_r` value.
pub fn earliest_collision(
    scenario: &Scenario,
    t_r: f64,
    states: &[DVector<f64>],
    query: &QuerySpec,
    method: RunMethod,
) -> Result<QueryOutcome, ScenarioError> {
    let frame = Frame::new(scenario, t_r, states)?;
    evaluate(&frame, query, method, t_r)
}

fn risk_target(scenario: &Scenario, kind: &QueryKind) -> String {
    match *kind {
        QueryKind::VehicleVehicle { b, .. }
        | QueryKind::Ttc1d { b, .. }
        | QueryKind::Rcri { b, .. } => scenario.vehicles[b].id.clone(),
        QueryKind::VehicleObstacle { obstacle, .. } => scenario.obstacles[obstacle].id.clone(),
        QueryKind::VehicleBoundary { side, .. } => match side {
            crate::collision::BoundarySide::Upper => "upper".into(),
            crate::collision::BoundarySide::Lower => "lower".into(),
        },
    }
}

fn snapshot(frame: &Frame, t_r: f64, outcomes: &[QueryOutcome]) -> Result<Snapshot, ScenarioError> {
    let scenario = frame.scenario;
    let road = scenario.road.as_ref();
    let mut vehicles = Vec::new();
    for (i, v) in scenario.vehicles.iter().enumerate() {
        let (x, y, th) =
            pose(v, &frame.states[i], road).map_err(|message| ScenarioError::Numeric {
                t_r,
                query: v.id.clone(),
                message,
            })?;
        for (cx, cy, r) in circle_centers(x, y, th, &v.geometry) {
            vehicles.push(SnapshotCircle {
                owner: v.id.clone(),
                x: cx,
                y: cy,
                radius: r,
            });
        }
    }
    let obstacles = scenario
        .obstacles
        .iter()
        .map(|o| SnapshotCircle {
            owner: o.id.clone(),
            x: o.center.0,
            y: o.center.1,
            radius: o.radius,
        })
        .collect();
    let (upper_boundary, lower_boundary) =
        road.map(|r| boundary_polylines(r, 1.0)).unwrap_or_default();
    let risks = scenario
        .queries
        .iter()
        .zip(outcomes)
        .filter_map(|(q, o)| {
            o.best_t_c_star().map(|t| SnapshotRisk {
                query_id: q.id.clone(),
                kind: kind_label(&q.kind),
                target: risk_target(scenario, &q.kind),
                t_c_star: t,
            })
        })
        .collect();
    Ok(Snapshot {
        t_r,
        horizon: scenario.sim.horizon,
        vehicles,
        obstacles,
        upper_boundary,
        lower_boundary,
        risks,
    })
}

/// Advances the world with RK4 at the oracle step and evaluates every query at
/// each evaluation time.
pub fn run(scenario: &Scenario, method: RunMethod) -> Result<RunRecord, ScenarioError> {
    let sim = &scenario.sim;
    let steps_per_period = (sim.period / sim.oracle_h).round() as usize;
    let mut states: Vec<DVector<f64>> = scenario.vehicles.iter().map(|v| v.state.clone()).collect();
    let mut evaluations = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = sim.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    let times = sim.evaluation_times();
    for (k, &t_r) in times.iter().enumerate() {
        let frame = Frame::new(scenario, t_r, &states)?;
        let outcomes = scenario
            .queries
            .iter()
            .map(|q| evaluate(&frame, q, method, t_r))
            .collect::<Result<Vec<_>, _>>()?;
        while pending.first().is_some_and(|&s| s <= t_r + 1e-9) {
            pending.remove(0);
            snapshots.push(snapshot(&frame, t_r, &outcomes)?);
        }
        evaluations.push(Evaluation { t_r, outcomes });
        if k + 1 < times.len() {
            states = advance(scenario, &states, t_r, steps_per_period)?;
        }
    }
    Ok(RunRecord {
        scenario: scenario.name.clone(),
        method,
        horizon: sim.horizon,
        evaluations,
        snapshots,
    })
}

fn advance(
    scenario: &Scenario,
    states: &[DVector<f64>],
    t_r: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>, ScenarioError> {
    scenario
        .vehicles
        .iter()
        .zip(states)
        .map(|(v, x)| {
            let fail = |message: String| ScenarioError::Numeric {
                t_r,
                query: format!("world:{}", v.id),
                message,
            };
            let u = v
                .schedule
                .rebased(t_r)
                .ok_or_else(|| fail("control schedule does not cover T_r".into()))?;
            let options = IntegrationOptions {
                forward_only: v.model.speed_index(),
                ..IntegrationOptions::default()
            };
            let model = v.model;
            let traj = integrate(
                |x: &DVector<f64>, u: &DVector<f64>| model.rhs(x, u),
                x,
                &u,
                scenario.sim.oracle_h,
                steps,
                &options,
            )
            .map_err(|e| fail(e.to_string()))?;
            Ok(traj.last().clone())
        })
        .collect()
}
