//! Scenario text parsing and validation.

use nalgebra::DVector;
use toml::{Table, Value};

use super::{
    Axis, ObstacleSpec, QueryKind, QuerySpec, Scenario, ScenarioError, SimSettings, VehicleSpec,
    FORMAT_TAG,
};
use crate::collision::BoundarySide;
use crate::frenet::{path_to_cartesian, ReferencePath, RoadGeometry};
use crate::lti::ControlSignal;
use crate::models::{BoundingCircle, LongitudinalParams, Model, VehicleGeometry};

/// Scenario file reference printed by `ssm schema`.
pub const SCHEMA: &str = r#"ssm-scenario v1
==============

A scenario is a TOML document. Unknown keys are rejected. Angles in radians,
lengths in metres, times in seconds, masses in kg, torques in N·m.

format = "ssm-scenario v1"        required
name   = "<text>"                 required; prefix of the output files

[sim]
duration  = <s>      required, > 0; evaluation times are 0, period, ..., duration
period    = <s>      default 0.1; must be a whole number of oracle steps
horizon   = <s>      default 20
oracle_h  = <s>      default 0.001; RK4 step of the world and of numeric predictions
oracle_n  = <int>    default 6000; numeric predictions cover min(horizon, oracle_n*oracle_h)
scan_step = <s>      default 0.01; coarse step of analytic sign-change scans
snapshots = [<s>..]  default []; evaluation times exported as plot data

[road]               optional; required by path-coordinate models, boundary
                     queries and obstacles given in path coordinates
kind      = "arc" | "polyline"          default "arc"
origin    = [x, y]                      arc only, default [0, 0]
heading   = <rad>                       arc only, default 0
curvature = <1/m>                       arc only, default 0 (straight), left turn > 0
length    = <m>                         arc only, required
vertices  = [[x, y], ...]               polyline only, at least two distinct points
width     = <m>                         required
grade     = <rad>                       default 0

[vehicle.<id>]
model      = "constant_velocity" | "double_integrator" | "bicycle" | "planar"
           | "lateral_path" | "bicycle_dynamic" | "path_dynamic"
state      = [...]      initial state in model coordinates (see table)
controls   = [[...], ...] or [...]    one control vector per phase
switch_times = [0, t1, ...]           default [0]; phase k starts at switch_times[k]
wheelbase  = <m>        required by every planar or path model
radius     = <m>        single bounding circle at the reference point, or
circles    = [[offset, r], ...]       circles offset along the body axis
mass       = <kg>       optional; defaults to longitudinal.m; enables DeltaV
length     = <m>        optional; one-dimensional body length (default: largest radius)

  model               state                    controls
  constant_velocity   [p]                      [v]
  double_integrator   [p, v]                   [a]
  bicycle             [x, y, theta, v]         [delta, a]
  planar              [x, y, theta]            [delta, v]
  lateral_path        [s, e_cg, theta_e]       [delta, v]       (kappa from road)
  bicycle_dynamic     [x, y, theta, v]         [delta, t_whl]   (grade from road)
  path_dynamic        [s, e_cg, theta_e, v]    [delta, t_whl]   (grade, kappa from road)

  One-dimensional vehicles move along the x axis. path models need an arc road.

[vehicle.<id>.longitudinal]           required by bicycle_dynamic and path_dynamic
m, rho, c_d, s_front, r_whl, f_roll   required
g     = <m/s^2>                       default 9.81
grade = <rad>                         overrides the road grade for this vehicle

[obstacle.<id>]
center = [x, y]  or  path = [s, e_cg]    (path needs a road)
radius = <m>

[query.<id>]
kind = "vehicle_vehicle"   vehicles = [a, b]
kind = "vehicle_obstacle"  vehicle = a, obstacle = o
kind = "vehicle_boundary"  vehicle = a, side = "upper" | "lower"
kind = "ttc_1d"            vehicles = [a, b], axis = "longitudinal" | "lateral",
                           length = <m> (default: sum of largest radii)
kind = "rcri"              vehicles = [a, b], d_m = <m/s^2>, t_d = <s>,
                           length = <m> (default: sum of largest radii)

Ids must be unique across vehicles, obstacles and queries.

Outputs of `ssm run`: <name>.analytic.csv and/or <name>.numeric.csv with the
columns T_r,query_id,method,t_c_star,n_roots,e_tc_star, plus
<name>.snapshot_<T_r>.json and .svg for each snapshot time.

Exit codes: 0 success, 1 validation error, 2 acceptance failure, 3 numeric failure.
"#;

/// Finds the 1-based line of a section header or of a key inside a section.
struct Locator<'a> {
    lines: Vec<&'a str>,
}

impl<'a> Locator<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
        }
    }

    fn header(&self, section: &str) -> Option<usize> {
        let want = format!("[{section}]");
        self.lines
            .iter()
            .position(|l| l.trim().replace(' ', "") == want)
            .map(|i| i + 1)
    }

    /// Line of `key = ...` in `section` (empty section = top level).
    fn key(&self, section: &str, key: &str) -> Option<usize> {
        let start = if section.is_empty() {
            0
        } else {
            self.header(section)?
        };
        for (i, line) in self.lines.iter().enumerate().skip(start) {
            let t = line.trim();
            if t.starts_with('[') {
                break;
            }
            if let Some((k, _)) = t.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
        self.header(section)
    }
}

struct Ctx<'a> {
    loc: Locator<'a>,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> ScenarioError {
        let line = match key {
            Some(k) => self.loc.key(section, k),
            None if section.is_empty() => None,
            None => self.loc.header(section),
        };
        ScenarioError::Validation {
            line,
            message: message.into(),
        }
    }

    fn check_keys(
        &self,
        section: &str,
        table: &Table,
        allowed: &[&str],
    ) -> Result<(), ScenarioError> {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let place = if section.is_empty() {
                    "top level".to_string()
                } else {
                    format!("[{section}]")
                };
                return Err(self.err(
                    section,
                    Some(key),
                    format!("unknown key '{key}' in {place}"),
                ));
            }
        }
        Ok(())
    }

    fn number(
        &self,
        section: &str,
        table: &Table,
        key: &str,
    ) -> Result<Option<f64>, ScenarioError> {
        match table.get(key) {
            None => Ok(None),
            Some(v) => as_number(v)
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| {
                    self.err(
                        section,
                        Some(key),
                        format!("[{section}] {key} must be a finite number"),
                    )
                }),
        }
    }

    fn required(&self, section: &str, table: &Table, key: &str) -> Result<f64, ScenarioError> {
        self.number(section, table, key)?.ok_or_else(|| {
            self.err(
                section,
                None,
                format!("[{section}] is missing required key '{key}'"),
            )
        })
    }

    fn positive(
        &self,
        section: &str,
        table: &Table,
        key: &str,
        default: Option<f64>,
    ) -> Result<f64, ScenarioError> {
        let v = match default {
            Some(d) => self.number(section, table, key)?.unwrap_or(d),
            None => self.required(section, table, key)?,
        };
        if v <= 0.0 {
            return Err(self.err(
                section,
                Some(key),
                format!("[{section}] {key} must be > 0, got {v}"),
            ));
        }
        Ok(v)
    }

    fn vector(
        &self,
        section: &str,
        table: &Table,
        key: &str,
    ) -> Result<Option<Vec<f64>>, ScenarioError> {
        let Some(v) = table.get(key) else {
            return Ok(None);
        };
        let bad = || {
            self.err(
                section,
                Some(key),
                format!("[{section}] {key} must be an array of numbers"),
            )
        };
        let arr = v.as_array().ok_or_else(bad)?;
        arr.iter()
            .map(|x| as_number(x).filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .map(Some)
            .ok_or_else(bad)
    }

    fn pair(
        &self,
        section: &str,
        table: &Table,
        key: &str,
    ) -> Result<Option<(f64, f64)>, ScenarioError> {
        match self.vector(section, table, key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(self.err(
                section,
                Some(key),
                format!("[{section}] {key} must have two entries"),
            )),
        }
    }

    fn matrix(
        &self,
        section: &str,
        table: &Table,
        key: &str,
    ) -> Result<Option<Vec<Vec<f64>>>, ScenarioError> {
        let Some(v) = table.get(key) else {
            return Ok(None);
        };
        let bad = || {
            self.err(
                section,
                Some(key),
                format!("[{section}] {key} must be an array of number arrays"),
            )
        };
        let arr = v.as_array().ok_or_else(bad)?;
        arr.iter()
            .map(|row| {
                row.as_array()?
                    .iter()
                    .map(|x| as_number(x).filter(|f| f.is_finite()))
                    .collect::<Option<Vec<f64>>>()
            })
            .collect::<Option<Vec<_>>>()
            .map(Some)
            .ok_or_else(bad)
    }

    fn string<'t>(
        &self,
        section: &str,
        table: &'t Table,
        key: &str,
    ) -> Result<Option<&'t str>, ScenarioError> {
        match table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(
                section,
                Some(key),
                format!("[{section}] {key} must be a string"),
            )),
        }
    }

    fn sub_table<'t>(&self, section: &str, value: &'t Value) -> Result<&'t Table, ScenarioError> {
        value
            .as_table()
            .ok_or_else(|| self.err(section, None, format!("'{section}' must be a table")))
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let root: Table = toml::from_str(text).map_err(|e| ScenarioError::Validation {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let cx = Ctx {
        loc: Locator::new(text),
    };
    cx.check_keys(
        "",
        &root,
        &[
            "format", "name", "sim", "road", "vehicle", "obstacle", "query",
        ],
    )?;
    match cx.string("", &root, "format")? {
        Some(FORMAT_TAG) => {}
        Some(other) => {
            return Err(cx.err(
                "",
                Some("format"),
                format!("unsupported format '{other}', expected '{FORMAT_TAG}'"),
            ))
        }
        None => return Err(cx.err("", None, format!("missing format = \"{FORMAT_TAG}\""))),
    }
    let name = cx
        .string("", &root, "name")?
        .ok_or_else(|| cx.err("", None, "missing scenario name"))?
        .to_string();
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        return Err(cx.err(
            "",
            Some("name"),
            format!("name '{name}' must be non-empty and use [A-Za-z0-9._-]"),
        ));
    }

    let sim_table = root
        .get("sim")
        .map(|v| cx.sub_table("sim", v))
        .transpose()?
        .ok_or_else(|| cx.err("", None, "missing [sim] section"))?;
    let sim = parse_sim(&cx, sim_table)?;

    let road = root
        .get("road")
        .map(|v| cx.sub_table("road", v).and_then(|t| parse_road(&cx, t)))
        .transpose()?;

    let mut ids: Vec<(String, &'static str)> = Vec::new();
    let mut claim =
        |cx: &Ctx, section: &str, id: &str, what: &'static str| -> Result<(), ScenarioError> {
            if let Some((_, prev)) = ids.iter().find(|(i, _)| i == id) {
                return Err(cx.err(
                    section,
                    None,
                    format!("duplicate id '{id}' (already used by a {prev})"),
                ));
            }
            ids.push((id.to_string(), what));
            Ok(())
        };

    let mut vehicles = Vec::new();
    if let Some(v) = root.get("vehicle") {
        for (id, body) in cx.sub_table("vehicle", v)? {
            let section = format!("vehicle.{id}");
            claim(&cx, &section, id, "vehicle")?;
            let table = cx.sub_table(&section, body)?;
            vehicles.push(parse_vehicle(&cx, &section, id, table, road.as_ref())?);
        }
    }
    if vehicles.is_empty() {
        return Err(cx.err("", None, "scenario defines no vehicles"));
    }

    let mut obstacles = Vec::new();
    if let Some(v) = root.get("obstacle") {
        for (id, body) in cx.sub_table("obstacle", v)? {
            let section = format!("obstacle.{id}");
            claim(&cx, &section, id, "obstacle")?;
            let table = cx.sub_table(&section, body)?;
            obstacles.push(parse_obstacle(&cx, &section, id, table, road.as_ref())?);
        }
    }

    let mut queries = Vec::new();
    if let Some(v) = root.get("query") {
        for (id, body) in cx.sub_table("query", v)? {
            let section = format!("query.{id}");
            claim(&cx, &section, id, "query")?;
            let table = cx.sub_table(&section, body)?;
            queries.push(parse_query(
                &cx,
                &section,
                id,
                table,
                &vehicles,
                &obstacles,
                road.as_ref(),
            )?);
        }
    }

    for &t in &sim.snapshots {
        if !(0.0..=sim.duration + 1e-9).contains(&t) {
            return Err(cx.err(
                "sim",
                Some("snapshots"),
                format!("snapshot time {t} outside [0, duration]"),
            ));
        }
    }

    Ok(Scenario {
        name,
        road,
        vehicles,
        obstacles,
        queries,
        sim,
    })
}

fn parse_sim(cx: &Ctx, t: &Table) -> Result<SimSettings, ScenarioError> {
    cx.check_keys(
        "sim",
        t,
        &[
            "duration",
            "period",
            "horizon",
            "oracle_h",
            "oracle_n",
            "scan_step",
            "snapshots",
        ],
    )?;
    let d = SimSettings::default();
    let oracle_n = match t.get("oracle_n") {
        None => d.oracle_n,
        Some(Value::Integer(n)) if *n > 0 => *n as usize,
        Some(_) => {
            return Err(cx.err(
                "sim",
                Some("oracle_n"),
                "[sim] oracle_n must be a positive integer",
            ))
        }
    };
    let sim = SimSettings {
        duration: cx.positive("sim", t, "duration", None)?,
        period: cx.positive("sim", t, "period", Some(d.period))?,
        horizon: cx.positive("sim", t, "horizon", Some(d.horizon))?,
        oracle_h: cx.positive("sim", t, "oracle_h", Some(d.oracle_h))?,
        oracle_n,
        scan_step: cx.positive("sim", t, "scan_step", Some(d.scan_step))?,
        snapshots: cx.vector("sim", t, "snapshots")?.unwrap_or_default(),
    };
    let steps = (sim.period / sim.oracle_h).round();
    if steps < 1.0 || (steps * sim.oracle_h - sim.period).abs() > 1e-9 {
        return Err(cx.err(
            "sim",
            Some("period"),
            format!(
                "period {} is not a whole number of oracle steps {}",
                sim.period, sim.oracle_h
            ),
        ));
    }
    Ok(sim)
}

fn parse_road(cx: &Ctx, t: &Table) -> Result<RoadGeometry, ScenarioError> {
    let kind = cx.string("road", t, "kind")?.unwrap_or("arc");
    let path = match kind {
        "arc" => {
            cx.check_keys(
                "road",
                t,
                &[
                    "kind",
                    "origin",
                    "heading",
                    "curvature",
                    "length",
                    "width",
                    "grade",
                ],
            )?;
            ReferencePath::Arc {
                origin: cx.pair("road", t, "origin")?.unwrap_or((0.0, 0.0)),
                heading: cx.number("road", t, "heading")?.unwrap_or(0.0),
                curvature: cx.number("road", t, "curvature")?.unwrap_or(0.0),
                length: cx.positive("road", t, "length", None)?,
            }
        }
        "polyline" => {
            cx.check_keys("road", t, &["kind", "vertices", "width", "grade"])?;
            let rows = cx
                .matrix("road", t, "vertices")?
                .ok_or_else(|| cx.err("road", None, "[road] polyline needs 'vertices'"))?;
            let vertices = rows
                .iter()
                .map(|r| {
                    if r.len() == 2 {
                        Some((r[0], r[1]))
                    } else {
                        None
                    }
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    cx.err(
                        "road",
                        Some("vertices"),
                        "[road] vertices must be [x, y] pairs",
                    )
                })?;
            ReferencePath::Polyline { vertices }
        }
        other => {
            return Err(cx.err(
                "road",
                Some("kind"),
                format!("unknown road kind '{other}' (expected arc or polyline)"),
            ))
        }
    };
    let road = RoadGeometry {
        path,
        width: cx.positive("road", t, "width", None)?,
        grade: cx.number("road", t, "grade")?.unwrap_or(0.0),
    };
    road.validate()
        .map_err(|e| cx.err("road", None, format!("[road] {e}")))?;
    Ok(road)
}

fn parse_vehicle(
    cx: &Ctx,
    section: &str,
    id: &str,
    t: &Table,
    road: Option<&RoadGeometry>,
) -> Result<VehicleSpec, ScenarioError> {
    cx.check_keys(
        section,
        t,
        &[
            "model",
            "state",
            "controls",
            "switch_times",
            "wheelbase",
            "radius",
            "circles",
            "mass",
            "length",
            "longitudinal",
        ],
    )?;
    let family = cx
        .string(section, t, "model")?
        .ok_or_else(|| cx.err(section, None, format!("vehicle '{id}' is missing 'model'")))?;
    const FAMILIES: [&str; 7] = [
        "constant_velocity",
        "double_integrator",
        "bicycle",
        "planar",
        "lateral_path",
        "bicycle_dynamic",
        "path_dynamic",
    ];
    if !FAMILIES.contains(&family) {
        return Err(cx.err(
            section,
            Some("model"),
            format!(
                "vehicle '{id}': unknown model '{family}' (expected one of {})",
                FAMILIES.join(", ")
            ),
        ));
    }
    let needs_wheelbase = !matches!(family, "constant_velocity" | "double_integrator");
    let wheelbase = if needs_wheelbase {
        cx.positive(section, t, "wheelbase", None)?
    } else {
        cx.positive(section, t, "wheelbase", Some(1.0))?
    };
    let lon_section = format!("{section}.longitudinal");
    let lon = match t.get("longitudinal") {
        None => None,
        Some(v) => {
            let lt = cx.sub_table(&lon_section, v)?;
            cx.check_keys(
                &lon_section,
                lt,
                &[
                    "m", "rho", "c_d", "s_front", "r_whl", "f_roll", "g", "grade",
                ],
            )?;
            let mut p = LongitudinalParams::new(
                cx.required(&lon_section, lt, "m")?,
                cx.required(&lon_section, lt, "rho")?,
                cx.required(&lon_section, lt, "c_d")?,
                cx.required(&lon_section, lt, "s_front")?,
                cx.required(&lon_section, lt, "r_whl")?,
                cx.required(&lon_section, lt, "f_roll")?,
            )
            .map_err(|e| cx.err(&lon_section, None, format!("[{lon_section}] {e}")))?;
            if let Some(g) = cx.number(&lon_section, lt, "g")? {
                p.g = g;
            }
            p.validate()
                .map_err(|e| cx.err(&lon_section, None, format!("[{lon_section}] {e}")))?;
            Some((p, cx.number(&lon_section, lt, "grade")?))
        }
    };
    let require_lon = || {
        lon.ok_or_else(|| {
            cx.err(
                section,
                Some("model"),
                format!("vehicle '{id}': model {family} requires a [{lon_section}] table"),
            )
        })
    };
    let require_arc = |what: &str| -> Result<f64, ScenarioError> {
        match road.map(|r| &r.path) {
            Some(ReferencePath::Arc { curvature, .. }) => Ok(*curvature),
            _ => Err(cx.err(
                section,
                Some("model"),
                format!("vehicle '{id}': model {what} needs an arc [road]"),
            )),
        }
    };
    // Extra control channels appended to the user controls.
    let (model, extra): (Model, Vec<f64>) = match family {
        "constant_velocity" => (Model::ConstantVelocity, vec![]),
        "double_integrator" => (Model::DoubleIntegrator, vec![]),
        "bicycle" => (Model::Bicycle { wheelbase }, vec![]),
        "planar" => (Model::Planar { wheelbase }, vec![]),
        "lateral_path" => (Model::LateralPath { wheelbase }, vec![require_arc(family)?]),
        "bicycle_dynamic" => {
            let (params, grade) = require_lon()?;
            let alpha = grade.unwrap_or(road.map_or(0.0, |r| r.grade));
            (Model::BicycleDynamic { wheelbase, params }, vec![alpha])
        }
        "path_dynamic" => {
            let (params, grade) = require_lon()?;
            let kappa = require_arc(family)?;
            let alpha = grade.unwrap_or(road.map_or(0.0, |r| r.grade));
            (Model::PathDynamic { wheelbase, params }, vec![alpha, kappa])
        }
        _ => unreachable!("family checked above"),
    };
    if lon.is_some()
        && !matches!(
            model,
            Model::BicycleDynamic { .. } | Model::PathDynamic { .. }
        )
    {
        return Err(cx.err(
            &lon_section,
            None,
            format!("vehicle '{id}': model {family} takes no longitudinal parameters"),
        ));
    }

    let state = cx
        .vector(section, t, "state")?
        .ok_or_else(|| cx.err(section, None, format!("vehicle '{id}' is missing 'state'")))?;
    if state.len() != model.state_dim() {
        return Err(cx.err(
            section,
            Some("state"),
            format!(
                "vehicle '{id}': model {family} has state [{}], got {} entries",
                model.state_labels().join(", "),
                state.len()
            ),
        ));
    }
    if let Some(k) = model.speed_index() {
        if state[k] < 0.0 {
            return Err(cx.err(
                section,
                Some("state"),
                format!("vehicle '{id}': speed must be >= 0"),
            ));
        }
    }
    if matches!(model, Model::LateralPath { .. } | Model::PathDynamic { .. }) {
        let road = road.expect("checked above");
        path_to_cartesian(state[0], state[1], state[2], road)
            .map_err(|e| cx.err(section, Some("state"), format!("vehicle '{id}': {e}")))?;
    }

    let user_dim = model.control_dim() - extra.len();
    let rows = match t.get("controls") {
        None => {
            return Err(cx.err(
                section,
                None,
                format!("vehicle '{id}' is missing 'controls'"),
            ))
        }
        Some(Value::Array(a)) if a.iter().all(|x| as_number(x).is_some()) => {
            vec![cx.vector(section, t, "controls")?.unwrap_or_default()]
        }
        Some(_) => cx.matrix(section, t, "controls")?.unwrap_or_default(),
    };
    if rows.is_empty() {
        return Err(cx.err(
            section,
            Some("controls"),
            format!("vehicle '{id}': controls is empty"),
        ));
    }
    let user_labels = &model.control_labels()[..user_dim];
    for row in &rows {
        if row.len() != user_dim {
            return Err(cx.err(
                section,
                Some("controls"),
                format!(
                    "vehicle '{id}': model {family} takes controls [{}], got {} entries",
                    user_labels.join(", "),
                    row.len()
                ),
            ));
        }
    }
    let switches = cx
        .vector(section, t, "switch_times")?
        .unwrap_or_else(|| vec![0.0]);
    if switches.len() != rows.len() || switches.first() != Some(&0.0) {
        return Err(cx.err(
            section,
            Some("switch_times"),
            format!(
                "vehicle '{id}': switch_times must start at 0 and have one entry per control row ({} rows)",
                rows.len()
            ),
        ));
    }
    let values = rows
        .into_iter()
        .map(|mut r| {
            r.extend_from_slice(&extra);
            DVector::from_vec(r)
        })
        .collect();
    let schedule = ControlSignal::from_switches(switches, values).map_err(|e| {
        cx.err(
            section,
            Some("switch_times"),
            format!("vehicle '{id}': {e}"),
        )
    })?;

    let circles = match (
        cx.number(section, t, "radius")?,
        cx.matrix(section, t, "circles")?,
    ) {
        (Some(r), None) => vec![BoundingCircle {
            offset: 0.0,
            radius: r,
        }],
        (None, Some(rows)) => rows
            .iter()
            .map(|r| {
                if r.len() == 2 {
                    Some(BoundingCircle {
                        offset: r[0],
                        radius: r[1],
                    })
                } else {
                    None
                }
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| {
                cx.err(
                    section,
                    Some("circles"),
                    "circles must be [offset, radius] pairs",
                )
            })?,
        (Some(_), Some(_)) => {
            return Err(cx.err(
                section,
                Some("circles"),
                format!("vehicle '{id}': give either radius or circles, not both"),
            ))
        }
        (None, None) => {
            return Err(cx.err(
                section,
                None,
                format!("vehicle '{id}' needs a bounding 'radius' or 'circles'"),
            ))
        }
    };
    let mass = cx.number(section, t, "mass")?.or(lon.map(|(p, _)| p.m));
    let max_r = circles.iter().map(|c| c.radius).fold(0.0, f64::max);
    let geometry = VehicleGeometry {
        wheelbase,
        circles,
        mass,
        length: cx.number(section, t, "length")?.unwrap_or(max_r),
    };
    geometry
        .validate()
        .map_err(|e| cx.err(section, None, format!("vehicle '{id}': {e}")))?;

    Ok(VehicleSpec {
        id: id.to_string(),
        model,
        state: DVector::from_vec(state),
        schedule,
        geometry,
    })
}

fn parse_obstacle(
    cx: &Ctx,
    section: &str,
    id: &str,
    t: &Table,
    road: Option<&RoadGeometry>,
) -> Result<ObstacleSpec, ScenarioError> {
    cx.check_keys(section, t, &["center", "path", "radius"])?;
    let center = match (cx.pair(section, t, "center")?, cx.pair(section, t, "path")?) {
        (Some(c), None) => c,
        (None, Some((s, e))) => {
            let road = road.ok_or_else(|| {
                cx.err(
                    section,
                    Some("path"),
                    format!("obstacle '{id}': path position needs a [road]"),
                )
            })?;
            let (x, y, _) = path_to_cartesian(s, e, 0.0, road)
                .map_err(|err| cx.err(section, Some("path"), format!("obstacle '{id}': {err}")))?;
            (x, y)
        }
        _ => {
            return Err(cx.err(
                section,
                None,
                format!("obstacle '{id}' needs exactly one of 'center' or 'path'"),
            ))
        }
    };
    Ok(ObstacleSpec {
        id: id.to_string(),
        center,
        radius: cx.positive(section, t, "radius", None)?,
    })
}

fn parse_query(
    cx: &Ctx,
    section: &str,
    id: &str,
    t: &Table,
    vehicles: &[VehicleSpec],
    obstacles: &[ObstacleSpec],
    road: Option<&RoadGeometry>,
) -> Result<QuerySpec, ScenarioError> {
    let kind = cx
        .string(section, t, "kind")?
        .ok_or_else(|| cx.err(section, None, format!("query '{id}' is missing 'kind'")))?;
    let vehicle_ref = |key: &str, name: &str| -> Result<usize, ScenarioError> {
        vehicles.iter().position(|v| v.id == name).ok_or_else(|| {
            cx.err(
                section,
                Some(key),
                format!("query '{id}' references unknown vehicle '{name}'"),
            )
        })
    };
    let pair = || -> Result<(usize, usize), ScenarioError> {
        let names: Vec<&str> = t
            .get("vehicles")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if names.len() != 2 {
            return Err(cx.err(
                section,
                Some("vehicles"),
                format!("query '{id}': vehicles must list two vehicle ids"),
            ));
        }
        let (a, b) = (
            vehicle_ref("vehicles", names[0])?,
            vehicle_ref("vehicles", names[1])?,
        );
        if a == b {
            return Err(cx.err(
                section,
                Some("vehicles"),
                format!("query '{id}': vehicles must differ"),
            ));
        }
        Ok((a, b))
    };
    let single = || -> Result<usize, ScenarioError> {
        let name = cx
            .string(section, t, "vehicle")?
            .ok_or_else(|| cx.err(section, None, format!("query '{id}' is missing 'vehicle'")))?;
        vehicle_ref("vehicle", name)
    };
    let default_length =
        |a: usize, b: usize| vehicles[a].geometry.max_radius() + vehicles[b].geometry.max_radius();
    let length = |a: usize, b: usize| -> Result<f64, ScenarioError> {
        let l = cx
            .number(section, t, "length")?
            .unwrap_or_else(|| default_length(a, b));
        if l < 0.0 {
            return Err(cx.err(
                section,
                Some("length"),
                format!("query '{id}': length must be >= 0"),
            ));
        }
        Ok(l)
    };
    let kind = match kind {
        "vehicle_vehicle" => {
            cx.check_keys(section, t, &["kind", "vehicles"])?;
            let (a, b) = pair()?;
            QueryKind::VehicleVehicle { a, b }
        }
        "vehicle_obstacle" => {
            cx.check_keys(section, t, &["kind", "vehicle", "obstacle"])?;
            let vehicle = single()?;
            let name = cx
                .string(section, t, "obstacle")?
                .ok_or_else(|| cx.err(section, None, format!("query '{id}' is missing 'obstacle'")))?;
            let obstacle = obstacles.iter().position(|o| o.id == name).ok_or_else(|| {
                cx.err(section, Some("obstacle"), format!("query '{id}' references unknown obstacle '{name}'"))
            })?;
            QueryKind::VehicleObstacle { vehicle, obstacle }
        }
        "vehicle_boundary" => {
            cx.check_keys(section, t, &["kind", "vehicle", "side"])?;
            if road.is_none() {
                return Err(cx.err(section, Some("kind"), format!("query '{id}': boundary queries need a [road]")));
            }
            let vehicle = single()?;
            if vehicles[vehicle].is_one_dimensional() {
                return Err(cx.err(
                    section,
                    Some("vehicle"),
                    format!("query '{id}': boundary queries need a planar or path vehicle"),
                ));
            }
            let side = match cx.string(section, t, "side")? {
                Some("upper") => BoundarySide::Upper,
                Some("lower") => BoundarySide::Lower,
                _ => {
                    return Err(cx.err(
                        section,
                        Some("side"),
                        format!("query '{id}': side must be \"upper\" or \"lower\""),
                    ))
                }
            };
            QueryKind::VehicleBoundary { vehicle, side }
        }
        "ttc_1d" => {
            cx.check_keys(section, t, &["kind", "vehicles", "axis", "length"])?;
            let (a, b) = pair()?;
            let axis = match cx.string(section, t, "axis")?.unwrap_or("longitudinal") {
                "longitudinal" => Axis::Longitudinal,
                "lateral" => Axis::Lateral,
                other => {
                    return Err(cx.err(
                        section,
                        Some("axis"),
                        format!("query '{id}': unknown axis '{other}' (expected longitudinal or lateral)"),
                    ))
                }
            };
            QueryKind::Ttc1d {
                a,
                b,
                axis,
                length: length(a, b)?,
            }
        }
        "rcri" => {
            cx.check_keys(section, t, &["kind", "vehicles", "d_m", "t_d", "length"])?;
            let (a, b) = pair()?;
            let d_m = cx.positive(section, t, "d_m", None)?;
            let t_d = cx.required(section, t, "t_d")?;
            if t_d < 0.0 {
                return Err(cx.err(section, Some("t_d"), format!("query '{id}': t_d must be >= 0")));
            }
            QueryKind::Rcri {
                a,
                b,
                d_m,
                t_d,
                length: length(a, b)?,
            }
        }
        other => {
            return Err(cx.err(
                section,
                Some("kind"),
                format!(
                    "query '{id}': unknown kind '{other}' (expected vehicle_vehicle, vehicle_obstacle, vehicle_boundary, ttc_1d or rcri)"
                ),
            ))
        }
    };
    Ok(QuerySpec {
        id: id.to_string(),
        kind,
    })
}
