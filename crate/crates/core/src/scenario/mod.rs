//! Scenario files, rolling-horizon runs and result emission.

mod bundled;
mod emit;
mod parse;
mod run;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::collision::BoundarySide;
use crate::frenet::RoadGeometry;
use crate::lti::ControlSignal;
use crate::models::{Model, VehicleGeometry};

pub use bundled::{
    bundled_names, bundled_scenario, error_series, experiment3_initial, experiment4_risks,
    threshold_crossing, verify_all, Check, VerifyReport, EXPERIMENT4_EXPECTED,
};
pub use emit::{color_for, emit_csv, emit_snapshot_plotdata, render_csv, render_svg};
pub use parse::{load_scenario, SCHEMA};
pub use run::{
    earliest_collision, run, Evaluation, QueryOutcome, RunMethod, RunRecord, Snapshot,
    SnapshotCircle, SnapshotRisk,
};

/// Version tag every scenario file must carry.
pub const FORMAT_TAG: &str = "ssm-scenario v1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation {
        line: Option<usize>,
        message: String,
    },
    #[error("numeric failure at T_r = {t_r} (query {query}): {message}")]
    Numeric {
        t_r: f64,
        query: String,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Process exit code: 1 validation, 3 numeric failure (acceptance failures use 2).
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Validation { .. } | ScenarioError::Io(_) => 1,
            ScenarioError::Numeric { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    pub duration: f64,
    /// Spacing of evaluation times `T_r`.
    pub period: f64,
    pub horizon: f64,
    pub oracle_h: f64,
    pub oracle_n: usize,
    pub scan_step: f64,
    /// Times at which plot snapshots are captured.
    pub snapshots: Vec<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            duration: 1.0,
            period: 0.1,
            horizon: 20.0,
            oracle_h: 0.001,
            oracle_n: 6000,
            scan_step: 0.01,
            snapshots: Vec::new(),
        }
    }
}

impl SimSettings {
    /// Evaluation times `0, period, …, duration`, rounded to 1e-9 s.
    pub fn evaluation_times(&self) -> Vec<f64> {
        let n = (self.duration / self.period + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| ((k as f64 * self.period) * 1e9).round() / 1e9)
            .collect()
    }

    /// Length of the numeric prediction window, `min(horizon, N·h)`.
    pub fn numeric_horizon(&self) -> f64 {
        self.horizon.min(self.oracle_n as f64 * self.oracle_h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: String,
    pub model: Model,
    /// Initial state in the model's own coordinates.
    pub state: DVector<f64>,
    /// Full control schedule, including grade and curvature channels.
    pub schedule: ControlSignal,
    pub geometry: VehicleGeometry,
}

impl VehicleSpec {
    pub fn uses_path_coordinates(&self) -> bool {
        matches!(
            self.model,
            Model::LateralPath { .. } | Model::PathDynamic { .. }
        )
    }

    pub fn is_one_dimensional(&self) -> bool {
        matches!(
            self.model,
            Model::ConstantVelocity | Model::DoubleIntegrator
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleSpec {
    pub id: String,
    pub center: (f64, f64),
    pub radius: f64,
}

/// Which coordinate the one-dimensional measures use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Longitudinal,
    Lateral,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryKind {
    VehicleVehicle {
        a: usize,
        b: usize,
    },
    VehicleObstacle {
        vehicle: usize,
        obstacle: usize,
    },
    VehicleBoundary {
        vehicle: usize,
        side: BoundarySide,
    },
    /// Constant-speed TTC along one axis; `length` defaults to the sum of the radii.
    /// In both one-dimensional kinds the leader is whichever vehicle is ahead
    /// along the axis at evaluation time.
    Ttc1d {
        a: usize,
        b: usize,
        axis: Axis,
        length: f64,
    },
    /// Braking-scenario collision time along the longitudinal axis.
    Rcri {
        a: usize,
        b: usize,
        d_m: f64,
        t_d: f64,
        length: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub id: String,
    pub kind: QueryKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub road: Option<RoadGeometry>,
    pub vehicles: Vec<VehicleSpec>,
    pub obstacles: Vec<ObstacleSpec>,
    pub queries: Vec<QuerySpec>,
    pub sim: SimSettings,
}

impl Scenario {
    pub fn vehicle_index(&self, id: &str) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }
}
