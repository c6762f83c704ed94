//! Python bindings: `import ssm`.

use nalgebra::DVector;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ssm_core::collision::{self, Method, RcriFlag};
use ssm_core::frenet::{self, RoadGeometry};
use ssm_core::lti::{solve_lti, AnalyticTrajectory, ControlSignal};
use ssm_core::models::{self, LinearForm, LongitudinalParams};
use ssm_core::scenario::{self, RunMethod, RunRecord};
use ssm_core::trajectory::rk4_integrate;

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn method_slot(name: &str) -> PyResult<Method> {
    match name {
        "analytic" => Ok(Method::Analytic),
        "numeric" => Ok(Method::NumericScan),
        other => Err(PyValueError::new_err(format!(
            "method must be 'analytic' or 'numeric', got {other:?}"
        ))),
    }
}

/// Vehicle model. Build with one of the static constructors.
#[pyclass(frozen, skip_from_py_object, module = "ssm")]
#[derive(Clone)]
struct Model {
    inner: models::Model,
}

fn params(
    m: f64,
    rho: f64,
    c_d: f64,
    s_front: f64,
    r_whl: f64,
    f_roll: f64,
) -> PyResult<LongitudinalParams> {
    LongitudinalParams::new(m, rho, c_d, s_front, r_whl, f_roll).map_err(value_error)
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn constant_velocity() -> Self {
        Self {
            inner: models::Model::ConstantVelocity,
        }
    }

    #[staticmethod]
    fn double_integrator() -> Self {
        Self {
            inner: models::Model::DoubleIntegrator,
        }
    }

    #[staticmethod]
    fn bicycle(wheelbase: f64) -> Self {
        Self {
            inner: models::Model::Bicycle { wheelbase },
        }
    }

    #[staticmethod]
    fn planar(wheelbase: f64) -> Self {
        Self {
            inner: models::Model::Planar { wheelbase },
        }
    }

    #[staticmethod]
    fn lateral_path(wheelbase: f64) -> Self {
        Self {
            inner: models::Model::LateralPath { wheelbase },
        }
    }

    #[staticmethod]
    fn longitudinal(
        m: f64,
        rho: f64,
        c_d: f64,
        s_front: f64,
        r_whl: f64,
        f_roll: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: models::Model::Longitudinal(params(m, rho, c_d, s_front, r_whl, f_roll)?),
        })
    }

    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    fn bicycle_dynamic(
        wheelbase: f64,
        m: f64,
        rho: f64,
        c_d: f64,
        s_front: f64,
        r_whl: f64,
        f_roll: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: models::Model::BicycleDynamic {
                wheelbase,
                params: params(m, rho, c_d, s_front, r_whl, f_roll)?,
            },
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn state_labels(&self) -> Vec<&'static str> {
        self.inner.state_labels().to_vec()
    }

    #[getter]
    fn control_labels(&self) -> Vec<&'static str> {
        self.inner.control_labels().to_vec()
    }

    fn rhs(&self, state: Vec<f64>, control: Vec<f64>) -> PyResult<Vec<f64>> {
        let d = self
            .inner
            .rhs(&vector(state), &vector(control))
            .map_err(value_error)?;
        Ok(d.as_slice().to_vec())
    }

    /// `(A, B)` as row lists.
    fn jacobians(
        &self,
        state: Vec<f64>,
        control: Vec<f64>,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (a, b) = self
            .inner
            .jacobians(&vector(state), &vector(control))
            .map_err(value_error)?;
        let rows = |m: &nalgebra::DMatrix<f64>| {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        Ok((rows(&a), rows(&b)))
    }

    /// Closed-form prediction of the model linearized at `(state, control)`,
    /// holding the control constant.
    fn predict(&self, state: Vec<f64>, control: Vec<f64>, horizon: f64) -> PyResult<Trajectory> {
        let (x, u) = (vector(state), vector(control));
        let sys = self
            .inner
            .linearize(&x, &u, LinearForm::Full)
            .map_err(value_error)?;
        let traj =
            solve_lti(&sys, &x, &ControlSignal::constant(u), horizon).map_err(value_error)?;
        Ok(Trajectory { inner: traj })
    }

    /// Classic RK4 on the full model; returns `n + 1` states.
    fn integrate(
        &self,
        state: Vec<f64>,
        control: Vec<f64>,
        h: f64,
        n: usize,
    ) -> PyResult<Vec<Vec<f64>>> {
        let u = ControlSignal::constant(vector(control));
        let model = self.inner;
        let sampled =
            rk4_integrate(|x, w| model.rhs(x, w), &vector(state), &u, h, n).map_err(value_error)?;
        Ok(sampled
            .states
            .iter()
            .map(|s| s.as_slice().to_vec())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner.name())
    }
}

/// Analytic trajectory on `[0, end]`.
#[pyclass(frozen, module = "ssm")]
struct Trajectory {
    inner: AnalyticTrajectory,
}

#[pymethods]
impl Trajectory {
    fn __call__(&self, t: f64) -> Vec<f64> {
        self.inner.eval(t).as_slice().to_vec()
    }

    #[getter]
    fn end(&self) -> f64 {
        self.inner.end()
    }

    #[getter]
    fn is_polynomial(&self) -> bool {
        self.inner.is_polynomial()
    }
}

/// Road reference path with a constant width.
#[pyclass(frozen, module = "ssm")]
struct Road {
    inner: RoadGeometry,
}

#[pymethods]
impl Road {
    #[staticmethod]
    #[pyo3(signature = (origin, heading, curvature, length, width))]
    fn arc(
        origin: (f64, f64),
        heading: f64,
        curvature: f64,
        length: f64,
        width: f64,
    ) -> PyResult<Self> {
        let inner = RoadGeometry::arc(origin, heading, curvature, length, width);
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }

    /// `(s, e_cg, theta_e)` of a Cartesian pose.
    fn to_path(&self, x: f64, y: f64, theta: f64) -> PyResult<(f64, f64, f64)> {
        frenet::cartesian_to_path(x, y, theta, &self.inner).map_err(value_error)
    }

    /// `(x, y, theta)` of a path pose.
    fn to_cartesian(&self, s: f64, e_cg: f64, theta_e: f64) -> PyResult<(f64, f64, f64)> {
        frenet::path_to_cartesian(s, e_cg, theta_e, &self.inner).map_err(value_error)
    }
}

#[pyfunction]
fn ttc(p_lead: f64, p_follow: f64, v_lead: f64, v_follow: f64, length: f64) -> Option<f64> {
    collision::ttc(p_lead, p_follow, v_lead, v_follow, length).t_c_star
}

/// `(dangerous, delta_p)`.
#[pyfunction]
fn rcri_flag(v_lead: f64, v_follow: f64, gap: f64, d_m: f64, t_d: f64) -> (bool, f64) {
    let (flag, dp) = collision::rcri_flag(v_lead, v_follow, gap, d_m, t_d);
    (flag == RcriFlag::Dangerous, dp)
}

#[pyfunction]
#[pyo3(signature = (v_lead, v_follow, gap, d_m, t_d, horizon = 30.0))]
fn rcri_time_to_collision(
    v_lead: f64,
    v_follow: f64,
    gap: f64,
    d_m: f64,
    t_d: f64,
    horizon: f64,
) -> PyResult<Option<f64>> {
    let r = collision::rcri_time_to_collision(v_lead, v_follow, gap, d_m, t_d, horizon)
        .map_err(value_error)?;
    Ok(r.t_c_star)
}

#[pyfunction]
fn delta_v(m_i: f64, m_j: f64, v_i: f64, v_j: f64) -> (f64, f64) {
    collision::delta_v(m_i, m_j, v_i, v_j)
}

/// Real roots of a polynomial with ascending coefficients.
#[pyfunction]
fn real_roots(coeffs: Vec<f64>) -> Vec<f64> {
    collision::real_roots(&coeffs)
}

/// Parsed scenario.
#[pyclass(frozen, module = "ssm")]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_str(text: &str) -> PyResult<Self> {
        let inner = scenario::load_scenario(text).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let text = scenario::bundled_scenario(name).ok_or_else(|| {
            PyValueError::new_err(format!(
                "unknown bundled scenario {name:?}; known: {}",
                scenario::bundled_names().join(", ")
            ))
        })?;
        Self::from_str(text)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn query_ids(&self) -> Vec<String> {
        self.inner.queries.iter().map(|q| q.id.clone()).collect()
    }

    #[pyo3(signature = (method = "both"))]
    fn run(&self, py: Python<'_>, method: &str) -> PyResult<Record> {
        let method: RunMethod = method.parse().map_err(PyValueError::new_err)?;
        let inner = py
            .detach(|| scenario::run(&self.inner, method))
            .map_err(value_error)?;
        Ok(Record { inner })
    }
}

/// Result of a rolling-horizon run.
#[pyclass(frozen, module = "ssm")]
struct Record {
    inner: RunRecord,
}

#[pymethods]
impl Record {
    /// CSV text of one method slot (`"analytic"` or `"numeric"`).
    fn csv(&self, method: &str) -> PyResult<String> {
        Ok(scenario::render_csv(&self.inner, method_slot(method)?))
    }

    /// `[(T_r, t_c*)]` of a query; `t_c*` is `None` when no collision is predicted.
    fn series(&self, query: &str, method: &str) -> PyResult<Vec<(f64, Option<f64>)>> {
        let slot = method_slot(method)?;
        Ok(self
            .inner
            .series(query)
            .map(|(t, o)| {
                let r = match slot {
                    Method::Analytic => o.analytic.as_ref(),
                    Method::NumericScan => o.numeric.as_ref(),
                };
                (t, r.and_then(|r| r.t_c_star))
            })
            .collect())
    }

    /// `[(T_r, e_tc*)]` where both methods found a collision.
    fn errors(&self, query: &str) -> Vec<(f64, f64)> {
        self.inner
            .series(query)
            .filter_map(|(t, o)| o.e_tc_star.map(|e| (t, e)))
            .collect()
    }
}

/// Runs the bundled acceptance checks: `[(criterion, name, passed, detail)]`.
#[pyfunction]
fn verify(py: Python<'_>) -> PyResult<Vec<(u8, String, bool, String)>> {
    let report = py.detach(scenario::verify_all).map_err(value_error)?;
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.criterion, c.name, c.passed, c.detail))
        .collect())
}

#[pyfunction]
fn schema() -> &'static str {
    scenario::SCHEMA
}

#[pymodule]
fn ssm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<Road>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Record>()?;
    m.add_function(wrap_pyfunction!(ttc, m)?)?;
    m.add_function(wrap_pyfunction!(rcri_flag, m)?)?;
    m.add_function(wrap_pyfunction!(rcri_time_to_collision, m)?)?;
    m.add_function(wrap_pyfunction!(delta_v, m)?)?;
    m.add_function(wrap_pyfunction!(real_roots, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(schema, m)?)?;
    Ok(())
}
