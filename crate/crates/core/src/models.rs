//! Vehicle movement models and their Taylor linearizations.
//!
//! | model | state | control |
//! |---|---|---|
//! | constant velocity | `[p]` | `[v]` |
//! | double integrator | `[p, v]` | `[a]` |
//! | kinematic bicycle | `[x, y, θ, v]` | `[δ, a]` |
//! | longitudinal | `[v]` | `[T_whl, α]` |
//! | lateral path | `[s, e_cg, θ_e]` | `[δ, v, κ]` |
//! | planar | `[x, y, θ]` | `[δ, v]` |
//! | bicycle + longitudinal | `[x, y, θ, v]` | `[δ, T_whl, α]` |
//! | path + longitudinal | `[s, e_cg, θ_e, v]` | `[δ, T_whl, α, κ]` |
//!
//! The last three are compositions used when speed comes from the force
//! balance instead of a prescribed acceleration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{LtiError, LtiSystem};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;
/// Smallest admissible `|1 − e_cg·κ|`.
pub const PATH_SINGULARITY_GUARD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what} has {got} entries, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("steering angle {0} rad is outside (-pi/2, pi/2)")]
    Steering(f64),
    #[error("vehicle at the curvature center: 1 - e_cg*kappa = {0}")]
    PathSingularity(f64),
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Physical parameters of the longitudinal force balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalParams {
    pub m: f64,
    pub rho: f64,
    pub c_d: f64,
    pub s_front: f64,
    pub r_whl: f64,
    pub f_roll: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl LongitudinalParams {
    pub fn new(
        m: f64,
        rho: f64,
        c_d: f64,
        s_front: f64,
        r_whl: f64,
        f_roll: f64,
    ) -> Result<Self, ModelError> {
        let p = Self {
            m,
            rho,
            c_d,
            s_front,
            r_whl,
            f_roll,
            g: GRAVITY,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("m", self.m),
            ("rho", self.rho),
            ("c_d", self.c_d),
            ("s_front", self.s_front),
            ("r_whl", self.r_whl),
            ("f_roll", self.f_roll),
            ("g", self.g),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Parameter { name, value });
            }
        }
        Ok(())
    }

    /// `ρ·C_d·S / m`; the linearized decay rate is this times `v0`.
    pub fn drag_per_mass(&self) -> f64 {
        self.rho * self.c_d * self.s_front / self.m
    }

    /// Acceleration from the force balance.
    pub fn acceleration(&self, v: f64, torque: f64, grade: f64) -> f64 {
        torque / (self.m * self.r_whl)
            - 0.5 * self.drag_per_mass() * v * v
            - self.f_roll * grade.cos() * self.g
            - self.g * grade.sin()
    }

    /// Wheel torque that holds speed `v` on grade `α`.
    pub fn equilibrium_torque(&self, v: f64, grade: f64) -> f64 {
        self.r_whl
            * (0.5 * self.rho * self.c_d * self.s_front * v * v
                + self.m * self.g * (self.f_roll * grade.cos() + grade.sin()))
    }
}

/// A bounding circle centered `offset` metres ahead of the reference point along the body axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingCircle {
    pub offset: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub circles: Vec<BoundingCircle>,
    pub mass: Option<f64>,
    /// Body length used by the one-dimensional measures.
    pub length: f64,
}

impl VehicleGeometry {
    /// Single centered circle of radius `r`; the 1-D length is taken as `r`.
    pub fn single_circle(wheelbase: f64, radius: f64) -> Self {
        Self {
            wheelbase,
            circles: vec![BoundingCircle {
                offset: 0.0,
                radius,
            }],
            mass: None,
            length: radius,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.wheelbase.is_finite() && self.wheelbase > 0.0) {
            return Err(ModelError::Parameter {
                name: "wheelbase",
                value: self.wheelbase,
            });
        }
        if self.circles.is_empty() {
            return Err(ModelError::Parameter {
                name: "circles",
                value: 0.0,
            });
        }
        for c in &self.circles {
            if !(c.radius.is_finite() && c.radius > 0.0) {
                return Err(ModelError::Parameter {
                    name: "radius",
                    value: c.radius,
                });
            }
            if !c.offset.is_finite() {
                return Err(ModelError::Parameter {
                    name: "offset",
                    value: c.offset,
                });
            }
        }
        if let Some(m) = self.mass {
            if !(m.is_finite() && m > 0.0) {
                return Err(ModelError::Parameter {
                    name: "mass",
                    value: m,
                });
            }
        }
        Ok(())
    }

    /// Largest circle radius.
    pub fn max_radius(&self) -> f64 {
        self.circles.iter().map(|c| c.radius).fold(0.0, f64::max)
    }
}

/// Which linear form [`Model::linearize`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearForm {
    /// `A`, `B` and `C` as Jacobians plus remainder.
    #[default]
    Full,
    /// `B = 0` with `B·u0` folded into `C`; valid while the control stays at `u0`.
    FrozenControl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    ConstantVelocity,
    DoubleIntegrator,
    Bicycle {
        wheelbase: f64,
    },
    Longitudinal(LongitudinalParams),
    LateralPath {
        wheelbase: f64,
    },
    Planar {
        wheelbase: f64,
    },
    BicycleDynamic {
        wheelbase: f64,
        params: LongitudinalParams,
    },
    PathDynamic {
        wheelbase: f64,
        params: LongitudinalParams,
    },
}

fn check_steering(delta: f64) -> Result<(), ModelError> {
    if !delta.is_finite() || delta.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(ModelError::Steering(delta));
    }
    Ok(())
}

fn path_denominator(e: f64, kappa: f64) -> Result<f64, ModelError> {
    let den = 1.0 - e * kappa;
    if den.abs() <= PATH_SINGULARITY_GUARD {
        return Err(ModelError::PathSingularity(den));
    }
    Ok(den)
}

pub fn rhs_constant_velocity(_x: &[f64], u: &[f64]) -> Vec<f64> {
    vec![u[0]]
}

pub fn rhs_double_integrator(x: &[f64], u: &[f64]) -> Vec<f64> {
    vec![x[1], u[0]]
}

pub fn rhs_bicycle2d(x: &[f64], u: &[f64], wheelbase: f64) -> Result<Vec<f64>, ModelError> {
    check_steering(u[0])?;
    let (theta, v) = (x[2], x[3]);
    Ok(vec![
        v * theta.cos(),
        v * theta.sin(),
        v * u[0].tan() / wheelbase,
        u[1],
    ])
}

pub fn rhs_longitudinal(x: &[f64], u: &[f64], params: &LongitudinalParams) -> Vec<f64> {
    vec![params.acceleration(x[0], u[0], u[1])]
}

pub fn rhs_lateral_path(x: &[f64], u: &[f64], wheelbase: f64) -> Result<Vec<f64>, ModelError> {
    let (delta, v, kappa) = (u[0], u[1], u[2]);
    check_steering(delta)?;
    let (e, te) = (x[1], x[2]);
    let den = path_denominator(e, kappa)?;
    Ok(vec![
        v * te.cos() / den,
        v * te.sin(),
        v * (delta.tan() / wheelbase - kappa * te.cos() / den),
    ])
}

pub fn rhs_planar(x: &[f64], u: &[f64], wheelbase: f64) -> Result<Vec<f64>, ModelError> {
    let (delta, v) = (u[0], u[1]);
    check_steering(delta)?;
    Ok(vec![
        v * x[2].cos(),
        v * x[2].sin(),
        v * delta.tan() / wheelbase,
    ])
}

fn lateral_path_jacobians(
    x: &[f64],
    u: &[f64],
    wheelbase: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let (delta, v, kappa) = (u[0], u[1], u[2]);
    check_steering(delta)?;
    let (e, te) = (x[1], x[2]);
    let den = path_denominator(e, kappa)?;
    let (s, c) = te.sin_cos();
    let sec2 = 1.0 / delta.cos().powi(2);
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0,
            v * c * kappa / (den * den),
            -v * s / den,
            0.0,
            0.0,
            v * c,
            0.0,
            -v * kappa * kappa * c / (den * den),
            v * kappa * s / den,
        ],
    );
    let b = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0,
            c / den,
            v * c * e / (den * den),
            0.0,
            s,
            0.0,
            v * sec2 / wheelbase,
            delta.tan() / wheelbase - kappa * c / den,
            -v * c / (den * den),
        ],
    );
    Ok((a, b))
}

fn planar_jacobians(
    x: &[f64],
    u: &[f64],
    wheelbase: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let (delta, v) = (u[0], u[1]);
    check_steering(delta)?;
    let (s, c) = x[2].sin_cos();
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -v * s, 0.0, 0.0, v * c, 0.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(
        3,
        2,
        &[
            0.0,
            c,
            0.0,
            s,
            v / (delta.cos().powi(2) * wheelbase),
            delta.tan() / wheelbase,
        ],
    );
    Ok((a, b))
}

fn longitudinal_jacobians(v: f64, grade: f64, p: &LongitudinalParams) -> (f64, f64, f64) {
    (
        -p.drag_per_mass() * v,
        1.0 / (p.m * p.r_whl),
        p.f_roll * p.g * grade.sin() - p.g * grade.cos(),
    )
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::ConstantVelocity => "constant_velocity",
            Model::DoubleIntegrator => "double_integrator",
            Model::Bicycle { .. } => "bicycle",
            Model::Longitudinal(_) => "longitudinal",
            Model::LateralPath { .. } => "lateral_path",
            Model::Planar { .. } => "planar",
            Model::BicycleDynamic { .. } => "bicycle_dynamic",
            Model::PathDynamic { .. } => "path_dynamic",
        }
    }

    pub fn state_labels(&self) -> &'static [&'static str] {
        match self {
            Model::ConstantVelocity => &["p"],
            Model::DoubleIntegrator => &["p", "v"],
            Model::Bicycle { .. } | Model::BicycleDynamic { .. } => &["x", "y", "theta", "v"],
            Model::Longitudinal(_) => &["v"],
            Model::LateralPath { .. } => &["s", "e_cg", "theta_e"],
            Model::Planar { .. } => &["x", "y", "theta"],
            Model::PathDynamic { .. } => &["s", "e_cg", "theta_e", "v"],
        }
    }

    pub fn control_labels(&self) -> &'static [&'static str] {
        match self {
            Model::ConstantVelocity => &["v"],
            Model::DoubleIntegrator => &["a"],
            Model::Bicycle { .. } => &["delta", "a"],
            Model::Longitudinal(_) => &["t_whl", "alpha"],
            Model::LateralPath { .. } => &["delta", "v", "kappa"],
            Model::Planar { .. } => &["delta", "v"],
            Model::BicycleDynamic { .. } => &["delta", "t_whl", "alpha"],
            Model::PathDynamic { .. } => &["delta", "t_whl", "alpha", "kappa"],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_labels().len()
    }

    pub fn control_dim(&self) -> usize {
        self.control_labels().len()
    }

    /// Index of the speed component, when the state carries one.
    pub fn speed_index(&self) -> Option<usize> {
        match self {
            Model::DoubleIntegrator => Some(1),
            Model::Bicycle { .. } | Model::BicycleDynamic { .. } | Model::PathDynamic { .. } => {
                Some(3)
            }
            Model::Longitudinal(_) => Some(0),
            _ => None,
        }
    }

    fn check(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(), ModelError> {
        if x.len() != self.state_dim() {
            return Err(ModelError::Dimension {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        if u.len() != self.control_dim() {
            return Err(ModelError::Dimension {
                what: "control",
                expected: self.control_dim(),
                got: u.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("state"));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("control"));
        }
        Ok(())
    }

    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check(x, u)?;
        let (xs, us) = (x.as_slice(), u.as_slice());
        let out = match self {
            Model::ConstantVelocity => rhs_constant_velocity(xs, us),
            Model::DoubleIntegrator => rhs_double_integrator(xs, us),
            Model::Bicycle { wheelbase } => rhs_bicycle2d(xs, us, *wheelbase)?,
            Model::Longitudinal(p) => rhs_longitudinal(xs, us, p),
            Model::LateralPath { wheelbase } => rhs_lateral_path(xs, us, *wheelbase)?,
            Model::Planar { wheelbase } => rhs_planar(xs, us, *wheelbase)?,
            Model::BicycleDynamic { wheelbase, params } => {
                let mut d = rhs_planar(&xs[..3], &[us[0], xs[3]], *wheelbase)?;
                d.push(params.acceleration(xs[3], us[1], us[2]));
                d
            }
            Model::PathDynamic { wheelbase, params } => {
                let mut d = rhs_lateral_path(&xs[..3], &[us[0], xs[3], us[3]], *wheelbase)?;
                d.push(params.acceleration(xs[3], us[1], us[2]));
                d
            }
        };
        Ok(DVector::from_vec(out))
    }

    /// Analytic Jacobians `(∂f/∂χ, ∂f/∂u)` at `(x, u)`.
    pub fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
        self.check(x, u)?;
        let (xs, us) = (x.as_slice(), u.as_slice());
        Ok(match self {
            Model::ConstantVelocity => (DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)),
            Model::DoubleIntegrator => (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            ),
            Model::Bicycle { wheelbase } => {
                let (pa, pb) = planar_jacobians(&xs[..3], &[us[0], xs[3]], *wheelbase)?;
                let mut a = DMatrix::zeros(4, 4);
                a.view_mut((0, 0), (3, 3)).copy_from(&pa);
                a.view_mut((0, 3), (3, 1)).copy_from(&pb.column(1));
                let mut b = DMatrix::zeros(4, 2);
                b.view_mut((0, 0), (3, 1)).copy_from(&pb.column(0));
                b[(3, 1)] = 1.0;
                (a, b)
            }
            Model::Longitudinal(p) => {
                let (dv, dt, da) = longitudinal_jacobians(xs[0], us[1], p);
                (
                    DMatrix::from_element(1, 1, dv),
                    DMatrix::from_row_slice(1, 2, &[dt, da]),
                )
            }
            Model::LateralPath { wheelbase } => lateral_path_jacobians(xs, us, *wheelbase)?,
            Model::Planar { wheelbase } => planar_jacobians(xs, us, *wheelbase)?,
            Model::BicycleDynamic { wheelbase, params } => {
                let (pa, pb) = planar_jacobians(&xs[..3], &[us[0], xs[3]], *wheelbase)?;
                let (dv, dt, da) = longitudinal_jacobians(xs[3], us[2], params);
                let mut a = DMatrix::zeros(4, 4);
                a.view_mut((0, 0), (3, 3)).copy_from(&pa);
                a.view_mut((0, 3), (3, 1)).copy_from(&pb.column(1));
                a[(3, 3)] = dv;
                let mut b = DMatrix::zeros(4, 3);
                b.view_mut((0, 0), (3, 1)).copy_from(&pb.column(0));
                b[(3, 1)] = dt;
                b[(3, 2)] = da;
                (a, b)
            }
            Model::PathDynamic { wheelbase, params } => {
                let (la, lb) =
                    lateral_path_jacobians(&xs[..3], &[us[0], xs[3], us[3]], *wheelbase)?;
                let (dv, dt, da) = longitudinal_jacobians(xs[3], us[2], params);
                let mut a = DMatrix::zeros(4, 4);
                a.view_mut((0, 0), (3, 3)).copy_from(&la);
                a.view_mut((0, 3), (3, 1)).copy_from(&lb.column(1));
                a[(3, 3)] = dv;
                let mut b = DMatrix::zeros(4, 4);
                b.view_mut((0, 0), (3, 1)).copy_from(&lb.column(0));
                b.view_mut((0, 3), (3, 1)).copy_from(&lb.column(2));
                b[(3, 1)] = dt;
                b[(3, 2)] = da;
                (a, b)
            }
        })
    }

    /// First-order Taylor model around `(x0, u0)`.
    pub fn linearize(
        &self,
        x0: &DVector<f64>,
        u0: &DVector<f64>,
        form: LinearForm,
    ) -> Result<LtiSystem, ModelError> {
        let (a, b) = self.jacobians(x0, u0)?;
        let f0 = self.rhs(x0, u0)?;
        let c = &f0 - &a * x0 - &b * u0;
        let sys = match form {
            LinearForm::Full => LtiSystem::new(a, b, c)?,
            LinearForm::FrozenControl => {
                let folded = c + &b * u0;
                let zero = DMatrix::zeros(b.nrows(), b.ncols());
                LtiSystem::new(a, zero, folded)?
            }
        };
        Ok(sys)
    }
}

/// Free-function form of [`Model::linearize`].
pub fn linearize(
    model: &Model,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    form: LinearForm,
) -> Result<LtiSystem, ModelError> {
    model.linearize(x0, u0, form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn table2_params() -> LongitudinalParams {
        LongitudinalParams::new(1500.0, 1.2, 0.25, 2.0, 0.25, 0.015).unwrap()
    }

    #[test]
    fn simple_rhs_examples() {
        assert_eq!(rhs_constant_velocity(&[0.0], &[5.0]), vec![5.0]);
        assert_eq!(rhs_constant_velocity(&[100.0], &[0.0]), vec![0.0]);
        assert_eq!(rhs_constant_velocity(&[-3.0], &[2.5]), vec![2.5]);
        assert_eq!(
            rhs_double_integrator(&[0.0, 20.0], &[-5.0]),
            vec![20.0, -5.0]
        );
        assert_eq!(rhs_double_integrator(&[1.0, 0.0], &[0.0]), vec![0.0, 0.0]);
        assert_eq!(rhs_double_integrator(&[0.0, 9.0], &[2.0]), vec![9.0, 2.0]);
    }

    #[test]
    fn bicycle_rhs_examples() {
        assert_eq!(
            rhs_bicycle2d(&[0.0, 0.0, 0.0, 10.0], &[0.0, 0.0], 2.0).unwrap(),
            vec![10.0, 0.0, 0.0, 0.0]
        );
        let d = rhs_bicycle2d(&[0.0, 0.0, FRAC_PI_2, 10.0], &[0.0, -1.0], 2.0).unwrap();
        assert!(d[0].abs() < 1e-14 && d[1] == 10.0 && d[2] == 0.0 && d[3] == -1.0);
        let d = rhs_bicycle2d(&[0.0, 0.0, 0.0, 10.0], &[0.1, 0.0], 2.5).unwrap();
        assert!((d[2] - 0.4013386883418022).abs() < 1e-15);
        assert!(matches!(
            rhs_bicycle2d(&[0.0; 4], &[FRAC_PI_2, 0.0], 2.0),
            Err(ModelError::Steering(_))
        ));
    }

    #[test]
    fn longitudinal_rhs_examples() {
        let p = table2_params();
        let a0 = rhs_longitudinal(&[0.0], &[0.0, 0.0], &p)[0];
        assert!((a0 + 0.015 * 9.81).abs() < 1e-15);
        // 2000/375 − 0.0002·81 − 0.14715
        let a = rhs_longitudinal(&[9.0], &[2000.0, 0.0], &p)[0];
        assert!((a - (2000.0 / 375.0 - 0.0002 * 81.0 - 0.14715)).abs() < 1e-12);
        let t_eq = p.r_whl * (0.5 * 1.2 * 0.25 * 2.0 * 81.0 + 0.015 * 1500.0 * 9.81);
        assert!(rhs_longitudinal(&[9.0], &[t_eq, 0.0], &p)[0].abs() < 1e-12);
        assert!((p.equilibrium_torque(9.0, 0.0) - t_eq).abs() < 1e-9);
    }

    #[test]
    fn lateral_path_rhs_examples() {
        let (l, kappa, v0) = (2.5, 0.01, 9.0);
        let delta = (kappa * l as f64).atan();
        let d = rhs_lateral_path(&[0.0, 0.0, 0.0], &[delta, v0, kappa], l).unwrap();
        assert!(d[2].abs() < 1e-15);
        let d = rhs_lateral_path(&[3.0, 0.0, 0.0], &[0.024, v0, 0.0], l).unwrap();
        assert_eq!(d, vec![v0, 0.0, v0 * 0.024f64.tan() / l]);
        assert!(matches!(
            rhs_lateral_path(&[0.0, 100.0, 0.0], &[0.0, 1.0, 0.01], l),
            Err(ModelError::PathSingularity(_))
        ));
    }

    #[test]
    fn bicycle_linearization_example() {
        let m = Model::Bicycle { wheelbase: 2.5 };
        let sys = m
            .linearize(
                &v(&[0.0, 0.0, 0.0, 10.0]),
                &v(&[0.0, 0.0]),
                LinearForm::Full,
            )
            .unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        assert_eq!(sys.a(), &expect);
    }

    #[test]
    fn frozen_bicycle_is_nilpotent_of_index_three() {
        let m = Model::Bicycle { wheelbase: 2.0 };
        let sys = m
            .linearize(
                &v(&[1.0, 2.0, 0.7, 9.0]),
                &v(&[0.05, -0.3]),
                LinearForm::FrozenControl,
            )
            .unwrap();
        let a = sys.a();
        assert_eq!(a * a * a, DMatrix::zeros(4, 4));
        assert_eq!(sys.b(), &DMatrix::zeros(4, 2));
    }

    #[test]
    fn longitudinal_a_matrix() {
        let p = table2_params();
        let sys = Model::Longitudinal(p)
            .linearize(&v(&[9.0]), &v(&[2000.0, 0.0]), LinearForm::Full)
            .unwrap();
        assert!((sys.a()[(0, 0)] + 1.2 * 0.25 * 2.0 * 9.0 / 1500.0).abs() < 1e-18);
    }

    #[test]
    fn linearization_passes_through_operating_point() {
        let p = table2_params();
        let cases = [
            (
                Model::Bicycle { wheelbase: 2.0 },
                v(&[1.0, -2.0, 0.3, 7.0]),
                v(&[0.02, 0.4]),
            ),
            (Model::Longitudinal(p), v(&[8.0]), v(&[1900.0, 0.1])),
            (
                Model::LateralPath { wheelbase: 2.5 },
                v(&[3.0, 0.4, -0.05]),
                v(&[0.02, 9.0, 0.01]),
            ),
            (
                Model::PathDynamic {
                    wheelbase: 2.5,
                    params: p,
                },
                v(&[3.0, 0.4, -0.05, 9.0]),
                v(&[0.02, 2000.0, 0.2, 0.01]),
            ),
        ];
        for (m, x, u) in cases {
            let sys = m.linearize(&x, &u, LinearForm::Full).unwrap();
            let f = m.rhs(&x, &u).unwrap();
            assert!((sys.rhs(&x, &u) - f).amax() < 1e-12, "{}", m.name());
        }
    }

    #[test]
    fn linear_models_linearize_exactly() {
        for m in [Model::ConstantVelocity, Model::DoubleIntegrator] {
            let sys = m
                .linearize(
                    &DVector::zeros(m.state_dim()),
                    &DVector::zeros(m.control_dim()),
                    LinearForm::Full,
                )
                .unwrap();
            let x = DVector::from_element(m.state_dim(), 3.7);
            let u = DVector::from_element(m.control_dim(), -1.2);
            assert_eq!(sys.rhs(&x, &u), m.rhs(&x, &u).unwrap());
        }
    }

    #[test]
    fn dimension_errors() {
        let m = Model::Bicycle { wheelbase: 2.0 };
        assert!(matches!(
            m.rhs(&v(&[0.0; 3]), &v(&[0.0; 2])),
            Err(ModelError::Dimension { what: "state", .. })
        ));
    }
}
