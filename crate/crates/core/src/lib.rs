//! Surrogate safety measures for road vehicles.
//!
//! Future trajectories come either from closed-form solutions of linear(ized)
//! models ([`lti`], [`models`]) or from explicit Runge-Kutta integration
//! ([`trajectory`]). [`collision`] turns them into earliest collision times,
//! [`frenet`] handles road geometry and [`scenario`] runs rolling-horizon
//! experiments.

pub mod collision;
pub mod frenet;
pub mod lti;
pub mod models;
pub mod scenario;
pub mod trajectory;
