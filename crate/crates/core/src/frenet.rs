//! Road geometry and path (Frenet) coordinates.
//!
//! `s` is arc length along the reference path, `e_cg` the signed lateral
//! offset (positive to the left of the direction of travel) and
//! `θ_e = θ − θ_p(s)` the heading error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::f64::consts::PI;

/// Arc-length slack accepted at either end of the path.
pub const END_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrenetError {
    #[error("invalid road: {0}")]
    InvalidRoad(String),
    #[error("point ({0}, {1}) is at the curvature center; projection is ambiguous")]
    Ambiguous(f64, f64),
    #[error("arc length {s} is outside the path [0, {length}]")]
    OutsidePath { s: f64, length: f64 },
    #[error("lateral offset {0} is beyond the curvature radius")]
    OutsideTube(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePath {
    /// Constant-curvature path (`curvature = 0` is a straight line).
    Arc {
        origin: (f64, f64),
        heading: f64,
        curvature: f64,
        length: f64,
    },
    Polyline {
        vertices: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub path: ReferencePath,
    pub width: f64,
    #[serde(default)]
    pub grade: f64,
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

impl RoadGeometry {
    pub fn straight(origin: (f64, f64), heading: f64, length: f64, width: f64) -> Self {
        Self::arc(origin, heading, 0.0, length, width)
    }

    pub fn arc(origin: (f64, f64), heading: f64, curvature: f64, length: f64, width: f64) -> Self {
        Self {
            path: ReferencePath::Arc {
                origin,
                heading,
                curvature,
                length,
            },
            width,
            grade: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), FrenetError> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(FrenetError::InvalidRoad(format!(
                "width must be positive, got {}",
                self.width
            )));
        }
        if !self.grade.is_finite() {
            return Err(FrenetError::InvalidRoad("grade must be finite".into()));
        }
        match &self.path {
            ReferencePath::Arc {
                origin,
                heading,
                curvature,
                length,
            } => {
                if ![origin.0, origin.1, *heading, *curvature]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(FrenetError::InvalidRoad("non-finite arc parameter".into()));
                }
                if !(length.is_finite() && *length > 0.0) {
                    return Err(FrenetError::InvalidRoad(format!(
                        "length must be positive, got {length}"
                    )));
                }
                if curvature.abs() * self.width / 2.0 >= 1.0 {
                    return Err(FrenetError::InvalidRoad(
                        "half width exceeds the curvature radius".into(),
                    ));
                }
                if curvature.abs() * length > 2.0 * PI {
                    return Err(FrenetError::InvalidRoad(
                        "arc longer than a full turn".into(),
                    ));
                }
            }
            ReferencePath::Polyline { vertices } => {
                if vertices.len() < 2 {
                    return Err(FrenetError::InvalidRoad(
                        "polyline needs two vertices".into(),
                    ));
                }
                if vertices
                    .iter()
                    .any(|v| !(v.0.is_finite() && v.1.is_finite()))
                {
                    return Err(FrenetError::InvalidRoad("non-finite vertex".into()));
                }
                if vertices.windows(2).any(|w| w[0] == w[1]) {
                    return Err(FrenetError::InvalidRoad(
                        "consecutive vertices coincide".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        match &self.path {
            ReferencePath::Arc { length, .. } => *length,
            ReferencePath::Polyline { vertices } => vertices
                .windows(2)
                .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
                .sum(),
        }
    }

    /// Curvature at `s` (zero on polyline segments).
    pub fn curvature(&self, _s: f64) -> f64 {
        match &self.path {
            ReferencePath::Arc { curvature, .. } => *curvature,
            ReferencePath::Polyline { .. } => 0.0,
        }
    }

    fn check_s(&self, s: f64) -> Result<(), FrenetError> {
        let length = self.length();
        if !(s >= -END_TOL && s <= length + END_TOL) {
            return Err(FrenetError::OutsidePath { s, length });
        }
        Ok(())
    }

    /// Reference point and tangent angle at `s`.
    pub fn reference(&self, s: f64) -> Result<((f64, f64), f64), FrenetError> {
        self.check_s(s)?;
        Ok(match &self.path {
            ReferencePath::Arc {
                origin,
                heading,
                curvature,
                ..
            } => {
                let phi = heading + curvature * s;
                if *curvature == 0.0 {
                    (
                        (origin.0 + s * heading.cos(), origin.1 + s * heading.sin()),
                        phi,
                    )
                } else {
                    let k = *curvature;
                    let center = (origin.0 - heading.sin() / k, origin.1 + heading.cos() / k);
                    ((center.0 + phi.sin() / k, center.1 - phi.cos() / k), phi)
                }
            }
            ReferencePath::Polyline { vertices } => {
                let (k, t) = polyline_locate(vertices, s);
                let (a, b) = (vertices[k], vertices[k + 1]);
                let len = (b.0 - a.0).hypot(b.1 - a.1);
                let phi = (b.1 - a.1).atan2(b.0 - a.0);
                let f = t / len;
                ((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)), phi)
            }
        })
    }
}

/// Segment index and distance along it for arc length `s`.
fn polyline_locate(vertices: &[(f64, f64)], s: f64) -> (usize, f64) {
    let mut acc = 0.0;
    let last = vertices.len() - 2;
    for k in 0..=last {
        let len = (vertices[k + 1].0 - vertices[k].0).hypot(vertices[k + 1].1 - vertices[k].1);
        if s <= acc + len || k == last {
            return (k, s - acc);
        }
        acc += len;
    }
    unreachable!()
}

/// Projects a Cartesian pose onto the reference path.
pub fn cartesian_to_path(
    x: f64,
    y: f64,
    theta: f64,
    road: &RoadGeometry,
) -> Result<(f64, f64, f64), FrenetError> {
    match &road.path {
        ReferencePath::Arc {
            origin,
            heading,
            curvature,
            length,
        } => {
            let k = *curvature;
            if k == 0.0 {
                let (sn, cs) = heading.sin_cos();
                let (dx, dy) = (x - origin.0, y - origin.1);
                let s = dx * cs + dy * sn;
                road.check_s(s)?;
                let e = -dx * sn + dy * cs;
                return Ok((s, e, wrap_angle(theta - heading)));
            }
            let center = (origin.0 - heading.sin() / k, origin.1 + heading.cos() / k);
            let (dx, dy) = (x - center.0, y - center.1);
            let dist = dx.hypot(dy);
            if dist < 1e-12 * (1.0 + 1.0 / k.abs()) {
                return Err(FrenetError::Ambiguous(x, y));
            }
            let sg = k.signum();
            let phi_raw = (sg * dx / dist).atan2(-sg * dy / dist);
            let mid = heading + k * length / 2.0;
            let phi = mid + wrap_angle(phi_raw - mid);
            let s = (phi - heading) / k;
            road.check_s(s)?;
            // e = (p − p_ref)·n with p_ref = c − n/κ, so e = d·n + 1/κ
            let n = (-phi.sin(), phi.cos());
            let e = dx * n.0 + dy * n.1 + 1.0 / k;
            Ok((s, e, wrap_angle(theta - phi)))
        }
        ReferencePath::Polyline { vertices } => {
            let mut best: Option<(f64, f64, f64, f64)> = None; // (d², s, e, φ)
            let mut acc = 0.0;
            for w in vertices.windows(2) {
                let (a, b) = (w[0], w[1]);
                let (tx, ty) = (b.0 - a.0, b.1 - a.1);
                let len = tx.hypot(ty);
                let (ux, uy) = (tx / len, ty / len);
                let along = ((x - a.0) * ux + (y - a.1) * uy).clamp(0.0, len);
                let foot = (a.0 + along * ux, a.1 + along * uy);
                let d2 = (x - foot.0).powi(2) + (y - foot.1).powi(2);
                if best.is_none_or(|b| d2 < b.0) {
                    let e = -(x - foot.0) * uy + (y - foot.1) * ux;
                    best = Some((d2, acc + along, e, uy.atan2(ux)));
                }
                acc += len;
            }
            let (_, s, e, phi) = best.expect("validated polyline");
            Ok((s, e, wrap_angle(theta - phi)))
        }
    }
}

/// Inverse of [`cartesian_to_path`]: `p = p_ref(s) + e·n(s)`, `θ = θ_p(s) + θ_e`.
pub fn path_to_cartesian(
    s: f64,
    e_cg: f64,
    theta_e: f64,
    road: &RoadGeometry,
) -> Result<(f64, f64, f64), FrenetError> {
    let k = road.curvature(s);
    if (e_cg * k).abs() >= 1.0 {
        return Err(FrenetError::OutsideTube(e_cg));
    }
    let (p, phi) = road.reference(s)?;
    let n = (-phi.sin(), phi.cos());
    Ok((p.0 + e_cg * n.0, p.1 + e_cg * n.1, phi + theta_e))
}

/// Cartesian boundary lines `(upper, lower)` at `±w/2`, sampled every `resolution`
/// metres along arcs. Polyline offsets are trimmed at inner corners and rounded
/// at outer corners.
pub fn boundary_polylines(
    road: &RoadGeometry,
    resolution: f64,
) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let h = road.width / 2.0;
    match &road.path {
        ReferencePath::Arc { length, .. } => {
            let n = (length / resolution).ceil().max(1.0) as usize;
            let mut upper = Vec::with_capacity(n + 1);
            let mut lower = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let s = (i as f64 * resolution).min(*length);
                let (p, phi) = road.reference(s).expect("s within path");
                let nrm = (-phi.sin(), phi.cos());
                upper.push((p.0 + h * nrm.0, p.1 + h * nrm.1));
                lower.push((p.0 - h * nrm.0, p.1 - h * nrm.1));
            }
            (upper, lower)
        }
        ReferencePath::Polyline { vertices } => (
            offset_polyline(vertices, h, resolution),
            offset_polyline(vertices, -h, resolution),
        ),
    }
}

fn offset_polyline(vertices: &[(f64, f64)], offset: f64, resolution: f64) -> Vec<(f64, f64)> {
    let dirs: Vec<(f64, f64)> = vertices
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let len = dx.hypot(dy);
            (dx / len, dy / len)
        })
        .collect();
    let normal = |d: (f64, f64)| (-d.1, d.0);
    let shift = |p: (f64, f64), n: (f64, f64)| (p.0 + offset * n.0, p.1 + offset * n.1);
    let mut out = vec![shift(vertices[0], normal(dirs[0]))];
    for k in 1..vertices.len() - 1 {
        let (d0, d1) = (dirs[k - 1], dirs[k]);
        let (n0, n1) = (normal(d0), normal(d1));
        let turn = d0.0 * d1.1 - d0.1 * d1.0;
        let v = vertices[k];
        if turn * offset > 0.0 {
            // inner side: the two offset lines meet at the miter point
            let denom = 1.0 + d0.0 * d1.0 + d0.1 * d1.1;
            out.push((
                v.0 + offset * (n0.0 + n1.0) / denom,
                v.1 + offset * (n0.1 + n1.1) / denom,
            ));
        } else {
            // outer side: round the corner at distance |offset| from the vertex
            let a0 = n0.1.atan2(n0.0);
            let sweep = wrap_angle(n1.1.atan2(n1.0) - a0);
            let steps = ((sweep.abs() * offset.abs()) / resolution).ceil().max(1.0) as usize;
            for i in 0..=steps {
                let a = a0 + sweep * i as f64 / steps as f64;
                out.push((v.0 + offset * a.cos(), v.1 + offset * a.sin()));
            }
        }
    }
    let last = vertices.len() - 1;
    out.push(shift(vertices[last], normal(dirs[last - 1])));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_identity_frame() {
        let road = RoadGeometry::straight((0.0, 0.0), 0.0, 100.0, 6.0);
        let (s, e, te) = cartesian_to_path(3.0, 0.5, 0.1, &road).unwrap();
        assert!((s - 3.0).abs() < 1e-15 && (e - 0.5).abs() < 1e-15 && (te - 0.1).abs() < 1e-15);
    }

    #[test]
    fn arc_on_centerline() {
        let r = 50.0;
        let road = RoadGeometry::arc((0.0, 0.0), 0.0, 1.0 / r, 100.0, 6.0);
        let phi: f64 = 0.8;
        // center at (0, R); point at angle φ along the arc
        let (x, y) = (r * phi.sin(), r - r * phi.cos());
        let (s, e, te) = cartesian_to_path(x, y, phi, &road).unwrap();
        assert!((s - r * phi).abs() < 1e-12 && e.abs() < 1e-12 && te.abs() < 1e-15);
    }

    #[test]
    fn left_is_positive() {
        let road = RoadGeometry::arc((0.0, 0.0), 0.0, -0.01, 100.0, 6.0);
        let (_, e, _) = cartesian_to_path(10.0, 1.0, 0.0, &road).unwrap();
        assert!(e > 0.0);
        let road = RoadGeometry::straight((0.0, 0.0), 0.0, 100.0, 6.0);
        assert!(cartesian_to_path(10.0, -1.0, 0.0, &road).unwrap().1 < 0.0);
    }

    #[test]
    fn arc_center_is_ambiguous() {
        let road = RoadGeometry::arc((0.0, 0.0), 0.0, 0.1, 30.0, 6.0);
        assert!(matches!(
            cartesian_to_path(0.0, 10.0, 0.0, &road),
            Err(FrenetError::Ambiguous(..))
        ));
    }

    #[test]
    fn outside_path_is_rejected() {
        let road = RoadGeometry::straight((0.0, 0.0), 0.0, 10.0, 6.0);
        assert!(matches!(
            cartesian_to_path(-1.0, 0.0, 0.0, &road),
            Err(FrenetError::OutsidePath { .. })
        ));
        assert!(path_to_cartesian(11.0, 0.0, 0.0, &road).is_err());
    }

    #[test]
    fn inverse_examples() {
        let road = RoadGeometry::arc((1.0, 2.0), 0.3, 0.02, 80.0, 6.0);
        let (x, y, th) = path_to_cartesian(30.0, -1.2, 0.05, &road).unwrap();
        let (s, e, te) = cartesian_to_path(x, y, th, &road).unwrap();
        assert!((s - 30.0).abs() < 1e-10 && (e + 1.2).abs() < 1e-12 && (te - 0.05).abs() < 1e-12);
    }

    #[test]
    fn arc_boundaries_are_concentric() {
        let r = 40.0;
        let road = RoadGeometry::arc((0.0, 0.0), 0.0, 1.0 / r, 60.0, 8.0);
        let (upper, lower) = boundary_polylines(&road, 1.0);
        for p in &upper {
            assert!(((p.0).hypot(p.1 - r) - (r - 4.0)).abs() < 1e-9);
        }
        for p in &lower {
            assert!(((p.0).hypot(p.1 - r) - (r + 4.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn straight_boundaries_are_parallel() {
        let road = RoadGeometry::straight((0.0, 0.0), 0.0, 10.0, 6.0);
        let (upper, lower) = boundary_polylines(&road, 2.5);
        assert!(upper.iter().all(|p| (p.1 - 3.0).abs() < 1e-15));
        assert!(lower.iter().all(|p| (p.1 + 3.0).abs() < 1e-15));
        assert_eq!(upper.len(), 5);
    }

    fn point_to_polyline(p: (f64, f64), vertices: &[(f64, f64)]) -> f64 {
        vertices
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (tx, ty) = (b.0 - a.0, b.1 - a.1);
                let l2 = tx * tx + ty * ty;
                let t = (((p.0 - a.0) * tx + (p.1 - a.1) * ty) / l2).clamp(0.0, 1.0);
                (p.0 - a.0 - t * tx).hypot(p.1 - a.1 - t * ty)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn polyline_boundaries_keep_half_width() {
        let vertices = vec![(0.0, 0.0), (30.0, 0.0), (50.0, 15.0), (80.0, 10.0)];
        let road = RoadGeometry {
            path: ReferencePath::Polyline {
                vertices: vertices.clone(),
            },
            width: 6.0,
            grade: 0.0,
        };
        let (upper, lower) = boundary_polylines(&road, 0.5);
        for p in upper.iter().chain(&lower) {
            assert!(
                (point_to_polyline(*p, &vertices) - 3.0).abs() < 1e-9,
                "{p:?}"
            );
        }
    }

    #[test]
    fn polyline_projection_prefers_smaller_s_on_ties() {
        let road = RoadGeometry {
            path: ReferencePath::Polyline {
                vertices: vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)],
            },
            width: 4.0,
            grade: 0.0,
        };
        // equidistant from both segments (inner corner)
        let (s, e, _) = cartesian_to_path(9.0, 1.0, 0.0, &road).unwrap();
        assert_eq!((s, e), (9.0, 1.0));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
