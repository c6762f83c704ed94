//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssm_core::collision::{delta_v, rcri_flag, rcri_time_to_collision, real_roots, ttc, RcriFlag};
use ssm_core::frenet::{cartesian_to_path, path_to_cartesian, wrap_angle, RoadGeometry};
use ssm_core::lti::{solve_lti, ControlSignal};
use ssm_core::models::{LinearForm, LongitudinalParams, Model};
use ssm_core::scenario::{verify_all, Check};
use ssm_core::trajectory::rk4_integrate;

struct Line {
    name: String,
    passed: bool,
    detail: String,
}

fn line(name: &str, passed: bool, detail: String) -> Line {
    Line {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn params() -> LongitudinalParams {
    LongitudinalParams::new(1500.0, 1.2, 0.25, 2.0, 0.25, 0.015).unwrap()
}

fn models() -> Vec<Model> {
    let p = params();
    vec![
        Model::ConstantVelocity,
        Model::DoubleIntegrator,
        Model::Bicycle { wheelbase: 2.5 },
        Model::Longitudinal(p),
        Model::LateralPath { wheelbase: 2.5 },
        Model::Planar { wheelbase: 2.5 },
        Model::BicycleDynamic {
            wheelbase: 2.5,
            params: p,
        },
        Model::PathDynamic {
            wheelbase: 2.5,
            params: p,
        },
    ]
}

fn random_point(model: &Model, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let mut r = |a: f64, b: f64| rng.random_range(a..b);
    let (x, u): (Vec<f64>, Vec<f64>) = match model {
        Model::ConstantVelocity => (vec![r(-50.0, 50.0)], vec![r(-30.0, 30.0)]),
        Model::DoubleIntegrator => (vec![r(-50.0, 50.0), r(0.0, 30.0)], vec![r(-5.0, 5.0)]),
        Model::Bicycle { .. } => (
            vec![r(-50.0, 50.0), r(-50.0, 50.0), r(-PI, PI), r(1.0, 30.0)],
            vec![r(-0.5, 0.5), r(-3.0, 3.0)],
        ),
        Model::Longitudinal(_) => (vec![r(1.0, 30.0)], vec![r(0.0, 3000.0), r(-0.3, 0.6)]),
        Model::LateralPath { .. } => (
            vec![r(0.0, 200.0), r(-3.0, 3.0), r(-0.5, 0.5)],
            vec![r(-0.5, 0.5), r(1.0, 30.0), r(-0.02, 0.02)],
        ),
        Model::Planar { .. } => (
            vec![r(-50.0, 50.0), r(-50.0, 50.0), r(-PI, PI)],
            vec![r(-0.5, 0.5), r(1.0, 30.0)],
        ),
        Model::BicycleDynamic { .. } => (
            vec![r(-50.0, 50.0), r(-50.0, 50.0), r(-PI, PI), r(1.0, 30.0)],
            vec![r(-0.5, 0.5), r(0.0, 3000.0), r(-0.3, 0.6)],
        ),
        Model::PathDynamic { .. } => (
            vec![r(0.0, 200.0), r(-3.0, 3.0), r(-0.5, 0.5), r(1.0, 30.0)],
            vec![r(-0.5, 0.5), r(0.0, 3000.0), r(-0.3, 0.6), r(-0.02, 0.02)],
        ),
    };
    (DVector::from_vec(x), DVector::from_vec(u))
}

/// Central differences of `f` with respect to `z`.
fn finite_difference<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, z: &DVector<f64>) -> DMatrix<f64> {
    let rows = f(z).len();
    let mut j = DMatrix::zeros(rows, z.len());
    for k in 0..z.len() {
        let h = 1e-6 * z[k].abs().max(1.0);
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[k] += h;
        zm[k] -= h;
        j.set_column(k, &((f(&zp) - f(&zm)) / (2.0 * h)));
    }
    j
}

fn relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1.0)
}

fn jacobian_check(rng: &mut ChaCha8Rng) -> Line {
    let mut worst: f64 = 0.0;
    for model in models() {
        for _ in 0..100 {
            let (x, u) = random_point(&model, rng);
            let (a, b) = model.jacobians(&x, &u).unwrap();
            let fa = finite_difference(|z| model.rhs(z, &u).unwrap(), &x);
            let fb = finite_difference(|z| model.rhs(&x, z).unwrap(), &u);
            worst = worst.max(relative(&a, &fa)).max(relative(&b, &fb));
        }
    }
    line(
        "Jacobian vs finite difference, 100 points x 8 models",
        worst < 1e-6,
        format!("max relative error {worst:.2e} < 1e-6"),
    )
}

fn analytic_vs_rk4(rng: &mut ChaCha8Rng) -> Line {
    let mut worst: f64 = 0.0;
    let (h, n) = (0.001, 5000);
    for model in models() {
        for _ in 0..5 {
            let (x, u) = random_point(&model, rng);
            let sys = model.linearize(&x, &u, LinearForm::Full).unwrap();
            let signal = ControlSignal::constant(u.clone());
            let exact = solve_lti(&sys, &x, &signal, h * n as f64).unwrap();
            let rhs = |z: &DVector<f64>, w: &DVector<f64>| Ok::<_, String>(sys.rhs(z, w));
            let sampled = rk4_integrate(rhs, &x, &signal, h, n).unwrap();
            for l in (0..=n).step_by(500) {
                let t = l as f64 * h;
                let e = exact.eval(t);
                let err = (&e - &sampled.states[l]).amax() / e.amax().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    line(
        "analytic vs RK4 on linear(ized) models, 5 s",
        worst < 1e-6,
        format!("max relative state error {worst:.2e} < 1e-6"),
    )
}

fn momentum(rng: &mut ChaCha8Rng) -> Line {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (mi, mj) = (
            rng.random_range(500.0..40000.0),
            rng.random_range(500.0..40000.0),
        );
        let (vi, vj) = (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        let (dvi, dvj) = delta_v(mi, mj, vi, vj);
        let scale = mi * vi.abs() + mj * vj.abs();
        worst = worst.max((mi * dvi + mj * dvj).abs() / scale.max(1.0));
    }
    line(
        "DeltaV momentum conservation, 1000 impacts",
        worst < 1e-12,
        format!("max relative imbalance {worst:.2e} < 1e-12"),
    )
}

fn frenet_round_trip(rng: &mut ChaCha8Rng) -> Line {
    let roads = [
        RoadGeometry::arc((3.0, -1.0), 0.4, 0.01, 400.0, 8.0),
        RoadGeometry::arc((0.0, 0.0), -1.0, -0.02, 150.0, 8.0),
        RoadGeometry::straight((10.0, 5.0), 2.0, 300.0, 8.0),
    ];
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let road = &roads[i % roads.len()];
        let s = rng.random_range(0.0..road.length());
        let e = rng.random_range(-4.0..4.0);
        let te = rng.random_range(-1.0..1.0);
        let (x, y, th) = path_to_cartesian(s, e, te, road).unwrap();
        let (s2, e2, te2) = cartesian_to_path(x, y, th, road).unwrap();
        worst = worst
            .max((s - s2).abs())
            .max((e - e2).abs())
            .max(wrap_angle(te - te2).abs());
    }
    line(
        "Frenet round trip, 1000 poses",
        worst < 1e-9,
        format!("max error {worst:.2e} < 1e-9"),
    )
}

fn sextic_roots(rng: &mut ChaCha8Rng) -> Line {
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for _ in 0..1000 {
        let mut roots: Vec<f64> = Vec::new();
        while roots.len() < 6 {
            let r = rng.random_range(-10.0..10.0);
            if roots.iter().all(|q: &f64| (q - r).abs() > 0.25) {
                roots.push(r);
            }
        }
        let lead = rng.random_range(0.5..3.0);
        let mut coeffs = vec![lead];
        for r in &roots {
            // multiply by (t − r), ascending coefficients
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k] -= r * c;
                next[k + 1] += c;
            }
            coeffs = next;
        }
        let mut found = real_roots(&coeffs);
        found.sort_by(f64::total_cmp);
        roots.sort_by(f64::total_cmp);
        if found.len() != 6 {
            missing += 1;
            continue;
        }
        for (a, b) in roots.iter().zip(&found) {
            worst = worst.max((a - b).abs());
        }
    }
    line(
        "sextic roots from chosen factorizations, 1000 polynomials",
        missing == 0 && worst < 1e-7,
        format!("max root error {worst:.2e} < 1e-7, {missing} with wrong root count"),
    )
}

fn rk4_convergence() -> Line {
    let model = Model::Bicycle { wheelbase: 2.5 };
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.3, 10.0]);
    let u = ControlSignal::constant(DVector::from_vec(vec![0.15, 1.0]));
    let rhs = |z: &DVector<f64>, w: &DVector<f64>| model.rhs(z, w);
    let end = 4.0;
    let at = |h: f64| {
        let n = (end / h).round() as usize;
        rk4_integrate(rhs, &x0, &u, h, n).unwrap().last().clone()
    };
    let reference = at(0.0005);
    let coarse = (at(0.2) - &reference).amax();
    let fine = (at(0.02) - &reference).amax();
    let ratio = coarse / fine;
    line(
        "RK4 self-convergence ratio, h = 0.2 -> 0.02",
        (5e3..=2e4).contains(&ratio),
        format!("ratio {ratio:.0} in [5000, 20000]"),
    )
}

fn criterion_7() -> Vec<Line> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lines = vec![
        jacobian_check(&mut rng),
        analytic_vs_rk4(&mut rng),
        momentum(&mut rng),
        frenet_round_trip(&mut rng),
        sextic_roots(&mut rng),
        rk4_convergence(),
    ];
    let secs = start.elapsed().as_secs_f64();
    lines.push(line(
        "property suite runtime",
        secs < 60.0,
        format!("{secs:.2} s < 60 s"),
    ));
    lines
}

/// Bumper gap `p_lead − p_follow` at `t` with the leader braking at once and the
/// follower after `t_d`, both held at rest once stopped.
fn braking_gap(v_l: f64, v_f: f64, gap: f64, d: f64, t_d: f64, t: f64) -> f64 {
    let stop = |v: f64, tau: f64| {
        let tau = tau.min(v / d);
        v * tau - 0.5 * d * tau * tau
    };
    let lead = gap + stop(v_l, t);
    let follow = if t < t_d {
        v_f * t
    } else {
        v_f * t_d + stop(v_f, t - t_d)
    };
    lead - follow
}

fn criterion_8() -> Vec<Line> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ttc_mismatch = 0;
    for _ in 0..1000 {
        let p_f = rng.random_range(-100.0..100.0);
        let p_l = p_f + rng.random_range(5.0..120.0);
        let (v_l, v_f) = (rng.random_range(0.0..35.0), rng.random_range(0.0..35.0));
        let length = rng.random_range(3.0..5.0);
        let expected = if v_f > v_l {
            Some((p_l - p_f - length) / (v_f - v_l))
        } else {
            None
        };
        if ttc(p_l, p_f, v_l, v_f, length).t_c_star != expected {
            ttc_mismatch += 1;
        }
    }
    let mut flag_mismatch = 0;
    for _ in 0..1000 {
        let (v_l, v_f) = (rng.random_range(0.0..35.0), rng.random_range(0.0..35.0));
        let gap = rng.random_range(0.5..100.0);
        let d = rng.random_range(2.0..9.0);
        let t_d = rng.random_range(0.0..2.5);
        let leader_stop = gap + v_l * v_l / (2.0 * d);
        let follower_stop = v_f * t_d + v_f * v_f / (2.0 * d);
        let dangerous = leader_stop <= follower_stop;
        let (flag, _) = rcri_flag(v_l, v_f, gap, d, t_d);
        if (flag == RcriFlag::Dangerous) != dangerous {
            flag_mismatch += 1;
        }
    }
    let horizon = 30.0;
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    let mut disagreements = 0;
    for _ in 0..200 {
        let (v_l, v_f) = (rng.random_range(0.0..30.0), rng.random_range(5.0..35.0));
        let gap = rng.random_range(1.0..60.0);
        let d = rng.random_range(3.0..9.0);
        let t_d = rng.random_range(0.0..2.0);
        let got = rcri_time_to_collision(v_l, v_f, gap, d, t_d, horizon)
            .unwrap()
            .t_c_star;
        let n = (horizon / step).round() as usize;
        let scanned = (0..=n)
            .map(|k| k as f64 * step)
            .find(|&t| braking_gap(v_l, v_f, gap, d, t_d, t) <= 0.0);
        match (got, scanned) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => disagreements += 1,
        }
    }
    vec![
        line(
            "ttc equals gap / closing speed, 1000 inputs",
            ttc_mismatch == 0,
            format!("{ttc_mismatch} mismatches"),
        ),
        line(
            "rcri_flag sign equals stopping-distance comparison, 1000 inputs",
            flag_mismatch == 0,
            format!("{flag_mismatch} mismatches"),
        ),
        line(
            "rcri_time_to_collision vs 1e-4 s gap scan, 200 braking cases",
            disagreements == 0 && worst < 2e-4,
            format!("max |diff| {worst:.2e} < 2e-4, {disagreements} existence disagreements"),
        ),
    ]
}

fn from_checks(checks: &[Check], criterion: u8) -> Vec<Line> {
    checks
        .iter()
        .filter(|c| c.criterion == criterion)
        .map(|c| line(&c.name, c.passed, c.detail.clone()))
        .collect()
}

fn main() -> ExitCode {
    let report = match verify_all() {
        Ok(r) => r,
        Err(e) => {
            println!("bundled experiments did not run: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut criteria: Vec<(u8, Vec<Line>)> = (1..=6)
        .map(|c| (c, from_checks(&report.checks, c)))
        .collect();
    criteria.push((7, criterion_7()));
    criteria.push((8, criterion_8()));

    let mut all = true;
    for (c, lines) in &criteria {
        let passed = !lines.is_empty() && lines.iter().all(|l| l.passed);
        all &= passed;
        println!("criterion {c}: {}", if passed { "PASS" } else { "FAIL" });
        for l in lines {
            let tag = if l.passed { "ok  " } else { "FAIL" };
            println!("    {tag} {} ({})", l.name, l.detail);
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
