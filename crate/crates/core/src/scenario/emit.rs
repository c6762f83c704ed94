//! CSV, snapshot JSON and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::{RunRecord, Snapshot};
use super::ScenarioError;
use crate::collision::Method;

const CSV_HEADER: [&str; 6] = [
    "T_r",
    "query_id",
    "method",
    "t_c_star",
    "n_roots",
    "e_tc_star",
];

fn fixed(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV rows of one method slot. Queries without a result for that method
/// (one-dimensional measures in the numeric file) are left out.
pub fn render_csv(record: &RunRecord, method: Method) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for ev in &record.evaluations {
        for o in &ev.outcomes {
            let slot = match method {
                Method::Analytic => &o.analytic,
                Method::NumericScan => &o.numeric,
            };
            let Some(r) = slot else { continue };
            w.write_record([
                format!("{:.6}", ev.t_r),
                o.query_id.clone(),
                method.as_str().to_string(),
                fixed(r.t_c_star),
                r.roots.len().to_string(),
                fixed(o.e_tc_star),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Writes `<name>.analytic.csv` and/or `<name>.numeric.csv` into `dir`.
pub fn emit_csv(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (wanted, method) in [
        (record.method.wants_analytic(), Method::Analytic),
        (record.method.wants_numeric(), Method::NumericScan),
    ] {
        if !wanted {
            continue;
        }
        let path = dir.join(format!("{}.{}.csv", record.scenario, method.as_str()));
        fs::write(&path, render_csv(record, method))?;
        written.push(path);
    }
    Ok(written)
}

/// Fill color for a collision time: `f = t/horizon` (clamped) maps to
/// `rgb(120 + 135f, 200f, 200f)`, dark red at `t = 0` fading to pale pink.
pub fn color_for(t_c_star: f64, horizon: f64) -> String {
    let f = (t_c_star / horizon).clamp(0.0, 1.0);
    format!(
        "rgb({},{},{})",
        (120.0 + 135.0 * f).round() as u8,
        (200.0 * f).round() as u8,
        (200.0 * f).round() as u8
    )
}

/// Minimal SVG of a snapshot. Elements at risk are filled (or stroked, for
/// boundaries) with [`color_for`]; everything else is outlined in grey.
pub fn render_svg(snap: &Snapshot) -> String {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for c in snap.vehicles.iter().chain(&snap.obstacles) {
        pts.push((c.x - c.radius, c.y - c.radius));
        pts.push((c.x + c.radius, c.y + c.radius));
    }
    pts.extend(&snap.upper_boundary);
    pts.extend(&snap.lower_boundary);
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let pad = 2.0;
    let risk_color = |target: &str| {
        snap.risks
            .iter()
            .filter(|r| r.target == target)
            .map(|r| r.t_c_star)
            .fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.min(t)))
            })
            .map(|t| color_for(t, snap.horizon))
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.3} {:.3} {:.3} {:.3}">"#,
        x0 - pad,
        -(y1 + pad),
        x1 - x0 + 2.0 * pad,
        y1 - y0 + 2.0 * pad
    );
    let _ = writeln!(s, r#"<title>T_r = {:.3} s</title>"#, snap.t_r);
    let _ = writeln!(s, r#"<g transform="scale(1,-1)">"#);
    for (name, line) in [
        ("upper", &snap.upper_boundary),
        ("lower", &snap.lower_boundary),
    ] {
        if line.is_empty() {
            continue;
        }
        let points: Vec<String> = line.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
        let (stroke, width) = match risk_color(name) {
            Some(c) => (c, 0.6),
            None => ("grey".to_string(), 0.2),
        };
        let _ = writeln!(
            s,
            r#"<polyline id="{name}" fill="none" stroke="{stroke}" stroke-width="{width}" points="{}"/>"#,
            points.join(" ")
        );
    }
    for c in snap.obstacles.iter().chain(&snap.vehicles) {
        let fill = risk_color(&c.owner).unwrap_or_else(|| "none".to_string());
        let _ = writeln!(
            s,
            r#"<circle data-owner="{}" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="{fill}" stroke="black" stroke-width="0.1"/>"#,
            c.owner, c.x, c.y, c.radius
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Writes `<name>.snapshot_<T_r>.json` and `.svg` for each snapshot of the record.
pub fn emit_snapshot_plotdata(
    record: &RunRecord,
    dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for snap in &record.snapshots {
        let stem = format!("{}.snapshot_{:.3}", record.scenario, snap.t_r);
        let json = dir.join(format!("{stem}.json"));
        let text =
            serde_json::to_string_pretty(snap).map_err(|e| std::io::Error::other(e.to_string()))?;
        fs::write(&json, text + "\n")?;
        let svg = dir.join(format!("{stem}.svg"));
        fs::write(&svg, render_svg(snap))?;
        written.push(json);
        written.push(svg);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::SsmResult;
    use crate::scenario::run::{Evaluation, QueryOutcome, RunMethod};

    fn record(times: &[f64]) -> RunRecord {
        RunRecord {
            scenario: "t".into(),
            method: RunMethod::Both,
            horizon: 10.0,
            evaluations: times
                .iter()
                .map(|&t_r| Evaluation {
                    t_r,
                    outcomes: vec![QueryOutcome {
                        query_id: "q,1".into(),
                        analytic: Some(SsmResult::new(
                            vec![2.0 - t_r, 4.0],
                            Method::Analytic,
                            10.0,
                        )),
                        numeric: Some(SsmResult::new(vec![2.001 - t_r], Method::NumericScan, 6.0)),
                        e_tc_star: Some(0.001),
                    }],
                })
                .collect(),
            snapshots: Vec::new(),
        }
    }

    #[test]
    fn three_rows_and_header() {
        let text = render_csv(&record(&[0.0, 0.1, 0.2]), Method::Analytic);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "T_r,query_id,method,t_c_star,n_roots,e_tc_star");
        assert_eq!(lines[1], "0.000000,\"q,1\",analytic,2.000000,2,0.001000");
        assert_eq!(lines[3], "0.200000,\"q,1\",analytic,1.800000,2,0.001000");
    }

    #[test]
    fn empty_record_is_header_only() {
        let text = render_csv(&record(&[]), Method::NumericScan);
        assert_eq!(text, "T_r,query_id,method,t_c_star,n_roots,e_tc_star\n");
    }

    #[test]
    fn missing_values_are_empty_fields() {
        let mut r = record(&[0.0]);
        r.evaluations[0].outcomes[0].analytic = Some(SsmResult::none(Method::Analytic, 10.0));
        r.evaluations[0].outcomes[0].e_tc_star = None;
        let text = render_csv(&r, Method::Analytic);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "0.000000,\"q,1\",analytic,,0,"
        );
    }

    #[test]
    fn ramp_is_darker_for_sooner_collisions() {
        assert_eq!(color_for(0.0, 10.0), "rgb(120,0,0)");
        assert_eq!(color_for(10.0, 10.0), "rgb(255,200,200)");
        assert_eq!(color_for(50.0, 10.0), "rgb(255,200,200)");
    }

    #[test]
    fn no_risk_snapshot_has_no_colored_entries() {
        let snap = Snapshot {
            t_r: 1.0,
            horizon: 10.0,
            vehicles: vec![crate::scenario::SnapshotCircle {
                owner: "v".into(),
                x: 0.0,
                y: 0.0,
                radius: 1.0,
            }],
            obstacles: Vec::new(),
            upper_boundary: vec![(0.0, 3.0), (10.0, 3.0)],
            lower_boundary: vec![(0.0, -3.0), (10.0, -3.0)],
            risks: Vec::new(),
        };
        let svg = render_svg(&snap);
        assert!(!svg.contains("rgb("));
        assert!(svg.contains("<circle"));
    }
}
