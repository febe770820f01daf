//! SVG rendering of a road, optionally with the driven trace and its OOB
//! events: lane edges in grey, the trace in green, OOB markers in red.
//!
//! One SVG unit is one metre. Output is a pure function of the inputs.

use std::fmt::Write as _;

use crate::error::Result;
use crate::formats::{ResultRecord, TestCase};
use crate::geometry::{reconstruct_with_lane_width, CartesianRoad, Pose};

/// Centerline sampling interval, m.
const SAMPLE_STEP: f64 = 0.25;
const MARGIN: f64 = 5.0;
const MARKER_RADIUS: f64 = 0.8;

fn offset_polyline(road: &CartesianRoad, offset: f64) -> Vec<[f64; 2]> {
    let n = (road.length() / SAMPLE_STEP).ceil() as usize;
    (0..=n)
        .map(|i| {
            let p = road.point_at((i as f64 * SAMPLE_STEP).min(road.length()));
            let [nx, ny] = p.normal();
            [p.x + offset * nx, p.y + offset * ny]
        })
        .collect()
}

fn path_data(points: &[[f64; 2]]) -> String {
    let mut d = String::new();
    for (i, [x, y]) in points.iter().enumerate() {
        let _ = write!(d, "{}{:.3},{:.3}", if i == 0 { "M" } else { " L" }, x, -y);
    }
    d
}

/// Renders `case` (reconstructed from its genome at the origin, heading +x)
/// and, when given, the trace and OOB events of `result`.
pub fn render_svg(case: &TestCase, result: Option<&ResultRecord>) -> Result<String> {
    let genome = case.genome()?;
    let road = reconstruct_with_lane_width(&genome, Pose::default(), case.lane_width);
    let half = 0.5 * case.lane_width;
    let left = offset_polyline(&road, half);
    let right = offset_polyline(&road, -half);
    let center = offset_polyline(&road, 0.0);
    let trace: &[[f64; 2]] = result.map_or(&[], |r| &r.trace);
    let markers: Vec<[f64; 2]> = result
        .map(|r| {
            r.oob_events
                .iter()
                .map(|e| {
                    let p = road.point_at(e.arc_position);
                    let [nx, ny] = p.normal();
                    [p.x + e.lateral_offset * nx, p.y + e.lateral_offset * ny]
                })
                .collect()
        })
        .unwrap_or_default();

    let all = left.iter().chain(&right).chain(trace).chain(&markers);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &[x, y] in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(-y);
        y1 = y1.max(-y);
    }
    let (vx, vy) = (x0 - MARGIN, y0 - MARGIN);
    let (vw, vh) = (x1 - x0 + 2.0 * MARGIN, y1 - y0 + 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vx:.3} {vy:.3} {vw:.3} {vh:.3}" width="{:.0}" height="{:.0}">"#,
        vw * 4.0,
        vh * 4.0
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(&case.id));
    let _ = writeln!(svg, r#"<rect class="background" x="{vx:.3}" y="{vy:.3}" width="{vw:.3}" height="{vh:.3}" fill="white"/>"#);
    for edge in [&left, &right] {
        let _ = writeln!(
            svg,
            r#"<path class="lane-boundary" d="{}" fill="none" stroke="grey" stroke-width="0.3"/>"#,
            path_data(edge)
        );
    }
    let _ = writeln!(
        svg,
        r#"<path class="centerline" d="{}" fill="none" stroke="darkgrey" stroke-width="0.15" stroke-dasharray="1,1"/>"#,
        path_data(&center)
    );
    if !trace.is_empty() {
        let _ = writeln!(
            svg,
            r#"<path class="trace" d="{}" fill="none" stroke="green" stroke-width="0.3"/>"#,
            path_data(trace)
        );
    }
    for [x, y] in &markers {
        let _ = writeln!(svg, r#"<circle class="oob" cx="{x:.3}" cy="{:.3}" r="{MARKER_RADIUS}" fill="red"/>"#, -y);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
