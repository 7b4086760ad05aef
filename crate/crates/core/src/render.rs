//! Static SVG pictures of a scenario, the explored states and a planned path.

use std::fmt::Write;

use crate::geometry::{ConvexPolygon, Pose};
use crate::path::PathFile;
use crate::scenario::{ObstacleClass, Scenario};
use crate::vehicle::body;

/// Pixels per metre.
pub const SCALE: f64 = 20.0;
const MARGIN: f64 = 1.0;

fn class_color(class: ObstacleClass) -> &'static str {
    match class {
        ObstacleClass::Vehicle => "#4a6fa5",
        ObstacleClass::Curb => "#7f7f7f",
        ObstacleClass::Pillar => "#b5523b",
    }
}

fn points(poly: &ConvexPolygon) -> String {
    poly.vertices()
        .iter()
        .map(|p| format!("{:.3},{:.3}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

fn polygon(out: &mut String, poly: &ConvexPolygon, style: &str) {
    let _ = writeln!(out, r#"  <polygon points="{}" {style}/>"#, points(poly));
}

/// Renders in world coordinates with y pointing up; `visited` draws as pale footprints.
pub fn render_svg(scenario: &Scenario, path: Option<&PathFile>, visited: &[Pose]) -> String {
    let b = &scenario.bounds;
    let (w, h) = (b.width() + 2.0 * MARGIN, b.height() + 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
        w * SCALE,
        h * SCALE,
        w,
        h
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&scenario.id));
    let _ = writeln!(
        out,
        r#"<g transform="translate({:.3},{:.3}) scale(1,-1)" stroke-width="0.04">"#,
        MARGIN - b.min_x,
        MARGIN + b.max_y
    );
    let _ = writeln!(
        out,
        r##"  <rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#fafafa" stroke="#333333"/>"##,
        b.min_x,
        b.min_y,
        b.width(),
        b.height()
    );
    for o in &scenario.obstacles {
        polygon(
            &mut out,
            &o.polygon,
            &format!(r#"fill="{}" stroke="none""#, class_color(o.class)),
        );
    }
    for pose in visited {
        polygon(
            &mut out,
            &body(&scenario.vehicle, pose),
            r##"fill="#d6e4f0" fill-opacity="0.35" stroke="#9fb8d0" stroke-width="0.02""##,
        );
    }
    polygon(
        &mut out,
        &body(&scenario.vehicle, &scenario.start.pose),
        r##"fill="none" stroke="#2e8b57""##,
    );
    polygon(
        &mut out,
        &body(&scenario.vehicle, &scenario.goal),
        r##"fill="none" stroke="#c0392b""##,
    );
    if let Some(p) = path.filter(|p| p.poses.len() > 1) {
        let pts: Vec<String> = p.poses.iter().map(|q| format!("{:.3},{:.3}", q.x, q.y)).collect();
        let _ = writeln!(
            out,
            r##"  <polyline points="{}" fill="none" stroke="#111111" stroke-width="0.08"/>"##,
            pts.join(" ")
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
