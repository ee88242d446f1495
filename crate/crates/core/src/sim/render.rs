//! Overhead SVG rendering of trajectory logs: lane geometry plus per-vehicle
//! position traces, colored by the first active abstract state at each step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::template::{Axis, LaneRole, SceneTemplate};
use super::{template, TrajectoryLog};

const TRACE_PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#bcbd22",
];
const NEUTRAL: &str = "#7f7f7f";

/// Render a log against the built-in template for its scene kind.
pub fn render_svg(log: &TrajectoryLog) -> String {
    render_svg_with(log, template::builtin(log.scene_kind))
}

pub fn render_svg_with(log: &TrajectoryLog, template: &SceneTemplate) -> String {
    // World window: template extent along x, lanes plus margin across.
    let max_x = log
        .rows
        .iter()
        .map(|r| r.x)
        .fold(template.extent, f64::max)
        + 20.0;
    let (min_y, max_y) = log
        .rows
        .iter()
        .map(|r| r.y)
        .chain(template.lanes.iter().filter(|l| l.axis == Axis::X).map(|l| l.center))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
            (lo.min(y), hi.max(y))
        });
    let (min_y, max_y) = if min_y.is_finite() {
        (min_y - 8.0, max_y + 8.0)
    } else {
        (-8.0, 16.0)
    };

    let scale = 2.0;
    let width = max_x * scale;
    let height = (max_y - min_y) * scale;
    let tx = |x: f64| x * scale;
    let ty = |y: f64| (y - min_y) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.1} {height:.1}">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#fbfbf8"/>"##);

    // Road surfaces.
    for lane in &template.lanes {
        let half = template.lane_width / 2.0;
        match lane.axis {
            Axis::X => {
                let x0 = tx(lane.span[0].max(0.0));
                let x1 = tx(lane.span[1].min(max_x));
                let y0 = ty(lane.center - half);
                let h = template.lane_width * scale;
                let fill = if lane.role == LaneRole::Ramp { "#e8e0d0" } else { "#e0e0e0" };
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{h:.1}" fill="{fill}"/>"##,
                    x1 - x0
                );
                let _ = writeln!(
                    svg,
                    r##"<line x1="{x0:.1}" y1="{:.1}" x2="{x1:.1}" y2="{:.1}" stroke="#ffffff" stroke-width="0.8" stroke-dasharray="6,6"/>"##,
                    ty(lane.center),
                    ty(lane.center)
                );
            }
            Axis::Y => {
                let x0 = tx(lane.center - half);
                let w = template.lane_width * scale;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x0:.1}" y="0" width="{w:.1}" height="{height:.1}" fill="#e0e0e0"/>"##
                );
            }
        }
    }
    if let Some(ib) = template.intersection_box {
        let x0 = tx(ib.center_x - ib.half);
        let y0 = ty(ib.center_y - ib.half);
        let s = 2.0 * ib.half * scale;
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{s:.1}" height="{s:.1}" fill="none" stroke="#b0a080" stroke-width="1" stroke-dasharray="4,4"/>"##
        );
    }

    // Stable color per abstract state, in order of first appearance.
    let mut state_colors: BTreeMap<&str, &str> = BTreeMap::new();
    for row in &log.rows {
        if let Some(a) = &row.annotation {
            for s in &a.active_states {
                let next = TRACE_PALETTE[state_colors.len() % TRACE_PALETTE.len()];
                state_colors.entry(s.as_str()).or_insert(next);
            }
        }
    }

    // Traces: short segments between consecutive positions, colored by the
    // first active state of the segment's end row.
    let mut ids: Vec<u32> = log.rows.iter().map(|r| r.vehicle_id).collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let rows: Vec<_> = log.vehicle_rows(id).collect();
        for pair in rows.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let color = b
                .annotation
                .as_ref()
                .and_then(|ann| ann.active_states.first())
                .and_then(|s| state_colors.get(s.as_str()).copied())
                .unwrap_or(NEUTRAL);
            let w = if b.controlled { 1.6 } else { 0.8 };
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="{w}" stroke-linecap="round"/>"##,
                tx(a.x),
                ty(a.y),
                tx(b.x),
                ty(b.y)
            );
        }
        if let Some(last) = rows.last() {
            if last.crashed {
                let _ = writeln!(
                    svg,
                    r##"<text x="{:.1}" y="{:.1}" font-size="8" fill="#d62728">x</text>"##,
                    tx(last.x),
                    ty(last.y)
                );
            }
        }
    }

    // Legend.
    let mut ly = 12.0;
    for (state, color) in &state_colors {
        let _ = writeln!(
            svg,
            r##"<rect x="6" y="{:.1}" width="10" height="4" fill="{color}"/><text x="20" y="{:.1}" font-size="8" fill="#333">{state}</text>"##,
            ly - 4.0,
            ly
        );
        ly += 10.0;
    }

    svg.push_str("</svg>\n");
    svg
}
