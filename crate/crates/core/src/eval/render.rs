use std::fmt::Write;

use crate::seq2seq::AlignmentTrace;
use crate::worldsim::{apply_action, Action, AgentPose, Floor, Heading, WorldError, WorldMap};

use super::EvalError;

/// Heatmap cell size and path grid spacing, in SVG units.
pub const CELL: f64 = 24.0;
pub const MARGIN: f64 = 40.0;
const LABEL: f64 = 90.0;
const SPACING: f64 = 60.0;

/// An alignment heatmap as an SVG document and an 8-bit PGM raster with
/// one pixel per (action, token) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub svg: String,
    pub pgm: Vec<u8>,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn quantize(alpha: f64) -> u8 {
    (alpha.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn action_label(a: Action) -> &'static str {
    match a {
        Action::Forward => "FORWARD",
        Action::TurnLeft => "TURN_LEFT",
        Action::TurnRight => "TURN_RIGHT",
        Action::Stop => "STOP",
    }
}

/// Rows are actions and columns are tokens; intensity is linear in `α`.
/// In the raster brighter means more weight, in the SVG darker does.
pub fn render_alignment(trace: &AlignmentTrace, tokens: &[String], actions: &[Action]) -> Result<Heatmap, EvalError> {
    if trace.steps() != actions.len() {
        return Err(EvalError::Contract(format!(
            "trace has {} rows for {} actions",
            trace.steps(),
            actions.len()
        )));
    }
    if let Some((t, row)) = trace.weights.iter().enumerate().find(|(_, r)| r.len() != tokens.len()) {
        return Err(EvalError::Contract(format!(
            "trace row {t} has {} columns for {} tokens",
            row.len(),
            tokens.len()
        )));
    }
    let (rows, cols) = (actions.len(), tokens.len());

    let mut pgm = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    pgm.extend(trace.weights.iter().flatten().map(|&a| quantize(a)));

    let width = LABEL + cols as f64 * CELL + 10.0;
    let height = LABEL + rows as f64 * CELL + 10.0;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    for (j, tok) in tokens.iter().enumerate() {
        let x = LABEL + (j as f64 + 0.5) * CELL;
        writeln!(
            svg,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(tok),
            y = LABEL - 6.0
        )
        .unwrap();
    }
    for (t, (row, &a)) in trace.weights.iter().zip(actions).enumerate() {
        let y = LABEL + t as f64 * CELL;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL - 6.0,
            y + CELL * 0.65,
            action_label(a)
        )
        .unwrap();
        for (j, &alpha) in row.iter().enumerate() {
            let g = 255 - quantize(alpha);
            writeln!(
                svg,
                r#"<rect class="cell" data-row="{t}" data-col="{j}" data-alpha="{alpha}" x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({g},{g},{g})"/>"#,
                LABEL + j as f64 * CELL
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    Ok(Heatmap { svg, pgm })
}

/// SVG coordinates of grid point `(x, y)`; north is up.
pub fn canvas_point(map: &WorldMap, x: i32, y: i32) -> (f64, f64) {
    let min_x = map.nodes().map(|n| n.x).min().unwrap_or(0);
    let max_y = map.nodes().map(|n| n.y).max().unwrap_or(0);
    (
        MARGIN + f64::from(x - min_x) * SPACING,
        MARGIN + f64::from(max_y - y) * SPACING,
    )
}

fn floor_color(f: Floor) -> &'static str {
    match f {
        Floor::Grass => "#3a9d23",
        Floor::Brick => "#b5472b",
        Floor::Wood => "#c89b5a",
        Floor::Gravel => "#8c8c8c",
        Floor::Blue => "#2f6fdf",
        Floor::Flower => "#e075c4",
        Floor::Octagon => "#e8c930",
    }
}

fn object_letter(name: &str) -> String {
    name[..1].to_ascii_uppercase()
}

/// Draws hallways colored by floor pattern, painting initials along them,
/// object letters at intersections, and the walked path with start and end
/// markers.
pub fn render_path(map: &WorldMap, start: AgentPose, actions: &[Action]) -> Result<String, EvalError> {
    if !map.contains(start.node) {
        return Err(EvalError::Contract(format!(
            "start node {} is not on map {}",
            start.node,
            map.name()
        )));
    }
    let mut poses = vec![start];
    for (step, &a) in actions.iter().enumerate() {
        if a == Action::Stop && step + 1 != actions.len() {
            return Err(EvalError::Infeasible {
                step,
                source: WorldError::StopNotLast(step),
            });
        }
        let next = apply_action(map, *poses.last().unwrap(), a).map_err(|e| {
            let source = match e {
                WorldError::Blocked { pose, .. } => WorldError::Blocked { pose, step },
                other => other,
            };
            EvalError::Infeasible { step, source }
        })?;
        poses.push(next);
    }

    let pt = |id| {
        let n = map.node(id).expect("node on map");
        canvas_point(map, n.x, n.y)
    };
    let (w, h) = map.nodes().fold((0.0f64, 0.0f64), |(w, h), n| {
        let (x, y) = canvas_point(map, n.x, n.y);
        (w.max(x), h.max(y))
    });
    let (w, h) = (w + MARGIN + 110.0, h + MARGIN);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<title>{}</title>"#, escape(map.name())).unwrap();
    for e in map.edges() {
        let (a, b) = (pt(e.a), pt(e.b));
        writeln!(
            svg,
            r#"<line class="hall" data-floor="{}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="10" stroke-linecap="round"/>"#,
            e.floor,
            a.0,
            a.1,
            b.0,
            b.1,
            floor_color(e.floor)
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text class="painting" x="{}" y="{}" font-size="9" fill="#333">{}</text>"##,
            (a.0 + b.0) / 2.0 + 4.0,
            (a.1 + b.1) / 2.0 - 6.0,
            &e.painting.as_str()[..1]
        )
        .unwrap();
    }
    for n in map.nodes() {
        let (x, y) = canvas_point(map, n.x, n.y);
        writeln!(
            svg,
            r##"<circle class="node" data-node="{}" cx="{x}" cy="{y}" r="4" fill="#222"/>"##,
            n.id
        )
        .unwrap();
        if let Some(o) = n.object {
            writeln!(
                svg,
                r#"<text class="object" data-node="{}" x="{}" y="{}" font-weight="bold">{}</text>"#,
                n.id,
                x + 7.0,
                y + 14.0,
                object_letter(o.as_str())
            )
            .unwrap();
        }
    }
    let points: Vec<String> = poses
        .iter()
        .map(|p| {
            let (x, y) = pt(p.node);
            format!("{x},{y}")
        })
        .collect();
    writeln!(
        svg,
        r#"<polyline class="path" points="{}" fill="none" stroke="black" stroke-width="3" stroke-dasharray="6 4"/>"#,
        points.join(" ")
    )
    .unwrap();
    let (sx, sy) = pt(start.node);
    writeln!(
        svg,
        r#"<circle id="start" data-node="{}" cx="{sx}" cy="{sy}" r="9" fill="none" stroke="green" stroke-width="3"/>"#,
        start.node
    )
    .unwrap();
    let end = *poses.last().unwrap();
    let (ex, ey) = pt(end.node);
    let (dx, dy) = heading_vector(end.orientation);
    writeln!(
        svg,
        r#"<rect id="end" data-node="{}" data-orientation="{}" x="{}" y="{}" width="16" height="16" fill="none" stroke="red" stroke-width="3"/>"#,
        end.node,
        end.orientation.degrees(),
        ex - 8.0,
        ey - 8.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line class="heading" x1="{ex}" y1="{ey}" x2="{}" y2="{}" stroke="red" stroke-width="2"/>"#,
        ex + dx * 18.0,
        ey + dy * 18.0
    )
    .unwrap();
    let lx = w - 100.0;
    for (i, f) in Floor::ALL.iter().enumerate() {
        let y = MARGIN + i as f64 * 16.0;
        writeln!(
            svg,
            r#"<rect x="{lx}" y="{}" width="12" height="10" fill="{}"/><text x="{}" y="{}">{f}</text>"#,
            y - 9.0,
            floor_color(*f),
            lx + 16.0,
            y
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn heading_vector(h: Heading) -> (f64, f64) {
    let (dx, dy) = h.delta();
    (f64::from(dx), -f64::from(dy))
}
