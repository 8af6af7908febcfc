//! SVG rendering of experience maps and pose traces.
//!
//! Output is plain text with fixed two-decimal coordinates, so identical
//! inputs give byte-identical files. World +y points up in the image.

use std::fmt::Write as _;

use latentslam_core::domain::Pose2D;
use latentslam_core::experience_map::ExperienceMap;

const MARGIN: f64 = 20.0;
const NODE_COLOUR: &str = "#1f77b4";
const LINK_COLOUR: &str = "#7f7f7f";
const CLOSURE_COLOUR: &str = "#d62728";
const TRACE_COLOUR: &str = "#2ca02c";
const DR_COLOUR: &str = "#ff7f0e";

/// Maps world coordinates into the image.
struct Frame {
    min_x: f64,
    max_y: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, width: u32) -> Self {
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        if min_x > max_x {
            (min_x, max_x, min_y, max_y) = (-1.0, 1.0, -1.0, 1.0);
        }
        let span_x = (max_x - min_x).max(1e-6);
        let span_y = (max_y - min_y).max(1e-6);
        let width = f64::from(width.max(100));
        let scale = ((width - 2.0 * MARGIN) / span_x).min((width - 2.0 * MARGIN) / span_y);
        let height = (span_y * scale + 2.0 * MARGIN).ceil();
        Self {
            min_x,
            max_y,
            scale,
            width,
            height,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (MARGIN + (x - self.min_x) * self.scale, MARGIN + (self.max_y - y) * self.scale)
    }

    fn header(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
            w = self.width,
            h = self.height
        );
        let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    }
}

fn polyline(out: &mut String, frame: &Frame, poses: &[Pose2D], colour: &str, class: &str) {
    if poses.is_empty() {
        return;
    }
    let points: Vec<String> = poses
        .iter()
        .map(|p| {
            let (x, y) = frame.px(p.x, p.y);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        "<polyline class=\"{class}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" points=\"{}\"/>",
        points.join(" ")
    );
}

/// Nodes as circles and links as lines; loop closures drawn in red. An
/// optional dead-reckoning trace is drawn underneath.
pub fn map_svg(map: &ExperienceMap, dead_reckoning: Option<&[Pose2D]>, width: u32) -> String {
    let nodes = map.experiences();
    let dr = dead_reckoning.unwrap_or(&[]);
    let frame = Frame::fit(nodes.iter().map(|e| &e.map_pose).chain(dr).map(|p| (p.x, p.y)), width);
    let mut out = String::new();
    frame.header(&mut out);
    polyline(&mut out, &frame, dr, DR_COLOUR, "dead-reckoning");
    for l in map.links() {
        let (x1, y1) = frame.px(nodes[l.from_id].map_pose.x, nodes[l.from_id].map_pose.y);
        let (x2, y2) = frame.px(nodes[l.to_id].map_pose.x, nodes[l.to_id].map_pose.y);
        let (colour, class) = if l.loop_closure {
            (CLOSURE_COLOUR, "loop-closure")
        } else {
            (LINK_COLOUR, "link")
        };
        let _ = writeln!(
            out,
            "<line class=\"{class}\" x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{colour}\" stroke-width=\"1.5\"/>"
        );
    }
    for e in nodes {
        let (x, y) = frame.px(e.map_pose.x, e.map_pose.y);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{NODE_COLOUR}\"/>");
    }
    out.push_str("</svg>\n");
    out
}

/// Decoded pose trace as a polyline, with an optional dead-reckoning overlay.
pub fn trace_svg(poses: &[Pose2D], dead_reckoning: Option<&[Pose2D]>, width: u32) -> String {
    let dr = dead_reckoning.unwrap_or(&[]);
    let frame = Frame::fit(poses.iter().chain(dr).map(|p| (p.x, p.y)), width);
    let mut out = String::new();
    frame.header(&mut out);
    polyline(&mut out, &frame, dr, DR_COLOUR, "dead-reckoning");
    polyline(&mut out, &frame, poses, TRACE_COLOUR, "decoded");
    out.push_str("</svg>\n");
    out
}
