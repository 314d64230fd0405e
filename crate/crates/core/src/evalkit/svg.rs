//! Minimal hand-written SVG charts.

use std::fmt::Write;

use crate::models::neural::TrainingCurve;
use crate::numerics::Matrix;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        title
    );
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{bx:.2},{TOP:.2} L{bx:.2},{by:.2} L{:.2},{by:.2}" fill="none" stroke="black"/>"#,
        W - RIGHT
    );
    let _ = writeln!(
        out,
        r#"<text x="{bx:.2}" y="{:.2}" text-anchor="start">{:.4}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#,
        by + 16.0,
        frame.x0,
        W - RIGHT,
        by + 16.0,
        frame.x1
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{by:.2}" text-anchor="end">{:.4}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#,
        bx - 4.0,
        frame.y0,
        bx - 4.0,
        TOP + 4.0,
        frame.y1
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        x_label
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        y_label
    );
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str, label: &str) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{label}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Line chart of train and validation MAE against epoch.
pub fn curve_svg(model: &str, curve: &TrainingCurve) -> String {
    let frame = Frame::new(
        curve.iter().map(|p| p.epoch as f64),
        curve.iter().flat_map(|p| [p.train_mae, p.val_mae]),
    );
    let mut out = String::new();
    header(&mut out, &format!("{} MAE over epochs", model), &frame, "epoch", "MAE");
    let train: Vec<(f64, f64)> = curve.iter().map(|p| (p.epoch as f64, p.train_mae)).collect();
    let val: Vec<(f64, f64)> = curve.iter().map(|p| (p.epoch as f64, p.val_mae)).collect();
    polyline(&mut out, &frame, &train, "#1f77b4", "train");
    polyline(&mut out, &frame, &val, "#d62728", "val");
    let lx = W - RIGHT - 110.0;
    let _ = writeln!(
        out,
        "<text x=\"{lx:.2}\" y=\"{:.2}\" fill=\"#1f77b4\">train MAE</text><text x=\"{lx:.2}\" y=\"{:.2}\" fill=\"#d62728\">validation MAE</text>",
        TOP + 14.0,
        TOP + 30.0
    );
    out.push_str("</svg>\n");
    out
}

/// One panel per tendon with the actual, predicted and absolute-error series
/// over validation sample index.
pub fn pred_vs_actual_svg(model: &str, pred: &Matrix, actual: &Matrix) -> String {
    let n = pred.rows().min(actual.rows());
    let panel_h = H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" viewBox="0 0 {W} {}" font-family="sans-serif" font-size="12">"#,
        3.0 * panel_h,
        3.0 * panel_h
    );
    let colors = [
        ("actual", "#1f77b4"),
        ("predicted", "#ff7f0e"),
        ("abs_error", "#2ca02c"),
    ];
    for k in 0..3 {
        let act: Vec<f64> = (0..n).map(|i| actual[(i, k)]).collect();
        let prd: Vec<f64> = (0..n).map(|i| pred[(i, k)]).collect();
        let err: Vec<f64> = act.iter().zip(&prd).map(|(a, p)| (p - a).abs()).collect();
        let frame = Frame::new(
            (0..n.max(1)).map(|i| i as f64),
            act.iter().chain(&prd).chain(&err).copied(),
        );
        let mut panel = String::new();
        header(
            &mut panel,
            &format!("{} L{}: actual vs predicted", model, k + 1),
            &frame,
            "validation sample",
            "tendon length change",
        );
        // drop the nested <svg> opener; panels share the outer document
        let body = panel.split_once('\n').map(|(_, b)| b).unwrap_or("");
        let _ = writeln!(out, r#"<g transform="translate(0 {:.2})">"#, k as f64 * panel_h);
        out.push_str(body);
        for (series, (label, color)) in [&act, &prd, &err].iter().zip(colors) {
            let pts: Vec<(f64, f64)> = series.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
            polyline(&mut out, &frame, &pts, color, label);
        }
        for (j, (label, color)) in colors.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
                W - RIGHT - 90.0,
                TOP + 14.0 + 14.0 * j as f64,
                color,
                label
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Achieved against target angle along one swept axis, one polyline per
/// controller plus the `target` diagonal.
pub fn overlay_svg(axis: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let frame = Frame::new(
        series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)),
        series.iter().flat_map(|(_, pts)| pts.iter().flat_map(|p| [p.0, p.1])),
    );
    let mut out = String::new();
    header(
        &mut out,
        &format!("{} sweep: achieved vs target", axis),
        &frame,
        &format!("target {} (deg)", axis),
        &format!("achieved {} (deg)", axis),
    );
    let diag = [(frame.x0, frame.x0), (frame.x1, frame.x1)];
    polyline(&mut out, &frame, &diag, "#7f7f7f", "target");
    let palette = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];
    for (j, (name, pts)) in series.iter().enumerate() {
        let color = palette[j % palette.len()];
        polyline(&mut out, &frame, pts, color, name);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
            LEFT + 10.0,
            TOP + 14.0 + 14.0 * j as f64,
            color,
            name
        );
    }
    out.push_str("</svg>\n");
    out
}
