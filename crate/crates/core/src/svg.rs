//! Minimal SVG output for planar point sets and curves.

use std::fmt::Write as _;

/// One layer of a drawing.
pub enum Layer<'a> {
    Points { points: &'a [Vec<f64>], color: &'a str, radius: f64 },
    Polyline { points: &'a [Vec<f64>], color: &'a str, width: f64 },
}

impl Layer<'_> {
    fn points(&self) -> &[Vec<f64>] {
        match self {
            Layer::Points { points, .. } | Layer::Polyline { points, .. } => points,
        }
    }
}

/// Renders the layers in a square canvas of `size` pixels fitted to their
/// joint bounding box, y axis pointing up.
pub fn render(layers: &[Layer<'_>], size: f64) -> String {
    let all = layers.iter().flat_map(|l| l.points().iter());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let pad = 0.05 * size;
    let k = (size - 2.0 * pad) / span;
    let tx = |p: &[f64]| (pad + (p[0] - lo[0]) * k, size - pad - (p[1] - lo[1]) * k);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for layer in layers {
        match layer {
            Layer::Points { points, color, radius } => {
                let _ = writeln!(out, r#"<g fill="{color}">"#);
                for p in points.iter() {
                    let (x, y) = tx(p);
                    let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{radius}"/>"#);
                }
                let _ = writeln!(out, "</g>");
            }
            Layer::Polyline { points, color, width } => {
                let coords: Vec<String> = points
                    .iter()
                    .map(|p| {
                        let (x, y) = tx(p);
                        format!("{x:.3},{y:.3}")
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{}"/>"#,
                    coords.join(" ")
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_layers() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let s = render(
            &[
                Layer::Points { points: &pts, color: "black", radius: 1.0 },
                Layer::Polyline { points: &pts, color: "red", width: 0.5 },
            ],
            100.0,
        );
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.contains("<polyline") && s.ends_with("</svg>\n"));
    }
}
