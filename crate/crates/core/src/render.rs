//! Deterministic SVG output using only `svg`, `g`, `line`, `circle` and
//! `text` elements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::layout::Layout;

/// Height reserved under each grid cell for its caption.
pub const CAPTION_HEIGHT: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    /// Side of the square canvas, in pixels.
    pub size: f64,
    pub node_radius: f64,
    pub stroke_width: f64,
    pub margin: f64,
    pub labels: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            size: 400.0,
            node_radius: 5.0,
            stroke_width: 1.0,
            margin: 20.0,
            labels: false,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.size, self.node_radius, self.stroke_width, self.margin];
        if dims.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(invalid("render dimensions must be positive and finite"));
        }
        if self.margin >= self.size / 2.0 {
            return Err(invalid("margin must be smaller than half the canvas"));
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Canvas coordinates for every node: the bounding box is scaled uniformly to
/// fit inside the margins and centered. A layout with no extent maps every
/// node to the canvas center.
pub fn canvas_positions(x: &Layout, style: &RenderStyle) -> Vec<[f64; 2]> {
    let half = style.size / 2.0;
    let pts = x.positions();
    if pts.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if extent <= 0.0 {
        return vec![[half, half]; pts.len()];
    }
    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let span = style.size - 2.0 * style.margin;
    pts.iter()
        .map(|p| {
            [
                half + (p[0] - mid[0]) / extent * span,
                half + (p[1] - mid[1]) / extent * span,
            ]
        })
        .collect()
}

fn body(g: &Graph, x: &Layout, style: &RenderStyle) -> Result<String> {
    style.validate()?;
    if x.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            found: x.len(),
        });
    }
    if x.positions().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layout coordinates".into()));
    }
    let pos = canvas_positions(x, style);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<g stroke=\"#555555\" stroke-width=\"{}\">",
        num(style.stroke_width)
    );
    for &(i, j) in g.edges() {
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
            num(pos[i][0]),
            num(pos[i][1]),
            num(pos[j][0]),
            num(pos[j][1])
        );
    }
    out.push_str("</g>\n<g fill=\"#1f77b4\">\n");
    for p in &pos {
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\"/>",
            num(p[0]),
            num(p[1]),
            num(style.node_radius)
        );
    }
    out.push_str("</g>\n");
    if style.labels {
        out.push_str("<g font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">\n");
        for (i, p) in pos.iter().enumerate() {
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\">{i}</text>",
                num(p[0]),
                num(p[1] - style.node_radius - 2.0)
            );
        }
        out.push_str("</g>\n");
    }
    Ok(out)
}

fn document(width: f64, height: f64, inner: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{inner}</svg>\n",
        w = num(width),
        h = num(height)
    )
}

/// One line per edge and one circle per node.
pub fn render_svg(g: &Graph, x: &Layout, style: &RenderStyle) -> Result<String> {
    Ok(document(style.size, style.size, &body(g, x, style)?))
}

/// Top-left corner of cell `index` in a row-major grid.
pub fn cell_origin(index: usize, columns: usize, style: &RenderStyle) -> [f64; 2] {
    let (row, col) = (index / columns, index % columns);
    [
        col as f64 * style.size,
        row as f64 * (style.size + CAPTION_HEIGHT),
    ]
}

/// Row-major grid of drawings, each captioned underneath.
pub fn render_grid(
    items: &[(&Graph, &Layout, &str)],
    columns: usize,
    style: &RenderStyle,
) -> Result<String> {
    if items.is_empty() {
        return Err(invalid("grid needs at least one item"));
    }
    if columns == 0 {
        return Err(invalid("grid needs at least one column"));
    }
    let cols = columns.min(items.len());
    let rows = items.len().div_ceil(cols);
    let mut inner = String::new();
    for (k, (g, x, caption)) in items.iter().enumerate() {
        let [ox, oy] = cell_origin(k, cols, style);
        let _ = writeln!(
            inner,
            "<g transform=\"translate({},{})\">",
            num(ox),
            num(oy)
        );
        inner.push_str(&body(g, x, style)?);
        let _ = writeln!(
            inner,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            num(style.size / 2.0),
            num(style.size + CAPTION_HEIGHT * 0.7),
            escape(caption)
        );
        inner.push_str("</g>\n");
    }
    Ok(document(
        cols as f64 * style.size,
        rows as f64 * (style.size + CAPTION_HEIGHT),
        &inner,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(svg: &str, tag: &str) -> usize {
        svg.matches(&format!("<{tag} ")).count()
    }

    #[test]
    fn element_counts() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let x = Layout::new(vec![[0.0, 0.0], [1.0, 2.0]]).unwrap();
        let svg = render_svg(&g, &x, &RenderStyle::default()).unwrap();
        assert_eq!(count(&svg, "line"), 1);
        assert_eq!(count(&svg, "circle"), 2);

        let empty = Graph::empty(3).unwrap();
        let svg = render_svg(&empty, &Layout::random(3, 1), &RenderStyle::default()).unwrap();
        assert_eq!(count(&svg, "line"), 0);
        assert_eq!(count(&svg, "circle"), 3);
    }

    #[test]
    fn degenerate_layout_renders_at_center() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let x = Layout::new(vec![[2.0, 2.0]; 3]).unwrap();
        let svg = render_svg(&g, &x, &RenderStyle::default()).unwrap();
        assert_eq!(svg.matches("cx=\"200.00\" cy=\"200.00\"").count(), 3);
    }

    #[test]
    fn only_allowed_elements() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let style = RenderStyle {
            labels: true,
            ..RenderStyle::default()
        };
        let x = Layout::random(3, 2);
        let svg = render_grid(&[(&g, &x, "a <b>")], 1, &style).unwrap();
        for tag in svg
            .split('<')
            .skip(1)
            .map(|t| t.trim_start_matches('/').split([' ', '>']).next().unwrap())
        {
            assert!(
                ["svg", "g", "line", "circle", "text"].contains(&tag),
                "{tag}"
            );
        }
        assert!(svg.contains("a &lt;b&gt;"));
    }

    #[test]
    fn errors() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert!(render_svg(&g, &Layout::random(3, 0), &RenderStyle::default()).is_err());
        let bad = RenderStyle {
            margin: 250.0,
            ..RenderStyle::default()
        };
        assert!(render_svg(&g, &Layout::random(2, 0), &bad).is_err());
        assert!(render_grid(&[], 2, &RenderStyle::default()).is_err());
    }
}
