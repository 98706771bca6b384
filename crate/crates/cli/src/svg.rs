//! Side-by-side SVG of a map: the source mesh, then one image panel per map.
//! Triangles are filled by Jacobian sign using the same classification as
//! the orientation census.

use std::fmt::Write;

use monomap::diagnostics::check_orientation;
use monomap::geometry::{orient, Aabb, DiscreteMap, Vec2};

const PANEL: f64 = 400.0;
const MARGIN: f64 = 20.0;

#[derive(Clone, Debug, Default)]
pub struct SvgOptions {
    /// Circle about the origin drawn over the source panel.
    pub fold_radius: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sign {
    Positive,
    Zero,
    Negative,
}

impl Sign {
    fn class(self) -> &'static str {
        match self {
            Sign::Positive => "pos",
            Sign::Zero => "zero",
            Sign::Negative => "neg",
        }
    }
}

fn signs(map: &DiscreteMap) -> Vec<Sign> {
    let n = map.mesh().num_triangles();
    match check_orientation(map) {
        Ok(c) => {
            let mut s = vec![Sign::Positive; n];
            for &t in &c.zero_triangles {
                s[t] = Sign::Zero;
            }
            for &t in &c.negative_triangles {
                s[t] = Sign::Negative;
            }
            s
        }
        Err(_) => (0..n)
            .map(|t| {
                let [a, b, c] = map.triangle_images(t);
                match orient(a, b, c) {
                    x if x > 0.0 => Sign::Positive,
                    x if x < 0.0 => Sign::Negative,
                    _ => Sign::Zero,
                }
            })
            .collect(),
    }
}

/// Fits a bounding box into one panel, y up.
struct Frame {
    min: Vec2,
    max_y: f64,
    scale: f64,
}

impl Frame {
    fn new(bb: Aabb) -> Self {
        let extent = bb.width().max(bb.height());
        let scale = if extent > 0.0 { (PANEL - 2.0 * MARGIN) / extent } else { 1.0 };
        Frame { min: bb.min, max_y: bb.max.y, scale }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        (MARGIN + (p.x - self.min.x) * self.scale, MARGIN + (self.max_y - p.y) * self.scale)
    }
}

fn panel(out: &mut String, index: usize, title: &str, points: &[Vec2], map: &DiscreteMap, signs: &[Sign], circle: Option<f64>) {
    let frame = Frame::new(Aabb::from_points(points.iter().copied()));
    let _ = writeln!(out, r#"<g transform="translate({},0)">"#, index as f64 * PANEL);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="14">{title}</text>"#);
    // Negative triangles go last so a thin folded band stays visible.
    for pass in [Sign::Positive, Sign::Zero, Sign::Negative] {
        for (t, tri) in map.mesh().triangles().iter().enumerate() {
            if signs[t] != pass {
                continue;
            }
            let _ = write!(out, r#"<polygon class="{}" points=""#, pass.class());
            for (k, &v) in tri.iter().enumerate() {
                let (x, y) = frame.map(points[v]);
                let sep = if k == 0 { "" } else { " " };
                let _ = write!(out, "{sep}{x:.3},{y:.3}");
            }
            out.push_str("\"/>\n");
        }
    }
    if let Some(r) = circle {
        let (cx, cy) = frame.map(Vec2::new(0.0, 0.0));
        let _ = writeln!(out, r#"<circle class="fold" cx="{cx:.3}" cy="{cy:.3}" r="{:.3}"/>"#, r * frame.scale);
    }
    out.push_str("</g>\n");
}

/// Source mesh and the image of `map`, plus the image of `after` when given
/// (it must live on the same mesh).
pub fn emit_svg(map: &DiscreteMap, after: Option<&DiscreteMap>, opts: &SvgOptions) -> String {
    let maps: Vec<&DiscreteMap> = std::iter::once(map).chain(after).collect();
    let width = PANEL * (1 + maps.len()) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL}" viewBox="0 0 {width} {PANEL}">"#
    );
    out.push_str(
        "<style>polygon{stroke:#333;stroke-width:0.2}.pos{fill:#9ecae1}.zero{fill:#bdbdbd}.neg{fill:#e6550d}\
         .fold{fill:none;stroke:#d62728;stroke-width:1.5;stroke-dasharray:6 4}text{font:12px sans-serif}</style>\n",
    );
    let source_signs = vec![Sign::Positive; map.mesh().num_triangles()];
    panel(&mut out, 0, "source", map.mesh().vertices(), map, &source_signs, opts.fold_radius);
    for (i, m) in maps.iter().enumerate() {
        let title = if i == 0 { "image" } else { "result" };
        panel(&mut out, i + 1, title, m.images(), m, &signs(m), None);
    }
    out.push_str("</svg>\n");
    out
}
