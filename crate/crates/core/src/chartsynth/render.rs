//! Native chart renderer. Charts are laid out once as a scene of primitives,
//! which is then written out as SVG and rasterized at 490×490.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use image::{Rgb, RgbImage};

use super::spec::{
    ChartSpec, LegendLocation, LineStyle, Marker, Orientation, TitlePosition, TypeSpecific,
};
use super::table::MetaTable;
use crate::error::{Error, Result};

pub const CANVAS: u32 = 490;
const SIZE: f64 = CANVAS as f64;
const PLOT: (f64, f64, f64, f64) = (70.0, 60.0, 460.0, 420.0);
const INK: [u8; 3] = [0x33, 0x33, 0x33];
const GRID: [u8; 3] = [0xdd, 0xdd, 0xdd];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    Start,
    Middle,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Polygon {
        points: Vec<(f64, f64)>,
    },
    /// Stroked open path; `dash` is `(on, off)` in pixels.
    Polyline {
        points: Vec<(f64, f64)>,
        width: f64,
        dash: Option<(f64, f64)>,
    },
    /// Angles in radians, clockwise from twelve o'clock.
    Wedge {
        cx: f64,
        cy: f64,
        r: f64,
        a0: f64,
        a1: f64,
    },
    Text {
        x: f64,
        y: f64,
        size: f64,
        anchor: Anchor,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prim {
    pub shape: Shape,
    pub color: [u8; 3],
    pub class: Option<&'static str>,
}

/// Primitives grouped in drawing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub groups: Vec<(&'static str, Vec<Prim>)>,
}

pub fn parse_hex(s: &str) -> Option<[u8; 3]> {
    let h = s.strip_prefix('#')?;
    if h.len() != 6 {
        return None;
    }
    let v = u32::from_str_radix(h, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn lighten(c: [u8; 3], t: f64) -> [u8; 3] {
    c.map(|v| (f64::from(v) + (255.0 - f64::from(v)) * t).round() as u8)
}

/// Smallest of {1, 2, 2.5, 5, 10}·10^k that is ≥ `m`.
fn nice_max(m: f64) -> f64 {
    if m.is_nan() || m <= 0.0 {
        return 1.0;
    }
    let base = 10f64.powf(m.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|f| f * base)
        .find(|v| *v >= m)
        .unwrap_or(10.0 * base)
}

fn tick_label(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    format!("{r}")
}

fn text(x: f64, y: f64, size: f64, anchor: Anchor, s: &str) -> Prim {
    Prim {
        shape: Shape::Text {
            x,
            y,
            size,
            anchor,
            text: s.to_string(),
        },
        color: INK,
        class: None,
    }
}

fn line(points: Vec<(f64, f64)>, width: f64, color: [u8; 3]) -> Prim {
    Prim {
        shape: Shape::Polyline {
            points,
            width,
            dash: None,
        },
        color,
        class: None,
    }
}

fn marker_shape(marker: Marker, x: f64, y: f64, r: f64) -> Shape {
    match marker {
        Marker::Circle => Shape::Circle { cx: x, cy: y, r },
        Marker::Square => Shape::Rect {
            x: x - r,
            y: y - r,
            w: 2.0 * r,
            h: 2.0 * r,
        },
        Marker::Triangle => Shape::Polygon {
            points: vec![(x, y - r), (x + r, y + r), (x - r, y + r)],
        },
    }
}

pub fn build_scene(spec: &ChartSpec, table: &MetaTable) -> Result<Scene> {
    spec.check_against(table).map_err(Error::Render)?;
    let palette: Vec<[u8; 3]> = spec
        .palette
        .iter()
        .map(|c| parse_hex(c).ok_or_else(|| Error::Render(format!("bad color {c}"))))
        .collect::<Result<_>>()?;
    let label_size = f64::from(spec.fonts.label_size);
    let (x0, y0, x1, y1) = PLOT;
    let (rows, series) = (table.num_rows(), table.num_series());

    let mut axes = Vec::new();
    let mut grid = Vec::new();
    let mut marks = Vec::new();
    // Legend entries: (label, color).
    let mut legend_entries: Vec<(String, [u8; 3])> = table
        .col_labels
        .iter()
        .cloned()
        .zip(palette.iter().copied())
        .collect();

    if let TypeSpecific::Pie { explode } = &spec.type_specific {
        let data = table.series(0);
        if data.iter().any(|v| *v < 0.0) {
            return Err(Error::Render("pie slices must be nonnegative".into()));
        }
        let total: f64 = data.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Render("pie data sums to zero".into()));
        }
        let (cx, cy, r) = (SIZE / 2.0, SIZE / 2.0 + 10.0, 140.0);
        let mut a = 0.0;
        legend_entries.clear();
        for (i, (&v, &e)) in data.iter().zip(explode).enumerate() {
            let sweep = v / total * TAU;
            let mid = a + sweep / 2.0;
            let color = lighten(palette[0], 0.7 * i as f64 / rows as f64);
            marks.push(Prim {
                shape: Shape::Wedge {
                    cx: cx + e * r * mid.sin(),
                    cy: cy - e * r * mid.cos(),
                    r,
                    a0: a,
                    a1: a + sweep,
                },
                color,
                class: Some("mark"),
            });
            legend_entries.push((table.row_labels[i].clone(), color));
            a += sweep;
        }
    } else {
        let max = table.values.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        let top = nice_max(max);
        let horizontal = matches!(
            spec.type_specific,
            TypeSpecific::Bar {
                orientation: Orientation::Horizontal,
                ..
            }
        );
        axes.push(line(vec![(x0, y1), (x1, y1)], 1.5, INK));
        axes.push(line(vec![(x0, y0), (x0, y1)], 1.5, INK));
        for k in 0..=5 {
            let v = top * k as f64 / 5.0;
            let label = tick_label(v);
            if horizontal {
                let x = x0 + (x1 - x0) * k as f64 / 5.0;
                axes.push(text(
                    x,
                    y1 + 6.0 + label_size,
                    label_size,
                    Anchor::Middle,
                    &label,
                ));
                if spec.grid && k > 0 {
                    grid.push(line(vec![(x, y0), (x, y1)], 1.0, GRID));
                }
            } else {
                let y = y1 - (y1 - y0) * k as f64 / 5.0;
                axes.push(text(
                    x0 - 6.0,
                    y + label_size / 3.0,
                    label_size,
                    Anchor::End,
                    &label,
                ));
                if spec.grid && k > 0 {
                    grid.push(line(vec![(x0, y), (x1, y)], 1.0, GRID));
                }
            }
        }
        let span_x = x1 - x0;
        let span_y = y1 - y0;
        for (i, l) in table.row_labels.iter().enumerate() {
            if horizontal {
                let y = y0 + span_y * (i as f64 + 0.5) / rows as f64;
                axes.push(text(
                    x0 - 6.0,
                    y + label_size / 3.0,
                    label_size,
                    Anchor::End,
                    l,
                ));
            } else {
                let x = x0 + span_x * (i as f64 + 0.5) / rows as f64;
                axes.push(text(
                    x,
                    y1 + 6.0 + label_size,
                    label_size,
                    Anchor::Middle,
                    l,
                ));
            }
        }
        let px = |i: usize| x0 + span_x * (i as f64 + 0.5) / rows as f64;
        let py = |v: f64| y1 - span_y * v / top;

        match &spec.type_specific {
            TypeSpecific::Line { marker, style } => {
                let dash = match style {
                    LineStyle::Solid => None,
                    LineStyle::Dashed => Some((8.0, 5.0)),
                    LineStyle::Dotted => Some((2.0, 4.0)),
                };
                for (j, &color) in palette.iter().enumerate() {
                    let points: Vec<(f64, f64)> = table
                        .values
                        .iter()
                        .enumerate()
                        .map(|(i, r)| (px(i), py(r[j])))
                        .collect();
                    marks.push(Prim {
                        shape: Shape::Polyline {
                            points: points.clone(),
                            width: 2.0,
                            dash,
                        },
                        color,
                        class: Some("mark"),
                    });
                    for (x, y) in points {
                        marks.push(Prim {
                            shape: marker_shape(*marker, x, y, 3.5),
                            color,
                            class: Some("marker"),
                        });
                    }
                }
            }
            TypeSpecific::Scatter { marker } => {
                for (j, &color) in palette.iter().enumerate() {
                    for (i, r) in table.values.iter().enumerate() {
                        marks.push(Prim {
                            shape: marker_shape(*marker, px(i), py(r[j]), 5.0),
                            color,
                            class: Some("mark"),
                        });
                    }
                }
            }
            TypeSpecific::Bar { width, .. } => {
                let along = if horizontal { span_y } else { span_x };
                let group = along / rows as f64;
                let total = width * group;
                let bw = total / series as f64;
                for (i, r) in table.values.iter().enumerate() {
                    for (j, &color) in palette.iter().enumerate() {
                        let start = i as f64 * group + (group - total) / 2.0 + j as f64 * bw;
                        let len = (r[j] / top).max(0.0);
                        let shape = if horizontal {
                            Shape::Rect {
                                x: x0,
                                y: y0 + start,
                                w: span_x * len,
                                h: bw,
                            }
                        } else {
                            Shape::Rect {
                                x: x0 + start,
                                y: y1 - span_y * len,
                                w: bw,
                                h: span_y * len,
                            }
                        };
                        marks.push(Prim {
                            shape,
                            color,
                            class: Some("mark"),
                        });
                    }
                }
            }
            TypeSpecific::Pie { .. } => unreachable!("handled above"),
        }
    }

    let mut legend = Vec::new();
    if let (true, Some(loc)) = (spec.legend.show, spec.legend.location) {
        let row_h = label_size + 6.0;
        let longest = legend_entries
            .iter()
            .map(|e| e.0.chars().count())
            .max()
            .unwrap_or(0);
        let box_w = 26.0 + 0.55 * label_size * longest as f64;
        let box_h = row_h * legend_entries.len() as f64 + 8.0;
        let (bx, by) = match loc {
            LegendLocation::UpperLeft => (x0 + 8.0, y0 + 8.0),
            LegendLocation::UpperRight => (x1 - 8.0 - box_w, y0 + 8.0),
            LegendLocation::LowerLeft => (x0 + 8.0, y1 - 8.0 - box_h),
            LegendLocation::LowerRight => (x1 - 8.0 - box_w, y1 - 8.0 - box_h),
        };
        legend.push(line(
            vec![
                (bx, by),
                (bx + box_w, by),
                (bx + box_w, by + box_h),
                (bx, by + box_h),
                (bx, by),
            ],
            1.0,
            GRID,
        ));
        for (k, (label, color)) in legend_entries.iter().enumerate() {
            let y = by + 4.0 + row_h * k as f64;
            legend.push(Prim {
                shape: Shape::Rect {
                    x: bx + 6.0,
                    y: y + 3.0,
                    w: 10.0,
                    h: 10.0,
                },
                color: *color,
                class: Some("swatch"),
            });
            legend.push(text(
                bx + 22.0,
                y + 3.0 + label_size * 0.9,
                label_size,
                Anchor::Start,
                label,
            ));
        }
    }

    let title_size = f64::from(spec.fonts.title_size);
    let (tx, anchor) = match spec.title.position {
        TitlePosition::Left => (20.0, Anchor::Start),
        TitlePosition::Center => (SIZE / 2.0, Anchor::Middle),
        TitlePosition::Right => (SIZE - 20.0, Anchor::End),
    };
    let title = vec![text(tx, 36.0, title_size, anchor, &spec.title.text)];

    Ok(Scene {
        groups: vec![
            ("axes", axes),
            ("grid", grid),
            ("marks", marks),
            ("legend", legend),
            ("title", title),
        ],
    })
}

fn num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn arc_point(cx: f64, cy: f64, r: f64, a: f64) -> (f64, f64) {
    (cx + r * a.sin(), cy - r * a.cos())
}

impl Scene {
    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
        );
        let _ = writeln!(
            s,
            r##"<rect x="0" y="0" width="{CANVAS}" height="{CANVAS}" fill="#ffffff"/>"##
        );
        for (id, prims) in &self.groups {
            let _ = writeln!(s, r#"<g id="{id}">"#);
            for p in prims {
                let class = p
                    .class
                    .map(|c| format!(r#" class="{c}""#))
                    .unwrap_or_default();
                let color = hex(p.color);
                match &p.shape {
                    Shape::Rect { x, y, w, h } => {
                        let _ = writeln!(
                            s,
                            r#"<rect{class} x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
                            num(*x),
                            num(*y),
                            num(*w),
                            num(*h)
                        );
                    }
                    Shape::Circle { cx, cy, r } => {
                        let _ = writeln!(
                            s,
                            r#"<circle{class} cx="{}" cy="{}" r="{}" fill="{color}"/>"#,
                            num(*cx),
                            num(*cy),
                            num(*r)
                        );
                    }
                    Shape::Polygon { points } => {
                        let pts: Vec<String> = points
                            .iter()
                            .map(|(x, y)| format!("{},{}", num(*x), num(*y)))
                            .collect();
                        let _ = writeln!(
                            s,
                            r#"<polygon{class} points="{}" fill="{color}"/>"#,
                            pts.join(" ")
                        );
                    }
                    Shape::Polyline {
                        points,
                        width,
                        dash,
                    } => {
                        let mut d = String::new();
                        for (k, (x, y)) in points.iter().enumerate() {
                            let _ = write!(
                                d,
                                "{}{},{}",
                                if k == 0 { "M" } else { " L" },
                                num(*x),
                                num(*y)
                            );
                        }
                        let dash = dash
                            .map(|(on, off)| {
                                format!(r#" stroke-dasharray="{} {}""#, num(on), num(off))
                            })
                            .unwrap_or_default();
                        let _ = writeln!(
                            s,
                            r#"<path{class} d="{d}" fill="none" stroke="{color}" stroke-width="{}"{dash}/>"#,
                            num(*width)
                        );
                    }
                    Shape::Wedge { cx, cy, r, a0, a1 } => {
                        let d = if a1 - a0 >= TAU - 1e-9 {
                            let (tx, ty) = arc_point(*cx, *cy, *r, *a0);
                            let (bx, by) = arc_point(*cx, *cy, *r, a0 + TAU / 2.0);
                            format!(
                                "M{},{} A{r},{r} 0 1 1 {},{} A{r},{r} 0 1 1 {},{} Z",
                                num(tx),
                                num(ty),
                                num(bx),
                                num(by),
                                num(tx),
                                num(ty),
                                r = num(*r)
                            )
                        } else {
                            let (sx, sy) = arc_point(*cx, *cy, *r, *a0);
                            let (ex, ey) = arc_point(*cx, *cy, *r, *a1);
                            let large = u8::from(a1 - a0 > TAU / 2.0);
                            format!(
                                "M{},{} L{},{} A{r},{r} 0 {large} 1 {},{} Z",
                                num(*cx),
                                num(*cy),
                                num(sx),
                                num(sy),
                                num(ex),
                                num(ey),
                                r = num(*r)
                            )
                        };
                        let _ = writeln!(
                            s,
                            r##"<path{class} d="{d}" fill="{color}" stroke="#ffffff" stroke-width="1"/>"##
                        );
                    }
                    Shape::Text {
                        x,
                        y,
                        size,
                        anchor,
                        text,
                    } => {
                        let anchor = match anchor {
                            Anchor::Start => "start",
                            Anchor::Middle => "middle",
                            Anchor::End => "end",
                        };
                        let _ = writeln!(
                            s,
                            r#"<text x="{}" y="{}" font-size="{}" text-anchor="{anchor}" fill="{color}">{}</text>"#,
                            num(*x),
                            num(*y),
                            num(*size),
                            escape(text)
                        );
                    }
                }
            }
            let _ = writeln!(s, "</g>");
        }
        s.push_str("</svg>\n");
        s
    }

    /// Text is drawn as solid ink blocks of the approximate glyph extent.
    pub fn rasterize(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(CANVAS, CANVAS, Rgb([255, 255, 255]));
        for (_, prims) in &self.groups {
            for p in prims {
                draw(&mut img, p);
            }
        }
        img
    }
}

/// Pixel range whose centers can fall in `[lo, hi]`.
fn span(lo: f64, hi: f64) -> std::ops::Range<u32> {
    let a = (lo - 0.5).ceil().max(0.0);
    let b = (hi - 0.5).floor().min(SIZE - 1.0);
    if b < a {
        0..0
    } else {
        a as u32..b as u32 + 1
    }
}

fn fill_where(
    img: &mut RgbImage,
    bbox: (f64, f64, f64, f64),
    color: [u8; 3],
    inside: impl Fn(f64, f64) -> bool,
) {
    for py in span(bbox.1, bbox.3) {
        for px in span(bbox.0, bbox.2) {
            if inside(f64::from(px) + 0.5, f64::from(py) + 0.5) {
                img.put_pixel(px, py, Rgb(color));
            }
        }
    }
}

fn bbox(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ),
        |b, &(x, y)| (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y)),
    )
}

fn in_polygon(points: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = points.len();
    for i in 0..n {
        let (xi, yi) = points[i];
        let (xj, yj) = points[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn draw(img: &mut RgbImage, p: &Prim) {
    match &p.shape {
        Shape::Rect { x, y, w, h } => {
            fill_where(img, (*x, *y, x + w, y + h), p.color, |_, _| true);
        }
        Shape::Circle { cx, cy, r } => {
            fill_where(img, (cx - r, cy - r, cx + r, cy + r), p.color, |x, y| {
                (x - cx).powi(2) + (y - cy).powi(2) <= r * r
            });
        }
        Shape::Polygon { points } => {
            fill_where(img, bbox(points), p.color, |x, y| in_polygon(points, x, y));
        }
        Shape::Wedge { cx, cy, r, a0, a1 } => {
            let sweep = a1 - a0;
            let steps = ((sweep / TAU) * 180.0).ceil().max(1.0) as usize;
            let mut points = Vec::with_capacity(steps + 2);
            if sweep < TAU - 1e-9 {
                points.push((*cx, *cy));
            }
            for k in 0..=steps {
                points.push(arc_point(
                    *cx,
                    *cy,
                    *r,
                    a0 + sweep * k as f64 / steps as f64,
                ));
            }
            fill_where(img, bbox(&points), p.color, |x, y| {
                in_polygon(&points, x, y)
            });
        }
        Shape::Polyline {
            points,
            width,
            dash,
        } => {
            let half = width / 2.0;
            let mut s0 = 0.0;
            for seg in points.windows(2) {
                let ((ax, ay), (bx, by)) = (seg[0], seg[1]);
                let (dx, dy) = (bx - ax, by - ay);
                let len2 = dx * dx + dy * dy;
                let len = len2.sqrt();
                let bb = (
                    ax.min(bx) - half,
                    ay.min(by) - half,
                    ax.max(bx) + half,
                    ay.max(by) + half,
                );
                fill_where(img, bb, p.color, |x, y| {
                    let t = if len2 > 0.0 {
                        (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let (qx, qy) = (ax + t * dx - x, ay + t * dy - y);
                    if qx * qx + qy * qy > half * half {
                        return false;
                    }
                    match dash {
                        None => true,
                        Some((on, off)) => (s0 + t * len) % (on + off) < *on,
                    }
                });
                s0 += len;
            }
        }
        Shape::Text {
            x,
            y,
            size,
            anchor,
            text,
        } => {
            let w = 0.55 * size * text.chars().count() as f64;
            let h = 0.7 * size;
            let left = match anchor {
                Anchor::Start => *x,
                Anchor::Middle => x - w / 2.0,
                Anchor::End => x - w,
            };
            let ink = lighten(p.color, 0.5);
            fill_where(img, (left, y - h, left + w, *y), ink, |_, _| true);
        }
    }
}

/// SVG document and raster for a chart.
pub fn render(spec: &ChartSpec, table: &MetaTable) -> Result<(String, RgbImage)> {
    let scene = build_scene(spec, table)?;
    Ok((scene.to_svg(), scene.rasterize()))
}
