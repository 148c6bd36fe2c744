//! Top-1 routing maps over the patch grid, exported as an SVG overlay on
//! the chart raster.

use std::fmt::Write;
use std::io::Cursor;

use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::Serialize;

use crate::chartsynth::render::escape;
use crate::error::{Error, Result};
use crate::moe::MoEConnector;
use crate::stack::PatchEncoder;

/// Fixed legend colors in expert order.
pub const EXPERT_COLORS: [&str; 8] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a6a600", "#a65628", "#f781bf",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteMap {
    pub grid: usize,
    /// Top-1 expert per patch, row-major.
    pub top1: Vec<usize>,
    pub labels: Vec<String>,
    /// Share of patches whose top-1 expert is `j`.
    pub shares: Vec<f64>,
}

pub fn route_map(c: &MoEConnector, encoder: &PatchEncoder, raster: &RgbImage) -> Result<RouteMap> {
    if c.num_experts() > EXPERT_COLORS.len() {
        return Err(Error::Config(format!(
            "route maps support at most {} experts",
            EXPERT_COLORS.len()
        )));
    }
    let tokens = encoder.encode(raster)?;
    let top1 = c.route(&tokens)?.top1();
    let mut counts = vec![0usize; c.num_experts()];
    for &j in &top1 {
        counts[j] += 1;
    }
    let shares = counts
        .iter()
        .map(|&n| n as f64 / top1.len() as f64)
        .collect();
    Ok(RouteMap {
        grid: encoder.grid(),
        top1,
        labels: c.labels().to_vec(),
        shares,
    })
}

fn png_base64(raster: &RgbImage) -> Result<String> {
    let mut buf = Cursor::new(Vec::new());
    raster
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Render(format!("PNG encoding failed: {e}")))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

impl RouteMap {
    /// Raster as an embedded PNG, one translucent cell per patch, and a
    /// legend entry per expert.
    pub fn to_svg(&self, raster: &RgbImage) -> Result<String> {
        let (wi, hi) = (raster.width() as usize, raster.height() as usize);
        let (w, h) = (wi as f64, hi as f64);
        let legend_h = 24.0 * self.labels.len() as f64 + 16.0;
        let total_h = h + legend_h;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" viewBox="0 0 {w} {total_h}">"#
        );
        let _ = writeln!(
            s,
            r#"<image x="0" y="0" width="{w}" height="{h}" href="data:image/png;base64,{}"/>"#,
            png_base64(raster)?
        );
        let _ = writeln!(s, r#"<g id="cells">"#);
        let g = self.grid;
        for (i, &j) in self.top1.iter().enumerate() {
            let (r, col) = (i / g, i % g);
            // Same integer patch boundaries as the encoder.
            let (x0, x1) = (col * wi / g, (col + 1) * wi / g);
            let (y0, y1) = (r * hi / g, (r + 1) * hi / g);
            let _ = writeln!(
                s,
                r##"<rect class="cell" data-expert="{j}" x="{x0}" y="{y0}" width="{}" height="{}" fill="{}" fill-opacity="0.45" stroke="#ffffff" stroke-width="0.5"/>"##,
                x1 - x0,
                y1 - y0,
                EXPERT_COLORS[j]
            );
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g id="legend">"#);
        for (j, label) in self.labels.iter().enumerate() {
            let y = h + 8.0 + 24.0 * j as f64;
            let _ = writeln!(
                s,
                r##"<g class="legend-entry" data-expert="{j}"><rect x="12" y="{y}" width="16" height="16" fill="{}"/><text x="36" y="{}" font-size="13" font-family="sans-serif">E{j} {} ({:.1}%)</text></g>"##,
                EXPERT_COLORS[j],
                y + 13.0,
                escape(label),
                100.0 * self.shares[j]
            );
        }
        let _ = writeln!(s, "</g>");
        s.push_str("</svg>\n");
        Ok(s)
    }
}
