use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::table::MetaTable;
use crate::seed::rng_for;

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#4e79a7", "#f28e2b",
];
pub const TITLE_SIZES: [u32; 4] = [12, 14, 16, 18];
pub const LABEL_SIZES: [u32; 3] = [8, 10, 12];
pub const BAR_WIDTHS: [f64; 4] = [0.5, 0.6, 0.7, 0.8];
pub const EXPLODES: [f64; 3] = [0.0, 0.05, 0.1];

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(ChartType { Line => "line", Bar => "bar", Pie => "pie", Scatter => "scatter" });
keyword_enum!(TitlePosition { Left => "left", Center => "center", Right => "right" });
keyword_enum!(LegendLocation {
    UpperLeft => "upper-left",
    UpperRight => "upper-right",
    LowerLeft => "lower-left",
    LowerRight => "lower-right",
});
keyword_enum!(LineStyle { Solid => "solid", Dashed => "dashed", Dotted => "dotted" });
keyword_enum!(Marker { Circle => "circle", Square => "square", Triangle => "triangle" });
keyword_enum!(Orientation { Vertical => "v", Horizontal => "h" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Title {
    pub text: String,
    pub position: TitlePosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Legend {
    pub show: bool,
    /// Present exactly when `show` is set.
    pub location: Option<LegendLocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fonts {
    pub title_size: u32,
    pub label_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TypeSpecific {
    Bar {
        width: f64,
        orientation: Orientation,
    },
    Line {
        marker: Marker,
        style: LineStyle,
    },
    Pie {
        explode: Vec<f64>,
    },
    Scatter {
        marker: Marker,
    },
}

impl TypeSpecific {
    pub fn chart_type(&self) -> ChartType {
        match self {
            TypeSpecific::Bar { .. } => ChartType::Bar,
            TypeSpecific::Line { .. } => ChartType::Line,
            TypeSpecific::Pie { .. } => ChartType::Pie,
            TypeSpecific::Scatter { .. } => ChartType::Scatter,
        }
    }
}

/// Every visual attribute of a chart, drawn from finite predefined sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    pub title: Title,
    pub grid: bool,
    pub legend: Legend,
    pub palette: Vec<String>,
    pub fonts: Fonts,
    pub type_specific: TypeSpecific,
}

pub fn is_hex_color(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 7
        && b[0] == b'#'
        && b[1..]
            .iter()
            .all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(c))
}

impl ChartSpec {
    /// Problems that make this spec unusable with `table`, if any.
    pub fn check_against(&self, table: &MetaTable) -> Result<(), String> {
        table.check()?;
        if self.type_specific.chart_type() != self.chart_type {
            return Err(format!(
                "{} chart carries {} attributes",
                self.chart_type,
                self.type_specific.chart_type()
            ));
        }
        if self.palette.len() != table.num_series() {
            return Err(format!(
                "{} colors for {} series",
                self.palette.len(),
                table.num_series()
            ));
        }
        if let Some(c) = self.palette.iter().find(|c| !is_hex_color(c)) {
            return Err(format!("color {c:?} is not #rrggbb lowercase hex"));
        }
        if self.chart_type == ChartType::Pie && table.num_series() != 1 {
            return Err("pie charts take exactly one series".into());
        }
        if let TypeSpecific::Pie { explode } = &self.type_specific {
            if explode.len() != table.num_rows() {
                return Err(format!(
                    "{} explode offsets for {} slices",
                    explode.len(),
                    table.num_rows()
                ));
            }
            if explode.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err("explode offsets must be finite and nonnegative".into());
            }
        }
        if let TypeSpecific::Bar { width, .. } = self.type_specific {
            if !(width > 0.0 && width <= 1.0) {
                return Err(format!("bar width {width} outside (0, 1]"));
            }
        }
        if self.legend.show != self.legend.location.is_some() {
            return Err("legend location must be given exactly when the legend is shown".into());
        }
        if self.title.text != table.title {
            return Err("spec title differs from table title".into());
        }
        Ok(())
    }

    /// Sorted-key JSON; floats are already canonical by construction.
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }
}

/// Serialize through `serde_json::Value` so object keys come out sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("plain data serializes");
    serde_json::to_string(&v).expect("value serializes")
}

pub fn derive_spec(table: &MetaTable, seed: u64) -> ChartSpec {
    let mut rng = rng_for(seed, "spec");
    let series = table.num_series();
    let types: &[ChartType] = if series == 1 {
        ChartType::ALL
    } else {
        &[ChartType::Line, ChartType::Bar, ChartType::Scatter]
    };
    let chart_type = *choose(&mut rng, types);
    let title = Title {
        text: table.title.clone(),
        position: *choose(&mut rng, TitlePosition::ALL),
    };
    let grid = rng.random_bool(0.5);
    let legend = if rng.random_bool(0.6) {
        Legend {
            show: true,
            location: Some(*choose(&mut rng, LegendLocation::ALL)),
        }
    } else {
        Legend {
            show: false,
            location: None,
        }
    };
    let palette = sample(&mut rng, PALETTE.len(), series)
        .into_iter()
        .map(|i| PALETTE[i].to_string())
        .collect();
    let fonts = Fonts {
        title_size: *choose(&mut rng, &TITLE_SIZES),
        label_size: *choose(&mut rng, &LABEL_SIZES),
    };
    let type_specific = match chart_type {
        ChartType::Bar => TypeSpecific::Bar {
            width: *choose(&mut rng, &BAR_WIDTHS),
            orientation: *choose(&mut rng, Orientation::ALL),
        },
        ChartType::Line => TypeSpecific::Line {
            marker: *choose(&mut rng, Marker::ALL),
            style: *choose(&mut rng, LineStyle::ALL),
        },
        ChartType::Pie => TypeSpecific::Pie {
            explode: (0..table.num_rows())
                .map(|_| *choose(&mut rng, &EXPLODES))
                .collect(),
        },
        ChartType::Scatter => TypeSpecific::Scatter {
            marker: *choose(&mut rng, Marker::ALL),
        },
    };
    ChartSpec {
        chart_type,
        title,
        grid,
        legend,
        palette,
        fonts,
        type_specific,
    }
}

fn choose<'a, T, R: Rng>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartsynth::table::sample_table;

    #[test]
    fn derived_specs_are_consistent_and_use_the_palette() {
        for seed in 0..2000 {
            let (t, _) = sample_table(seed);
            let s = derive_spec(&t, seed);
            s.check_against(&t).unwrap();
            assert!(s.palette.iter().all(|c| PALETTE.contains(&c.as_str())));
            if t.num_series() > 1 {
                assert_ne!(s.chart_type, ChartType::Pie);
            }
        }
    }

    #[test]
    fn palette_is_valid_hex_and_distinct() {
        let mut p = PALETTE.to_vec();
        assert!(p.iter().all(|c| is_hex_color(c)));
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 12);
        assert!(!is_hex_color("#1F77B4"));
        assert!(!is_hex_color("#1f77b"));
    }

    #[test]
    fn canonical_json_sorts_keys_and_reparses() {
        let (t, _) = sample_table(0);
        let s = derive_spec(&t, 0);
        let json = s.canonical_json();
        let back: ChartSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let chart = json.find("\"chart_type\"").unwrap();
        let fonts = json.find("\"fonts\"").unwrap();
        let type_specific = json.find("\"type_specific\"").unwrap();
        assert!(chart < fonts && fonts < type_specific);
    }

    #[test]
    fn coverage_over_ten_thousand_seeds() {
        use std::collections::HashSet;
        let mut seen: HashSet<String> = HashSet::new();
        for seed in 0..10_000 {
            let (t, _) = sample_table(seed);
            let s = derive_spec(&t, seed);
            seen.insert(format!("type:{}", s.chart_type));
            seen.insert(format!("pos:{}", s.title.position));
            seen.insert(format!("grid:{}", s.grid));
            seen.insert(format!("legend:{:?}", s.legend.location));
            seen.insert(format!("tsize:{}", s.fonts.title_size));
            seen.insert(format!("lsize:{}", s.fonts.label_size));
            for c in &s.palette {
                seen.insert(format!("color:{c}"));
            }
            match &s.type_specific {
                TypeSpecific::Bar { width, orientation } => {
                    seen.insert(format!("width:{width}"));
                    seen.insert(format!("orient:{orientation}"));
                }
                TypeSpecific::Line { marker, style } => {
                    seen.insert(format!("marker:{marker}"));
                    seen.insert(format!("style:{style}"));
                }
                TypeSpecific::Pie { explode } => {
                    for e in explode {
                        seen.insert(format!("explode:{e}"));
                    }
                }
                TypeSpecific::Scatter { marker } => {
                    seen.insert(format!("marker:{marker}"));
                }
            }
        }
        // 4 types, 3 positions, 2 grid states, 4 locations + hidden,
        // 4 + 3 font sizes, 12 colors, 4 widths, 2 orientations, 3 markers,
        // 3 styles, 3 explode offsets.
        assert_eq!(seen.len(), 4 + 3 + 2 + 5 + 4 + 3 + 12 + 4 + 2 + 3 + 3 + 3);
    }
}
