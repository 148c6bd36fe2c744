use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::canon::{canon, fmt_num};
use crate::seed::rng_for;

pub const MIN_ROWS: usize = 3;
pub const MAX_ROWS: usize = 12;
pub const MAX_SERIES: usize = 4;

/// A data table: one row per category, one column per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTable {
    pub title: String,
    pub col_labels: Vec<String>,
    pub row_labels: Vec<String>,
    /// `values[row][series]`.
    pub values: Vec<Vec<f64>>,
}

/// Range the generator drew values from. Kept next to the table rather than
/// inside it, since it is not recoverable from the chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl MetaTable {
    pub fn num_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn num_series(&self) -> usize {
        self.col_labels.len()
    }

    pub fn series(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Shape and finiteness problems, if any.
    pub fn check(&self) -> Result<(), String> {
        let (r, s) = (self.num_rows(), self.num_series());
        if !(MIN_ROWS..=MAX_ROWS).contains(&r) {
            return Err(format!("{r} rows outside {MIN_ROWS}..={MAX_ROWS}"));
        }
        if !(1..=MAX_SERIES).contains(&s) {
            return Err(format!("{s} series outside 1..={MAX_SERIES}"));
        }
        if self.values.len() != r {
            return Err(format!("{} value rows for {r} labels", self.values.len()));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != s {
                return Err(format!("row {i} has {} values for {s} series", row.len()));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(format!("row {i} holds non-finite value {v}"));
            }
        }
        Ok(())
    }

    /// CSV text used as the chart→table alignment target.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&csv_field(&self.title));
        out.push('\n');
        out.push_str("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(&csv_field(label));
            for v in row {
                out.push(',');
                out.push_str(&fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const SERIES_NAMES: [&str; 12] = [
    "Revenue", "Cost", "Profit", "Sales", "Users", "Exports", "Imports", "Output", "Demand",
    "Supply", "Budget", "Visits",
];
const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const REGIONS: [&str; 12] = [
    "North",
    "South",
    "East",
    "West",
    "Central",
    "Coast",
    "Valley",
    "Highlands",
    "Islands",
    "Metro",
    "Plains",
    "Delta",
];
const PRODUCTS: [&str; 12] = [
    "Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta", "Eta", "Theta", "Iota", "Kappa",
    "Lambda", "Omicron",
];
const SCALES: [f64; 3] = [10.0, 100.0, 1000.0];

/// Seeded table draw plus the range its values came from.
pub fn sample_table(seed: u64) -> (MetaTable, ValueRange) {
    let mut rng = rng_for(seed, "table");
    let series = match rng.random_range(0..100) {
        0..35 => 1,
        35..60 => 2,
        60..80 => 3,
        _ => 4,
    };
    let rows = rng.random_range(MIN_ROWS..=MAX_ROWS);

    let (axis, row_labels): (&str, Vec<String>) = match rng.random_range(0..4) {
        0 => {
            let start = rng.random_range(1990..=2012);
            ("Year", (0..rows).map(|i| (start + i).to_string()).collect())
        }
        1 => {
            let start = rng.random_range(0..=MONTHS.len() - rows);
            (
                "Month",
                MONTHS[start..start + rows]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            )
        }
        2 => ("Region", pick(&mut rng, &REGIONS, rows)),
        _ => ("Product", pick(&mut rng, &PRODUCTS, rows)),
    };
    let col_labels = pick(&mut rng, &SERIES_NAMES, series);

    let hi = SCALES[rng.random_range(0..SCALES.len())];
    let lo = 0.0;
    let step = if hi >= 1000.0 { 1.0 } else { 0.1 };
    let values = (0..rows)
        .map(|_| {
            (0..series)
                .map(|_| {
                    let v: f64 = rng.random_range(0.05 * hi..=hi);
                    canon((v / step).round() * step)
                })
                .collect()
        })
        .collect();

    let title = match series {
        1 => format!("{} by {axis}", col_labels[0]),
        2 => format!("{} and {} by {axis}", col_labels[0], col_labels[1]),
        _ => format!("{} and others by {axis}", col_labels[0]),
    };
    (
        MetaTable {
            title,
            col_labels,
            row_labels,
            values,
        },
        ValueRange { lo, hi },
    )
}

fn pick<R: Rng>(rng: &mut R, from: &[&str], n: usize) -> Vec<String> {
    sample(rng, from.len(), n)
        .into_iter()
        .map(|i| from[i].to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_table() {
        assert_eq!(sample_table(7), sample_table(7));
        assert_ne!(sample_table(7).0, sample_table(8).0);
    }

    #[test]
    fn shape_and_range_bounds_hold() {
        for seed in 0..10_000 {
            let (t, range) = sample_table(seed);
            t.check().unwrap();
            for row in &t.values {
                for &v in row {
                    assert!(v >= range.lo && v <= range.hi, "seed {seed}: {v}");
                    assert!(v > 0.0);
                }
            }
        }
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let (t, _) = sample_table(0);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), t.num_rows() + 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("label,"));
    }
}
