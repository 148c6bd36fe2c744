use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{build_scene, render};
use super::script::{gen_code, parse_code};
use super::spec::{derive_spec, ChartSpec};
use super::table::{sample_table, MetaTable, ValueRange};
use crate::error::Result;
use crate::seed::rng_for;

/// One synthesized chart in all four aligned forms.
#[derive(Debug, Clone)]
pub struct Quadruple {
    pub id: String,
    pub seed: u64,
    pub table: MetaTable,
    pub value_range: ValueRange,
    pub spec: ChartSpec,
    pub code: String,
    pub svg: String,
    pub raster: RgbImage,
}

pub fn quad_id(seed: u64) -> String {
    format!("q{seed:08}")
}

pub fn build_quadruple(seed: u64) -> Result<Quadruple> {
    let (table, value_range) = sample_table(seed);
    let spec = derive_spec(&table, seed);
    let code = gen_code(&spec, &table)?;
    let (svg, raster) = render(&spec, &table)?;
    Ok(Quadruple {
        id: quad_id(seed),
        seed,
        table,
        value_range,
        spec,
        code,
        svg,
        raster,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum Invalid {
    RoundTripMismatch(String),
    RenderError(String),
}

impl Invalid {
    pub fn code(&self) -> &'static str {
        match self {
            Invalid::RoundTripMismatch(_) => "round-trip-mismatch",
            Invalid::RenderError(_) => "render-error",
        }
    }
}

/// `Ok` iff the code reproduces `(spec, table)` exactly and the chart renders.
pub fn validate_parts(
    spec: &ChartSpec,
    table: &MetaTable,
    code: &str,
) -> std::result::Result<(), Invalid> {
    match parse_code(code) {
        Ok((s, t)) if s == *spec && t == *table => {}
        Ok(_) => {
            return Err(Invalid::RoundTripMismatch(
                "parsed code differs from spec/table".into(),
            ))
        }
        Err(e) => return Err(Invalid::RoundTripMismatch(e.to_string())),
    }
    build_scene(spec, table).map_err(|e| Invalid::RenderError(e.to_string()))?;
    Ok(())
}

pub fn validate_quadruple(q: &Quadruple) -> std::result::Result<(), Invalid> {
    validate_parts(&q.spec, &q.table, &q.code)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub task: String,
    pub instruction: String,
    pub response: String,
}

const TABLE_ASKS: [&str; 3] = [
    "Convert the chart into a CSV table.",
    "Extract the underlying data of this chart as CSV.",
    "Write out the data table behind the chart in CSV format.",
];
const JSON_ASKS: [&str; 3] = [
    "Describe the chart's visual attributes in JSON.",
    "List the plotting attributes of this chart as a JSON object.",
    "Give the chart type, title, legend, colors and fonts as JSON.",
];
const CODE_ASKS: [&str; 3] = [
    "Write the ChartScript code that redraws this chart.",
    "Produce a plotting script that reproduces the chart exactly.",
    "Give ChartScript code with explicit data and hex colors for this chart.",
];

/// The chart→table, chart→JSON and chart→code pairs for a quadruple.
pub fn instruction_pairs(
    seed: u64,
    table: &MetaTable,
    spec: &ChartSpec,
    code: &str,
) -> [InstructionPair; 3] {
    let mut rng = rng_for(seed, "instructions");
    let mut pick = |asks: &[&str; 3]| asks[rng.random_range(0..3)].to_string();
    [
        InstructionPair {
            task: "chart-to-table".into(),
            instruction: pick(&TABLE_ASKS),
            response: table.to_csv(),
        },
        InstructionPair {
            task: "chart-to-json".into(),
            instruction: pick(&JSON_ASKS),
            response: spec.canonical_json(),
        },
        InstructionPair {
            task: "chart-to-code".into(),
            instruction: pick(&CODE_ASKS),
            response: code.to_string(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartsynth::spec::{ChartType, TypeSpecific};

    #[test]
    fn fresh_quadruples_validate() {
        for seed in 0..100 {
            let q = build_quadruple(seed).unwrap();
            assert_eq!(validate_quadruple(&q), Ok(()));
            assert_eq!(q.raster.dimensions(), (490, 490));
        }
    }

    #[test]
    fn corrupted_color_digit_is_round_trip_mismatch() {
        let mut q = build_quadruple(3).unwrap();
        let at = q.code.find("= #").unwrap() + 3;
        let old = q.code.as_bytes()[at];
        let new = if old == b'0' { '1' } else { '0' };
        q.code.replace_range(at..at + 1, &new.to_string());
        assert_eq!(
            validate_quadruple(&q).unwrap_err().code(),
            "round-trip-mismatch"
        );
    }

    #[test]
    fn zero_sum_pie_is_render_error() {
        let q = (0..)
            .map(|s| build_quadruple(s).unwrap())
            .find(|q| q.spec.chart_type == ChartType::Pie)
            .unwrap();
        let mut q = q;
        for r in &mut q.table.values {
            r[0] = 0.0;
        }
        assert!(matches!(q.spec.type_specific, TypeSpecific::Pie { .. }));
        q.code = crate::chartsynth::gen_code(&q.spec, &q.table).unwrap();
        assert_eq!(validate_quadruple(&q).unwrap_err().code(), "render-error");
    }

    #[test]
    fn three_pairs_with_fixed_tasks() {
        let q = build_quadruple(0).unwrap();
        let pairs = instruction_pairs(q.seed, &q.table, &q.spec, &q.code);
        let tasks: Vec<&str> = pairs.iter().map(|p| p.task.as_str()).collect();
        assert_eq!(tasks, ["chart-to-table", "chart-to-json", "chart-to-code"]);
        assert_eq!(pairs[2].response, q.code);
    }
}
