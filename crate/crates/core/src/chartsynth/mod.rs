//! Chart–table–JSON–code quadruple synthesis.

mod batch;
mod canon;
mod quad;
pub(crate) mod render;
mod script;
mod spec;
mod table;

pub use batch::{synth_batch, SynthReport};
pub use canon::{canon, fmt_num};
pub use quad::{
    build_quadruple, instruction_pairs, quad_id, validate_parts, validate_quadruple,
    InstructionPair, Invalid, Quadruple,
};
pub use render::{build_scene, parse_hex, render, Anchor, Prim, Scene, Shape, CANVAS};
pub use script::{gen_code, parse_code, ScriptError, ScriptErrorKind};
pub use spec::{
    canonical_json, derive_spec, is_hex_color, ChartSpec, ChartType, Fonts, Legend, LegendLocation,
    LineStyle, Marker, Orientation, Title, TitlePosition, TypeSpecific, BAR_WIDTHS, EXPLODES,
    LABEL_SIZES, PALETTE, TITLE_SIZES,
};
pub use table::{sample_table, MetaTable, ValueRange, MAX_ROWS, MAX_SERIES, MIN_ROWS};
