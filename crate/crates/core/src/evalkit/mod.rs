//! Relaxed-accuracy scoring and the program-of-thought interpreter.

mod pot;
mod relaxed;
mod report;

pub use pot::{pot_eval, PotError, PotProgram};
pub use relaxed::{extract_number, normalize, parse_whole_number, relaxed_match, DEFAULT_MARGINS};
pub use report::{load_predictions, score_item, score_report, ItemVerdict, QAItem, RelaxedReport};
