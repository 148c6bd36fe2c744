use regex::Regex;
use std::sync::LazyLock;

const NUMBER: &str = r"[-+]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)";

static FIRST_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(NUMBER).expect("valid regex"));
static WHOLE_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"^\s*({NUMBER})\s*%?\s*$")).expect("valid regex"));

pub const DEFAULT_MARGINS: [f64; 3] = [0.05, 0.10, 0.20];

fn to_f64(m: &str) -> Option<f64> {
    m.replace(',', "")
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
}

/// First signed decimal in `text`. Thousands separators are accepted and a
/// trailing percent sign is ignored, not applied.
pub fn extract_number(text: &str) -> Option<f64> {
    FIRST_NUMBER
        .find_iter(text)
        .find_map(|m| to_f64(m.as_str()))
}

/// The number `text` consists of, if it is nothing but a number.
pub fn parse_whole_number(text: &str) -> Option<f64> {
    WHOLE_NUMBER.captures(text).and_then(|c| to_f64(&c[1]))
}

/// Lowercase, trim, collapse whitespace, drop trailing punctuation.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches([' ', '.', ',', ';', ':', '!', '?'])
        .to_string()
}

/// Relaxed-accuracy verdict for one answer.
pub fn relaxed_match(pred: &str, gt: &str, margin: f64) -> bool {
    match parse_whole_number(gt) {
        Some(g) => match extract_number(pred) {
            Some(p) if g == 0.0 => p.abs() <= margin,
            // The 1e-12 slack absorbs representation error in `margin * |g|`.
            Some(p) => (p - g).abs() <= margin * g.abs() * (1.0 + 1e-12),
            None => false,
        },
        None => normalize(pred) == normalize(gt),
    }
}
