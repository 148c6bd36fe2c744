//! Canonical number formatting shared by the script emitter, the JSON
//! serializer and the parser.

/// Round to 6 significant digits. Non-finite input passes through.
pub fn canon(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    let s = format!("{x:.5e}");
    s.parse().unwrap_or(x)
}

/// Shortest decimal text that parses back to `canon(x)`.
pub fn fmt_num(x: f64) -> String {
    let c = canon(x);
    // `Display` for f64 is the shortest round-trip representation and never
    // uses exponent notation.
    format!("{c}")
}
