//! ChartScript: a line-oriented plotting dialect that spells out every
//! attribute, every number and every color literally.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::canon::fmt_num;
use super::spec::{
    ChartSpec, ChartType, Fonts, Legend, LegendLocation, LineStyle, Marker, Orientation, Title,
    TitlePosition, TypeSpecific,
};
use super::table::MetaTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptErrorKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} error at {line}:{col}: {message}", match .kind { ScriptErrorKind::Syntax => "syntax", ScriptErrorKind::Semantic => "semantic" })]
pub struct ScriptError {
    pub kind: ScriptErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ScriptError {
    fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            kind: ScriptErrorKind::Syntax,
            line,
            col,
            message: message.into(),
        }
    }

    fn semantic(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            kind: ScriptErrorKind::Semantic,
            line,
            col,
            message: message.into(),
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn num_list(xs: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = xs.into_iter().map(fmt_num).collect();
    format!("[{}]", parts.join(" "))
}

pub fn gen_code(spec: &ChartSpec, table: &MetaTable) -> Result<String> {
    spec.check_against(table).map_err(Error::Generation)?;
    let mut out = String::new();
    let w = &mut out;
    // Writing into a String cannot fail.
    let _ = writeln!(w, "type {}", spec.chart_type);
    let _ = writeln!(
        w,
        "title {} pos={}",
        quote(&spec.title.text),
        spec.title.position
    );
    let _ = writeln!(w, "grid {}", if spec.grid { "on" } else { "off" });
    match spec.legend.location {
        Some(loc) if spec.legend.show => {
            let _ = writeln!(w, "legend on loc={loc}");
        }
        _ => {
            let _ = writeln!(w, "legend off");
        }
    }
    let _ = writeln!(w, "font title = {}", spec.fonts.title_size);
    let _ = writeln!(w, "font label = {}", spec.fonts.label_size);
    for (i, c) in spec.palette.iter().enumerate() {
        let _ = writeln!(w, "color {i} = {c}");
    }
    match &spec.type_specific {
        TypeSpecific::Bar { width, orientation } => {
            let _ = writeln!(w, "barwidth {}", fmt_num(*width));
            let _ = writeln!(w, "orient {orientation}");
        }
        TypeSpecific::Line { marker, style } => {
            let _ = writeln!(w, "marker {marker}");
            let _ = writeln!(w, "linestyle {style}");
        }
        TypeSpecific::Pie { explode } => {
            let _ = writeln!(w, "explode {}", num_list(explode.iter().copied()));
        }
        TypeSpecific::Scatter { marker } => {
            let _ = writeln!(w, "marker {marker}");
        }
    }
    let labels: Vec<String> = table.row_labels.iter().map(|l| quote(l)).collect();
    let _ = writeln!(w, "xlabels [{}]", labels.join(" "));
    for (j, name) in table.col_labels.iter().enumerate() {
        let _ = writeln!(w, "series {} = {}", quote(name), num_list(table.series(j)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    /// Numeric literal; `integral` when written without fraction or exponent.
    Num {
        value: f64,
        integral: bool,
    },
    Hex(String),
    Eq,
    LBracket,
    RBracket,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(s) => format!("string {}", quote(s)),
            Tok::Num { value, .. } => format!("number {value}"),
            Tok::Hex(h) => format!("color {h}"),
            Tok::Eq => "`=`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
        }
    }
}

/// Tokens of one line with their 1-based columns.
fn lex_line(line: &str, lineno: usize) -> std::result::Result<Vec<(Tok, usize)>, ScriptError> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            let hex_len = chars[i + 1..]
                .iter()
                .take_while(|c| c.is_ascii_hexdigit())
                .count();
            let next = chars.get(i + 1 + hex_len);
            let boundary = next.is_none_or(|n| !n.is_alphanumeric() && *n != '_');
            if hex_len == 6 && boundary {
                toks.push((Tok::Hex(chars[i..i + 7].iter().collect()), col));
                i += 7;
            } else {
                break;
            }
        } else if c == '=' {
            toks.push((Tok::Eq, col));
            i += 1;
        } else if c == '[' {
            toks.push((Tok::LBracket, col));
            i += 1;
        } else if c == ']' {
            toks.push((Tok::RBracket, col));
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ScriptError::syntax(lineno, col, "unterminated string")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => {
                                return Err(ScriptError::syntax(
                                    lineno,
                                    i + 1,
                                    "invalid escape in string",
                                ))
                            }
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push((Tok::Str(s), col));
        } else if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            let start = i;
            if c == '-' || c == '+' {
                i += 1;
            }
            let digits = |i: &mut usize| {
                let s = *i;
                while chars.get(*i).is_some_and(|c| c.is_ascii_digit()) {
                    *i += 1;
                }
                *i - s
            };
            let mut n = digits(&mut i);
            let mut integral = true;
            if chars.get(i) == Some(&'.') {
                i += 1;
                integral = false;
                n += digits(&mut i);
            }
            if n == 0 {
                return Err(ScriptError::syntax(lineno, col, "malformed number"));
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                integral = false;
                i += 1;
                if matches!(chars.get(i), Some('+' | '-')) {
                    i += 1;
                }
                if digits(&mut i) == 0 {
                    return Err(ScriptError::syntax(lineno, col, "malformed exponent"));
                }
            }
            if chars
                .get(i)
                .is_some_and(|c| c.is_alphanumeric() || *c == '_')
            {
                return Err(ScriptError::syntax(
                    lineno,
                    i + 1,
                    "unexpected character after number",
                ));
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| ScriptError::syntax(lineno, col, "malformed number"))?;
            if !value.is_finite() {
                return Err(ScriptError::syntax(lineno, col, "number out of range"));
            }
            toks.push((Tok::Num { value, integral }, col));
        } else if c.is_ascii_lowercase() {
            let start = i;
            while chars.get(i).is_some_and(|c| {
                c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_' || *c == '-'
            }) {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            return Err(ScriptError::syntax(
                lineno,
                col,
                format!("unexpected character `{c}`"),
            ));
        }
    }
    Ok(toks)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl Cursor<'_> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.eol_col, |t| t.1)
    }

    fn err(&self, expected: &str) -> ScriptError {
        let found = self
            .toks
            .get(self.pos)
            .map_or_else(|| "end of line".to_string(), |t| t.0.describe());
        ScriptError::syntax(
            self.line,
            self.col(),
            format!("expected {expected}, found {found}"),
        )
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.0);
        self.pos += 1;
        t
    }

    fn ident(&mut self, what: &str) -> std::result::Result<(String, usize), ScriptError> {
        let col = self.col();
        match self.toks.get(self.pos) {
            Some((Tok::Ident(s), _)) => {
                self.pos += 1;
                Ok((s.clone(), col))
            }
            _ => Err(self.err(what)),
        }
    }

    fn keyword(&mut self, kw: &str) -> std::result::Result<(), ScriptError> {
        match self.toks.get(self.pos) {
            Some((Tok::Ident(s), _)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("`{kw}`"))),
        }
    }

    fn eq(&mut self) -> std::result::Result<(), ScriptError> {
        match self.toks.get(self.pos) {
            Some((Tok::Eq, _)) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("`=`")),
        }
    }

    fn string(&mut self) -> std::result::Result<String, ScriptError> {
        match self.toks.get(self.pos) {
            Some((Tok::Str(s), _)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.err("a string")),
        }
    }

    fn int(&mut self) -> std::result::Result<(u64, usize), ScriptError> {
        let col = self.col();
        match self.toks.get(self.pos) {
            Some((
                Tok::Num {
                    value,
                    integral: true,
                },
                _,
            )) if *value >= 0.0 && *value <= 1e15 => {
                self.pos += 1;
                Ok((*value as u64, col))
            }
            _ => Err(self.err("a nonnegative integer")),
        }
    }

    fn float(&mut self) -> std::result::Result<f64, ScriptError> {
        match self.toks.get(self.pos) {
            Some((Tok::Num { value, .. }, _)) => {
                self.pos += 1;
                Ok(*value)
            }
            _ => Err(self.err("a number")),
        }
    }

    fn list<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> std::result::Result<T, ScriptError>,
    ) -> std::result::Result<Vec<T>, ScriptError> {
        match self.next() {
            Some(Tok::LBracket) => {}
            _ => {
                self.pos -= 1;
                return Err(self.err("`[`"));
            }
        }
        let mut out = Vec::new();
        loop {
            if let Some((Tok::RBracket, _)) = self.toks.get(self.pos) {
                self.pos += 1;
                return Ok(out);
            }
            if self.pos >= self.toks.len() {
                return Err(self.err("`]`"));
            }
            out.push(item(self)?);
        }
    }

    fn end(&self) -> std::result::Result<(), ScriptError> {
        if self.pos < self.toks.len() {
            Err(self.err("end of line"))
        } else {
            Ok(())
        }
    }
}

/// Everything the statements said, before cross-statement checks.
#[derive(Default)]
struct Parts {
    chart_type: Option<(ChartType, usize)>,
    title: Option<Title>,
    grid: Option<bool>,
    legend: Option<Legend>,
    title_size: Option<u32>,
    label_size: Option<u32>,
    colors: Vec<(usize, String, usize, usize)>,
    barwidth: Option<(f64, usize)>,
    orient: Option<(Orientation, usize)>,
    marker: Option<(Marker, usize)>,
    linestyle: Option<(LineStyle, usize)>,
    explode: Option<(Vec<f64>, usize)>,
    xlabels: Option<Vec<String>>,
    series: Vec<(String, Vec<f64>, usize)>,
}

fn keyword_value<T>(
    parse: fn(&str) -> Option<T>,
    what: &str,
    text: &str,
    line: usize,
    col: usize,
) -> std::result::Result<T, ScriptError> {
    parse(text).ok_or_else(|| ScriptError::semantic(line, col, format!("unknown {what} `{text}`")))
}

pub fn parse_code(code: &str) -> std::result::Result<(ChartSpec, MetaTable), ScriptError> {
    let mut parts = Parts::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut last_line = 1;
    let mut any = false;

    for (idx, raw) in code.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let toks = lex_line(raw, line)?;
        if toks.is_empty() {
            continue;
        }
        any = true;
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line,
            eol_col: raw.chars().count() + 1,
        };
        let (kw, kw_col) = cur.ident("a statement keyword")?;
        let mut once = |key: String| {
            if seen.insert(key.clone()) {
                Ok(())
            } else {
                Err(ScriptError::semantic(
                    line,
                    kw_col,
                    format!("duplicate `{key}` statement"),
                ))
            }
        };
        match kw.as_str() {
            "type" => {
                let (t, col) = cur.ident("a chart type")?;
                cur.end()?;
                once(kw)?;
                let ct = keyword_value(ChartType::parse, "chart type", &t, line, col)?;
                parts.chart_type = Some((ct, line));
            }
            "title" => {
                let text = cur.string()?;
                cur.keyword("pos")?;
                cur.eq()?;
                let (p, col) = cur.ident("a title position")?;
                cur.end()?;
                once(kw)?;
                let position =
                    keyword_value(TitlePosition::parse, "title position", &p, line, col)?;
                parts.title = Some(Title { text, position });
            }
            "grid" => {
                let (v, col) = cur.ident("`on` or `off`")?;
                cur.end()?;
                let on = match v.as_str() {
                    "on" => true,
                    "off" => false,
                    _ => return Err(ScriptError::syntax(line, col, "expected `on` or `off`")),
                };
                once(kw)?;
                parts.grid = Some(on);
            }
            "legend" => {
                let (v, col) = cur.ident("`on` or `off`")?;
                let legend = match v.as_str() {
                    "off" => Legend {
                        show: false,
                        location: None,
                    },
                    "on" => {
                        cur.keyword("loc")?;
                        cur.eq()?;
                        let (l, lcol) = cur.ident("a legend location")?;
                        Legend {
                            show: true,
                            location: Some(keyword_value(
                                LegendLocation::parse,
                                "legend location",
                                &l,
                                line,
                                lcol,
                            )?),
                        }
                    }
                    _ => return Err(ScriptError::syntax(line, col, "expected `on` or `off`")),
                };
                cur.end()?;
                once(kw)?;
                parts.legend = Some(legend);
            }
            "font" => {
                let (which, col) = cur.ident("`title` or `label`")?;
                cur.eq()?;
                let (size, scol) = cur.int()?;
                cur.end()?;
                let size = u32::try_from(size)
                    .map_err(|_| ScriptError::semantic(line, scol, "font size too large"))?;
                once(format!("font {which}"))?;
                match which.as_str() {
                    "title" => parts.title_size = Some(size),
                    "label" => parts.label_size = Some(size),
                    _ => {
                        return Err(ScriptError::semantic(
                            line,
                            col,
                            format!("unknown font `{which}`"),
                        ))
                    }
                }
            }
            "color" => {
                let (i, icol) = cur.int()?;
                cur.eq()?;
                let hex_col = cur.col();
                let hex = match cur.next() {
                    Some(Tok::Hex(h)) => h.clone(),
                    _ => {
                        cur.pos -= 1;
                        return Err(cur.err("a #rrggbb color"));
                    }
                };
                cur.end()?;
                once(format!("color {i}"))?;
                if hex.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(ScriptError::semantic(
                        line,
                        hex_col,
                        "colors must be lowercase hex",
                    ));
                }
                parts.colors.push((i as usize, hex, line, icol));
            }
            "barwidth" => {
                let v = cur.float()?;
                cur.end()?;
                once(kw)?;
                parts.barwidth = Some((v, line));
            }
            "orient" => {
                let (v, col) = cur.ident("`v` or `h`")?;
                cur.end()?;
                let o = Orientation::parse(&v)
                    .ok_or_else(|| ScriptError::syntax(line, col, "expected `v` or `h`"))?;
                once(kw)?;
                parts.orient = Some((o, line));
            }
            "marker" => {
                let (v, col) = cur.ident("a marker")?;
                cur.end()?;
                once(kw)?;
                parts.marker = Some((keyword_value(Marker::parse, "marker", &v, line, col)?, line));
            }
            "linestyle" => {
                let (v, col) = cur.ident("a line style")?;
                cur.end()?;
                once(kw)?;
                let s = keyword_value(LineStyle::parse, "line style", &v, line, col)?;
                parts.linestyle = Some((s, line));
            }
            "explode" => {
                let v = cur.list(|c| c.float())?;
                cur.end()?;
                once(kw)?;
                parts.explode = Some((v, line));
            }
            "xlabels" => {
                let v = cur.list(|c| c.string())?;
                cur.end()?;
                once(kw)?;
                parts.xlabels = Some(v);
            }
            "series" => {
                let name = cur.string()?;
                cur.eq()?;
                let v = cur.list(|c| c.float())?;
                cur.end()?;
                once(format!("series {}", quote(&name)))?;
                parts.series.push((name, v, line));
            }
            _ => {
                return Err(ScriptError::syntax(
                    line,
                    kw_col,
                    format!("unknown statement `{kw}`"),
                ))
            }
        }
    }
    if !any {
        return Err(ScriptError::syntax(
            1,
            1,
            "expected a statement, found end of input",
        ));
    }
    assemble(parts, last_line)
}

fn assemble(
    p: Parts,
    last_line: usize,
) -> std::result::Result<(ChartSpec, MetaTable), ScriptError> {
    let missing = |what: &str| ScriptError::semantic(last_line, 1, format!("missing {what}"));
    if p.series.is_empty() {
        return Err(missing("series"));
    }
    let (chart_type, _) = p.chart_type.ok_or_else(|| missing("`type` statement"))?;
    let title = p.title.ok_or_else(|| missing("`title` statement"))?;
    let grid = p.grid.ok_or_else(|| missing("`grid` statement"))?;
    let legend = p.legend.ok_or_else(|| missing("`legend` statement"))?;
    let title_size = p
        .title_size
        .ok_or_else(|| missing("`font title` statement"))?;
    let label_size = p
        .label_size
        .ok_or_else(|| missing("`font label` statement"))?;
    let row_labels = p.xlabels.ok_or_else(|| missing("`xlabels` statement"))?;

    let n_series = p.series.len();
    let mut palette = vec![None; n_series];
    for (i, hex, line, col) in p.colors {
        if i >= n_series {
            return Err(ScriptError::semantic(
                line,
                col,
                format!("color index {i} out of range for {n_series} series"),
            ));
        }
        palette[i] = Some(hex);
    }
    let palette: Vec<String> = palette
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| missing(&format!("`color {i}` statement"))))
        .collect::<std::result::Result<_, _>>()?;

    let foreign = |what: &str, line: usize| {
        ScriptError::semantic(
            line,
            1,
            format!("`{what}` does not apply to {chart_type} charts"),
        )
    };
    let check_absent = |present: Option<usize>, what: &str| match present {
        Some(line) => Err(foreign(what, line)),
        None => Ok(()),
    };
    let type_specific = match chart_type {
        ChartType::Bar => {
            check_absent(p.marker.map(|m| m.1), "marker")?;
            check_absent(p.linestyle.map(|m| m.1), "linestyle")?;
            check_absent(p.explode.as_ref().map(|m| m.1), "explode")?;
            TypeSpecific::Bar {
                width: p.barwidth.ok_or_else(|| missing("`barwidth` statement"))?.0,
                orientation: p.orient.ok_or_else(|| missing("`orient` statement"))?.0,
            }
        }
        ChartType::Line => {
            check_absent(p.barwidth.map(|m| m.1), "barwidth")?;
            check_absent(p.orient.map(|m| m.1), "orient")?;
            check_absent(p.explode.as_ref().map(|m| m.1), "explode")?;
            TypeSpecific::Line {
                marker: p.marker.ok_or_else(|| missing("`marker` statement"))?.0,
                style: p
                    .linestyle
                    .ok_or_else(|| missing("`linestyle` statement"))?
                    .0,
            }
        }
        ChartType::Pie => {
            check_absent(p.barwidth.map(|m| m.1), "barwidth")?;
            check_absent(p.orient.map(|m| m.1), "orient")?;
            check_absent(p.marker.map(|m| m.1), "marker")?;
            check_absent(p.linestyle.map(|m| m.1), "linestyle")?;
            TypeSpecific::Pie {
                explode: p.explode.ok_or_else(|| missing("`explode` statement"))?.0,
            }
        }
        ChartType::Scatter => {
            check_absent(p.barwidth.map(|m| m.1), "barwidth")?;
            check_absent(p.orient.map(|m| m.1), "orient")?;
            check_absent(p.linestyle.map(|m| m.1), "linestyle")?;
            check_absent(p.explode.as_ref().map(|m| m.1), "explode")?;
            TypeSpecific::Scatter {
                marker: p.marker.ok_or_else(|| missing("`marker` statement"))?.0,
            }
        }
    };

    let rows = row_labels.len();
    let mut values = vec![Vec::with_capacity(n_series); rows];
    let mut col_labels = Vec::with_capacity(n_series);
    for (name, data, line) in p.series {
        if data.len() != rows {
            return Err(ScriptError::semantic(
                line,
                1,
                format!(
                    "series {} has {} values for {rows} labels",
                    quote(&name),
                    data.len()
                ),
            ));
        }
        for (row, v) in values.iter_mut().zip(data) {
            row.push(v);
        }
        col_labels.push(name);
    }
    let table = MetaTable {
        title: title.text.clone(),
        col_labels,
        row_labels,
        values,
    };
    let spec = ChartSpec {
        chart_type,
        title,
        grid,
        legend,
        palette,
        fonts: Fonts {
            title_size,
            label_size,
        },
        type_specific,
    };
    spec.check_against(&table)
        .map_err(|m| ScriptError::semantic(last_line, 1, m))?;
    Ok((spec, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartsynth::spec::derive_spec;
    use crate::chartsynth::table::sample_table;

    const FIXTURE: &str = r#"# quarterly revenue
type bar
title "Revenue by Year" pos=center
grid on
legend on loc=upper-right
font title = 14
font label = 10
color 0 = #1f77b4   # primary
barwidth 0.6
orient v
xlabels ["2019" "2020" "2021"]
series "Revenue" = [12.5 30 41.2]
"#;

    #[test]
    fn fixture_parses_to_expected_spec() {
        let (spec, table) = parse_code(FIXTURE).unwrap();
        assert_eq!(spec.chart_type, ChartType::Bar);
        assert_eq!(spec.palette, ["#1f77b4"]);
        assert_eq!(
            spec.type_specific,
            TypeSpecific::Bar {
                width: 0.6,
                orientation: Orientation::Vertical
            }
        );
        assert_eq!(table.values, vec![vec![12.5], vec![30.0], vec![41.2]]);
        assert_eq!(table.row_labels, ["2019", "2020", "2021"]);
        let again = gen_code(&spec, &table).unwrap();
        assert_eq!(parse_code(&again).unwrap(), (spec, table));
    }

    #[test]
    fn round_trip_over_many_seeds() {
        for seed in 0..500 {
            let (t, _) = sample_table(seed);
            let s = derive_spec(&t, seed);
            let code = gen_code(&s, &t).unwrap();
            assert_eq!(code.matches("\nseries ").count(), t.num_series());
            for (i, c) in s.palette.iter().enumerate() {
                assert!(code.contains(&format!("color {i} = {c}\n")));
            }
            assert_eq!(parse_code(&code).unwrap(), (s, t), "seed {seed}");
        }
    }

    #[test]
    fn empty_document_is_syntax_error_on_line_one() {
        for doc in ["", "\n\n", "# just a comment\n"] {
            let e = parse_code(doc).unwrap_err();
            assert_eq!(e.kind, ScriptErrorKind::Syntax, "{doc:?}");
            assert_eq!(e.line, 1);
        }
    }

    #[test]
    fn lone_type_statement_misses_series() {
        let e = parse_code("type bar").unwrap_err();
        assert_eq!(e.kind, ScriptErrorKind::Semantic);
        assert!(e.message.contains("missing series"), "{e}");
    }

    #[test]
    fn duplicate_and_out_of_range_are_semantic() {
        let dup = FIXTURE.replace("grid on\n", "grid on\ngrid off\n");
        let e = parse_code(&dup).unwrap_err();
        assert_eq!((e.kind, e.line), (ScriptErrorKind::Semantic, 5));
        assert!(e.message.contains("duplicate"));

        let oob = FIXTURE.replace("color 0 =", "color 3 =");
        let e = parse_code(&oob).unwrap_err();
        assert_eq!((e.kind, e.line), (ScriptErrorKind::Semantic, 8));
        assert!(e.message.contains("out of range"));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_code("type bar\ntitle Revenue pos=center\n").unwrap_err();
        assert_eq!((e.kind, e.line, e.col), (ScriptErrorKind::Syntax, 2, 7));
        let e = parse_code("series \"a\" = [1 2\n").unwrap_err();
        assert_eq!((e.kind, e.line), (ScriptErrorKind::Syntax, 1));
        let e = parse_code("grid maybe").unwrap_err();
        assert_eq!((e.kind, e.col), (ScriptErrorKind::Syntax, 6));
        let e = parse_code("font title = 14.5").unwrap_err();
        assert_eq!(e.kind, ScriptErrorKind::Syntax);
    }

    #[test]
    fn hash_starts_comment_unless_six_hex_digits() {
        let toks = lex_line("color 0 = #abcdef # note #12345", 1).unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(toks[3].0, Tok::Hex("#abcdef".into()));
        // Seven hex digits is a comment, so the color is missing.
        let toks = lex_line("color 0 = #abcdef1", 1).unwrap();
        assert_eq!(toks.len(), 3);
    }

    #[test]
    fn uppercase_hex_is_rejected() {
        let e = parse_code(&FIXTURE.replace("#1f77b4", "#1F77B4")).unwrap_err();
        assert_eq!(e.kind, ScriptErrorKind::Semantic);
    }

    #[test]
    fn type_specific_mismatch_is_semantic() {
        let e =
            parse_code(&FIXTURE.replace("orient v\n", "orient v\nmarker circle\n")).unwrap_err();
        assert_eq!(e.kind, ScriptErrorKind::Semantic);
        assert!(e.message.contains("does not apply"));
    }

    #[test]
    fn strings_with_quotes_round_trip() {
        let code = FIXTURE
            .replace("\"Revenue by Year\"", r#""Say \"hi\" \\ now""#)
            .replace("\"2019\"", r#""a b""#);
        let (spec, table) = parse_code(&code).unwrap();
        assert_eq!(spec.title.text, "Say \"hi\" \\ now");
        assert_eq!(
            parse_code(&gen_code(&spec, &table).unwrap()).unwrap(),
            (spec, table)
        );
    }

    #[test]
    fn inconsistent_spec_is_generation_error() {
        let (t, _) = sample_table(1);
        let mut s = derive_spec(&t, 1);
        s.palette.push("#000000".into());
        assert!(matches!(gen_code(&s, &t), Err(Error::Generation(_))));
    }
}
