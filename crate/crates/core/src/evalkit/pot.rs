//! Program-of-thought mini language: single-assignment arithmetic over
//! numbers and number lists, ending in an `answer` binding.
//!
//! ```text
//! program := stmt ((NEWLINE | ';') stmt)*
//! stmt    := IDENT '=' expr
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := NUMBER | IDENT | IDENT '(' [expr (',' expr)*] ')'
//!          | '(' expr ')' | '[' [expr (',' expr)*] ']'
//! ```

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotError {
    #[error("PoT parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("PoT: undefined variable `{0}`")]
    UndefinedVariable(String),
    #[error("PoT: division by zero")]
    DivisionByZero,
    #[error("PoT: {0}")]
    Type(String),
    #[error("PoT: `{0}` assigned more than once")]
    Reassignment(String),
    #[error("PoT: program never assigns `answer`")]
    MissingAnswer,
    #[error("PoT: result is not a finite number")]
    NonNumeric,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Var(String),
    List(Vec<Expr>),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

/// A parsed program, ready to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct PotProgram {
    statements: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str, line: usize) -> Result<Vec<Tok>, PotError> {
    let err = |m: String| PotError::Parse { line, message: m };
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit))
        {
            let start = i;
            while chars
                .get(i)
                .is_some_and(|c| c.is_ascii_digit() || *c == '.')
            {
                i += 1;
            }
            if matches!(chars.get(i), Some('e' | 'E'))
                && chars
                    .get(i + 1)
                    .is_some_and(|c| c.is_ascii_digit() || *c == '-' || *c == '+')
            {
                i += 2;
                while chars.get(i).is_some_and(char::is_ascii_digit) {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| err(format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while chars
                .get(i)
                .is_some_and(|c| c.is_alphanumeric() || *c == '_')
            {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let sym = match c {
                '×' => '*',
                '÷' => '/',
                '+' | '-' | '*' | '/' | '(' | ')' | '[' | ']' | ',' | '=' => c,
                _ => return Err(err(format!("unexpected character `{c}`"))),
            };
            out.push(Tok::Sym(sym));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
}

impl Parser {
    fn err(&self, m: impl Into<String>) -> PotError {
        PotError::Parse {
            line: self.line,
            message: m.into(),
        }
    }

    fn peek_sym(&self, c: char) -> bool {
        self.toks.get(self.pos) == Some(&Tok::Sym(c))
    }

    fn expect(&mut self, c: char) -> Result<(), PotError> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, PotError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Sym(op @ ('+' | '-'))) = self.toks.get(self.pos).cloned() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, PotError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Sym(op @ ('*' | '/'))) = self.toks.get(self.pos).cloned() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, PotError> {
        if self.peek_sym('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek_sym('+') {
            self.pos += 1;
            return self.unary();
        }
        self.atom()
    }

    fn items(&mut self, close: char) -> Result<Vec<Expr>, PotError> {
        let mut out = Vec::new();
        if self.peek_sym(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.peek_sym(',') {
                self.pos += 1;
            } else {
                self.expect(close)?;
                return Ok(out);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, PotError> {
        let tok = self.toks.get(self.pos).cloned();
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(name)) => {
                if self.peek_sym('(') {
                    self.pos += 1;
                    Ok(Expr::Call(name, self.items(')')?))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Sym('[')) => Ok(Expr::List(self.items(']')?)),
            Some(t) => Err(self.err(format!("unexpected {t:?}"))),
            None => Err(self.err("unexpected end of statement")),
        }
    }
}

impl PotProgram {
    pub fn parse(src: &str) -> Result<Self, PotError> {
        let mut statements = Vec::new();
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            for piece in raw.split(';') {
                let toks = lex(piece, line)?;
                if toks.is_empty() {
                    continue;
                }
                let mut p = Parser { toks, pos: 0, line };
                let name = match p.toks.first() {
                    Some(Tok::Ident(n)) => n.clone(),
                    _ => return Err(p.err("statement must start with a variable name")),
                };
                p.pos = 1;
                p.expect('=')?;
                let e = p.expr()?;
                if p.pos != p.toks.len() {
                    return Err(p.err("trailing tokens after expression"));
                }
                statements.push((name, e));
            }
        }
        if statements.is_empty() {
            return Err(PotError::Parse {
                line: 1,
                message: "empty program".into(),
            });
        }
        Ok(Self { statements })
    }

    pub fn eval(&self) -> Result<f64, PotError> {
        let mut env: HashMap<&str, Value> = HashMap::new();
        for (name, e) in &self.statements {
            if env.contains_key(name.as_str()) {
                return Err(PotError::Reassignment(name.clone()));
            }
            let v = eval(e, &env)?;
            env.insert(name, v);
        }
        match env.get("answer") {
            Some(Value::Num(v)) if v.is_finite() => Ok(*v),
            Some(_) => Err(PotError::NonNumeric),
            None => Err(PotError::MissingAnswer),
        }
    }
}

/// Parse and run a program.
pub fn pot_eval(src: &str) -> Result<f64, PotError> {
    PotProgram::parse(src)?.eval()
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    List(Vec<f64>),
}

fn num(v: Value, ctx: &str) -> Result<f64, PotError> {
    match v {
        Value::Num(x) => Ok(x),
        Value::List(_) => Err(PotError::Type(format!("{ctx} needs a number, got a list"))),
    }
}

fn finite(x: f64) -> Result<f64, PotError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(PotError::NonNumeric)
    }
}

fn eval(e: &Expr, env: &HashMap<&str, Value>) -> Result<Value, PotError> {
    Ok(match e {
        Expr::Num(v) => Value::Num(*v),
        Expr::Var(n) => env
            .get(n.as_str())
            .cloned()
            .ok_or_else(|| PotError::UndefinedVariable(n.clone()))?,
        Expr::List(items) => Value::List(
            items
                .iter()
                .map(|i| num(eval(i, env)?, "list element"))
                .collect::<Result<_, _>>()?,
        ),
        Expr::Neg(inner) => Value::Num(-num(eval(inner, env)?, "negation")?),
        Expr::Bin(op, a, b) => {
            let a = num(eval(a, env)?, "arithmetic")?;
            let b = num(eval(b, env)?, "arithmetic")?;
            Value::Num(finite(match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                _ => {
                    if b == 0.0 {
                        return Err(PotError::DivisionByZero);
                    }
                    a / b
                }
            })?)
        }
        Expr::Call(f, args) => {
            let args: Vec<Value> = args
                .iter()
                .map(|a| eval(a, env))
                .collect::<Result<_, _>>()?;
            call(f, args)?
        }
    })
}

/// Numbers from either one list argument or several number arguments.
fn spread(f: &str, args: Vec<Value>) -> Result<Vec<f64>, PotError> {
    match args.as_slice() {
        [Value::List(xs)] => Ok(xs.clone()),
        _ => args.into_iter().map(|a| num(a, f)).collect(),
    }
}

fn call(f: &str, args: Vec<Value>) -> Result<Value, PotError> {
    let one = |args: Vec<Value>| -> Result<f64, PotError> {
        match <[Value; 1]>::try_from(args) {
            Ok([v]) => num(v, f),
            Err(_) => Err(PotError::Type(format!("{f} takes one argument"))),
        }
    };
    let v = match f {
        "sum" => spread(f, args)?.iter().sum(),
        "mean" => {
            let xs = spread(f, args)?;
            if xs.is_empty() {
                return Err(PotError::DivisionByZero);
            }
            xs.iter().sum::<f64>() / xs.len() as f64
        }
        "max" | "min" => {
            let xs = spread(f, args)?;
            let pick = if f == "max" { f64::max } else { f64::min };
            xs.into_iter()
                .reduce(pick)
                .ok_or_else(|| PotError::Type(format!("{f} of an empty list")))?
        }
        "len" => match <[Value; 1]>::try_from(args) {
            Ok([Value::List(xs)]) => xs.len() as f64,
            _ => return Err(PotError::Type("len takes one list".into())),
        },
        "abs" => one(args)?.abs(),
        "round" => match args.len() {
            1 => one(args)?.round(),
            2 => {
                let mut it = args.into_iter();
                let x = num(it.next().unwrap_or(Value::Num(0.0)), f)?;
                let d = num(it.next().unwrap_or(Value::Num(0.0)), f)?;
                if d.fract() != 0.0 || !(0.0..=15.0).contains(&d) {
                    return Err(PotError::Type(
                        "round digits must be an integer in 0..=15".into(),
                    ));
                }
                let s = 10f64.powi(d as i32);
                (x * s).round() / s
            }
            _ => return Err(PotError::Type("round takes one or two arguments".into())),
        },
        _ => return Err(PotError::Type(format!("unknown function `{f}`"))),
    };
    Ok(Value::Num(finite(v)?))
}
