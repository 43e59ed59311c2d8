//! Additive regression formulas (`y ~ x1 + x2`, `y ~ . - 1`) and design matrices.
//!
//! Grammar, whitespace-insensitive:
//!
//! ```text
//! formula   := name "~" first ("+" name)* ("-" "1")?
//! first     := "." | "1" | "0" | name
//! name      := [A-Za-z_][A-Za-z0-9_.]* | "`" any-but-backtick "`"
//! ```
//!
//! A leading `0` or a trailing `- 1` removes the intercept. `.` stands for
//! every dataset column other than the response, in dataset order.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tabular::Dataset;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub response: String,
    /// `.` was used; expanded when the design is built.
    pub all_columns: bool,
    pub terms: Vec<String>,
    pub intercept: bool,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ ", quote(&self.response))?;
        let mut parts: Vec<String> = Vec::new();
        if self.all_columns {
            parts.push(".".into());
        } else if self.terms.is_empty() {
            parts.push("1".into());
        }
        parts.extend(self.terms.iter().map(|t| quote(t)));
        f.write_str(&parts.join(" + "))?;
        if !self.intercept {
            f.write_str(" - 1")?;
        }
        Ok(())
    }
}

fn is_plain_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn quote(name: &str) -> String {
    if is_plain_name(name) {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Tilde,
    Plus,
    Minus,
    Dot,
    Int(u32),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |position: usize, message: &str| Error::Syntax {
        position,
        message: message.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '~' => out.push((start, Token::Tilde)),
            '+' => out.push((start, Token::Plus)),
            '-' => out.push((start, Token::Minus)),
            '`' => {
                let close = bytes[i + 1..]
                    .iter()
                    .position(|&b| b == '`')
                    .ok_or_else(|| syntax(start, "unterminated backtick name"))?;
                let name: String = bytes[i + 1..i + 1 + close].iter().collect();
                if name.is_empty() {
                    return Err(syntax(start, "empty name"));
                }
                out.push((start, Token::Name(name)));
                i += close + 2;
                continue;
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = bytes[start..i].iter().collect();
                let v = s.parse().map_err(|_| syntax(start, "number too large"))?;
                out.push((start, Token::Int(v)));
                continue;
            }
            '.' if !bytes
                .get(i + 1)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == '_') =>
            {
                out.push((start, Token::Dot))
            }
            c if c.is_ascii_alphabetic() || c == '_' || c == '.' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_' || bytes[i] == '.')
                {
                    i += 1;
                }
                out.push((start, Token::Name(bytes[start..i].iter().collect())));
                continue;
            }
            other => return Err(syntax(start, &format!("unexpected character {other:?}"))),
        }
        i += 1;
    }
    Ok(out)
}

pub fn parse_formula(text: &str) -> Result<ModelSpec> {
    let tokens = tokenize(text)?;
    let end = text.chars().count();
    let mut pos = 0;
    let syntax = |position: usize, message: &str| Error::Syntax {
        position,
        message: message.to_string(),
    };
    let at = |pos: usize| tokens.get(pos).map_or(end, |t| t.0);

    let response = match tokens.get(pos) {
        Some((_, Token::Name(n))) => n.clone(),
        _ => return Err(syntax(at(pos), "expected response name")),
    };
    pos += 1;
    if !matches!(tokens.get(pos), Some((_, Token::Tilde))) {
        return Err(syntax(at(pos), "expected '~'"));
    }
    pos += 1;

    let mut spec = ModelSpec {
        response,
        all_columns: false,
        terms: Vec::new(),
        intercept: true,
    };
    match tokens.get(pos) {
        Some((_, Token::Dot)) => spec.all_columns = true,
        Some((_, Token::Int(1))) => {}
        Some((_, Token::Int(0))) => spec.intercept = false,
        Some((_, Token::Name(n))) => spec.terms.push(n.clone()),
        _ => return Err(syntax(at(pos), "expected '.', '0', '1' or a column name")),
    }
    pos += 1;

    loop {
        match tokens.get(pos) {
            None => break,
            Some((_, Token::Plus)) => {
                pos += 1;
                match tokens.get(pos) {
                    Some((_, Token::Name(n))) => {
                        if spec.terms.contains(n) {
                            return Err(Error::DuplicateTerm(n.clone()));
                        }
                        spec.terms.push(n.clone());
                        pos += 1;
                    }
                    _ => return Err(syntax(at(pos), "expected column name after '+'")),
                }
            }
            Some((_, Token::Minus)) => {
                pos += 1;
                if !matches!(tokens.get(pos), Some((_, Token::Int(1)))) {
                    return Err(syntax(at(pos), "only '- 1' may follow '-'"));
                }
                spec.intercept = false;
                pos += 1;
                if pos < tokens.len() {
                    return Err(syntax(at(pos), "'- 1' must end the formula"));
                }
            }
            Some(_) => return Err(syntax(at(pos), "expected '+' or '- 1'")),
        }
    }

    if spec.terms.contains(&spec.response) {
        return Err(Error::ResponseInTerms(spec.response));
    }
    if !spec.intercept && !spec.all_columns && spec.terms.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(spec)
}

/// Response vector and regressor matrix, intercept column first when present.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub response: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub term_names: Vec<String>,
    pub intercept: bool,
}

impl DesignMatrix {
    pub fn new(
        response: impl Into<String>,
        y: DVector<f64>,
        x: DMatrix<f64>,
        term_names: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        if x.nrows() != y.len() || x.ncols() != term_names.len() || x.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "y has {} rows, X is {}x{}, {} names",
                y.len(),
                x.nrows(),
                x.ncols(),
                term_names.len()
            )));
        }
        Ok(Self {
            response: response.into(),
            y,
            x,
            term_names,
            intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn term_index(&self, name: &str) -> Result<usize> {
        self.term_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Indices of the non-intercept columns.
    pub fn regressor_indices(&self) -> Vec<usize> {
        (usize::from(self.intercept)..self.d()).collect()
    }

    /// Rows `idx` (repeats allowed) as a new design.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            response: self.response.clone(),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(idx),
            term_names: self.term_names.clone(),
            intercept: self.intercept,
        }
    }

    pub fn with_response(&self, y: DVector<f64>) -> Self {
        Self {
            y,
            ..self.clone()
        }
    }
}

pub fn build_design(spec: &ModelSpec, data: &Dataset) -> Result<DesignMatrix> {
    let y = data.column(&spec.response)?;
    let mut terms: Vec<String> = Vec::new();
    if spec.all_columns {
        terms.extend(
            data.names()
                .iter()
                .filter(|n| **n != spec.response)
                .cloned(),
        );
    }
    for t in &spec.terms {
        if terms.contains(t) {
            return Err(Error::DuplicateTerm(t.clone()));
        }
        terms.push(t.clone());
    }
    let cols = terms
        .iter()
        .map(|t| data.column(t))
        .collect::<Result<Vec<_>>>()?;

    let n = data.n_rows();
    let d = cols.len() + usize::from(spec.intercept);
    if d == 0 {
        return Err(Error::EmptyModel);
    }
    let mut x = DMatrix::zeros(n, d);
    let mut names = Vec::with_capacity(d);
    if spec.intercept {
        x.column_mut(0).fill(1.0);
        names.push(INTERCEPT.to_string());
    }
    let offset = usize::from(spec.intercept);
    for (j, (name, col)) in terms.into_iter().zip(cols).enumerate() {
        x.column_mut(j + offset).copy_from_slice(col);
        names.push(name);
    }
    DesignMatrix::new(
        spec.response.clone(),
        DVector::from_column_slice(y),
        x,
        names,
        spec.intercept,
    )
}
