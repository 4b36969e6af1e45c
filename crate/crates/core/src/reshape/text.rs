//! S-expression text form of [`Program`], e.g.
//! `(pivot_wider (input) name_col="City" value_col="Temperature")`.
//! String parameters are JSON string literals; column lists are JSON arrays.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::Program;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse program at byte {offset}: {message}")]
pub struct ParseProgramError {
    pub offset: usize,
    pub message: String,
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub(super) fn write_program(p: &Program, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match p {
        Program::Input => f.write_str("(input)"),
        Program::PivotLonger { child, columns, key_name, value_name } => {
            let cols = serde_json::to_string(columns).expect("strings always serialize");
            write!(
                f,
                "(pivot_longer {child} columns={cols} key_name={} value_name={})",
                quote(key_name),
                quote(value_name)
            )
        }
        Program::PivotWider { child, name_col, value_col } => write!(
            f,
            "(pivot_wider {child} name_col={} value_col={})",
            quote(name_col),
            quote(value_col)
        ),
        Program::Separate { child, col, left_name, right_name, delimiter } => write!(
            f,
            "(separate {child} col={} left_name={} right_name={} delimiter={})",
            quote(col),
            quote(left_name),
            quote(right_name),
            quote(delimiter)
        ),
        Program::SeparateRows { child, col, delimiter } => write!(
            f,
            "(separate_rows {child} col={} delimiter={})",
            quote(col),
            quote(delimiter)
        ),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseProgramError> {
        Err(ParseProgramError { offset: self.pos, message: message.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> Result<(), ParseProgramError> {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseProgramError> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("expected identifier");
        }
        let s = &self.rest()[..len];
        self.pos += len;
        Ok(s)
    }

    fn json(&mut self) -> Result<serde_json::Value, ParseProgramError> {
        self.skip_ws();
        let mut stream = serde_json::Deserializer::from_str(self.rest()).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(v)) => {
                self.pos += stream.byte_offset();
                Ok(v)
            }
            Some(Err(e)) => self.err(e.to_string()),
            None => self.err("expected value"),
        }
    }

    fn program(&mut self) -> Result<Program, ParseProgramError> {
        self.eat('(')?;
        let op_start = self.pos;
        let op = self.ident()?;
        if op == "input" {
            self.eat(')')?;
            return Ok(Program::Input);
        }
        let child = Box::new(self.program()?);
        let mut params: HashMap<&str, serde_json::Value> = HashMap::new();
        loop {
            self.skip_ws();
            if self.rest().starts_with(')') {
                self.pos += 1;
                break;
            }
            let key = self.ident()?;
            self.eat('=')?;
            let v = self.json()?;
            if params.insert(key, v).is_some() {
                return self.err(format!("duplicate parameter `{key}`"));
            }
        }
        let at = self.pos;
        let mut take_str = |k: &str| -> Result<String, ParseProgramError> {
            match params.remove(k) {
                Some(serde_json::Value::String(s)) => Ok(s),
                Some(_) => Err(ParseProgramError { offset: at, message: format!("`{k}` must be a string") }),
                None => Err(ParseProgramError { offset: at, message: format!("missing parameter `{k}`") }),
            }
        };
        let prog = match op {
            "pivot_wider" => Program::PivotWider {
                child,
                name_col: take_str("name_col")?,
                value_col: take_str("value_col")?,
            },
            "pivot_longer" => {
                let key_name = take_str("key_name")?;
                let value_name = take_str("value_name")?;
                let columns = match params.remove("columns") {
                    Some(v) => serde_json::from_value::<Vec<String>>(v).map_err(|_| ParseProgramError {
                        offset: at,
                        message: "`columns` must be a list of strings".into(),
                    })?,
                    None => return Err(ParseProgramError { offset: at, message: "missing parameter `columns`".into() }),
                };
                Program::PivotLonger { child, columns, key_name, value_name }
            }
            "separate" => Program::Separate {
                child,
                col: take_str("col")?,
                left_name: take_str("left_name")?,
                right_name: take_str("right_name")?,
                delimiter: take_str("delimiter")?,
            },
            "separate_rows" => Program::SeparateRows {
                child,
                col: take_str("col")?,
                delimiter: take_str("delimiter")?,
            },
            other => {
                return Err(ParseProgramError { offset: op_start, message: format!("unknown operator `{other}`") })
            }
        };
        if let Some(k) = params.keys().next() {
            return Err(ParseProgramError { offset: at, message: format!("unexpected parameter `{k}`") });
        }
        Ok(prog)
    }
}

pub(super) fn parse_program(s: &str) -> Result<Program, ParseProgramError> {
    let mut p = Parser { src: s, pos: 0 };
    let prog = p.program()?;
    p.skip_ws();
    if p.pos != s.len() {
        return p.err("trailing input");
    }
    Ok(prog)
}
