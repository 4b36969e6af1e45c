//! Lexer and recursive-descent parser producing an unresolved syntax tree.

use super::FormulaError;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Ast {
    Lit(Value),
    Ident(String),
    Call(String, Vec<Node>),
    Unary(UnOp, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
    Let(String, Box<Node>, Box<Node>),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Node {
    pub ast: Ast,
    pub pos: usize,
}

#[derive(Debug)]
pub(crate) struct Header {
    pub params: Vec<(String, usize)>,
    /// Present when the header declares `index`; holds the list parameters.
    pub analytical: Option<Vec<(String, usize)>>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(i) => i.to_string(),
            Tok::Float(f) => f.to_string(),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Ident(s) => s.clone(),
            Tok::Sym(s) => s.to_string(),
            Tok::Eof => "end of input".into(),
        }
    }
}

const SYMBOLS: [&str; 15] = ["==", "!=", "<=", ">=", "(", ")", ",", "=", "<", ">", "+", "-", "*", "/", "%"];
const KEYWORDS: [&str; 11] = ["if", "then", "else", "let", "in", "and", "or", "not", "true", "false", "null"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
        } else if c == '#' {
            i = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i < bytes.len() && bytes[i] == b'.' {
                float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| FormulaError::parse(src, start, &["number"], text))?)
            } else {
                match text.parse() {
                    Ok(n) => Tok::Int(n),
                    Err(_) => return Err(FormulaError::parse(src, start, &["integer within 64 bits"], text)),
                }
            };
            out.push((tok, start));
        } else if c == '\'' {
            let start = i;
            i += 1;
            let mut s = String::new();
            loop {
                match src[i..].chars().next() {
                    None => return Err(FormulaError::parse(src, start, &["closing quote"], "end of input")),
                    Some('\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push((Tok::Str(s), start));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            let len = src[i..]
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_'))
                .unwrap_or(src.len() - i);
            i += len;
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push((Tok::Sym(sym), i));
            i += sym.len();
        } else {
            return Err(FormulaError::parse(src, i, &["expression"], &c.to_string()));
        }
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, FormulaError> {
        Err(FormulaError::parse(self.src, self.pos(), expected, &self.peek().describe()))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn sym(&mut self, s: &'static str) -> Result<(), FormulaError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[s])
        }
    }

    fn kw(&mut self, k: &'static str) -> Result<(), FormulaError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.fail(&[k])
        }
    }

    fn name(&mut self) -> Result<(String, usize), FormulaError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let (_, pos) = self.bump();
                Ok((s, pos))
            }
            _ => self.fail(&["identifier"]),
        }
    }

    fn header(&mut self) -> Result<Header, FormulaError> {
        self.kw("fn")?;
        self.sym("(")?;
        let mut names = vec![self.name()?];
        while self.is_sym(",") {
            self.bump();
            names.push(self.name()?);
        }
        self.sym(")")?;
        self.sym("=")?;
        let mut seen = std::collections::HashSet::new();
        for (n, pos) in &names {
            if !seen.insert(n.clone()) {
                return Err(FormulaError::parse(self.src, *pos, &["distinct parameter name"], n));
            }
        }
        match names.iter().position(|(n, _)| n == "index") {
            None => Ok(Header { params: names, analytical: None }),
            Some(k) => {
                let lists = names.split_off(k + 1);
                let (_, index_pos) = names.pop().expect("index present");
                if lists.len() != names.len() {
                    return Err(FormulaError::Arity {
                        message: format!(
                            "header declares {} parameters but {} list parameters after `index`",
                            names.len(),
                            lists.len()
                        ),
                        offset: index_pos,
                    });
                }
                Ok(Header { params: names, analytical: Some(lists) })
            }
        }
    }

    fn expr(&mut self) -> Result<Node, FormulaError> {
        let pos = self.pos();
        if self.is_kw("if") {
            self.bump();
            let c = self.expr()?;
            self.kw("then")?;
            let t = self.expr()?;
            self.kw("else")?;
            let e = self.expr()?;
            return Ok(Node { ast: Ast::If(Box::new(c), Box::new(t), Box::new(e)), pos });
        }
        if self.is_kw("let") {
            self.bump();
            let (name, _) = self.name()?;
            self.sym("=")?;
            let v = self.expr()?;
            self.kw("in")?;
            let body = self.expr()?;
            return Ok(Node { ast: Ast::Let(name, Box::new(v), Box::new(body)), pos });
        }
        self.or()
    }

    fn or(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.and()?;
        while self.is_kw("or") {
            let (_, pos) = self.bump();
            let rhs = self.and()?;
            lhs = Node { ast: Ast::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.not()?;
        while self.is_kw("and") {
            let (_, pos) = self.bump();
            let rhs = self.not()?;
            lhs = Node { ast: Ast::Binary(BinOp::And, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Node, FormulaError> {
        if self.is_kw("not") {
            let (_, pos) = self.bump();
            let inner = self.not()?;
            return Ok(Node { ast: Ast::Unary(UnOp::Not, Box::new(inner)), pos });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Node, FormulaError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        let (_, pos) = self.bump();
        let rhs = self.add()?;
        Ok(Node { ast: Ast::Binary(op, Box::new(lhs), Box::new(rhs)), pos })
    }

    fn add(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.mul()?;
            lhs = Node { ast: Ast::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn mul(&mut self) -> Result<Node, FormulaError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => BinOp::Rem,
                _ => return Ok(lhs),
            };
            let (_, pos) = self.bump();
            let rhs = self.unary()?;
            lhs = Node { ast: Ast::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<Node, FormulaError> {
        if self.is_sym("-") {
            let (_, pos) = self.bump();
            let inner = self.unary()?;
            return Ok(Node { ast: Ast::Unary(UnOp::Neg, Box::new(inner)), pos });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node, FormulaError> {
        let pos = self.pos();
        let ast = match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ast::Lit(Value::Int(i))
            }
            Tok::Float(f) => {
                self.bump();
                Ast::Lit(Value::Float(f))
            }
            Tok::Str(s) => {
                self.bump();
                Ast::Lit(Value::Text(s))
            }
            Tok::Sym("(") => {
                self.bump();
                let inner = self.expr()?;
                self.sym(")")?;
                return Ok(inner);
            }
            Tok::Ident(k) if k == "true" || k == "false" => {
                self.bump();
                Ast::Lit(Value::Bool(k == "true"))
            }
            Tok::Ident(k) if k == "null" => {
                self.bump();
                Ast::Lit(Value::Null)
            }
            Tok::Ident(k) if !KEYWORDS.contains(&k.as_str()) => {
                self.bump();
                if self.is_sym("(") {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.is_sym(")") {
                        args.push(self.expr()?);
                        while self.is_sym(",") {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.sym(")")?;
                    Ast::Call(k, args)
                } else {
                    Ast::Ident(k)
                }
            }
            _ => return self.fail(&["expression"]),
        };
        Ok(Node { ast, pos })
    }
}

pub(crate) fn parse(src: &str) -> Result<(Header, Node), FormulaError> {
    let mut p = Parser { src, toks: lex(src)?, at: 0 };
    let header = p.header()?;
    let body = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.fail(&["end of input"]);
    }
    Ok((header, body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(src: &str) -> Ast {
        parse(src).unwrap().1.ast
    }

    #[test]
    fn precedence() {
        let Ast::Binary(BinOp::Sub, lhs, rhs) = body("fn(a) = a * 2 - -1") else { panic!() };
        assert!(matches!(lhs.ast, Ast::Binary(BinOp::Mul, _, _)));
        assert!(matches!(rhs.ast, Ast::Unary(UnOp::Neg, _)));
        assert!(matches!(body("fn(a) = a > 1 and not a > 5 or a == 0"), Ast::Binary(BinOp::Or, _, _)));
    }

    #[test]
    fn text_literals_double_their_quotes() {
        assert_eq!(body("fn(a) = 'it''s'"), Ast::Lit(Value::Text("it's".into())));
    }

    #[test]
    fn comments_and_numbers() {
        assert_eq!(body("# leading\nfn(a) = # trailing\n 1.5e1"), Ast::Lit(Value::Float(15.0)));
        assert_eq!(body("fn(a) = .5"), Ast::Lit(Value::Float(0.5)));
    }

    #[test]
    fn analytical_header() {
        let (h, _) = parse("fn(t, index, t_list) = t").unwrap();
        assert_eq!(h.params[0].0, "t");
        assert_eq!(h.analytical.unwrap()[0].0, "t_list");
        assert!(matches!(parse("fn(a, b, index, al) = a"), Err(FormulaError::Arity { .. })));
    }

    #[test]
    fn errors_carry_position_and_expectation() {
        match parse("fn(a) = a +") {
            Err(FormulaError::Parse { offset, expected, .. }) => {
                assert_eq!(offset, 11);
                assert_eq!(expected, vec!["expression".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        match parse("fn(a) =\n  (a") {
            Err(FormulaError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 5)),
            other => panic!("{other:?}"),
        }
        assert!(parse("fn(a) = 'open").is_err());
        assert!(parse("fn(a, a) = a").is_err());
        assert!(parse("fn(a) = a a").is_err());
    }
}
