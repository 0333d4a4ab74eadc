//! Recursive-descent parser for the textual formula grammar.
//!
//! ```text
//! formula  = implies ;
//! implies  = disjunct [ "->" implies ] ;              (* right associative *)
//! disjunct = conjunct { "|" conjunct } ;
//! conjunct = until { "&" until } ;
//! until    = unary [ "U" interval unary ] ;
//! unary    = "!" unary
//!          | "G" interval unary
//!          | "F" interval unary
//!          | atom ;
//! atom     = "(" formula ")" | "true" | identifier ;
//! interval = "[" integer "," integer "]" ;
//! identifier = letter { letter | digit | "_" | "." } ;
//! ```
//!
//! `G`, `F` and `U` are operators only when directly followed by `[`; otherwise
//! they are ordinary identifiers.

use super::{Formula, Interval, PredicateTable, StlError, StlResult};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Minus,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> StlResult<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let single = |tok| Token { tok, line: tl, column: tc };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '[' => out.push(single(Tok::LBracket)),
            ']' => out.push(single(Tok::RBracket)),
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            ',' => out.push(single(Tok::Comma)),
            '!' => out.push(single(Tok::Bang)),
            '&' => out.push(single(Tok::Amp)),
            '|' => out.push(single(Tok::Pipe)),
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(single(Tok::Arrow));
                i += 2;
                col += 2;
                continue;
            }
            '-' => out.push(single(Tok::Minus)),
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(single(Tok::Number(s)));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(single(Tok::Ident(s)));
                continue;
            }
            other => {
                return Err(StlError::Syntax { line, column: col, message: format!("unexpected character `{other}`") })
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    table: &'a PredicateTable,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> StlResult<T> {
        let t = self.peek();
        Err(StlError::Syntax { line: t.line, column: t.column, message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> StlResult<()> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {what}, found {}", describe(&self.peek().tok)))
        }
    }

    fn is_operator(&self, name: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == name) && *self.peek_at(1) == Tok::LBracket
    }

    fn formula(&mut self) -> StlResult<Formula> {
        let lhs = self.disjunct()?;
        if self.peek().tok == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunct(&mut self) -> StlResult<Formula> {
        let mut lhs = self.conjunct()?;
        while self.peek().tok == Tok::Pipe {
            self.bump();
            let rhs = self.conjunct()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunct(&mut self) -> StlResult<Formula> {
        let mut lhs = self.until()?;
        while self.peek().tok == Tok::Amp {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> StlResult<Formula> {
        let lhs = self.unary()?;
        if self.is_operator("U") {
            self.bump();
            let i = self.interval()?;
            let rhs = self.unary()?;
            return Ok(Formula::until(i, lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> StlResult<Formula> {
        if self.peek().tok == Tok::Bang {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_operator("G") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::always(i, self.unary()?));
        }
        if self.is_operator("F") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::eventually(i, self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> StlResult<Formula> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(name) if name == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::Ident(name) => {
                let p = self.table.get(name).ok_or_else(|| StlError::UnknownPredicate {
                    name: name.clone(),
                    line: t.line,
                    column: t.column,
                })?;
                self.bump();
                Ok(Formula::Predicate(p))
            }
            other => self.syntax(format!("expected a formula, found {}", describe(other))),
        }
    }

    fn bound(&mut self) -> StlResult<usize> {
        let t = self.bump();
        let malformed = |message: String| StlError::MalformedInterval { line: t.line, column: t.column, message };
        match &t.tok {
            Tok::Number(s) => s.parse::<usize>().map_err(|_| malformed(format!("bound `{s}` is not a non-negative integer"))),
            Tok::Minus => Err(malformed("negative bound".into())),
            other => Err(malformed(format!("expected an integer bound, found {}", describe(other)))),
        }
    }

    fn interval(&mut self) -> StlResult<Interval> {
        let open = self.peek().clone();
        self.expect(Tok::LBracket, "`[`")?;
        let a = self.bound()?;
        self.expect(Tok::Comma, "`,`")?;
        let b = self.bound()?;
        self.expect(Tok::RBracket, "`]`")?;
        Interval::new(a, b).map_err(|_| StlError::MalformedInterval {
            line: open.line,
            column: open.column,
            message: format!("lower bound {a} exceeds upper bound {b}"),
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(s) => format!("number `{s}`"),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Bang => "`!`".into(),
        Tok::Amp => "`&`".into(),
        Tok::Pipe => "`|`".into(),
        Tok::Arrow => "`->`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses `text` against the predicates in `table`.
pub fn parse_formula(text: &str, table: &PredicateTable) -> StlResult<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, table };
    let f = p.formula()?;
    if p.peek().tok != Tok::Eof {
        return p.syntax(format!("unexpected {} after formula", describe(&p.peek().tok)));
    }
    Ok(f)
}
