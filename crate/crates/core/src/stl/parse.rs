use std::fmt;

use thiserror::Error;

use super::{Atom, Formula, Interval, Relation};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(usize),
    Number(f64),
    Ge,
    Le,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Var(i) => write!(f, "'x{i}'"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Ge => f.write_str("'>='"),
            Tok::Le => f.write_str("'<='"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::Comma => f.write_str("','"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);
    let err = |line, column, message: String| ParseError { line, column, message };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, column);
        let mut advance = |n: usize, i: &mut usize| {
            *i += n;
            column += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        let tok = match c {
            '(' => {
                advance(1, &mut i);
                Tok::LParen
            }
            ')' => {
                advance(1, &mut i);
                Tok::RParen
            }
            '[' => {
                advance(1, &mut i);
                Tok::LBracket
            }
            ']' => {
                advance(1, &mut i);
                Tok::RBracket
            }
            ',' => {
                advance(1, &mut i);
                Tok::Comma
            }
            '>' | '<' => {
                // strict comparisons are read as their closed counterparts
                let n = if chars.get(i + 1) == Some(&'=') { 2 } else { 1 };
                advance(n, &mut i);
                if c == '>' {
                    Tok::Ge
                } else {
                    Tok::Le
                }
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let lexeme: String = chars[start..j].iter().collect();
                let value: f64 = lexeme
                    .parse()
                    .map_err(|_| err(start_line, start_col, format!("malformed number '{lexeme}'")))?;
                if !value.is_finite() {
                    return Err(err(start_line, start_col, format!("non-finite number '{lexeme}'")));
                }
                advance(j - i, &mut i);
                Tok::Number(value)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                advance(j - i, &mut i);
                classify_word(word, start_line, start_col)?
            }
            other => return Err(err(start_line, start_col, format!("unexpected character '{other}'"))),
        };
        out.push(Spanned { tok, line: start_line, column: start_col });
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    Ok(out)
}

fn classify_word(word: String, line: usize, column: usize) -> Result<Tok, ParseError> {
    match word.as_str() {
        "True" | "not" | "and" | "or" | "F" | "G" | "U" => Ok(Tok::Ident(word)),
        w if w.starts_with('x') => w[1..]
            .parse::<usize>()
            .ok()
            .filter(|_| w.len() > 1 && w[1..].bytes().all(|b| b.is_ascii_digit()))
            .map(Tok::Var)
            .ok_or_else(|| ParseError { line, column, message: format!("unknown variable token '{w}'") }),
        w => Err(ParseError { line, column, message: format!("unknown variable token '{w}'") }),
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: String) -> ParseError {
        let s = &self.toks[self.pos];
        ParseError { line: s.line, column: s.column, message }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn or_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.is_word("or") {
            self.next();
            lhs = Formula::or(lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until_expr()?;
        while self.is_word("and") {
            self.next();
            lhs = Formula::and(lhs, self.until_expr()?);
        }
        Ok(lhs)
    }

    fn until_expr(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.is_word("U") {
            self.next();
            let iv = self.interval()?;
            lhs = Formula::until(iv, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.is_word("not") {
            self.next();
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_word("F") || self.is_word("G") {
            let eventually = self.is_word("F");
            self.next();
            let iv = self.interval()?;
            let body = self.unary()?;
            return Ok(if eventually { Formula::eventually(iv, body) } else { Formula::globally(iv, body) });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                let f = self.or_expr()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(w) if w == "True" => {
                self.next();
                Ok(Formula::True)
            }
            Tok::Var(var) => {
                self.next();
                let rel = match self.peek() {
                    Tok::Ge => Relation::Ge,
                    Tok::Le => Relation::Le,
                    other => return Err(self.error_here(format!("expected '>=' or '<=', found {other}"))),
                };
                self.next();
                match self.peek().clone() {
                    Tok::Number(c) => {
                        self.next();
                        Ok(Formula::atom(Atom::new(var, rel, c)))
                    }
                    other => Err(self.error_here(format!("expected a threshold, found {other}"))),
                }
            }
            other => Err(self.error_here(format!("expected a formula, found {other}"))),
        }
    }

    fn bound(&mut self) -> Result<usize, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) if n >= 0.0 && n.fract() == 0.0 && n <= u32::MAX as f64 => {
                self.next();
                Ok(n as usize)
            }
            other => Err(self.error_here(format!("expected a non-negative integer bound, found {other}"))),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(Tok::LBracket)?;
        let start = self.toks[self.pos].clone();
        let lo = self.bound()?;
        self.expect(Tok::Comma)?;
        let hi = self.bound()?;
        self.expect(Tok::RBracket)?;
        Interval::new(lo, hi).map_err(|_| ParseError {
            line: start.line,
            column: start.column,
            message: format!("interval [{lo},{hi}] has hi < lo"),
        })
    }
}

/// Parses the concrete formula syntax; see the module docs for the grammar.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let f = p.or_expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error_here(format!("unexpected trailing {}", p.peek())));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn parses_room_temperature_example() {
        let f = parse("F[0,10]((x0 >= 25) and G[0,60](x0 >= 22))").unwrap();
        let expected = Formula::eventually(
            iv(0, 10),
            Formula::and(
                Formula::atom(Atom::ge(0, 25.0)),
                Formula::globally(iv(0, 60), Formula::atom(Atom::ge(0, 22.0))),
            ),
        );
        assert_eq!(f, expected);
        assert_eq!(f.to_string(), "F[0,10]((x0 >= 25) and G[0,60](x0 >= 22))");
    }

    #[test]
    fn parses_simple_forms() {
        assert_eq!(parse("x0 >= 0").unwrap(), Formula::atom(Atom::ge(0, 0.0)));
        assert_eq!(parse("not (x1 <= 0.3)").unwrap(), Formula::not(Formula::atom(Atom::le(1, 0.3))));
        assert_eq!(parse("True").unwrap(), Formula::True);
        assert_eq!(parse("x3 > -1.5e-2").unwrap(), Formula::atom(Atom::ge(3, -0.015)));
    }

    #[test]
    fn precedence_unary_until_and_or() {
        let f = parse("x0 >= 1 or x1 >= 2 and not x0 <= 0 U[1,2] x1 <= 3").unwrap();
        let expected = Formula::or(
            Formula::atom(Atom::ge(0, 1.0)),
            Formula::and(
                Formula::atom(Atom::ge(1, 2.0)),
                Formula::until(
                    iv(1, 2),
                    Formula::not(Formula::atom(Atom::le(0, 0.0))),
                    Formula::atom(Atom::le(1, 3.0)),
                ),
            ),
        );
        assert_eq!(f, expected);
        assert_eq!(parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("F[5,2](x0 >= 1)").unwrap_err();
        assert_eq!((e.line, e.column), (1, 3));
        assert!(e.message.contains("hi < lo"));

        let e = parse("x0 >= 1 and\n  y2 >= 3").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        assert!(e.message.contains("unknown variable"));

        assert!(parse("x >= 1").is_err());
        assert!(parse("(x0 >= 1").is_err());
        assert!(parse("x0 >= 1)").is_err());
        assert!(parse("F[0,1.5](x0 >= 1)").is_err());
        assert!(parse("").is_err());
    }
}
