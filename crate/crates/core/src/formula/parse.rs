//! Text syntax for formulas.
//!
//! ```text
//! or       := and ('|' and)*
//! and      := temporal ('&' temporal)*
//! temporal := unary ('U' interval temporal)?
//! unary    := '!' unary | ('G' | 'F') interval temporal | atom
//! atom     := 'true' | 'false' | ident | '(' or ')'
//! interval := '[' num ',' (num | 'inf') (']' | ')')
//! ```
//!
//! Until is right-associative, so `a U b U c` reads as `a U (b U c)`.

use super::{Formula, FormulaError, Interval};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Not,
    And,
    Or,
    Until,
    Always,
    Eventually,
    Num(f64),
    Ident(String),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            ',' => Some(Tok::Comma),
            '!' | '~' => Some(Tok::Not),
            '&' => Some(Tok::And),
            '|' => Some(Tok::Or),
            _ => None,
        };
        if let Some(t) = single {
            out.push((start, t));
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '-' || chars[i] == '+') {
                // stop a sign from swallowing the next token unless it follows an exponent
                if (chars[i] == '-' || chars[i] == '+') && !matches!(chars[i - 1], 'e' | 'E') {
                    break;
                }
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| FormulaError::Parse { pos: start, msg: format!("bad number '{text}'") })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let tok = match text.as_str() {
                "U" => Tok::Until,
                "G" => Tok::Always,
                "F" => Tok::Eventually,
                "inf" => Tok::Num(f64::INFINITY),
                _ => Tok::Ident(text),
            };
            out.push((start, tok));
            continue;
        }
        return Err(FormulaError::Parse { pos: start, msg: format!("unexpected character '{c}'") });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Parse { pos: self.offset(), msg: msg.into() })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn or(&mut self) -> Result<Formula, FormulaError> {
        let mut f = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            f = Formula::or(f, self.and()?);
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula, FormulaError> {
        let mut f = self.temporal()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            f = Formula::and(f, self.temporal()?);
        }
        Ok(f)
    }

    fn temporal(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Tok::Until) {
            self.pos += 1;
            let i = self.interval()?;
            let rhs = self.temporal()?;
            return Ok(Formula::until(lhs, rhs, i));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Always) => {
                self.pos += 1;
                let i = self.interval()?;
                Ok(Formula::always(self.temporal()?, i))
            }
            Some(Tok::Eventually) => {
                self.pos += 1;
                let i = self.interval()?;
                Ok(Formula::eventually(self.temporal()?, i))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, FormulaError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.or()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(match name.as_str() {
                    "true" => Formula::True,
                    "false" => Formula::False,
                    _ => Formula::Pred(name),
                })
            }
            Some(_) => self.err("expected a predicate, 'true', 'false' or '('"),
            None => self.err("unexpected end of input"),
        }
    }

    fn num(&mut self) -> Result<f64, FormulaError> {
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected a number"),
        }
    }

    fn interval(&mut self) -> Result<Interval, FormulaError> {
        let at = self.offset();
        self.expect(Tok::LBrack, "'[' to open an interval")?;
        let lo = self.num()?;
        self.expect(Tok::Comma, "','")?;
        let hi = self.num()?;
        let right_open = match self.peek() {
            Some(Tok::RBrack) => false,
            Some(Tok::RParen) => true,
            _ => return self.err("expected ']' or ')' to close an interval"),
        };
        self.pos += 1;
        Interval::new(lo, hi, right_open).map_err(|e| FormulaError::Parse { pos: at, msg: e.to_string() })
    }
}

/// Parses the infix formula syntax described in the module docs.
pub fn parse(src: &str) -> Result<Formula, FormulaError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, end: src.chars().count() };
    let f = p.or()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::closed(a, b).unwrap()
    }

    #[test]
    fn precedence() {
        let f = parse("F[5,10] G[0,10] mu1 & mu2 U[0,8] mu3").unwrap();
        let expect = Formula::and(
            Formula::eventually(Formula::always(Formula::pred("mu1"), iv(0.0, 10.0)), iv(5.0, 10.0)),
            Formula::until(Formula::pred("mu2"), Formula::pred("mu3"), iv(0.0, 8.0)),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn until_is_right_associative() {
        let f = parse("a U[0,1] b U[0,2] c").unwrap();
        let expect = Formula::until(
            Formula::pred("a"),
            Formula::until(Formula::pred("b"), Formula::pred("c"), iv(0.0, 2.0)),
            iv(0.0, 1.0),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn not_binds_tighter_than_until_and_and_tighter_than_or() {
        let f = parse("!a U[0,1] b | c & d").unwrap();
        let expect = Formula::or(
            Formula::until(Formula::not(Formula::pred("a")), Formula::pred("b"), iv(0.0, 1.0)),
            Formula::and(Formula::pred("c"), Formula::pred("d")),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn right_open_and_unbounded_intervals() {
        let f = parse("F[0,2.5) a").unwrap();
        assert_eq!(f, Formula::eventually(Formula::pred("a"), Interval::new(0.0, 2.5, true).unwrap()));
        let f = parse("G[0,inf] a").unwrap();
        assert_eq!(f, Formula::always(Formula::pred("a"), Interval::closed(0.0, f64::INFINITY).unwrap()));
    }

    #[test]
    fn display_round_trips_structure() {
        let f = parse("(mu1 & !mu2) | G[0,2] true").unwrap();
        assert_eq!(f.to_string(), "(or (and mu1 (not mu2)) (always [0,2] true))");
    }

    #[test]
    fn errors_carry_offsets() {
        match parse("mu1 & & mu2") {
            Err(FormulaError::Parse { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("G[3,1] a"), Err(FormulaError::Parse { pos: 1, .. })));
        assert!(parse("(a").is_err());
        assert!(parse("a b").is_err());
        assert!(parse("U[0,1] a").is_err());
    }
}
