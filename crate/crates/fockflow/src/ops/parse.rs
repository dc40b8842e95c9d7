//! Operator text grammar.
//!
//! ```text
//! SUM    := ['+'|'-'] TERM (('+'|'-') TERM)*
//! TERM   := FACTOR+            factors multiply; '*' between them is optional
//! FACTOR := NUMBER ['i'] | 'i' | '(' complex ')' | SPECIES LABEL
//! ```
//!
//! Species are `a ad b bd c cd N`; `†` is accepted in place of `d`. Labels
//! are slot indices (`a0`) or parenthesized momenta (`a(p-q)`).

use super::{Label, Letter, Momentum, OperatorPoly, Species, Word};
use crate::error::{Error, Result};
use crate::fock::C64;

pub fn parse_op(text: &str) -> Result<OperatorPoly<usize>> {
    Parser::new(text).sum()
}

pub fn parse_momentum_op(text: &str) -> Result<OperatorPoly<Momentum>> {
    Parser::new(text).sum()
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

fn err(position: usize, message: impl Into<String>) -> Error {
    Error::Parse { position, message: message.into() }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn sum<L: Label>(&mut self) -> Result<OperatorPoly<L>> {
        let mut terms = Vec::new();
        self.skip_ws();
        if self.peek().is_none() {
            return Err(err(0, "empty expression"));
        }
        let mut sign = 1.0;
        if let Some(c @ ('+' | '-' | '−')) = self.peek() {
            sign = if c == '+' { 1.0 } else { -1.0 };
            self.pos += c.len_utf8();
        }
        loop {
            let (w, c) = self.term()?;
            terms.push((w, c * sign));
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(c @ ('+' | '-' | '−')) => {
                    sign = if c == '+' { 1.0 } else { -1.0 };
                    self.pos += c.len_utf8();
                }
                Some(c) => return Err(err(self.pos, format!("unexpected `{c}`"))),
            }
        }
        Ok(OperatorPoly::from_terms(terms))
    }

    fn term<L: Label>(&mut self) -> Result<(Word<L>, C64)> {
        let mut coef = C64::new(1.0, 0.0);
        let mut word = Vec::new();
        let mut factors = 0;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') if factors > 0 => {
                    self.pos += 1;
                    continue;
                }
                Some(c) if c.is_ascii_digit() || c == '.' => coef *= self.number_factor()?,
                Some('(') => coef *= self.complex()?,
                Some(c) if c.is_alphabetic() => {
                    let start = self.pos;
                    let name = self.ident();
                    if name == "i" {
                        coef *= C64::new(0.0, 1.0);
                    } else {
                        let species = Species::from_name(name)
                            .ok_or_else(|| Error::UnknownSpecies { position: start, species: name.to_string() })?;
                        let (label, end) = L::parse_label(self.text, self.pos)?;
                        self.pos = end;
                        word.push(Letter::new(species, label));
                    }
                }
                _ => break,
            }
            factors += 1;
        }
        if factors == 0 {
            return Err(err(self.pos, "expected a term"));
        }
        Ok((word, coef))
    }

    // Alphabetic run, with `†` allowed as a suffix character.
    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphabetic() || c == '†' {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        &self.text[start..self.pos]
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.text.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        self.text[start..i].parse().map_err(|_| err(start, format!("bad number `{}`", &self.text[start..i])))
    }

    // A number, imaginary if an `i` follows immediately.
    fn number_factor(&mut self) -> Result<C64> {
        let x = self.number()?;
        let rest = &self.text[self.pos..];
        if rest.starts_with('i') && !rest[1..].starts_with(|c: char| c.is_alphanumeric()) {
            self.pos += 1;
            Ok(C64::new(0.0, x))
        } else {
            Ok(C64::new(x, 0.0))
        }
    }

    // '(' [sign] part (sign part)* ')', each part a real or imaginary number.
    fn complex(&mut self) -> Result<C64> {
        let open = self.pos;
        self.pos += 1;
        let mut acc = C64::new(0.0, 0.0);
        let mut sign = 1.0;
        let mut parts = 0;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') if parts > 0 => {
                    self.pos += 1;
                    return Ok(acc);
                }
                Some(c @ ('+' | '-')) => {
                    sign = if c == '+' { 1.0 } else { -1.0 };
                    self.pos += 1;
                    self.skip_ws();
                }
                _ => {}
            }
            match self.peek() {
                Some(c) if c.is_ascii_digit() || c == '.' => acc += self.number_factor()? * sign,
                Some('i') => {
                    self.pos += 1;
                    acc += C64::new(0.0, sign);
                }
                _ => return Err(err(open, "malformed complex scalar")),
            }
            sign = 1.0;
            parts += 1;
        }
    }
}

/// Parses `(p-q)`-style momentum labels starting at `pos`.
pub(super) fn parse_momentum_label(text: &str, pos: usize) -> Result<(Momentum, usize)> {
    let rest = &text[pos..];
    if !rest.starts_with('(') {
        return Err(err(pos, "expected a parenthesized momentum label"));
    }
    let close = rest.find(')').ok_or_else(|| err(pos, "unclosed momentum label"))?;
    let inner = &rest[1..close];
    let mut m = Momentum::zero();
    let bytes = inner.as_bytes();
    let mut i = 0;
    let mut any = false;
    while i < bytes.len() {
        if bytes[i] == b' ' {
            i += 1;
            continue;
        }
        let mut sign = 1i64;
        if bytes[i] == b'+' || bytes[i] == b'-' {
            if bytes[i] == b'-' {
                sign = -1;
            }
            i += 1;
        } else if any {
            return Err(err(pos + 1 + i, "expected `+` or `-` in momentum label"));
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let mult: i64 = if i > start { inner[start..i].parse().map_err(|_| err(pos + 1 + start, "bad multiplier"))? } else { 1 };
        let name_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        if i == name_start {
            if inner[start..i].trim() == "0" && !any {
                any = true;
                continue;
            }
            return Err(err(pos + 1 + name_start, "expected a momentum atom name"));
        }
        let atom = Momentum::atom(&inner[name_start..i]);
        for _ in 0..mult {
            m = if sign > 0 { m.add(&atom) } else { m.sub(&atom) };
        }
        any = true;
    }
    if !any {
        return Err(err(pos, "empty momentum label"));
    }
    Ok((m, pos + close + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_words_and_scalars() {
        let p = parse_op("ad0 a0").unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].0, vec![Letter::new(Species::Ad, 0), Letter::new(Species::A, 0)]);
        let q = parse_op("ad0 ad0 - 2 ad0 a0 + a0 a0").unwrap();
        assert_eq!(q.terms().len(), 3);
        assert_eq!(q.terms()[1].1, C64::new(-2.0, 0.0));
        let r = parse_op("a†0 * 0.5i c†1 + (1-2i) + 3e-1 N2").unwrap();
        assert_eq!(r.terms()[0].1, C64::new(0.0, 0.5));
        assert_eq!(r.terms()[1].1, C64::new(1.0, -2.0));
        assert_eq!(r.terms()[2].1, C64::new(0.3, 0.0));
    }

    #[test]
    fn reports_errors_with_positions() {
        match parse_op("xd0") {
            Err(Error::UnknownSpecies { position: 0, species }) => assert_eq!(species, "xd"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_op("ad0 +"), Err(Error::Parse { .. })));
        assert!(matches!(parse_op("a"), Err(Error::Parse { position: 1, .. })));
        assert!(matches!(parse_op(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn momentum_labels() {
        let p = parse_momentum_op("ad(p) a(p-q) a(q)").unwrap();
        assert_eq!(p.normal_order().to_string(), "ad(p) a(p-q) a(q)");
        let q = parse_momentum_op("a(-2p+q)").unwrap();
        assert_eq!(q.to_string(), "a(-2p+q)");
    }
}
