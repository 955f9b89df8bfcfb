//! Text grammar for polynomials.
//!
//! Terms are joined by `+`/`-`; a term is an optional real coefficient times
//! `*`-separated variable powers `x<i>^<k>`, e.g. `3*x1^4 + 4*x1^3 + 6*x1^2 + 7`.
//! Whitespace is ignored. Parenthesised sub-expressions raised to a
//! non-negative integer power, e.g. `4 - (x1 - 8)^2`, are accepted as well.

use super::{Monomial, PolyError, Polynomial};

pub fn parse_polynomial(text: &str, num_vars: usize) -> Result<Polynomial, PolyError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        num_vars,
        text,
    };
    let p = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(p)
}

/// Parses with the variable count inferred from the largest `x<i>` index.
pub fn parse_polynomial_auto(text: &str) -> Result<Polynomial, PolyError> {
    let tokens = tokenize(text)?;
    let n = tokens
        .iter()
        .filter_map(|t| match t {
            Token::Var(i) => Some(*i),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    parse_polynomial(text, n)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>, PolyError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |msg: &str| PolyError::Parse {
        input: text.to_string(),
        message: msg.to_string(),
    };
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1
            }
            '-' => {
                out.push(Token::Minus);
                i += 1
            }
            '*' => {
                out.push(Token::Star);
                i += 1
            }
            '^' => {
                out.push(Token::Caret);
                i += 1
            }
            '(' => {
                out.push(Token::LParen);
                i += 1
            }
            ')' => {
                out.push(Token::RParen);
                i += 1
            }
            'x' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j == start {
                    return Err(err("variable `x` must be followed by an index"));
                }
                let idx: usize = chars[start..j].iter().collect::<String>().parse().map_err(|_| err("bad variable index"))?;
                if idx == 0 {
                    return Err(err("variables are numbered from x1"));
                }
                out.push(Token::Var(idx));
                i = j;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                // exponent part like 1e-3
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s: String = chars[start..j].iter().collect();
                let v: f64 = s.parse().map_err(|_| err(&format!("bad number `{s}`")))?;
                out.push(Token::Num(v));
                i = j;
            }
            other => return Err(err(&format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    num_vars: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PolyError {
        PolyError::Parse {
            input: self.text.to_string(),
            message: format!("{message} (token {})", self.pos),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    // expr := ['+'|'-'] term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut negate = false;
        match self.peek() {
            Some(Token::Minus) => {
                negate = true;
                self.pos += 1;
            }
            Some(Token::Plus) => self.pos += 1,
            _ => {}
        }
        let first = self.term()?;
        let mut acc = if negate { -&first } else { first };
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = &acc + &t;
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = &acc - &t;
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := factor ('*' factor)*
    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while let Some(Token::Star) = self.peek() {
            self.pos += 1;
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    // factor := atom ['^' integer]
    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            match self.next() {
                Some(Token::Num(k)) if k >= 0.0 && k.fract() == 0.0 => Ok(base.pow(k as u32)),
                _ => Err(self.error("exponent must be a non-negative integer")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Polynomial::constant(self.num_vars, v)),
            Some(Token::Var(i)) => {
                if i > self.num_vars {
                    return Err(PolyError::Parse {
                        input: self.text.to_string(),
                        message: format!("variable x{i} exceeds the {} available variables", self.num_vars),
                    });
                }
                Ok(Polynomial::from_terms(
                    self.num_vars,
                    [(Monomial::var(self.num_vars, i - 1), 1.0)],
                ))
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(self.error("missing `)`")),
                }
            }
            Some(Token::Minus) => {
                let inner = self.factor()?;
                Ok(-&inner)
            }
            _ => Err(self.error("expected a number, variable or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_insensitive() {
        let a = parse_polynomial("3*x1^4+4*x1^3+6*x1^2+7", 1).unwrap();
        let b = parse_polynomial("  3 * x1 ^ 4 + 4*x1^3 +6*x1^2 + 7 ", 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coeff(&Monomial::new(vec![3])), 4.0);
    }

    #[test]
    fn parenthesised_powers_expand() {
        let a = parse_polynomial("4 - (x1 - 8)^2 - (x2 - 4)^2", 2).unwrap();
        let b = parse_polynomial("-x1^2 + 16*x1 - x2^2 + 8*x2 - 76", 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_out_of_range_variable() {
        assert!(parse_polynomial("x3 + 1", 2).is_err());
        assert!(parse_polynomial("x0", 2).is_err());
        assert!(parse_polynomial("x1 ^ 1.5", 2).is_err());
        assert!(parse_polynomial("2 *", 2).is_err());
    }

    #[test]
    fn scientific_notation_and_leading_sign() {
        let p = parse_polynomial("-1.5e-3*x1*x2 + x2", 2).unwrap();
        assert_eq!(p.coeff(&Monomial::new(vec![1, 1])), -1.5e-3);
        assert_eq!(parse_polynomial_auto("x4").unwrap().num_vars(), 4);
    }
}
