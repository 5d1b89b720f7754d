//! Recursive-descent parser for the textual formula language.
//!
//! Precedence, loosest to tightest: temporal operators (prefix `G`/`F`,
//! right-associative infix `U`), then `|`, then `&`, then `!`. Atoms are
//! strict linear inequalities over `x<i>`, `u<i>`, `w<i>` (1-based), e.g.
//! `2*x1 - u2 > 0.5`. `<` desugars by negating the inequality. Unbounded
//! windows are written `[a,inf)`.

use super::{Formula, FormulaError, Interval, Predicate};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(char, usize), // signal kind, 0-based dimension
    G,
    F,
    U,
    Inf,
    Not,
    AndOp,
    OrOp,
    Gt,
    Lt,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn error(&self, msg: impl Into<String>) -> FormulaError {
        FormulaError::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn lex(mut self) -> Result<Vec<Lexed>, FormulaError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push(Lexed { tok: Tok::Eof, line, col });
                return Ok(out);
            };
            let tok = match c {
                b'!' => {
                    self.bump();
                    Tok::Not
                }
                b'&' => {
                    self.bump();
                    Tok::AndOp
                }
                b'|' => {
                    self.bump();
                    Tok::OrOp
                }
                b'>' => {
                    self.bump();
                    Tok::Gt
                }
                b'<' => {
                    self.bump();
                    Tok::Lt
                }
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'0'..=b'9' | b'.' => {
                    let start = self.pos;
                    while matches!(self.peek(), Some(b'0'..=b'9' | b'.')) {
                        self.bump();
                    }
                    if matches!(self.peek(), Some(b'e' | b'E')) {
                        let save = (self.pos, self.line, self.col);
                        self.bump();
                        if matches!(self.peek(), Some(b'+' | b'-')) {
                            self.bump();
                        }
                        if matches!(self.peek(), Some(b'0'..=b'9')) {
                            while matches!(self.peek(), Some(b'0'..=b'9')) {
                                self.bump();
                            }
                        } else {
                            (self.pos, self.line, self.col) = save;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let v: f64 = text
                        .parse()
                        .map_err(|_| self.error(format!("bad number {text:?}")))?;
                    Tok::Num(v)
                }
                b'G' => {
                    self.bump();
                    Tok::G
                }
                b'F' => {
                    self.bump();
                    Tok::F
                }
                b'U' => {
                    self.bump();
                    Tok::U
                }
                b'x' | b'u' | b'w' => {
                    let kind = c as char;
                    self.bump();
                    let start = self.pos;
                    while matches!(self.peek(), Some(b'0'..=b'9')) {
                        self.bump();
                    }
                    if start == self.pos {
                        return Err(self.error(format!(
                            "expected a 1-based dimension after {kind:?}, e.g. {kind}1"
                        )));
                    }
                    let idx: usize = std::str::from_utf8(&self.src[start..self.pos])
                        .unwrap()
                        .parse()
                        .map_err(|_| self.error("bad dimension index"))?;
                    if idx == 0 {
                        return Err(self.error("dimension indices are 1-based"));
                    }
                    Tok::Var(kind, idx - 1)
                }
                b'i' => {
                    if self.src[self.pos..].starts_with(b"inf") {
                        self.pos += 3;
                        self.col += 3;
                        Tok::Inf
                    } else {
                        return Err(self.error("unexpected identifier"));
                    }
                }
                other => return Err(self.error(format!("unexpected character {:?}", other as char))),
            };
            out.push(Lexed { tok, line, col });
        }
    }
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn at(&self) -> (usize, usize) {
        (self.toks[self.pos].line, self.toks[self.pos].col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> FormulaError {
        let (line, col) = self.at();
        FormulaError::Syntax { line, col, msg: msg.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn number(&mut self) -> Result<f64, FormulaError> {
        let mut sign = 1.0;
        while *self.peek() == Tok::Minus {
            self.bump();
            sign = -sign;
        }
        match self.bump() {
            Tok::Num(v) => Ok(sign * v),
            _ => Err(self.error("expected a number")),
        }
    }

    fn interval(&mut self) -> Result<Interval, FormulaError> {
        self.expect(Tok::LBracket, "'[' opening a time interval")?;
        let lo = self.number()?;
        self.expect(Tok::Comma, "',' between interval endpoints")?;
        if *self.peek() == Tok::Inf {
            self.bump();
            self.expect(Tok::RParen, "')' closing an unbounded interval")?;
            return Interval::unbounded_from(lo);
        }
        let hi = self.number()?;
        self.expect(Tok::RBracket, "']' closing the interval")?;
        Interval::bounded(lo, hi)
    }

    /// formula := G iv formula | F iv formula | disj (U iv formula)?
    fn formula(&mut self) -> Result<Formula, FormulaError> {
        match self.peek() {
            Tok::G => {
                self.bump();
                let iv = self.interval()?;
                Ok(Formula::globally(iv, self.formula()?))
            }
            Tok::F => {
                self.bump();
                let iv = self.interval()?;
                Ok(Formula::eventually(iv, self.formula()?))
            }
            _ => {
                let lhs = self.disj()?;
                if *self.peek() == Tok::U {
                    self.bump();
                    let iv = self.interval()?;
                    let rhs = self.formula()?;
                    Ok(Formula::until(iv, lhs, rhs))
                } else {
                    Ok(lhs)
                }
            }
        }
    }

    fn disj(&mut self) -> Result<Formula, FormulaError> {
        let mut parts = vec![self.conj()?];
        while *self.peek() == Tok::OrOp {
            self.bump();
            parts.push(self.conj()?);
        }
        Ok(Formula::or(parts))
    }

    fn conj(&mut self) -> Result<Formula, FormulaError> {
        let mut parts = vec![self.unary()?];
        while *self.peek() == Tok::AndOp {
            self.bump();
            parts.push(self.unary()?);
        }
        Ok(Formula::and(parts))
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        if *self.peek() == Tok::Not {
            self.bump();
            Ok(Formula::not(self.unary()?))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Formula, FormulaError> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen, "')'")?;
            Ok(f)
        } else {
            self.predicate()
        }
    }

    /// predicate := linear ('>' | '<') signed-number
    fn predicate(&mut self) -> Result<Formula, FormulaError> {
        let mut coeffs_x: Vec<f64> = Vec::new();
        let mut coeffs_u: Vec<f64> = Vec::new();
        let mut coeffs_w: Vec<f64> = Vec::new();
        let mut offset = 0.0;
        loop {
            let mut sign = 1.0;
            loop {
                match self.peek() {
                    Tok::Minus => {
                        self.bump();
                        sign = -sign;
                    }
                    Tok::Plus => {
                        self.bump();
                    }
                    _ => break,
                }
            }
            let (line, col) = self.at();
            match self.bump() {
                Tok::Num(c) => {
                    if *self.peek() == Tok::Star {
                        self.bump();
                        let (vline, vcol) = self.at();
                        match self.bump() {
                            Tok::Var(kind, dim) => {
                                add_coeff(&mut coeffs_x, &mut coeffs_u, &mut coeffs_w, kind, dim, sign * c);
                            }
                            _ => {
                                return Err(FormulaError::Syntax {
                                    line: vline,
                                    col: vcol,
                                    msg: "expected a variable after '*'".into(),
                                })
                            }
                        }
                    } else {
                        offset += sign * c;
                    }
                }
                Tok::Var(kind, dim) => {
                    if *self.peek() == Tok::Star {
                        return Err(FormulaError::NonLinear {
                            line,
                            col,
                            msg: "products with a variable on the left are not linear; write coefficient*variable".into(),
                        });
                    }
                    add_coeff(&mut coeffs_x, &mut coeffs_u, &mut coeffs_w, kind, dim, sign);
                }
                _ => {
                    return Err(FormulaError::Syntax {
                        line,
                        col,
                        msg: "expected a linear term (number, coeff*var, or var)".into(),
                    })
                }
            }
            match self.peek() {
                Tok::Plus | Tok::Minus => continue,
                _ => break,
            }
        }
        let strict_gt = match self.bump() {
            Tok::Gt => true,
            Tok::Lt => false,
            _ => return Err(self.error("expected '>' or '<' in predicate")),
        };
        let rhs = self.number()?;
        offset -= rhs;
        let mut pred = Predicate { coeffs_x, coeffs_u, coeffs_w, offset };
        if !strict_gt {
            // `expr < c` becomes `c - expr > 0`.
            pred = pred.negated();
        }
        trim_zeros(&mut pred.coeffs_x);
        trim_zeros(&mut pred.coeffs_u);
        trim_zeros(&mut pred.coeffs_w);
        Ok(Formula::Pred(pred))
    }
}

fn add_coeff(x: &mut Vec<f64>, u: &mut Vec<f64>, w: &mut Vec<f64>, kind: char, dim: usize, c: f64) {
    let target = match kind {
        'x' => x,
        'u' => u,
        _ => w,
    };
    if target.len() <= dim {
        target.resize(dim + 1, 0.0);
    }
    target[dim] += c;
}

fn trim_zeros(v: &mut Vec<f64>) {
    while v.last() == Some(&0.0) {
        v.pop();
    }
}

/// Parses a formula from text. See the module docs for the grammar.
pub fn parse(text: &str) -> Result<Formula, FormulaError> {
    let toks = Lexer::new(text).lex()?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error("trailing input after formula"));
    }
    Ok(f)
}
