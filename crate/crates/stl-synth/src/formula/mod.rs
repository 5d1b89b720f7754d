//! Signal temporal logic formulas: abstract syntax, a concrete text syntax,
//! horizon bounds, and classification of the negation-normal safety fragment
//! that encodes without integer variables.
//!
//! Formulas are immutable once built and safe to share across threads.

mod parse;
mod print;

pub use parse::parse;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("non-linear predicate at line {line}, column {col}: {msg}")]
    NonLinear { line: usize, col: usize, msg: String },
    #[error("formula contains an unbounded interval; no finite horizon bound exists")]
    Unbounded,
    #[error("interval [{lo}, {hi}] is invalid (need 0 <= lo <= hi)")]
    BadInterval { lo: f64, hi: f64 },
    #[error("interval [{lo}, {hi}] contains no sample at dt = {dt}")]
    EmptyWindow { lo: f64, hi: f64, dt: f64 },
    #[error("sampling period must be positive, got {0}")]
    BadDt(f64),
}

/// Real-time interval attached to a temporal operator. `hi` is
/// `f64::INFINITY` for unbounded windows, written `[a,inf)` in text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn bounded(lo: f64, hi: f64) -> Result<Self, FormulaError> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(FormulaError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded_from(lo: f64) -> Result<Self, FormulaError> {
        if !(lo.is_finite() && lo >= 0.0) {
            return Err(FormulaError::BadInterval { lo, hi: f64::INFINITY });
        }
        Ok(Self { lo, hi: f64::INFINITY })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.hi.is_infinite()
    }

    /// Discretizes the interval onto the sample grid `t_k = k * dt`. The
    /// selected indices are exactly those with `t_k` in `[lo, hi]`, with a
    /// snap tolerance of `1e-9 * dt` absorbing float boundary noise.
    pub fn to_steps(&self, dt: f64) -> Result<StepInterval, FormulaError> {
        match self.steps(dt)? {
            Some(s) => Ok(s),
            None => Err(FormulaError::EmptyWindow { lo: self.lo, hi: self.hi, dt }),
        }
    }

    /// Like [`Interval::to_steps`] but reports an empty window as `None`
    /// instead of an error; monitors and encoders treat those vacuously.
    pub fn steps(&self, dt: f64) -> Result<Option<StepInterval>, FormulaError> {
        if !(dt > 0.0) {
            return Err(FormulaError::BadDt(dt));
        }
        let lo_idx = (self.lo / dt - 1e-9).ceil();
        if self.hi.is_infinite() {
            return Ok(Some(StepInterval { lo: lo_idx.max(0.0) as usize, hi: None }));
        }
        let hi_idx = (self.hi / dt + 1e-9).floor();
        if lo_idx > hi_idx {
            return Ok(None);
        }
        Ok(Some(StepInterval { lo: lo_idx.max(0.0) as usize, hi: Some(hi_idx as usize) }))
    }
}

/// Interval in sample-index units. `hi = None` marks an unbounded window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInterval {
    pub lo: usize,
    pub hi: Option<usize>,
}

/// Linear predicate `mu(x, u, w) = coeffs_x . x + coeffs_u . u +
/// coeffs_w . w + offset`, satisfied when `mu > 0`. Coefficient vectors are
/// indexed by dimension and may be shorter than the signal they are applied
/// to (missing entries read as zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub coeffs_x: Vec<f64>,
    pub coeffs_u: Vec<f64>,
    pub coeffs_w: Vec<f64>,
    pub offset: f64,
}

impl Predicate {
    pub fn on_state(dim: usize, coeff: f64, offset: f64) -> Self {
        let mut coeffs_x = vec![0.0; dim + 1];
        coeffs_x[dim] = coeff;
        Self { coeffs_x, coeffs_u: Vec::new(), coeffs_w: Vec::new(), offset }
    }

    /// `mu(x, u, w)`.
    pub fn eval(&self, x: &[f64], u: &[f64], w: &[f64]) -> f64 {
        let dot = |c: &[f64], v: &[f64]| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        dot(&self.coeffs_x, x) + dot(&self.coeffs_u, u) + dot(&self.coeffs_w, w) + self.offset
    }

    /// Negation as a predicate: `-mu`.
    pub fn negated(&self) -> Self {
        Self {
            coeffs_x: self.coeffs_x.iter().map(|c| -c).collect(),
            coeffs_u: self.coeffs_u.iter().map(|c| -c).collect(),
            coeffs_w: self.coeffs_w.iter().map(|c| -c).collect(),
            offset: -self.offset,
        }
    }

    /// Highest referenced dimension per signal, as (x, u, w) counts.
    pub fn dims(&self) -> (usize, usize, usize) {
        let used = |c: &[f64]| c.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
        (used(&self.coeffs_x), used(&self.coeffs_u), used(&self.coeffs_w))
    }
}

/// STL abstract syntax tree. `Globally` and `Eventually` are first-class
/// variants (not sugar for negated duals) so the safe-fragment classifier
/// and the encoder can pattern-match them directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Globally(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        assert!(!fs.is_empty(), "conjunction over an empty list");
        if fs.len() == 1 {
            fs.into_iter().next().unwrap()
        } else {
            Formula::And(fs)
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        assert!(!fs.is_empty(), "disjunction over an empty list");
        if fs.len() == 1 {
            fs.into_iter().next().unwrap()
        } else {
            Formula::Or(fs)
        }
    }

    pub fn globally(iv: Interval, f: Formula) -> Formula {
        Formula::Globally(iv, Box::new(f))
    }

    pub fn eventually(iv: Interval, f: Formula) -> Formula {
        Formula::Eventually(iv, Box::new(f))
    }

    pub fn until(iv: Interval, lhs: Formula, rhs: Formula) -> Formula {
        Formula::Until(iv, Box::new(lhs), Box::new(rhs))
    }

    /// Conservative horizon in seconds: the maximum over AST paths of the
    /// sums of upper interval bounds along the path. A run whose final time
    /// reaches the bound suffices to decide satisfaction at time zero.
    /// Errors if any interval is unbounded.
    pub fn bound(&self) -> Result<f64, FormulaError> {
        match self {
            Formula::Pred(_) => Ok(0.0),
            Formula::Not(f) => f.bound(),
            Formula::And(fs) | Formula::Or(fs) => {
                let mut b: f64 = 0.0;
                for f in fs {
                    b = b.max(f.bound()?);
                }
                Ok(b)
            }
            Formula::Globally(iv, f) | Formula::Eventually(iv, f) => {
                if iv.is_unbounded() {
                    return Err(FormulaError::Unbounded);
                }
                Ok(iv.hi() + f.bound()?)
            }
            Formula::Until(iv, lhs, rhs) => {
                if iv.is_unbounded() {
                    return Err(FormulaError::Unbounded);
                }
                Ok(iv.hi() + lhs.bound()?.max(rhs.bound()?))
            }
        }
    }

    /// True when the formula has an unbounded temporal operator anywhere.
    pub fn has_unbounded(&self) -> bool {
        match self {
            Formula::Pred(_) => false,
            Formula::Not(f) => f.has_unbounded(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(Formula::has_unbounded),
            Formula::Globally(iv, f) | Formula::Eventually(iv, f) => {
                iv.is_unbounded() || f.has_unbounded()
            }
            Formula::Until(iv, lhs, rhs) => {
                iv.is_unbounded() || lhs.has_unbounded() || rhs.has_unbounded()
            }
        }
    }

    /// Membership in the safe negation-normal fragment: negation only on
    /// predicates, conjunction as the only connective, and `G` as the only
    /// temporal operator. Formulas in this fragment encode as a pure LP.
    pub fn is_snn(&self) -> bool {
        match self {
            Formula::Pred(_) => true,
            Formula::Not(f) => matches!(**f, Formula::Pred(_)),
            Formula::And(fs) => fs.iter().all(Formula::is_snn),
            Formula::Globally(_, f) => f.is_snn(),
            Formula::Or(_) | Formula::Eventually(..) | Formula::Until(..) => false,
        }
    }

    /// All distinct predicates, in first-occurrence order. Occurrences that
    /// compare equal share one slot, matching how the encoder shares
    /// satisfaction variables.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out: Vec<&Predicate> = Vec::new();
        self.walk(&mut |f| {
            if let Formula::Pred(p) = f {
                if !out.iter().any(|q| *q == p) {
                    out.push(p);
                }
            }
        });
        out
    }

    /// Required dimensions (x, u, w) over all predicates.
    pub fn dims(&self) -> (usize, usize, usize) {
        let mut d = (0, 0, 0);
        self.walk(&mut |f| {
            if let Formula::Pred(p) = f {
                let (a, b, c) = p.dims();
                d.0 = d.0.max(a);
                d.1 = d.1.max(b);
                d.2 = d.2.max(c);
            }
        });
        d
    }

    fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Formula)) {
        visit(self);
        match self {
            Formula::Pred(_) => {}
            Formula::Not(f) | Formula::Globally(_, f) | Formula::Eventually(_, f) => {
                f.walk(visit)
            }
            Formula::And(fs) | Formula::Or(fs) => {
                for f in fs {
                    f.walk(visit);
                }
            }
            Formula::Until(_, lhs, rhs) => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
        }
    }
}
