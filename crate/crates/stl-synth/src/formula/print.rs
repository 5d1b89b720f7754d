//! Canonical text rendering. The output reparses to a structurally equal
//! AST: compound children are parenthesized, floats use the shortest exact
//! representation, and predicates print as `c*x1 + ... > rhs` with the
//! offset folded onto the right-hand side.

use std::fmt;

use super::{Formula, Interval, Predicate};

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unbounded() {
            write!(f, "[{},inf)", self.lo())
        } else {
            write!(f, "[{},{}]", self.lo(), self.hi())
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        let mut emit = |f: &mut fmt::Formatter<'_>, kind: char, coeffs: &[f64]| -> fmt::Result {
            for (i, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                if wrote {
                    write!(f, " + ")?;
                }
                write!(f, "{}*{}{}", c, kind, i + 1)?;
                wrote = true;
            }
            Ok(())
        };
        emit(f, 'x', &self.coeffs_x)?;
        emit(f, 'u', &self.coeffs_u)?;
        emit(f, 'w', &self.coeffs_w)?;
        if !wrote {
            write!(f, "0*x1")?;
        }
        write!(f, " > {}", -self.offset)
    }
}

fn child(f: &mut fmt::Formatter<'_>, c: &Formula) -> fmt::Result {
    match c {
        Formula::Pred(p) => write!(f, "{p}"),
        _ => write!(f, "({c})"),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(inner) => {
                write!(f, "!")?;
                child(f, inner)
            }
            Formula::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " & ")?;
                    }
                    child(f, p)?;
                }
                Ok(())
            }
            Formula::Or(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    child(f, p)?;
                }
                Ok(())
            }
            Formula::Globally(iv, inner) => {
                write!(f, "G{iv} ")?;
                child(f, inner)
            }
            Formula::Eventually(iv, inner) => {
                write!(f, "F{iv} ")?;
                child(f, inner)
            }
            Formula::Until(iv, lhs, rhs) => {
                child(f, lhs)?;
                write!(f, " U{iv} ")?;
                child(f, rhs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;

    #[test]
    fn print_then_parse_is_identity_on_samples() {
        for text in [
            "G[0,0.1] (x1 > 0.1)",
            "x1 > 0",
            "(x1 > 0.1) U[0.2,0.5] (x2 > 0)",
            "!(x1 > 0) & (x2 < -0.5 | x3 > 1)",
            "F[0,inf) (x1 + 2*u1 > 3)",
            "G[0,10] F[1,6] (x1 > 0)",
        ] {
            let f = parse(text).unwrap();
            let printed = f.to_string();
            let back = parse(&printed).unwrap_or_else(|e| panic!("reparse {printed:?}: {e}"));
            assert_eq!(back, f, "round-trip failed for {text:?} -> {printed:?}");
        }
    }
}
