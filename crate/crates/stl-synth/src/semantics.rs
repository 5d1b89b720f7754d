//! Reference monitor: Boolean satisfaction and quantitative robustness of
//! formulas over finite runs and lasso runs.
//!
//! This module is deliberately independent of the MILP encoder — it
//! evaluates the inductive semantics directly over trajectory positions —
//! so it can serve as the correctness oracle for every encoding, and as the
//! self-check applied to every synthesized trajectory.
//!
//! Positions versus indices: formulas are evaluated at *positions* of the
//! (possibly infinite) unrolled trajectory. On a lasso, positions past the
//! stored horizon wrap into the loop; because the suffix from a position
//! equals the suffix from its wrapped index, every evaluation normalizes
//! its position first, which keeps recursion over unbounded operators
//! finite. Windows with no sample point are vacuous: `G` over an empty
//! window holds, `F` and `U` do not.
//!
//! A predicate value of exactly zero counts as *not* satisfied (robustness
//! zero decides neither way in the quantitative semantics; the monitor
//! resolves the boundary as non-satisfaction).

use thiserror::Error;

use crate::formula::{Formula, FormulaError, Interval, Predicate};
use crate::trace::{Run, TraceError};

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("finite run too short: need t_k + bound(phi) = {need} s but the run ends at {have} s")]
    HorizonTooShort { need: f64, have: f64 },
    #[error("unbounded operator over a finite run; provide a lasso run")]
    UnboundedOnFiniteRun,
    #[error("evaluation position {0} outside the run")]
    PositionOutOfRange(usize),
    #[error("predicate references dimension beyond the run: {0}")]
    Dimension(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Signed satisfaction margin. Positive robustness implies Boolean
/// satisfaction at the same position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robustness(pub f64);

struct Eval<'a> {
    run: &'a Run,
    dt: f64,
}

impl<'a> Eval<'a> {
    fn horizon(&self) -> usize {
        self.run.horizon()
    }

    fn period(&self) -> Option<usize> {
        self.run.loop_index().map(|l| self.horizon() - l + 1)
    }

    fn normalize(&self, pos: usize) -> Result<usize, SemanticsError> {
        self.run.wrap(pos).ok_or(SemanticsError::PositionOutOfRange(pos))
    }

    fn mu(&self, pred: &Predicate, pos: usize) -> Result<f64, SemanticsError> {
        let idx = self.normalize(pos)?;
        let x = self.run.state(idx);
        let (dx, du, dw) = pred.dims();
        if dx > self.run.state_dim() || du > self.run.input_dim() || dw > self.run.disturbance_dim()
        {
            return Err(SemanticsError::Dimension(format!(
                "predicate needs (x{dx}, u{du}, w{dw}), run has (x{}, u{}, w{})",
                self.run.state_dim(),
                self.run.input_dim(),
                self.run.disturbance_dim()
            )));
        }
        let u = self.run.input_or_zero(idx);
        let w = self.run.disturbance_or_zero(idx);
        Ok(pred.eval(x, &u, &w))
    }

    /// Positions covered by a bounded window `[pos+lo, pos+hi]` in index
    /// units; `None` when the discretized window is empty.
    fn bounded_window(&self, pos: usize, iv: &Interval) -> Result<Option<(usize, usize)>, SemanticsError> {
        match iv.steps(self.dt)? {
            None => Ok(None),
            Some(s) => {
                let hi = s.hi.expect("bounded interval");
                Ok(Some((pos + s.lo, pos + hi)))
            }
        }
    }

    /// Last position worth inspecting for an unbounded window starting at
    /// `start`: one full loop beyond the stored horizon covers every
    /// reachable index.
    fn unbounded_end(&self, start: usize) -> Result<usize, SemanticsError> {
        let period = self.period().ok_or(SemanticsError::UnboundedOnFiniteRun)?;
        Ok(self.horizon().max(start) + period)
    }

    fn sat(&self, phi: &Formula, pos: usize) -> Result<bool, SemanticsError> {
        let pos = self.normalize(pos)?;
        match phi {
            Formula::Pred(p) => Ok(self.mu(p, pos)? > 0.0),
            Formula::Not(f) => Ok(!self.sat(f, pos)?),
            Formula::And(fs) => {
                for f in fs {
                    if !self.sat(f, pos)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Or(fs) => {
                for f in fs {
                    if self.sat(f, pos)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Globally(iv, f) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(true), // vacuous
                    Some(se) => se,
                };
                for p in start..=end {
                    if !self.sat(f, p)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Eventually(iv, f) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(false), // vacuous
                    Some(se) => se,
                };
                for p in start..=end {
                    if self.sat(f, p)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Until(iv, lhs, rhs) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(false),
                    Some(se) => se,
                };
                // phi1 must hold from pos through the witness, inclusive.
                let mut chain_ok = true;
                let mut q = pos;
                for p in start..=end {
                    while q <= p {
                        if !self.sat(lhs, q)? {
                            chain_ok = false;
                            break;
                        }
                        q += 1;
                    }
                    if !chain_ok {
                        return Ok(false);
                    }
                    if self.sat(rhs, p)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Window positions for F/U: bounded windows discretize directly,
    /// unbounded ones run one full loop past the horizon.
    fn window_for(&self, pos: usize, iv: &Interval) -> Result<Option<(usize, usize)>, SemanticsError> {
        if iv.is_unbounded() {
            let start = pos + iv.steps(self.dt)?.expect("unbounded window never empty").lo;
            Ok(Some((start, self.unbounded_end(start)?)))
        } else {
            self.bounded_window(pos, iv)
        }
    }

    fn rob(&self, phi: &Formula, pos: usize) -> Result<f64, SemanticsError> {
        let pos = self.normalize(pos)?;
        match phi {
            Formula::Pred(p) => self.mu(p, pos),
            Formula::Not(f) => Ok(-self.rob(f, pos)?),
            Formula::And(fs) => {
                let mut v = f64::INFINITY;
                for f in fs {
                    v = v.min(self.rob(f, pos)?);
                }
                Ok(v)
            }
            Formula::Or(fs) => {
                let mut v = f64::NEG_INFINITY;
                for f in fs {
                    v = v.max(self.rob(f, pos)?);
                }
                Ok(v)
            }
            Formula::Globally(iv, f) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(f64::INFINITY), // vacuous conjunction
                    Some(se) => se,
                };
                let mut v = f64::INFINITY;
                for p in start..=end {
                    v = v.min(self.rob(f, p)?);
                }
                Ok(v)
            }
            Formula::Eventually(iv, f) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(f64::NEG_INFINITY),
                    Some(se) => se,
                };
                let mut v = f64::NEG_INFINITY;
                for p in start..=end {
                    v = v.max(self.rob(f, p)?);
                }
                Ok(v)
            }
            Formula::Until(iv, lhs, rhs) => {
                let (start, end) = match self.window_for(pos, iv)? {
                    None => return Ok(f64::NEG_INFINITY),
                    Some(se) => se,
                };
                let mut best = f64::NEG_INFINITY;
                let mut chain = f64::INFINITY;
                let mut q = pos;
                for p in start..=end {
                    while q <= p {
                        chain = chain.min(self.rob(lhs, q)?);
                        q += 1;
                    }
                    best = best.max(self.rob(rhs, p)?.min(chain));
                }
                Ok(best)
            }
        }
    }
}

/// Deepest sample index a formula can consult, relative to its evaluation
/// index: the max over AST paths of the sums of discretized upper interval
/// bounds. This is the horizon bound measured on the sample grid; for
/// example `G[0,2.1]` at dt = 1 consults indices up to 2.
pub fn bound_steps(phi: &Formula, dt: f64) -> Result<usize, SemanticsError> {
    let floor_steps = |hi: f64| (hi / dt + 1e-9).floor() as usize;
    let r = match phi {
        Formula::Pred(_) => 0,
        Formula::Not(f) => bound_steps(f, dt)?,
        Formula::And(fs) | Formula::Or(fs) => {
            let mut b = 0;
            for f in fs {
                b = b.max(bound_steps(f, dt)?);
            }
            b
        }
        Formula::Globally(iv, f) | Formula::Eventually(iv, f) => {
            if iv.is_unbounded() {
                return Err(SemanticsError::Formula(FormulaError::Unbounded));
            }
            floor_steps(iv.hi()) + bound_steps(f, dt)?
        }
        Formula::Until(iv, lhs, rhs) => {
            if iv.is_unbounded() {
                return Err(SemanticsError::Formula(FormulaError::Unbounded));
            }
            floor_steps(iv.hi()) + bound_steps(lhs, dt)?.max(bound_steps(rhs, dt)?)
        }
    };
    Ok(r)
}

fn check_preconditions(run: &Run, phi: &Formula, k: usize) -> Result<(), SemanticsError> {
    if k > run.horizon() {
        return Err(SemanticsError::PositionOutOfRange(k));
    }
    if run.loop_index().is_some() {
        return Ok(()); // lasso runs accept any formula, bounded or not
    }
    if phi.has_unbounded() {
        return Err(SemanticsError::UnboundedOnFiniteRun);
    }
    let need_steps = k + bound_steps(phi, run.dt())?;
    if need_steps > run.horizon() {
        return Err(SemanticsError::HorizonTooShort {
            need: need_steps as f64 * run.dt(),
            have: run.horizon() as f64 * run.dt(),
        });
    }
    Ok(())
}

/// Boolean satisfaction of `phi` at sample index `k`.
///
/// Finite runs require `t_k + bound(phi) <= t_N`; lasso runs accept
/// unbounded operators and evaluate them over the loop-reachable indices.
pub fn satisfies(run: &Run, phi: &Formula, k: usize) -> Result<bool, SemanticsError> {
    check_preconditions(run, phi, k)?;
    Eval { run, dt: run.dt() }.sat(phi, k)
}

/// Quantitative robustness of `phi` at sample index `k`. The sign agrees
/// with [`satisfies`] whenever the value is bounded away from zero.
pub fn robustness(run: &Run, phi: &Formula, k: usize) -> Result<Robustness, SemanticsError> {
    check_preconditions(run, phi, k)?;
    Ok(Robustness(Eval { run, dt: run.dt() }.rob(phi, k)?))
}

/// Finite satisfaction: the infinite word induced by the (N,l)-loop run
/// satisfies `phi` at position 0. Requires a lasso run.
pub fn finitely_satisfies(run: &Run, phi: &Formula) -> Result<bool, SemanticsError> {
    if run.loop_index().is_none() {
        return Err(SemanticsError::Trace(TraceError::NotALasso));
    }
    satisfies(run, phi, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    fn run1(values: &[f64], dt: f64) -> Run {
        let states = values.iter().map(|&v| vec![v]).collect();
        let n = values.len() - 1;
        Run::new(states, vec![vec![]; n], vec![vec![]; n], dt).unwrap()
    }

    fn lasso1(values: &[f64], l: usize) -> Run {
        let states = values.iter().map(|&v| vec![v]).collect();
        let n = values.len() - 1;
        Run::new(states, vec![vec![]; n], vec![vec![]; n], 1.0).unwrap().with_loop(l).unwrap()
    }

    #[test]
    fn constant_run_above_threshold_globally_holds() {
        let run = run1(&[4.0, 4.0, 4.0, 4.0], 1.0);
        let phi = parse("G[0,2.1] x1 > 3").unwrap();
        assert!(satisfies(&run, &phi, 0).unwrap());
    }

    #[test]
    fn three_sample_globally_cases() {
        let phi = parse("G[0,2.1] x1 > 3").unwrap();
        assert!(satisfies(&run1(&[5.0, 4.0, 6.0], 1.0), &phi, 0).unwrap());
        assert!(!satisfies(&run1(&[5.0, 2.0, 6.0], 1.0), &phi, 0).unwrap());
    }

    #[test]
    fn globally_robustness_is_min_over_window() {
        // min {5-3, 4-3, 6-3} = 1
        let run = run1(&[5.0, 4.0, 6.0], 1.0);
        let phi = parse("G[0,2.1] x1 > 3").unwrap();
        assert_eq!(robustness(&run, &phi, 0).unwrap().0, 1.0);
    }

    #[test]
    fn lasso_eventually_and_globally_unbounded() {
        // (p false)(p true)^w
        let run = lasso1(&[-1.0, 1.0, 1.0], 2);
        let f_phi = parse("F[0,inf) x1 > 0").unwrap();
        let g_phi = parse("G[0,inf) x1 > 0").unwrap();
        assert!(satisfies(&run, &f_phi, 0).unwrap());
        assert!(!satisfies(&run, &g_phi, 0).unwrap());
    }

    #[test]
    fn lasso_globally_true_when_loop_and_prefix_hold() {
        let run = lasso1(&[1.0, 2.0, 2.0], 2);
        let g_phi = parse("G[0,inf) x1 > 0").unwrap();
        assert!(finitely_satisfies(&run, &g_phi).unwrap());
    }

    #[test]
    fn lasso_globally_false_when_only_prefix_holds() {
        // p true in the prefix, false inside the loop
        let run = lasso1(&[1.0, -1.0, -1.0], 2);
        let g_phi = parse("G[0,inf) x1 > 0").unwrap();
        assert!(!finitely_satisfies(&run, &g_phi).unwrap());
    }

    #[test]
    fn negation_flips_robustness_sign() {
        let run = run1(&[5.0, 4.0, 6.0], 1.0);
        let phi = parse("G[0,2] x1 > 3").unwrap();
        let neg = Formula::not(phi.clone());
        let r = robustness(&run, &phi, 0).unwrap().0;
        let rn = robustness(&run, &neg, 0).unwrap().0;
        assert_eq!(rn, -r);
    }

    #[test]
    fn horizon_too_short_is_an_error() {
        let run = run1(&[1.0, 1.0], 1.0);
        let phi = parse("G[0,5] x1 > 0").unwrap();
        assert!(matches!(
            satisfies(&run, &phi, 0),
            Err(SemanticsError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn unbounded_on_finite_run_is_an_error() {
        let run = run1(&[1.0, 1.0], 1.0);
        let phi = parse("G[0,inf) x1 > 0").unwrap();
        assert!(matches!(
            satisfies(&run, &phi, 0),
            Err(SemanticsError::UnboundedOnFiniteRun)
        ));
    }

    #[test]
    fn zero_margin_counts_as_violation() {
        let run = run1(&[0.0, 0.0], 1.0);
        let phi = parse("x1 > 0").unwrap();
        assert!(!satisfies(&run, &phi, 0).unwrap());
        assert_eq!(robustness(&run, &phi, 0).unwrap().0, 0.0);
    }

    #[test]
    fn empty_window_is_vacuous() {
        let run = run1(&[1.0, 1.0, 1.0], 1.0);
        // [0.3, 0.4] at dt=1 holds no sample.
        let g = parse("G[0.3,0.4] x1 < 0").unwrap(); // would fail if inspected
        let f = parse("F[0.3,0.4] x1 > 0").unwrap(); // would hold if inspected
        assert!(satisfies(&run, &g, 0).unwrap());
        assert!(!satisfies(&run, &f, 0).unwrap());
        assert_eq!(robustness(&run, &g, 0).unwrap().0, f64::INFINITY);
        assert_eq!(robustness(&run, &f, 0).unwrap().0, f64::NEG_INFINITY);
    }

    #[test]
    fn until_requires_lhs_through_witness_inclusive() {
        // lhs: x1 > 0, rhs: x2 > 0. lhs fails exactly at the witness
        // position, which the paper's inclusive chain rejects.
        let states = vec![
            vec![1.0, -1.0],
            vec![1.0, -1.0],
            vec![-1.0, 5.0], // rhs holds here but lhs broke
        ];
        let run = Run::new(states, vec![vec![]; 2], vec![vec![]; 2], 1.0).unwrap();
        let phi = parse("x1 > 0 U[0,2] x2 > 0").unwrap();
        assert!(!satisfies(&run, &phi, 0).unwrap());

        let states_ok = vec![vec![1.0, -1.0], vec![1.0, -1.0], vec![1.0, 5.0]];
        let run_ok = Run::new(states_ok, vec![vec![]; 2], vec![vec![]; 2], 1.0).unwrap();
        assert!(satisfies(&run_ok, &phi, 0).unwrap());
    }

    #[test]
    fn finitely_satisfies_requires_lasso() {
        let run = run1(&[1.0, 1.0], 1.0);
        let phi = parse("x1 > 0").unwrap();
        assert!(finitely_satisfies(&run, &phi).is_err());
    }

    #[test]
    fn shift_property_on_windows() {
        // robustness of G_[a,b] phi at k = robustness of G_[0,b-a] phi at k + a/dt
        let run = run1(&[1.0, 2.0, 3.0, 0.5, 4.0, 5.0], 1.0);
        let shifted = parse("G[2,4] x1 > 0").unwrap();
        let base = parse("G[0,2] x1 > 0").unwrap();
        let a = robustness(&run, &shifted, 0).unwrap().0;
        let b = robustness(&run, &base, 2).unwrap().0;
        assert_eq!(a, b);
    }
}
