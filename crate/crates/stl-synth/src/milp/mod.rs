//! A small mixed-integer linear programming toolkit: a model container, an
//! exact desk-scale branch-and-bound solver over a bounded-variable simplex
//! core, and LP-file export for handing models to external solvers.
//!
//! The solver is deterministic: a fixed branching rule (most-fractional
//! binary, ties by lowest variable id) and a fixed node order (best bound,
//! ties by lowest node id) mean a given model always produces the same
//! solution path.

mod branch_bound;
pub mod lp_format;
mod simplex;

pub use branch_bound::{solve, NodeOrder, SolveConfig, SolveStats};

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Feasibility tolerance: constraints may be violated by at most this much.
pub const FEAS_TOL: f64 = 1e-7;
/// Integrality tolerance: a binary is integral if within this of 0 or 1.
pub const INT_TOL: f64 = 1e-6;
/// Objective convergence tolerance used when pruning branch-and-bound nodes.
pub const OBJ_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("variable name {0:?} already declared")]
    DuplicateName(String),
    #[error("variable name {0:?} is not a valid identifier (want [A-Za-z_][A-Za-z0-9_]*)")]
    BadName(String),
    #[error("lower bound {lo} exceeds upper bound {hi} for {name:?}")]
    BadBounds { name: String, lo: f64, hi: f64 },
    #[error("binary variable {name:?} must have bounds within [0,1], got [{lo}, {hi}]")]
    BadBinaryBounds { name: String, lo: f64, hi: f64 },
    #[error("constraint references undeclared variable id {0}")]
    UnknownVariable(usize),
    #[error("bound {0} must not be NaN")]
    NanBound(f64),
    #[error("LP parse error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },
}

/// Identifier of a model variable. Ids are dense and allocation order is
/// stable, so they double as indices into solution vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub id: VarId,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

/// Sparse linear expression: a sum of `coeff * var` terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(var: VarId, coeff: f64) -> Self {
        let mut e = Self::new();
        e.add(var, coeff);
        e
    }

    /// Adds `coeff * var`, merging with an existing term for the same var.
    pub fn add(&mut self, var: VarId, coeff: f64) -> &mut Self {
        if coeff == 0.0 {
            return self;
        }
        if let Some(t) = self.terms.iter_mut().find(|(v, _)| *v == var) {
            t.1 += coeff;
        } else {
            self.terms.push((var, coeff));
        }
        self
    }

    pub fn plus(mut self, var: VarId, coeff: f64) -> Self {
        self.add(var, coeff);
        self
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the expression under an assignment indexed by variable id.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }
}

impl FromIterator<(VarId, f64)> for LinExpr {
    fn from_iter<I: IntoIterator<Item = (VarId, f64)>>(iter: I) -> Self {
        let mut e = Self::new();
        for (v, c) in iter {
            e.add(v, c);
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Ge => write!(f, ">="),
            Sense::Eq => write!(f, "="),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Identifier of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintId(pub usize);

/// Container for a mixed-binary linear program. Constraints are stored
/// verbatim; no presolve or rewriting happens at add time.
#[derive(Debug, Clone)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    names: HashSet<String>,
    pub objective: LinExpr,
    pub direction: Direction,
}

impl Default for MilpModel {
    fn default() -> Self {
        Self::new()
    }
}

impl MilpModel {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            names: HashSet::new(),
            objective: LinExpr::new(),
            direction: Direction::Minimize,
        }
    }

    fn valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    /// Declares a variable. Ids are handed out in increasing order starting
    /// at 0. Names must be unique LP-safe identifiers.
    pub fn add_variable(
        &mut self,
        kind: VarKind,
        lower: f64,
        upper: f64,
        name: impl Into<String>,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        if !Self::valid_name(&name) {
            return Err(MilpError::BadName(name));
        }
        if self.names.contains(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        if lower.is_nan() {
            return Err(MilpError::NanBound(lower));
        }
        if upper.is_nan() {
            return Err(MilpError::NanBound(upper));
        }
        if lower > upper {
            return Err(MilpError::BadBounds { name, lo: lower, hi: upper });
        }
        if kind == VarKind::Binary && !(0.0..=1.0).contains(&lower) || kind == VarKind::Binary && !(0.0..=1.0).contains(&upper) {
            return Err(MilpError::BadBinaryBounds { name, lo: lower, hi: upper });
        }
        let id = VarId(self.vars.len());
        self.names.insert(name.clone());
        self.vars.push(Variable { id, kind, lower, upper, name });
        Ok(id)
    }

    /// Convenience: binary variable in [0,1].
    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_variable(VarKind::Binary, 0.0, 1.0, name)
    }

    /// Stores `expr sense rhs` verbatim.
    pub fn add_constraint(
        &mut self,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, MilpError> {
        for (v, _) in expr.terms() {
            if v.0 >= self.vars.len() {
                return Err(MilpError::UnknownVariable(v.0));
            }
        }
        let id = ConstraintId(self.constraints.len());
        self.constraints.push(Constraint { expr, sense, rhs });
        Ok(id)
    }

    pub fn set_objective(&mut self, expr: LinExpr, direction: Direction) {
        self.objective = expr;
        self.direction = direction;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Continuous).count()
    }

    /// Tightens the bounds of an existing variable (used by branch-and-bound
    /// and by callers pinning decision variables to known values).
    pub fn set_bounds(&mut self, id: VarId, lower: f64, upper: f64) -> Result<(), MilpError> {
        if lower > upper {
            return Err(MilpError::BadBounds { name: self.vars[id.0].name.clone(), lo: lower, hi: upper });
        }
        self.vars[id.0].lower = lower;
        self.vars[id.0].upper = upper;
        Ok(())
    }

    /// Solves the model with the built-in branch-and-bound solver.
    pub fn solve(&self, config: &SolveConfig) -> Solution {
        branch_bound::solve(self, config)
    }

    /// Renders the model in LP file format.
    pub fn export_lp(&self) -> String {
        lp_format::export_lp(self)
    }

    /// Maximum violation of any constraint under `values`, plus the worst
    /// distance of any binary from {0,1}. Used to re-check solutions.
    pub fn violation(&self, values: &[f64]) -> (f64, f64) {
        let mut worst_row: f64 = 0.0;
        for c in &self.constraints {
            let lhs = c.expr.eval(values);
            let v = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst_row = worst_row.max(v);
        }
        for var in &self.vars {
            let x = values[var.id.0];
            worst_row = worst_row.max(var.lower - x).max(x - var.upper);
        }
        let mut worst_int: f64 = 0.0;
        for var in &self.vars {
            if var.kind == VarKind::Binary {
                let x = values[var.id.0];
                worst_int = worst_int.max((x - x.round()).abs());
            }
        }
        (worst_row, worst_int)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The node budget ran out. If an incumbent was found before the limit,
    /// it is reported in the solution (feasible but not proven optimal).
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Assignment indexed by variable id; empty when no feasible point found.
    pub values: Vec<f64>,
    pub objective: f64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn value(&self, id: VarId) -> f64 {
        self.values[id.0]
    }

    pub fn has_assignment(&self) -> bool {
        !self.values.is_empty()
    }
}
