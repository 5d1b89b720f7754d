//! Compilation of system dynamics, lasso loop structure, and STL formulas
//! into mixed-integer linear constraints.
//!
//! Two formula encodings are provided. The *Boolean* encoding introduces a
//! binary satisfaction variable per predicate per time step and continuous
//! [0,1] variables for the connectives; a trajectory is feasible iff it
//! satisfies the formula with an `eps` margin on every active predicate.
//! The *robust* encoding introduces continuous variables equal to the
//! quantitative robustness of each subformula, built from min/max selector
//! gadgets, so the specification can be enforced to an arbitrary robustness
//! target or maximized outright. Formulas in the safe negation-normal
//! fragment can instead be lowered to a pure LP with zero binaries
//! ([`encode_snn_lp`]).
//!
//! Unbounded operators require *lasso* mode: binaries `l_1..l_N` choose a
//! loop-back index, and temporal windows that run past the horizon wrap
//! into the loop, sharing satisfaction variables with the wrapped index.

mod formula_enc;

pub use formula_enc::{count_variables, encode_snn_lp, FormulaEncoder};

use thiserror::Error;

use crate::formula::FormulaError;
use crate::milp::{LinExpr, MilpError, MilpModel, Sense, Solution, VarId, VarKind};
use crate::trace::{AffineSystem, Run, TraceError};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("initial state component {i} = {value} outside bounds [{lo}, {hi}]")]
    X0OutOfBounds { i: usize, value: f64, lo: f64, hi: f64 },
    #[error("disturbance sequence has {got} entries, horizon needs {need}")]
    DisturbanceLength { got: usize, need: usize },
    #[error("unbounded operator requires lasso mode")]
    UnboundedNeedsLasso,
    #[error("horizon too short: formula consults index {need} but N = {have}")]
    HorizonTooShort { need: usize, have: usize },
    #[error("formula references dimension beyond the system: {0}")]
    Dimension(String),
    #[error("formula is not in the safe negation-normal fragment")]
    NotSnn,
    #[error("loop encoding requires lasso mode")]
    NotLassoMode,
    #[error("decoded solution has no assignment (status {0:?})")]
    NoAssignment(crate::milp::SolveStatus),
    #[error("decoded solution selects no loop index")]
    NoLoopSelected,
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Finite,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticsKind {
    Boolean,
    Robust,
}

/// Knobs shared by every encoding step.
#[derive(Debug, Clone)]
pub struct EncodingParams {
    /// Horizon index N: states run 0..=N.
    pub n_steps: usize,
    pub mode: Mode,
    pub semantics: SemanticsKind,
    /// Margin bounding active predicates away from zero (Boolean encoding).
    pub eps: f64,
    /// Multiplier applied to every derived big-M constant.
    pub big_m_pad: f64,
    /// Robust encoding root constraint `r >= target`; `None` leaves the
    /// root unconstrained (used when maximizing robustness or reading the
    /// robustness of a pinned trajectory).
    pub robust_target: Option<f64>,
}

impl EncodingParams {
    pub fn new(n_steps: usize, mode: Mode, semantics: SemanticsKind) -> Self {
        Self {
            n_steps,
            mode,
            semantics,
            eps: 1e-4,
            big_m_pad: 1.1,
            robust_target: Some(1e-4),
        }
    }
}

/// Decision-variable grids for one synthesis instance, plus the constants
/// needed to derive big-M values.
#[derive(Debug, Clone)]
pub struct Grids {
    /// States x[k][i], k = 0..=N.
    pub x: Vec<Vec<VarId>>,
    /// Inputs u[k][j], k = 0..N-1.
    pub u: Vec<Vec<VarId>>,
    /// Known disturbances w[k], k = 0..N-1 (possibly zero-dimensional).
    pub w: Vec<Vec<f64>>,
    pub x_bounds: Vec<(f64, f64)>,
    pub u_bounds: Vec<(f64, f64)>,
    pub dt: f64,
}

impl Grids {
    pub fn n_steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.x_bounds.len()
    }

    pub fn input_dim(&self) -> usize {
        self.u_bounds.len()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }
}

/// Encodes valid horizon-N trajectories of an affine system: box-bounded
/// state and input grids, the dynamics as equality rows, and `x[0]` pinned
/// to the initial state.
pub fn encode_system(
    model: &mut MilpModel,
    sys: &AffineSystem,
    x0: &[f64],
    w: &[Vec<f64>],
    n_steps: usize,
) -> Result<Grids, EncodeError> {
    sys.validate()?;
    let n = sys.state_dim();
    let m = sys.input_dim();
    if x0.len() != n {
        return Err(EncodeError::Dimension(format!("x0 has {} entries, need {n}", x0.len())));
    }
    for (i, &v) in x0.iter().enumerate() {
        let (lo, hi) = sys.x_bounds[i];
        if v < lo - 1e-12 || v > hi + 1e-12 {
            return Err(EncodeError::X0OutOfBounds { i, value: v, lo, hi });
        }
    }
    if w.len() != n_steps {
        return Err(EncodeError::DisturbanceLength { got: w.len(), need: n_steps });
    }
    for wk in w {
        if wk.len() != sys.disturbance_dim() {
            return Err(EncodeError::Dimension("disturbance dimension mismatch".into()));
        }
    }

    let mut x = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = sys.x_bounds[i];
            row.push(model.add_variable(VarKind::Continuous, lo, hi, format!("x_{k}_{i}"))?);
        }
        x.push(row);
    }
    let mut u = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let (lo, hi) = sys.u_bounds[j];
            let kind = if sys.u_integral.get(j).copied().unwrap_or(false) {
                VarKind::Binary
            } else {
                VarKind::Continuous
            };
            row.push(model.add_variable(kind, lo, hi, format!("u_{k}_{j}"))?);
        }
        u.push(row);
    }

    // x[0] = x0
    for i in 0..n {
        model.add_constraint(LinExpr::term(x[0][i], 1.0), Sense::Eq, x0[i])?;
    }
    // x[k+1] = A x[k] + B u[k] + E w[k] + c
    for k in 0..n_steps {
        for i in 0..n {
            let mut expr = LinExpr::term(x[k + 1][i], 1.0);
            for j in 0..n {
                expr.add(x[k][j], -sys.a.get(i, j));
            }
            for j in 0..m {
                expr.add(u[k][j], -sys.b.get(i, j));
            }
            let mut rhs = sys.c[i];
            for j in 0..sys.disturbance_dim() {
                rhs += sys.e.get(i, j) * w[k][j];
            }
            model.add_constraint(expr, Sense::Eq, rhs)?;
        }
    }

    Ok(Grids {
        x,
        u,
        w: w.to_vec(),
        x_bounds: sys.x_bounds.clone(),
        u_bounds: sys.u_bounds.clone(),
        dt: sys.dt,
    })
}

/// The "no dynamics" plant: every state component is a free decision within
/// its box and each input simply mirrors the state (`x_k = u_k`), so
/// predicates on the state directly constrain the signal being synthesized.
pub fn encode_trivial_system(
    model: &mut MilpModel,
    dims: usize,
    bound: f64,
    dt: f64,
    n_steps: usize,
) -> Result<Grids, EncodeError> {
    let mut x = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let mut row = Vec::with_capacity(dims);
        for i in 0..dims {
            row.push(model.add_variable(VarKind::Continuous, -bound, bound, format!("x_{k}_{i}"))?);
        }
        x.push(row);
    }
    let mut u = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let mut row = Vec::with_capacity(dims);
        for i in 0..dims {
            let uv = model.add_variable(VarKind::Continuous, -bound, bound, format!("u_{k}_{i}"))?;
            let expr = LinExpr::term(x[k][i], 1.0).plus(uv, -1.0);
            model.add_constraint(expr, Sense::Eq, 0.0)?;
            row.push(uv);
        }
        u.push(row);
    }
    Ok(Grids {
        x,
        u,
        w: vec![vec![]; n_steps],
        x_bounds: vec![(-bound, bound); dims],
        u_bounds: vec![(-bound, bound); dims],
        dt,
    })
}

/// Lasso loop constraints: binaries `l_1..l_N`, exactly one high, and big-M
/// rows forcing `x_{j-1} = x_N` for the selected `j`.
pub fn encode_loop(
    model: &mut MilpModel,
    grids: &Grids,
    big_m_pad: f64,
) -> Result<Vec<VarId>, EncodeError> {
    let n_steps = grids.n_steps();
    let mut loops = Vec::with_capacity(n_steps);
    for j in 1..=n_steps {
        loops.push(model.add_binary(format!("l_{j}"))?);
    }
    let sum: LinExpr = loops.iter().map(|&l| (l, 1.0)).collect();
    model.add_constraint(sum, Sense::Eq, 1.0)?;
    for (j, &lj) in (1..=n_steps).zip(&loops) {
        for i in 0..grids.state_dim() {
            let (lo, hi) = grids.x_bounds[i];
            let m = (hi - lo) * big_m_pad;
            // x_N - x_{j-1} <= M (1 - l_j)
            let up = LinExpr::term(grids.x[n_steps][i], 1.0)
                .plus(grids.x[j - 1][i], -1.0)
                .plus(lj, m);
            model.add_constraint(up, Sense::Le, m)?;
            // x_{j-1} - x_N <= M (1 - l_j)
            let dn = LinExpr::term(grids.x[j - 1][i], 1.0)
                .plus(grids.x[n_steps][i], -1.0)
                .plus(lj, m);
            model.add_constraint(dn, Sense::Le, m)?;
        }
    }
    Ok(loops)
}

/// Pins the state and input grids to a known run (used by the equivalence
/// test suites and by receding-horizon prefix commitments).
pub fn pin_run(model: &mut MilpModel, grids: &Grids, run: &Run) -> Result<(), EncodeError> {
    for (k, row) in grids.x.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            model.set_bounds(v, run.state(k)[i], run.state(k)[i])?;
        }
    }
    for (k, row) in grids.u.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            model.set_bounds(v, run.inputs()[k][i], run.inputs()[k][i])?;
        }
    }
    Ok(())
}

/// Reads a solved model back into a run. In lasso mode the selected loop
/// binary tags the run; the loop closure is validated by `Run::with_loop`.
pub fn decode_run(
    solution: &Solution,
    grids: &Grids,
    loop_vars: Option<&[VarId]>,
) -> Result<Run, EncodeError> {
    if !solution.has_assignment() {
        return Err(EncodeError::NoAssignment(solution.status));
    }
    let states: Vec<Vec<f64>> = grids
        .x
        .iter()
        .map(|row| row.iter().map(|&v| solution.value(v)).collect())
        .collect();
    let inputs: Vec<Vec<f64>> = grids
        .u
        .iter()
        .map(|row| row.iter().map(|&v| solution.value(v)).collect())
        .collect();
    let run = Run::new(states, inputs, grids.w.clone(), grids.dt)?;
    match loop_vars {
        None => Ok(run),
        Some(ls) => {
            let j = ls
                .iter()
                .position(|&l| solution.value(l) > 0.5)
                .ok_or(EncodeError::NoLoopSelected)?;
            Ok(run.with_loop(j + 1)?)
        }
    }
}
