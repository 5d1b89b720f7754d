//! Discrete-time runs, lasso runs, and affine system models.
//!
//! A run stores a finite trajectory `x_0..x_N` with inputs and disturbances
//! `u_0..u_{N-1}`, `w_0..w_{N-1}`. A run tagged with a loop index `l`
//! represents the infinite trajectory `(x_0..x_{l-1})(x_l..x_N)^w`, which
//! requires `x_{l-1} = x_N` (within a fixed 1e-6 closure tolerance).
//!
//! Everything here is immutable after construction; `simulate` is a pure
//! function.

mod io;

pub use io::{
    read_run_csv, read_run_file, read_system_file, read_system_json, write_run_csv,
    write_system_json,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the lasso closure condition `x_{l-1} = x_N` (infinity norm).
pub const LOOP_CLOSURE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("loop index {l} out of range 1..={n}")]
    LoopIndexRange { l: usize, n: usize },
    #[error("loop closure violated: |x_{{l-1}} - x_N| = {gap:.3e} exceeds {tol:.1e}")]
    LoopClosure { gap: f64, tol: f64 },
    #[error("run has no loop index")]
    NotALasso,
    #[error("unroll length {k} shorter than stored run length {n}")]
    UnrollTooShort { k: usize, n: usize },
    #[error("bounds must be finite with lo <= hi, got ({lo}, {hi})")]
    BadBounds { lo: f64, hi: f64 },
    #[error("sampling period must be positive, got {0}")]
    BadDt(f64),
    #[error("disturbance window [{start}, {start}+{len}) exceeds stored horizon {have}")]
    WindowOutOfRange { start: usize, len: usize, have: usize },
    #[error("trace file, row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("system file: {0}")]
    SystemFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix, serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, TraceError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(TraceError::Dimension("ragged matrix rows".into()));
        }
        Ok(Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = TraceError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, TraceError> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|r| (0..m.cols).map(|c| m.get(r, c)).collect()).collect()
    }
}

/// Affine discrete-time system `x_{k+1} = A x_k + B u_k + E w_k + c` with
/// mandatory finite box bounds on states and inputs (the encoder derives its
/// big-M constants from them).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineSystem {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "E")]
    pub e: Matrix,
    pub c: Vec<f64>,
    pub x_bounds: Vec<(f64, f64)>,
    pub u_bounds: Vec<(f64, f64)>,
    /// Inputs flagged true are binary decisions; their bounds must be {0,1}.
    #[serde(default)]
    pub u_integral: Vec<bool>,
    pub dt: f64,
}

impl AffineSystem {
    pub fn validate(&self) -> Result<(), TraceError> {
        let n = self.a.rows();
        if self.a.cols() != n {
            return Err(TraceError::Dimension("A must be square".into()));
        }
        if self.b.rows() != n || self.e.rows() != n || self.c.len() != n {
            return Err(TraceError::Dimension("B, E, c row counts must match A".into()));
        }
        if self.x_bounds.len() != n {
            return Err(TraceError::Dimension("x_bounds length must equal state dimension".into()));
        }
        if self.u_bounds.len() != self.b.cols() {
            return Err(TraceError::Dimension("u_bounds length must equal input dimension".into()));
        }
        if !self.u_integral.is_empty() && self.u_integral.len() != self.b.cols() {
            return Err(TraceError::Dimension("u_integral length must equal input dimension".into()));
        }
        for &(lo, hi) in self.x_bounds.iter().chain(&self.u_bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(TraceError::BadBounds { lo, hi });
            }
        }
        if !(self.dt > 0.0) {
            return Err(TraceError::BadDt(self.dt));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.e.cols()
    }

    /// One Euler step of the difference equation.
    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut next = self.a.matvec(x);
        let bu = self.b.matvec(u);
        let ew = if self.e.cols() > 0 { self.e.matvec(w) } else { vec![0.0; next.len()] };
        for i in 0..next.len() {
            next[i] += bu[i] + ew[i] + self.c[i];
        }
        next
    }
}

/// Finite trajectory, optionally tagged as an (N,l)-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
    dt: f64,
    loop_index: Option<usize>,
}

impl Run {
    pub fn new(
        states: Vec<Vec<f64>>,
        inputs: Vec<Vec<f64>>,
        disturbances: Vec<Vec<f64>>,
        dt: f64,
    ) -> Result<Self, TraceError> {
        if states.is_empty() {
            return Err(TraceError::Dimension("a run needs at least one state".into()));
        }
        let n = states.len() - 1;
        if inputs.len() != n {
            return Err(TraceError::Dimension(format!(
                "expected {n} inputs for {} states, got {}",
                n + 1,
                inputs.len()
            )));
        }
        if disturbances.len() != n {
            return Err(TraceError::Dimension(format!(
                "expected {n} disturbances, got {}",
                disturbances.len()
            )));
        }
        let xd = states[0].len();
        if states.iter().any(|s| s.len() != xd) {
            return Err(TraceError::Dimension("inconsistent state dimensions".into()));
        }
        let ud = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|s| s.len() != ud) {
            return Err(TraceError::Dimension("inconsistent input dimensions".into()));
        }
        let wd = disturbances.first().map_or(0, Vec::len);
        if disturbances.iter().any(|s| s.len() != wd) {
            return Err(TraceError::Dimension("inconsistent disturbance dimensions".into()));
        }
        if !(dt > 0.0) {
            return Err(TraceError::BadDt(dt));
        }
        Ok(Self { states, inputs, disturbances, dt, loop_index: None })
    }

    /// Tags the run as an (N,l)-loop; checks `1 <= l <= N` and the closure
    /// condition.
    pub fn with_loop(mut self, l: usize) -> Result<Self, TraceError> {
        let n = self.horizon();
        if l == 0 || l > n {
            return Err(TraceError::LoopIndexRange { l, n });
        }
        let gap = self.states[l - 1]
            .iter()
            .zip(&self.states[n])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if gap > LOOP_CLOSURE_TOL {
            return Err(TraceError::LoopClosure { gap, tol: LOOP_CLOSURE_TOL });
        }
        self.loop_index = Some(l);
        Ok(self)
    }

    /// N: index of the last state.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn loop_index(&self) -> Option<usize> {
        self.loop_index
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn disturbances(&self) -> &[Vec<f64>] {
        &self.disturbances
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbances.first().map_or(0, Vec::len)
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    /// Input at index `k`; the final index `N` has no stored input and reads
    /// as zero (predicates never bind inputs at the last sample).
    pub fn input_or_zero(&self, k: usize) -> Vec<f64> {
        self.inputs.get(k).cloned().unwrap_or_else(|| vec![0.0; self.input_dim()])
    }

    pub fn disturbance_or_zero(&self, k: usize) -> Vec<f64> {
        self.disturbances.get(k).cloned().unwrap_or_else(|| vec![0.0; self.disturbance_dim()])
    }

    /// Maps an unrolled position onto a stored index: positions `<= N` map
    /// to themselves, later positions wrap into the loop `[l, N]`.
    /// Returns `None` for positions past the end of a plain finite run.
    pub fn wrap(&self, pos: usize) -> Option<usize> {
        let n = self.horizon();
        if pos <= n {
            return Some(pos);
        }
        let l = self.loop_index?;
        let period = n - l + 1;
        Some(l + (pos - l) % period)
    }

    /// Expands a lasso to its first `k + 1` unrolled states (a plain finite
    /// run). Requires `k >= N`.
    pub fn unroll(&self, k: usize) -> Result<Run, TraceError> {
        if self.loop_index.is_none() {
            return Err(TraceError::NotALasso);
        }
        let n = self.horizon();
        if k < n {
            return Err(TraceError::UnrollTooShort { k, n });
        }
        let states = (0..=k).map(|p| self.states[self.wrap(p).unwrap()].clone()).collect();
        let inputs = (0..k).map(|p| self.input_or_zero(self.wrap(p).unwrap())).collect();
        let disturbances =
            (0..k).map(|p| self.disturbance_or_zero(self.wrap(p).unwrap())).collect();
        Run::new(states, inputs, disturbances, self.dt)
    }
}

/// Full-horizon ground-truth disturbance sequence with window queries, used
/// by the receding-horizon loop as an exact predictor.
#[derive(Debug, Clone)]
pub struct DisturbanceTrace {
    values: Vec<Vec<f64>>,
}

impl DisturbanceTrace {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize, dim: usize) -> Self {
        Self { values: vec![vec![0.0; dim]; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Exact window `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<&[Vec<f64>], TraceError> {
        if start + len > self.values.len() {
            return Err(TraceError::WindowOutOfRange { start, len, have: self.values.len() });
        }
        Ok(&self.values[start..start + len])
    }
}

/// Rolls the difference equation forward from `x0`. The resulting run is
/// unique for a given input/disturbance sequence.
pub fn simulate(
    sys: &AffineSystem,
    x0: &[f64],
    inputs: &[Vec<f64>],
    disturbances: &[Vec<f64>],
) -> Result<Run, TraceError> {
    sys.validate()?;
    if x0.len() != sys.state_dim() {
        return Err(TraceError::Dimension(format!(
            "x0 has {} entries, system has {} states",
            x0.len(),
            sys.state_dim()
        )));
    }
    if inputs.len() != disturbances.len() {
        return Err(TraceError::Dimension(format!(
            "{} inputs vs {} disturbances",
            inputs.len(),
            disturbances.len()
        )));
    }
    for u in inputs {
        if u.len() != sys.input_dim() {
            return Err(TraceError::Dimension("input dimension mismatch".into()));
        }
    }
    for w in disturbances {
        if w.len() != sys.disturbance_dim() {
            return Err(TraceError::Dimension("disturbance dimension mismatch".into()));
        }
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.to_vec());
    for (u, w) in inputs.iter().zip(disturbances) {
        let next = sys.step(states.last().unwrap(), u, w);
        states.push(next);
    }
    Run::new(states, inputs.to_vec(), disturbances.to_vec(), sys.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator(n: usize) -> AffineSystem {
        AffineSystem {
            a: Matrix::identity(n),
            b: Matrix::identity(n),
            e: Matrix::zeros(n, 0),
            c: vec![0.0; n],
            x_bounds: vec![(-100.0, 100.0); n],
            u_bounds: vec![(-100.0, 100.0); n],
            u_integral: vec![],
            dt: 1.0,
        }
    }

    #[test]
    fn integrator_accumulates_inputs() {
        let sys = integrator(1);
        let run = simulate(&sys, &[0.0], &[vec![1.0], vec![1.0]], &[vec![], vec![]]).unwrap();
        let xs: Vec<f64> = run.states().iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_a_copies_input_to_next_state() {
        // A = 0, B = I: the next state equals the applied input.
        let sys = AffineSystem {
            a: Matrix::zeros(1, 1),
            ..integrator(1)
        };
        let run = simulate(&sys, &[7.0], &[vec![3.5]], &[vec![]]).unwrap();
        assert_eq!(run.state(0), &[7.0]);
        assert_eq!(run.state(1), &[3.5]);
    }

    #[test]
    fn random_system_matches_independent_recomputation() {
        // Stable 3x3 system; re-simulate with a second plain loop.
        let a = Matrix::from_rows(vec![
            vec![0.5, 0.1, 0.0],
            vec![-0.2, 0.4, 0.1],
            vec![0.0, 0.3, 0.6],
        ])
        .unwrap();
        let b = Matrix::from_rows(vec![vec![1.0], vec![0.0], vec![0.5]]).unwrap();
        let sys = AffineSystem {
            a: a.clone(),
            b: b.clone(),
            e: Matrix::zeros(3, 0),
            c: vec![0.1, -0.1, 0.0],
            x_bounds: vec![(-1e3, 1e3); 3],
            u_bounds: vec![(-1e3, 1e3)],
            u_integral: vec![],
            dt: 0.5,
        };
        let mut state = vec![1.0, -1.0, 0.5];
        let inputs: Vec<Vec<f64>> = (0..20).map(|k| vec![((k * 7919) % 13) as f64 / 13.0 - 0.5]).collect();
        let ws: Vec<Vec<f64>> = vec![vec![]; 20];
        let run = simulate(&sys, &state, &inputs, &ws).unwrap();
        for (k, u) in inputs.iter().enumerate() {
            let mut next = vec![0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    next[i] += a.get(i, j) * state[j];
                }
                next[i] += b.get(i, 0) * u[0] + sys.c[i];
            }
            state = next;
            for i in 0..3 {
                assert!((run.state(k + 1)[i] - state[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn superposition_of_linear_part() {
        let sys = integrator(2);
        let u1 = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        let u2 = vec![vec![0.5, 0.5], vec![0.5, -1.0]];
        let w = vec![vec![], vec![]];
        let r1 = simulate(&sys, &[1.0, 2.0], &u1, &w).unwrap();
        let r2 = simulate(&sys, &[0.0, 0.0], &u2, &w).unwrap();
        let sum_u: Vec<Vec<f64>> = u1
            .iter()
            .zip(&u2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        let r12 = simulate(&sys, &[1.0, 2.0], &sum_u, &w).unwrap();
        for k in 0..=2 {
            for i in 0..2 {
                assert!((r1.state(k)[i] + r2.state(k)[i] - r12.state(k)[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulate_rejects_dimension_mismatch() {
        let sys = integrator(2);
        let err = simulate(&sys, &[0.0], &[], &[]);
        assert!(matches!(err, Err(TraceError::Dimension(_))));
    }

    fn lasso_abcb() -> Run {
        // states a, b, c, b with x_{l-1} = x_N at l = 2.
        Run::new(
            vec![vec![10.0], vec![20.0], vec![30.0], vec![20.0]],
            vec![vec![0.0]; 3],
            vec![vec![]; 3],
            1.0,
        )
        .unwrap()
        .with_loop(2)
        .unwrap()
    }

    #[test]
    fn unroll_period_two_pattern() {
        let run = lasso_abcb();
        let u = run.unroll(6).unwrap();
        let xs: Vec<f64> = u.states().iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![10.0, 20.0, 30.0, 20.0, 30.0, 20.0, 30.0]);
    }

    #[test]
    fn unroll_self_loop_repeats_last_state() {
        let run = Run::new(
            vec![vec![1.0], vec![2.0], vec![2.0]],
            vec![vec![0.0]; 2],
            vec![vec![]; 2],
            1.0,
        )
        .unwrap()
        .with_loop(2)
        .unwrap();
        let u = run.unroll(10).unwrap();
        for k in 1..=10 {
            assert_eq!(u.state(k), &[2.0]);
        }
    }

    #[test]
    fn unroll_indices_match_modular_oracle() {
        let run = lasso_abcb();
        let (n, l) = (run.horizon(), run.loop_index().unwrap());
        for pos in 0..3 * n + 5 {
            let idx = run.wrap(pos).unwrap();
            let oracle = if pos <= n { pos } else { l + (pos - l) % (n - l + 1) };
            assert_eq!(idx, oracle, "pos {pos}");
        }
    }

    #[test]
    fn unroll_prefix_property() {
        let run = lasso_abcb();
        let a = run.unroll(5).unwrap();
        let b = run.unroll(9).unwrap();
        assert_eq!(&b.states()[..6], a.states());
    }

    #[test]
    fn unroll_at_n_is_the_stored_run() {
        let run = lasso_abcb();
        let u = run.unroll(run.horizon()).unwrap();
        assert_eq!(u.states(), run.states());
    }

    #[test]
    fn unroll_requires_loop() {
        let run = Run::new(vec![vec![0.0], vec![1.0]], vec![vec![]], vec![vec![]], 1.0).unwrap();
        assert!(matches!(run.unroll(5), Err(TraceError::NotALasso)));
    }

    #[test]
    fn loop_closure_checked() {
        let run = Run::new(
            vec![vec![0.0], vec![1.0], vec![5.0]],
            vec![vec![]; 2],
            vec![vec![]; 2],
            1.0,
        )
        .unwrap();
        assert!(matches!(run.with_loop(1), Err(TraceError::LoopClosure { .. })));
    }

    #[test]
    fn disturbance_window_bounds_enforced() {
        let d = DisturbanceTrace::zeros(10, 2);
        assert!(d.window(4, 6).is_ok());
        assert!(matches!(d.window(5, 6), Err(TraceError::WindowOutOfRange { .. })));
    }
}
