//! Bounded-variable primal simplex over a dense basis inverse.
//!
//! Phase 1 installs one artificial variable per infeasible row and minimizes
//! their sum; phase 2 minimizes the true cost. Entering variables follow
//! Dantzig pricing with ties broken by lowest variable index; after a run of
//! degenerate pivots the rule falls back to Bland's rule, which guarantees
//! termination. All tie-breaking is by index, so solves are deterministic.

const DUAL_TOL: f64 = 1e-9;
const PIV_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-10;
const DEGEN_STEP_TOL: f64 = 1e-11;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGEN_LIMIT: usize = 1000;
const REFRESH_INTERVAL: usize = 64;
const REFACTOR_INTERVAL: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Values of the structural variables (empty unless Optimal).
    pub values: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// LP in computational form: minimize `cost . x` subject to
/// `rows: a_i . x + s_i = rhs_i` with slack bounds encoding the row sense,
/// and box bounds on the structural variables (infinities allowed).
#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    pub ncols: usize,
    pub nrows: usize,
    /// Sparse structural columns: (row, coefficient).
    pub cols: Vec<Vec<(usize, f64)>>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
    pub slack_lower: Vec<f64>,
    pub slack_upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    Free,
}

struct Tableau<'a> {
    lp: &'a LpProblem,
    /// Artificial columns as (row, sign), appended after slacks.
    artificials: Vec<(usize, f64)>,
    /// Variable order: [0,n) structural, [n, n+m) slacks, then artificials.
    state: Vec<VarState>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    degen_streak: usize,
    max_pivots: usize,
}

impl<'a> Tableau<'a> {
    fn n(&self) -> usize {
        self.lp.ncols
    }

    fn m(&self) -> usize {
        self.lp.nrows
    }

    fn nvars(&self) -> usize {
        self.n() + self.m() + self.artificials.len()
    }

    fn col_entries(&self, j: usize) -> ColIter<'_> {
        let n = self.n();
        let m = self.m();
        if j < n {
            ColIter::Sparse(self.lp.cols[j].iter())
        } else if j < n + m {
            ColIter::Unit(Some((j - n, 1.0)))
        } else {
            ColIter::Unit(Some(self.artificials[j - n - m]))
        }
    }

    fn nb_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::Free => 0.0,
            VarState::Basic(r) => self.xb[r],
        }
    }

    /// Recomputes basic values exactly from nonbasic values and the current
    /// basis inverse.
    fn refresh_xb(&mut self) {
        let m = self.m();
        let mut r = self.lp.rhs.clone();
        for j in 0..self.nvars() {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.nb_value(j);
            if v != 0.0 {
                for (row, a) in self.col_entries(j) {
                    r[row] -= a * v;
                }
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += self.binv[i * m + k] * r[k];
            }
            self.xb[i] = acc;
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting. Returns false if the basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m();
        let mut mat = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for (row, a) in self.col_entries(j) {
                mat[row * m + i] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return false;
            }
            if piv_row != col {
                for k in 0..m {
                    mat.swap(col * m + k, piv_row * m + k);
                    inv.swap(col * m + k, piv_row * m + k);
                }
            }
            let p = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = mat[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= f * mat[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.refresh_xb();
        true
    }

    /// One phase of simplex with the given cost vector over all variables.
    /// Returns the terminal status for this phase.
    fn run(&mut self, cost: &[f64]) -> LpStatus {
        let m = self.m();
        loop {
            if self.pivots >= self.max_pivots {
                return LpStatus::IterationLimit;
            }
            if self.pivots > 0 && self.pivots % REFACTOR_INTERVAL == 0 && !self.refactor() {
                return LpStatus::IterationLimit;
            } else if self.pivots > 0 && self.pivots % REFRESH_INTERVAL == 0 {
                self.refresh_xb();
            }

            // Pricing: y = c_B B^-1, then reduced costs per nonbasic column.
            let mut y = vec![0.0; m];
            for (i, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb != 0.0 {
                    for k in 0..m {
                        y[k] += cb * self.binv[i * m + k];
                    }
                }
            }
            let bland = self.degen_streak >= DEGEN_LIMIT;
            let mut entering: Option<(usize, f64, f64)> = None; // (var, |d|, direction)
            for j in 0..self.nvars() {
                let st = self.state[j];
                if matches!(st, VarState::Basic(_)) {
                    continue;
                }
                if self.upper[j] - self.lower[j] <= 0.0 && st != VarState::Free {
                    continue; // fixed variable can never move
                }
                let mut d = cost[j];
                for (row, a) in self.col_entries(j) {
                    d -= y[row] * a;
                }
                let dir = match st {
                    VarState::AtLower if d < -DUAL_TOL => 1.0,
                    VarState::AtUpper if d > DUAL_TOL => -1.0,
                    VarState::Free if d < -DUAL_TOL => 1.0,
                    VarState::Free if d > DUAL_TOL => -1.0,
                    _ => continue,
                };
                let score = d.abs();
                if bland {
                    entering = Some((j, score, dir));
                    break;
                }
                match entering {
                    Some((_, best, _)) if best >= score => {}
                    _ => entering = Some((j, score, dir)),
                }
            }
            let Some((j_in, _, dir)) = entering else {
                return LpStatus::Optimal;
            };

            // Column in the current basis frame.
            let mut col = vec![0.0; m];
            for (row, a) in self.col_entries(j_in) {
                for i in 0..m {
                    col[i] += self.binv[i * m + row] * a;
                }
            }

            // Ratio test: smallest step that drives a basic variable to a
            // bound, or flips the entering variable to its opposite bound.
            let flip_limit = if self.state[j_in] == VarState::Free {
                f64::INFINITY
            } else {
                self.upper[j_in] - self.lower[j_in]
            };
            let mut best_delta = flip_limit;
            let mut leaving: Option<usize> = None; // basis row
            for i in 0..m {
                let g = dir * col[i];
                let bj = self.basis[i];
                let limit = if g > PIV_TOL {
                    if self.lower[bj].is_finite() {
                        ((self.xb[i] - self.lower[bj]) / g).max(0.0)
                    } else {
                        continue;
                    }
                } else if g < -PIV_TOL {
                    if self.upper[bj].is_finite() {
                        ((self.upper[bj] - self.xb[i]) / -g).max(0.0)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                let take = match leaving {
                    None => limit < best_delta,
                    Some(cur) => {
                        limit < best_delta - RATIO_TIE_TOL
                            || (limit <= best_delta + RATIO_TIE_TOL && bj < self.basis[cur])
                    }
                };
                if take {
                    best_delta = best_delta.min(limit);
                    leaving = Some(i);
                }
            }
            if best_delta.is_infinite() {
                return LpStatus::Unbounded;
            }
            let delta = best_delta.max(0.0);
            self.degen_streak = if delta <= DEGEN_STEP_TOL { self.degen_streak + 1 } else { 0 };
            self.pivots += 1;

            match leaving {
                None => {
                    // Bound flip: the entering variable crosses to its other
                    // bound without any basis change.
                    for i in 0..m {
                        self.xb[i] -= dir * delta * col[i];
                    }
                    self.state[j_in] = if dir > 0.0 { VarState::AtUpper } else { VarState::AtLower };
                }
                Some(r) => {
                    let j_out = self.basis[r];
                    let enter_val = self.nb_value(j_in) + dir * delta;
                    for i in 0..m {
                        if i != r {
                            self.xb[i] -= dir * delta * col[i];
                        }
                    }
                    let g = dir * col[r];
                    self.state[j_out] = if g > 0.0 { VarState::AtLower } else { VarState::AtUpper };
                    self.basis[r] = j_in;
                    self.state[j_in] = VarState::Basic(r);
                    self.xb[r] = enter_val;
                    // Elementary row update of the basis inverse.
                    let p = col[r];
                    for k in 0..m {
                        self.binv[r * m + k] /= p;
                    }
                    for i in 0..m {
                        if i != r && col[i] != 0.0 {
                            let f = col[i];
                            for k in 0..m {
                                self.binv[i * m + k] -= f * self.binv[r * m + k];
                            }
                        }
                    }
                }
            }
        }
    }

    fn phase1_infeasibility(&self) -> f64 {
        let n = self.n();
        let m = self.m();
        let mut total = 0.0;
        for j in n + m..self.nvars() {
            total += self.nb_value(j).max(0.0);
        }
        total
    }
}

enum ColIter<'a> {
    Sparse(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<(usize, f64)>),
}

impl<'a> Iterator for ColIter<'a> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Sparse(it) => it.next().copied(),
            ColIter::Unit(v) => v.take(),
        }
    }
}

/// Solves the LP to optimality (or detects infeasible/unbounded) within the
/// pivot budget.
pub(crate) fn solve_lp(lp: &LpProblem, max_pivots: usize) -> LpOutcome {
    let n = lp.ncols;
    let m = lp.nrows;

    // Quick reject: contradictory bounds make the whole problem infeasible.
    for j in 0..n {
        if lp.col_lower[j] > lp.col_upper[j] + 1e-12 {
            return LpOutcome { status: LpStatus::Infeasible, values: Vec::new(), objective: f64::NAN, pivots: 0 };
        }
    }

    let mut lower = Vec::with_capacity(n + m);
    let mut upper = Vec::with_capacity(n + m);
    lower.extend_from_slice(&lp.col_lower);
    upper.extend_from_slice(&lp.col_upper);
    lower.extend_from_slice(&lp.slack_lower);
    upper.extend_from_slice(&lp.slack_upper);

    let mut state = Vec::with_capacity(n + m);
    for j in 0..n {
        let st = if lp.col_lower[j].is_finite() && lp.col_upper[j].is_finite() {
            if lp.col_lower[j].abs() <= lp.col_upper[j].abs() { VarState::AtLower } else { VarState::AtUpper }
        } else if lp.col_lower[j].is_finite() {
            VarState::AtLower
        } else if lp.col_upper[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::Free
        };
        state.push(st);
    }
    for _ in 0..m {
        state.push(VarState::AtLower); // placeholder, slacks become basic below
    }

    let mut tab = Tableau {
        lp,
        artificials: Vec::new(),
        state,
        lower,
        upper,
        basis: (n..n + m).collect(),
        binv: {
            let mut id = vec![0.0; m * m];
            for i in 0..m {
                id[i * m + i] = 1.0;
            }
            id
        },
        xb: vec![0.0; m],
        pivots: 0,
        degen_streak: 0,
        max_pivots,
    };
    for i in 0..m {
        tab.state[n + i] = VarState::Basic(i);
    }
    tab.refresh_xb();

    // Phase 1: rows whose slack value violates the slack bounds get an
    // artificial variable that absorbs the violation.
    let mut needs_phase1 = false;
    for i in 0..m {
        let v = tab.xb[i];
        let (slo, shi) = (lp.slack_lower[i], lp.slack_upper[i]);
        if v > shi + 1e-10 {
            let sign = 1.0;
            tab.artificials.push((i, sign));
            let aj = n + m + tab.artificials.len() - 1;
            tab.lower.push(0.0);
            tab.upper.push(f64::INFINITY);
            // Slack parks at its violated bound; artificial takes the excess.
            tab.state[n + i] = VarState::AtUpper;
            tab.state.push(VarState::Basic(i));
            tab.basis[i] = aj;
            tab.xb[i] = v - shi;
            needs_phase1 = true;
        } else if v < slo - 1e-10 {
            let sign = -1.0;
            tab.artificials.push((i, sign));
            let aj = n + m + tab.artificials.len() - 1;
            tab.lower.push(0.0);
            tab.upper.push(f64::INFINITY);
            tab.state[n + i] = VarState::AtLower;
            tab.state.push(VarState::Basic(i));
            tab.basis[i] = aj;
            tab.xb[i] = slo - v;
            // Basis column is -e_i, so the basis inverse flips this row.
            tab.binv[i * m + i] = -1.0;
            needs_phase1 = true;
        }
    }

    if needs_phase1 {
        let mut p1cost = vec![0.0; tab.nvars()];
        for j in n + m..tab.nvars() {
            p1cost[j] = 1.0;
        }
        match tab.run(&p1cost) {
            LpStatus::Optimal => {}
            LpStatus::IterationLimit => {
                return LpOutcome { status: LpStatus::IterationLimit, values: Vec::new(), objective: f64::NAN, pivots: tab.pivots };
            }
            // Phase 1 cost is bounded below by zero; unbounded cannot happen.
            LpStatus::Unbounded | LpStatus::Infeasible => {
                return LpOutcome { status: LpStatus::IterationLimit, values: Vec::new(), objective: f64::NAN, pivots: tab.pivots };
            }
        }
        tab.refresh_xb();
        if tab.phase1_infeasibility() > 1e-7 {
            return LpOutcome { status: LpStatus::Infeasible, values: Vec::new(), objective: f64::NAN, pivots: tab.pivots };
        }
        // Pin every artificial at zero for phase 2.
        for j in n + m..tab.nvars() {
            tab.upper[j] = 0.0;
            if !matches!(tab.state[j], VarState::Basic(_)) {
                tab.state[j] = VarState::AtLower;
            }
        }
    }

    let mut cost = vec![0.0; tab.nvars()];
    cost[..n].copy_from_slice(&lp.cost);
    tab.degen_streak = 0;
    let status = tab.run(&cost);
    match status {
        LpStatus::Optimal => {
            tab.refresh_xb();
            let mut values = vec![0.0; n];
            for (j, value) in values.iter_mut().enumerate() {
                *value = tab.nb_value(j);
            }
            // Snap values onto their bounds to absorb roundoff.
            for j in 0..n {
                values[j] = values[j].clamp(
                    if lp.col_lower[j].is_finite() { lp.col_lower[j] } else { f64::NEG_INFINITY },
                    if lp.col_upper[j].is_finite() { lp.col_upper[j] } else { f64::INFINITY },
                );
            }
            let objective = lp.cost.iter().zip(&values).map(|(c, v)| c * v).sum();
            LpOutcome { status: LpStatus::Optimal, values, objective, pivots: tab.pivots }
        }
        other => LpOutcome { status: other, values: Vec::new(), objective: f64::NAN, pivots: tab.pivots },
    }
}
