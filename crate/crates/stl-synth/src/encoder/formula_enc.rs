//! Recursive formula-to-MILP lowering shared by the Boolean and robust
//! encodings, plus the zero-binary LP lowering for the safe fragment.
//!
//! Satisfaction variables are shared: equal predicates share one variable
//! grid, and each (subformula, time index) pair maps to exactly one
//! variable. Bounded until is lowered through the decomposition
//! `phi1 U_[a,b] phi2 = G_[0,a] phi1 & F_[a,b] phi2 & F_[a,a](phi1 U phi2)`
//! with an auxiliary two-pass chain for the unbounded until; the chain uses
//! the *inclusive* recursion `U_t = phi1_t & (phi2_t | U_{t+1})`, matching
//! the monitor's inclusive inner quantifier.

use std::collections::{BTreeSet, HashMap};

use super::{EncodeError, EncodingParams, Grids, Mode, SemanticsKind};
use crate::formula::{Formula, Predicate};
use crate::milp::{LinExpr, MilpModel, Sense, VarId, VarKind};

/// Discretized operator window, relative to the evaluation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Win {
    /// No sample falls inside the real-time interval.
    Empty,
    Bounded(usize, usize),
    Unbounded(usize),
}

#[derive(Debug, Clone)]
enum ANode {
    Pred(usize),
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
    G(Win, usize),
    F(Win, usize),
    U(Win, usize, usize),
}

struct Arena {
    nodes: Vec<ANode>,
    texts: Vec<String>,
    preds: Vec<Predicate>,
    root: usize,
}

fn build_arena(phi: &Formula, dt: f64, mode: Mode) -> Result<Arena, EncodeError> {
    let mut arena = Arena { nodes: Vec::new(), texts: Vec::new(), preds: Vec::new(), root: 0 };
    fn win(iv: &crate::formula::Interval, dt: f64, mode: Mode) -> Result<Win, EncodeError> {
        match iv.steps(dt)? {
            None => Ok(Win::Empty),
            Some(s) => match s.hi {
                Some(hi) => Ok(Win::Bounded(s.lo, hi)),
                None => {
                    if mode == Mode::Finite {
                        Err(EncodeError::UnboundedNeedsLasso)
                    } else {
                        Ok(Win::Unbounded(s.lo))
                    }
                }
            },
        }
    }
    fn add(arena: &mut Arena, f: &Formula, dt: f64, mode: Mode) -> Result<usize, EncodeError> {
        let node = match f {
            Formula::Pred(p) => {
                let pid = match arena.preds.iter().position(|q| q == p) {
                    Some(i) => i,
                    None => {
                        arena.preds.push(p.clone());
                        arena.preds.len() - 1
                    }
                };
                ANode::Pred(pid)
            }
            Formula::Not(c) => ANode::Not(add(arena, c, dt, mode)?),
            Formula::And(cs) => {
                let ids = cs.iter().map(|c| add(arena, c, dt, mode)).collect::<Result<_, _>>()?;
                ANode::And(ids)
            }
            Formula::Or(cs) => {
                let ids = cs.iter().map(|c| add(arena, c, dt, mode)).collect::<Result<_, _>>()?;
                ANode::Or(ids)
            }
            Formula::Globally(iv, c) => ANode::G(win(iv, dt, mode)?, add(arena, c, dt, mode)?),
            Formula::Eventually(iv, c) => ANode::F(win(iv, dt, mode)?, add(arena, c, dt, mode)?),
            Formula::Until(iv, a, b) => {
                ANode::U(win(iv, dt, mode)?, add(arena, a, dt, mode)?, add(arena, b, dt, mode)?)
            }
        };
        arena.nodes.push(node);
        arena.texts.push(f.to_string());
        Ok(arena.nodes.len() - 1)
    }
    arena.root = add(&mut arena, phi, dt, mode)?;
    Ok(arena)
}

/// Deepest index offset a node can consult (finite-mode horizon check).
fn depth(arena: &Arena, id: usize) -> usize {
    match &arena.nodes[id] {
        ANode::Pred(_) => 0,
        ANode::Not(c) => depth(arena, *c),
        ANode::And(cs) | ANode::Or(cs) => cs.iter().map(|&c| depth(arena, c)).max().unwrap_or(0),
        ANode::G(w, c) | ANode::F(w, c) => match w {
            Win::Empty => 0,
            Win::Bounded(_, hi) => hi + depth(arena, *c),
            Win::Unbounded(_) => usize::MAX / 4,
        },
        ANode::U(w, a, b) => match w {
            Win::Empty => 0,
            Win::Bounded(_, hi) => hi + depth(arena, *a).max(depth(arena, *b)),
            Win::Unbounded(lo) => lo + depth(arena, *a).max(depth(arena, *b)),
        },
    }
}

/// Window positions resolved against the horizon. In lasso mode, positions
/// past N wrap into the loop, so the index set depends on where the loop
/// forms; `PerLoop` carries one set per loop choice `j = 1..=N`.
enum WinPos {
    Empty,
    Fixed(Vec<usize>),
    PerLoop(Vec<Vec<usize>>),
}

/// One entry per variable the formula encoding creates, for the sidecar
/// variable-map file.
#[derive(Debug, Clone)]
pub struct ArtifactEntry {
    pub subformula: String,
    pub time: usize,
    pub var_name: String,
}

pub struct FormulaEncoder<'m> {
    model: &'m mut MilpModel,
    grids: Grids,
    loop_vars: Vec<VarId>,
    params: EncodingParams,
    arena: Arena,
    z_cache: HashMap<(usize, usize), VarId>,
    zp_cache: HashMap<(usize, usize), VarId>,
    zu_main: HashMap<(usize, usize), VarId>,
    zu_aux: HashMap<(usize, usize), VarId>,
    r_cache: HashMap<(usize, usize), RVar>,
    rp_cache: HashMap<(usize, usize), RVar>,
    ru_main: HashMap<(usize, usize), RVar>,
    ru_aux: HashMap<(usize, usize), RVar>,
    const_true: Option<VarId>,
    const_false: Option<VarId>,
    counter: usize,
    /// Strict upper bound on any reachable robustness magnitude; stands in
    /// for +/- infinity on vacuous windows.
    r_inf: f64,
    artifacts: Vec<ArtifactEntry>,
}

type RVar = (VarId, f64, f64);

impl<'m> FormulaEncoder<'m> {
    /// `loop_vars` must come from [`super::encode_loop`] in lasso mode and
    /// be empty in finite mode.
    pub fn new(
        model: &'m mut MilpModel,
        grids: &Grids,
        loop_vars: &[VarId],
        phi: &Formula,
        params: EncodingParams,
    ) -> Result<Self, EncodeError> {
        if params.mode == Mode::Lasso && loop_vars.len() != grids.n_steps() {
            return Err(EncodeError::NotLassoMode);
        }
        let arena = build_arena(phi, grids.dt, params.mode)?;
        let (dx, du, dw) = phi.dims();
        if dx > grids.state_dim() || du > grids.input_dim() || dw > grids.disturbance_dim() {
            return Err(EncodeError::Dimension(format!(
                "formula needs (x{dx}, u{du}, w{dw}), system provides (x{}, u{}, w{})",
                grids.state_dim(),
                grids.input_dim(),
                grids.disturbance_dim()
            )));
        }
        let mut enc = Self {
            model,
            grids: grids.clone(),
            loop_vars: loop_vars.to_vec(),
            params,
            arena,
            z_cache: HashMap::new(),
            zp_cache: HashMap::new(),
            zu_main: HashMap::new(),
            zu_aux: HashMap::new(),
            r_cache: HashMap::new(),
            rp_cache: HashMap::new(),
            ru_main: HashMap::new(),
            ru_aux: HashMap::new(),
            const_true: None,
            const_false: None,
            counter: 0,
            r_inf: 1.0,
            artifacts: Vec::new(),
        };
        let mut scale = 0.0_f64;
        for pid in 0..enc.arena.preds.len() {
            for t in 0..=enc.grids.n_steps() {
                let (lo, hi) = enc.pred_range(pid, t);
                scale = scale.max(lo.abs()).max(hi.abs());
            }
        }
        enc.r_inf = scale * enc.params.big_m_pad + 1.0;
        Ok(enc)
    }

    pub fn take_artifacts(&mut self) -> Vec<ArtifactEntry> {
        std::mem::take(&mut self.artifacts)
    }

    fn n(&self) -> usize {
        self.grids.n_steps()
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}{}", self.counter)
    }

    fn record(&mut self, node: usize, t: usize, var: VarId) {
        let name = self.model.var(var).name.clone();
        self.artifacts.push(ArtifactEntry {
            subformula: self.arena.texts[node].clone(),
            time: t,
            var_name: name,
        });
    }

    /// Linear part of `mu` at index `t` over the decision grids, plus the
    /// constant part (offset and known-disturbance contribution). Inputs and
    /// disturbances at the final index read as zero.
    fn mu_parts(&self, pid: usize, t: usize) -> (LinExpr, f64) {
        let p = &self.arena.preds[pid];
        let mut expr = LinExpr::new();
        for (i, &c) in p.coeffs_x.iter().enumerate() {
            expr.add(self.grids.x[t][i], c);
        }
        let mut k = p.offset;
        if t < self.n() {
            for (j, &c) in p.coeffs_u.iter().enumerate() {
                expr.add(self.grids.u[t][j], c);
            }
            for (j, &c) in p.coeffs_w.iter().enumerate() {
                k += c * self.grids.w[t][j];
            }
        }
        (expr, k)
    }

    /// Interval-arithmetic range of `mu` at index `t` over the *current*
    /// bounds of the grid variables. Reading live bounds instead of the
    /// static boxes keeps derived big-M constants tight; in particular a
    /// pinned trajectory collapses every range to a point, which makes the
    /// LP relaxations of the gadgets exact.
    fn pred_range(&self, pid: usize, t: usize) -> (f64, f64) {
        let p = &self.arena.preds[pid];
        let mut lo = p.offset;
        let mut hi = p.offset;
        let mut fold = |c: f64, blo: f64, bhi: f64| {
            if c >= 0.0 {
                lo += c * blo;
                hi += c * bhi;
            } else {
                lo += c * bhi;
                hi += c * blo;
            }
        };
        for (i, &c) in p.coeffs_x.iter().enumerate() {
            let v = self.model.var(self.grids.x[t][i]);
            fold(c, v.lower, v.upper);
        }
        if t < self.n() {
            for (j, &c) in p.coeffs_u.iter().enumerate() {
                let v = self.model.var(self.grids.u[t][j]);
                fold(c, v.lower, v.upper);
            }
            for (j, &c) in p.coeffs_w.iter().enumerate() {
                lo += c * self.grids.w[t][j];
                hi += c * self.grids.w[t][j];
            }
        }
        (lo, hi)
    }

    fn finite_horizon_check(&self, t: usize) -> Result<(), EncodeError> {
        if self.params.mode == Mode::Finite {
            let need = t + depth(&self.arena, self.arena.root);
            if need > self.n() {
                return Err(EncodeError::HorizonTooShort { need, have: self.n() });
            }
        }
        Ok(())
    }

    /// Index of the stored sample an unrolled position reads, given the
    /// loop forms at `j`.
    fn wrap(&self, pos: usize, j: usize) -> usize {
        let n = self.n();
        if pos <= n {
            pos
        } else {
            j + (pos - j) % (n - j + 1)
        }
    }

    fn positions(&self, t: usize, win: Win) -> WinPos {
        let n = self.n();
        match win {
            Win::Empty => WinPos::Empty,
            Win::Bounded(lo, hi) => {
                let lo_p = t + lo;
                let hi_p = t + hi;
                match self.params.mode {
                    Mode::Finite => {
                        // Paper truncation: windows clamp at the horizon.
                        let a = lo_p.min(n);
                        let b = hi_p.min(n);
                        WinPos::Fixed((a..=b).collect())
                    }
                    Mode::Lasso => {
                        if hi_p <= n {
                            WinPos::Fixed((lo_p..=hi_p).collect())
                        } else {
                            let sets = (1..=n)
                                .map(|j| {
                                    let set: BTreeSet<usize> =
                                        (lo_p..=hi_p).map(|p| self.wrap(p, j)).collect();
                                    set.into_iter().collect::<Vec<_>>()
                                })
                                .collect();
                            WinPos::PerLoop(sets)
                        }
                    }
                }
            }
            Win::Unbounded(lo) => {
                let lo_p = t + lo;
                let sets = (1..=n)
                    .map(|j| {
                        let start = if lo_p <= n { lo_p.min(j) } else { j };
                        (start..=n).collect::<Vec<_>>()
                    })
                    .collect();
                WinPos::PerLoop(sets)
            }
        }
    }

    // ---- Boolean encoding -------------------------------------------------

    fn const_bool(&mut self, value: bool) -> Result<VarId, EncodeError> {
        let slot = if value { &mut self.const_true } else { &mut self.const_false };
        if let Some(v) = *slot {
            return Ok(v);
        }
        let v = if value { 1.0 } else { 0.0 };
        let name = if value { "const_one" } else { "const_zero" };
        let id = self.model.add_variable(VarKind::Continuous, v, v, name)?;
        if value {
            self.const_true = Some(id);
        } else {
            self.const_false = Some(id);
        }
        Ok(id)
    }

    fn z_and(&mut self, ops: &[VarId]) -> Result<VarId, EncodeError> {
        debug_assert!(!ops.is_empty());
        if ops.len() == 1 {
            return Ok(ops[0]);
        }
        let name = self.fresh("and");
        let z = self.model.add_variable(VarKind::Continuous, 0.0, 1.0, name)?;
        for &o in ops {
            self.model.add_constraint(LinExpr::term(z, 1.0).plus(o, -1.0), Sense::Le, 0.0)?;
        }
        let mut expr = LinExpr::term(z, 1.0);
        for &o in ops {
            expr.add(o, -1.0);
        }
        self.model.add_constraint(expr, Sense::Ge, 1.0 - ops.len() as f64)?;
        Ok(z)
    }

    fn z_or(&mut self, ops: &[VarId]) -> Result<VarId, EncodeError> {
        debug_assert!(!ops.is_empty());
        if ops.len() == 1 {
            return Ok(ops[0]);
        }
        let name = self.fresh("or");
        let z = self.model.add_variable(VarKind::Continuous, 0.0, 1.0, name)?;
        for &o in ops {
            self.model.add_constraint(LinExpr::term(z, 1.0).plus(o, -1.0), Sense::Ge, 0.0)?;
        }
        let mut expr = LinExpr::term(z, 1.0);
        for &o in ops {
            expr.add(o, -1.0);
        }
        self.model.add_constraint(expr, Sense::Le, 0.0)?;
        Ok(z)
    }

    fn z_not(&mut self, op: VarId) -> Result<VarId, EncodeError> {
        let name = self.fresh("not");
        let z = self.model.add_variable(VarKind::Continuous, 0.0, 1.0, name)?;
        self.model.add_constraint(LinExpr::term(z, 1.0).plus(op, 1.0), Sense::Eq, 1.0)?;
        Ok(z)
    }

    /// Binary predicate satisfaction variable with the epsilon-margin rows:
    /// `mu <= M z - eps` and `-mu <= M (1 - z) - eps`.
    fn z_pred(&mut self, pid: usize, t: usize) -> Result<VarId, EncodeError> {
        if let Some(&v) = self.zp_cache.get(&(pid, t)) {
            return Ok(v);
        }
        let z = self.model.add_binary(format!("zp{pid}_{t}"))?;
        let (expr, k) = self.mu_parts(pid, t);
        let (lo, hi) = self.pred_range(pid, t);
        let eps = self.params.eps;
        let m = self.params.big_m_pad * lo.abs().max(hi.abs()) + 2.0 * eps;
        self.model.add_constraint(expr.clone().plus(z, -m), Sense::Le, -eps - k)?;
        let mut neg = LinExpr::new();
        for (v, c) in expr.terms() {
            neg.add(*v, -c);
        }
        self.model.add_constraint(neg.plus(z, m), Sense::Le, m - eps + k)?;
        self.zp_cache.insert((pid, t), z);
        self.artifacts.push(ArtifactEntry {
            subformula: self.arena.preds[pid].to_string(),
            time: t,
            var_name: self.model.var(z).name.clone(),
        });
        Ok(z)
    }

    fn z_node(&mut self, id: usize, t: usize) -> Result<VarId, EncodeError> {
        if let Some(&v) = self.z_cache.get(&(id, t)) {
            return Ok(v);
        }
        let node = self.arena.nodes[id].clone();
        let z = match node {
            ANode::Pred(pid) => self.z_pred(pid, t)?,
            ANode::Not(c) => {
                let zc = self.z_node(c, t)?;
                self.z_not(zc)?
            }
            ANode::And(cs) => {
                let ops = cs.iter().map(|&c| self.z_node(c, t)).collect::<Result<Vec<_>, _>>()?;
                self.z_and(&ops)?
            }
            ANode::Or(cs) => {
                let ops = cs.iter().map(|&c| self.z_node(c, t)).collect::<Result<Vec<_>, _>>()?;
                self.z_or(&ops)?
            }
            ANode::G(win, c) => self.z_all(c, t, win)?,
            ANode::F(win, c) => self.z_any(c, t, win)?,
            ANode::U(win, a, b) => self.z_until(a, b, t, win)?,
        };
        self.z_cache.insert((id, t), z);
        self.record(id, t, z);
        Ok(z)
    }

    /// Conjunction of a child over a window (the `G` shape).
    fn z_all(&mut self, child: usize, t: usize, win: Win) -> Result<VarId, EncodeError> {
        match self.positions(t, win) {
            WinPos::Empty => self.const_bool(true),
            WinPos::Fixed(ps) => {
                let ops = ps.iter().map(|&p| self.z_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                self.z_and(&ops)
            }
            WinPos::PerLoop(sets) => {
                let mut terms = Vec::with_capacity(sets.len());
                for (j, set) in sets.iter().enumerate() {
                    let mut ops = vec![self.loop_vars[j]];
                    for &p in set {
                        ops.push(self.z_node(child, p)?);
                    }
                    terms.push(self.z_and(&ops)?);
                }
                self.z_or(&terms)
            }
        }
    }

    /// Disjunction of a child over a window (the `F` shape).
    fn z_any(&mut self, child: usize, t: usize, win: Win) -> Result<VarId, EncodeError> {
        match self.positions(t, win) {
            WinPos::Empty => self.const_bool(false),
            WinPos::Fixed(ps) => {
                let ops = ps.iter().map(|&p| self.z_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                self.z_or(&ops)
            }
            WinPos::PerLoop(sets) => {
                let mut terms = Vec::with_capacity(sets.len());
                for (j, set) in sets.iter().enumerate() {
                    let ops = set.iter().map(|&p| self.z_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                    let any = self.z_or(&ops)?;
                    terms.push(self.z_and(&[self.loop_vars[j], any])?);
                }
                self.z_or(&terms)
            }
        }
    }

    /// Value of the unbounded-until chain at an unrolled position. Finite
    /// mode truncates at the horizon (the paper's window clamp); lasso mode
    /// selects the wrapped index per loop choice.
    fn z_until_at(&mut self, uid: usize, pos: usize) -> Result<VarId, EncodeError> {
        let n = self.n();
        if self.params.mode == Mode::Finite {
            return self.z_until_main(uid, pos.min(n));
        }
        if pos <= n {
            return self.z_until_main(uid, pos);
        }
        let mut terms = Vec::with_capacity(n);
        for j in 1..=n {
            let idx = self.wrap(pos, j);
            let v = self.z_until_main(uid, idx)?;
            terms.push(self.z_and(&[self.loop_vars[j - 1], v])?);
        }
        self.z_or(&terms)
    }

    fn z_until(&mut self, a: usize, b: usize, t: usize, win: Win) -> Result<VarId, EncodeError> {
        let (lo, bounded_hi) = match win {
            Win::Empty => return self.const_bool(false),
            Win::Bounded(lo, hi) => (lo, Some(hi)),
            Win::Unbounded(lo) => (lo, None),
        };
        // G_[0,a] phi1: phi1 holds on every sample from t through t+lo.
        let g_part = self.z_all(a, t, Win::Bounded(0, lo))?;
        let mut parts = vec![g_part];
        if let Some(hi) = bounded_hi {
            parts.push(self.z_any(b, t, Win::Bounded(lo, hi))?);
        }
        parts.push(self.z_until_at(self.arena_uid(a, b)?, t + lo)?);
        self.z_and(&parts)
    }

    /// Node id of the U node with these children (the caller already has it;
    /// this keeps the until chain keyed by the U node itself).
    fn arena_uid(&self, a: usize, b: usize) -> Result<usize, EncodeError> {
        self.arena
            .nodes
            .iter()
            .position(|n| matches!(n, ANode::U(_, x, y) if *x == a && *y == b))
            .ok_or_else(|| EncodeError::Dimension("until node lookup failed".into()))
    }

    /// Inclusive unbounded-until chain over stored indices, with the lasso
    /// closure at N: `U_N = phi1_N & (phi2_N | selected aux at the loop)`.
    fn z_until_main(&mut self, uid: usize, idx: usize) -> Result<VarId, EncodeError> {
        if let Some(&v) = self.zu_main.get(&(uid, idx)) {
            return Ok(v);
        }
        let (a, b) = match self.arena.nodes[uid] {
            ANode::U(_, a, b) => (a, b),
            _ => unreachable!("until chain on a non-until node"),
        };
        let n = self.n();
        // Build from the base case down so recursion depth stays flat.
        for i in (idx..=n).rev() {
            if self.zu_main.contains_key(&(uid, i)) {
                continue;
            }
            let za = self.z_node(a, i)?;
            let zb = self.z_node(b, i)?;
            let v = if i == n {
                match self.params.mode {
                    Mode::Finite => self.z_and(&[za, zb])?,
                    Mode::Lasso => {
                        let mut sel = Vec::with_capacity(n);
                        for j in 1..=n {
                            let aux = self.z_until_aux(uid, j)?;
                            sel.push(self.z_and(&[self.loop_vars[j - 1], aux])?);
                        }
                        let any_loop = self.z_or(&sel)?;
                        let cont = self.z_or(&[zb, any_loop])?;
                        self.z_and(&[za, cont])?
                    }
                }
            } else {
                let next = self.zu_main[&(uid, i + 1)];
                let cont = self.z_or(&[zb, next])?;
                self.z_and(&[za, cont])?
            };
            self.zu_main.insert((uid, i), v);
        }
        Ok(self.zu_main[&(uid, idx)])
    }

    /// Second-pass chain without loop closure, consulted at the loop-back
    /// index to break the circularity of the lasso until.
    fn z_until_aux(&mut self, uid: usize, idx: usize) -> Result<VarId, EncodeError> {
        if let Some(&v) = self.zu_aux.get(&(uid, idx)) {
            return Ok(v);
        }
        let (a, b) = match self.arena.nodes[uid] {
            ANode::U(_, a, b) => (a, b),
            _ => unreachable!(),
        };
        let n = self.n();
        for i in (idx..=n).rev() {
            if self.zu_aux.contains_key(&(uid, i)) {
                continue;
            }
            let za = self.z_node(a, i)?;
            let zb = self.z_node(b, i)?;
            let v = if i == n {
                self.z_and(&[za, zb])?
            } else {
                let next = self.zu_aux[&(uid, i + 1)];
                let cont = self.z_or(&[zb, next])?;
                self.z_and(&[za, cont])?
            };
            self.zu_aux.insert((uid, i), v);
        }
        Ok(self.zu_aux[&(uid, idx)])
    }

    /// Boolean satisfaction variable of the whole formula at index `t`,
    /// without the root constraint. Predicate variables exist at every
    /// index; the connective constraints are generated recursively from the
    /// requested root instance.
    pub fn boolean_var_at(&mut self, t: usize) -> Result<VarId, EncodeError> {
        self.finite_horizon_check(t)?;
        for pid in 0..self.arena.preds.len() {
            for k in 0..=self.n() {
                self.z_pred(pid, k)?;
            }
        }
        self.z_node(self.arena.root, t)
    }

    /// Full Boolean encoding: root variable plus the final constraint
    /// `z_root = 1`.
    pub fn encode_boolean(&mut self) -> Result<VarId, EncodeError> {
        let root = self.boolean_var_at(0)?;
        self.model.add_constraint(LinExpr::term(root, 1.0), Sense::Eq, 1.0)?;
        Ok(root)
    }

    // ---- Robust encoding --------------------------------------------------

    fn r_const(&mut self, value: f64) -> Result<RVar, EncodeError> {
        let name = self.fresh("rc");
        let v = self.model.add_variable(VarKind::Continuous, value, value, name)?;
        Ok((v, value, value))
    }

    fn r_pred(&mut self, pid: usize, t: usize) -> Result<RVar, EncodeError> {
        if let Some(&v) = self.rp_cache.get(&(pid, t)) {
            return Ok(v);
        }
        let (lo, hi) = self.pred_range(pid, t);
        let r = self.model.add_variable(VarKind::Continuous, lo, hi, format!("rp{pid}_{t}"))?;
        let (expr, k) = self.mu_parts(pid, t);
        let mut row = LinExpr::term(r, 1.0);
        for (v, c) in expr.terms() {
            row.add(*v, -c);
        }
        self.model.add_constraint(row, Sense::Eq, k)?;
        self.rp_cache.insert((pid, t), (r, lo, hi));
        self.artifacts.push(ArtifactEntry {
            subformula: self.arena.preds[pid].to_string(),
            time: t,
            var_name: self.model.var(r).name.clone(),
        });
        Ok((r, lo, hi))
    }

    /// Min gadget: selector binaries pick the attained operand and big-M
    /// sandwich rows tie the result to it; `r <= r_i` rows force the pick to
    /// be a minimizer.
    fn r_min(&mut self, ops: &[RVar]) -> Result<RVar, EncodeError> {
        self.r_fold(ops, true)
    }

    fn r_max(&mut self, ops: &[RVar]) -> Result<RVar, EncodeError> {
        self.r_fold(ops, false)
    }

    fn r_fold(&mut self, ops: &[RVar], is_min: bool) -> Result<RVar, EncodeError> {
        debug_assert!(!ops.is_empty());
        if ops.len() == 1 {
            return Ok(ops[0]);
        }
        let fold = |f: fn(f64, f64) -> f64, xs: &[f64]| xs.iter().copied().reduce(f).unwrap();
        let los: Vec<f64> = ops.iter().map(|o| o.1).collect();
        let his: Vec<f64> = ops.iter().map(|o| o.2).collect();
        let (lo, hi) = if is_min {
            (fold(f64::min, &los), fold(f64::min, &his))
        } else {
            (fold(f64::max, &los), fold(f64::max, &his))
        };
        let name = self.fresh(if is_min { "min" } else { "max" });
        let r = self.model.add_variable(VarKind::Continuous, lo, hi, name)?;
        let mut selectors = Vec::with_capacity(ops.len());
        for _ in ops {
            let s = self.fresh("sel");
            selectors.push(self.model.add_binary(s)?);
        }
        let sum: LinExpr = selectors.iter().map(|&s| (s, 1.0)).collect();
        self.model.add_constraint(sum, Sense::Eq, 1.0)?;
        for (&(ri, rlo, rhi), &p) in ops.iter().zip(&selectors) {
            let sense = if is_min { Sense::Le } else { Sense::Ge };
            self.model.add_constraint(LinExpr::term(r, 1.0).plus(ri, -1.0), sense, 0.0)?;
            let m = self.params.big_m_pad * (rhi - lo).max(hi - rlo).max(0.0);
            // r <= r_i + M (1 - p)  and  r >= r_i - M (1 - p)
            self.model
                .add_constraint(LinExpr::term(r, 1.0).plus(ri, -1.0).plus(p, m), Sense::Le, m)?;
            self.model
                .add_constraint(LinExpr::term(r, 1.0).plus(ri, -1.0).plus(p, -m), Sense::Ge, -m)?;
        }
        Ok((r, lo, hi))
    }

    /// Ties a fresh variable to the per-loop value selected by the loop
    /// binaries (which are already one-hot).
    fn r_loop_select(&mut self, per_loop: &[RVar]) -> Result<RVar, EncodeError> {
        let lo = per_loop.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let hi = per_loop.iter().map(|o| o.2).fold(f64::NEG_INFINITY, f64::max);
        let name = self.fresh("lsel");
        let r = self.model.add_variable(VarKind::Continuous, lo, hi, name)?;
        for (j, &(vj, vlo, vhi)) in per_loop.iter().enumerate() {
            let l = self.loop_vars[j];
            let m = self.params.big_m_pad * (hi - vlo).max(vhi - lo).max(0.0);
            self.model
                .add_constraint(LinExpr::term(r, 1.0).plus(vj, -1.0).plus(l, m), Sense::Le, m)?;
            self.model
                .add_constraint(LinExpr::term(r, 1.0).plus(vj, -1.0).plus(l, -m), Sense::Ge, -m)?;
        }
        Ok((r, lo, hi))
    }

    fn r_node(&mut self, id: usize, t: usize) -> Result<RVar, EncodeError> {
        if let Some(&v) = self.r_cache.get(&(id, t)) {
            return Ok(v);
        }
        let node = self.arena.nodes[id].clone();
        let rv = match node {
            ANode::Pred(pid) => self.r_pred(pid, t)?,
            ANode::Not(c) => {
                let (rc, lo, hi) = self.r_node(c, t)?;
                let name = self.fresh("neg");
                let r = self.model.add_variable(VarKind::Continuous, -hi, -lo, name)?;
                self.model.add_constraint(LinExpr::term(r, 1.0).plus(rc, 1.0), Sense::Eq, 0.0)?;
                (r, -hi, -lo)
            }
            ANode::And(cs) => {
                let ops = cs.iter().map(|&c| self.r_node(c, t)).collect::<Result<Vec<_>, _>>()?;
                self.r_min(&ops)?
            }
            ANode::Or(cs) => {
                let ops = cs.iter().map(|&c| self.r_node(c, t)).collect::<Result<Vec<_>, _>>()?;
                self.r_max(&ops)?
            }
            ANode::G(win, c) => self.r_all(c, t, win)?,
            ANode::F(win, c) => self.r_any(c, t, win)?,
            ANode::U(win, a, b) => self.r_until(a, b, t, win)?,
        };
        self.r_cache.insert((id, t), rv);
        self.record(id, t, rv.0);
        Ok(rv)
    }

    fn r_all(&mut self, child: usize, t: usize, win: Win) -> Result<RVar, EncodeError> {
        match self.positions(t, win) {
            WinPos::Empty => {
                let v = self.r_inf;
                self.r_const(v)
            }
            WinPos::Fixed(ps) => {
                let ops = ps.iter().map(|&p| self.r_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                self.r_min(&ops)
            }
            WinPos::PerLoop(sets) => {
                let mut per = Vec::with_capacity(sets.len());
                for set in &sets {
                    let ops =
                        set.iter().map(|&p| self.r_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                    per.push(self.r_min(&ops)?);
                }
                self.r_loop_select(&per)
            }
        }
    }

    fn r_any(&mut self, child: usize, t: usize, win: Win) -> Result<RVar, EncodeError> {
        match self.positions(t, win) {
            WinPos::Empty => {
                let v = -self.r_inf;
                self.r_const(v)
            }
            WinPos::Fixed(ps) => {
                let ops = ps.iter().map(|&p| self.r_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                self.r_max(&ops)
            }
            WinPos::PerLoop(sets) => {
                let mut per = Vec::with_capacity(sets.len());
                for set in &sets {
                    let ops =
                        set.iter().map(|&p| self.r_node(child, p)).collect::<Result<Vec<_>, _>>()?;
                    per.push(self.r_max(&ops)?);
                }
                self.r_loop_select(&per)
            }
        }
    }

    fn r_until_at(&mut self, uid: usize, pos: usize) -> Result<RVar, EncodeError> {
        let n = self.n();
        if self.params.mode == Mode::Finite {
            return self.r_until_main(uid, pos.min(n));
        }
        if pos <= n {
            return self.r_until_main(uid, pos);
        }
        let mut per = Vec::with_capacity(n);
        for j in 1..=n {
            let idx = self.wrap(pos, j);
            per.push(self.r_until_main(uid, idx)?);
        }
        self.r_loop_select(&per)
    }

    fn r_until(&mut self, a: usize, b: usize, t: usize, win: Win) -> Result<RVar, EncodeError> {
        let (lo, bounded_hi) = match win {
            Win::Empty => {
                let v = -self.r_inf;
                return self.r_const(v);
            }
            Win::Bounded(lo, hi) => (lo, Some(hi)),
            Win::Unbounded(lo) => (lo, None),
        };
        let g_part = self.r_all(a, t, Win::Bounded(0, lo))?;
        let mut parts = vec![g_part];
        if let Some(hi) = bounded_hi {
            parts.push(self.r_any(b, t, Win::Bounded(lo, hi))?);
        }
        let uid = self.arena_uid(a, b)?;
        parts.push(self.r_until_at(uid, t + lo)?);
        self.r_min(&parts)
    }

    fn r_until_main(&mut self, uid: usize, idx: usize) -> Result<RVar, EncodeError> {
        if let Some(&v) = self.ru_main.get(&(uid, idx)) {
            return Ok(v);
        }
        let (a, b) = match self.arena.nodes[uid] {
            ANode::U(_, a, b) => (a, b),
            _ => unreachable!(),
        };
        let n = self.n();
        for i in (idx..=n).rev() {
            if self.ru_main.contains_key(&(uid, i)) {
                continue;
            }
            let ra = self.r_node(a, i)?;
            let rb = self.r_node(b, i)?;
            let v = if i == n {
                match self.params.mode {
                    Mode::Finite => self.r_min(&[ra, rb])?,
                    Mode::Lasso => {
                        let mut per = Vec::with_capacity(n);
                        for j in 1..=n {
                            per.push(self.r_until_aux(uid, j)?);
                        }
                        let sel = self.r_loop_select(&per)?;
                        let cont = self.r_max(&[rb, sel])?;
                        self.r_min(&[ra, cont])?
                    }
                }
            } else {
                let next = self.ru_main[&(uid, i + 1)];
                let cont = self.r_max(&[rb, next])?;
                self.r_min(&[ra, cont])?
            };
            self.ru_main.insert((uid, i), v);
        }
        Ok(self.ru_main[&(uid, idx)])
    }

    fn r_until_aux(&mut self, uid: usize, idx: usize) -> Result<RVar, EncodeError> {
        if let Some(&v) = self.ru_aux.get(&(uid, idx)) {
            return Ok(v);
        }
        let (a, b) = match self.arena.nodes[uid] {
            ANode::U(_, a, b) => (a, b),
            _ => unreachable!(),
        };
        let n = self.n();
        for i in (idx..=n).rev() {
            if self.ru_aux.contains_key(&(uid, i)) {
                continue;
            }
            let ra = self.r_node(a, i)?;
            let rb = self.r_node(b, i)?;
            let v = if i == n {
                self.r_min(&[ra, rb])?
            } else {
                let next = self.ru_aux[&(uid, i + 1)];
                let cont = self.r_max(&[rb, next])?;
                self.r_min(&[ra, cont])?
            };
            self.ru_aux.insert((uid, i), v);
        }
        Ok(self.ru_aux[&(uid, idx)])
    }

    /// Robustness variable of the whole formula at index `t`, without the
    /// root constraint. The returned bounds are the derived range.
    ///
    /// Unlike the Boolean encoding, the robust encoding materializes
    /// `r^phi_t` as a full signal: every subformula gets a robustness
    /// variable at every index (windows clamping at the horizon), which is
    /// why it produces substantially more constraints. Lasso instances stay
    /// on demand, since each one expands per loop position.
    pub fn robust_var_at(&mut self, t: usize) -> Result<RVar, EncodeError> {
        self.finite_horizon_check(t)?;
        for pid in 0..self.arena.preds.len() {
            for k in 0..=self.n() {
                self.r_pred(pid, k)?;
            }
        }
        if self.params.mode == Mode::Finite {
            for id in 0..self.arena.nodes.len() {
                for k in 0..=self.n() {
                    self.r_node(id, k)?;
                }
            }
        }
        self.r_node(self.arena.root, t)
    }

    /// Full robust encoding: robustness variable at index 0 plus, when the
    /// params carry a target, the root constraint `r >= target`.
    pub fn encode_robust(&mut self) -> Result<VarId, EncodeError> {
        let (root, _, _) = self.robust_var_at(0)?;
        if let Some(target) = self.params.robust_target {
            self.model.add_constraint(LinExpr::term(root, 1.0), Sense::Ge, target)?;
        }
        Ok(root)
    }
}

/// Counts the variables the formula encoding would create for a horizon,
/// excluding the system grids and loop binaries. Returns
/// `(binaries, continuous)`.
pub fn count_variables(
    phi: &Formula,
    n_steps: usize,
    dt: f64,
    semantics: SemanticsKind,
) -> Result<(usize, usize), EncodeError> {
    let mode = if phi.has_unbounded() { Mode::Lasso } else { Mode::Finite };
    let mut model = MilpModel::new();
    let (dx, du, dw) = phi.dims();
    let dims = dx.max(du).max(1);
    let mut grids = super::encode_trivial_system(&mut model, dims, 1.0, dt, n_steps)?;
    grids.w = vec![vec![0.0; dw]; n_steps];
    let loop_vars = if mode == Mode::Lasso {
        super::encode_loop(&mut model, &grids, 1.1)?
    } else {
        Vec::new()
    };
    let base_bin = model.num_binaries();
    let base_cont = model.num_continuous();
    let mut params = EncodingParams::new(n_steps, mode, semantics);
    params.robust_target = None;
    let mut enc = FormulaEncoder::new(&mut model, &grids, &loop_vars, phi, params)?;
    match semantics {
        SemanticsKind::Boolean => {
            enc.boolean_var_at(0)?;
        }
        SemanticsKind::Robust => {
            enc.robust_var_at(0)?;
        }
    }
    Ok((model.num_binaries() - base_bin, model.num_continuous() - base_cont))
}

/// Lowers a safe negation-normal formula to a pure LP: one row
/// `r <= sign * mu(x_t)` per (predicate occurrence, window index) pair and
/// zero binary variables. Returns the root robustness variable; with a
/// target, adds `r >= target`. Bounded formulas only.
pub fn encode_snn_lp(
    model: &mut MilpModel,
    grids: &Grids,
    phi: &Formula,
    target: Option<f64>,
    big_m_pad: f64,
) -> Result<VarId, EncodeError> {
    if !phi.is_snn() {
        return Err(EncodeError::NotSnn);
    }
    if phi.has_unbounded() {
        return Err(EncodeError::UnboundedNeedsLasso);
    }
    let arena = build_arena(phi, grids.dt, Mode::Finite)?;
    let (dx, du, dw) = phi.dims();
    if dx > grids.state_dim() || du > grids.input_dim() || dw > grids.disturbance_dim() {
        return Err(EncodeError::Dimension("formula dimensions exceed the system".into()));
    }
    let n = grids.n_steps();
    if depth(&arena, arena.root) > n {
        return Err(EncodeError::HorizonTooShort { need: depth(&arena, arena.root), have: n });
    }

    // Collect (predicate, sign, times) leaves.
    let mut leaves: Vec<(usize, f64, BTreeSet<usize>)> = Vec::new();
    fn collect(
        arena: &Arena,
        id: usize,
        times: &BTreeSet<usize>,
        n: usize,
        out: &mut Vec<(usize, f64, BTreeSet<usize>)>,
    ) {
        match &arena.nodes[id] {
            ANode::Pred(pid) => out.push((*pid, 1.0, times.clone())),
            ANode::Not(c) => {
                if let ANode::Pred(pid) = arena.nodes[*c] {
                    out.push((pid, -1.0, times.clone()));
                }
            }
            ANode::And(cs) => {
                for &c in cs {
                    collect(arena, c, times, n, out);
                }
            }
            ANode::G(win, c) => match win {
                Win::Empty => {}
                Win::Bounded(lo, hi) => {
                    let mut child_times = BTreeSet::new();
                    for &t in times {
                        for p in t + lo..=(t + hi).min(n) {
                            child_times.insert(p.min(n));
                        }
                    }
                    collect(arena, *c, &child_times, n, out);
                }
                Win::Unbounded(_) => unreachable!("rejected above"),
            },
            _ => unreachable!("non-SNN node survived the fragment check"),
        }
    }
    let root_times: BTreeSet<usize> = [0usize].into();
    collect(&arena, arena.root, &root_times, n, &mut leaves);

    // Range scale for the root variable bounds.
    let mut scale = 1.0_f64;
    let range = |pid: usize, t: usize| -> (f64, f64) {
        let p = &arena.preds[pid];
        let mut lo = p.offset;
        let mut hi = p.offset;
        let mut fold = |coeffs: &[f64], bounds: &[(f64, f64)]| {
            for (c, (blo, bhi)) in coeffs.iter().zip(bounds) {
                if *c >= 0.0 {
                    lo += c * blo;
                    hi += c * bhi;
                } else {
                    lo += c * bhi;
                    hi += c * blo;
                }
            }
        };
        fold(&p.coeffs_x, &grids.x_bounds);
        if t < n {
            fold(&p.coeffs_u, &grids.u_bounds);
            for (j, &c) in p.coeffs_w.iter().enumerate() {
                lo += c * grids.w[t][j];
                hi += c * grids.w[t][j];
            }
        }
        (lo, hi)
    };
    for (pid, _, times) in &leaves {
        for &t in times {
            let (lo, hi) = range(*pid, t);
            scale = scale.max(lo.abs()).max(hi.abs());
        }
    }
    let r_inf = scale * big_m_pad + 1.0;
    let root = model.add_variable(VarKind::Continuous, -r_inf, r_inf, "r_snn_root")?;

    for (pid, sign, times) in &leaves {
        let p = &arena.preds[*pid];
        for &t in times {
            // r <= sign * mu(x_t, u_t, w_t)
            let mut row = LinExpr::term(root, 1.0);
            for (i, &c) in p.coeffs_x.iter().enumerate() {
                row.add(grids.x[t][i], -sign * c);
            }
            let mut k = sign * p.offset;
            if t < n {
                for (j, &c) in p.coeffs_u.iter().enumerate() {
                    row.add(grids.u[t][j], -sign * c);
                }
                for (j, &c) in p.coeffs_w.iter().enumerate() {
                    k += sign * c * grids.w[t][j];
                }
            }
            model.add_constraint(row, Sense::Le, k)?;
        }
    }
    if let Some(target) = target {
        model.add_constraint(LinExpr::term(root, 1.0), Sense::Ge, target)?;
    }
    Ok(root)
}
