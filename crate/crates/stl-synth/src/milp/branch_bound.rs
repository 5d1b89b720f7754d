//! Branch-and-bound over LP relaxations.
//!
//! Branching rule: most-fractional binary, ties by lowest variable id.
//! Node order: best bound, ties by lowest node id. Both rules are fixed, so
//! the search tree (and therefore the reported solution) is deterministic
//! for a given model and configuration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{solve_lp, LpOutcome, LpProblem, LpStatus};
use super::{Direction, MilpModel, Sense, Solution, SolveStatus, VarKind, INT_TOL, OBJ_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOrder {
    /// Explore the node with the best LP bound first (default).
    BestBound,
    /// Dive depth-first; reaches integral incumbents quickly on loose models.
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Maximum number of branch-and-bound nodes before giving up.
    pub node_budget: usize,
    /// Maximum simplex pivots per LP relaxation.
    pub pivot_budget: usize,
    /// Stop as soon as the first integral incumbent is found. The returned
    /// status is `IterationLimit` unless the incumbent is also proven
    /// optimal, but the assignment is feasible and usable.
    pub first_incumbent: bool,
    pub node_order: NodeOrder,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            node_budget: 1_000_000,
            pivot_budget: 200_000,
            first_incumbent: false,
            node_order: NodeOrder::BestBound,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_pivots: usize,
    pub incumbents: usize,
    pub proven_optimal: bool,
    /// LP relaxation bound of each explored node (minimization sense),
    /// capped to keep memory flat on large runs.
    pub node_bounds: Vec<f64>,
    /// Root LP relaxation bound (minimization sense), NaN if root failed.
    pub root_bound: f64,
    /// One entry per integral incumbent: (that node's LP relaxation bound,
    /// the incumbent's minimized objective). The relaxation of a node always
    /// bounds any integral solution found inside it.
    pub incumbent_checks: Vec<(f64, f64)>,
}

const NODE_BOUNDS_CAP: usize = 100_000;

struct Node {
    bound: f64,
    depth: usize,
    /// (variable index, lower, upper) overrides accumulated on this path.
    fixings: Vec<(usize, f64, f64)>,
}

struct NodeKey {
    id: usize,
    bound: f64,
    depth: usize,
    order: NodeOrder,
}

impl PartialEq for NodeKey {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}
impl Eq for NodeKey {}
impl PartialOrd for NodeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for NodeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; we want the "best" node on top.
        match self.order {
            NodeOrder::BestBound => {
                // Smaller bound first; on bound plateaus prefer depth (a
                // breadth-first sweep over equal-bound nodes would visit
                // exponentially many before completing any one dive), then
                // smaller id.
                match other.bound.partial_cmp(&self.bound).unwrap_or(Ordering::Equal) {
                    Ordering::Equal => match self.depth.cmp(&other.depth) {
                        Ordering::Equal => other.id.cmp(&self.id),
                        o => o,
                    },
                    o => o,
                }
            }
            NodeOrder::DepthFirst => {
                // Deeper first, then smaller id (newest child of a dive wins).
                match self.depth.cmp(&other.depth) {
                    Ordering::Equal => other.id.cmp(&self.id),
                    o => o,
                }
            }
        }
    }
}

/// Builds the LP relaxation data for a model; binaries become continuous
/// within their bounds.
fn build_lp(model: &MilpModel) -> LpProblem {
    let n = model.num_vars();
    let m = model.num_constraints();
    let mut cols = vec![Vec::new(); n];
    let mut rhs = Vec::with_capacity(m);
    let mut slo = Vec::with_capacity(m);
    let mut shi = Vec::with_capacity(m);
    for (i, c) in model.constraints().iter().enumerate() {
        for (v, a) in c.expr.terms() {
            cols[v.0].push((i, *a));
        }
        rhs.push(c.rhs);
        match c.sense {
            Sense::Le => {
                slo.push(0.0);
                shi.push(f64::INFINITY);
            }
            Sense::Ge => {
                slo.push(f64::NEG_INFINITY);
                shi.push(0.0);
            }
            Sense::Eq => {
                slo.push(0.0);
                shi.push(0.0);
            }
        }
    }
    let sign = match model.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut cost = vec![0.0; n];
    for (v, c) in model.objective.terms() {
        cost[v.0] += sign * c;
    }
    LpProblem {
        ncols: n,
        nrows: m,
        cols,
        col_lower: model.variables().iter().map(|v| v.lower).collect(),
        col_upper: model.variables().iter().map(|v| v.upper).collect(),
        cost,
        rhs,
        slack_lower: slo,
        slack_upper: shi,
    }
}

fn solve_node(lp: &mut LpProblem, fixings: &[(usize, f64, f64)], pivot_budget: usize) -> LpOutcome {
    let mut saved = Vec::with_capacity(fixings.len());
    for &(j, lo, hi) in fixings {
        saved.push((j, lp.col_lower[j], lp.col_upper[j]));
        lp.col_lower[j] = lo;
        lp.col_upper[j] = hi;
    }
    let out = solve_lp(lp, pivot_budget);
    for &(j, lo, hi) in saved.iter().rev() {
        lp.col_lower[j] = lo;
        lp.col_upper[j] = hi;
    }
    out
}

/// Exact solve of a mixed-binary model. Deterministic given a fixed model
/// and configuration.
pub fn solve(model: &MilpModel, config: &SolveConfig) -> Solution {
    let mut lp = build_lp(model);
    let binaries: Vec<usize> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.id.0)
        .collect();
    let obj_sign = match model.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };

    let mut stats = SolveStats { root_bound: f64::NAN, ..Default::default() };
    let mut heap: BinaryHeap<NodeKey> = BinaryHeap::new();
    let mut pending: Vec<Option<Node>> = Vec::new();
    let mut next_id = 0usize;
    let push = |heap: &mut BinaryHeap<NodeKey>,
                    pending: &mut Vec<Option<Node>>,
                    next_id: &mut usize,
                    bound: f64,
                    depth: usize,
                    fixings: Vec<(usize, f64, f64)>,
                    order: NodeOrder| {
        let id = *next_id;
        *next_id += 1;
        pending.push(Some(Node { bound, depth, fixings }));
        heap.push(NodeKey { id, bound, depth, order });
    };

    push(&mut heap, &mut pending, &mut next_id, f64::NEG_INFINITY, 0, Vec::new(), config.node_order);

    let mut incumbent: Option<(Vec<f64>, f64)> = None; // (values, minimized objective)
    let mut budget_exhausted = false;
    let mut root_unbounded = false;
    let mut lp_trouble = false;

    while let Some(key) = heap.pop() {
        let node = match pending[key.id].take() {
            Some(n) => n,
            None => continue,
        };
        // Bound-based prune against the incumbent.
        if let Some((_, best)) = &incumbent {
            if node.bound >= *best - OBJ_TOL && node.bound.is_finite() {
                continue;
            }
        }
        if stats.nodes >= config.node_budget {
            budget_exhausted = true;
            break;
        }
        stats.nodes += 1;

        let out = solve_node(&mut lp, &node.fixings, config.pivot_budget);
        stats.lp_pivots += out.pivots;
        match out.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                // Binaries are bounded, so an unbounded relaxation means a
                // continuous recession direction shared by the whole problem.
                root_unbounded = true;
                break;
            }
            LpStatus::IterationLimit => {
                lp_trouble = true;
                continue;
            }
            LpStatus::Optimal => {}
        }
        if stats.node_bounds.len() < NODE_BOUNDS_CAP {
            stats.node_bounds.push(out.objective);
        }
        if node.depth == 0 {
            stats.root_bound = out.objective;
        }
        if let Some((_, best)) = &incumbent {
            if out.objective >= *best - OBJ_TOL {
                continue; // dominated
            }
        }

        // Most-fractional binary, ties by lowest variable id.
        let mut branch_var: Option<(usize, f64)> = None;
        for &j in &binaries {
            let v = out.values[j];
            let frac = (v - v.round()).abs();
            if frac > INT_TOL {
                let score = (v - v.floor() - 0.5).abs(); // smaller = more fractional
                match branch_var {
                    Some((_, s)) if s <= score => {}
                    _ => branch_var = Some((j, score)),
                }
            }
        }

        match branch_var {
            None => {
                // Integral: polish by re-solving with every binary pinned at
                // its rounded value, so indicator (big-M) rows hold exactly
                // in the reported assignment.
                let mut pins = node.fixings.clone();
                for &j in &binaries {
                    let v = out.values[j].round();
                    pins.push((j, v, v));
                }
                let polished = solve_node(&mut lp, &pins, config.pivot_budget);
                stats.lp_pivots += polished.pivots;
                let (vals, obj) = match polished.status {
                    LpStatus::Optimal => (polished.values, polished.objective),
                    _ => {
                        // Numerical corner; fall back to the raw point.
                        let mut vals = out.values.clone();
                        for &j in &binaries {
                            vals[j] = vals[j].round();
                        }
                        (vals, out.objective)
                    }
                };
                stats.incumbent_checks.push((out.objective, obj));
                let better = match &incumbent {
                    Some((_, best)) => obj < *best - OBJ_TOL,
                    None => true,
                };
                if better {
                    incumbent = Some((vals, obj));
                    stats.incumbents += 1;
                    if config.first_incumbent {
                        break;
                    }
                }
            }
            Some((j, _)) => {
                let mut down = node.fixings.clone();
                down.push((j, 0.0, 0.0));
                push(&mut heap, &mut pending, &mut next_id, out.objective, node.depth + 1, down, config.node_order);
                let mut up = node.fixings;
                up.push((j, 1.0, 1.0));
                push(&mut heap, &mut pending, &mut next_id, out.objective, node.depth + 1, up, config.node_order);
            }
        }
    }

    if root_unbounded {
        return Solution { status: SolveStatus::Unbounded, values: Vec::new(), objective: f64::NAN, stats };
    }

    let exhausted_cleanly = heap.is_empty() && !budget_exhausted && !lp_trouble;
    match incumbent {
        Some((values, min_obj)) => {
            stats.proven_optimal = exhausted_cleanly;
            let status = if exhausted_cleanly { SolveStatus::Optimal } else { SolveStatus::IterationLimit };
            Solution { status, values, objective: obj_sign * min_obj, stats }
        }
        None => {
            let status = if exhausted_cleanly { SolveStatus::Infeasible } else { SolveStatus::IterationLimit };
            Solution { status, values: Vec::new(), objective: f64::NAN, stats }
        }
    }
}
