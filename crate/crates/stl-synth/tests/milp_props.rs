//! Solver correctness properties: branch-and-bound against exhaustive
//! binary enumeration, LP relaxation bounding, and solution re-checking by
//! direct substitution.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use stl_synth::milp::{
    solve, Direction, LinExpr, MilpModel, Sense, SolveConfig, SolveStatus, VarId, VarKind,
    FEAS_TOL, INT_TOL,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random mixed-binary model: `nb` binaries, `nc` continuous, `rows`
/// constraints with small integer-ish coefficients.
fn random_model(rng: &mut ChaCha8Rng, nb: usize, nc: usize, rows: usize) -> MilpModel {
    let mut m = MilpModel::new();
    let mut vars = Vec::new();
    for i in 0..nb {
        vars.push(m.add_binary(format!("b{i}")).unwrap());
    }
    for i in 0..nc {
        let lo = rng.random_range(-3..=0) as f64;
        let hi = lo + rng.random_range(1..=5) as f64;
        vars.push(m.add_variable(VarKind::Continuous, lo, hi, format!("c{i}")).unwrap());
    }
    for _ in 0..rows {
        let mut expr = LinExpr::new();
        let terms = rng.random_range(1..=3.min(vars.len()));
        for _ in 0..terms {
            let v = vars[rng.random_range(0..vars.len())];
            let c = *[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].choose(rng).unwrap();
            expr.add(v, c);
        }
        let sense = *[Sense::Le, Sense::Le, Sense::Ge, Sense::Ge, Sense::Eq].choose(rng).unwrap();
        // Equality rows made loose enough to keep many instances feasible.
        let rhs = match sense {
            Sense::Eq => rng.random_range(-2..=2) as f64,
            _ => rng.random_range(-4..=6) as f64,
        };
        expr_nonempty(&mut expr, &vars);
        m.add_constraint(expr, sense, rhs).unwrap();
    }
    let mut obj = LinExpr::new();
    for &v in &vars {
        let c = rng.random_range(-4..=4) as f64;
        obj.add(v, c);
    }
    let dir = if rng.random_bool(0.5) { Direction::Minimize } else { Direction::Maximize };
    m.set_objective(obj, dir);
    m
}

fn expr_nonempty(expr: &mut LinExpr, vars: &[VarId]) {
    if expr.is_empty() {
        expr.add(vars[0], 1.0);
    }
}

/// Enumeration oracle: for every assignment of the binaries, fix them and
/// solve the continuous remainder as an LP; the best objective over all
/// assignments is the exact optimum.
fn enumerate_optimum(model: &MilpModel) -> Option<f64> {
    let binaries: Vec<VarId> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.id)
        .collect();
    let sign = match model.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << binaries.len()) {
        let mut fixed = model.clone();
        for (i, &b) in binaries.iter().enumerate() {
            let v = ((mask >> i) & 1) as f64;
            // Respect tightened binary bounds (a fixed binary stays fixed).
            let (lo, hi) = (fixed.var(b).lower, fixed.var(b).upper);
            if v < lo || v > hi {
                fixed = MilpModel::new(); // sentinel: infeasible assignment
                break;
            }
            fixed.set_bounds(b, v, v).unwrap();
        }
        if fixed.num_vars() == 0 {
            continue;
        }
        let sol = solve(&fixed, &SolveConfig::default());
        if sol.status == SolveStatus::Optimal {
            let obj = sol.objective;
            best = Some(match best {
                None => obj,
                Some(b) if sign * obj < sign * b => obj,
                Some(b) => b,
            });
        }
    }
    best
}

#[test]
fn branch_and_bound_matches_enumeration_on_random_models() {
    let mut r = rng(0xACE1);
    let mut feasible_seen = 0;
    for case in 0..100 {
        let nb = r.random_range(1..=8);
        let nc = r.random_range(0..=3);
        let rows = r.random_range(1..=6);
        let model = random_model(&mut r, nb, nc, rows);
        let sol = solve(&model, &SolveConfig::default());
        let oracle = enumerate_optimum(&model);
        match (sol.status, oracle) {
            (SolveStatus::Optimal, Some(best)) => {
                assert!(
                    (sol.objective - best).abs() < 1e-7,
                    "case {case}: b&b {} vs enumeration {best}",
                    sol.objective
                );
                feasible_seen += 1;
            }
            (SolveStatus::Infeasible, None) => {}
            (s, o) => panic!("case {case}: b&b {s:?} vs enumeration {o:?}"),
        }
    }
    assert!(feasible_seen >= 20, "generator too restrictive: {feasible_seen} feasible");
}

#[test]
fn knapsack_matches_pure_binary_exhaustion() {
    // 10-item knapsack; the oracle enumerates assignments directly with no
    // LP involved.
    let mut r = rng(0xACE2);
    for _ in 0..10 {
        let n = 10;
        let weights: Vec<f64> = (0..n).map(|_| r.random_range(1..=9) as f64).collect();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(1..=9) as f64).collect();
        let cap = weights.iter().sum::<f64>() * 0.4;

        let mut m = MilpModel::new();
        let vars: Vec<VarId> = (0..n).map(|i| m.add_binary(format!("item{i}")).unwrap()).collect();
        let wrow: LinExpr = vars.iter().zip(&weights).map(|(&v, &w)| (v, w)).collect();
        m.add_constraint(wrow, Sense::Le, cap).unwrap();
        let obj: LinExpr = vars.iter().zip(&values).map(|(&v, &c)| (v, c)).collect();
        m.set_objective(obj, Direction::Maximize);
        let sol = solve(&m, &SolveConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal);

        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
            if w <= cap {
                let v: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum();
                best = best.max(v);
            }
        }
        assert!((sol.objective - best).abs() < 1e-9, "b&b {} vs brute {best}", sol.objective);
    }
}

#[test]
fn optimal_solutions_satisfy_all_constraints_by_substitution() {
    let mut r = rng(0xACE3);
    for _ in 0..60 {
        let (nb, nc, rows) = (r.random_range(0..=6), r.random_range(1..=4), r.random_range(1..=5));
        let model = random_model(&mut r, nb, nc, rows);
        let sol = solve(&model, &SolveConfig::default());
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        let (row_violation, int_violation) = model.violation(&sol.values);
        assert!(row_violation <= FEAS_TOL * 10.0, "row violation {row_violation}");
        assert!(int_violation <= INT_TOL, "integrality violation {int_violation}");
    }
}

#[test]
fn lp_relaxation_bounds_the_milp_optimum() {
    let mut r = rng(0xACE4);
    for _ in 0..60 {
        let (nb, nc, rows) = (r.random_range(1..=8), r.random_range(0..=3), r.random_range(1..=5));
        let model = random_model(&mut r, nb, nc, rows);
        let sol = solve(&model, &SolveConfig::default());
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        let sign = match model.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        // The root relaxation bounds the global optimum, and each node's
        // relaxation bounds any integral incumbent found inside it.
        let minimized = sign * sol.objective;
        assert!(sol.stats.root_bound <= minimized + 1e-7, "root bound above the optimum");
        assert!(!sol.stats.incumbent_checks.is_empty());
        for (i, (bound, obj)) in sol.stats.incumbent_checks.iter().enumerate() {
            assert!(
                bound <= &(obj + 1e-7),
                "incumbent {i}: node bound {bound} above its integral objective {obj}"
            );
        }
    }
}

#[test]
fn determinism_same_model_same_answer() {
    let mut r = rng(0xACE5);
    let model = random_model(&mut r, 6, 3, 5);
    let a = solve(&model, &SolveConfig::default());
    let b = solve(&model, &SolveConfig::default());
    assert_eq!(a.status, b.status);
    if a.status == SolveStatus::Optimal {
        assert_eq!(a.values, b.values);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.stats.nodes, b.stats.nodes);
    }
}

#[test]
fn first_incumbent_is_feasible_and_bounded_by_optimum() {
    let mut r = rng(0xACE6);
    for _ in 0..30 {
        let model = random_model(&mut r, 6, 2, 4);
        let exact = solve(&model, &SolveConfig::default());
        if exact.status != SolveStatus::Optimal {
            continue;
        }
        let first = solve(
            &model,
            &SolveConfig {
                first_incumbent: true,
                node_order: stl_synth::milp::NodeOrder::DepthFirst,
                ..SolveConfig::default()
            },
        );
        assert!(first.has_assignment());
        let (rv, iv) = model.violation(&first.values);
        assert!(rv <= FEAS_TOL * 10.0 && iv <= INT_TOL);
        let sign = match model.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        assert!(
            sign * first.objective >= sign * exact.objective - 1e-7,
            "incumbent {} beats optimum {}",
            first.objective,
            exact.objective
        );
    }
}

#[test]
fn node_budget_reports_iteration_limit() {
    let mut r = rng(0xACE7);
    // A model with enough binaries that one node cannot finish it.
    let model = random_model(&mut r, 10, 2, 6);
    let sol = solve(&model, &SolveConfig { node_budget: 1, ..SolveConfig::default() });
    assert!(matches!(sol.status, SolveStatus::IterationLimit | SolveStatus::Infeasible | SolveStatus::Optimal));
    // With a budget of one node, optimality can only be claimed if the root
    // relaxation was already integral.
    if sol.status == SolveStatus::Optimal {
        assert!(sol.stats.nodes <= 1);
    }
}
