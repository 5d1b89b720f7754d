//! Shared test harness: seeded random formulas and traces, plus the
//! encoder-vs-monitor comparison drivers used by both the regression and
//! acceptance suites.
//!
//! Pairs are filtered so that every predicate stays at least `MU_MARGIN`
//! away from zero on the trace: the Boolean encoding bounds active
//! predicates away from zero by `eps`, so traces straddling the boundary
//! are outside the equivalence contract by design.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use stl_synth::encoder::{
    encode_loop, EncodingParams, FormulaEncoder, Grids, Mode, SemanticsKind,
};
use stl_synth::formula::{Formula, Interval, Predicate};
use stl_synth::milp::{Direction, LinExpr, MilpModel, SolveConfig, SolveStatus, VarKind};
use stl_synth::semantics::{bound_steps, finitely_satisfies, robustness, satisfies};
use stl_synth::trace::Run;

pub const MU_MARGIN: f64 = 1e-3;
pub const X_DIM: usize = 2;
pub const U_DIM: usize = 1;
pub const W_DIM: usize = 1;
pub const BOX: f64 = 4.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gen_pred(rng: &mut ChaCha8Rng) -> Predicate {
    let mut coeffs_x = vec![0.0; X_DIM];
    let mut coeffs_u = vec![0.0; U_DIM];
    let mut coeffs_w = vec![0.0; W_DIM];
    let terms = rng.random_range(1..=2);
    for _ in 0..terms {
        let c = *[-2.0, -1.0, 1.0, 2.0].choose(rng).unwrap();
        match rng.random_range(0..5) {
            0 | 1 | 2 => coeffs_x[rng.random_range(0..X_DIM)] += c,
            3 => coeffs_u[rng.random_range(0..U_DIM)] += c,
            _ => coeffs_w[rng.random_range(0..W_DIM)] += c,
        }
    }
    if coeffs_x.iter().chain(&coeffs_u).chain(&coeffs_w).all(|&c| c == 0.0) {
        coeffs_x[0] = 1.0;
    }
    // Generic offset keeps ties rare.
    let offset = rng.random_range(-6..=6) as f64 * 0.25 + 0.013;
    let mut p = Predicate { coeffs_x, coeffs_u, coeffs_w, offset };
    trim(&mut p.coeffs_x);
    trim(&mut p.coeffs_u);
    trim(&mut p.coeffs_w);
    p
}

fn trim(v: &mut Vec<f64>) {
    while v.last() == Some(&0.0) {
        v.pop();
    }
}

fn gen_interval(rng: &mut ChaCha8Rng, dt: f64, allow_unbounded: bool) -> Interval {
    let lo_idx = rng.random_range(0..=2) as f64;
    if allow_unbounded && rng.random_range(0..100) < 25 {
        return Interval::unbounded_from(lo_idx * dt).unwrap();
    }
    let len = rng.random_range(0..=3) as f64;
    // Occasionally a fractional endpoint exercises grid snapping; rarely an
    // empty window exercises the vacuous cases.
    let extra = match rng.random_range(0..10) {
        0 => 0.4 * dt,
        1 if len == 0.0 => return Interval::bounded(lo_idx * dt + 0.3 * dt, lo_idx * dt + 0.6 * dt).unwrap(),
        _ => 0.0,
    };
    Interval::bounded(lo_idx * dt, (lo_idx + len) * dt + extra).unwrap()
}

/// Formula over a bounded pool of distinct predicates (|P| <= pool size).
pub fn gen_formula_pool(
    rng: &mut ChaCha8Rng,
    depth: usize,
    dt: f64,
    allow_unbounded: bool,
    pool: &[Predicate],
) -> Formula {
    let leaf = |rng: &mut ChaCha8Rng| Formula::Pred(pool.choose(rng).unwrap().clone());
    if depth == 0 {
        return leaf(rng);
    }
    match rng.random_range(0..100) {
        0..35 => leaf(rng),
        35..45 => Formula::not(gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool)),
        45..60 => {
            let k = rng.random_range(2..=3);
            Formula::and(
                (0..k).map(|_| gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool)).collect(),
            )
        }
        60..72 => {
            let k = rng.random_range(2..=3);
            Formula::or(
                (0..k).map(|_| gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool)).collect(),
            )
        }
        72..83 => Formula::globally(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool),
        ),
        83..94 => Formula::eventually(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool),
        ),
        _ => Formula::until(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool),
            gen_formula_pool(rng, depth - 1, dt, allow_unbounded, pool),
        ),
    }
}

pub fn gen_pred_pool(rng: &mut ChaCha8Rng, size: usize) -> Vec<Predicate> {
    (0..size).map(|_| gen_pred(rng)).collect()
}

pub fn gen_formula(rng: &mut ChaCha8Rng, depth: usize, dt: f64, allow_unbounded: bool) -> Formula {
    if depth == 0 {
        return Formula::Pred(gen_pred(rng));
    }
    match rng.random_range(0..100) {
        0..35 => Formula::Pred(gen_pred(rng)),
        35..45 => Formula::not(gen_formula(rng, depth - 1, dt, allow_unbounded)),
        45..60 => {
            let k = rng.random_range(2..=3);
            Formula::and((0..k).map(|_| gen_formula(rng, depth - 1, dt, allow_unbounded)).collect())
        }
        60..72 => {
            let k = rng.random_range(2..=3);
            Formula::or((0..k).map(|_| gen_formula(rng, depth - 1, dt, allow_unbounded)).collect())
        }
        72..83 => Formula::globally(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula(rng, depth - 1, dt, allow_unbounded),
        ),
        83..94 => Formula::eventually(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula(rng, depth - 1, dt, allow_unbounded),
        ),
        _ => Formula::until(
            gen_interval(rng, dt, allow_unbounded),
            gen_formula(rng, depth - 1, dt, allow_unbounded),
            gen_formula(rng, depth - 1, dt, allow_unbounded),
        ),
    }
}

pub fn gen_states(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..=n)
        .map(|_| (0..X_DIM).map(|_| rng.random_range(-6..=6) as f64 * 0.5 + 0.007).collect())
        .collect()
}

pub fn gen_run(rng: &mut ChaCha8Rng, n: usize, dt: f64, lasso: bool) -> Run {
    let mut states = gen_states(rng, n);
    let inputs: Vec<Vec<f64>> =
        (0..n).map(|_| (0..U_DIM).map(|_| rng.random_range(-4..=4) as f64 * 0.5 + 0.003).collect()).collect();
    let w: Vec<Vec<f64>> =
        (0..n).map(|_| (0..W_DIM).map(|_| rng.random_range(-4..=4) as f64 * 0.5 + 0.009).collect()).collect();
    if lasso {
        let l = rng.random_range(1..=n);
        states[l - 1] = states[n].clone();
        let run = Run::new(states, inputs, w, dt).unwrap();
        run.with_loop(l).unwrap()
    } else {
        Run::new(states, inputs, w, dt).unwrap()
    }
}

/// True when every predicate of `phi` stays at least `MU_MARGIN` from zero
/// at every index of the run.
pub fn predicates_have_margin(phi: &Formula, run: &Run) -> bool {
    for p in phi.predicates() {
        for k in 0..=run.horizon() {
            let mu = p.eval(run.state(k), &run.input_or_zero(k), &run.disturbance_or_zero(k));
            if mu.abs() < MU_MARGIN {
                return false;
            }
        }
    }
    true
}

/// Free decision grids (no dynamics): states and inputs are independent
/// boxed variables. This is what lets a test pin an arbitrary trace.
pub fn free_grids(model: &mut MilpModel, n: usize, dt: f64, w: &[Vec<f64>]) -> Grids {
    let mut x = Vec::with_capacity(n + 1);
    for k in 0..=n {
        x.push(
            (0..X_DIM)
                .map(|i| {
                    model.add_variable(VarKind::Continuous, -BOX, BOX, format!("x_{k}_{i}")).unwrap()
                })
                .collect(),
        );
    }
    let mut u = Vec::with_capacity(n);
    for k in 0..n {
        u.push(
            (0..U_DIM)
                .map(|i| {
                    model.add_variable(VarKind::Continuous, -BOX, BOX, format!("u_{k}_{i}")).unwrap()
                })
                .collect(),
        );
    }
    Grids {
        x,
        u,
        w: w.to_vec(),
        x_bounds: vec![(-BOX, BOX); X_DIM],
        u_bounds: vec![(-BOX, BOX); U_DIM],
        dt,
    }
}

pub fn pin_trace(model: &mut MilpModel, grids: &Grids, run: &Run) {
    for (k, row) in grids.x.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            model.set_bounds(v, run.state(k)[i], run.state(k)[i]).unwrap();
        }
    }
    for (k, row) in grids.u.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            model.set_bounds(v, run.inputs()[k][i], run.inputs()[k][i]).unwrap();
        }
    }
}

/// One Boolean equivalence check: MILP feasibility of the pinned encoding
/// against the monitor verdict. Returns (milp_feasible, monitor_satisfied).
pub fn boolean_equivalence_case(phi: &Formula, run: &Run, mode: Mode) -> (bool, bool) {
    let n = run.horizon();
    let mut model = MilpModel::new();
    let grids = free_grids(&mut model, n, run.dt(), run.disturbances());
    pin_trace(&mut model, &grids, run);
    let loop_vars = if mode == Mode::Lasso {
        let ls = encode_loop(&mut model, &grids, 1.1).unwrap();
        let l = run.loop_index().expect("lasso case needs a lasso run");
        model.set_bounds(ls[l - 1], 1.0, 1.0).unwrap();
        ls
    } else {
        Vec::new()
    };
    let params = EncodingParams::new(n, mode, SemanticsKind::Boolean);
    let mut enc = FormulaEncoder::new(&mut model, &grids, &loop_vars, phi, params).unwrap();
    enc.encode_boolean().unwrap();
    drop(enc);
    let sol = model.solve(&SolveConfig::default());
    let feasible = matches!(sol.status, SolveStatus::Optimal);
    let sat = if mode == Mode::Lasso {
        finitely_satisfies(run, phi).unwrap()
    } else {
        satisfies(run, phi, 0).unwrap()
    };
    (feasible, sat)
}

/// One robustness equality check: solved root value against the monitor.
/// Returns (solved, monitored).
pub fn robust_equality_case(phi: &Formula, run: &Run, mode: Mode) -> (f64, f64) {
    let n = run.horizon();
    let mut model = MilpModel::new();
    let grids = free_grids(&mut model, n, run.dt(), run.disturbances());
    pin_trace(&mut model, &grids, run);
    let loop_vars = if mode == Mode::Lasso {
        let ls = encode_loop(&mut model, &grids, 1.1).unwrap();
        let l = run.loop_index().expect("lasso case needs a lasso run");
        model.set_bounds(ls[l - 1], 1.0, 1.0).unwrap();
        ls
    } else {
        Vec::new()
    };
    let mut params = EncodingParams::new(n, mode, SemanticsKind::Robust);
    params.robust_target = None;
    let mut enc = FormulaEncoder::new(&mut model, &grids, &loop_vars, phi, params).unwrap();
    let root = enc.encode_robust().unwrap();
    drop(enc);
    model.set_objective(LinExpr::term(root, 1.0), Direction::Maximize);
    let sol = model.solve(&SolveConfig::default());
    assert_eq!(sol.status, SolveStatus::Optimal, "pinned robust model must be feasible");
    let monitored = robustness(run, phi, 0).unwrap().0;
    (sol.value(root), monitored)
}

/// Robustness of every subformula at every decidable index; used to exclude
/// pairs whose subformula margins are inside the epsilon band.
pub fn min_subformula_margin(phi: &Formula, run: &Run) -> f64 {
    fn subformulas<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
        out.push(f);
        match f {
            Formula::Pred(_) => {}
            Formula::Not(c) | Formula::Globally(_, c) | Formula::Eventually(_, c) => {
                subformulas(c, out)
            }
            Formula::And(cs) | Formula::Or(cs) => {
                for c in cs {
                    subformulas(c, out);
                }
            }
            Formula::Until(_, a, b) => {
                subformulas(a, out);
                subformulas(b, out);
            }
        }
    }
    let mut subs = Vec::new();
    subformulas(phi, &mut subs);
    let mut margin = f64::INFINITY;
    let lasso = run.loop_index().is_some();
    for sub in subs {
        let max_k = if lasso {
            run.horizon()
        } else {
            match bound_steps(sub, run.dt()) {
                Ok(b) if b <= run.horizon() => run.horizon() - b,
                _ => continue,
            }
        };
        for k in 0..=max_k {
            if let Ok(r) = robustness(run, sub, k) {
                if !r.0.is_finite() {
                    // A vacuous (empty-window) subformula: the monitor
                    // reports +/- infinity, which the MILP represents by a
                    // finite stand-in. Outside the value-equality contract.
                    return 0.0;
                }
                margin = margin.min(r.0.abs());
            }
        }
    }
    margin
}

/// Generates a (formula, run) pair suitable for an equivalence check:
/// bounded horizons respected in finite mode, predicate margins enforced.
pub fn gen_pair(rng: &mut ChaCha8Rng, mode: Mode, max_depth: usize, max_n: usize) -> (Formula, Run) {
    loop {
        let n = rng.random_range(2..=max_n);
        let dt = *[0.25, 0.5, 1.0].choose(rng).unwrap();
        let depth = rng.random_range(1..=max_depth);
        let lasso = mode == Mode::Lasso;
        let phi = gen_formula(rng, depth, dt, lasso);
        if !lasso {
            match bound_steps(&phi, dt) {
                Ok(b) if b <= n => {}
                _ => continue,
            }
        }
        let run = gen_run(rng, n, dt, lasso);
        if !predicates_have_margin(&phi, &run) {
            continue;
        }
        return (phi, run);
    }
}

/// As [`gen_pair`] but with at most `max_preds` distinct predicates.
pub fn gen_pair_pooled(
    rng: &mut ChaCha8Rng,
    mode: Mode,
    max_depth: usize,
    max_n: usize,
    max_preds: usize,
) -> (Formula, Run) {
    loop {
        let n = rng.random_range(2..=max_n);
        let dt = *[0.25, 0.5, 1.0].choose(rng).unwrap();
        let depth = rng.random_range(1..=max_depth);
        let lasso = mode == Mode::Lasso;
        let pool_size = rng.random_range(1..=max_preds);
        let pool = gen_pred_pool(rng, pool_size);
        let phi = gen_formula_pool(rng, depth, dt, lasso, &pool);
        if !lasso {
            match bound_steps(&phi, dt) {
                Ok(b) if b <= n => {}
                _ => continue,
            }
        }
        let run = gen_run(rng, n, dt, lasso);
        if !predicates_have_margin(&phi, &run) {
            continue;
        }
        return (phi, run);
    }
}
