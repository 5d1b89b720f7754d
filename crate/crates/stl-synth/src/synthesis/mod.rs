//! Open-loop and receding-horizon controller synthesis.
//!
//! [`open_loop`] assembles loop (lasso mode), system, and formula
//! constraints into one model, minimizes the cost, and decodes the
//! optimizer's trajectory — which is then re-checked against the
//! independent monitor before being reported. [`open_loop_star`] is the
//! receding-horizon building block: the same solve without loop
//! constraints, with a committed input prefix pinned and per-offset
//! robustness floors. [`mpc`] drives it with the transient/stationary floor
//! schedule and commits one input per step.

mod mpc;

pub use mpc::{mpc, ExactPredictor, MpcConfig, MpcResult, StepDiagnostics};

use thiserror::Error;

use crate::encoder::{
    decode_run, encode_loop, encode_system, encode_trivial_system, EncodeError, EncodingParams,
    FormulaEncoder, Grids, Mode, SemanticsKind,
};
use crate::formula::Formula;
use crate::milp::{
    Direction, LinExpr, MilpError, MilpModel, Sense, SolveConfig, SolveStatus, VarId, VarKind,
};
use crate::semantics::{finitely_satisfies, robustness, satisfies, SemanticsError};
use crate::trace::{AffineSystem, Run, TraceError};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("no trajectory at this horizon (solver status {0:?})")]
    Infeasible(SolveStatus),
    #[error("receding-horizon step {step} infeasible (status {status:?})")]
    StepInfeasible { step: usize, status: SolveStatus },
    #[error("internal soundness failure: monitor rejects the synthesized run ({0})")]
    MonitorDisagrees(String),
    #[error("cost specification invalid: {0}")]
    BadCost(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// The plant under control: either affine dynamics with a known initial
/// state and disturbance sequence, or the "no dynamics" plant whose states
/// are free decisions mirrored by the inputs.
#[derive(Debug, Clone)]
pub enum Plant {
    Affine { sys: AffineSystem, x0: Vec<f64>, w: Vec<Vec<f64>> },
    Trivial { dims: usize, bound: f64, dt: f64 },
}

impl Plant {
    pub fn dt(&self) -> f64 {
        match self {
            Plant::Affine { sys, .. } => sys.dt,
            Plant::Trivial { dt, .. } => *dt,
        }
    }

    pub fn encode(&self, model: &mut MilpModel, n_steps: usize) -> Result<Grids, EncodeError> {
        match self {
            Plant::Affine { sys, x0, w } => {
                let mut w = w.clone();
                if w.len() < n_steps && sys.disturbance_dim() == 0 {
                    w.resize(n_steps, vec![]);
                }
                encode_system(model, sys, x0, &w, n_steps)
            }
            Plant::Trivial { dims, bound, dt } => {
                encode_trivial_system(model, *dims, *bound, *dt, n_steps)
            }
        }
    }
}

/// Cost functional over the decision grids.
#[derive(Debug, Clone)]
pub enum CostSpec {
    /// Sum of absolute input values over the horizon.
    L1InputNorm,
    /// Largest absolute input value over the horizon.
    LInfInputNorm,
    /// Weighted sum of states and inputs (weights per dimension, applied at
    /// every index).
    LinearStateInput { x_weights: Vec<f64>, u_weights: Vec<f64> },
    /// Maximize `weight * r_root` minus an optional linear part; requires
    /// the robust encoding.
    MaxRobustness { weight: f64, linear: Option<(Vec<f64>, Vec<f64>)> },
}

/// Installs the cost as a minimization objective. `robust_root` must be the
/// robustness root when the cost references it.
pub fn apply_cost(
    model: &mut MilpModel,
    grids: &Grids,
    cost: &CostSpec,
    robust_root: Option<VarId>,
) -> Result<(), SynthesisError> {
    let mut obj = LinExpr::new();
    match cost {
        CostSpec::L1InputNorm => {
            for (k, row) in grids.u.iter().enumerate() {
                for (i, &u) in row.iter().enumerate() {
                    let (lo, hi) = grids.u_bounds[i];
                    let cap = lo.abs().max(hi.abs());
                    let s = model.add_variable(
                        VarKind::Continuous,
                        0.0,
                        cap,
                        format!("uabs_{k}_{i}"),
                    )?;
                    model.add_constraint(LinExpr::term(s, 1.0).plus(u, -1.0), Sense::Ge, 0.0)?;
                    model.add_constraint(LinExpr::term(s, 1.0).plus(u, 1.0), Sense::Ge, 0.0)?;
                    obj.add(s, 1.0);
                }
            }
        }
        CostSpec::LInfInputNorm => {
            let cap = grids
                .u_bounds
                .iter()
                .map(|(lo, hi)| lo.abs().max(hi.abs()))
                .fold(0.0, f64::max);
            let s = model.add_variable(VarKind::Continuous, 0.0, cap, "uinf")?;
            for row in &grids.u {
                for &u in row {
                    model.add_constraint(LinExpr::term(s, 1.0).plus(u, -1.0), Sense::Ge, 0.0)?;
                    model.add_constraint(LinExpr::term(s, 1.0).plus(u, 1.0), Sense::Ge, 0.0)?;
                }
            }
            obj.add(s, 1.0);
        }
        CostSpec::LinearStateInput { x_weights, u_weights } => {
            for row in &grids.x {
                for (i, &x) in row.iter().enumerate() {
                    if let Some(&w) = x_weights.get(i) {
                        obj.add(x, w);
                    }
                }
            }
            for row in &grids.u {
                for (i, &u) in row.iter().enumerate() {
                    if let Some(&w) = u_weights.get(i) {
                        obj.add(u, w);
                    }
                }
            }
        }
        CostSpec::MaxRobustness { weight, linear } => {
            let root = robust_root.ok_or_else(|| {
                SynthesisError::BadCost("maximizing robustness requires the robust encoding".into())
            })?;
            obj.add(root, -weight.abs());
            if let Some((xw, uw)) = linear {
                for row in &grids.x {
                    for (i, &x) in row.iter().enumerate() {
                        if let Some(&w) = xw.get(i) {
                            obj.add(x, w);
                        }
                    }
                }
                for row in &grids.u {
                    for (i, &u) in row.iter().enumerate() {
                        if let Some(&w) = uw.get(i) {
                            obj.add(u, w);
                        }
                    }
                }
            }
        }
    }
    model.set_objective(obj, Direction::Minimize);
    Ok(())
}

#[derive(Debug)]
pub struct OpenLoopResult {
    pub run: Run,
    pub objective: f64,
    pub status: SolveStatus,
    /// True when the solver proved optimality (vs. stopping at a feasible
    /// incumbent under a budget or first-incumbent configuration).
    pub proven_optimal: bool,
    pub monitor_satisfied: bool,
    pub monitor_robustness: f64,
    pub binaries: usize,
    pub continuous: usize,
    pub constraints: usize,
    pub solve_nodes: usize,
}

/// Monitor re-check shared by every synthesis path: Boolean runs must
/// satisfy the formula; robust runs must reach the target within 1e-6.
fn monitor_check(
    run: &Run,
    phi: &Formula,
    params: &EncodingParams,
) -> Result<(bool, f64), SynthesisError> {
    let sat = if run.loop_index().is_some() {
        finitely_satisfies(run, phi)?
    } else {
        satisfies(run, phi, 0)?
    };
    let rho = robustness(run, phi, 0)?.0;
    match params.semantics {
        SemanticsKind::Boolean => {
            if !sat {
                return Err(SynthesisError::MonitorDisagrees(
                    "Boolean-encoded run does not satisfy the formula".into(),
                ));
            }
        }
        SemanticsKind::Robust => {
            if let Some(target) = params.robust_target {
                if rho < target - 1e-6 {
                    return Err(SynthesisError::MonitorDisagrees(format!(
                        "robustness {rho} below target {target}"
                    )));
                }
            }
        }
    }
    Ok((sat, rho))
}

/// Open-loop synthesis: loop constraints (lasso mode), system constraints,
/// formula constraints, cost. The decoded run is certified by the monitor
/// before being returned.
pub fn open_loop(
    plant: &Plant,
    phi: &Formula,
    cost: &CostSpec,
    params: &EncodingParams,
    solve_cfg: &SolveConfig,
) -> Result<OpenLoopResult, SynthesisError> {
    let mut model = MilpModel::new();
    let grids = plant.encode(&mut model, params.n_steps)?;
    let loop_vars = match params.mode {
        Mode::Lasso => encode_loop(&mut model, &grids, params.big_m_pad)?,
        Mode::Finite => Vec::new(),
    };
    let mut enc = FormulaEncoder::new(&mut model, &grids, &loop_vars, phi, params.clone())?;
    let robust_root = match params.semantics {
        SemanticsKind::Boolean => {
            enc.encode_boolean()?;
            None
        }
        SemanticsKind::Robust => Some(enc.encode_robust()?),
    };
    drop(enc);
    apply_cost(&mut model, &grids, cost, robust_root)?;

    let solution = model.solve(solve_cfg);
    if !solution.has_assignment() {
        return Err(SynthesisError::Infeasible(solution.status));
    }
    let loop_ref = if params.mode == Mode::Lasso { Some(&loop_vars[..]) } else { None };
    let run = decode_run(&solution, &grids, loop_ref)?;
    let (sat, rho) = monitor_check(&run, phi, params)?;
    Ok(OpenLoopResult {
        run,
        objective: solution.objective,
        status: solution.status,
        proven_optimal: solution.stats.proven_optimal,
        monitor_satisfied: sat,
        monitor_robustness: rho,
        binaries: model.num_binaries(),
        continuous: model.num_continuous(),
        constraints: model.num_constraints(),
        solve_nodes: solution.stats.nodes,
    })
}

/// One receding-horizon subproblem: a finite-mode robust solve over a
/// `2H`-step window with the committed input prefix pinned and robustness
/// floors `r_i >= floors[i]` at offsets `0..=H`. Returns the full planned
/// input window plus the per-offset achieved robustness.
#[allow(clippy::too_many_arguments)]
pub struct StarOutcome {
    pub inputs: Vec<Vec<f64>>,
    pub window_run: Run,
    pub objective: f64,
    pub achieved: Vec<f64>,
    pub status: SolveStatus,
}

#[allow(clippy::too_many_arguments)]
pub fn open_loop_star(
    plant: &Plant,
    anchor_state: Option<&[f64]>,
    w_window: &[Vec<f64>],
    two_h: usize,
    phi_mpc: &Formula,
    cost: &CostSpec,
    floors: &[f64],
    u_old: &[Vec<f64>],
    params: &EncodingParams,
    solve_cfg: &SolveConfig,
    soften: bool,
) -> Result<StarOutcome, SynthesisError> {
    let h = floors.len().saturating_sub(1);
    debug_assert!(u_old.len() <= h || h == 0);
    let mut model = MilpModel::new();
    let window_plant = match plant {
        Plant::Affine { sys, .. } => Plant::Affine {
            sys: sys.clone(),
            x0: anchor_state.expect("affine window needs an anchor state").to_vec(),
            w: w_window.to_vec(),
        },
        Plant::Trivial { .. } => plant.clone(),
    };
    let mut wparams = params.clone();
    wparams.n_steps = two_h;
    wparams.mode = Mode::Finite;
    wparams.semantics = SemanticsKind::Robust;
    wparams.robust_target = None; // floors replace the root constraint
    let grids = window_plant.encode(&mut model, two_h)?;

    // Pin the committed prefix.
    for (k, u) in u_old.iter().enumerate() {
        for (i, &v) in u.iter().enumerate() {
            model.set_bounds(grids.u[k][i], v, v)?;
        }
    }

    let mut enc = FormulaEncoder::new(&mut model, &grids, &[], phi_mpc, wparams.clone())?;
    let mut floor_vars = Vec::with_capacity(floors.len());
    for i in 0..floors.len() {
        floor_vars.push(enc.robust_var_at(i)?);
    }
    drop(enc);

    let mut slack_objective = LinExpr::new();
    for (i, (&floor, &(r, _, _))) in floors.iter().zip(&floor_vars).enumerate() {
        if soften {
            let s = model.add_variable(
                VarKind::Continuous,
                0.0,
                f64::INFINITY,
                format!("floor_slack_{i}"),
            )?;
            // r >= floor - s
            model.add_constraint(LinExpr::term(r, 1.0).plus(s, 1.0), Sense::Ge, floor)?;
            slack_objective.add(s, 1.0);
        } else {
            model.add_constraint(LinExpr::term(r, 1.0), Sense::Ge, floor)?;
        }
    }
    if soften {
        // Diagnostic mode: minimize the total floor violation instead of
        // the nominal cost.
        model.set_objective(slack_objective, Direction::Minimize);
    } else {
        apply_cost(&mut model, &grids, cost, None)?;
    }

    let solution = model.solve(solve_cfg);
    if !solution.has_assignment() {
        return Err(SynthesisError::Infeasible(solution.status));
    }
    let run = decode_run(&solution, &grids, None)?;
    let achieved = floor_vars.iter().map(|&(r, _, _)| solution.value(r)).collect();
    Ok(StarOutcome {
        inputs: run.inputs().to_vec(),
        window_run: run,
        objective: solution.objective,
        achieved,
        status: solution.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    fn trivial3() -> Plant {
        Plant::Trivial { dims: 3, bound: 10.0, dt: 0.025 }
    }

    fn robust_params(n: usize, target: f64) -> EncodingParams {
        let mut p = EncodingParams::new(n, Mode::Finite, SemanticsKind::Robust);
        p.robust_target = Some(target);
        p
    }

    #[test]
    fn phi1_open_loop_robust_closed_form() {
        let phi = parse("G[0,0.1] (x1 > 0.1)").unwrap();
        let out = open_loop(
            &trivial3(),
            &phi,
            &CostSpec::L1InputNorm,
            &robust_params(30, 0.1),
            &SolveConfig::default(),
        )
        .unwrap();
        assert!((out.objective - 1.0).abs() < 1e-6, "cost {}", out.objective);
        assert!(out.monitor_robustness >= 0.1 - 1e-6);
        // x1 = 0.2 on the window, 0 elsewhere.
        for k in 0..=4 {
            assert!((out.run.state(k)[0] - 0.2).abs() < 1e-6);
        }
        for k in 5..30 {
            assert!(out.run.state(k)[0].abs() < 1e-6);
        }
    }

    #[test]
    fn phi2_both_windows_active() {
        // Desk-size instance of the two-window conjunction; the L1 closed
        // form is horizon-independent once the window fits.
        let phi = parse("(G[0,0.1] (x1 > 0.1)) & (G[0,0.1] (x2 < -0.5))").unwrap();
        let out = open_loop(
            &Plant::Trivial { dims: 3, bound: 2.0, dt: 0.025 },
            &phi,
            &CostSpec::L1InputNorm,
            &robust_params(10, 0.1),
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(out.monitor_robustness >= 0.1 - 1e-6);
        for k in 0..=4 {
            assert!(out.run.state(k)[0] >= 0.2 - 1e-6);
            assert!(out.run.state(k)[1] <= -0.6 + 1e-6);
        }
        // L1-minimal: 5 * (0.2 + 0.6) = 4.
        assert!((out.objective - 4.0).abs() < 1e-6, "cost {}", out.objective);
        assert!(out.proven_optimal);
    }

    #[test]
    fn contradictory_boxes_infeasible() {
        let phi = parse("(G[0,1] (x1 > 0.1)) & (G[0,1] (!(x1 > 0.05)))").unwrap();
        let mut params = EncodingParams::new(10, Mode::Finite, SemanticsKind::Boolean);
        params.robust_target = None;
        let err = open_loop(
            &Plant::Trivial { dims: 1, bound: 10.0, dt: 0.5 },
            &phi,
            &CostSpec::L1InputNorm,
            &params,
            &SolveConfig::default(),
        );
        assert!(matches!(err, Err(SynthesisError::Infeasible(_))));
    }

    #[test]
    fn star_with_inactive_floors_reduces_to_open_loop() {
        let phi = parse("G[0,2] (x1 > 0.1)").unwrap();
        let floors = vec![-1e6; 3]; // H = 2, all floors slack
        let out = open_loop_star(
            &Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 },
            None,
            &[],
            4,
            &phi,
            &CostSpec::L1InputNorm,
            &floors,
            &[],
            &robust_params(4, 0.0),
            &SolveConfig::default(),
            false,
        )
        .unwrap();
        // Nothing is enforced, so the cheapest signal is zero.
        assert!(out.objective.abs() < 1e-7);
    }

    #[test]
    fn star_pins_committed_prefix_exactly() {
        let phi = parse("G[0,2] (x1 > 0.1)").unwrap();
        let u_old = vec![vec![0.7], vec![0.3]];
        let out = open_loop_star(
            &Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 },
            None,
            &[],
            4,
            &phi,
            &CostSpec::L1InputNorm,
            &[0.0, 0.0, 0.0],
            &u_old,
            &robust_params(4, 0.0),
            &SolveConfig::default(),
            false,
        )
        .unwrap();
        assert_eq!(out.inputs[0], vec![0.7]);
        assert_eq!(out.inputs[1], vec![0.3]);
    }

    #[test]
    fn star_floor_violating_pin_is_infeasible() {
        // Committed prefix forces x1 = 0 at offset 0, floor demands > 0.1.
        let phi = parse("G[0,1] (x1 > 0.1)").unwrap();
        let u_old = vec![vec![0.0]];
        let err = open_loop_star(
            &Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 },
            None,
            &[],
            4,
            &phi,
            &CostSpec::L1InputNorm,
            &[0.0, 0.0],
            &u_old,
            &robust_params(4, 0.0),
            &SolveConfig::default(),
            false,
        );
        assert!(matches!(err, Err(SynthesisError::Infeasible(_))));
    }

    #[test]
    fn max_robustness_beats_linear_cost_runs() {
        let phi = parse("G[0,0.1] (x1 > 0.1)").unwrap();
        let mut params = robust_params(10, 0.1);
        params.n_steps = 10;
        let plant = Plant::Trivial { dims: 1, bound: 2.0, dt: 0.025 };
        let linear = open_loop(&plant, &phi, &CostSpec::L1InputNorm, &params, &SolveConfig::default())
            .unwrap();
        let maxrob = open_loop(
            &plant,
            &phi,
            &CostSpec::MaxRobustness { weight: 1.0, linear: None },
            &params,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!(maxrob.monitor_robustness >= linear.monitor_robustness - 1e-9);
        // With the box at 2.0, max robustness drives x1 to the box edge.
        assert!(maxrob.monitor_robustness > 1.0);
    }
}
