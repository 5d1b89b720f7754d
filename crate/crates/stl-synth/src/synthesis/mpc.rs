//! Receding-horizon synthesis for invariance specifications `G phi_mpc`.
//!
//! Each step solves a robust subproblem over a sliding `2H`-step window
//! (`H` = the bound of `phi_mpc` in samples), commits only the first free
//! input, and re-anchors. The window always contains the recent committed
//! history as a pinned prefix, so robustness floors at offsets `0..=H`
//! enforce satisfaction of `phi_mpc` at every absolute step up to the
//! commit point.
//!
//! The schedule has two phases. In the *transient* phase (steps `t <= H`)
//! the window is anchored at time zero, the pinned prefix is everything
//! committed so far, and only floors `0..=t` are active (the rest sit at a
//! provably slack `-M`). From step `H+1` on (*stationary* phase) the anchor
//! slides to `t - H`, the pinned prefix holds exactly the last `H`
//! committed inputs, and every floor is active.
//!
//! Disturbances come from an exact predictor; its window always matches
//! the ground truth, which is the assumption behind the soundness claim.
//! After the loop, the realized trajectory is swept with the independent
//! monitor at every offset it can decide.

use std::time::Instant;

use super::{open_loop_star, CostSpec, Plant, SynthesisError};
use crate::encoder::{EncodingParams, Mode, SemanticsKind};
use crate::formula::Formula;
use crate::milp::{SolveConfig, SolveStatus};
use crate::semantics::{bound_steps, satisfies};
use crate::trace::{DisturbanceTrace, Run, TraceError};

/// Exact disturbance predictor backed by a ground-truth trace: the window
/// it returns always matches what the plant will experience.
#[derive(Debug, Clone)]
pub struct ExactPredictor {
    truth: DisturbanceTrace,
}

impl ExactPredictor {
    pub fn new(truth: DisturbanceTrace) -> Self {
        Self { truth }
    }

    pub fn window(&self, start: usize, len: usize) -> Result<Vec<Vec<f64>>, TraceError> {
        Ok(self.truth.window(start, len)?.to_vec())
    }

    pub fn at(&self, k: usize) -> &[f64] {
        self.truth.at(k)
    }
}

#[derive(Debug, Clone)]
pub struct MpcConfig {
    pub total_steps: usize,
    pub cost: CostSpec,
    pub eps: f64,
    pub big_m_pad: f64,
    /// Robustness floor value used for active offsets. Defaults to the
    /// epsilon margin: a floor of exactly zero would let the optimizer sit
    /// on the predicate boundary, which counts as a violation under the
    /// strict semantics. Raise it to demand real robustness slack.
    pub active_floor: f64,
    /// Diagnostic mode: minimize total floor violation instead of aborting
    /// on an infeasible step.
    pub soften: bool,
    pub solve: SolveConfig,
}

impl MpcConfig {
    pub fn new(total_steps: usize) -> Self {
        Self {
            total_steps,
            cost: CostSpec::L1InputNorm,
            eps: 1e-4,
            big_m_pad: 1.1,
            active_floor: 1e-4,
            soften: false,
            solve: SolveConfig::default(),
        }
    }
}

/// One row per receding-horizon step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step: usize,
    pub status: SolveStatus,
    pub wall_ms: f64,
    pub objective: f64,
    /// Achieved robustness at window offsets 0..=H.
    pub achieved: Vec<f64>,
    /// Active floor values at the same offsets.
    pub floors: Vec<f64>,
}

#[derive(Debug)]
pub struct MpcResult {
    /// Realized closed-loop trajectory over `total_steps` inputs.
    pub run: Run,
    pub steps: Vec<StepDiagnostics>,
    /// Window bound `H` in samples.
    pub h_steps: usize,
    /// Offsets `k` where the post-hoc monitor sweep found a violation of
    /// `phi_mpc`; empty on a sound run.
    pub monitor_failures: Vec<usize>,
}

/// Runs the receding-horizon loop for the specification `G phi_mpc`.
/// `phi_mpc` must be bounded. Aborts with [`SynthesisError::StepInfeasible`]
/// if a subproblem has no solution (unless softened).
pub fn mpc(
    plant: &Plant,
    phi_mpc: &Formula,
    predictor: &ExactPredictor,
    config: &MpcConfig,
) -> Result<MpcResult, SynthesisError> {
    let dt = plant.dt();
    let h = bound_steps(phi_mpc, dt)?.max(1);
    let two_h = 2 * h;
    let total = config.total_steps;
    assert!(total >= two_h, "total_steps must cover at least one window (2H = {two_h})");

    // Provably slack floor: below any reachable robustness magnitude.
    let slack_floor = -big_robustness_scale(plant, phi_mpc, config.big_m_pad);

    let mut params = EncodingParams::new(two_h, Mode::Finite, SemanticsKind::Robust);
    params.eps = config.eps;
    params.big_m_pad = config.big_m_pad;
    params.robust_target = None;

    let mut committed_u: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut realized_x: Vec<Vec<f64>> = Vec::with_capacity(total + 1);
    match plant {
        Plant::Affine { x0, .. } => realized_x.push(x0.clone()),
        Plant::Trivial { .. } => {}
    }
    let mut steps = Vec::with_capacity(total);
    let mut last_window: Option<Run> = None;

    for t in 0..total {
        let anchor = t.saturating_sub(h);
        let pinned = t - anchor;
        let mut floors = vec![config.active_floor; h + 1];
        if t < h {
            for f in floors.iter_mut().skip(t + 1) {
                *f = slack_floor;
            }
        }
        let w_window = match plant {
            Plant::Affine { sys, .. } if sys.disturbance_dim() > 0 => {
                predictor.window(anchor, two_h)?
            }
            _ => vec![vec![]; two_h],
        };
        let anchor_state: Option<Vec<f64>> = match plant {
            Plant::Affine { .. } => Some(realized_x[anchor].clone()),
            Plant::Trivial { .. } => None,
        };
        let u_old = &committed_u[anchor..t];
        // Window-consistency identity: the pinned prefix is everything
        // committed so far in the transient phase and exactly the last H
        // inputs once stationary.
        debug_assert!(if t <= h { u_old.len() == t } else { u_old.len() == h });

        let started = Instant::now();
        let outcome = open_loop_star(
            plant,
            anchor_state.as_deref(),
            &w_window,
            two_h,
            phi_mpc,
            &config.cost,
            &floors,
            u_old,
            &params,
            &config.solve,
            config.soften,
        )
        .map_err(|e| match e {
            SynthesisError::Infeasible(status) => SynthesisError::StepInfeasible { step: t, status },
            other => other,
        })?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;

        let commit = outcome.inputs[pinned].clone();
        steps.push(StepDiagnostics {
            step: t,
            status: outcome.status,
            wall_ms,
            objective: outcome.objective,
            achieved: outcome.achieved.clone(),
            floors: floors.clone(),
        });

        match plant {
            Plant::Affine { sys, .. } => {
                let w_t = if sys.disturbance_dim() > 0 {
                    predictor.at(t).to_vec()
                } else {
                    vec![]
                };
                let next = sys.step(&realized_x[t], &commit, &w_t);
                realized_x.push(next);
            }
            Plant::Trivial { .. } => {
                realized_x.push(commit.clone());
            }
        }
        committed_u.push(commit);
        last_window = Some(outcome.window_run);
    }

    // Assemble the realized run. The trivial plant mirrors inputs into
    // states and needs one final state: take it from the last window plan.
    let (states, dims) = match plant {
        Plant::Affine { .. } => (realized_x, 0),
        Plant::Trivial { dims, .. } => {
            let window = last_window.as_ref().expect("total_steps >= 1");
            let offset = (total - 1) - (total - 1).saturating_sub(h) + 1;
            let mut states = realized_x;
            states.push(window.state(offset).to_vec());
            (states, *dims)
        }
    };
    let _ = dims;
    let disturbances: Vec<Vec<f64>> = match plant {
        Plant::Affine { sys, .. } if sys.disturbance_dim() > 0 => {
            (0..total).map(|k| predictor.at(k).to_vec()).collect()
        }
        _ => vec![vec![]; total],
    };
    let run = Run::new(states, committed_u, disturbances, dt)?;

    // Post-hoc soundness sweep: the realized trajectory must satisfy
    // phi_mpc at every offset whose window fits.
    let mut monitor_failures = Vec::new();
    for k in 0..=total.saturating_sub(h) {
        if !satisfies(&run, phi_mpc, k)? {
            monitor_failures.push(k);
        }
    }

    Ok(MpcResult { run, steps, h_steps: h, monitor_failures })
}

/// Magnitude bound on any robustness value reachable under the plant boxes;
/// `-scale` is a provably slack floor.
fn big_robustness_scale(plant: &Plant, phi: &Formula, pad: f64) -> f64 {
    let (x_bounds, u_bounds): (Vec<(f64, f64)>, Vec<(f64, f64)>) = match plant {
        Plant::Affine { sys, .. } => (sys.x_bounds.clone(), sys.u_bounds.clone()),
        Plant::Trivial { dims, bound, .. } => {
            (vec![(-bound, *bound); *dims], vec![(-bound, *bound); *dims])
        }
    };
    let mut scale = 1.0_f64;
    for p in phi.predicates() {
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
        fold(&p.coeffs_x, &x_bounds);
        fold(&p.coeffs_u, &u_bounds);
        // Disturbance contributions are bounded by the predictor values;
        // widen generously since this only needs to be an upper bound.
        let w_mag: f64 = p.coeffs_w.iter().map(|c| c.abs() * 1e3).sum();
        scale = scale.max(lo.abs() + w_mag).max(hi.abs() + w_mag);
    }
    scale * pad + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::trace::{DisturbanceTrace, Matrix};

    #[test]
    fn trivial_plant_invariance_sweeps_clean() {
        let plant = Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 };
        let phi = parse("G[0,3] (x1 > 0.1)").unwrap();
        let predictor = ExactPredictor::new(DisturbanceTrace::zeros(64, 0));
        let config = MpcConfig::new(40);
        let out = mpc(&plant, &phi, &predictor, &config).unwrap();
        assert_eq!(out.h_steps, 3);
        assert_eq!(out.steps.len(), 40);
        assert!(out.monitor_failures.is_empty(), "violations at {:?}", out.monitor_failures);
        for k in 0..40 {
            assert!(out.run.state(k)[0] > 0.1, "x at {k} = {}", out.run.state(k)[0]);
        }
    }

    #[test]
    fn h_one_degenerates_to_per_step_feasibility() {
        let plant = Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 };
        let phi = parse("x1 > 0.1").unwrap(); // bound 0 -> H clamps to 1
        let predictor = ExactPredictor::new(DisturbanceTrace::zeros(64, 0));
        let config = MpcConfig::new(10);
        let out = mpc(&plant, &phi, &predictor, &config).unwrap();
        assert!(out.monitor_failures.is_empty());
        for k in 0..10 {
            assert!(out.run.state(k)[0] > 0.1);
        }
    }

    #[test]
    fn committed_inputs_never_change() {
        // The pinned prefix must round-trip exactly through each solve.
        let plant = Plant::Trivial { dims: 1, bound: 10.0, dt: 1.0 };
        let phi = parse("G[0,2] (x1 > 0.5)").unwrap();
        let predictor = ExactPredictor::new(DisturbanceTrace::zeros(64, 0));
        let config = MpcConfig::new(12);
        let out = mpc(&plant, &phi, &predictor, &config).unwrap();
        // Realized inputs all satisfy the floor-implied margin.
        for u in out.run.inputs() {
            assert!(u[0] > 0.5);
        }
    }

    #[test]
    fn disturbance_driven_heating_preheats_for_occupancy() {
        // x' = 0.5 x + 10 u, occupancy arrives at step 6 as disturbance
        // channel w1 (no physical effect); comfort x1 > 18 when occupied.
        let sys = crate::trace::AffineSystem {
            a: Matrix::from_rows(vec![vec![0.5]]).unwrap(),
            b: Matrix::from_rows(vec![vec![10.0]]).unwrap(),
            e: Matrix::from_rows(vec![vec![0.0]]).unwrap(),
            c: vec![0.0],
            x_bounds: vec![(0.0, 30.0)],
            u_bounds: vec![(0.0, 1.0)],
            u_integral: vec![],
            dt: 1.0,
        };
        let plant = Plant::Affine { sys, x0: vec![0.0], w: vec![] };
        // occ => comfortable: !(w1 > 0) | (x1 > 18), always over the window.
        // Occupancy is +/-1 so the implication has real robustness margins
        // on both branches.
        let phi = parse("G[0,4] (!(w1 > 0) | x1 > 18)").unwrap();
        let occupancy: Vec<Vec<f64>> =
            (0..64).map(|k| vec![if (6..=20).contains(&k) { 1.0 } else { -1.0 }]).collect();
        let predictor = ExactPredictor::new(DisturbanceTrace::new(occupancy));
        let config = MpcConfig::new(24);
        let out = mpc(&plant, &phi, &predictor, &config).unwrap();
        assert!(out.monitor_failures.is_empty(), "violations at {:?}", out.monitor_failures);
        // Occupied steps within the checked range are comfortable.
        for k in 6..=20 {
            assert!(out.run.state(k)[0] > 18.0, "T at {k} = {}", out.run.state(k)[0]);
        }
        // The controller must have preheated before occupancy.
        assert!(out.run.state(5)[0] > 10.0);
    }
}
