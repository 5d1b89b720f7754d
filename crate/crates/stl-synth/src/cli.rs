//! Command-line front end: `monitor`, `encode`, `synth`, and `mpc`
//! subcommands over the trace/system/LP file formats.
//!
//! Every synthesis path re-runs the independent monitor on its own output
//! and refuses to report success unless the monitor agrees. Identical
//! configuration and inputs produce byte-identical trace and LP outputs
//! (diagnostics files carry wall-clock timings and are exempt).
//!
//! Exit codes: 0 success (monitor satisfied), 1 property violated,
//! 2 usage/parse/IO error, 3 infeasible synthesis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::encoder::{
    encode_loop, encode_snn_lp, EncodingParams, FormulaEncoder, Mode, SemanticsKind,
};
use crate::formula::{parse, Formula};
use crate::milp::{MilpModel, NodeOrder, SolveConfig};
use crate::semantics::{robustness, satisfies};
use crate::synthesis::{
    apply_cost, mpc, open_loop, CostSpec, ExactPredictor, MpcConfig, Plant, SynthesisError,
};
use crate::trace::{read_run_csv, read_system_json, write_run_csv, DisturbanceTrace};

#[derive(Parser, Debug)]
#[command(
    name = "stl-synth",
    about = "Synthesize control inputs satisfying signal temporal logic specifications via MILP",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Finite,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SemArg {
    Bool,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostArg {
    L1,
    Linf,
    Maxrob,
}

#[derive(Debug, Parser)]
struct ProblemArgs {
    /// Formula text, or a path to a file containing it.
    #[arg(long)]
    formula: String,
    /// Path to a system JSON file (A, B, E, c, x_bounds, u_bounds, dt).
    #[arg(long, conflicts_with = "trivial")]
    system: Option<PathBuf>,
    /// Use the trivial plant x = u with this many dimensions.
    #[arg(long)]
    trivial: Option<usize>,
    /// Box half-width for the trivial plant.
    #[arg(long, default_value_t = 10.0)]
    x_bound: f64,
    /// Horizon index N (states run 0..=N); for `mpc`, the total step count.
    #[arg(short = 'N', long = "horizon", default_value_t = 30)]
    n: usize,
    /// Sampling period in seconds (trivial plant; system files carry their own).
    #[arg(long, default_value_t = 0.025)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Finite)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SemArg::Bool)]
    semantics: SemArg,
    /// Robustness target for the robust encoding's root constraint.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long, value_enum, default_value_t = CostArg::L1)]
    cost: CostArg,
    /// Initial state for an affine system, comma-separated.
    #[arg(long)]
    x0: Option<String>,
    /// Disturbance trace CSV (header w1..we, one row per step).
    #[arg(long)]
    w: Option<PathBuf>,
    /// Branch-and-bound node budget.
    #[arg(long, default_value_t = 1_000_000)]
    nodes: usize,
    /// Stop at the first integral incumbent (feasibility-first, depth-first
    /// dive); the result is monitor-checked but not proven optimal.
    #[arg(long)]
    first_incumbent: bool,
    /// Seed recorded in output headers (reserved for seeded workflows).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate satisfaction and robustness of a formula over a trace file.
    Monitor {
        #[arg(long)]
        formula: String,
        #[arg(long)]
        trace: PathBuf,
        /// Evaluation index.
        #[arg(long, default_value_t = 0)]
        at: usize,
    },
    /// Compile the problem to an LP file plus a variable-map sidecar.
    Encode {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Lower a safe negation-normal formula to a pure LP (0 binaries).
        #[arg(long)]
        snn_lp: bool,
        /// LP output path.
        #[arg(long, default_value = "model.lp")]
        export_lp: PathBuf,
    },
    /// Open-loop synthesis: solve and write the certified trace.
    Synth {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Trace CSV output path.
        #[arg(long, default_value = "synth_trace.csv")]
        out: PathBuf,
        /// Also export the model as an LP file.
        #[arg(long)]
        export_lp: Option<PathBuf>,
    },
    /// Receding-horizon synthesis for G(phi_mpc); formula must be
    /// `G[0,inf) (...)`.
    Mpc {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = "mpc_trace.csv")]
        out: PathBuf,
        /// Diagnose infeasible steps by minimizing floor violations
        /// instead of aborting.
        #[arg(long)]
        soften: bool,
    },
}

fn read_formula(text_or_path: &str) -> Result<Formula, String> {
    let text = if Path::new(text_or_path).exists() {
        std::fs::read_to_string(text_or_path).map_err(|e| format!("reading formula file: {e}"))?
    } else {
        text_or_path.to_string()
    };
    parse(text.trim()).map_err(|e| e.to_string())
}

fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect()
}

fn read_disturbances(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header && line.split(',').any(|c| c.trim().parse::<f64>().is_err()) {
            saw_header = true; // header row with w1..we labels
            continue;
        }
        saw_header = true;
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        rows.push(vals.map_err(|e| format!("disturbance file: {e}"))?);
    }
    Ok(rows)
}

struct Problem {
    phi: Formula,
    plant: Plant,
    params: EncodingParams,
    cost: CostSpec,
    solve: SolveConfig,
    config_line: String,
}

impl ProblemArgs {
    fn build(&self) -> Result<Problem, String> {
        let phi = read_formula(&self.formula)?;
        let plant = match (&self.system, self.trivial) {
            (Some(path), None) => {
                let sys = read_system_json(
                    &std::fs::read_to_string(path).map_err(|e| e.to_string())?,
                )
                .map_err(|e| e.to_string())?;
                let x0 = match &self.x0 {
                    Some(s) => parse_vector(s)?,
                    None => return Err("affine systems need --x0".into()),
                };
                let w = match &self.w {
                    Some(p) => read_disturbances(p)?,
                    None if sys.disturbance_dim() == 0 => vec![],
                    None => vec![vec![0.0; sys.disturbance_dim()]; self.n],
                };
                Plant::Affine { sys, x0, w }
            }
            (None, Some(dims)) => {
                Plant::Trivial { dims, bound: self.x_bound, dt: self.dt }
            }
            (None, None) => return Err("provide --system <file> or --trivial <dims>".into()),
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        let mode = match self.mode {
            ModeArg::Finite => Mode::Finite,
            ModeArg::Lasso => Mode::Lasso,
        };
        let semantics = match self.semantics {
            SemArg::Bool => SemanticsKind::Boolean,
            SemArg::Robust => SemanticsKind::Robust,
        };
        let mut params = EncodingParams::new(self.n, mode, semantics);
        if let Some(t) = self.target {
            params.robust_target = Some(t);
        }
        let cost = match self.cost {
            CostArg::L1 => CostSpec::L1InputNorm,
            CostArg::Linf => CostSpec::LInfInputNorm,
            CostArg::Maxrob => CostSpec::MaxRobustness { weight: 1.0, linear: None },
        };
        if matches!(cost, CostSpec::MaxRobustness { .. }) && semantics == SemanticsKind::Boolean {
            return Err("--cost maxrob requires --semantics robust".into());
        }
        let solve = SolveConfig {
            node_budget: self.nodes,
            first_incumbent: self.first_incumbent,
            node_order: if self.first_incumbent { NodeOrder::DepthFirst } else { NodeOrder::BestBound },
            ..SolveConfig::default()
        };
        let mut config_line = String::new();
        write!(
            config_line,
            "formula={:?} plant={} N={} dt={} mode={:?} semantics={:?} target={:?} cost={:?} nodes={} first_incumbent={} seed={}",
            phi.to_string(),
            match &plant {
                Plant::Affine { .. } => "affine".to_string(),
                Plant::Trivial { dims, bound, .. } => format!("trivial{dims}(±{bound})"),
            },
            self.n,
            plant.dt(),
            mode,
            semantics,
            params.robust_target,
            self.cost,
            self.nodes,
            self.first_incumbent,
            self.seed,
        )
        .unwrap();
        Ok(Problem { phi, plant, params, cost, solve, config_line })
    }
}

fn cmd_monitor(formula: &str, trace: &Path, at: usize) -> i32 {
    let phi = match read_formula(formula) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let text = match std::fs::read_to_string(trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading trace: {e}");
            return 2;
        }
    };
    let run = match read_run_csv(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let sat = match satisfies(&run, &phi, at) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let rho = match robustness(&run, &phi, at) {
        Ok(r) => r.0,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    println!("{}, rho={:+.9}", if sat { "sat" } else { "unsat" }, rho);
    if sat {
        0
    } else {
        1
    }
}

fn cmd_encode(problem: &ProblemArgs, snn_lp: bool, export_lp: &Path) -> i32 {
    let p = match problem.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut model = MilpModel::new();
    let grids = match p.plant.encode(&mut model, p.params.n_steps) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut artifacts = Vec::new();
    let built = (|| -> Result<(), String> {
        if snn_lp {
            let root = encode_snn_lp(
                &mut model,
                &grids,
                &p.phi,
                p.params.robust_target,
                p.params.big_m_pad,
            )
            .map_err(|e| e.to_string())?;
            artifacts.push((p.phi.to_string(), 0usize, model.var(root).name.clone()));
        } else {
            let loop_vars = if p.params.mode == Mode::Lasso {
                encode_loop(&mut model, &grids, p.params.big_m_pad).map_err(|e| e.to_string())?
            } else {
                Vec::new()
            };
            let mut enc = FormulaEncoder::new(&mut model, &grids, &loop_vars, &p.phi, p.params.clone())
                .map_err(|e| e.to_string())?;
            match p.params.semantics {
                SemanticsKind::Boolean => {
                    enc.encode_boolean().map_err(|e| e.to_string())?;
                }
                SemanticsKind::Robust => {
                    enc.encode_robust().map_err(|e| e.to_string())?;
                }
            }
            for a in enc.take_artifacts() {
                artifacts.push((a.subformula, a.time, a.var_name));
            }
        }
        apply_cost(&mut model, &grids, &p.cost, None)
            .or_else(|e| match e {
                // maxrob needs the root; encode emits the model without it.
                SynthesisError::BadCost(_) => Ok(()),
                other => Err(other.to_string()),
            })
            .map_err(|e: String| e)?;
        Ok(())
    })();
    if let Err(e) = built {
        eprintln!("error: {e}");
        return 2;
    }

    let lp_text = format!("\\ config: {}\n{}", p.config_line, model.export_lp());
    if let Err(e) = std::fs::write(export_lp, lp_text) {
        eprintln!("error: writing {}: {e}", export_lp.display());
        return 2;
    }
    let mut sidecar = String::from("subformula,t,variable\n");
    for (f, t, v) in &artifacts {
        sidecar.push_str(&format!("{:?},{t},{v}\n", f));
    }
    let sidecar_path = export_lp.with_extension("vars.csv");
    if let Err(e) = std::fs::write(&sidecar_path, sidecar) {
        eprintln!("error: writing {}: {e}", sidecar_path.display());
        return 2;
    }
    println!(
        "binaries: {}\ncontinuous: {}\nconstraints: {}",
        model.num_binaries(),
        model.num_continuous(),
        model.num_constraints()
    );
    println!("wrote {} and {}", export_lp.display(), sidecar_path.display());
    0
}

fn cmd_synth(problem: &ProblemArgs, out: &Path, export_lp: Option<&Path>) -> i32 {
    let p = match problem.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(lp_path) = export_lp {
        // Re-encode for export so the written model matches the solve.
        let rc = cmd_encode(problem, false, lp_path);
        if rc != 0 {
            return rc;
        }
    }
    match open_loop(&p.plant, &p.phi, &p.cost, &p.params, &p.solve) {
        Ok(result) => {
            let header = vec![
                format!("config: {}", p.config_line),
                format!(
                    "objective={} status={:?} proven_optimal={} monitor_rho={:+.9}",
                    result.objective, result.status, result.proven_optimal, result.monitor_robustness
                ),
            ];
            let text = write_run_csv(&result.run, &header);
            if let Err(e) = std::fs::write(out, text) {
                eprintln!("error: writing {}: {e}", out.display());
                return 2;
            }
            println!(
                "sat, rho={:+.9}, objective={}, binaries={}, constraints={}, nodes={}",
                result.monitor_robustness,
                result.objective,
                result.binaries,
                result.constraints,
                result.solve_nodes
            );
            println!("wrote {}", out.display());
            0
        }
        Err(SynthesisError::Infeasible(_)) => {
            eprintln!("no trajectory at this horizon");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_mpc(problem: &ProblemArgs, out: &Path, soften: bool) -> i32 {
    let p = match problem.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    // The specification shape is G[0,inf) (phi_mpc).
    let phi_mpc = match &p.phi {
        Formula::Globally(iv, body) if iv.is_unbounded() && iv.lo() == 0.0 => (**body).clone(),
        _ => {
            eprintln!("error: mpc expects a formula of the shape G[0,inf) (...)");
            return 2;
        }
    };
    let total = p.params.n_steps;
    let w_len = total + 2 * 16; // generous cover; predictor validates windows
    let predictor = match &p.plant {
        Plant::Affine { sys, w, .. } if sys.disturbance_dim() > 0 => {
            let mut w = w.clone();
            if w.len() < w_len {
                eprintln!(
                    "error: disturbance trace has {} rows; mpc over {} steps needs at least {} (total + 2H)",
                    w.len(),
                    total,
                    total + 2
                );
                return 2;
            }
            w.truncate(w_len.max(total));
            ExactPredictor::new(DisturbanceTrace::new(w))
        }
        _ => ExactPredictor::new(DisturbanceTrace::zeros(w_len, 0)),
    };
    let mut config = MpcConfig::new(total);
    config.cost = p.cost.clone();
    config.soften = soften;
    config.solve = p.solve.clone();
    if let Some(t) = p.params.robust_target {
        config.active_floor = t;
    }
    match mpc(&p.plant, &phi_mpc, &predictor, &config) {
        Ok(result) => {
            let ok = result.monitor_failures.is_empty();
            let header = vec![
                format!("config: {}", p.config_line),
                format!("h_steps={} monitor_ok={}", result.h_steps, ok),
            ];
            let text = write_run_csv(&result.run, &header);
            if let Err(e) = std::fs::write(out, text) {
                eprintln!("error: writing {}: {e}", out.display());
                return 2;
            }
            let mut diag = String::from("step,status,wall_ms,objective,achieved_floors\n");
            for s in &result.steps {
                let floors: Vec<String> = s.achieved.iter().map(|v| format!("{v:.9}")).collect();
                diag.push_str(&format!(
                    "{},{:?},{:.3},{:.9},{}\n",
                    s.step,
                    s.status,
                    s.wall_ms,
                    s.objective,
                    floors.join(";")
                ));
            }
            let diag_path = out.with_extension("diag.csv");
            if let Err(e) = std::fs::write(&diag_path, diag) {
                eprintln!("error: writing {}: {e}", diag_path.display());
                return 2;
            }
            println!(
                "{} steps, H={}, monitor {}",
                result.steps.len(),
                result.h_steps,
                if ok { "certified every window" } else { "REJECTED the realized run" }
            );
            println!("wrote {} and {}", out.display(), diag_path.display());
            if ok {
                0
            } else {
                1
            }
        }
        Err(SynthesisError::StepInfeasible { step, .. }) => {
            eprintln!("no trajectory at this horizon (step {step} infeasible)");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Parses arguments from the environment and runs the selected command,
/// returning the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match &cli.command {
        Command::Monitor { formula, trace, at } => cmd_monitor(formula, trace, *at),
        Command::Encode { problem, snn_lp, export_lp } => cmd_encode(problem, *snn_lp, export_lp),
        Command::Synth { problem, out, export_lp } => {
            cmd_synth(problem, out, export_lp.as_deref())
        }
        Command::Mpc { problem, out, soften } => cmd_mpc(problem, out, *soften),
    }
}
