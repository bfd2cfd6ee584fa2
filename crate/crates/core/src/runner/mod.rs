//! Experiment orchestration: config in, `trace.csv`, checkpoints,
//! `diagnostics.json` and `config.resolved` out.

mod checkpoint;
mod config;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{DiagnosticKind, DiagnosticsConfig, ExperimentConfig, OutputConfig};

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde_json::{json, Map, Value};

use crate::diagnostics::{self as diag, MonotonicityReport};
use crate::error::{Error, Result};
use crate::fields::PotentialKind;
use crate::flow::{self, FlowSolver, FlowTrace, Problem, Termination, TraceRecord};
use crate::linalg::Amb;
use crate::rng::substream;

pub const TRACE_COLUMNS: &str = "step,t,dt,E_total,E_dirichlet,E_B,E_V,sup_dphi2,sup_dtphi2,el_residual,onmanifold_residual,sup_distance";

/// Flow snapshots kept for the differential-inequality check.
const MAX_SNAPSHOTS: usize = 64;

/// Command-line overrides, applied before `config.resolved` is written so the
/// echo reproduces the run that actually happened.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub max_steps: Option<usize>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(d) = &o.output_dir {
            self.output.directory = d.clone();
        }
        if let Some(m) = o.max_steps {
            self.flow.max_steps = m;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.flow.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub termination: Termination,
    pub steps: usize,
    pub t: f64,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.termination)
    }
}

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => 0,
        Termination::MaxSteps => 2,
        Termination::StepFailure => 3,
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn trace_row(r: &TraceRecord) -> String {
    [
        r.step.to_string(),
        num(r.t),
        num(r.dt),
        opt(r.energy.total()),
        num(r.energy.dirichlet),
        opt(r.energy.b),
        num(r.energy.v),
        num(r.sup_dphi2),
        num(r.sup_dtphi2),
        num(r.el_residual),
        num(r.onmanifold_residual),
        num(r.sup_distance),
    ]
    .join(",")
}

/// Rows every `cadence` steps plus the final record.
pub fn trace_csv(trace: &FlowTrace, cadence: usize) -> String {
    let mut s = String::from(TRACE_COLUMNS);
    s.push('\n');
    let n = trace.records.len();
    for (k, r) in trace.records.iter().enumerate() {
        if r.step % cadence == 0 || k + 1 == n {
            s.push_str(&trace_row(r));
            s.push('\n');
        }
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn prepare_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    write(&dir, "config.resolved", &cfg.resolved())?;
    Ok(dir)
}

/// Point `sup_distance` is measured from: the centre of a quadratic
/// potential, the origin otherwise.
fn anchor(cfg: &ExperimentConfig) -> Amb {
    match &cfg.potential {
        PotentialKind::Quadratic { center, .. } => Amb::from(*center),
        _ => Amb::zeros(),
    }
}

fn derived_seed(seed: u64, name: &str) -> u64 {
    substream(seed, name).next_u64()
}

pub fn run_experiment(cfg: &ExperimentConfig, quiet: bool) -> Result<RunOutcome> {
    let problem = cfg.build_problem()?;
    let u0 = cfg.initial_map(problem.target.ambient_dim()).build(&problem)?;
    let dir = prepare_dir(cfg)?;
    let solver = FlowSolver::new(&problem, cfg.flow, u0)?.with_anchor(anchor(cfg));
    drive(cfg, &problem, solver, &dir, quiet)
}

/// Continues from a checkpoint written under the same physics configuration.
pub fn resume_experiment(chk: &Checkpoint, cfg: &ExperimentConfig, quiet: bool) -> Result<RunOutcome> {
    let problem = load(chk, cfg)?;
    let dir = prepare_dir(cfg)?;
    let solver = FlowSolver::resume(&problem, cfg.flow, chk.u.clone(), chk.t, chk.step, Some(chk.dt))?.with_anchor(anchor(cfg));
    drive(cfg, &problem, solver, &dir, quiet)
}

fn load(chk: &Checkpoint, cfg: &ExperimentConfig) -> Result<Problem> {
    let hash = cfg.config_hash();
    if chk.config_hash != hash {
        return Err(Error::Checkpoint(format!("config hash mismatch: checkpoint {} vs config {hash}", chk.config_hash)));
    }
    let problem = cfg.build_problem()?;
    if chk.ambient_dim != problem.target.ambient_dim() {
        return Err(Error::Checkpoint(format!("ambient dimension {} does not match the target ({})", chk.ambient_dim, problem.target.ambient_dim())));
    }
    problem.check_shape(&chk.u)?;
    Ok(problem)
}

fn drive(cfg: &ExperimentConfig, problem: &Problem, mut solver: FlowSolver, dir: &Path, quiet: bool) -> Result<RunOutcome> {
    let hash = cfg.config_hash();
    let q = problem.target.ambient_dim();
    let cadence = cfg.diagnostics.cadence;
    let every = cfg.output.checkpoint_every;
    let keep = cfg.diagnostics.which.contains(&DiagnosticKind::FlowBochner);
    let mut snapshots: VecDeque<(f64, Vec<Amb>)> = VecDeque::new();
    if keep {
        snapshots.push_back((solver.state().t, solver.state().u.clone()));
    }
    let mut io_error = None;
    let termination = solver.run_with(|s| {
        let step = s.step_count();
        if keep && step % cadence == 0 {
            if snapshots.len() == MAX_SNAPSHOTS {
                snapshots.pop_front();
            }
            snapshots.push_back((s.state().t, s.state().u.clone()));
        }
        if every > 0 && step % every == 0 && io_error.is_none() {
            let chk = checkpoint_of(s, &hash, q);
            if let Err(e) = chk.write(&dir.join(format!("checkpoint_{step:08}.chk"))) {
                io_error = Some(e);
            }
        }
        if !quiet && step % 1000 == 0 {
            eprintln!("step {step}  t = {:.6e}  residual = {:.3e}", s.state().t, s.residual());
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    write(dir, "trace.csv", &trace_csv(solver.trace(), cadence))?;
    checkpoint_of(&solver, &hash, q).write(&dir.join("final_state.chk"))?;

    let snaps: Vec<(f64, Vec<Amb>)> = equally_spaced_tail(snapshots.into());
    let mut report = Map::new();
    report.insert("termination".into(), termination.name().into());
    report.insert("steps".into(), solver.step_count().into());
    report.insert("t".into(), solver.state().t.into());
    report.insert("config_hash".into(), hash.clone().into());
    let records = evaluate(cfg, problem, &solver.state().u, Some((solver.trace(), &snaps)));
    report.insert("diagnostics".into(), Value::Object(records));
    write(dir, "diagnostics.json", &serde_json::to_string_pretty(&report).expect("json"))?;

    if !quiet {
        println!(
            "{}: {} steps, t = {:.6e}, residual = {:.3e}, output in {}",
            termination.name(),
            solver.step_count(),
            solver.state().t,
            solver.residual(),
            dir.display()
        );
    }
    Ok(RunOutcome {
        termination,
        steps: solver.step_count(),
        t: solver.state().t,
        output_dir: dir.to_path_buf(),
    })
}

fn checkpoint_of(s: &FlowSolver, hash: &str, q: usize) -> Checkpoint {
    Checkpoint {
        config_hash: hash.to_string(),
        step: s.step_count(),
        t: s.state().t,
        dt: s.dt(),
        ambient_dim: q,
        u: s.state().u.clone(),
    }
}

/// Longest run of snapshots at the end with a common time spacing.
fn equally_spaced_tail(snaps: Vec<(f64, Vec<Amb>)>) -> Vec<(f64, Vec<Amb>)> {
    let n = snaps.len();
    if n < 3 {
        return snaps;
    }
    let dt = snaps[n - 1].0 - snaps[n - 2].0;
    let mut start = n - 2;
    while start > 0 && ((snaps[start].0 - snaps[start - 1].0) - dt).abs() <= 1e-9 * dt.abs() {
        start -= 1;
    }
    snaps.into_iter().skip(start).collect()
}

/// Offline diagnostics on a saved state; writes `diagnostics.json`.
pub fn diagnose(chk: &Checkpoint, cfg: &ExperimentConfig) -> Result<Value> {
    let problem = load(chk, cfg)?;
    problem.check_on_manifold(&chk.u)?;
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut report = Map::new();
    report.insert("step".into(), chk.step.into());
    report.insert("t".into(), chk.t.into());
    report.insert("config_hash".into(), chk.config_hash.clone().into());
    report.insert("diagnostics".into(), Value::Object(evaluate(cfg, &problem, &chk.u, None)));
    let report = Value::Object(report);
    write(&dir, "diagnostics.json", &serde_json::to_string_pretty(&report).expect("json"))?;
    Ok(report)
}

pub fn eigen(cfg: &ExperimentConfig) -> Result<f64> {
    let mut s = crate::surface::DiscreteSurface::from_kind(cfg.domain)?;
    if let Some(r) = cfg.scalar_curvature_override {
        s = s.with_scalar_curvature_override(r);
    }
    s.first_eigenvalue()
}

fn monotonicity_json(r: &MonotonicityReport) -> Value {
    json!({
        "ratios": r.ratios.iter().map(|(rho, v)| json!({"radius": rho, "ratio": v})).collect::<Vec<_>>(),
        "potential_positive": r.potential_positive,
        "conformal_factor_ok": r.conformal_factor_ok,
        "eigenvalue_margin": r.eigenvalue_margin,
        "eigenvalue_ok": r.eigenvalue_ok,
        "hypotheses_hold": r.hypotheses_hold,
    })
}

fn constants_json(c: &flow::AprioriConstants) -> Value {
    json!({
        "ric": c.ric, "scalar_curvature": c.scalar_curvature, "hess_v": c.hess_v,
        "c1": c.c1, "c2": c.c2, "z_sup": c.z_sup, "nabla_z_sup": c.nabla_z_sup, "kappa": c.kappa,
    })
}

type Flow<'a> = (&'a FlowTrace, &'a [(f64, Vec<Amb>)]);

/// One record per requested diagnostic; failures are recorded as
/// `{"error": ...}` instead of aborting the report.
fn evaluate(cfg: &ExperimentConfig, problem: &Problem, u: &[Amb], flow: Option<Flow>) -> Map<String, Value> {
    let d = &cfg.diagnostics;
    let mut out = Map::new();
    for kind in &d.which {
        let rec = if kind.needs_trace() && flow.is_none() {
            Ok(json!({"unavailable": "needs a flow trace; only produced by run and resume"}))
        } else {
            one(cfg, problem, u, flow, *kind)
        };
        out.insert(kind.name().into(), rec.unwrap_or_else(|e| json!({"error": e.to_string()})));
    }
    out
}

fn one(cfg: &ExperimentConfig, problem: &Problem, u: &[Amb], flow: Option<Flow>, kind: DiagnosticKind) -> Result<Value> {
    let d = &cfg.diagnostics;
    let constants = || flow::a_priori_constants(problem, d.samples, d.sample_radius, derived_seed(cfg.seed, "field_sampling"));
    Ok(match kind {
        DiagnosticKind::Energy => {
            let e = diag::energy(problem, u)?;
            json!({"total": e.total(), "dirichlet": e.dirichlet, "b": e.b, "v": e.v})
        }
        DiagnosticKind::ElResidual => json!({"sup": diag::el_residual(problem, u)?.1}),
        DiagnosticKind::StressEnergy => {
            let (_, div) = diag::divergence_stress_energy(problem, u)?;
            json!({"divergence_sup": div, "trace_defect": diag::trace_defect(problem, u)?})
        }
        DiagnosticKind::SecondVariation => {
            let v = diag::minimizing_check(problem, u, d.directions, derived_seed(cfg.seed, "variation_directions"))?;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            json!({"normalized": v, "min": min})
        }
        DiagnosticKind::Bochner | DiagnosticKind::VBochner => {
            let r = if kind == DiagnosticKind::Bochner { diag::bochner_residual(problem, u)? } else { diag::v_bochner(problem, u)? };
            json!({"sup_substituted": r.sup_substituted, "sup_raw": r.sup_raw})
        }
        DiagnosticKind::Monotonicity => {
            let m = d.monotonicity.as_ref().ok_or_else(|| Error::InvalidArgument("no monotonicity table".into()))?;
            monotonicity_json(&diag::monotonicity_ratio(problem, u, m)?)
        }
        DiagnosticKind::Eigen => json!({"lambda1": problem.surface.first_eigenvalue()?}),
        DiagnosticKind::APriori => {
            let (trace, _) = flow.expect("checked by caller");
            let c = constants()?;
            let ratio = flow::apriori_audit(trace, &c);
            // ½|Z|² ≤ κ_N under both signs of κ_N
            let half_z2 = 0.5 * c.z_sup * c.z_sup;
            json!({
                "constants": constants_json(&c), "worst_ratio": ratio, "holds": ratio.map(|r| r <= 1.05),
                "half_z_squared": half_z2,
                "z_within_kappa": {"upper_bound": half_z2 <= c.kappa, "negated_upper_bound": half_z2 <= -c.kappa},
            })
        }
        DiagnosticKind::FlowBochner => {
            let (_, snaps) = flow.expect("checked by caller");
            let r = diag::flow_bochner_check(problem, snaps, &constants()?, d.kappa_reading)?;
            json!({
                "kappa": r.kappa, "fraction_dphi": r.fraction_dphi, "fraction_dtphi": r.fraction_dtphi,
                "worst_dphi": r.worst_dphi, "worst_dtphi": r.worst_dtphi, "checked": r.checked,
            })
        }
        DiagnosticKind::Confinement => {
            let (trace, _) = flow.expect("checked by caller");
            let lambda1 = problem.surface.first_eigenvalue()?;
            let r = flow::confinement_check(problem, trace, &anchor(cfg), lambda1, d.samples, d.sample_radius, derived_seed(cfg.seed, "field_sampling"));
            json!({
                "decay_constant": r.decay_constant, "decay_hypothesis": r.decay_hypothesis,
                "r_hess_v": r.r_hess_v, "lambda1": r.lambda1, "lambda_hypothesis": r.lambda_hypothesis,
                "sup_distance": r.sup_distance, "bounded": r.bounded, "asserted": r.asserted,
            })
        }
        DiagnosticKind::Convexity => {
            let (trace, _) = flow.expect("checked by caller");
            let (t, e): (Vec<f64>, Vec<f64>) = trace.records.iter().filter_map(|r| r.energy.total().map(|e| (r.t, e))).unzip();
            if t.len() != trace.records.len() {
                return Err(Error::InvalidField("energy needs B; only Ω was supplied".into()));
            }
            json!({"min_second_difference_late_half": diag::energy_convexity(&t, &e, 0.5)?})
        }
    })
}
