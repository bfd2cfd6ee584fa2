//! End-to-end acceptance suite. Every check prints one PASS/FAIL line; the
//! binary exits non-zero if any check fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use bosonic_flow::diagnostics::*;
use bosonic_flow::fields::{FieldPack, Poly, PotentialKind, TwoFormKind};
use bosonic_flow::flow::*;
use bosonic_flow::linalg::{amb, Amb};
use bosonic_flow::runner::{self, ExperimentConfig};
use bosonic_flow::surface::DiscreteSurface;
use bosonic_flow::target::{EmbeddedTarget, TargetKind};

// tolerances
const ENERGY_RATIO: (f64, f64) = (3.0, 5.0);
const GRADIENT_IDENTITY: f64 = 1e-2;
const CMC_RESIDUAL: f64 = 0.05;
const CMC_STOP: f64 = 1e-6;
const TRACE_IDENTITY: f64 = 1e-10;
const SECOND_VARIATION_REL: f64 = 1e-2;
const EXACT_BOCHNER: f64 = 1e-8;
const BOCHNER_DECAY: f64 = 1.7;
const CONFINEMENT_STEPS: usize = 10_000;
const LAMBDA1_REL: f64 = 0.01;
const APRIORI_SLACK: f64 = 1.05;
/// log-scale rounding allowed at the point that pins the fitted rate
const ENVELOPE_ROUNDING: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn problem(s: DiscreteSurface, t: TargetKind, v: PotentialKind, b: TwoFormKind) -> Problem {
    let t = EmbeddedTarget::new(t).unwrap();
    let f = FieldPack::new(t.ambient_dim(), v, b).unwrap();
    Problem::new(s, t, f).unwrap()
}

fn torus(n: usize) -> DiscreteSurface {
    DiscreteSurface::torus(n, 1.0, 1.0).unwrap()
}

fn sphere(k: usize) -> DiscreteSurface {
    DiscreteSurface::sphere(k).unwrap()
}

fn reversed_sphere() -> BaseMap {
    BaseMap::RadialSphere { radius: 1.0, orientation: -1.0 }
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[0] / w[1]).collect()
}

// ---------------------------------------------------------------------------
// converged runs of the three canonical configurations, shared by several checks

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Canonical {
    /// torus → S², perturbed equator, no fields
    Equator,
    /// torus → Clifford torus, perturbed product of circles, no fields
    Clifford,
    /// torus → S³, perturbed equator, Ω = vol(S³)
    Sphere3Volume,
}

const CANONICAL: [Canonical; 3] = [Canonical::Equator, Canonical::Clifford, Canonical::Sphere3Volume];
const RESOLUTIONS: [usize; 3] = [32, 64, 128];

struct Converged {
    problem: Problem,
    termination: Termination,
    u: Vec<Amb>,
    trace: FlowTrace,
    seconds: f64,
}

impl Canonical {
    fn problem(self, n: usize) -> (Problem, InitialMap) {
        let (t, b, base, comps) = match self {
            Canonical::Equator => (TargetKind::Sphere2, TwoFormKind::Zero, BaseMap::Equator, vec![0, 1]),
            Canonical::Clifford => (TargetKind::CliffordTorus, TwoFormKind::Zero, BaseMap::TorusWrap, vec![0, 1, 2, 3]),
            Canonical::Sphere3Volume => (TargetKind::Sphere3, TwoFormKind::ConstantVolume { f: 1.0 }, BaseMap::Equator, vec![0, 1]),
        };
        (problem(torus(n), t, PotentialKind::Zero, b), InitialMap::perturbed(base, 7, 0.05, comps))
    }

    /// Stopping threshold shrinks like h² so that the remaining flow
    /// velocity stays below the discretization error.
    fn converged(self, n: usize) -> Arc<Converged> {
        static CACHE: OnceLock<Mutex<HashMap<(Canonical, usize), Arc<Converged>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().unwrap().get(&(self, n)) {
            return c.clone();
        }
        let (p, init) = self.problem(n);
        let stop = 1e-6 * (32.0 / n as f64).powi(2);
        let params = FlowParams { cfl_fraction: 0.9, stop_residual: stop, max_steps: 200_000, ..Default::default() };
        let clock = Instant::now();
        let mut s = FlowSolver::new(&p, params, init.build(&p).unwrap()).unwrap();
        let termination = s.run();
        let seconds = clock.elapsed().as_secs_f64();
        let (state, trace) = s.into_parts();
        let c = Arc::new(Converged {
            problem: p,
            termination,
            u: state.u,
            trace,
            seconds,
        });
        cache.lock().unwrap().insert((self, n), c.clone());
        c
    }
}

// ---------------------------------------------------------------------------

fn energy_convergence() -> Outcome {
    let err: Vec<f64> = [32, 64]
        .iter()
        .map(|&n| {
            let p = problem(torus(n), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero);
            let u = InitialMap::plain(BaseMap::Equator).build(&p).unwrap();
            (p.energy(&u).unwrap().dirichlet - 2.0 * PI * PI).abs()
        })
        .collect();
    let r = err[0] / err[1];
    outcome(
        (ENERGY_RATIO.0..=ENERGY_RATIO.1).contains(&r),
        format!("equator energy error {:.3e} -> {:.3e} (n=32 -> 64), ratio {r:.3}", err[0], err[1]),
    )
}

/// Worst relative defect of `ΔE/Δt = -∫|∂t u|²` over the first `steps`
/// steps, with `∫|∂t u|²` taken at the start of each step.
fn identity_defect(p: &Problem, u0: Vec<Amb>, cfl: f64, steps: usize) -> f64 {
    let params = FlowParams { cfl_fraction: cfl, max_steps: steps, stop_residual: 1e-300, ..Default::default() };
    let mut s = FlowSolver::new(p, params, u0).unwrap();
    let area = p.surface.area_weights().to_vec();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let e0 = s.energy().total().unwrap();
        let dissipation: f64 = s.rhs().iter().zip(&area).map(|(r, a)| a * r.norm_squared()).sum();
        let t0 = s.state().t;
        s.step().unwrap();
        let rate = (s.energy().total().unwrap() - e0) / (s.state().t - t0);
        worst = worst.max((rate + dissipation).abs() / rate.abs());
    }
    worst
}

fn gradient_flow_identity() -> Outcome {
    let runs: [(&str, Problem, InitialMap); 2] = [
        (
            "perturbed equator",
            problem(torus(32), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero),
            InitialMap::perturbed(BaseMap::Equator, 7, 0.05, vec![0, 1]),
        ),
        (
            "radial B in R3",
            problem(sphere(3), TargetKind::Euclidean3, PotentialKind::Zero, TwoFormKind::Radial { f: 2.0 }),
            InitialMap::perturbed(BaseMap::Constant { point: [0.0; 4] }, 7, 1.0, vec![0, 1, 2]),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p, init) in &runs {
        let u0 = init.build(p).unwrap();
        let d = [0.1, 0.05].map(|cfl| identity_defect(p, u0.clone(), cfl, 200));
        pass &= d[0] <= GRADIENT_IDENTITY && d[1] < d[0];
        parts.push(format!("{name}: {:.2e} at CFL/10, {:.2e} at CFL/20", d[0], d[1]));
    }
    outcome(pass, parts.join("; "))
}

fn prescribed_mean_curvature() -> Outcome {
    let field = || TwoFormKind::Radial { f: 2.0 };
    let res: Vec<f64> = [4, 5]
        .iter()
        .map(|&k| {
            let p = problem(sphere(k), TargetKind::Euclidean3, PotentialKind::Zero, field());
            let u = InitialMap::plain(reversed_sphere()).build(&p).unwrap();
            el_residual(&p, &u).unwrap().1
        })
        .collect();
    let static_ok = res[0] <= CMC_RESIDUAL && res[1] < res[0];

    let p = problem(sphere(3), TargetKind::Euclidean3, PotentialKind::Zero, field());
    let u0 = InitialMap::perturbed(reversed_sphere(), 7, 0.05, vec![0, 1, 2]).build(&p).unwrap();
    let params = FlowParams { cfl_fraction: 0.9, stop_residual: CMC_STOP, max_steps: 20_000, ..Default::default() };
    let mut s = FlowSolver::new(&p, params, u0).unwrap();
    let term = s.run();
    let radius = s.state().u.iter().map(|x| x.norm()).sum::<f64>() / s.state().u.len() as f64;
    let flow_ok = term == Termination::Converged && s.residual() <= 10.0 * CMC_STOP;
    outcome(
        static_ok && flow_ok,
        format!(
            "round sphere residual {:.3e} (subdiv 4), {:.3e} (subdiv 5); perturbed sphere: {} after {} steps, residual {:.3e}, mean radius {radius:.3}",
            res[0],
            res[1],
            term.name(),
            s.step_count(),
            s.residual()
        ),
    )
}

fn stress_energy_divergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in CANONICAL {
        let mut divs = Vec::new();
        let mut worst_trace: f64 = 0.0;
        let mut symmetric = true;
        let mut converged = true;
        let mut times = Vec::new();
        for n in RESOLUTIONS {
            let run = c.converged(n);
            converged &= run.termination == Termination::Converged;
            let s = stress_energy(&run.problem, &run.u).unwrap();
            symmetric &= s.iter().all(|t| t[0][1] == t[1][0]);
            divs.push(divergence_stress_energy(&run.problem, &run.u).unwrap().1);
            worst_trace = worst_trace.max(trace_defect(&run.problem, &run.u).unwrap());
            times.push(format!("{:.0}s", run.seconds));
        }
        let decreasing = divs.windows(2).all(|w| w[1] < w[0]);
        pass &= converged && symmetric && decreasing && worst_trace <= TRACE_IDENTITY;
        parts.push(format!(
            "{c:?}: div {:.2e}/{:.2e}/{:.2e}, trace defect {worst_trace:.1e}, symmetric {symmetric}, wall {}",
            divs[0],
            divs[1],
            divs[2],
            times.join("/")
        ));
    }
    outcome(pass, parts.join("; "))
}

fn second_variation_oracle() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    // ∫ 2R|c|² on the unit sphere with V = |y|², R = 2
    let p = problem(sphere(4), TargetKind::Euclidean3, PotentialKind::Quadratic { center: [0.0; 4], c: 1.0 }, TwoFormKind::Zero);
    let u = vec![Amb::zeros(); p.surface.vertex_count()];
    let c = amb(&[0.3, -0.4, 1.2]);
    let xi = VariationField::constant_projected(&p, &u, c);
    let exact = 16.0 * PI * c.norm_squared();
    let a = second_variation(&p, &u, &xi).unwrap();
    let fd = second_variation_fd(&p, &u, &xi, 1e-3).unwrap();
    let rel = ((a - fd).abs() / fd.abs()).max((a - exact).abs() / exact);
    pass &= rel <= SECOND_VARIATION_REL;
    parts.push(format!("closed form {rel:.1e}"));

    let poly = || TwoFormKind::Polynomial { terms: vec![(1, 2, Poly::linear(1.5, 0)), (0, 1, Poly::linear(0.7, 2))] };
    let cases: Vec<(&str, Problem, InitialMap)> = vec![
        (
            "perturbed equator",
            problem(torus(32), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero),
            InitialMap::perturbed(BaseMap::Equator, 1, 0.05, vec![0, 1, 2]),
        ),
        (
            "identity with linear V",
            problem(sphere(3), TargetKind::Sphere2, PotentialKind::Linear { a: [0.3, 0.0, 1.0, 0.0] }, TwoFormKind::Zero),
            InitialMap::plain(BaseMap::Identity),
        ),
        (
            "radial B sphere",
            problem(sphere(3), TargetKind::Euclidean3, PotentialKind::Zero, TwoFormKind::Radial { f: 2.0 }),
            InitialMap::perturbed(reversed_sphere(), 2, 0.05, vec![0, 1, 2]),
        ),
        (
            "polynomial B on S2",
            problem(torus(32), TargetKind::Sphere2, PotentialKind::Zero, poly()),
            InitialMap::perturbed(BaseMap::Equator, 3, 0.1, vec![0, 1, 2]),
        ),
    ];
    for (name, p, init) in &cases {
        let u = init.build(p).unwrap();
        let xi = VariationField::random_smooth(p, &u, 11, 3);
        let a = second_variation(p, &u, &xi).unwrap();
        let fd = second_variation_fd(p, &u, &xi, 1e-3).unwrap();
        let rel = (a - fd).abs() / fd.abs();
        pass &= rel <= SECOND_VARIATION_REL;
        parts.push(format!("{name} {rel:.1e}"));
    }

    // minimizing regime: harmonic maps into the flat Clifford torus
    for n in [32, 64] {
        let run = Canonical::Clifford.converged(n);
        let q = minimizing_check(&run.problem, &run.u, 20, 5).unwrap();
        let min = q.iter().copied().fold(f64::INFINITY, f64::min);
        let h = run.problem.surface.mesh_parameter();
        pass &= min >= -h;
        parts.push(format!("min normalized second variation {min:.3e} at n={n} (h={h:.3e})"));
    }
    outcome(pass, parts.join("; "))
}

fn bochner_identity() -> Outcome {
    let mut exact: f64 = 0.0;
    let mut torus_raw = Vec::new();
    for n in RESOLUTIONS {
        let p = problem(torus(n), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero);
        let r = bochner_residual(&p, &InitialMap::plain(BaseMap::Equator).build(&p).unwrap()).unwrap();
        exact = exact.max(r.sup_substituted).max(r.sup_raw);
        let r = bochner_residual(&p, &InitialMap::perturbed(BaseMap::Equator, 5, 0.1, vec![0, 1, 2]).build(&p).unwrap()).unwrap();
        torus_raw.push(r.sup_raw);
    }
    let mut sphere_raw = Vec::new();
    for k in [4, 5, 6] {
        let p = problem(sphere(k), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero);
        let r = bochner_residual(&p, &InitialMap::plain(BaseMap::Identity).build(&p).unwrap()).unwrap();
        exact = exact.max(r.sup_substituted).max(r.sup_raw);
        let r = bochner_residual(&p, &InitialMap::perturbed(BaseMap::Identity, 5, 0.1, vec![0, 1, 2]).build(&p).unwrap()).unwrap();
        sphere_raw.push(r.sup_raw);
    }
    let (rt, rs) = (ratios(&torus_raw), ratios(&sphere_raw));
    let decay = rt.iter().chain(&rs).all(|&r| r >= BOCHNER_DECAY);
    outcome(
        exact <= EXACT_BOCHNER && decay,
        format!(
            "equator/identity residual {exact:.1e}; perturbed equator {:.2e}/{:.2e}/{:.2e} (ratios {:.2}, {:.2}); perturbed identity {:.2e}/{:.2e}/{:.2e} (ratios {:.2}, {:.2})",
            torus_raw[0], torus_raw[1], torus_raw[2], rt[0], rt[1], sphere_raw[0], sphere_raw[1], sphere_raw[2], rs[0], rs[1]
        ),
    )
}

const SMALL_CONFIG: &str = r#"
[domain]
kind = "torus"
n = 16

[target]
kind = "sphere2"

[initial_map]
kind = "equator"
seed = 7
amplitude = 0.05
components = [0, 1]

[flow]
cfl_fraction = 0.9
max_steps = 200
stop_residual = 1e-9

[diagnostics]
which = ["energy", "el_residual"]
cadence = 10
"#;

fn run_in(cfg: &ExperimentConfig, dir: &std::path::Path) -> runner::RunOutcome {
    let mut cfg = cfg.clone();
    cfg.output.directory = dir.to_path_buf();
    runner::run_experiment(&cfg, true).unwrap()
}

fn uniqueness() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse_str(SMALL_CONFIG).unwrap();
    run_in(&cfg, &tmp.path().join("a"));
    run_in(&cfg, &tmp.path().join("b"));
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("trace.csv")).unwrap();
    let identical = read("a") == read("b");

    let p = problem(torus(32), TargetKind::Sphere2, PotentialKind::Zero, TwoFormKind::Zero);
    let ua = InitialMap::perturbed(BaseMap::Equator, 7, 0.05, vec![0, 1]).build(&p).unwrap();
    let kick = VariationField::random_smooth(&p, &ua, 3, 3);
    let ub: Vec<Amb> = ua.iter().zip(&kick.xi).map(|(x, k)| p.target.project(&(x + k * 1e-6)).unwrap()).collect();
    let params = FlowParams { cfl_fraction: 0.9, max_steps: 3000, stop_residual: 1e-300, ..Default::default() };
    let run = |u: Vec<Amb>| {
        let mut s = FlowSolver::new(&p, params, u).unwrap();
        let mut snaps = vec![(0.0, s.state().u.clone())];
        s.run_with(|s| {
            if s.step_count() % 50 == 0 {
                snaps.push((s.state().t, s.state().u.clone()));
            }
        });
        snaps
    };
    let sep = separation(&run(ua), &run(ub)).unwrap();
    let env = exponential_envelope(&sep).unwrap();
    outcome(
        identical && env.max_residual <= ENVELOPE_ROUNDING && env.rate.is_finite(),
        format!(
            "identical runs byte-identical: {identical}; separation {:.2e} -> {:.2e} over t = {:.3}, fitted rate {:.3}, envelope residual {:.1e}",
            sep[0].1,
            sep.last().unwrap().1,
            sep.last().unwrap().0,
            env.rate,
            env.max_residual
        ),
    )
}

fn confinement() -> Outcome {
    let p = problem(sphere(3), TargetKind::Euclidean3, PotentialKind::Quadratic { center: [0.0; 4], c: 1.0 }, TwoFormKind::Zero);
    let params = FlowParams { cfl_fraction: 0.5, max_steps: CONFINEMENT_STEPS, stop_residual: 0.0, ..Default::default() };
    let u0 = InitialMap::perturbed(BaseMap::Identity, 7, 0.05, vec![0, 1, 2]).build(&p).unwrap();
    let mut s = FlowSolver::new(&p, params, u0).unwrap();
    s.run();
    let lambda1 = p.surface.first_eigenvalue().unwrap();
    let r = confinement_check(&p, s.trace(), &Amb::zeros(), lambda1, 200, 2.0, 1);
    let l_torus = torus(64).first_eigenvalue().unwrap();
    let rel = (l_torus / (4.0 * PI * PI) - 1.0).abs();
    outcome(
        s.step_count() == CONFINEMENT_STEPS && r.bounded && r.asserted && rel <= LAMBDA1_REL,
        format!(
            "{} steps, sup|u| {:.3}, bounded {}, decay hypothesis {} (C = {:.3}), |R Hess V| {:.1} vs λ1/2 = {:.3}: {}; torus λ1 off by {rel:.1e}",
            s.step_count(),
            r.sup_distance,
            r.bounded,
            r.decay_hypothesis,
            r.decay_constant,
            r.r_hess_v,
            r.lambda1 / 2.0,
            r.lambda_hypothesis
        ),
    )
}

fn apriori_bound() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in CANONICAL {
        for n in RESOLUTIONS {
            let run = c.converged(n);
            let k = a_priori_constants(&run.problem, 200, 2.0, 1).unwrap();
            let r = apriori_audit(&run.trace, &k).unwrap();
            worst = worst.max(r);
            if n == 32 {
                parts.push(format!("{c:?} c1 = {}", k.c1));
            }
        }
    }
    outcome(worst <= APRIORI_SLACK, format!("worst sup|dφ|² / bound {worst:.4} over 9 runs ({})", parts.join(", ")))
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::parse_str(SMALL_CONFIG).unwrap();
    cfg.output.checkpoint_every = 100;
    run_in(&cfg, &tmp.path().join("full"));
    let chk = runner::Checkpoint::read(&tmp.path().join("full/checkpoint_00000100.chk")).unwrap();
    let mut resumed = cfg.clone();
    resumed.output.directory = tmp.path().join("resumed");
    runner::resume_experiment(&chk, &resumed, true).unwrap();
    let read = |p: &str| std::fs::read_to_string(tmp.path().join(p)).unwrap();
    let same_state = read("full/final_state.chk") == read("resumed/final_state.chk");
    let full_rows: Vec<String> = read("full/trace.csv").lines().map(String::from).collect();
    let resumed_rows: Vec<String> = read("resumed/trace.csv").lines().skip(1).map(String::from).collect();
    let same_rows = full_rows.ends_with(&resumed_rows) && !resumed_rows.is_empty();

    let echo = ExperimentConfig::parse_str(&read("full/config.resolved")).unwrap();
    run_in(&echo, &tmp.path().join("echo"));
    let same_echo = read("full/trace.csv") == read("echo/trace.csv") && read("full/final_state.chk") == read("echo/final_state.chk");
    outcome(
        same_state && same_rows && same_echo,
        format!("resumed final state identical: {same_state}; resumed trace rows identical: {same_rows}; rerun from config.resolved identical: {same_echo}"),
    )
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("energy convergence under refinement", energy_convergence),
        ("gradient-flow energy identity", gradient_flow_identity),
        ("prescribed mean curvature sphere", prescribed_mean_curvature),
        ("stress-energy divergence and trace", stress_energy_divergence),
        ("second variation against finite differences", second_variation_oracle),
        ("Bochner identity residual", bochner_identity),
        ("uniqueness and determinism", uniqueness),
        ("confinement in a non-compact target", confinement),
        ("a-priori gradient bound", apriori_bound),
        ("checkpoint and config reproducibility", reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let clock = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked".into()));
        failed += !o.pass as usize;
        println!("{} {name} [{:.1}s]: {}", if o.pass { "PASS" } else { "FAIL" }, clock.elapsed().as_secs_f64(), o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
