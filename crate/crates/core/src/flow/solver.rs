use serde::{Deserialize, Serialize};

use super::{Energy, MapState, Problem};
use crate::error::{Error, Result};
use crate::linalg::{sup_norm, Amb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub dt0: f64,
    pub dt_min: f64,
    pub cfl_fraction: f64,
    pub stop_residual: f64,
    pub max_steps: usize,
    /// `None` means on exactly when `B` is available.
    pub energy_backtrack: Option<bool>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            dt0: 1.0,
            dt_min: 1e-12,
            cfl_fraction: 0.2,
            stop_residual: 1e-6,
            max_steps: 10_000,
            energy_backtrack: None,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.dt0 > 0.0) {
            return bad(format!("dt0 must be positive, got {}", self.dt0));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0) {
            return bad(format!("dt_min must lie in (0, dt0], got {}", self.dt_min));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return bad(format!("cfl_fraction must lie in (0, 1], got {}", self.cfl_fraction));
        }
        if !(self.stop_residual >= 0.0) {
            return bad(format!("stop_residual must be non-negative, got {}", self.stop_residual));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    StepFailure,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxSteps => "max_steps",
            Termination::StepFailure => "step_failure",
        }
    }
}

/// One accepted step (or the initial state at step 0). `dt` is the step that
/// led to this record, zero for the initial record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: Energy,
    pub sup_dphi2: f64,
    pub sup_dtphi2: f64,
    pub el_residual: f64,
    pub onmanifold_residual: f64,
    pub sup_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTrace {
    pub records: Vec<TraceRecord>,
}

impl FlowTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// Explicit Euler with pointwise projection and step rejection.
pub struct FlowSolver<'a> {
    problem: &'a Problem,
    params: FlowParams,
    backtrack: bool,
    state: MapState,
    step: usize,
    dt: f64,
    rhs: Vec<Amb>,
    energy: Energy,
    sup_dphi2: f64,
    anchor: Amb,
    trace: FlowTrace,
}

impl<'a> FlowSolver<'a> {
    pub fn new(problem: &'a Problem, params: FlowParams, u0: Vec<Amb>) -> Result<Self> {
        let mut s = Self::resume(problem, params, u0, 0.0, 0, None)?;
        s.record(0.0);
        Ok(s)
    }

    /// Continues a flow at `(t, step)`; `dt` is the current (possibly reduced)
    /// step, `None` for the CFL-capped `dt0`. No record is written for the
    /// starting state.
    pub fn resume(problem: &'a Problem, params: FlowParams, u0: Vec<Amb>, t: f64, step: usize, dt: Option<f64>) -> Result<Self> {
        params.validate()?;
        let state = problem.state(u0, t)?;
        let ceiling = params.cfl_fraction * problem.surface.stability_limit();
        let dt = dt.unwrap_or(params.dt0).min(params.dt0).min(ceiling);
        if dt < params.dt_min {
            return Err(Error::InvalidArgument(format!("stability ceiling {ceiling:e} is below dt_min {:e}", params.dt_min)));
        }
        let backtrack = params.energy_backtrack.unwrap_or(true) && problem.fields.has_b();
        let (rhs, energy, sup_dphi2) = problem.evaluate(&state.u);
        Ok(FlowSolver {
            problem,
            params,
            backtrack,
            state,
            step,
            dt,
            rhs,
            energy,
            sup_dphi2,
            anchor: Amb::zeros(),
            trace: FlowTrace::default(),
        })
    }

    /// Point from which `sup_distance` is measured.
    pub fn with_anchor(mut self, anchor: Amb) -> Self {
        self.anchor = anchor;
        let d = self.sup_distance();
        if let Some(r) = self.trace.records.last_mut() {
            r.sup_distance = d;
        }
        self
    }

    fn sup_distance(&self) -> f64 {
        self.state.u.iter().map(|p| (p - self.anchor).norm()).fold(0.0, f64::max)
    }

    fn record(&mut self, dt: f64) {
        let res = sup_norm(&self.rhs);
        let rec = TraceRecord {
            step: self.step,
            t: self.state.t,
            dt,
            energy: self.energy,
            sup_dphi2: self.sup_dphi2,
            sup_dtphi2: res * res,
            el_residual: res,
            onmanifold_residual: self.state.on_manifold_residual,
            sup_distance: self.sup_distance(),
        };
        self.trace.records.push(rec);
    }

    pub fn state(&self) -> &MapState {
        &self.state
    }
    pub fn step_count(&self) -> usize {
        self.step
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn rhs(&self) -> &[Amb] {
        &self.rhs
    }
    pub fn energy(&self) -> Energy {
        self.energy
    }
    pub fn trace(&self) -> &FlowTrace {
        &self.trace
    }
    pub fn into_parts(self) -> (MapState, FlowTrace) {
        (self.state, self.trace)
    }
    pub fn residual(&self) -> f64 {
        sup_norm(&self.rhs)
    }

    fn trial(&self, dt: f64) -> Option<Vec<Amb>> {
        self.state
            .u
            .iter()
            .zip(&self.rhs)
            .map(|(u, r)| self.problem.target.project(&(u + r * dt)).ok())
            .collect()
    }

    /// One accepted step; the step size is halved until the step is accepted.
    pub fn step(&mut self) -> Result<()> {
        let p = self.problem;
        let old_res = self.residual();
        loop {
            if self.dt < self.params.dt_min {
                return Err(Error::StepFailure {
                    t: self.state.t,
                    dt: self.dt,
                    dt_min: self.params.dt_min,
                    last_residual: old_res,
                });
            }
            let Some(u) = self.trial(self.dt) else {
                self.dt *= 0.5;
                continue;
            };
            let (rhs, energy, sup_dphi2) = p.evaluate(&u);
            if self.backtrack {
                let (e0, e1) = (self.energy.total().unwrap_or(0.0), energy.total().unwrap_or(0.0));
                if e1 > e0 + 1e-12 * e0.abs().max(1.0) {
                    self.dt *= 0.5;
                    continue;
                }
            }
            if !self.backtrack && sup_norm(&rhs) > 10.0 * old_res {
                self.dt *= 0.5;
                continue;
            }
            self.state.on_manifold_residual = p.manifold_residual(&u);
            self.state.u = u;
            self.state.t += self.dt;
            self.step += 1;
            self.rhs = rhs;
            self.energy = energy;
            self.sup_dphi2 = sup_dphi2;
            let dt = self.dt;
            self.record(dt);
            return Ok(());
        }
    }

    /// Steps until `sup |∂t u| < stop_residual`, the global step counter
    /// reaches `max_steps`, or a step fails.
    pub fn run(&mut self) -> Termination {
        self.run_with(|_| {})
    }

    /// Like [`run`](Self::run), calling `observe` after every accepted step.
    pub fn run_with(&mut self, mut observe: impl FnMut(&Self)) -> Termination {
        loop {
            if self.residual() < self.params.stop_residual {
                return Termination::Converged;
            }
            if self.step >= self.params.max_steps {
                return Termination::MaxSteps;
            }
            if self.step().is_err() {
                return Termination::StepFailure;
            }
            observe(self);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldPack, PotentialKind, TwoFormKind};
    use crate::linalg::amb;
    use crate::surface::DiscreteSurface;
    use crate::target::{EmbeddedTarget, TargetKind};

    #[test]
    fn linear_potential_gives_exact_drift() {
        let s = DiscreteSurface::sphere(1).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Euclidean3).unwrap();
        let a = [0.5, 0.0, -1.0, 0.0];
        let f = FieldPack::new(3, PotentialKind::Linear { a }, TwoFormKind::Zero).unwrap();
        let p = Problem::new(s, t, f).unwrap();
        let params = FlowParams { dt0: 1e-3, max_steps: 10, ..Default::default() };
        let mut solver = FlowSolver::new(&p, params, vec![Amb::zeros(); 12]).unwrap();
        let dt = solver.dt();
        assert_eq!(solver.run(), Termination::MaxSteps);
        let expect = Amb::from(a) * (-2.0 * dt * 10.0);
        for u in &solver.state().u {
            assert!((u - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_budget_leaves_state_unchanged() {
        let s = DiscreteSurface::torus(8, 1.0, 1.0).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Sphere2).unwrap();
        let p = Problem::new(s, t, FieldPack::zero(3)).unwrap();
        let u0: Vec<Amb> = p.surface.positions().iter().map(|x| amb(&[(6.0 * x.x).cos(), (6.0 * x.x).sin(), 0.3]).normalize()).collect();
        let params = FlowParams { max_steps: 0, ..Default::default() };
        let mut solver = FlowSolver::new(&p, params, u0.clone()).unwrap();
        assert_eq!(solver.run(), Termination::MaxSteps);
        assert_eq!(solver.state().u, u0);
        assert_eq!(solver.trace().records.len(), 1);
    }

    #[test]
    fn fixed_point_only_advances_time() {
        let s = DiscreteSurface::torus(8, 1.0, 1.0).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Sphere2).unwrap();
        let p = Problem::new(s, t, FieldPack::zero(3)).unwrap();
        let u0 = vec![amb(&[0.0, 0.0, 1.0]); 64];
        let mut solver = FlowSolver::new(&p, FlowParams::default(), u0.clone()).unwrap();
        solver.step().unwrap();
        assert_eq!(solver.state().u, u0);
        assert!(solver.state().t > 0.0);
    }

    #[test]
    fn rejects_inconsistent_params() {
        let p = FlowParams { dt_min: 2.0, dt0: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = FlowParams { cfl_fraction: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
