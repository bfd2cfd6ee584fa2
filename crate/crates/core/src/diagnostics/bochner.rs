//! Bochner formulas as pointwise residuals.
//!
//! All derivatives come from the vertex jets. With `dφ_α = P ∂_α u` and the
//! pullback connection `∇dφ(e_α, e_β) = P ∂_α∂_β u` (the tangential part of
//! the second derivative; its normal part is `II(dφ_α, dφ_α)`), every smooth
//! map satisfies
//!
//! ```text
//! Δ½|dφ|² = |∇dφ|² + Σ⟨∇_α τ, dφ_α⟩ - Σ⟨R(dφ_α, dφ_β)dφ_α, dφ_β⟩ + K_M|dφ|²
//! ```
//!
//! with `τ = P Δu`; this is the `raw` residual. For solutions of the
//! Euler–Lagrange equation `τ = Z(dφ1 ∧ dφ2) + R∇V` the middle term becomes
//! `-⟨Z(dφ1 ∧ dφ2), τ⟩ + R Σ Hess V(dφ_α, dφ_α)`; the `substituted` residual
//! uses that form with `τ` also taken from the equation. `K_M` is the Gauss
//! curvature of the domain geometry, unaffected by a scalar-curvature
//! override.

use crate::error::{Error, Result};
use crate::flow::{AprioriConstants, Problem};
use crate::linalg::{Amb, AmbMat};
use crate::surface::Jet;

#[derive(Debug, Clone, PartialEq)]
pub struct BochnerResidual {
    /// `τ` replaced by the Euler–Lagrange right-hand side.
    pub substituted: Vec<f64>,
    /// General identity with `τ = P Δu` from the jets.
    pub raw: Vec<f64>,
    pub sup_substituted: f64,
    pub sup_raw: f64,
}

impl BochnerResidual {
    fn new(substituted: Vec<f64>, raw: Vec<f64>) -> Self {
        let sup = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        BochnerResidual {
            sup_substituted: sup(&substituted),
            sup_raw: sup(&raw),
            substituted,
            raw,
        }
    }
}

struct Local {
    proj: AmbMat,
    dphi: [Amb; 2],
    tau_raw: Amb,
    tau_el: Amb,
}

fn locals(problem: &Problem, u: &[Amb], jets: &[Jet<Amb>]) -> Vec<Local> {
    let (t, f) = (&problem.target, &problem.fields);
    let r = problem.surface.scalar_curvature();
    u.iter()
        .zip(jets)
        .map(|(p, j)| {
            let proj = t.projector_unchecked(p);
            let dphi = [proj * j.grad[0], proj * j.grad[1]];
            let tau_raw = proj * (j.hess[0] + j.hess[2]);
            let tau_el = f.z_with_projector(p, &proj, &dphi[0], &dphi[1]) + proj * f.ambient_grad_v(p) * r;
            Local { proj, dphi, tau_raw, tau_el }
        })
        .collect()
}

fn jet_laplacian(problem: &Problem, f: &[f64]) -> Result<Vec<f64>> {
    Ok(problem.surface.scalar_jets(f)?.iter().map(|j| j.hess[0] + j.hess[2]).collect())
}

fn half_dphi2(l: &[Local]) -> Vec<f64> {
    l.iter().map(|l| 0.5 * (l.dphi[0].norm_squared() + l.dphi[1].norm_squared())).collect()
}

pub fn bochner_residual(problem: &Problem, u: &[Amb]) -> Result<BochnerResidual> {
    problem.check_shape(u)?;
    let (t, f) = (&problem.target, &problem.fields);
    let jets = problem.surface.jets(u)?;
    let loc = locals(problem, u, &jets);
    let e = half_dphi2(&loc);
    let lhs = jet_laplacian(problem, &e)?;
    let k_m = problem.surface.gauss_curvature();
    let r = problem.surface.scalar_curvature();
    let tau: Vec<Amb> = loc.iter().map(|l| l.tau_raw).collect();
    let dtau = problem.surface.jets(&tau)?;
    let mut sub = Vec::with_capacity(u.len());
    let mut raw = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let (l, j, p) = (&loc[i], &jets[i], &u[i]);
        let [d1, d2] = l.dphi;
        let h = [l.proj * j.hess[0], l.proj * j.hess[1], l.proj * j.hess[2]];
        let hess2 = h[0].norm_squared() + 2.0 * h[1].norm_squared() + h[2].norm_squared();
        let curv = 2.0 * t.curvature_term(p, &d1, &d2);
        let ric = k_m * 2.0 * e[i];
        let hv = if r != 0.0 { r * (f.hess_v_unchecked(t, p, &l.proj, &d1, &d1) + f.hess_v_unchecked(t, p, &l.proj, &d2, &d2)) } else { 0.0 };
        let z = f.z_with_projector(p, &l.proj, &d1, &d2);
        let base = hess2 - curv + ric;
        sub.push(lhs[i] - (base + hv - z.dot(&l.tau_el)));
        raw.push(lhs[i] - (base + dtau[i].grad[0].dot(&d1) + dtau[i].grad[1].dot(&d2)));
    }
    Ok(BochnerResidual::new(sub, raw))
}

/// Residual of `Δ(V∘φ) = dV(τ) + Σ Hess V(dφ_α, dφ_α)`, again with both
/// readings of `τ`.
pub fn v_bochner(problem: &Problem, u: &[Amb]) -> Result<BochnerResidual> {
    problem.check_shape(u)?;
    let (t, f) = (&problem.target, &problem.fields);
    let jets = problem.surface.jets(u)?;
    let loc = locals(problem, u, &jets);
    let vals: Vec<f64> = u.iter().map(|p| f.v(p)).collect();
    let lhs = jet_laplacian(problem, &vals)?;
    let mut sub = Vec::with_capacity(u.len());
    let mut raw = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        let (l, p) = (&loc[i], &u[i]);
        let [d1, d2] = l.dphi;
        let g = l.proj * f.ambient_grad_v(p);
        let tr = f.hess_v_unchecked(t, p, &l.proj, &d1, &d1) + f.hess_v_unchecked(t, p, &l.proj, &d2, &d2);
        sub.push(lhs[i] - (g.dot(&l.tau_el) + tr));
        raw.push(lhs[i] - (g.dot(&l.tau_raw) + tr));
    }
    Ok(BochnerResidual::new(sub, raw))
}

/// Which number plays `κ_N` in `(½|Z|² - κ_N)|dφ|⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaReading {
    /// `κ_N = sup K`, the literal upper bound on the sectional curvature.
    UpperBound,
    /// `κ_N = -sup K`, the sign under which the estimate follows from the
    /// Bochner formula on positively curved targets.
    NegatedUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBochnerReport {
    pub kappa: f64,
    /// Fraction of (vertex, interior snapshot) pairs where the `|dφ|²`
    /// inequality holds with 5% slack.
    pub fraction_dphi: f64,
    /// Same for the `|∂tφ|²` inequality.
    pub fraction_dtphi: f64,
    /// Largest violation `∂t e - bound - slack` seen (negative if none).
    pub worst_dphi: f64,
    pub worst_dtphi: f64,
    pub checked: usize,
}

/// Checks the differential inequalities for `½|dφ|²` and `½|∂tφ|²` along a
/// run sampled at a fixed step (at least three snapshots).
pub fn flow_bochner_check(problem: &Problem, snapshots: &[(f64, Vec<Amb>)], c: &AprioriConstants, reading: KappaReading) -> Result<FlowBochnerReport> {
    if snapshots.len() < 3 {
        return Err(Error::InsufficientSnapshots { need: 3, got: snapshots.len() });
    }
    let dt = snapshots[1].0 - snapshots[0].0;
    for w in snapshots.windows(2) {
        if ((w[1].0 - w[0].0) - dt).abs() > 1e-9 * dt.abs() {
            return Err(Error::InvalidArgument("snapshots are not equally spaced in time".into()));
        }
    }
    let kappa = match reading {
        KappaReading::UpperBound => c.kappa,
        KappaReading::NegatedUpperBound => -c.kappa,
    };
    // per snapshot: ½|dφ|² and ½|∂tφ|²
    let mut e = Vec::with_capacity(snapshots.len());
    let mut w = Vec::with_capacity(snapshots.len());
    for (_, u) in snapshots {
        problem.check_shape(u)?;
        let jets = problem.surface.jets(u)?;
        let loc = locals(problem, u, &jets);
        e.push(half_dphi2(&loc));
        let rhs = problem.rhs_unchecked(u);
        w.push(rhs.iter().map(|v| 0.5 * v.norm_squared()).collect::<Vec<f64>>());
    }
    let a = 0.5 * c.z_sup * c.z_sup - kappa;
    let b = c.nabla_z_sup + 0.25 * c.z_sup * c.z_sup - kappa;
    let (mut ok1, mut ok2, mut total) = (0usize, 0usize, 0usize);
    let (mut worst1, mut worst2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 1..snapshots.len() - 1 {
        let lap_e = jet_laplacian(problem, &e[k])?;
        let lap_w = jet_laplacian(problem, &w[k])?;
        for i in 0..e[k].len() {
            let d2 = 2.0 * e[k][i];
            let de = (e[k + 1][i] - e[k - 1][i]) / (2.0 * dt);
            let terms = [lap_e[i], c.c1 * d2, a * d2 * d2];
            let slack = 0.05 * (de.abs() + terms.iter().map(|x| x.abs()).sum::<f64>()) + 1e-9;
            let v1 = de - terms.iter().sum::<f64>() - slack;
            let t2 = 2.0 * w[k][i];
            let dw = (w[k + 1][i] - w[k - 1][i]) / (2.0 * dt);
            let terms = [lap_w[i], b * d2 * t2, c.c2 * t2];
            let slack = 0.05 * (dw.abs() + terms.iter().map(|x| x.abs()).sum::<f64>()) + 1e-9;
            let v2 = dw - terms.iter().sum::<f64>() - slack;
            ok1 += (v1 <= 0.0) as usize;
            ok2 += (v2 <= 0.0) as usize;
            worst1 = worst1.max(v1);
            worst2 = worst2.max(v2);
            total += 1;
        }
    }
    Ok(FlowBochnerReport {
        kappa,
        fraction_dphi: ok1 as f64 / total as f64,
        fraction_dtphi: ok2 as f64 / total as f64,
        worst_dphi: worst1,
        worst_dtphi: worst2,
        checked: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldPack;
    use crate::flow::{BaseMap, InitialMap};
    use crate::surface::DiscreteSurface;
    use crate::target::{EmbeddedTarget, TargetKind};

    #[test]
    fn constant_map_has_no_residual() {
        let p = Problem::new(DiscreteSurface::sphere(3).unwrap(), EmbeddedTarget::new(TargetKind::Sphere2).unwrap(), FieldPack::zero(3)).unwrap();
        let u = vec![Amb::new(0.0, 1.0, 0.0, 0.0); p.surface.vertex_count()];
        let r = bochner_residual(&p, &u).unwrap();
        assert!(r.sup_substituted < 1e-12 && r.sup_raw < 1e-12);
    }

    #[test]
    fn equator_residual_vanishes() {
        let p = Problem::new(DiscreteSurface::torus(32, 1.0, 1.0).unwrap(), EmbeddedTarget::new(TargetKind::Sphere2).unwrap(), FieldPack::zero(3)).unwrap();
        let u = InitialMap::plain(BaseMap::Equator).build(&p).unwrap();
        let r = bochner_residual(&p, &u).unwrap();
        assert!(r.sup_substituted < 1e-8, "{}", r.sup_substituted);
    }
}
