//! Evaluable identities for critical points and flow lines: energy,
//! Euler–Lagrange residual, stress–energy tensor, second variation, the
//! Bochner formulas and the monotonicity ratio.
//!
//! Every routine takes a [`Problem`] and a map sampled at the vertices; none
//! of them mutate state.

mod bochner;
mod monotonicity;
mod second_variation;

pub use bochner::{bochner_residual, flow_bochner_check, v_bochner, BochnerResidual, FlowBochnerReport, KappaReading};
pub use monotonicity::{monotonicity_ratio, MonotonicityConfig, MonotonicityReport};
pub use second_variation::{minimizing_check, second_variation, second_variation_fd, VariationField};

use crate::error::{Error, Result};
use crate::flow::{Energy, Problem};
use crate::linalg::{sup_norm, Amb, Pos};
use crate::surface::face_gradient;

pub fn energy(problem: &Problem, u: &[Amb]) -> Result<Energy> {
    problem.check_on_manifold(u)?;
    problem.energy(u)
}

/// `P(u)Δu - Z(du(e1) ∧ du(e2)) - R∇V(u)` per vertex and its sup norm.
pub fn el_residual(problem: &Problem, u: &[Amb]) -> Result<(Vec<Amb>, f64)> {
    let r: Vec<Amb> = problem.rhs(u)?.into_iter().map(|v| -v).collect();
    let s = sup_norm(&r);
    Ok((r, s))
}

/// Symmetric 2×2 tensor in a face frame.
pub type Tensor2 = [[f64; 2]; 2];

/// `S = ½|dφ|² h - φ*g + R V(φ) h` per face, in the face frame; `V` is the
/// average over the corners.
pub fn stress_energy(problem: &Problem, u: &[Amb]) -> Result<Vec<Tensor2>> {
    problem.check_on_manifold(u)?;
    let s = &problem.surface;
    let r = s.scalar_curvature();
    Ok(s.faces()
        .iter()
        .map(|f| {
            let du = face_gradient(f, u);
            let e = 0.5 * (du[0].norm_squared() + du[1].norm_squared());
            let v = r * f.v.iter().map(|&m| problem.fields.v(&u[m])).sum::<f64>() / 3.0;
            let g01 = du[0].dot(&du[1]);
            [[e - du[0].norm_squared() + v, -g01], [-g01, e - du[1].norm_squared() + v]]
        })
        .collect())
}

/// Weak divergence of the stress–energy tensor: for the hat function `λ_m`,
/// `(div S)_m = -(1/A_m) Σ_f A_f S_f(∇λ_m, ·)`, returned as a domain
/// tangent vector at each vertex together with its sup norm.
pub fn divergence_stress_energy(problem: &Problem, u: &[Amb]) -> Result<(Vec<Pos>, f64)> {
    let tensors = stress_energy(problem, u)?;
    let s = &problem.surface;
    let mut div = vec![Pos::zeros(); s.vertex_count()];
    for (f, t) in s.faces().iter().zip(&tensors) {
        for (k, &m) in f.v.iter().enumerate() {
            let g = f.grad[k];
            for b in 0..2 {
                let c = t[0][b] * g[0] + t[1][b] * g[1];
                div[m] -= f.frame[b] * (c * f.area);
            }
        }
    }
    let w = s.area_weights();
    for (m, d) in div.iter_mut().enumerate() {
        let [e1, e2] = s.vertex_frame(m);
        *d = (e1 * d.dot(e1) + e2 * d.dot(e2)) / w[m];
    }
    let sup = div.iter().map(|d| d.norm()).fold(0.0, f64::max);
    Ok((div, sup))
}

/// Largest `|tr S - 2RV|` over the faces.
pub fn trace_defect(problem: &Problem, u: &[Amb]) -> Result<f64> {
    let tensors = stress_energy(problem, u)?;
    let r = problem.surface.scalar_curvature();
    Ok(problem
        .surface
        .faces()
        .iter()
        .zip(&tensors)
        .map(|(f, t)| {
            let v = r * f.v.iter().map(|&m| problem.fields.v(&u[m])).sum::<f64>() / 3.0;
            (t[0][0] + t[1][1] - 2.0 * v).abs()
        })
        .fold(0.0, f64::max))
}

/// Smallest second divided difference of `E(t)` over the final `fraction`
/// of the records; non-negative along convex energy profiles.
pub fn energy_convexity(times: &[f64], energies: &[f64], fraction: f64) -> Result<f64> {
    if times.len() != energies.len() {
        return Err(Error::ShapeMismatch {
            expected: times.len(),
            got: energies.len(),
        });
    }
    if times.len() < 3 {
        return Err(Error::InsufficientSnapshots { need: 3, got: times.len() });
    }
    let start = ((1.0 - fraction.clamp(0.0, 1.0)) * times.len() as f64) as usize;
    let start = start.min(times.len() - 3);
    let mut worst = f64::INFINITY;
    for k in start + 1..times.len() - 1 {
        let (t0, t1, t2) = (times[k - 1], times[k], times[k + 1]);
        let s1 = (energies[k] - energies[k - 1]) / (t1 - t0);
        let s2 = (energies[k + 1] - energies[k]) / (t2 - t1);
        worst = worst.min(2.0 * (s2 - s1) / (t2 - t0));
    }
    Ok(worst)
}
