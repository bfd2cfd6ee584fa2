use nalgebra::{DMatrix, SymmetricEigen};

use super::{FlowTrace, Problem};
use crate::error::{Error, Result};
use crate::fields::PotentialKind;
use crate::linalg::Amb;
use crate::rng::substream;
use crate::target::TargetKind;

/// `s(t) = max_x |u_A - u_B|` for two runs recorded on the same time grid.
pub fn separation(a: &[(f64, Vec<Amb>)], b: &[(f64, Vec<Amb>)]) -> Result<Vec<(f64, f64)>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("traces have {} and {} snapshots", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|((ta, ua), (tb, ub))| {
            if ta != tb {
                return Err(Error::InvalidArgument(format!("time grids differ: {ta} vs {tb}")));
            }
            if ua.len() != ub.len() {
                return Err(Error::ShapeMismatch { expected: ua.len(), got: ub.len() });
            }
            let s = ua.iter().zip(ub).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            Ok((*ta, s))
        })
        .collect()
}

/// Exponential bound `s(t) ≤ s(0) e^{Ct}` fitted to a separation history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    /// Smallest admissible rate `C`.
    pub rate: f64,
    /// `max_t (log s(t) - log s(0) - C t)`; never positive for a valid bound.
    pub max_residual: f64,
}

pub fn exponential_envelope(sep: &[(f64, f64)]) -> Option<Envelope> {
    let &(t0, s0) = sep.first()?;
    if s0 == 0.0 {
        let all_zero = sep.iter().all(|(_, s)| *s == 0.0);
        return Some(Envelope {
            rate: 0.0,
            max_residual: if all_zero { 0.0 } else { f64::INFINITY },
        });
    }
    let l0 = s0.ln();
    let mut rate = f64::NEG_INFINITY;
    for &(t, s) in &sep[1..] {
        if t > t0 {
            rate = rate.max((s.ln() - l0) / (t - t0));
        }
    }
    if !rate.is_finite() {
        rate = 0.0;
    }
    let max_residual = sep.iter().map(|&(t, s)| s.ln() - l0 - rate * (t - t0)).fold(f64::NEG_INFINITY, f64::max);
    Some(Envelope { rate, max_residual })
}

/// Sampled extremes of the intrinsic Hessian of `V` on `N`:
/// `(min eigenvalue, sup operator norm)` per sample point.
fn hess_v_samples(problem: &Problem, samples: usize, radius: f64, seed: u64) -> Vec<(Amb, f64, f64)> {
    let (t, f) = (&problem.target, &problem.fields);
    let mut rng = substream(seed, "hess_v_samples");
    (0..samples)
        .map(|_| {
            let p = t.sample_point(&mut rng, radius);
            let proj = t.projector_unchecked(&p);
            let basis = t.tangent_basis(&p);
            let d = basis.len();
            let h = DMatrix::from_fn(d, d, |a, b| f.hess_v_unchecked(t, &p, &proj, &basis[a], &basis[b]));
            let ev = SymmetricEigen::new(h).eigenvalues;
            let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
            let sup = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
            (p, min, sup)
        })
        .collect()
}

/// `sup |Hess V|` over `N`, closed form where one is available.
pub fn hess_v_bound(problem: &Problem, samples: usize, radius: f64, seed: u64) -> f64 {
    let f = &problem.fields;
    match (problem.target.kind(), f.potential()) {
        (_, PotentialKind::Zero) => 0.0,
        (TargetKind::Euclidean3, PotentialKind::Linear { .. }) => 0.0,
        (TargetKind::Euclidean3, PotentialKind::Quadratic { c, .. }) => 2.0 * c.abs(),
        (TargetKind::Sphere2 | TargetKind::Sphere3, PotentialKind::Linear { a }) => Amb::from(*a).norm(),
        // 2c|X|² + ⟨2c(p - y0), -p⟩|X|² = 2c⟨y0, p⟩|X|²
        (TargetKind::Sphere2 | TargetKind::Sphere3, PotentialKind::Quadratic { center, c }) => 2.0 * c.abs() * Amb::from(*center).norm(),
        _ => hess_v_samples(problem, samples, radius, seed).iter().map(|s| s.2).fold(0.0, f64::max),
    }
}

/// Constants of the a-priori estimates for `|dφ|²` and `|∂tφ|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriConstants {
    pub ric: f64,
    pub scalar_curvature: f64,
    pub hess_v: f64,
    /// `|Ric| + |R||Hess V|`
    pub c1: f64,
    /// `|R||Hess V|`
    pub c2: f64,
    pub z_sup: f64,
    pub nabla_z_sup: f64,
    pub kappa: f64,
}

impl AprioriConstants {
    /// Right-hand side of `|dφ_t|² ≤ |dφ_0|² e^{2 c1 t}`.
    pub fn dphi_bound(&self, dphi0: f64, t: f64) -> f64 {
        dphi0 * (2.0 * self.c1 * t).exp()
    }
}

pub fn a_priori_constants(problem: &Problem, samples: usize, radius: f64, seed: u64) -> Result<AprioriConstants> {
    let ric = problem.surface.gauss_curvature().abs();
    let r = problem.surface.scalar_curvature();
    let hess_v = hess_v_bound(problem, samples, radius, seed);
    let (z_sup, nabla_z_sup) = problem.fields.sup_norms_z(&problem.target, samples, radius, seed)?;
    Ok(AprioriConstants {
        ric,
        scalar_curvature: r,
        hess_v,
        c1: ric + r.abs() * hess_v,
        c2: r.abs() * hess_v,
        z_sup,
        nabla_z_sup,
        kappa: problem.target.curvature_bound(),
    })
}

/// Largest `sup|dφ_t|² / (|dφ_0|² e^{2 c1 t})` over the recorded steps; the
/// estimate holds (with 5% slack) when this is at most 1.05.
pub fn apriori_audit(trace: &FlowTrace, c: &AprioriConstants) -> Option<f64> {
    let first = trace.records.first()?;
    let (t0, d0) = (first.t, first.sup_dphi2);
    Some(
        trace
            .records
            .iter()
            .map(|r| {
                let bound = c.dphi_bound(d0, r.t - t0);
                if bound > 0.0 {
                    r.sup_dphi2 / bound
                } else if r.sup_dphi2 == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max),
    )
}

/// Outcome of the confinement audit for non-compact targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfinementReport {
    /// Largest `C` with `-R Hess V(y) ≤ -C / (1 + d(y))` on the samples.
    pub decay_constant: f64,
    pub decay_hypothesis: bool,
    /// `sup |R Hess V|` against `λ1 / 2`.
    pub r_hess_v: f64,
    pub lambda1: f64,
    pub lambda_hypothesis: bool,
    pub sup_distance: f64,
    /// Distance over the second half of the run never exceeds the first half.
    pub bounded: bool,
    /// Whether boundedness is a claim (some hypothesis holds).
    pub asserted: bool,
}

pub fn confinement_check(problem: &Problem, trace: &FlowTrace, anchor: &Amb, lambda1: f64, samples: usize, radius: f64, seed: u64) -> ConfinementReport {
    let r = problem.surface.scalar_curvature();
    let sampled = hess_v_samples(problem, samples, radius, seed);
    let decay_constant = sampled
        .iter()
        .map(|(p, min, _)| r * min * (1.0 + (p - anchor).norm()))
        .fold(f64::INFINITY, f64::min);
    let r_hess_v = r.abs() * sampled.iter().map(|s| s.2).fold(0.0, f64::max);
    let d: Vec<f64> = trace.records.iter().map(|x| x.sup_distance).collect();
    let sup_distance = d.iter().copied().fold(0.0, f64::max);
    let half = d.len() / 2;
    let first = d[..half.max(1).min(d.len())].iter().copied().fold(0.0, f64::max);
    let second = d[half..].iter().copied().fold(0.0, f64::max);
    let bounded = sup_distance.is_finite() && second <= first * (1.0 + 1e-12);
    let decay_hypothesis = decay_constant > 0.0;
    let lambda_hypothesis = r_hess_v <= lambda1 / 2.0;
    ConfinementReport {
        decay_constant,
        decay_hypothesis,
        r_hess_v,
        lambda1,
        lambda_hypothesis,
        sup_distance,
        bounded,
        asserted: decay_hypothesis || lambda_hypothesis,
    }
}
