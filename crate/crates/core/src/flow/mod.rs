//! The heat flow `∂t u = P(u)Δu - Z(du(e1) ∧ du(e2)) - R∇V(u)` for the
//! composite map `u = ι∘φ: M → R^q`.
//!
//! The right-hand side is the exact negative gradient of the discrete
//! energy with respect to the lumped mass `A_m`: the Dirichlet part comes from
//! the cotangent stencil, the `Z` part is assembled per face and distributed
//! to the corners with weight `A_f / 3`, mirroring the quadrature of `φ*B`.

mod analysis;
mod initial;
mod solver;

pub use analysis::{a_priori_constants, apriori_audit, confinement_check, exponential_envelope, separation, AprioriConstants, ConfinementReport, Envelope};
pub use initial::{BaseMap, InitialMap, Perturbation};
pub use solver::{FlowParams, FlowSolver, FlowTrace, Termination, TraceRecord};

use crate::error::{Error, Result};
use crate::fields::{FieldPack, TwoFormKind};
use crate::linalg::{Amb, AmbMat};
use crate::surface::{face_gradient, DiscreteSurface};
use crate::target::{EmbeddedTarget, TargetKind};

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

struct FacePass {
    dirichlet: f64,
    b: Option<f64>,
    sup: f64,
    wedge: Vec<[f64; 6]>,
}

/// Domain, target and couplings of one experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub surface: DiscreteSurface,
    pub target: EmbeddedTarget,
    pub fields: FieldPack,
}

/// Snapshot of the flow: the map, its time and distance from `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapState {
    pub u: Vec<Amb>,
    pub t: f64,
    pub on_manifold_residual: f64,
}

/// Energy split into its three parts; `b` (and so `total`) is `None` when
/// only `Ω` was supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub dirichlet: f64,
    pub b: Option<f64>,
    pub v: f64,
}

impl Energy {
    pub fn total(&self) -> Option<f64> {
        self.b.map(|b| self.dirichlet + b + self.v)
    }
}

impl Problem {
    pub fn new(surface: DiscreteSurface, target: EmbeddedTarget, fields: FieldPack) -> Result<Self> {
        if fields.ambient_dim() != target.ambient_dim() {
            return Err(Error::InvalidField(format!(
                "field pack lives in R^{} but the target is embedded in R^{}",
                fields.ambient_dim(),
                target.ambient_dim()
            )));
        }
        Ok(Problem { surface, target, fields })
    }

    pub fn check_shape(&self, u: &[Amb]) -> Result<()> {
        if u.len() != self.surface.vertex_count() {
            return Err(Error::ShapeMismatch {
                expected: self.surface.vertex_count(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Largest distance of a sample to `N`; infinite when a projection fails.
    pub fn manifold_residual(&self, u: &[Amb]) -> f64 {
        u.iter()
            .map(|p| self.target.distance_to(p).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    pub fn check_on_manifold(&self, u: &[Amb]) -> Result<()> {
        self.check_shape(u)?;
        for p in u {
            self.target.check_on_manifold(p)?;
        }
        Ok(())
    }

    /// Builds a state after checking that `u` lies on `N`.
    pub fn state(&self, u: Vec<Amb>, t: f64) -> Result<MapState> {
        self.check_on_manifold(&u)?;
        let on_manifold_residual = self.manifold_residual(&u);
        Ok(MapState { u, t, on_manifold_residual })
    }

    pub fn projectors(&self, u: &[Amb]) -> Vec<AmbMat> {
        u.iter().map(|p| self.target.projector_unchecked(p)).collect()
    }

    pub fn rhs(&self, u: &[Amb]) -> Result<Vec<Amb>> {
        self.check_on_manifold(u)?;
        Ok(self.rhs_unchecked(u))
    }

    pub(crate) fn rhs_unchecked(&self, u: &[Amb]) -> Vec<Amb> {
        self.evaluate(u).0
    }

    /// Right-hand side, energy and largest `|du|²` from a single pass over
    /// the faces.
    pub(crate) fn evaluate(&self, u: &[Amb]) -> (Vec<Amb>, Energy, f64) {
        let (s, t) = (&self.surface, &self.target);
        let with_z = !self.fields.z_vanishes();
        let pass = self.face_pass(u, with_z);
        let mut out: Vec<Amb> = (0..u.len()).map(|i| t.tangent_part(&u[i], &s.laplacian_at(u, i))).collect();
        if with_z {
            // f ι_ŷ vol on the round three-sphere: ŷ ∧ Pa ∧ Pb = ŷ ∧ a ∧ b and the
            // result is already tangent, so both projections drop out
            let radial = t.kind() == TargetKind::Sphere3 && self.fields.is_volume_form();
            for (m, (o, w)) in out.iter_mut().zip(&pass.wedge).enumerate() {
                let a = s.area_weights()[m];
                if radial {
                    *o -= self.fields.volume_of_wedge(&u[m], w) / a;
                } else {
                    let mut mat = AmbMat::zeros();
                    for (&(j, k), x) in PAIRS.iter().zip(w) {
                        mat[(j, k)] = *x;
                        mat[(k, j)] = -x;
                    }
                    let w = self.fields.omega_bivector(&u[m], &t.project_bivector(&u[m], &mat));
                    *o -= t.tangent_part(&u[m], &w) / a;
                }
            }
        }
        let r = s.scalar_curvature();
        let mut v = 0.0;
        if !self.fields.v_vanishes() && r != 0.0 {
            for (m, o) in out.iter_mut().enumerate() {
                *o -= t.tangent_part(&u[m], &self.fields.ambient_grad_v(&u[m])) * r;
                v += r * s.area_weights()[m] * self.fields.v(&u[m]);
            }
        }
        (out, Energy { dirichlet: pass.dirichlet, b: pass.b, v }, pass.sup)
    }

    /// Face sums: Dirichlet energy, `∫φ*B`, sup `|du|²` and, when asked,
    /// the per-vertex bivector `Σ A_f,corner du1 ∧ du2` (Z is linear in the
    /// bivector, so corner contributions are summed first and projected once
    /// per vertex).
    fn face_pass(&self, u: &[Amb], want_wedge: bool) -> FacePass {
        let s = &self.surface;
        let b_terms = self.fields.has_b() && !matches!(self.fields.two_form(), TwoFormKind::Zero);
        let mut p = FacePass {
            dirichlet: 0.0,
            b: self.fields.has_b().then_some(0.0),
            sup: 0.0,
            wedge: if want_wedge { vec![[0.0; 6]; u.len()] } else { Vec::new() },
        };
        for f in s.faces() {
            let [a, b] = face_gradient(f, u);
            let d2 = a.norm_squared() + b.norm_squared();
            p.dirichlet += 0.5 * f.area * d2;
            p.sup = p.sup.max(d2);
            if let (true, Some(acc)) = (b_terms, p.b.as_mut()) {
                let pull: f64 = f.v.iter().zip(&f.corner_area).map(|(&m, c)| c * self.fields.eval_b(&u[m], &a, &b)).sum();
                *acc += pull;
            }
            if want_wedge {
                let w = PAIRS.map(|(j, k)| a[j] * b[k] - a[k] * b[j]);
                for (&v, c) in f.v.iter().zip(&f.corner_area) {
                    for (acc, x) in p.wedge[v].iter_mut().zip(w) {
                        *acc += c * x;
                    }
                }
            }
        }
        p
    }

    pub fn energy(&self, u: &[Amb]) -> Result<Energy> {
        self.check_shape(u)?;
        Ok(self.energy_and_sup_dphi2(u).0)
    }

    /// The energy together with the largest `|du|²` over the faces.
    pub(crate) fn energy_and_sup_dphi2(&self, u: &[Amb]) -> (Energy, f64) {
        let pass = self.face_pass(u, false);
        let r = self.surface.scalar_curvature();
        let v = if self.fields.v_vanishes() || r == 0.0 {
            0.0
        } else {
            r * u.iter().zip(self.surface.area_weights()).map(|(p, a)| a * self.fields.v(p)).sum::<f64>()
        };
        (Energy { dirichlet: pass.dirichlet, b: pass.b, v }, pass.sup)
    }

    /// Largest `|du|²` over the faces.
    pub fn sup_dphi2(&self, u: &[Amb]) -> f64 {
        self.surface
            .faces()
            .iter()
            .map(|f| {
                let du = face_gradient(f, u);
                du[0].norm_squared() + du[1].norm_squared()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PotentialKind, TwoFormKind};
    use crate::linalg::{amb, e, sup_norm};
    use crate::target::TargetKind;

    #[test]
    fn linear_potential_on_constant_map() {
        let s = DiscreteSurface::sphere(2).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Euclidean3).unwrap();
        let a = [0.3, -0.1, 0.2, 0.0];
        let f = FieldPack::new(3, PotentialKind::Linear { a }, TwoFormKind::Radial { f: 2.0 }).unwrap();
        let p = Problem::new(s, t, f).unwrap();
        let u = vec![amb(&[0.5, 0.5, 0.5]); p.surface.vertex_count()];
        let r = p.rhs(&u).unwrap();
        for v in r {
            assert!((v + Amb::from(a) * 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn identity_map_is_nearly_harmonic() {
        let coarse = |k| {
            let s = DiscreteSurface::sphere(k).unwrap();
            let u: Vec<Amb> = s.positions().iter().map(|x| amb(&[x.x, x.y, x.z])).collect();
            let t = EmbeddedTarget::new(TargetKind::Sphere2).unwrap();
            let p = Problem::new(s, t, FieldPack::zero(3)).unwrap();
            sup_norm(&p.rhs(&u).unwrap())
        };
        let (r3, r5) = (coarse(3), coarse(5));
        assert!(r5 < r3, "{r3} {r5}");
    }

    #[test]
    fn rhs_is_tangent() {
        let s = DiscreteSurface::torus(16, 1.0, 1.0).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Sphere2).unwrap();
        let f = FieldPack::new(3, PotentialKind::Linear { a: [0.0, 0.0, 1.0, 0.0] }, TwoFormKind::ConstantVolume { f: 1.5 }).unwrap();
        let s = s.with_scalar_curvature_override(1.0);
        let u: Vec<Amb> = s
            .positions()
            .iter()
            .map(|x| {
                let a = 2.0 * std::f64::consts::PI * x.x;
                let b = 2.0 * std::f64::consts::PI * x.y;
                amb(&[a.cos() * b.sin().mul_add(0.3, 1.0), a.sin(), 0.4 * b.cos()]).normalize()
            })
            .collect();
        let p = Problem::new(s, t, f).unwrap();
        let r = p.rhs(&u).unwrap();
        for (v, x) in r.iter().zip(&u) {
            assert!(v.dot(x).abs() < 1e-12);
        }
        assert!(p.energy(&u).unwrap().total().is_none());
    }

    #[test]
    fn off_manifold_state_is_rejected() {
        let s = DiscreteSurface::torus(8, 1.0, 1.0).unwrap();
        let t = EmbeddedTarget::new(TargetKind::Sphere2).unwrap();
        let p = Problem::new(s, t, FieldPack::zero(3)).unwrap();
        let u = vec![e(0) * 1.1; 64];
        assert!(matches!(p.rhs(&u), Err(Error::OffManifold { .. })));
    }
}
