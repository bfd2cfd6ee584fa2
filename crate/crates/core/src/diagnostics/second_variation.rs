//! Second variation of the energy along `φ_t` with `∂tφ|₀ = ξ`:
//!
//! ```text
//! ∫ |∇ξ|² - ⟨R(dφ, ξ)dφ, ξ⟩ + ⟨ξ, (∇_ξ Z)(dφ1 ∧ dφ2)⟩
//!   + ⟨ξ, Z(∇ξ(e1) ∧ dφ2)⟩ + ⟨ξ, Z(dφ1 ∧ ∇ξ(e2))⟩ + R Hess V(ξ, ξ)
//! ```
//!
//! Face derivatives `du`, `dξ` are constant on each face. By the Gauss
//! equation the first two terms combine to `|dξ|² - ⟨II(dφ_α, dφ_α), II(ξ, ξ)⟩`
//! (the `|II(dφ, ξ)|²` parts cancel), and `Σ_α II(dφ_α, dφ_α)` is the normal
//! part of `Δu`. With that pairing taken at the vertices against the mesh
//! Laplacian, the sum is the exact second derivative of the discrete
//! Dirichlet energy along `π(u + sξ)`. The `Z` terms are evaluated at the
//! three corners of each face with weight `A_f / 3`, where the pullback
//! connection is `∇ξ(e_α) = P(u_m) dξ(e_α)`.

use super::energy;
use crate::error::{Error, Result};
use crate::flow::Problem;
use crate::linalg::Amb;
use crate::rng::substream;
use crate::surface::face_gradient;

/// Tangent vector field along a map.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationField {
    pub xi: Vec<Amb>,
}

impl VariationField {
    /// Takes ownership of `xi` after checking `P(u)ξ = ξ` to 1e-10.
    pub fn new(problem: &Problem, u: &[Amb], xi: Vec<Amb>) -> Result<Self> {
        problem.check_shape(&xi)?;
        for (p, x) in u.iter().zip(&xi) {
            let d = (problem.target.projector_unchecked(p) * x - x).norm();
            if d > 1e-10 * (1.0 + x.norm()) {
                return Err(Error::InvalidArgument(format!("variation field is not tangent (normal part {d:e})")));
            }
        }
        Ok(VariationField { xi })
    }

    /// `P(u)c` at every vertex.
    pub fn constant_projected(problem: &Problem, u: &[Amb], c: Amb) -> Self {
        VariationField {
            xi: u.iter().map(|p| problem.target.projector_unchecked(p) * c).collect(),
        }
    }

    /// Projected smooth random field with unit sup norm before projection.
    pub fn random_smooth(problem: &Problem, u: &[Amb], seed: u64, modes: usize) -> Self {
        let mut rng = substream(seed, "variation_field");
        let q = problem.target.ambient_dim();
        let all: Vec<usize> = (0..q).collect();
        let raw = problem.surface.smooth_random_field(&mut rng, q, modes, &all);
        VariationField {
            xi: u.iter().zip(raw).map(|(p, x)| problem.target.projector_unchecked(p) * x).collect(),
        }
    }

    /// `∫ |ξ|²` with the vertex areas.
    pub fn l2_norm_squared(&self, problem: &Problem) -> f64 {
        self.xi.iter().zip(problem.surface.area_weights()).map(|(x, a)| a * x.norm_squared()).sum()
    }
}

pub fn second_variation(problem: &Problem, u: &[Amb], xi: &VariationField) -> Result<f64> {
    problem.check_on_manifold(u)?;
    problem.check_shape(&xi.xi)?;
    let (s, t, f) = (&problem.surface, &problem.target, &problem.fields);
    let xi = &xi.xi;
    let proj = problem.projectors(u);
    let with_z = !f.z_vanishes();
    let mut total = 0.0;
    for face in s.faces() {
        let dx = face_gradient(face, xi);
        total += face.area * (dx[0].norm_squared() + dx[1].norm_squared());
        if !with_z {
            continue;
        }
        let du = face_gradient(face, u);
        for (&m, &w) in face.v.iter().zip(&face.corner_area) {
            let p = &proj[m];
            let (d1, d2) = (p * du[0], p * du[1]);
            let (n1, n2) = (p * dx[0], p * dx[1]);
            let x = &xi[m];
            let mut val = x.dot(&f.nabla_z(t, &u[m], x, &d1, &d2)?);
            val += x.dot(&f.z_with_projector(&u[m], p, &n1, &d2));
            val += x.dot(&f.z_with_projector(&u[m], p, &d1, &n2));
            total += w * val;
        }
    }
    let lap = s.laplacian(u)?;
    for (m, a) in s.area_weights().iter().enumerate() {
        total -= a * lap[m].dot(&t.second_fundamental_unchecked(&u[m], &xi[m], &xi[m]));
    }
    let r = s.scalar_curvature();
    if r != 0.0 && !f.v_vanishes() {
        for (m, a) in s.area_weights().iter().enumerate() {
            total += a * r * f.hess_v_unchecked(t, &u[m], &proj[m], &xi[m], &xi[m]);
        }
    }
    Ok(total)
}

/// `[E(π(u + hξ)) - 2E(u) + E(π(u - hξ))] / h²` with the discrete energy.
pub fn second_variation_fd(problem: &Problem, u: &[Amb], xi: &VariationField, h: f64) -> Result<f64> {
    let shifted = |sign: f64| -> Result<Vec<Amb>> { u.iter().zip(&xi.xi).map(|(p, x)| problem.target.project(&(p + x * (sign * h)))).collect() };
    let e = |v: &[Amb]| -> Result<f64> {
        energy(problem, v)?
            .total()
            .ok_or_else(|| Error::InvalidField("energy needs B; only Ω was supplied".into()))
    };
    Ok((e(&shifted(1.0)?)? - 2.0 * e(u)? + e(&shifted(-1.0)?)?) / (h * h))
}

/// Second variation along `count` seeded smooth directions, each divided by
/// `∫|ξ|²`. Non-negative values (up to mesh error) indicate a local minimum.
pub fn minimizing_check(problem: &Problem, u: &[Amb], count: usize, seed: u64) -> Result<Vec<f64>> {
    (0..count as u64)
        .map(|k| {
            let xi = VariationField::random_smooth(problem, u, seed.wrapping_add(k), 3);
            let n = xi.l2_norm_squared(problem);
            Ok(if n > 0.0 { second_variation(problem, u, &xi)? / n } else { 0.0 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldPack, PotentialKind, TwoFormKind};
    use crate::linalg::amb;
    use crate::surface::DiscreteSurface;
    use crate::target::{EmbeddedTarget, TargetKind};

    #[test]
    fn constant_variation_of_quadratic_potential() {
        let f = FieldPack::new(3, PotentialKind::Quadratic { center: [0.0; 4], c: 1.0 }, TwoFormKind::Zero).unwrap();
        let p = Problem::new(DiscreteSurface::sphere(4).unwrap(), EmbeddedTarget::new(TargetKind::Euclidean3).unwrap(), f).unwrap();
        let u = vec![Amb::zeros(); p.surface.vertex_count()];
        let c = amb(&[0.3, -0.4, 1.2]);
        let xi = VariationField::constant_projected(&p, &u, c);
        let q = second_variation(&p, &u, &xi).unwrap();
        let area = p.surface.total_area();
        // 2 · 2|c|² · area
        assert!((q - 4.0 * c.norm_squared() * area).abs() < 1e-10);
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn dirichlet_part_is_non_negative() {
        let p = Problem::new(DiscreteSurface::sphere(3).unwrap(), EmbeddedTarget::new(TargetKind::Euclidean3).unwrap(), FieldPack::zero(3)).unwrap();
        let u = vec![Amb::zeros(); p.surface.vertex_count()];
        let xi = VariationField::random_smooth(&p, &u, 3, 3);
        assert!(second_variation(&p, &u, &xi).unwrap() > 0.0);
        let c = VariationField::constant_projected(&p, &u, amb(&[1.0, 0.0, 0.0]));
        assert!(second_variation(&p, &u, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_normal_fields() {
        let p = Problem::new(DiscreteSurface::sphere(2).unwrap(), EmbeddedTarget::new(TargetKind::Sphere2).unwrap(), FieldPack::zero(3)).unwrap();
        let u: Vec<Amb> = p.surface.positions().iter().map(|x| amb(&[x.x, x.y, x.z])).collect();
        assert!(VariationField::new(&p, &u, u.clone()).is_err());
    }
}
