use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::error::{Error, Result};
use crate::linalg::{amb, Amb};
use crate::rng::substream;
use crate::surface::SurfaceKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMap {
    Constant { point: [f64; 4] },
    /// Torus domain: `(cos 2πx/Lx, sin 2πx/Lx, 0)`.
    Equator,
    /// Torus domain onto `S¹ × S¹`.
    TorusWrap,
    /// Sphere domain: the inclusion of the unit sphere.
    Identity,
    /// Sphere domain: `r (x, y, ±z)`; the sign flips the orientation.
    RadialSphere { radius: f64, orientation: f64 },
}

/// Seeded smooth perturbation added before projecting onto `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    pub amplitude: f64,
    pub modes: usize,
    /// Ambient components that are perturbed.
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialMap {
    pub base: BaseMap,
    pub perturbation: Option<Perturbation>,
}

impl InitialMap {
    pub fn plain(base: BaseMap) -> Self {
        InitialMap { base, perturbation: None }
    }

    pub fn perturbed(base: BaseMap, seed: u64, amplitude: f64, components: Vec<usize>) -> Self {
        InitialMap {
            base,
            perturbation: Some(Perturbation {
                seed,
                amplitude,
                modes: 3,
                components,
            }),
        }
    }

    pub fn base_values(&self, problem: &Problem) -> Result<Vec<Amb>> {
        let s = &problem.surface;
        let kind = s.kind();
        let wrong = |what: &str| Err(Error::InvalidArgument(format!("initial map {what} is not defined on a {} domain", kind.name())));
        let u = match self.base {
            BaseMap::Constant { point } => vec![Amb::from(point); s.vertex_count()],
            BaseMap::Equator | BaseMap::TorusWrap => {
                let SurfaceKind::Torus { lx, ly, .. } = kind else {
                    return wrong("equator/torus_wrap");
                };
                s.positions()
                    .iter()
                    .map(|x| {
                        let (a, b) = (TAU * x.x / lx, TAU * x.y / ly);
                        if self.base == BaseMap::Equator {
                            amb(&[a.cos(), a.sin(), 0.0])
                        } else {
                            amb(&[a.cos(), a.sin(), b.cos(), b.sin()])
                        }
                    })
                    .collect()
            }
            BaseMap::Identity | BaseMap::RadialSphere { .. } => {
                if !matches!(kind, SurfaceKind::Sphere { .. }) {
                    return wrong("identity/radial_sphere");
                }
                let (r, o) = match self.base {
                    BaseMap::RadialSphere { radius, orientation } => (radius, orientation.signum()),
                    _ => (1.0, 1.0),
                };
                s.positions().iter().map(|x| amb(&[r * x.x, r * x.y, r * o * x.z])).collect()
            }
        };
        Ok(u)
    }

    /// Values on `N`: base map plus perturbation, projected pointwise.
    pub fn build(&self, problem: &Problem) -> Result<Vec<Amb>> {
        let mut u = self.base_values(problem)?;
        if let Some(p) = &self.perturbation {
            let mut rng = substream(p.seed, "initial_perturbation");
            let q = problem.target.ambient_dim();
            let field = problem.surface.smooth_random_field(&mut rng, q, p.modes, &p.components);
            for (x, d) in u.iter_mut().zip(field) {
                *x += d * p.amplitude;
            }
        }
        u.iter().map(|x| problem.target.project(x)).collect()
    }
}
