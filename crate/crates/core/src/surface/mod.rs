//! Discrete closed domain surfaces `(M, h)` and their differential operators.
//!
//! Every domain is stored as a triangulation with P1 (piecewise linear)
//! interpolation:
//!
//! * per-face oriented orthonormal frames `(e1, e2)` and hat-function
//!   gradients, so `du(e_α)` is constant on each face;
//! * vertex areas (`area_weights`): barycentric on the grids, circumcentric
//!   on the icosphere, where barycentric areas leave the cotangent Laplacian
//!   pointwise inconsistent (an O(1) error along the icosahedron seams). The
//!   sphere areas are rescaled per face to the geodesic triangle, so they sum
//!   to 4π;
//! * cotangent weights, giving `Δf_i = Σ_j w_ij (f_j - f_i) / A_i`.
//!
//! On the grid domains the right triangles have a zero cotangent weight on
//! the diagonal, so the stencil is exactly the 5-point Laplacian and the
//! vertex areas are the uniform cell areas. The Dirichlet energy
//! `½ Σ_f A_f |du_f|²` equals `-½ ∫⟨u, Δu⟩`, which keeps the discrete flow an
//! exact gradient flow of the discrete energy.

mod build;
mod eigen;
mod jets;

use std::f64::consts::PI;

use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Amb, Pos};

pub use jets::{Jet, JetStencil};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    Torus { n: usize, lx: f64, ly: f64 },
    Sphere { subdiv: usize },
    PlanarPatch { n: usize, side: f64 },
}

impl SurfaceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SurfaceKind::Torus { .. } => "torus",
            SurfaceKind::Sphere { .. } => "sphere",
            SurfaceKind::PlanarPatch { .. } => "planar_patch",
        }
    }

    /// Scalar curvature implied by the geometry.
    pub fn geometric_scalar_curvature(&self) -> f64 {
        match self {
            SurfaceKind::Sphere { .. } => 2.0,
            _ => 0.0,
        }
    }
}

/// A triangle with its oriented frame and hat-function gradients.
#[derive(Debug, Clone)]
pub struct Face {
    pub v: [usize; 3],
    pub area: f64,
    /// Share of `area` credited to each corner's vertex area; per-corner
    /// quadratures use these so that they sum to `area_weights`.
    pub corner_area: [f64; 3],
    pub frame: [Pos; 2],
    pub normal: Pos,
    /// `grad[k][α]`: derivative of the hat function of corner `k` along `e_α`.
    pub grad: [[f64; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct DiscreteSurface {
    kind: SurfaceKind,
    positions: Vec<Pos>,
    faces: Vec<Face>,
    area_weights: Vec<f64>,
    lap_offsets: Vec<usize>,
    lap_cols: Vec<usize>,
    lap_weights: Vec<f64>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_frames: Vec<[Pos; 2]>,
    jets: Vec<JetStencil>,
    scalar_curvature: f64,
    curvature_overridden: bool,
    mesh_parameter: f64,
}

impl DiscreteSurface {
    /// Periodic `n × n` grid on `[0, lx) × [0, ly)`.
    pub fn torus(n: usize, lx: f64, ly: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidResolution(format!("torus needs n >= 8, got {n}")));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidArgument(format!("torus side lengths must be positive, got {lx} x {ly}")));
        }
        let raw = build::grid(n, lx, ly, true, [0.0, 0.0]);
        let kind = SurfaceKind::Torus { n, lx, ly };
        let jets = jets::grid_stencils(n, lx / n as f64, ly / n as f64);
        Ok(Self::from_raw(kind, raw, jets, (lx / n as f64).max(ly / n as f64)))
    }

    /// Unit icosphere; `subdiv = 1` is the icosahedron, each further level
    /// splits every triangle in four.
    pub fn sphere(subdiv: usize) -> Result<Self> {
        if !(1..=8).contains(&subdiv) {
            return Err(Error::InvalidResolution(format!("sphere subdiv must be in 1..=8, got {subdiv}")));
        }
        let raw = build::icosphere(subdiv);
        let kind = SurfaceKind::Sphere { subdiv };
        Self::finish_mesh(kind, raw)
    }

    /// Open square grid `[-side/2, side/2]²` centred on the origin. Only used
    /// for ball integrals around the centre vertex.
    pub fn planar_patch(n: usize, side: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidResolution(format!("planar patch needs n >= 3, got {n}")));
        }
        if side <= 0.0 {
            return Err(Error::InvalidArgument(format!("patch side must be positive, got {side}")));
        }
        let raw = build::grid(n, side, side, false, [-side / 2.0, -side / 2.0]);
        Self::finish_mesh(SurfaceKind::PlanarPatch { n, side }, raw)
    }

    pub fn from_kind(kind: SurfaceKind) -> Result<Self> {
        match kind {
            SurfaceKind::Torus { n, lx, ly } => Self::torus(n, lx, ly),
            SurfaceKind::Sphere { subdiv } => Self::sphere(subdiv),
            SurfaceKind::PlanarPatch { n, side } => Self::planar_patch(n, side),
        }
    }

    fn finish_mesh(kind: SurfaceKind, raw: build::RawMesh) -> Result<Self> {
        let mut s = Self::from_raw(kind, raw, Vec::new(), 0.0);
        s.jets = jets::fitted_stencils(&s);
        Ok(s)
    }

    fn from_raw(kind: SurfaceKind, raw: build::RawMesh, jets: Vec<JetStencil>, h: f64) -> Self {
        let a = build::assemble(&raw);
        let vertex_frames = match kind {
            SurfaceKind::Sphere { .. } => raw.positions.iter().map(|p| tangent_frame(&p.normalize())).collect(),
            _ => vec![[Pos::new(1.0, 0.0, 0.0), Pos::new(0.0, 1.0, 0.0)]; raw.positions.len()],
        };
        DiscreteSurface {
            kind,
            positions: raw.positions,
            faces: a.faces,
            area_weights: a.area_weights,
            lap_offsets: a.offsets,
            lap_cols: a.cols,
            lap_weights: a.weights,
            vertex_faces: a.vertex_faces,
            vertex_frames,
            jets,
            scalar_curvature: kind.geometric_scalar_curvature(),
            curvature_overridden: false,
            mesh_parameter: if h > 0.0 { h } else { a.mean_edge },
        }
    }

    /// Replaces the scalar curvature used in the energy. The geometry (and
    /// the Ricci term of the Bochner formulas) is left untouched.
    pub fn with_scalar_curvature_override(mut self, r: f64) -> Self {
        self.scalar_curvature = r;
        self.curvature_overridden = true;
        self
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
    pub fn positions(&self) -> &[Pos] {
        &self.positions
    }
    pub fn faces(&self) -> &[Face] {
        &self.faces
    }
    pub fn area_weights(&self) -> &[f64] {
        &self.area_weights
    }
    pub fn vertex_faces(&self, i: usize) -> &[usize] {
        &self.vertex_faces[i]
    }
    pub fn vertex_frame(&self, i: usize) -> &[Pos; 2] {
        &self.vertex_frames[i]
    }
    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }
    pub fn curvature_overridden(&self) -> bool {
        self.curvature_overridden
    }
    /// Gauss curvature of the domain geometry (`Ric = K h` on a surface).
    pub fn gauss_curvature(&self) -> f64 {
        self.kind.geometric_scalar_curvature() / 2.0
    }
    pub fn mesh_parameter(&self) -> f64 {
        self.mesh_parameter
    }
    pub fn total_area(&self) -> f64 {
        self.area_weights.iter().sum()
    }
    pub fn is_closed(&self) -> bool {
        !matches!(self.kind, SurfaceKind::PlanarPatch { .. })
    }

    /// Off-diagonal stencil row of vertex `i` as `(neighbour, weight)` pairs.
    pub fn stencil_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.lap_offsets[i]..self.lap_offsets[i + 1];
        self.lap_cols[r.clone()].iter().copied().zip(self.lap_weights[r].iter().copied())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.vertex_count() {
            return Err(Error::ShapeMismatch {
                expected: self.vertex_count(),
                got,
            });
        }
        Ok(())
    }

    /// `Δf` with the geometer's sign (non-positive spectrum).
    pub fn laplacian<T>(&self, field: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Zero + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        self.check_len(field.len())?;
        Ok((0..field.len()).map(|i| self.laplacian_at(field, i)).collect())
    }

    #[inline]
    pub fn laplacian_at<T>(&self, field: &[T], i: usize) -> T
    where
        T: Copy + Zero + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let fi = field[i];
        let mut acc = T::zero();
        for (j, w) in self.stencil_row(i) {
            acc = acc + (field[j] - fi) * w;
        }
        acc * (1.0 / self.area_weights[i])
    }

    /// Per-face directional derivatives `(du(e1), du(e2))`.
    pub fn gradient_frame(&self, u: &[Amb]) -> Result<Vec<[Amb; 2]>> {
        self.check_len(u.len())?;
        Ok(self.faces.iter().map(|f| face_gradient(f, u)).collect())
    }

    /// `Σ f_i w_i` for per-vertex (vertex areas) or per-face (face areas) data.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() == self.vertex_count() {
            Ok(f.iter().zip(&self.area_weights).map(|(a, b)| a * b).sum())
        } else if f.len() == self.face_count() {
            Ok(f.iter().zip(&self.faces).map(|(a, face)| a * face.area).sum())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.vertex_count(),
                got: f.len(),
            })
        }
    }

    /// Smallest nonzero eigenvalue of `-Δ`.
    pub fn first_eigenvalue(&self) -> Result<f64> {
        eigen::first_eigenvalue(self, 500)
    }

    pub fn first_eigenvalue_with(&self, max_iterations: usize) -> Result<f64> {
        eigen::first_eigenvalue(self, max_iterations)
    }

    /// Gershgorin bound on the spectrum of `-Δ` turned into the explicit
    /// Euler stability limit `2 / λ_max` (`h²/4` on a square grid).
    pub fn stability_limit(&self) -> f64 {
        let mut lmax: f64 = 0.0;
        for i in 0..self.vertex_count() {
            let s: f64 = self.stencil_row(i).map(|(_, w)| w.abs()).sum();
            let d: f64 = self.stencil_row(i).map(|(_, w)| w).sum::<f64>().abs();
            lmax = lmax.max((s + d) / self.area_weights[i]);
        }
        2.0 / lmax
    }

    pub fn jet_stencil(&self, i: usize) -> &JetStencil {
        &self.jets[i]
    }

    /// First and second derivatives of `u` at every vertex in the vertex frame.
    pub fn jets(&self, u: &[Amb]) -> Result<Vec<Jet<Amb>>> {
        self.check_len(u.len())?;
        Ok((0..u.len()).map(|i| self.jets[i].apply(u, i)).collect())
    }

    pub fn scalar_jets(&self, f: &[f64]) -> Result<Vec<Jet<f64>>> {
        self.check_len(f.len())?;
        Ok((0..f.len()).map(|i| self.jets[i].apply(f, i)).collect())
    }

    /// Geodesic distance between vertex `i` and vertex `j`.
    pub fn geodesic_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        match self.kind {
            SurfaceKind::Torus { lx, ly, .. } => {
                let wrap = |d: f64, l: f64| d - l * (d / l).round();
                wrap(a.x - b.x, lx).hypot(wrap(a.y - b.y, ly))
            }
            SurfaceKind::Sphere { .. } => a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos(),
            SurfaceKind::PlanarPatch { .. } => (a - b).norm(),
        }
    }

    /// Largest radius for which metric balls around `i` stay embedded balls.
    pub fn ball_radius_limit(&self, i: usize) -> f64 {
        match self.kind {
            SurfaceKind::Torus { lx, ly, .. } => lx.min(ly) / 2.0,
            SurfaceKind::Sphere { .. } => PI,
            SurfaceKind::PlanarPatch { side, .. } => {
                let p = self.positions[i];
                (side / 2.0 - p.x.abs()).min(side / 2.0 - p.y.abs())
            }
        }
    }

    /// Smooth seeded field with values in the first `q` ambient coordinates,
    /// normalized to unit sup norm. Torus fields are periodic Fourier sums;
    /// other domains use plane waves in the embedding coordinates.
    pub fn smooth_random_field<R: Rng>(&self, rng: &mut R, q: usize, modes: usize, mask: &[usize]) -> Vec<Amb> {
        let modes = modes.max(1) as i64;
        let mut waves: Vec<(Pos, f64, Amb)> = Vec::new();
        let coef = |rng: &mut R| {
            let mut c = Amb::zeros();
            for &k in mask.iter().filter(|&&k| k < q) {
                c[k] = rng.gen_range(-1.0..1.0);
            }
            c
        };
        match self.kind {
            SurfaceKind::Torus { lx, ly, .. } => {
                for kx in -modes..=modes {
                    for ky in 0..=modes {
                        if ky == 0 && kx <= 0 {
                            continue;
                        }
                        let k = Pos::new(2.0 * PI * kx as f64 / lx, 2.0 * PI * ky as f64 / ly, 0.0);
                        let phase = rng.gen_range(0.0..2.0 * PI);
                        let decay = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
                        waves.push((k, phase, coef(rng) * decay));
                    }
                }
            }
            _ => {
                for m in 1..=modes {
                    for _ in 0..3 {
                        let dir = Pos::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        let dir = if dir.norm() > 1e-3 { dir.normalize() } else { Pos::new(0.0, 0.0, 1.0) };
                        let phase = rng.gen_range(0.0..2.0 * PI);
                        waves.push((dir * (m as f64), phase, coef(rng) / (m * m) as f64));
                    }
                }
            }
        }
        let mut out: Vec<Amb> = self
            .positions
            .iter()
            .map(|p| {
                let mut v = Amb::zeros();
                for (k, phase, c) in &waves {
                    v += c * (k.dot(p) + phase).cos();
                }
                v
            })
            .collect();
        let sup = crate::linalg::sup_norm(&out);
        if sup > 0.0 {
            for v in out.iter_mut() {
                *v /= sup;
            }
        }
        out
    }
}

#[inline]
pub fn face_gradient(f: &Face, u: &[Amb]) -> [Amb; 2] {
    let (a, b, c) = (u[f.v[0]], u[f.v[1]], u[f.v[2]]);
    [
        a * f.grad[0][0] + b * f.grad[1][0] + c * f.grad[2][0],
        a * f.grad[0][1] + b * f.grad[1][1] + c * f.grad[2][1],
    ]
}

fn tangent_frame(n: &Pos) -> [Pos; 2] {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Pos::new(1.0, 0.0, 0.0)
    } else if n.y.abs() <= n.z.abs() {
        Pos::new(0.0, 1.0, 0.0)
    } else {
        Pos::new(0.0, 0.0, 1.0)
    };
    let e1 = (axis - n * n.dot(&axis)).normalize();
    let e2 = n.cross(&e1);
    [e1, e2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_area_and_weights() {
        let s = DiscreteSurface::torus(8, 1.0, 1.0).unwrap();
        assert!((s.total_area() - 1.0).abs() < 1e-12);
        let s = DiscreteSurface::torus(16, 2.0, 1.0).unwrap();
        for w in s.area_weights() {
            assert!((w - 0.0078125).abs() < 1e-15);
        }
        assert_eq!(DiscreteSurface::torus(64, 1.0, 1.0).unwrap().scalar_curvature(), 0.0);
    }

    #[test]
    fn torus_rejects_coarse_grids() {
        assert!(matches!(DiscreteSurface::torus(7, 1.0, 1.0), Err(Error::InvalidResolution(_))));
    }

    #[test]
    fn sphere_range_and_curvature() {
        assert!(DiscreteSurface::sphere(0).is_err());
        assert!(DiscreteSurface::sphere(9).is_err());
        assert_eq!(DiscreteSurface::sphere(2).unwrap().scalar_curvature(), 2.0);
    }

    #[test]
    fn torus_stencil_is_five_point() {
        let n = 16;
        let s = DiscreteSurface::torus(n, 1.0, 1.0).unwrap();
        let row: Vec<_> = s.stencil_row(0).collect();
        assert_eq!(row.len(), 4);
        for (_, w) in row {
            assert!((w - 1.0).abs() < 1e-14);
        }
        let s = DiscreteSurface::torus(n, 2.0, 1.0).unwrap();
        let mut ws: Vec<f64> = s.stencil_row(0).map(|(_, w)| w).collect();
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ws[0] - 0.5).abs() < 1e-14 && (ws[3] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        for s in [DiscreteSurface::sphere(3).unwrap(), DiscreteSurface::planar_patch(9, 2.0).unwrap()] {
            let ones = vec![1.0; s.vertex_count()];
            for v in s.laplacian(&ones).unwrap() {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let s = DiscreteSurface::torus(8, 1.0, 1.0).unwrap();
        assert!(matches!(s.laplacian(&[0.0; 3]), Err(Error::ShapeMismatch { .. })));
        assert!(s.integrate(&[1.0; 5]).is_err());
        assert!(s.gradient_frame(&[Amb::zeros(); 3]).is_err());
    }

    #[test]
    fn sphere_frames_are_oriented_outward() {
        let s = DiscreteSurface::sphere(3).unwrap();
        for f in s.faces() {
            let [e1, e2] = f.frame;
            assert!((e1.norm() - 1.0).abs() < 1e-12 && (e2.norm() - 1.0).abs() < 1e-12);
            assert!(e1.dot(&e2).abs() < 1e-12);
            let c = s.positions()[f.v[0]] + s.positions()[f.v[1]] + s.positions()[f.v[2]];
            assert!(e1.cross(&e2).dot(&c) > 0.0);
        }
    }

    #[test]
    fn stability_limit_matches_grid_rule() {
        let s = DiscreteSurface::torus(32, 1.0, 1.0).unwrap();
        let h = 1.0 / 32.0;
        assert!((s.stability_limit() - h * h / 4.0).abs() < 1e-15);
    }
}
