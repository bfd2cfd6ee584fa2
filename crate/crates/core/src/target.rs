//! Target manifolds `N ⊂ R^q` given by closest-point projection.
//!
//! Every target is a level set (or an intersection of level sets with
//! mutually orthogonal normals) of functions `F_k`. The extrinsic data are
//! derived from these: the tangent projector `P = I - Σ ν_k ν_kᵀ` and the
//! vector-valued second fundamental form
//!
//! ```text
//! II(X, Y) = -Σ_k (Xᵀ ∇²F_k Y / |∇F_k|) ν_k,
//! ```
//!
//! so that for the unit sphere `II(X, X) = -|X|² p`, the normal part of the
//! acceleration of a curve on `N`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{amb, identity, orthonormalize, Amb, AmbMat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    Euclidean3,
    Sphere2,
    Sphere3,
    /// `S¹ × S¹ ⊂ R⁴` with unit circles.
    CliffordTorus,
    /// Catenoid `(cosh v cos w, cosh v sin w, v)` restricted to `|v| ≤ 2`.
    CatenoidBand,
    Ellipsoid { axes: [f64; 3] },
}

const CATENOID_HALF_HEIGHT: f64 = 2.0;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone)]
pub struct EmbeddedTarget {
    kind: TargetKind,
    ambient_dim: usize,
    intrinsic_dim: usize,
    curvature_upper_bound: f64,
    projection_tolerance: f64,
    /// Distance beyond which a point counts as off-manifold.
    manifold_tolerance: f64,
}

/// One defining function at a point: unit normal, `|∇F|` and `∇²F`.
#[derive(Clone, Copy)]
struct Level {
    normal: Amb,
    grad_norm: f64,
    hessian: AmbMat,
}

/// At most two defining functions, kept on the stack.
struct Levels {
    items: [Level; 2],
    len: usize,
}

impl std::ops::Deref for Levels {
    type Target = [Level];
    fn deref(&self) -> &[Level] {
        &self.items[..self.len]
    }
}

impl EmbeddedTarget {
    pub fn new(kind: TargetKind) -> Result<Self> {
        let (q, d) = match kind {
            TargetKind::Euclidean3 => (3, 3),
            TargetKind::Sphere2 => (3, 2),
            TargetKind::Sphere3 => (4, 3),
            TargetKind::CliffordTorus => (4, 2),
            TargetKind::CatenoidBand => (3, 2),
            TargetKind::Ellipsoid { axes } => {
                if axes.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::InvalidArgument(format!("ellipsoid semi-axes must be positive: {axes:?}")));
                }
                (3, 2)
            }
        };
        let kappa = match kind {
            TargetKind::Euclidean3 | TargetKind::CliffordTorus | TargetKind::CatenoidBand => 0.0,
            TargetKind::Sphere2 | TargetKind::Sphere3 => 1.0,
            TargetKind::Ellipsoid { axes } => {
                // Gauss curvature at the vertex on axis i is a_i² / (a_j² a_k²).
                let p2: f64 = axes.iter().map(|a| a * a).product();
                axes.iter().map(|a| a.powi(4) / p2).fold(f64::MIN, f64::max)
            }
        };
        Ok(EmbeddedTarget {
            kind,
            ambient_dim: q,
            intrinsic_dim: d,
            curvature_upper_bound: kappa,
            projection_tolerance: 1e-12,
            manifold_tolerance: 1e-8,
        })
    }

    pub fn with_projection_tolerance(mut self, tol: f64) -> Self {
        self.projection_tolerance = tol;
        self.manifold_tolerance = self.manifold_tolerance.max(100.0 * tol);
        self
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }
    pub fn name(&self) -> &'static str {
        match self.kind {
            TargetKind::Euclidean3 => "euclidean3",
            TargetKind::Sphere2 => "sphere2",
            TargetKind::Sphere3 => "sphere3",
            TargetKind::CliffordTorus => "clifford_torus",
            TargetKind::CatenoidBand => "catenoid_band",
            TargetKind::Ellipsoid { .. } => "ellipsoid",
        }
    }
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }
    /// Supremum of the sectional curvature (the literal upper bound).
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_upper_bound
    }
    pub fn projection_tolerance(&self) -> f64 {
        self.projection_tolerance
    }
    pub fn is_compact(&self) -> bool {
        !matches!(self.kind, TargetKind::Euclidean3 | TargetKind::CatenoidBand)
    }

    fn domain_error(&self, y: &Amb) -> Error {
        Error::ProjectionDomain {
            target: self.name().into(),
            point: y.iter().take(self.ambient_dim).copied().collect(),
        }
    }

    /// Closest point on `N`.
    pub fn project(&self, y: &Amb) -> Result<Amb> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(self.domain_error(y));
        }
        match self.kind {
            TargetKind::Euclidean3 => Ok(amb(&[y[0], y[1], y[2]])),
            TargetKind::Sphere2 | TargetKind::Sphere3 => {
                let mut z = *y;
                if self.ambient_dim == 3 {
                    z[3] = 0.0;
                }
                let n = z.norm();
                if n < 1e-9 {
                    return Err(self.domain_error(y));
                }
                Ok(z / n)
            }
            TargetKind::CliffordTorus => {
                let a = (y[0] * y[0] + y[1] * y[1]).sqrt();
                let b = (y[2] * y[2] + y[3] * y[3]).sqrt();
                if a < 1e-9 || b < 1e-9 {
                    return Err(self.domain_error(y));
                }
                Ok(amb(&[y[0] / a, y[1] / a, y[2] / b, y[3] / b]))
            }
            TargetKind::Ellipsoid { axes } => self.project_ellipsoid(y, axes),
            TargetKind::CatenoidBand => self.project_catenoid(y),
        }
    }

    /// Closest point `x_i = y_i a_i² / (a_i² + t)` where `t` is the root of
    /// `g(t) = Σ (a_i y_i / (a_i² + t))² - 1`, found by damped Newton from a
    /// lattice-sampled starting point.
    fn project_ellipsoid(&self, y: &Amb, a: [f64; 3]) -> Result<Amb> {
        let amin = a.iter().copied().fold(f64::INFINITY, f64::min);
        let amax = a.iter().copied().fold(0.0, f64::max);
        let x = |t: f64| amb(&[y[0] * a[0] * a[0] / (a[0] * a[0] + t), y[1] * a[1] * a[1] / (a[1] * a[1] + t), y[2] * a[2] * a[2] / (a[2] * a[2] + t)]);
        let g = |t: f64| (0..3).map(|i| (a[i] * y[i] / (a[i] * a[i] + t)).powi(2)).sum::<f64>() - 1.0;
        let dg = |t: f64| (0..3).map(|i| -2.0 * (a[i] * y[i]).powi(2) / (a[i] * a[i] + t).powi(3)).sum::<f64>();
        // g is decreasing on t > -amin²; the root is bracketed there.
        let lo_bound = -amin * amin;
        let mut t = {
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=16 {
                let cand = lo_bound * (1.0 - k as f64 / 16.0) * 0.999 + (k as f64 / 16.0) * 4.0 * amax * amax;
                let gv = g(cand).abs();
                if gv < best.0 {
                    best = (gv, cand);
                }
            }
            best.1
        };
        for it in 0..NEWTON_MAX_ITER {
            let gv = g(t);
            let xt = x(t);
            let level = (0..3).map(|i| (xt[i] / a[i]).powi(2)).sum::<f64>() - 1.0;
            if level.abs() <= self.projection_tolerance {
                let dist = (xt - amb(&[y[0], y[1], y[2]])).norm();
                if dist >= amin * amin / amax {
                    return Err(self.domain_error(y));
                }
                return Ok(xt);
            }
            let d = dg(t);
            let mut step = -gv / d;
            // damping keeps t inside the monotone branch
            while t + step <= lo_bound {
                step *= 0.5;
            }
            t += step;
            if !t.is_finite() || it + 1 == NEWTON_MAX_ITER {
                return Err(Error::ProjectionNonConvergence {
                    target: self.name().into(),
                    iterations: NEWTON_MAX_ITER,
                    residual: level.abs(),
                });
            }
        }
        unreachable!()
    }

    /// Closest point on the catenoid: the angle is shared with `y`, the
    /// profile parameter `v` minimizes `(cosh v - ρ)² + (v - z)²`.
    fn project_catenoid(&self, y: &Amb) -> Result<Amb> {
        let rho = y[0].hypot(y[1]);
        let z = y[2];
        if rho < 1e-9 {
            return Err(self.domain_error(y));
        }
        let f = |v: f64| 0.5 * ((v.cosh() - rho).powi(2) + (v - z).powi(2));
        let df = |v: f64| (v.cosh() - rho) * v.sinh() + (v - z);
        let ddf = |v: f64| v.sinh().powi(2) + (v.cosh() - rho) * v.cosh() + 1.0;
        let lim = CATENOID_HALF_HEIGHT + 0.5;
        let mut v = (0..=40)
            .map(|k| -lim + 2.0 * lim * k as f64 / 40.0)
            .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let g = df(v);
            let h = ddf(v);
            let mut step = if h > 1e-12 { -g / h } else { -g };
            let f0 = f(v);
            let mut damp = 0;
            while f(v + step) > f0 && damp < 30 {
                step *= 0.5;
                damp += 1;
            }
            v += step;
            if step.abs() <= self.projection_tolerance * (1.0 + v.abs()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ProjectionNonConvergence {
                target: self.name().into(),
                iterations: NEWTON_MAX_ITER,
                residual: df(v).abs(),
            });
        }
        if v.abs() > CATENOID_HALF_HEIGHT {
            return Err(self.domain_error(y));
        }
        let (c, s) = (y[0] / rho, y[1] / rho);
        let p = amb(&[v.cosh() * c, v.cosh() * s, v]);
        // principal curvatures are bounded by 1, so the tubular radius is 1
        if (p - amb(&[y[0], y[1], y[2]])).norm() >= 1.0 {
            return Err(self.domain_error(y));
        }
        Ok(p)
    }

    fn levels(&self, p: &Amb) -> Levels {
        let hess = |d: [f64; 4]| AmbMat::from_diagonal(&Amb::from(d));
        let make = |grad: Amb, hessian: AmbMat| {
            let grad_norm = grad.norm();
            Level {
                normal: grad / grad_norm,
                grad_norm,
                hessian,
            }
        };
        let none = Level {
            normal: Amb::zeros(),
            grad_norm: 1.0,
            hessian: AmbMat::zeros(),
        };
        let one = |l: Level| Levels { items: [l, none], len: 1 };
        match self.kind {
            TargetKind::Euclidean3 => Levels { items: [none, none], len: 0 },
            TargetKind::Sphere2 => one(make(amb(&[2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]), hess([2.0, 2.0, 2.0, 0.0]))),
            TargetKind::Sphere3 => one(make(p * 2.0, hess([2.0; 4]))),
            TargetKind::CliffordTorus => Levels {
                items: [
                    make(amb(&[2.0 * p[0], 2.0 * p[1], 0.0, 0.0]), hess([2.0, 2.0, 0.0, 0.0])),
                    make(amb(&[0.0, 0.0, 2.0 * p[2], 2.0 * p[3]]), hess([0.0, 0.0, 2.0, 2.0])),
                ],
                len: 2,
            },
            TargetKind::Ellipsoid { axes: a } => {
                let g = amb(&[2.0 * p[0] / (a[0] * a[0]), 2.0 * p[1] / (a[1] * a[1]), 2.0 * p[2] / (a[2] * a[2])]);
                one(make(g, hess([2.0 / (a[0] * a[0]), 2.0 / (a[1] * a[1]), 2.0 / (a[2] * a[2]), 0.0])))
            }
            TargetKind::CatenoidBand => {
                // F = x² + y² - cosh²z
                let g = amb(&[2.0 * p[0], 2.0 * p[1], -(2.0 * p[2]).sinh()]);
                one(make(g, hess([2.0, 2.0, -2.0 * (2.0 * p[2]).cosh(), 0.0])))
            }
        }
    }

    /// Distance from `p` to its projection.
    pub fn distance_to(&self, p: &Amb) -> Result<f64> {
        Ok((self.project(p)? - p).norm())
    }

    pub fn check_on_manifold(&self, p: &Amb) -> Result<()> {
        let d = match self.project(p) {
            Ok(x) => (x - p).norm(),
            Err(_) => f64::INFINITY,
        };
        if d > self.manifold_tolerance {
            return Err(Error::OffManifold { distance: d });
        }
        Ok(())
    }

    /// Orthogonal projector onto `T_pN` (no on-manifold check).
    pub fn projector_unchecked(&self, p: &Amb) -> AmbMat {
        let mut m = identity(self.ambient_dim);
        let unit = |v: Amb| v / v.norm();
        match self.kind {
            TargetKind::Euclidean3 => {}
            TargetKind::Sphere2 | TargetKind::Sphere3 => {
                let n = unit(*p);
                m -= n * n.transpose();
            }
            TargetKind::CliffordTorus => {
                for n in [unit(amb(&[p[0], p[1], 0.0, 0.0])), unit(amb(&[0.0, 0.0, p[2], p[3]]))] {
                    m -= n * n.transpose();
                }
            }
            _ => {
                for l in self.levels(p).iter() {
                    m -= l.normal * l.normal.transpose();
                }
            }
        }
        m
    }

    /// `P(p) v` without forming the projector.
    pub fn tangent_part(&self, p: &Amb, v: &Amb) -> Amb {
        match self.kind {
            TargetKind::Euclidean3 => amb(&[v[0], v[1], v[2]]),
            TargetKind::Sphere2 | TargetKind::Sphere3 => {
                let mut w = *v;
                if self.ambient_dim == 3 {
                    w[3] = 0.0;
                }
                w - p * (p.dot(&w) / p.norm_squared())
            }
            TargetKind::CliffordTorus => {
                let (a, b) = (p[0] * p[0] + p[1] * p[1], p[2] * p[2] + p[3] * p[3]);
                let (s, t) = ((p[0] * v[0] + p[1] * v[1]) / a, (p[2] * v[2] + p[3] * v[3]) / b);
                amb(&[v[0] - s * p[0], v[1] - s * p[1], v[2] - t * p[2], v[3] - t * p[3]])
            }
            _ => self.projector_unchecked(p) * v,
        }
    }

    /// `P M Pᵀ` for an antisymmetric `M`, using rank-one updates
    /// `M + n rᵀ - r nᵀ` with `r = M n` per unit normal where available.
    pub fn project_bivector(&self, p: &Amb, m: &AmbMat) -> AmbMat {
        let unit = |v: Amb| v / v.norm();
        let update = |m: &mut AmbMat, n: Amb| {
            let r = *m * n;
            *m += n * r.transpose() - r * n.transpose();
        };
        let mut out = *m;
        match self.kind {
            TargetKind::Euclidean3 => {}
            TargetKind::Sphere2 | TargetKind::Sphere3 => update(&mut out, unit(*p)),
            TargetKind::CliffordTorus => {
                update(&mut out, unit(amb(&[p[0], p[1], 0.0, 0.0])));
                update(&mut out, unit(amb(&[0.0, 0.0, p[2], p[3]])));
            }
            _ => {
                let proj = self.projector_unchecked(p);
                out = proj * m * proj.transpose();
            }
        }
        out
    }

    pub fn tangent_projector(&self, p: &Amb) -> Result<AmbMat> {
        self.check_on_manifold(p)?;
        Ok(self.projector_unchecked(p))
    }

    /// Second fundamental form; `X` and `Y` are projected to `T_pN` first.
    pub fn second_fundamental(&self, p: &Amb, x: &Amb, y: &Amb) -> Result<Amb> {
        self.check_on_manifold(p)?;
        Ok(self.second_fundamental_unchecked(p, x, y))
    }

    pub fn second_fundamental_unchecked(&self, p: &Amb, x: &Amb, y: &Amb) -> Amb {
        let levels = self.levels(p);
        let mut proj = identity(self.ambient_dim);
        for l in levels.iter() {
            proj -= l.normal * l.normal.transpose();
        }
        let (x, y) = (proj * x, proj * y);
        let mut out = Amb::zeros();
        for l in levels.iter() {
            out -= l.normal * (x.dot(&(l.hessian * y)) / l.grad_norm);
        }
        out
    }

    /// Orthonormal basis of `T_pN`.
    pub fn tangent_basis(&self, p: &Amb) -> Vec<Amb> {
        let proj = self.projector_unchecked(p);
        let mut b = orthonormalize((0..self.ambient_dim).map(|i| proj.column(i).into_owned()), 1e-6);
        b.truncate(self.intrinsic_dim);
        b
    }

    /// `⟨R(X,Y)X, Y⟩` from the Gauss equation,
    /// `⟨II(X,X), II(Y,Y)⟩ - |II(X,Y)|²`; equals `K |X ∧ Y|²`.
    pub fn curvature_term(&self, p: &Amb, x: &Amb, y: &Amb) -> f64 {
        let xx = self.second_fundamental_unchecked(p, x, x);
        let yy = self.second_fundamental_unchecked(p, y, y);
        let xy = self.second_fundamental_unchecked(p, x, y);
        xx.dot(&yy) - xy.norm_squared()
    }

    /// Deterministic sample point on `N`; the euclidean target is sampled in
    /// the ball of the given radius, the catenoid over the whole band.
    pub fn sample_point<R: Rng>(&self, rng: &mut R, radius: f64) -> Amb {
        fn gauss<R: Rng>(rng: &mut R, k: usize) -> Amb {
            let mut v = Amb::zeros();
            for i in 0..k {
                v[i] = rng.sample(StandardNormal);
            }
            v
        }
        match self.kind {
            TargetKind::Euclidean3 => {
                let d = gauss(rng, 3).normalize();
                d * radius * rng.gen::<f64>().cbrt()
            }
            TargetKind::Sphere2 => gauss(rng, 3).normalize(),
            TargetKind::Sphere3 => gauss(rng, 4).normalize(),
            TargetKind::CliffordTorus => {
                let g = gauss(rng, 4);
                let a = g[0].hypot(g[1]);
                let b = g[2].hypot(g[3]);
                amb(&[g[0] / a, g[1] / a, g[2] / b, g[3] / b])
            }
            TargetKind::Ellipsoid { axes } => {
                let d = gauss(rng, 3).normalize();
                amb(&[axes[0] * d[0], axes[1] * d[1], axes[2] * d[2]])
            }
            TargetKind::CatenoidBand => {
                let v = CATENOID_HALF_HEIGHT * rng.gen_range(-1.0..1.0);
                let w = rng.gen_range(0.0..std::f64::consts::TAU);
                amb(&[v.cosh() * w.cos(), v.cosh() * w.sin(), v])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::e;

    fn t(kind: TargetKind) -> EmbeddedTarget {
        EmbeddedTarget::new(kind).unwrap()
    }

    #[test]
    fn exact_projections() {
        assert_eq!(t(TargetKind::Sphere2).project(&amb(&[2.0, 0.0, 0.0])).unwrap(), e(0));
        let c = t(TargetKind::CliffordTorus).project(&amb(&[2.0, 0.0, 0.0, 3.0])).unwrap();
        assert!((c - amb(&[1.0, 0.0, 0.0, 1.0])).norm() < 1e-15);
        let y = amb(&[0.3, -4.0, 7.0]);
        assert_eq!(t(TargetKind::Euclidean3).project(&y).unwrap(), y);
    }

    #[test]
    fn projection_domain_errors() {
        assert!(matches!(t(TargetKind::Sphere2).project(&Amb::zeros()), Err(Error::ProjectionDomain { .. })));
        assert!(t(TargetKind::CliffordTorus).project(&amb(&[0.0, 0.0, 1.0, 0.0])).is_err());
        assert!(t(TargetKind::CatenoidBand).project(&amb(&[0.0, 0.0, 0.5])).is_err());
        // far beyond the truncated band
        assert!(t(TargetKind::CatenoidBand).project(&amb(&[1.0, 0.0, 5.0])).is_err());
    }

    #[test]
    fn projectors() {
        let p = t(TargetKind::Sphere2).tangent_projector(&e(0)).unwrap();
        let expect = AmbMat::from_diagonal(&amb(&[0.0, 1.0, 1.0, 0.0]));
        assert!((p - expect).norm() < 1e-15);
        assert_eq!(t(TargetKind::Euclidean3).tangent_projector(&amb(&[1.0, 2.0, 3.0])).unwrap(), identity(3));
        let p = t(TargetKind::Sphere3).tangent_projector(&e(0)).unwrap();
        assert!((p * e(0)).norm() < 1e-15);
        assert!((p * e(1) - e(1)).norm() < 1e-15);
    }

    #[test]
    fn projector_rejects_off_manifold_points() {
        let r = t(TargetKind::Sphere2).tangent_projector(&amb(&[1.5, 0.0, 0.0]));
        assert!(matches!(r, Err(Error::OffManifold { .. })));
    }

    #[test]
    fn sphere_second_fundamental_form() {
        let s = t(TargetKind::Sphere2);
        let ii = s.second_fundamental(&e(0), &e(1), &e(1)).unwrap();
        assert!((ii + e(0)).norm() < 1e-15);
        let eu = t(TargetKind::Euclidean3);
        assert_eq!(eu.second_fundamental(&e(0), &e(1), &e(2)).unwrap(), Amb::zeros());
    }

    #[test]
    fn curvature_bounds() {
        assert_eq!(t(TargetKind::Sphere3).curvature_bound(), 1.0);
        assert_eq!(t(TargetKind::CliffordTorus).curvature_bound(), 0.0);
        assert_eq!(t(TargetKind::CatenoidBand).curvature_bound(), 0.0);
        let k = t(TargetKind::Ellipsoid { axes: [1.0, 1.0, 2.0] }).curvature_bound();
        assert!((k - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ellipsoid_projection_is_on_surface_and_normal() {
        let el = t(TargetKind::Ellipsoid { axes: [1.0, 1.5, 2.0] });
        let y = amb(&[0.4, 0.9, 1.1]);
        let x = el.project(&y).unwrap();
        let level = (x[0] / 1.0).powi(2) + (x[1] / 1.5).powi(2) + (x[2] / 2.0).powi(2);
        assert!((level - 1.0).abs() < 1e-11);
        let p = el.tangent_projector(&x).unwrap();
        assert!((p * (y - x)).norm() < 1e-9);
    }

    #[test]
    fn catenoid_projection_is_normal() {
        let c = t(TargetKind::CatenoidBand);
        let y = amb(&[1.6, 0.3, 0.7]);
        let x = c.project(&y).unwrap();
        assert!((x[0].hypot(x[1]) - x[2].cosh()).abs() < 1e-10);
        let p = c.tangent_projector(&x).unwrap();
        assert!((p * (y - x)).norm() < 1e-9);
    }
}
