//! The couplings: scalar potential `V`, two-form `B` and its field strength
//! `Ω`, together with the tangent operator `Z` defined by
//! `⟨Z(ξ1 ∧ ξ2), η⟩ = Ω(η, ξ1, ξ2)`.
//!
//! All fields are ambient (defined on `R^q`) and restricted to `N` by feeding
//! tangent vectors. Two-forms are stored as polynomial coefficients
//! `b_ij(y)` of `dy_i ∧ dy_j` (`i < j`) so that `Ω = dB` is obtained by exact
//! differentiation.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{amb, det3, det4, e, minor3, Amb, AmbMat, Pos};
use crate::rng::substream;
use crate::target::EmbeddedTarget;

/// Largest accepted total degree of a polynomial coefficient.
pub const MAX_POLY_DEGREE: u32 = 4;
const FD_STEP: f64 = 1e-5;

/// Monomial `coef · Π y_i^{exp_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exp: [u32; 4],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<Monomial>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![Monomial { coef: c, exp: [0; 4] }])
    }

    pub fn linear(c: f64, i: usize) -> Self {
        let mut exp = [0; 4];
        exp[i] = 1;
        Poly(vec![Monomial { coef: c, exp }])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|m| m.exp.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, y: &Amb) -> f64 {
        self.0
            .iter()
            .map(|m| m.coef * (0..4).map(|i| y[i].powi(m.exp[i] as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, k: usize) -> Poly {
        Poly(
            self.0
                .iter()
                .filter(|m| m.exp[k] > 0)
                .map(|m| {
                    let mut exp = m.exp;
                    exp[k] -= 1;
                    Monomial { coef: m.coef * m.exp[k] as f64, exp }
                })
                .collect(),
        )
    }
}

/// Totally antisymmetric three-tensor, `Ω(X, Y, W) = Σ t[a][b][c] X_a Y_b W_c`.
pub type Tensor3 = [[[f64; 4]; 4]; 4];

fn permutations(i: usize, j: usize, k: usize) -> [([usize; 3], f64); 6] {
    [
        ([i, j, k], 1.0),
        ([j, k, i], 1.0),
        ([k, i, j], 1.0),
        ([j, i, k], -1.0),
        ([i, k, j], -1.0),
        ([k, j, i], -1.0),
    ]
}

fn add_wedge3(t: &mut Tensor3, i: usize, j: usize, k: usize, c: f64) {
    for ([a, b, d], s) in permutations(i, j, k) {
        t[a][b][d] += s * c;
    }
}

pub fn contract(t: &Tensor3, x: &Amb, y: &Amb, w: &Amb) -> f64 {
    let mut s = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                s += t[a][b][c] * x[a] * y[b] * w[c];
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    /// `V(y) = ⟨a, y⟩`.
    Linear { a: [f64; 4] },
    /// `V(y) = c |y - y0|²`.
    Quadratic { center: [f64; 4], c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwoFormKind {
    Zero,
    /// `B = (f/3)(y0 dy1∧dy2 + y1 dy2∧dy0 + y2 dy0∧dy1)`, so `dB = f·vol`.
    Radial { f: f64 },
    /// Only `Ω = f·vol` is supplied (`f·ι_ŷ vol` on four-space); the
    /// pullback energy of `B` is then unavailable.
    ConstantVolume { f: f64 },
    /// Coefficients `b_ij` for `i < j`.
    Polynomial { terms: Vec<(usize, usize, Poly)> },
}

#[derive(Debug, Clone)]
enum Omega {
    Zero,
    Exact(Vec<(usize, usize, Poly)>),
    Volume(f64),
}

#[derive(Debug, Clone)]
pub struct FieldPack {
    q: usize,
    potential: PotentialKind,
    two_form: TwoFormKind,
    /// `b_ij` polynomials when `B` is available.
    b_terms: Option<Vec<(usize, usize, Poly)>>,
    omega: Omega,
}

impl FieldPack {
    pub fn new(q: usize, potential: PotentialKind, two_form: TwoFormKind) -> Result<Self> {
        if !(2..=4).contains(&q) {
            return Err(Error::InvalidField(format!("ambient dimension {q} not supported")));
        }
        let (b_terms, omega) = match &two_form {
            TwoFormKind::Zero => (Some(Vec::new()), Omega::Zero),
            TwoFormKind::Radial { f } => {
                if q != 3 {
                    return Err(Error::InvalidField("radial B needs a three-dimensional ambient space".into()));
                }
                let c = f / 3.0;
                let terms = vec![(1, 2, Poly::linear(c, 0)), (0, 2, Poly::linear(-c, 1)), (0, 1, Poly::linear(c, 2))];
                (Some(terms.clone()), Omega::Exact(terms))
            }
            TwoFormKind::ConstantVolume { f } => {
                if q < 3 {
                    return Err(Error::InvalidField("volume form needs ambient dimension 3 or 4".into()));
                }
                (None, Omega::Volume(*f))
            }
            TwoFormKind::Polynomial { terms } => {
                for (i, j, p) in terms {
                    if !(i < j && *j < q) {
                        return Err(Error::InvalidField(format!("two-form index pair ({i}, {j}) must satisfy i < j < {q}")));
                    }
                    if p.degree() > MAX_POLY_DEGREE {
                        return Err(Error::InvalidField(format!("coefficient of degree {} exceeds {MAX_POLY_DEGREE}", p.degree())));
                    }
                    if p.0.iter().any(|m| (q..4).any(|k| m.exp[k] > 0)) {
                        return Err(Error::InvalidField("monomial uses a coordinate beyond the ambient dimension".into()));
                    }
                }
                (Some(terms.clone()), Omega::Exact(terms.clone()))
            }
        };
        Ok(FieldPack {
            q,
            potential,
            two_form,
            b_terms,
            omega,
        })
    }

    pub fn zero(q: usize) -> Self {
        FieldPack::new(q, PotentialKind::Zero, TwoFormKind::Zero).expect("zero pack")
    }

    pub fn ambient_dim(&self) -> usize {
        self.q
    }
    pub fn potential(&self) -> &PotentialKind {
        &self.potential
    }
    pub fn two_form(&self) -> &TwoFormKind {
        &self.two_form
    }
    /// Whether the pullback of `B` can be integrated (i.e. `B` was supplied).
    pub fn has_b(&self) -> bool {
        self.b_terms.is_some()
    }
    /// Whether `Ω = dB` for the supplied pair.
    pub fn omega_is_exact(&self) -> bool {
        matches!(self.omega, Omega::Exact(_) | Omega::Zero)
    }
    pub(crate) fn is_volume_form(&self) -> bool {
        matches!(self.omega, Omega::Volume(_))
    }
    pub fn z_vanishes(&self) -> bool {
        match &self.omega {
            Omega::Zero => true,
            Omega::Volume(f) => *f == 0.0,
            Omega::Exact(terms) => terms.iter().all(|(_, _, p)| p.degree() == 0),
        }
    }
    pub fn v_vanishes(&self) -> bool {
        matches!(self.potential, PotentialKind::Zero)
    }

    /// Antisymmetric coefficient matrix of `B` at `y`; `None` if only `Ω` was supplied.
    pub fn b_matrix(&self, y: &Amb) -> Option<AmbMat> {
        let terms = self.b_terms.as_ref()?;
        let mut m = AmbMat::zeros();
        for (i, j, p) in terms {
            let b = p.eval(y);
            m[(*i, *j)] += b;
            m[(*j, *i)] -= b;
        }
        Some(m)
    }

    /// `B(p)(ξ1, ξ2) = Σ B_ij ξ1^i ξ2^j`; zero when `B` is unavailable.
    pub fn eval_b(&self, p: &Amb, x1: &Amb, x2: &Amb) -> f64 {
        self.b_matrix(p).map_or(0.0, |m| x1.dot(&(m * x2)))
    }

    pub fn omega_tensor(&self, y: &Amb) -> Tensor3 {
        let mut t = [[[0.0; 4]; 4]; 4];
        match &self.omega {
            Omega::Zero => {}
            Omega::Exact(terms) => {
                // d(b dy_i∧dy_j) = Σ_k ∂_k b dy_k∧dy_i∧dy_j
                for (i, j, p) in terms {
                    for k in 0..self.q {
                        if k == *i || k == *j {
                            continue;
                        }
                        let c = p.derivative(k).eval(y);
                        if c != 0.0 {
                            add_wedge3(&mut t, k, *i, *j, c);
                        }
                    }
                }
            }
            Omega::Volume(f) => {
                if self.q == 3 {
                    add_wedge3(&mut t, 0, 1, 2, *f);
                } else {
                    let n = y.norm();
                    let yh = if n > 0.0 { y / n } else { Amb::zeros() };
                    // ι_ŷ vol₄ = Σ_d ŷ_d ι_{e_d} vol₄
                    let triples = [(1, 2, 3, 1.0), (0, 2, 3, -1.0), (0, 1, 3, 1.0), (0, 1, 2, -1.0)];
                    for (d, (a, b, c, s)) in triples.iter().enumerate() {
                        add_wedge3(&mut t, *a, *b, *c, f * s * yh[d]);
                    }
                }
            }
        }
        t
    }

    pub fn eval_omega(&self, y: &Amb, x: &Amb, x1: &Amb, x2: &Amb) -> f64 {
        match &self.omega {
            Omega::Zero => 0.0,
            Omega::Volume(f) if self.q == 3 => f * det3(x, x1, x2),
            Omega::Volume(f) => {
                let n = y.norm();
                if n == 0.0 {
                    0.0
                } else {
                    f * det4(&(y / n), x, x1, x2)
                }
            }
            Omega::Exact(_) => contract(&self.omega_tensor(y), x, x1, x2),
        }
    }

    /// The ambient vector `w` with `⟨w, η⟩ = Ω(η, a, b)` for all `η`.
    fn omega_vector(&self, y: &Amb, a: &Amb, b: &Amb) -> Amb {
        match &self.omega {
            Omega::Zero => Amb::zeros(),
            Omega::Volume(f) if self.q == 3 => {
                let c = Pos::new(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]);
                amb(&[f * c[0], f * c[1], f * c[2]])
            }
            Omega::Volume(f) => {
                let n = y.norm();
                if n == 0.0 {
                    return Amb::zeros();
                }
                let yh = y / n;
                // w_i = f det(ŷ, e_i, a, b), expanded along the e_i column
                let rows = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
                let mut w = Amb::zeros();
                for (i, r) in rows.iter().enumerate() {
                    let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                    w[i] = f * sign * minor3(&yh, a, b, r[0], r[1], r[2]);
                }
                w
            }
            Omega::Exact(_) => {
                let t = self.omega_tensor(y);
                let mut w = Amb::zeros();
                for i in 0..self.q {
                    let mut s = 0.0;
                    for j in 0..self.q {
                        for k in 0..self.q {
                            s += t[i][j][k] * a[j] * b[k];
                        }
                    }
                    w[i] = s;
                }
                w
            }
        }
    }

    /// `omega_bivector` for `f ι_ŷ vol` on four-space, from the wedge
    /// components `(m01, m02, m03, m12, m13, m23)`.
    pub(crate) fn volume_of_wedge(&self, p: &Amb, m: &[f64; 6]) -> Amb {
        let Omega::Volume(f) = self.omega else { unreachable!("volume form expected") };
        let n = p.norm();
        if n == 0.0 {
            return Amb::zeros();
        }
        let y = p * (f / n);
        let [m01, m02, m03, m12, m13, m23] = *m;
        Amb::new(
            -m23 * y[1] + m13 * y[2] - m12 * y[3],
            m23 * y[0] - m03 * y[2] + m02 * y[3],
            -m13 * y[0] + m03 * y[1] - m01 * y[3],
            m12 * y[0] - m02 * y[1] + m01 * y[2],
        )
    }

    /// `Z` applied to a bivector given as the antisymmetric matrix
    /// `M = Σ c (a bᵀ - b aᵀ)`; equals `Σ c Z(a ∧ b)`.
    pub fn z_of_bivector(&self, p: &Amb, proj: &AmbMat, m: &AmbMat) -> Amb {
        proj * self.omega_bivector(p, &(proj * m * proj.transpose()))
    }

    /// The ambient vector `w_i = ½ Σ Ω_ijk M_jk`.
    pub(crate) fn omega_bivector(&self, p: &Amb, pm: &AmbMat) -> Amb {
        match &self.omega {
            Omega::Zero => Amb::zeros(),
            // ½ Σ ε_ijk M_jk
            Omega::Volume(f) if self.q == 3 => amb(&[f * pm[(1, 2)], f * pm[(2, 0)], f * pm[(0, 1)]]),
            // f Σ_d ŷ_d (⋆M)_di with the Hodge dual of M on four-space
            Omega::Volume(f) => {
                let n = p.norm();
                if n == 0.0 {
                    return Amb::zeros();
                }
                let y = p * (f / n);
                let mut dual = AmbMat::zeros();
                for (d, i, j, k) in [(0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2), (1, 2, 0, 3), (1, 3, 2, 0), (2, 3, 0, 1)] {
                    dual[(d, i)] = pm[(j, k)];
                    dual[(i, d)] = -pm[(j, k)];
                }
                dual.transpose() * y
            }
            Omega::Exact(_) => {
                let t = self.omega_tensor(p);
                let mut w = Amb::zeros();
                for i in 0..self.q {
                    let mut s = 0.0;
                    for j in 0..self.q {
                        for k in 0..self.q {
                            s += t[i][j][k] * pm[(j, k)];
                        }
                    }
                    w[i] = 0.5 * s;
                }
                w
            }
        }
    }

    /// `Z(ξ1 ∧ ξ2)` at `p ∈ N` with the tangent projector `proj` at `p`.
    pub fn z_with_projector(&self, p: &Amb, proj: &AmbMat, x1: &Amb, x2: &Amb) -> Amb {
        if matches!(self.omega, Omega::Zero) {
            return Amb::zeros();
        }
        let (a, b) = (proj * x1, proj * x2);
        proj * self.omega_vector(p, &a, &b)
    }

    pub fn eval_z(&self, target: &EmbeddedTarget, p: &Amb, x1: &Amb, x2: &Amb) -> Result<Amb> {
        let proj = target.tangent_projector(p)?;
        Ok(self.z_with_projector(p, &proj, x1, x2))
    }

    /// `Σ_a Ω(τ_a, ξ1, ξ2) τ_a` over the given orthonormal tangent basis.
    pub fn eval_z_in_basis(&self, p: &Amb, basis: &[Amb], x1: &Amb, x2: &Amb) -> Amb {
        basis.iter().map(|t| t * self.eval_omega(p, t, x1, x2)).sum()
    }

    pub fn v(&self, y: &Amb) -> f64 {
        match &self.potential {
            PotentialKind::Zero => 0.0,
            PotentialKind::Linear { a } => Amb::from(*a).dot(y),
            PotentialKind::Quadratic { center, c } => c * (y - Amb::from(*center)).norm_squared(),
        }
    }

    pub fn ambient_grad_v(&self, y: &Amb) -> Amb {
        let mask = |v: Amb| Amb::from_fn(|i, _| if i < self.q { v[i] } else { 0.0 });
        match &self.potential {
            PotentialKind::Zero => Amb::zeros(),
            PotentialKind::Linear { a } => mask(Amb::from(*a)),
            PotentialKind::Quadratic { center, c } => mask((y - Amb::from(*center)) * (2.0 * c)),
        }
    }

    pub fn ambient_hess_v(&self) -> AmbMat {
        match &self.potential {
            PotentialKind::Quadratic { c, .. } => crate::linalg::identity(self.q) * (2.0 * c),
            _ => AmbMat::zeros(),
        }
    }

    pub fn grad_v(&self, target: &EmbeddedTarget, p: &Amb) -> Result<Amb> {
        Ok(target.tangent_projector(p)? * self.ambient_grad_v(p))
    }

    /// Intrinsic Hessian `⟨X, ∇²Ṽ Y⟩ + ⟨∇Ṽ, II(X, Y)⟩` after projecting `X`, `Y`.
    pub fn hess_v(&self, target: &EmbeddedTarget, p: &Amb, x: &Amb, y: &Amb) -> Result<f64> {
        let proj = target.tangent_projector(p)?;
        Ok(self.hess_v_unchecked(target, p, &proj, x, y))
    }

    pub fn hess_v_unchecked(&self, target: &EmbeddedTarget, p: &Amb, proj: &AmbMat, x: &Amb, y: &Amb) -> f64 {
        if self.v_vanishes() {
            return 0.0;
        }
        let (x, y) = (proj * x, proj * y);
        x.dot(&(self.ambient_hess_v() * y)) + self.ambient_grad_v(p).dot(&target.second_fundamental_unchecked(p, &x, &y))
    }

    /// Covariant derivative `(∇_ξ Z)(ξ1 ∧ ξ2)` by central differences along
    /// the projected line `p_t = proj(p + tξ)` with one Richardson step.
    pub fn nabla_z(&self, target: &EmbeddedTarget, p: &Amb, xi: &Amb, x1: &Amb, x2: &Amb) -> Result<Amb> {
        let proj = target.tangent_projector(p)?;
        if self.z_vanishes() {
            return Ok(Amb::zeros());
        }
        let g = |t: f64| -> Result<Amb> {
            let pt = target.project(&(p + xi * t))?;
            let pr = target.projector_unchecked(&pt);
            Ok(proj * self.z_with_projector(&pt, &pr, &(pr * x1), &(pr * x2)))
        };
        let central = |h: f64| -> Result<Amb> { Ok((g(h)? - g(-h)?) / (2.0 * h)) };
        let d1 = central(FD_STEP)?;
        let d2 = central(FD_STEP / 2.0)?;
        Ok(d2 + (d2 - d1) / 3.0)
    }

    /// Sampled sup over `N` of `sup |B(τ_a, τ_b)|` over orthonormal tangent pairs.
    pub fn sup_norm_b(&self, target: &EmbeddedTarget, samples: usize, sample_radius: f64, seed: u64) -> Result<f64> {
        if samples < 100 {
            return Err(Error::InvalidArgument(format!("sup_norm_b needs at least 100 samples, got {samples}")));
        }
        let mut rng = substream(seed, "sup_norm_b");
        let mut sup = 0.0f64;
        for _ in 0..samples {
            let p = target.sample_point(&mut rng, sample_radius);
            let Some(m) = self.b_matrix(&p) else {
                return Err(Error::InvalidField("B is not available for this field pack".into()));
            };
            let basis = target.tangent_basis(&p);
            let d = basis.len();
            let r = DMatrix::from_fn(d, d, |a, b| basis[a].dot(&(m * basis[b])));
            let s = r.singular_values().max();
            sup = sup.max(s);
        }
        Ok(sup)
    }

    /// Sampled sup of `|Z|` over orthonormal tangent pairs and of
    /// `|∇Z|` over unit directions; used for the flow Bochner constants.
    pub fn sup_norms_z(&self, target: &EmbeddedTarget, samples: usize, sample_radius: f64, seed: u64) -> Result<(f64, f64)> {
        if self.z_vanishes() && matches!(self.omega, Omega::Zero) {
            return Ok((0.0, 0.0));
        }
        let mut rng = substream(seed, "sup_norms_z");
        let (mut z, mut dz) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let p = target.sample_point(&mut rng, sample_radius);
            let basis = target.tangent_basis(&p);
            for a in 0..basis.len() {
                for b in a + 1..basis.len() {
                    z = z.max(self.eval_z(target, &p, &basis[a], &basis[b])?.norm());
                    for xi in &basis {
                        // probes that leave the truncated band are skipped
                        if let Ok(v) = self.nabla_z(target, &p, xi, &basis[a], &basis[b]) {
                            dz = dz.max(v.norm());
                        }
                    }
                }
            }
            let _: f64 = rng.gen();
        }
        Ok((z, dz))
    }

    /// Largest deviation between `Ω` and the finite-difference exterior
    /// derivative of `B` over random points of the ball of radius 2.
    pub fn exactness_defect(&self, points: usize, seed: u64) -> Option<f64> {
        let terms = self.b_terms.as_ref()?;
        let mut rng = substream(seed, "exactness_audit");
        let mut worst = 0.0f64;
        for _ in 0..points {
            let y = Amb::from_fn(|i, _| if i < self.q { rng.gen_range(-2.0..2.0) } else { 0.0 });
            let t = self.omega_tensor(&y);
            let mut fd = [[[0.0; 4]; 4]; 4];
            for (i, j, p) in terms {
                for k in 0..self.q {
                    if k == *i || k == *j {
                        continue;
                    }
                    let c = |h: f64| (p.eval(&(y + e(k) * h)) - p.eval(&(y - e(k) * h))) / (2.0 * h);
                    let (d1, d2) = (c(FD_STEP), c(FD_STEP / 2.0));
                    add_wedge3(&mut fd, k, *i, *j, d2 + (d2 - d1) / 3.0);
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        worst = worst.max((t[a][b][c] - fd[a][b][c]).abs());
                    }
                }
            }
        }
        Some(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::TargetKind;

    #[test]
    fn bivector_form_of_z() {
        let b_poly = TwoFormKind::Polynomial { terms: vec![(0, 1, Poly::linear(1.5, 2)), (1, 2, Poly::linear(-0.5, 0))] };
        let cases = [
            (4, TwoFormKind::ConstantVolume { f: 0.8 }, TargetKind::Sphere3, amb(&[0.5, 0.5, 0.5, 0.5])),
            (3, TwoFormKind::ConstantVolume { f: 0.8 }, TargetKind::Sphere2, amb(&[0.6, 0.0, 0.8])),
            (3, b_poly, TargetKind::Euclidean3, amb(&[0.6, 0.3, 0.8])),
        ];
        for (q, b, kind, p) in cases {
            let f = FieldPack::new(q, PotentialKind::Zero, b).unwrap();
            let proj = target(kind).projector_unchecked(&p);
            let (mut a, mut b) = (amb(&[1.0, 0.2, -0.3, 0.5]), amb(&[-0.4, 0.9, 0.1, 0.2]));
            if q == 3 {
                a[3] = 0.0;
                b[3] = 0.0;
            }
            let m = a * b.transpose() - b * a.transpose();
            let d = f.z_of_bivector(&p, &proj, &m) - f.z_with_projector(&p, &proj, &a, &b);
            assert!(d.norm() < 1e-14, "{q}: {}", d.norm());
        }
    }

    #[test]
    fn wedge_components_match_bivector() {
        let f = FieldPack::new(4, PotentialKind::Zero, TwoFormKind::ConstantVolume { f: 1.7 }).unwrap();
        let (p, a, b) = (amb(&[0.3, -0.5, 0.6, 0.2]), amb(&[0.1, 0.7, -0.2, 0.4]), amb(&[-0.6, 0.2, 0.5, 0.3]));
        let m = a * b.transpose() - b * a.transpose();
        let w = [m[(0, 1)], m[(0, 2)], m[(0, 3)], m[(1, 2)], m[(1, 3)], m[(2, 3)]];
        assert!((f.volume_of_wedge(&p, &w) - f.omega_bivector(&p, &m)).norm() < 1e-14);
    }

    #[test]
    fn volume_vector_matches_tensor() {
        let y = amb(&[0.3, -0.5, 0.7, 0.4]);
        let (a, b) = (amb(&[1.0, 0.2, -0.3, 0.5]), amb(&[-0.4, 0.9, 0.1, 0.2]));
        for q in [3, 4] {
            let f = FieldPack::new(q, PotentialKind::Zero, TwoFormKind::ConstantVolume { f: 1.7 }).unwrap();
            let (y, a, b) = if q == 3 { (amb(&[y[0], y[1], y[2]]), amb(&[a[0], a[1], a[2]]), amb(&[b[0], b[1], b[2]])) } else { (y, a, b) };
            let w = f.omega_vector(&y, &a, &b);
            let t = f.omega_tensor(&y);
            for i in 0..q {
                assert!((w[i] - contract(&t, &e(i), &a, &b)).abs() < 1e-14);
            }
        }
    }

    fn target(kind: TargetKind) -> EmbeddedTarget {
        EmbeddedTarget::new(kind).unwrap()
    }

    #[test]
    fn radial_b_coefficient() {
        let f = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Radial { f: 2.0 }).unwrap();
        assert!((f.eval_b(&e(0), &e(1), &e(2)) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.eval_b(&e(0), &e(1), &e(1)), 0.0);
        // dB = 2 vol
        let y = amb(&[0.3, -0.2, 0.9]);
        assert!((f.eval_omega(&y, &e(0), &e(1), &e(2)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn volume_form_gives_cross_product() {
        let f = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::ConstantVolume { f: 1.0 }).unwrap();
        let z = f.eval_z(&target(TargetKind::Euclidean3), &Amb::zeros(), &e(0), &e(1)).unwrap();
        assert_eq!(z, e(2));
        assert!(!f.has_b());
    }

    #[test]
    fn contracted_volume_on_sphere3() {
        let f = FieldPack::new(4, PotentialKind::Zero, TwoFormKind::ConstantVolume { f: 1.0 }).unwrap();
        let z = f.eval_z(&target(TargetKind::Sphere3), &e(0), &e(1), &e(2)).unwrap();
        assert!((z - e(3)).norm() < 1e-15);
        // the tensor path agrees with the determinant path
        let t = f.omega_tensor(&e(0));
        assert!((contract(&t, &e(3), &e(1), &e(2)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn potentials() {
        let eu = target(TargetKind::Euclidean3);
        let q = FieldPack::new(3, PotentialKind::Quadratic { center: [0.0; 4], c: 1.0 }, TwoFormKind::Zero).unwrap();
        let p = amb(&[0.5, -1.0, 2.0]);
        assert_eq!(q.grad_v(&eu, &p).unwrap(), p * 2.0);
        let x = amb(&[1.0, 2.0, -1.0]);
        assert!((q.hess_v(&eu, &p, &x, &x).unwrap() - 2.0 * x.norm_squared()).abs() < 1e-14);

        let s2 = target(TargetKind::Sphere2);
        let l = FieldPack::new(3, PotentialKind::Linear { a: [1.0, 0.0, 0.0, 0.0] }, TwoFormKind::Zero).unwrap();
        assert_eq!(l.grad_v(&s2, &e(0)).unwrap(), Amb::zeros());
        // at the maximum of the height function the Hessian is -|X|²
        assert!((l.hess_v(&s2, &e(0), &e(1), &e(1)).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn nabla_z_of_linear_density() {
        // Ω = y0 vol = d((y0²/2) dy1∧dy2)
        let b = Poly(vec![Monomial { coef: 0.5, exp: [2, 0, 0, 0] }]);
        let f = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Polynomial { terms: vec![(1, 2, b)] }).unwrap();
        let eu = target(TargetKind::Euclidean3);
        let d = f.nabla_z(&eu, &Amb::zeros(), &e(0), &e(0), &e(1)).unwrap();
        assert!((d - e(2)).norm() < 1e-6);
        let c = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::ConstantVolume { f: 3.0 }).unwrap();
        assert!(c.nabla_z(&eu, &amb(&[1.0, 2.0, 0.0]), &e(1), &e(0), &e(1)).unwrap().norm() < 1e-8);
    }

    #[test]
    fn sup_norm_b_examples() {
        let eu = target(TargetKind::Euclidean3);
        let c = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Polynomial { terms: vec![(0, 1, Poly::constant(0.4))] }).unwrap();
        assert!((c.sup_norm_b(&eu, 100, 1.0, 7).unwrap() - 0.4).abs() < 1e-12);
        let r = FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Radial { f: 2.0 }).unwrap();
        let s = r.sup_norm_b(&target(TargetKind::Sphere2), 200, 1.0, 7).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(FieldPack::zero(3).sup_norm_b(&eu, 100, 1.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_polynomials() {
        let high = Poly(vec![Monomial { coef: 1.0, exp: [5, 0, 0, 0] }]);
        assert!(FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Polynomial { terms: vec![(0, 1, high)] }).is_err());
        assert!(FieldPack::new(3, PotentialKind::Zero, TwoFormKind::Polynomial { terms: vec![(1, 0, Poly::constant(1.0))] }).is_err());
    }
}
