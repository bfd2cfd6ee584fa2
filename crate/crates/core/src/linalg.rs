//! Small fixed-size vector helpers shared by the geometry modules.
//!
//! Ambient points live in `R^q` with `q ≤ 4`; they are stored as [`Amb`]
//! with the unused trailing components kept at zero.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

/// Ambient vector (`q ≤ 4`, unused components zero).
pub type Amb = Vector4<f64>;
/// Linear map on the ambient space.
pub type AmbMat = Matrix4<f64>;
/// Point of the domain surface in its embedding (torus: parameter plane).
pub type Pos = Vector3<f64>;

pub const MAX_DIM: usize = 4;

pub fn amb(c: &[f64]) -> Amb {
    let mut v = Amb::zeros();
    for (i, x) in c.iter().take(MAX_DIM).enumerate() {
        v[i] = *x;
    }
    v
}

pub fn e(i: usize) -> Amb {
    let mut v = Amb::zeros();
    v[i] = 1.0;
    v
}

/// Identity restricted to the first `q` coordinates.
pub fn identity(q: usize) -> AmbMat {
    let mut m = AmbMat::zeros();
    for i in 0..q {
        m[(i, i)] = 1.0;
    }
    m
}

pub fn det3(a: &Amb, b: &Amb, c: &Amb) -> f64 {
    Matrix3::new(a[0], b[0], c[0], a[1], b[1], c[1], a[2], b[2], c[2]).determinant()
}

pub fn det4(a: &Amb, b: &Amb, c: &Amb, d: &Amb) -> f64 {
    Matrix4::from_columns(&[*a, *b, *c, *d]).determinant()
}

/// 3×3 minor of the columns `(a, b, c)` on rows `(i, j, k)`.
pub fn minor3(a: &Amb, b: &Amb, c: &Amb, i: usize, j: usize, k: usize) -> f64 {
    Matrix3::new(a[i], b[i], c[i], a[j], b[j], c[j], a[k], b[k], c[k]).determinant()
}

pub fn sup_norm(field: &[Amb]) -> f64 {
    field.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Gram–Schmidt on the given vectors, keeping those with a residual norm above `tol`.
pub fn orthonormalize(vectors: impl IntoIterator<Item = Amb>, tol: f64) -> Vec<Amb> {
    let mut basis: Vec<Amb> = Vec::new();
    for mut v in vectors {
        for b in &basis {
            v -= b * b.dot(&v);
        }
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let n = v.norm();
        if n > tol {
            basis.push(v / n);
        }
    }
    basis
}
