//! Smallest nonzero eigenvalue of `-Δ` by inverse iteration.
//!
//! Each iteration solves `K y = M x` with conjugate gradients, where `K` is
//! the (positive semi-definite) cotangent stiffness matrix and `M` the
//! diagonal of vertex areas, then removes the constant component in the
//! `M`-inner product. The Rayleigh quotient converges to `λ1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;

use super::DiscreteSurface;

fn stiffness(s: &DiscreteSurface, x: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        let mut acc = 0.0;
        for (j, w) in s.stencil_row(i) {
            acc += w * (x[i] - x[j]);
        }
        out[i] = acc;
    }
}

fn remove_constant(s: &DiscreteSurface, x: &mut [f64]) {
    let a = s.area_weights();
    let mean = x.iter().zip(a).map(|(v, w)| v * w).sum::<f64>() / s.total_area();
    for v in x.iter_mut() {
        *v -= mean;
    }
}

fn conjugate_gradient(s: &DiscreteSurface, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut kx = vec![0.0; n];
    stiffness(s, x, &mut kx);
    for i in 0..n {
        r[i] = b[i] - kx[i];
    }
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut kp = vec![0.0; n];
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        stiffness(s, &p, &mut kp);
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        if pkp <= 0.0 {
            break;
        }
        let alpha = rr / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
}

pub(super) fn first_eigenvalue(s: &DiscreteSurface, max_iterations: usize) -> Result<f64> {
    let n = s.vertex_count();
    let a = s.area_weights();
    let mut rng = substream(0, "first_eigenvalue");
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    remove_constant(s, &mut x);
    let mnorm = |x: &[f64]| x.iter().zip(a).map(|(v, w)| v * v * w).sum::<f64>().sqrt();
    let nx = mnorm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut lambda_prev = f64::INFINITY;
    let mut kx = vec![0.0; n];
    for _ in 0..max_iterations {
        let b: Vec<f64> = x.iter().zip(a).map(|(v, w)| v * w).collect();
        let mut y = x.clone();
        conjugate_gradient(s, &b, &mut y, 1e-12, 20 * n);
        remove_constant(s, &mut y);
        let ny = mnorm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        stiffness(s, &y, &mut kx);
        let lambda: f64 = y.iter().zip(&kx).map(|(a, b)| a * b).sum();
        x = y;
        if (lambda - lambda_prev).abs() <= 1e-8 * lambda.abs() {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(Error::EigenNonConvergence(max_iterations))
}
