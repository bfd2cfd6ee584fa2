//! Per-vertex first and second derivatives ("jets") of sampled fields.
//!
//! The periodic grid uses central differences; meshes (and the planar patch,
//! because of its boundary) use a least-squares cubic fit over the two-ring,
//! grown at patch corners, in coordinates of the vertex tangent plane. The
//! cubic terms keep the fitted gradient accurate to O(h³), so quantities
//! built from it (like `|dφ|²`) can be differentiated again. Both are stored
//! as linear stencils acting on `f_j - f_i`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_traits::Zero;

use super::DiscreteSurface;

/// Derivatives in the vertex frame: `grad = [∂1, ∂2]`, `hess = [∂11, ∂12, ∂22]`.
#[derive(Debug, Clone, Copy)]
pub struct Jet<T> {
    pub grad: [T; 2],
    pub hess: [T; 3],
}

#[derive(Debug, Clone)]
pub struct JetStencil {
    pub nbrs: Vec<usize>,
    pub coef: Vec<[f64; 5]>,
}

impl JetStencil {
    pub fn apply<T>(&self, f: &[T], i: usize) -> Jet<T>
    where
        T: Copy + Zero + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut acc = [T::zero(); 5];
        let fi = f[i];
        for (j, c) in self.nbrs.iter().zip(&self.coef) {
            let d = f[*j] - fi;
            for k in 0..5 {
                acc[k] = acc[k] + d * c[k];
            }
        }
        Jet {
            grad: [acc[0], acc[1]],
            hess: [acc[2], acc[3], acc[4]],
        }
    }
}

pub(super) fn grid_stencils(n: usize, hx: f64, hy: f64) -> Vec<JetStencil> {
    let idx = |i: isize, j: isize| {
        let n = n as isize;
        (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize
    };
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n as isize {
        for i in 0..n as isize {
            let (gx, gy) = (0.5 / hx, 0.5 / hy);
            let (cxx, cyy, cxy) = (1.0 / (hx * hx), 1.0 / (hy * hy), 0.25 / (hx * hy));
            let entries = [
                (idx(i + 1, j), [gx, 0.0, cxx, 0.0, 0.0]),
                (idx(i - 1, j), [-gx, 0.0, cxx, 0.0, 0.0]),
                (idx(i, j + 1), [0.0, gy, 0.0, 0.0, cyy]),
                (idx(i, j - 1), [0.0, -gy, 0.0, 0.0, cyy]),
                (idx(i + 1, j + 1), [0.0, 0.0, 0.0, cxy, 0.0]),
                (idx(i - 1, j - 1), [0.0, 0.0, 0.0, cxy, 0.0]),
                (idx(i + 1, j - 1), [0.0, 0.0, 0.0, -cxy, 0.0]),
                (idx(i - 1, j + 1), [0.0, 0.0, 0.0, -cxy, 0.0]),
            ];
            out.push(JetStencil {
                nbrs: entries.iter().map(|e| e.0).collect(),
                coef: entries.iter().map(|e| e.1).collect(),
            });
        }
    }
    out
}

pub(super) fn fitted_stencils(s: &DiscreteSurface) -> Vec<JetStencil> {
    let nv = s.vertex_count();
    let ring1: Vec<BTreeSet<usize>> = (0..nv)
        .map(|i| {
            s.vertex_faces(i)
                .iter()
                .flat_map(|&f| s.faces()[f].v)
                .filter(|&j| j != i)
                .collect()
        })
        .collect();
    (0..nv)
        .map(|i| {
            // the two-ring, grown further where it is too small for a cubic
            // fit (boundary corners of the planar patch)
            let mut ring: BTreeSet<usize> = ring1[i].clone();
            let mut grown = 1;
            while grown < 2 || (ring.len() < 13 && ring.len() + 1 < nv) {
                let next: Vec<usize> = ring.iter().flat_map(|&j| ring1[j].iter().copied()).collect();
                ring.extend(next);
                ring.remove(&i);
                grown += 1;
            }
            let nbrs: Vec<usize> = ring.into_iter().collect();
            let [e1, e2] = *s.vertex_frame(i);
            let p0 = s.positions()[i];
            let local: Vec<(f64, f64)> = nbrs
                .iter()
                .map(|&j| {
                    let d = s.positions()[j] - p0;
                    (d.dot(&e1), d.dot(&e2))
                })
                .collect();
            // fit in units of the ring size for conditioning
            let h = local.iter().map(|(x, y)| x.hypot(*y)).sum::<f64>() / local.len() as f64;
            let a = DMatrix::from_fn(nbrs.len(), 9, |r, c| {
                let (x, y) = (local[r].0 / h, local[r].1 / h);
                [x, y, 0.5 * x * x, x * y, 0.5 * y * y, x * x * x, x * x * y, x * y * y, y * y * y][c]
            });
            // least squares through QR; the design matrix has full column rank
            let qr = a.qr();
            let pinv = qr.r().try_inverse().expect("jet design matrix has full rank") * qr.q().transpose();
            let (g, hh) = (1.0 / h, 1.0 / (h * h));
            let coef = (0..nbrs.len())
                .map(|r| [pinv[(0, r)] * g, pinv[(1, r)] * g, pinv[(2, r)] * hh, pinv[(3, r)] * hh, pinv[(4, r)] * hh])
                .collect();
            JetStencil { nbrs, coef }
        })
        .collect()
}
