use std::collections::{BTreeMap, HashMap};

use crate::linalg::Pos;

use super::Face;

/// Raw triangulation handed to the common assembly step.
pub(super) struct RawMesh {
    pub positions: Vec<Pos>,
    pub faces: Vec<[usize; 3]>,
    /// Per-face local planar coordinates of the three corners (grid domains
    /// supply these so that periodic wrap-around is unambiguous).
    pub local: Option<Vec<[[f64; 2]; 3]>>,
}

/// Periodic (torus) or open (patch) grid split into right triangles along
/// the `(i,j)–(i+1,j+1)` diagonal.
pub(super) fn grid(n: usize, lx: f64, ly: f64, periodic: bool, origin: [f64; 2]) -> RawMesh {
    let (nx, ny) = (n, n);
    let (hx, hy) = if periodic {
        (lx / nx as f64, ly / ny as f64)
    } else {
        (lx / (nx - 1) as f64, ly / (ny - 1) as f64)
    };
    let idx = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let mut positions = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            positions.push(Pos::new(origin[0] + i as f64 * hx, origin[1] + j as f64 * hy, 0.0));
        }
    }
    let (ci, cj) = if periodic { (nx, ny) } else { (nx - 1, ny - 1) };
    let mut faces = Vec::with_capacity(2 * ci * cj);
    let mut local = Vec::with_capacity(2 * ci * cj);
    for j in 0..cj {
        for i in 0..ci {
            let v00 = idx(i, j);
            let v10 = idx(i + 1, j);
            let v01 = idx(i, j + 1);
            let v11 = idx(i + 1, j + 1);
            faces.push([v00, v10, v11]);
            local.push([[0.0, 0.0], [hx, 0.0], [hx, hy]]);
            faces.push([v00, v11, v01]);
            local.push([[0.0, 0.0], [hx, hy], [0.0, hy]]);
        }
    }
    RawMesh {
        positions,
        faces,
        local: Some(local),
    }
}

pub(super) fn icosphere(subdiv: usize) -> RawMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Pos> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Pos::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    // subdiv = 1 is the bare icosahedron
    for _ in 1..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, positions: &mut Vec<Pos>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut positions);
            let bc = mid(f[1], f[2], &mut positions);
            let ca = mid(f[2], f[0], &mut positions);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    // outward orientation
    for f in faces.iter_mut() {
        let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&(a + b + c)) < 0.0 {
            f.swap(1, 2);
        }
    }
    RawMesh {
        positions,
        faces,
        local: None,
    }
}

/// Area of the geodesic triangle spanned by three unit vectors.
fn spherical_area(p: &[Pos; 3]) -> f64 {
    let [a, b, c] = p;
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Voronoi (circumcentric) portions of a triangle per corner; obtuse
/// triangles fall back to half the area at the obtuse corner.
fn mixed_shares(q: &[[f64; 2]; 3], area: f64) -> [f64; 3] {
    let d = |i: usize, j: usize| [q[j][0] - q[i][0], q[j][1] - q[i][1]];
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    let corner = |i: usize| dot(d(i, (i + 1) % 3), d(i, (i + 2) % 3));
    if let Some(o) = (0..3).find(|&i| corner(i) < 0.0) {
        let mut s = [area / 4.0; 3];
        s[o] = area / 2.0;
        return s;
    }
    let cot = |i: usize| corner(i) / (2.0 * area);
    let mut s = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        s[i] = (dot(d(i, j), d(i, j)) * cot(k) + dot(d(i, k), d(i, k)) * cot(j)) / 8.0;
    }
    s
}

/// Builds faces with frames and hat-function gradients, vertex areas
/// (barycentric on grids, circumcentric on the sphere scaled to the geodesic
/// triangle areas) and cotangent weights (as CSR off-diagonal rows).
pub(super) struct Assembled {
    pub faces: Vec<Face>,
    pub area_weights: Vec<f64>,
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Vec<f64>,
    pub vertex_faces: Vec<Vec<usize>>,
    pub mean_edge: f64,
}

pub(super) fn assemble(raw: &RawMesh) -> Assembled {
    let nv = raw.positions.len();
    let mut faces = Vec::with_capacity(raw.faces.len());
    let mut area_weights = vec![0.0; nv];
    let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut vertex_faces = vec![Vec::new(); nv];
    let mut edge_sum = 0.0;
    let mut edge_count = 0usize;
    for (fi, v) in raw.faces.iter().enumerate() {
        let (q, e1, e2, normal) = match &raw.local {
            Some(local) => (
                local[fi],
                Pos::new(1.0, 0.0, 0.0),
                Pos::new(0.0, 1.0, 0.0),
                Pos::new(0.0, 0.0, 1.0),
            ),
            None => {
                let p = [raw.positions[v[0]], raw.positions[v[1]], raw.positions[v[2]]];
                let normal = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
                let e1 = (p[1] - p[0]).normalize();
                let e2 = normal.cross(&e1);
                let mut q = [[0.0; 2]; 3];
                for k in 0..3 {
                    let d = p[k] - p[0];
                    q[k] = [d.dot(&e1), d.dot(&e2)];
                }
                (q, e1, e2, normal)
            }
        };
        let area2 = (q[1][0] - q[0][0]) * (q[2][1] - q[0][1]) - (q[1][1] - q[0][1]) * (q[2][0] - q[0][0]);
        let area = 0.5 * area2;
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            let d = [q[k][0] - q[j][0], q[k][1] - q[j][1]];
            grad[i] = [-d[1] / area2, d[0] / area2];
        }
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            let a = [q[j][0] - q[i][0], q[j][1] - q[i][1]];
            let b = [q[k][0] - q[i][0], q[k][1] - q[i][1]];
            let cot = (a[0] * b[0] + a[1] * b[1]) / (a[0] * b[1] - a[1] * b[0]).abs();
            let (vj, vk) = (v[j], v[k]);
            *w.entry((vj.min(vk), vj.max(vk))).or_insert(0.0) += 0.5 * cot;
            edge_sum += (b[0] - a[0]).hypot(b[1] - a[1]);
            edge_count += 1;
        }
        let shares = match &raw.local {
            Some(_) => [area / 3.0; 3],
            None => {
                let p = [raw.positions[v[0]], raw.positions[v[1]], raw.positions[v[2]]];
                let s = spherical_area(&p) / area;
                mixed_shares(&q, area).map(|x| x * s)
            }
        };
        for (k, &vi) in v.iter().enumerate() {
            area_weights[vi] += shares[k];
            vertex_faces[vi].push(fi);
        }
        faces.push(Face {
            v: *v,
            area,
            corner_area: shares,
            frame: [e1, e2],
            normal,
            grad,
        });
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (&(a, b), &wab) in &w {
        if wab != 0.0 {
            rows[a].push((b, wab));
            rows[b].push((a, wab));
        }
    }
    let mut offsets = Vec::with_capacity(nv + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for mut row in rows {
        row.sort_by_key(|&(c, _)| c);
        for (c, x) in row {
            cols.push(c);
            weights.push(x);
        }
        offsets.push(cols.len());
    }
    Assembled {
        faces,
        area_weights,
        offsets,
        cols,
        weights,
        vertex_faces,
        mean_edge: edge_sum / edge_count.max(1) as f64,
    }
}
