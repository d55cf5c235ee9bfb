use super::InvariantError;
use crate::fields::SampledSphereMap;
use crate::geometry::TriangulatedSphere;
use crate::util::{dot, solid_angle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// Compressed-row integer incidence matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<i8>,
}

impl SparseMatrix {
    fn from_rows(cols: usize, rows: Vec<Vec<(usize, i8)>>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in &rows {
            for &(c, v) in r {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| v as f64 * x[c]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[c] += v as f64 * y[r];
            }
        }
        out
    }

    /// Integer product `self * other`, used to certify `d d = 0`.
    pub fn compose_is_zero(&self, other: &SparseMatrix) -> bool {
        (0..self.rows).all(|r| {
            let mut acc: HashMap<usize, i64> = HashMap::new();
            for (k, v) in self.row(r) {
                for (c, w) in other.row(k) {
                    *acc.entry(c).or_insert(0) += v as i64 * w as i64;
                }
            }
            acc.values().all(|&x| x == 0)
        })
    }
}

/// Discrete exterior calculus on a triangulated `S^3`: cochains live on
/// sorted vertex tuples, `d0, d1, d2` are the coboundary matrices and the
/// diagonal Hodge stars use volume-shared dual cells.
#[derive(Debug, Clone)]
pub struct DecSphere3 {
    pub sphere: Arc<TriangulatedSphere>,
    pub edges: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub d0: SparseMatrix,
    pub d1: SparseMatrix,
    pub d2: SparseMatrix,
    /// Hodge star on 1-cochains, `|e*| / |e|`.
    pub star1: Vec<f64>,
    edge_index: HashMap<[usize; 2], usize>,
    triangle_index: HashMap<[usize; 3], usize>,
}

fn sorted<const N: usize>(mut v: [usize; N]) -> ([usize; N], i8) {
    let sign = crate::geometry::sort_parity(&mut v);
    (v, sign as i8)
}

fn tet_volume(s: &TriangulatedSphere, t: &[usize]) -> f64 {
    let v0 = s.vertex(t[0]);
    let e: Vec<Vec<f64>> = (1..4)
        .map(|k| s.vertex(t[k]).iter().zip(v0).map(|(a, b)| a - b).collect())
        .collect();
    let mut g = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            g[r * 3 + c] = dot(&e[r], &e[c]);
        }
    }
    crate::util::det(&g, 3).max(0.0).sqrt() / 6.0
}

impl DecSphere3 {
    pub fn new(level: usize) -> Result<Self, InvariantError> {
        let sphere = TriangulatedSphere::new(3, level).map_err(|e| InvariantError::InvalidArgument(e.to_string()))?;
        Ok(Self::from_sphere(Arc::new(sphere)))
    }

    pub fn from_sphere(sphere: Arc<TriangulatedSphere>) -> Self {
        assert_eq!(sphere.dim(), 3);
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut triangle_index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut triangles = Vec::new();
        let mut d2_rows = Vec::with_capacity(sphere.num_simplices());
        for t in 0..sphere.num_simplices() {
            let s = sphere.simplex(t);
            let mut row = Vec::with_capacity(4);
            for drop in 0..4 {
                let face = [0, 1, 2, 3].iter().filter(|&&k| k != drop).map(|&k| s[k]);
                let f: Vec<usize> = face.collect();
                let (key, parity) = sorted([f[0], f[1], f[2]]);
                let sign = if drop % 2 == 0 { 1 } else { -1 } * parity;
                let id = *triangle_index.entry(key).or_insert_with(|| {
                    triangles.push(key);
                    triangles.len() - 1
                });
                row.push((id, sign));
            }
            d2_rows.push(row);
        }
        let mut d1_rows = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [a, b, c] = *tri;
            let mut row = Vec::with_capacity(3);
            for (e, sign) in [([b, c], 1), ([a, c], -1), ([a, b], 1)] {
                let id = *edge_index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    edges.len() - 1
                });
                row.push((id, sign));
            }
            d1_rows.push(row);
        }
        let d0_rows: Vec<Vec<(usize, i8)>> = edges.iter().map(|&[a, b]| vec![(a, -1), (b, 1)]).collect();
        let d0 = SparseMatrix::from_rows(sphere.num_vertices(), d0_rows);
        let d1 = SparseMatrix::from_rows(edges.len(), d1_rows);
        let d2 = SparseMatrix::from_rows(triangles.len(), d2_rows);

        // |e*| = sum over incident tetrahedra of vol / (6 |e|)
        let len = |e: &[usize; 2]| -> f64 {
            let (p, q) = (sphere.vertex(e[0]), sphere.vertex(e[1]));
            p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let mut dual = vec![0.0; edges.len()];
        for t in 0..sphere.num_simplices() {
            let s = sphere.simplex(t);
            let vol = tet_volume(&sphere, s);
            for i in 0..4 {
                for j in i + 1..4 {
                    let (key, _) = sorted([s[i], s[j]]);
                    let id = edge_index[&key];
                    dual[id] += vol / (6.0 * len(&key));
                }
            }
        }
        let star1 = dual.iter().zip(&edges).map(|(d, e)| d / len(e)).collect();
        Self {
            sphere,
            edges,
            triangles,
            d0,
            d1,
            d2,
            star1,
            edge_index,
            triangle_index,
        }
    }

    fn edge_value(&self, chi: &[f64], a: usize, b: usize) -> f64 {
        let (key, sign) = sorted([a, b]);
        sign as f64 * chi[self.edge_index[&key]]
    }

    fn triangle_value(&self, omega: &[f64], a: usize, b: usize, c: usize) -> f64 {
        let (key, sign) = sorted([a, b, c]);
        sign as f64 * omega[self.triangle_index[&key]]
    }

    /// `v^# omega_{S^2}` as a 2-cochain: signed solid angle of each image
    /// triangle over `4 pi`.
    pub fn pullback_two_form(&self, v: &SampledSphereMap) -> Vec<f64> {
        self.triangles
            .par_iter()
            .map(|&[a, b, c]| {
                let p = |k: usize| {
                    let x = v.value(k);
                    [x[0], x[1], x[2]]
                };
                solid_angle(&p(a), &p(b), &p(c)) / (4.0 * PI)
            })
            .collect()
    }

    /// Solves `d1 chi = omega` for the `star1`-weighted minimum-norm `chi`
    /// (so `delta chi = 0`) by conjugate gradients on
    /// `d1 star1^{-1} d1^T y = omega`, `chi = star1^{-1} d1^T y`.
    pub fn solve_potential(&self, omega: &[f64], tol: f64) -> Result<Vec<f64>, InvariantError> {
        let norm_b = omega.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_b == 0.0 {
            return Ok(vec![0.0; self.edges.len()]);
        }
        let op = |y: &[f64]| -> Vec<f64> {
            let mut t = self.d1.apply_transpose(y);
            for (ti, s) in t.iter_mut().zip(&self.star1) {
                *ti /= s;
            }
            self.d1.apply(&t)
        };
        let n = omega.len();
        let mut y = vec![0.0; n];
        let mut r = omega.to_vec();
        let mut p = r.clone();
        let mut rr: f64 = r.iter().map(|x| x * x).sum();
        let cap = 50_000;
        let mut it = 0;
        while rr.sqrt() > tol * norm_b {
            if it >= cap {
                return Err(InvariantError::SolverDivergence {
                    iterations: it,
                    residual: rr.sqrt() / norm_b,
                });
            }
            let ap = op(&p);
            let pap: f64 = p.par_iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rr / pap;
            y.par_iter_mut().zip(&p).for_each(|(yi, pi)| *yi += alpha * pi);
            r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let rr_new: f64 = r.par_iter().map(|x| x * x).sum();
            let beta = rr_new / rr;
            p.par_iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            rr = rr_new;
            it += 1;
        }
        let mut chi = self.d1.apply_transpose(&y);
        for (c, s) in chi.iter_mut().zip(&self.star1) {
            *c /= s;
        }
        Ok(chi)
    }

    /// `sum_T (chi cup omega)(T)` with the cup product averaged over all
    /// vertex orderings of each positively oriented tetrahedron.
    pub fn cup_pairing(&self, chi: &[f64], omega: &[f64]) -> f64 {
        const PERMS: [([usize; 4], f64); 24] = permutations();
        (0..self.sphere.num_simplices())
            .into_par_iter()
            .map(|t| {
                let s = self.sphere.simplex(t);
                let mut acc = 0.0;
                for (p, sign) in PERMS.iter() {
                    let w = [s[p[0]], s[p[1]], s[p[2]], s[p[3]]];
                    acc += sign * self.edge_value(chi, w[0], w[1]) * self.triangle_value(omega, w[1], w[2], w[3]);
                }
                acc / 24.0
            })
            .sum()
    }
}

const fn permutations() -> [([usize; 4], f64); 24] {
    let mut out = [([0usize; 4], 0.0f64); 24];
    let mut k = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                let mut d = 0;
                while d < 4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        let p = [a, b, c, d];
                        let mut inv = 0;
                        let mut i = 0;
                        while i < 4 {
                            let mut j = i + 1;
                            while j < 4 {
                                if p[i] > p[j] {
                                    inv += 1;
                                }
                                j += 1;
                            }
                            i += 1;
                        }
                        out[k] = (p, if inv % 2 == 0 { 1.0 } else { -1.0 });
                        k += 1;
                    }
                    d += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// Whitehead's integral `int chi ^ v^# omega` with `d chi = v^# omega`,
/// `omega` of unit mass on `S^2`.
pub fn hopf_whitehead(dec: &DecSphere3, v: &SampledSphereMap) -> Result<f64, InvariantError> {
    if v.nu != 3 || v.sphere.num_vertices() != dec.sphere.num_vertices() {
        return Err(InvariantError::InvalidArgument(
            "need a map S^3 -> S^2 sampled on the complex's vertices".into(),
        ));
    }
    if dec.sphere.level() < 3 {
        return Err(InvariantError::Undersampled(format!(
            "refinement {} below 3",
            dec.sphere.level()
        )));
    }
    let omega = dec.pullback_two_form(v);
    let closed = dec.d2.apply(&omega);
    let defect = closed.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if defect > 1e-6 {
        return Err(InvariantError::NonClosedForm(defect));
    }
    let chi = dec.solve_potential(&omega, 1e-8)?;
    Ok(dec.cup_pairing(&chi, &omega))
}

type Segment = ([f64; 4], [f64; 4]);

/// Oriented preimage polyline pieces: one segment per tetrahedron crossed.
fn preimage_segments(v: &SampledSphereMap, q: &[f64; 3]) -> Result<Vec<Segment>, InvariantError> {
    let s = &v.sphere;
    let pos = |k: usize| -> [f64; 4] {
        let x = s.vertex(k);
        [x[0], x[1], x[2], x[3]]
    };
    let img = |k: usize| -> [f64; 3] {
        let x = v.value(k);
        [x[0], x[1], x[2]]
    };
    let nonregular = || InvariantError::NonRegularValue(q.to_vec());
    // crossing of the oriented triangle (a, b, c): point and sign
    let crossing = |a: usize, b: usize, c: usize| -> Result<Option<([f64; 4], f64)>, InvariantError> {
        let (pa, pb, pc) = (img(a), img(b), img(c));
        let mut m = [0.0; 9];
        for r in 0..3 {
            m[r * 3] = pa[r];
            m[r * 3 + 1] = pb[r];
            m[r * 3 + 2] = pc[r];
        }
        let d = crate::util::det(&m, 3);
        if d.abs() < 1e-14 {
            return Ok(None);
        }
        let mut coef = [0.0; 3];
        for (k, ck) in coef.iter_mut().enumerate() {
            let mut mk = m;
            for r in 0..3 {
                mk[r * 3 + k] = q[r];
            }
            *ck = crate::util::det(&mk, 3) / d;
        }
        let sum: f64 = coef.iter().sum();
        if coef.iter().any(|&c| c.abs() < 1e-12) {
            return Err(nonregular());
        }
        if coef.iter().all(|&c| c > 0.0) && sum > 0.0 {
            let (xa, xb, xc) = (pos(a), pos(b), pos(c));
            let mut x = [0.0; 4];
            for i in 0..4 {
                x[i] = (coef[0] * xa[i] + coef[1] * xb[i] + coef[2] * xc[i]) / sum;
            }
            Ok(Some((x, d.signum())))
        } else {
            Ok(None)
        }
    };
    let mut segments = Vec::new();
    for t in 0..s.num_simplices() {
        let tv = s.simplex(t);
        let mut enter = Vec::new();
        let mut exit = Vec::new();
        for drop in 0..4 {
            let f: Vec<usize> = (0..4).filter(|&k| k != drop).map(|k| tv[k]).collect();
            let face_sign = if drop % 2 == 0 { 1.0 } else { -1.0 };
            if let Some((x, sign)) = crossing(f[0], f[1], f[2])? {
                if sign * face_sign > 0.0 {
                    exit.push(x);
                } else {
                    enter.push(x);
                }
            }
        }
        match (enter.len(), exit.len()) {
            (0, 0) => {}
            (1, 1) => segments.push((enter[0], exit[0])),
            _ => return Err(nonregular()),
        }
    }
    Ok(segments)
}

fn stereographic(x: &[f64; 4], pole: &[f64; 4]) -> [f64; 3] {
    // move `pole` to e_4 by a rotation, then project from e_4; both steps
    // preserve orientation (S^3 oriented as the boundary of the ball)
    let l = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y: Vec<f64> = x.iter().map(|v| v / l).collect();
    let u = [pole[0], pole[1], pole[2], pole[3] - 1.0];
    let un: f64 = u.iter().map(|v| v * v).sum();
    let mut z = [y[0], y[1], y[2], y[3]];
    if un > 1e-24 {
        let k = 2.0 * (0..4).map(|i| u[i] * z[i]).sum::<f64>() / un;
        for i in 0..4 {
            z[i] -= k * u[i];
        }
        // a second reflection keeps the overall rotation orientation-preserving
        z[0] = -z[0];
    }
    let den = 1.0 - z[3];
    [z[0] / den, z[1] / den, z[2] / den]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Exact Gauss linking integral contribution of two straight segments.
fn segment_pair_linking(p1: &[f64; 3], p2: &[f64; 3], q1: &[f64; 3], q2: &[f64; 3]) -> f64 {
    use crate::util::{cross, dot3};
    let r13 = sub(q1, p1);
    let r14 = sub(q2, p1);
    let r23 = sub(q1, p2);
    let r24 = sub(q2, p2);
    let unit = |v: [f64; 3]| {
        let l = dot3(&v, &v).sqrt();
        if l < 1e-300 {
            [0.0; 3]
        } else {
            [v[0] / l, v[1] / l, v[2] / l]
        }
    };
    let n1 = unit(cross(&r13, &r14));
    let n2 = unit(cross(&r14, &r24));
    let n3 = unit(cross(&r24, &r23));
    let n4 = unit(cross(&r23, &r13));
    let asin = |x: f64| x.clamp(-1.0, 1.0).asin();
    let omega = asin(dot3(&n1, &n2)) + asin(dot3(&n2, &n3)) + asin(dot3(&n3, &n4)) + asin(dot3(&n4, &n1));
    let r34 = sub(q2, q1);
    let r12 = sub(p2, p1);
    let s = dot3(&cross(&r34, &r12), &r13);
    omega * s.signum() / (4.0 * PI)
}

/// Linking number of the preimages of two regular values, extracted by
/// marching tetrahedra and linked through the exact Gauss integral after a
/// stereographic projection from a point far from both curves.
pub fn hopf_linking(v: &SampledSphereMap, q1: &[f64], q2: &[f64]) -> Result<i64, InvariantError> {
    if v.nu != 3 || v.sphere.dim() != 3 {
        return Err(InvariantError::InvalidArgument("need a map S^3 -> S^2".into()));
    }
    let unit = |q: &[f64]| -> [f64; 3] {
        let l = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
        [q[0] / l, q[1] / l, q[2] / l]
    };
    let (q1, q2) = (unit(q1), unit(q2));
    let a = preimage_segments(v, &q1)?;
    let b = preimage_segments(v, &q2)?;
    if a.is_empty() || b.is_empty() {
        return Ok(0);
    }
    // pole: the sphere vertex farthest from every preimage point
    let s = &v.sphere;
    let pts: Vec<[f64; 4]> = a.iter().chain(&b).flat_map(|(x, y)| [*x, *y]).collect();
    let pole = (0..s.num_vertices())
        .into_par_iter()
        .map(|k| {
            let x = s.vertex(k);
            let d = pts
                .iter()
                .map(|p| (0..4).map(|i| (p[i] - x[i]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            (d, k)
        })
        .reduce(
            || (-1.0, 0),
            |l, r| if r.0 > l.0 || (r.0 == l.0 && r.1 < l.1) { r } else { l },
        );
    let pv = s.vertex(pole.1);
    let pole = [pv[0], pv[1], pv[2], pv[3]];
    let pa: Vec<([f64; 3], [f64; 3])> = a
        .iter()
        .map(|(x, y)| (stereographic(x, &pole), stereographic(y, &pole)))
        .collect();
    let pb: Vec<([f64; 3], [f64; 3])> = b
        .iter()
        .map(|(x, y)| (stereographic(x, &pole), stereographic(y, &pole)))
        .collect();
    let total: f64 = pa
        .par_iter()
        .map(|(p1, p2)| {
            pb.iter()
                .map(|(r1, r2)| segment_pair_linking(p1, p2, r1, r2))
                .sum::<f64>()
        })
        .sum();
    let k = total.round();
    if (total - k).abs() >= 0.1 {
        return Err(InvariantError::Undersampled(format!(
            "Gauss integral {total:.4} is not within 0.1 of an integer"
        )));
    }
    Ok(k as i64)
}

/// [`hopf_linking`] with two random regular values, retried with fresh
/// draws when a value turns out not to be regular.
pub fn hopf_linking_auto(v: &SampledSphereMap, seed: u64) -> Result<i64, InvariantError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..16 {
        let mut draw = || -> Vec<f64> { (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let q1 = draw();
        let q2 = draw();
        match hopf_linking(v, &q1, &q2) {
            Err(e @ InvariantError::NonRegularValue(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.unwrap_or_else(|| InvariantError::NonRegularValue(vec![])))
}
