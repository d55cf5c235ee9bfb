use super::GeometryError;
use crate::util::{det, dot, norm, solid_angle, sphere_measure};
use std::collections::HashMap;

/// Oriented triangulation of the unit sphere `S^l ⊂ R^{l+1}` for `l ∈ {1,2,3}`,
/// obtained by refining the boundary of the cross-polytope and pushing the
/// new vertices back onto the sphere.
///
/// A simplex `[v0, ..., vl]` is positively oriented when
/// `det[v0, v1, ..., vl] > 0`, i.e. the outward normal comes first.
#[derive(Debug, Clone)]
pub struct TriangulatedSphere {
    dim: usize,
    level: usize,
    vertices: Vec<f64>,
    simplices: Vec<usize>,
}

impl TriangulatedSphere {
    pub fn new(dim: usize, level: usize) -> Result<Self, GeometryError> {
        if !(1..=3).contains(&dim) {
            return Err(GeometryError::InvalidArgument(format!(
                "sphere dimension {dim} outside 1..=3"
            )));
        }
        let n = dim + 1;
        let mut vertices = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; n];
                v[i] = s;
                vertices.extend(v);
            }
        }
        // vertex 2i is +e_i, 2i+1 is -e_i; one facet per sign pattern
        let mut simplices = Vec::with_capacity(n << n);
        for signs in 0..(1usize << n) {
            for i in 0..n {
                simplices.push(2 * i + (signs >> i & 1));
            }
        }
        let mut sphere = Self {
            dim,
            level: 0,
            vertices,
            simplices,
        };
        sphere.orient_all();
        for _ in 0..level {
            sphere.refine();
        }
        Ok(sphere)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / (self.dim + 1)
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        let n = self.dim + 1;
        &self.vertices[i * n..(i + 1) * n]
    }

    pub fn simplex(&self, i: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.simplices[i * n..(i + 1) * n]
    }

    /// Oriented volume sign of a simplex: `sign det[v0, ..., vl]`.
    pub fn orientation(&self, i: usize) -> f64 {
        let n = self.dim + 1;
        let mut a = Vec::with_capacity(n * n);
        for &v in self.simplex(i) {
            a.extend_from_slice(self.vertex(v));
        }
        det(&a, n).signum()
    }

    /// Spherical measure of one simplex: exact arc length or solid angle for
    /// `l = 1, 2`, projected volume by quadrature for `l = 3`.
    pub fn simplex_measure(&self, i: usize) -> f64 {
        let s = self.simplex(i);
        match self.dim {
            1 => {
                let d = dot(self.vertex(s[0]), self.vertex(s[1])).clamp(-1.0, 1.0);
                d.acos()
            }
            2 => {
                let p = |k: usize| {
                    let v = self.vertex(s[k]);
                    [v[0], v[1], v[2]]
                };
                solid_angle(&p(0), &p(1), &p(2)).abs()
            }
            _ => {
                // flat volume sqrt(det Gram) / 3!, then the radial projection
                // onto the sphere, whose area element is (x . n) / |x|^4 on
                // the flat hyperplane, integrated with a 4-point rule
                let v0 = self.vertex(s[0]);
                let e: Vec<Vec<f64>> = (1..4)
                    .map(|k| self.vertex(s[k]).iter().zip(v0).map(|(a, b)| a - b).collect())
                    .collect();
                let mut g = [0.0; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        g[r * 3 + c] = dot(&e[r], &e[c]);
                    }
                }
                let flat = det(&g, 3).max(0.0).sqrt() / 6.0;
                let normal = normal4(&e);
                let dist = dot(&normal, v0).abs();
                let (a, b) = (0.585_410_196_624_968_5, 0.138_196_601_125_010_5);
                let mut acc = 0.0;
                for q in 0..4 {
                    let mut x = [0.0; 4];
                    for (k, &vi) in s.iter().enumerate() {
                        let w = if k == q { a } else { b };
                        for (c, xc) in x.iter_mut().enumerate() {
                            *xc += w * self.vertex(vi)[c];
                        }
                    }
                    acc += 0.25 * dist / norm(&x).powi(4);
                }
                flat * acc
            }
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.num_simplices()).map(|i| self.simplex_measure(i)).sum()
    }

    pub fn exact_measure(&self) -> f64 {
        sphere_measure(self.dim)
    }

    /// Signed boundary chain: map from sorted `(l-1)`-face to its integer
    /// coefficient in the boundary of the sum of all simplices.
    pub fn boundary_chain(&self) -> HashMap<Vec<usize>, i64> {
        let mut chain: HashMap<Vec<usize>, i64> = HashMap::new();
        for i in 0..self.num_simplices() {
            for (face, sign) in oriented_faces(self.simplex(i)) {
                *chain.entry(face).or_insert(0) += sign;
            }
        }
        chain.retain(|_, c| *c != 0);
        chain
    }

    fn orient_all(&mut self) {
        let n = self.dim + 1;
        for i in 0..self.num_simplices() {
            if self.orientation(i) < 0.0 {
                self.simplices.swap(i * n, i * n + 1);
            }
        }
    }

    fn refine(&mut self) {
        let n = self.dim + 1;
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertices = self.vertices.clone();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<f64>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *mid.entry(key).or_insert_with(|| {
                let idx = verts.len() / n;
                let p: Vec<f64> = (0..n).map(|k| 0.5 * (verts[a * n + k] + verts[b * n + k])).collect();
                let l = norm(&p);
                verts.extend(p.iter().map(|x| x / l));
                idx
            })
        };
        let mut out = Vec::with_capacity(self.simplices.len() << self.dim);
        for i in 0..self.num_simplices() {
            let s: Vec<usize> = self.simplex(i).to_vec();
            match self.dim {
                1 => {
                    let m = midpoint(s[0], s[1], &mut vertices);
                    out.extend([s[0], m, m, s[1]]);
                }
                2 => {
                    let m01 = midpoint(s[0], s[1], &mut vertices);
                    let m12 = midpoint(s[1], s[2], &mut vertices);
                    let m02 = midpoint(s[0], s[2], &mut vertices);
                    out.extend([s[0], m01, m02]);
                    out.extend([s[1], m12, m01]);
                    out.extend([s[2], m02, m12]);
                    out.extend([m01, m12, m02]);
                }
                _ => {
                    let m01 = midpoint(s[0], s[1], &mut vertices);
                    let m02 = midpoint(s[0], s[2], &mut vertices);
                    let m03 = midpoint(s[0], s[3], &mut vertices);
                    let m12 = midpoint(s[1], s[2], &mut vertices);
                    let m13 = midpoint(s[1], s[3], &mut vertices);
                    let m23 = midpoint(s[2], s[3], &mut vertices);
                    out.extend([s[0], m01, m02, m03]);
                    out.extend([s[1], m01, m12, m13]);
                    out.extend([s[2], m02, m12, m23]);
                    out.extend([s[3], m03, m13, m23]);
                    // split the inner octahedron along its shortest diagonal
                    let dist = |a: usize, b: usize| -> f64 {
                        (0..n)
                            .map(|k| (vertices[a * n + k] - vertices[b * n + k]).powi(2))
                            .sum()
                    };
                    let options = [
                        ((m01, m23), [m02, m03, m13, m12]),
                        ((m02, m13), [m01, m12, m23, m03]),
                        ((m03, m12), [m01, m02, m23, m13]),
                    ];
                    let mut best = 0;
                    for k in 1..3 {
                        let (a, b) = options[k].0;
                        let (ba, bb) = options[best].0;
                        if dist(a, b) < dist(ba, bb) {
                            best = k;
                        }
                    }
                    let ((a, b), cyc) = options[best];
                    for k in 0..4 {
                        out.extend([a, b, cyc[k], cyc[(k + 1) % 4]]);
                    }
                }
            }
        }
        self.vertices = vertices;
        self.simplices = out;
        self.level += 1;
        self.orient_all();
    }
}

/// Unit normal of the hyperplane spanned by three vectors in R^4.
fn normal4(e: &[Vec<f64>]) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (i, ni) in n.iter_mut().enumerate() {
        let mut minor = Vec::with_capacity(9);
        for row in e {
            for c in 0..4 {
                if c != i {
                    minor.push(row[c]);
                }
            }
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *ni = sign * det(&minor, 3);
    }
    let l = norm(&n);
    n.map(|v| v / l)
}

/// Faces of an oriented simplex with their induced signs, each face sorted
/// and its sign corrected by the parity of the sorting permutation.
pub(crate) fn oriented_faces(s: &[usize]) -> Vec<(Vec<usize>, i64)> {
    let mut out = Vec::with_capacity(s.len());
    for drop in 0..s.len() {
        let mut face: Vec<usize> = s
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != drop)
            .map(|(_, &v)| v)
            .collect();
        let sign = if drop % 2 == 0 { 1 } else { -1 };
        let parity = sort_parity(&mut face);
        out.push((face, sign * parity));
    }
    out
}

/// Sorts in place and returns the sign of the permutation applied.
pub(crate) fn sort_parity(v: &mut [usize]) -> i64 {
    let mut sign = 1;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    sign
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_refinement_rules() {
        let c = TriangulatedSphere::new(1, 3).unwrap();
        assert_eq!(c.num_simplices(), 4 * 8);
        let s2 = TriangulatedSphere::new(2, 2).unwrap();
        assert_eq!(s2.num_simplices(), 8 * 16);
        assert_eq!(s2.num_vertices(), 66);
        let s3 = TriangulatedSphere::new(3, 1).unwrap();
        assert_eq!(s3.num_simplices(), 128);
        assert_eq!(s3.num_vertices(), 32);
    }

    #[test]
    fn vertices_on_sphere_and_positively_oriented() {
        for dim in 1..=3 {
            let s = TriangulatedSphere::new(dim, 2).unwrap();
            for i in 0..s.num_vertices() {
                assert!((norm(s.vertex(i)) - 1.0).abs() < 1e-14);
            }
            for i in 0..s.num_simplices() {
                assert_eq!(s.orientation(i), 1.0);
            }
        }
    }

    #[test]
    fn closed_oriented_manifold() {
        for dim in 1..=3 {
            let s = TriangulatedSphere::new(dim, 2).unwrap();
            assert!(s.boundary_chain().is_empty(), "dim {dim}");
            // every codimension-one face shared by exactly two simplices
            let mut count: HashMap<Vec<usize>, (usize, i64)> = HashMap::new();
            for i in 0..s.num_simplices() {
                for (f, sg) in oriented_faces(s.simplex(i)) {
                    let e = count.entry(f).or_insert((0, 0));
                    e.0 += 1;
                    e.1 += sg;
                }
            }
            assert!(count.values().all(|&(n, sg)| n == 2 && sg == 0));
        }
    }

    #[test]
    fn boundary_of_boundary_vanishes() {
        let s = TriangulatedSphere::new(3, 0).unwrap();
        for i in 0..s.num_simplices() {
            let mut acc: HashMap<Vec<usize>, i64> = HashMap::new();
            for (f, sg) in oriented_faces(s.simplex(i)) {
                for (g, sg2) in oriented_faces(&f) {
                    *acc.entry(g).or_insert(0) += sg * sg2;
                }
            }
            assert!(acc.values().all(|&c| c == 0));
        }
    }

    #[test]
    fn measure_converges() {
        for dim in 1..=3 {
            let s = TriangulatedSphere::new(dim, 3).unwrap();
            let rel = (s.total_measure() - s.exact_measure()).abs() / s.exact_measure();
            assert!(rel < 0.01, "dim {dim}: rel {rel}");
        }
    }
}
