use super::{AxisBox, GeometryError};
use serde::Serialize;
use std::collections::BTreeSet;

/// An axis-aligned face stored on the integer lattice of step `eta` anchored
/// at the box corner `lo`.
///
/// The face spans `center ± 1` (in lattice units) along each axis in `free`
/// and is a single lattice coordinate along the other axes. Cubication faces
/// have odd coordinates exactly on their free axes; dual faces have odd
/// coordinates exactly on their fixed axes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Face {
    pub center: Vec<i64>,
    pub free: Vec<usize>,
}

impl Face {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn is_free(&self, axis: usize) -> bool {
        self.free.contains(&axis)
    }

    /// Lattice interval `[a, b]` covered along `axis`.
    pub fn extent(&self, axis: usize) -> (i64, i64) {
        let c = self.center[axis];
        if self.is_free(axis) {
            (c - 1, c + 1)
        } else {
            (c, c)
        }
    }
}

/// Exact tiling of a box by closed cubes of radius `eta` (half side length).
#[derive(Debug, Clone)]
pub struct Cubication {
    bx: AxisBox,
    eta: f64,
    counts: Vec<usize>,
    cubes: Vec<Vec<i64>>,
    skeletons: Vec<Vec<Face>>,
    duals: Vec<Vec<Face>>,
}

impl Cubication {
    /// Tiles `bx` with cubes of radius `eta`, enumerating every skeleton
    /// `S^0..S^m` and every dual skeleton `T^{l*}` for `l = 0..m-1`.
    pub fn new(bx: &AxisBox, eta: f64) -> Result<Self, GeometryError> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(GeometryError::InvalidArgument(format!(
                "cube radius must be positive, got {eta}"
            )));
        }
        let m = bx.dim();
        let mut counts = Vec::with_capacity(m);
        for axis in 0..m {
            let side = bx.side(axis);
            let q = side / (2.0 * eta);
            let n = q.round();
            if n < 1.0 || ((q - n).abs() > 1e-12 * q.max(1.0)) {
                return Err(GeometryError::NonDivisibleEta { axis, side, eta });
            }
            counts.push(n as usize);
        }

        // Walk the (2n+1)^m lattice once; the parity pattern of a point
        // decides which skeleton or dual skeleton it belongs to.
        let mut skeletons = vec![Vec::new(); m + 1];
        let mut duals = vec![Vec::new(); m];
        let mut cubes = Vec::new();
        let lattice_dims: Vec<i64> = counts.iter().map(|&n| 2 * n as i64 + 1).collect();
        let total: i64 = lattice_dims.iter().product();
        let mut point = vec![0i64; m];
        for flat in 0..total {
            let mut rem = flat;
            for axis in (0..m).rev() {
                point[axis] = rem % lattice_dims[axis];
                rem /= lattice_dims[axis];
            }
            let odd: Vec<usize> = (0..m).filter(|&a| point[a] % 2 != 0).collect();
            let even: Vec<usize> = (0..m).filter(|&a| point[a] % 2 == 0).collect();
            skeletons[odd.len()].push(Face {
                center: point.clone(),
                free: odd.clone(),
            });
            if odd.len() == m {
                cubes.push(point.clone());
            }
            // Dual faces have free (even) axes strictly inside the lattice so
            // that their full extent stays in the box.
            if !odd.is_empty() {
                let inside = even.iter().all(|&a| point[a] > 0 && point[a] < lattice_dims[a] - 1);
                if inside {
                    let ell = odd.len() - 1;
                    duals[ell].push(Face {
                        center: point.clone(),
                        free: even,
                    });
                }
            }
        }
        Ok(Self {
            bx: bx.clone(),
            eta,
            counts,
            cubes,
            skeletons,
            duals,
        })
    }

    pub fn bx(&self) -> &AxisBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.bx.dim()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Number of cubes along each axis.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Lattice centers of the cubes (all coordinates odd), in row-major order.
    pub fn cubes(&self) -> &[Vec<i64>] {
        &self.cubes
    }

    /// The `j`-skeleton `S^j`.
    pub fn skeleton(&self, j: usize) -> &[Face] {
        &self.skeletons[j]
    }

    /// The dual skeleton `T^{l*}` of `S^l`, made of `(m - l - 1)`-faces.
    pub fn dual(&self, ell: usize) -> &[Face] {
        &self.duals[ell]
    }

    /// Index of a cube from its per-axis cube indices.
    pub fn cube_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    /// Per-axis cube indices of the cube with the given flat index.
    pub fn cube_multi_index(&self, mut flat: usize) -> Vec<usize> {
        let m = self.dim();
        let mut out = vec![0; m];
        for axis in (0..m).rev() {
            out[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        out
    }

    /// World coordinates of a lattice point.
    pub fn to_world(&self, lattice: &[i64]) -> Vec<f64> {
        lattice
            .iter()
            .enumerate()
            .map(|(a, &c)| self.bx.lo()[a] + c as f64 * self.eta)
            .collect()
    }

    pub fn cube_center(&self, cube: usize) -> Vec<f64> {
        self.to_world(&self.cubes[cube])
    }

    /// Cube containing `x` (ties resolved towards the lower cube; points on
    /// the upper box boundary belong to the last cube).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.bx.contains(x) {
            return None;
        }
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(a, &v)| {
                let t = ((v - self.bx.lo()[a]) / (2.0 * self.eta)).floor() as i64;
                t.clamp(0, self.counts[a] as i64 - 1) as usize
            })
            .collect();
        Some(self.cube_index(&idx))
    }

    /// Cubes sharing at least a vertex with `cube` (including itself).
    pub fn vertex_neighbors(&self, cube: usize) -> Vec<usize> {
        let m = self.dim();
        let base = self.cube_multi_index(cube);
        let mut out = Vec::new();
        for code in 0..3usize.pow(m as u32) {
            let mut c = code;
            let mut idx = Vec::with_capacity(m);
            let mut ok = true;
            for axis in 0..m {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                let v = base[axis] as i64 + d;
                if v < 0 || v >= self.counts[axis] as i64 {
                    ok = false;
                    break;
                }
                idx.push(v as usize);
            }
            if ok {
                out.push(self.cube_index(&idx));
            }
        }
        out.sort_unstable();
        out
    }

    /// All faces of dimension `j` of the given cubes, deduplicated.
    pub fn faces_of_cubes(&self, cubes: &[usize], j: usize) -> Vec<Face> {
        let m = self.dim();
        let mut set = BTreeSet::new();
        for &q in cubes {
            let c = &self.cubes[q];
            // choose the free axes, then a sign for each fixed axis
            for mask in 0..(1usize << m) {
                if mask.count_ones() as usize != j {
                    continue;
                }
                let free: Vec<usize> = (0..m).filter(|a| mask >> a & 1 == 1).collect();
                let fixed: Vec<usize> = (0..m).filter(|a| mask >> a & 1 == 0).collect();
                for signs in 0..(1usize << fixed.len()) {
                    let mut center = c.clone();
                    for (k, &a) in fixed.iter().enumerate() {
                        center[a] += if signs >> k & 1 == 1 { 1 } else { -1 };
                    }
                    set.insert(Face {
                        center,
                        free: free.clone(),
                    });
                }
            }
        }
        set.into_iter().collect()
    }

    /// Dual faces of dimension `m - l - 1` passing through the centers of
    /// the listed cubes. For `l = m - 1` these are the cube centers.
    pub fn dual_of_cubes(&self, cubes: &[usize], ell: usize) -> Vec<Face> {
        let m = self.dim();
        let star = m - ell - 1;
        let mut set = BTreeSet::new();
        for &q in cubes {
            let c = &self.cubes[q];
            for mask in 0..(1usize << m) {
                if mask.count_ones() as usize != star {
                    continue;
                }
                let free: Vec<usize> = (0..m).filter(|a| mask >> a & 1 == 1).collect();
                // a dual face meeting this cube: center shifted by ±1 on free axes
                for signs in 0..(1usize << star) {
                    let mut center = c.clone();
                    for (k, &a) in free.iter().enumerate() {
                        center[a] += if signs >> k & 1 == 1 { 1 } else { -1 };
                    }
                    set.insert(Face {
                        center,
                        free: free.clone(),
                    });
                }
            }
        }
        set.into_iter().collect()
    }

    /// Euclidean distance between a world point and a face.
    pub fn distance_to_face(&self, x: &[f64], face: &Face) -> f64 {
        let mut s = 0.0;
        for (a, &xa) in x.iter().enumerate() {
            let (lo, hi) = face.extent(a);
            let lo = self.bx.lo()[a] + lo as f64 * self.eta;
            let hi = self.bx.lo()[a] + hi as f64 * self.eta;
            let d = if xa < lo {
                lo - xa
            } else if xa > hi {
                xa - hi
            } else {
                0.0
            };
            s += d * d;
        }
        s.sqrt()
    }

    /// Sup-norm distance between a world point and a face.
    pub fn sup_distance_to_face(&self, x: &[f64], face: &Face) -> f64 {
        let mut s: f64 = 0.0;
        for (a, &xa) in x.iter().enumerate() {
            let (lo, hi) = face.extent(a);
            let lo = self.bx.lo()[a] + lo as f64 * self.eta;
            let hi = self.bx.lo()[a] + hi as f64 * self.eta;
            let d = if xa < lo {
                lo - xa
            } else if xa > hi {
                xa - hi
            } else {
                0.0
            };
            s = s.max(d);
        }
        s
    }

    /// Euclidean distance between two faces (both are boxes).
    pub fn face_distance(&self, f: &Face, g: &Face) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim() {
            let (a0, a1) = f.extent(a);
            let (b0, b1) = g.extent(a);
            let gap = if a1 < b0 {
                b0 - a1
            } else if b1 < a0 {
                a0 - b1
            } else {
                0
            };
            let d = gap as f64 * self.eta;
            s += d * d;
        }
        s.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(a: f64) -> AxisBox {
        AxisBox::centered_cube(2, a).unwrap()
    }

    #[test]
    fn four_squares_of_radius_half() {
        let c = Cubication::new(&square(1.0), 0.5).unwrap();
        assert_eq!(c.cubes().len(), 4);
        assert_eq!(c.skeleton(0).len(), 9);
        assert_eq!(c.skeleton(1).len(), 12);
        assert_eq!(c.skeleton(2).len(), 4);
        // dual of the 1-skeleton = cube centers
        let t = c.dual(1);
        assert_eq!(t.len(), 4);
        for f in t {
            assert!(f.center.iter().all(|v| v % 2 != 0));
        }
    }

    #[test]
    fn single_cube_dual_is_origin() {
        let c = Cubication::new(&square(1.0), 1.0).unwrap();
        assert_eq!(c.cubes().len(), 1);
        let t = c.dual(1);
        assert_eq!(t.len(), 1);
        assert_eq!(c.to_world(&t[0].center), vec![0.0, 0.0]);
    }

    #[test]
    fn eight_cubes_dual_segments() {
        let bx = AxisBox::centered_cube(3, 1.0).unwrap();
        let c = Cubication::new(&bx, 0.5).unwrap();
        assert_eq!(c.cubes().len(), 8);
        // segments joining adjacent cube centers: 3 directions x 4 = 12
        assert_eq!(c.dual(1).len(), 12);
        assert!(c.dual(1).iter().all(|f| f.dim() == 1));
    }

    #[test]
    fn rejects_non_dividing_radius() {
        let err = Cubication::new(&square(1.0), 0.3).unwrap_err();
        assert!(matches!(err, GeometryError::NonDivisibleEta { .. }));
    }

    #[test]
    fn locate_and_neighbors() {
        let c = Cubication::new(&square(1.0), 0.25).unwrap();
        let q = c.locate(&[0.1, 0.1]).unwrap();
        assert_eq!(c.cube_multi_index(q), vec![2, 2]);
        assert_eq!(c.vertex_neighbors(q).len(), 9);
        let corner = c.locate(&[-1.0, -1.0]).unwrap();
        assert_eq!(c.vertex_neighbors(corner).len(), 4);
        assert_eq!(c.locate(&[1.0, 1.0]), Some(15));
    }
}
