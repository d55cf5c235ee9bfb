use super::{FieldError, GridField, Target};
use crate::geometry::{DiskBoundary, TriangulatedSphere};
use crate::util::{norm, wrap_angle};
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

/// Values of a map sampled at the vertices of a triangulated sphere.
#[derive(Debug, Clone)]
pub struct SampledSphereMap {
    pub sphere: Arc<TriangulatedSphere>,
    pub nu: usize,
    pub values: Vec<f64>,
}

impl SampledSphereMap {
    pub fn from_fn<F: Fn(&[f64]) -> Vec<f64>>(sphere: Arc<TriangulatedSphere>, nu: usize, f: F) -> Self {
        let mut values = Vec::with_capacity(nu * sphere.num_vertices());
        for i in 0..sphere.num_vertices() {
            let v = f(sphere.vertex(i));
            assert_eq!(v.len(), nu);
            values.extend(v);
        }
        Self { sphere, nu, values }
    }

    pub fn value(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.nu..(vertex + 1) * self.nu]
    }
}

const UNIT_ROUNDING: f64 = 8.0 * f64::EPSILON;

/// Nearest-point projection `u / |u|` onto the unit sphere. Fails, naming
/// the first offending node, when some unmasked node is farther than
/// `iota` from the sphere. Values already unit up to rounding are kept
/// as they are, so projecting twice is bit-for-bit the same as once.
pub fn project_to_sphere(u: &GridField, iota: f64) -> Result<GridField, FieldError> {
    if !(0.0..1.0).contains(&iota) {
        return Err(FieldError::InvalidField(format!("iota = {iota} outside [0, 1)")));
    }
    let nu = u.nu();
    let mut values = u.values().to_vec();
    for node in 0..u.grid().len() {
        if u.is_masked(node) {
            continue;
        }
        let r = norm(u.value(node));
        let distance = (r - 1.0).abs();
        if distance > iota {
            return Err(FieldError::OutsideTubularNeighborhood { node, distance, iota });
        }
        if distance > UNIT_ROUNDING {
            for v in values[node * nu..(node + 1) * nu].iter_mut() {
                *v /= r;
            }
        }
    }
    u.with_values(values, Some(u.mask()), Target::Sphere(nu - 1))
}

/// Continuous phase `theta` with `(cos theta, sin theta) = u`, built by a
/// breadth-first unwrap from the lowest-index unmasked node of each
/// connected component and checked on every grid edge.
pub fn circle_lift(u: &GridField) -> Result<GridField, FieldError> {
    if u.nu() != 2 {
        return Err(FieldError::InvalidField("circle lift needs nu = 2".into()));
    }
    let grid = u.grid();
    let n = grid.len();
    let m = grid.dim();
    let angle = |i: usize| {
        let v = u.value(i);
        v[1].atan2(v[0])
    };
    let mut theta = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    let mut idx = vec![0usize; m];
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] || u.is_masked(start) {
            continue;
        }
        seen[start] = true;
        theta[start] = angle(start);
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            grid.multi_index(node, &mut idx);
            for a in 0..m {
                let s = grid.strides()[a];
                let mut nbs = [None, None];
                if idx[a] > 0 {
                    nbs[0] = Some(node - s);
                }
                if idx[a] + 1 < grid.dims()[a] {
                    nbs[1] = Some(node + s);
                }
                for nb in nbs.into_iter().flatten() {
                    if seen[nb] || u.is_masked(nb) {
                        continue;
                    }
                    seen[nb] = true;
                    theta[nb] = theta[node] + wrap_angle(angle(nb) - theta[node]);
                    queue.push_back(nb);
                }
            }
        }
    }
    // every edge must now carry a jump below pi
    for node in 0..n {
        if u.is_masked(node) {
            continue;
        }
        grid.multi_index(node, &mut idx);
        for a in 0..m {
            if idx[a] + 1 < grid.dims()[a] {
                let nb = node + grid.strides()[a];
                if !u.is_masked(nb) && (theta[nb] - theta[node]).abs() >= PI {
                    return Err(FieldError::NonzeroHolonomy { from: node, to: nb });
                }
            }
        }
    }
    u.derived(1, theta, Some(u.mask()), Target::Unconstrained)
}

/// Multilinear interpolation of `u` at arbitrary points, renormalised onto
/// the sphere for sphere-valued fields. Every point must lie in the box and
/// its cell, padded by one cell on each side, must be free of masked nodes.
pub fn restrict_to_points(u: &GridField, points: &[Vec<f64>]) -> Result<Vec<f64>, FieldError> {
    let grid = u.grid();
    let m = grid.dim();
    let nu = u.nu();
    let mut out = Vec::with_capacity(nu * points.len());
    let mut idx = vec![0usize; m];
    for (sample, x) in points.iter().enumerate() {
        if !grid.bx().contains(x) {
            return Err(FieldError::CurveOutsideBox { sample });
        }
        let (base, _) = grid.locate(x).ok_or(FieldError::CurveOutsideBox { sample })?;
        grid.multi_index(base, &mut idx);
        // scan the 4^m padded neighbourhood
        let mut clear = true;
        for code in 0..4usize.pow(m as u32) {
            let mut c = code;
            let mut node = 0;
            let mut inside = true;
            for a in 0..m {
                let off = (c % 4) as i64 - 1;
                c /= 4;
                let v = idx[a] as i64 + off;
                if v < 0 || v >= grid.dims()[a] as i64 {
                    inside = false;
                    break;
                }
                node += v as usize * grid.strides()[a];
            }
            if inside && u.is_masked(node) {
                clear = false;
                break;
            }
        }
        if !clear {
            return Err(FieldError::CurveHitsSingularSet { sample });
        }
        let mut v = u.interpolate(x).ok_or(FieldError::CurveHitsSingularSet { sample })?;
        if let Target::Sphere(_) = u.target() {
            let r = norm(&v);
            if r < 1e-3 {
                return Err(FieldError::CurveHitsSingularSet { sample });
            }
            for c in v.iter_mut() {
                *c /= r;
            }
        }
        out.extend(v);
    }
    Ok(out)
}

/// Restriction of `u` to the boundary of an axis-aligned disk, sampled at
/// the vertices of its parametrizing sphere.
pub fn restrict_to_curve(u: &GridField, gamma: &DiskBoundary) -> Result<SampledSphereMap, FieldError> {
    let values = restrict_to_points(u, &gamma.points())?;
    Ok(SampledSphereMap {
        sphere: gamma.sphere.clone(),
        nu: u.nu(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::geometry::AxisBox;

    fn grid(n: usize) -> Grid {
        Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let g = grid(9);
        let unit = GridField::sample(g.clone(), 2, Target::Sphere(1), None, |x| {
            Some(vec![x[0].cos(), x[0].sin()])
        })
        .unwrap();
        let p = project_to_sphere(&unit, 0.2).unwrap();
        for (a, b) in p.values().iter().zip(unit.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let big = GridField::sample(g.clone(), 2, Target::Unconstrained, None, |_| Some(vec![1.1, 0.0])).unwrap();
        let p = project_to_sphere(&big, 0.2).unwrap();
        assert!(p.values().chunks(2).all(|v| v == [1.0, 0.0]));
        let bad = GridField::sample(g.clone(), 2, Target::Unconstrained, None, |x| {
            if x[0] == 0.0 && x[1] == 0.0 {
                Some(vec![1.3, 0.0])
            } else {
                Some(vec![1.0, 0.0])
            }
        })
        .unwrap();
        match project_to_sphere(&bad, 0.2) {
            Err(FieldError::OutsideTubularNeighborhood { node, .. }) => {
                assert_eq!(node, g.flat(&[4, 4]))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lift_of_phase_field() {
        let g = grid(33);
        let u = GridField::sample(g, 2, Target::Sphere(1), None, |x| {
            Some(vec![(3.0 * x[0]).cos(), (3.0 * x[0]).sin()])
        })
        .unwrap();
        let th = circle_lift(&u).unwrap();
        for i in 0..u.grid().len() {
            let t = th.value(i)[0];
            assert!((t.cos() - u.value(i)[0]).abs() < 1e-9);
            assert!((t.sin() - u.value(i)[1]).abs() < 1e-9);
            let x = u.grid().point(i);
            let k = (t - 3.0 * x[0]) / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn lift_of_vortex_fails() {
        let g = grid(33);
        let u = GridField::sample(g, 2, Target::Sphere(1), None, |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (r > 0.3).then(|| vec![x[0] / r, x[1] / r])
        })
        .unwrap();
        assert!(matches!(circle_lift(&u), Err(FieldError::NonzeroHolonomy { .. })));
    }
}
