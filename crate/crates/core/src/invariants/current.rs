use super::{hurewicz_degree, InvariantError};
use crate::detectors::{default_budget, fuglede_check, DetectorField};
use crate::fields::{GridField, Target};
use crate::geometry::{AxisBox, DiskBoundary};
use crate::util::{solid_angle, wrap_angle};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::{E, PI};

/// Bump 0-form `e * exp(-1 / (1 - |x - a|^2 / r^2))`, equal to one at its
/// center and supported in the open ball `B_r(a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestForm {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl TestForm {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0);
        Self { center, radius }
    }

    fn q(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        r2 / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let q = self.q(x);
        if q >= 1.0 {
            0.0
        } else {
            E * (-1.0 / (1.0 - q)).exp()
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let q = self.q(x);
        if q >= 1.0 {
            return vec![0.0; x.len()];
        }
        let f = -self.value(x) / (1.0 - q).powi(2) * 2.0 / (self.radius * self.radius);
        x.iter().zip(&self.center).map(|(a, b)| f * (a - b)).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    /// `sup |d alpha|`, maximized over the radial profile.
    pub fn gradient_sup_norm(&self) -> f64 {
        let n = 20_000;
        (1..n)
            .map(|k| {
                let q = k as f64 / n as f64;
                E * (-1.0 / (1.0 - q)).exp() * 2.0 * q.sqrt() / (1.0 - q).powi(2)
            })
            .fold(0.0, f64::max)
            / self.radius
    }

    /// `sup |alpha| + sup |d alpha|`.
    pub fn c1_norm(&self) -> f64 {
        self.sup_norm() + self.gradient_sup_norm()
    }

    pub fn support_inside(&self, bx: &AxisBox) -> bool {
        (0..bx.dim()).all(|a| self.center[a] - self.radius > bx.lo()[a] && self.center[a] + self.radius < bx.hi()[a])
    }
}

/// Bumps centered on the `3^m` lattice at fractions `0.3, 0.5, 0.7` of each
/// side, with radius a quarter of the shortest side.
pub fn test_form_battery(bx: &AxisBox) -> Vec<TestForm> {
    let m = bx.dim();
    let radius = (0..m).map(|a| bx.side(a)).fold(f64::INFINITY, f64::min) / 4.0;
    let fr = [0.3, 0.5, 0.7];
    (0..3usize.pow(m as u32))
        .map(|mut code| {
            let mut c = vec![0.0; m];
            for (a, ca) in c.iter_mut().enumerate() {
                *ca = bx.lo()[a] + fr[code % 3] * bx.side(a);
                code /= 3;
            }
            TestForm::new(c, radius)
        })
        .collect()
}

/// Point mass of the Jacobian current.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub degree: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurrentReport {
    pub pairings: Vec<(TestForm, f64)>,
    /// Atom model prediction `(-1)^{n+1} sum_i d_i alpha(a_i)` per form.
    pub predicted: Vec<f64>,
    pub atoms: Vec<Atom>,
    /// `max |pairing - prediction|` over the battery.
    pub residual: f64,
    /// Empirical `C` in `residual <= C h |alpha|_{C^1}`.
    pub residual_constant: f64,
    /// Masked regions whose degree could not be read off (they touch the box
    /// boundary).
    pub unresolved_regions: usize,
}

fn check_domain(u: &GridField) -> Result<usize, InvariantError> {
    let m = u.dim();
    if !matches!(u.target(), Target::Sphere(n) if n + 1 == m) || !(2..=3).contains(&m) {
        return Err(InvariantError::InvalidArgument(format!(
            "need a field into S^(m-1) with m in 2..=3, got m = {m}, nu = {}",
            u.nu()
        )));
    }
    Ok(m)
}

/// Normalized flux of `u^# omega` through the grid face with base node
/// `base` spanned by `axes` (one axis for `m = 2`, two for `m = 3`), or
/// `None` when a vertex is masked.
fn face_flux(u: &GridField, base: usize, axes: &[usize]) -> Option<f64> {
    let s = u.grid().strides();
    let val = |node: usize| -> Option<&[f64]> { (!u.is_masked(node)).then(|| u.value(node)) };
    match axes.len() {
        1 => {
            let a = val(base)?;
            let b = val(base + s[axes[0]])?;
            Some(wrap_angle(b[1].atan2(b[0]) - a[1].atan2(a[0])) / (2.0 * PI))
        }
        _ => {
            let p = |node: usize| -> Option<[f64; 3]> {
                let v = val(node)?;
                Some([v[0], v[1], v[2]])
            };
            let u00 = p(base)?;
            let u10 = p(base + s[axes[0]])?;
            let u01 = p(base + s[axes[1]])?;
            let u11 = p(base + s[axes[0]] + s[axes[1]])?;
            Some((solid_angle(&u00, &u10, &u11) + solid_angle(&u00, &u11, &u01)) / (4.0 * PI))
        }
    }
}

/// Faces of the boundary of the cell at `base`: `(face base, other axes,
/// sign)` with `d[0,1]^m = sum_i (-1)^i (face_{x_i = 1} - face_{x_i = 0})`.
fn cell_boundary(u: &GridField, base: usize) -> Vec<(usize, Vec<usize>, i64)> {
    let m = u.dim();
    let s = u.grid().strides();
    let mut out = Vec::with_capacity(2 * m);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&a| a != i).collect();
        let sign = if i % 2 == 0 { 1 } else { -1 };
        out.push((base + s[i], others.clone(), sign));
        out.push((base, others, -sign));
    }
    out
}

fn cell_is_clear(u: &GridField, base: usize, offsets: &[usize]) -> bool {
    offsets.iter().all(|o| !u.is_masked(base + o))
}

/// `<Jac u, alpha> = int u^# omega_{S^n} ^ d alpha` by cellwise quadrature,
/// with `omega_{S^n}` of unit mass. Cells with a masked corner are skipped;
/// the second value is their total volume.
fn pairing_with_excluded(u: &GridField, alpha: &TestForm) -> (f64, f64) {
    let grid = u.grid();
    let m = grid.dim();
    let h = grid.h().to_vec();
    let s = grid.strides().to_vec();
    let offsets = grid.corner_offsets();
    let vol = grid.cell_volume();
    let bases = grid.cell_bases();
    let parts: Vec<(f64, f64)> = bases
        .par_chunks(2048)
        .map(|chunk| {
            let mut acc = 0.0;
            let mut excluded = 0.0;
            for &b in chunk {
                let center = grid.cell_center(b);
                let g = alpha.gradient(&center);
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                if !cell_is_clear(u, b, &offsets) {
                    excluded += vol;
                    continue;
                }
                let mut integrand = 0.0;
                for c in 0..m {
                    let axes: Vec<usize> = (0..m).filter(|&a| a != c).collect();
                    let j = 0.5
                        * (face_flux(u, b, &axes).unwrap_or(0.0) + face_flux(u, b + s[c], &axes).unwrap_or(0.0))
                        / axes.iter().map(|&a| h[a]).product::<f64>();
                    let sign = if (m - 1 - c).is_multiple_of(2) { 1.0 } else { -1.0 };
                    integrand += sign * j * g[c];
                }
                acc += integrand * vol;
            }
            (acc, excluded)
        })
        .collect();
    parts.iter().fold((0.0, 0.0), |(a, e), (x, y)| (a + x, e + y))
}

pub fn jacobian_pairing(u: &GridField, alpha: &TestForm) -> Result<f64, InvariantError> {
    check_domain(u)?;
    if !alpha.support_inside(u.grid().bx()) {
        return Err(InvariantError::InvalidArgument(
            "test form support touches the box boundary".into(),
        ));
    }
    Ok(pairing_with_excluded(u, alpha).0)
}

/// Union-find over indices.
struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Local degrees on every grid cell. Cells with all corners unmasked carry
/// the degree of their boundary; each connected region of cells touching
/// the mask carries the degree of the region's outer boundary. Nonzero
/// neighbours are merged into atoms, and the atom model is compared with
/// the Jacobian pairing on the test-form battery.
pub fn cell_degree_sweep(u: &GridField) -> Result<CurrentReport, InvariantError> {
    let m = check_domain(u)?;
    let grid = u.grid();
    let bases = grid.cell_bases();
    let offsets = grid.corner_offsets();
    let cell_of: HashMap<usize, usize> = bases.iter().enumerate().map(|(i, &b)| (b, i)).collect();

    // degrees of clear cells
    let clear_degrees: Vec<Option<i64>> = bases
        .par_iter()
        .map(|&b| {
            if !cell_is_clear(u, b, &offsets) {
                return Ok(None);
            }
            let mut total = 0.0;
            for (fb, axes, sign) in cell_boundary(u, b) {
                total += sign as f64 * face_flux(u, fb, &axes).unwrap_or(0.0);
            }
            let k = total.round();
            if (total - k).abs() > 0.1 {
                return Err(InvariantError::Undersampled(format!(
                    "cell flux {total} is not an integer"
                )));
            }
            Ok(Some(k as i64))
        })
        .collect::<Result<_, _>>()?;

    // connected regions of cells touching the mask
    let n = bases.len();
    let mut dsu = Dsu::new(n);
    let mut idx = vec![0usize; m];
    for (ci, &b) in bases.iter().enumerate() {
        if clear_degrees[ci].is_some() {
            continue;
        }
        grid.multi_index(b, &mut idx);
        for a in 0..m {
            if idx[a] + 2 < grid.dims()[a] {
                if let Some(&cj) = cell_of.get(&(b + grid.strides()[a])) {
                    if clear_degrees[cj].is_none() {
                        dsu.union(ci, cj);
                    }
                }
            }
        }
    }
    let mut regions: HashMap<usize, Vec<usize>> = HashMap::new();
    for ci in 0..n {
        if clear_degrees[ci].is_none() {
            regions.entry(dsu.find(ci)).or_default().push(ci);
        }
    }
    let mut region_list: Vec<Vec<usize>> = regions.into_values().collect();
    region_list.sort_by_key(|r| r[0]);

    let mut items: Vec<(Vec<f64>, i64)> = Vec::new();
    let mut unresolved = 0;
    for region in &region_list {
        let mut chain: HashMap<(usize, Vec<usize>), i64> = HashMap::new();
        for &ci in region {
            for (fb, axes, sign) in cell_boundary(u, bases[ci]) {
                *chain.entry((fb, axes)).or_insert(0) += sign;
            }
        }
        let mut total = 0.0;
        let mut ok = true;
        for ((fb, axes), c) in &chain {
            if *c == 0 {
                continue;
            }
            match face_flux(u, *fb, axes) {
                Some(f) => total += *c as f64 * f,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            unresolved += 1;
            continue;
        }
        let k = total.round();
        if (total - k).abs() > 0.1 {
            return Err(InvariantError::Undersampled(format!(
                "region flux {total} is not an integer"
            )));
        }
        if k != 0.0 {
            let mut loc = vec![0.0; m];
            for &ci in region {
                for (l, c) in loc.iter_mut().zip(grid.cell_center(bases[ci])) {
                    *l += c / region.len() as f64;
                }
            }
            items.push((loc, k as i64));
        }
    }
    for (ci, d) in clear_degrees.iter().enumerate() {
        if let Some(d) = d {
            if *d != 0 {
                items.push((grid.cell_center(bases[ci]), *d));
            }
        }
    }

    // merge items closer than one cell diagonal (plus slack)
    let reach = 1.01 * grid.h().iter().map(|h| h * h).sum::<f64>().sqrt();
    let mut merge = Dsu::new(items.len());
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let d: f64 = items[i]
                .0
                .iter()
                .zip(&items[j].0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d <= reach {
                merge.union(i, j);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..items.len() {
        groups.entry(merge.find(i)).or_default().push(i);
    }
    let mut atoms: Vec<Atom> = groups
        .into_values()
        .filter_map(|g| {
            let degree: i64 = g.iter().map(|&i| items[i].1).sum();
            if degree == 0 {
                return None;
            }
            let mut loc = vec![0.0; m];
            for &i in &g {
                for (l, c) in loc.iter_mut().zip(&items[i].0) {
                    *l += c / g.len() as f64;
                }
            }
            Some(Atom { location: loc, degree })
        })
        .collect();
    atoms.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let battery = test_form_battery(grid.bx());
    let mut pairings = Vec::with_capacity(battery.len());
    let mut predicted = Vec::with_capacity(battery.len());
    let mut residual: f64 = 0.0;
    let mut constant: f64 = 0.0;
    for alpha in battery {
        let value = pairing_with_excluded(u, &alpha).0;
        let pred = sign
            * atoms
                .iter()
                .map(|a| a.degree as f64 * alpha.value(&a.location))
                .sum::<f64>();
        let err = (value - pred).abs();
        residual = residual.max(err);
        constant = constant.max(err / (grid.h_max() * alpha.c1_norm()));
        predicted.push(pred);
        pairings.push((alpha, value));
    }
    Ok(CurrentReport {
        pairings,
        predicted,
        atoms,
        residual,
        residual_constant: constant,
        unresolved_regions: unresolved,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendabilityVerdict {
    pub extendable: bool,
    pub atoms: Vec<Atom>,
    pub screened: usize,
    pub admissible: usize,
    /// Admissible disks whose boundary carries a nonzero degree.
    pub nonzero_disks: Vec<(usize, i64)>,
    /// Battery forms whose pairing exceeds the tolerance.
    pub pairing_violations: usize,
    pub tolerance_factor: f64,
}

pub const MIN_ADMISSIBLE_DISKS: usize = 8;

/// Screens `disks` with the Fuglede test against `w`, computes Hurewicz
/// degrees on the admissible ones and, when `m = n + 1`, the Jacobian
/// pairings on the battery with tolerance `max(1e-2, 5h) |d alpha|`.
pub fn extendability_oracle(
    u: &GridField,
    disks: &[DiskBoundary],
    w: &DetectorField,
) -> Result<ExtendabilityVerdict, InvariantError> {
    let n = match u.target() {
        Target::Sphere(n) => n,
        Target::Unconstrained => return Err(InvariantError::InvalidArgument("field has no sphere target".into())),
    };
    let m = u.dim();
    if n + 1 > m {
        return Err(InvariantError::InvalidArgument(format!(
            "need n <= m - 1, got n = {n}, m = {m}"
        )));
    }
    let results: Vec<Option<(usize, i64)>> = disks
        .par_iter()
        .map(|g| {
            if g.dim() != n {
                return None;
            }
            let budget = default_budget(w, g.dim());
            if !fuglede_check(w, g, budget).admissible {
                return None;
            }
            hurewicz_degree(u, g).ok().map(|d| (g.id, d))
        })
        .collect();
    let degrees: Vec<(usize, i64)> = results.into_iter().flatten().collect();
    if degrees.len() < MIN_ADMISSIBLE_DISKS {
        return Err(InvariantError::InsufficientAdmissibleDisks {
            found: degrees.len(),
            needed: MIN_ADMISSIBLE_DISKS,
        });
    }
    let nonzero: Vec<(usize, i64)> = degrees.iter().copied().filter(|d| d.1 != 0).collect();
    let factor = f64::max(1e-2, 5.0 * u.grid().h_max());
    let mut violations = 0;
    let mut atoms = Vec::new();
    if n + 1 == m {
        let report = cell_degree_sweep(u)?;
        for (alpha, value) in &report.pairings {
            if value.abs() > factor * alpha.gradient_sup_norm() {
                violations += 1;
            }
        }
        atoms = report.atoms;
    } else {
        for (id, d) in &nonzero {
            if let Some(g) = disks.iter().find(|g| g.id == *id) {
                atoms.push(Atom {
                    location: g.center.clone(),
                    degree: *d,
                });
            }
        }
    }
    Ok(ExtendabilityVerdict {
        extendable: nonzero.is_empty() && violations == 0,
        atoms,
        screened: disks.len(),
        admissible: degrees.len(),
        nonzero_disks: nonzero,
        pairing_violations: violations,
        tolerance_factor: factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::geometry::StructuredSingularSet;

    fn radial(n: usize, m: usize) -> GridField {
        let bx = AxisBox::centered_cube(m, 1.0).unwrap();
        let g = Grid::new(&bx, &vec![n; m]).unwrap();
        let t = StructuredSingularSet::points(m, &[vec![0.0; m]]);
        GridField::sample(g, m, Target::Sphere(m - 1), Some(t), |x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            Some(x.iter().map(|v| v / r).collect())
        })
        .unwrap()
    }

    #[test]
    fn bump_gradient_matches_difference_quotient() {
        let a = TestForm::new(vec![0.1, -0.2], 0.5);
        let x = [0.3, -0.1];
        let g = a.gradient(&x);
        let eps = 1e-6;
        for k in 0..2 {
            let mut p = x;
            let mut q = x;
            p[k] += eps;
            q[k] -= eps;
            let fd = (a.value(&p) - a.value(&q)) / (2.0 * eps);
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn radial_field_has_single_positive_atom() {
        let u = radial(48, 2);
        let r = cell_degree_sweep(&u).unwrap();
        assert_eq!(r.atoms.len(), 1);
        assert_eq!(r.atoms[0].degree, 1);
        assert!(r.atoms[0].location.iter().all(|c| c.abs() < 0.05));
        let center = &r.pairings[4];
        assert!((center.1 - 1.0).abs() < 0.05, "{}", center.1);
    }

    #[test]
    fn radial_field_in_three_dimensions() {
        let u = radial(47, 3);
        let r = cell_degree_sweep(&u).unwrap();
        assert_eq!(r.atoms.len(), 1);
        assert_eq!(r.atoms[0].degree, 1);
        let center = &r.pairings[13];
        assert!((center.1 + 1.0).abs() < 0.05, "{}", center.1);
    }
}
