use super::{compose, Classification, PipelineError};
use crate::detectors::DetectorField;
use crate::fields::{finite_difference, GridField};
use crate::geometry::{Cubication, Face};
use crate::util::smoothstep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// Cylindrical opening around one face: along the normal axes `N`,
/// `x_N -> c_N + zeta(x_N - c_N + z) - z` where `zeta(y) = lambda(|y|_inf) y`
/// vanishes on `|y| <= inner + shift` and is the identity for
/// `|y| >= outer - shift`. The map is the identity off the support
/// `{x_F in face extent, |x_N - c_N|_inf < outer}`, and constant along `N`
/// wherever `|x_N - c_N|_inf <= inner`.
#[derive(Debug, Clone, Serialize)]
pub struct FaceOpening {
    pub face: Option<Face>,
    pub normal: Vec<usize>,
    pub anchor: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
    pub shift: f64,
    pub z: Vec<f64>,
}

impl FaceOpening {
    pub fn in_support(&self, x: &[f64]) -> bool {
        for a in 0..x.len() {
            if self.normal.contains(&a) {
                if (x[a] - self.anchor[a]).abs() >= self.outer {
                    return false;
                }
            } else if x[a] < self.lo[a] || x[a] > self.hi[a] {
                return false;
            }
        }
        true
    }

    fn map_with(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut s: f64 = 0.0;
        for &a in &self.normal {
            s = s.max((x[a] - self.anchor[a] + z[a]).abs());
        }
        let a0 = self.inner + self.shift;
        let b0 = self.outer - self.shift;
        let lambda = smoothstep((s - a0) / (b0 - a0));
        let mut out = x.to_vec();
        for &a in &self.normal {
            out[a] = self.anchor[a] + lambda * (x[a] - self.anchor[a] + z[a]) - z[a];
        }
        out
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        self.map_with(x, &self.z)
    }

    fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.anchor.len();
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for a in 0..m {
            if self.normal.contains(&a) {
                lo[a] = self.anchor[a] - self.outer;
                hi[a] = self.anchor[a] + self.outer;
            }
        }
        (lo, hi)
    }
}

/// Composite opening `Phi = Phi_1 o ... o Phi_n` stored as face pieces in
/// the order they act on a point (highest face dimension first), with a
/// bucket index on a lattice of step `2 eta`.
#[derive(Debug, Clone, Serialize)]
pub struct OpeningMap {
    pub pieces: Vec<FaceOpening>,
    #[serde(skip)]
    origin: Vec<f64>,
    #[serde(skip)]
    bucket: f64,
    #[serde(skip)]
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl OpeningMap {
    fn new(pieces: Vec<FaceOpening>, origin: Vec<f64>, bucket: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in pieces.iter().enumerate() {
            let (lo, hi) = p.bbox();
            let a: Vec<i64> = lo
                .iter()
                .zip(&origin)
                .map(|(x, o)| ((x - o) / bucket).floor() as i64)
                .collect();
            let b: Vec<i64> = hi
                .iter()
                .zip(&origin)
                .map(|(x, o)| ((x - o) / bucket).floor() as i64)
                .collect();
            let mut key = a.clone();
            loop {
                buckets.entry(key.clone()).or_default().push(i);
                let mut axis = key.len();
                loop {
                    if axis == 0 {
                        break;
                    }
                    axis -= 1;
                    if key[axis] < b[axis] {
                        key[axis] += 1;
                        break;
                    }
                    key[axis] = a[axis];
                }
                if key == a {
                    break;
                }
            }
        }
        Self {
            pieces,
            origin,
            bucket,
            buckets,
        }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.origin)
            .map(|(v, o)| ((v - o) / self.bucket).floor() as i64)
            .collect()
    }

    /// `Phi(x)`, or `None` when no piece moves `x`.
    pub fn apply(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut cur = x.to_vec();
        let mut last: Option<usize> = None;
        let mut moved = false;
        loop {
            let next = self.buckets.get(&self.key(&cur)).and_then(|list| {
                list.iter()
                    .copied()
                    .filter(|&i| last.is_none_or(|l| i > l))
                    .filter(|&i| self.pieces[i].in_support(&cur))
                    .min()
            });
            match next {
                Some(i) => {
                    cur = self.pieces[i].map(&cur);
                    last = Some(i);
                    moved = true;
                }
                None => break,
            }
        }
        moved.then_some(cur)
    }

    pub fn is_identity(&self) -> bool {
        self.pieces.is_empty()
    }
}

/// Which skeleton is opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OpeningTarget {
    /// Faces of the cubes in `U^m`.
    UEll,
    /// Every face of the cubication.
    SEll,
}

/// Per-face diagnostics of an opening.
#[derive(Debug, Clone, Default, Serialize)]
pub struct OpeningStats {
    pub pieces: usize,
    pub reused_translations: usize,
    /// `max_faces int w o Phi_z / int w` over the support of each face.
    pub max_translation_ratio: f64,
    /// `max_faces |D(u o Phi)|_{L^{kp}} / |Du|_{L^{kp}}` on `face + Q_{2 rho eta}`.
    pub max_sobolev_ratio: f64,
    /// Faces where every sampled translate met an infinite detector value.
    pub blocked_faces: usize,
}

/// Radii `(inner, outer, shift)` for faces of dimension `j`: the constant
/// region of a `j`-face is the whole support of the `(j+1)`-faces meeting
/// it, so pieces glue continuously at face ends.
fn radii(rho: f64, eta: f64, j: usize) -> (f64, f64, f64) {
    let inner = rho * eta / f64::powi(2.0, j as i32);
    (inner, 2.0 * inner, inner / 8.0)
}

fn face_piece(cub: &Cubication, face: &Face, rho: f64) -> FaceOpening {
    let m = cub.dim();
    let eta = cub.eta();
    let lo_l: Vec<i64> = (0..m).map(|a| face.extent(a).0).collect();
    let hi_l: Vec<i64> = (0..m).map(|a| face.extent(a).1).collect();
    let (inner, outer, shift) = radii(rho, eta, face.dim());
    FaceOpening {
        face: Some(face.clone()),
        normal: (0..m).filter(|a| !face.is_free(*a)).collect(),
        anchor: cub.to_world(&face.center),
        lo: cub.to_world(&lo_l),
        hi: cub.to_world(&hi_l),
        inner,
        outer,
        shift,
        z: vec![0.0; m],
    }
}

fn support_nodes(u: &GridField, lo: &[f64], hi: &[f64]) -> Vec<usize> {
    let grid = u.grid();
    let m = grid.dim();
    let mut ranges = Vec::with_capacity(m);
    for a in 0..m {
        let l = grid.bx().lo()[a];
        let h = grid.h()[a];
        let i0 = (((lo[a] - l) / h) - 1e-9).ceil().max(0.0) as usize;
        let i1 = ((((hi[a] - l) / h) + 1e-9).floor() as i64).min(grid.dims()[a] as i64 - 1);
        if i1 < i0 as i64 {
            return Vec::new();
        }
        ranges.push((i0, i1 as usize));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(grid.flat(&idx));
        let mut a = m;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                break;
            }
            idx[a] = ranges[a].0;
        }
    }
}

/// Picks the translation minimizing `sum_x w(Phi_z(x))` over the support
/// nodes among `samples` draws from `Q_shift` (normal axes lying on the
/// box boundary are not translated). When every draw meets infinite values
/// the one meeting the fewest wins. Returns `(z, chosen cost, int w)` with
/// an infinite cost in that case.
fn choose_translation(
    u: &GridField,
    piece: &FaceOpening,
    w: &DetectorField,
    samples: usize,
    seed: u64,
    stream: u64,
) -> (Vec<f64>, f64, f64) {
    let grid = u.grid();
    let m = grid.dim();
    let (lo, hi) = piece.bbox();
    let nodes: Vec<usize> = support_nodes(u, &lo, &hi)
        .into_iter()
        .filter(|&n| piece.in_support(&grid.point(n)))
        .collect();
    let vol = grid.cell_volume();
    let base: f64 = nodes.iter().map(|&n| w.eval(&grid.point(n))).sum::<f64>() * vol;
    let free_axes: Vec<usize> = piece
        .normal
        .iter()
        .copied()
        .filter(|&a| {
            let c = piece.anchor[a];
            c > grid.bx().lo()[a] + 1e-12 && c < grid.bx().hi()[a] - 1e-12
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // rank by the number of nodes sent onto infinite detector values, then
    // by the finite part of the cost
    let mut best = (vec![0.0; m], usize::MAX, f64::INFINITY);
    for _ in 0..samples.max(1) {
        let mut z = vec![0.0; m];
        for &a in &free_axes {
            z[a] = rng.gen_range(-piece.shift..=piece.shift);
        }
        let mut hits = 0;
        let mut cost = 0.0;
        for &n in &nodes {
            let v = w.eval(&piece.map_with(&grid.point(n), &z));
            if v.is_finite() {
                cost += v;
            } else {
                hits += 1;
            }
            if hits > best.1 || (hits == best.1 && cost * vol >= best.2) {
                break;
            }
        }
        let cost = cost * vol;
        if hits < best.1 || (hits == best.1 && cost < best.2) {
            best = (z, hits, cost);
        }
    }
    let cost = if best.1 == 0 { best.2 } else { f64::INFINITY };
    (best.0, cost, base)
}

/// Node-sum of `|Du|^{kp}` over the box `[lo, hi]`, skipping nodes without
/// a valid derivative.
fn local_energy(d: &crate::fields::Derivative, u: &GridField, lo: &[f64], hi: &[f64], kp: f64) -> f64 {
    support_nodes(u, lo, hi)
        .into_iter()
        .filter(|&n| d.valid[n])
        .map(|n| d.norm_at(n).powf(kp))
        .sum()
}

fn sobolev_ratios(
    u: &GridField,
    out: &GridField,
    pieces: &[FaceOpening],
    margin: f64,
    kp: f64,
) -> Result<f64, PipelineError> {
    let du = finite_difference(u, 1)?;
    let dv = finite_difference(out, 1)?;
    let ratios: Vec<f64> = pieces
        .par_iter()
        .map(|p| {
            let lo: Vec<f64> = p.lo.iter().map(|x| x - margin).collect();
            let hi: Vec<f64> = p.hi.iter().map(|x| x + margin).collect();
            let a = local_energy(&du, u, &lo, &hi, kp);
            let b = local_energy(&dv, out, &lo, &hi, kp);
            if a <= 1e-300 {
                if b <= 1e-300 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                (b / a).powf(1.0 / kp)
            }
        })
        .collect();
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

fn finish(u: &GridField, pieces: Vec<FaceOpening>, bucket: f64) -> Result<(GridField, OpeningMap), PipelineError> {
    let map = OpeningMap::new(pieces, u.grid().bx().lo().to_vec(), bucket);
    let out = if map.is_identity() {
        u.clone()
    } else {
        compose(u, |x| map.apply(x))?
    };
    Ok((out, map))
}

/// Opens `u` at the point `b`: `Phi_z(x) = zeta(x - b + z) - z + b` with
/// `zeta = 0` on `Q_{2 delta}` and the identity off `Q_{3 delta}`, the
/// translation `z in Q_delta` minimizing `int_{Q_{5 delta}(b)} w o Phi_z` among
/// `samples` seeded draws. The output is constant on `Q_delta(b)` and equal
/// to `u` off `Q_{4 delta}(b)`.
pub fn open_at_point(
    u: &GridField,
    b: &[f64],
    delta: f64,
    w: &DetectorField,
    samples: usize,
    seed: u64,
) -> Result<(GridField, OpeningMap), PipelineError> {
    let m = u.dim();
    let bx = u.grid().bx();
    if b.len() != m
        || delta <= 0.0
        || (0..m).any(|a| b[a] - 5.0 * delta < bx.lo()[a] || b[a] + 5.0 * delta > bx.hi()[a])
    {
        return Err(PipelineError::InvalidArgument(format!(
            "Q_(5 delta) around {b:?} with delta = {delta} must lie in the box"
        )));
    }
    let mut piece = FaceOpening {
        face: None,
        normal: (0..m).collect(),
        anchor: b.to_vec(),
        lo: b.to_vec(),
        hi: b.to_vec(),
        inner: delta,
        outer: 4.0 * delta,
        shift: delta,
        z: vec![0.0; m],
    };
    let grid = u.grid();
    let region: Vec<usize> = support_nodes(
        u,
        &b.iter().map(|x| x - 5.0 * delta).collect::<Vec<_>>(),
        &b.iter().map(|x| x + 5.0 * delta).collect::<Vec<_>>(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (vec![0.0; m], f64::INFINITY);
    for _ in 0..samples.max(1) {
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-delta..=delta)).collect();
        let cost: f64 = region
            .iter()
            .map(|&n| {
                let x = grid.point(n);
                if piece.in_support(&x) {
                    w.eval(&piece.map_with(&x, &z))
                } else {
                    w.eval(&x)
                }
            })
            .sum();
        if cost < best.1 {
            best = (z, cost);
        }
    }
    piece.z = best.0;
    finish(u, vec![piece], 8.0 * delta)
}

/// Opens `u` near the `j`-faces of the chosen skeleton for `j = 0..=ell`.
/// `j`-faces are made constant in their normal directions within
/// `rho eta / 2^j`; translations already present in `reuse` are kept, new
/// ones are inserted.
#[allow(clippy::too_many_arguments)]
pub fn open_on_skeleton(
    u: &GridField,
    cls: &Classification,
    target: OpeningTarget,
    ell: usize,
    w: &DetectorField,
    samples: usize,
    seed: u64,
    reuse: &mut BTreeMap<Face, Vec<f64>>,
) -> Result<(GridField, OpeningMap, OpeningStats), PipelineError> {
    let cub = &cls.cubication;
    let m = cub.dim();
    if ell >= m {
        return Err(PipelineError::InvalidArgument(format!(
            "skeleton dimension {ell} >= m = {m}"
        )));
    }
    if ell as f64 > cls.kp() {
        return Err(PipelineError::InvalidArgument(format!(
            "opening needs l <= kp, got l = {ell}, kp = {}",
            cls.kp()
        )));
    }
    let cubes = match target {
        OpeningTarget::UEll => cls.u_cubes(),
        OpeningTarget::SEll => (0..cub.cubes().len()).collect(),
    };
    let mut faces: Vec<Face> = Vec::new();
    for j in (0..=ell).rev() {
        if cubes.is_empty() {
            break;
        }
        faces.extend(cub.faces_of_cubes(&cubes, j));
    }
    let mut pieces: Vec<FaceOpening> = faces.iter().map(|f| face_piece(cub, f, cls.rho)).collect();
    let chosen: Vec<Option<(Vec<f64>, f64, f64)>> = pieces
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let face = p.face.as_ref().expect("skeleton pieces carry faces");
            if reuse.contains_key(face) {
                None
            } else {
                Some(choose_translation(u, p, w, samples, seed, i as u64))
            }
        })
        .collect();
    let mut stats = OpeningStats {
        pieces: pieces.len(),
        ..Default::default()
    };
    for (p, c) in pieces.iter_mut().zip(chosen) {
        let face = p.face.clone().expect("skeleton pieces carry faces");
        match c {
            None => {
                p.z = reuse[&face].clone();
                stats.reused_translations += 1;
            }
            Some((z, cost, base)) => {
                if cost.is_finite() {
                    if base > 0.0 {
                        stats.max_translation_ratio = stats.max_translation_ratio.max(cost / base);
                    }
                } else {
                    stats.blocked_faces += 1;
                }
                p.z = z.clone();
                reuse.insert(face, z);
            }
        }
    }
    let (out, map) = finish(u, pieces, 2.0 * cub.eta())?;
    if !map.is_identity() {
        stats.max_sobolev_ratio = sobolev_ratios(u, &out, &map.pieces, 2.0 * cls.rho * cub.eta(), cls.kp())?;
    }
    Ok((out, map, stats))
}
