use sobolev_topo::geometry::{AxisBox, Cubication};
use std::collections::BTreeSet;

/// World box `[lo, hi]` per axis of a face given in lattice units.
fn world_box(c: &Cubication, center: &[i64], free: &[usize]) -> Vec<(f64, f64)> {
    let lo = c.bx().lo();
    (0..center.len())
        .map(|a| {
            let x = lo[a] + center[a] as f64 * c.eta();
            if free.contains(&a) {
                (x - c.eta(), x + c.eta())
            } else {
                (x, x)
            }
        })
        .collect()
}

fn box_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (q.0 - p.1).max(p.0 - q.1).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn subsets(m: usize, j: usize) -> Vec<Vec<usize>> {
    (0..1usize << m)
        .filter(|b| b.count_ones() as usize == j)
        .map(|b| (0..m).filter(|a| b >> a & 1 == 1).collect())
        .collect()
}

/// Every `j`-face of every cube, keyed by world center in units of `eta`
/// and free axes, built cube by cube.
fn brute_force_faces(bx: &AxisBox, eta: f64, j: usize) -> BTreeSet<(Vec<i64>, Vec<usize>)> {
    let m = bx.dim();
    let n: Vec<usize> = (0..m).map(|a| (bx.side(a) / (2.0 * eta)).round() as usize).collect();
    let mut out = BTreeSet::new();
    let total: usize = n.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        let idx: Vec<usize> = (0..m)
            .map(|a| {
                let i = rem % n[a];
                rem /= n[a];
                i
            })
            .collect();
        for free in subsets(m, j) {
            let fixed: Vec<usize> = (0..m).filter(|a| !free.contains(a)).collect();
            for signs in 0..1usize << fixed.len() {
                let mut center: Vec<i64> = idx.iter().map(|&i| 2 * i as i64 + 1).collect();
                for (k, &a) in fixed.iter().enumerate() {
                    center[a] += if signs >> k & 1 == 1 { 1 } else { -1 };
                }
                out.insert((center, free.clone()));
            }
        }
    }
    out
}

fn boxes() -> Vec<(AxisBox, f64)> {
    vec![
        (AxisBox::centered_cube(2, 1.0).unwrap(), 0.25),
        (AxisBox::new(vec![-0.5, 0.0], vec![1.5, 1.0]).unwrap(), 0.125),
        (AxisBox::centered_cube(3, 1.0).unwrap(), 0.25),
        (AxisBox::new(vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 1.5]).unwrap(), 0.25),
    ]
}

#[test]
fn cubes_tile_the_box() {
    for (bx, eta) in boxes() {
        let c = Cubication::new(&bx, eta).unwrap();
        let vol = c.cubes().len() as f64 * (2.0 * eta).powi(bx.dim() as i32);
        assert!((vol - bx.volume()).abs() <= 1e-12 * bx.volume());
        // no cube is listed twice
        let centers: BTreeSet<Vec<i64>> = c.cubes().iter().cloned().collect();
        assert_eq!(centers.len(), c.cubes().len());
    }
}

#[test]
fn every_face_of_every_cube_appears_once() {
    for (bx, eta) in boxes() {
        let c = Cubication::new(&bx, eta).unwrap();
        for j in 0..=bx.dim() {
            let lib: Vec<(Vec<i64>, Vec<usize>)> = c
                .skeleton(j)
                .iter()
                .map(|f| (f.center.clone(), f.free.clone()))
                .collect();
            let unique: BTreeSet<_> = lib.iter().cloned().collect();
            assert_eq!(unique.len(), lib.len(), "duplicates in S^{j}");
            assert_eq!(unique, brute_force_faces(&bx, eta, j), "S^{j} of {bx:?}");
        }
    }
}

#[test]
fn dual_skeleton_keeps_away_from_the_skeleton() {
    let rho: f64 = 0.25;
    for (bx, eta) in boxes() {
        let c = Cubication::new(&bx, eta).unwrap();
        let m = bx.dim();
        for ell in 0..m {
            let dual = c.dual(ell);
            assert!(!dual.is_empty());
            let skel: Vec<_> = c
                .skeleton(ell)
                .iter()
                .map(|f| world_box(&c, &f.center, &f.free))
                .collect();
            let mut min = f64::INFINITY;
            for t in dual {
                assert_eq!(t.dim(), m - ell - 1);
                let tb = world_box(&c, &t.center, &t.free);
                // the ends of a dual face are cube centers
                for (a, (lo, hi)) in tb.iter().enumerate() {
                    for x in [lo, hi] {
                        let k = (x - bx.lo()[a]) / eta;
                        assert!((k - k.round()).abs() < 1e-9 && k.round() as i64 % 2 == 1, "{x}");
                    }
                }
                for s in &skel {
                    min = min.min(box_distance(&tb, s));
                }
            }
            assert!(min >= (1.0 - 2.0 * rho) * eta / 2.0, "ell {ell}: {min}");
        }
    }
}
