use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use sobolev_topo::cli::{builtin_field, builtin_sphere_map, DIPOLE_NEGATIVE, DIPOLE_POSITIVE};
use sobolev_topo::detectors::maximal_function_detector;
use sobolev_topo::fields::{Grid, GridField, Target};
use sobolev_topo::geometry::{
    standard_disk_boundaries, AxisBox, DiskBoundary, StructuredSingularSet, TriangulatedSphere,
};
use sobolev_topo::invariants::{
    cell_degree_sweep, extendability_oracle, hopf_linking_auto, hopf_whitehead, hurewicz_degree, jacobian_pairing,
    test_form_battery, winding_degree, DecSphere3, ExtendabilityVerdict,
};
use std::sync::Arc;

/// Independent closed form of the battery bump `e exp(-1 / (1 - q))`.
fn bump_at(center: &[f64], radius: f64, x: &[f64]) -> f64 {
    let q: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
    if q >= 1.0 {
        0.0
    } else {
        std::f64::consts::E * (-1.0 / (1.0 - q)).exp()
    }
}

fn dirac_error(n: usize) -> f64 {
    let u = builtin_field("radial", &[n, n], 0).unwrap();
    test_form_battery(u.grid().bx())
        .iter()
        .map(|f| (jacobian_pairing(&u, f).unwrap() - bump_at(&f.center, f.radius, &[0.0, 0.0])).abs())
        .fold(0.0, f64::max)
}

#[test]
fn radial_field_pairs_to_the_value_at_the_origin() {
    let e128 = dirac_error(128);
    assert!(e128 <= 0.02, "{e128}");
    let e256 = dirac_error(256);
    assert!(e256 <= 0.75 * e128, "{e128} -> {e256}");
}

#[test]
fn smooth_map_has_vanishing_jacobian() {
    for n in [128, 256] {
        let u = builtin_field("smooth_bump", &[n, n], 0).unwrap();
        for f in test_form_battery(u.grid().bx()) {
            let j = jacobian_pairing(&u, &f).unwrap();
            assert!(j.abs() <= 1e-2 * f.gradient_sup_norm(), "{n}: {j}");
        }
    }
}

#[test]
fn sweep_finds_dipole_atoms() {
    let u = builtin_field("dipole", &[128, 128], 0).unwrap();
    let r = cell_degree_sweep(&u).unwrap();
    assert_eq!(r.atoms.len(), 2);
    let h = u.grid().h_max();
    for (pos, deg) in [(DIPOLE_POSITIVE, 1), (DIPOLE_NEGATIVE, -1)] {
        let a = r.atoms.iter().find(|a| a.degree == deg).unwrap();
        assert!((a.location[0] - pos[0]).abs() <= h && (a.location[1] - pos[1]).abs() <= h);
    }
    // atom model against the pairing: alpha(a) - alpha(b) per battery form
    for ((f, pairing), _) in r.pairings.iter().zip(&r.predicted) {
        let oracle = bump_at(&f.center, f.radius, &DIPOLE_POSITIVE) - bump_at(&f.center, f.radius, &DIPOLE_NEGATIVE);
        assert_abs_diff_eq!(*pairing, oracle, epsilon = 0.03);
    }
}

#[test]
fn radial_field_in_three_dimensions_has_one_atom() {
    let u = builtin_field("radial", &[48, 48, 48], 0).unwrap();
    let r = cell_degree_sweep(&u).unwrap();
    assert_eq!(r.atoms.len(), 1);
    assert_eq!(r.atoms[0].degree, 1);
    assert!(r.atoms[0].location.iter().all(|c| c.abs() < 0.05));
}

fn verdict(u: &GridField, disks: usize) -> ExtendabilityVerdict {
    let h = u.grid().h_max();
    let d = standard_disk_boundaries(u.grid().bx(), 1, disks, 7, 2.0 * h).unwrap();
    let w = maximal_function_detector(u, 1.5).unwrap();
    extendability_oracle(u, &d, &w).unwrap()
}

#[test]
fn extendability_verdicts_on_the_corpus() {
    let radial = verdict(&builtin_field("radial", &[128, 128], 0).unwrap(), 48);
    assert!(!radial.extendable);
    assert!(radial.admissible >= 32);
    assert_eq!(radial.atoms.len(), 1);
    assert_eq!(radial.atoms[0].degree, 1);

    let zero = verdict(&builtin_field("homogeneous0", &[128, 128], 0).unwrap(), 48);
    assert!(zero.extendable, "{zero:?}");
    assert!(zero.admissible >= 32);
    assert!(zero.atoms.is_empty());

    let dipole = verdict(&builtin_field("dipole", &[128, 128], 0).unwrap(), 48);
    assert!(!dipole.extendable);
    assert!(dipole.admissible >= 32);
    let mut degrees: Vec<i64> = dipole.atoms.iter().map(|a| a.degree).collect();
    degrees.sort();
    assert_eq!(degrees, vec![-1, 1]);
}

#[test]
fn constant_map_is_extendable() {
    let v = verdict(&builtin_field("constant", &[64, 64], 0).unwrap(), 32);
    assert!(v.extendable && v.nonzero_disks.is_empty());
}

#[test]
fn hopf_invariant_of_the_fibration() {
    let dec = DecSphere3::new(4).unwrap();
    let v = builtin_sphere_map("hopf", dec.sphere.clone()).unwrap();
    assert_eq!(hopf_linking_auto(&v, 0).unwrap(), 1);
    let w = hopf_whitehead(&dec, &v).unwrap();
    assert!((w - 1.0).abs() <= 0.15, "{w}");
}

#[test]
fn constant_map_has_zero_hopf_invariant() {
    let dec = DecSphere3::new(3).unwrap();
    let v = builtin_sphere_map("constant", dec.sphere.clone()).unwrap();
    assert!(hopf_whitehead(&dec, &v).unwrap().abs() < 1e-9);
}

/// Two same-sign vortices `(z - a)(z - b) / |.|` built test-side.
fn vortex_pair() -> GridField {
    let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[128, 128]).unwrap();
    let (a, b) = ([-0.35, 0.1], [0.3, -0.2]);
    let set = StructuredSingularSet::points(2, &[a.to_vec(), b.to_vec()]);
    GridField::sample(g, 2, Target::Sphere(1), Some(set), |x| {
        let (p, q) = ((x[0] - a[0], x[1] - a[1]), (x[0] - b[0], x[1] - b[1]));
        let re = p.0 * q.0 - p.1 * q.1;
        let im = p.0 * q.1 + p.1 * q.0;
        let r = re.hypot(im);
        (r > 0.0).then(|| vec![re / r, im / r])
    })
    .unwrap()
}

#[test]
fn atom_degrees_add_up_to_the_enclosing_degree() {
    let s = Arc::new(TriangulatedSphere::new(1, 9).unwrap());
    let corpus = [
        ("radial", builtin_field("radial", &[128, 128], 0).unwrap()),
        ("dipole", builtin_field("dipole", &[128, 128], 0).unwrap()),
        ("power_d", builtin_field("power_d", &[128, 128], -2).unwrap()),
        ("pair", vortex_pair()),
    ];
    for (name, u) in corpus {
        let atoms = cell_degree_sweep(&u).unwrap().atoms;
        assert!(!atoms.is_empty(), "{name}");
        for (center, radius) in [
            ([0.0, 0.0], 0.7),
            ([-0.3, 0.0], 0.2),
            ([0.3, -0.1], 0.25),
            ([0.5, 0.5], 0.3),
        ] {
            let gamma = DiskBoundary::new(0, center.to_vec(), radius, vec![0, 1], s.clone());
            let inside: i64 = atoms
                .iter()
                .filter(|a| (a.location[0] - center[0]).hypot(a.location[1] - center[1]) < radius)
                .map(|a| a.degree)
                .sum();
            assert_eq!(hurewicz_degree(&u, &gamma).unwrap(), inside, "{name} around {center:?}");
        }
    }
}

#[test]
fn pairings_match_the_atom_model() {
    for name in ["radial", "dipole", "power_d"] {
        let u = builtin_field(name, &[128, 128], 2).unwrap();
        let r = cell_degree_sweep(&u).unwrap();
        for ((f, pairing), predicted) in r.pairings.iter().zip(&r.predicted) {
            // independent prediction from the atoms and the closed-form bump
            let model: f64 = r
                .atoms
                .iter()
                .map(|a| a.degree as f64 * bump_at(&f.center, f.radius, &a.location))
                .sum();
            assert!((model - predicted).abs() <= 1e-12);
            let c1 = f.sup_norm() + f.gradient_sup_norm();
            assert!((pairing - model).abs() <= 0.05 * c1, "{name}: {pairing} vs {model}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // pointwise perturbations below 0.3 keep the loop in the tubular
    // neighbourhood, so the degree cannot change
    #[test]
    fn degree_survives_small_perturbations(
        d in -3i64..=3,
        noise in proptest::collection::vec((0.0..0.3f64, 0.0..std::f64::consts::TAU), 1024),
    ) {
        let s: Vec<[f64; 2]> = noise
            .iter()
            .enumerate()
            .map(|(i, (r, phi))| {
                let t = d as f64 * std::f64::consts::TAU * i as f64 / noise.len() as f64;
                let v = [t.cos() + r * phi.cos(), t.sin() + r * phi.sin()];
                let n = v[0].hypot(v[1]);
                [v[0] / n, v[1] / n]
            })
            .collect();
        prop_assert_eq!(winding_degree(&s).unwrap(), d);
    }
}
