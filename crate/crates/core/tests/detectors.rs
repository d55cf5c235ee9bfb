use sobolev_topo::cli::builtin_field;
use sobolev_topo::detectors::{
    default_budget, fuglede_check, maximal_function_detector, power_distance_detector, translation_average,
    DetectorField,
};
use sobolev_topo::fields::Grid;
use sobolev_topo::geometry::{
    standard_disk_boundaries, AxisBox, DiskBoundary, StructuredSingularSet, TriangulatedSphere,
};
use std::sync::Arc;

fn circle(center: [f64; 2], radius: f64) -> DiskBoundary {
    let s = Arc::new(TriangulatedSphere::new(1, 7).unwrap());
    DiskBoundary::new(0, center.to_vec(), radius, vec![0, 1], s)
}

#[test]
fn restricted_integrals_add_up() {
    let u = builtin_field("smooth_bump", &[96, 96], 0).unwrap();
    let g = u.grid().clone();
    let w1 = maximal_function_detector(&u, 1.5).unwrap();
    let w2 = power_distance_detector(&StructuredSingularSet::points(2, &[vec![0.6, -0.5]]), 1.0, &g).unwrap();
    let w3 = maximal_function_detector(&builtin_field("constant", &[96, 96], 0).unwrap(), 2.0).unwrap();
    let gammas = [
        circle([0.0, 0.0], 0.3),
        circle([-0.2, 0.3], 0.5),
        circle([0.1, 0.1], 0.75),
    ];
    let parts = [&w1, &w2, &w3];
    let sum = DetectorField::sum(vec![w1.clone(), w2.clone(), w3.clone()]).unwrap();
    for gamma in &gammas {
        let separate: f64 = parts
            .iter()
            .map(|w| fuglede_check(w, gamma, f64::INFINITY).integral)
            .sum();
        let joint = fuglede_check(&sum, gamma, f64::INFINITY).integral;
        assert!(
            (joint - separate).abs() <= 1e-9 * separate.max(1.0),
            "{joint} vs {separate}"
        );
    }
    let total: f64 = parts.iter().map(|w| w.integral()).sum();
    assert!((sum.integral() - total).abs() <= 1e-9 * total);
}

#[test]
fn admissible_circles_avoid_the_singular_set() {
    let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[129, 129]).unwrap();
    let points = vec![vec![0.0, 0.0], vec![0.3, -0.4], vec![-0.45, 0.25]];
    let set = StructuredSingularSet::points(2, &points);
    let w = power_distance_detector(&set, 1.0, &g).unwrap();
    let disks = standard_disk_boundaries(g.bx(), 1, 200, 3, 2.0 * g.h_max()).unwrap();
    let budget = default_budget(&w, 1);
    let mut admissible = 0;
    for gamma in &disks {
        if !fuglede_check(&w, gamma, budget).admissible {
            continue;
        }
        admissible += 1;
        let d = gamma
            .points()
            .iter()
            .flat_map(|x| points.iter().map(move |p| (x[0] - p[0]).hypot(x[1] - p[1])))
            .fold(f64::INFINITY, f64::min);
        assert!(d > 0.0, "disk {} touches the set", gamma.id);
    }
    assert!(admissible >= 100, "{admissible}");
}

#[test]
fn circle_through_a_point_has_infinite_power_detector_integral() {
    let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[129, 129]).unwrap();
    let set = StructuredSingularSet::points(2, &[vec![0.25, 0.0]]);
    let w = power_distance_detector(&set, 1.0, &g).unwrap();
    // the parametrizing sphere has a vertex at angle zero
    let v = fuglede_check(&w, &circle([0.0, 0.0], 0.25), f64::INFINITY);
    assert!(!v.admissible && v.integral.is_infinite());
}

#[test]
fn same_seed_gives_the_same_statistics() {
    let u = builtin_field("dipole", &[96, 96], 0).unwrap();
    let w = maximal_function_detector(&u, 1.5).unwrap();
    let gamma = circle([0.1, 0.2], 0.3);
    let a = translation_average(&w, &gamma, 0.15, 256, 42).unwrap();
    let b = translation_average(&w, &gamma, 0.15, 256, 42).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = translation_average(&w, &gamma, 0.15, 256, 43).unwrap();
    assert_ne!(a.argmin, c.argmin);

    let d1 = standard_disk_boundaries(u.grid().bx(), 1, 16, 9, 0.05).unwrap();
    let d2 = standard_disk_boundaries(u.grid().bx(), 1, 16, 9, 0.05).unwrap();
    for (x, y) in d1.iter().zip(&d2) {
        assert_eq!((&x.center, x.radius), (&y.center, y.radius));
    }
}
