use proptest::prelude::*;
use sobolev_topo::cli::builtin_field;
use sobolev_topo::fields::SampledSphereMap;
use sobolev_topo::geometry::TriangulatedSphere;
use sobolev_topo::invariants::{pullback_degree, pullback_integral, winding_degree, winding_number_raw};
use std::f64::consts::PI;
use std::sync::Arc;

fn power_loop(d: i64, n: usize, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = d as f64 * 2.0 * PI * i as f64 / n as f64 + phase;
            [t.cos(), t.sin()]
        })
        .collect()
}

#[test]
fn power_maps_have_their_exponent_as_degree() {
    for d in -3..=3 {
        let s = power_loop(d, 2048, 0.0);
        let raw = winding_number_raw(&s).unwrap();
        assert_eq!(winding_degree(&s).unwrap(), d);
        assert!((raw - d as f64).abs() < 1e-6, "d = {d}: {raw}");
    }
}

#[test]
fn grid_sampled_power_map_restricted_to_a_circle() {
    for d in [-2, 1, 3] {
        let u = builtin_field("power_d", &[128, 128], d).unwrap();
        let s: Vec<[f64; 2]> = (0..1024)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 1024.0;
                let v = u.interpolate(&[0.5 * t.cos(), 0.5 * t.sin()]).unwrap();
                [v[0], v[1]]
            })
            .collect();
        assert_eq!(winding_degree(&s).unwrap(), d);
    }
}

#[test]
fn too_few_samples_are_refused() {
    assert!(winding_degree(&power_loop(1, 32, 0.0)).is_err());
    // consecutive samples half a turn apart make the loop ambiguous
    assert!(winding_number_raw(&power_loop(1, 2, 0.0)).is_err());
}

fn linear_map(sphere: &Arc<TriangulatedSphere>, diag: [f64; 3]) -> SampledSphereMap {
    SampledSphereMap::from_fn(sphere.clone(), 3, |x| {
        vec![diag[0] * x[0], diag[1] * x[1], diag[2] * x[2]]
    })
}

#[test]
fn orthogonal_maps_of_the_two_sphere() {
    let s = Arc::new(TriangulatedSphere::new(2, 4).unwrap());
    // the degree of an orthogonal map is the sign of its determinant
    for diag in [[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0], [-1.0, 1.0, 1.0], [-1.0, -1.0, 1.0]] {
        let det: f64 = diag.iter().product();
        let f = linear_map(&s, diag);
        assert_eq!(pullback_degree(&f).unwrap(), det as i64, "{diag:?}");
        assert!((pullback_integral(&f).unwrap() - det).abs() < 1e-2);
    }
}

#[test]
fn squared_circle_map() {
    let s = Arc::new(TriangulatedSphere::new(1, 8).unwrap());
    let f = SampledSphereMap::from_fn(s, 2, |x| {
        let t = 3.0 * x[1].atan2(x[0]);
        vec![t.cos(), t.sin()]
    });
    assert_eq!(pullback_degree(&f).unwrap(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // degree is invariant under rotation of the target and monotone
    // reparametrisation of the loop
    #[test]
    fn degree_is_reparametrisation_invariant(
        d in -5i64..=5,
        phase in 0.0..(2.0 * PI),
        jitter in proptest::collection::vec(0.0..0.9f64, 512),
    ) {
        let n = jitter.len();
        let s: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + jitter[i]) / n as f64;
                let a = d as f64 * t + phase;
                [a.cos(), a.sin()]
            })
            .collect();
        prop_assert_eq!(winding_degree(&s).unwrap(), d);
    }

    // traversing the loop backwards flips the degree
    #[test]
    fn reversal_negates_degree(d in -4i64..=4, r in 0.1..10.0f64) {
        let mut s: Vec<[f64; 2]> = power_loop(d, 400, 0.3).into_iter().map(|v| [r * v[0], r * v[1]]).collect();
        s.reverse();
        prop_assert_eq!(winding_degree(&s).unwrap(), -d);
    }
}
